//! Experimental ingestion: per-frame instance-mask rasters and thermocouple
//! readings become input stacks on the simulation's pixel scale.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::dataset::{build_stacks, resize_nearest, StackSet};
use crate::error::{Error, Result};
use crate::grid::ScalarGrid2D;
use crate::phase::{LIQUID, SOLID, VAPOR};
use crate::units::{jakob_normalize, FluidProperties, LatticeConstants};

/// Output resolution of ingested frames.
pub const TARGET_SIZE: usize = 256;
pub const SOLID_ROWS: usize = 5;
/// Instances whose box reaches this many pixels above the heater line are kept.
pub const ATTACH_BAND: usize = 3;

/// Heater as seen in the raw images (row 0 at the top).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HeaterGeometry {
    /// Image row of the bubble/surface contact line.
    pub line_row: usize,
    /// First heater column and one past the last.
    pub x_start: usize,
    pub x_end: usize,
    /// Physical heater length, m.
    pub length: f64,
}

impl HeaterGeometry {
    pub fn pixels(&self) -> usize {
        self.x_end.saturating_sub(self.x_start)
    }

    /// Image pixel edge, m.
    pub fn pixel_size(&self) -> f64 {
        self.length / self.pixels() as f64
    }

    pub fn midline(&self) -> usize {
        (self.x_start + self.x_end) / 2
    }

    fn validate(&self, width: usize, height: usize) -> Result<()> {
        if self.pixels() == 0 || !(self.length > 0.0) {
            return Err(Error::config("heater needs a positive pixel span and length"));
        }
        if self.x_end > width || self.line_row >= height {
            return Err(Error::shape(format!(
                "heater (rows..{}, cols {}..{}) outside a {width}x{height} image",
                self.line_row, self.x_start, self.x_end
            )));
        }
        Ok(())
    }
}

/// Image size `X` whose pixels, resized to `TARGET_SIZE`, match one lattice unit.
pub fn required_dimension(constants: &LatticeConstants, heater: &HeaterGeometry) -> f64 {
    TARGET_SIZE as f64 * constants.l_0.ratio() / heater.pixel_size()
}

/// Smallest power-of-two canvas (at least 1024) holding an `x`-pixel window.
pub fn padded_canvas(x: f64, image: (usize, usize)) -> usize {
    let need = (x.ceil() as usize).max(image.0).max(image.1);
    need.next_power_of_two().max(1024)
}

/// Integer-labelled instance mask, row 0 at the top as stored in the raster.
#[derive(Debug, Clone, PartialEq)]
pub struct InstanceMask {
    pub width: usize,
    pub height: usize,
    pub labels: Vec<u16>,
}

impl InstanceMask {
    pub fn new(width: usize, height: usize, labels: Vec<u16>) -> Result<Self> {
        if labels.len() != width * height {
            return Err(Error::shape("label count does not match the mask size"));
        }
        Ok(Self {
            width,
            height,
            labels,
        })
    }

    /// Reads an 8- or 16-bit grayscale raster.
    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let img = image::open(path).map_err(|e| Error::Format(format!("{}: {e}", path.display())))?;
        let (w, h) = (img.width(), img.height());
        let labels = match img {
            image::DynamicImage::ImageLuma8(g) => g.into_raw().into_iter().map(u16::from).collect(),
            image::DynamicImage::ImageLuma16(g) => g.into_raw(),
            other => {
                return Err(Error::Format(format!(
                    "{}: expected a grayscale mask, found {:?}",
                    path.display(),
                    other.color()
                )))
            }
        };
        Self::new(w as usize, h as usize, labels)
    }

    /// Labels whose bounding box reaches the band of `ATTACH_BAND` rows above
    /// the heater line.
    pub fn attached_labels(&self, heater: &HeaterGeometry) -> Vec<u16> {
        let mut boxes: std::collections::BTreeMap<u16, (usize, usize)> = Default::default();
        for (i, &l) in self.labels.iter().enumerate() {
            if l == 0 {
                continue;
            }
            let y = i / self.width;
            let e = boxes.entry(l).or_insert((y, y));
            e.0 = e.0.min(y);
            e.1 = e.1.max(y);
        }
        let band_top = heater.line_row.saturating_sub(ATTACH_BAND);
        boxes
            .into_iter()
            .filter(|(_, (top, bottom))| *bottom >= band_top && *top <= heater.line_row)
            .map(|(l, _)| l)
            .collect()
    }

    /// Phase field (vapor inside kept instances, liquid elsewhere) in grid
    /// orientation, row 0 at the bottom.
    pub fn phase(&self, keep: &[u16]) -> ScalarGrid2D {
        ScalarGrid2D::from_fn(self.width, self.height, |x, y| {
            let l = self.labels[(self.height - 1 - y) * self.width + x];
            if l != 0 && keep.contains(&l) {
                VAPOR
            } else {
                LIQUID
            }
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IngestGeometry {
    pub required_dimension: f64,
    pub window: usize,
    pub canvas: usize,
    pub padded: bool,
    /// Heater span after resizing, pixels.
    pub heater_pixels: usize,
    pub heater_start: usize,
}

/// Maps one image-oriented phase field onto the `TARGET_SIZE` grid: pads to
/// the canvas with liquid, cuts an `X`-wide window above the heater line
/// centred on the heater, resizes it to `TARGET_SIZE x (TARGET_SIZE -
/// SOLID_ROWS)` and adds the solid block underneath.
pub fn place_frame(phase: &ScalarGrid2D, heater: &HeaterGeometry, geo: &IngestGeometry) -> Result<ScalarGrid2D> {
    let (w, h) = phase.dims();
    let window = geo.window;
    let fluid_rows = TARGET_SIZE - SOLID_ROWS;
    let window_h = (window * fluid_rows).div_ceil(TARGET_SIZE);
    // heater line in grid rows (row 0 at the bottom)
    let line_y = h - 1 - heater.line_row;
    let x0 = heater.midline() as i64 - (window / 2) as i64;
    let cut = ScalarGrid2D::from_fn(window, window_h, |x, y| {
        let sx = x0 + x as i64;
        let sy = line_y as i64 + 1 + y as i64;
        if sx < 0 || sy < 0 || sx >= w as i64 || sy >= h as i64 {
            LIQUID
        } else {
            phase.get(sx as usize, sy as usize)
        }
    });
    let fluid = resize_nearest(&cut, TARGET_SIZE, fluid_rows);
    Ok(ScalarGrid2D::from_fn(TARGET_SIZE, TARGET_SIZE, |x, y| {
        if y < SOLID_ROWS {
            SOLID
        } else {
            fluid.get(x, y - SOLID_ROWS)
        }
    }))
}

pub fn ingest_geometry(
    constants: &LatticeConstants,
    heater: &HeaterGeometry,
    image: (usize, usize),
) -> Result<IngestGeometry> {
    heater.validate(image.0, image.1)?;
    let x = required_dimension(constants, heater);
    let window = x.round() as usize;
    let canvas = padded_canvas(x, image);
    let scale = TARGET_SIZE as f64 / window as f64;
    let heater_pixels = (heater.pixels() as f64 * scale).round() as usize;
    let heater_start = (TARGET_SIZE - heater_pixels.min(TARGET_SIZE)) / 2;
    Ok(IngestGeometry {
        required_dimension: x,
        window,
        canvas,
        padded: canvas > image.0.max(image.1),
        heater_pixels,
        heater_start,
    })
}

/// Initial temperature: the solid block under the heater at `t_heater` K,
/// everything else at saturation, normalized with `props`.
pub fn initial_temperature(geo: &IngestGeometry, t_heater: f64, props: &FluidProperties) -> ScalarGrid2D {
    let hx = geo.heater_start..geo.heater_start + geo.heater_pixels;
    let kelvin = ScalarGrid2D::from_fn(TARGET_SIZE, TARGET_SIZE, |x, y| {
        if y < SOLID_ROWS && hx.contains(&x) {
            t_heater
        } else {
            props.t_sat_physical
        }
    });
    jakob_normalize(&kelvin, props)
}

/// Thermocouple CSV with columns `frame,T_K`.
pub fn read_thermocouple_csv(path: impl AsRef<Path>) -> Result<Vec<(usize, f64)>> {
    #[derive(Deserialize)]
    struct Row {
        frame: usize,
        #[serde(rename = "T_K")]
        t_k: f64,
    }
    let mut r = csv::Reader::from_path(path).map_err(crate::diagnostics::csv_err)?;
    let rows: Vec<(usize, f64)> = r
        .deserialize::<Row>()
        .map(|row| row.map(|r| (r.frame, r.t_k)).map_err(crate::diagnostics::csv_err))
        .collect::<Result<_>>()?;
    if rows.is_empty() {
        return Err(Error::Format("thermocouple file has no readings".into()));
    }
    Ok(rows)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IngestSettings {
    pub p: usize,
    pub heater: HeaterGeometry,
}

/// Builds experimental stacks from masks in frame order. The heater
/// temperature is the mean thermocouple reading; the first frame is T0.
pub fn ingest_experimental(
    masks: &[InstanceMask],
    readings: &[(usize, f64)],
    settings: &IngestSettings,
    constants: &LatticeConstants,
    props: &FluidProperties,
) -> Result<(StackSet, IngestGeometry)> {
    let first = masks
        .first()
        .ok_or_else(|| Error::shape("no mask frames to ingest"))?;
    if readings.is_empty() {
        return Err(Error::config("no thermocouple readings"));
    }
    let geo = ingest_geometry(constants, &settings.heater, (first.width, first.height))?;
    let mut contours = Vec::with_capacity(masks.len());
    for m in masks {
        if (m.width, m.height) != (first.width, first.height) {
            return Err(Error::shape("mask frames differ in size"));
        }
        let keep = m.attached_labels(&settings.heater);
        contours.push(place_frame(&m.phase(&keep), &settings.heater, &geo)?);
    }
    let t_heater = readings.iter().map(|r| r.1).sum::<f64>() / readings.len() as f64;
    let t0 = initial_temperature(&geo, t_heater, props);
    let stacks = build_stacks(&contours, None, &t0, 0, settings.p)?;
    let metadata = json!({
        "kind": "experimental_stacks",
        "settings": settings,
        "geometry": geo,
        "t_heater_k": t_heater,
        "fluid": props,
        "frame_indices": stacks.iter().map(|s| s.frame_index).collect::<Vec<_>>(),
    });
    Ok((StackSet { stacks, metadata }, geo))
}

/// Mask rasters (`.pgm`, `.png`) in a directory, sorted by file name.
pub fn mask_files(dir: impl AsRef<Path>) -> Result<Vec<PathBuf>> {
    let mut files: Vec<PathBuf> = std::fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            p.extension()
                .and_then(|e| e.to_str())
                .is_some_and(|e| matches!(e.to_ascii_lowercase().as_str(), "pgm" | "png"))
        })
        .collect();
    files.sort();
    if files.is_empty() {
        return Err(Error::shape("mask directory holds no rasters"));
    }
    Ok(files)
}
