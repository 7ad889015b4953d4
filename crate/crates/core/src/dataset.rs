//! Input stacks for the temperature-inference model and their container
//! encodings.

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::container::{Container, Layout};
use crate::error::{Error, Result};
use crate::grid::ScalarGrid2D;
use crate::phase::{quantize, PhaseContourMap};
use crate::sim::{Frame, FrameSeries, SimMetadata};
use crate::units::{jakob_normalize, FluidProperties, QuantityKind, UnitSystem};

pub const T0_TOLERANCE: f64 = 1e-5;
pub const T0_FALLBACK: usize = 1;

/// `p + 1` contour maps (newest first), the initial temperature map and an
/// optional target, all in `Ja_N` where applicable.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InputStack {
    pub contours: Vec<ScalarGrid2D>,
    pub t0: ScalarGrid2D,
    pub target: Option<ScalarGrid2D>,
    pub frame_index: usize,
    pub p: usize,
}

impl InputStack {
    /// `p + 2` input channels plus the target if present.
    pub fn channels(&self) -> Vec<&ScalarGrid2D> {
        let mut out: Vec<&ScalarGrid2D> = self.contours.iter().collect();
        out.push(&self.t0);
        if let Some(t) = &self.target {
            out.push(t);
        }
        out
    }

    pub fn dims(&self) -> (usize, usize) {
        self.t0.dims()
    }

    /// Reflection about the vertical midline of every channel.
    pub fn mirror(&self) -> Self {
        Self {
            contours: self.contours.iter().map(ScalarGrid2D::mirrored).collect(),
            t0: self.t0.mirrored(),
            target: self.target.as_ref().map(ScalarGrid2D::mirrored),
            frame_index: self.frame_index,
            p: self.p,
        }
    }

    /// Nearest-neighbour enlargement by `factor`, optionally cut back to a
    /// `w x h` window whose bottom edge is the grid bottom and whose centre
    /// column maps from `center_x` of the original.
    pub fn upscale(&self, factor: usize, window: Option<(usize, usize, usize)>) -> Result<Self> {
        let f = |g: &ScalarGrid2D| -> Result<ScalarGrid2D> {
            let up = upscale_grid(g, factor)?;
            match window {
                None => Ok(up),
                Some((w, h, cx)) => bottom_window(&up, cx * factor + factor / 2, w, h),
            }
        };
        Ok(Self {
            contours: self.contours.iter().map(f).collect::<Result<_>>()?,
            t0: f(&self.t0)?,
            target: self.target.as_ref().map(f).transpose()?,
            frame_index: self.frame_index,
            p: self.p,
        })
    }
}

pub fn upscale_grid(g: &ScalarGrid2D, factor: usize) -> Result<ScalarGrid2D> {
    if factor == 0 {
        return Err(Error::config("upscale factor must be at least 1"));
    }
    let mut out = ScalarGrid2D::from_fn(g.width() * factor, g.height() * factor, |x, y| {
        g.get(x / factor, y / factor)
    });
    out.cell_size = g.cell_size / factor as f64;
    Ok(out)
}

/// `w x h` window sitting on the bottom row and centred on column `cx`,
/// shifted inwards where it would leave the grid.
pub fn bottom_window(g: &ScalarGrid2D, cx: usize, w: usize, h: usize) -> Result<ScalarGrid2D> {
    if w > g.width() || h > g.height() {
        return Err(Error::shape(format!(
            "{w}x{h} window does not fit a {:?} grid",
            g.dims()
        )));
    }
    let x0 = cx.saturating_sub(w / 2).min(g.width() - w);
    g.window(x0, 0, w, h)
}

/// Nearest-neighbour resampling to `w x h`.
pub fn resize_nearest(g: &ScalarGrid2D, w: usize, h: usize) -> ScalarGrid2D {
    let (sw, sh) = g.dims();
    ScalarGrid2D::from_fn(w, h, |x, y| {
        let sx = ((x as f64 + 0.5) * sw as f64 / w as f64).floor() as usize;
        let sy = ((y as f64 + 0.5) * sh as f64 / h as f64).floor() as usize;
        g.get(sx.min(sw - 1), sy.min(sh - 1))
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct T0Selection {
    pub index: usize,
    /// False when the tolerance was never met and the fallback was used.
    pub stabilized: bool,
}

/// First frame `k >= 1` whose solid-cell temperatures moved less than `tol`
/// since frame `k - 1`; `fallback` if none does.
pub fn select_t0(
    temps: &[&ScalarGrid2D],
    solid_mask: &[bool],
    tol: f64,
    fallback: usize,
) -> Result<T0Selection> {
    if temps.len() < 2 {
        return Err(Error::shape("T0 selection needs at least two frames"));
    }
    for g in temps {
        if g.len() != solid_mask.len() {
            return Err(Error::shape("solid mask does not match the frames"));
        }
    }
    for k in 1..temps.len() {
        let change = temps[k]
            .as_slice()
            .iter()
            .zip(temps[k - 1].as_slice())
            .zip(solid_mask)
            .filter(|(_, &s)| s)
            .map(|((a, b), _)| (a - b).abs())
            .fold(0.0, f64::max);
        if change < tol {
            return Ok(T0Selection {
                index: k,
                stabilized: true,
            });
        }
    }
    let index = fallback.min(temps.len() - 1);
    log::warn!("solid temperature never settled below {tol}; using frame {index} as T0");
    Ok(T0Selection {
        index,
        stabilized: false,
    })
}

/// The stack whose newest contour is frame `n`.
pub fn stack_at(
    contours: &[ScalarGrid2D],
    targets: Option<&[ScalarGrid2D]>,
    t0: &ScalarGrid2D,
    n: usize,
    p: usize,
) -> Result<InputStack> {
    if n < p {
        return Err(Error::shape(format!("frame {n} has fewer than p = {p} predecessors")));
    }
    if n >= contours.len() {
        return Err(Error::shape(format!("frame {n} out of {}", contours.len())));
    }
    let target = match targets {
        Some(t) => Some(
            t.get(n)
                .ok_or_else(|| Error::shape(format!("no target for frame {n}")))?
                .clone(),
        ),
        None => None,
    };
    Ok(InputStack {
        contours: (0..=p).map(|j| contours[n - j].clone()).collect(),
        t0: t0.clone(),
        target,
        frame_index: n,
        p,
    })
}

/// One stack per frame `n` in `t0_index + p .. N`.
pub fn build_stacks(
    contours: &[ScalarGrid2D],
    targets: Option<&[ScalarGrid2D]>,
    t0: &ScalarGrid2D,
    t0_index: usize,
    p: usize,
) -> Result<Vec<InputStack>> {
    let n = contours.len();
    if n <= t0_index + p {
        return Err(Error::shape(format!(
            "{n} frames leave no stacks for p = {p} after T0 frame {t0_index}"
        )));
    }
    if let Some(t) = targets {
        if t.len() != n {
            return Err(Error::shape("target count differs from contour count"));
        }
    }
    (t0_index + p..n)
        .map(|k| stack_at(contours, targets, t0, k, p))
        .collect()
}

/// Settings used to turn a simulation run into stacks.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StackSettings {
    pub p: usize,
    pub threshold: f64,
    pub t0_tolerance: f64,
    pub t0_fallback: usize,
    pub mirror: bool,
}

impl Default for StackSettings {
    fn default() -> Self {
        Self {
            p: 2,
            threshold: crate::phase::DEFAULT_THRESHOLD,
            t0_tolerance: T0_TOLERANCE,
            t0_fallback: T0_FALLBACK,
            mirror: false,
        }
    }
}

/// Stacks with their provenance.
#[derive(Debug, Clone, PartialEq)]
pub struct StackSet {
    pub stacks: Vec<InputStack>,
    pub metadata: Value,
}

impl StackSet {
    /// Quantizes, normalizes and stacks a simulation run. With `mirror`, the
    /// mirrored copy of every stack follows the original.
    pub fn from_series(
        series: &FrameSeries,
        settings: &StackSettings,
        units: &UnitSystem,
        props: &FluidProperties,
    ) -> Result<Self> {
        let mask = series.solid_mask();
        let contours: Vec<ScalarGrid2D> = series
            .frames
            .iter()
            .map(|f| quantize(&f.rho, settings.threshold, &mask).map(|m| m.phi))
            .collect::<Result<_>>()?;
        let ja: Vec<ScalarGrid2D> = series
            .frames
            .iter()
            .map(|f| lattice_to_ja(&f.t, units, props))
            .collect();
        let temps: Vec<&ScalarGrid2D> = series.frames.iter().map(|f| &f.t).collect();
        let sel = select_t0(&temps, &mask, settings.t0_tolerance, settings.t0_fallback)?;
        let mut stacks = build_stacks(&contours, Some(&ja), &ja[sel.index], sel.index, settings.p)?;
        if settings.mirror {
            stacks = stacks
                .into_iter()
                .flat_map(|s| {
                    let m = s.mirror();
                    [s, m]
                })
                .collect();
        }
        let metadata = json!({
            "kind": "simulation_stacks",
            "settings": settings,
            "t0": sel,
            "fluid": props,
            "frame_indices": stacks.iter().map(|s| s.frame_index).collect::<Vec<_>>(),
            "simulation": series.metadata,
        });
        Ok(Self { stacks, metadata })
    }

    pub fn to_container(&self) -> Result<Container> {
        let first = self
            .stacks
            .first()
            .ok_or_else(|| Error::shape("no stacks to write"))?;
        let with_target = first.target.is_some();
        let layout = if with_target {
            Layout::StacksWithTarget
        } else {
            Layout::Stacks
        };
        let (w, h) = first.dims();
        let channels = first.p + 2 + usize::from(with_target);
        let mut c = Container::new(layout, w, h, first.p, channels, self.metadata.clone())?;
        for s in &self.stacks {
            if s.p != first.p || s.target.is_some() != with_target {
                return Err(Error::shape("stacks differ in p or target presence"));
            }
            c.push_sample(s.channels())?;
        }
        Ok(c)
    }

    pub fn from_container(c: &Container) -> Result<Self> {
        let with_target = match c.header.layout {
            Layout::StacksWithTarget => true,
            Layout::Stacks => false,
            other => {
                return Err(Error::Format(format!("expected a stack container, found {other:?}")))
            }
        };
        let p = c.header.p as usize;
        let indices: Vec<usize> = c
            .metadata
            .get("frame_indices")
            .and_then(|v| serde_json::from_value(v.clone()).ok())
            .unwrap_or_else(|| (0..c.samples()).collect());
        let mut stacks = Vec::with_capacity(c.samples());
        for k in 0..c.samples() {
            let contours = (0..=p).map(|j| c.channel(k, j)).collect::<Result<_>>()?;
            let t0 = c.channel(k, p + 1)?;
            let target = with_target.then(|| c.channel(k, p + 2)).transpose()?;
            stacks.push(InputStack {
                contours,
                t0,
                target,
                frame_index: indices.get(k).copied().unwrap_or(k),
                p,
            });
        }
        Ok(Self {
            stacks,
            metadata: c.metadata.clone(),
        })
    }
}

/// Lattice temperature to `Ja_N` through physical Kelvin.
pub fn lattice_to_ja(t: &ScalarGrid2D, units: &UnitSystem, props: &FluidProperties) -> ScalarGrid2D {
    let kelvin = t.map(|v| units.to_physical(v, QuantityKind::Temperature));
    jakob_normalize(&kelvin, props)
}

/// `Ja_N` back to lattice temperature.
pub fn ja_to_lattice(ja: &ScalarGrid2D, units: &UnitSystem, props: &FluidProperties) -> ScalarGrid2D {
    ja.map(|v| units.to_lattice(props.temperature_from_normalized(v), QuantityKind::Temperature))
}

impl FrameSeries {
    pub fn to_container(&self) -> Result<Container> {
        let (w, h) = self
            .dims()
            .ok_or_else(|| Error::shape("frame series is empty"))?;
        let with_vel = self.frames.iter().all(|f| f.vel.is_some());
        let (layout, channels) = if with_vel {
            (Layout::FramesWithVelocity, 4)
        } else {
            (Layout::Frames, 2)
        };
        let metadata = json!({
            "kind": "simulation_frames",
            "steps": self.frames.iter().map(|f| f.step).collect::<Vec<_>>(),
            "simulation": self.metadata,
        });
        let mut c = Container::new(layout, w, h, 0, channels, metadata)?;
        for f in &self.frames {
            match (&f.vel, with_vel) {
                (Some((vx, vy)), true) => c.push_sample([&f.rho, &f.t, vx, vy])?,
                _ => c.push_sample([&f.rho, &f.t])?,
            }
        }
        Ok(c)
    }

    pub fn from_container(c: &Container) -> Result<Self> {
        let with_vel = match c.header.layout {
            Layout::Frames => false,
            Layout::FramesWithVelocity => true,
            other => {
                return Err(Error::Format(format!("expected a frame container, found {other:?}")))
            }
        };
        let metadata: SimMetadata = serde_json::from_value(
            c.metadata
                .get("simulation")
                .cloned()
                .ok_or_else(|| Error::Format("frame container lacks simulation metadata".into()))?,
        )?;
        let steps: Vec<u64> = c
            .metadata
            .get("steps")
            .and_then(|v| serde_json::from_value(v.clone()).ok())
            .unwrap_or_default();
        let mut frames = Vec::with_capacity(c.samples());
        for k in 0..c.samples() {
            let vel = if with_vel {
                Some((c.channel(k, 2)?, c.channel(k, 3)?))
            } else {
                None
            };
            frames.push(Frame {
                rho: c.channel(k, 0)?,
                t: c.channel(k, 1)?,
                vel,
                step: steps.get(k).copied().unwrap_or(0),
            });
        }
        Ok(Self { frames, metadata })
    }

    /// Phase maps of every frame at `threshold`.
    pub fn contours(&self, threshold: f64) -> Result<Vec<PhaseContourMap>> {
        let mask = self.solid_mask();
        self.frames.iter().map(|f| quantize(&f.rho, threshold, &mask)).collect()
    }
}

/// Predicted `Ja_N` maps in container form.
pub fn predictions_container(maps: &[ScalarGrid2D], metadata: Value) -> Result<Container> {
    let first = maps.first().ok_or_else(|| Error::shape("no predictions"))?;
    let (w, h) = first.dims();
    let mut c = Container::new(Layout::Predictions, w, h, 0, 1, metadata)?;
    for m in maps {
        c.push_sample([m])?;
    }
    Ok(c)
}

pub fn read_predictions(c: &Container) -> Result<Vec<ScalarGrid2D>> {
    if c.header.layout != Layout::Predictions {
        return Err(Error::Format(format!(
            "expected a predictions container, found {:?}",
            c.header.layout
        )));
    }
    (0..c.samples()).map(|k| c.channel(k, 0)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid(v: f64) -> ScalarGrid2D {
        ScalarGrid2D::filled(4, 3, v)
    }

    #[test]
    fn stack_counting() {
        let contours: Vec<ScalarGrid2D> = (0..200).map(|k| grid(k as f64)).collect();
        let s = build_stacks(&contours, None, &grid(0.0), 1, 2).unwrap();
        assert_eq!(s.len(), 197);
        assert_eq!(s[0].frame_index, 3);
        assert_eq!(s[0].contours[0], grid(3.0));
        assert_eq!(s[0].contours[2], grid(1.0));
        let s0 = build_stacks(&contours, None, &grid(0.0), 1, 0).unwrap();
        assert_eq!(s0[0].channels().len(), 2);
        assert!(stack_at(&contours, None, &grid(0.0), 1, 2).is_err());
        assert!(build_stacks(&contours[..3], None, &grid(0.0), 1, 2).is_err());
    }

    #[test]
    fn t0_constant_series() {
        let frames = [grid(1.0), grid(1.0), grid(1.0)];
        let refs: Vec<&ScalarGrid2D> = frames.iter().collect();
        let mask = vec![true; 12];
        let sel = select_t0(&refs, &mask, T0_TOLERANCE, 1).unwrap();
        assert_eq!(sel, T0Selection { index: 1, stabilized: true });
    }

    #[test]
    fn upscale_checkerboard() {
        let g = ScalarGrid2D::from_fn(2, 2, |x, y| ((x + y) % 2) as f64);
        let up = upscale_grid(&g, 2).unwrap();
        assert_eq!(up.dims(), (4, 4));
        for y in 0..4 {
            for x in 0..4 {
                assert_eq!(up.get(x, y), g.get(x / 2, y / 2));
            }
        }
        assert_eq!(upscale_grid(&g, 1).unwrap(), g);
    }
}
