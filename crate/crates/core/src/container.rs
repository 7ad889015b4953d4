//! "BOIL" dataset container.
//!
//! Little-endian throughout:
//!
//! ```text
//! magic      4 bytes  "BOIL"
//! version    u16
//! endianness u8       0 = little
//! layout     u8       channel layout code
//! width      u32
//! height     u32
//! p          u32      prior contour count (0 when not a stack layout)
//! channels   u32
//! samples    u64
//! meta_len   u32
//! metadata   meta_len bytes of UTF-8 JSON
//! payload    samples * channels * height * width f32, row-major,
//!            channel-sequential within a sample
//! ```

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{Error, Result};
use crate::grid::ScalarGrid2D;

pub const MAGIC: &[u8; 4] = b"BOIL";
pub const VERSION: u16 = 1;
const LITTLE_ENDIAN: u8 = 0;
const HEADER_LEN: usize = 4 + 2 + 1 + 1 + 4 * 4 + 8 + 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Layout {
    /// Simulation frames: density, temperature (lattice units).
    Frames = 1,
    /// Density, temperature, x and y velocity.
    FramesWithVelocity = 2,
    /// Input stacks: p+1 contours, T0, target.
    StacksWithTarget = 3,
    /// Input stacks without ground truth: p+1 contours, T0.
    Stacks = 4,
    /// One predicted `Ja_N` map per sample.
    Predictions = 5,
    /// Free-form rasters such as error maps.
    Raster = 6,
}

impl Layout {
    pub fn code(self) -> u8 {
        self as u8
    }

    pub fn from_code(code: u8) -> Result<Self> {
        Ok(match code {
            1 => Layout::Frames,
            2 => Layout::FramesWithVelocity,
            3 => Layout::StacksWithTarget,
            4 => Layout::Stacks,
            5 => Layout::Predictions,
            6 => Layout::Raster,
            other => return Err(Error::Format(format!("unknown layout code {other}"))),
        })
    }

    /// Channel count implied by the layout, if fixed.
    pub fn channels(self, p: u32) -> Option<u32> {
        match self {
            Layout::Frames => Some(2),
            Layout::FramesWithVelocity => Some(4),
            Layout::StacksWithTarget => Some(p + 3),
            Layout::Stacks => Some(p + 2),
            Layout::Predictions => Some(1),
            Layout::Raster => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Header {
    pub version: u16,
    pub layout: Layout,
    pub width: u32,
    pub height: u32,
    pub p: u32,
    pub channels: u32,
    pub samples: u64,
}

impl Header {
    pub fn plane_len(&self) -> usize {
        self.width as usize * self.height as usize
    }

    pub fn sample_len(&self) -> usize {
        self.plane_len() * self.channels as usize
    }

    pub fn payload_bytes(&self) -> u64 {
        self.samples * self.sample_len() as u64 * 4
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Container {
    pub header: Header,
    pub metadata: Value,
    pub data: Vec<f32>,
}

impl Container {
    pub fn new(
        layout: Layout,
        width: usize,
        height: usize,
        p: usize,
        channels: usize,
        metadata: Value,
    ) -> Result<Self> {
        let (width32, height32, p32, channels32) = (
            to_u32(width)?,
            to_u32(height)?,
            to_u32(p)?,
            to_u32(channels)?,
        );
        if let Some(c) = layout.channels(p32) {
            if c != channels32 {
                return Err(Error::shape(format!(
                    "layout {layout:?} with p = {p} needs {c} channels, got {channels}"
                )));
            }
        }
        Ok(Self {
            header: Header {
                version: VERSION,
                layout,
                width: width32,
                height: height32,
                p: p32,
                channels: channels32,
                samples: 0,
            },
            metadata,
            data: Vec::new(),
        })
    }

    /// Appends one sample given as `channels` grids of the container size.
    pub fn push_sample<'a>(&mut self, channels: impl IntoIterator<Item = &'a ScalarGrid2D>) -> Result<()> {
        let start = self.data.len();
        let mut count = 0;
        for g in channels {
            if g.dims() != (self.header.width as usize, self.header.height as usize) {
                self.data.truncate(start);
                return Err(Error::shape(format!(
                    "channel is {:?}, container is {}x{}",
                    g.dims(),
                    self.header.width,
                    self.header.height
                )));
            }
            self.data.extend(g.as_slice().iter().map(|&v| v as f32));
            count += 1;
        }
        if count != self.header.channels as usize {
            self.data.truncate(start);
            return Err(Error::shape(format!(
                "sample has {count} channels, container expects {}",
                self.header.channels
            )));
        }
        self.header.samples += 1;
        Ok(())
    }

    pub fn samples(&self) -> usize {
        self.header.samples as usize
    }

    pub fn sample(&self, k: usize) -> Result<&[f32]> {
        let n = self.header.sample_len();
        self.data
            .get(k * n..(k + 1) * n)
            .ok_or_else(|| Error::shape(format!("sample {k} out of {}", self.samples())))
    }

    pub fn channel(&self, k: usize, c: usize) -> Result<ScalarGrid2D> {
        if c >= self.header.channels as usize {
            return Err(Error::shape(format!("channel {c} out of {}", self.header.channels)));
        }
        let plane = self.header.plane_len();
        let s = self.sample(k)?;
        ScalarGrid2D::from_vec(
            self.header.width as usize,
            self.header.height as usize,
            s[c * plane..(c + 1) * plane].iter().map(|&v| v as f64).collect(),
        )
    }

    pub fn write_to<W: Write>(&self, mut w: W) -> Result<()> {
        let meta = serde_json::to_vec(&self.metadata)?;
        let h = &self.header;
        if self.data.len() as u64 * 4 != h.payload_bytes() {
            return Err(Error::Format(format!(
                "payload holds {} values, header implies {}",
                self.data.len(),
                h.payload_bytes() / 4
            )));
        }
        let mut head = Vec::with_capacity(HEADER_LEN + meta.len());
        head.extend_from_slice(MAGIC);
        head.extend_from_slice(&h.version.to_le_bytes());
        head.push(LITTLE_ENDIAN);
        head.push(h.layout.code());
        for v in [h.width, h.height, h.p, h.channels] {
            head.extend_from_slice(&v.to_le_bytes());
        }
        head.extend_from_slice(&h.samples.to_le_bytes());
        head.extend_from_slice(&to_u32(meta.len())?.to_le_bytes());
        head.extend_from_slice(&meta);
        w.write_all(&head)?;
        let mut buf = Vec::with_capacity(64 * 1024);
        for chunk in self.data.chunks(16 * 1024) {
            buf.clear();
            for v in chunk {
                buf.extend_from_slice(&v.to_le_bytes());
            }
            w.write_all(&buf)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_from<R: Read>(mut r: R) -> Result<Self> {
        let mut head = [0u8; HEADER_LEN];
        read_exact_or(&mut r, &mut head, "header")?;
        if &head[0..4] != MAGIC {
            return Err(Error::Format(format!("bad magic {:?}", &head[0..4])));
        }
        let u16_at = |i: usize| u16::from_le_bytes([head[i], head[i + 1]]);
        let u32_at = |i: usize| u32::from_le_bytes(head[i..i + 4].try_into().expect("4 bytes"));
        let version = u16_at(4);
        if version != VERSION {
            return Err(Error::Version(version));
        }
        if head[6] != LITTLE_ENDIAN {
            return Err(Error::Format(format!("unsupported endianness flag {}", head[6])));
        }
        let layout = Layout::from_code(head[7])?;
        let (width, height, p, channels) = (u32_at(8), u32_at(12), u32_at(16), u32_at(20));
        let samples = u64::from_le_bytes(head[24..32].try_into().expect("8 bytes"));
        let meta_len = u32_at(32) as usize;
        if let Some(c) = layout.channels(p) {
            if c != channels {
                return Err(Error::Format(format!(
                    "layout {layout:?} with p = {p} needs {c} channels, header says {channels}"
                )));
            }
        }
        let header = Header {
            version,
            layout,
            width,
            height,
            p,
            channels,
            samples,
        };

        let mut meta = vec![0u8; meta_len];
        read_exact_or(&mut r, &mut meta, "metadata")?;
        let metadata: Value = serde_json::from_slice(&meta)?;

        let expected = header.payload_bytes();
        let mut payload = Vec::new();
        r.take(expected + 1).read_to_end(&mut payload)?;
        if payload.len() as u64 != expected {
            if (payload.len() as u64) < expected {
                return Err(Error::Truncated {
                    expected,
                    found: payload.len() as u64,
                });
            }
            return Err(Error::Format("trailing bytes after payload".into()));
        }
        let data = payload
            .chunks_exact(4)
            .map(|b| f32::from_le_bytes(b.try_into().expect("4 bytes")))
            .collect();
        Ok(Self {
            header,
            metadata,
            data,
        })
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        self.write_to(BufWriter::new(File::create(path)?))
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        Self::read_from(BufReader::new(File::open(path)?))
    }
}

fn read_exact_or<R: Read>(r: &mut R, buf: &mut [u8], what: &str) -> Result<()> {
    let mut filled = 0;
    while filled < buf.len() {
        match r.read(&mut buf[filled..])? {
            0 => {
                return Err(Error::Format(format!(
                    "file ends inside the {what} ({filled} of {} bytes)",
                    buf.len()
                )))
            }
            n => filled += n,
        }
    }
    Ok(())
}

fn to_u32(v: usize) -> Result<u32> {
    u32::try_from(v).map_err(|_| Error::shape(format!("{v} does not fit the header field")))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn layout_codes_round_trip() {
        for l in [
            Layout::Frames,
            Layout::FramesWithVelocity,
            Layout::StacksWithTarget,
            Layout::Stacks,
            Layout::Predictions,
            Layout::Raster,
        ] {
            assert_eq!(Layout::from_code(l.code()).unwrap(), l);
        }
        assert!(Layout::from_code(0).is_err());
    }

    #[test]
    fn wrong_channel_count_is_rejected() {
        let mut c = Container::new(Layout::Frames, 2, 2, 0, 2, Value::Null).unwrap();
        let g = ScalarGrid2D::new(2, 2);
        assert!(c.push_sample([&g]).is_err());
        assert_eq!(c.samples(), 0);
        assert!(c.data.is_empty());
        c.push_sample([&g, &g]).unwrap();
        assert_eq!(c.samples(), 1);
        assert!(Container::new(Layout::Stacks, 2, 2, 2, 3, Value::Null).is_err());
    }
}
