//! Writers that stamp every artifact with the effective config hash.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use boilgen_core::container::Container;
use boilgen_core::ScalarGrid2D;
use serde_json::Value;

use crate::error::CliError;

/// Merges `stamp` into the container metadata and writes it atomically.
pub fn write_container(mut c: Container, stamp: &Value, path: &Path) -> Result<(), CliError> {
    if let (Some(meta), Some(extra)) = (c.metadata.as_object_mut(), stamp.as_object()) {
        for (k, v) in extra {
            meta.insert(k.clone(), v.clone());
        }
    }
    let mut bytes = Vec::new();
    c.write_to(&mut bytes)?;
    write_atomic(path, &bytes)
}

pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    let tmp = temp_path(path);
    fs::write(&tmp, bytes)?;
    fs::rename(&tmp, path)?;
    Ok(())
}

fn temp_path(path: &Path) -> PathBuf {
    let mut name = path.file_name().unwrap_or_default().to_os_string();
    name.push(".tmp");
    path.with_file_name(name)
}

/// CSV text preceded by a `# config_hash` comment line.
pub fn write_csv(path: &Path, hash: &str, body: &[u8]) -> Result<(), CliError> {
    let mut bytes = format!("# config_hash {hash}\n").into_bytes();
    bytes.extend_from_slice(body);
    write_atomic(path, &bytes)
}

/// Binary 16-bit PGM, top row first, linearly scaled from `[min, max]`.
/// The header comments carry the hash and the scale.
pub fn pgm16(grid: &ScalarGrid2D, hash: &str) -> Vec<u8> {
    let (w, h) = grid.dims();
    let lo = grid.as_slice().iter().copied().fold(f64::INFINITY, f64::min);
    let hi = grid.as_slice().iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let span = if hi > lo { hi - lo } else { 1.0 };
    let mut out = format!("P5\n# config_hash {hash}\n# min {lo} max {hi}\n{w} {h}\n65535\n").into_bytes();
    for y in (0..h).rev() {
        for &v in grid.row(y) {
            let s = ((v - lo) / span * 65535.0).round().clamp(0.0, 65535.0) as u16;
            out.write_all(&s.to_be_bytes()).expect("writing to a vector");
        }
    }
    out
}
