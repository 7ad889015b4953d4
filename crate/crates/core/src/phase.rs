//! Phase-contour quantization of density maps and global threshold estimators.
//!
//! Cells are labelled solid (-1), vapor (0) or liquid (1); a fluid cell is vapor
//! when `rho <= rho_th`.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::ScalarGrid2D;

pub const DEFAULT_THRESHOLD: f64 = 3.79552;
pub const DEFAULT_BINS: usize = 256;

pub const SOLID: f64 = -1.0;
pub const VAPOR: f64 = 0.0;
pub const LIQUID: f64 = 1.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PhaseSource {
    Simulation,
    Experimental,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhaseContourMap {
    pub phi: ScalarGrid2D,
    pub threshold_used: f64,
    pub source: PhaseSource,
}

impl PhaseContourMap {
    pub fn width(&self) -> usize {
        self.phi.width()
    }

    pub fn height(&self) -> usize {
        self.phi.height()
    }

    pub fn count(&self, label: f64) -> usize {
        self.phi.as_slice().iter().filter(|&&v| v == label).count()
    }
}

/// Eq. (1) quantization; solid cells are labelled -1 whatever their density.
pub fn quantize(rho: &ScalarGrid2D, rho_th: f64, solid_mask: &[bool]) -> Result<PhaseContourMap> {
    if solid_mask.len() != rho.len() {
        return Err(Error::shape("solid mask does not match the density grid"));
    }
    let phi = rho
        .as_slice()
        .iter()
        .zip(solid_mask)
        .map(|(&r, &solid)| {
            if solid {
                SOLID
            } else if r <= rho_th {
                VAPOR
            } else {
                LIQUID
            }
        })
        .collect();
    let mut phi = ScalarGrid2D::from_vec(rho.width(), rho.height(), phi)?;
    phi.cell_size = rho.cell_size;
    Ok(PhaseContourMap {
        phi,
        threshold_used: rho_th,
        source: PhaseSource::Simulation,
    })
}

/// Uniform-bin histogram of density values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DensityHistogram {
    edges: Vec<f64>,
    counts: Vec<u64>,
}

impl DensityHistogram {
    /// `bins` uniform bins over `[lo, hi]`. Values outside the range are
    /// clamped into the end bins.
    pub fn new(lo: f64, hi: f64, bins: usize) -> Result<Self> {
        if bins == 0 || !(lo < hi) || !lo.is_finite() || !hi.is_finite() {
            return Err(Error::config(format!(
                "histogram needs bins > 0 and lo < hi, got {bins} bins over [{lo}, {hi}]"
            )));
        }
        let step = (hi - lo) / bins as f64;
        let edges = (0..=bins)
            .map(|i| if i == bins { hi } else { lo + step * i as f64 })
            .collect();
        Ok(Self {
            edges,
            counts: vec![0; bins],
        })
    }

    /// Default binning for a fluid whose liquid density is `rho_l`.
    pub fn for_liquid_density(rho_l: f64) -> Result<Self> {
        Self::new(0.0, 1.1 * rho_l, DEFAULT_BINS)
    }

    /// Histogram from explicit counts over uniform bins on `[lo, hi]`.
    pub fn from_counts(lo: f64, hi: f64, counts: Vec<u64>) -> Result<Self> {
        let mut h = Self::new(lo, hi, counts.len())?;
        h.counts = counts;
        Ok(h)
    }

    pub fn bins(&self) -> usize {
        self.counts.len()
    }

    pub fn edges(&self) -> &[f64] {
        &self.edges
    }

    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn centers(&self) -> Vec<f64> {
        self.edges.windows(2).map(|e| 0.5 * (e[0] + e[1])).collect()
    }

    fn bin_of(&self, v: f64) -> usize {
        let lo = self.edges[0];
        let hi = self.edges[self.bins()];
        let k = ((v - lo) / (hi - lo) * self.bins() as f64).floor();
        if k.is_nan() || k < 0.0 {
            0
        } else {
            (k as usize).min(self.bins() - 1)
        }
    }

    pub fn add(&mut self, v: f64) {
        if v.is_finite() {
            let k = self.bin_of(v);
            self.counts[k] += 1;
        }
    }

    /// Adds the fluid cells (`mask[i] == false`) of a density map.
    pub fn add_grid(&mut self, rho: &ScalarGrid2D, solid_mask: &[bool]) -> Result<()> {
        if solid_mask.len() != rho.len() {
            return Err(Error::shape("solid mask does not match the density grid"));
        }
        for (&r, &solid) in rho.as_slice().iter().zip(solid_mask) {
            if !solid {
                self.add(r);
            }
        }
        Ok(())
    }

    pub fn merge(&mut self, other: &DensityHistogram) -> Result<()> {
        if self.edges != other.edges {
            return Err(Error::shape("histograms have different bins"));
        }
        for (a, b) in self.counts.iter_mut().zip(&other.counts) {
            *a += b;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ThresholdMethod {
    Minimum,
    Li,
    Isodata,
    Otsu,
    Triangle,
    Mean,
}

impl ThresholdMethod {
    pub const ALL: [ThresholdMethod; 6] = [
        ThresholdMethod::Minimum,
        ThresholdMethod::Li,
        ThresholdMethod::Isodata,
        ThresholdMethod::Otsu,
        ThresholdMethod::Triangle,
        ThresholdMethod::Mean,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ThresholdMethod::Minimum => "minimum",
            ThresholdMethod::Li => "li",
            ThresholdMethod::Isodata => "isodata",
            ThresholdMethod::Otsu => "otsu",
            ThresholdMethod::Triangle => "triangle",
            ThresholdMethod::Mean => "mean",
        }
    }
}

impl fmt::Display for ThresholdMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ThresholdMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|m| m.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::config(format!("unknown threshold method {s:?}")))
    }
}

/// Global threshold of `hist` by `method`. Cut-based methods return the
/// centre of the last bin classified as vapor.
pub fn estimate_threshold(hist: &DensityHistogram, method: ThresholdMethod) -> Result<f64> {
    let occupied = hist.counts.iter().filter(|&&c| c > 0).count();
    if occupied < 2 {
        return Err(Error::Estimation(format!(
            "{method} needs at least two occupied bins, histogram has {occupied}"
        )));
    }
    let centers = hist.centers();
    let k = match method {
        ThresholdMethod::Mean => return Ok(mean(&hist.counts, &centers)),
        ThresholdMethod::Otsu => otsu(&hist.counts, &centers),
        ThresholdMethod::Isodata => isodata(&hist.counts),
        ThresholdMethod::Li => li(&hist.counts, &centers),
        ThresholdMethod::Triangle => triangle(&hist.counts),
        ThresholdMethod::Minimum => minimum(&hist.counts)?,
    };
    let k = k.ok_or_else(|| Error::Estimation(format!("{method} found no admissible cut")))?;
    Ok(centers[k])
}

fn mean(counts: &[u64], centers: &[f64]) -> f64 {
    let n: f64 = counts.iter().map(|&c| c as f64).sum();
    counts
        .iter()
        .zip(centers)
        .map(|(&c, &x)| c as f64 * x)
        .sum::<f64>()
        / n
}

/// Running (count, first moment) sums up to and including each bin.
fn prefix_moments(counts: &[u64], centers: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let mut w = Vec::with_capacity(counts.len());
    let mut m = Vec::with_capacity(counts.len());
    let (mut sw, mut sm) = (0.0, 0.0);
    for (&c, &x) in counts.iter().zip(centers) {
        sw += c as f64;
        sm += c as f64 * x;
        w.push(sw);
        m.push(sm);
    }
    (w, m)
}

/// Cut maximizing the between-class variance `w0 w1 (mu0 - mu1)^2`.
fn otsu(counts: &[u64], centers: &[f64]) -> Option<usize> {
    let (w, m) = prefix_moments(counts, centers);
    let (wt, mt) = (*w.last()?, *m.last()?);
    let mut best: Option<(usize, f64)> = None;
    for k in 0..counts.len() - 1 {
        let (w0, w1) = (w[k], wt - w[k]);
        if w0 == 0.0 || w1 == 0.0 {
            continue;
        }
        let d = m[k] / w0 - (mt - m[k]) / w1;
        let var = w0 * w1 * d * d;
        if best.is_none_or(|(_, b)| var > b) {
            best = Some((k, var));
        }
    }
    best.map(|(k, _)| k)
}

/// First cut whose centre sits at the midpoint of the two class means
/// (Ridler–Calvard fixed point), located to bin resolution. Bins are uniform,
/// so the test runs exactly on integer bin-index moments: ties at a bin
/// centre cannot flip with rounding.
fn isodata(counts: &[u64]) -> Option<usize> {
    let wt: u128 = counts.iter().map(|&c| c as u128).sum();
    let st: u128 = counts.iter().enumerate().map(|(i, &c)| i as u128 * c as u128).sum();
    let (mut w0, mut s0) = (0u128, 0u128);
    for k in 0..counts.len() - 1 {
        w0 += counts[k] as u128;
        s0 += k as u128 * counts[k] as u128;
        let (w1, s1) = (wt - w0, st - s0);
        if w0 == 0 || w1 == 0 {
            continue;
        }
        // midpoint index (s0/w0 + s1/w1) / 2 lies in [k, k + 1)
        let (num, den) = (s0 * w1 + s1 * w0, 2 * w0 * w1);
        if k as u128 * den <= num && num < (k as u128 + 1) * den {
            return Some(k);
        }
    }
    None
}

/// Cut minimizing the cross entropy between the histogram and its two-level
/// reconstruction; equivalent to minimizing `-(m0 ln mu0 + m1 ln mu1)`.
fn li(counts: &[u64], centers: &[f64]) -> Option<usize> {
    let (w, m) = prefix_moments(counts, centers);
    let (wt, mt) = (*w.last()?, *m.last()?);
    let mut best: Option<(usize, f64)> = None;
    for k in 0..counts.len() - 1 {
        let (w0, w1) = (w[k], wt - w[k]);
        let (m0, m1) = (m[k], mt - m[k]);
        if w0 == 0.0 || w1 == 0.0 || m0 <= 0.0 || m1 <= 0.0 {
            continue;
        }
        let eta = -(m0 * (m0 / w0).ln() + m1 * (m1 / w1).ln());
        if best.is_none_or(|(_, b)| eta < b) {
            best = Some((k, eta));
        }
    }
    best.map(|(k, _)| k)
}

/// Zack's triangle method: the bin farthest below the line joining the
/// peak to the far end of the longer tail.
fn triangle(counts: &[u64]) -> Option<usize> {
    let first = counts.iter().position(|&c| c > 0)?;
    let last = counts.iter().rposition(|&c| c > 0)?;
    let peak = (first..=last).max_by_key(|&k| (counts[k], std::cmp::Reverse(k)))?;
    // tail end: the bin just outside the occupied range on the longer side
    let (end, toward_high) = if last - peak > peak - first {
        ((last + 1).min(counts.len() - 1), true)
    } else {
        (first.saturating_sub(1), false)
    };
    if end == peak {
        return None;
    }
    let (x0, y0) = (peak as f64, counts[peak] as f64);
    let (x1, y1) = (end as f64, counts[end] as f64);
    let (dx, dy) = (x1 - x0, y1 - y0);
    let range: Vec<usize> = if toward_high {
        (peak..=end).collect()
    } else {
        (end..=peak).collect()
    };
    let mut best: Option<(usize, f64)> = None;
    for k in range {
        // signed distance below the line, up to the constant 1/|line|
        let d = dy * k as f64 - dx * counts[k] as f64 + x1 * y0 - y1 * x0;
        let d = if toward_high { d } else { -d };
        if best.is_none_or(|(_, b)| d > b) {
            best = Some((k, d));
        }
    }
    best.map(|(k, _)| k)
}

const MAX_SMOOTHING: usize = 10_000;

/// Prewitt's minimum method: smooth with a 3-bin running mean until exactly
/// two local maxima remain, then take the lowest bin between them.
fn minimum(counts: &[u64]) -> Result<Option<usize>> {
    let mut h: Vec<f64> = counts.iter().map(|&c| c as f64).collect();
    for _ in 0..MAX_SMOOTHING {
        let peaks = local_maxima(&h);
        if peaks.len() == 2 {
            return Ok(argmin_between(&h, peaks[0], peaks[1]));
        }
        if peaks.len() < 2 {
            break;
        }
        h = smooth3(&h);
    }
    Err(Error::Estimation(
        "minimum: histogram never becomes bimodal under smoothing".into(),
    ))
}

pub(crate) fn smooth3(h: &[f64]) -> Vec<f64> {
    let n = h.len();
    (0..n)
        .map(|i| {
            let a = if i > 0 { h[i - 1] } else { h[i] };
            let c = if i + 1 < n { h[i + 1] } else { h[i] };
            (a + h[i] + c) / 3.0
        })
        .collect()
}

/// Strict local maxima, with flat tops counted once at their first bin.
pub(crate) fn local_maxima(h: &[f64]) -> Vec<usize> {
    let n = h.len();
    let mut peaks = Vec::new();
    let mut i = 0;
    while i < n {
        let mut j = i;
        while j + 1 < n && h[j + 1] == h[i] {
            j += 1;
        }
        let left_lower = i == 0 || h[i - 1] < h[i];
        let right_lower = j + 1 == n || h[j + 1] < h[i];
        if left_lower && right_lower && h[i] > 0.0 {
            peaks.push(i);
        }
        i = j + 1;
    }
    peaks
}

fn argmin_between(h: &[f64], a: usize, b: usize) -> Option<usize> {
    (a..=b).min_by(|&i, &j| h[i].total_cmp(&h[j]))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_spikes() -> DensityHistogram {
        let mut h = DensityHistogram::new(0.0, 8.0, 64).unwrap();
        for _ in 0..100 {
            h.add(2.0);
            h.add(6.0);
        }
        h
    }

    #[test]
    fn quantize_examples() {
        let rho = ScalarGrid2D::from_vec(3, 1, vec![3.0, 5.0, 5.0]).unwrap();
        let map = quantize(&rho, DEFAULT_THRESHOLD, &[false, false, true]).unwrap();
        assert_eq!(map.phi.as_slice(), &[VAPOR, LIQUID, SOLID]);
        let tie = ScalarGrid2D::from_vec(1, 1, vec![DEFAULT_THRESHOLD]).unwrap();
        assert_eq!(quantize(&tie, DEFAULT_THRESHOLD, &[false]).unwrap().phi[(0, 0)], VAPOR);
    }

    #[test]
    fn mean_of_spikes() {
        let t = estimate_threshold(&two_spikes(), ThresholdMethod::Mean).unwrap();
        // both spikes sit on bin edges and land in bins centred 0.0625 higher
        assert!((t - 4.0625).abs() < 1e-12, "{t}");
    }

    #[test]
    fn cut_methods_split_spikes() {
        let h = two_spikes();
        for m in ThresholdMethod::ALL {
            let t = estimate_threshold(&h, m).unwrap();
            assert!((2.0..6.0).contains(&t), "{m}: {t}");
        }
    }

    #[test]
    fn degenerate_histogram_is_an_error() {
        let mut h = DensityHistogram::new(0.0, 1.0, 16).unwrap();
        h.add(0.5);
        h.add(0.5);
        for m in ThresholdMethod::ALL {
            assert!(matches!(estimate_threshold(&h, m), Err(Error::Estimation(_))));
        }
    }

    #[test]
    fn method_names_round_trip() {
        for m in ThresholdMethod::ALL {
            assert_eq!(m.name().parse::<ThresholdMethod>().unwrap(), m);
        }
        assert!("huang".parse::<ThresholdMethod>().is_err());
    }

    #[test]
    fn histogram_clamps_out_of_range() {
        let mut h = DensityHistogram::new(0.0, 1.0, 4).unwrap();
        h.add(-3.0);
        h.add(1.0);
        h.add(7.0);
        h.add(f64::NAN);
        assert_eq!(h.counts(), &[1, 0, 0, 2]);
    }
}
