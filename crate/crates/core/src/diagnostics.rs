//! Surface heat flux, void fraction, regime segmentation and prediction
//! error statistics.

use std::fmt;
use std::io::Write;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::ScalarGrid2D;
use crate::phase::{quantize, PhaseContourMap, LIQUID, SOLID, VAPOR};
use crate::sim::{FrameSeries, SimConfig};
use crate::units::{FluidProperties, QuantityKind, UnitSystem};

/// Heated-surface length in lattice units; columns `1..=L_X` of the crop.
pub const L_X: usize = 254;
pub const F_EPS: f64 = 0.005;
pub const SMOOTHING_WINDOW: usize = 5;
/// W/m^2 per W/cm^2.
const W_PER_CM2: f64 = 1e4;

/// `q(x) = -kappa(x, y_h + dy) (T(x, y_h + dy) - T(x, y_h)) / dy` along row `y_h`,
/// with `dy` in cells and the result in the units of `t` and `kappa`.
pub fn local_heat_flux(
    t: &ScalarGrid2D,
    kappa: &ScalarGrid2D,
    y_h: usize,
    dy: usize,
) -> Result<Vec<f64>> {
    if !t.same_shape(kappa) {
        return Err(Error::shape("temperature and conductivity grids differ"));
    }
    if dy == 0 || y_h + dy >= t.height() {
        return Err(Error::shape(format!(
            "surface row {y_h} + {dy} outside a grid of height {}",
            t.height()
        )));
    }
    let yf = y_h + dy;
    let len = dy as f64 * t.cell_size;
    Ok((0..t.width())
        .map(|x| -kappa.get(x, yf) * (t.get(x, yf) - t.get(x, y_h)) / len)
        .collect())
}

/// Mean of `q_local` over the heated surface of length `l_x`.
pub fn spatial_avg_flux(q_local: &[f64], l_x: usize) -> Result<f64> {
    if q_local.len() != l_x || l_x == 0 {
        return Err(Error::shape(format!(
            "surface flux has {} points, expected {l_x}",
            q_local.len()
        )));
    }
    Ok(q_local.iter().sum::<f64>() / l_x as f64)
}

/// Surface columns `1..=l_x` of a full-width flux row.
pub fn surface_columns(q_row: &[f64], l_x: usize) -> Result<&[f64]> {
    q_row
        .get(1..=l_x)
        .ok_or_else(|| Error::shape(format!("row of {} cannot hold {l_x} surface columns", q_row.len())))
}

pub fn spatiotemporal_avg_flux(q_s: &[f64]) -> Result<f64> {
    if q_s.is_empty() {
        return Err(Error::shape("empty heat-flux series"));
    }
    Ok(q_s.iter().sum::<f64>() / q_s.len() as f64)
}

/// Vapor area over fluid area.
pub fn void_fraction(phi: &PhaseContourMap) -> Result<f64> {
    let (mut vapor, mut fluid) = (0usize, 0usize);
    for &v in phi.phi.as_slice() {
        if v == VAPOR {
            vapor += 1;
            fluid += 1;
        } else if v != SOLID {
            fluid += 1;
        }
    }
    if fluid == 0 {
        return Err(Error::domain("void fraction of an all-solid map"));
    }
    Ok(vapor as f64 / fluid as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Regime {
    SinglePhase,
    BubbleGrowth,
    TwoPhase,
}

impl Regime {
    pub fn name(self) -> &'static str {
        match self {
            Regime::SinglePhase => "single_phase",
            Regime::BubbleGrowth => "bubble_growth",
            Regime::TwoPhase => "two_phase",
        }
    }
}

impl fmt::Display for Regime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Regime {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        [Regime::SinglePhase, Regime::BubbleGrowth, Regime::TwoPhase]
            .into_iter()
            .find(|r| r.name() == s)
            .ok_or_else(|| Error::config(format!("unknown regime {s:?}")))
    }
}

/// Centred moving average; the window shrinks at the ends.
pub fn moving_average(f: &[f64], window: usize) -> Vec<f64> {
    let half = window / 2;
    (0..f.len())
        .map(|i| {
            let lo = i.saturating_sub(half);
            let hi = (i + half).min(f.len() - 1);
            f[lo..=hi].iter().sum::<f64>() / (hi - lo + 1) as f64
        })
        .collect()
}

/// Single-phase until `f >= f_eps`, bubble growth up to and including the
/// first strict local maximum of the smoothed series, two-phase afterwards.
pub fn segment_regimes(f: &[f64], f_eps: f64, window: usize) -> Vec<Regime> {
    let n = f.len();
    let Some(onset) = f.iter().position(|&v| v >= f_eps) else {
        return vec![Regime::SinglePhase; n];
    };
    let s = moving_average(f, window.max(1));
    let peak = (onset.max(1)..n.saturating_sub(1)).find(|&i| s[i - 1] < s[i] && s[i] > s[i + 1]);
    (0..n)
        .map(|i| {
            if i < onset {
                Regime::SinglePhase
            } else if peak.is_none_or(|p| i <= p) {
                Regime::BubbleGrowth
            } else {
                Regime::TwoPhase
            }
        })
        .collect()
}

/// How surface heat flux is evaluated on cropped frames.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FluxSettings {
    /// Top solid row.
    pub y_h: usize,
    pub dy: usize,
    pub l_x: usize,
    /// Fluid conductivity per unit density.
    pub kappa_coeff: f64,
    pub kappa_solid: f64,
    /// Densities standing in for each phase when only contours are known.
    pub rho_liquid: f64,
    pub rho_vapor: f64,
}

impl FluxSettings {
    /// Settings for cropped frames of a simulation run.
    pub fn for_simulation(config: &SimConfig, rho_liquid: f64, rho_vapor: f64) -> Self {
        Self {
            y_h: config.solid_rows - 1,
            dy: 1,
            l_x: L_X.min(config.crop_width.saturating_sub(2)),
            kappa_coeff: config.thermal.kappa_fluid_coeff,
            kappa_solid: config.thermal.kappa_solid,
            rho_liquid,
            rho_vapor,
        }
    }

    pub fn kappa_from_density(&self, rho: &ScalarGrid2D, solid_mask: &[bool]) -> Result<ScalarGrid2D> {
        if solid_mask.len() != rho.len() {
            return Err(Error::shape("solid mask does not match the density grid"));
        }
        let data = rho
            .as_slice()
            .iter()
            .zip(solid_mask)
            .map(|(&r, &s)| if s { self.kappa_solid } else { self.kappa_coeff * r })
            .collect();
        ScalarGrid2D::from_vec(rho.width(), rho.height(), data)
    }

    pub fn kappa_from_phase(&self, phi: &ScalarGrid2D) -> ScalarGrid2D {
        phi.map(|v| {
            if v == SOLID {
                self.kappa_solid
            } else if v == VAPOR {
                self.kappa_coeff * self.rho_vapor
            } else {
                self.kappa_coeff * self.rho_liquid
            }
        })
    }

    /// Spatially averaged flux (lattice units) of one frame.
    pub fn surface_flux(&self, t: &ScalarGrid2D, kappa: &ScalarGrid2D) -> Result<(Vec<f64>, f64)> {
        let row = local_heat_flux(t, kappa, self.y_h, self.dy)?;
        let q = surface_columns(&row, self.l_x)?.to_vec();
        let avg = spatial_avg_flux(&q, self.l_x)?;
        Ok((q, avg))
    }
}

/// Lattice heat flux to W/cm^2.
pub fn flux_to_w_per_cm2(q_lattice: f64, units: &UnitSystem) -> f64 {
    units.to_physical(q_lattice, QuantityKind::HeatFlux) / W_PER_CM2
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiagnosticsSeries {
    /// Per-frame surface flux over the `L_X` columns, W/cm^2.
    pub q_local: Vec<Vec<f64>>,
    pub q_s: Vec<f64>,
    pub q_st: f64,
    pub void_fraction: Vec<f64>,
    pub regime: Vec<Regime>,
}

impl DiagnosticsSeries {
    /// `frames` yields lattice temperature, conductivity and the phase map.
    pub fn compute<'a>(
        frames: impl IntoIterator<Item = (&'a ScalarGrid2D, ScalarGrid2D, &'a PhaseContourMap)>,
        flux: &FluxSettings,
        units: &UnitSystem,
    ) -> Result<Self> {
        let mut q_local = Vec::new();
        let mut q_s = Vec::new();
        let mut vf = Vec::new();
        for (t, kappa, phi) in frames {
            let (q, _) = flux.surface_flux(t, &kappa)?;
            let q: Vec<f64> = q.into_iter().map(|v| flux_to_w_per_cm2(v, units)).collect();
            q_s.push(spatial_avg_flux(&q, flux.l_x)?);
            q_local.push(q);
            vf.push(void_fraction(phi)?);
        }
        let q_st = spatiotemporal_avg_flux(&q_s)?;
        let regime = segment_regimes(&vf, F_EPS, SMOOTHING_WINDOW);
        Ok(Self {
            q_local,
            q_s,
            q_st,
            void_fraction: vf,
            regime,
        })
    }

    /// Diagnostics of a simulation run with density-based conductivity.
    pub fn from_series(series: &FrameSeries, threshold: f64, units: &UnitSystem) -> Result<Self> {
        let meta = &series.metadata;
        let flux = FluxSettings::for_simulation(
            &meta.config,
            meta.solver.rho_l_coexistence,
            meta.solver.rho_v_coexistence,
        );
        let mask = series.solid_mask();
        let phis = series
            .frames
            .iter()
            .map(|f| quantize(&f.rho, threshold, &mask))
            .collect::<Result<Vec<_>>>()?;
        let kappas = series
            .frames
            .iter()
            .map(|f| flux.kappa_from_density(&f.rho, &mask))
            .collect::<Result<Vec<_>>>()?;
        Self::compute(
            series.frames.iter().zip(kappas).zip(&phis).map(|((f, k), p)| (&f.t, k, p)),
            &flux,
            units,
        )
    }

    pub fn len(&self) -> usize {
        self.q_s.len()
    }

    pub fn is_empty(&self) -> bool {
        self.q_s.is_empty()
    }

    /// Per-frame CSV: `frame,q_s,void_fraction,regime`.
    pub fn write_frames_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["frame", "q_s_w_cm2", "void_fraction", "regime"])
            .map_err(csv_err)?;
        for (k, ((q, f), r)) in self
            .q_s
            .iter()
            .zip(&self.void_fraction)
            .zip(&self.regime)
            .enumerate()
        {
            w.write_record([k.to_string(), q.to_string(), f.to_string(), r.to_string()])
                .map_err(csv_err)?;
        }
        w.flush()?;
        Ok(())
    }

    /// Local flux table, one row per frame, one column per surface cell.
    pub fn write_local_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec!["frame".to_string()];
        header.extend((1..=self.q_local.first().map_or(0, Vec::len)).map(|x| format!("x{x}")));
        w.write_record(&header).map_err(csv_err)?;
        for (k, row) in self.q_local.iter().enumerate() {
            let mut rec = vec![k.to_string()];
            rec.extend(row.iter().map(f64::to_string));
            w.write_record(&rec).map_err(csv_err)?;
        }
        w.flush()?;
        Ok(())
    }
}

pub(crate) fn csv_err(e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::Io(io),
        other => Error::Format(format!("csv: {other:?}")),
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct ErrorStat {
    pub mean: f64,
    pub max: f64,
    pub count: usize,
}

#[derive(Debug, Clone, Copy, Default)]
struct Accumulator {
    sum: f64,
    max: f64,
    count: usize,
}

impl Accumulator {
    fn push(&mut self, v: f64) {
        self.sum += v;
        self.max = self.max.max(v);
        self.count += 1;
    }

    fn finish(self) -> ErrorStat {
        ErrorStat {
            mean: if self.count > 0 { self.sum / self.count as f64 } else { 0.0 },
            max: self.max,
            count: self.count,
        }
    }
}

/// Statistics split by the phase of the truth contour.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct PhaseStats {
    pub solid: ErrorStat,
    pub vapor: ErrorStat,
    pub liquid: ErrorStat,
    pub all: ErrorStat,
}

#[derive(Default)]
struct PhaseAccumulator {
    solid: Accumulator,
    vapor: Accumulator,
    liquid: Accumulator,
    all: Accumulator,
}

impl PhaseAccumulator {
    fn push(&mut self, phase: f64, v: f64) {
        if phase == SOLID {
            self.solid.push(v);
        } else if phase == VAPOR {
            self.vapor.push(v);
        } else if phase == LIQUID {
            self.liquid.push(v);
        }
        self.all.push(v);
    }

    fn finish(self) -> PhaseStats {
        PhaseStats {
            solid: self.solid.finish(),
            vapor: self.vapor.finish(),
            liquid: self.liquid.finish(),
            all: self.all.finish(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorReport {
    /// Percent error of temperature in K.
    pub temperature_pct: PhaseStats,
    /// Absolute error of successive temperature change `T_n - T_{n-1}`, K.
    pub delta_t_k: PhaseStats,
    /// Per-cell mean and max percent error over all frames.
    pub mean_error_map: ScalarGrid2D,
    pub max_error_map: ScalarGrid2D,
    pub q_s_pred: Vec<f64>,
    pub q_s_truth: Vec<f64>,
    pub q_st_pred: f64,
    pub q_st_truth: f64,
    pub rmse_q_s: f64,
    pub rmse_q_st: f64,
}

/// Compares predicted and true `Ja_N` frames. Percent errors use the true
/// temperature in K as denominator; heat fluxes use phase-based conductivity
/// from the truth contours for both sides.
pub fn error_report(
    pred: &[ScalarGrid2D],
    truth: &[ScalarGrid2D],
    phi: &[ScalarGrid2D],
    props: &FluidProperties,
    flux: &FluxSettings,
    units: &UnitSystem,
) -> Result<ErrorReport> {
    if pred.len() != truth.len() || pred.len() != phi.len() || pred.is_empty() {
        return Err(Error::shape(format!(
            "frame counts differ or are zero: {} predicted, {} truth, {} contours",
            pred.len(),
            truth.len(),
            phi.len()
        )));
    }
    let (w, h) = truth[0].dims();
    for g in pred.iter().chain(truth).chain(phi) {
        if g.dims() != (w, h) {
            return Err(Error::shape("frames do not share one size"));
        }
    }
    let to_k = |g: &ScalarGrid2D| g.map(|v| props.temperature_from_normalized(v));
    let pred_k: Vec<ScalarGrid2D> = pred.iter().map(to_k).collect();
    let truth_k: Vec<ScalarGrid2D> = truth.iter().map(to_k).collect();

    let mut pct = PhaseAccumulator::default();
    let mut dt = PhaseAccumulator::default();
    let mut sum_map = ScalarGrid2D::new(w, h);
    let mut max_map = ScalarGrid2D::new(w, h);
    for n in 0..pred.len() {
        let (p, t, ph) = (&pred_k[n], &truth_k[n], phi[n].as_slice());
        for i in 0..p.len() {
            let e = 100.0 * (p.as_slice()[i] - t.as_slice()[i]).abs() / t.as_slice()[i];
            pct.push(ph[i], e);
            sum_map.as_mut_slice()[i] += e;
            let m = &mut max_map.as_mut_slice()[i];
            *m = m.max(e);
        }
        if n > 0 {
            let (pp, tp) = (&pred_k[n - 1], &truth_k[n - 1]);
            for i in 0..p.len() {
                let dp = p.as_slice()[i] - pp.as_slice()[i];
                let dtru = t.as_slice()[i] - tp.as_slice()[i];
                dt.push(ph[i], (dp - dtru).abs());
            }
        }
    }
    let frames = pred.len() as f64;
    let mean_map = sum_map.map(|v| v / frames);

    let q_s = |temps: &[ScalarGrid2D]| -> Result<Vec<f64>> {
        temps
            .iter()
            .zip(phi)
            .map(|(tk, ph)| {
                let t_lat = tk.map(|v| units.to_lattice(v, QuantityKind::Temperature));
                let kappa = flux.kappa_from_phase(ph);
                let (_, avg) = flux.surface_flux(&t_lat, &kappa)?;
                Ok(flux_to_w_per_cm2(avg, units))
            })
            .collect()
    };
    let q_s_pred = q_s(&pred_k)?;
    let q_s_truth = q_s(&truth_k)?;
    let q_st_pred = spatiotemporal_avg_flux(&q_s_pred)?;
    let q_st_truth = spatiotemporal_avg_flux(&q_s_truth)?;
    let rmse_q_s = rmse(&q_s_pred, &q_s_truth);
    Ok(ErrorReport {
        temperature_pct: pct.finish(),
        delta_t_k: dt.finish(),
        mean_error_map: mean_map,
        max_error_map: max_map,
        q_s_pred,
        q_s_truth,
        q_st_pred,
        q_st_truth,
        rmse_q_s,
        rmse_q_st: (q_st_pred - q_st_truth).abs(),
    })
}

pub fn rmse(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len().min(b.len());
    if n == 0 {
        return 0.0;
    }
    (a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>() / n as f64).sqrt()
}

/// RMSE of `q_ST` across several datasets' reports.
pub fn pooled_rmse_q_st(reports: &[ErrorReport]) -> f64 {
    let p: Vec<f64> = reports.iter().map(|r| r.q_st_pred).collect();
    let t: Vec<f64> = reports.iter().map(|r| r.q_st_truth).collect();
    rmse(&p, &t)
}

/// RMSE of `q_S` over every frame of several datasets.
pub fn pooled_rmse_q_s(reports: &[ErrorReport]) -> f64 {
    let p: Vec<f64> = reports.iter().flat_map(|r| r.q_s_pred.iter().copied()).collect();
    let t: Vec<f64> = reports.iter().flat_map(|r| r.q_s_truth.iter().copied()).collect();
    rmse(&p, &t)
}
