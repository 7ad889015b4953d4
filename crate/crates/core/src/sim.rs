//! Pool-boiling campaign driver: geometry and heater layout, initial state,
//! the coupled lattice/thermal time loop and frame recording.

use std::sync::OnceLock;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::eos::{Coexistence, PengRobinsonParams, PseudopotentialParams};
use crate::error::{Error, Result};
use crate::grid::ScalarGrid2D;
use crate::lbm::{
    CellKind, Execution, Geometry, LatticeState, SrtParams, VectorField, DEFAULT_FORCING_SIGMA,
};
use crate::thermal::{
    conductivity_field, rk4_step, EnergyInputs, Rk4Workspace, TemperatureField, ThermalParams,
    DEFAULT_C_V, DEFAULT_DIFFUSIVITY,
};

pub const T_SAT: f64 = 0.0656;
pub const HEATER_TEMPERATURES: [f64; 3] = [0.074, 0.076, 0.078];
pub const GRAVITY: f64 = 3e-5;
/// Characteristic velocity used for the initial surface kick.
pub const U0: f64 = 0.02627;

/// Equal-area coexistence of the default equation of state at `T_SAT`.
pub fn saturation_coexistence() -> Coexistence {
    static CELL: OnceLock<Coexistence> = OnceLock::new();
    *CELL.get_or_init(|| {
        PengRobinsonParams::default()
            .coexistence_densities(T_SAT)
            .expect("T_sat is subcritical")
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimConfig {
    pub width: usize,
    pub height: usize,
    pub crop_width: usize,
    pub crop_height: usize,
    pub solid_rows: usize,
    pub heater_count: usize,
    pub heater_length: usize,
    pub heater_gap: usize,
    pub t_heater: f64,
    pub t_sat: f64,
    pub frames: usize,
    pub record_every: usize,
    pub seed: u64,
    pub noise_amplitude: f64,
    pub initial_kick: f64,
    pub gravity: f64,
    /// Density assigned to solid cells for the fluid-solid interaction.
    pub wall_density: f64,
    /// Density held at the top outlet; `None` gives a zero-gradient outflow.
    pub outlet_density: Option<f64>,
    pub srt: SrtParams,
    pub thermal: ThermalParams,
    pub eos: PengRobinsonParams,
    pub pseudopotential: PseudopotentialParams,
    pub execution: Execution,
    pub record_velocity: bool,
}

impl Default for SimConfig {
    fn default() -> Self {
        let coex = saturation_coexistence();
        Self {
            width: 256,
            height: 512,
            crop_width: 256,
            crop_height: 256,
            solid_rows: 5,
            heater_count: 1,
            heater_length: 40,
            heater_gap: 40,
            t_heater: HEATER_TEMPERATURES[2],
            t_sat: T_SAT,
            frames: 200,
            record_every: 500,
            seed: 0,
            noise_amplitude: 1e-4,
            initial_kick: U0,
            gravity: GRAVITY,
            wall_density: DEFAULT_WALL_DENSITY,
            outlet_density: Some(coex.rho_l),
            srt: SrtParams {
                tau: 1.0,
                forcing_sigma: DEFAULT_FORCING_SIGMA,
            },
            thermal: ThermalParams::for_liquid_density(DEFAULT_C_V, DEFAULT_DIFFUSIVITY, coex.rho_l),
            eos: PengRobinsonParams::default(),
            pseudopotential: PseudopotentialParams::default(),
            execution: Execution::Sequential,
            record_velocity: false,
        }
    }
}

pub const DEFAULT_WALL_DENSITY: f64 = 5.0;
pub const DESK_RECORD_EVERY: usize = 100;

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        self.srt.validate()?;
        self.thermal.validate()?;
        self.eos.validate()?;
        self.pseudopotential.validate()?;
        if self.width == 0 || self.height <= self.solid_rows + 2 {
            return Err(Error::config("grid too small for the solid layer"));
        }
        if self.crop_width > self.width || self.crop_height > self.height {
            return Err(Error::config("crop window exceeds the grid"));
        }
        if !(1..=3).contains(&self.heater_count) {
            return Err(Error::config("heater_count must be 1, 2 or 3"));
        }
        if self.solid_rows == 0 {
            return Err(Error::config("at least one solid row is required"));
        }
        let span = self.heater_span();
        if span > self.crop_width.saturating_sub(2) {
            return Err(Error::config(format!(
                "heaters span {span} lu, more than the {} lu solid surface",
                self.crop_width.saturating_sub(2)
            )));
        }
        let tc = self.eos.critical_temperature();
        if !(self.t_sat < self.t_heater && self.t_heater < tc + 0.01 && self.t_sat < tc) {
            return Err(Error::config(format!(
                "need T_sat < T_heater and T_sat < T_c, got T_sat {} T_heater {}",
                self.t_sat, self.t_heater
            )));
        }
        if self.frames == 0 || self.record_every == 0 {
            return Err(Error::config("frames and record_every must be positive"));
        }
        if !(self.wall_density > 0.0 && self.wall_density < self.eos.max_density()) {
            return Err(Error::config("wall_density outside the EOS domain"));
        }
        Ok(())
    }

    pub fn heater_span(&self) -> usize {
        self.heater_count * self.heater_length + (self.heater_count - 1) * self.heater_gap
    }

    /// Half-open column ranges of each heater, centred on the domain.
    pub fn heater_columns(&self) -> Vec<std::ops::Range<usize>> {
        let start = (self.width - self.heater_span()) / 2;
        (0..self.heater_count)
            .map(|k| {
                let a = start + k * (self.heater_length + self.heater_gap);
                a..a + self.heater_length
            })
            .collect()
    }

    pub fn heater_mask(&self) -> Vec<bool> {
        let mut mask = vec![false; self.width];
        for r in self.heater_columns() {
            mask[r].fill(true);
        }
        mask
    }

    /// Column offset of the crop window.
    pub fn crop_origin(&self) -> usize {
        (self.width - self.crop_width) / 2
    }

    pub fn geometry(&self) -> Geometry {
        Geometry::pool(self.width, self.height, self.solid_rows)
    }

    pub fn psi_wall(&self) -> Result<f64> {
        self.eos
            .pseudopotential(self.wall_density, self.t_sat, &self.pseudopotential)
    }

    /// Laptop-sized variant: the domain shrinks to the crop window and frames
    /// are recorded every 100 steps.
    pub fn desk_scale(self) -> Self {
        Self {
            height: self.crop_height,
            width: self.crop_width,
            record_every: DESK_RECORD_EVERY,
            ..self
        }
    }

    pub fn total_steps(&self) -> u64 {
        (self.frames * self.record_every) as u64
    }
}

/// Table 1 campaign `id` (1..=9): heater count `ceil(id/3)`, heater
/// temperature cycling through 0.074, 0.076, 0.078.
pub fn build_campaign(id: u32) -> Result<SimConfig> {
    if !(1..=9).contains(&id) {
        return Err(Error::config(format!("dataset id {id} outside 1..=9")));
    }
    Ok(SimConfig {
        heater_count: id.div_ceil(3) as usize,
        t_heater: HEATER_TEMPERATURES[((id - 1) % 3) as usize],
        seed: id as u64,
        ..SimConfig::default()
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Frame {
    pub rho: ScalarGrid2D,
    pub t: ScalarGrid2D,
    pub vel: Option<(ScalarGrid2D, ScalarGrid2D)>,
    pub step: u64,
}

/// Solver choices in force for a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverRecord {
    pub tau: f64,
    pub forcing: String,
    pub forcing_sigma: f64,
    pub kappa_model: String,
    pub dt_lattice: f64,
    pub dt_thermal: f64,
    pub boundaries: String,
    pub wall_density: f64,
    pub seed: u64,
    pub noise_amplitude: f64,
    pub rho_l_coexistence: f64,
    pub rho_v_coexistence: f64,
}

impl SolverRecord {
    pub fn from_config(config: &SimConfig) -> Result<Self> {
        let coex = config.eos.coexistence_densities(config.t_sat)?;
        Ok(Self {
            tau: config.srt.tau,
            forcing: "guo with pseudopotential-corrected forcing velocity".into(),
            forcing_sigma: config.srt.forcing_sigma,
            kappa_model: format!(
                "kappa = {} * rho (fluid), {} (solid)",
                config.thermal.kappa_fluid_coeff, config.thermal.kappa_solid
            ),
            dt_lattice: 1.0,
            dt_thermal: 1.0 / config.thermal.substeps as f64,
            boundaries: match config.outlet_density {
                Some(r) => format!(
                    "periodic sides, halfway bounce-back on solid, outflow top held at density {r}"
                ),
                None => "periodic sides, halfway bounce-back on solid, zero-gradient outflow top".into(),
            },
            wall_density: config.wall_density,
            seed: config.seed,
            noise_amplitude: config.noise_amplitude,
            rho_l_coexistence: coex.rho_l,
            rho_v_coexistence: coex.rho_v,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimMetadata {
    pub config: SimConfig,
    pub solver: SolverRecord,
    pub code_version: String,
    pub steps_completed: u64,
    pub complete: bool,
    pub failure: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FrameSeries {
    pub frames: Vec<Frame>,
    pub metadata: SimMetadata,
}

impl FrameSeries {
    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn dims(&self) -> Option<(usize, usize)> {
        self.frames.first().map(|f| f.rho.dims())
    }

    /// Solid mask of the cropped window (row-major, bottom row first).
    pub fn solid_mask(&self) -> Vec<bool> {
        let c = &self.metadata.config;
        let mut mask = vec![false; c.crop_width * c.crop_height];
        for y in 0..c.solid_rows.min(c.crop_height) {
            mask[y * c.crop_width..(y + 1) * c.crop_width].fill(true);
        }
        mask
    }
}

/// Keeps the bottom-anchored, horizontally centred crop window of `full`.
pub fn crop_frame(full: &ScalarGrid2D, config: &SimConfig) -> Result<ScalarGrid2D> {
    if full.dims() != (config.width, config.height) {
        return Err(Error::shape(format!(
            "frame is {:?}, configuration expects {}x{}",
            full.dims(),
            config.width,
            config.height
        )));
    }
    full.window(config.crop_origin(), 0, config.crop_width, config.crop_height)
}

/// Coupled lattice/thermal simulation.
pub struct Simulation {
    pub config: SimConfig,
    pub lattice: LatticeState,
    pub temperature: TemperatureField,
    psi_wall: f64,
    kappa: Vec<f64>,
    rk: Rk4Workspace,
}

impl Simulation {
    pub fn new(config: SimConfig) -> Result<Self> {
        let (lattice, temperature) = initialize(&config)?;
        let psi_wall = config.psi_wall()?;
        let n = config.width * config.height;
        Ok(Self {
            config,
            lattice,
            temperature,
            psi_wall,
            kappa: vec![0.0; n],
            rk: Rk4Workspace::new(n),
        })
    }

    pub fn step(&mut self) -> Result<()> {
        let c = &self.config;
        let step = self.lattice.step;
        let tag = |e: Error| match e {
            Error::Radicand { x, y, radicand } => Error::Instability {
                step,
                x,
                y,
                reason: format!("pseudopotential radicand {radicand:e}"),
            },
            Error::Instability { x, y, reason, .. } => Error::Instability { step, x, y, reason },
            other => other,
        };
        self.lattice
            .update_psi(self.temperature.t.as_slice(), &c.eos, &c.pseudopotential, self.psi_wall)
            .map_err(tag)?;
        self.lattice.update_forces(&c.pseudopotential, c.gravity);
        self.lattice.update_velocity().map_err(tag)?;

        conductivity_field(&self.lattice.rho, &self.lattice.geometry, &c.thermal, &mut self.kappa);
        let fixed = self.temperature.imposed.clone();
        let inputs = EnergyInputs {
            geometry: &self.lattice.geometry,
            rho: &self.lattice.rho,
            vel: &self.lattice.vel,
            kappa: &self.kappa,
            fixed: &fixed,
            params: &c.thermal,
            eos: &c.eos,
        };
        let op = inputs.prepare().map_err(tag)?;
        let dt = 1.0 / c.thermal.substeps as f64;
        for _ in 0..c.thermal.substeps {
            rk4_step(&mut self.temperature, dt, &mut self.rk, |t, out| {
                op.rhs(t, out);
                Ok(())
            })
            .map_err(tag)?;
        }
        if let Some((idx, t)) = self
            .temperature
            .t
            .as_slice()
            .iter()
            .enumerate()
            .find(|(_, t)| !(**t > 0.0) || !t.is_finite())
        {
            return Err(Error::Instability {
                step,
                x: idx % c.width,
                y: idx / c.width,
                reason: format!("temperature {t}"),
            });
        }

        self.lattice.collide_and_stream(&c.srt).map_err(tag)
    }

    pub fn frame(&self) -> Result<Frame> {
        let c = &self.config;
        let rho = crop_frame(&self.lattice.density_grid(), c)?;
        let t = crop_frame(&self.temperature.t, c)?;
        let vel = if c.record_velocity {
            let g = |v: &[f64]| -> Result<ScalarGrid2D> {
                crop_frame(&ScalarGrid2D::from_vec(c.width, c.height, v.to_vec())?, c)
            };
            Some((g(&self.lattice.vel.x)?, g(&self.lattice.vel.y)?))
        } else {
            None
        };
        Ok(Frame {
            rho,
            t,
            vel,
            step: self.lattice.step,
        })
    }
}

/// Liquid at the coexistence density and `T_sat` above the solid, heaters
/// fixed in the bottom solid row, rest populations with an upward kick on the
/// first fluid row.
pub fn initialize(config: &SimConfig) -> Result<(LatticeState, TemperatureField)> {
    config.validate()?;
    let coex = config.eos.coexistence_densities(config.t_sat)?;
    let geometry = config.geometry();
    let (w, h) = (config.width, config.height);
    let n = w * h;

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let fluid: Vec<usize> = (0..n).filter(|&i| !geometry.is_solid(i)).collect();
    let mut noise: Vec<f64> = fluid
        .iter()
        .map(|_| config.noise_amplitude * rng.random_range(-1.0..1.0))
        .collect();
    let mean = noise.iter().sum::<f64>() / noise.len().max(1) as f64;
    noise.iter_mut().for_each(|v| *v -= mean);

    let mut rho = vec![config.wall_density; n];
    for (&idx, dn) in fluid.iter().zip(&noise) {
        rho[idx] = coex.rho_l * (1.0 + dn);
    }
    let mut lattice = LatticeState::at_rest(geometry, rho)?;
    lattice.execution = config.execution;
    lattice.outlet_density = config.outlet_density;

    let mut kick = VectorField::zeros(w, h);
    let first_fluid = config.solid_rows;
    for x in 0..w {
        kick.y[first_fluid * w + x] = config.initial_kick;
    }
    lattice.set_equilibrium(&kick);

    let mut temperature = TemperatureField::new(ScalarGrid2D::filled(w, h, config.t_sat));
    let heaters = config.heater_mask();
    let bottom: Vec<f64> = heaters
        .iter()
        .map(|&on| if on { config.t_heater } else { config.t_sat })
        .collect();
    temperature.fix_row(0, &bottom)?;
    debug_assert!(lattice.geometry.cell_kind[..w].iter().all(|k| *k == CellKind::Solid));
    Ok((lattice, temperature))
}

/// A run that stopped early; `partial` holds the frames recorded so far.
#[derive(Debug)]
pub struct Aborted {
    pub partial: FrameSeries,
    pub error: Error,
}

impl std::fmt::Display for Aborted {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "run aborted after {} frames: {}",
            self.partial.frames.len(),
            self.error
        )
    }
}

impl std::error::Error for Aborted {}

pub fn run(config: &SimConfig) -> std::result::Result<FrameSeries, Box<Aborted>> {
    run_with_progress(config, |_, _| {})
}

/// Runs the campaign, calling `progress(frame_index, frame)` after every recorded frame.
pub fn run_with_progress(
    config: &SimConfig,
    mut progress: impl FnMut(usize, &Frame),
) -> std::result::Result<FrameSeries, Box<Aborted>> {
    let metadata = |steps: u64, complete: bool, failure: Option<String>| SimMetadata {
        config: config.clone(),
        solver: SolverRecord::from_config(config).unwrap_or_else(|_| SolverRecord {
            tau: config.srt.tau,
            forcing: String::new(),
            forcing_sigma: config.srt.forcing_sigma,
            kappa_model: String::new(),
            dt_lattice: 1.0,
            dt_thermal: 1.0,
            boundaries: String::new(),
            wall_density: config.wall_density,
            seed: config.seed,
            noise_amplitude: config.noise_amplitude,
            rho_l_coexistence: f64::NAN,
            rho_v_coexistence: f64::NAN,
        }),
        code_version: env!("CARGO_PKG_VERSION").to_string(),
        steps_completed: steps,
        complete,
        failure,
    };
    let abort = |frames: Vec<Frame>, steps: u64, error: Error| {
        Box::new(Aborted {
            partial: FrameSeries {
                frames,
                metadata: metadata(steps, false, Some(error.to_string())),
            },
            error,
        })
    };

    let mut sim = match Simulation::new(config.clone()) {
        Ok(s) => s,
        Err(e) => return Err(abort(Vec::new(), 0, e)),
    };
    let mut frames = Vec::with_capacity(config.frames);
    for k in 0..config.frames {
        for _ in 0..config.record_every {
            if let Err(e) = sim.step() {
                let steps = sim.lattice.step;
                return Err(abort(frames, steps, e));
            }
        }
        match sim.frame() {
            Ok(frame) => {
                progress(k, &frame);
                frames.push(frame);
            }
            Err(e) => {
                let steps = sim.lattice.step;
                return Err(abort(frames, steps, e));
            }
        }
    }
    Ok(FrameSeries {
        frames,
        metadata: metadata(sim.lattice.step, true, None),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn campaign_table() {
        let c = build_campaign(3).unwrap();
        assert_eq!((c.heater_count, c.t_heater), (1, 0.078));
        let c = build_campaign(8).unwrap();
        assert_eq!((c.heater_count, c.t_heater), (3, 0.076));
        let c = build_campaign(4).unwrap();
        assert_eq!((c.heater_count, c.t_heater), (2, 0.074));
        assert!(build_campaign(0).is_err());
        assert!(build_campaign(10).is_err());
    }

    #[test]
    fn heaters_are_symmetric_and_fit() {
        for id in [1, 4, 7] {
            let c = build_campaign(id).unwrap();
            c.validate().unwrap();
            let mask = c.heater_mask();
            let mirrored: Vec<bool> = mask.iter().rev().copied().collect();
            assert_eq!(mask, mirrored, "dataset {id}");
            assert_eq!(
                mask.iter().filter(|&&m| m).count(),
                c.heater_count * c.heater_length
            );
        }
    }

    #[test]
    fn crop_keeps_bottom_rows() {
        let c = SimConfig {
            width: 512,
            height: 256,
            ..SimConfig::default()
        };
        let full = ScalarGrid2D::from_fn(512, 256, |x, y| (x * 1000 + y) as f64);
        let cropped = crop_frame(&full, &c).unwrap();
        assert_eq!(cropped.dims(), (256, 256));
        let x0 = c.crop_origin();
        assert_eq!(x0, 128);
        for (x, y) in [(0, 0), (17, 3), (255, 255)] {
            assert_eq!(cropped.get(x, y), full.get(x + x0, y));
        }
        let square = SimConfig {
            width: 256,
            height: 256,
            ..SimConfig::default()
        };
        let id = ScalarGrid2D::from_fn(256, 256, |x, y| (x + 300 * y) as f64);
        assert_eq!(crop_frame(&id, &square).unwrap(), id);
        assert!(crop_frame(&id, &c).is_err());
    }

    #[test]
    fn initial_state() {
        let c = SimConfig {
            height: 64,
            crop_height: 64,
            ..build_campaign(2).unwrap()
        };
        let (lattice, temp) = initialize(&c).unwrap();
        let coex = saturation_coexistence();
        let fluid = lattice.geometry.fluid_count() as f64;
        let mass = lattice.total_fluid_mass();
        assert!(((mass - coex.rho_l * fluid) / mass).abs() < 1e-12);
        for (x, on) in c.heater_mask().into_iter().enumerate() {
            let expect = if on { c.t_heater } else { c.t_sat };
            assert_eq!(temp.t.get(x, 0), expect);
        }
        // everything above the solid is liquid
        assert!(lattice.rho[c.solid_rows * c.width..]
            .iter()
            .all(|&r| r > 3.79552));
    }

    #[test]
    fn config_validation() {
        let bad = SimConfig {
            t_heater: 0.06,
            ..SimConfig::default()
        };
        assert!(bad.validate().is_err());
        let bad = SimConfig {
            heater_count: 4,
            ..SimConfig::default()
        };
        assert!(bad.validate().is_err());
    }
}
