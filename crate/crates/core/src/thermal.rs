//! Finite-difference energy equation driven by the lattice fields.
//!
//! `dT/dt = -v.grad(T) + div(kappa grad T)/(rho c_v) - T/(rho c_v) (dP/dT)_rho div(v)`
//! with second-order central differences in space and classical RK4 in time.
//! Solid cells conduct only. The conductive term is written in flux form with
//! arithmetic-mean face conductivities so that conduction conserves
//! `sum(rho c_v T)` exactly up to boundary fluxes.

use serde::{Deserialize, Serialize};

use crate::eos::PengRobinsonParams;
use crate::error::{Error, Result};
use crate::grid::ScalarGrid2D;
use crate::lbm::{Geometry, VectorField, VerticalBoundary};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThermalParams {
    /// Specific heat at constant volume of the fluid.
    pub c_v: f64,
    /// Fluid conductivity is `kappa_fluid_coeff * rho`.
    pub kappa_fluid_coeff: f64,
    pub kappa_solid: f64,
    /// Volumetric heat capacity of the solid (`rho_s c_s`).
    pub c_v_solid: f64,
    /// Thermal sub-steps per lattice step.
    pub substeps: u32,
}

pub const DEFAULT_C_V: f64 = 6.0;
pub const DEFAULT_DIFFUSIVITY: f64 = 0.05;

impl Default for ThermalParams {
    fn default() -> Self {
        Self::for_liquid_density(DEFAULT_C_V, DEFAULT_DIFFUSIVITY, 5.907899)
    }
}

impl ThermalParams {
    /// Fluid diffusivity `chi` everywhere; the solid copies the liquid's
    /// conductivity and heat capacity at density `rho_l`.
    pub fn for_liquid_density(c_v: f64, chi: f64, rho_l: f64) -> Self {
        let coeff = c_v * chi;
        Self {
            c_v,
            kappa_fluid_coeff: coeff,
            kappa_solid: coeff * rho_l,
            c_v_solid: c_v * rho_l,
            substeps: 1,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let all_positive = [self.c_v, self.kappa_fluid_coeff, self.kappa_solid, self.c_v_solid]
            .iter()
            .all(|v| *v > 0.0 && v.is_finite());
        if !all_positive || self.substeps == 0 {
            return Err(Error::config(
                "thermal parameters must be positive and substeps >= 1",
            ));
        }
        Ok(())
    }
}

/// Temperature with its fixed-value (Dirichlet) cells.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TemperatureField {
    pub t: ScalarGrid2D,
    pub dirichlet_rows: Vec<usize>,
    /// Imposed temperature for every cell of the Dirichlet rows.
    pub imposed: Vec<Option<f64>>,
}

impl TemperatureField {
    pub fn new(t: ScalarGrid2D) -> Self {
        let n = t.len();
        Self {
            t,
            dirichlet_rows: Vec::new(),
            imposed: vec![None; n],
        }
    }

    /// Fixes every cell of row `y` to `values[x]`.
    pub fn fix_row(&mut self, y: usize, values: &[f64]) -> Result<()> {
        let w = self.t.width();
        if values.len() != w || y >= self.t.height() {
            return Err(Error::shape("Dirichlet row does not fit the grid"));
        }
        for (x, &v) in values.iter().enumerate() {
            self.imposed[y * w + x] = Some(v);
            self.t.set(x, y, v);
        }
        if !self.dirichlet_rows.contains(&y) {
            self.dirichlet_rows.push(y);
        }
        Ok(())
    }

    pub fn reimpose(&mut self) {
        for (t, fixed) in self.t.as_mut_slice().iter_mut().zip(&self.imposed) {
            if let Some(v) = fixed {
                *t = *v;
            }
        }
    }

    pub fn is_fixed(&self, idx: usize) -> bool {
        self.imposed[idx].is_some()
    }
}

/// `kappa = coeff * rho` on fluid cells, `kappa_solid` on solid cells.
pub fn conductivity_field(rho: &[f64], geometry: &Geometry, params: &ThermalParams, out: &mut [f64]) {
    for (idx, k) in out.iter_mut().enumerate() {
        *k = if geometry.is_solid(idx) {
            params.kappa_solid
        } else {
            params.kappa_fluid_coeff * rho[idx]
        };
    }
}

/// Fields frozen during one thermal step.
pub struct EnergyInputs<'a> {
    pub geometry: &'a Geometry,
    pub rho: &'a [f64],
    pub vel: &'a VectorField,
    pub kappa: &'a [f64],
    pub fixed: &'a [Option<f64>],
    pub params: &'a ThermalParams,
    pub eos: &'a PengRobinsonParams,
}

impl EnergyInputs<'_> {
    /// Right-hand side of the energy equation at temperature `t`.
    pub fn rhs(&self, t: &[f64], out: &mut [f64]) -> Result<()> {
        self.prepare()?.rhs(t, out);
        Ok(())
    }

    /// Evaluates everything that does not depend on temperature.
    pub fn prepare(&self) -> Result<EnergyOperator> {
        let g = self.geometry;
        let (w, h) = (g.width, g.height);
        let n = w * h;
        let periodic_y = g.vertical == VerticalBoundary::Periodic;
        let (vx, vy) = (&self.vel.x, &self.vel.y);
        let mut op = EnergyOperator {
            width: w,
            height: h,
            periodic_y,
            mode: vec![CellMode::Fixed; n],
            inv_cap: vec![0.0; n],
            k_east: vec![0.0; n],
            k_north: vec![0.0; n],
            div_v: vec![0.0; n],
            vx: vx.clone(),
            vy: vy.clone(),
            p_rho: vec![0.0; n],
            p_eps: vec![0.0; n],
            eos: *self.eos,
        };
        for y in 0..h {
            let (ys, yn) = neighbor_rows(y, h, periodic_y);
            for x in 0..w {
                let idx = y * w + x;
                let xw = if x > 0 { x - 1 } else { w - 1 };
                let xe = if x + 1 < w { x + 1 } else { 0 };
                let (iw, ie, is, inn) = (y * w + xw, y * w + xe, ys * w + x, yn * w + x);
                op.k_east[idx] = 0.5 * (self.kappa[idx] + self.kappa[ie]);
                op.k_north[idx] = 0.5 * (self.kappa[idx] + self.kappa[inn]);
                if self.fixed[idx].is_some() {
                    continue;
                }
                if g.is_solid(idx) {
                    op.mode[idx] = CellMode::Solid;
                    op.inv_cap[idx] = 1.0 / self.params.c_v_solid;
                    continue;
                }
                let rho = self.rho[idx];
                let cap = rho * self.params.c_v;
                if !(cap > 0.0) || !cap.is_finite() {
                    return Err(Error::Instability {
                        step: 0,
                        x,
                        y,
                        reason: format!("rho c_v = {cap} in energy equation"),
                    });
                }
                op.mode[idx] = CellMode::Fluid;
                op.inv_cap[idx] = 1.0 / cap;
                op.div_v[idx] = 0.5 * ((vx[ie] - vx[iw]) + (vy[inn] - vy[is]));
                // (dP/dT)_rho = p_rho - p_eps * eps'(T)
                let b = self.eos.b;
                op.p_rho[idx] = rho * self.eos.r / (1.0 - b * rho);
                op.p_eps[idx] = self.eos.a * rho * rho / (1.0 + 2.0 * b * rho - b * b * rho * rho);
            }
        }
        Ok(op)
    }
}

fn neighbor_rows(y: usize, h: usize, periodic_y: bool) -> (usize, usize) {
    // At non-periodic edges the cell itself stands in, giving zero gradient
    // and zero flux.
    let ys = if y > 0 {
        y - 1
    } else if periodic_y {
        h - 1
    } else {
        y
    };
    let yn = if y + 1 < h {
        y + 1
    } else if periodic_y {
        0
    } else {
        y
    };
    (ys, yn)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum CellMode {
    Fixed,
    Solid,
    Fluid,
}

/// Energy equation with its temperature-independent coefficients evaluated.
#[derive(Debug, Clone)]
pub struct EnergyOperator {
    width: usize,
    height: usize,
    periodic_y: bool,
    mode: Vec<CellMode>,
    inv_cap: Vec<f64>,
    /// Face conductivities to the east and north neighbours.
    k_east: Vec<f64>,
    k_north: Vec<f64>,
    div_v: Vec<f64>,
    vx: Vec<f64>,
    vy: Vec<f64>,
    p_rho: Vec<f64>,
    p_eps: Vec<f64>,
    eos: PengRobinsonParams,
}

impl EnergyOperator {
    pub fn rhs(&self, t: &[f64], out: &mut [f64]) {
        let (w, h) = (self.width, self.height);
        let tc_eos = self.eos.critical_temperature();
        let k_omega = self.eos.kappa_omega();
        for y in 0..h {
            let (ys, yn) = neighbor_rows(y, h, self.periodic_y);
            for x in 0..w {
                let idx = y * w + x;
                let mode = self.mode[idx];
                if mode == CellMode::Fixed {
                    out[idx] = 0.0;
                    continue;
                }
                let xw = if x > 0 { x - 1 } else { w - 1 };
                let xe = if x + 1 < w { x + 1 } else { 0 };
                let (iw, ie, is, inn) = (y * w + xw, y * w + xe, ys * w + x, yn * w + x);
                let tc = t[idx];
                let flux = self.k_east[idx] * (t[ie] - tc)
                    + self.k_east[iw] * (t[iw] - tc)
                    + self.k_north[idx] * (t[inn] - tc)
                    + self.k_north[is] * (t[is] - tc);
                if mode == CellMode::Solid {
                    out[idx] = flux * self.inv_cap[idx];
                    continue;
                }
                let adv = 0.5 * (self.vx[idx] * (t[ie] - t[iw]) + self.vy[idx] * (t[inn] - t[is]));
                let s = 1.0 + k_omega * (1.0 - (tc / tc_eos).sqrt());
                let d_eps = -s * k_omega / (tc * tc_eos).sqrt();
                let dpdt = self.p_rho[idx] - self.p_eps[idx] * d_eps;
                out[idx] = -adv + (flux - tc * dpdt * self.div_v[idx]) * self.inv_cap[idx];
            }
        }
    }
}

/// Energy-equation right-hand side as a grid.
pub fn energy_rhs(
    t: &ScalarGrid2D,
    rho: &ScalarGrid2D,
    vel: &VectorField,
    geometry: &Geometry,
    params: &ThermalParams,
    eos: &PengRobinsonParams,
) -> Result<ScalarGrid2D> {
    if !t.same_shape(rho) || t.dims() != (geometry.width, geometry.height) {
        return Err(Error::shape("temperature, density and geometry differ"));
    }
    let mut kappa = vec![0.0; t.len()];
    conductivity_field(rho.as_slice(), geometry, params, &mut kappa);
    let fixed = vec![None; t.len()];
    let inputs = EnergyInputs {
        geometry,
        rho: rho.as_slice(),
        vel,
        kappa: &kappa,
        fixed: &fixed,
        params,
        eos,
    };
    let mut out = ScalarGrid2D::new(t.width(), t.height());
    inputs.rhs(t.as_slice(), out.as_mut_slice())?;
    Ok(out)
}

/// Scratch buffers for the four RK stages.
#[derive(Debug, Clone, Default)]
pub struct Rk4Workspace {
    k: [Vec<f64>; 4],
    stage: Vec<f64>,
}

impl Rk4Workspace {
    pub fn new(n: usize) -> Self {
        Self {
            k: [vec![0.0; n], vec![0.0; n], vec![0.0; n], vec![0.0; n]],
            stage: vec![0.0; n],
        }
    }

    fn ensure(&mut self, n: usize) {
        if self.stage.len() != n {
            *self = Self::new(n);
        }
    }
}

/// Classical four-stage Runge–Kutta step of `dT/dt = rhs(T)`; Dirichlet cells
/// are restored afterwards.
pub fn rk4_step<F>(
    field: &mut TemperatureField,
    dt: f64,
    ws: &mut Rk4Workspace,
    mut rhs: F,
) -> Result<()>
where
    F: FnMut(&[f64], &mut [f64]) -> Result<()>,
{
    if !(dt > 0.0) {
        return Err(Error::config(format!("time step must be positive, got {dt}")));
    }
    let n = field.t.len();
    ws.ensure(n);
    let Rk4Workspace { k, stage } = ws;
    let t0 = field.t.as_slice();

    rhs(t0, &mut k[0])?;
    for i in 0..n {
        stage[i] = t0[i] + 0.5 * dt * k[0][i];
    }
    rhs(stage, &mut k[1])?;
    for i in 0..n {
        stage[i] = t0[i] + 0.5 * dt * k[1][i];
    }
    rhs(stage, &mut k[2])?;
    for i in 0..n {
        stage[i] = t0[i] + dt * k[2][i];
    }
    rhs(stage, &mut k[3])?;

    let t = field.t.as_mut_slice();
    for i in 0..n {
        t[i] += dt / 6.0 * (k[0][i] + 2.0 * k[1][i] + 2.0 * k[2][i] + k[3][i]);
    }
    field.reimpose();
    Ok(())
}
