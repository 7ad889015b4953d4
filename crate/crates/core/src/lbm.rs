//! D2Q9 single-relaxation-time pseudopotential lattice Boltzmann solver.
//!
//! Populations are stored cell-major (`f[idx * 9 + i]`) so that one row of the
//! domain is a contiguous slice; streaming is a fused pull (gather) that
//! evaluates the collision of each source cell on the fly. Every output cell
//! depends only on the previous state, so the row-parallel and sequential
//! paths produce identical results.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::eos::{PengRobinsonParams, PseudopotentialParams};
use crate::error::{Error, Result};
use crate::grid::ScalarGrid2D;

pub const Q: usize = 9;
pub const EX: [i32; Q] = [0, 1, 0, -1, 0, 1, -1, -1, 1];
pub const EY: [i32; Q] = [0, 0, 1, 0, -1, 1, 1, -1, -1];
pub const WEIGHTS: [f64; Q] = [
    4.0 / 9.0,
    1.0 / 9.0,
    1.0 / 9.0,
    1.0 / 9.0,
    1.0 / 9.0,
    1.0 / 36.0,
    1.0 / 36.0,
    1.0 / 36.0,
    1.0 / 36.0,
];
pub const OPPOSITE: [usize; Q] = [0, 3, 4, 1, 2, 7, 8, 5, 6];
/// Pseudopotential interaction weights: 1/3 on axes, 1/12 on diagonals.
pub const INTERACTION_WEIGHTS: [f64; Q] = [
    0.0,
    1.0 / 3.0,
    1.0 / 3.0,
    1.0 / 3.0,
    1.0 / 3.0,
    1.0 / 12.0,
    1.0 / 12.0,
    1.0 / 12.0,
    1.0 / 12.0,
];

/// Velocity magnitude above which the second-order equilibrium is unreliable.
pub const VELOCITY_CAP: f64 = 0.3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CellKind {
    Fluid,
    Solid,
}

/// Treatment of the bottom/top edges. Left/right are always periodic.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VerticalBoundary {
    Periodic,
    /// Bounce-back below row 0, zero-gradient outflow above the top row.
    WallOutflow,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Execution {
    Sequential,
    Parallel,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SrtParams {
    pub tau: f64,
    /// Weight of the pseudopotential correction to the forcing velocity; zero
    /// gives the plain Guo scheme.
    pub forcing_sigma: f64,
}

impl Default for SrtParams {
    fn default() -> Self {
        Self {
            tau: 1.0,
            forcing_sigma: DEFAULT_FORCING_SIGMA,
        }
    }
}

/// Calibrated so a flat layer at `0.9 T_c` settles near the equal-area densities.
pub const DEFAULT_FORCING_SIGMA: f64 = 0.11;

impl SrtParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.tau > 0.5) {
            return Err(Error::config(format!(
                "tau must exceed 0.5 for positive viscosity, got {}",
                self.tau
            )));
        }
        if !self.forcing_sigma.is_finite() || self.forcing_sigma < 0.0 {
            return Err(Error::config("forcing_sigma must be finite and >= 0"));
        }
        Ok(())
    }

    pub fn viscosity(&self) -> f64 {
        (self.tau - 0.5) / 3.0
    }
}

/// Second-order D2Q9 equilibrium.
#[inline]
pub fn equilibrium(rho: f64, ux: f64, uy: f64) -> [f64; Q] {
    let usq = 1.5 * (ux * ux + uy * uy);
    let mut feq = [0.0; Q];
    for i in 0..Q {
        let eu = EX[i] as f64 * ux + EY[i] as f64 * uy;
        feq[i] = WEIGHTS[i] * rho * (1.0 + 3.0 * eu + 4.5 * eu * eu - usq);
    }
    if (ux * ux + uy * uy) > VELOCITY_CAP * VELOCITY_CAP {
        log::warn!("equilibrium velocity ({ux:.4}, {uy:.4}) exceeds stability cap");
    }
    feq
}

#[derive(Debug, Clone, PartialEq)]
pub struct VectorField {
    pub width: usize,
    pub height: usize,
    pub x: Vec<f64>,
    pub y: Vec<f64>,
}

impl VectorField {
    pub fn zeros(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            x: vec![0.0; width * height],
            y: vec![0.0; width * height],
        }
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> (f64, f64) {
        let i = y * self.width + x;
        (self.x[i], self.y[i])
    }

    pub fn add(&mut self, other: &VectorField) {
        for (a, b) in self.x.iter_mut().zip(&other.x) {
            *a += b;
        }
        for (a, b) in self.y.iter_mut().zip(&other.y) {
            *a += b;
        }
    }

    pub fn total(&self) -> (f64, f64) {
        (self.x.iter().sum(), self.y.iter().sum())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Geometry {
    pub width: usize,
    pub height: usize,
    pub cell_kind: Vec<CellKind>,
    pub vertical: VerticalBoundary,
}

impl Geometry {
    pub fn periodic(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            cell_kind: vec![CellKind::Fluid; width * height],
            vertical: VerticalBoundary::Periodic,
        }
    }

    /// `solid_rows` solid layers at the bottom, outflow at the top.
    pub fn pool(width: usize, height: usize, solid_rows: usize) -> Self {
        let mut cell_kind = vec![CellKind::Fluid; width * height];
        for c in cell_kind.iter_mut().take(solid_rows * width) {
            *c = CellKind::Solid;
        }
        Self {
            width,
            height,
            cell_kind,
            vertical: VerticalBoundary::WallOutflow,
        }
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.width * self.height
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    #[inline]
    pub fn is_solid(&self, idx: usize) -> bool {
        self.cell_kind[idx] == CellKind::Solid
    }

    pub fn fluid_count(&self) -> usize {
        self.cell_kind
            .iter()
            .filter(|&&k| k == CellKind::Fluid)
            .count()
    }

    pub fn solid_mask(&self) -> Vec<bool> {
        self.cell_kind.iter().map(|&k| k == CellKind::Solid).collect()
    }

    #[inline]
    fn wrap_x(&self, x: usize, dx: i32) -> usize {
        let w = self.width as i64;
        ((x as i64 + dx as i64).rem_euclid(w)) as usize
    }

    /// Row of the neighbor at `y + dy`, or `None` outside a non-periodic edge.
    #[inline]
    fn shift_y(&self, y: usize, dy: i32) -> Option<usize> {
        let yy = y as i64 + dy as i64;
        let h = self.height as i64;
        match self.vertical {
            VerticalBoundary::Periodic => Some(yy.rem_euclid(h) as usize),
            VerticalBoundary::WallOutflow => (0..h).contains(&yy).then_some(yy as usize),
        }
    }
}

/// Per-cell pseudopotential; solid cells carry the wall value.
pub fn pseudopotential_field(
    rho: &[f64],
    temperature: &[f64],
    geometry: &Geometry,
    eos: &PengRobinsonParams,
    pp: &PseudopotentialParams,
    psi_wall: f64,
    psi: &mut [f64],
) -> Result<()> {
    let w = geometry.width;
    for idx in 0..geometry.len() {
        if geometry.is_solid(idx) {
            psi[idx] = psi_wall;
            continue;
        }
        let p = eos.pressure_unchecked(rho[idx], temperature[idx]);
        let radicand = 2.0 * (p - rho[idx] * pp.c_s2) / pp.g_int;
        if !(radicand >= 0.0) || !radicand.is_finite() {
            return Err(Error::Radicand {
                x: idx % w,
                y: idx / w,
                radicand,
            });
        }
        psi[idx] = radicand.sqrt();
    }
    Ok(())
}

/// `F(x) = -G psi(x) sum_i w_i psi(x + e_i) e_i` on fluid cells.
pub fn interaction_force_from_psi(
    psi: &[f64],
    geometry: &Geometry,
    pp: &PseudopotentialParams,
    out: &mut VectorField,
) {
    let (w, h) = (geometry.width, geometry.height);
    for y in 0..h {
        for x in 0..w {
            let idx = y * w + x;
            if geometry.is_solid(idx) {
                out.x[idx] = 0.0;
                out.y[idx] = 0.0;
                continue;
            }
            let here = psi[idx];
            let (mut sx, mut sy) = (0.0, 0.0);
            for i in 1..Q {
                let nx = geometry.wrap_x(x, EX[i]);
                let neighbor = match geometry.shift_y(y, EY[i]) {
                    Some(ny) => psi[ny * w + nx],
                    // zero-gradient above the outflow, mirror of self below
                    None => here,
                };
                let wn = INTERACTION_WEIGHTS[i] * neighbor;
                sx += wn * EX[i] as f64;
                sy += wn * EY[i] as f64;
            }
            out.x[idx] = -pp.g_int * here * sx;
            out.y[idx] = -pp.g_int * here * sy;
        }
    }
}

/// Interaction force evaluated from density and temperature fields.
pub fn interaction_force(
    rho: &ScalarGrid2D,
    temperature: &ScalarGrid2D,
    geometry: &Geometry,
    eos: &PengRobinsonParams,
    pp: &PseudopotentialParams,
    psi_wall: f64,
) -> Result<VectorField> {
    if !rho.same_shape(temperature) || rho.dims() != (geometry.width, geometry.height) {
        return Err(Error::shape("density, temperature and geometry differ"));
    }
    let mut psi = vec![0.0; geometry.len()];
    pseudopotential_field(
        rho.as_slice(),
        temperature.as_slice(),
        geometry,
        eos,
        pp,
        psi_wall,
        &mut psi,
    )?;
    let mut out = VectorField::zeros(geometry.width, geometry.height);
    interaction_force_from_psi(&psi, geometry, pp, &mut out);
    Ok(out)
}

/// Buoyancy `F_y = -(rho - rho_ref) g` on fluid cells.
pub fn body_force(rho: &ScalarGrid2D, rho_ref: f64, gravity: f64, geometry: &Geometry) -> VectorField {
    let mut out = VectorField::zeros(rho.width(), rho.height());
    for (idx, &r) in rho.as_slice().iter().enumerate() {
        if !geometry.is_solid(idx) {
            out.y[idx] = -(r - rho_ref) * gravity;
        }
    }
    out
}

/// Mean density over fluid cells.
pub fn mean_fluid_density(rho: &[f64], geometry: &Geometry) -> f64 {
    let (mut sum, mut n) = (0.0, 0usize);
    for (idx, &r) in rho.iter().enumerate() {
        if !geometry.is_solid(idx) {
            sum += r;
            n += 1;
        }
    }
    if n == 0 {
        0.0
    } else {
        sum / n as f64
    }
}

#[derive(Debug, Clone)]
pub struct LatticeState {
    pub geometry: Geometry,
    f: Vec<f64>,
    f_next: Vec<f64>,
    /// Density; solid cells hold the wall density.
    pub rho: Vec<f64>,
    rho_next: Vec<f64>,
    /// Bare first moment `sum_i f_i e_i`.
    jx: Vec<f64>,
    jy: Vec<f64>,
    /// Force-shifted macroscopic velocity.
    pub vel: VectorField,
    pub force: VectorField,
    pub psi: Vec<f64>,
    pub step: u64,
    pub execution: Execution,
    /// Density held on the top row of a wall/outflow domain; `None` leaves
    /// the outflow fully zero-gradient.
    pub outlet_density: Option<f64>,
}

impl LatticeState {
    /// Rest equilibrium at the given densities (solid cells get `rho` but no populations).
    pub fn at_rest(geometry: Geometry, rho: Vec<f64>) -> Result<Self> {
        let n = geometry.len();
        if rho.len() != n {
            return Err(Error::shape("density field does not match geometry"));
        }
        let mut f = vec![0.0; n * Q];
        for idx in 0..n {
            if geometry.is_solid(idx) {
                continue;
            }
            if !(rho[idx] > 0.0) {
                return Err(Error::domain(format!(
                    "non-positive initial density at cell {idx}"
                )));
            }
            for i in 0..Q {
                f[idx * Q + i] = WEIGHTS[i] * rho[idx];
            }
        }
        let (w, h) = (geometry.width, geometry.height);
        let mut state = Self {
            geometry,
            f_next: f.clone(),
            f,
            rho_next: rho.clone(),
            rho,
            jx: vec![0.0; n],
            jy: vec![0.0; n],
            vel: VectorField::zeros(w, h),
            force: VectorField::zeros(w, h),
            psi: vec![0.0; n],
            step: 0,
            execution: Execution::Sequential,
            outlet_density: None,
        };
        state.recompute_moments();
        Ok(state)
    }

    /// Re-initializes fluid cells to `f_eq(rho, u)` for the given velocity field.
    pub fn set_equilibrium(&mut self, vel: &VectorField) {
        for idx in 0..self.geometry.len() {
            if self.geometry.is_solid(idx) {
                continue;
            }
            let feq = equilibrium(self.rho[idx], vel.x[idx], vel.y[idx]);
            self.f[idx * Q..idx * Q + Q].copy_from_slice(&feq);
        }
        self.recompute_moments();
    }

    pub fn width(&self) -> usize {
        self.geometry.width
    }

    pub fn height(&self) -> usize {
        self.geometry.height
    }

    pub fn populations(&self) -> &[f64] {
        &self.f
    }

    pub fn populations_mut(&mut self) -> &mut [f64] {
        &mut self.f
    }

    /// Recomputes density and bare momentum from the current populations.
    pub fn recompute_moments(&mut self) {
        for idx in 0..self.geometry.len() {
            if self.geometry.is_solid(idx) {
                self.jx[idx] = 0.0;
                self.jy[idx] = 0.0;
                continue;
            }
            let fc = &self.f[idx * Q..idx * Q + Q];
            let (r, jx, jy) = moments(fc);
            self.rho[idx] = r;
            self.jx[idx] = jx;
            self.jy[idx] = jy;
        }
    }

    pub fn total_fluid_mass(&self) -> f64 {
        self.rho
            .iter()
            .enumerate()
            .filter(|(i, _)| !self.geometry.is_solid(*i))
            .map(|(_, r)| r)
            .sum()
    }

    pub fn density_grid(&self) -> ScalarGrid2D {
        ScalarGrid2D::from_vec(self.width(), self.height(), self.rho.clone())
            .expect("state dims are consistent")
    }

    pub fn set_force(&mut self, force: &VectorField) {
        self.force.x.copy_from_slice(&force.x);
        self.force.y.copy_from_slice(&force.y);
    }

    /// Pseudopotential from the current density and `temperature`.
    pub fn update_psi(
        &mut self,
        temperature: &[f64],
        eos: &PengRobinsonParams,
        pp: &PseudopotentialParams,
        psi_wall: f64,
    ) -> Result<()> {
        let mut psi = std::mem::take(&mut self.psi);
        let r = pseudopotential_field(
            &self.rho,
            temperature,
            &self.geometry,
            eos,
            pp,
            psi_wall,
            &mut psi,
        );
        self.psi = psi;
        r
    }

    /// Total force: pseudopotential interaction plus buoyancy about the mean
    /// fluid density. Requires [`update_psi`](Self::update_psi) first.
    pub fn update_forces(&mut self, pp: &PseudopotentialParams, gravity: f64) {
        let mut force = std::mem::replace(&mut self.force, VectorField::zeros(0, 0));
        interaction_force_from_psi(&self.psi, &self.geometry, pp, &mut force);
        if gravity != 0.0 {
            let rho_ref = mean_fluid_density(&self.rho, &self.geometry);
            for idx in 0..self.geometry.len() {
                if !self.geometry.is_solid(idx) {
                    force.y[idx] -= (self.rho[idx] - rho_ref) * gravity;
                }
            }
        }
        self.force = force;
    }

    /// Macroscopic velocity `(sum f e + F/2) / rho` from the stored force.
    pub fn update_velocity(&mut self) -> Result<()> {
        let w = self.width();
        for idx in 0..self.geometry.len() {
            if self.geometry.is_solid(idx) {
                self.vel.x[idx] = 0.0;
                self.vel.y[idx] = 0.0;
                continue;
            }
            let r = self.rho[idx];
            if !(r > 0.0) || !r.is_finite() {
                return Err(Error::Instability {
                    step: self.step,
                    x: idx % w,
                    y: idx / w,
                    reason: format!("density {r}"),
                });
            }
            self.vel.x[idx] = (self.jx[idx] + 0.5 * self.force.x[idx]) / r;
            self.vel.y[idx] = (self.jy[idx] + 0.5 * self.force.y[idx]) / r;
        }
        Ok(())
    }

    /// One SRT collision with forcing followed by streaming, using the stored
    /// force, velocity and pseudopotential. Updates density and momentum.
    pub fn collide_and_stream(&mut self, srt: &SrtParams) -> Result<()> {
        self.collide(srt);
        self.stream()
    }

    /// In-place SRT collision with the forcing term on fluid cells.
    pub fn collide(&mut self, srt: &SrtParams) {
        let w = self.geometry.width;
        let omega = 1.0 / srt.tau;
        let force_pref = 1.0 - 0.5 * omega;
        let sigma_coef = srt.forcing_sigma / (srt.tau - 0.5);
        let ctx = CollisionContext {
            geometry: &self.geometry,
            rho: &self.rho,
            vel: &self.vel,
            force: &self.force,
            psi: &self.psi,
            omega,
            force_pref,
            sigma_coef,
        };
        match self.execution {
            Execution::Sequential => self
                .f
                .chunks_mut(w * Q)
                .enumerate()
                .for_each(|(y, row)| ctx.collide_row(y, row)),
            Execution::Parallel => self
                .f
                .par_chunks_mut(w * Q)
                .enumerate()
                .for_each(|(y, row)| ctx.collide_row(y, row)),
        }
    }

    /// Pull streaming of the post-collision populations with halfway
    /// bounce-back off solid cells and zero-gradient outflow at the top.
    pub fn stream(&mut self) -> Result<()> {
        let w = self.geometry.width;
        let step = self.step;
        let mut f_next = std::mem::take(&mut self.f_next);
        let mut rho = std::mem::take(&mut self.rho_next);
        let mut jx = std::mem::take(&mut self.jx);
        let mut jy = std::mem::take(&mut self.jy);
        let (geometry, f) = (&self.geometry, &self.f);

        let failures: Vec<(usize, usize, String)> = match self.execution {
            Execution::Sequential => f_next
                .chunks_mut(w * Q)
                .zip(rho.chunks_mut(w))
                .zip(jx.chunks_mut(w))
                .zip(jy.chunks_mut(w))
                .enumerate()
                .filter_map(|(y, (((fr, rr), jxr), jyr))| pull_row(geometry, f, y, fr, rr, jxr, jyr))
                .collect(),
            Execution::Parallel => f_next
                .par_chunks_mut(w * Q)
                .zip(rho.par_chunks_mut(w))
                .zip(jx.par_chunks_mut(w))
                .zip(jy.par_chunks_mut(w))
                .enumerate()
                .filter_map(|(y, (((fr, rr), jxr), jyr))| pull_row(geometry, f, y, fr, rr, jxr, jyr))
                .collect(),
        };

        // solid cells keep the wall density
        for (idx, r) in rho.iter_mut().enumerate() {
            if self.geometry.is_solid(idx) {
                *r = self.rho[idx];
            }
        }
        self.rho_next = std::mem::replace(&mut self.rho, rho);
        self.jx = jx;
        self.jy = jy;
        std::mem::swap(&mut self.f, &mut f_next);
        self.f_next = f_next;
        self.step += 1;
        if let Some(rho_out) = self.outlet_density {
            if self.geometry.vertical == VerticalBoundary::WallOutflow {
                self.anchor_outlet(rho_out);
            }
        }

        if let Some((x, y, reason)) = failures.into_iter().next() {
            return Err(Error::Instability { step, x, y, reason });
        }
        Ok(())
    }

    /// Top row set to `f_eq(rho_out, u_b) + (f_b - f_eq(rho_b, u_b))` from
    /// the row below: open to flow, pinned in pressure.
    fn anchor_outlet(&mut self, rho_out: f64) {
        let (w, h) = (self.width(), self.height());
        if h < 2 {
            return;
        }
        let (top, below) = ((h - 1) * w, (h - 2) * w);
        for x in 0..w {
            let (it, ib) = (top + x, below + x);
            if self.geometry.is_solid(it) || self.geometry.is_solid(ib) {
                continue;
            }
            let rb = self.rho[ib];
            if !(rb > 0.0) {
                continue;
            }
            let (ux, uy) = (self.jx[ib] / rb, self.jy[ib] / rb);
            let feq_b = equilibrium(rb, ux, uy);
            let feq_o = equilibrium(rho_out, ux, uy);
            for i in 0..Q {
                self.f[it * Q + i] = feq_o[i] + self.f[ib * Q + i] - feq_b[i];
            }
            self.rho[it] = rho_out;
            self.jx[it] = rho_out * ux;
            self.jy[it] = rho_out * uy;
        }
    }

    /// Density and force-shifted velocity grids.
    pub fn macroscopic(&self) -> Result<(ScalarGrid2D, VectorField)> {
        let (w, h) = (self.width(), self.height());
        let mut vel = VectorField::zeros(w, h);
        let mut rho = self.density_grid();
        for idx in 0..self.geometry.len() {
            if self.geometry.is_solid(idx) {
                continue;
            }
            let (r, jx, jy) = moments(&self.f[idx * Q..idx * Q + Q]);
            rho.as_mut_slice()[idx] = r;
            if !(r > 0.0) || !r.is_finite() {
                return Err(Error::Instability {
                    step: self.step,
                    x: idx % w,
                    y: idx / w,
                    reason: format!("density {r}"),
                });
            }
            vel.x[idx] = (jx + 0.5 * self.force.x[idx]) / r;
            vel.y[idx] = (jy + 0.5 * self.force.y[idx]) / r;
        }
        Ok((rho, vel))
    }
}

#[inline]
fn moments(fc: &[f64]) -> (f64, f64, f64) {
    let r = fc.iter().sum::<f64>();
    let jx = fc[1] - fc[3] + fc[5] - fc[6] - fc[7] + fc[8];
    let jy = fc[2] - fc[4] + fc[5] + fc[6] - fc[7] - fc[8];
    (r, jx, jy)
}

struct CollisionContext<'a> {
    geometry: &'a Geometry,
    rho: &'a [f64],
    vel: &'a VectorField,
    force: &'a VectorField,
    psi: &'a [f64],
    omega: f64,
    force_pref: f64,
    sigma_coef: f64,
}

impl CollisionContext<'_> {
    fn collide_row(&self, y: usize, row: &mut [f64]) {
        let w = self.geometry.width;
        for (x, fc) in row.chunks_exact_mut(Q).enumerate() {
            let idx = y * w + x;
            if self.geometry.is_solid(idx) {
                continue;
            }
            let rho = self.rho[idx];
            let (ux, uy) = (self.vel.x[idx], self.vel.y[idx]);
            let (fx, fy) = (self.force.x[idx], self.force.y[idx]);
            // forcing velocity u' = u + sigma F / ((tau - 1/2) psi^2)
            let (mut vx, mut vy) = (ux, uy);
            if self.sigma_coef != 0.0 {
                let psi2 = self.psi[idx] * self.psi[idx];
                if psi2 > 0.0 {
                    vx += self.sigma_coef * fx / psi2;
                    vy += self.sigma_coef * fy / psi2;
                }
            }
            let usq = 1.5 * (ux * ux + uy * uy);
            for i in 0..Q {
                let ex = EX[i] as f64;
                let ey = EY[i] as f64;
                let eu = ex * ux + ey * uy;
                let feq = WEIGHTS[i] * rho * (1.0 + 3.0 * eu + 4.5 * eu * eu - usq);
                let ev = ex * vx + ey * vy;
                let ef = ex * fx + ey * fy;
                let src = WEIGHTS[i] * (3.0 * ((ex - vx) * fx + (ey - vy) * fy) + 9.0 * ev * ef);
                fc[i] += -self.omega * (fc[i] - feq) + self.force_pref * src;
            }
        }
    }
}

fn pull_row(
    g: &Geometry,
    f: &[f64],
    y: usize,
    f_row: &mut [f64],
    rho_row: &mut [f64],
    jx_row: &mut [f64],
    jy_row: &mut [f64],
) -> Option<(usize, usize, String)> {
    let w = g.width;
    // source row per direction; `None` means reflect off the bottom edge
    let mut src_row = [None; Q];
    for i in 0..Q {
        src_row[i] = match g.shift_y(y, -EY[i]) {
            Some(sy) => Some(sy),
            None if EY[i] > 0 => None,
            // outflow: copy what the row below receives from this row
            None => Some(y),
        };
    }
    let mut failure = None;
    for x in 0..w {
        let idx = y * w + x;
        let out = &mut f_row[x * Q..x * Q + Q];
        if g.is_solid(idx) {
            out.fill(0.0);
            jx_row[x] = 0.0;
            jy_row[x] = 0.0;
            continue;
        }
        for i in 0..Q {
            out[i] = match src_row[i] {
                Some(sy) => {
                    let sx = if x > 0 && x + 1 < w {
                        (x as i64 - EX[i] as i64) as usize
                    } else {
                        g.wrap_x(x, -EX[i])
                    };
                    let src = sy * w + sx;
                    if g.is_solid(src) {
                        f[idx * Q + OPPOSITE[i]]
                    } else {
                        f[src * Q + i]
                    }
                }
                None => f[idx * Q + OPPOSITE[i]],
            };
        }
        let (r, jx, jy) = moments(out);
        if (!(r > 0.0) || !r.is_finite()) && failure.is_none() {
            failure = Some((x, y, format!("density {r} after streaming")));
        }
        rho_row[x] = r;
        jx_row[x] = jx;
        jy_row[x] = jy;
    }
    failure
}
