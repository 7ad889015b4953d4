//! Peng–Robinson equation of state in lattice units, the pseudopotential built
//! on top of it, and an equal-area (Maxwell) coexistence solver.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PengRobinsonParams {
    pub a: f64,
    pub b: f64,
    pub r: f64,
    pub omega: f64,
}

impl Default for PengRobinsonParams {
    fn default() -> Self {
        Self {
            a: 2.0 / 49.0,
            b: 2.0 / 21.0,
            r: 1.0,
            omega: 0.344,
        }
    }
}

/// Interaction constant of the pseudopotential; `g_int` stands in for the
/// product of reference constant and coupling strength in the potential.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PseudopotentialParams {
    pub c_s2: f64,
    pub g_int: f64,
}

impl Default for PseudopotentialParams {
    fn default() -> Self {
        Self {
            c_s2: 1.0 / 3.0,
            g_int: -1.0,
        }
    }
}

impl PseudopotentialParams {
    pub fn validate(&self) -> Result<()> {
        if self.c_s2 != 1.0 / 3.0 {
            return Err(Error::config("c_s2 must be 1/3 on a D2Q9 lattice"));
        }
        if self.g_int == 0.0 || !self.g_int.is_finite() {
            return Err(Error::config("g_int must be finite and non-zero"));
        }
        Ok(())
    }
}

impl PengRobinsonParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.a > 0.0 && self.b > 0.0 && self.r > 0.0) {
            return Err(Error::config("Peng-Robinson a, b, R must be positive"));
        }
        if !(self.omega > 0.0 && self.omega < 1.0) {
            return Err(Error::config("acentric factor must lie in (0, 1)"));
        }
        Ok(())
    }

    /// Critical temperature implied by `a`, `b` and `R`.
    pub fn critical_temperature(&self) -> f64 {
        0.0778 * self.a / (0.45724 * self.r * self.b)
    }

    pub fn critical_pressure(&self) -> f64 {
        0.0778 * self.r * self.critical_temperature() / self.b
    }

    pub fn kappa_omega(&self) -> f64 {
        0.37464 + 1.54226 * self.omega - 0.26992 * self.omega * self.omega
    }

    /// Largest admissible density (the covolume bound).
    pub fn max_density(&self) -> f64 {
        1.0 / self.b
    }

    #[inline]
    pub fn epsilon(&self, t: f64) -> f64 {
        let s = 1.0 + self.kappa_omega() * (1.0 - (t / self.critical_temperature()).sqrt());
        s * s
    }

    /// `d(epsilon)/dT`; negative for every `T > 0`.
    #[inline]
    pub fn epsilon_derivative(&self, t: f64) -> f64 {
        let tc = self.critical_temperature();
        let k = self.kappa_omega();
        let s = 1.0 + k * (1.0 - (t / tc).sqrt());
        -s * k / (t * tc).sqrt()
    }

    fn check_density(&self, rho: f64) -> Result<()> {
        if !(0.0..self.max_density()).contains(&rho) {
            return Err(Error::domain(format!(
                "density {rho} outside [0, 1/b = {})",
                self.max_density()
            )));
        }
        Ok(())
    }

    #[inline]
    pub(crate) fn pressure_unchecked(&self, rho: f64, t: f64) -> f64 {
        let b = self.b;
        rho * self.r * t / (1.0 - b * rho)
            - self.a * rho * rho * self.epsilon(t) / (1.0 + 2.0 * b * rho - b * b * rho * rho)
    }

    #[inline]
    pub(crate) fn dp_dt_unchecked(&self, rho: f64, t: f64) -> f64 {
        let b = self.b;
        rho * self.r / (1.0 - b * rho)
            - self.a * rho * rho * self.epsilon_derivative(t)
                / (1.0 + 2.0 * b * rho - b * b * rho * rho)
    }

    pub fn pressure(&self, rho: f64, t: f64) -> Result<f64> {
        self.check_density(rho)?;
        Ok(self.pressure_unchecked(rho, t))
    }

    /// Temperature derivative of pressure at constant density.
    pub fn dp_dt(&self, rho: f64, t: f64) -> Result<f64> {
        self.check_density(rho)?;
        Ok(self.dp_dt_unchecked(rho, t))
    }

    /// Density derivative of pressure at constant temperature.
    pub fn dp_drho(&self, rho: f64, t: f64) -> f64 {
        let b = self.b;
        let d = 1.0 + 2.0 * b * rho - b * b * rho * rho;
        let dd = 2.0 * b - 2.0 * b * b * rho;
        let one_m = 1.0 - b * rho;
        self.r * t / (one_m * one_m)
            - self.a * self.epsilon(t) * (2.0 * rho * d - rho * rho * dd) / (d * d)
    }

    /// Vapor and liquid densities in equilibrium at `t` by the equal-area rule.
    pub fn coexistence_densities(&self, t: f64) -> Result<Coexistence> {
        let tc = self.critical_temperature();
        if !(t > 0.0 && t < tc) {
            return Err(Error::domain(format!(
                "no two-phase solution at T = {t} (T_c = {tc})"
            )));
        }
        let (sp_v, sp_l) = self.spinodals(t)?;
        let p_hi = self.pressure_unchecked(sp_v, t);
        let p_lo = self.pressure_unchecked(sp_l, t).max(0.0);
        if p_hi <= p_lo {
            return Err(Error::domain(format!("degenerate isotherm at T = {t}")));
        }

        let roots = |p: f64| -> (f64, f64) {
            let rv = bisect(|r| self.pressure_unchecked(r, t) - p, 0.0, sp_v);
            let rl = bisect(
                |r| self.pressure_unchecked(r, t) - p,
                sp_l,
                self.max_density() * (1.0 - 1e-12),
            );
            (rv, rl)
        };
        // Residual of the equal-area rule written on density: the integral of
        // (P - p) / rho^2 between the two roots equals the integral over
        // specific volume.
        let area = |p: f64| -> f64 {
            let (rv, rl) = roots(p);
            adaptive_simpson(
                &|r| (self.pressure_unchecked(r, t) - p) / (r * r),
                rv,
                rl,
                1e-13,
            )
        };

        // The area decreases monotonically with the trial pressure.
        let (mut lo, mut hi) = (p_lo, p_hi);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if mid <= lo || mid >= hi {
                break;
            }
            if area(mid) > 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let p = 0.5 * (lo + hi);
        let (rho_v, rho_l) = roots(p);
        Ok(Coexistence {
            temperature: t,
            rho_v,
            rho_l,
            pressure: p,
            area_residual: area(p),
        })
    }

    /// Densities where `dP/drho = 0` on a subcritical isotherm: (vapor-side maximum, liquid-side minimum).
    pub fn spinodals(&self, t: f64) -> Result<(f64, f64)> {
        let n = 4000;
        let hi = self.max_density();
        let mut found = Vec::with_capacity(2);
        let mut prev_r = hi * 1e-6;
        let mut prev = self.dp_drho(prev_r, t);
        for i in 1..n {
            let r = hi * i as f64 / n as f64;
            let d = self.dp_drho(r, t);
            if prev.signum() != d.signum() {
                found.push(bisect(|x| self.dp_drho(x, t), prev_r, r));
            }
            prev = d;
            prev_r = r;
        }
        match found.as_slice() {
            [v, l] => Ok((*v, *l)),
            _ => Err(Error::domain(format!(
                "isotherm T = {t} has {} stationary points, expected 2",
                found.len()
            ))),
        }
    }

    /// Pseudopotential `sqrt(2 (P - rho c_s^2) / g_int)`.
    pub fn pseudopotential(&self, rho: f64, t: f64, pp: &PseudopotentialParams) -> Result<f64> {
        let p = self.pressure(rho, t)?;
        let radicand = 2.0 * (p - rho * pp.c_s2) / pp.g_int;
        if radicand < 0.0 || !radicand.is_finite() {
            return Err(Error::Domain(format!(
                "negative pseudopotential radicand {radicand:e} at rho = {rho}, T = {t}"
            )));
        }
        Ok(radicand.sqrt())
    }
}

/// Pseudopotential from a precomputed pressure.
pub fn pseudopotential_from_pressure(p: f64, rho: f64, pp: &PseudopotentialParams) -> Result<f64> {
    let radicand = 2.0 * (p - rho * pp.c_s2) / pp.g_int;
    if radicand < 0.0 || !radicand.is_finite() {
        return Err(Error::Domain(format!(
            "negative pseudopotential radicand {radicand:e}"
        )));
    }
    Ok(radicand.sqrt())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Coexistence {
    pub temperature: f64,
    pub rho_v: f64,
    pub rho_l: f64,
    pub pressure: f64,
    /// Equal-area integral evaluated at the converged pressure.
    pub area_residual: f64,
}

fn bisect(f: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64) -> f64 {
    let mut f_lo = f(lo);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        let fm = f(mid);
        if fm == 0.0 {
            return mid;
        }
        if fm.signum() == f_lo.signum() {
            lo = mid;
            f_lo = fm;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

pub(crate) fn adaptive_simpson(f: &dyn Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> f64 {
    fn recurse(
        f: &dyn Fn(f64) -> f64,
        a: f64,
        b: f64,
        fa: f64,
        fm: f64,
        fb: f64,
        whole: f64,
        tol: f64,
        depth: u32,
    ) -> f64 {
        let m = 0.5 * (a + b);
        let lm = 0.5 * (a + m);
        let rm = 0.5 * (m + b);
        let flm = f(lm);
        let frm = f(rm);
        let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
        let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
        let delta = left + right - whole;
        if depth == 0 || delta.abs() <= 15.0 * tol {
            return left + right + delta / 15.0;
        }
        recurse(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1)
            + recurse(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1)
    }
    let fa = f(a);
    let fb = f(b);
    let fm = f(0.5 * (a + b));
    let whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    recurse(f, a, b, fa, fm, fb, whole, tol, 48)
}
