//! Lattice/physical unit conversion by corresponding states, and Jakob-number
//! normalization of temperature maps.
//!
//! Every quantity `x` with a critical or characteristic reference `x_c`
//! satisfies `x / x_c = x_lb / x_c,lb`, so each kind converts by a single
//! fixed ratio. Heat flux has no reference of its own and is composed from
//! density, temperature, velocity and a tabulated specific-heat ratio.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::ScalarGrid2D;

/// A lattice value and its physical counterpart. The ratio is computed once
/// at construction and never recomputed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawPair", into = "RawPair")]
pub struct ScalePair {
    lattice: f64,
    physical: f64,
    ratio: f64,
}

#[derive(Serialize, Deserialize)]
struct RawPair {
    lattice: f64,
    physical: f64,
}

impl TryFrom<RawPair> for ScalePair {
    type Error = Error;

    fn try_from(raw: RawPair) -> Result<Self> {
        ScalePair::new(raw.lattice, raw.physical)
    }
}

impl From<ScalePair> for RawPair {
    fn from(p: ScalePair) -> Self {
        RawPair {
            lattice: p.lattice,
            physical: p.physical,
        }
    }
}

impl ScalePair {
    pub fn new(lattice: f64, physical: f64) -> Result<Self> {
        if !(lattice > 0.0 && lattice.is_finite()) {
            return Err(Error::config(format!(
                "lattice reference value must be positive, got {lattice}"
            )));
        }
        let ratio = physical / lattice;
        if !(ratio.is_finite() && ratio > 0.0) {
            return Err(Error::config(format!(
                "physical/lattice ratio {physical}/{lattice} is not finite and positive"
            )));
        }
        Ok(Self {
            lattice,
            physical,
            ratio,
        })
    }

    pub fn lattice(&self) -> f64 {
        self.lattice
    }

    pub fn physical(&self) -> f64 {
        self.physical
    }

    /// Physical units per lattice unit.
    pub fn ratio(&self) -> f64 {
        self.ratio
    }
}

/// Reference constants in lattice and physical units.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LatticeConstants {
    /// Critical temperature (tu, K).
    pub t_c: ScalePair,
    /// Critical density (mu/lu^3, kg/m^3).
    pub rho_c: ScalePair,
    /// Characteristic velocity (lu/ts, m/s).
    pub u_0: ScalePair,
    /// Characteristic length (lu, m).
    pub l_0: ScalePair,
    /// Characteristic time (ts, s).
    pub t_0: ScalePair,
    /// Gravitational acceleration (lu/ts^2, m/s^2).
    pub g: ScalePair,
    /// Surface tension (lattice, N/m).
    pub sigma: ScalePair,
}

impl Default for LatticeConstants {
    fn default() -> Self {
        let p = |l, ph| ScalePair::new(l, ph).expect("default constants are valid");
        Self {
            t_c: p(0.0729, 647.17),
            rho_c: p(2.657304, 322.0),
            u_0: p(0.02627, 0.1645),
            l_0: p(23.00421, 2.762e-3),
            t_0: p(875.6753, 0.01679),
            g: p(3e-5, 9.81),
            sigma: p(0.09716, 74.8e-3),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QuantityKind {
    Temperature,
    Density,
    Length,
    Time,
    Velocity,
    Acceleration,
    HeatFlux,
}

impl QuantityKind {
    pub const ALL: [QuantityKind; 7] = [
        QuantityKind::Temperature,
        QuantityKind::Density,
        QuantityKind::Length,
        QuantityKind::Time,
        QuantityKind::Velocity,
        QuantityKind::Acceleration,
        QuantityKind::HeatFlux,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            QuantityKind::Temperature => "temperature",
            QuantityKind::Density => "density",
            QuantityKind::Length => "length",
            QuantityKind::Time => "time",
            QuantityKind::Velocity => "velocity",
            QuantityKind::Acceleration => "acceleration",
            QuantityKind::HeatFlux => "heat_flux",
        }
    }
}

impl fmt::Display for QuantityKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for QuantityKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        QuantityKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::config(format!("unknown quantity kind `{s}`")))
    }
}

/// Converter between lattice and physical units.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UnitSystem {
    pub constants: LatticeConstants,
    /// Specific heat at constant volume: lattice value used by the energy
    /// equation and the tabulated physical value (J/(kg K)) at saturation.
    pub heat_capacity: ScalePair,
}

/// Tabulated `c_v` of saturated liquid water near 582 K, J/(kg K).
pub const SATURATED_LIQUID_CV: f64 = 3.05e3;

impl UnitSystem {
    pub fn new(constants: LatticeConstants, c_v_lattice: f64, c_v_physical: f64) -> Result<Self> {
        Ok(Self {
            constants,
            heat_capacity: ScalePair::new(c_v_lattice, c_v_physical)?,
        })
    }

    pub fn with_lattice_cv(c_v_lattice: f64) -> Result<Self> {
        Self::new(LatticeConstants::default(), c_v_lattice, SATURATED_LIQUID_CV)
    }

    /// Physical units per lattice unit for `kind`.
    pub fn ratio(&self, kind: QuantityKind) -> f64 {
        let c = &self.constants;
        match kind {
            QuantityKind::Temperature => c.t_c.ratio(),
            QuantityKind::Density => c.rho_c.ratio(),
            QuantityKind::Length => c.l_0.ratio(),
            QuantityKind::Time => c.t_0.ratio(),
            QuantityKind::Velocity => c.u_0.ratio(),
            QuantityKind::Acceleration => c.g.ratio(),
            // q = rho c_v T u, each factor converted by its own ratio
            QuantityKind::HeatFlux => {
                c.rho_c.ratio() * self.heat_capacity.ratio() * c.t_c.ratio() * c.u_0.ratio()
            }
        }
    }

    pub fn to_physical(&self, x_lattice: f64, kind: QuantityKind) -> f64 {
        x_lattice * self.ratio(kind)
    }

    pub fn to_lattice(&self, x_physical: f64, kind: QuantityKind) -> f64 {
        x_physical / self.ratio(kind)
    }

    /// Looks the kind up by name first; unknown names are configuration errors.
    pub fn convert_named(&self, x_lattice: f64, kind: &str) -> Result<f64> {
        Ok(self.to_physical(x_lattice, kind.parse()?))
    }
}

impl Default for UnitSystem {
    fn default() -> Self {
        Self::with_lattice_cv(crate::thermal::ThermalParams::default().c_v)
            .expect("default unit system is valid")
    }
}

/// Jakob-number normalization constants of one fluid family.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FluidProperties {
    /// `c_p,l / h_fg` in 1/K.
    pub cp_over_hfg: f64,
    /// Saturation temperature in K.
    pub t_sat_physical: f64,
    /// Dimensionless normalizing Jakob number.
    pub ja_max: f64,
}

/// Normalizing Jakob number shared by both families.
pub const JA_MAX: f64 = 0.222;

impl FluidProperties {
    pub fn new(cp_over_hfg: f64, t_sat_physical: f64, ja_max: f64) -> Result<Self> {
        if !(cp_over_hfg > 0.0) || !(ja_max > 0.0) || !t_sat_physical.is_finite() {
            return Err(Error::config(
                "fluid properties need cp/hfg > 0, Ja_max > 0 and a finite T_sat",
            ));
        }
        Ok(Self {
            cp_over_hfg,
            t_sat_physical,
            ja_max,
        })
    }

    /// Simulation family: `T_sat = 0.9 T_c` mapped to kelvin, with `c_p/h_fg`
    /// calibrated so the hottest heater (0.078 tu) has `Ja = Ja_max`.
    pub fn simulation(constants: &LatticeConstants) -> Self {
        let t_sat = 0.9 * constants.t_c.physical();
        let t_hot = 0.078 * constants.t_c.ratio();
        Self {
            cp_over_hfg: JA_MAX / (t_hot - t_sat),
            t_sat_physical: t_sat,
            ja_max: JA_MAX,
        }
    }

    /// Experiment family: water at 100 C, `c_p,l = 4217 J/(kg K)`,
    /// `h_fg = 2.257e6 J/kg`.
    pub fn experiment() -> Self {
        Self {
            cp_over_hfg: 4217.0 / 2.257e6,
            t_sat_physical: 373.15,
            ja_max: JA_MAX,
        }
    }

    /// Jakob number of a temperature in kelvin.
    #[inline]
    pub fn jakob(&self, t_kelvin: f64) -> f64 {
        self.cp_over_hfg * (t_kelvin - self.t_sat_physical)
    }

    #[inline]
    pub fn normalized(&self, t_kelvin: f64) -> f64 {
        self.jakob(t_kelvin) / self.ja_max
    }

    /// Inverse of [`normalized`](Self::normalized).
    #[inline]
    pub fn temperature_from_normalized(&self, ja_n: f64) -> f64 {
        ja_n * self.ja_max / self.cp_over_hfg + self.t_sat_physical
    }
}

/// Maps a kelvin temperature field to normalized Jakob numbers.
pub fn jakob_normalize(t_map: &ScalarGrid2D, props: &FluidProperties) -> ScalarGrid2D {
    t_map.map(|t| props.normalized(t))
}

/// Inverse of [`jakob_normalize`]: Ja_N back to kelvin.
pub fn jakob_denormalize(ja_map: &ScalarGrid2D, props: &FluidProperties) -> ScalarGrid2D {
    ja_map.map(|j| props.temperature_from_normalized(j))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn units() -> UnitSystem {
        UnitSystem::default()
    }

    #[test]
    fn table_temperatures() {
        let u = units();
        let t = u.to_physical(0.078, QuantityKind::Temperature);
        assert!((t - 692.45).abs() < 0.01, "{t}");
        assert_eq!(u.to_physical(0.0729, QuantityKind::Temperature), 647.17);
        let lt = u.to_lattice(656.94, QuantityKind::Temperature);
        assert!((lt - 0.074).abs() < 1e-5, "{lt}");
    }

    #[test]
    fn table_density_and_gravity() {
        let u = units();
        let r = u.to_lattice(322.0, QuantityKind::Density);
        assert!((r - 2.657304).abs() < 1e-12);
        let g = u.to_physical(3e-5, QuantityKind::Acceleration);
        assert!((g - 9.81).abs() < 1e-12);
    }

    #[test]
    fn unknown_kind_is_config_error() {
        let u = units();
        assert!(matches!(
            u.convert_named(1.0, "viscosity"),
            Err(Error::Config(_))
        ));
        assert!(u.convert_named(1.0, "heat_flux").is_ok());
    }

    #[test]
    fn invalid_pairs_rejected() {
        assert!(ScalePair::new(0.0, 1.0).is_err());
        assert!(ScalePair::new(-1.0, 1.0).is_err());
        assert!(ScalePair::new(1.0, f64::INFINITY).is_err());
    }

    #[test]
    fn saturation_maps_to_zero() {
        let props = FluidProperties::simulation(&LatticeConstants::default());
        let t = ScalarGrid2D::filled(4, 4, props.t_sat_physical);
        assert!(jakob_normalize(&t, &props).as_slice().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn simulation_family_anchor() {
        let props = FluidProperties::simulation(&LatticeConstants::default());
        let ja = props.jakob(692.45);
        assert!((ja - 0.222).abs() < 1e-4, "{ja}");
        assert!((props.normalized(692.45) - 1.0).abs() < 1e-3);
        assert!((props.t_sat_physical - 582.453).abs() < 1e-9);
    }

    #[test]
    fn experiment_family_rows() {
        let props = FluidProperties::experiment();
        for (t, ja) in [(385.89, 0.0238), (388.88, 0.0294), (390.90, 0.0332)] {
            assert!((props.jakob(t) - ja).abs() < 2e-4, "{t}: {}", props.jakob(t));
        }
        assert!(props.jakob(360.0) < 0.0);
    }

    #[test]
    fn normalization_inverse() {
        let props = FluidProperties::experiment();
        let t = 388.0;
        let back = props.temperature_from_normalized(props.normalized(t));
        assert!((back - t).abs() < 1e-10);
    }

    #[test]
    fn serde_round_trip_keeps_ratio() {
        let c = LatticeConstants::default();
        let s = serde_json::to_string(&c).unwrap();
        let back: LatticeConstants = serde_json::from_str(&s).unwrap();
        assert_eq!(back, c);
    }
}
