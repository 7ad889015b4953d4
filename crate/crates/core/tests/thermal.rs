//! Energy-equation solver: time order, analytic conduction, conservation.

use boilgen_core::eos::PengRobinsonParams;
use boilgen_core::lbm::{CellKind, Geometry, VectorField, VerticalBoundary};
use boilgen_core::thermal::*;
use boilgen_core::ScalarGrid2D;
use proptest::prelude::*;

const T_BASE: f64 = 0.0656;

struct Setup {
    geometry: Geometry,
    rho: Vec<f64>,
    vel: VectorField,
    params: ThermalParams,
}

impl Setup {
    fn uniform(geometry: Geometry, rho: f64) -> Self {
        let (w, h) = (geometry.width, geometry.height);
        Self {
            rho: vec![rho; w * h],
            vel: VectorField::zeros(w, h),
            params: ThermalParams::default(),
            geometry,
        }
    }

    fn operator(&self, fixed: &[Option<f64>]) -> EnergyOperator {
        let mut kappa = vec![0.0; self.rho.len()];
        conductivity_field(&self.rho, &self.geometry, &self.params, &mut kappa);
        EnergyInputs {
            geometry: &self.geometry,
            rho: &self.rho,
            vel: &self.vel,
            kappa: &kappa,
            fixed,
            params: &self.params,
            eos: &PengRobinsonParams::default(),
        }
        .prepare()
        .unwrap()
    }

    fn advance(&self, field: &mut TemperatureField, dt: f64, steps: usize) {
        let op = self.operator(&field.imposed);
        let mut ws = Rk4Workspace::new(field.t.len());
        for _ in 0..steps {
            rk4_step(field, dt, &mut ws, |t, out| {
                op.rhs(t, out);
                Ok(())
            })
            .unwrap();
        }
    }
}

fn column(height: usize) -> Geometry {
    Geometry {
        vertical: VerticalBoundary::WallOutflow,
        ..Geometry::periodic(4, height)
    }
}

#[test]
fn rk4_converges_at_fourth_order() {
    // a single Fourier mode of the periodic discrete Laplacian decays exactly
    // as exp(-lambda t), so the remaining error is the time discretization
    let n = 8;
    let setup = Setup::uniform(Geometry::periodic(n, 1), 5.9);
    let chi = setup.params.kappa_fluid_coeff / setup.params.c_v;
    let k = std::f64::consts::TAU / n as f64;
    let lambda = chi * (2.0 - 2.0 * k.cos());
    let amp = 0.005;
    let t_end = 64.0;
    let error = |dt: f64| {
        let t0 = ScalarGrid2D::from_fn(n, 1, |x, _| T_BASE + amp * (k * x as f64).sin());
        let mut field = TemperatureField::new(t0);
        setup.advance(&mut field, dt, (t_end / dt).round() as usize);
        (0..n)
            .map(|x| {
                let exact = T_BASE + amp * (k * x as f64).sin() * (-lambda * t_end).exp();
                (field.t.get(x, 0) - exact).powi(2)
            })
            .sum::<f64>()
            .sqrt()
    };
    let (e1, e2, e3) = (error(8.0), error(4.0), error(2.0));
    let (p1, p2) = ((e1 / e2).log2(), (e2 / e3).log2());
    assert!((3.8..=4.2).contains(&p1), "order {p1} ({e1:e} -> {e2:e})");
    assert!((3.8..=4.2).contains(&p2), "order {p2} ({e2:e} -> {e3:e})");
}

#[test]
fn one_dimensional_conduction_matches_series_solution() {
    // fixed temperature at row 0, insulated top face at y = h - 1/2
    let h = 256;
    let setup = Setup::uniform(column(h), 5.9);
    let chi = setup.params.kappa_fluid_coeff / setup.params.c_v;
    let (t_low, t_wall) = (T_BASE, T_BASE + 0.01);
    let mut field = TemperatureField::new(ScalarGrid2D::filled(4, h, t_low));
    field.fix_row(0, &[t_wall; 4]).unwrap();
    let steps = 10_000;
    setup.advance(&mut field, 1.0, steps);

    let len = h as f64 - 0.5;
    let time = steps as f64;
    let series = |y: f64| {
        let mut s = 0.0;
        for m in 0..2000 {
            let lam = (2 * m + 1) as f64 * std::f64::consts::PI / (2.0 * len);
            s += 4.0 / ((2 * m + 1) as f64 * std::f64::consts::PI)
                * (lam * y).sin()
                * (-chi * lam * lam * time).exp();
        }
        s
    };
    let mut sq = 0.0;
    for y in 1..h {
        let theta = (field.t.get(0, y) - t_wall) / (t_low - t_wall);
        sq += (theta - series(y as f64)).powi(2);
    }
    let l2 = (sq / (h - 1) as f64).sqrt();
    assert!(l2 < 1e-3, "L2 error {l2:e}");
}

#[test]
fn dirichlet_rows_are_bit_exact_after_stepping() {
    let setup = Setup::uniform(column(16), 5.9);
    let mut field = TemperatureField::new(ScalarGrid2D::filled(4, 16, T_BASE));
    let imposed = [0.07, 0.078, 0.0712345678901, 0.0656];
    field.fix_row(0, &imposed).unwrap();
    setup.advance(&mut field, 0.7, 250);
    for (x, v) in imposed.iter().enumerate() {
        assert_eq!(field.t.get(x, 0).to_bits(), v.to_bits());
    }
}

#[test]
fn pure_advection_of_a_linear_profile() {
    // T = T0 + g y under uniform upward flow: dT/dt = -v g exactly
    let h = 12;
    let mut setup = Setup::uniform(Geometry::periodic(6, h), 5.9);
    setup.vel.y.iter_mut().for_each(|v| *v = 0.01);
    let g = 1e-4;
    let t = ScalarGrid2D::from_fn(6, h, |_, y| T_BASE + g * y as f64);
    let op = setup.operator(&vec![None; 6 * h]);
    let mut out = vec![0.0; 6 * h];
    op.rhs(t.as_slice(), &mut out);
    for y in 1..h - 1 {
        let v = out[y * 6 + 2];
        assert!((v + 0.01 * g).abs() < 1e-15, "row {y}: {v}");
    }
}

fn heterogeneous() -> impl Strategy<Value = (usize, usize, Vec<f64>, Vec<bool>, Vec<f64>)> {
    (3usize..10, 3usize..10).prop_flat_map(|(w, h)| {
        (
            Just(w),
            Just(h),
            proptest::collection::vec(0.5f64..6.5, w * h),
            proptest::collection::vec(proptest::bool::weighted(0.2), w * h),
            proptest::collection::vec(0.06f64..0.08, w * h),
        )
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn conduction_conserves_thermal_energy((w, h, rho, solid, t0) in heterogeneous()) {
        // closed box: periodic sides, insulated top and bottom, no flow
        let mut geometry = Geometry::periodic(w, h);
        geometry.vertical = VerticalBoundary::WallOutflow;
        for (k, s) in geometry.cell_kind.iter_mut().zip(&solid) {
            if *s {
                *k = CellKind::Solid;
            }
        }
        let mut setup = Setup::uniform(geometry, 1.0);
        setup.rho = rho;
        let cap: Vec<f64> = (0..w * h)
            .map(|i| if solid[i] { setup.params.c_v_solid } else { setup.rho[i] * setup.params.c_v })
            .collect();
        let energy = |t: &[f64]| t.iter().zip(&cap).map(|(a, b)| a * b).sum::<f64>();
        let mut field = TemperatureField::new(ScalarGrid2D::from_vec(w, h, t0).unwrap());
        let e0 = energy(field.t.as_slice());
        setup.advance(&mut field, 0.5, 200);
        let e1 = energy(field.t.as_slice());
        prop_assert!((e1 - e0).abs() < 1e-12 * e0.abs(), "{e0} -> {e1}");
    }

    #[test]
    fn uniform_temperature_at_rest_is_steady(t in 0.05f64..0.09, rho in 0.3f64..7.0) {
        let setup = Setup::uniform(column(6), rho);
        let mut field = TemperatureField::new(ScalarGrid2D::filled(4, 6, t));
        setup.advance(&mut field, 1.0, 5);
        prop_assert!(field.t.as_slice().iter().all(|&v| v == t));
    }
}
