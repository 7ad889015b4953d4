//! Lattice-Boltzmann solver checks against analytic solutions and invariants.

use boilgen_core::eos::{PengRobinsonParams, PseudopotentialParams};
use boilgen_core::lbm::*;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn srt(tau: f64, sigma: f64) -> SrtParams {
    SrtParams {
        tau,
        forcing_sigma: sigma,
    }
}

/// One multiphase step at uniform temperature, as the simulator does it.
fn multiphase_step(
    s: &mut LatticeState,
    temp: &[f64],
    psi_wall: f64,
    gravity: f64,
    params: &SrtParams,
) {
    let eos = PengRobinsonParams::default();
    let pp = PseudopotentialParams::default();
    s.update_psi(temp, &eos, &pp, psi_wall).unwrap();
    s.update_forces(&pp, gravity);
    s.update_velocity().unwrap();
    s.collide_and_stream(params).unwrap();
}

fn t_ratio(r: f64) -> f64 {
    r * PengRobinsonParams::default().critical_temperature()
}

#[test]
fn uniform_rest_state_is_a_fixed_point() {
    let (w, h) = (8, 8);
    let rho0 = 5.9;
    let mut s = LatticeState::at_rest(Geometry::periodic(w, h), vec![rho0; w * h]).unwrap();
    let before = s.populations().to_vec();
    let temp = vec![t_ratio(0.9); w * h];
    for _ in 0..100 {
        multiphase_step(&mut s, &temp, 0.0, 0.0, &SrtParams::default());
    }
    for (a, b) in s.populations().iter().zip(&before) {
        assert!((a - b).abs() < 1e-13, "{a} vs {b}");
    }
    assert!(s.vel.x.iter().chain(&s.vel.y).all(|v| v.abs() < 1e-14));
}

#[test]
fn streaming_is_a_permutation_on_a_periodic_lattice() {
    let (w, h) = (7, 5);
    let mut s = LatticeState::at_rest(Geometry::periodic(w, h), vec![1.0; w * h]).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for v in s.populations_mut() {
        *v = rng.random_range(0.01..1.0);
    }
    let before = s.populations().to_vec();
    s.stream().unwrap();
    let after = s.populations();
    for y in 0..h {
        for x in 0..w {
            for i in 0..Q {
                let tx = (x as i64 + EX[i] as i64).rem_euclid(w as i64) as usize;
                let ty = (y as i64 + EY[i] as i64).rem_euclid(h as i64) as usize;
                assert_eq!(after[(ty * w + tx) * Q + i], before[(y * w + x) * Q + i]);
            }
        }
    }
    let mut a = after.to_vec();
    let mut b = before;
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    assert_eq!(a, b);
}

#[test]
fn bounce_back_reverses_populations_entering_solid() {
    // one solid row in a periodic column: everything aimed at it comes back
    let (w, h) = (3, 4);
    let mut geo = Geometry::periodic(w, h);
    for x in 0..w {
        geo.cell_kind[2 * w + x] = CellKind::Solid;
    }
    let mut s = LatticeState::at_rest(geo, vec![1.0; w * h]).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for v in s.populations_mut() {
        *v = rng.random_range(0.01..1.0);
    }
    let before = s.populations().to_vec();
    let mass_before: f64 = (0..w * h)
        .filter(|&c| c / w != 2)
        .map(|c| before[c * Q..c * Q + Q].iter().sum::<f64>())
        .sum();
    s.stream().unwrap();
    let after = s.populations();
    let (x, y) = (1, 1);
    // row 1 receives its own upward populations reflected as downward ones
    for i in [2, 5, 6] {
        assert_eq!(after[(y * w + x) * Q + OPPOSITE[i]], before[(y * w + x) * Q + i]);
    }
    let mass_after: f64 = (0..w * h)
        .filter(|&c| c / w != 2)
        .map(|c| after[c * Q..c * Q + Q].iter().sum::<f64>())
        .sum();
    assert!((mass_after - mass_before).abs() < 1e-12 * mass_before);
}

#[test]
fn mass_is_conserved_over_a_thousand_steps() {
    let (w, h) = (32, 32);
    let mut geo = Geometry::periodic(w, h);
    for x in 0..w {
        geo.cell_kind[x] = CellKind::Solid;
    }
    let rho: Vec<f64> = (0..w * h)
        .map(|i| {
            let (x, y) = ((i % w) as f64, (i / w) as f64);
            let k = std::f64::consts::TAU / 32.0;
            5.9 * (1.0 + 0.02 * (k * x).sin() * (k * y).cos())
        })
        .collect();
    let mut s = LatticeState::at_rest(geo, rho).unwrap();
    let temp = vec![t_ratio(0.9); w * h];
    let eos = PengRobinsonParams::default();
    let psi_wall = eos
        .pseudopotential(5.9, temp[0], &PseudopotentialParams::default())
        .unwrap();
    let m0 = s.total_fluid_mass();
    for _ in 0..1000 {
        multiphase_step(&mut s, &temp, psi_wall, 1e-5, &SrtParams::default());
    }
    let drift = (s.total_fluid_mass() - m0).abs() / m0;
    assert!(drift < 1e-10, "relative mass drift {drift:e}");
}

#[test]
fn force_driven_channel_matches_poiseuille_profile() {
    // walls sit halfway between the solid rows and the first fluid rows
    let (w, h) = (4, 34);
    let mut geo = Geometry::periodic(w, h);
    for x in 0..w {
        geo.cell_kind[x] = CellKind::Solid;
        geo.cell_kind[(h - 1) * w + x] = CellKind::Solid;
    }
    let mut s = LatticeState::at_rest(geo, vec![1.0; w * h]).unwrap();
    let g = 1e-5;
    let mut force = VectorField::zeros(w, h);
    for idx in w..(h - 1) * w {
        force.x[idx] = g;
    }
    s.set_force(&force);
    let params = srt(1.0, 0.0);
    for _ in 0..20_000 {
        s.update_velocity().unwrap();
        s.collide_and_stream(&params).unwrap();
    }
    s.update_velocity().unwrap();
    let nu = params.viscosity();
    let (lo, hi) = (0.5, h as f64 - 1.5);
    let umax = g / (2.0 * nu) * ((hi - lo) / 2.0).powi(2);
    for y in 1..h - 1 {
        let want = g / (2.0 * nu) * (y as f64 - lo) * (hi - y as f64);
        let (ux, uy) = s.vel.get(1, y);
        assert!((ux - want).abs() < 0.01 * umax, "row {y}: {ux} vs {want}");
        // no flux through the walls
        assert!(uy.abs() < 1e-14, "row {y}: uy = {uy}");
    }
}

#[test]
fn taylor_green_vortex_decays_at_the_lattice_viscosity() {
    let n = 64;
    let tau = 0.8;
    let params = srt(tau, 0.0);
    let k = std::f64::consts::TAU / n as f64;
    let u0 = 0.01;
    let mut vel = VectorField::zeros(n, n);
    for y in 0..n {
        for x in 0..n {
            let (fx, fy) = (k * x as f64, k * y as f64);
            vel.x[y * n + x] = -u0 * fx.cos() * fy.sin();
            vel.y[y * n + x] = u0 * fx.sin() * fy.cos();
        }
    }
    let mut s = LatticeState::at_rest(Geometry::periodic(n, n), vec![1.0; n * n]).unwrap();
    s.set_equilibrium(&vel);
    let energy = |s: &LatticeState| -> f64 {
        s.vel.x.iter().zip(&s.vel.y).map(|(a, b)| a * a + b * b).sum()
    };
    let (t0, t1) = (50u32, 550u32);
    let mut e0 = 0.0;
    for t in 0..=t1 {
        s.update_velocity().unwrap();
        if t == t0 {
            e0 = energy(&s);
        }
        if t == t1 {
            break;
        }
        s.collide_and_stream(&params).unwrap();
    }
    let e1 = energy(&s);
    // kinetic energy decays as exp(-4 nu k^2 t)
    let nu_fit = -(e1 / e0).ln() / (4.0 * k * k * f64::from(t1 - t0));
    let rel = (nu_fit / params.viscosity() - 1.0).abs();
    assert!(rel < 0.02, "fitted viscosity {nu_fit} vs {}", params.viscosity());
}

#[test]
fn flat_interface_settles_near_equal_area_densities() {
    let eos = PengRobinsonParams::default();
    let t = t_ratio(0.9);
    let coex = eos.coexistence_densities(t).unwrap();
    let (w, h) = (4, 200);
    let rho: Vec<f64> = (0..w * h)
        .map(|i| if (50..150).contains(&(i / w)) { coex.rho_l } else { coex.rho_v })
        .collect();
    let mut s = LatticeState::at_rest(Geometry::periodic(w, h), rho).unwrap();
    let temp = vec![t; w * h];
    for _ in 0..20_000 {
        multiphase_step(&mut s, &temp, 0.0, 0.0, &SrtParams::default());
    }
    let (rl, rv) = (s.rho[100 * w], s.rho[0]);
    assert!((rl / coex.rho_l - 1.0).abs() < 0.05, "liquid {rl} vs {}", coex.rho_l);
    assert!((rv / coex.rho_v - 1.0).abs() < 0.05, "vapor {rv} vs {}", coex.rho_v);
}

#[test]
fn parallel_and_sequential_runs_are_bitwise_equal() {
    let (w, h) = (48, 40);
    let geo = Geometry::pool(w, h, 3);
    let rho: Vec<f64> = (0..w * h)
        .map(|i| {
            let (x, y) = ((i % w) as f64, (i / w) as f64);
            if (x - 24.0).powi(2) + (y - 12.0).powi(2) < 36.0 {
                0.6
            } else {
                5.9
            }
        })
        .collect();
    let temp = vec![t_ratio(0.9); w * h];
    let psi_wall = PengRobinsonParams::default()
        .pseudopotential(6.5, temp[0], &PseudopotentialParams::default())
        .unwrap();
    let run = |execution| {
        let mut s = LatticeState::at_rest(geo.clone(), rho.clone()).unwrap();
        s.execution = execution;
        for _ in 0..200 {
            multiphase_step(&mut s, &temp, psi_wall, 1e-5, &SrtParams::default());
        }
        s
    };
    let (a, b) = (run(Execution::Sequential), run(Execution::Parallel));
    assert_eq!(a.populations(), b.populations());
    assert_eq!(a.rho, b.rho);
}

#[test]
fn uniform_pseudopotential_exerts_no_force() {
    let (w, h) = (6, 6);
    let geo = Geometry::periodic(w, h);
    let mut out = VectorField::zeros(w, h);
    interaction_force_from_psi(&vec![1.7; w * h], &geo, &PseudopotentialParams::default(), &mut out);
    assert!(out.x.iter().chain(&out.y).all(|&v| v.abs() < 1e-15));
}

fn psi_grid() -> impl Strategy<Value = (usize, usize, Vec<f64>)> {
    (2usize..10, 2usize..10).prop_flat_map(|(w, h)| {
        (Just(w), Just(h), proptest::collection::vec(0.1f64..3.0, w * h))
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn interaction_forces_cancel_on_a_periodic_domain((w, h, psi) in psi_grid()) {
        let mut out = VectorField::zeros(w, h);
        interaction_force_from_psi(&psi, &Geometry::periodic(w, h), &PseudopotentialParams::default(), &mut out);
        let (fx, fy) = out.total();
        let scale: f64 = out.x.iter().chain(&out.y).map(|v| v.abs()).sum::<f64>().max(1.0);
        prop_assert!(fx.abs() < 1e-12 * scale && fy.abs() < 1e-12 * scale, "{fx} {fy}");
    }

    #[test]
    fn interaction_force_is_mirror_covariant((w, h, psi) in psi_grid()) {
        let pp = PseudopotentialParams::default();
        let geo = Geometry::periodic(w, h);
        let mirrored: Vec<f64> = (0..w * h).map(|i| psi[(i / w) * w + (w - 1 - i % w)]).collect();
        let mut a = VectorField::zeros(w, h);
        let mut b = VectorField::zeros(w, h);
        interaction_force_from_psi(&psi, &geo, &pp, &mut a);
        interaction_force_from_psi(&mirrored, &geo, &pp, &mut b);
        for y in 0..h {
            for x in 0..w {
                let (ax, ay) = a.get(x, y);
                let (bx, by) = b.get(w - 1 - x, y);
                prop_assert!((ax + bx).abs() < 1e-12 && (ay - by).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn equilibrium_reproduces_its_moments(rho in 0.1f64..8.0, ux in -0.2f64..0.2, uy in -0.2f64..0.2) {
        let f = equilibrium(rho, ux, uy);
        let r: f64 = f.iter().sum();
        let jx: f64 = (0..Q).map(|i| f[i] * EX[i] as f64).sum();
        let jy: f64 = (0..Q).map(|i| f[i] * EY[i] as f64).sum();
        prop_assert!((r - rho).abs() < 1e-12 * rho);
        prop_assert!((jx - rho * ux).abs() < 1e-12 && (jy - rho * uy).abs() < 1e-12);
    }
}

#[test]
fn dense_column_attracts_its_neighbours() {
    let (w, h) = (16, 4);
    let geo = Geometry::periodic(w, h);
    let rho = boilgen_core::ScalarGrid2D::from_fn(w, h, |x, _| if x == 8 { 5.9 } else { 0.58 });
    let temp = boilgen_core::ScalarGrid2D::filled(w, h, 0.0656);
    let f = interaction_force(
        &rho,
        &temp,
        &geo,
        &PengRobinsonParams::default(),
        &PseudopotentialParams::default(),
        0.0,
    )
    .unwrap();
    for y in 0..h {
        assert!(f.get(7, y).0 > 0.0, "left neighbour pulled right");
        assert!(f.get(9, y).0 < 0.0, "right neighbour pulled left");
        assert!((f.get(7, y).0 + f.get(9, y).0).abs() < 1e-12);
        assert!(f.get(8, y).0.abs() < 1e-12);
        assert!(f.get(3, y).0.abs() < 1e-15);
    }
}

#[test]
fn buoyancy_examples() {
    let geo = Geometry::periodic(3, 1);
    let rho = boilgen_core::ScalarGrid2D::from_vec(3, 1, vec![5.0, 4.0, 6.0]).unwrap();
    let f = body_force(&rho, 5.0, 3e-5, &geo);
    assert_eq!(f.y[0], 0.0);
    assert!(f.y[1] > 0.0);
    assert!((f.y[2] + 3e-5).abs() < 1e-18);
    assert!(f.x.iter().all(|&v| v == 0.0));
}

#[test]
fn macroscopic_velocity_carries_half_the_force() {
    let (w, h) = (3, 2);
    let mut s = LatticeState::at_rest(Geometry::periodic(w, h), vec![2.0; w * h]).unwrap();
    let mut vel = VectorField::zeros(w, h);
    vel.x.iter_mut().for_each(|v| *v = 0.01);
    s.set_equilibrium(&vel);
    let (rho, u) = s.macroscopic().unwrap();
    assert!(rho.as_slice().iter().all(|&r| (r - 2.0).abs() < 1e-14));
    assert!(u.x.iter().all(|&v| (v - 0.01).abs() < 1e-15));

    let a = 3e-4;
    let mut force = VectorField::zeros(w, h);
    force.x.iter_mut().for_each(|v| *v = 2.0 * 2.0 * a);
    s.set_force(&force);
    let (_, shifted) = s.macroscopic().unwrap();
    for (b, c) in shifted.x.iter().zip(&u.x) {
        assert!((b - c - a).abs() < 1e-15);
    }
}

proptest! {
    #[test]
    fn macroscopic_moments_match_direct_sums(seed in any::<u64>()) {
        let (w, h) = (4, 3);
        let mut s = LatticeState::at_rest(Geometry::periodic(w, h), vec![1.0; w * h]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        s.populations_mut().iter_mut().for_each(|f| *f = rng.random_range(0.01..1.0));
        let (rho, u) = s.macroscopic().unwrap();
        let f = s.populations();
        for c in 0..w * h {
            let cell = &f[c * Q..c * Q + Q];
            let r: f64 = cell.iter().sum();
            let jx: f64 = (0..Q).map(|i| cell[i] * EX[i] as f64).sum();
            let jy: f64 = (0..Q).map(|i| cell[i] * EY[i] as f64).sum();
            prop_assert!((rho.as_slice()[c] - r).abs() < 1e-13);
            prop_assert!((u.x[c] - jx / r).abs() < 1e-13 && (u.y[c] - jy / r).abs() < 1e-13);
        }
    }
}
