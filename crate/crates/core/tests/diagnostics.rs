//! Heat-flux, void-fraction, regime and error-report identities.

use boilgen_core::diagnostics::*;
use boilgen_core::phase::{PhaseContourMap, PhaseSource, LIQUID, SOLID, VAPOR};
use boilgen_core::units::{FluidProperties, LatticeConstants, UnitSystem};
use boilgen_core::ScalarGrid2D;
use proptest::prelude::*;

fn contour(phi: ScalarGrid2D) -> PhaseContourMap {
    PhaseContourMap {
        phi,
        threshold_used: 3.79552,
        source: PhaseSource::Simulation,
    }
}

fn flux_settings() -> FluxSettings {
    FluxSettings {
        y_h: 4,
        dy: 1,
        l_x: L_X,
        kappa_coeff: 0.3,
        kappa_solid: 1.77,
        rho_liquid: 5.9079,
        rho_vapor: 0.5801,
    }
}

#[test]
fn local_flux_examples() {
    let uniform = ScalarGrid2D::filled(5, 4, 0.07);
    let kappa = ScalarGrid2D::filled(5, 4, 2.0);
    assert!(local_heat_flux(&uniform, &kappa, 1, 1)
        .unwrap()
        .iter()
        .all(|&q| q == 0.0));

    let step = ScalarGrid2D::from_fn(5, 4, |_, y| if y <= 1 { 1.0 } else { 0.9 });
    for q in local_heat_flux(&step, &kappa, 1, 1).unwrap() {
        assert!((q - 0.2).abs() < 1e-12, "{q}");
    }

    let s = -0.013;
    let linear = ScalarGrid2D::from_fn(5, 8, |_, y| 0.08 + s * y as f64);
    let kappa = ScalarGrid2D::filled(5, 8, 2.0);
    for q in local_heat_flux(&linear, &kappa, 2, 3).unwrap() {
        assert!((q + 2.0 * s).abs() < 1e-12, "{q}");
    }
    assert!(local_heat_flux(&linear, &kappa, 6, 2).is_err());
}

#[test]
fn spatial_and_temporal_means() {
    assert_eq!(spatial_avg_flux(&vec![0.75; L_X], L_X).unwrap(), 0.75);
    let alt: Vec<f64> = (0..L_X).map(|i| if i % 2 == 0 { 1.5 } else { -1.5 }).collect();
    assert_eq!(spatial_avg_flux(&alt, L_X).unwrap(), 0.0);
    assert!(spatial_avg_flux(&[1.0; 10], L_X).is_err());
    assert_eq!(spatiotemporal_avg_flux(&[1.0, 3.0]).unwrap(), 2.0);
    assert_eq!(spatiotemporal_avg_flux(&[4.25; 9]).unwrap(), 4.25);
    assert!(spatiotemporal_avg_flux(&[]).is_err());
}

#[test]
fn surface_spans_columns_one_through_lx() {
    let row: Vec<f64> = (0..256).map(|x| x as f64).collect();
    let cols = surface_columns(&row, L_X).unwrap();
    assert_eq!(cols.len(), 254);
    assert_eq!((cols[0], cols[253]), (1.0, 254.0));
}

#[test]
fn void_fraction_counts_phases() {
    let mut v = vec![LIQUID; 100];
    v[..20].fill(SOLID);
    v[20..50].fill(VAPOR);
    let f = void_fraction(&contour(ScalarGrid2D::from_vec(10, 10, v).unwrap())).unwrap();
    assert_eq!(f, 0.375);
    assert_eq!(void_fraction(&contour(ScalarGrid2D::filled(4, 4, LIQUID))).unwrap(), 0.0);
    assert_eq!(void_fraction(&contour(ScalarGrid2D::filled(4, 4, VAPOR))).unwrap(), 1.0);
    assert!(void_fraction(&contour(ScalarGrid2D::filled(4, 4, SOLID))).is_err());
}

fn contiguous_in_order(labels: &[Regime]) -> bool {
    let rank = |r: &Regime| match r {
        Regime::SinglePhase => 0,
        Regime::BubbleGrowth => 1,
        Regime::TwoPhase => 2,
    };
    labels.windows(2).all(|w| rank(&w[0]) <= rank(&w[1]))
}

#[test]
fn regime_segmentation_examples() {
    assert!(segment_regimes(&[0.0; 30], F_EPS, SMOOTHING_WINDOW)
        .iter()
        .all(|r| *r == Regime::SinglePhase));

    // quiet start, ramp, then a plateau with ripples
    let f: Vec<f64> = (0..60)
        .map(|i| match i {
            0..=9 => 0.0,
            10..=29 => 0.01 * (i - 9) as f64,
            _ => 0.2 + 0.02 * (i as f64 * 1.3).sin(),
        })
        .collect();
    let labels = segment_regimes(&f, F_EPS, SMOOTHING_WINDOW);
    assert!(contiguous_in_order(&labels));
    assert_eq!(labels[0], Regime::SinglePhase);
    assert_eq!(labels[15], Regime::BubbleGrowth);
    assert_eq!(labels[59], Regime::TwoPhase);

    let rising: Vec<f64> = (0..40).map(|i| 0.001 * i as f64).collect();
    let labels = segment_regimes(&rising, F_EPS, SMOOTHING_WINDOW);
    assert!(!labels.contains(&Regime::TwoPhase));
    assert!(labels.contains(&Regime::BubbleGrowth));
}

fn frames(n: usize, w: usize, h: usize, seed: u64) -> (Vec<ScalarGrid2D>, Vec<ScalarGrid2D>) {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let truth = (0..n)
        .map(|_| ScalarGrid2D::from_fn(w, h, |_, _| rng.random_range(-0.1..1.0)))
        .collect();
    let phi = (0..n)
        .map(|_| {
            ScalarGrid2D::from_fn(w, h, |_, y| {
                if y < 5 {
                    SOLID
                } else if rng.random_bool(0.2) {
                    VAPOR
                } else {
                    LIQUID
                }
            })
        })
        .collect();
    (truth, phi)
}

fn report_for(pred: &[ScalarGrid2D], truth: &[ScalarGrid2D], phi: &[ScalarGrid2D]) -> ErrorReport {
    let props = FluidProperties::simulation(&LatticeConstants::default());
    error_report(pred, truth, phi, &props, &flux_settings(), &UnitSystem::default()).unwrap()
}

#[test]
fn perfect_prediction_has_zero_error() {
    let (truth, phi) = frames(4, 256, 16, 1);
    let r = report_for(&truth, &truth, &phi);
    for s in [&r.temperature_pct, &r.delta_t_k] {
        for e in [s.solid, s.vapor, s.liquid, s.all] {
            assert_eq!((e.mean, e.max), (0.0, 0.0));
        }
    }
    assert_eq!((r.rmse_q_s, r.rmse_q_st), (0.0, 0.0));
    assert!(r.max_error_map.as_slice().iter().all(|&v| v == 0.0));
}

#[test]
fn constant_kelvin_offset_leaves_successive_differences_exact() {
    let (truth, phi) = frames(5, 256, 16, 2);
    let props = FluidProperties::simulation(&LatticeConstants::default());
    // +1 K in Ja_N
    let shift = props.normalized(props.t_sat_physical + 1.0);
    let pred: Vec<ScalarGrid2D> = truth.iter().map(|g| g.map(|v| v + shift)).collect();
    let r = report_for(&pred, &truth, &phi);
    assert!(r.delta_t_k.all.max < 1e-9, "{}", r.delta_t_k.all.max);
    assert!(r.temperature_pct.all.mean > 0.0);
    for s in [&r.temperature_pct, &r.delta_t_k] {
        for e in [s.solid, s.vapor, s.liquid, s.all] {
            assert!(e.max >= e.mean);
        }
    }
}

#[test]
fn percent_error_statistics_ignore_frame_order() {
    let (truth, phi) = frames(6, 256, 12, 3);
    let (noise, _) = frames(6, 256, 12, 4);
    let pred: Vec<ScalarGrid2D> = truth
        .iter()
        .zip(&noise)
        .map(|(t, n)| ScalarGrid2D::from_fn(t.width(), t.height(), |x, y| t.get(x, y) + 0.05 * n.get(x, y)))
        .collect();
    let order = [3, 0, 5, 1, 4, 2];
    let perm = |v: &[ScalarGrid2D]| order.iter().map(|&i| v[i].clone()).collect::<Vec<_>>();
    let a = report_for(&pred, &truth, &phi);
    let b = report_for(&perm(&pred), &perm(&truth), &perm(&phi));
    let (sa, sb) = (a.temperature_pct, b.temperature_pct);
    for (x, y) in [(sa.all, sb.all), (sa.vapor, sb.vapor), (sa.liquid, sb.liquid), (sa.solid, sb.solid)] {
        assert!((x.mean - y.mean).abs() < 1e-12 * x.mean.max(1.0));
        assert_eq!(x.max, y.max);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn spatial_mean_matches_pairwise_sum(q in proptest::collection::vec(-50.0f64..50.0, L_X)) {
        fn pairwise(v: &[f64]) -> f64 {
            if v.len() <= 2 {
                return v.iter().sum();
            }
            let (a, b) = v.split_at(v.len() / 2);
            pairwise(a) + pairwise(b)
        }
        let got = spatial_avg_flux(&q, L_X).unwrap();
        prop_assert!((got - pairwise(&q) / L_X as f64).abs() < 1e-12);
    }

    #[test]
    fn temporal_mean_is_the_grand_mean_of_the_flux_table(
        frames in 1usize..20,
        seed in any::<u64>(),
    ) {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let table: Vec<Vec<f64>> = (0..frames)
            .map(|_| (0..L_X).map(|_| rng.random_range(-5.0..20.0)).collect())
            .collect();
        let q_s: Vec<f64> = table.iter().map(|r| spatial_avg_flux(r, L_X).unwrap()).collect();
        let q_st = spatiotemporal_avg_flux(&q_s).unwrap();
        let grand = table.iter().flatten().sum::<f64>() / (frames * L_X) as f64;
        prop_assert!((q_st - grand).abs() < 1e-12 * grand.abs().max(1.0));
        // mean of block means with equal block sizes
        if frames % 2 == 0 {
            let h = frames / 2;
            let m1 = spatiotemporal_avg_flux(&q_s[..h]).unwrap();
            let m2 = spatiotemporal_avg_flux(&q_s[h..]).unwrap();
            prop_assert!((0.5 * (m1 + m2) - q_st).abs() < 1e-12 * q_st.abs().max(1.0));
        }
    }

    #[test]
    fn void_fraction_is_mirror_invariant(
        cells in proptest::collection::vec(prop_oneof![Just(SOLID), Just(VAPOR), Just(LIQUID)], 1..200),
        w in 1usize..20,
    ) {
        let h = cells.len() / w;
        prop_assume!(h > 0);
        let mut v = cells[..w * h].to_vec();
        v[0] = LIQUID;
        let g = ScalarGrid2D::from_vec(w, h, v).unwrap();
        let a = void_fraction(&contour(g.clone())).unwrap();
        let b = void_fraction(&contour(g.mirrored())).unwrap();
        prop_assert_eq!(a, b);
        prop_assert!((0.0..=1.0).contains(&a));
    }

    #[test]
    fn regimes_are_contiguous_and_exhaustive(f in proptest::collection::vec(0.0f64..0.3, 3..120)) {
        let labels = segment_regimes(&f, F_EPS, SMOOTHING_WINDOW);
        prop_assert_eq!(labels.len(), f.len());
        prop_assert!(contiguous_in_order(&labels));
        let onset = f.iter().position(|&v| v >= F_EPS);
        match onset {
            None => prop_assert!(labels.iter().all(|r| *r == Regime::SinglePhase)),
            Some(k) => {
                prop_assert!(labels[..k].iter().all(|r| *r == Regime::SinglePhase));
                prop_assert_eq!(labels[k], Regime::BubbleGrowth);
            }
        }
    }
}
