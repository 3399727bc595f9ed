//! Structural invariants checked over randomly drawn models.

use gfrag::measures::build_invariant;
use gfrag::population::{PopulationConfig, PopulationSimulator, TreeMode};
use gfrag::scale::ScaleFunction;
use gfrag::spectral::{cumulant, cumulant_derivative, leading_eigenvalue, psi_eta, right_inverse_phi, Regime};
use gfrag::stats::{ks_two_sample, Estimate};
use gfrag::{KernelShape, ModelParams, StreamKey, TestFunction};
use proptest::prelude::*;

fn shape() -> impl Strategy<Value = KernelShape> {
    prop_oneof![
        Just(KernelShape::Uniform),
        (0.3f64..5.0).prop_map(KernelShape::beta),
        (0.05f64..0.5).prop_map(KernelShape::atomic),
    ]
}

fn model() -> impl Strategy<Value = ModelParams> {
    (0.2f64..2.0, 0.05f64..1.0, 0.0f64..0.5, 0.5f64..3.0, shape())
        .prop_map(|(a, b, k, c, s)| ModelParams::new(a, b, k, c, s))
}

fn panel() -> impl Strategy<Value = TestFunction> {
    prop_oneof![
        Just(TestFunction::One),
        Just(TestFunction::Identity),
        Just(TestFunction::Square),
        Just(TestFunction::AtCap),
        (0.0f64..1.0).prop_map(TestFunction::Above),
        (0.0f64..3.0).prop_map(TestFunction::Power),
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn generated_models_validate(p in model()) {
        prop_assert!(p.clone().validate().is_ok(), "{:?}", p.violations());
    }

    #[test]
    fn cumulant_is_convex(p in model(), q1 in 0.0f64..6.0, q2 in 0.0f64..6.0) {
        let mid = cumulant(&p, 0.5 * (q1 + q2)).unwrap();
        let chord = 0.5 * (cumulant(&p, q1).unwrap() + cumulant(&p, q2).unwrap());
        prop_assert!(mid <= chord + 1e-12);
        prop_assert!(cumulant_derivative(&p, q1, 2).unwrap() >= 0.0);
    }

    #[test]
    fn eigenvalue_sits_between_bounds(p in model()) {
        let s = leading_eigenvalue(&p).unwrap();
        prop_assert!((s.lambda_star - (p.b - p.k)).abs() < 1e-15);
        prop_assert!(s.lambda <= s.lambda_star + 1e-12);
        prop_assert!(s.lambda >= s.lambda_star - 2.0 * p.b - 1e-12);
        prop_assert!(s.inf_psi_eta <= 1e-15);
        if s.regime == Regime::T {
            prop_assert!(s.q0 > 0.0);
            prop_assert!(cumulant_derivative(&p, s.q0, 1).unwrap().abs() < 1e-9);
        } else {
            prop_assert!(s.q0_at_boundary);
            prop_assert_eq!(s.lambda, s.lambda_star);
        }
    }

    #[test]
    fn phi_inverts_psi_right_of_minimum(p in model(), dq in 0.01f64..5.0) {
        let s = leading_eigenvalue(&p).unwrap();
        let q = s.q0 + dq;
        let back = right_inverse_phi(&p, psi_eta(&p, q).unwrap()).unwrap();
        prop_assert!((back - q).abs() < 1e-8 * q.max(1.0), "{} vs {}", back, q);
    }

    #[test]
    fn test_functions_respect_sup_norm(f in panel(), c in 0.5f64..3.0, u in 0.0f64..1.0) {
        let x = c * (1.0 - u).max(1e-9);
        let v = f.eval(x, c);
        prop_assert!(v.abs() <= f.sup_norm(c) * (1.0 + 1e-12));
    }

    #[test]
    fn estimates_are_affine(xs in prop::collection::vec(-10.0f64..10.0, 2..50), s in 0.1f64..5.0) {
        let e = Estimate::from_samples(&xs);
        let ys: Vec<f64> = xs.iter().map(|x| s * x).collect();
        let f = Estimate::from_samples(&ys);
        prop_assert!((f.mean - s * e.mean).abs() < 1e-9);
        prop_assert!((f.se - s * e.se).abs() < 1e-9);
    }

    #[test]
    fn ks_distance_is_symmetric_and_bounded(
        a in prop::collection::vec(0.0f64..1.0, 1..40),
        b in prop::collection::vec(0.0f64..1.0, 1..40),
    ) {
        let d = ks_two_sample(&a, &b);
        prop_assert!((0.0..=1.0).contains(&d));
        prop_assert!((d - ks_two_sample(&b, &a)).abs() < 1e-15);
        prop_assert_eq!(ks_two_sample(&a, &a), 0.0);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn population_respects_cap_and_counts(p in model(), u in 0.05f64..1.0, seed in any::<u64>()) {
        let times = vec![0.0, 0.5, 1.5, 3.0];
        let mut cfg = PopulationConfig::new(u * p.c, times.clone());
        cfg.max_cells = 20_000;
        let sim = PopulationSimulator::new(&p, cfg, TreeMode::Full).unwrap();
        let key = StreamKey::root(seed);
        let run = sim.run(key);
        prop_assert_eq!(run.snapshots.len(), times.len());
        prop_assert_eq!(run.snapshots[0].n, 1);
        for s in &run.snapshots {
            prop_assert_eq!(s.n, s.masses.len());
            prop_assert!(s.masses.iter().all(|&x| x > 0.0 && x <= p.c));
            let m = (-(p.b - p.k) * s.time).exp() * s.n as f64;
            prop_assert!((s.m - m).abs() <= 1e-12 * m.max(1.0));
        }
        prop_assert_eq!(&run, &sim.run(key));
    }

    #[test]
    fn scale_function_is_increasing(p in model()) {
        let w = ScaleFunction::with_defaults(&p).unwrap();
        prop_assert!((w.w(0.0) - 1.0 / p.a).abs() < 1e-12);
        let mut prev = w.w(0.0);
        for i in 1..=60 {
            let x = 0.1 * i as f64;
            let v = w.w(x);
            prop_assert!(v >= prev * (1.0 - 1e-10), "x={}: {} < {}", x, v, prev);
            prev = v;
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn invariant_cdf_is_a_distribution(p in model()) {
        prop_assume!(leading_eigenvalue(&p).unwrap().regime.is_positive_recurrent());
        let nu = build_invariant(&p).unwrap();
        let drift = leading_eigenvalue(&p).unwrap().mean_drift;
        // W(inf) = 1 / psi_eta'(0+)
        prop_assert!((nu.total_mass() * drift - 1.0).abs() < 1e-4, "{} vs {}", nu.total_mass(), 1.0 / drift);
        let mut prev = 0.0;
        for i in 1..=40 {
            let x = p.c * i as f64 / 40.0;
            let f = nu.nu_cdf(x);
            prop_assert!(f >= prev - 1e-12 && f <= 1.0 + 1e-9);
            prev = f;
        }
        prop_assert!((nu.nu_cdf(p.c) - 1.0).abs() < 1e-9);
        prop_assert!(nu.nu_cdf_left(p.c) <= 1.0 - nu.nu_atom().unwrap() + 1e-9);
    }
}
