use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use spikegh::diagnostics::{mpsrf, MultiChain};
use spikegh::distributions::{default_fit, GhParams, GigParams};
use spikegh::model::{ActiveSetCholesky, BghPrior, LatentState, Observation, ParametricIr};
use spikegh::simulation::reconstruction_metrics;
use spikegh::specfun::{log_bessel_k, log_bessel_k_ratio};

fn obs(scale: f64) -> Observation {
    let y = DVector::from_fn(40, |i, _| (0.3 * i as f64).sin().abs());
    Observation::parametric(y, ParametricIr { scale, length: 7 }).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn bessel_k_is_even_in_order_and_decreasing_in_x(order in -12.0..12.0f64, x in 1e-3..200.0f64) {
        let a = log_bessel_k(order, x).unwrap();
        prop_assert_eq!(a, log_bessel_k(-order, x).unwrap());
        prop_assert!(log_bessel_k(order, x * 1.01).unwrap() < a);
    }

    #[test]
    fn bessel_ratio_matches_difference(order in -6.0..6.0f64, x in 1e-2..100.0f64) {
        let direct = log_bessel_k(order + 1.0, x).unwrap() - log_bessel_k(order, x).unwrap();
        let ratio = log_bessel_k_ratio(order, x).unwrap();
        prop_assert!((direct - ratio).abs() <= 1e-10 * (1.0 + direct.abs()));
    }

    #[test]
    fn gig_moments_compose(lambda in -3.0..3.0f64, gamma in 0.1..5.0f64, delta in 0.1..5.0f64) {
        let p = GigParams::new(lambda, gamma, delta).unwrap();
        prop_assert_eq!(p.moment(0.0), 1.0);
        // Jensen: E[W^2] >= E[W]^2.
        prop_assert!(p.moment(2.0) >= p.moment(1.0).powi(2) * (1.0 - 1e-12));
    }

    #[test]
    fn gh_affine_round_trips(a in 0.1..10.0f64, b in -5.0..5.0f64, x in -3.0..3.0f64) {
        let p = GhParams::new(0.7, 2.5, 0.8, 1.2, 0.1).unwrap();
        let q = p.affine(a, b).unwrap();
        let back = q.affine(1.0 / a, -b / a).unwrap();
        for (u, v) in [(p.alpha, back.alpha), (p.beta, back.beta), (p.delta, back.delta), (p.mu, back.mu)] {
            prop_assert!((u - v).abs() <= 1e-12 * (1.0 + u.abs()));
        }
        // Change of variables.
        prop_assert!((q.log_pdf(a * x + b) + a.ln() - p.log_pdf(x)).abs() < 1e-10);
    }

    #[test]
    fn cache_agrees_with_refactor_after_random_ops(seed in 0u64..1000, ops in prop::collection::vec((0usize..34, 0u8..3), 1..60)) {
        let nu = default_fit().nu_n;
        let prior = BghPrior::new(&nu, 0.8).unwrap();
        let o = obs(2.0);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut chol = ActiveSetCholesky::empty(o.m(), 0.05, prior.mean_model);
        for (k, op) in ops {
            let w = prior.mixing_sampler.sample(&mut rng);
            match (chol.contains(k), op) {
                (false, _) => chol.insert(k, w, &o).unwrap(),
                (true, 0) => chol.remove(k).unwrap(),
                (true, _) => chol.update_w(k, w, &o).unwrap(),
            }
        }
        let sites: Vec<(usize, f64)> = chol.active().iter().copied().zip(chol.variances().iter().copied()).collect();
        let full = ActiveSetCholesky::build(&o, 0.05, prior.mean_model, &sites).unwrap();
        let (a, b) = (chol.log_evidence(&o), full.log_evidence(&o));
        prop_assert!((a - b).abs() <= 1e-9 * (1.0 + b.abs()));
    }

    #[test]
    fn mpsrf_is_affine_invariant_and_bounded_below(seed in 0u64..500, scale in 0.1..50.0f64, shift in -100.0..100.0f64) {
        use rand_distr::{Distribution, StandardNormal};
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = 200;
        let chains: Vec<Vec<Vec<f64>>> = (0..3)
            .map(|_| (0..n).map(|_| (0..3).map(|_| Distribution::<f64>::sample(&StandardNormal, &mut rng)).collect()).collect())
            .collect();
        let a = DMatrix::from_row_slice(3, 3, &[scale, 1.0, 0.0, 0.0, 1.0, 2.0, 0.5, 0.0, 1.0]);
        let moved: Vec<Vec<Vec<f64>>> = chains
            .iter()
            .map(|c| c.iter().map(|v| (&a * DVector::from_column_slice(v)).add_scalar(shift).as_slice().to_vec()).collect())
            .collect();
        let r0 = mpsrf(&MultiChain::from_dense(&chains).unwrap()).unwrap();
        let r1 = mpsrf(&MultiChain::from_dense(&moved).unwrap()).unwrap();
        prop_assert!((r0 - r1).abs() <= 1e-8 * r0);
        prop_assert!(r0 >= (n as f64 - 1.0) / n as f64 - 1e-12);
    }

    #[test]
    fn metrics_stay_in_range(truth_bits in prop::collection::vec(any::<bool>(), 20), est in prop::collection::vec(0.0..2.0f64, 20)) {
        let mut truth = LatentState::empty(20);
        for (k, &b) in truth_bits.iter().enumerate() {
            if b {
                truth.q[k] = true;
                truth.x[k] = 1.0;
            }
        }
        let m = reconstruction_metrics(&est, None, &truth, 1).unwrap();
        prop_assert!((0.0..=1.0).contains(&m.precision) && (0.0..=1.0).contains(&m.recall));
        prop_assert!(m.matched <= m.detected);
        let exact = reconstruction_metrics(&truth.x, None, &truth, 0).unwrap();
        prop_assert_eq!(exact.rmse, 0.0);
        prop_assert_eq!(exact.recall, 1.0);
        prop_assert_eq!(exact.precision, 1.0);
    }
}
