use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::distributions::GhParams;
use crate::model::{update_proposal_params, BghPrior, Hyperparams, LatentState, Observation, ParametricIr};
use crate::quadrature::quad;

fn nu() -> GhParams {
    GhParams::new(1.46, 9.99, 8.13, 0.095, 0.048).unwrap()
}

fn hp() -> Hyperparams {
    Hyperparams {
        bern_prob: 0.15,
        noise_var: 0.05,
        amp_var: 0.6,
        ir_scale: 1.5,
    }
}

fn obs() -> Observation {
    let y = DVector::from_fn(30, |i, _| {
        0.8 * (0.45 * i as f64).sin().max(0.0) + 0.05 * (1.7 * i as f64).cos()
    });
    Observation::parametric(y, ParametricIr { scale: 1.5, length: 5 }).unwrap()
}

fn cfg() -> SamplerConfig {
    SamplerConfig {
        init: hp(),
        iterations: 10,
        ..SamplerConfig::default()
    }
}

fn random_bgh_state(rng: &mut ChaCha8Rng) -> LatentState {
    random_state(SamplerKind::Bgh, obs().m(), 0.3, &hp(), Some(&nu()), rng).unwrap()
}

#[test]
fn incremental_ratio_matches_full_recomputation() {
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let moves = MoveProbabilities::default();
    let prior = BghPrior::new(&nu(), hp().amp_var).unwrap();
    let o = obs();
    for trial in 0..100 {
        let state = random_bgh_state(&mut rng);
        let chain = BghChain::new(&cfg(), &o, state.clone(), &nu()).unwrap();
        let k = rng.random_range(0..o.m());
        let ctx = chain.cholesky().site_context(k, chain.observation());
        let mut cand = state.clone();
        let (mv, cur, new) = match state.w[k] {
            None => {
                let w = prior.mixing_sampler.sample(&mut rng);
                (SiteMove::Birth, None, Some(w))
            }
            Some(w) if trial % 3 == 0 => (SiteMove::Death, Some(w), None),
            Some(w) => {
                let (w2, kind) = propose_update_w(&prior, 0.5, &mut rng);
                (SiteMove::Update(kind), Some(w), Some(w2))
            }
        };
        cand.q[k] = new.is_some();
        cand.w[k] = new;
        if new.is_none() {
            cand.x[k] = 0.0;
        }
        let fast = site_log_ratio(&ctx, mv, cur, new, &prior, &hp(), &moves);
        let slow = acceptance_log_ratio(&state, &cand, mv, &o, &hp(), &nu(), &moves).unwrap();
        assert!(
            (fast - slow).abs() < 1e-8 * slow.abs().max(1.0),
            "trial {trial}: {fast} vs {slow}"
        );
    }
}

#[test]
fn birth_then_death_cancels() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let moves = MoveProbabilities::default();
    let o = obs();
    for _ in 0..20 {
        let state = random_bgh_state(&mut rng);
        let Some(k) = (0..o.m()).find(|&k| !state.q[k]) else {
            continue;
        };
        let w = 0.01 + rng.random::<f64>();
        let mut born = state.clone();
        born.q[k] = true;
        born.w[k] = Some(w);
        let a = acceptance_log_ratio(&state, &born, SiteMove::Birth, &o, &hp(), &nu(), &moves).unwrap();
        let b = acceptance_log_ratio(&born, &state, SiteMove::Death, &o, &hp(), &nu(), &moves).unwrap();
        assert!((a + b).abs() < 1e-10, "{a} {b}");
    }
}

#[test]
fn identical_update_has_unit_ratio_and_swaps_invert() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let prior = BghPrior::new(&nu(), hp().amp_var).unwrap();
    let moves = MoveProbabilities::default();
    let o = obs();
    let mut state = random_bgh_state(&mut rng);
    let k = 7;
    state.q[k] = true;
    state.w[k] = Some(0.2);
    let chain = BghChain::new(&cfg(), &o, state, &nu()).unwrap();
    let ctx = chain.cholesky().site_context(k, &o);
    for kind in [UpdateProposal::Prior, UpdateProposal::ZeroConditional] {
        let r = site_log_ratio(
            &ctx,
            SiteMove::Update(kind),
            Some(0.2),
            Some(0.2),
            &prior,
            &hp(),
            &moves,
        );
        assert_eq!(r, 0.0);
        let fwd = site_log_ratio(
            &ctx,
            SiteMove::Update(kind),
            Some(0.2),
            Some(0.05),
            &prior,
            &hp(),
            &moves,
        );
        let back = site_log_ratio(
            &ctx,
            SiteMove::Update(kind),
            Some(0.05),
            Some(0.2),
            &prior,
            &hp(),
            &moves,
        );
        assert!((fwd + back).abs() < 1e-12);
    }
}

#[test]
fn mismatched_transition_is_rejected() {
    let o = obs();
    let s = LatentState::empty(o.m());
    let moves = MoveProbabilities::default();
    assert!(acceptance_log_ratio(&s, &s, SiteMove::Birth, &o, &hp(), &nu(), &moves).is_err());
    let mut t = s.clone();
    t.q[1] = true;
    t.w[1] = Some(0.3);
    assert!(acceptance_log_ratio(&s, &t, SiteMove::Death, &o, &hp(), &nu(), &moves).is_err());
}

#[test]
fn update_proposal_branches() {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    let prior = BghPrior::new(&nu(), 4.0).unwrap();
    let n = 100_000;
    let mut first = 0usize;
    for _ in 0..n {
        let (w, kind) = propose_update_w(&prior, 0.5, &mut rng);
        assert!(w > 0.0);
        first += usize::from(kind == UpdateProposal::Prior);
    }
    let se = (0.25 / n as f64).sqrt();
    assert!((first as f64 / n as f64 - 0.5).abs() < 3.0 * se);
}

#[test]
fn zero_conditional_proposal_parameters() {
    let nu = nu();
    let sx = 2.0;
    let p = update_proposal_params(&nu, sx).unwrap();
    let gamma_n = (nu.alpha * nu.alpha - nu.beta * nu.beta).sqrt();
    assert!((p.lambda - (nu.lambda - 0.5)).abs() < 1e-15);
    assert!((p.gamma - (gamma_n * gamma_n + nu.beta * nu.beta).sqrt() / sx).abs() < 1e-12);
    assert!((p.delta - sx * (nu.delta * nu.delta + nu.mu * nu.mu).sqrt()).abs() < 1e-12);
    let dens = crate::distributions::GigDensity::new(p);
    let total = quad(|w| if w > 0.0 { dens.ln_pdf(w).exp() } else { 0.0 }, 0.0, f64::INFINITY);
    assert!((total - 1.0).abs() < 1e-8, "{total}");
}

#[test]
fn zero_conditional_is_posterior_of_w_at_zero_amplitude() {
    // GIG_N(w)·N(0; μ(w), w) ∝ q2(w): the log-ratio is constant in w.
    let prior = BghPrior::new(&nu(), 0.7).unwrap();
    let f = |w: f64| prior.mixing.ln_pdf(w) + prior.ln_amplitude_given_w(0.0, w) - prior.update_proposal.ln_pdf(w);
    let c = f(0.01);
    for w in [1e-4, 0.003, 0.1, 1.0, 7.0] {
        assert!((f(w) - c).abs() < 1e-9);
    }
}

#[test]
fn empty_support_gives_zero_amplitudes() {
    let mut rng = ChaCha8Rng::seed_from_u64(14);
    let o = obs();
    let mut chain = BghChain::new(&cfg(), &o, LatentState::empty(o.m()), &nu()).unwrap();
    chain.sample_amplitudes(&mut rng);
    assert!(chain.state().x.iter().all(|&x| x == 0.0));
}

#[test]
fn scalar_amplitude_moments() {
    let mut rng = ChaCha8Rng::seed_from_u64(15);
    let o = obs();
    let mut s = LatentState::empty(o.m());
    s.q[4] = true;
    s.w[4] = Some(0.3);
    let mut chain = BghChain::new(&cfg(), &o, s, &nu()).unwrap();
    let prior = BghPrior::new(&nu(), hp().amp_var).unwrap();
    // scalar formulas
    let h = o.h().column(4);
    let prec = h.norm_squared() / hp().noise_var + 1.0 / 0.3;
    let var = 1.0 / prec;
    let mean = var * (h.dot(o.y()) / hp().noise_var + prior.mean_model.mean(0.3) / 0.3);
    let n = 100_000;
    let (mut s1, mut s2) = (0.0, 0.0);
    for _ in 0..n {
        chain.sample_amplitudes(&mut rng);
        let x = chain.state().x[4];
        s1 += x;
        s2 += x * x;
    }
    let m = s1 / n as f64;
    let v = s2 / n as f64 - m * m;
    assert!((m - mean).abs() < 4.0 * (var / n as f64).sqrt());
    assert!((v - var).abs() < 4.0 * var * (2.0 / n as f64).sqrt());
}

#[test]
fn amplitude_covariance_matches_gamma() {
    let mut rng = ChaCha8Rng::seed_from_u64(16);
    let o = obs();
    let mut s = LatentState::empty(o.m());
    for (k, w) in [(3, 0.2), (5, 0.5), (6, 0.1), (12, 0.8)] {
        s.q[k] = true;
        s.w[k] = Some(w);
    }
    let mut chain = BghChain::new(&cfg(), &o, s.clone(), &nu()).unwrap();
    let cond = crate::model::conditional_amplitude_params(&s, &o, &hp(), &nu()).unwrap();
    let gamma = &cond.gamma_chol * cond.gamma_chol.transpose();
    let n = 100_000;
    let sites = [3, 5, 6, 12];
    let mut acc = nalgebra::DMatrix::<f64>::zeros(4, 4);
    for _ in 0..n {
        chain.sample_amplitudes(&mut rng);
        let d: Vec<f64> = sites
            .iter()
            .enumerate()
            .map(|(i, &k)| chain.state().x[k] - cond.mean[i])
            .collect();
        for i in 0..4 {
            for j in 0..4 {
                acc[(i, j)] += d[i] * d[j];
            }
        }
    }
    for i in 0..4 {
        for j in 0..4 {
            let est = acc[(i, j)] / n as f64;
            let se = ((gamma[(i, i)] * gamma[(j, j)] + gamma[(i, j)].powi(2)) / n as f64).sqrt();
            assert!((est - gamma[(i, j)]).abs() < 4.0 * se, "({i},{j})");
        }
    }
}

#[test]
fn iterations_keep_invariants_and_cache_coherent() {
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let o = obs();
    let c = SamplerConfig {
        sample_ir_scale: true,
        sample_noise_var: true,
        ..cfg()
    };
    let mut chain = BghChain::new(&c, &o, LatentState::empty(o.m()), &nu()).unwrap();
    for _ in 0..200 {
        for k in 0..o.m() {
            chain.rj_site_step(k, &mut rng).unwrap();
            let fresh =
                crate::model::log_marginal(chain.state(), chain.observation(), chain.hyperparams(), &nu()).unwrap();
            let cached = chain.cached_log_marginal();
            assert!(
                (fresh - cached).abs() < 1e-8 * fresh.abs().max(1.0),
                "{fresh} vs {cached}"
            );
        }
        chain.sample_amplitudes(&mut rng);
        chain.sample_hyperparams(&mut rng).unwrap();
        chain.sample_ir_scale(&mut rng).unwrap();
        let s = chain.state();
        s.validate(o.m()).unwrap();
        for k in 0..o.m() {
            assert_eq!(s.q[k], s.w[k].is_some());
        }
    }
    assert!(chain.counters().birth.accepted > 0);
}

#[test]
fn rejected_moves_leave_support_and_refresh_amplitudes() {
    let mut rng = ChaCha8Rng::seed_from_u64(18);
    let o = obs();
    let mut s = LatentState::empty(o.m());
    s.q[9] = true;
    s.w[9] = Some(0.4);
    // Death never proposed; every update candidate falls outside the guard band.
    let c = SamplerConfig {
        moves: MoveProbabilities {
            death: 0.0,
            update: 1.0,
            ..MoveProbabilities::default()
        },
        init: Hyperparams {
            bern_prob: 1e-300,
            ..hp()
        },
        sample_bern_prob: false,
        sample_amp_var: false,
        ..cfg()
    };
    let mut chain = BghChain::new(&c, &o, s, &nu()).unwrap();
    let before = chain.state().q.clone();
    let x0 = chain.state().x[9];
    chain.iteration(&mut rng).unwrap();
    assert_eq!(chain.state().q, before);
    assert_ne!(chain.state().x[9], x0);
}

#[test]
fn btg_odds_match_quadrature() {
    let mut rng = ChaCha8Rng::seed_from_u64(19);
    for _ in 0..50 {
        let hp = Hyperparams {
            bern_prob: rng.random_range(0.05..0.9),
            noise_var: rng.random_range(0.05..2.0),
            amp_var: rng.random_range(0.1..3.0),
            ir_scale: 1.0,
        };
        let energy = rng.random_range(0.3..4.0);
        let corr = rng.random_range(-3.0..5.0);
        let c = btg_site_conditional(corr, energy, &hp);
        // ∫₀^∞ exp(−(energy x² − 2 corr x)/(2σ²)) N⁺(x; 0, σ_x²) dx, relative to the x = 0 likelihood.
        let sx = hp.amp_var.sqrt();
        let integral = quad(
            |x| {
                let lik = -(energy * x * x - 2.0 * corr * x) / (2.0 * hp.noise_var);
                let prior = (2.0 / (2.0 * std::f64::consts::PI).sqrt() / sx).ln() - x * x / (2.0 * hp.amp_var);
                (lik + prior).exp()
            },
            0.0,
            f64::INFINITY,
        );
        let expect = (hp.bern_prob / (1.0 - hp.bern_prob)).ln() + integral.ln();
        assert!(
            (c.log_odds - expect).abs() < 1e-8 * expect.abs().max(1.0),
            "{} vs {}",
            c.log_odds,
            expect
        );
    }
}

#[test]
fn btg_tiny_inclusion_empties_support() {
    let mut rng = ChaCha8Rng::seed_from_u64(20);
    let o = obs();
    let c = SamplerConfig {
        init: Hyperparams {
            bern_prob: 1e-200,
            ..hp()
        },
        sample_bern_prob: false,
        ..cfg()
    };
    let init = random_state(SamplerKind::Btg, o.m(), 0.5, &hp(), None, &mut rng).unwrap();
    let mut chain = BtgChain::new(&c, &o, init).unwrap();
    for _ in 0..3 {
        chain.iteration(&mut rng).unwrap();
    }
    assert_eq!(chain.state().support_size(), 0);
    assert!(chain.state().x.iter().all(|&x| x == 0.0));
}

#[test]
fn btg_residual_stays_consistent() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let o = obs();
    let c = SamplerConfig {
        sample_ir_scale: true,
        ..cfg()
    };
    let mut chain = BtgChain::new(&c, &o, LatentState::empty(o.m())).unwrap();
    for _ in 0..100 {
        chain.iteration(&mut rng).unwrap();
        let fresh = chain.observation().residual(&chain.state().x);
        assert!((&fresh - chain.residual()).amax() < 1e-10);
        assert!(chain.state().x.iter().all(|&x| x >= 0.0));
        chain.state().validate(o.m()).unwrap();
    }
}

#[test]
fn scale_step_rejects_out_of_range_and_keeps_identity() {
    let mut rng = ChaCha8Rng::seed_from_u64(22);
    let o = obs();
    let c = SamplerConfig {
        sample_ir_scale: true,
        ir_scale_bounds: (1.4999, 1.5001),
        ir_scale_step: 1.0,
        ..cfg()
    };
    let mut chain = BtgChain::new(&c, &o, LatentState::empty(o.m())).unwrap();
    for _ in 0..50 {
        chain.sample_ir_scale(&mut rng).unwrap();
        assert!((chain.hyperparams().ir_scale - 1.5).abs() <= 1e-4);
    }
    let nonparam = Observation::new(o.y().clone(), o.h().clone()).unwrap();
    assert!(BtgChain::new(&c, &nonparam, LatentState::empty(o.m())).is_err());
}

#[test]
fn chains_are_reproducible() {
    let o = obs();
    let c = SamplerConfig {
        iterations: 30,
        seed: 5,
        ..cfg()
    };
    for kind in [SamplerKind::Bgh, SamplerKind::Btg] {
        let a = run_chain(&c, &o, empty_state(o.m()), kind, Some(&nu())).unwrap();
        let b = run_chain(&c, &o, empty_state(o.m()), kind, Some(&nu())).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.len(), 30);
        let d = run_chain(
            &SamplerConfig { seed: 6, ..c.clone() },
            &o,
            empty_state(o.m()),
            kind,
            Some(&nu()),
        )
        .unwrap();
        assert_ne!(a, d);
    }
    let par = run_chains(&c, &o, SamplerKind::Btg, None, 3, 2).unwrap();
    let seq = run_chains(&c, &o, SamplerKind::Btg, None, 3, 1).unwrap();
    assert_eq!(par, seq);
    assert_eq!(par[2].seed, 7);
    assert!(run_chain(&c, &o, empty_state(o.m()), SamplerKind::Bgh, None).is_err());
}

#[test]
fn store_round_trips_records() {
    let mut store = ChainStore::new(SamplerKind::Btg, 1, 70);
    let mut s = LatentState::empty(70);
    s.q[0] = true;
    s.x[0] = 0.5;
    s.q[69] = true;
    s.x[69] = 1.5;
    store.push(1, &s, &hp(), &MoveCounters::default());
    store.push(2, &LatentState::empty(70), &hp(), &MoveCounters::default());
    assert_eq!(store.q(0), s.q);
    assert_eq!(store.x(0), s.x);
    assert!(store.q(1).iter().all(|b| !b));
    assert_eq!(store.q_bits(0).len(), 70);
    assert!(store.q_bits(0).starts_with('1') && store.q_bits(0).ends_with('1'));
}
