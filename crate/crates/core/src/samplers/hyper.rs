//! Conditional draws of `λ`, `σ_x²`, `σ²` and `s` shared by both samplers.

use rand::Rng;
use rand_distr::{Beta, Distribution, Gamma, StandardNormal};

use crate::distributions::GhParams;
use crate::error::{Error, Result};

/// `λ ~ Beta(1 + L, 1 + M − L)` under a uniform prior.
pub fn draw_bern_prob<R: Rng + ?Sized>(active: usize, m: usize, rng: &mut R) -> Result<f64> {
    let beta = Beta::new(1.0 + active as f64, 1.0 + (m - active) as f64)
        .map_err(|e| Error::domain(format!("beta posterior: {e}")))?;
    // Keep strictly inside (0, 1); the support prior takes logs of both λ and 1 − λ.
    Ok(beta.sample(rng).clamp(f64::MIN_POSITIVE, 1.0 - f64::EPSILON))
}

/// `σ² ~ IG(a₀ + N/2, b₀ + rss/2)`.
pub fn draw_noise_var<R: Rng + ?Sized>(rss: f64, n: usize, prior: (f64, f64), rng: &mut R) -> Result<f64> {
    let shape = prior.0 + 0.5 * n as f64;
    let rate = prior.1 + 0.5 * rss;
    if !(shape > 0.0 && rate > 0.0) {
        return Err(Error::domain(format!(
            "noise posterior IG({shape}, {rate}) is improper"
        )));
    }
    let g = Gamma::new(shape, 1.0 / rate).map_err(|e| Error::domain(format!("gamma: {e}")))?;
    Ok(1.0 / g.sample(rng))
}

/// One random-walk step on `ln v` for a positive parameter with a flat prior on
/// `[lo, hi]`. `log_target` is the log conditional density of `v` itself; the
/// Jacobian of the log transform is added here. Returns the new value and whether
/// the proposal was accepted.
pub fn log_scale_step<R, F>(current: f64, step: f64, bounds: (f64, f64), mut log_target: F, rng: &mut R) -> (f64, bool)
where
    R: Rng + ?Sized,
    F: FnMut(f64) -> f64,
{
    let z: f64 = rng.sample(StandardNormal);
    let cand = current * (step * z).exp();
    if cand < bounds.0 || cand > bounds.1 {
        return (current, false);
    }
    let log_a = log_target(cand) - log_target(current) + (cand / current).ln();
    if rng.random::<f64>().ln() < log_a {
        (cand, true)
    } else {
        (current, false)
    }
}

/// `Σ_k [ln GIG_N(σ_x²)(w_k) + ln N(x_k; σ_x μ_N + w_k β_N/σ_x, w_k)]` up to terms
/// free of `σ_x²`. The GIG normalizer depends on `σ_x` only through `(γ/δ)^λ`
/// because `δγ` is scale-free.
pub fn bgh_amp_var_log_target(amp_var: f64, atoms: &[(f64, f64)], nu_n: &GhParams) -> f64 {
    let sx = amp_var.sqrt();
    let g2 = {
        let g = nu_n.gamma();
        g * g
    };
    let d2 = nu_n.delta * nu_n.delta;
    let mut acc = -nu_n.lambda * atoms.len() as f64 * amp_var.ln();
    for &(x, w) in atoms {
        let mean = sx * nu_n.mu + w * nu_n.beta / sx;
        let r = x - mean;
        acc -= 0.5 * (d2 * amp_var / w + g2 * w / amp_var + r * r / w);
    }
    acc
}

/// `Σ_k ln N⁺(x_k; 0, σ_x²)` up to terms free of `σ_x²`.
pub fn btg_amp_var_log_target(amp_var: f64, amplitudes: &[f64]) -> f64 {
    let ss: f64 = amplitudes.iter().map(|x| x * x).sum();
    -0.5 * amplitudes.len() as f64 * amp_var.ln() - 0.5 * ss / amp_var
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::distributions::{scale_gh_prior, GigDensity};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;

    fn nu() -> GhParams {
        GhParams::new(1.4, 6.0, 4.5, 0.3, 0.05).unwrap()
    }

    #[test]
    fn bgh_target_differences_match_direct_densities() {
        let atoms = [(0.3, 0.05), (1.2, 0.4), (-0.1, 0.02)];
        let direct = |v: f64| {
            let sx = v.sqrt();
            let (_, gig) = scale_gh_prior(&nu(), sx).unwrap();
            let dens = GigDensity::new(gig);
            atoms
                .iter()
                .map(|&(x, w)| {
                    let m = sx * nu().mu + w * nu().beta / sx;
                    dens.ln_pdf(w) - 0.5 * ((2.0 * PI * w).ln() + (x - m) * (x - m) / w)
                })
                .sum::<f64>()
        };
        for (a, b) in [(0.5, 2.0), (1e-3, 0.7), (3.0, 30.0)] {
            let lhs = bgh_amp_var_log_target(a, &atoms, &nu()) - bgh_amp_var_log_target(b, &atoms, &nu());
            let rhs = direct(a) - direct(b);
            assert!((lhs - rhs).abs() < 1e-9 * rhs.abs().max(1.0), "{a} {b}: {lhs} vs {rhs}");
        }
    }

    #[test]
    fn btg_target_differences_match_direct_densities() {
        let xs = [0.3, 1.1, 0.02];
        let direct = |v: f64| {
            xs.iter()
                .map(|x| 2f64.ln() - 0.5 * (2.0 * PI * v).ln() - x * x / (2.0 * v))
                .sum::<f64>()
        };
        let lhs = btg_amp_var_log_target(0.4, &xs) - btg_amp_var_log_target(2.5, &xs);
        assert!((lhs - (direct(0.4) - direct(2.5))).abs() < 1e-12);
    }

    #[test]
    fn empty_support_beta_mean() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let m = 64;
        let n = 100_000;
        let mean = (0..n).map(|_| draw_bern_prob(0, m, &mut rng).unwrap()).sum::<f64>() / n as f64;
        let expect = 1.0 / (m as f64 + 2.0);
        let var = expect * (1.0 - expect) / (m as f64 + 3.0);
        assert!((mean - expect).abs() < 3.0 * (var / n as f64).sqrt());
    }

    #[test]
    fn noise_draw_mean() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let (rss, n) = (8.0, 40);
        let draws = 50_000;
        let mean = (0..draws)
            .map(|_| draw_noise_var(rss, n, (0.0, 0.0), &mut rng).unwrap())
            .sum::<f64>()
            / draws as f64;
        // IG(20, 4): mean 4/19
        assert!((mean - 4.0 / 19.0).abs() < 0.005);
        assert!(draw_noise_var(0.0, 4, (0.0, 0.0), &mut rng).is_err());
    }

    #[test]
    fn out_of_bounds_proposals_rejected() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..1000 {
            let (v, acc) = log_scale_step(1.0, 5.0, (0.999, 1.001), |_| 0.0, &mut rng);
            if acc {
                assert!((0.999..=1.001).contains(&v));
            } else {
                assert_eq!(v, 1.0);
            }
        }
    }

    #[test]
    fn amp_var_chain_recovers_truth() {
        // Latent (x, w) drawn from the prior at σ_x² = 4; the flat-prior posterior concentrates near 4.
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let nu = nu();
        let (gh, _) = scale_gh_prior(&nu, 2.0).unwrap();
        let mix = crate::distributions::GigSampler::new(gh.mixing());
        let atoms: Vec<(f64, f64)> = (0..200)
            .map(|_| {
                let w = mix.sample(&mut rng);
                let z: f64 = rng.sample(StandardNormal);
                (gh.mu + gh.beta * w + w.sqrt() * z, w)
            })
            .collect();
        let mut v = 1.0;
        let mut sum = 0.0;
        let steps = 100_000;
        for _ in 0..steps {
            v = log_scale_step(
                v,
                0.2,
                (1e-6, 1e6),
                |a| bgh_amp_var_log_target(a, &atoms, &nu),
                &mut rng,
            )
            .0;
            sum += v;
        }
        let mean = sum / steps as f64;
        assert!((3.0..=5.3).contains(&mean), "{mean}");
    }
}
