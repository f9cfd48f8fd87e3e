//! Normal distribution truncated to `[0, ∞)`.

use std::f64::consts::PI;

use rand::Rng;
use rand_distr::{Exp1, StandardNormal};

use crate::specfun::log_ndtr;

/// Above this standardized truncation point the exponential proposal wins.
const EXP_PROPOSAL_CUTOFF: f64 = 0.257;

/// Draws from `N(mean, std²)` restricted to `[0, ∞)`.
///
/// Rejection from the parent normal when the bound sits left of the mean, from
/// the half-normal just right of it, and Robert's translated-exponential
/// proposal in the tail; expected cost is bounded for every `mean`.
pub fn truncnorm_sample<R: Rng + ?Sized>(mean: f64, std: f64, rng: &mut R) -> f64 {
    debug_assert!(std > 0.0);
    let a = -mean / std;
    let z = standard_lower_truncated(a, rng);
    (mean + std * z).max(0.0)
}

/// Standard normal conditioned on `Z ≥ a`.
fn standard_lower_truncated<R: Rng + ?Sized>(a: f64, rng: &mut R) -> f64 {
    if a <= 0.0 {
        loop {
            let z: f64 = rng.sample(StandardNormal);
            if z >= a {
                return z;
            }
        }
    } else if a < EXP_PROPOSAL_CUTOFF {
        loop {
            let z: f64 = rng.sample::<f64, _>(StandardNormal).abs();
            if z >= a {
                return z;
            }
        }
    } else {
        let rate = 0.5 * (a + (a * a + 4.0).sqrt());
        loop {
            let e: f64 = rng.sample(Exp1);
            let z = a + e / rate;
            let u: f64 = rng.random();
            if u.ln() <= -0.5 * (z - rate) * (z - rate) {
                return z;
            }
        }
    }
}

/// Log density of `N(mean, std²)` truncated to `[0, ∞)`; `-∞` below zero.
pub fn truncnorm_log_pdf(x: f64, mean: f64, std: f64) -> f64 {
    if x < 0.0 {
        return f64::NEG_INFINITY;
    }
    let z = (x - mean) / std;
    -0.5 * z * z - 0.5 * (2.0 * PI).ln() - std.ln() - log_ndtr(mean / std)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn half_normal_mean() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let n = 100_000;
        let xs: Vec<f64> = (0..n).map(|_| truncnorm_sample(0.0, 1.0, &mut rng)).collect();
        assert!(xs.iter().all(|&x| x >= 0.0));
        let m = xs.iter().sum::<f64>() / n as f64;
        let sd = (1.0 - 2.0 / PI).sqrt();
        assert!((m - (2.0 / PI).sqrt()).abs() < 3.0 * sd / (n as f64).sqrt());
    }

    #[test]
    fn far_tail_terminates() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..1000 {
            let x = truncnorm_sample(-40.0, 1.0, &mut rng);
            assert!(x >= 0.0 && x < 1.0);
        }
    }

    #[test]
    fn log_pdf_zero_below_support() {
        assert_eq!(truncnorm_log_pdf(-1e-9, 0.0, 1.0), f64::NEG_INFINITY);
        let at_zero = truncnorm_log_pdf(0.0, 0.0, 1.0).exp();
        assert!((at_zero - (2.0 / PI).sqrt()).abs() < 1e-15);
    }
}
