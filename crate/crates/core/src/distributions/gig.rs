//! Generalized inverse Gaussian distribution `GIG(λ, γ, δ)` with density
//! proportional to `w^{λ-1} exp(-(δ²/w + γ²w)/2)` on `w > 0`.

use std::f64::consts::{LN_2, PI};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::specfun::ln_k_and_ratio;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GigParams {
    pub lambda: f64,
    pub gamma: f64,
    pub delta: f64,
}

impl GigParams {
    pub fn new(lambda: f64, gamma: f64, delta: f64) -> Result<Self> {
        let p = Self { lambda, gamma, delta };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !self.lambda.is_finite() {
            return Err(Error::domain(format!("GIG index must be finite, got {}", self.lambda)));
        }
        if !(self.gamma > 0.0 && self.gamma.is_finite()) {
            return Err(Error::domain(format!("GIG gamma must be positive, got {}", self.gamma)));
        }
        if !(self.delta > 0.0 && self.delta.is_finite()) {
            return Err(Error::domain(format!("GIG delta must be positive, got {}", self.delta)));
        }
        Ok(())
    }

    /// `δγ`, the concentration of the standardized law.
    pub fn omega(&self) -> f64 {
        self.delta * self.gamma
    }

    /// `δ/γ`, the scale of the standardized law.
    pub fn scale(&self) -> f64 {
        self.delta / self.gamma
    }

    /// Log of the normalizing constant `(γ/δ)^λ / (2 K_λ(δγ))`.
    pub fn log_norm_const(&self) -> f64 {
        let (ln_k, _) = ln_k_and_ratio(self.lambda.abs(), self.omega());
        self.lambda * (self.gamma.ln() - self.delta.ln()) - LN_2 - ln_k
    }

    pub fn log_pdf(&self, w: f64) -> Result<f64> {
        if !(w > 0.0) || !w.is_finite() {
            return Err(Error::domain(format!("GIG density needs w > 0, got {w}")));
        }
        Ok(self.log_norm_const() + self.log_kernel(w))
    }

    /// Unnormalized log density.
    #[inline]
    pub fn log_kernel(&self, w: f64) -> f64 {
        (self.lambda - 1.0) * w.ln() - 0.5 * (self.delta * self.delta / w + self.gamma * self.gamma * w)
    }

    /// `E[W^p] = (δ/γ)^p K_{λ+p}(δγ) / K_λ(δγ)`.
    pub fn moment(&self, p: f64) -> f64 {
        if p == 0.0 {
            return 1.0;
        }
        let omega = self.omega();
        let (ln_num, _) = ln_k_and_ratio((self.lambda + p).abs(), omega);
        let (ln_den, _) = ln_k_and_ratio(self.lambda.abs(), omega);
        (p * self.scale().ln() + ln_num - ln_den).exp()
    }

    pub fn mean(&self) -> f64 {
        self.moment(1.0)
    }

    pub fn mode(&self) -> f64 {
        let lm1 = self.lambda - 1.0;
        let g2 = self.gamma * self.gamma;
        let root = (lm1 * lm1 + self.omega() * self.omega()).sqrt();
        if lm1 >= 0.0 {
            (lm1 + root) / g2
        } else {
            self.delta * self.delta / (root - lm1)
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        GigSampler::new(*self).sample(rng)
    }
}

/// Which of the three rejection schemes is used for a parameter set.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GigMethod {
    /// Ratio of uniforms with the mode as centre; used for large index or concentration.
    ShiftedRatioOfUniforms,
    /// Plain ratio of uniforms.
    RatioOfUniforms,
    /// Piecewise constant/power/exponential hat for `|λ| < 1` and small concentration.
    PiecewiseHat,
}

#[derive(Debug, Clone, Copy)]
enum Prepared {
    Rou {
        shift: f64,
        u_lo: f64,
        u_hi: f64,
    },
    Hat {
        x0: f64,
        k0: f64,
        k1: f64,
        k2: f64,
        areas: [f64; 3],
    },
}

/// Exact GIG sampler with the setup precomputed, after Hörmann and Leydold.
///
/// Draws `Y` from the standardized density `y^{λ-1} exp(-ω(y + 1/y)/2)` with
/// `λ = |index|`, then returns `scale·Y` (or `scale/Y` for a negative index).
#[derive(Debug, Clone, Copy)]
pub struct GigSampler {
    params: GigParams,
    lambda: f64,
    omega: f64,
    /// Log of the square root of the standardized density at its mode.
    ln_sqrt_peak: f64,
    mode: f64,
    method: GigMethod,
    prepared: Prepared,
}

impl GigSampler {
    pub fn new(params: GigParams) -> Self {
        let lambda = params.lambda.abs();
        let omega = params.omega();
        let method = if lambda > 2.0 || omega > 3.0 {
            GigMethod::ShiftedRatioOfUniforms
        } else if lambda >= 1.0 - 2.25 * omega * omega || omega > 0.2 {
            GigMethod::RatioOfUniforms
        } else {
            GigMethod::PiecewiseHat
        };
        Self::with_method(params, method)
    }

    /// Forces a particular scheme; every scheme is exact wherever its setup is valid.
    pub fn with_method(params: GigParams, method: GigMethod) -> Self {
        let lambda = params.lambda.abs();
        let omega = params.omega();
        let mode = std_mode(lambda, omega);
        let ln_sqrt_peak = 0.5 * std_log_kernel(lambda, omega, mode);
        let prepared = match method {
            GigMethod::RatioOfUniforms => {
                let xp = ((lambda + 1.0) + ((lambda + 1.0).powi(2) + omega * omega).sqrt()) / omega;
                let u_hi = xp * (0.5 * std_log_kernel(lambda, omega, xp) - ln_sqrt_peak).exp();
                Prepared::Rou {
                    shift: 0.0,
                    u_lo: 0.0,
                    u_hi,
                }
            }
            GigMethod::ShiftedRatioOfUniforms => {
                // Extremes of (x - m) sqrt(f(x)) are roots of x³ + a x² + b x + c.
                let a = -(2.0 * (lambda + 1.0) / omega + mode);
                let b = 2.0 * (lambda - 1.0) * mode / omega - 1.0;
                let c = mode;
                let p = b - a * a / 3.0;
                let q = 2.0 * a * a * a / 27.0 - a * b / 3.0 + c;
                let phi = (-0.5 * q * (-27.0 / (p * p * p)).sqrt()).clamp(-1.0, 1.0).acos();
                let fd = (-4.0 * p / 3.0).sqrt();
                let x_lo = fd * (phi / 3.0 + 4.0 * PI / 3.0).cos() - a / 3.0;
                let x_hi = fd * (phi / 3.0).cos() - a / 3.0;
                let u_lo = (x_lo - mode) * (0.5 * std_log_kernel(lambda, omega, x_lo) - ln_sqrt_peak).exp();
                let u_hi = (x_hi - mode) * (0.5 * std_log_kernel(lambda, omega, x_hi) - ln_sqrt_peak).exp();
                Prepared::Rou {
                    shift: mode,
                    u_lo,
                    u_hi,
                }
            }
            GigMethod::PiecewiseHat => {
                assert!(lambda < 1.0, "piecewise hat requires |lambda| < 1");
                let x0 = omega / (1.0 - lambda);
                let k0 = std_log_kernel(lambda, omega, mode).exp();
                let a0 = k0 * x0;
                let two_over_omega = 2.0 / omega;
                let (k1, a1, k2, a2) = if x0 >= two_over_omega {
                    let k2 = x0.powf(lambda - 1.0);
                    (0.0, 0.0, k2, k2 * 2.0 * (-omega * x0 / 2.0).exp() / omega)
                } else {
                    let k1 = (-omega).exp();
                    let a1 = if lambda == 0.0 {
                        k1 * (2.0 / (omega * omega)).ln()
                    } else {
                        k1 / lambda * (two_over_omega.powf(lambda) - x0.powf(lambda))
                    };
                    let k2 = two_over_omega.powf(lambda - 1.0);
                    (k1, a1, k2, k2 * 2.0 * (-1.0f64).exp() / omega)
                };
                Prepared::Hat {
                    x0,
                    k0,
                    k1,
                    k2,
                    areas: [a0, a1, a2],
                }
            }
        };
        Self {
            params,
            lambda,
            omega,
            ln_sqrt_peak,
            mode,
            method,
            prepared,
        }
    }

    pub fn params(&self) -> &GigParams {
        &self.params
    }

    pub fn method(&self) -> GigMethod {
        self.method
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let y = self.sample_standard(rng);
        if self.params.lambda < 0.0 {
            self.params.scale() / y
        } else {
            self.params.scale() * y
        }
    }

    fn sample_standard<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let (lambda, omega) = (self.lambda, self.omega);
        match self.prepared {
            Prepared::Rou { shift, u_lo, u_hi } => loop {
                let u = u_lo + (u_hi - u_lo) * rng.random::<f64>();
                let v: f64 = 1.0 - rng.random::<f64>();
                let x = u / v + shift;
                if x <= 0.0 {
                    continue;
                }
                if v.ln() <= 0.5 * std_log_kernel(lambda, omega, x) - self.ln_sqrt_peak {
                    return x;
                }
            },
            Prepared::Hat { x0, k0, k1, k2, areas } => loop {
                let total = areas[0] + areas[1] + areas[2];
                let mut v = total * rng.random::<f64>();
                let (x, hat) = if v <= areas[0] {
                    (x0 * v / areas[0], k0)
                } else {
                    v -= areas[0];
                    if v <= areas[1] {
                        if lambda == 0.0 {
                            let x = x0 * (v / k1).exp();
                            (x, k1 / x)
                        } else {
                            let x = (x0.powf(lambda) + lambda / k1 * v).powf(1.0 / lambda);
                            (x, k1 * x.powf(lambda - 1.0))
                        }
                    } else {
                        v -= areas[1];
                        let a = x0.max(2.0 / omega);
                        let x = -2.0 / omega * ((-omega / 2.0 * a).exp() - omega / (2.0 * k2) * v).ln();
                        (x, k2 * (-omega / 2.0 * x).exp())
                    }
                };
                if !(x > 0.0) || !x.is_finite() {
                    continue;
                }
                let u = rng.random::<f64>() * hat;
                if u.ln() <= std_log_kernel(lambda, omega, x) {
                    return x;
                }
            },
        }
    }

    /// Mode of the standardized law (before scaling).
    pub fn standard_mode(&self) -> f64 {
        self.mode
    }
}

#[inline]
fn std_log_kernel(lambda: f64, omega: f64, x: f64) -> f64 {
    (lambda - 1.0) * x.ln() - 0.5 * omega * (x + 1.0 / x)
}

fn std_mode(lambda: f64, omega: f64) -> f64 {
    let lm1 = lambda - 1.0;
    let root = (lm1 * lm1 + omega * omega).sqrt();
    if lm1 >= 0.0 {
        (lm1 + root) / omega
    } else {
        omega / (root - lm1)
    }
}

/// Density of `GIG(params)` with the normalizer cached, for inner loops.
#[derive(Debug, Clone, Copy)]
pub struct GigDensity {
    pub params: GigParams,
    log_norm: f64,
}

impl GigDensity {
    pub fn new(params: GigParams) -> Self {
        Self {
            params,
            log_norm: params.log_norm_const(),
        }
    }

    #[inline]
    pub fn ln_pdf(&self, w: f64) -> f64 {
        self.log_norm + self.params.log_kernel(w)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn mean_and_se(xs: &[f64]) -> (f64, f64) {
        let n = xs.len() as f64;
        let m = xs.iter().sum::<f64>() / n;
        let v = xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0);
        (m, (v / n).sqrt())
    }

    #[test]
    fn rejects_invalid_params() {
        assert!(GigParams::new(0.5, 0.0, 1.0).is_err());
        assert!(GigParams::new(0.5, 1.0, -1.0).is_err());
        assert!(GigParams::new(f64::NAN, 1.0, 1.0).is_err());
        let p = GigParams::new(0.5, 1.0, 1.0).unwrap();
        assert!(p.log_pdf(0.0).is_err());
        assert!(p.log_pdf(-1.0).is_err());
    }

    #[test]
    fn mode_matches_stationary_point() {
        let p = GigParams::new(2.0, 1.5, 0.5).unwrap();
        let expected = ((1.0) + (1.0f64 + 0.25 * 2.25).sqrt()) / 2.25;
        assert!((p.mode() - expected).abs() < 1e-14);
        let f = |w: f64| p.log_pdf(w).unwrap();
        let h = 1e-4;
        assert!(f(expected) > f(expected + h) && f(expected) > f(expected - h));
    }

    #[test]
    fn inverse_gaussian_special_case() {
        // GIG(-1/2, γ, δ) is inverse Gaussian with mean δ/γ and shape δ².
        let (gamma, delta) = (2.0, 1.0);
        let p = GigParams::new(-0.5, gamma, delta).unwrap();
        let (mean, shape) = (delta / gamma, delta * delta);
        let w = 1.0f64;
        let ig =
            (shape / (2.0 * PI * w.powi(3))).sqrt() * (-shape * (w - mean).powi(2) / (2.0 * mean * mean * w)).exp();
        assert!((p.log_pdf(w).unwrap() - ig.ln()).abs() < 1e-13);
    }

    #[test]
    fn moment_trivia() {
        let p = GigParams::new(-0.5, 2.0, 1.0).unwrap();
        assert_eq!(p.moment(0.0), 1.0);
        assert!((p.moment(1.0) - 0.5).abs() < 1e-14);
    }

    #[test]
    fn method_selection_covers_all_regions() {
        let pick = |l, o: f64| GigSampler::new(GigParams::new(l, o.sqrt(), o.sqrt()).unwrap()).method();
        assert_eq!(pick(3.0, 1.0), GigMethod::ShiftedRatioOfUniforms);
        assert_eq!(pick(0.5, 5.0), GigMethod::ShiftedRatioOfUniforms);
        assert_eq!(pick(1.5, 1.0), GigMethod::RatioOfUniforms);
        assert_eq!(pick(0.2, 0.05), GigMethod::PiecewiseHat);
        assert_eq!(pick(-0.2, 0.05), GigMethod::PiecewiseHat);
    }

    #[test]
    fn every_method_reproduces_the_mean() {
        // Parameters where all three schemes have valid setups.
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for &(l, g, d) in &[(0.4, 0.3, 0.5), (-0.7, 0.9, 0.6), (0.0, 0.5, 0.3)] {
            let p = GigParams::new(l, g, d).unwrap();
            for method in [
                GigMethod::RatioOfUniforms,
                GigMethod::PiecewiseHat,
                GigMethod::ShiftedRatioOfUniforms,
            ] {
                let s = GigSampler::with_method(p, method);
                let xs: Vec<f64> = (0..100_000).map(|_| s.sample(&mut rng)).collect();
                assert!(xs.iter().all(|&x| x > 0.0));
                let (m, se) = mean_and_se(&xs);
                assert!((m - p.mean()).abs() < 4.0 * se, "{p:?} {method:?}: {m} vs {}", p.mean());
            }
        }
    }
}
