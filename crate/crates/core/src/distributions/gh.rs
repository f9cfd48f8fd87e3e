//! Five-parameter generalized hyperbolic distribution `GH(λ, α, β, δ, μ)`.

use std::f64::consts::PI;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::gig::{GigParams, GigSampler};
use crate::error::{Error, Result};
use crate::specfun::ln_k_and_ratio;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GhParams {
    pub lambda: f64,
    pub alpha: f64,
    pub beta: f64,
    pub delta: f64,
    pub mu: f64,
}

impl GhParams {
    pub fn new(lambda: f64, alpha: f64, beta: f64, delta: f64, mu: f64) -> Result<Self> {
        let p = Self {
            lambda,
            alpha,
            beta,
            delta,
            mu,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        let finite = [self.lambda, self.alpha, self.beta, self.delta, self.mu]
            .iter()
            .all(|v| v.is_finite());
        if !finite {
            return Err(Error::domain(format!("GH parameters must be finite: {self:?}")));
        }
        if !(self.alpha > self.beta.abs()) {
            return Err(Error::domain(format!(
                "GH requires alpha > |beta|, got alpha={} beta={}",
                self.alpha, self.beta
            )));
        }
        if !(self.delta > 0.0) {
            return Err(Error::domain(format!("GH requires delta > 0, got {}", self.delta)));
        }
        Ok(())
    }

    /// `γ = sqrt(α² − β²)`.
    pub fn gamma(&self) -> f64 {
        ((self.alpha - self.beta) * (self.alpha + self.beta)).sqrt()
    }

    /// The GIG law of the latent variance in the normal mean-variance mixture.
    pub fn mixing(&self) -> GigParams {
        GigParams {
            lambda: self.lambda,
            gamma: self.gamma(),
            delta: self.delta,
        }
    }

    /// Log of `(γ/δ)^λ / (sqrt(2π) K_λ(δγ))`.
    pub fn log_norm_const(&self) -> f64 {
        let gamma = self.gamma();
        let (ln_k, _) = ln_k_and_ratio(self.lambda.abs(), self.delta * gamma);
        self.lambda * (gamma.ln() - self.delta.ln()) - 0.5 * (2.0 * PI).ln() - ln_k
    }

    pub fn log_pdf(&self, x: f64) -> f64 {
        self.log_norm_const() + self.log_kernel(x)
    }

    /// The `x`-dependent part of the log density.
    #[inline]
    pub fn log_kernel(&self, x: f64) -> f64 {
        let dx = x - self.mu;
        let r = self.delta.hypot(dx);
        let nu = self.lambda - 0.5;
        let (ln_k, _) = ln_k_and_ratio(nu.abs(), self.alpha * r);
        ln_k + nu * (r.ln() - self.alpha.ln()) + self.beta * dx
    }

    /// Draws `w ~ GIG(λ, γ, δ)` then `x ~ N(μ + βw, w)`.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        GhSampler::new(*self).sample(rng)
    }

    /// Parameters of `aX + b`.
    pub fn affine(&self, a: f64, b: f64) -> Result<Self> {
        if a == 0.0 || !a.is_finite() || !b.is_finite() {
            return Err(Error::domain(format!(
                "affine map needs finite a != 0, got a={a} b={b}"
            )));
        }
        let s = a.abs();
        Ok(Self {
            lambda: self.lambda,
            alpha: self.alpha / s,
            beta: self.beta / a,
            delta: self.delta * s,
            mu: a * self.mu + b,
        })
    }

    pub fn mean(&self) -> f64 {
        self.mu + self.beta * self.mixing().mean()
    }
}

/// Hierarchical sampler with the GIG setup cached.
#[derive(Debug, Clone, Copy)]
pub struct GhSampler {
    params: GhParams,
    mixing: GigSampler,
}

impl GhSampler {
    pub fn new(params: GhParams) -> Self {
        Self {
            params,
            mixing: GigSampler::new(params.mixing()),
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let w = self.mixing.sample(rng);
        let z: f64 = rng.sample(StandardNormal);
        self.params.mu + self.params.beta * w + w.sqrt() * z
    }
}

/// Returns `GH_N(σ_x²)`, the GH fit rescaled by `σ_x`, together with its mixing law
/// `GIG(λ_N, γ_N/σ_x, δ_N σ_x)`.
pub fn scale_gh_prior(nu_n: &GhParams, sigma_x: f64) -> Result<(GhParams, GigParams)> {
    if !(sigma_x > 0.0) || !sigma_x.is_finite() {
        return Err(Error::domain(format!("sigma_x must be positive, got {sigma_x}")));
    }
    let gh = nu_n.affine(sigma_x, 0.0)?;
    let gig = GigParams {
        lambda: nu_n.lambda,
        gamma: nu_n.gamma() / sigma_x,
        delta: nu_n.delta * sigma_x,
    };
    Ok((gh, gig))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn example() -> GhParams {
        GhParams::new(1.0, 2.0, 0.5, 1.0, 0.0).unwrap()
    }

    #[test]
    fn constraint_checks() {
        assert!(GhParams::new(1.0, 1.0, 1.0, 1.0, 0.0).is_err());
        assert!(GhParams::new(1.0, 1.0, -1.5, 1.0, 0.0).is_err());
        assert!(GhParams::new(1.0, 2.0, 0.5, 0.0, 0.0).is_err());
        assert!(example().affine(0.0, 1.0).is_err());
    }

    #[test]
    fn symmetric_when_beta_vanishes() {
        let p = GhParams::new(0.3, 1.7, 0.0, 0.9, 0.0).unwrap();
        assert!((p.log_pdf(1.7) - p.log_pdf(-1.7)).abs() < 1e-14);
    }

    #[test]
    fn identity_affine_map() {
        assert_eq!(example().affine(1.0, 0.0).unwrap(), example());
    }

    #[test]
    fn affine_change_of_variables() {
        let p = GhParams::new(-0.5, 1.5, 0.3, 0.8, 0.2).unwrap();
        let (a, b) = (2.5, -1.0);
        let q = p.affine(a, b).unwrap();
        for i in 0..20 {
            let x = -3.0 + 0.37 * i as f64;
            let lhs = q.log_pdf(a * x + b);
            let rhs = p.log_pdf(x) - a.ln();
            assert!((lhs - rhs).abs() < 1e-12, "x={x}");
        }
    }

    #[test]
    fn negative_scale_mirrors_density() {
        let p = GhParams::new(1.2, 1.5, 0.6, 0.8, 0.2).unwrap();
        let q = p.affine(-2.0, 0.5).unwrap();
        for &x in &[-1.0, 0.0, 0.7, 3.0] {
            assert!((q.log_pdf(-2.0 * x + 0.5) - (p.log_pdf(x) - 2f64.ln())).abs() < 1e-12);
        }
    }

    #[test]
    fn inverse_affine_round_trip() {
        let p = GhParams::new(0.7, 3.0, -1.1, 0.4, 0.9).unwrap();
        let (a, b) = (0.37, 2.2);
        let back = p.affine(a, b).unwrap().affine(1.0 / a, -b / a).unwrap();
        for (x, y) in [
            (p.lambda, back.lambda),
            (p.alpha, back.alpha),
            (p.beta, back.beta),
            (p.delta, back.delta),
            (p.mu, back.mu),
        ] {
            assert!(((x - y) / x).abs() < 1e-12);
        }
    }

    #[test]
    fn unit_scale_is_identity() {
        let nu = GhParams::new(1.4, 6.0, 4.5, 0.3, 0.05).unwrap();
        let (gh, gig) = scale_gh_prior(&nu, 1.0).unwrap();
        assert_eq!(gh, nu);
        let m = nu.mixing();
        assert!((gig.gamma - m.gamma).abs() < 1e-15 && gig.delta == m.delta && gig.lambda == m.lambda);
    }

    #[test]
    fn scaled_prior_parameters() {
        let nu = GhParams::new(1.4, 6.0, 4.5, 0.3, 0.05).unwrap();
        let sx = 0.3;
        let (gh, gig) = scale_gh_prior(&nu, sx).unwrap();
        assert_eq!(gh.lambda, nu.lambda);
        assert!((gh.alpha - nu.alpha / sx).abs() < 1e-12);
        assert!((gh.beta - nu.beta / sx).abs() < 1e-12);
        assert!((gh.delta - nu.delta * sx).abs() < 1e-15);
        assert!((gh.mu - nu.mu * sx).abs() < 1e-15);
        assert!((gig.gamma - gh.gamma()).abs() < 1e-12);
    }
}
