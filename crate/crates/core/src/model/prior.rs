use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::distributions::{scale_gh_prior, GhParams, GigDensity, GigParams, GigSampler};
use crate::error::{Error, Result};

/// `θ` plus the impulse-response scale.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Hyperparams {
    /// Bernoulli inclusion probability.
    pub bern_prob: f64,
    /// Noise variance `σ²`.
    pub noise_var: f64,
    /// Amplitude scale `σ_x²`.
    pub amp_var: f64,
    /// Impulse-response scale `s`.
    pub ir_scale: f64,
}

impl Hyperparams {
    pub fn validate(&self) -> Result<()> {
        if !(self.bern_prob > 0.0 && self.bern_prob < 1.0) {
            return Err(Error::domain(format!(
                "bern_prob must lie in (0,1), got {}",
                self.bern_prob
            )));
        }
        for (name, v) in [
            ("noise_var", self.noise_var),
            ("amp_var", self.amp_var),
            ("ir_scale", self.ir_scale),
        ] {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::domain(format!("{name} must be positive, got {v}")));
            }
        }
        Ok(())
    }

    pub fn sigma_x(&self) -> f64 {
        self.amp_var.sqrt()
    }

    /// `ln P(q | λ)` for a support of size `active` out of `m` sites.
    pub fn log_support_prior(&self, active: usize, m: usize) -> f64 {
        active as f64 * self.bern_prob.ln() + (m - active) as f64 * (-self.bern_prob).ln_1p()
    }
}

/// Conditional mean of an active amplitude given its variance, `a + c·w`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MeanModel {
    pub offset: f64,
    pub slope: f64,
}

impl MeanModel {
    /// `σ_x μ_N + (β_N/σ_x) w`.
    pub fn new(nu_n: &GhParams, sigma_x: f64) -> Self {
        Self {
            offset: sigma_x * nu_n.mu,
            slope: nu_n.beta / sigma_x,
        }
    }

    #[inline]
    pub fn mean(&self, w: f64) -> f64 {
        self.offset + self.slope * w
    }

    /// `μ(w)/w`, the contribution of one atom to the precision-weighted prior mean.
    #[inline]
    pub fn mean_over_w(&self, w: f64) -> f64 {
        self.offset / w + self.slope
    }
}

/// The BGH amplitude prior at a given `σ_x`, with densities and samplers prepared.
#[derive(Debug, Clone)]
pub struct BghPrior {
    pub nu_n: GhParams,
    pub sigma_x: f64,
    pub mean_model: MeanModel,
    /// `GIG_N(σ_x²)`: prior of `w` and the birth / first update proposal.
    pub mixing: GigDensity,
    pub mixing_sampler: GigSampler,
    /// Conditional of `w` given `x = 0`, the second update proposal.
    pub update_proposal: GigDensity,
    pub update_sampler: GigSampler,
}

impl BghPrior {
    pub fn new(nu_n: &GhParams, amp_var: f64) -> Result<Self> {
        let sigma_x = amp_var.sqrt();
        let (_, gig) = scale_gh_prior(nu_n, sigma_x)?;
        let q2 = update_proposal_params(nu_n, sigma_x)?;
        Ok(Self {
            nu_n: *nu_n,
            sigma_x,
            mean_model: MeanModel::new(nu_n, sigma_x),
            mixing: GigDensity::new(gig),
            mixing_sampler: GigSampler::new(gig),
            update_proposal: GigDensity::new(q2),
            update_sampler: GigSampler::new(q2),
        })
    }

    /// Scaled GH law of one active amplitude.
    pub fn amplitude_law(&self) -> GhParams {
        self.nu_n.affine(self.sigma_x, 0.0).expect("sigma_x is positive")
    }

    /// `ln N(x; μ(w), w)`.
    #[inline]
    pub fn ln_amplitude_given_w(&self, x: f64, w: f64) -> f64 {
        let d = x - self.mean_model.mean(w);
        -0.5 * ((2.0 * PI * w).ln() + d * d / w)
    }
}

/// `GIG(λ_N − ½, sqrt(γ_N² + β_N²)/σ_x, σ_x sqrt(δ_N² + μ_N²))`.
pub fn update_proposal_params(nu_n: &GhParams, sigma_x: f64) -> Result<GigParams> {
    if !(sigma_x > 0.0) {
        return Err(Error::domain(format!("sigma_x must be positive, got {sigma_x}")));
    }
    let gamma_n = nu_n.gamma();
    GigParams::new(
        nu_n.lambda - 0.5,
        gamma_n.hypot(nu_n.beta) / sigma_x,
        sigma_x * nu_n.delta.hypot(nu_n.mu),
    )
}
