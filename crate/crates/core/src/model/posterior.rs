use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};

use super::cholesky::ActiveSetCholesky;
use super::dictionary::Observation;
use super::prior::{BghPrior, Hyperparams};
use crate::distributions::GhParams;
use crate::error::{Error, Result};

/// Support `q`, amplitudes `x` (zero off the support) and latent variances `w`
/// (present exactly on the support under BGH; absent throughout under BTG).
#[derive(Debug, Clone, PartialEq)]
pub struct LatentState {
    pub q: Vec<bool>,
    pub x: Vec<f64>,
    pub w: Vec<Option<f64>>,
}

impl LatentState {
    pub fn empty(m: usize) -> Self {
        Self {
            q: vec![false; m],
            x: vec![0.0; m],
            w: vec![None; m],
        }
    }

    pub fn support_size(&self) -> usize {
        self.q.iter().filter(|&&b| b).count()
    }

    pub fn active_sites(&self) -> Vec<usize> {
        (0..self.q.len()).filter(|&k| self.q[k]).collect()
    }

    /// `(site, w)` for the active sites; errors if a variance is missing.
    pub fn active_variances(&self) -> Result<Vec<(usize, f64)>> {
        self.active_sites()
            .into_iter()
            .map(|k| {
                self.w[k]
                    .map(|w| (k, w))
                    .ok_or_else(|| Error::domain(format!("active site {k} has no variance")))
            })
            .collect()
    }

    /// Checks the structural invariants against a dictionary width.
    pub fn validate(&self, m: usize) -> Result<()> {
        if self.q.len() != m || self.x.len() != m || self.w.len() != m {
            return Err(Error::domain(format!("state vectors must have length {m}")));
        }
        for k in 0..m {
            if !self.q[k] && self.x[k] != 0.0 {
                return Err(Error::domain(format!("inactive site {k} has amplitude {}", self.x[k])));
            }
            if let Some(w) = self.w[k] {
                if !self.q[k] || !(w > 0.0) {
                    return Err(Error::domain(format!("site {k}: invalid variance {w}")));
                }
            }
        }
        Ok(())
    }
}

/// `N(mean, Γ)` for the active amplitudes given `(q, w, y, θ)`.
#[derive(Debug, Clone)]
pub struct AmplitudeConditional {
    /// Active sites in increasing order; rows of `mean` and `gamma_chol` follow it.
    pub sites: Vec<usize>,
    pub mean: DVector<f64>,
    /// Lower Cholesky factor of `Γ`.
    pub gamma_chol: DMatrix<f64>,
}

fn factor_for(state: &LatentState, obs: &Observation, hp: &Hyperparams, prior: &BghPrior) -> Result<ActiveSetCholesky> {
    state.validate(obs.m())?;
    ActiveSetCholesky::build(obs, hp.noise_var, prior.mean_model, &state.active_variances()?)
}

pub fn conditional_amplitude_params(
    state: &LatentState,
    obs: &Observation,
    hp: &Hyperparams,
    nu_n: &GhParams,
) -> Result<AmplitudeConditional> {
    hp.validate()?;
    let prior = BghPrior::new(nu_n, hp.amp_var)?;
    let chol = factor_for(state, obs, hp, &prior)?;
    // Sites are inserted in increasing order, so factor order is site order.
    let sites = chol.active().to_vec();
    let mean = DVector::from_vec(chol.conditional_mean());
    let cov = chol.covariance();
    let gamma_chol = if sites.is_empty() {
        cov
    } else {
        cov.cholesky()
            .ok_or_else(|| Error::NotPositiveDefinite("conditional amplitude covariance".into()))?
            .unpack()
    };
    Ok(AmplitudeConditional {
        sites,
        mean,
        gamma_chol,
    })
}

/// `ln p(y | z, σ²)`.
pub fn log_likelihood(x: &[f64], obs: &Observation, noise_var: f64) -> f64 {
    let r = obs.residual(x);
    -0.5 * (obs.n() as f64 * (2.0 * PI * noise_var).ln() + r.norm_squared() / noise_var)
}

/// `ln p(y, q, x, w | θ)` under the BGH prior.
pub fn log_joint(state: &LatentState, obs: &Observation, hp: &Hyperparams, nu_n: &GhParams) -> Result<f64> {
    hp.validate()?;
    state.validate(obs.m())?;
    let prior = BghPrior::new(nu_n, hp.amp_var)?;
    let mut acc = log_likelihood(&state.x, obs, hp.noise_var) + hp.log_support_prior(state.support_size(), obs.m());
    for (k, w) in state.active_variances()? {
        acc += prior.mixing.ln_pdf(w) + prior.ln_amplitude_given_w(state.x[k], w);
    }
    Ok(acc)
}

/// `ln p(y, q, w | θ)`: the joint with the amplitudes integrated out.
pub fn log_marginal(state: &LatentState, obs: &Observation, hp: &Hyperparams, nu_n: &GhParams) -> Result<f64> {
    hp.validate()?;
    let prior = BghPrior::new(nu_n, hp.amp_var)?;
    let chol = factor_for(state, obs, hp, &prior)?;
    let mut acc = chol.log_evidence(obs) + hp.log_support_prior(chol.len(), obs.m());
    for &w in chol.variances() {
        acc += prior.mixing.ln_pdf(w);
    }
    Ok(acc)
}
