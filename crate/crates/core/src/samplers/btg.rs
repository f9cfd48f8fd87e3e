//! Single-site Gibbs sampler for the Bernoulli-truncated-Gaussian model.

use nalgebra::DVector;
use rand::seq::SliceRandom;
use rand::Rng;

use super::bgh::ir_scale_step;
use super::config::{MoveCounters, SamplerConfig};
use super::hyper::{btg_amp_var_log_target, draw_bern_prob, draw_noise_var, log_scale_step};
use crate::distributions::truncnorm_sample;
use crate::error::{Error, Result};
use crate::model::{Hyperparams, LatentState, Observation};
use crate::specfun::log_ndtr;

/// Scalar conditional of one amplitude against the residual with its own
/// contribution restored.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BtgSiteConditional {
    /// Posterior mean of the untruncated Gaussian.
    pub mean: f64,
    pub var: f64,
    /// `ln P(q_k = 1 | rest) − ln P(q_k = 0 | rest)`.
    pub log_odds: f64,
}

/// `corr = h_kᵀ e` and `energy = ‖h_k‖²`, where `e` is the residual without site `k`.
pub fn btg_site_conditional(corr: f64, energy: f64, hp: &Hyperparams) -> BtgSiteConditional {
    let var = 1.0 / (energy / hp.noise_var + 1.0 / hp.amp_var);
    let mean = var * corr / hp.noise_var;
    let sd = var.sqrt();
    let log_odds = hp.bern_prob.ln() - (-hp.bern_prob).ln_1p()
        + (2.0 * sd / hp.amp_var.sqrt()).ln()
        + log_ndtr(mean / sd)
        + 0.5 * mean * mean / var;
    BtgSiteConditional { mean, var, log_odds }
}

#[derive(Debug, Clone)]
pub struct BtgChain {
    cfg: SamplerConfig,
    obs: Observation,
    hp: Hyperparams,
    state: LatentState,
    residual: DVector<f64>,
    counters: MoveCounters,
    order: Vec<usize>,
}

impl BtgChain {
    pub fn new(cfg: &SamplerConfig, obs: &Observation, init: LatentState) -> Result<Self> {
        cfg.validate()?;
        init.validate(obs.m())?;
        if init.w.iter().any(Option::is_some) {
            return Err(Error::domain("BTG state carries no latent variances"));
        }
        if init.x.iter().any(|&x| x < 0.0) {
            return Err(Error::domain("BTG amplitudes must be nonnegative"));
        }
        let hp = cfg.init;
        let obs = match obs.ir() {
            Some(ir) if ir.scale != hp.ir_scale => obs.with_ir_scale(hp.ir_scale)?,
            None if cfg.sample_ir_scale => {
                return Err(Error::Config(
                    "impulse-response scale sampling needs a parametric dictionary".into(),
                ))
            }
            _ => obs.clone(),
        };
        let residual = obs.residual(&init.x);
        Ok(Self {
            cfg: cfg.clone(),
            order: (0..obs.m()).collect(),
            obs,
            hp,
            state: init,
            residual,
            counters: MoveCounters::default(),
        })
    }

    pub fn state(&self) -> &LatentState {
        &self.state
    }

    pub fn hyperparams(&self) -> &Hyperparams {
        &self.hp
    }

    pub fn counters(&self) -> &MoveCounters {
        &self.counters
    }

    pub fn observation(&self) -> &Observation {
        &self.obs
    }

    pub fn residual(&self) -> &DVector<f64> {
        &self.residual
    }

    /// Conditional of site `k` given all the others.
    pub fn site_conditional(&self, k: usize) -> BtgSiteConditional {
        let (lo, hi) = self.obs.column_support(k);
        let h = self.obs.h();
        let xk = self.state.x[k];
        let mut corr = 0.0;
        for i in lo..hi {
            corr += h[(i, k)] * self.residual[i];
        }
        let energy = self.obs.gram()[(k, k)];
        btg_site_conditional(corr + energy * xk, energy, &self.hp)
    }

    /// Joint draw of `(q_k, x_k)` from its conditional.
    pub fn site_step<R: Rng + ?Sized>(&mut self, k: usize, rng: &mut R) {
        let c = self.site_conditional(k);
        let p_on = 1.0 / (1.0 + (-c.log_odds).exp());
        let on = rng.random::<f64>() < p_on;
        let x_new = if on {
            truncnorm_sample(c.mean, c.var.sqrt(), rng)
        } else {
            0.0
        };
        let dx = self.state.x[k] - x_new;
        if dx != 0.0 {
            let (lo, hi) = self.obs.column_support(k);
            let h = self.obs.h();
            for i in lo..hi {
                self.residual[i] += h[(i, k)] * dx;
            }
        }
        self.state.q[k] = on;
        self.state.x[k] = x_new;
    }

    pub fn sample_hyperparams<R: Rng + ?Sized>(&mut self, rng: &mut R) -> Result<()> {
        let m = self.obs.m();
        if self.cfg.sample_bern_prob {
            self.hp.bern_prob = draw_bern_prob(self.state.support_size(), m, rng)?;
        }
        if self.cfg.sample_amp_var {
            let xs: Vec<f64> = (0..m).filter(|&k| self.state.q[k]).map(|k| self.state.x[k]).collect();
            let (v, accepted) = log_scale_step(
                self.hp.amp_var,
                self.cfg.amp_var_step,
                self.cfg.amp_var_bounds,
                |v| btg_amp_var_log_target(v, &xs),
                rng,
            );
            self.counters.amp_var.record(accepted);
            self.hp.amp_var = v;
        }
        if self.cfg.sample_noise_var {
            let rss = self.residual.norm_squared();
            self.hp.noise_var = draw_noise_var(rss, self.obs.n(), self.cfg.noise_prior, rng)?;
        }
        Ok(())
    }

    pub fn sample_ir_scale<R: Rng + ?Sized>(&mut self, rng: &mut R) -> Result<()> {
        let (s, accepted, cand) = ir_scale_step(&self.obs, &self.state.x, &self.hp, &self.cfg, rng)?;
        self.counters.ir_scale.record(accepted);
        if let Some(obs) = cand {
            self.hp.ir_scale = s;
            self.obs = obs;
            self.residual = self.obs.residual(&self.state.x);
        }
        Ok(())
    }

    pub fn iteration<R: Rng + ?Sized>(&mut self, rng: &mut R) -> Result<()> {
        // Recompute to bound rounding drift from the incremental residual updates.
        self.residual = self.obs.residual(&self.state.x);
        if self.cfg.shuffle_sites {
            self.order.shuffle(rng);
        }
        for i in 0..self.order.len() {
            let k = self.order[i];
            self.site_step(k, rng);
        }
        self.sample_hyperparams(rng)?;
        if self.cfg.sample_ir_scale {
            self.sample_ir_scale(rng)?;
        }
        Ok(())
    }
}
