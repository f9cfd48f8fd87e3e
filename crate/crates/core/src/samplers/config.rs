use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::Hyperparams;

/// Reversible-jump move probabilities for one site.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MoveProbabilities {
    /// Birth, given the site is inactive.
    pub birth: f64,
    /// Death, given the site is active.
    pub death: f64,
    /// Update of `w`, given the site is active.
    pub update: f64,
    /// Probability of drawing an update from the prior-shaped proposal rather
    /// than the conditional-at-zero one.
    pub update_mix: f64,
}

impl Default for MoveProbabilities {
    fn default() -> Self {
        Self {
            birth: 1.0,
            death: 0.5,
            update: 0.5,
            update_mix: 0.5,
        }
    }
}

impl MoveProbabilities {
    pub fn validate(&self) -> Result<()> {
        let unit = |v: f64| (0.0..=1.0).contains(&v);
        if self.birth != 1.0 {
            return Err(Error::Config(format!(
                "birth probability must be 1, got {}",
                self.birth
            )));
        }
        if !unit(self.death) || !unit(self.update) || (self.death + self.update - 1.0).abs() > 1e-12 {
            return Err(Error::Config(format!(
                "death ({}) and update ({}) probabilities must lie in [0,1] and sum to 1",
                self.death, self.update
            )));
        }
        if !unit(self.update_mix) {
            return Err(Error::Config(format!(
                "update_mix must lie in [0,1], got {}",
                self.update_mix
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SamplerConfig {
    pub iterations: usize,
    pub burn_in: usize,
    /// Record every `thin`-th iteration.
    pub thin: usize,
    pub seed: u64,
    /// Starting hyperparameters; fixed ones keep these values.
    pub init: Hyperparams,
    pub sample_bern_prob: bool,
    pub sample_amp_var: bool,
    pub sample_noise_var: bool,
    pub sample_ir_scale: bool,
    /// Inverse-gamma prior on the noise variance (shape, rate); zeros give the scale-invariant prior.
    pub noise_prior: (f64, f64),
    /// Random-walk std on `ln σ_x²`.
    pub amp_var_step: f64,
    /// Support of the flat prior on `σ_x²`.
    pub amp_var_bounds: (f64, f64),
    /// Random-walk std on `ln s`.
    pub ir_scale_step: f64,
    /// Support of the flat prior on `s`.
    pub ir_scale_bounds: (f64, f64),
    pub moves: MoveProbabilities,
    /// Visit sites in a fresh random order each sweep instead of ascending.
    pub shuffle_sites: bool,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        Self {
            iterations: 1000,
            burn_in: 0,
            thin: 1,
            seed: 0,
            init: Hyperparams {
                bern_prob: 0.05,
                noise_var: 1.0,
                amp_var: 1.0,
                ir_scale: 5.25,
            },
            sample_bern_prob: true,
            sample_amp_var: true,
            sample_noise_var: false,
            sample_ir_scale: false,
            noise_prior: (0.0, 0.0),
            amp_var_step: 0.2,
            amp_var_bounds: (1e-12, 1e4),
            ir_scale_step: 0.05,
            ir_scale_bounds: (0.5, 10.0),
            moves: MoveProbabilities::default(),
            shuffle_sites: false,
        }
    }
}

impl SamplerConfig {
    pub fn validate(&self) -> Result<()> {
        if self.iterations == 0 {
            return Err(Error::Config("iterations must be positive".into()));
        }
        if self.burn_in >= self.iterations {
            return Err(Error::Config(format!(
                "burn_in ({}) must be smaller than iterations ({})",
                self.burn_in, self.iterations
            )));
        }
        if self.thin == 0 {
            return Err(Error::Config("thin must be positive".into()));
        }
        if !(self.amp_var_step > 0.0) || !(self.ir_scale_step > 0.0) {
            return Err(Error::Config("MH step sizes must be positive".into()));
        }
        for (name, (lo, hi)) in [
            ("amp_var_bounds", self.amp_var_bounds),
            ("ir_scale_bounds", self.ir_scale_bounds),
        ] {
            if !(lo > 0.0 && hi > lo && hi.is_finite()) {
                return Err(Error::Config(format!(
                    "{name} must satisfy 0 < lo < hi < inf, got ({lo}, {hi})"
                )));
            }
        }
        let (a, b) = self.noise_prior;
        if a < 0.0 || b < 0.0 {
            return Err(Error::Config("noise prior parameters must be nonnegative".into()));
        }
        self.moves.validate()?;
        self.init.validate()
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Tally {
    pub proposed: u64,
    pub accepted: u64,
}

impl Tally {
    pub fn record(&mut self, accepted: bool) {
        self.proposed += 1;
        self.accepted += u64::from(accepted);
    }

    pub fn rate(&self) -> f64 {
        if self.proposed == 0 {
            0.0
        } else {
            self.accepted as f64 / self.proposed as f64
        }
    }
}

/// Cumulative proposal and acceptance counts of one chain.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct MoveCounters {
    pub birth: Tally,
    pub death: Tally,
    pub update: Tally,
    pub amp_var: Tally,
    pub ir_scale: Tally,
    /// Proposals of `w` outside the numerical guard band, rejected outright.
    pub guarded: u64,
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_are_valid() {
        SamplerConfig::default().validate().unwrap();
        MoveProbabilities::default().validate().unwrap();
    }

    #[test]
    fn invalid_configs() {
        let base = SamplerConfig::default();
        let bad = [
            SamplerConfig {
                burn_in: 1000,
                ..base.clone()
            },
            SamplerConfig {
                thin: 0,
                ..base.clone()
            },
            SamplerConfig {
                amp_var_step: 0.0,
                ..base.clone()
            },
            SamplerConfig {
                ir_scale_bounds: (3.0, 1.0),
                ..base.clone()
            },
            SamplerConfig {
                moves: MoveProbabilities {
                    death: 0.7,
                    ..MoveProbabilities::default()
                },
                ..base.clone()
            },
            SamplerConfig {
                moves: MoveProbabilities {
                    birth: 0.5,
                    ..MoveProbabilities::default()
                },
                ..base
            },
        ];
        for c in bad {
            assert!(c.validate().is_err(), "{c:?}");
        }
    }

    #[test]
    fn tally_rate() {
        let mut t = Tally::default();
        assert_eq!(t.rate(), 0.0);
        t.record(true);
        t.record(false);
        assert_eq!(t.rate(), 0.5);
    }
}
