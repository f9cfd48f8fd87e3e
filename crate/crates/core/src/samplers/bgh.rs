//! Partially collapsed Gibbs sampler for the Bernoulli-GH model.
//!
//! Each sweep visits every site with a reversible-jump move on `(q_k, w_k)` with the
//! amplitudes integrated out, then draws the amplitudes jointly, then the
//! hyperparameters and, optionally, the impulse-response scale. The order is fixed.

use rand::seq::SliceRandom;
use rand::Rng;

use super::config::{MoveCounters, MoveProbabilities, SamplerConfig};
use super::hyper::{bgh_amp_var_log_target, draw_bern_prob, draw_noise_var, log_scale_step};
use crate::distributions::GhParams;
use crate::error::{Error, Result};
use crate::model::{log_marginal, ActiveSetCholesky, BghPrior, Hyperparams, LatentState, Observation, SiteContext};

/// Candidate `w` outside `[GUARD_LO, GUARD_HI]·σ_x²` is rejected without evaluation.
pub const GUARD_LO: f64 = 1e-12;
pub const GUARD_HI: f64 = 1e12;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum UpdateProposal {
    /// The mixing prior `GIG_N(σ_x²)`.
    Prior,
    /// The conditional of `w` given a zero amplitude.
    ZeroConditional,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SiteMove {
    Birth,
    Death,
    Update(UpdateProposal),
}

/// What happened at one site.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SiteOutcome {
    pub proposed: SiteMove,
    pub accepted: bool,
    pub log_ratio: f64,
}

/// Draws a candidate variance for an update move.
pub fn propose_update_w<R: Rng + ?Sized>(prior: &BghPrior, mix: f64, rng: &mut R) -> (f64, UpdateProposal) {
    if rng.random::<f64>() < mix {
        (prior.mixing_sampler.sample(rng), UpdateProposal::Prior)
    } else {
        (prior.update_sampler.sample(rng), UpdateProposal::ZeroConditional)
    }
}

fn log_prior_odds(hp: &Hyperparams) -> f64 {
    hp.bern_prob.ln() - (-hp.bern_prob).ln_1p()
}

/// Log acceptance ratio of a site move from the site's Schur context.
///
/// `current` is the site's variance before the move (`None` when inactive) and
/// `candidate` after it (`None` for a death).
pub fn site_log_ratio(
    ctx: &SiteContext,
    mv: SiteMove,
    current: Option<f64>,
    candidate: Option<f64>,
    prior: &BghPrior,
    hp: &Hyperparams,
    moves: &MoveProbabilities,
) -> f64 {
    let mean = &prior.mean_model;
    match (mv, current, candidate) {
        // The GIG prior density of the new w cancels against the birth proposal.
        (SiteMove::Birth, None, Some(w)) => {
            ctx.log_evidence_gain(w, mean) + log_prior_odds(hp) + (moves.death / moves.birth).ln()
        }
        (SiteMove::Death, Some(w), None) => {
            -ctx.log_evidence_gain(w, mean) - log_prior_odds(hp) + (moves.birth / moves.death).ln()
        }
        (SiteMove::Update(kind), Some(w), Some(w_new)) => {
            let gain = ctx.log_evidence_gain(w_new, mean) - ctx.log_evidence_gain(w, mean);
            match kind {
                UpdateProposal::Prior => gain,
                UpdateProposal::ZeroConditional => {
                    gain + prior.mixing.ln_pdf(w_new) - prior.mixing.ln_pdf(w) + prior.update_proposal.ln_pdf(w)
                        - prior.update_proposal.ln_pdf(w_new)
                }
            }
        }
        _ => f64::NAN,
    }
}

/// Log acceptance ratio of a single-site move evaluated from two full collapsed
/// posteriors. Slow; used to check the incremental path.
pub fn acceptance_log_ratio(
    current: &LatentState,
    candidate: &LatentState,
    mv: SiteMove,
    obs: &Observation,
    hp: &Hyperparams,
    nu_n: &GhParams,
    moves: &MoveProbabilities,
) -> Result<f64> {
    let diff: Vec<usize> = (0..current.q.len())
        .filter(|&k| current.q[k] != candidate.q[k] || current.w[k] != candidate.w[k])
        .collect();
    if diff.len() != 1 {
        return Err(Error::domain(format!(
            "candidate differs at {} sites, expected 1",
            diff.len()
        )));
    }
    let k = diff[0];
    let prior = BghPrior::new(nu_n, hp.amp_var)?;
    let target = log_marginal(candidate, obs, hp, nu_n)? - log_marginal(current, obs, hp, nu_n)?;
    let proposal = match (mv, current.w[k], candidate.w[k]) {
        (SiteMove::Birth, None, Some(w)) => moves.death.ln() - moves.birth.ln() - prior.mixing.ln_pdf(w),
        (SiteMove::Death, Some(w), None) => moves.birth.ln() + prior.mixing.ln_pdf(w) - moves.death.ln(),
        (SiteMove::Update(UpdateProposal::Prior), Some(w), Some(w_new)) => {
            prior.mixing.ln_pdf(w) - prior.mixing.ln_pdf(w_new)
        }
        (SiteMove::Update(UpdateProposal::ZeroConditional), Some(w), Some(w_new)) => {
            prior.update_proposal.ln_pdf(w) - prior.update_proposal.ln_pdf(w_new)
        }
        _ => {
            return Err(Error::domain(format!(
                "move {mv:?} does not match the transition at site {k}"
            )))
        }
    };
    Ok(target + proposal)
}

/// One BGH chain: state, hyperparameters, dictionary and the factor cache.
#[derive(Debug, Clone)]
pub struct BghChain {
    nu_n: GhParams,
    cfg: SamplerConfig,
    obs: Observation,
    hp: Hyperparams,
    state: LatentState,
    chol: ActiveSetCholesky,
    prior: BghPrior,
    counters: MoveCounters,
    order: Vec<usize>,
}

impl BghChain {
    pub fn new(cfg: &SamplerConfig, obs: &Observation, init: LatentState, nu_n: &GhParams) -> Result<Self> {
        cfg.validate()?;
        nu_n.validate()?;
        init.validate(obs.m())?;
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
        let prior = BghPrior::new(nu_n, hp.amp_var)?;
        let chol = ActiveSetCholesky::build(&obs, hp.noise_var, prior.mean_model, &init.active_variances()?)?;
        Ok(Self {
            nu_n: *nu_n,
            cfg: cfg.clone(),
            order: (0..obs.m()).collect(),
            obs,
            hp,
            state: init,
            chol,
            prior,
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

    pub fn cholesky(&self) -> &ActiveSetCholesky {
        &self.chol
    }

    pub fn observation(&self) -> &Observation {
        &self.obs
    }

    pub fn prior(&self) -> &BghPrior {
        &self.prior
    }

    /// Collapsed log posterior of the current `(q, w)` from the cache.
    pub fn cached_log_marginal(&self) -> f64 {
        let mut acc = self.chol.log_evidence(&self.obs) + self.hp.log_support_prior(self.chol.len(), self.obs.m());
        for &w in self.chol.variances() {
            acc += self.prior.mixing.ln_pdf(w);
        }
        acc
    }

    fn in_guard(&self, w: f64) -> bool {
        let v = self.hp.amp_var;
        w >= GUARD_LO * v && w <= GUARD_HI * v
    }

    /// Birth, death or update at site `k`.
    pub fn rj_site_step<R: Rng + ?Sized>(&mut self, k: usize, rng: &mut R) -> Result<SiteOutcome> {
        let ctx = self.chol.site_context(k, &self.obs);
        let moves = self.cfg.moves;
        match self.state.w[k] {
            None => {
                let w = self.prior.mixing_sampler.sample(rng);
                self.propose(k, ctx, SiteMove::Birth, None, Some(w), rng)
            }
            Some(w) => {
                if rng.random::<f64>() < moves.death {
                    self.propose(k, ctx, SiteMove::Death, Some(w), None, rng)
                } else {
                    let (w_new, kind) = propose_update_w(&self.prior, moves.update_mix, rng);
                    self.propose(k, ctx, SiteMove::Update(kind), Some(w), Some(w_new), rng)
                }
            }
        }
    }

    fn propose<R: Rng + ?Sized>(
        &mut self,
        k: usize,
        ctx: SiteContext,
        mv: SiteMove,
        current: Option<f64>,
        candidate: Option<f64>,
        rng: &mut R,
    ) -> Result<SiteOutcome> {
        let tally = match mv {
            SiteMove::Birth => &mut self.counters.birth,
            SiteMove::Death => &mut self.counters.death,
            SiteMove::Update(_) => &mut self.counters.update,
        };
        tally.proposed += 1;
        if let Some(w) = candidate {
            if !self.in_guard(w) {
                self.counters.guarded += 1;
                return Ok(SiteOutcome {
                    proposed: mv,
                    accepted: false,
                    log_ratio: f64::NEG_INFINITY,
                });
            }
        }
        let log_ratio = site_log_ratio(&ctx, mv, current, candidate, &self.prior, &self.hp, &self.cfg.moves);
        let mut accepted = rng.random::<f64>().ln() < log_ratio;
        if accepted {
            let applied = match (mv, candidate) {
                (SiteMove::Birth, Some(w)) => self.chol.insert(k, w, &self.obs),
                (SiteMove::Death, _) => self.chol.remove(k),
                (SiteMove::Update(_), Some(w)) => self.chol.update_w(k, w, &self.obs),
                _ => unreachable!(),
            };
            match applied {
                Ok(()) => {}
                // A failed pivot leaves the cache at the current state: treat as a rejection.
                Err(Error::NotPositiveDefinite(_)) => accepted = false,
                Err(e) => return Err(e),
            }
        }
        if accepted {
            self.state.q[k] = candidate.is_some();
            self.state.w[k] = candidate;
            if candidate.is_none() {
                self.state.x[k] = 0.0;
            }
            match mv {
                SiteMove::Birth => self.counters.birth.accepted += 1,
                SiteMove::Death => self.counters.death.accepted += 1,
                SiteMove::Update(_) => self.counters.update.accepted += 1,
            }
        }
        Ok(SiteOutcome {
            proposed: mv,
            accepted,
            log_ratio,
        })
    }

    /// `x̄ ~ N(η, Γ)` from the cached factor; zero off the support.
    pub fn sample_amplitudes<R: Rng + ?Sized>(&mut self, rng: &mut R) {
        let draws = self.chol.sample_amplitudes(rng);
        self.state.x.iter_mut().for_each(|x| *x = 0.0);
        for (&k, x) in self.chol.active().iter().zip(draws) {
            self.state.x[k] = x;
        }
    }

    pub fn sample_hyperparams<R: Rng + ?Sized>(&mut self, rng: &mut R) -> Result<()> {
        let m = self.obs.m();
        let active = self.chol.len();
        if self.cfg.sample_bern_prob {
            self.hp.bern_prob = draw_bern_prob(active, m, rng)?;
        }
        if self.cfg.sample_amp_var {
            let atoms: Vec<(f64, f64)> = self
                .chol
                .active()
                .iter()
                .zip(self.chol.variances())
                .map(|(&k, &w)| (self.state.x[k], w))
                .collect();
            let nu = self.nu_n;
            let (v, accepted) = log_scale_step(
                self.hp.amp_var,
                self.cfg.amp_var_step,
                self.cfg.amp_var_bounds,
                |v| bgh_amp_var_log_target(v, &atoms, &nu),
                rng,
            );
            self.counters.amp_var.record(accepted);
            if accepted {
                self.hp.amp_var = v;
                self.prior = BghPrior::new(&self.nu_n, v)?;
                self.chol.set_mean_model(self.prior.mean_model, &self.obs);
            }
        }
        if self.cfg.sample_noise_var {
            let rss = self.obs.residual(&self.state.x).norm_squared();
            self.hp.noise_var = draw_noise_var(rss, self.obs.n(), self.cfg.noise_prior, rng)?;
            self.chol
                .refactor(&self.obs, self.hp.noise_var, self.prior.mean_model)?;
        }
        Ok(())
    }

    /// Random-walk MH on `ln s` given the current amplitudes.
    pub fn sample_ir_scale<R: Rng + ?Sized>(&mut self, rng: &mut R) -> Result<()> {
        let (s, accepted, cand) = ir_scale_step(&self.obs, &self.state.x, &self.hp, &self.cfg, rng)?;
        self.counters.ir_scale.record(accepted);
        if let Some(obs) = cand {
            self.hp.ir_scale = s;
            self.obs = obs;
            self.chol
                .refactor(&self.obs, self.hp.noise_var, self.prior.mean_model)?;
        }
        Ok(())
    }

    /// One full sweep in fixed order: sites, amplitudes, hyperparameters, scale.
    pub fn iteration<R: Rng + ?Sized>(&mut self, rng: &mut R) -> Result<()> {
        if self.cfg.shuffle_sites {
            self.order.shuffle(rng);
        }
        for i in 0..self.order.len() {
            let k = self.order[i];
            self.rj_site_step(k, rng)?;
        }
        // Bound the rounding drift of the incremental updates.
        self.chol
            .refactor(&self.obs, self.hp.noise_var, self.prior.mean_model)?;
        self.sample_amplitudes(rng);
        self.sample_hyperparams(rng)?;
        if self.cfg.sample_ir_scale {
            self.sample_ir_scale(rng)?;
        }
        Ok(())
    }
}

/// Shared scale step: returns the new scale, whether it moved, and the rebuilt
/// observation when it did.
pub(crate) fn ir_scale_step<R: Rng + ?Sized>(
    obs: &Observation,
    x: &[f64],
    hp: &Hyperparams,
    cfg: &SamplerConfig,
    rng: &mut R,
) -> Result<(f64, bool, Option<Observation>)> {
    if obs.ir().is_none() {
        return Err(Error::Config(
            "impulse-response scale sampling needs a parametric dictionary".into(),
        ));
    }
    let rss = obs.residual(x).norm_squared();
    let mut built: Option<Observation> = None;
    let mut failure: Option<Error> = None;
    let (s, accepted) = log_scale_step(
        hp.ir_scale,
        cfg.ir_scale_step,
        cfg.ir_scale_bounds,
        |s| {
            if s == hp.ir_scale {
                return -0.5 * rss / hp.noise_var;
            }
            match obs.with_ir_scale(s) {
                Ok(o) => {
                    let r = o.residual(x).norm_squared();
                    built = Some(o);
                    -0.5 * r / hp.noise_var
                }
                Err(e) => {
                    failure = Some(e);
                    f64::NEG_INFINITY
                }
            }
        },
        rng,
    );
    if let Some(e) = failure {
        return Err(e);
    }
    Ok((s, accepted, if accepted { built } else { None }))
}
