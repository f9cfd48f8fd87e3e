//! BGH partially collapsed Gibbs sampler, BTG single-site Gibbs baseline, and chain plumbing.

mod bgh;
mod btg;
mod chain;
mod config;
mod hyper;
#[cfg(test)]
mod tests;

pub use bgh::{
    acceptance_log_ratio, propose_update_w, site_log_ratio, BghChain, SiteMove, SiteOutcome, UpdateProposal, GUARD_HI,
    GUARD_LO,
};
pub use btg::{btg_site_conditional, BtgChain, BtgSiteConditional};
pub use chain::{empty_state, random_state, run_chain, run_chains, ChainStore, SamplerKind};
pub use config::{MoveCounters, MoveProbabilities, SamplerConfig, Tally};
pub use hyper::{bgh_amp_var_log_target, btg_amp_var_log_target, draw_bern_prob, draw_noise_var, log_scale_step};
