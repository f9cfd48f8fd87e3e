//! Observation model, BGH prior, and collapsed posterior quantities.

mod cholesky;
mod dictionary;
mod posterior;
mod prior;

pub use cholesky::{ActiveSetCholesky, SiteContext};
pub use dictionary::{build_dictionary, impulse_response, Observation, ParametricIr};
pub use posterior::{
    conditional_amplitude_params, log_joint, log_likelihood, log_marginal, AmplitudeConditional, LatentState,
};
pub use prior::{update_proposal_params, BghPrior, Hyperparams, MeanModel};
