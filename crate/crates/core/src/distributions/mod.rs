//! GIG, GH and truncated-normal distributions, and the GH fit to `N⁺(0, 1)`.

mod fit;
mod gh;
mod gig;
mod truncnorm;

pub use fit::{
    default_fit, fit_gh_to_sample, fit_gh_to_truncated_normal, half_normal_sample, kl_from_half_normal,
    mean_log_likelihood, FitOptions, FittedGhApprox, DEFAULT_ALPHA_MAX, DEFAULT_FIT_SAMPLES, DEFAULT_FIT_SEED,
};
pub use gh::{scale_gh_prior, GhParams, GhSampler};
pub use gig::{GigDensity, GigMethod, GigParams, GigSampler};
pub use truncnorm::{truncnorm_log_pdf, truncnorm_sample};
