//! Response laws, covariate generation and noise moments.

mod covariates;
mod model;
mod moments;

pub use covariates::{draw_covariates, CovariateDist, CovariateSpec};
pub use model::{
    clamp_proportion, draw_response, mean_pair, ResponseKind, ResponseLaw, ResponseModel, DEFAULT_BETA,
    DEFAULT_BETA0, DEFAULT_BETA_T, PROPORTION_CLAMP,
};
pub use moments::{
    beta_raw_moments, central_moments, moment_profile, profile_from_means, weibull_raw_moments,
    CentralMoments, MomentProfile, MomentVariant,
};
