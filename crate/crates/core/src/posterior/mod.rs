//! Potential, conjugate Gaussian posterior and exceedance probabilities.

mod exceedance;
mod gaussian;

pub(crate) use exceedance::{normalize_log_weights, weighted_estimate};
pub use exceedance::{
    posterior_distances, posterior_exceedance, posterior_exceedance_curve,
    weighted_posterior_exceedance, DistanceBatch, ExceedanceEstimate, WeightedExceedance,
    DEGENERATE_ESS, MIN_CONJUGATE_MC, MIN_WEIGHTED_MC,
};
pub use gaussian::{conjugate_posterior, potential_phi, PosteriorGaussian, PosteriorOperator};
