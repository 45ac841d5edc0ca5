//! Closed-form rate exponents, empirical rate fits and the
//! finite-dimensional experiment.

mod findim;
mod fit;
mod theory;

pub use findim::{
    finite_dim_exceedance_given_data, finite_dim_posterior_exceedance, finite_dim_rate_run,
    FiniteDimExceedance, FiniteDimExperiment, FiniteDimRateTable, FiniteDimRow, MixturePrior,
};
pub use fit::{fit_contraction_rate, RadiusGrid, RateFit, RateFitSettings, RatePoint};
pub use theory::{theory_rates, RateVariant, TheoryParams, TheoryRates};

/// Truth with coordinates `u0_j = j^{-γ-1/2}`.
pub fn smooth_truth(gamma: f64, n_dim: usize) -> nalgebra::DVector<f64> {
    nalgebra::DVector::from_iterator(n_dim, (1..=n_dim).map(|j| (j as f64).powf(-gamma - 0.5)))
}
