//! The truncated spectral-coordinate world: spectra, couplings, Gaussian
//! measures and the forward model.

mod coupling;
mod measure;
mod problem;
mod spectrum;

pub use coupling::{
    band_window, make_coupling, CouplingKind, OrthogonalCoupling, DEFAULT_HI_RATIO,
    DEFAULT_LO_RATIO, ORTHOGONALITY_TOL,
};
pub use measure::{
    colored_noise, colored_noise_measure, hilbert_scale_prior, random_spd, Basis, CoordinateLaw,
    DenseNoise, GaussianSequenceMeasure, MeasureTag, NoiseModel, PriorSampler, ScaledProductPrior,
};
pub use problem::{DataSample, InverseProblem};
pub use spectrum::{make_spectrum, OperatorSpectrum, SpectrumFamily};
