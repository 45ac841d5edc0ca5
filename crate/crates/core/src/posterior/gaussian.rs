use nalgebra::{DMatrix, DVector};

use crate::error::{check_dim, LabError, Result};
use crate::linalg::{cholesky_with_jitter, inverse_lower_factor, is_diagonal};
use crate::spectral::{Basis, DataSample, InverseProblem, NoiseModel};

/// `Φ(y,u) = (n/2)‖Gu‖²_ζ − n⟨y, Gu⟩_ζ` for `u` in φ-coordinates.
pub fn potential_phi(
    problem: &InverseProblem,
    y: &DVector<f64>,
    u: &DVector<f64>,
    n_level: f64,
) -> Result<f64> {
    check_dim("data", y.len(), problem.n_dim())?;
    if !(n_level > 0.0) {
        return Err(LabError::param("n_level must be positive"));
    }
    let gu = problem.forward_apply(u, Basis::Phi)?;
    let noise = problem.noise();
    Ok(0.5 * n_level * noise.cm_norm_sq(&gu) - n_level * noise.cm_inner(y, &gu))
}

/// Gaussian posterior in φ-coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct PosteriorGaussian {
    pub mean: DVector<f64>,
    /// Lower Cholesky factor of the posterior covariance.
    pub cov_factor: DMatrix<f64>,
    pub n_level: f64,
}

impl PosteriorGaussian {
    pub fn n_dim(&self) -> usize {
        self.mean.len()
    }

    pub fn covariance(&self) -> DMatrix<f64> {
        &self.cov_factor * self.cov_factor.transpose()
    }

    /// Marginal standard deviations.
    pub fn marginal_sd(&self) -> DVector<f64> {
        DVector::from_iterator(
            self.n_dim(),
            self.cov_factor.row_iter().map(|r| r.norm_squared().sqrt()),
        )
    }

    pub fn trace_cov(&self) -> f64 {
        self.cov_factor.norm_squared()
    }

    pub(crate) fn factor_is_diagonal(&self) -> bool {
        is_diagonal(&self.cov_factor)
    }
}

/// Data-independent part of the conjugate update at a fixed noise level.
/// Built once per `n` and reused for every data replicate.
#[derive(Debug, Clone)]
pub struct PosteriorOperator {
    n_level: f64,
    precision: DMatrix<f64>,
    cov_factor: DMatrix<f64>,
    /// `P^{-1} Mᵀ W`, mapping data to the posterior mean.
    gain: DMatrix<f64>,
}

/// Observation weight `W = n ζ^{-1}` times `M = diag(ρ)·T`.
fn weighted_forward(problem: &InverseProblem, n_level: f64, m: &DMatrix<f64>) -> DMatrix<f64> {
    match problem.noise() {
        NoiseModel::Diagonal(meas) => {
            let mut wm = m.clone();
            for (i, v) in meas.variances().iter().enumerate() {
                let w = n_level / v;
                wm.row_mut(i).scale_mut(w);
            }
            wm
        }
        NoiseModel::Dense(d) => d.inverse() * m * n_level,
    }
}

impl PosteriorOperator {
    pub fn new(problem: &InverseProblem, n_level: f64) -> Result<Self> {
        if !(n_level > 0.0) || !n_level.is_finite() {
            return Err(LabError::param("n_level must be positive and finite"));
        }
        let m = problem.forward_matrix();
        let wm = weighted_forward(problem, n_level, &m);
        let mut precision = m.tr_mul(&wm);
        precision = (&precision + precision.transpose()) * 0.5;
        for (i, lam) in problem.prior().variances().iter().enumerate() {
            precision[(i, i)] += 1.0 / lam;
        }
        let chol = cholesky_with_jitter(&precision)?;
        let gain = chol.solve(&wm.transpose());
        let cov_factor = if is_diagonal(&precision) {
            DMatrix::from_diagonal(&precision.diagonal().map(|p| 1.0 / p.sqrt()))
        } else {
            inverse_lower_factor(&chol)?.1
        };
        if cov_factor.iter().any(|v| !v.is_finite()) {
            return Err(LabError::numerical(
                "posterior covariance factor is not finite",
                None,
            ));
        }
        Ok(Self {
            n_level,
            precision,
            cov_factor,
            gain,
        })
    }

    pub fn n_level(&self) -> f64 {
        self.n_level
    }

    pub fn precision(&self) -> &DMatrix<f64> {
        &self.precision
    }

    pub fn cov_factor(&self) -> &DMatrix<f64> {
        &self.cov_factor
    }

    pub fn mean(&self, y: &DVector<f64>) -> Result<DVector<f64>> {
        check_dim("data", y.len(), self.gain.ncols())?;
        Ok(&self.gain * y)
    }

    pub fn posterior(&self, y: &DVector<f64>) -> Result<PosteriorGaussian> {
        Ok(PosteriorGaussian {
            mean: self.mean(y)?,
            cov_factor: self.cov_factor.clone(),
            n_level: self.n_level,
        })
    }
}

pub fn conjugate_posterior(
    problem: &InverseProblem,
    data: &DataSample,
) -> Result<PosteriorGaussian> {
    PosteriorOperator::new(problem, data.n_level)?.posterior(&data.y)
}
