use nalgebra::DMatrix;

use crate::error::{LabError, Result};
use crate::linalg::eigenvalues_desc;
use crate::spectral::InverseProblem;

/// Sorted eigenvalues of two SPD operators and their ratios.
#[derive(Debug, Clone, PartialEq)]
pub struct MinMaxTable {
    pub alpha: Vec<f64>,
    pub beta: Vec<f64>,
    pub ratios: Vec<f64>,
    pub min_ratio: f64,
    pub max_ratio: f64,
}

fn spd_eigenvalues(name: &str, m: &DMatrix<f64>) -> Result<Vec<f64>> {
    let ev = eigenvalues_desc(m)?;
    let min = ev[ev.len() - 1];
    if !(min > 0.0) {
        return Err(LabError::param(format!(
            "{name} is not positive definite (smallest eigenvalue {min:.3e})"
        )));
    }
    Ok(ev.iter().copied().collect())
}

/// Ratios `α_j/β_j` of the `j`-th largest eigenvalues for `j ≤ j_max`.
pub fn minmax_compare(
    op_a: &DMatrix<f64>,
    op_b: &DMatrix<f64>,
    j_max: usize,
) -> Result<MinMaxTable> {
    let n = op_a.nrows();
    if op_a.shape() != (n, n) || op_b.shape() != (n, n) {
        return Err(LabError::param(
            "min-max operands must be square of equal size",
        ));
    }
    if j_max == 0 || j_max > n {
        return Err(LabError::param(format!("j_max must lie in 1..={n}")));
    }
    let mut alpha = spd_eigenvalues("op_a", op_a)?;
    let mut beta = spd_eigenvalues("op_b", op_b)?;
    alpha.truncate(j_max);
    beta.truncate(j_max);
    let ratios: Vec<f64> = alpha.iter().zip(&beta).map(|(a, b)| a / b).collect();
    let min_ratio = ratios.iter().copied().fold(f64::INFINITY, f64::min);
    let max_ratio = ratios.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    Ok(MinMaxTable {
        alpha,
        beta,
        ratios,
        min_ratio,
        max_ratio,
    })
}

fn congruence(m: &DMatrix<f64>, lam: &nalgebra::DVector<f64>) -> DMatrix<f64> {
    let mut scaled = m.clone();
    for (j, l) in lam.iter().enumerate() {
        scaled.column_mut(j).scale_mut(*l);
    }
    let out = scaled * m.transpose();
    (&out + out.transpose()) * 0.5
}

/// `G𝒞Gᵀ` for the actual prior `𝒞 = T diag(λ) Tᵀ` and for the surrogate
/// `𝒞' = diag(λ)` aligned with the e-basis, both in e-coordinates. Both go
/// through the same arithmetic so the identity coupling gives equal
/// matrices bit for bit.
pub fn prior_forward_pair(problem: &InverseProblem) -> (DMatrix<f64>, DMatrix<f64>) {
    let lam = problem.prior().variances();
    let actual = congruence(&problem.forward_matrix(), lam);
    let surrogate = congruence(&DMatrix::from_diagonal(problem.rho()), lam);
    (actual, surrogate)
}
