use nalgebra::DMatrix;

use crate::error::{LabError, Result};
use crate::linalg::top_eigenvalue;
use crate::spectral::{InverseProblem, NoiseModel};

/// Truncation level of the e-projection `P^e_r`; `Infinite` keeps every
/// stored coordinate.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Cutoff {
    Finite(usize),
    Infinite,
}

impl Cutoff {
    pub fn resolve(self, n_dim: usize) -> usize {
        match self {
            Cutoff::Finite(r) => r.min(n_dim),
            Cutoff::Infinite => n_dim,
        }
    }

    pub fn is_finite(self) -> bool {
        matches!(self, Cutoff::Finite(_))
    }
}

fn check_kr(problem: &InverseProblem, k: usize, r: usize) -> Result<()> {
    let n = problem.n_dim();
    if k == 0 || k > n || r == 0 || r > n {
        return Err(LabError::param(format!(
            "need 1 <= k, r <= {n}, got k={k}, r={r}"
        )));
    }
    Ok(())
}

/// Columns `ζ^{1/2} P^e_r diag(1/ρ) φ_j` for `j ≤ k`.
pub(crate) fn whitened_dual_columns(problem: &InverseProblem, k: usize, r: usize) -> DMatrix<f64> {
    let n = problem.n_dim();
    let t = problem.coupling().t_matrix();
    let mut b = t.columns(0, k).clone_owned();
    for i in 0..n {
        if i < r {
            b.row_mut(i).unscale_mut(problem.rho()[i]);
        } else {
            b.row_mut(i).fill(0.0);
        }
    }
    problem.noise().sqrt_matrix(&b)
}

/// Same columns without the noise factor, `P^e_r diag(1/ρ) φ_j`.
pub(crate) fn dual_columns(problem: &InverseProblem, k: usize, r: usize) -> DMatrix<f64> {
    let n = problem.n_dim();
    let mut b = problem.coupling().t_matrix().columns(0, k).clone_owned();
    for i in 0..n {
        if i < r {
            b.row_mut(i).unscale_mut(problem.rho()[i]);
        } else {
            b.row_mut(i).fill(0.0);
        }
    }
    b
}

/// Square root of `g_{k,r}`. For the identity coupling with diagonal noise
/// this is `max_{j ≤ min(k,r)} √ζ_j/ρ_j` without any squaring.
pub fn compute_g_kr_sqrt(problem: &InverseProblem, k: usize, r: usize) -> Result<f64> {
    check_kr(problem, k, r)?;
    if let (true, NoiseModel::Diagonal(meas)) = (problem.coupling().is_identity(), problem.noise())
    {
        let m = k.min(r);
        let v = meas.variances();
        return Ok((0..m)
            .map(|j| v[j].sqrt() / problem.rho()[j])
            .fold(0.0, f64::max));
    }
    Ok(gram_top(problem, k, r)?.sqrt())
}

fn gram_top(problem: &InverseProblem, k: usize, r: usize) -> Result<f64> {
    let b = whitened_dual_columns(problem, k, r);
    let gram = b.tr_mul(&b);
    Ok(top_eigenvalue(&gram)?.max(0.0))
}

/// `g_{k,r} = max ‖ζ^{1/2}(G^{-1})ᵀ P^e_r h‖²` over unit `h` in
/// `span{φ_1..φ_k}`, the top eigenvalue of the Gram matrix of the dual
/// columns.
pub fn compute_g_kr(problem: &InverseProblem, k: usize, r: usize) -> Result<f64> {
    check_kr(problem, k, r)?;
    if problem.coupling().is_identity() && matches!(problem.noise(), NoiseModel::Diagonal(_)) {
        let s = compute_g_kr_sqrt(problem, k, r)?;
        return Ok(s * s);
    }
    gram_top(problem, k, r)
}

/// `g_k = g_{k,N}`.
pub fn compute_g_k(problem: &InverseProblem, k: usize) -> Result<f64> {
    compute_g_kr(problem, k, problem.n_dim())
}

/// `g_k` for every `k ≤ k_max`.
pub fn g_profile(problem: &InverseProblem, k_max: usize) -> Result<Vec<f64>> {
    (1..=k_max).map(|k| compute_g_k(problem, k)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spectral::*;

    fn problem(kind: CouplingKind, alpha: f64, n: usize) -> InverseProblem {
        InverseProblem::new(
            make_spectrum(&SpectrumFamily::mild(alpha), n).unwrap(),
            make_coupling(&kind, n, 7).unwrap(),
            GaussianSequenceMeasure::prior_family(1.0, n).unwrap(),
            NoiseModel::white(n).unwrap(),
        )
        .unwrap()
    }

    #[test]
    fn identity_closed_forms() {
        let p = problem(CouplingKind::Identity, 1.0, 8);
        assert!((compute_g_kr(&p, 4, 4).unwrap() - 17.0).abs() < 1e-12);
        assert!((compute_g_kr(&p, 4, 8).unwrap() - 17.0).abs() < 1e-12);
        assert!((compute_g_kr(&p, 4, 2).unwrap() - 5.0).abs() < 1e-12);
        assert!((compute_g_k(&p, 1).unwrap() - 2.0).abs() < 1e-12);
    }

    #[test]
    fn flat_spectrum_isometry() {
        let p = problem(CouplingKind::banded_default(), 0.0, 16);
        for k in 1..=16 {
            assert!((compute_g_k(&p, k).unwrap() - 1.0).abs() < 1e-10);
        }
    }

    #[test]
    fn out_of_range_rejected() {
        let p = problem(CouplingKind::Identity, 1.0, 4);
        assert!(compute_g_kr(&p, 0, 1).is_err());
        assert!(compute_g_kr(&p, 5, 1).is_err());
    }
}
