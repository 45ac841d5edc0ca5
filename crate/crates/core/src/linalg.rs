//! Dense linear-algebra helpers shared by the modules.
//!
//! Symmetric eigensolves and Cholesky factorizations are delegated to
//! `nalgebra`; what lives here is ordering, diagonal shortcuts and the
//! jitter escalation policy for near-singular precision matrices.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn, SymmetricEigen};

use crate::error::{LabError, Result};

/// Relative jitter first added to a matrix that fails to factor.
pub const JITTER_START: f64 = 1e-12;
/// Number of times the jitter is doubled before giving up.
pub const JITTER_DOUBLINGS: usize = 3;

pub fn is_diagonal(m: &DMatrix<f64>) -> bool {
    let n = m.nrows();
    (0..n).all(|j| (0..n).all(|i| i == j || m[(i, j)] == 0.0))
}

/// Eigen-decomposition of a symmetric matrix with eigenvalues sorted in
/// non-increasing order. Exactly diagonal inputs are returned unrotated.
pub fn symmetric_eigen_desc(m: &DMatrix<f64>) -> Result<(DVector<f64>, DMatrix<f64>)> {
    let n = m.nrows();
    if m.ncols() != n {
        return Err(LabError::param("eigensolve requires a square matrix"));
    }
    if m.iter().any(|v| !v.is_finite()) {
        return Err(LabError::numerical(
            "eigensolve input has non-finite entries",
            None,
        ));
    }
    let (vals, vecs) = if is_diagonal(m) {
        (m.diagonal(), DMatrix::identity(n, n))
    } else {
        let sym = (m + m.transpose()) * 0.5;
        let eig = SymmetricEigen::try_new(sym, f64::EPSILON, 0)
            .ok_or_else(|| LabError::numerical("symmetric eigensolve did not converge", None))?;
        (eig.eigenvalues, eig.eigenvectors)
    };
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| vals[b].total_cmp(&vals[a]));
    let sorted_vals = DVector::from_iterator(n, order.iter().map(|&i| vals[i]));
    let mut sorted_vecs = DMatrix::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        sorted_vecs.set_column(dst, &vecs.column(src));
    }
    Ok((sorted_vals, sorted_vecs))
}

pub fn eigenvalues_desc(m: &DMatrix<f64>) -> Result<DVector<f64>> {
    if is_diagonal(m) {
        let mut v: Vec<f64> = m.diagonal().iter().copied().collect();
        v.sort_by(|a, b| b.total_cmp(a));
        return Ok(DVector::from_vec(v));
    }
    Ok(symmetric_eigen_desc(m)?.0)
}

pub fn top_eigenvalue(m: &DMatrix<f64>) -> Result<f64> {
    Ok(eigenvalues_desc(m)?[0])
}

/// Spectral factorization of a symmetric positive definite matrix, used to
/// apply real powers such as `A^{1/2}` and `A^{-1/2}`.
#[derive(Debug, Clone, PartialEq)]
pub struct SpdFactor {
    pub eigenvalues: DVector<f64>,
    pub eigenvectors: DMatrix<f64>,
}

impl SpdFactor {
    pub fn new(m: &DMatrix<f64>) -> Result<Self> {
        let (eigenvalues, eigenvectors) = symmetric_eigen_desc(m)?;
        let max = eigenvalues[0];
        let min = eigenvalues[eigenvalues.len() - 1];
        if !(min > 0.0) || !max.is_finite() {
            let cond = if min > 0.0 { max / min } else { f64::INFINITY };
            return Err(LabError::numerical(
                format!("matrix is not positive definite (smallest eigenvalue {min:.3e})"),
                Some(cond),
            ));
        }
        Ok(Self {
            eigenvalues,
            eigenvectors,
        })
    }

    pub fn condition_number(&self) -> f64 {
        self.eigenvalues[0] / self.eigenvalues[self.eigenvalues.len() - 1]
    }

    /// `V diag(λ^p) Vᵀ`.
    pub fn power(&self, p: f64) -> DMatrix<f64> {
        self.map_spectrum(|l| l.powf(p))
    }

    pub fn map_spectrum(&self, f: impl Fn(f64) -> f64) -> DMatrix<f64> {
        let v = &self.eigenvectors;
        let mut scaled = v.clone();
        for (j, mut col) in scaled.column_iter_mut().enumerate() {
            col *= f(self.eigenvalues[j]);
        }
        let out = scaled * v.transpose();
        (&out + out.transpose()) * 0.5
    }
}

fn max_abs_diagonal(m: &DMatrix<f64>) -> f64 {
    m.diagonal().iter().fold(0.0_f64, |a, &b| a.max(b.abs()))
}

/// Cholesky factorization with jitter escalation: on failure add
/// `JITTER_START * ‖M‖ * I`, doubling at most `JITTER_DOUBLINGS` times.
pub fn cholesky_with_jitter(m: &DMatrix<f64>) -> Result<Cholesky<f64, Dyn>> {
    if let Some(c) = Cholesky::new(m.clone()) {
        return Ok(c);
    }
    let scale = max_abs_diagonal(m).max(f64::MIN_POSITIVE);
    let mut jitter = JITTER_START * scale;
    for _ in 0..=JITTER_DOUBLINGS {
        let mut shifted = m.clone();
        for i in 0..m.nrows() {
            shifted[(i, i)] += jitter;
        }
        if let Some(c) = Cholesky::new(shifted) {
            return Ok(c);
        }
        jitter *= 2.0;
    }
    let cond = eigenvalues_desc(m).ok().map(|ev| {
        let min = ev[ev.len() - 1];
        if min > 0.0 {
            ev[0] / min
        } else {
            f64::INFINITY
        }
    });
    Err(LabError::numerical(
        "Cholesky factorization failed after jitter escalation",
        cond,
    ))
}

/// `‖TᵀT − I‖_F`.
pub fn orthogonality_defect(t: &DMatrix<f64>) -> f64 {
    let n = t.ncols();
    (t.transpose() * t - DMatrix::<f64>::identity(n, n)).norm()
}

/// Lower-triangular factor of the inverse of an SPD matrix given its
/// Cholesky factorization.
pub fn inverse_lower_factor(chol: &Cholesky<f64, Dyn>) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    let inv = chol.inverse();
    let inv = (&inv + inv.transpose()) * 0.5;
    let factor = cholesky_with_jitter(&inv)?.l();
    Ok((inv, factor))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn diagonal_shortcut_is_exact() {
        let m = DMatrix::from_diagonal(&DVector::from_vec(vec![0.3, 2.0, 1.0]));
        let (vals, vecs) = symmetric_eigen_desc(&m).unwrap();
        assert_eq!(vals.as_slice(), &[2.0, 1.0, 0.3]);
        assert_eq!(vecs[(1, 0)], 1.0);
        assert_eq!(vecs[(2, 1)], 1.0);
    }

    #[test]
    fn eigenvalues_sorted_descending() {
        let m = DMatrix::from_row_slice(3, 3, &[2.0, 1.0, 0.0, 1.0, 2.0, 0.0, 0.0, 0.0, 5.0]);
        let vals = eigenvalues_desc(&m).unwrap();
        assert!((vals[0] - 5.0).abs() < 1e-12);
        assert!((vals[1] - 3.0).abs() < 1e-12);
        assert!((vals[2] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn spd_power_roundtrip() {
        let m = DMatrix::from_row_slice(2, 2, &[4.0, 1.0, 1.0, 3.0]);
        let f = SpdFactor::new(&m).unwrap();
        let half = f.power(0.5);
        assert!((&half * &half - &m).norm() < 1e-12);
        let inv_half = f.power(-0.5);
        assert!((&inv_half * &m * &inv_half - DMatrix::identity(2, 2)).norm() < 1e-12);
    }

    #[test]
    fn non_spd_reports_condition() {
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]);
        match SpdFactor::new(&m) {
            Err(LabError::Numerical { condition, .. }) => assert!(condition.is_some()),
            other => panic!("expected numerical error, got {other:?}"),
        }
    }

    #[test]
    fn jitter_rescues_semidefinite() {
        // Rank-deficient PSD matrix: plain Cholesky fails, jitter succeeds.
        let v = DVector::from_vec(vec![1.0, 1.0]);
        let m = &v * v.transpose();
        let c = cholesky_with_jitter(&m).unwrap();
        assert!((c.l() * c.l().transpose() - &m).norm() < 1e-6);
    }

    #[test]
    fn indefinite_fails_after_escalation() {
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, -1.0]);
        assert!(matches!(
            cholesky_with_jitter(&m),
            Err(LabError::Numerical { .. })
        ));
    }
}
