use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use rand::Rng;

use crate::error::{check_dim, LabError, Result};
use crate::linalg::orthogonality_defect;
use crate::rng::rng_from_seed;

/// Tolerance on `‖TᵀT − I‖_F` accepted for any coupling.
pub const ORTHOGONALITY_TOL: f64 = 1e-10;

pub const DEFAULT_LO_RATIO: f64 = 1.0 / 3.0;
pub const DEFAULT_HI_RATIO: f64 = 2.0;

#[derive(Debug, Clone, PartialEq)]
pub enum CouplingKind {
    Identity,
    /// Column `j` is supported on `[⌈j·lo⌉−1, ⌈j·hi⌉]` (1-based, clipped).
    Banded {
        lo_ratio: f64,
        hi_ratio: f64,
    },
    /// Householder reflection `I − 2vvᵀ`; `v` is normalized on construction.
    Reflection {
        v: DVector<f64>,
    },
    /// `exp(A)` for skew-symmetric `A`.
    ExpSkew {
        a: DMatrix<f64>,
    },
    Explicit {
        t: DMatrix<f64>,
    },
}

impl CouplingKind {
    pub fn banded_default() -> Self {
        CouplingKind::Banded {
            lo_ratio: DEFAULT_LO_RATIO,
            hi_ratio: DEFAULT_HI_RATIO,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            CouplingKind::Identity => "identity",
            CouplingKind::Banded { .. } => "banded",
            CouplingKind::Reflection { .. } => "reflection",
            CouplingKind::ExpSkew { .. } => "exp_skew",
            CouplingKind::Explicit { .. } => "explicit",
        }
    }
}

/// Orthogonal change of basis: column `j` of `t` holds `φ_j` in e-coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct OrthogonalCoupling {
    t: DMatrix<f64>,
    kind: CouplingKind,
}

impl OrthogonalCoupling {
    pub fn n_dim(&self) -> usize {
        self.t.nrows()
    }

    pub fn t_matrix(&self) -> &DMatrix<f64> {
        &self.t
    }

    pub fn kind(&self) -> &CouplingKind {
        &self.kind
    }

    pub fn is_identity(&self) -> bool {
        matches!(self.kind, CouplingKind::Identity)
    }

    /// φ-coordinates to e-coordinates.
    pub fn to_e(&self, u_phi: &DVector<f64>) -> DVector<f64> {
        if self.is_identity() {
            return u_phi.clone();
        }
        &self.t * u_phi
    }

    /// e-coordinates to φ-coordinates.
    pub fn to_phi(&self, u_e: &DVector<f64>) -> DVector<f64> {
        if self.is_identity() {
            return u_e.clone();
        }
        self.t.tr_mul(u_e)
    }
}

/// 1-based inclusive support window of column `j`, clipped to `[1, n]`.
pub fn band_window(j: usize, lo_ratio: f64, hi_ratio: f64, n: usize) -> (usize, usize) {
    let (lo, hi) = raw_window(j, lo_ratio, hi_ratio);
    (lo.max(1), hi.min(n as i64).max(0) as usize)
}

fn raw_window(j: usize, lo_ratio: f64, hi_ratio: f64) -> (usize, i64) {
    let jf = j as f64;
    let lo = ((jf * lo_ratio).ceil() as i64 - 1).max(1) as usize;
    let hi = (jf * hi_ratio).ceil() as i64;
    (lo, hi)
}

pub fn make_coupling(kind: &CouplingKind, n_dim: usize, seed: u64) -> Result<OrthogonalCoupling> {
    if n_dim == 0 {
        return Err(LabError::param("n_dim must be at least 1"));
    }
    let t = match kind {
        CouplingKind::Identity => DMatrix::identity(n_dim, n_dim),
        CouplingKind::Banded { lo_ratio, hi_ratio } => banded(n_dim, *lo_ratio, *hi_ratio, seed)?,
        CouplingKind::Reflection { v } => {
            check_dim("reflection vector", v.len(), n_dim)?;
            let norm = v.norm();
            if !(norm > 0.0) || !norm.is_finite() {
                return Err(LabError::param(
                    "reflection vector must be nonzero and finite",
                ));
            }
            let v = v / norm;
            DMatrix::identity(n_dim, n_dim) - (&v * v.transpose()) * 2.0
        }
        CouplingKind::ExpSkew { a } => {
            check_dim("skew generator rows", a.nrows(), n_dim)?;
            check_dim("skew generator cols", a.ncols(), n_dim)?;
            let scale = a.amax().max(1.0);
            if (a + a.transpose()).amax() > 1e-12 * scale {
                return Err(LabError::param("exp_skew generator is not skew-symmetric"));
            }
            a.clone().exp()
        }
        CouplingKind::Explicit { t } => {
            check_dim("explicit coupling rows", t.nrows(), n_dim)?;
            check_dim("explicit coupling cols", t.ncols(), n_dim)?;
            t.clone()
        }
    };
    let defect = orthogonality_defect(&t);
    if !(defect < ORTHOGONALITY_TOL) {
        return Err(LabError::Construction(format!(
            "coupling is not orthogonal: ||T^T T - I||_F = {defect:.3e}"
        )));
    }
    let kind = match kind {
        CouplingKind::Reflection { v } => CouplingKind::Reflection { v: v / v.norm() },
        other => other.clone(),
    };
    Ok(OrthogonalCoupling { t, kind })
}

/// Splits `1..=n` into consecutive blocks `[a, b]` such that every column of
/// a block may be supported on the whole block. Blocks end strictly before
/// `⌈a·hi⌉` so column `j` of a block never reaches its own upper edge.
fn band_blocks(n: usize, lo_ratio: f64, hi_ratio: f64) -> Result<Vec<(usize, usize)>> {
    let mut blocks = Vec::new();
    let mut a = 1;
    while a <= n {
        let (lo_a, hi_a) = raw_window(a, lo_ratio, hi_ratio);
        if lo_a > a || hi_a < a as i64 {
            return Err(LabError::Construction(format!(
                "band pattern ({lo_ratio}, {hi_ratio}) excludes the diagonal at column {a}"
            )));
        }
        let mut b = a;
        let cap = ((hi_a - 1).max(a as i64) as usize).min(n);
        while b < cap && raw_window(b + 1, lo_ratio, hi_ratio).0 <= a {
            b += 1;
        }
        blocks.push((a, b));
        a = b + 1;
    }
    Ok(blocks)
}

fn banded(n: usize, lo_ratio: f64, hi_ratio: f64, seed: u64) -> Result<DMatrix<f64>> {
    if !(lo_ratio > 0.0 && lo_ratio < hi_ratio && hi_ratio.is_finite()) {
        return Err(LabError::param(
            "banded coupling requires 0 < lo_ratio < hi_ratio",
        ));
    }
    let blocks = band_blocks(n, lo_ratio, hi_ratio)?;
    let mut rng = rng_from_seed(seed);
    let mut t = DMatrix::zeros(n, n);
    for &(a, b) in &blocks {
        let q = random_orthogonal_block(b - a + 1, &mut rng);
        t.view_mut((a - 1, a - 1), (q.nrows(), q.ncols()))
            .copy_from(&q);
    }
    Ok(t)
}

/// Product of seeded Givens rotations, re-orthonormalized by two passes of
/// modified Gram-Schmidt.
fn random_orthogonal_block<R: Rng>(m: usize, rng: &mut R) -> DMatrix<f64> {
    let mut q = DMatrix::<f64>::identity(m, m);
    if m == 1 {
        if rng.random::<bool>() {
            q[(0, 0)] = -1.0;
        }
        return q;
    }
    for _sweep in 0..3 {
        for i in 0..m - 1 {
            for j in i + 1..m {
                let theta: f64 = rng.random_range(0.0..2.0 * PI);
                let (s, c) = theta.sin_cos();
                for r in 0..m {
                    let qi = q[(r, i)];
                    let qj = q[(r, j)];
                    q[(r, i)] = c * qi - s * qj;
                    q[(r, j)] = s * qi + c * qj;
                }
            }
        }
    }
    for _pass in 0..2 {
        for j in 0..m {
            for k in 0..j {
                let proj = q.column(k).dot(&q.column(j));
                let ck = q.column(k).clone_owned();
                let mut cj = q.column_mut(j);
                cj.axpy(-proj, &ck, 1.0);
            }
            let norm = q.column(j).norm();
            q.column_mut(j).unscale_mut(norm);
        }
    }
    q
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_coupling() {
        let c = make_coupling(&CouplingKind::Identity, 4, 0).unwrap();
        assert_eq!(c.t_matrix(), &DMatrix::<f64>::identity(4, 4));
    }

    #[test]
    fn reflection_on_basis_vector() {
        let v = DVector::from_vec(vec![1.0, 0.0, 0.0]);
        let c = make_coupling(&CouplingKind::Reflection { v }, 3, 0).unwrap();
        let expected = DMatrix::from_diagonal(&DVector::from_vec(vec![-1.0, 1.0, 1.0]));
        assert_eq!(c.t_matrix(), &expected);
    }

    #[test]
    fn reflection_rejects_zero() {
        let v = DVector::zeros(3);
        assert!(matches!(
            make_coupling(&CouplingKind::Reflection { v }, 3, 0),
            Err(LabError::Parameter(_))
        ));
    }

    #[test]
    fn exp_skew_rotation() {
        let a = DMatrix::from_row_slice(2, 2, &[0.0, -0.5, 0.5, 0.0]);
        let c = make_coupling(&CouplingKind::ExpSkew { a }, 2, 0).unwrap();
        let t = c.t_matrix();
        assert!((t[(0, 0)] - 0.5f64.cos()).abs() < 1e-14);
        assert!((t[(1, 0)] - 0.5f64.sin()).abs() < 1e-14);
    }

    #[test]
    fn exp_skew_rejects_symmetric() {
        let a = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 1.0, 0.0]);
        assert!(matches!(
            make_coupling(&CouplingKind::ExpSkew { a }, 2, 0),
            Err(LabError::Parameter(_))
        ));
    }

    #[test]
    fn explicit_non_orthogonal_rejected() {
        let t = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 0.0, 1.0]);
        assert!(matches!(
            make_coupling(&CouplingKind::Explicit { t }, 2, 0),
            Err(LabError::Construction(_))
        ));
    }

    #[test]
    fn banded_n8_seed7() {
        let c = make_coupling(&CouplingKind::banded_default(), 8, 7).unwrap();
        let t = c.t_matrix();
        for j in 1..=8usize {
            let lo = (j as f64 / 3.0).ceil() as usize - 1;
            let hi = 2 * j;
            for k in 1..=8usize {
                if k < lo || k > hi {
                    assert_eq!(t[(k - 1, j - 1)], 0.0, "entry (k={k}, j={j})");
                }
            }
        }
        assert!(orthogonality_defect(t) < 1e-10);
    }

    #[test]
    fn dyadic_blocks_for_default_ratios() {
        let blocks = band_blocks(20, DEFAULT_LO_RATIO, DEFAULT_HI_RATIO).unwrap();
        assert_eq!(blocks, vec![(1, 1), (2, 3), (4, 7), (8, 15), (16, 20)]);
    }

    #[test]
    fn banded_is_seed_dependent_and_reproducible() {
        let a = make_coupling(&CouplingKind::banded_default(), 16, 1).unwrap();
        let b = make_coupling(&CouplingKind::banded_default(), 16, 1).unwrap();
        let c = make_coupling(&CouplingKind::banded_default(), 16, 2).unwrap();
        assert_eq!(a, b);
        assert_ne!(a.t_matrix(), c.t_matrix());
    }

    #[test]
    fn infeasible_band_is_construction_error() {
        let kind = CouplingKind::Banded {
            lo_ratio: 0.2,
            hi_ratio: 0.5,
        };
        assert!(matches!(
            make_coupling(&kind, 8, 0),
            Err(LabError::Construction(_))
        ));
        let bad = CouplingKind::Banded {
            lo_ratio: 2.0,
            hi_ratio: 1.0,
        };
        assert!(matches!(
            make_coupling(&bad, 8, 0),
            Err(LabError::Parameter(_))
        ));
    }
}
