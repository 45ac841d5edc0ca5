use nalgebra::{DMatrix, DVector};

use crate::error::{LabError, Result};
use crate::linalg::{eigenvalues_desc, SpdFactor};
use crate::spectral::{CouplingKind, InverseProblem};

use super::g::compute_g_k;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HsTarget {
    /// `A = 2 G₁^{-1/2} S_v G₁^{1/2}` for a reflection coupling.
    ReflectionPair,
    /// `B + Bᵀ` with `B = R^{1/2} A R^{-1/2}` for an `exp(A)` coupling.
    ExpPair,
    /// `g_n ρ_n²` together with `‖I − 𝒞₁^{-1/2} 𝒞₂ 𝒞₁^{-1/2}‖_HS`.
    GnBound,
}

impl HsTarget {
    pub fn name(self) -> &'static str {
        match self {
            HsTarget::ReflectionPair => "reflection_pair",
            HsTarget::ExpPair => "exp_pair",
            HsTarget::GnBound => "gn_bound",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HsVerdict {
    /// Nothing outside the smallest truncation; the sum is final.
    Stable,
    /// Partial sums settle: growth from N/2 to N is at most 5%.
    Bounded,
    Divergent,
}

impl HsVerdict {
    pub fn name(self) -> &'static str {
        match self {
            HsVerdict::Stable => "stable",
            HsVerdict::Bounded => "bounded",
            HsVerdict::Divergent => "divergent",
        }
    }

    pub fn is_hilbert_schmidt(self) -> bool {
        !matches!(self, HsVerdict::Divergent)
    }
}

pub const BOUNDED_GROWTH: f64 = 0.05;

#[derive(Debug, Clone, PartialEq)]
pub struct HsReport {
    pub target: HsTarget,
    pub truncations: Vec<usize>,
    /// Squared HS norm (trace norm for `ExpPair`) of the leading block at
    /// each truncation.
    pub partial_sums: Vec<f64>,
    pub verdict: HsVerdict,
    /// `(n, g_n ρ_n²)` for `GnBound`, empty otherwise.
    pub gn_table: Vec<(usize, f64)>,
    /// `max g_n ρ_n²` over the second half of the grid divided by the max
    /// over the first half.
    pub gn_growth: Option<f64>,
}

fn truncations(n: usize) -> Vec<usize> {
    let mut t = vec![(n / 4).max(1), (n / 2).max(1), n];
    t.dedup();
    t
}

fn block_hs_sq(m: &DMatrix<f64>, size: usize) -> f64 {
    m.view((0, 0), (size, size)).norm_squared()
}

fn outside_block_is_zero(m: &DMatrix<f64>, size: usize) -> bool {
    let n = m.nrows();
    (0..n).all(|j| (0..n).all(|i| (i < size && j < size) || m[(i, j)] == 0.0))
}

pub fn classify(partials: &[f64], exact_tail_zero: bool) -> HsVerdict {
    if partials.iter().any(|v| !v.is_finite()) {
        return HsVerdict::Divergent;
    }
    if exact_tail_zero && partials.windows(2).all(|w| w[0] == w[1]) {
        return HsVerdict::Stable;
    }
    let last = partials[partials.len() - 1];
    let prev = partials[partials.len().saturating_sub(2)];
    if last - prev <= BOUNDED_GROWTH * last.abs() {
        HsVerdict::Bounded
    } else {
        HsVerdict::Divergent
    }
}

fn reflection_operator(v: &DVector<f64>, lam: &DVector<f64>) -> DMatrix<f64> {
    let n = v.len();
    DMatrix::from_fn(n, n, |i, j| 2.0 * v[i] * v[j] * (lam[j] / lam[i]).sqrt())
}

fn exp_pair_operator(a: &DMatrix<f64>, lam: &DVector<f64>) -> DMatrix<f64> {
    let n = a.nrows();
    let b = DMatrix::from_fn(n, n, |i, j| a[(i, j)] * (lam[i] / lam[j]).sqrt());
    &b + b.transpose()
}

fn trace_norm_block(m: &DMatrix<f64>, size: usize) -> Result<f64> {
    let block = m.view((0, 0), (size, size)).clone_owned();
    Ok(eigenvalues_desc(&block)?.iter().map(|v| v.abs()).sum())
}

/// `I − 𝒞₁^{-1/2} 𝒞₂ 𝒞₁^{-1/2}` with `𝒞₁ = diag(λ)` in e-coordinates and
/// `𝒞₂ = T diag(λ) Tᵀ`.
fn covariance_discrepancy(problem: &InverseProblem) -> Result<DMatrix<f64>> {
    let lam = problem.prior().variances();
    let t = problem.coupling().t_matrix();
    let mut tl = t.clone();
    for (j, l) in lam.iter().enumerate() {
        tl.column_mut(j).scale_mut(*l);
    }
    let c2 = tl * t.transpose();
    let c2 = (&c2 + c2.transpose()) * 0.5;
    SpdFactor::new(&c2)?;
    let n = problem.n_dim();
    let inner = DMatrix::from_fn(n, n, |i, j| c2[(i, j)] / (lam[i] * lam[j]).sqrt());
    Ok(DMatrix::identity(n, n) - inner)
}

pub fn hs_diagnostic(problem: &InverseProblem, target: HsTarget) -> Result<HsReport> {
    let n = problem.n_dim();
    let lam = problem.prior().variances();
    let cuts = truncations(n);
    let mut gn_table = Vec::new();
    let mut gn_growth = None;
    let (partials, tail_zero) = match target {
        HsTarget::ReflectionPair => {
            let CouplingKind::Reflection { v } = problem.coupling().kind() else {
                return Err(LabError::param(
                    "reflection_pair requires a reflection coupling",
                ));
            };
            let a = reflection_operator(v, lam);
            let p: Vec<f64> = cuts.iter().map(|&c| block_hs_sq(&a, c)).collect();
            (p, outside_block_is_zero(&a, cuts[0]))
        }
        HsTarget::ExpPair => {
            let CouplingKind::ExpSkew { a } = problem.coupling().kind() else {
                return Err(LabError::param("exp_pair requires an exp_skew coupling"));
            };
            let s = exp_pair_operator(a, lam);
            let p = cuts
                .iter()
                .map(|&c| trace_norm_block(&s, c))
                .collect::<Result<Vec<_>>>()?;
            (p, outside_block_is_zero(&s, cuts[0]))
        }
        HsTarget::GnBound => {
            let d = covariance_discrepancy(problem)?;
            let p: Vec<f64> = cuts.iter().map(|&c| block_hs_sq(&d, c)).collect();
            let half = (n / 2).max(1);
            for k in 1..=half {
                let rho = problem.rho()[k - 1];
                gn_table.push((k, compute_g_k(problem, k)? * rho * rho));
            }
            let split = gn_table.len().div_ceil(2);
            let first = gn_table[..split].iter().map(|x| x.1).fold(0.0, f64::max);
            let second = gn_table[split..].iter().map(|x| x.1).fold(0.0, f64::max);
            if split < gn_table.len() {
                gn_growth = Some(second / first);
            }
            (p, outside_block_is_zero(&d, cuts[0]))
        }
    };
    let verdict = classify(&partials, tail_zero);
    Ok(HsReport {
        target,
        truncations: cuts,
        partial_sums: partials,
        verdict,
        gn_table,
        gn_growth,
    })
}
