use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{LabError, Result};
use crate::linalg::eigenvalues_desc;
use crate::rng::rng_from_seed;
use crate::spectral::InverseProblem;

use super::g::Cutoff;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TailMode {
    MonteCarlo {
        count: usize,
        seed: u64,
    },
    /// Exponential-moment upper bound.
    Chernoff,
}

/// Residual operator `I − P^φ_k P^e_r` in φ-coordinates.
pub fn projection_residual(problem: &InverseProblem, k: usize, r: Cutoff) -> Result<DMatrix<f64>> {
    let n = problem.n_dim();
    if k == 0 || k > n {
        return Err(LabError::param(format!("need 1 <= k <= {n}, got {k}")));
    }
    if let Cutoff::Finite(r) = r {
        if r == 0 || r > n {
            return Err(LabError::param(format!("need 1 <= r <= {n}, got {r}")));
        }
    }
    let r = r.resolve(n);
    let mut proj = if r == n {
        DMatrix::identity(n, n)
    } else {
        let t = problem.coupling().t_matrix();
        let tr = t.rows(0, r);
        tr.tr_mul(&tr)
    };
    for i in k..n {
        proj.row_mut(i).fill(0.0);
    }
    Ok(DMatrix::identity(n, n) - proj)
}

/// Weights `μ_i` with `‖(I − P^φ_k P^e_r)u‖² ~ Σ μ_i Z_i²` under the prior.
pub fn residual_weights(problem: &InverseProblem, k: usize, r: Cutoff) -> Result<DVector<f64>> {
    let mut s = projection_residual(problem, k, r)?;
    for (j, lam) in problem.prior().variances().iter().enumerate() {
        s.column_mut(j).scale_mut(lam.sqrt());
    }
    let gram = s.tr_mul(&s);
    Ok(eigenvalues_desc(&gram)?.map(|v| v.max(0.0)))
}

/// `log inf_s exp(−s t²) Π (1 − 2sμ_i)^{-1/2}`, capped at 0.
pub fn chernoff_log_bound(mu: &DVector<f64>, threshold: f64) -> f64 {
    let mu_max = mu.iter().copied().fold(0.0, f64::max);
    if mu_max == 0.0 {
        return f64::NEG_INFINITY;
    }
    let t2 = threshold * threshold;
    let objective =
        |s: f64| -s * t2 - 0.5 * mu.iter().map(|m| (1.0 - 2.0 * s * m).ln()).sum::<f64>();
    // Convex on [0, 1/(2μ_max)); golden-section search.
    let phi = 0.5 * (5f64.sqrt() - 1.0);
    let (mut a, mut b) = (0.0, 0.5 / mu_max * (1.0 - 1e-12));
    let mut c = b - phi * (b - a);
    let mut d = a + phi * (b - a);
    for _ in 0..200 {
        if objective(c) < objective(d) {
            b = d;
        } else {
            a = c;
        }
        c = b - phi * (b - a);
        d = a + phi * (b - a);
    }
    objective(0.5 * (a + b)).min(0.0)
}

fn mc_norms(mu: &DVector<f64>, count: usize, seed: u64) -> Vec<f64> {
    let mut rng = rng_from_seed(seed);
    let active: Vec<f64> = mu.iter().copied().filter(|&m| m > 0.0).collect();
    let mut out: Vec<f64> = (0..count)
        .map(|_| {
            active
                .iter()
                .map(|m| {
                    let z: f64 = rng.sample(StandardNormal);
                    m * z * z
                })
                .sum::<f64>()
                .sqrt()
        })
        .collect();
    out.sort_by(f64::total_cmp);
    out
}

/// `μ₀{‖P^φ_k P^e_r(u) − u‖ > threshold}`: a Monte Carlo estimate or a
/// Chernoff upper bound. Exactly 0 when the residual operator vanishes.
pub fn projection_tail_prob(
    problem: &InverseProblem,
    k: usize,
    r: Cutoff,
    threshold: f64,
    mode: TailMode,
) -> Result<f64> {
    Ok(projection_tail_curve(problem, k, r, &[threshold], mode)?[0])
}

/// Tail probabilities on a threshold grid, sharing one sample batch in
/// Monte Carlo mode.
pub fn projection_tail_curve(
    problem: &InverseProblem,
    k: usize,
    r: Cutoff,
    thresholds: &[f64],
    mode: TailMode,
) -> Result<Vec<f64>> {
    if thresholds.iter().any(|t| !(*t > 0.0)) {
        return Err(LabError::param("tail thresholds must be positive"));
    }
    let mu = residual_weights(problem, k, r)?;
    if mu.iter().all(|&m| m == 0.0) {
        return Ok(vec![0.0; thresholds.len()]);
    }
    match mode {
        TailMode::Chernoff => Ok(thresholds
            .iter()
            .map(|&t| chernoff_log_bound(&mu, t).exp())
            .collect()),
        TailMode::MonteCarlo { count, seed } => {
            if count == 0 {
                return Err(LabError::param("Monte Carlo count must be positive"));
            }
            let norms = mc_norms(&mu, count, seed);
            Ok(thresholds
                .iter()
                .map(|&t| (count - norms.partition_point(|&v| v <= t)) as f64 / count as f64)
                .collect())
        }
    }
}
