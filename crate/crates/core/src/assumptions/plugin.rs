use nalgebra::DVector;

use crate::error::{check_dim, LabError, Result};
use crate::rng::{rng_from_seed, standard_normal_matrix};
use crate::spectral::{DataSample, InverseProblem};
use crate::stats::binomial_se;

use super::g::{compute_g_kr, dual_columns};

#[derive(Debug, Clone, PartialEq)]
pub struct PlugInEstimate {
    /// φ-coordinates; entries beyond `k` are zero.
    pub u_hat: DVector<f64>,
    pub y_tilde: DVector<f64>,
    pub k: usize,
    pub r: usize,
    /// `g_{k,r}/n`.
    pub sigma0_sq: f64,
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

/// `ỹ_j = ⟨diag(1/ρ) P^e_r φ_j, y⟩` and `û = Σ_{j ≤ k} ỹ_j φ_j`. The
/// Euclidean pairing keeps `E û = P^φ_k P^e_r u0` for any noise.
pub fn plug_in_estimate(
    problem: &InverseProblem,
    data: &DataSample,
    k: usize,
    r: usize,
) -> Result<PlugInEstimate> {
    check_kr(problem, k, r)?;
    check_dim("data", data.y.len(), problem.n_dim())?;
    let cols = dual_columns(problem, k, r);
    let y_tilde = cols.tr_mul(&data.y);
    let mut u_hat = DVector::zeros(problem.n_dim());
    u_hat.rows_mut(0, k).copy_from(&y_tilde);
    Ok(PlugInEstimate {
        u_hat,
        y_tilde,
        k,
        r,
        sigma0_sq: compute_g_kr(problem, k, r)? / data.n_level,
    })
}

/// Test `ψ_n = 1{‖û − u‖ ≥ M₀ ξ}`; `true` rejects `u`.
pub fn psi_test(estimate: &PlugInEstimate, u: &DVector<f64>, xi: f64, m0: f64) -> Result<bool> {
    check_dim("candidate", u.len(), estimate.u_hat.len())?;
    if !(m0 >= 0.0) {
        return Err(LabError::param("M0 must be non-negative"));
    }
    Ok((&estimate.u_hat - u).norm() >= m0 * xi)
}

/// `P^φ_k P^e_r u0`, the mean of the plug-in estimator.
pub fn plug_in_mean(
    problem: &InverseProblem,
    u0: &DVector<f64>,
    k: usize,
    r: usize,
) -> Result<DVector<f64>> {
    check_kr(problem, k, r)?;
    check_dim("truth", u0.len(), problem.n_dim())?;
    let coupling = problem.coupling();
    let mut ue = coupling.to_e(u0);
    ue.rows_mut(r, problem.n_dim() - r).fill(0.0);
    let mut back = coupling.to_phi(&ue);
    back.rows_mut(k, problem.n_dim() - k).fill(0.0);
    Ok(back)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConcentrationRow {
    pub x: f64,
    pub empirical: f64,
    pub std_error: f64,
    /// `exp(−x²/(2σ₀²))`.
    pub bound: f64,
    pub ok: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConcentrationReport {
    pub rows: Vec<ConcentrationRow>,
    pub sigma0_sq: f64,
    /// Empirical mean of `‖û − E û‖`.
    pub m_hat: f64,
    pub m_hat_se: f64,
    /// `(k/n) g_{k,r}`, the bound on `m̂²`.
    pub mean_dev_bound: f64,
    pub mean_dev_ok: bool,
    pub mc: usize,
}

impl ConcentrationReport {
    pub fn passed(&self) -> bool {
        self.mean_dev_ok && self.rows.iter().all(|r| r.ok)
    }
}

pub const MIN_CONCENTRATION_MC: usize = 1000;

/// Empirical tail of `‖û − E û‖ − m̂` against the Gaussian concentration
/// envelope with scale `σ₀² = g_{k,r}/n`.
#[allow(clippy::too_many_arguments)]
pub fn concentration_check(
    problem: &InverseProblem,
    u0: &DVector<f64>,
    k: usize,
    r: usize,
    n_level: f64,
    x_grid: &[f64],
    mc: usize,
    seed: u64,
) -> Result<ConcentrationReport> {
    check_kr(problem, k, r)?;
    check_dim("truth", u0.len(), problem.n_dim())?;
    if mc < MIN_CONCENTRATION_MC {
        return Err(LabError::param(format!(
            "mc must be at least {MIN_CONCENTRATION_MC}"
        )));
    }
    if !(n_level > 0.0) {
        return Err(LabError::param("n_level must be positive"));
    }
    if x_grid.iter().any(|x| !(*x >= 0.0)) {
        return Err(LabError::param("x grid must be non-negative"));
    }
    // û − E û = Φ̃ᵀ ζ^{1/2} z / √n, whatever the truth.
    let cols = dual_columns(problem, k, r);
    let noise_map = problem.noise().sqrt_matrix(&cols).transpose() / n_level.sqrt();
    let z = standard_normal_matrix(&mut rng_from_seed(seed), problem.n_dim(), mc);
    let dev = noise_map * z;
    let mut d: Vec<f64> = dev.column_iter().map(|c| c.norm()).collect();
    d.sort_by(f64::total_cmp);
    let m_hat = d.iter().sum::<f64>() / mc as f64;
    let var = d.iter().map(|v| (v - m_hat).powi(2)).sum::<f64>() / (mc - 1) as f64;
    let m_hat_se = (var / mc as f64).sqrt();
    let g = compute_g_kr(problem, k, r)?;
    let sigma0_sq = g / n_level;
    let mean_dev_bound = k as f64 * g / n_level;
    let rows = x_grid
        .iter()
        .map(|&x| {
            let thr = m_hat + x;
            let count = mc - d.partition_point(|&v| v < thr);
            let empirical = count as f64 / mc as f64;
            let std_error = binomial_se(empirical, mc);
            let bound = (-x * x / (2.0 * sigma0_sq)).exp();
            ConcentrationRow {
                x,
                empirical,
                std_error,
                bound,
                ok: empirical <= bound + 4.0 * std_error,
            }
        })
        .collect();
    Ok(ConcentrationReport {
        rows,
        sigma0_sq,
        m_hat,
        m_hat_se,
        mean_dev_bound,
        mean_dev_ok: m_hat <= mean_dev_bound.sqrt() + 4.0 * m_hat_se,
        mc,
    })
}
