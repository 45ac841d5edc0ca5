use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::error::{check_dim, LabError, Result};
use crate::linalg::{cholesky_with_jitter, SpdFactor};
use crate::posterior::{
    normalize_log_weights, weighted_estimate, WeightedExceedance, MIN_WEIGHTED_MC,
};
use crate::rng::{derive_seed, rng_from_seed, standard_normal_vector, LabRng};

/// Isotropic Gaussian mixture on `R^p`.
#[derive(Debug, Clone, PartialEq)]
pub struct MixturePrior {
    pub weights: Vec<f64>,
    pub means: Vec<DVector<f64>>,
    pub sds: Vec<f64>,
}

impl MixturePrior {
    pub fn new(weights: Vec<f64>, means: Vec<DVector<f64>>, sds: Vec<f64>) -> Result<Self> {
        let m = weights.len();
        if m == 0 || means.len() != m || sds.len() != m {
            return Err(LabError::param(
                "mixture needs matching nonempty weights, means and sds",
            ));
        }
        if weights.iter().any(|w| !(*w > 0.0)) || sds.iter().any(|s| !(*s > 0.0)) {
            return Err(LabError::param("mixture weights and sds must be positive"));
        }
        let p = means[0].len();
        if p == 0 || means.iter().any(|mu| mu.len() != p) {
            return Err(LabError::param(
                "mixture means must share a positive dimension",
            ));
        }
        let total: f64 = weights.iter().sum();
        Ok(Self {
            weights: weights.iter().map(|w| w / total).collect(),
            means,
            sds,
        })
    }

    /// Two components, weights 0.3/0.7, means −1.5/0.5 in every coordinate,
    /// unit standard deviation.
    pub fn default_for(p: usize) -> Self {
        Self::new(
            vec![0.3, 0.7],
            vec![
                DVector::from_element(p, -1.5),
                DVector::from_element(p, 0.5),
            ],
            vec![1.0, 1.0],
        )
        .expect("valid default mixture")
    }

    pub fn standard_normal(p: usize) -> Self {
        Self::new(vec![1.0], vec![DVector::zeros(p)], vec![1.0]).expect("valid standard normal")
    }

    pub fn dim(&self) -> usize {
        self.means[0].len()
    }

    pub fn sample(&self, rng: &mut LabRng) -> DVector<f64> {
        let u: f64 = rng.random();
        let mut acc = 0.0;
        let mut c = self.weights.len() - 1;
        for (i, w) in self.weights.iter().enumerate() {
            acc += w;
            if u < acc {
                c = i;
                break;
            }
        }
        let sd = self.sds[c];
        self.means[c].map(|m| m + sd * rng.sample::<f64, _>(StandardNormal))
    }
}

/// Injective `q × p` forward matrix with noise covariance `ζ` and a
/// non-Gaussian prior.
#[derive(Debug, Clone, PartialEq)]
pub struct FiniteDimExperiment {
    g: DMatrix<f64>,
    noise: SpdFactor,
    noise_sqrt: DMatrix<f64>,
    weight: DMatrix<f64>,
    /// `(GᵀWG)^{-1}GᵀW`, the ζ-orthogonal projection onto coordinates.
    projector: DMatrix<f64>,
    /// `W^{1/2} G`.
    whitened_g: DMatrix<f64>,
    sigma_min: f64,
    pub prior: MixturePrior,
    pub m_const: f64,
}

impl FiniteDimExperiment {
    pub fn new(
        g: DMatrix<f64>,
        noise_cov: DMatrix<f64>,
        prior: MixturePrior,
        m_const: f64,
    ) -> Result<Self> {
        let (q, p) = g.shape();
        if p == 0 || q < p {
            return Err(LabError::param("need q >= p >= 1"));
        }
        check_dim("noise covariance rows", noise_cov.nrows(), q)?;
        check_dim("noise covariance cols", noise_cov.ncols(), q)?;
        check_dim("prior", prior.dim(), p)?;
        if !(m_const > 0.0) {
            return Err(LabError::param("m_const must be positive"));
        }
        let noise = SpdFactor::new(&noise_cov)?;
        let weight = noise.power(-1.0);
        let whitened_g = noise.power(-0.5) * &g;
        let sv = whitened_g.clone().svd(false, false).singular_values;
        let sigma_min = sv.iter().copied().fold(f64::INFINITY, f64::min);
        if !(sigma_min > 1e-12 * sv.max()) {
            return Err(LabError::param("forward matrix must have full column rank"));
        }
        let normal = g.transpose() * &weight * &g;
        let projector = cholesky_with_jitter(&normal)?.solve(&(g.transpose() * &weight));
        Ok(Self {
            noise_sqrt: noise.power(0.5),
            g,
            noise,
            weight,
            projector,
            whitened_g,
            sigma_min,
            prior,
            m_const,
        })
    }

    /// Scalar model `y = u + z/√n` with the given prior.
    pub fn scalar(prior: MixturePrior, m_const: f64) -> Result<Self> {
        Self::new(
            DMatrix::identity(1, 1),
            DMatrix::identity(1, 1),
            prior,
            m_const,
        )
    }

    pub fn p(&self) -> usize {
        self.g.ncols()
    }

    pub fn q(&self) -> usize {
        self.g.nrows()
    }

    pub fn g_matrix(&self) -> &DMatrix<f64> {
        &self.g
    }

    pub fn noise_eigenvalues(&self) -> &DVector<f64> {
        &self.noise.eigenvalues
    }

    /// Smallest singular value of `ζ^{-1/2} G`.
    pub fn sigma_min(&self) -> f64 {
        self.sigma_min
    }

    pub fn simulate(&self, u0: &DVector<f64>, n_level: f64, seed: u64) -> DVector<f64> {
        let z = standard_normal_vector(&mut rng_from_seed(seed), self.q());
        &self.g * u0 + &self.noise_sqrt * z / n_level.sqrt()
    }

    /// `u'` with `G u'` the ζ-orthogonal projection of `y` onto `range(G)`.
    pub fn project(&self, y: &DVector<f64>) -> DVector<f64> {
        &self.projector * y
    }

    pub fn cm_norm(&self, x: &DVector<f64>) -> f64 {
        x.dot(&(&self.weight * x)).max(0.0).sqrt()
    }

    fn whitened_norm_sq(&self, du: &DVector<f64>) -> f64 {
        (&self.whitened_g * du).norm_squared()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FiniteDimExceedance {
    pub weighted: WeightedExceedance,
    pub y: DVector<f64>,
    pub u_prime: DVector<f64>,
}

fn check_common(
    exp: &FiniteDimExperiment,
    u0: &DVector<f64>,
    n_level: f64,
    xi: f64,
    mc: usize,
) -> Result<()> {
    check_dim("truth", u0.len(), exp.p())?;
    if !(n_level > 0.0) {
        return Err(LabError::param("n_level must be positive"));
    }
    if !(xi >= 0.0) {
        return Err(LabError::param("xi must be non-negative"));
    }
    if mc < MIN_WEIGHTED_MC {
        return Err(LabError::param(format!(
            "mc must be at least {MIN_WEIGHTED_MC}"
        )));
    }
    Ok(())
}

/// Posterior exceedance for given data, sampling the prior with weights
/// `exp(−(n/2)‖G(u − u')‖²_ζ)`.
pub fn finite_dim_exceedance_given_data(
    exp: &FiniteDimExperiment,
    y: &DVector<f64>,
    u0: &DVector<f64>,
    n_level: f64,
    xi: f64,
    mc: usize,
    seed: u64,
) -> Result<FiniteDimExceedance> {
    check_common(exp, u0, n_level, xi, mc)?;
    check_dim("data", y.len(), exp.q())?;
    let u_prime = exp.project(y);
    let mut rng = rng_from_seed(seed);
    let mut log_w = Vec::with_capacity(mc);
    let mut beyond = Vec::with_capacity(mc);
    for _ in 0..mc {
        let u = exp.prior.sample(&mut rng);
        log_w.push(-0.5 * n_level * exp.whitened_norm_sq(&(&u - &u_prime)));
        beyond.push((&u - u0).norm() > xi);
    }
    let (w, log_z, ess) = normalize_log_weights(&log_w)?;
    Ok(FiniteDimExceedance {
        weighted: weighted_estimate(&w, beyond.into_iter(), mc, ess, log_z, xi),
        y: y.clone(),
        u_prime,
    })
}

/// Simulates `y` from `u0` and estimates the posterior exceedance.
pub fn finite_dim_posterior_exceedance(
    exp: &FiniteDimExperiment,
    u0: &DVector<f64>,
    n_level: f64,
    xi: f64,
    mc: usize,
    seed: u64,
) -> Result<FiniteDimExceedance> {
    check_common(exp, u0, n_level, xi, mc)?;
    let y = exp.simulate(u0, n_level, derive_seed(seed, &[0]));
    finite_dim_exceedance_given_data(exp, &y, u0, n_level, xi, mc, derive_seed(seed, &[1]))
}

#[derive(Debug, Clone, PartialEq)]
pub struct FiniteDimRow {
    pub n: f64,
    pub xi_n: f64,
    pub mean_exceedance: f64,
    pub std_error: f64,
    pub min_ess: f64,
    /// Replicates with `‖y − G u0‖_ζ < K₁ ξ_n`.
    pub claim_count: usize,
    /// Largest `exceedance(y, ξ_n) / exceedance(G u0, ξ_n/2)` among them.
    pub claim_ratio_max: f64,
    pub claim_ratio_finite: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FiniteDimRateTable {
    pub rows: Vec<FiniteDimRow>,
    pub k1: f64,
    pub warnings: Vec<String>,
}

/// Mean posterior exceedance at `ξ_n = m_const √(log n / n)` over data
/// replicates, with the data-closeness ratio diagnostic. Prior draws use a
/// common stream per `n`, so the ratio compares like with like.
pub fn finite_dim_rate_run(
    exp: &FiniteDimExperiment,
    u0: &DVector<f64>,
    n_grid: &[f64],
    mc: usize,
    y_replicates: usize,
    seed: u64,
) -> Result<FiniteDimRateTable> {
    if n_grid.is_empty() || n_grid.windows(2).any(|w| !(w[0] < w[1])) || n_grid[0] < 3.0 {
        return Err(LabError::param(
            "n_grid must be increasing with every n >= 3",
        ));
    }
    if y_replicates == 0 {
        return Err(LabError::param("y_replicates must be positive"));
    }
    check_dim("truth", u0.len(), exp.p())?;
    let k1 = exp.sigma_min() / 2.0;
    let g_u0 = exp.g_matrix() * u0;
    let mut rows = Vec::with_capacity(n_grid.len());
    let mut warnings = Vec::new();
    for (ni, &n) in n_grid.iter().enumerate() {
        let xi = exp.m_const * (n.ln() / n).sqrt();
        let prior_seed = derive_seed(seed, &[ni as u64, u64::MAX]);
        let reference =
            finite_dim_exceedance_given_data(exp, &g_u0, u0, n, xi / 2.0, mc, prior_seed)?;
        let denom = reference.weighted.estimate.value;
        let cells = (0..y_replicates)
            .into_par_iter()
            .map(|rep| {
                let y = exp.simulate(u0, n, derive_seed(seed, &[ni as u64, rep as u64]));
                let est = finite_dim_exceedance_given_data(exp, &y, u0, n, xi, mc, prior_seed)?;
                let close = exp.cm_norm(&(&y - &g_u0)) < k1 * xi;
                Ok((est.weighted, close))
            })
            .collect::<Result<Vec<_>>>()?;
        let values: Vec<f64> = cells.iter().map(|(w, _)| w.estimate.value).collect();
        let mean = values.iter().sum::<f64>() / values.len() as f64;
        let std_error = if values.len() > 1 {
            (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>()
                / ((values.len() - 1) * values.len()) as f64)
                .sqrt()
        } else {
            0.0
        };
        let min_ess = cells
            .iter()
            .map(|(w, _)| w.ess)
            .fold(f64::INFINITY, f64::min);
        if cells.iter().any(|(w, _)| w.degenerate) || reference.weighted.degenerate {
            warnings.push(format!("n={n}: degenerate importance weights"));
        }
        let ratios: Vec<f64> = cells
            .iter()
            .filter(|(_, close)| *close)
            .map(|(w, _)| w.estimate.value / denom)
            .collect();
        let claim_ratio_max = ratios.iter().copied().fold(0.0, f64::max);
        rows.push(FiniteDimRow {
            n,
            xi_n: xi,
            mean_exceedance: mean,
            std_error,
            min_ess,
            claim_count: ratios.len(),
            claim_ratio_max,
            claim_ratio_finite: ratios.iter().all(|r| r.is_finite()),
        });
    }
    Ok(FiniteDimRateTable { rows, k1, warnings })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn projection_recovers_coordinates() {
        let g = DMatrix::from_row_slice(3, 2, &[1.0, 0.0, 0.0, 2.0, 1.0, 1.0]);
        let exp = FiniteDimExperiment::new(
            g.clone(),
            DMatrix::identity(3, 3),
            MixturePrior::default_for(2),
            3.0,
        )
        .unwrap();
        let u = DVector::from_vec(vec![0.5, -1.0]);
        assert!((exp.project(&(&g * &u)) - u).norm() < 1e-12);
    }

    #[test]
    fn rank_deficient_rejected() {
        let g = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 1.0]);
        assert!(FiniteDimExperiment::new(
            g,
            DMatrix::identity(2, 2),
            MixturePrior::default_for(2),
            3.0
        )
        .is_err());
    }

    #[test]
    fn mixture_weights_normalized() {
        let m = MixturePrior::default_for(1);
        assert!((m.weights.iter().sum::<f64>() - 1.0).abs() < 1e-15);
    }
}
