use nalgebra::DVector;

use crate::error::{check_dim, LabError, Result};
use crate::rng::{rng_from_seed, standard_normal_matrix};
use crate::spectral::{DataSample, InverseProblem, PriorSampler};
use crate::stats::binomial_se;

use super::gaussian::{potential_phi, PosteriorGaussian};

pub const MIN_CONJUGATE_MC: usize = 100;
pub const MIN_WEIGHTED_MC: usize = 1000;
/// Effective sample size below which a weighted estimate is flagged.
pub const DEGENERATE_ESS: f64 = 10.0;

/// Monte Carlo estimate of the posterior mass outside the ball of radius
/// `xi` around the truth.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExceedanceEstimate {
    pub value: f64,
    pub std_error: f64,
    pub mc_count: usize,
    pub xi: f64,
}

/// Sorted distances `‖u_i − u0‖` of one batch of posterior draws. Every
/// radius evaluated on the same batch sees the same draws, so the
/// exceedance curve is exactly non-increasing in `xi`.
#[derive(Debug, Clone, PartialEq)]
pub struct DistanceBatch {
    sorted: Vec<f64>,
}

impl DistanceBatch {
    pub fn len(&self) -> usize {
        self.sorted.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sorted.is_empty()
    }

    pub fn distances(&self) -> &[f64] {
        &self.sorted
    }

    /// Fraction of draws strictly farther than `xi`.
    pub fn fraction_beyond(&self, xi: f64) -> f64 {
        let inside = self.sorted.partition_point(|&d| d <= xi);
        (self.sorted.len() - inside) as f64 / self.sorted.len() as f64
    }

    pub fn estimate(&self, xi: f64) -> ExceedanceEstimate {
        let value = self.fraction_beyond(xi);
        ExceedanceEstimate {
            value,
            std_error: binomial_se(value, self.sorted.len()),
            mc_count: self.sorted.len(),
            xi,
        }
    }
}

fn check_xi(xi: f64) -> Result<()> {
    if !(xi >= 0.0) || xi.is_nan() {
        return Err(LabError::param("radius xi must be non-negative"));
    }
    Ok(())
}

/// Draws `mc` posterior samples and returns their sorted distances to `u0`.
pub fn posterior_distances(
    post: &PosteriorGaussian,
    u0: &DVector<f64>,
    mc: usize,
    seed: u64,
) -> Result<DistanceBatch> {
    check_dim("truth", u0.len(), post.n_dim())?;
    if mc < MIN_CONJUGATE_MC {
        return Err(LabError::param(format!(
            "mc must be at least {MIN_CONJUGATE_MC}"
        )));
    }
    let n = post.n_dim();
    let offset = &post.mean - u0;
    let z = standard_normal_matrix(&mut rng_from_seed(seed), n, mc);
    let draws = if post.factor_is_diagonal() {
        let d = post.cov_factor.diagonal();
        let mut s = z;
        for (i, di) in d.iter().enumerate() {
            s.row_mut(i).scale_mut(*di);
        }
        s
    } else {
        &post.cov_factor * z
    };
    let mut sorted: Vec<f64> = draws
        .column_iter()
        .map(|col| {
            col.iter()
                .zip(offset.iter())
                .map(|(a, b)| (b + a) * (b + a))
                .sum::<f64>()
                .sqrt()
        })
        .collect();
    sorted.sort_by(f64::total_cmp);
    Ok(DistanceBatch { sorted })
}

pub fn posterior_exceedance(
    post: &PosteriorGaussian,
    u0: &DVector<f64>,
    xi: f64,
    mc: usize,
    seed: u64,
) -> Result<ExceedanceEstimate> {
    check_xi(xi)?;
    Ok(posterior_distances(post, u0, mc, seed)?.estimate(xi))
}

/// Exceedance on a grid of radii sharing one sample batch.
pub fn posterior_exceedance_curve(
    post: &PosteriorGaussian,
    u0: &DVector<f64>,
    xis: &[f64],
    mc: usize,
    seed: u64,
) -> Result<Vec<ExceedanceEstimate>> {
    for &xi in xis {
        check_xi(xi)?;
    }
    let batch = posterior_distances(post, u0, mc, seed)?;
    Ok(xis.iter().map(|&xi| batch.estimate(xi)).collect())
}

/// Self-normalized importance-sampling estimate with diagnostics.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightedExceedance {
    /// `mc_count` holds the effective sample size rounded down, and
    /// `std_error` is the binomial error at that size.
    pub estimate: ExceedanceEstimate,
    pub draws: usize,
    pub ess: f64,
    /// `log Ẑ` with `Ẑ = mean(exp(−Φ))`.
    pub log_normalizer: f64,
    pub degenerate: bool,
}

impl WeightedExceedance {
    pub fn normalizer(&self) -> f64 {
        self.log_normalizer.exp()
    }
}

/// Normalized weights from log-weights, `log mean(w)`, and the effective
/// sample size `(Σw)²/Σw²`.
pub(crate) fn normalize_log_weights(log_w: &[f64]) -> Result<(Vec<f64>, f64, f64)> {
    let max = log_w.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return Err(LabError::numerical(
            "importance weights are not finite",
            None,
        ));
    }
    let w: Vec<f64> = log_w.iter().map(|l| (l - max).exp()).collect();
    let total: f64 = w.iter().sum();
    let sq: f64 = w.iter().map(|v| v * v).sum();
    let log_mean = max + (total / log_w.len() as f64).ln();
    let ess = total * total / sq;
    Ok((w.into_iter().map(|v| v / total).collect(), log_mean, ess))
}

pub(crate) fn weighted_estimate(
    weights: &[f64],
    beyond: impl Iterator<Item = bool>,
    draws: usize,
    ess: f64,
    log_normalizer: f64,
    xi: f64,
) -> WeightedExceedance {
    let value: f64 = weights
        .iter()
        .zip(beyond)
        .filter(|(_, b)| *b)
        .map(|(w, _)| w)
        .sum::<f64>()
        .clamp(0.0, 1.0);
    let eff = (ess.floor() as usize).max(1);
    WeightedExceedance {
        estimate: ExceedanceEstimate {
            value,
            std_error: binomial_se(value, eff),
            mc_count: eff,
            xi,
        },
        draws,
        ess,
        log_normalizer,
        degenerate: ess < DEGENERATE_ESS,
    }
}

/// Posterior exceedance from prior draws weighted by `exp(−Φ(y,u))`.
pub fn weighted_posterior_exceedance(
    problem: &InverseProblem,
    data: &DataSample,
    u0: &DVector<f64>,
    xi: f64,
    prior: &dyn PriorSampler,
    mc: usize,
    seed: u64,
) -> Result<WeightedExceedance> {
    check_xi(xi)?;
    check_dim("truth", u0.len(), problem.n_dim())?;
    check_dim("prior sampler", prior.n_dim(), problem.n_dim())?;
    if mc < MIN_WEIGHTED_MC {
        return Err(LabError::param(format!(
            "mc must be at least {MIN_WEIGHTED_MC}"
        )));
    }
    let mut rng = rng_from_seed(seed);
    let mut log_w = Vec::with_capacity(mc);
    let mut beyond = Vec::with_capacity(mc);
    for _ in 0..mc {
        let u = prior.sample(&mut rng);
        log_w.push(-potential_phi(problem, &data.y, &u, data.n_level)?);
        beyond.push((&u - u0).norm() > xi);
    }
    let (w, log_z, ess) = normalize_log_weights(&log_w)?;
    Ok(weighted_estimate(
        &w,
        beyond.into_iter(),
        mc,
        ess,
        log_z,
        xi,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::DMatrix;

    fn unit_posterior() -> PosteriorGaussian {
        PosteriorGaussian {
            mean: DVector::zeros(1),
            cov_factor: DMatrix::identity(1, 1),
            n_level: 1.0,
        }
    }

    #[test]
    fn zero_radius_is_certain() {
        let e = posterior_exceedance(&unit_posterior(), &DVector::zeros(1), 0.0, 500, 1).unwrap();
        assert_eq!(e.value, 1.0);
    }

    #[test]
    fn standard_normal_tail() {
        let e =
            posterior_exceedance(&unit_posterior(), &DVector::zeros(1), 1.0, 20_000, 2).unwrap();
        assert!((e.value - 0.3173).abs() < 3.0 * e.std_error, "{e:?}");
        assert!(e.std_error <= 0.5 / (e.mc_count as f64).sqrt() + 1e-12);
    }

    #[test]
    fn small_mc_rejected() {
        assert!(posterior_exceedance(&unit_posterior(), &DVector::zeros(1), 1.0, 99, 1).is_err());
    }

    #[test]
    fn log_weights_are_stable() {
        let (w, log_mean, ess) = normalize_log_weights(&[1000.0, 1000.0]).unwrap();
        assert_eq!(w, vec![0.5, 0.5]);
        assert!((log_mean - 1000.0).abs() < 1e-12);
        assert!((ess - 2.0).abs() < 1e-12);
    }
}
