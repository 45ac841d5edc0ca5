//! Small statistical utilities: binomial intervals, quantiles and
//! least-squares slope fits.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};
use statrs::function::erf::erfc;

use crate::error::{LabError, Result};

/// Standard normal CDF.
pub fn normal_cdf(x: f64) -> f64 {
    0.5 * erfc(-x / std::f64::consts::SQRT_2)
}

/// Two-sided tail `P(|Z| > x)` of a standard normal.
pub fn normal_two_sided_tail(x: f64) -> f64 {
    erfc(x.abs() / std::f64::consts::SQRT_2)
}

pub fn binomial_se(p: f64, count: usize) -> f64 {
    (p * (1.0 - p) / count as f64).max(0.0).sqrt()
}

/// Wilson score interval for `hits` successes out of `count` at normal
/// quantile `z`.
pub fn wilson_interval(hits: usize, count: usize, z: f64) -> (f64, f64) {
    let n = count as f64;
    let p = hits as f64 / n;
    let z2 = z * z;
    let denom = 1.0 + z2 / n;
    let centre = (p + z2 / (2.0 * n)) / denom;
    let half = z * (p * (1.0 - p) / n + z2 / (4.0 * n * n)).sqrt() / denom;
    ((centre - half).max(0.0), (centre + half).min(1.0))
}

/// Empirical quantile by linear interpolation between order statistics.
/// `sorted` must be sorted ascending and non-empty.
pub fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    debug_assert!(!sorted.is_empty());
    let pos = q.clamp(0.0, 1.0) * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let frac = pos - lo as f64;
    sorted[lo] + frac * (sorted[hi] - sorted[lo])
}

pub fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

/// Least-squares line `y = intercept + slope * x`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LineFit {
    pub slope: f64,
    pub intercept: f64,
    pub slope_se: f64,
    /// 95% two-sided interval for the slope from the residual variance.
    pub slope_ci: (f64, f64),
    pub points: usize,
}

pub fn fit_line(x: &[f64], y: &[f64]) -> Result<LineFit> {
    let m = x.len();
    if m != y.len() {
        return Err(LabError::param("regression inputs differ in length"));
    }
    if m < 2 {
        return Err(LabError::param("regression needs at least two points"));
    }
    let mx = mean(x);
    let my = mean(y);
    let sxx: f64 = x.iter().map(|v| (v - mx).powi(2)).sum();
    if sxx <= 0.0 {
        return Err(LabError::param("regression abscissae are all equal"));
    }
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let (slope_se, slope_ci) = if m > 2 {
        let rss: f64 = x
            .iter()
            .zip(y)
            .map(|(a, b)| (b - intercept - slope * a).powi(2))
            .sum();
        let se = (rss / (m - 2) as f64 / sxx).sqrt();
        let t = StudentsT::new(0.0, 1.0, (m - 2) as f64)
            .map_err(|e| LabError::param(format!("t distribution: {e}")))?
            .inverse_cdf(0.975);
        (se, (slope - t * se, slope + t * se))
    } else {
        (f64::INFINITY, (f64::NEG_INFINITY, f64::INFINITY))
    };
    Ok(LineFit {
        slope,
        intercept,
        slope_se,
        slope_ci,
        points: m,
    })
}
