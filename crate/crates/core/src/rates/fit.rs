use nalgebra::DVector;
use rayon::prelude::*;

use crate::error::{check_dim, LabError, Result};
use crate::posterior::{posterior_distances, PosteriorOperator};
use crate::rng::derive_seed;
use crate::spectral::InverseProblem;
use crate::stats::{fit_line, LineFit};

/// Log-spaced radius grid searched for `ξ̂_n`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RadiusGrid {
    pub xi_min: f64,
    pub xi_max: f64,
    pub points: usize,
}

impl Default for RadiusGrid {
    fn default() -> Self {
        Self {
            xi_min: 1e-6,
            xi_max: 1e2,
            points: 400,
        }
    }
}

impl RadiusGrid {
    pub fn value(&self, i: usize) -> f64 {
        let t = i as f64 / (self.points - 1) as f64;
        (self.xi_min.ln() + t * (self.xi_max.ln() - self.xi_min.ln())).exp()
    }

    fn validate(&self) -> Result<()> {
        if !(self.xi_min > 0.0
            && self.xi_min < self.xi_max
            && self.xi_max.is_finite()
            && self.points >= 2)
        {
            return Err(LabError::param(
                "radius grid needs 0 < xi_min < xi_max and at least 2 points",
            ));
        }
        Ok(())
    }
}

/// Per-`n` outcome of the radius search.
#[derive(Debug, Clone, PartialEq)]
pub struct RatePoint {
    pub n: f64,
    /// `None` when the search bracket failed.
    pub xi_hat: Option<f64>,
    /// Fraction of replicates whose exceedance at `xi_hat` is at most
    /// `delta_level`.
    pub exceedance_frac: f64,
    pub failure: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RateFit {
    pub n_grid: Vec<f64>,
    /// `NaN` where the search failed.
    pub xi_hat: Vec<f64>,
    pub points: Vec<RatePoint>,
    pub slope: f64,
    pub slope_ci: (f64, f64),
    pub line: LineFit,
    pub delta_level: f64,
    pub y_replicates: usize,
    pub mc: usize,
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RateFitSettings {
    pub delta_level: f64,
    pub y_replicates: usize,
    pub mc: usize,
    pub grid: RadiusGrid,
}

impl RateFitSettings {
    pub fn new(delta_level: f64, y_replicates: usize, mc: usize) -> Self {
        Self {
            delta_level,
            y_replicates,
            mc,
            grid: RadiusGrid::default(),
        }
    }
}

/// For each replicate, the smallest radius whose exceedance is at most
/// `delta`: an order statistic of the sorted posterior distances.
fn replicate_thresholds(distances: &[f64], delta: f64) -> f64 {
    let mc = distances.len();
    let allowed = (delta * mc as f64).floor() as usize;
    distances[mc - 1 - allowed.min(mc - 1)]
}

fn search_radius(thresholds: &[f64], delta: f64, grid: &RadiusGrid) -> (Option<usize>, f64) {
    let needed = ((1.0 - delta) * thresholds.len() as f64).ceil() as usize;
    let frac_at =
        |xi: f64| thresholds.iter().filter(|&&q| q <= xi).count() as f64 / thresholds.len() as f64;
    let ok = |i: usize| thresholds.iter().filter(|&&q| q <= grid.value(i)).count() >= needed;
    let last = grid.points - 1;
    if !ok(last) {
        return (None, frac_at(grid.value(last)));
    }
    let (mut lo, mut hi) = (0usize, last);
    if ok(0) {
        return (Some(0), frac_at(grid.value(0)));
    }
    while hi - lo > 1 {
        let mid = (lo + hi) / 2;
        if ok(mid) {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    (Some(hi), frac_at(grid.value(hi)))
}

/// Contraction radius per noise level and the log-log slope against `n`.
///
/// For every `n` the radius is the smallest grid value at which at least
/// a fraction `1 − δ` of the data replicates have posterior exceedance at
/// most `δ`.
pub fn fit_contraction_rate(
    problem: &InverseProblem,
    u0: &DVector<f64>,
    n_grid: &[f64],
    settings: &RateFitSettings,
    seed: u64,
) -> Result<RateFit> {
    check_dim("truth", u0.len(), problem.n_dim())?;
    if n_grid.len() < 4 {
        return Err(LabError::param("n_grid needs at least 4 points"));
    }
    if n_grid.windows(2).any(|w| !(w[0] < w[1])) || !(n_grid[0] > 0.0) {
        return Err(LabError::param(
            "n_grid must be positive and strictly increasing",
        ));
    }
    let delta = settings.delta_level;
    if !(delta > 0.0 && delta < 0.5) {
        return Err(LabError::param("delta_level must lie in (0, 0.5)"));
    }
    if settings.y_replicates == 0 {
        return Err(LabError::param("y_replicates must be positive"));
    }
    settings.grid.validate()?;

    let mut points = Vec::with_capacity(n_grid.len());
    let mut warnings = Vec::new();
    for (ni, &n) in n_grid.iter().enumerate() {
        let op = PosteriorOperator::new(problem, n)?;
        let thresholds = (0..settings.y_replicates)
            .into_par_iter()
            .map(|rep| {
                let cell = [ni as u64, rep as u64];
                let data =
                    problem.simulate_data(u0, n, derive_seed(seed, &[cell[0], cell[1], 0]))?;
                let post = op.posterior(&data.y)?;
                let batch = posterior_distances(
                    &post,
                    u0,
                    settings.mc,
                    derive_seed(seed, &[cell[0], cell[1], 1]),
                )?;
                Ok(replicate_thresholds(batch.distances(), delta))
            })
            .collect::<Result<Vec<f64>>>()?;
        let (idx, frac) = search_radius(&thresholds, delta, &settings.grid);
        match idx {
            Some(i) => {
                if i == 0 {
                    warnings.push(format!("n={n}: radius at the lower grid edge"));
                }
                points.push(RatePoint {
                    n,
                    xi_hat: Some(settings.grid.value(i)),
                    exceedance_frac: frac,
                    failure: None,
                });
            }
            None => {
                let msg = format!(
                    "n={n}: exceedance never below {delta} up to xi={}",
                    settings.grid.xi_max
                );
                warnings.push(format!("{msg}; excluded from fit"));
                points.push(RatePoint {
                    n,
                    xi_hat: None,
                    exceedance_frac: frac,
                    failure: Some(msg),
                });
            }
        }
    }
    let (lx, ly): (Vec<f64>, Vec<f64>) = points
        .iter()
        .filter_map(|p| p.xi_hat.map(|x| (p.n.ln(), x.ln())))
        .unzip();
    let line = fit_line(&lx, &ly)?;
    Ok(RateFit {
        n_grid: n_grid.to_vec(),
        xi_hat: points
            .iter()
            .map(|p| p.xi_hat.unwrap_or(f64::NAN))
            .collect(),
        points,
        slope: line.slope,
        slope_ci: line.slope_ci,
        line,
        delta_level: delta,
        y_replicates: settings.y_replicates,
        mc: settings.mc,
        warnings,
    })
}
