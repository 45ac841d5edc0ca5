use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{check_dim, LabError, Result};
use crate::linalg::symmetric_eigen_desc;
use crate::rng::{derive_seed, rng_from_seed};
use crate::spectral::InverseProblem;
use crate::stats::wilson_interval;

pub const MIN_SMALL_BALL_MC: usize = 1000;
const Z95: f64 = 1.959_963_984_540_054;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SmallBallMethod {
    /// Direct prior sampling with a Wilson interval.
    Plain,
    /// Exponential tilting of the whitened quadratic form at its
    /// saddlepoint; needed once the ball mass drops below about `1/mc`.
    Tilted,
}

/// One ball-mass estimate on the log scale.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BallMass {
    pub log_prob: f64,
    pub ci_halfwidth: f64,
    pub hits: usize,
    /// No draw landed in the ball; `log_prob` is an upper bound.
    pub upper_bound_only: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SmallBallReport {
    /// `log μ₀{‖G(u) − G(u0)‖_ζ ≤ ε}`.
    pub log_prob: f64,
    pub ci_halfwidth: f64,
    /// `log μ₀{‖G(u)‖_ζ ≤ ε/2}`.
    pub centered_log_prob: f64,
    pub centered_ci_halfwidth: f64,
    /// `½ Σ_{i ≤ j₀} u0_i²/λ_i`, the Cameron-Martin cost of the shift.
    pub shift_cost: f64,
    pub j0: usize,
    pub eps: f64,
    pub mc: usize,
    pub method: SmallBallMethod,
    pub upper_bound_only: bool,
}

impl SmallBallReport {
    /// Slack-adjusted form of `log_prob ≥ centered_log_prob − shift_cost`.
    pub fn lower_bound_holds(&self) -> bool {
        if self.upper_bound_only {
            return true;
        }
        self.log_prob + self.ci_halfwidth
            >= self.centered_log_prob - self.centered_ci_halfwidth - self.shift_cost
    }
}

/// Law of the whitened image `X = ζ^{-1/2} G u`, `u ~ μ₀`, in the
/// eigenbasis of its covariance.
struct WhitenedImage {
    kappa: DVector<f64>,
    basis: DMatrix<f64>,
}

impl WhitenedImage {
    fn new(problem: &InverseProblem) -> Result<Self> {
        let a = problem.noise().whiten_matrix(&problem.forward_matrix());
        let mut scaled = a.clone();
        for (j, lam) in problem.prior().variances().iter().enumerate() {
            scaled.column_mut(j).scale_mut(lam.sqrt());
        }
        let k = &scaled * scaled.transpose();
        let (kappa, basis) = symmetric_eigen_desc(&k)?;
        Ok(Self {
            kappa: kappa.map(|v| v.max(0.0)),
            basis,
        })
    }

    fn rotate(&self, c: &DVector<f64>) -> DVector<f64> {
        self.basis.tr_mul(c)
    }
}

/// Cumulant generating function of `Q = Σ(ξ_i − c_i)²`, `ξ_i ~ N(0, κ_i)`,
/// and its first derivative, at `s < 1/(2 max κ)`.
fn cgf(kappa: &DVector<f64>, c: &DVector<f64>, s: f64) -> (f64, f64) {
    let mut k = 0.0;
    let mut dk = 0.0;
    for (kap, ci) in kappa.iter().zip(c.iter()) {
        let d = 1.0 - 2.0 * s * kap;
        k += -0.5 * d.ln() + s * ci * ci / d;
        dk += kap / d + ci * ci / (d * d);
    }
    (k, dk)
}

/// Saddlepoint `s ≤ 0` with `K'(s) = target`, or 0 when the mean of `Q`
/// is already below the target.
fn saddlepoint(kappa: &DVector<f64>, c: &DVector<f64>, target: f64) -> f64 {
    if cgf(kappa, c, 0.0).1 <= target {
        return 0.0;
    }
    // K'(−t) decreases in t; bisect on log t.
    let above = |lt: f64| cgf(kappa, c, -lt.exp()).1 > target;
    let (mut lo, mut hi) = (0.0_f64, 0.0_f64);
    if above(0.0) {
        while above(hi) && hi < 300.0 {
            hi += 2.0;
        }
        lo = hi - 2.0;
    } else {
        while !above(lo) && lo > -300.0 {
            lo -= 2.0;
        }
        hi = lo + 2.0;
    }
    for _ in 0..100 {
        let mid = 0.5 * (lo + hi);
        if above(mid) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    -hi.exp()
}

fn ball_mass(
    image: &WhitenedImage,
    centre: &DVector<f64>,
    eps: f64,
    mc: usize,
    seed: u64,
    method: SmallBallMethod,
) -> BallMass {
    let c = image.rotate(centre);
    let e2 = eps * eps;
    let s = match method {
        SmallBallMethod::Plain => 0.0,
        SmallBallMethod::Tilted => saddlepoint(&image.kappa, &c, e2),
    };
    let mut rng = rng_from_seed(seed);
    if s == 0.0 {
        let mut hits = 0;
        for _ in 0..mc {
            let q: f64 = image
                .kappa
                .iter()
                .zip(c.iter())
                .map(|(k, ci)| {
                    let z: f64 = rng.sample(StandardNormal);
                    (k.sqrt() * z - ci).powi(2)
                })
                .sum();
            if q <= e2 {
                hits += 1;
            }
        }
        let (lo, hi) = wilson_interval(hits, mc, Z95);
        if hits == 0 {
            return BallMass {
                log_prob: hi.ln(),
                ci_halfwidth: 0.0,
                hits,
                upper_bound_only: true,
            };
        }
        let p = hits as f64 / mc as f64;
        return BallMass {
            log_prob: p.ln(),
            ci_halfwidth: (p.ln() - lo.ln()).max(hi.ln() - p.ln()),
            hits,
            upper_bound_only: false,
        };
    }
    // Under the tilted law ξ_i ~ N(m_i, τ_i); the likelihood ratio is
    // exp(K(s) − sQ).
    let (k_s, _) = cgf(&image.kappa, &c, s);
    let params: Vec<(f64, f64, f64)> = image
        .kappa
        .iter()
        .zip(c.iter())
        .map(|(kap, ci)| {
            let d = 1.0 - 2.0 * s * kap;
            (-2.0 * s * kap * ci / d, (kap / d).sqrt(), *ci)
        })
        .collect();
    // Log-weights relative to the Chernoff bound exp(K(s) − sε²), all ≤ 0.
    let mut rel = Vec::with_capacity(mc);
    for _ in 0..mc {
        let q: f64 = params
            .iter()
            .map(|(m, sd, ci)| {
                let z: f64 = rng.sample(StandardNormal);
                (m + sd * z - ci).powi(2)
            })
            .sum();
        if q <= e2 {
            rel.push(-s * (q - e2));
        }
    }
    let log_bound = k_s - s * e2;
    let hits = rel.len();
    if hits == 0 {
        return BallMass {
            log_prob: log_bound,
            ci_halfwidth: 0.0,
            hits,
            upper_bound_only: true,
        };
    }
    let w: Vec<f64> = rel.iter().map(|l| l.exp()).collect();
    let n = mc as f64;
    let mean = w.iter().sum::<f64>() / n;
    let second = w.iter().map(|v| v * v).sum::<f64>() / n;
    let se = ((second - mean * mean).max(0.0) / n).sqrt();
    let lo = (mean - Z95 * se).max(mean * 1e-3);
    let half = mean.ln() - lo.ln();
    BallMass {
        log_prob: log_bound + mean.ln(),
        ci_halfwidth: half,
        hits,
        upper_bound_only: false,
    }
}

/// Smallest `j₀` with `‖G u0 − G P_{j₀} u0‖_ζ ≤ ε/2` and its cost.
fn shift_certificate(
    problem: &InverseProblem,
    u0: &DVector<f64>,
    eps: f64,
) -> Result<(usize, f64)> {
    let a = problem.noise().whiten_matrix(&problem.forward_matrix());
    let full = &a * u0;
    let lam = problem.prior().variances();
    let mut partial = DVector::zeros(problem.n_dim());
    let mut cost = 0.0;
    let half = eps / 2.0;
    if full.norm() <= half {
        return Ok((0, 0.0));
    }
    for j in 0..problem.n_dim() {
        if u0[j] != 0.0 {
            partial.axpy(u0[j], &a.column(j), 1.0);
            cost += 0.5 * u0[j] * u0[j] / lam[j];
        }
        if (&full - &partial).norm() <= half {
            return Ok((j + 1, cost));
        }
    }
    Ok((problem.n_dim(), cost))
}

/// Ball mass `μ₀{‖G(u) − G(u0)‖_ζ ≤ ε}` by plain Monte Carlo.
pub fn small_ball_log_prob(
    problem: &InverseProblem,
    u0: &DVector<f64>,
    eps: f64,
    mc: usize,
    seed: u64,
) -> Result<SmallBallReport> {
    small_ball_log_prob_with(problem, u0, eps, mc, seed, SmallBallMethod::Plain)
}

pub fn small_ball_log_prob_with(
    problem: &InverseProblem,
    u0: &DVector<f64>,
    eps: f64,
    mc: usize,
    seed: u64,
    method: SmallBallMethod,
) -> Result<SmallBallReport> {
    check_dim("truth", u0.len(), problem.n_dim())?;
    if !(eps > 0.0) || !eps.is_finite() {
        return Err(LabError::param("eps must be positive and finite"));
    }
    if mc < MIN_SMALL_BALL_MC {
        return Err(LabError::param(format!(
            "mc must be at least {MIN_SMALL_BALL_MC}"
        )));
    }
    let image = WhitenedImage::new(problem)?;
    let centre = problem
        .noise()
        .whiten(&problem.forward_apply(u0, crate::spectral::Basis::Phi)?);
    let shifted = ball_mass(&image, &centre, eps, mc, derive_seed(seed, &[0]), method);
    let centered = ball_mass(
        &image,
        &DVector::zeros(problem.n_dim()),
        eps / 2.0,
        mc,
        derive_seed(seed, &[1]),
        method,
    );
    let (j0, shift_cost) = shift_certificate(problem, u0, eps)?;
    Ok(SmallBallReport {
        log_prob: shifted.log_prob.min(0.0),
        ci_halfwidth: shifted.ci_halfwidth,
        centered_log_prob: centered.log_prob.min(0.0),
        centered_ci_halfwidth: centered.ci_halfwidth,
        shift_cost,
        j0,
        eps,
        mc,
        method,
        upper_bound_only: shifted.upper_bound_only,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn saddlepoint_solves_derivative() {
        let kappa = DVector::from_vec(vec![1.0, 0.5, 0.1]);
        let c = DVector::from_vec(vec![0.3, 0.0, -0.2]);
        let s = saddlepoint(&kappa, &c, 0.05);
        assert!(s < 0.0);
        assert!((cgf(&kappa, &c, s).1 - 0.05).abs() < 1e-8);
    }

    #[test]
    fn cgf_matches_chi_square() {
        // One coordinate, centred: E exp(sZ²) = (1 − 2s)^{-1/2}.
        let (k, _) = cgf(&DVector::from_element(1, 1.0), &DVector::zeros(1), -1.5);
        assert!((k - (-0.5 * 4f64.ln())).abs() < 1e-14);
    }
}
