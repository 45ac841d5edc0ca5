use nalgebra::DVector;

use crate::error::{check_dim, LabError, Result};
use crate::rng::derive_seed;
use crate::spectral::InverseProblem;

use super::g::{compute_g_kr_sqrt, Cutoff};
use super::plugin::plug_in_mean;
use super::small_ball::{small_ball_log_prob_with, SmallBallMethod, SmallBallReport};
use super::tail::{chernoff_log_bound, residual_weights};

/// Free constants of the contraction assumptions.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PlanConstants {
    /// Small-ball exponent: mass ≥ exp(−C n ε²).
    pub c: f64,
    /// `√g ≤ C₁ ξ/ε`.
    pub c1: f64,
    /// Tail threshold `C₂ ξ`.
    pub c2: f64,
    /// `k < R n ε²`.
    pub r: f64,
    /// Truth approximation `‖P u0 − u0‖ ≤ M ξ`.
    pub m: f64,
}

impl Default for PlanConstants {
    fn default() -> Self {
        Self {
            c: 1.0,
            c1: 1.0,
            c2: 1.0,
            r: 1.0,
            m: 1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RatePlan {
    pub eps_n: f64,
    pub xi_n: f64,
    pub k_n: usize,
    pub r_n: Cutoff,
    pub constants: PlanConstants,
    pub n_level: f64,
}

impl RatePlan {
    /// `ε = n^{eps_exp}`, `ξ = n^{xi_exp}`, `k = ⌈n^{kn_exp}⌉` capped at
    /// `n_dim`, `r = ∞`.
    pub fn from_exponents(
        eps_exponent: f64,
        xi_exponent: f64,
        kn_exponent: f64,
        n_level: f64,
        n_dim: usize,
        constants: PlanConstants,
    ) -> Result<Self> {
        let k = (n_level.powf(kn_exponent).ceil() as usize).clamp(1, n_dim);
        let plan = Self {
            eps_n: n_level.powf(eps_exponent),
            xi_n: n_level.powf(xi_exponent),
            k_n: k,
            r_n: Cutoff::Infinite,
            constants,
            n_level,
        };
        plan.validate(n_dim)?;
        Ok(plan)
    }

    pub fn validate(&self, n_dim: usize) -> Result<()> {
        for (name, v) in [("eps_n", self.eps_n), ("xi_n", self.xi_n)] {
            if !(v > 0.0 && v <= 1.0) {
                return Err(LabError::param(format!(
                    "{name} must lie in (0, 1], got {v}"
                )));
            }
        }
        if self.k_n == 0 || self.k_n > n_dim {
            return Err(LabError::param(format!("k_n must lie in 1..={n_dim}")));
        }
        if let Cutoff::Finite(r) = self.r_n {
            if r == 0 || r > n_dim {
                return Err(LabError::param(format!("r_n must lie in 1..={n_dim}")));
            }
        }
        let c = self.constants;
        if [c.c, c.c1, c.c2, c.r, c.m].iter().any(|v| !(*v > 0.0)) {
            return Err(LabError::param("plan constants must be positive"));
        }
        if !(self.n_level > 0.0) {
            return Err(LabError::param("n_level must be positive"));
        }
        Ok(())
    }

    pub fn n_eps_sq(&self) -> f64 {
        self.n_level * self.eps_n * self.eps_n
    }
}

/// One inequality `measured (≤ or ≥) threshold`.
#[derive(Debug, Clone, PartialEq)]
pub struct CheckDetail {
    pub name: &'static str,
    pub measured: f64,
    pub threshold: f64,
    pub ok: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AssumptionReport {
    pub small_ball_ok: bool,
    pub small_ball_log_mass: f64,
    pub small_ball_required: f64,
    pub tail_ok: bool,
    /// `log` of the Chernoff bound on the projection tail.
    pub tail_log_prob: f64,
    pub tail_required: f64,
    pub g_value: f64,
    pub g_ok: bool,
    pub g_threshold: f64,
    pub kn_ok: bool,
    pub kn_threshold: f64,
    /// `‖P^φ_k P^e_r u0 − u0‖ / ξ_n`.
    pub truth_ratio: f64,
    pub truth_ok: bool,
    /// Finite `r_n` tails are numerical evidence only.
    pub finite_r_evidence_only: bool,
    pub small_ball: SmallBallReport,
    pub details: Vec<CheckDetail>,
}

impl AssumptionReport {
    pub fn all_ok(&self) -> bool {
        self.small_ball_ok && self.tail_ok && self.g_ok && self.kn_ok && self.truth_ok
    }
}

/// Raw measurements behind a plan check, independent of the constants.
#[derive(Debug, Clone, PartialEq)]
pub struct PlanMeasurements {
    pub small_ball: SmallBallReport,
    pub g_sqrt: f64,
    pub residual_weights: DVector<f64>,
    pub truth_residual: f64,
}

pub fn measure_plan(
    problem: &InverseProblem,
    plan: &RatePlan,
    u0: &DVector<f64>,
    mc: usize,
    seed: u64,
) -> Result<PlanMeasurements> {
    plan.validate(problem.n_dim())?;
    check_dim("truth", u0.len(), problem.n_dim())?;
    let n = problem.n_dim();
    let r = plan.r_n.resolve(n);
    let small_ball = small_ball_log_prob_with(
        problem,
        u0,
        plan.eps_n,
        mc,
        derive_seed(seed, &[0]),
        SmallBallMethod::Tilted,
    )?;
    let g_sqrt = compute_g_kr_sqrt(problem, plan.k_n, r)?;
    let residual_weights = residual_weights(problem, plan.k_n, plan.r_n)?;
    let truth_residual = (plug_in_mean(problem, u0, plan.k_n, r)? - u0).norm();
    Ok(PlanMeasurements {
        small_ball,
        g_sqrt,
        residual_weights,
        truth_residual,
    })
}

fn evaluate(plan: &RatePlan, m: PlanMeasurements) -> AssumptionReport {
    let c = plan.constants;
    let ne2 = plan.n_eps_sq();
    let sb_required = -c.c * ne2;
    let sb_ok = !m.small_ball.upper_bound_only && m.small_ball.log_prob >= sb_required;
    let tail_log = chernoff_log_bound(&m.residual_weights, c.c2 * plan.xi_n);
    let tail_required = -(c.c + 4.0) * ne2;
    let g_threshold = c.c1 * plan.xi_n / plan.eps_n;
    let kn_threshold = c.r * ne2;
    let truth_ratio = m.truth_residual / plan.xi_n;
    let details = vec![
        CheckDetail {
            name: "small_ball_log_mass",
            measured: m.small_ball.log_prob,
            threshold: sb_required,
            ok: sb_ok,
        },
        CheckDetail {
            name: "projection_tail_log_prob",
            measured: tail_log,
            threshold: tail_required,
            ok: tail_log <= tail_required,
        },
        CheckDetail {
            name: "sqrt_g",
            measured: m.g_sqrt,
            threshold: g_threshold,
            ok: m.g_sqrt <= g_threshold,
        },
        CheckDetail {
            name: "k_n",
            measured: plan.k_n as f64,
            threshold: kn_threshold,
            ok: (plan.k_n as f64) < kn_threshold,
        },
        CheckDetail {
            name: "truth_ratio",
            measured: truth_ratio,
            threshold: c.m,
            ok: truth_ratio <= c.m,
        },
    ];
    AssumptionReport {
        small_ball_ok: sb_ok,
        small_ball_log_mass: m.small_ball.log_prob,
        small_ball_required: sb_required,
        tail_ok: details[1].ok,
        tail_log_prob: tail_log,
        tail_required,
        g_value: m.g_sqrt * m.g_sqrt,
        g_ok: details[2].ok,
        g_threshold,
        kn_ok: details[3].ok,
        kn_threshold,
        truth_ratio,
        truth_ok: details[4].ok,
        finite_r_evidence_only: plan.r_n.is_finite(),
        small_ball: m.small_ball,
        details,
    }
}

/// Evaluates every inequality of a plan with measured quantities; failures
/// are report entries.
pub fn verify_assumptions(
    problem: &InverseProblem,
    plan: &RatePlan,
    u0: &DVector<f64>,
    mc: usize,
    seed: u64,
) -> Result<AssumptionReport> {
    Ok(evaluate(plan, measure_plan(problem, plan, u0, mc, seed)?))
}

/// Sets each constant to `factor` times the smallest value that would make
/// its inequality hold on the measured quantities.
pub fn calibrate_plan(
    problem: &InverseProblem,
    plan: &RatePlan,
    u0: &DVector<f64>,
    mc: usize,
    seed: u64,
    factor: f64,
) -> Result<RatePlan> {
    if !(factor >= 1.0) {
        return Err(LabError::param("calibration factor must be at least 1"));
    }
    let m = measure_plan(problem, plan, u0, mc, seed)?;
    let ne2 = plan.n_eps_sq();
    let c = factor * (-m.small_ball.log_prob).max(f64::MIN_POSITIVE) / ne2;
    let c1 = factor * m.g_sqrt * plan.eps_n / plan.xi_n;
    let r = factor * plan.k_n as f64 / ne2;
    let mm = factor * (m.truth_residual / plan.xi_n).max(f64::MIN_POSITIVE);
    // Smallest threshold whose Chernoff bound reaches the tail target.
    let target = -(c + 4.0) * ne2;
    let mut hi = plan.xi_n;
    while chernoff_log_bound(&m.residual_weights, hi) > target && hi < 1e12 {
        hi *= 2.0;
    }
    let mut lo = 0.0;
    for _ in 0..100 {
        let mid = 0.5 * (lo + hi);
        if chernoff_log_bound(&m.residual_weights, mid) > target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let c2 = (factor * hi / plan.xi_n).max(f64::MIN_POSITIVE);
    Ok(RatePlan {
        constants: PlanConstants {
            c,
            c1,
            c2,
            r,
            m: mm,
        },
        ..*plan
    })
}
