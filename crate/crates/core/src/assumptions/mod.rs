//! Executable checks of the contraction assumptions.

mod g;
mod hs;
mod minmax;
mod plugin;
mod small_ball;
mod tail;
mod verify;

pub use g::{compute_g_k, compute_g_kr, compute_g_kr_sqrt, g_profile, Cutoff};
pub use hs::{classify, hs_diagnostic, HsReport, HsTarget, HsVerdict, BOUNDED_GROWTH};
pub use minmax::{minmax_compare, prior_forward_pair, MinMaxTable};
pub use plugin::{
    concentration_check, plug_in_estimate, plug_in_mean, psi_test, ConcentrationReport,
    ConcentrationRow, PlugInEstimate, MIN_CONCENTRATION_MC,
};
pub use small_ball::{
    small_ball_log_prob, small_ball_log_prob_with, BallMass, SmallBallMethod, SmallBallReport,
    MIN_SMALL_BALL_MC,
};
pub use tail::{
    chernoff_log_bound, projection_residual, projection_tail_curve, projection_tail_prob,
    residual_weights, TailMode,
};
pub use verify::{
    calibrate_plan, measure_plan, verify_assumptions, AssumptionReport, CheckDetail, PlanConstants,
    PlanMeasurements, RatePlan,
};
