use std::time::{SystemTime, UNIX_EPOCH};

use contraction_core::assumptions::{
    calibrate_plan, compute_g_kr, concentration_check, g_profile, hs_diagnostic, minmax_compare,
    prior_forward_pair, small_ball_log_prob_with, verify_assumptions, Cutoff, HsTarget,
    PlanConstants, RatePlan, SmallBallMethod,
};
use contraction_core::posterior::{conjugate_posterior, posterior_exceedance_curve};
use contraction_core::rates::{
    finite_dim_rate_run, fit_contraction_rate, smooth_truth, theory_rates, FiniteDimExperiment,
    MixturePrior, RateFitSettings, TheoryParams,
};
use contraction_core::rng::derive_seed;
use contraction_core::spectral::{
    colored_noise, hilbert_scale_prior, make_coupling, make_spectrum, random_spd, Basis,
    CouplingKind, GaussianSequenceMeasure, InverseProblem, NoiseModel, SpectrumFamily,
};
use contraction_core::LabError;
use nalgebra::{DMatrix, DVector};

use crate::config::{
    CouplingConfig, ExperimentConfig, HsTargetConfig, NoiseConfig, Pipeline, PlanConfig,
    PriorConfig, SpectrumConfig,
};
use crate::record::{Cell, PipelineFailure, ResultRecord, Table, Timestamps};

pub const EXPLORATORY: &str = "exploratory";

fn now_ms() -> u128 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map_or(0, |d| d.as_millis())
}

fn spectrum_family(cfg: &SpectrumConfig) -> SpectrumFamily {
    match *cfg {
        SpectrumConfig::Mild { alpha, c1, c2 } => SpectrumFamily::Mild { alpha, c1, c2 },
        SpectrumConfig::Severe {
            alpha1,
            alpha2,
            c0,
            beta,
            c1,
            c2,
        } => SpectrumFamily::Severe {
            alpha1,
            alpha2,
            c0,
            beta,
            c1,
            c2,
        },
    }
}

fn reflection_vector(cfg: &CouplingConfig, n: usize) -> Option<DVector<f64>> {
    let CouplingConfig::Reflection {
        v,
        v_geometric,
        v_power,
    } = cfg
    else {
        return None;
    };
    let mut out = DVector::zeros(n);
    if let Some(v) = v {
        out.rows_mut(0, v.len()).copy_from_slice(v);
    } else if let Some(q) = v_geometric {
        for j in 0..n {
            out[j] = q.powi(-(j as i32));
        }
    } else if let Some(p) = v_power {
        for j in 0..n {
            out[j] = ((j + 1) as f64).powf(-p);
        }
    }
    Some(out)
}

fn coupling_kind(cfg: &CouplingConfig, n: usize) -> (CouplingKind, u64) {
    match cfg {
        CouplingConfig::Identity => (CouplingKind::Identity, 0),
        CouplingConfig::Banded {
            lo_ratio,
            hi_ratio,
            seed,
        } => (
            CouplingKind::Banded {
                lo_ratio: *lo_ratio,
                hi_ratio: *hi_ratio,
            },
            *seed,
        ),
        CouplingConfig::Reflection { .. } => (
            CouplingKind::Reflection {
                v: reflection_vector(cfg, n).unwrap(),
            },
            0,
        ),
        CouplingConfig::ExpSkew { scale, decay } => {
            let a = DMatrix::from_fn(n, n, |i, j| {
                let w = scale * (((i + 1) * (j + 1)) as f64).powf(-decay);
                match i.cmp(&j) {
                    std::cmp::Ordering::Less => w,
                    std::cmp::Ordering::Greater => -w,
                    std::cmp::Ordering::Equal => 0.0,
                }
            });
            (CouplingKind::ExpSkew { a }, 0)
        }
    }
}

/// Materializes the inverse problem described by a configuration.
pub fn build_problem(config: &ExperimentConfig) -> Result<InverseProblem, LabError> {
    let p = &config.problem;
    let n = p.n_dim;
    let spectrum = make_spectrum(&spectrum_family(&p.spectrum), n)?;
    let (coupling, prior) = match &p.prior {
        PriorConfig::HilbertScale {
            t,
            l,
            k2_scale,
            k2_seed,
        } => hilbert_scale_prior(&spectrum, *t, *l, &random_spd(n, *k2_scale, *k2_seed))?,
        other => {
            let (kind, seed) = coupling_kind(&p.coupling, n);
            let prior = match other {
                PriorConfig::Power { delta } => GaussianSequenceMeasure::prior_family(*delta, n)?,
                PriorConfig::Exponential { rate } => GaussianSequenceMeasure::explicit(
                    (1..=n).map(|j| (-rate * j as f64).exp()).collect(),
                    Basis::Phi,
                )?,
                PriorConfig::Explicit { variances } => {
                    GaussianSequenceMeasure::explicit(variances.clone(), Basis::Phi)?
                }
                PriorConfig::HilbertScale { .. } => unreachable!(),
            };
            (make_coupling(&kind, n, seed)?, prior)
        }
    };
    let noise = match &p.noise {
        NoiseConfig::White => NoiseModel::white(n)?,
        NoiseConfig::Diagonal { variances } => NoiseModel::diagonal(variances.clone())?,
        NoiseConfig::Colored {
            r,
            k1_scale,
            k1_seed,
        } => colored_noise(&spectrum, *r, &random_spd(n, *k1_scale, *k1_seed))?,
    };
    InverseProblem::new(spectrum, coupling, prior, noise)
}

pub fn build_truth(config: &ExperimentConfig) -> DVector<f64> {
    match (&config.truth.gamma, &config.truth.values) {
        (_, Some(v)) => DVector::from_vec(v.clone()),
        (Some(g), None) => smooth_truth(*g, config.problem.n_dim),
        (None, None) => DVector::zeros(config.problem.n_dim),
    }
}

fn auto_plan(config: &ExperimentConfig, n_level: f64) -> Result<RatePlan, LabError> {
    let SpectrumConfig::Mild { alpha, .. } = config.problem.spectrum else {
        return Err(LabError::Parameter(
            "auto plan needs a mild spectrum".into(),
        ));
    };
    let PriorConfig::Power { delta } = config.problem.prior else {
        return Err(LabError::Parameter("auto plan needs a power prior".into()));
    };
    let Some(gamma) = config.truth.gamma else {
        return Err(LabError::Parameter("auto plan needs a gamma truth".into()));
    };
    let rates = theory_rates(&TheoryParams::white(alpha, delta, gamma))?;
    RatePlan::from_exponents(
        rates.eps_exponent,
        rates.xi_exponent,
        rates.kn_exponent,
        n_level,
        config.problem.n_dim,
        PlanConstants::default(),
    )
}

struct Context<'a> {
    config: &'a ExperimentConfig,
    problem: &'a InverseProblem,
    u0: &'a DVector<f64>,
    seed: u64,
}

fn rate_fit(cx: &Context) -> Result<Vec<Table>, LabError> {
    let run = &cx.config.run;
    let settings = RateFitSettings::new(run.delta_level, run.y_replicates, run.mc);
    let fit = fit_contraction_rate(cx.problem, cx.u0, &run.n_grid, &settings, cx.seed)?;
    let mut t = Table::new(
        "rate_fit",
        "fit_contraction_rate",
        cx.seed,
        &[
            "n",
            "xi_hat",
            "exceedance_frac",
            "slope",
            "slope_lo",
            "slope_hi",
        ],
    );
    for p in &fit.points {
        t.push(vec![
            p.n.into(),
            p.xi_hat.into(),
            p.exceedance_frac.into(),
            fit.slope.into(),
            fit.slope_ci.0.into(),
            fit.slope_ci.1.into(),
        ]);
    }
    if cx.problem.operator().family().is_severe() {
        t.label = Some(EXPLORATORY.into());
        t.notes
            .push("severely ill-posed spectrum: no closed-form exponent to compare against".into());
    } else if let (SpectrumConfig::Mild { alpha, .. }, PriorConfig::Power { delta }, Some(gamma)) = (
        &cx.config.problem.spectrum,
        &cx.config.problem.prior,
        cx.config.truth.gamma,
    ) {
        if let Ok(r) = theory_rates(&TheoryParams::white(*alpha, *delta, gamma)) {
            t.notes
                .push(format!("theory xi exponent {}", r.xi_exponent));
        }
    }
    t.notes.extend(fit.warnings);
    Ok(vec![t])
}

fn check(cx: &Context) -> Result<Vec<Table>, LabError> {
    let n = cx.problem.n_dim();
    let mc = cx.config.run.mc;
    let plan = match &cx.config.plan {
        PlanConfig::Auto {
            n_level,
            calibrate_factor,
        } => {
            let plan = auto_plan(cx.config, *n_level)?;
            match calibrate_factor {
                Some(f) => {
                    calibrate_plan(cx.problem, &plan, cx.u0, mc, derive_seed(cx.seed, &[0]), *f)?
                }
                None => plan,
            }
        }
        PlanConfig::Explicit {
            n_level,
            eps_n,
            xi_n,
            k_n,
            r_n,
            c,
            c1,
            c2,
            r,
            m,
        } => {
            let plan = RatePlan {
                eps_n: *eps_n,
                xi_n: *xi_n,
                k_n: *k_n,
                r_n: r_n.map_or(Cutoff::Infinite, Cutoff::Finite),
                constants: PlanConstants {
                    c: *c,
                    c1: *c1,
                    c2: *c2,
                    r: *r,
                    m: *m,
                },
                n_level: *n_level,
            };
            plan.validate(n)?;
            plan
        }
    };
    let report = verify_assumptions(cx.problem, &plan, cx.u0, mc, derive_seed(cx.seed, &[1]))?;
    let mut checks = Table::new(
        "assumption_check",
        "verify_assumptions",
        cx.seed,
        &["check", "measured", "threshold", "ok"],
    );
    for d in &report.details {
        checks.push(vec![
            d.name.into(),
            d.measured.into(),
            d.threshold.into(),
            d.ok.into(),
        ]);
    }
    checks.push(vec![
        "all".into(),
        Cell::Null,
        Cell::Null,
        report.all_ok().into(),
    ]);
    if report.finite_r_evidence_only {
        checks
            .notes
            .push("finite r_n: tail check is numerical evidence only".into());
    }
    if report.small_ball.upper_bound_only {
        checks
            .notes
            .push("small-ball estimate had no hits; value is an upper bound".into());
    }
    let mut pt = Table::new(
        "plan",
        "verify_assumptions",
        cx.seed,
        &["parameter", "value"],
    );
    let c = plan.constants;
    let r_value = match plan.r_n {
        Cutoff::Finite(r) => Cell::Int(r as i64),
        Cutoff::Infinite => Cell::Text("inf".into()),
    };
    for (name, value) in [
        ("n_level", Cell::Num(plan.n_level)),
        ("eps_n", Cell::Num(plan.eps_n)),
        ("xi_n", Cell::Num(plan.xi_n)),
        ("k_n", Cell::Int(plan.k_n as i64)),
        ("r_n", r_value),
        ("C", Cell::Num(c.c)),
        ("C1", Cell::Num(c.c1)),
        ("C2", Cell::Num(c.c2)),
        ("R", Cell::Num(c.r)),
        ("M", Cell::Num(c.m)),
    ] {
        pt.push(vec![name.into(), value]);
    }
    Ok(vec![checks, pt])
}

fn g_tables(cx: &Context) -> Result<Vec<Table>, LabError> {
    let k_max = cx.config.run.gn.k_max.min(cx.problem.n_dim());
    let gk = g_profile(cx.problem, k_max)?;
    let mut t = Table::new(
        "g_table",
        "compute_g_kr",
        cx.seed,
        &["k", "g_k", "g_kk", "inv_rho_sq"],
    );
    for (i, g) in gk.iter().enumerate() {
        let k = i + 1;
        let rho = cx.problem.rho()[i];
        t.push(vec![
            k.into(),
            (*g).into(),
            compute_g_kr(cx.problem, k, k)?.into(),
            (1.0 / (rho * rho)).into(),
        ]);
    }
    Ok(vec![t])
}

fn smallball(cx: &Context) -> Result<Vec<Table>, LabError> {
    let cfg = &cx.config.run.smallball;
    let method = if cfg.tilted {
        SmallBallMethod::Tilted
    } else {
        SmallBallMethod::Plain
    };
    let mut t = Table::new(
        "small_ball",
        "small_ball_log_prob",
        cx.seed,
        &[
            "eps",
            "log_prob",
            "ci_halfwidth",
            "centered_log_prob",
            "centered_ci_halfwidth",
            "shift_cost",
            "j0",
            "upper_bound_only",
            "lower_bound_holds",
        ],
    );
    for (i, &eps) in cfg.eps.iter().enumerate() {
        let r = small_ball_log_prob_with(
            cx.problem,
            cx.u0,
            eps,
            cx.config.run.mc,
            derive_seed(cx.seed, &[i as u64]),
            method,
        )?;
        t.push(vec![
            eps.into(),
            r.log_prob.into(),
            r.ci_halfwidth.into(),
            r.centered_log_prob.into(),
            r.centered_ci_halfwidth.into(),
            r.shift_cost.into(),
            r.j0.into(),
            r.upper_bound_only.into(),
            r.lower_bound_holds().into(),
        ]);
    }
    Ok(vec![t])
}

fn minmax(cx: &Context) -> Result<Vec<Table>, LabError> {
    let (a, b) = prior_forward_pair(cx.problem);
    let j_max = cx.config.run.minmax.j_max.min(cx.problem.n_dim());
    let m = minmax_compare(&a, &b, j_max)?;
    let mut t = Table::new(
        "minmax",
        "minmax_compare",
        cx.seed,
        &["j", "alpha_j", "beta_j", "ratio"],
    );
    for j in 0..m.ratios.len() {
        t.push(vec![
            (j + 1).into(),
            m.alpha[j].into(),
            m.beta[j].into(),
            m.ratios[j].into(),
        ]);
    }
    t.notes
        .push(format!("ratio range [{}, {}]", m.min_ratio, m.max_ratio));
    Ok(vec![t])
}

fn hs(cx: &Context, failures: &mut Vec<String>) -> Vec<Table> {
    let mut t = Table::new(
        "hs",
        "hs_diagnostic",
        cx.seed,
        &["target", "truncation", "partial_sum", "verdict"],
    );
    let mut gn = None;
    for target in &cx.config.run.hs.targets {
        let target = match target {
            HsTargetConfig::ReflectionPair => HsTarget::ReflectionPair,
            HsTargetConfig::ExpPair => HsTarget::ExpPair,
            HsTargetConfig::GnBound => HsTarget::GnBound,
        };
        match hs_diagnostic(cx.problem, target) {
            Ok(rep) => {
                for (c, s) in rep.truncations.iter().zip(&rep.partial_sums) {
                    t.push(vec![
                        target.name().into(),
                        (*c).into(),
                        (*s).into(),
                        rep.verdict.name().into(),
                    ]);
                }
                if target == HsTarget::GnBound {
                    let mut g = Table::new("hs_gn", "hs_diagnostic", cx.seed, &["n", "gn_rho_sq"]);
                    for (k, v) in &rep.gn_table {
                        g.push(vec![(*k).into(), (*v).into()]);
                    }
                    if let Some(growth) = rep.gn_growth {
                        g.notes
                            .push(format!("second-half over first-half growth {growth}"));
                    }
                    gn = Some(g);
                }
            }
            Err(e) => failures.push(format!("{}: {e}", target.name())),
        }
    }
    std::iter::once(t).chain(gn).collect()
}

fn concentration(cx: &Context) -> Result<Vec<Table>, LabError> {
    let c = &cx.config.run.concentration;
    let rep = concentration_check(
        cx.problem,
        cx.u0,
        c.k,
        c.r.unwrap_or(cx.problem.n_dim()),
        c.n_level,
        &c.x_grid,
        c.mc,
        cx.seed,
    )?;
    let mut t = Table::new(
        "concentration",
        "concentration_check",
        cx.seed,
        &["x", "empirical", "std_error", "bound", "ok"],
    );
    for r in &rep.rows {
        t.push(vec![
            r.x.into(),
            r.empirical.into(),
            r.std_error.into(),
            r.bound.into(),
            r.ok.into(),
        ]);
    }
    let mut s = Table::new(
        "concentration_summary",
        "concentration_check",
        cx.seed,
        &[
            "sigma0_sq",
            "m_hat",
            "m_hat_se",
            "mean_dev_bound",
            "mean_dev_ok",
            "passed",
        ],
    );
    s.push(vec![
        rep.sigma0_sq.into(),
        rep.m_hat.into(),
        rep.m_hat_se.into(),
        rep.mean_dev_bound.into(),
        rep.mean_dev_ok.into(),
        rep.passed().into(),
    ]);
    Ok(vec![t, s])
}

fn findim(config: &ExperimentConfig, seed: u64) -> Result<Vec<Table>, LabError> {
    let f = &config.run.findim;
    let p = f.truth.len();
    let prior = if f.mixture {
        MixturePrior::default_for(p)
    } else {
        MixturePrior::standard_normal(p)
    };
    let exp = FiniteDimExperiment::new(
        DMatrix::identity(p, p),
        DMatrix::identity(p, p),
        prior,
        f.m_const,
    )?;
    let u0 = DVector::from_vec(f.truth.clone());
    let run = finite_dim_rate_run(&exp, &u0, &f.n_grid, f.mc, f.y_replicates, seed)?;
    let mut t = Table::new(
        "findim",
        "finite_dim_rate_run",
        seed,
        &[
            "n",
            "xi_n",
            "mean_exceedance",
            "std_error",
            "min_ess",
            "claim_count",
            "claim_ratio_max",
            "claim_ratio_finite",
        ],
    );
    for r in &run.rows {
        t.push(vec![
            r.n.into(),
            r.xi_n.into(),
            r.mean_exceedance.into(),
            r.std_error.into(),
            r.min_ess.into(),
            r.claim_count.into(),
            r.claim_ratio_max.into(),
            r.claim_ratio_finite.into(),
        ]);
    }
    t.notes.push(format!("K1 = {}", run.k1));
    t.notes.extend(run.warnings);
    Ok(vec![t])
}

fn simulate(cx: &Context) -> Result<Vec<Table>, LabError> {
    let n_level = cx.config.run.simulate.n_level;
    let data = cx.problem.simulate_data(cx.u0, n_level, cx.seed)?;
    let gu = cx.problem.forward_apply(cx.u0, Basis::Phi)?;
    let mut t = Table::new(
        "simulate",
        "simulate_data",
        cx.seed,
        &["j", "u0", "g_u0", "y"],
    );
    for j in 0..cx.problem.n_dim() {
        t.push(vec![
            (j + 1).into(),
            cx.u0[j].into(),
            gu[j].into(),
            data.y[j].into(),
        ]);
    }
    t.notes.push(format!("n_level {n_level}"));
    Ok(vec![t])
}

fn posterior(cx: &Context) -> Result<Vec<Table>, LabError> {
    let cfg = &cx.config.run.posterior;
    let data = cx
        .problem
        .simulate_data(cx.u0, cfg.n_level, derive_seed(cx.seed, &[0]))?;
    let post = conjugate_posterior(cx.problem, &data)?;
    let sd = post.marginal_sd();
    let mut t = Table::new(
        "posterior",
        "conjugate_posterior",
        cx.seed,
        &["j", "u0", "mean", "sd"],
    );
    for j in 0..cx.problem.n_dim() {
        t.push(vec![
            (j + 1).into(),
            cx.u0[j].into(),
            post.mean[j].into(),
            sd[j].into(),
        ]);
    }
    let curve = posterior_exceedance_curve(
        &post,
        cx.u0,
        &cfg.xi,
        cx.config.run.mc,
        derive_seed(cx.seed, &[1]),
    )?;
    let mut e = Table::new(
        "posterior_exceedance",
        "posterior_exceedance",
        cx.seed,
        &["xi", "value", "std_error", "mc_count"],
    );
    for est in &curve {
        e.push(vec![
            est.xi.into(),
            est.value.into(),
            est.std_error.into(),
            est.mc_count.into(),
        ]);
    }
    Ok(vec![t, e])
}

/// Runs the selected pipelines. Module errors become failure entries and
/// the remaining pipelines still run.
pub fn run_experiment(config: &ExperimentConfig) -> ResultRecord {
    let started = now_ms();
    let digest = config.digest();
    let master = config.run.master_seed;
    let mut tables = Vec::new();
    let mut failures = Vec::new();
    let problem = build_problem(config);
    let u0 = build_truth(config);
    for pipeline in config.selected_pipelines() {
        let seed = derive_seed(master, &[pipeline.stream_id()]);
        let mut fail = |msg: String| {
            failures.push(PipelineFailure {
                pipeline: pipeline.name().into(),
                message: msg,
            })
        };
        if pipeline == Pipeline::Findim {
            match findim(config, seed) {
                Ok(t) => tables.extend(t),
                Err(e) => fail(e.to_string()),
            }
            continue;
        }
        let problem = match &problem {
            Ok(p) => p,
            Err(e) => {
                fail(format!("problem construction: {e}"));
                continue;
            }
        };
        let cx = Context {
            config,
            problem,
            u0: &u0,
            seed,
        };
        let result = match pipeline {
            Pipeline::Simulate => simulate(&cx),
            Pipeline::Posterior => posterior(&cx),
            Pipeline::RateFit => rate_fit(&cx),
            Pipeline::Check => check(&cx),
            Pipeline::GTables => g_tables(&cx),
            Pipeline::Smallball => smallball(&cx),
            Pipeline::Minmax => minmax(&cx),
            Pipeline::Hs => {
                let mut msgs = Vec::new();
                let t = hs(&cx, &mut msgs);
                msgs.into_iter().for_each(&mut fail);
                Ok(t)
            }
            Pipeline::Concentration => concentration(&cx),
            Pipeline::Findim => unreachable!(),
        };
        match result {
            Ok(t) => tables.extend(t),
            Err(e) => fail(e.to_string()),
        }
    }
    for t in &mut tables {
        t.config_digest = digest.clone();
    }
    ResultRecord {
        schema_version: config.schema_version,
        config_digest: digest,
        master_seed: master,
        timestamps: Timestamps {
            started_unix_ms: started,
            finished_unix_ms: now_ms(),
        },
        tables,
        failures,
    }
}
