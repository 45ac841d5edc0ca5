//! TOML experiment configuration.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ConfigError {
    #[error("syntax error at line {line}, column {column}: {message}")]
    Syntax {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("unknown key `{key}`{}", suggestion.as_ref().map(|s| format!(" (did you mean `{s}`?)")).unwrap_or_default())]
    UnknownKey {
        key: String,
        suggestion: Option<String>,
    },
    #[error("invalid value for `{field}`: {message}")]
    Invariant { field: String, message: String },
}

fn invariant(field: impl Into<String>, message: impl Into<String>) -> ConfigError {
    ConfigError::Invariant {
        field: field.into(),
        message: message.into(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Pipeline {
    Simulate,
    Posterior,
    RateFit,
    Check,
    #[serde(alias = "gn")]
    GTables,
    Smallball,
    Minmax,
    Hs,
    Concentration,
    Findim,
}

impl Pipeline {
    pub const ALL: [Pipeline; 10] = [
        Pipeline::Simulate,
        Pipeline::Posterior,
        Pipeline::RateFit,
        Pipeline::Check,
        Pipeline::GTables,
        Pipeline::Smallball,
        Pipeline::Minmax,
        Pipeline::Hs,
        Pipeline::Concentration,
        Pipeline::Findim,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Pipeline::Simulate => "simulate",
            Pipeline::Posterior => "posterior",
            Pipeline::RateFit => "rate-fit",
            Pipeline::Check => "check",
            Pipeline::GTables => "g-tables",
            Pipeline::Smallball => "smallball",
            Pipeline::Minmax => "minmax",
            Pipeline::Hs => "hs",
            Pipeline::Concentration => "concentration",
            Pipeline::Findim => "findim",
        }
    }

    /// Stable stream index; never reorder.
    pub fn stream_id(self) -> u64 {
        Pipeline::ALL.iter().position(|p| *p == self).unwrap() as u64
    }
}

fn default_schema() -> u32 {
    SCHEMA_VERSION
}
fn one() -> f64 {
    1.0
}
fn minus_one() -> f64 {
    -1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default = "default_schema")]
    pub schema_version: u32,
    /// Empty means every pipeline.
    #[serde(default)]
    pub pipelines: Vec<Pipeline>,
    #[serde(default)]
    pub problem: ProblemConfig,
    #[serde(default)]
    pub truth: TruthConfig,
    #[serde(default)]
    pub plan: PlanConfig,
    #[serde(default)]
    pub run: RunConfig,
    #[serde(default)]
    pub outputs: OutputConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemConfig {
    #[serde(default = "default_n_dim")]
    pub n_dim: usize,
    #[serde(default)]
    pub spectrum: SpectrumConfig,
    #[serde(default)]
    pub coupling: CouplingConfig,
    #[serde(default)]
    pub prior: PriorConfig,
    #[serde(default)]
    pub noise: NoiseConfig,
}

fn default_n_dim() -> usize {
    512
}

impl Default for ProblemConfig {
    fn default() -> Self {
        Self {
            n_dim: default_n_dim(),
            spectrum: SpectrumConfig::default(),
            coupling: CouplingConfig::default(),
            prior: PriorConfig::default(),
            noise: NoiseConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case", deny_unknown_fields)]
pub enum SpectrumConfig {
    Mild {
        #[serde(default = "one")]
        alpha: f64,
        #[serde(default = "one")]
        c1: f64,
        #[serde(default = "one")]
        c2: f64,
    },
    Severe {
        #[serde(default)]
        alpha1: f64,
        #[serde(default)]
        alpha2: f64,
        #[serde(default = "one")]
        c0: f64,
        /// Negative values give decay `e^{-2 C₀ k^{|β|}}`.
        #[serde(default = "minus_one")]
        beta: f64,
        #[serde(default = "one")]
        c1: f64,
        #[serde(default = "one")]
        c2: f64,
    },
}

impl Default for SpectrumConfig {
    fn default() -> Self {
        SpectrumConfig::Mild {
            alpha: 1.0,
            c1: 1.0,
            c2: 1.0,
        }
    }
}

fn default_coupling_seed() -> u64 {
    1
}
fn default_lo() -> f64 {
    contraction_core::spectral::DEFAULT_LO_RATIO
}
fn default_hi() -> f64 {
    contraction_core::spectral::DEFAULT_HI_RATIO
}
fn default_skew_scale() -> f64 {
    0.5
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum CouplingConfig {
    #[default]
    Identity,
    Banded {
        #[serde(default = "default_lo")]
        lo_ratio: f64,
        #[serde(default = "default_hi")]
        hi_ratio: f64,
        #[serde(default = "default_coupling_seed")]
        seed: u64,
    },
    /// Exactly one of `v` (zero padded), `v_geometric` (`v_j ∝ q^{-j}`) or
    /// `v_power` (`v_j ∝ j^{-p}`).
    Reflection {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        v: Option<Vec<f64>>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        v_geometric: Option<f64>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        v_power: Option<f64>,
    },
    /// `exp(A)` with `A_ij = scale ((i+1)(j+1))^{-decay}` above the diagonal.
    ExpSkew {
        #[serde(default = "default_skew_scale")]
        scale: f64,
        #[serde(default = "one")]
        decay: f64,
    },
}

fn default_k_scale() -> f64 {
    0.1
}
fn default_k_seed() -> u64 {
    2
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case", deny_unknown_fields)]
pub enum PriorConfig {
    /// `λ_j = (1 + j²)^{-1/2-δ}`.
    Power {
        #[serde(default = "one")]
        delta: f64,
    },
    /// `λ_j = e^{-rate·j}`.
    Exponential {
        #[serde(default = "one")]
        rate: f64,
    },
    /// `(G^{-t} + K₂)^{-l}`; brings its own eigenbasis as the coupling.
    HilbertScale {
        t: f64,
        l: f64,
        #[serde(default = "default_k_scale")]
        k2_scale: f64,
        #[serde(default = "default_k_seed")]
        k2_seed: u64,
    },
    Explicit {
        variances: Vec<f64>,
    },
}

impl Default for PriorConfig {
    fn default() -> Self {
        PriorConfig::Power { delta: 1.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum NoiseConfig {
    #[default]
    White,
    Diagonal {
        variances: Vec<f64>,
    },
    /// `(G^{-r} + K₁)^{-2}`.
    Colored {
        r: f64,
        #[serde(default = "default_k_scale")]
        k1_scale: f64,
        #[serde(default = "default_k_seed")]
        k1_seed: u64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TruthConfig {
    /// `u0_j = j^{-γ-1/2}` in the prior basis.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gamma: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub values: Option<Vec<f64>>,
}

impl Default for TruthConfig {
    fn default() -> Self {
        Self {
            gamma: Some(2.0),
            values: None,
        }
    }
}

fn default_plan_level() -> f64 {
    1e4
}
fn default_factor() -> Option<f64> {
    Some(2.0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case", deny_unknown_fields)]
pub enum PlanConfig {
    /// Exponents from the closed-form rates; constants calibrated at
    /// `calibrate_factor` times the measured minimum when set, else 1.
    Auto {
        #[serde(default = "default_plan_level")]
        n_level: f64,
        #[serde(default = "default_factor")]
        calibrate_factor: Option<f64>,
    },
    Explicit {
        n_level: f64,
        eps_n: f64,
        xi_n: f64,
        k_n: usize,
        /// Absent means `r = ∞`.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        r_n: Option<usize>,
        #[serde(default = "one")]
        c: f64,
        #[serde(default = "one")]
        c1: f64,
        #[serde(default = "one")]
        c2: f64,
        #[serde(default = "one")]
        r: f64,
        #[serde(default = "one")]
        m: f64,
    },
}

impl Default for PlanConfig {
    fn default() -> Self {
        PlanConfig::Auto {
            n_level: default_plan_level(),
            calibrate_factor: default_factor(),
        }
    }
}

fn default_n_grid() -> Vec<f64> {
    vec![1e2, 1e3, 1e4, 1e5, 1e6]
}
fn default_mc() -> usize {
    2000
}
fn default_reps() -> usize {
    50
}
fn default_delta_level() -> f64 {
    0.1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default = "default_n_grid")]
    pub n_grid: Vec<f64>,
    #[serde(default = "default_mc")]
    pub mc: usize,
    #[serde(default = "default_reps")]
    pub y_replicates: usize,
    #[serde(default = "default_delta_level")]
    pub delta_level: f64,
    #[serde(default)]
    pub master_seed: u64,
    #[serde(default)]
    pub simulate: SimulateConfig,
    #[serde(default)]
    pub posterior: PosteriorConfig,
    #[serde(default)]
    pub gn: GnConfig,
    #[serde(default)]
    pub smallball: SmallBallConfig,
    #[serde(default)]
    pub minmax: MinMaxConfig,
    #[serde(default)]
    pub hs: HsConfig,
    #[serde(default)]
    pub concentration: ConcentrationConfig,
    #[serde(default)]
    pub findim: FindimConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            n_grid: default_n_grid(),
            mc: default_mc(),
            y_replicates: default_reps(),
            delta_level: default_delta_level(),
            master_seed: 0,
            simulate: SimulateConfig::default(),
            posterior: PosteriorConfig::default(),
            gn: GnConfig::default(),
            smallball: SmallBallConfig::default(),
            minmax: MinMaxConfig::default(),
            hs: HsConfig::default(),
            concentration: ConcentrationConfig::default(),
            findim: FindimConfig::default(),
        }
    }
}

fn default_level() -> f64 {
    1e3
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulateConfig {
    #[serde(default = "default_level")]
    pub n_level: f64,
}

impl Default for SimulateConfig {
    fn default() -> Self {
        Self {
            n_level: default_level(),
        }
    }
}

fn default_xi_grid() -> Vec<f64> {
    vec![0.05, 0.1, 0.2, 0.4, 0.8]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PosteriorConfig {
    #[serde(default = "default_level")]
    pub n_level: f64,
    #[serde(default = "default_xi_grid")]
    pub xi: Vec<f64>,
}

impl Default for PosteriorConfig {
    fn default() -> Self {
        Self {
            n_level: default_level(),
            xi: default_xi_grid(),
        }
    }
}

fn default_k_max() -> usize {
    64
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GnConfig {
    /// Capped at `n_dim`.
    #[serde(default = "default_k_max")]
    pub k_max: usize,
}

impl Default for GnConfig {
    fn default() -> Self {
        Self {
            k_max: default_k_max(),
        }
    }
}

fn default_eps_grid() -> Vec<f64> {
    vec![0.5, 0.2, 0.1]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SmallBallConfig {
    #[serde(default = "default_eps_grid")]
    pub eps: Vec<f64>,
    #[serde(default)]
    pub tilted: bool,
}

impl Default for SmallBallConfig {
    fn default() -> Self {
        Self {
            eps: default_eps_grid(),
            tilted: false,
        }
    }
}

fn default_j_max() -> usize {
    48
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MinMaxConfig {
    /// Capped at `n_dim`.
    #[serde(default = "default_j_max")]
    pub j_max: usize,
}

impl Default for MinMaxConfig {
    fn default() -> Self {
        Self {
            j_max: default_j_max(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HsTargetConfig {
    ReflectionPair,
    ExpPair,
    GnBound,
}

fn default_targets() -> Vec<HsTargetConfig> {
    vec![HsTargetConfig::GnBound]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HsConfig {
    #[serde(default = "default_targets")]
    pub targets: Vec<HsTargetConfig>,
}

impl Default for HsConfig {
    fn default() -> Self {
        Self {
            targets: default_targets(),
        }
    }
}

fn default_conc_k() -> usize {
    8
}
fn default_conc_grid() -> Vec<f64> {
    (0..8).map(|i| 0.05 * i as f64).collect()
}
fn default_conc_mc() -> usize {
    10_000
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConcentrationConfig {
    #[serde(default = "default_conc_k")]
    pub k: usize,
    /// Absent means `r = n_dim`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub r: Option<usize>,
    #[serde(default = "default_level")]
    pub n_level: f64,
    #[serde(default = "default_conc_grid")]
    pub x_grid: Vec<f64>,
    #[serde(default = "default_conc_mc")]
    pub mc: usize,
}

impl Default for ConcentrationConfig {
    fn default() -> Self {
        Self {
            k: default_conc_k(),
            r: None,
            n_level: default_level(),
            x_grid: default_conc_grid(),
            mc: default_conc_mc(),
        }
    }
}

fn default_findim_grid() -> Vec<f64> {
    vec![1e2, 1e3, 1e4, 1e5]
}
fn default_m_const() -> f64 {
    3.0
}
fn default_findim_truth() -> Vec<f64> {
    vec![0.5]
}
fn default_findim_reps() -> usize {
    20
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FindimConfig {
    #[serde(default = "default_findim_grid")]
    pub n_grid: Vec<f64>,
    #[serde(default = "default_m_const")]
    pub m_const: f64,
    /// Dimension is the truth's length; `G = I` and white noise.
    #[serde(default = "default_findim_truth")]
    pub truth: Vec<f64>,
    #[serde(default = "default_conc_mc")]
    pub mc: usize,
    #[serde(default = "default_findim_reps")]
    pub y_replicates: usize,
    /// Gaussian mixture by default, standard normal otherwise.
    #[serde(default = "default_true")]
    pub mixture: bool,
}

fn default_true() -> bool {
    true
}

impl Default for FindimConfig {
    fn default() -> Self {
        Self {
            n_grid: default_findim_grid(),
            m_const: default_m_const(),
            truth: default_findim_truth(),
            mc: default_conc_mc(),
            y_replicates: default_findim_reps(),
            mixture: true,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OutputFormat {
    Csv,
    Json,
    Plotdata,
}

fn default_dir() -> String {
    "results".into()
}
fn default_formats() -> Vec<OutputFormat> {
    vec![OutputFormat::Csv]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    #[serde(default = "default_dir")]
    pub dir: String,
    #[serde(default = "default_formats")]
    pub formats: Vec<OutputFormat>,
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self {
            dir: default_dir(),
            formats: default_formats(),
        }
    }
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            pipelines: Vec::new(),
            problem: ProblemConfig::default(),
            truth: TruthConfig::default(),
            plan: PlanConfig::default(),
            run: RunConfig::default(),
            outputs: OutputConfig::default(),
        }
    }
}

fn line_col(text: &str, offset: usize) -> (usize, usize) {
    let before = &text[..offset.min(text.len())];
    let line = before.matches('\n').count() + 1;
    let column = before.chars().rev().take_while(|&c| c != '\n').count() + 1;
    (line, column)
}

/// Key names quoted in backticks after `expected`.
fn expected_names(msg: &str) -> Vec<String> {
    let Some(idx) = msg.find("expected") else {
        return Vec::new();
    };
    msg[idx..]
        .split('`')
        .skip(1)
        .step_by(2)
        .map(str::to_owned)
        .collect()
}

fn best_match(key: &str, candidates: &[String]) -> Option<String> {
    candidates
        .iter()
        .map(|c| (strsim::jaro_winkler(key, c), c))
        .filter(|(score, _)| *score >= 0.7)
        .max_by(|a, b| a.0.total_cmp(&b.0))
        .map(|(_, c)| c.clone())
}

fn key_at(text: &str, span: &std::ops::Range<usize>) -> String {
    let start = text[..span.start.min(text.len())]
        .rfind('\n')
        .map_or(0, |i| i + 1);
    let line = &text[start..];
    let line = line.split('\n').next().unwrap_or("");
    line.split('=')
        .next()
        .unwrap_or("")
        .trim()
        .trim_matches(|c| c == '[' || c == ']')
        .to_owned()
}

pub fn parse_config(text: &str) -> Result<ExperimentConfig, ConfigError> {
    if let Err(e) = text.parse::<toml::Table>() {
        let (line, column) = e.span().map_or((0, 0), |s| line_col(text, s.start));
        return Err(ConfigError::Syntax {
            line,
            column,
            message: e.message().trim().to_owned(),
        });
    }
    let config: ExperimentConfig = toml::from_str(text).map_err(|e| {
        let msg = e.message().trim().to_owned();
        if let Some(rest) = msg.strip_prefix("unknown field `") {
            let key = rest.split('`').next().unwrap_or_default().to_owned();
            let suggestion = best_match(&key, &expected_names(&msg));
            return ConfigError::UnknownKey { key, suggestion };
        }
        if let Some(rest) = msg.strip_prefix("unknown variant `") {
            let key = rest.split('`').next().unwrap_or_default().to_owned();
            let field = e.span().map(|s| key_at(text, &s)).unwrap_or_default();
            let hint = best_match(&key, &expected_names(&msg))
                .map(|s| format!("; did you mean `{s}`?"))
                .unwrap_or_default();
            return invariant(field, format!("unknown value `{key}`{hint}"));
        }
        let field = e.span().map(|s| key_at(text, &s)).unwrap_or_default();
        invariant(field, msg)
    })?;
    config.validate()?;
    Ok(config)
}

fn positive(field: &str, v: f64) -> Result<(), ConfigError> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(invariant(
            field,
            format!("must be positive and finite, got {v}"),
        ))
    }
}

fn positive_count(field: &str, v: usize) -> Result<(), ConfigError> {
    if v > 0 {
        Ok(())
    } else {
        Err(invariant(field, "must be positive"))
    }
}

fn increasing(field: &str, grid: &[f64]) -> Result<(), ConfigError> {
    if grid.is_empty() {
        return Err(invariant(field, "must not be empty"));
    }
    if grid.iter().any(|v| !(*v > 0.0 && v.is_finite())) {
        return Err(invariant(field, "entries must be positive and finite"));
    }
    if grid.windows(2).any(|w| !(w[0] < w[1])) {
        return Err(invariant(
            field,
            "must be sorted in strictly increasing order",
        ));
    }
    Ok(())
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(invariant(
                "schema_version",
                format!(
                    "unsupported version {} (expected {SCHEMA_VERSION})",
                    self.schema_version
                ),
            ));
        }
        let n = self.problem.n_dim;
        positive_count("problem.n_dim", n)?;
        match &self.problem.spectrum {
            SpectrumConfig::Mild { alpha, c1, c2 } => {
                if !(*alpha >= 0.0 && alpha.is_finite()) {
                    return Err(invariant(
                        "problem.spectrum.alpha",
                        "must be non-negative and finite",
                    ));
                }
                positive("problem.spectrum.c1", *c1)?;
                positive("problem.spectrum.c2", *c2)?;
            }
            SpectrumConfig::Severe {
                c0, beta, c1, c2, ..
            } => {
                positive("problem.spectrum.c0", *c0)?;
                if *beta == 0.0 || !beta.is_finite() {
                    return Err(invariant(
                        "problem.spectrum.beta",
                        "must be non-zero and finite",
                    ));
                }
                positive("problem.spectrum.c1", *c1)?;
                positive("problem.spectrum.c2", *c2)?;
            }
        }
        match &self.problem.coupling {
            CouplingConfig::Reflection {
                v,
                v_geometric,
                v_power,
            } => {
                let given = [v.is_some(), v_geometric.is_some(), v_power.is_some()]
                    .iter()
                    .filter(|b| **b)
                    .count();
                if given != 1 {
                    return Err(invariant(
                        "problem.coupling",
                        "reflection needs exactly one of v, v_geometric, v_power",
                    ));
                }
                if let Some(v) = v {
                    if v.len() > n {
                        return Err(invariant(
                            "problem.coupling.v",
                            format!("longer than n_dim = {n}"),
                        ));
                    }
                }
                if let Some(q) = v_geometric {
                    if !(*q > 1.0) {
                        return Err(invariant(
                            "problem.coupling.v_geometric",
                            "ratio must exceed 1",
                        ));
                    }
                }
                if let Some(p) = v_power {
                    positive("problem.coupling.v_power", *p)?;
                }
            }
            CouplingConfig::ExpSkew { scale, decay } if !scale.is_finite() || !(*decay >= 0.0) => {
                return Err(invariant(
                    "problem.coupling",
                    "exp_skew needs finite scale and non-negative decay",
                ));
            }
            _ => {}
        }
        match &self.problem.prior {
            PriorConfig::Power { delta } => positive("problem.prior.delta", *delta)?,
            PriorConfig::Exponential { rate } => positive("problem.prior.rate", *rate)?,
            PriorConfig::HilbertScale { l, .. } => {
                positive("problem.prior.l", *l)?;
                if self.problem.coupling != CouplingConfig::Identity {
                    return Err(invariant(
                        "problem.coupling",
                        "hilbert_scale priors supply their own basis; leave coupling as identity",
                    ));
                }
            }
            PriorConfig::Explicit { variances } => {
                if variances.len() != n {
                    return Err(invariant(
                        "problem.prior.variances",
                        format!("length must equal n_dim = {n}"),
                    ));
                }
            }
        }
        if let NoiseConfig::Diagonal { variances } = &self.problem.noise {
            if variances.len() != n {
                return Err(invariant(
                    "problem.noise.variances",
                    format!("length must equal n_dim = {n}"),
                ));
            }
        }
        match (&self.truth.gamma, &self.truth.values) {
            (Some(g), None) => positive("truth.gamma", *g)?,
            (None, Some(v)) => {
                if v.len() != n {
                    return Err(invariant(
                        "truth.values",
                        format!("length must equal n_dim = {n}"),
                    ));
                }
            }
            _ => return Err(invariant("truth", "give exactly one of gamma or values")),
        }
        match &self.plan {
            PlanConfig::Auto {
                n_level,
                calibrate_factor,
            } => {
                positive("plan.n_level", *n_level)?;
                if let Some(f) = calibrate_factor {
                    if !(*f >= 1.0) {
                        return Err(invariant("plan.calibrate_factor", "must be at least 1"));
                    }
                }
            }
            PlanConfig::Explicit {
                n_level, k_n, r_n, ..
            } => {
                positive("plan.n_level", *n_level)?;
                if *k_n == 0 || *k_n > n {
                    return Err(invariant("plan.k_n", format!("must lie in 1..={n}")));
                }
                if let Some(r) = r_n {
                    if *r == 0 || *r > n {
                        return Err(invariant("plan.r_n", format!("must lie in 1..={n}")));
                    }
                }
            }
        }
        let run = &self.run;
        increasing("run.n_grid", &run.n_grid)?;
        positive_count("run.mc", run.mc)?;
        positive_count("run.y_replicates", run.y_replicates)?;
        if !(run.delta_level > 0.0 && run.delta_level < 0.5) {
            return Err(invariant("run.delta_level", "must lie in (0, 0.5)"));
        }
        positive("run.simulate.n_level", run.simulate.n_level)?;
        positive("run.posterior.n_level", run.posterior.n_level)?;
        if run.posterior.xi.iter().any(|x| !(*x >= 0.0)) {
            return Err(invariant("run.posterior.xi", "radii must be non-negative"));
        }
        positive_count("run.gn.k_max", run.gn.k_max)?;
        if run.smallball.eps.is_empty() || run.smallball.eps.iter().any(|e| !(*e > 0.0)) {
            return Err(invariant("run.smallball.eps", "radii must be positive"));
        }
        positive_count("run.minmax.j_max", run.minmax.j_max)?;
        let c = &run.concentration;
        if c.k == 0 || c.k > n {
            return Err(invariant(
                "run.concentration.k",
                format!("must lie in 1..={n}"),
            ));
        }
        if let Some(r) = c.r {
            if r == 0 || r > n {
                return Err(invariant(
                    "run.concentration.r",
                    format!("must lie in 1..={n}"),
                ));
            }
        }
        positive("run.concentration.n_level", c.n_level)?;
        positive_count("run.concentration.mc", c.mc)?;
        let f = &run.findim;
        increasing("run.findim.n_grid", &f.n_grid)?;
        positive("run.findim.m_const", f.m_const)?;
        positive_count("run.findim.truth", f.truth.len())?;
        positive_count("run.findim.mc", f.mc)?;
        positive_count("run.findim.y_replicates", f.y_replicates)?;
        Ok(())
    }

    /// Pipelines to run, in their stable order.
    pub fn selected_pipelines(&self) -> Vec<Pipeline> {
        if self.pipelines.is_empty() {
            return Pipeline::ALL.to_vec();
        }
        let mut p = self.pipelines.clone();
        p.sort();
        p.dedup();
        p
    }

    /// sha256 of the canonical JSON form, ignoring output locations.
    pub fn digest(&self) -> String {
        let semantic = ExperimentConfig {
            outputs: OutputConfig::default(),
            ..self.clone()
        };
        let json = serde_json::to_string(&semantic).expect("config serializes");
        hex::encode(Sha256::digest(json.as_bytes()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn line_and_column() {
        assert_eq!(line_col("ab\ncd", 4), (2, 2));
        assert_eq!(line_col("ab", 0), (1, 1));
    }

    #[test]
    fn expected_list_parsing() {
        let names = expected_names("unknown field `pirors`, expected one of `n_dim`, `prior`");
        assert_eq!(names, vec!["n_dim", "prior"]);
        assert_eq!(best_match("pirors", &names).as_deref(), Some("prior"));
    }

    #[test]
    fn stream_ids_are_stable() {
        assert_eq!(Pipeline::Simulate.stream_id(), 0);
        assert_eq!(Pipeline::Findim.stream_id(), 9);
    }
}
