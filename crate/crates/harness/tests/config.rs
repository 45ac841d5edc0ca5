use contraction_harness::config::*;
use proptest::prelude::*;

const MINIMAL: &str = r#"
[problem.spectrum]
family = "mild"
alpha = 1.0

[problem.prior]
family = "power"
delta = 1.0

[problem.coupling]
kind = "identity"
"#;

#[test]
fn minimal_config_fills_defaults() {
    let c = parse_config(MINIMAL).unwrap();
    assert_eq!(c.problem.n_dim, 512);
    assert_eq!(c.run.mc, 2000);
    assert_eq!(c.run.y_replicates, 50);
    assert_eq!(c.run.delta_level, 0.1);
    assert_eq!(c.schema_version, SCHEMA_VERSION);
    assert_eq!(c, ExperimentConfig::default());
    assert_eq!(parse_config("").unwrap(), ExperimentConfig::default());
}

#[test]
fn unsorted_grid_names_field() {
    let err = parse_config("[run]\nn_grid = [1e3, 1e2, 1e4, 1e5]\n").unwrap_err();
    match err {
        ConfigError::Invariant { field, .. } => assert_eq!(field, "run.n_grid"),
        other => panic!("{other:?}"),
    }
}

#[test]
fn unknown_key_suggests_nearest() {
    let err = parse_config("[problem.pirors]\nfamily = \"power\"\n").unwrap_err();
    assert_eq!(
        err,
        ConfigError::UnknownKey {
            key: "pirors".into(),
            suggestion: Some("prior".into())
        }
    );
    let err = parse_config("[run]\nmcc = 3\n").unwrap_err();
    assert!(matches!(err, ConfigError::UnknownKey { suggestion: Some(s), .. } if s == "mc"));
    let err = parse_config("zzzzqqq = 1\n").unwrap_err();
    assert!(matches!(
        err,
        ConfigError::UnknownKey {
            suggestion: None,
            ..
        }
    ));
}

#[test]
fn syntax_error_has_position() {
    let err = parse_config("schema_version = 1\n[run\nmc = 2").unwrap_err();
    match err {
        ConfigError::Syntax { line, column, .. } => {
            assert_eq!(line, 2);
            assert!(column >= 1);
        }
        other => panic!("{other:?}"),
    }
}

#[test]
fn error_classes_are_distinct() {
    let classes = [
        parse_config("a = ").unwrap_err(),
        parse_config("pipelinez = []").unwrap_err(),
        parse_config("schema_version = 9").unwrap_err(),
    ];
    assert!(matches!(classes[0], ConfigError::Syntax { .. }));
    assert!(matches!(classes[1], ConfigError::UnknownKey { .. }));
    assert!(matches!(classes[2], ConfigError::Invariant { .. }));
}

#[test]
fn invariants_are_enforced() {
    for (text, field) in [
        ("[run]\nmc = 0", "run.mc"),
        ("[run]\ndelta_level = 0.7", "run.delta_level"),
        ("[problem]\nn_dim = 0", "problem.n_dim"),
        ("[truth]\nvalues = [1.0]", "truth.values"),
        (
            "[problem.prior]\nfamily = \"explicit\"\nvariances = [1.0]",
            "problem.prior.variances",
        ),
        (
            "[problem.coupling]\nkind = \"reflection\"",
            "problem.coupling",
        ),
        (
            "[plan]\nmode = \"explicit\"\nn_level = 10.0\neps_n = 0.1\nxi_n = 0.1\nk_n = 600",
            "plan.k_n",
        ),
        (
            "[problem.spectrum]\nfamily = \"mild\"\nalpha = -1.0",
            "problem.spectrum.alpha",
        ),
    ] {
        match parse_config(text) {
            Err(ConfigError::Invariant { field: f, .. }) => assert_eq!(f, field, "{text}"),
            other => panic!("{text}: {other:?}"),
        }
    }
}

#[test]
fn wrong_type_is_an_invariant_error() {
    let err = parse_config("[run]\nmc = \"many\"").unwrap_err();
    assert!(matches!(err, ConfigError::Invariant { field, .. } if field == "mc"));
}

#[test]
fn pipelines_parse_and_sort() {
    let c = parse_config("pipelines = [\"hs\", \"gn\", \"rate-fit\", \"hs\"]").unwrap();
    assert_eq!(
        c.selected_pipelines(),
        vec![Pipeline::RateFit, Pipeline::GTables, Pipeline::Hs]
    );
    assert_eq!(ExperimentConfig::default().selected_pipelines().len(), 10);
}

#[test]
fn digest_tracks_semantic_fields_only() {
    let a = parse_config(MINIMAL).unwrap();
    let spaced = MINIMAL.replace(" = ", "   =    ").replace('\n', "\n\n");
    let b = parse_config(&spaced).unwrap();
    assert_eq!(a.digest(), b.digest());
    let mut moved = a.clone();
    moved.outputs.dir = "elsewhere".into();
    assert_eq!(a.digest(), moved.digest());
    let c = parse_config(&MINIMAL.replace("alpha = 1.0", "alpha = 1.5")).unwrap();
    assert_ne!(a.digest(), c.digest());
    let mut d = a.clone();
    d.run.master_seed = 9;
    assert_ne!(a.digest(), d.digest());
    assert_eq!(a.digest().len(), 64);
}

#[test]
fn full_config_round_trips_through_toml() {
    let text = r#"
schema_version = 1
pipelines = ["check", "minmax"]

[problem]
n_dim = 32

[problem.spectrum]
family = "severe"
alpha2 = 0.5
beta = -0.5

[problem.coupling]
kind = "banded"
seed = 4

[problem.noise]
kind = "colored"
r = 0.5

[truth]
gamma = 1.5

[plan]
mode = "explicit"
n_level = 1e4
eps_n = 0.1
xi_n = 0.3
k_n = 4
r_n = 8

[run]
n_grid = [1e2, 1e3, 1e4, 1e5]
master_seed = 11

[run.hs]
targets = ["gn_bound", "exp_pair"]

[outputs]
formats = ["csv", "json", "plotdata"]
"#;
    let c = parse_config(text).unwrap();
    let back = toml::to_string(&c).unwrap();
    assert_eq!(parse_config(&back).unwrap(), c);
}

proptest! {
    #[test]
    fn digest_changes_with_seed(a in any::<u64>(), b in any::<u64>()) {
        let mut x = ExperimentConfig::default();
        let mut y = ExperimentConfig::default();
        x.run.master_seed = a;
        y.run.master_seed = b;
        prop_assert_eq!(a == b, x.digest() == y.digest());
    }
}
