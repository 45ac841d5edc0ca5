#![allow(clippy::field_reassign_with_default)]

use contraction_harness::config::*;
use contraction_harness::emit::*;
use contraction_harness::run::EXPLORATORY;
use contraction_harness::{run_experiment, Cell, ResultRecord, Table};

fn small(pipelines: Vec<Pipeline>) -> ExperimentConfig {
    let mut c = ExperimentConfig::default();
    c.pipelines = pipelines;
    c.problem.n_dim = 32;
    c.run.n_grid = vec![1e2, 1e3, 1e4, 1e5];
    c.run.y_replicates = 6;
    c.run.mc = 1000;
    c.run.gn.k_max = 8;
    c.run.minmax.j_max = 16;
    c.run.concentration.mc = 1000;
    c.run.findim.mc = 1000;
    c.run.findim.y_replicates = 4;
    c
}

fn strip_times(mut r: ResultRecord) -> ResultRecord {
    r.timestamps.started_unix_ms = 0;
    r.timestamps.finished_unix_ms = 0;
    r
}

#[test]
fn same_config_same_record() {
    let c = small(Vec::new());
    let a = strip_times(run_experiment(&c));
    let b = strip_times(run_experiment(&c));
    assert_eq!(a, b);
    assert!(a.failures.is_empty(), "{:?}", a.failures);
    for t in &a.tables {
        assert_eq!(t.config_digest, a.config_digest);
    }
    let names: Vec<&str> = a.tables.iter().map(|t| t.name.as_str()).collect();
    for want in [
        "simulate",
        "posterior",
        "rate_fit",
        "assumption_check",
        "g_table",
        "small_ball",
        "minmax",
        "hs",
        "concentration",
        "findim",
    ] {
        assert!(names.contains(&want), "{want} missing from {names:?}");
    }
}

#[test]
fn g_tables_only_gives_one_table() {
    let r = run_experiment(&small(vec![Pipeline::GTables]));
    assert_eq!(r.tables.len(), 1);
    assert_eq!(r.tables[0].name, "g_table");
    assert_eq!(r.tables[0].rows.len(), 8);
}

#[test]
fn severe_rate_fit_is_labelled() {
    let mut c = small(vec![Pipeline::RateFit]);
    c.problem.spectrum = SpectrumConfig::Severe {
        alpha1: 0.0,
        alpha2: 0.0,
        c0: 0.5,
        beta: -0.5,
        c1: 1.0,
        c2: 1.0,
    };
    let r = run_experiment(&c);
    let t = r.table("rate_fit").expect("table present");
    assert_eq!(t.label.as_deref(), Some(EXPLORATORY));
    let mild = run_experiment(&small(vec![Pipeline::RateFit]));
    assert_eq!(mild.table("rate_fit").unwrap().label, None);
}

#[test]
fn rate_fit_columns_are_fixed() {
    let r = run_experiment(&small(vec![Pipeline::RateFit]));
    let t = r.table("rate_fit").unwrap();
    assert_eq!(
        t.columns,
        [
            "n",
            "xi_hat",
            "exceedance_frac",
            "slope",
            "slope_lo",
            "slope_hi"
        ]
    );
    let csv = String::from_utf8(table_csv(t)).unwrap();
    assert!(csv.starts_with("n,xi_hat,exceedance_frac,slope,slope_lo,slope_hi\r\n"));
    assert_eq!(csv.lines().count(), 5);
}

#[test]
fn module_errors_become_failure_entries() {
    let mut c = small(vec![Pipeline::GTables, Pipeline::Hs, Pipeline::Smallball]);
    c.run.hs.targets = vec![HsTargetConfig::ReflectionPair, HsTargetConfig::GnBound];
    c.run.mc = 10;
    let r = run_experiment(&c);
    assert!(r.table("g_table").is_some());
    assert!(r.table("hs_gn").is_some());
    let failed: Vec<&str> = r.failures.iter().map(|f| f.pipeline.as_str()).collect();
    assert_eq!(failed, ["smallball", "hs"]);
}

#[test]
fn problem_construction_failure_is_reported() {
    let mut c = small(vec![Pipeline::GTables, Pipeline::Findim]);
    c.problem.spectrum = SpectrumConfig::Severe {
        alpha1: 0.0,
        alpha2: 0.0,
        c0: 50.0,
        beta: -1.0,
        c1: 1.0,
        c2: 1.0,
    };
    c.problem.n_dim = 4096;
    let r = run_experiment(&c);
    assert!(r.table("findim").is_some());
    assert_eq!(r.failures.len(), 1);
    assert!(r.failures[0].message.starts_with("problem construction"));
}

#[test]
fn check_pipeline_with_calibration_passes() {
    let mut c = small(vec![Pipeline::Check]);
    c.problem.n_dim = 64;
    c.run.mc = 4000;
    let r = run_experiment(&c);
    let t = r.table("assumption_check").unwrap();
    let last = t.rows.last().unwrap();
    assert_eq!(last[0], Cell::Text("all".into()));
    assert_eq!(last[3], Cell::Bool(true), "{:?}", t.rows);
    assert!(r.table("plan").is_some());
}

#[test]
fn hilbert_scale_problem_runs() {
    let mut c = small(vec![Pipeline::Posterior, Pipeline::GTables]);
    c.problem.prior = PriorConfig::HilbertScale {
        t: 1.0,
        l: 2.0,
        k2_scale: 0.1,
        k2_seed: 2,
    };
    c.problem.noise = NoiseConfig::Colored {
        r: 0.5,
        k1_scale: 0.1,
        k1_seed: 3,
    };
    let r = run_experiment(&c);
    assert!(r.failures.is_empty(), "{:?}", r.failures);
    assert_eq!(r.tables.len(), 3);
}

#[test]
fn csv_quotes_and_floats() {
    let mut t = Table::new("t", "op", 0, &["a", "b,c"]);
    t.push(vec![Cell::Num(0.1), Cell::Text("x,\"y\"".into())]);
    t.push(vec![Cell::Num(f64::NAN), Cell::Null]);
    t.push(vec![Cell::Num(1e-300), Cell::Bool(true)]);
    let s = String::from_utf8(table_csv(&t)).unwrap();
    assert_eq!(
        s,
        "a,\"b,c\"\r\n0.1,\"x,\"\"y\"\"\"\r\nNaN,\r\n1e-300,true\r\n"
    );
}

#[test]
fn empty_table_writes_header_only() {
    let dir = tempfile::tempdir().unwrap();
    let mut record = run_experiment(&small(vec![Pipeline::GTables]));
    record.tables[0].rows.clear();
    emit_results(
        &record,
        &[OutputFormat::Csv, OutputFormat::Plotdata],
        dir.path(),
    )
    .unwrap();
    let text = std::fs::read_to_string(dir.path().join("g_table.csv")).unwrap();
    assert_eq!(text, "k,g_k,g_kk,inv_rho_sq\r\n");
    assert_eq!(
        std::fs::read_to_string(dir.path().join("g_table__g_k.dat")).unwrap(),
        ""
    );

    let empty = ResultRecord {
        tables: Vec::new(),
        ..record
    };
    let paths = emit_results(
        &empty,
        &[OutputFormat::Csv, OutputFormat::Json],
        dir.path().join("e").as_path(),
    )
    .unwrap();
    assert_eq!(paths.len(), 2);
    let back =
        parse_record_json(&std::fs::read_to_string(dir.path().join("e/record.json")).unwrap())
            .unwrap();
    assert_eq!(back, empty);
}

#[test]
fn json_round_trip() {
    let mut record = run_experiment(&small(vec![
        Pipeline::RateFit,
        Pipeline::Check,
        Pipeline::Hs,
    ]));
    record.tables[0].rows[0][1] = Cell::Num(f64::NAN);
    record.tables[0].rows[1][1] = Cell::Num(f64::NEG_INFINITY);
    let back = parse_record_json(&record_json(&record)).unwrap();
    assert_eq!(back, record);
}

#[test]
fn plotdata_pairs_first_column() {
    let r = run_experiment(&small(vec![Pipeline::Minmax]));
    let files = table_plotdata(&r.tables[0]);
    let names: Vec<&str> = files.iter().map(|f| f.0.as_str()).collect();
    assert_eq!(
        names,
        [
            "minmax__alpha_j.dat",
            "minmax__beta_j.dat",
            "minmax__ratio.dat"
        ]
    );
    let first = files[2].1.lines().next().unwrap();
    assert_eq!(first.split(' ').count(), 2);
    assert_eq!(files[2].1.lines().count(), 16);
}

#[test]
fn metadata_holds_timestamps_only_there() {
    let dir = tempfile::tempdir().unwrap();
    let r = run_experiment(&small(vec![Pipeline::GTables, Pipeline::Minmax]));
    emit_results(&r, &[OutputFormat::Csv], dir.path()).unwrap();
    let meta: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("metadata.json")).unwrap())
            .unwrap();
    assert_eq!(meta["config_digest"], r.config_digest);
    assert!(meta["timestamps"]["started_unix_ms"].as_u64().unwrap() > 0);
    assert_eq!(meta["provenance"][0]["operation"], "compute_g_kr");
    let csv = std::fs::read_to_string(dir.path().join("g_table.csv")).unwrap();
    assert!(!csv.contains("unix"));
}

#[test]
fn unwritable_path_is_an_io_error() {
    let dir = tempfile::tempdir().unwrap();
    let blocker = dir.path().join("file");
    std::fs::write(&blocker, "x").unwrap();
    let r = run_experiment(&small(vec![Pipeline::GTables]));
    let err = emit_results(&r, &[OutputFormat::Csv], &blocker.join("sub")).unwrap_err();
    assert!(err.path.starts_with(&blocker));
}
