use std::process::Command;

fn lab() -> Command {
    Command::new(env!("CARGO_BIN_EXE_contraction-lab"))
}

const SMALL: &str = r#"
[problem]
n_dim = 32

[problem.coupling]
kind = "banded"

[run]
n_grid = [1e2, 1e3, 1e4, 1e5]
y_replicates = 8
mc = 1000
"#;

#[test]
fn success_and_worker_invariance() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("c.toml");
    std::fs::write(&cfg, SMALL).unwrap();
    let mut outputs = Vec::new();
    for workers in ["1", "8"] {
        let out = dir.path().join(format!("w{workers}"));
        let status = lab()
            .args(["rate-fit", "--config"])
            .arg(&cfg)
            .arg("--out")
            .arg(&out)
            .args(["--seed", "5", "--workers", workers])
            .output()
            .unwrap()
            .status;
        assert!(status.success());
        outputs.push(std::fs::read(out.join("rate_fit.csv")).unwrap());
    }
    assert_eq!(outputs[0], outputs[1]);
}

#[test]
fn workers_from_environment() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("o");
    let status = lab()
        .args(["gn", "--format", "plotdata", "--out"])
        .arg(&out)
        .env("CONTRACTION_LAB_WORKERS", "2")
        .output()
        .unwrap()
        .status;
    assert!(status.success());
    assert!(out.join("g_table__g_k.dat").exists());
    assert!(out.join("metadata.json").exists());
    let bad = lab()
        .args(["gn", "--out"])
        .arg(&out)
        .env("CONTRACTION_LAB_WORKERS", "0")
        .output()
        .unwrap()
        .status;
    assert_eq!(bad.code(), Some(1));
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.toml");
    std::fs::write(&bad, "[problem.pirors]\n").unwrap();
    let out = lab().args(["gn", "--config"]).arg(&bad).output().unwrap();
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("did you mean `prior`"));

    let missing = lab()
        .args(["gn", "--config"])
        .arg(dir.path().join("nope.toml"))
        .output()
        .unwrap()
        .status;
    assert_eq!(missing.code(), Some(3));

    let reflection = dir.path().join("hs.toml");
    std::fs::write(
        &reflection,
        "[problem]\nn_dim = 16\n[run.hs]\ntargets = [\"reflection_pair\"]\n",
    )
    .unwrap();
    let numerical = lab()
        .args(["hs", "--config"])
        .arg(&reflection)
        .arg("--out")
        .arg(dir.path().join("hs"))
        .output()
        .unwrap()
        .status;
    assert_eq!(numerical.code(), Some(2));
    assert!(dir.path().join("hs/metadata.json").exists());

    let blocker = dir.path().join("blocker");
    std::fs::write(&blocker, "x").unwrap();
    let io = lab()
        .args(["gn", "--out"])
        .arg(blocker.join("sub"))
        .output()
        .unwrap()
        .status;
    assert_eq!(io.code(), Some(3));
}
