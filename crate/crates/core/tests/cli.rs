use std::path::Path;
use std::process::Command;

const BIN: &str = env!("CARGO_BIN_EXE_merging");

const CONFIG: &str = r#"
seed = 1
horizon = 60
theorems = ["T1", "T3"]

[generator]
kind = "stick"
n = 5

[generator.schedule]
kind = "random"
lo = 1.0
hi = 2.0
changes = 2
period = 10

[queries]
pairs = [[0, 2], [1, 3]]
centered = true
etas = [0.25, 0.1]

[output]
dir = "out"
plots = true
"#;

fn run(dir: &Path, args: &[&str], threads: Option<&str>) -> (i32, String, String) {
    let mut cmd = Command::new(BIN);
    cmd.args(args).current_dir(dir);
    if let Some(t) = threads {
        cmd.env("MERGING_THREADS", t);
    }
    let out = cmd.output().unwrap();
    (out.status.code().unwrap(), String::from_utf8_lossy(&out.stdout).into(), String::from_utf8_lossy(&out.stderr).into())
}

#[test]
fn run_writes_deterministic_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("stick.toml"), CONFIG).unwrap();
    let (code, _, err) = run(dir.path(), &["run", "stick.toml"], None);
    assert_eq!(code, 0, "{err}");
    let out = dir.path().join("out");
    let csv = std::fs::read(out.join("report.csv")).unwrap();
    let json = std::fs::read(out.join("summary.json")).unwrap();
    assert!(out.join("plots/0-2/T3.dat").exists());
    assert!(out.join("plots/centered/exact-sep.dat").exists());

    let (code, _, _) = run(dir.path(), &["run", "stick.toml"], Some("1"));
    assert_eq!(code, 0);
    assert_eq!(std::fs::read(out.join("report.csv")).unwrap(), csv);
    assert_eq!(std::fs::read(out.join("summary.json")).unwrap(), json);

    let (code, _, _) = run(dir.path(), &["run", "stick.toml", "--seed", "2", "--out", "other"], None);
    assert_eq!(code, 0);
    let other = std::fs::read(dir.path().join("other/report.csv")).unwrap();
    assert_ne!(other, csv);
    let summary: serde_json::Value = serde_json::from_slice(&std::fs::read(dir.path().join("other/summary.json")).unwrap()).unwrap();
    assert_eq!(summary["seed"], 2);
    assert_eq!(summary["crossings"].as_array().unwrap().len(), 6);
}

#[test]
fn dominance_violation_exits_two() {
    let dir = tempfile::tempdir().unwrap();
    let ones = vec!["1.0"; 60].join(", ");
    let cfg = CONFIG.replace("[output]", &format!("[constants]\ngammas = \"supplied\"\ngamma-values = [{ones}]\n\n[output]"));
    std::fs::write(dir.path().join("bad.toml"), cfg).unwrap();
    let (code, out, _) = run(dir.path(), &["run", "bad.toml"], None);
    assert_eq!(code, 2);
    assert!(out.contains("dominance violation"));
}

#[test]
fn config_errors_exit_one_and_name_the_field() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("bad.toml"), CONFIG.replace("etas = [0.25, 0.1]", "etas = [0.0]")).unwrap();
    let (code, _, err) = run(dir.path(), &["run", "bad.toml"], None);
    assert_eq!(code, 1);
    assert!(err.contains("queries.etas"), "{err}");

    std::fs::write(dir.path().join("low.toml"), CONFIG.replace("lo = 1.0", "lo = 0.5")).unwrap();
    let (code, _, err) = run(dir.path(), &["run", "low.toml"], None);
    assert_eq!(code, 1);
    assert!(err.contains("generator") && err.contains("< 1"), "{err}");

    let (code, _, err) = run(dir.path(), &["run", "stick.toml"], Some("many"));
    assert_eq!(code, 1);
    assert!(err.contains("MERGING_THREADS"));
}

#[test]
fn describe_known_and_unknown() {
    let dir = tempfile::tempdir().unwrap();
    let (code, out, _) = run(dir.path(), &["describe", "hypercube"], None);
    assert_eq!(code, 0);
    assert!(out.contains("c_t <= M"));
    let (code, _, err) = run(dir.path(), &["describe", "foo"], None);
    assert_eq!(code, 1);
    assert!(err.contains("stick") && err.contains("two-state"));
}

#[test]
fn validate_environment_files() {
    let dir = tempfile::tempdir().unwrap();
    let good = r#"{"size":2,"horizon":2,"kernels":[[0.5,0.5,0.5,0.5],[0.5,0.5,0.5,0.5]],"measures":[[1,1],[2,2]]}"#;
    let bad = r#"{"size":2,"horizon":2,"kernels":[[0.5,0.5,0.5,0.5],[0.5,0.5,0.5,0.5]],"measures":[[2,2],[1,1]]}"#;
    std::fs::write(dir.path().join("good.json"), good).unwrap();
    std::fs::write(dir.path().join("bad.json"), bad).unwrap();
    let (code, out, _) = run(dir.path(), &["validate", "good.json"], None);
    assert_eq!(code, 0);
    assert!(out.contains("\"ok\": true"));
    let (code, out, _) = run(dir.path(), &["validate", "bad.json"], None);
    assert_eq!(code, 1);
    assert!(out.contains("monotonicity"));
}

#[test]
fn presets_parse() {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    for name in ["stick", "two-state", "torus", "hypercube"] {
        merging::config::ExperimentConfig::read(&dir.join(format!("{name}.toml"))).unwrap();
    }
}
