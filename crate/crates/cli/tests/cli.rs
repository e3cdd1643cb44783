use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;
use xper::exact::{xper_exact, ExactOptions};
use xper::models::{LinearKind, LinearModel};
use xper::{load_csv, FittedMetric, LoadOptions, MetricId, MetricSpec, Sample};

const XPER: &str = env!("CARGO_BIN_EXE_xper");
const ADAPTER: &str = env!("CARGO_BIN_EXE_xper-linear-adapter");

fn xper(dir: &Path, args: &[&str]) -> Output {
    Command::new(XPER)
        .current_dir(dir)
        .env_remove("XPER_THREADS")
        .args(args)
        .output()
        .expect("xper runs")
}

fn ok_json(out: Output) -> Value {
    assert!(
        out.status.success(),
        "exit {:?}: {}",
        out.status.code(),
        String::from_utf8_lossy(&out.stderr)
    );
    serde_json::from_slice(&out.stdout).expect("stdout is one json report")
}

fn phi(report: &Value) -> Vec<f64> {
    report["result"]["report"]["phi"]
        .as_array()
        .unwrap()
        .iter()
        .map(|v| v.as_f64().unwrap())
        .collect()
}

struct Files {
    dir: tempfile::TempDir,
}

impl Files {
    fn probit() -> Self {
        let dir = tempfile::tempdir().unwrap();
        ok_json(xper(dir.path(), &["generate", "--kind", "probit", "--n", "400", "--seed", "1", "--csv", "train.csv"]));
        ok_json(xper(dir.path(), &["generate", "--kind", "probit", "--n", "150", "--seed", "2", "--csv", "test.csv"]));
        Files { dir }
    }

    fn path(&self) -> &Path {
        self.dir.path()
    }

    fn file(&self, name: &str) -> PathBuf {
        self.dir.path().join(name)
    }
}

const DECOMPOSE: [&str; 11] = [
    "decompose", "--data", "test.csv", "--train", "train.csv", "--target", "y", "--model", "builtin:probit", "--metric",
    "auc",
];

#[test]
fn report_has_schema_manifest_and_efficiency() {
    let f = Files::probit();
    let r = ok_json(xper(f.path(), &DECOMPOSE));
    assert_eq!(r["schema"], 1);
    let manifest = &r["manifest"];
    assert_eq!(manifest["command"]["subcommand"], "decompose");
    assert_eq!(manifest["inputs"].as_array().unwrap().len(), 2);
    assert_eq!(manifest["inputs"][0]["sha256"].as_str().unwrap().len(), 64);
    let report = &r["result"]["report"];
    assert_eq!(report["phi0"], 0.5);
    assert!(report["efficiency_residual"].as_f64().unwrap() <= 1e-10);
    assert!(report.get("individual").is_none());
    assert!(report["diagnostics"].get("wall_time_ms").is_none());
}

#[test]
fn exhaustive_wls_matches_exact() {
    let f = Files::probit();
    let exact = ok_json(xper(f.path(), &DECOMPOSE));
    let mut args = DECOMPOSE.to_vec();
    args.extend(["--method", "wls", "--k-samples", "6", "--seed", "3"]);
    let wls = ok_json(xper(f.path(), &args));
    assert_eq!(wls["result"]["report"]["estimator"], "wls");
    for (a, b) in phi(&exact).iter().zip(phi(&wls)) {
        assert!((a - b).abs() <= 1e-8, "{a} vs {b}");
    }
}

#[test]
fn replay_reproduces_the_result_across_thread_counts() {
    let f = Files::probit();
    let mut args = DECOMPOSE.to_vec();
    args.extend(["--individual", "--out", "first.json"]);
    let out = xper(f.path(), &args);
    assert!(out.status.success());
    assert!(out.stdout.is_empty());
    let first: Value = serde_json::from_str(&std::fs::read_to_string(f.file("first.json")).unwrap()).unwrap();
    let again = ok_json(xper(f.path(), &["--threads", "1", "replay", "first.json"]));
    assert_eq!(first["result"], again["result"]);
    assert_eq!(first["result_sha256"], again["result_sha256"]);
    assert_eq!(again["manifest"]["threads"], 1);

    // A changed input is refused.
    std::fs::copy(f.file("train.csv"), f.file("test.csv")).unwrap();
    let out = xper(f.path(), &["replay", "first.json"]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn usage_and_computation_errors_use_distinct_exit_codes() {
    let f = Files::probit();
    let unknown = xper(f.path(), &["simulate", "--scenario", "nope"]);
    assert_eq!(unknown.status.code(), Some(2));
    let stderr = String::from_utf8_lossy(&unknown.stderr);
    assert_eq!(stderr.lines().count(), 1, "{stderr}");
    assert!(unknown.stdout.is_empty());

    assert_eq!(xper(f.path(), &["decompose", "--data", "test.csv"]).status.code(), Some(2));
    let mut missing_k = DECOMPOSE.to_vec();
    missing_k.extend(["--method", "wls"]);
    assert_eq!(xper(f.path(), &missing_k).status.code(), Some(2));

    // Keep only positives: AUC is undefined.
    let text = std::fs::read_to_string(f.file("test.csv")).unwrap();
    let mut lines = text.lines();
    let mut ones = format!("{}\n", lines.next().unwrap());
    for l in lines.filter(|l| l.ends_with(",1")) {
        ones.push_str(l);
        ones.push('\n');
    }
    std::fs::write(f.file("ones.csv"), ones).unwrap();
    let mut args = DECOMPOSE.to_vec();
    args[2] = "ones.csv";
    let out = xper(f.path(), &args);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("degenerate metric"));
}

#[test]
fn external_adapter_matches_the_library() {
    let f = Files::probit();
    let coef = "0.5,-0.25,0.125";
    let model_flag = format!("exec:{ADAPTER}");
    let out = xper(
        f.path(),
        &[
            "decompose", "--data", "test.csv", "--target", "y", "--model", &model_flag, "--adapter-arg=--intercept",
            "--adapter-arg=0.1", "--adapter-arg=--coef", &format!("--adapter-arg={coef}"), "--adapter-arg=--link",
            "--adapter-arg=probit", "--metric", "brier",
        ],
    );
    let r = ok_json(out);

    let sample: Sample = load_csv(f.file("test.csv"), "y", &LoadOptions::default()).unwrap();
    let model = LinearModel::new(LinearKind::Probit, Some(0.1), vec![0.5, -0.25, 0.125]);
    let metric = FittedMetric::fit_with_model(MetricSpec::new(MetricId::Brier), &sample, &model).unwrap();
    let expected = xper_exact(&sample, &model, &metric, &ExactOptions { individual: false, ..Default::default() }).unwrap();
    for (a, b) in phi(&r).iter().zip(&expected.phi) {
        assert!((a - b).abs() <= 1e-12, "{a} vs {b}");
    }

    let broken = xper(f.path(), &["decompose", "--data", "test.csv", "--target", "y", "--model", "exec:/nonexistent/adapter", "--metric", "auc"]);
    assert_eq!(broken.status.code(), Some(1));
}

#[test]
fn boost_with_one_cluster_changes_nothing() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path();
    ok_json(xper(p, &["generate", "--kind", "two-regime", "--n", "300", "--seed", "1", "--csv", "train.csv"]));
    ok_json(xper(p, &["generate", "--kind", "two-regime", "--n", "150", "--seed", "2", "--csv", "test.csv"]));
    let r = ok_json(xper(
        p,
        &["boost", "--train", "train.csv", "--test", "test.csv", "--target", "y", "--clusters", "1", "--model", "cart:depth=3"],
    ));
    let columns = r["result"]["columns"].as_array().unwrap();
    assert_eq!(columns.len(), 3);
    for c in &columns[1..] {
        assert_eq!(c["test_predictions"], columns[0]["test_predictions"]);
        assert_eq!(c["metrics"], columns[0]["metrics"]);
    }

    ok_json(xper(p, &["generate", "--kind", "probit", "--n", "150", "--seed", "2", "--beta", "0,1,1", "--csv", "narrow.csv"]));
    let out = xper(p, &["boost", "--train", "train.csv", "--test", "narrow.csv", "--target", "y"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn simulate_writes_tidy_table_and_summary() {
    let dir = tempfile::tempdir().unwrap();
    let r = ok_json(xper(
        dir.path(),
        &["simulate", "--scenario", "probit_baseline", "--reps", "4", "--out-dir", "study"],
    ));
    let cmd = &r["manifest"]["command"];
    assert_eq!(cmd["reps"], 4);
    assert_eq!(cmd["seed"], r["result"]["config"]["seed"]);
    assert_eq!(cmd["model"], "probit");
    assert_eq!(r["result"]["summary"]["scenario"], "probit");
    let csv = std::fs::read_to_string(dir.path().join("study/probit_baseline.csv")).unwrap();
    assert_eq!(csv.lines().count() as u64, r["result"]["rows"].as_u64().unwrap() + 1);
    assert!(dir.path().join("study/probit_baseline_summary.json").exists());
}

#[test]
fn oracle_table_and_json_agree() {
    let dir = tempfile::tempdir().unwrap();
    let json = ok_json(xper(dir.path(), &["oracle", "--kind", "mse", "--n", "500"]));
    assert!(json["result"]["max_abs_diff"].as_f64().unwrap() < 1e-10);
    let table = xper(dir.path(), &["oracle", "--kind", "mse", "--n", "500", "--format", "table"]);
    assert!(table.status.success());
    let text = String::from_utf8(table.stdout).unwrap();
    assert!(text.starts_with("quantity"));
    assert_eq!(text.lines().count(), json["result"]["rows"].as_array().unwrap().len() + 1);
}
