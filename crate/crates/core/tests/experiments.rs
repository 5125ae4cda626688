//! End-to-end runs of the configuration-driven experiment runner.

use std::fs;

use toral_core::experiment::{run, ExperimentConfig, RunManifest};
use toral_core::Error;

fn run_text(text: &str) -> (tempfile::TempDir, RunManifest) {
    let dir = tempfile::tempdir().unwrap();
    let cfg = ExperimentConfig::from_toml(text).unwrap();
    let m = run(&cfg, dir.path()).unwrap();
    (dir, m)
}

#[test]
fn separation_task_on_cat_word() {
    let (dir, m) = run_text(
        "task = \"separation\"\n[alphabet]\npreset = \"cat\"\n[source]\nkind = \"explicit\"\nindices = [0,0,0,0,0,0,0,0,0,0,0,0]\n[params]\nd_bound = 1\ngap = 3\ns_max = 2\nword_length = 12\n",
    );
    assert!(m.outputs.iter().any(|o| o == "separation.json"));
    let report: serde_json::Value = serde_json::from_str(&fs::read_to_string(dir.path().join("separation.json")).unwrap()).unwrap();
    assert_eq!(report["verdict"], "HOLDS_EXHAUSTIVE");
    let manifest: RunManifest = serde_json::from_str(&fs::read_to_string(dir.path().join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest.config_hash, m.config_hash);
    assert_eq!(manifest.config_hash.len(), 64);
}

#[test]
fn clt_task_reports_exact_sigma() {
    let (dir, _) = run_text("task = \"clt\"\nseed = 1\n[params]\nn_grid = [100, 400]\nsamples = 4000\n");
    let csv = fs::read_to_string(dir.path().join("clt.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next().unwrap(), "n,sigma_hat,ks");
    for line in lines {
        let cols: Vec<&str> = line.split(',').collect();
        let sigma: f64 = cols[1].parse().unwrap();
        assert!((sigma - 0.5f64.sqrt()).abs() < 1e-12);
        assert!(cols[2].parse::<f64>().unwrap() < 0.05);
    }
    for f in ["ecdf.csv", "char_fn.csv", "esseen.csv", "clt_report.json"] {
        assert!(dir.path().join(f).exists(), "{f}");
    }
}

#[test]
fn reruns_are_byte_identical() {
    let text = "task = \"variance\"\nseed = 3\n[function]\nkind = \"distance-power\"\ncenter = [0.2, 0.7]\nexponent = 0.5\nfejer_order = 6\n[params]\nn_grid = [5, 20]\nsamples = 2000\nr_max = 4\n";
    let (a, ma) = run_text(text);
    let (b, mb) = run_text(text);
    assert_eq!(ma.outputs, mb.outputs);
    for f in &ma.outputs {
        if f.ends_with(".csv") {
            assert_eq!(fs::read(a.path().join(f)).unwrap(), fs::read(b.path().join(f)).unwrap(), "{f}");
        }
    }
}

#[test]
fn every_task_runs() {
    let configs = [
        "task = \"sl2-constants\"\n[params]\nsample_budget = 1000\n",
        "task = \"komlos\"\n[params]\nsamples = 2000\n",
        "task = \"diagnostics\"\n[params]\nn_grid = [10, 30]\ntrials = 100\n",
        "task = \"coboundary\"\n[alphabet]\npreset = \"cat\"\n[function]\nkind = \"cos\"\n",
        "task = \"variance\"\n[source]\nkind = \"rotation\"\nalpha = 0.6180339887\nlo = 0.0\nhi = 0.5\n[params]\nn_grid = [10, 50]\n",
        "task = \"clt\"\n[function]\nkind = \"box\"\nlo = [0.1, 0.2]\nhi = [0.5, 0.6]\n[params]\nn_grid = [20]\nsamples = 500\n",
    ];
    for text in configs {
        let (dir, m) = run_text(text);
        for f in &m.outputs {
            assert!(dir.path().join(f).exists(), "{f} missing for {}", m.task);
        }
    }
}

#[test]
fn config_errors_are_distinct_from_task_errors() {
    assert!(matches!(ExperimentConfig::from_toml("task = \"clt\"\n[params]\nn_grid = []\n"), Err(Error::Config(_))));
    let cfg = ExperimentConfig::from_toml("task = \"clt\"\n[function]\nkind = \"trig\"\nterms = [{ freq = [0, 0], re = 1.0 }]\n");
    let dir = tempfile::tempdir().unwrap();
    let err = cfg.and_then(|c| run(&c, dir.path())).unwrap_err();
    assert!(matches!(err, Error::ZeroVariance { .. }), "{err}");
}
