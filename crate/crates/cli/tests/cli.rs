use std::fs;
use std::path::Path;
use std::process::Command;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_toral-clt"))
}

fn write(dir: &Path, name: &str, text: &str) -> std::path::PathBuf {
    let p = dir.join(name);
    fs::write(&p, text).unwrap();
    p
}

fn csvs(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut out: Vec<_> = fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.extension().is_some_and(|e| e == "csv"))
        .map(|p| (p.file_name().unwrap().to_string_lossy().into_owned(), fs::read(&p).unwrap()))
        .collect();
    out.sort();
    out
}

#[test]
fn run_is_independent_of_worker_count() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write(tmp.path(), "clt.toml", "task = \"clt\"\nseed = 2\n[params]\nn_grid = [50, 200]\nsamples = 5000\n");
    let mut results = Vec::new();
    for workers in ["1", "8"] {
        let out = tmp.path().join(format!("out-{workers}"));
        let status = bin()
            .args(["run", cfg.to_str().unwrap(), "--out", out.to_str().unwrap(), "--workers", workers])
            .output()
            .unwrap();
        assert!(status.status.success(), "{}", String::from_utf8_lossy(&status.stderr));
        results.push(csvs(&out));
    }
    assert!(!results[0].is_empty());
    assert_eq!(results[0], results[1]);
}

#[test]
fn env_var_sets_workers_and_seed_flag_overrides() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write(tmp.path(), "sep.toml", "task = \"separation\"\n[params]\ngap = 3\nword_length = 8\n");
    let out = tmp.path().join("out");
    let o = bin()
        .env("TORAL_CLT_WORKERS", "2")
        .args(["run", cfg.to_str().unwrap(), "--out", out.to_str().unwrap(), "--seed", "41"])
        .output()
        .unwrap();
    assert!(o.status.success());
    let manifest: serde_json::Value = serde_json::from_slice(&fs::read(out.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["seed"], 41);
    assert_eq!(manifest["task"], "separation");
}

#[test]
fn exit_codes() {
    let tmp = tempfile::tempdir().unwrap();
    let bad = write(tmp.path(), "bad.toml", "task = \"clt\"\nunknown_key = 1\n");
    assert_eq!(bin().args(["validate-config", bad.to_str().unwrap()]).status().unwrap().code(), Some(2));
    let missing = tmp.path().join("missing.toml");
    assert_eq!(bin().args(["run", missing.to_str().unwrap()]).status().unwrap().code(), Some(2));
    let zero = write(
        tmp.path(),
        "zero.toml",
        "task = \"clt\"\n[function]\nkind = \"trig\"\nterms = [{ freq = [0, 0], re = 2.0 }]\n[params]\nn_grid = [10]\nsamples = 10\n",
    );
    let out = tmp.path().join("out");
    let code = bin().args(["run", zero.to_str().unwrap(), "--out", out.to_str().unwrap()]).status().unwrap().code();
    assert_eq!(code, Some(3));
    let good = write(tmp.path(), "good.toml", "task = \"komlos\"\n");
    assert_eq!(bin().args(["validate-config", good.to_str().unwrap()]).status().unwrap().code(), Some(0));
}

#[test]
fn schema_is_printed() {
    let o = bin().arg("print-schema").output().unwrap();
    assert!(o.status.success());
    let text = String::from_utf8(o.stdout).unwrap();
    assert!(text.contains("task = \"clt\"") && text.contains("clt.csv"));
}
