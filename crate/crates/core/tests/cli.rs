mod common;

use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn pfgap(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_pfgap"))
        .args(args)
        .env_remove("PFGAP_THREADS")
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) -> String {
    let out = pfgap(args);
    assert!(
        out.status.success(),
        "pfgap {args:?} failed ({:?}): {}",
        out.status.code(),
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn code(args: &[&str]) -> i32 {
    pfgap(args).status.code().unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn penguins() -> String {
    common::data_dir().join("penguins.csv").to_str().unwrap().to_owned()
}

#[test]
fn train_predict_and_analyses_write_artifacts_and_manifests() {
    let dir = tempfile::tempdir().unwrap();
    let data = penguins();
    let model = dir.path().join("model.pf");
    let stdout = ok(&["train", "--data", &data, "--label", "species", "--trees", "11", "--seed", "3", "--out", s(&model)]);
    assert!(stdout.contains("oob"), "{stdout}");
    let manifest: Value = serde_json::from_str(&std::fs::read_to_string(dir.path().join("model.pf.manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["seed"], 3);
    assert_eq!(manifest["command"][0], "train");
    let hash = manifest["artifacts"][s(&model)].as_str().unwrap();
    assert_eq!(hash, pfgap::cli::sha256_file(&model).unwrap());
    assert!(manifest["inputs"][data.as_str()].is_string());

    let preds = dir.path().join("pred.csv");
    ok(&["predict", "--model", s(&model), "--data", &data, "--label", "species", "--out", s(&preds)]);
    let text = std::fs::read_to_string(&preds).unwrap();
    let rows: Vec<&str> = text.lines().collect();
    assert_eq!(rows[0], "id,label");
    assert_eq!(rows.len(), 334);

    let probs = dir.path().join("prob.csv");
    ok(&["predict", "--model", s(&model), "--data", &data, "--label", "species", "--probabilities", "--out", s(&probs)]);
    let table = pfgap::meta::PredictionTable::load_csv(&probs).unwrap();
    assert_eq!(table.width(), 3);

    let prox = dir.path().join("prox.txt");
    ok(&["prox", "--model", s(&model), "--out", s(&prox)]);
    let mut sums = std::collections::BTreeMap::<String, f64>::new();
    for line in std::fs::read_to_string(&prox).unwrap().lines().filter(|l| !l.starts_with('#')) {
        let f: Vec<&str> = line.split_whitespace().collect();
        *sums.entry(f[0].to_owned()).or_default() += f[2].parse::<f64>().unwrap();
    }
    assert!(!sums.is_empty());
    assert!(sums.values().all(|v| (v - 1.0).abs() < 1e-9));

    let outliers = dir.path().join("out.csv");
    ok(&["outliers", "--model", s(&model), "--out", s(&outliers)]);
    let o = std::fs::read_to_string(&outliers).unwrap();
    assert!(o.starts_with("id,class,raw,normalized,flag"), "{}", &o[..60]);
    assert_eq!(o.lines().filter(|l| l.ends_with(",1") || l.ends_with(",true")).count(), 9);

    let emb = dir.path().join("emb.csv");
    ok(&["mds", "--model", s(&model), "--dims", "2", "--out", s(&emb)]);
    let e = std::fs::read_to_string(&emb).unwrap();
    assert!(e.lines().next().unwrap().starts_with("id,x1,x2"));
}

#[test]
fn replaying_a_manifest_reproduces_identical_bytes() {
    let dir = tempfile::tempdir().unwrap();
    let data = penguins();
    let imputed = dir.path().join("imputed.csv");
    ok(&[
        "impute", "--data", &data, "--label", "species", "--mcar", "0.2", "--iterations", "2", "--trees", "5", "--seed", "1",
        "--out", s(&imputed),
    ]);
    let before = std::fs::read(&imputed).unwrap();
    let report: Value = serde_json::from_str(&std::fs::read_to_string(dir.path().join("imputed.csv.report.json")).unwrap()).unwrap();
    assert!(report["selected"].as_u64().unwrap() < 2);

    let manifest = dir.path().join("imputed.csv.manifest.json");
    std::fs::remove_file(&imputed).unwrap();
    let out = ok(&["replay", "--manifest", s(&manifest), "--verify"]);
    assert!(out.contains("verified"), "{out}");
    assert_eq!(std::fs::read(&imputed).unwrap(), before);

    // a tampered artifact hash is detected
    let mut m: Value = serde_json::from_str(&std::fs::read_to_string(&manifest).unwrap()).unwrap();
    m["artifacts"][s(&imputed)] = Value::String("00".into());
    let tampered = dir.path().join("tampered.json");
    std::fs::write(&tampered, serde_json::to_string(&m).unwrap()).unwrap();
    assert_ne!(code(&["replay", "--manifest", s(&tampered), "--verify"]), 0);
}

#[test]
fn thread_count_does_not_change_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let data = penguins();
    let mut hashes = Vec::new();
    for threads in ["1", "3"] {
        let model = dir.path().join(format!("m{threads}.pf"));
        ok(&["--threads", threads, "train", "--data", &data, "--label", "species", "--trees", "20", "--out", s(&model)]);
        hashes.push(pfgap::cli::sha256_file(&model).unwrap());
    }
    assert_eq!(hashes[0], hashes[1]);
}

#[test]
fn exit_codes_follow_the_error_class() {
    let dir = tempfile::tempdir().unwrap();
    let data = penguins();
    let model = dir.path().join("m.pf");

    // usage errors
    assert_eq!(code(&["train", "--data", &data, "--out", s(&model)]), 2);
    assert_eq!(code(&["train", "--data", &data, "--label", "species", "--dist", "nope", "--out", s(&model)]), 2);
    assert_eq!(code(&["train", "--data", &data, "--label", "species", "--trees", "0", "--out", s(&model)]), 2);
    assert_eq!(code(&["train", "--data", &data, "--label", "species", "--dist", "euclidean:foo=1", "--out", s(&model)]), 2);
    assert_eq!(code(&["train", "--data", &data, "--label", "species", "--dist", "dtw_d:w=-1", "--out", s(&model)]), 2);
    assert_eq!(code(&["no-such-command"]), 2);

    // data errors
    assert_eq!(code(&["train", "--data", "/nonexistent.csv", "--label", "y", "--out", s(&model)]), 3);
    let bad = dir.path().join("bad.csv");
    std::fs::write(&bad, "a,b,y\n1,2,x\n3,y\n").unwrap();
    assert_eq!(code(&["train", "--data", s(&bad), "--label", "y", "--out", s(&model)]), 3);
    assert_eq!(code(&["bench", "proteins", "--data-dir", s(dir.path()), "--out", s(&dir.path().join("b"))]), 3);

    ok(&["train", "--data", &data, "--label", "species", "--trees", "3", "--out", s(&model)]);
    let bytes = std::fs::read(&model).unwrap();
    let cut = dir.path().join("cut.pf");
    std::fs::write(&cut, &bytes[..bytes.len() / 2]).unwrap();
    let out = pfgap(&["predict", "--model", s(&cut), "--data", &data, "--label", "species", "--out", s(&dir.path().join("p.csv"))]);
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&out.stderr).contains("checksum"));

    // graph payloads reject vector distances
    let graphs = dir.path().join("g.jsonl");
    std::fs::write(&graphs, "{\"id\":\"a\",\"label\":\"x\",\"nodes\":[\"c\"],\"edges\":[]}\n{\"id\":\"b\",\"label\":\"y\",\"nodes\":[\"c\",\"d\"],\"edges\":[[0,1]]}\n").unwrap();
    assert_eq!(code(&["train", "--data", s(&graphs), "--dist", "euclidean", "--out", s(&model)]), 3);
    ok(&["train", "--data", s(&graphs), "--dist", "wl:h=1", "--out", s(&model)]);
}

#[test]
fn help_lists_every_subcommand() {
    let help = ok(&["--help"]);
    for sub in ["train", "predict", "prox", "outliers", "mds", "impute", "bench", "replay"] {
        assert!(help.contains(sub), "missing {sub} in help");
    }
}
