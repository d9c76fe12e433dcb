use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;
use sha2::{Digest, Sha256};
use tempfile::TempDir;

fn cli(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_gaze-lexicon"))
        .args(args)
        .current_dir(dir)
        .output()
        .expect("binary runs")
}

fn ok(dir: &Path, args: &[&str]) {
    let out = cli(dir, args);
    assert!(
        out.status.success(),
        "{args:?}: {}",
        String::from_utf8_lossy(&out.stderr)
    );
}

fn json(path: impl AsRef<Path>) -> Value {
    serde_json::from_slice(&std::fs::read(path).expect("file exists")).expect("valid json")
}

fn with_data() -> TempDir {
    let dir = tempfile::tempdir().unwrap();
    ok(
        dir.path(),
        &[
            "datagen",
            "--out-dir",
            "d",
            "--seed",
            "3",
            "--users",
            "4",
            "--instances-per-user",
            "40",
        ],
    );
    dir
}

const SEM: [&str; 4] = ["--domain", "d/domain.json", "--taxonomy", "d/taxonomy.json"];

#[test]
fn usage_errors_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    for args in [
        &["frobnicate"][..],
        &["train", "--bogus"],
        &["train", "--model", "model3", "--corpus", "c", "--out", "o"],
        &["simulate", "--mode", "sometimes"],
    ] {
        assert_eq!(cli(dir.path(), args).status.code(), Some(2), "{args:?}");
    }
}

#[test]
fn module_errors_exit_with_one() {
    let dir = tempfile::tempdir().unwrap();
    let out = cli(
        dir.path(),
        &[
            "train",
            "--model",
            "model1",
            "--corpus",
            "missing.jsonl",
            "--out",
            "a.tsv",
        ],
    );
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("missing.jsonl"));
    assert!(!dir.path().join("a.tsv").exists());

    std::fs::write(dir.path().join("bad.jsonl"), "{not json}\n").unwrap();
    let out = cli(
        dir.path(),
        &["train", "--model", "model1", "--corpus", "bad.jsonl", "--out", "a.tsv"],
    );
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn semantic_models_need_a_domain() {
    let dir = with_data();
    let out = cli(
        dir.path(),
        &[
            "train",
            "--model",
            "model2s",
            "--corpus",
            "d/corpus.jsonl",
            "--out",
            "a.tsv",
        ],
    );
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn datagen_writes_files_and_manifests() {
    let dir = with_data();
    for f in ["corpus.jsonl", "gold.json", "domain.json", "taxonomy.json"] {
        let p = dir.path().join("d").join(f);
        assert!(p.exists(), "{f}");
        let m = json(format!("{}.manifest.json", p.display()));
        assert_eq!(m["subcommand"], "datagen");
        assert_eq!(m["seed"], 3);
        assert_eq!(m["outputs"].as_array().unwrap().len(), 4);
    }
    let lines = std::fs::read_to_string(dir.path().join("d/corpus.jsonl")).unwrap();
    assert_eq!(lines.lines().count(), 160);
}

#[test]
fn flags_override_config_file() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(
        dir.path().join("gen.json"),
        r#"{"seed": 5, "users": 2, "instances_per_user": 15, "noise_word_rate": 0.1}"#,
    )
    .unwrap();
    ok(
        dir.path(),
        &["--config", "gen.json", "datagen", "--out-dir", "d", "--seed", "9"],
    );
    let m = json(dir.path().join("d/corpus.jsonl.manifest.json"));
    assert_eq!(m["config"]["seed"], 9);
    assert_eq!(m["config"]["users"], 2);
    assert_eq!(m["config"]["noise_word_rate"], 0.1);
    assert_eq!(m["config"]["coupled_fraction"], 0.674);
    assert!(m["inputs"]["gen.json"].is_string());

    std::fs::write(dir.path().join("bad.json"), r#"{"sead": 1}"#).unwrap();
    let out = cli(dir.path(), &["--config", "bad.json", "datagen", "--out-dir", "e"]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn train_records_input_digests() {
    let dir = with_data();
    let mut args = vec![
        "train",
        "--model",
        "model2t-r",
        "--corpus",
        "d/corpus.jsonl",
        "--out",
        "a.tsv",
    ];
    args.extend(SEM);
    ok(dir.path(), &args);
    let m = json(dir.path().join("a.tsv.manifest.json"));
    let corpus = std::fs::read(dir.path().join("d/corpus.jsonl")).unwrap();
    assert_eq!(m["inputs"]["d/corpus.jsonl"], hex::encode(Sha256::digest(&corpus)));
    assert_eq!(m["inputs"].as_object().unwrap().len(), 3);
    assert_eq!(m["config"]["model"], "model2t-r");
    assert!(m["details"]["alpha"].is_number());
    let table = std::fs::read_to_string(dir.path().join("a.tsv")).unwrap();
    assert!(table.lines().count() > 10);
}

#[test]
fn eval_rescore_and_ground() {
    let dir = with_data();
    ok(
        dir.path(),
        &[
            "train",
            "--model",
            "model2t",
            "--corpus",
            "d/corpus.jsonl",
            "--out",
            "a.tsv",
        ],
    );
    let mut rescore = vec!["rescore", "--assoc", "a.tsv", "--out", "r.tsv"];
    rescore.extend(SEM);
    ok(dir.path(), &rescore);
    for (metric, key) in [("map", "map"), ("pr", "precision"), ("curve", "pr_curve")] {
        let args = [
            "eval",
            "--assoc",
            "r.tsv",
            "--gold",
            "d/gold.json",
            "--domain",
            "d/domain.json",
            "--metric",
            metric,
            "--out",
            "m.json",
        ];
        ok(dir.path(), &args);
        let m = json(dir.path().join("m.json"));
        assert!(!m[key].is_null(), "{metric}");
        if metric == "curve" {
            assert_eq!(m["pr_curve"].as_array().unwrap().len(), 11);
            assert!(m["map"].is_null());
        }
    }
    let mut ground = vec!["ground", "--assoc", "r.tsv", "--n", "3", "--out", "g.json"];
    ground.extend(SEM);
    ok(dir.path(), &ground);
    let g = json(dir.path().join("g.json"));
    let domain = json(dir.path().join("d/domain.json"));
    for (entity, words) in g.as_object().unwrap() {
        assert!(words.as_array().unwrap().len() <= 3);
        let props: Vec<&Value> = domain[entity]["properties"]
            .as_array()
            .unwrap()
            .iter()
            .map(|p| &p["name"])
            .collect();
        for w in words.as_array().unwrap() {
            assert!(props.contains(&&w["property"]), "{entity}: {w}");
        }
    }
}

#[test]
fn coupling_train_predict_and_cv() {
    let dir = with_data();
    ok(
        dir.path(),
        &["couple", "train", "--corpus", "d/corpus.jsonl", "--out", "c.json"],
    );
    ok(
        dir.path(),
        &[
            "couple",
            "predict",
            "--model",
            "c.json",
            "--corpus",
            "d/corpus.jsonl",
            "--out",
            "p.jsonl",
        ],
    );
    let preds = std::fs::read_to_string(dir.path().join("p.jsonl")).unwrap();
    assert_eq!(preds.lines().count(), 160);
    ok(
        dir.path(),
        &[
            "train",
            "--model",
            "model2t",
            "--corpus",
            "d/corpus.jsonl",
            "--coupling-model",
            "c.json",
            "--out",
            "a.tsv",
        ],
    );
    ok(
        dir.path(),
        &[
            "train",
            "--model",
            "model2t",
            "--corpus",
            "d/corpus.jsonl",
            "--coupled-only",
            "--out",
            "b.tsv",
        ],
    );

    ok(
        dir.path(),
        &[
            "couple",
            "cv",
            "--corpus",
            "d/corpus.jsonl",
            "--k",
            "5",
            "--out",
            "cv.tsv",
        ],
    );
    let cv = std::fs::read_to_string(dir.path().join("cv.tsv")).unwrap();
    let rows: Vec<&str> = cv.lines().collect();
    assert_eq!(rows.len(), 10);
    assert!(rows[1].starts_with("Null\t"));
    assert!(rows[1].ends_with("\t1.0000"));

    let out = cli(
        dir.path(),
        &[
            "couple",
            "cv",
            "--corpus",
            "d/corpus.jsonl",
            "--features",
            "X",
            "--out",
            "cv.tsv",
        ],
    );
    assert_ne!(out.status.code(), Some(0));
}

#[test]
fn simulate_writes_json_and_curve() {
    let dir = with_data();
    let mut args = vec![
        "simulate",
        "--mode",
        "with_training",
        "--training-users",
        "2",
        "--reps",
        "2",
        "--corpus",
        "d/corpus.jsonl",
        "--gold",
        "d/gold.json",
        "--out",
        "s.json",
    ];
    args.extend(SEM);
    ok(dir.path(), &args);
    let s = json(dir.path().join("s.json"));
    assert_eq!(s["mean_cir"].as_array().unwrap().len(), 2);
    assert_eq!(s["traces"].as_array().unwrap().len(), 2);
    let tsv = std::fs::read_to_string(dir.path().join("s.tsv")).unwrap();
    assert_eq!(tsv.lines().count(), 3);
    assert!(dir.path().join("s.tsv.manifest.json").exists());
    let m = json(dir.path().join("s.json.manifest.json"));
    assert_eq!(m["config"]["training_users"], 2);
    assert_eq!(m["config"]["mode"], "with_training");

    let out = cli(dir.path(), &["simulate", "--corpus", "d/corpus.jsonl"]);
    assert_eq!(out.status.code(), Some(2));
}
