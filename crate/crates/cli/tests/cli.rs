#[path = "../../core/tests/common/reference.rs"]
mod reference;
mod support;

use std::fs;
use std::path::Path;

use loads_core::data::{load_dataset, ClassSchema, LabelSet};
use loads_core::nanoformer::{Tokenizer, WeightContainer};
use loads_core::prompting::{render, PromptTemplate};
use reference::{naive_kurtosis, RefModel};
use support::{fixture, head_dataset, json, ok, path_str, run};

fn init_model(dir: &Path, seed: &str) -> String {
    let out = dir.join(format!("model-{seed}"));
    ok(&[
        "model", "init-random", "--vocab", &fixture("vocab.txt"), "--seed", seed, "--d-model", "16", "--heads", "2",
        "--d-ff", "32", "--out-dir", &path_str(&out),
    ])
    .unwrap();
    path_str(&out.join("model.nfw"))
}

#[test]
fn pipeline_picks_the_recomputed_argmin() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let weights = init_model(d, "4");
    let pool_dir = d.join("pool");
    ok(&[
        "pool", "build", "--schema", &fixture("scd/schema.json"), "--lexicon", &fixture("scd/lexicon.json"),
        "--out-dir", &path_str(&pool_dir),
    ])
    .unwrap();
    let pool_json = json(pool_dir.join("pool.json"));
    let pool: Vec<LabelSet> = serde_json::from_value(pool_json["sets"].clone()).unwrap();
    let data = head_dataset(&fixture("scd/validation.jsonl"), 10, d, "data.jsonl");
    let sel = d.join("sel");
    ok(&[
        "select", "loads", "--schema", &fixture("scd/schema.json"), "--dataset", &data, "--vocab",
        &fixture("vocab.txt"), "--weights", &weights, "--pool", &path_str(&pool_dir.join("pool.json")),
        "--sample-size", "10", "--workers", "4", "--out-dir", &path_str(&sel),
    ])
    .unwrap();

    let schema = ClassSchema::load(fixture("scd/schema.json")).unwrap();
    let examples = load_dataset(&data, &schema).unwrap();
    let tok = Tokenizer::load(fixture("vocab.txt")).unwrap();
    let oracle = RefModel::new(&WeightContainer::load(&weights).unwrap());
    let t = PromptTemplate::default_stance();
    let means: Vec<f64> = pool
        .iter()
        .map(|set| {
            examples
                .iter()
                .map(|e| {
                    let run = oracle.run(&tok.encode(&render(&t, &schema, set, e).unwrap()));
                    naive_kurtosis(&run.layers.last().unwrap().activation)
                })
                .sum::<f64>()
                / examples.len() as f64
        })
        .collect();
    let best = (0..means.len()).min_by(|&a, &b| means[a].partial_cmp(&means[b]).unwrap()).unwrap();
    let chosen = &json(sel.join("selection.json"))["result"]["chosen"]["words"];
    assert_eq!(chosen, &serde_json::json!(pool[best].words));
}

#[test]
fn repeated_selection_is_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let weights = init_model(d, "5");
    let data = head_dataset(&fixture("scd/validation.jsonl"), 30, d, "data.jsonl");
    let pool = d.join("pool.json");
    fs::write(
        &pool,
        r#"[{"words":["for","against"],"role_of":["for","against"]},
            {"words":["support","oppose"],"role_of":["for","against"]}]"#,
    )
    .unwrap();
    let mut outs = Vec::new();
    for name in ["a", "b"] {
        let out = d.join(name);
        ok(&[
            "select", "loads", "--schema", &fixture("scd/schema.json"), "--dataset", &data, "--vocab",
            &fixture("vocab.txt"), "--weights", &weights, "--pool", &path_str(&pool), "--sample-size", "12", "--seed",
            "9", "--out-dir", &path_str(&out),
        ])
        .unwrap();
        outs.push(support::snapshot(&out));
    }
    assert_eq!(outs[0], outs[1]);
    let sel = json(d.join("a/selection.json"));
    assert_eq!(sel["sample"]["size"], 12);
    assert_eq!(sel["provenance"]["tool_version"], env!("CARGO_PKG_VERSION"));
    let hash = sel["provenance"]["config_hash"].as_str().unwrap().to_owned();
    assert_eq!(hash.len(), 64);
    assert_eq!(json(d.join("a/kurtosis.json"))["provenance"]["config_hash"], hash.as_str());
}

#[test]
fn provenance_reaches_csv_and_weights() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let weights = init_model(d, "6");
    let container = WeightContainer::load(&weights).unwrap();
    let model_json = json(d.join("model-6/model.json"));
    assert_eq!(
        container.metadata.get("config_hash").map(String::as_str),
        model_json["provenance"]["config_hash"].as_str()
    );
    let data = head_dataset(&fixture("scd/validation.jsonl"), 4, d, "data.jsonl");
    let out = d.join("eval");
    ok(&[
        "eval", "run", "--schema", &fixture("scd/schema.json"), "--dataset", &data, "--vocab", &fixture("vocab.txt"),
        "--weights", &weights, "--out-dir", &path_str(&out),
    ])
    .unwrap();
    let csv = fs::read_to_string(out.join("predictions.csv")).unwrap();
    let hash = json(out.join("eval.json"))["provenance"]["config_hash"].as_str().unwrap().to_owned();
    let mut lines = csv.lines();
    assert_eq!(
        lines.next().unwrap(),
        format!("# loads {} config {hash}", env!("CARGO_PKG_VERSION"))
    );
    assert_eq!(lines.next().unwrap(), "id,gold,predicted,generated");
    assert_eq!(lines.count(), 4);
    let cfg = json(out.join("run_config.json"));
    assert_eq!(cfg["run_config"]["command"], "eval run");
    assert_eq!(cfg["run_config"]["inputs"].as_object().unwrap().len(), 4);
}

#[test]
fn order_sweep_on_binary_task_has_two_rows() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let weights = init_model(d, "7");
    let data = head_dataset(&fixture("scd/validation.jsonl"), 5, d, "data.jsonl");
    let out = d.join("sweep");
    ok(&[
        "sweep", "order", "--schema", &fixture("scd/schema.json"), "--dataset", &data, "--vocab",
        &fixture("vocab.txt"), "--weights", &weights, "--out-dir", &path_str(&out),
    ])
    .unwrap();
    let table = json(out.join("sweep.json"));
    assert_eq!(table["variants"].as_array().unwrap().len(), 2);
    let csv = fs::read_to_string(out.join("sweep.csv")).unwrap();
    let rows: Vec<&str> = csv.lines().skip(2).collect();
    assert_eq!(rows.len(), 2 + 4);
    assert!(rows[0].starts_with("for|against,"));
    assert!(rows[1].starts_with("against|for,"));
}

#[test]
fn exit_codes_follow_the_documented_table() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let out = path_str(&d.join("o"));
    let code = |args: &[&str]| run(args).status.code().unwrap();

    assert_eq!(code(&["pool", "build", "--bogus"]), 2);
    assert_eq!(code(&["select", "loads", "--schema", "x"]), 2);
    assert_eq!(
        code(&[
            "eval", "run", "--schema", &fixture("scd/schema.json"), "--dataset", &fixture("scd/validation.jsonl"),
            "--out-dir", &out,
        ]),
        2
    );
    assert_eq!(
        code(&["pool", "build", "--schema", &path_str(&d.join("missing.json")), "--lexicon", &fixture("scd/lexicon.json"), "--out-dir", &out]),
        3
    );
    let bad = d.join("bad.json");
    fs::write(&bad, "{ not json").unwrap();
    assert_eq!(
        code(&["pool", "build", "--schema", &path_str(&bad), "--lexicon", &fixture("scd/lexicon.json"), "--out-dir", &out]),
        4
    );
    let weights = init_model(d, "8");
    let nano = [
        "--schema", &fixture("scd/schema.json"), "--dataset", &fixture("scd/validation.jsonl"), "--vocab",
        &fixture("vocab.txt"), "--weights", &weights, "--out-dir", &out,
    ];
    let mut args = vec!["eval", "run", "--words", "a,b,c"];
    args.extend(nano);
    assert_eq!(code(&args), 5);
    let mut args = vec!["eval", "run", "--selection", "/nonexistent/selection.json"];
    args.extend(nano);
    assert_eq!(code(&args), 3);
    let tiny = d.join("tiny");
    ok(&[
        "model", "init-random", "--vocab", &fixture("vocab.txt"), "--d-model", "8", "--heads", "2", "--d-ff", "8",
        "--max-context", "16", "--out-dir", &path_str(&tiny),
    ])
    .unwrap();
    let tiny_weights = path_str(&tiny.join("model.nfw"));
    assert_eq!(
        code(&[
            "eval", "run", "--schema", &fixture("scd/schema.json"), "--dataset", &fixture("scd/validation.jsonl"),
            "--vocab", &fixture("vocab.txt"), "--weights", &tiny_weights, "--out-dir", &out,
        ]),
        6
    );
    let sweep = d.join("s.json");
    fs::write(&sweep, r#"{"kind":"LEXICAL","metric":"macro_f1","variants":[],"aggregate":{"max":0,"min":0,"avg":0,"var":0}}"#).unwrap();
    let kurt = d.join("k.json");
    fs::write(&kurt, r#"{"sets":[{"words":["a","b"],"mean_kurtosis":3.0,"rank":0,"per_sample":[]}],"ranking":[0]}"#).unwrap();
    assert_eq!(
        code(&["analyze", "correlate", "--sweep", &path_str(&sweep), "--kurtosis", &path_str(&kurt), "--out-dir", &out]),
        5
    );
}

#[test]
fn help_lists_exit_codes() {
    for args in [vec!["--help"], vec!["select", "--help"], vec!["sweep", "--help"]] {
        let out = run(&args);
        assert!(out.status.success());
        let text = String::from_utf8(out.stdout).unwrap();
        assert!(text.contains("Exit codes:"), "{args:?}");
        assert!(text.contains("6  backend failure"), "{args:?}");
    }
}
