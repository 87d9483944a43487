use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

const SMALL: &str = r#"{
  "corpus": {"counts": {"H2H_APSTA": 70, "IOT_APSTA": 65, "IOT_ADHOC": 65}},
  "bench": {"methods": ["LogReg", "KNN"]},
  "llm": {"subset_fraction": 1.0}
}"#;

fn wifault(stage: &str, config: &Path, out: &Path, extra: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_wifault"))
        .arg(stage)
        .arg("--config")
        .arg(config)
        .arg("--out")
        .arg(out)
        .args(extra)
        .env_remove("RUST_BACKTRACE")
        .env_remove("RUST_LIB_BACKTRACE")
        .output()
        .expect("binary runs")
}

fn ok(o: Output) -> String {
    assert!(
        o.status.success(),
        "stage failed:\n{}",
        String::from_utf8_lossy(&o.stderr)
    );
    String::from_utf8(o.stdout).unwrap()
}

fn setup(dir: &Path) -> (PathBuf, PathBuf) {
    let cfg = dir.join("cfg.json");
    fs::write(&cfg, SMALL).unwrap();
    (cfg, dir.join("run"))
}

fn jsonl(path: &Path) -> Vec<Value> {
    fs::read_to_string(path)
        .unwrap()
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect()
}

#[test]
fn full_pipeline_with_mock_model() {
    let tmp = tempfile::tempdir().unwrap();
    let (cfg, out) = setup(tmp.path());
    for stage in [
        "generate",
        "split",
        "preprocess",
        "bench",
        "llm-extract",
        "reason-eval",
        "report",
    ] {
        ok(wifault(stage, &cfg, &out, &[]));
    }

    let manifest: Value =
        serde_json::from_str(&fs::read_to_string(out.join("corpus/manifest.json")).unwrap())
            .unwrap();
    assert_eq!(manifest["total"], 200);
    let split: Value =
        serde_json::from_str(&fs::read_to_string(out.join("corpus/split.json")).unwrap()).unwrap();
    assert_eq!(
        split["train"].as_array().unwrap().len() + split["test"].as_array().unwrap().len(),
        200
    );

    let results = jsonl(&out.join("results/results.jsonl"));
    // 2 methods x (3 single + 4 fusion sets) x 3 tasks.
    assert_eq!(results.len(), 42);
    let seqs = jsonl(&out.join("features/sequences.jsonl"));
    let ids: std::collections::BTreeSet<_> = seqs
        .iter()
        .map(|s| s["id"].as_str().unwrap().to_string())
        .collect();
    assert_eq!(ids.len(), 200);

    let audit = jsonl(&out.join("llm/audit.jsonl"));
    assert!(!audit.is_empty());
    assert!(audit
        .iter()
        .all(|e| e["status"] != "transport_error" && e.get("transport").is_none()));

    let report = fs::read_to_string(out.join("report.md")).unwrap();
    assert!(report.contains("| LogReg |"));
    assert!(report.contains("LLM-distill-DecisionTree"));
    assert!(report.contains("## Reasoning consistency"));
}

#[test]
fn stages_refuse_to_run_out_of_order() {
    let tmp = tempfile::tempdir().unwrap();
    let (cfg, out) = setup(tmp.path());
    let o = wifault("bench", &cfg, &out, &[]);
    assert!(!o.status.success());
    assert!(String::from_utf8_lossy(&o.stderr).contains("run `generate` first"));

    ok(wifault("generate", &cfg, &out, &[]));
    ok(wifault("split", &cfg, &out, &[]));
    let o = wifault("bench", &cfg, &out, &[]);
    assert!(!o.status.success());
    assert!(String::from_utf8_lossy(&o.stderr).contains("run `preprocess` first"));
    let o = wifault("reason-eval", &cfg, &out, &[]);
    assert!(String::from_utf8_lossy(&o.stderr).contains("run `llm-extract` first"));
}

#[test]
fn changed_config_is_refused_without_force() {
    let tmp = tempfile::tempdir().unwrap();
    let (cfg, out) = setup(tmp.path());
    ok(wifault("generate", &cfg, &out, &[]));
    let o = wifault("split", &cfg, &out, &["--seed", "99"]);
    assert!(!o.status.success());
    assert!(String::from_utf8_lossy(&o.stderr).contains("config"));
    ok(wifault("split", &cfg, &out, &["--seed", "99", "--force"]));
}

fn tree_bytes(root: &Path) -> Vec<(PathBuf, Vec<u8>)> {
    let mut out = Vec::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.push((
                    p.strip_prefix(root).unwrap().to_path_buf(),
                    fs::read(&p).unwrap(),
                ));
            }
        }
    }
    out.sort();
    out
}

#[test]
fn generation_is_byte_identical_across_runs() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("cfg.json");
    fs::write(
        &cfg,
        r#"{"corpus": {"counts": {"H2H_APSTA": 12, "IOT_APSTA": 12, "IOT_ADHOC": 12}}}"#,
    )
    .unwrap();
    let a = tmp.path().join("a");
    let b = tmp.path().join("b");
    for out in [&a, &b] {
        ok(wifault("generate", &cfg, out, &[]));
        ok(wifault("split", &cfg, out, &[]));
    }
    let (ta, tb) = (tree_bytes(&a), tree_bytes(&b));
    assert_eq!(ta.len(), tb.len());
    assert!(ta == tb, "corpora differ");

    let c = tmp.path().join("c");
    ok(wifault("generate", &cfg, &c, &["--seed", "5"]));
    let la = fs::read(a.join("corpus/samples/s00003/flow.jsonl")).unwrap();
    let lc = fs::read(c.join("corpus/samples/s00003/flow.jsonl")).unwrap();
    assert_ne!(la, lc);
}

fn record(method: &str, set: &str, task: &str, f1: f64) -> String {
    serde_json::json!({
        "method": method, "modalities": set, "task": task,
        "accuracy": f1, "precision": f1, "recall": f1, "f1": f1,
    })
    .to_string()
}

#[test]
fn report_merges_external_results_by_method() {
    let tmp = tempfile::tempdir().unwrap();
    let (cfg, out) = setup(tmp.path());
    let results = out.join("results");
    fs::create_dir_all(&results).unwrap();
    let methods = ["LogReg", "KNN", "DecisionTree", "MLP"];
    let mut lines = Vec::new();
    for (i, m) in methods.iter().enumerate() {
        for set in ["flow", "packet", "warning"] {
            for task in ["Detection", "Classification", "Localization"] {
                lines.push(record(m, set, task, 0.5 + 0.1 * i as f64));
            }
        }
    }
    assert_eq!(lines.len(), 36);
    fs::write(results.join("results.jsonl"), lines.join("\n") + "\n").unwrap();
    let ext = [
        record("LSTM", "flow", "Detection", 0.9),
        record("LogReg", "flow", "Detection", 0.1),
    ];
    fs::write(results.join("dl.jsonl"), ext.join("\n") + "\n").unwrap();

    ok(wifault("report", &cfg, &out, &[]));
    let report = fs::read_to_string(out.join("report.md")).unwrap();
    let triplets = report.matches(" / ").count();
    // 12 full triplets from the baselines plus one partial LSTM row.
    assert_eq!(triplets, (12 + 3) * 2);
    assert!(
        report.contains("| MLP | 0.80 / 0.80 / 0.80 | 0.80 / 0.80 / 0.80 | 0.80 / 0.80 / 0.80 |")
    );
    assert!(report.contains("| LSTM | 0.90 / – / – | – / – / – | – / – / – |"));
    assert!(report.contains("Duplicate LogReg flow Detection"));
    assert!(report.contains("| LogReg | 0.50 /"));

    fs::write(
        results.join("bad.jsonl"),
        record("X", "flow", "Detection", 1.5) + "\n",
    )
    .unwrap();
    let o = wifault("report", &cfg, &out, &[]);
    assert!(!o.status.success());
}
