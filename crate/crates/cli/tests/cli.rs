use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use chrono::{TimeZone, Utc};
use tempfile::TempDir;

use vte_core::corpus::{compute_stats, load_split, CorpusSplit, Instance, Label, SplitName};
use vte_core::qc::{write_records, AnnotationRecord};

fn vte(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_vte")).args(args).output().expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("process exited normally")
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn record(pair: &str, worker: &str, label: Label) -> AnnotationRecord {
    AnnotationRecord {
        pair_id: pair.into(),
        worker_id: worker.into(),
        label,
        highlighted: BTreeSet::from([1]),
        explanation: format!("{worker} thinks {label}"),
        timestamp: Utc.with_ymd_and_hms(2024, 5, 1, 12, 0, 0).unwrap(),
    }
}

/// Four re-annotated neutral pairs (two entailment majorities, one
/// contradiction, one ambiguous) plus an untouched entailment pair.
fn aggregation_fixture(dir: &Path) -> (PathBuf, PathBuf) {
    use Label::*;
    let mut inst: Vec<Instance> = (0..4)
        .map(|i| Instance::new(format!("n{i}"), format!("img{i}"), "a dog runs in the park", Neutral))
        .collect();
    inst.push(Instance::new("e0", "img9", "a cat sleeps", Entailment));
    let base = dir.join("base.jsonl");
    CorpusSplit::new(SplitName::Validation, inst).unwrap().save(&base).unwrap();

    let votes = [
        ("n0", [Entailment, Entailment, Neutral]),
        ("n1", [Entailment, Entailment, Entailment]),
        ("n2", [Contradiction, Neutral, Contradiction]),
        ("n3", [Entailment, Neutral, Contradiction]),
    ];
    let records: Vec<AnnotationRecord> = votes
        .iter()
        .flat_map(|(pair, labels)| labels.iter().enumerate().map(move |(w, &l)| record(pair, &format!("w{w}"), l)))
        .collect();
    let path = dir.join("records.jsonl");
    write_records(fs::File::create(&path).unwrap(), &records).unwrap();
    (base, path)
}

#[test]
fn aggregate_merges_majorities_and_drops_ambiguous_pairs() {
    let dir = TempDir::new().unwrap();
    let (base, records) = aggregation_fixture(dir.path());
    let out = dir.path().join("merged.jsonl");
    let amb = dir.path().join("ambiguous.txt");
    let report = dir.path().join("report.json");
    let run = vte(&[
        "aggregate", "--records", p(&records), "--base", p(&base), "--out", p(&out),
        "--ambiguous-out", p(&amb), "--report", p(&report),
    ]);
    assert_eq!(code(&run), 0, "{}", String::from_utf8_lossy(&run.stderr));

    let merged = load_split(&out, SplitName::Validation).unwrap();
    let ids: Vec<&str> = merged.instances().iter().map(|i| i.pair_id.as_str()).collect();
    assert_eq!(ids, ["n0", "n1", "n2", "e0"]);
    assert_eq!(merged.get("n0").unwrap().label, Label::Entailment);
    assert_eq!(merged.get("n2").unwrap().label, Label::Contradiction);
    assert_eq!(fs::read_to_string(&amb).unwrap(), "n3\n");

    let json: serde_json::Value = serde_json::from_str(&fs::read_to_string(&report).unwrap()).unwrap();
    assert_eq!(json["redistribution"]["n_outcomes"], 4);
    assert_eq!(json["redistribution"]["n_ambiguous"], 1);
    assert_eq!(json["workers"]["n_workers"], 3);
}

#[test]
fn out_of_range_alpha_is_a_usage_error() {
    let run = vte(&["train", "--model", "pae", "--alpha", "1.5", "--train", "t", "--validation", "v", "--out", "o"]);
    assert_eq!(code(&run), 2);
    assert!(String::from_utf8_lossy(&run.stderr).contains("outside [0, 1]"));
}

#[test]
fn missing_inputs_exit_with_one() {
    let dir = TempDir::new().unwrap();
    let run = vte(&["stats", "--split", p(&dir.path().join("absent.jsonl"))]);
    assert_eq!(code(&run), 1);
    assert!(!run.stderr.is_empty());
}

#[test]
fn stats_json_matches_the_library() {
    let dir = TempDir::new().unwrap();
    let (base, _) = aggregation_fixture(dir.path());
    let json = dir.path().join("stats.json");
    let run = vte(&["stats", "--split", p(&base), "--json", p(&json)]);
    assert_eq!(code(&run), 0);
    let expected = compute_stats(&load_split(&base, SplitName::Validation).unwrap());
    let got: serde_json::Value = serde_json::from_str(&fs::read_to_string(&json).unwrap()).unwrap();
    assert_eq!(got, serde_json::to_value(&expected).unwrap());
    let table = String::from_utf8(run.stdout).unwrap();
    assert!(table.contains("#Neutral") && table.contains(&expected.n_instances.to_string()));
}

fn synthetic(dir: &Path, extra: &[&str]) -> Output {
    let mut args = vec!["build-corpus", "--synthetic", "--out-dir", p(dir), "--n-train", "12", "--n-validation", "6", "--n-test", "6"];
    args.extend_from_slice(extra);
    vte(&args)
}

fn tree_bytes(dir: &Path) -> Vec<(PathBuf, Vec<u8>)> {
    let mut out = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in fs::read_dir(&d).unwrap() {
            let path = e.unwrap().path();
            if path.is_dir() {
                stack.push(path);
            } else {
                out.push((path.strip_prefix(dir).unwrap().to_path_buf(), fs::read(&path).unwrap()));
            }
        }
    }
    out.sort();
    out
}

#[test]
fn config_values_sit_between_defaults_and_flags() {
    let dir = TempDir::new().unwrap();
    let conf = dir.path().join("run.conf");
    fs::write(&conf, "seed = 5\nregions = 2\n").unwrap();

    let from_config = dir.path().join("a");
    assert_eq!(code(&synthetic(&from_config, &["--config", p(&conf)])), 0);
    let explicit = dir.path().join("b");
    assert_eq!(code(&synthetic(&explicit, &["--seed", "5", "--regions", "2"])), 0);
    assert_eq!(tree_bytes(&from_config), tree_bytes(&explicit));

    let overridden = dir.path().join("c");
    assert_eq!(code(&synthetic(&overridden, &["--config", p(&conf), "--seed", "6"])), 0);
    let flag_only = dir.path().join("d");
    assert_eq!(code(&synthetic(&flag_only, &["--seed", "6", "--regions", "2"])), 0);
    assert_eq!(tree_bytes(&overridden), tree_bytes(&flag_only));
    assert_ne!(tree_bytes(&overridden), tree_bytes(&from_config));

    let defaults = dir.path().join("e");
    assert_eq!(code(&synthetic(&defaults, &["--seed", "5"])), 0);
    assert_ne!(tree_bytes(&defaults), tree_bytes(&explicit));

    fs::write(&conf, "no_such_option = 1\n").unwrap();
    assert_eq!(code(&synthetic(&dir.path().join("f"), &["--config", p(&conf)])), 2);
}

fn train_butd(data: &Path, out: &Path) -> Output {
    vte(&[
        "train", "--model", "butd",
        "--train", p(&data.join("train.jsonl")),
        "--validation", p(&data.join("validation.jsonl")),
        "--features", p(&data.join("features/manifest.jsonl")),
        "--embeddings", p(&data.join("embeddings.txt")),
        "--hidden", "8", "--attention-dim", "8", "--batch-size", "4", "--max-epochs", "3", "--seed", "11",
        "--out", p(out),
    ])
}

#[test]
fn identical_arguments_give_identical_outputs_and_leave_inputs_alone() {
    let dir = TempDir::new().unwrap();
    let data = dir.path().join("data");
    assert_eq!(code(&synthetic(&data, &["--seed", "3"])), 0);
    let before = tree_bytes(&data);

    let first = dir.path().join("first.json");
    let second = dir.path().join("second.json");
    let run = train_butd(&data, &first);
    assert_eq!(code(&run), 0, "{}", String::from_utf8_lossy(&run.stderr));
    assert_eq!(code(&train_butd(&data, &second)), 0);
    assert_eq!(fs::read(&first).unwrap(), fs::read(&second).unwrap());
    assert_eq!(tree_bytes(&data), before);

    let (base, records) = aggregation_fixture(dir.path());
    let (base_bytes, record_bytes) = (fs::read(&base).unwrap(), fs::read(&records).unwrap());
    let merged = dir.path().join("merged.jsonl");
    assert_eq!(code(&vte(&["aggregate", "--records", p(&records), "--base", p(&base), "--out", p(&merged)])), 0);
    assert_eq!(fs::read(&base).unwrap(), base_bytes);
    assert_eq!(fs::read(&records).unwrap(), record_bytes);
}

#[test]
fn help_exits_cleanly() {
    let run = vte(&["--help"]);
    assert_eq!(code(&run), 0);
    assert!(String::from_utf8_lossy(&run.stdout).contains("build-corpus"));
    assert_eq!(code(&vte(&[])), 2);
}
