use std::collections::BTreeMap;
use std::io::{BufRead, BufReader};
use std::path::{Path, PathBuf};
use std::process::{Command, Output, Stdio};

use seafarer::metrics::{read_summary_blocks, SummaryRow};

const BIN: &str = env!("CARGO_BIN_EXE_seafarer");

fn seafarer(args: &[&str]) -> Output {
    Command::new(BIN)
        .args(args)
        .env("SEAFARER_LOG", "warn")
        .env_remove(seafarer::config::QUERY_CAP_ENV)
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) -> String {
    let out = seafarer(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn write_config(dir: &Path, name: &str, body: serde_json::Value) -> PathBuf {
    let path = dir.join(name);
    std::fs::write(&path, serde_json::to_string_pretty(&body).unwrap()).unwrap();
    path
}

fn small_config(strategies: &[&str], seeds: &[u64], budget: usize) -> serde_json::Value {
    serde_json::json!({
        "corpus": {"synth": {"n_items": 1000, "n_tags": 20, "d": 6, "k": 4, "seed": 5, "cluster_spread": 0.4}},
        "task": {"auto_frequency": [0.03, 0.2]},
        "strategies": strategies,
        "retrieval": {"linucb_iters": 20, "small_pool_size": 200},
        "train": {"learning_rate": 0.01, "epochs": 20},
        "budget": budget,
        "seeds": seeds,
    })
}

fn blocks(path: &Path) -> BTreeMap<String, Vec<SummaryRow>> {
    let file = std::fs::File::open(path).unwrap();
    read_summary_blocks(BufReader::new(file)).unwrap().into_iter().collect()
}

#[test]
fn run_is_byte_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "c.json", small_config(&["seafaring", "random"], &[0, 1], 10));
    let cfg = cfg.to_str().unwrap();
    let mut csvs = Vec::new();
    for out in ["a", "b"] {
        let out_dir = dir.path().join(out);
        let stdout = ok(&["run", "--config", cfg, "--strategy", "random", "--seed", "1", "--out", out_dir.to_str().unwrap()]);
        assert!(stdout.contains("random: final mean AUC"), "{stdout}");
        assert!(!out_dir.join("seafaring_seed1.csv").exists());
        assert!(!out_dir.join("random_seed0.csv").exists());
        csvs.push(std::fs::read(out_dir.join("random_seed1.csv")).unwrap());
    }
    assert_eq!(csvs[0], csvs[1]);
    let text = String::from_utf8(csvs.remove(0)).unwrap();
    assert_eq!(text.lines().count(), 11);
    assert_eq!(text.lines().next().unwrap(), seafarer::engine::RUN_CSV_HEADER);
}

#[test]
fn summaries_cover_every_strategy_and_reload() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "c.json",
        small_config(&["seafaring", "small_exact", "random"], &[0, 1], 6),
    );
    let out_dir = dir.path().join("out");
    ok(&["run", "--config", cfg.to_str().unwrap(), "--out", out_dir.to_str().unwrap()]);

    let summary = out_dir.join(seafarer::experiment::SUMMARY_FILE);
    let text = std::fs::read_to_string(&summary).unwrap();
    assert_eq!(text.matches("# strategy=").count(), 3);
    let from_run = blocks(&summary);
    assert_eq!(from_run.len(), 3);
    for rows in from_run.values() {
        assert_eq!(rows.len(), 6);
        assert!(rows.iter().all(|r| r.n_runs == 2));
    }

    let again = dir.path().join("again.csv");
    ok(&["summarize", out_dir.to_str().unwrap(), "--out", again.to_str().unwrap()]);
    assert_eq!(blocks(&again), from_run);

    let stdout = ok(&["summarize", out_dir.join("random_seed0.csv").to_str().unwrap()]);
    assert!(stdout.starts_with("# strategy=random"), "{stdout}");

    let saved: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out_dir.join("config.json")).unwrap()).unwrap();
    assert_eq!(saved["budget"], 6);
}

#[test]
fn config_errors_name_the_field() {
    let dir = tempfile::tempdir().unwrap();
    let cases = [
        (serde_json::json!({"corpus": {"synth": {"n_items": 100, "n_tags": 5, "d": 3, "k": 2, "seed": 0, "cluster_spread": 0.1}}, "budget": 0}), "budget"),
        (serde_json::json!({"corpus": {"synth": {"n_items": 100, "n_tags": 5, "d": 3, "k": 2, "seed": 0, "cluster_spread": 0.1}}, "retrieval": {"linucb_iter": 3}}), "retrieval"),
        (serde_json::json!({"corpus": {"synth": {"n_items": 100, "n_tags": 5, "d": 3, "k": 2, "seed": "x", "cluster_spread": 0.1}}}), "corpus.synth.seed"),
        (serde_json::json!({"corpus": {"path": "missing.jsonl"}}), "corpus.path"),
    ];
    for (i, (body, field)) in cases.into_iter().enumerate() {
        let cfg = write_config(dir.path(), &format!("bad{i}.json"), body);
        let out = seafarer(&["run", "--config", cfg.to_str().unwrap()]);
        assert!(!out.status.success());
        let stderr = String::from_utf8_lossy(&out.stderr);
        assert!(stderr.contains(field), "case {i}: {stderr}");
    }
    let out = seafarer(&["run", "--config", dir.path().join("absent.json").to_str().unwrap()]);
    assert!(!out.status.success());
}

#[test]
fn synthetic_corpus_files_drive_a_run() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    ok(&["synth-corpus", "--out", data.to_str().unwrap(), "--n-items", "400", "--n-tags", "12", "--d", "4", "--k", "3", "--seed", "9"]);
    let corpus = std::fs::read_to_string(data.join("corpus.jsonl")).unwrap();
    assert!(corpus.starts_with(r#"{"meta":{"d":4}}"#));
    assert_eq!(corpus.lines().count(), 1 + 400);
    assert_eq!(std::fs::read_to_string(data.join("embeddings.txt")).unwrap().lines().count(), 12);

    let cfg = write_config(
        &data,
        "c.json",
        serde_json::json!({
            "corpus": {"path": "corpus.jsonl"},
            "embeddings": {"path": "embeddings.txt"},
            "task": {"auto_frequency": [0.03, 0.3]},
            "strategies": ["seafaring", "small_exact"],
            "retrieval": {"linucb_iters": 10, "small_pool_size": 100},
            "budget": 4,
            "seeds": [3],
            "output_dir": "runs",
        }),
    );
    ok(&["run", "--config", cfg.to_str().unwrap()]);
    for s in ["seafaring", "small_exact"] {
        let csv = std::fs::read_to_string(data.join("runs").join(format!("{s}_seed3.csv"))).unwrap();
        assert_eq!(csv.lines().count(), 5);
    }
}

struct Child(std::process::Child);

impl Drop for Child {
    fn drop(&mut self) {
        let _ = self.0.kill();
        let _ = self.0.wait();
    }
}

#[test]
fn remote_run_through_mock_search_matches_in_memory_run() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "c.json", small_config(&["seafaring"], &[2], 8));
    let cfg = cfg.to_str().unwrap();
    let mut child = Child(
        Command::new(BIN)
            .args(["mock-search", "--config", cfg, "--bind", "127.0.0.1:0"])
            .env("SEAFARER_LOG", "warn")
            .stdout(Stdio::piped())
            .spawn()
            .unwrap(),
    );
    let mut line = String::new();
    BufReader::new(child.0.stdout.take().unwrap()).read_line(&mut line).unwrap();
    let url = line.trim().strip_prefix("mock search at ").expect("banner").to_string();

    let local = dir.path().join("local");
    let remote = dir.path().join("remote");
    ok(&["run", "--config", cfg, "--out", local.to_str().unwrap()]);
    ok(&["run", "--config", cfg, "--out", remote.to_str().unwrap(), "--endpoint", &url]);
    let a = std::fs::read(local.join("seafaring_seed2.csv")).unwrap();
    let b = std::fs::read(remote.join("seafaring_seed2.csv")).unwrap();
    assert_eq!(a, b);

    let capped = Command::new(BIN)
        .args(["run", "--config", cfg, "--out", dir.path().join("capped").to_str().unwrap(), "--endpoint", &url])
        .env("SEAFARER_LOG", "warn")
        .env(seafarer::config::QUERY_CAP_ENV, "15")
        .output()
        .unwrap();
    assert!(!capped.status.success());
    assert!(String::from_utf8_lossy(&capped.stderr).contains("budget"));
}
