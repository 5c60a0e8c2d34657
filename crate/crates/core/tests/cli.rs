use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use dropmatch::cli::CSV_COLUMNS;

const RUN: &str = r#"
[target]
kind = "neural"
vocab_size = 32
hidden_dim = 8
context = 3
seed = 1

[draft]
kind = "perturbed"
epsilon = 0.2
seed = 2

[engine]
criterion = "dropmatch_js"
draft_length = 4
heads = 5
p_drop = 0.3
seed = 7
max_tokens = 20

[prompts]
count = 3
length = 3
seed = 5
"#;

fn dropmatch(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_dropmatch"))
        .args(args)
        .output()
        .unwrap()
}

fn write(dir: &Path, name: &str, body: &str) -> PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, body).unwrap();
    p
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn sweep(lists: &str) -> String {
    format!("{RUN}\n[sweep]\n{lists}\n")
}

#[test]
fn run_prints_summary_json() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "run.toml", RUN);
    let out = dropmatch(&["run", "--config", cfg.to_str().unwrap()]);
    assert!(out.status.success(), "{}", stderr(&out));
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["tokens_emitted"], 60);
    assert!(v["tau_with_bonus"].as_f64().unwrap() >= 1.0);
    assert_eq!(v["agreement_histogram"].as_array().unwrap().len(), 5);
}

#[test]
fn seed_flag_overrides_config() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "run.toml", RUN);
    let cfg = cfg.to_str().unwrap();
    let base = dropmatch(&["run", "--config", cfg]).stdout;
    let same = dropmatch(&["run", "--config", cfg, "--seed", "7"]).stdout;
    let other = dropmatch(&["run", "--config", cfg, "--seed", "8"]).stdout;
    assert_eq!(base, same);
    assert_ne!(base, other);
}

#[test]
fn thread_count_does_not_change_output() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "run.toml", RUN);
    let cfg = cfg.to_str().unwrap();
    let one = dropmatch(&["run", "--config", cfg, "--threads", "1"]);
    let four = dropmatch(&["run", "--config", cfg, "--threads", "4"]);
    assert!(one.status.success() && four.status.success());
    assert_eq!(one.stdout, four.stdout);
}

#[test]
fn full_dropout_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "run.toml", &RUN.replace("p_drop = 0.3", "p_drop = 1.0"));
    let out = dropmatch(&["run", "--config", cfg.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("p_drop"), "{}", stderr(&out));
    assert!(out.stdout.is_empty());
}

#[test]
fn unknown_key_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(
        dir.path(),
        "run.toml",
        &RUN.replace("heads = 5", "heads = 5\nhedas = 5"),
    );
    let out = dropmatch(&["run", "--config", cfg.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("hedas"), "{}", stderr(&out));
}

#[test]
fn missing_config_is_an_io_error() {
    let out = dropmatch(&["run", "--config", "/nonexistent/run.toml"]);
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn zero_threads_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "run.toml", RUN);
    let out = dropmatch(&["run", "--config", cfg.to_str().unwrap(), "--threads", "0"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn single_cell_bench() {
    let dir = tempfile::tempdir().unwrap();
    let spec = write(dir.path(), "sweep.toml", &sweep("base_seed = 7"));
    let out = dropmatch(&["bench", "--sweep", spec.to_str().unwrap()]);
    assert!(out.status.success(), "{}", stderr(&out));
    let mut rdr = csv::Reader::from_reader(out.stdout.as_slice());
    assert_eq!(rdr.headers().unwrap().iter().collect::<Vec<_>>(), CSV_COLUMNS);
    let rows: Vec<csv::StringRecord> = rdr.records().map(Result::unwrap).collect();
    assert_eq!(rows.len(), 1);
    assert_eq!(&rows[0][0], "dropmatch_js");
    assert_eq!(&rows[0][4], "0.2");
    assert_eq!(&rows[0][5], "7");
}

#[test]
fn two_by_two_bench_rows_in_sweep_order() {
    let dir = tempfile::tempdir().unwrap();
    let spec = write(
        dir.path(),
        "sweep.toml",
        &sweep("criterion = [\"naive\", \"dropmatch_js\"]\np_drop = [0.1, 0.4]\nbase_seed = 3"),
    );
    let out_path = dir.path().join("out.csv");
    let out = dropmatch(&[
        "bench",
        "--sweep",
        spec.to_str().unwrap(),
        "--out",
        out_path.to_str().unwrap(),
        "--threads",
        "2",
    ]);
    assert!(out.status.success(), "{}", stderr(&out));
    assert!(out.stdout.is_empty());
    let mut rdr = csv::Reader::from_path(&out_path).unwrap();
    let cells: Vec<(String, String)> = rdr
        .records()
        .map(|r| {
            let r = r.unwrap();
            (r[0].to_string(), r[1].to_string())
        })
        .collect();
    assert_eq!(
        cells,
        [
            ("naive", "0.1"),
            ("naive", "0.4"),
            ("dropmatch_js", "0.1"),
            ("dropmatch_js", "0.4")
        ]
        .map(|(a, b)| (a.to_string(), b.to_string()))
    );
}

#[test]
fn oversized_sweep_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let spec = write(dir.path(), "sweep.toml", &sweep("p_drop = [0.1, 0.2, 0.3]\ncap = 2"));
    let out = dropmatch(&["bench", "--sweep", spec.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("cap"));
}

#[test]
fn trace_without_steps_fails() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "run.toml", RUN);
    let trace = write(dir.path(), "t.jsonl", "{\"header\":true,\"d\":8,\"v\":32}\n");
    let out = dropmatch(&[
        "trace",
        "--config",
        cfg.to_str().unwrap(),
        "--trace",
        trace.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(4));
    assert!(stderr(&out).contains("no steps"), "{}", stderr(&out));
}

#[test]
fn trace_dimension_mismatch_fails() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "run.toml", RUN);
    let trace = write(dir.path(), "t.jsonl", "{\"header\":true,\"d\":16,\"v\":32}\n");
    let out = dropmatch(&[
        "trace",
        "--config",
        cfg.to_str().unwrap(),
        "--trace",
        trace.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(4));
    assert!(stderr(&out).contains("d = 16"), "{}", stderr(&out));
}

#[test]
fn malformed_trace_line_reports_line_number() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "run.toml", RUN);
    let trace = write(
        dir.path(),
        "t.jsonl",
        "{\"header\":true,\"d\":8,\"v\":32}\n{\"step\": 3,\n",
    );
    let out = dropmatch(&[
        "trace",
        "--config",
        cfg.to_str().unwrap(),
        "--trace",
        trace.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(4));
    assert!(stderr(&out).contains("line 2"), "{}", stderr(&out));
}
