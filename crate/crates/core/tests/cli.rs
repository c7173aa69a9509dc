mod common;

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use common::synthetic_dataset;
use scr::datasets::save_dataset;
use scr::evaluation::read_report;
use scr::memory::load_store;

fn scr(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_scr"))
        .args(args)
        .current_dir(dir)
        .env_clear()
        .output()
        .unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn workspace() -> (tempfile::TempDir, PathBuf) {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("synthetic.jsonl");
    save_dataset(&synthetic_dataset(), &data).unwrap();
    (dir, data)
}

#[test]
fn evaluate_faithful_prints_table_and_writes_report() {
    let (dir, _) = workspace();
    let o = scr(
        dir.path(),
        &[
            "evaluate",
            "--dataset",
            "synthetic.jsonl",
            "--mock",
            "faithful",
            "--num-updates",
            "10",
            "--top-k",
            "1",
            "--output",
            "out.json",
            "--save-store",
            "store.jsonl",
        ],
    );
    assert!(o.status.success(), "{}", stderr(&o));
    let table = stdout(&o);
    assert!(table.contains("Rel."), "{table}");
    let row = table.lines().nth(2).unwrap();
    assert_eq!(row.matches("100.00").count(), 5, "{row}");
    let report = read_report(dir.path().join("out.json")).unwrap();
    assert_eq!(report.average, 100.0);
    assert_eq!(report.memory_size, 10);
    assert_eq!(
        load_store(dir.path().join("store.jsonl")).unwrap().len(),
        10
    );
}

#[test]
fn evaluate_with_pre_edit_baseline() {
    let (dir, _) = workspace();
    let o = scr(
        dir.path(),
        &[
            "evaluate",
            "--dataset",
            "synthetic.jsonl",
            "--mock",
            "oblivious",
            "--with-pre-edit",
        ],
    );
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stdout(&o).contains("| Pre-edit"));
    let pre = read_report(dir.path().join("report.pre-edit.json")).unwrap();
    assert_eq!(pre.locality, 100.0);
    let post = read_report(dir.path().join("report.json")).unwrap();
    assert_eq!((post.reliability, post.locality), (0.0, 100.0));
}

#[test]
fn identical_runs_write_identical_reports() {
    let (dir, _) = workspace();
    for out in ["a.json", "b.json"] {
        let o = scr(
            dir.path(),
            &[
                "evaluate",
                "--dataset",
                "synthetic.jsonl",
                "--mock",
                "faithful",
                "--top-k",
                "3",
                "--output",
                out,
            ],
        );
        assert!(o.status.success(), "{}", stderr(&o));
    }
    let a = std::fs::read(dir.path().join("a.json")).unwrap();
    let b = std::fs::read(dir.path().join("b.json")).unwrap();
    assert_eq!(a, b);
}

#[test]
fn zero_top_k_is_a_usage_error() {
    let (dir, _) = workspace();
    let o = scr(
        dir.path(),
        &[
            "evaluate",
            "--dataset",
            "synthetic.jsonl",
            "--mock",
            "faithful",
            "--top-k",
            "0",
        ],
    );
    assert!(!o.status.success());
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("--top-k"), "{}", stderr(&o));
    assert!(!dir.path().join("report.json").exists());
}

#[test]
fn usage_errors() {
    let dir = tempfile::tempdir().unwrap();
    let o = scr(dir.path(), &["frobnicate"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("Usage"));
    let o = scr(dir.path(), &["evaluate", "--bogus"]);
    assert_eq!(o.status.code(), Some(2));
    let o = scr(dir.path(), &["evaluate", "--mock", "faithful"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("--dataset"));
}

#[test]
fn too_many_updates_is_rejected() {
    let (dir, _) = workspace();
    let o = scr(
        dir.path(),
        &[
            "evaluate",
            "--dataset",
            "synthetic.jsonl",
            "--mock",
            "faithful",
            "--num-updates",
            "11",
        ],
    );
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn missing_dataset_file_fails() {
    let dir = tempfile::tempdir().unwrap();
    let o = scr(
        dir.path(),
        &["evaluate", "--dataset", "nope.jsonl", "--mock", "oblivious"],
    );
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("nope.jsonl"));
}

#[test]
fn ingest_then_query_dumps_trace() {
    let (dir, _) = workspace();
    let o = scr(
        dir.path(),
        &[
            "ingest",
            "--dataset",
            "synthetic.jsonl",
            "--store",
            "s.jsonl",
        ],
    );
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(load_store(dir.path().join("s.jsonl")).unwrap().len(), 10);

    let ds = synthetic_dataset();
    let q = &ds.records[3].edit_question;
    let o = scr(
        dir.path(),
        &[
            "query",
            "--question",
            q,
            "--store",
            "s.jsonl",
            "--mock",
            "faithful",
            "--dataset",
            "synthetic.jsonl",
            "--top-k",
            "3",
        ],
    );
    assert!(o.status.success(), "{}", stderr(&o));
    let trace: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(
        trace["candidates"]["candidates"].as_array().unwrap().len(),
        3
    );
    assert_eq!(trace["confirmation"]["decision"]["verdict"], "confirmed");
    assert_eq!(trace["confirmation"]["decision"]["entry_id"], 3);
    assert_eq!(trace["answer_text"], ds.records[3].edit_target);
}

#[test]
fn query_without_store_asks_bare_question() {
    let dir = tempfile::tempdir().unwrap();
    let o = scr(
        dir.path(),
        &["query", "--question", "Who?", "--mock", "oblivious"],
    );
    assert!(o.status.success(), "{}", stderr(&o));
    let trace: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(trace["final_prompt"], "Who?");
    assert_eq!(
        trace["confirmation"]["decision"]["verdict"],
        "no_relevant_fact"
    );
}

#[test]
fn report_re_renders() {
    let (dir, _) = workspace();
    assert!(scr(
        dir.path(),
        &[
            "evaluate",
            "--dataset",
            "synthetic.jsonl",
            "--mock",
            "oblivious"
        ]
    )
    .status
    .success());
    let o = scr(
        dir.path(),
        &["report", "--input", "report.json", "--format", "csv"],
    );
    assert!(o.status.success(), "{}", stderr(&o));
    let csv = stdout(&o);
    assert_eq!(csv.lines().count(), 6);
    assert!(csv.contains("locality,100.00,20,20"), "{csv}");
    let o = scr(dir.path(), &["report", "--input", "report.json"]);
    assert!(stdout(&o).contains("Avg."));
    let o = scr(
        dir.path(),
        &[
            "report",
            "--input",
            "report.json",
            "--format",
            "json",
            "--output",
            "copy.json",
        ],
    );
    assert!(o.status.success());
    assert_eq!(
        read_report(dir.path().join("copy.json")).unwrap(),
        read_report(dir.path().join("report.json")).unwrap()
    );
}

#[test]
fn config_precedence() {
    let (dir, _) = workspace();
    std::fs::write(
        dir.path().join("scr.toml"),
        "dataset = \"synthetic.jsonl\"\nmock = \"faithful\"\ntop_k = 5\nnum_updates = 4\noutput = \"from-file.json\"\n",
    )
    .unwrap();
    let bin = env!("CARGO_BIN_EXE_scr");
    let o = Command::new(bin)
        .args(["evaluate", "--config", "scr.toml", "--top-k", "2"])
        .current_dir(dir.path())
        .env_clear()
        .env("SCR_TOP_K", "9")
        .env("SCR_SEED", "7")
        .env("SCR_NUM_UPDATES", "1")
        .output()
        .unwrap();
    assert!(o.status.success(), "{}", stderr(&o));
    let r = read_report(dir.path().join("from-file.json")).unwrap();
    assert_eq!(r.config.k, 2, "flag beats file and environment");
    assert_eq!(r.config.num_updates, 4, "file beats environment");
    assert_eq!(r.config.seed, 7, "environment beats default");
    assert_eq!(r.config.max_new_tokens, 30, "default");

    std::fs::write(dir.path().join("bad.toml"), "colour = \"blue\"\n").unwrap();
    let o = scr(dir.path(), &["evaluate", "--config", "bad.toml"]);
    assert_eq!(o.status.code(), Some(2));
}
