use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use finkpi::fixtures;
use finkpi::text_to_sql::AnswerBundle;

fn finkpi(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_finkpi")).args(args).env_remove("FINKPI_CONFIG").output().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

struct Workspace {
    dir: tempfile::TempDir,
}

impl Workspace {
    fn new() -> Self {
        let ws = Self { dir: tempfile::tempdir().unwrap() };
        let cfg = format!(
            "store_path = {:?}\naudit_path = {:?}\nreview_path = {:?}\nfixed_clock = \"2025-01-01T00:00:00Z\"\n\n[documents]\ncompany = \"ACME\"\npublished_on = \"2025-02-01\"\n",
            ws.path("store.json"),
            ws.path("audit.jsonl"),
            ws.path("review.jsonl")
        );
        fs::write(ws.path("finkpi.toml"), cfg).unwrap();
        fs::create_dir(ws.path("in")).unwrap();
        ws
    }

    fn path(&self, name: &str) -> PathBuf {
        self.dir.path().join(name)
    }

    fn config(&self) -> String {
        self.path("finkpi.toml").display().to_string()
    }

    fn run(&self, args: &[&str]) -> Output {
        let cfg = self.config();
        let mut all = vec!["--config", cfg.as_str()];
        all.extend_from_slice(args);
        finkpi(&all)
    }

    fn ingest_release(&self) -> Output {
        let file = self.path("in/acme-q4-2024.txt");
        fs::write(&file, fixtures::GUIDANCE_RELEASE).unwrap();
        self.run(&["ingest", file.to_str().unwrap()])
    }
}

fn write(path: &Path, text: &str) {
    fs::write(path, text).unwrap();
}

#[test]
fn ingest_one_file_reports_counts() {
    let ws = Workspace::new();
    let out = ws.ingest_release();
    assert!(out.status.success(), "{}", stderr(&out));
    let text = stdout(&out);
    assert!(
        text.contains("acme-q4-2024.txt: 5 extracted, 3 accepted, 0 corrected, 0 flagged, 2 rejected, 3 stored"),
        "{text}"
    );
    assert!(text.contains("1 files, 0 failed, 3 records in store"), "{text}");
    let review = fs::read_to_string(ws.path("review.jsonl")).unwrap();
    assert_eq!(review.lines().count(), 2, "{review}");
    assert!(review.contains("revenue"), "{review}");
    assert!(ws.path("store.json").exists());
    assert!(!ws.path("store.json.lock").exists());
}

#[test]
fn ingest_creates_missing_store_directory() {
    let ws = Workspace::new();
    let cfg = format!(
        "store_path = {:?}\n[documents]\ncompany = \"ACME\"\npublished_on = \"2025-02-01\"\n",
        ws.path("data/nested/store.json")
    );
    write(&ws.path("finkpi.toml"), &cfg);
    let out = ws.ingest_release();
    assert!(out.status.success(), "{}", stderr(&out));
    assert!(ws.path("data/nested/store.json").exists());
}

#[test]
fn ingest_directory_with_one_bad_file() {
    let ws = Workspace::new();
    for i in 0..4 {
        write(&ws.path(&format!("in/doc{i}.txt")), &format!("Revenue in Q{} 2024 was ${}.5 billion.", i + 1, i + 2));
    }
    fs::write(ws.path("in/broken.txt"), [0xff, 0xfe, 0x00, 0xc3]).unwrap();
    let out = ws.run(&["ingest", ws.path("in").to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    let text = stdout(&out);
    assert!(text.contains("broken.txt: error:"), "{text}");
    assert!(text.contains("5 files, 1 failed, 4 records in store"), "{text}");
}

#[test]
fn ingest_empty_directory() {
    let ws = Workspace::new();
    let out = ws.run(&["ingest", ws.path("in").to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0));
    assert!(stdout(&out).contains("0 files"));
}

#[test]
fn ingest_all_failed_is_nonzero() {
    let ws = Workspace::new();
    let missing = ws.path("in/missing.txt");
    let out = ws.run(&["ingest", missing.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stdout(&out).contains("1 files, 1 failed"));
}

#[test]
fn ingest_is_refused_while_locked() {
    let ws = Workspace::new();
    write(&ws.path("store.json.lock"), "1");
    let out = ws.ingest_release();
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("locked"), "{}", stderr(&out));
}

#[test]
fn query_prints_sql_explanation_and_table() {
    let ws = Workspace::new();
    ws.ingest_release();
    let out = ws.run(&["query", "FY 2025 operating margin guidance"]);
    assert!(out.status.success(), "{}", stderr(&out));
    let text = stdout(&out);
    assert!(text.contains("SQL: SELECT"), "{text}");
    assert!(text.contains("16.0% (range 15.0% to 17.0%)"), "{text}");
    assert!(text.contains("(1 row)"), "{text}");
}

#[test]
fn query_json_round_trips() {
    let ws = Workspace::new();
    ws.ingest_release();
    let out = ws.run(&["query", "--json", "Q4 2024 operating margin"]);
    assert!(out.status.success());
    let raw: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    let bundle: AnswerBundle = serde_json::from_value(raw.clone()).unwrap();
    assert_eq!(serde_json::to_value(&bundle).unwrap(), raw);
    assert!(bundle.explanation.contains("14.6"));
    let audit = fs::read_to_string(ws.path("audit.jsonl")).unwrap();
    assert!(audit.contains(&format!("\"audit_id\":\"{}\"", bundle.audit_id)));
}

#[test]
fn unknown_metric_exits_2_with_hint() {
    let ws = Workspace::new();
    ws.ingest_release();
    let out = ws.run(&["query", "What was Q4 2024 headcount?"]);
    assert_eq!(out.status.code(), Some(2));
    let err = stderr(&out);
    assert!(err.contains("clarification needed"), "{err}");
    assert!(err.contains("hint:") && err.contains("operating_margin"), "{err}");
}

#[test]
fn no_rule_flag_changes_stored_values() {
    let ws = Workspace::new();
    let file = ws.path("in/acme.txt");
    write(&file, fixtures::GUIDANCE_RELEASE);
    let out = ws.run(&["--no-rule=range_midpoint", "ingest", file.to_str().unwrap()]);
    assert!(out.status.success(), "{}", stderr(&out));
    let q = ws.run(&["query", "--json", "FY 2025 operating margin guidance"]);
    let bundle: AnswerBundle = serde_json::from_slice(&q.stdout).unwrap();
    assert_eq!(bundle.result.rows[0][1].to_string(), "15");
    let bad = ws.run(&["--no-rule=bogus", "ingest", file.to_str().unwrap()]);
    assert_eq!(bad.status.code(), Some(1));
}

#[test]
fn eval_prints_report_and_writes_outputs() {
    let ws = Workspace::new();
    let out_dir = ws.path("eval");
    let out = finkpi(&["eval", "--seed", "3", "--docs", "10", "--questions", "10", "--out", out_dir.to_str().unwrap()]);
    assert!(out.status.success(), "{}", stderr(&out));
    assert!(stdout(&out).contains("# Evaluation (seed 3, 10 documents, rules: all-on)"));
    for f in ["store.json", "audit.jsonl", "report.json", "report.md"] {
        assert!(out_dir.join(f).exists(), "{f}");
    }
    let again = finkpi(&["eval", "--seed", "3", "--docs", "10", "--questions", "10", "--json"]);
    assert_eq!(stdout(&again), fs::read_to_string(out_dir.join("report.json")).unwrap());
}

#[test]
fn eval_ablate_and_ablate_command() {
    let out = finkpi(&["eval", "--seed", "4", "--docs", "12", "--questions", "0", "--ablate"]);
    assert!(out.status.success(), "{}", stderr(&out));
    let text = stdout(&out);
    assert!(text.contains("# Evaluation") && text.contains("# Ablation"), "{text}");
    assert!(text.contains("no-unit_resolution"), "{text}");
    let out = finkpi(&[
        "ablate",
        "--seed",
        "4",
        "--docs",
        "12",
        "--questions",
        "0",
        "--no-rule",
        "period_resolution",
        "--json",
    ]);
    assert!(out.status.success(), "{}", stderr(&out));
    let report: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(report["configurations"], serde_json::json!(["all-on", "no-period_resolution"]));
}

#[test]
fn live_backend_without_credentials_is_refused() {
    let ws = Workspace::new();
    let cfg = fs::read_to_string(ws.path("finkpi.toml")).unwrap() + "\n[backend]\nkind = \"live\"\n";
    write(&ws.path("finkpi.toml"), &cfg);
    let file = ws.path("in/a.txt");
    write(&file, fixtures::GUIDANCE_RELEASE);
    let out = Command::new(env!("CARGO_BIN_EXE_finkpi"))
        .args(["--config", &ws.config(), "ingest", file.to_str().unwrap()])
        .env_remove("FINKPI_LIVE_ENDPOINT")
        .env_remove("FINKPI_API_KEY")
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("FINKPI_API_KEY"), "{}", stderr(&out));
}
