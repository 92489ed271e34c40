use std::path::Path;
use std::process::{Command, Output};

use qa_reward::io::{read_report, to_json_line, ResponseRecord};
use qa_reward::metrics::MetricReport;

fn bin(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_qa-reward")).args(args).current_dir(cwd).output().unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn write_lines<T: serde::Serialize>(path: &Path, records: &[T]) {
    let text: String = records.iter().map(|r| to_json_line(r).unwrap() + "\n").collect();
    std::fs::write(path, text).unwrap();
}

fn responses(dir: &Path) -> std::path::PathBuf {
    let path = dir.join("responses.jsonl");
    let mut recs = Vec::new();
    for (id, mos, scores) in [("a", 4.2, ["4.10", "4.30", "4.00"]), ("b", 2.1, ["2.00", "2.40", "1.90"]), ("c", 3.0, ["3.10", "2.80", "3.00"])] {
        for (p, s) in scores.iter().enumerate() {
            recs.push(ResponseRecord {
                sample_id: id.into(),
                mos,
                prompt_id: p + 1,
                response_text: format!("<think>ok</think><answer>{s}; {s}; 3.00; {s}; 3.50</answer>"),
            });
        }
    }
    recs.push(ResponseRecord { sample_id: "c".into(), mos: 3.0, prompt_id: 1, response_text: "no tags".into() });
    write_lines(&path, &recs);
    path
}

#[test]
fn train_writes_a_readable_report_and_csv() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("default.cfg"), "stage1_steps = 5\nstage2_steps = 5\n").unwrap();
    let out = bin(&["train", "--config", "default.cfg", "--out", "run.json", "--csv", "diag.csv"], dir.path());
    assert!(out.status.success(), "{}", stderr(&out));
    assert!(stderr(&out).contains("trained 10 steps"));
    let report = read_report(dir.path().join("run.json")).unwrap();
    assert_eq!(report.per_step.len(), 10);
    let csv = std::fs::read_to_string(dir.path().join("diag.csv")).unwrap();
    assert_eq!(csv.lines().count(), 11);
}

#[test]
fn seed_flag_overrides_config() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("c.cfg"), "seed = 1\nstage1_steps = 2\nstage2_steps = 2\n").unwrap();
    assert!(bin(&["train", "--config", "c.cfg", "--seed", "9", "--out", "r.json"], dir.path()).status.success());
    assert_eq!(read_report(dir.path().join("r.json")).unwrap().config_echo.seed, 9);
}

#[test]
fn train_on_an_external_dataset() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("c.cfg"), "stage1_steps = 3\nstage2_steps = 3\nbatch_size = 8\n").unwrap();
    let out = bin(&["dataset", "--config", "c.cfg", "--seed", "4", "--out", "data.jsonl"], dir.path());
    assert!(out.status.success(), "{}", stderr(&out));
    let out = bin(&["train", "--config", "c.cfg", "--dataset", "data.jsonl", "--out", "r.json"], dir.path());
    assert!(out.status.success(), "{}", stderr(&out));
    assert!(stderr(&out).contains("on 64 samples"));
}

#[test]
fn invalid_config_is_a_validation_error() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("bad.cfg"), "alpha = 1.5\n").unwrap();
    let out = bin(&["train", "--config", "bad.cfg", "--out", "r.json"], dir.path());
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("alpha"));
    std::fs::write(dir.path().join("bad.cfg"), "learning_rat = 0.1\n").unwrap();
    assert_eq!(bin(&["train", "--config", "bad.cfg", "--out", "r.json"], dir.path()).status.code(), Some(1));
    assert_eq!(bin(&["train"], dir.path()).status.code(), Some(1));
    assert_eq!(bin(&["score", "--responses", "x", "--stage", "warmup"], dir.path()).status.code(), Some(1));
}

#[test]
fn missing_input_file_is_a_runtime_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = bin(&["score", "--responses", "nope.jsonl"], dir.path());
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).starts_with("error:"));
}

#[test]
fn score_is_deterministic_and_reports_every_generation() {
    let dir = tempfile::tempdir().unwrap();
    let path = responses(dir.path());
    let p = path.to_str().unwrap();
    let a = bin(&["score", "--responses", p], dir.path());
    let b = bin(&["score", "--responses", p], dir.path());
    assert!(a.status.success(), "{}", stderr(&a));
    assert_eq!(a.stdout, b.stdout);
    let text = String::from_utf8(a.stdout.clone()).unwrap();
    let rows: Vec<serde_json::Value> = text.lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    assert_eq!(rows.len(), 10);
    assert_eq!(rows[9]["format_valid"], false);
    assert_eq!(rows[9]["r_total"].as_f64(), Some(0.0));
    assert!(rows[..9].iter().all(|r| r["r_format"].as_f64() == Some(1.0)));
    assert!(stderr(&a).contains("10 responses over 3 samples (9 well-formed)"));

    let out = bin(&["score", "--responses", p, "--stage", "stabilize", "--out", "s.jsonl"], dir.path());
    assert!(out.status.success());
    assert!(out.stdout.is_empty());
    let written = std::fs::read_to_string(dir.path().join("s.jsonl")).unwrap();
    assert!(written.lines().all(|l| l.contains("\"r_std_penalty\":0.0000000000000000e0")));
}

#[test]
fn score_rejects_broken_records_with_line_number() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("r.jsonl"), "{\"sample_id\":\"a\",\"mos\":3.0,\"prompt_id\":1,\"response_text\":\"x\"}\n{\"sample_id\":\"a\"}\n").unwrap();
    let out = bin(&["score", "--responses", "r.jsonl"], dir.path());
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("line 2"));
}

#[test]
fn vqa_responses_score_with_two_dimensions() {
    let dir = tempfile::tempdir().unwrap();
    let recs: Vec<ResponseRecord> = [("a", 4.0, "4.00; 3.80"), ("b", 2.0, "2.10; 2.30"), ("a", 4.0, "3.90; 4.10")]
        .iter()
        .map(|(id, mos, s)| ResponseRecord {
            sample_id: (*id).into(),
            mos: *mos,
            prompt_id: 1,
            response_text: format!("<think>t</think><answer>{s}</answer>"),
        })
        .collect();
    write_lines(&dir.path().join("v.jsonl"), &recs);
    let out = bin(&["score", "--responses", "v.jsonl", "--task", "vqa"], dir.path());
    assert!(out.status.success(), "{}", stderr(&out));
    assert!(stderr(&out).contains("(3 well-formed)"));
    let iqa = bin(&["score", "--responses", "v.jsonl"], dir.path());
    assert!(stderr(&iqa).contains("(0 well-formed)"));
}

#[test]
fn eval_reports_metrics_and_rejects_constant_predictions() {
    let dir = tempfile::tempdir().unwrap();
    let truth: Vec<serde_json::Value> =
        [("a", 1.0), ("b", 2.0), ("c", 4.0), ("d", 3.0)].iter().map(|(id, m)| serde_json::json!({"sample_id": id, "mos": m})).collect();
    write_lines(&dir.path().join("t.jsonl"), &truth);
    let pred: Vec<serde_json::Value> =
        [("d", 5.0), ("a", 1.0), ("b", 2.0), ("c", 3.0)].iter().map(|(id, s)| serde_json::json!({"sample_id": id, "score": s})).collect();
    write_lines(&dir.path().join("p.jsonl"), &pred);
    let out = bin(&["eval", "--pred", "p.jsonl", "--truth", "t.jsonl"], dir.path());
    assert!(out.status.success(), "{}", stderr(&out));
    let report: MetricReport = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(report.srcc, 0.8);
    assert_eq!(report.n, 4);

    let constant: Vec<serde_json::Value> =
        ["a", "b", "c", "d"].iter().map(|id| serde_json::json!({"sample_id": id, "score": 3.0})).collect();
    write_lines(&dir.path().join("const.jsonl"), &constant);
    let out = bin(&["eval", "--pred", "const.jsonl", "--truth", "t.jsonl"], dir.path());
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("degenerate"), "{}", stderr(&out));

    write_lines(&dir.path().join("short.jsonl"), &pred[..3]);
    let out = bin(&["eval", "--pred", "short.jsonl", "--truth", "t.jsonl"], dir.path());
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("no prediction for `c`"));
}

#[test]
fn oracle_agrees_on_a_small_instance() {
    let dir = tempfile::tempdir().unwrap();
    let instance = r#"{
        "stage": "explore",
        "config": {"alpha": 0.6, "gamma": 1.5},
        "samples": [
            {"sample_id": "a", "mos": 4.1, "generations": [[4.0, 3.5, 4.2, 4.4, 3.9], null, [4.5, 4.5, 4.5, 4.5, 4.5], [3.2, 3.0, 3.1, 3.3, 2.9]]},
            {"sample_id": "b", "mos": 2.3, "generations": [[2.0, 2.5, 2.2, 2.1, 2.4], [1.5, 1.0, 2.0, 1.2, 1.8]]},
            {"sample_id": "c", "mos": 3.2, "generations": [[3.0, 3.0, 3.0, 3.0, 3.0], [3.5, 3.6, 2.5, 3.1, 3.3], [2.0, 4.0, 3.0, 3.0, 3.0]]}
        ]
    }"#;
    std::fs::write(dir.path().join("small.json"), instance).unwrap();
    let out = bin(&["oracle", "--instance", "small.json"], dir.path());
    assert!(out.status.success(), "{}", stderr(&out));
    let line = String::from_utf8(out.stdout).unwrap();
    assert!(line.starts_with("samples 3 generations 9 max |delta| = "), "{line}");
    let delta: f64 = line.trim().rsplit(' ').next().unwrap().parse().unwrap();
    assert!(delta < 1e-9);

    std::fs::write(dir.path().join("bad.json"), r#"{"stage": "explore", "samples": [], "extra": 1}"#).unwrap();
    assert_eq!(bin(&["oracle", "--instance", "bad.json"], dir.path()).status.code(), Some(1));
}
