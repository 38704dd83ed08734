//! End-to-end tests of the `fbsde` binary: exit codes, report content,
//! CSV artifacts, and the JSON report contract.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_fbsde"))
}

fn run(args: &[&str]) -> Output {
    bin()
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout(out: &Output) -> String {
    String::from_utf8(out.stdout.clone()).expect("utf8 stdout")
}

fn stderr(out: &Output) -> String {
    String::from_utf8(out.stderr.clone()).expect("utf8 stderr")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

fn config(name: &str) -> String {
    let path = Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("../..")
        .join("configs")
        .join(name);
    path.canonicalize()
        .unwrap_or_else(|_| panic!("config {name} exists"))
        .to_string_lossy()
        .into_owned()
}

fn write_doc(dir: &tempfile::TempDir, name: &str, text: &str) -> String {
    let path = dir.path().join(name);
    std::fs::write(&path, text).expect("write doc");
    path.to_string_lossy().into_owned()
}

// ---------------------------------------------------------------- analyze

#[test]
fn analyze_reference_fires_root_criterion() {
    let out = run(&["analyze", &config("reference.json")]);
    assert_eq!(code(&out), 0, "stderr: {}", stderr(&out));
    let text = stdout(&out);
    assert!(text.contains("Lemma3.8(i)"), "missing label: {text}");
    assert!(text.contains("Thm3.9(i)"), "missing label: {text}");
    assert!(text.contains("result: well-posed"), "{text}");
}

#[test]
fn analyze_coupled_fires_case_three() {
    let out = run(&["analyze", &config("coupled.json")]);
    assert_eq!(code(&out), 0);
    assert!(stdout(&out).contains("Lemma3.8(iii)"));
}

#[test]
fn analyze_undecided_exits_three() {
    let out = run(&["analyze", &config("undecided.json")]);
    assert_eq!(code(&out), 3);
    let text = stdout(&out);
    assert!(text.contains("Lemma3.8-fail"), "{text}");
    assert!(text.contains("result: undecided"), "{text}");
}

#[test]
fn analyze_envelope_bounded() {
    let out = run(&["analyze", &config("envelope.json")]);
    assert_eq!(code(&out), 0);
    assert!(stdout(&out).contains("envelope bounded"));
}

#[test]
fn analyze_lq_document_appends_cost_stage() {
    let out = run(&["analyze", &config("lq.json")]);
    assert_eq!(code(&out), 0);
    let text = stdout(&out);
    assert!(text.contains("cost-criterion"), "{text}");
    assert!(text.contains("Lemma3.8(i)"), "{text}");
}

#[test]
fn analyze_rejects_bad_input() {
    let dir = tempfile::tempdir().unwrap();
    let malformed = write_doc(&dir, "bad.json", "{ not json");
    let out = run(&["analyze", &malformed]);
    assert_eq!(code(&out), 2);
    assert!(stderr(&out).contains("error"));

    let unknown = write_doc(&dir, "unk.json", r#"{"kind":"mystery"}"#);
    let out = run(&["analyze", &unknown]);
    assert_eq!(code(&out), 2);
    assert!(stderr(&out).contains("unknown document kind"));

    let missing = dir.path().join("absent.json");
    let out = run(&["analyze", &missing.to_string_lossy()]);
    assert_eq!(code(&out), 2);
}

#[test]
fn usage_errors_exit_two() {
    let out = run(&["analyze"]);
    assert_eq!(code(&out), 2);
    let out = run(&["transform", &config("coupled.json"), "--m", "1"]);
    assert_eq!(code(&out), 2, "m without n must be rejected");
    let out = run(&["analyze", &config("reference.json"), "--dt", "0"]);
    assert_eq!(code(&out), 2);
}

// ------------------------------------------------------------------ equiv

#[test]
fn equiv_single_generator_reports_image_verdicts() {
    let out = run(&["equiv", &config("reference.json"), "--p", "1"]);
    assert_eq!(code(&out), 0);
    let text = stdout(&out);
    assert!(text.contains("Lemma2.2(ii)"), "{text}");
    assert!(text.contains("image f"), "{text}");
}

#[test]
fn equiv_search_emits_csv_window() {
    let out = run(&["equiv", &config("reference.json"), "--search", "p"]);
    assert_eq!(code(&out), 0);
    let text = stdout(&out);
    assert!(text.contains("param,value,det2,det3,verdict"), "{text}");
    assert!(text.contains("Lemma2.2"), "{text}");
    // The window found for this instance contains p = 1.
    assert!(
        text.lines().any(|l| l.starts_with("p,1,") || l.starts_with("p,0.99")),
        "window should reach p near 1: {text}"
    );
}

#[test]
fn equiv_search_empty_gate_exits_three() {
    let out = run(&["equiv", &config("undecided.json"), "--search", "p"]);
    assert_eq!(code(&out), 3);
    assert!(stdout(&out).contains("search failed"));
}

#[test]
fn equiv_without_parameters_exits_two() {
    let out = run(&["equiv", &config("reference.json")]);
    assert_eq!(code(&out), 2);
}

// -------------------------------------------------------------- transform

#[test]
fn transform_explicit_reproduces_reference_tilde() {
    let out = run(&[
        "transform",
        &config("coupled.json"),
        "--m",
        "1",
        "--n",
        "-0.658",
        "--c",
        "1",
    ]);
    assert_eq!(code(&out), 0, "stderr: {}", stderr(&out));
    let text = stdout(&out);
    assert!(text.contains("tilde h = 1.55267"), "{text}");
    assert!(text.contains("Prop4.2(i)"), "{text}");
    assert!(
        text.contains("leading-coefficient cross-check residual 0"),
        "{text}"
    );
}

#[test]
fn transform_degenerate_parameters_exit_two() {
    let out = run(&["transform", &config("coupled.json"), "--m", "1", "--n", "1"]);
    assert_eq!(code(&out), 2);
    assert!(stderr(&out).contains("degenerate"));
}

#[test]
fn transform_auto_synthesizes() {
    let out = run(&["transform", &config("coupled.json"), "--auto"]);
    assert_eq!(code(&out), 0);
    let text = stdout(&out);
    assert!(text.contains("Prop4.2"), "{text}");
    assert!(text.contains("synthesis tried"), "{text}");
}

#[test]
fn transform_auto_without_roots_exits_three() {
    // The mirror cubic degenerates to a quadratic with negative
    // discriminant: no decoupling root exists.
    let dir = tempfile::tempdir().unwrap();
    let doc = write_doc(
        &dir,
        "no_roots.json",
        r#"{
            "kind": "fbsde",
            "coeffs": { "f": [1.0, 0.0, 0.0], "b": [0.0, 1.0, 1.0], "sigma": [0.0, 1.0, 1.0] },
            "h": 2.0, "x0": 1.0, "T": 1.0
        }"#,
    );
    let out = run(&["transform", &doc, "--auto"]);
    assert_eq!(code(&out), 3, "stdout: {} stderr: {}", stdout(&out), stderr(&out));
    assert!(stdout(&out).contains("no admissible transform"));
}

// ------------------------------------------------------------------ solve

#[test]
fn solve_reference_direct_route() {
    let out = run(&["solve", &config("reference.json"), "--paths", "50"]);
    assert_eq!(code(&out), 0, "stderr: {}", stderr(&out));
    let text = stdout(&out);
    assert!(text.contains("route: direct"), "{text}");
    assert!(text.contains("Y(0) estimate: -1.23781"), "{text}");
    assert!(text.contains("verification: pass"), "{text}");
}

#[test]
fn solve_undecided_needs_auto() {
    let out = run(&["solve", &config("undecided.json"), "--paths", "50"]);
    assert_eq!(code(&out), 3);
    assert!(stdout(&out).contains("--auto"));

    let out = run(&["solve", &config("undecided.json"), "--auto", "--paths", "50"]);
    assert_eq!(code(&out), 0, "stderr: {}", stderr(&out));
    let text = stdout(&out);
    assert!(text.contains("route: transformed"), "{text}");
    assert!(text.contains("verification: pass"), "{text}");
}

#[test]
fn solve_writes_path_csv() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("paths.csv");
    let out = run(&[
        "solve",
        &config("coupled.json"),
        "--paths",
        "50",
        "--dt",
        "0.01",
        "--csv",
        &csv.to_string_lossy(),
    ]);
    assert_eq!(code(&out), 0, "stderr: {}", stderr(&out));
    let text = std::fs::read_to_string(&csv).expect("csv written");
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("path_id,t,X,Y,Z"));
    // 10 stored paths, 101 grid points each.
    assert_eq!(text.lines().count(), 1 + 10 * 101);
    let first: Vec<&str> = text.lines().nth(1).unwrap().split(',').collect();
    assert_eq!(first[0], "0");
    assert_eq!(first[1], "0");
    assert_eq!(first[2], "1"); // x0
}

#[test]
fn solve_writes_ode_csv() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("field.csv");
    let out = run(&[
        "solve",
        &config("reference.json"),
        "--paths",
        "50",
        "--dt",
        "0.01",
        "--ode-csv",
        &csv.to_string_lossy(),
    ]);
    assert_eq!(code(&out), 0, "stderr: {}", stderr(&out));
    let text = std::fs::read_to_string(&csv).expect("csv written");
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("t,u,status"));
    assert_eq!(text.lines().count(), 1 + 101);
    let first: Vec<&str> = text.lines().nth(1).unwrap().split(',').collect();
    assert_eq!(first[0], "0");
    // u(0) of the tabulated field; full precision in CSV.
    assert!(first[1].starts_with("-1.237"), "{}", first[1]);
    assert_eq!(first[2], "Bounded");
    let last: Vec<&str> = text.lines().last().unwrap().split(',').collect();
    assert_eq!(last[0], "1");
    assert_eq!(last[1], "-1"); // u(T) = h exactly
}

#[test]
fn solve_seed_changes_residuals() {
    let parse = |out: &Output| -> serde_json::Value {
        serde_json::from_str(&stdout(out)).expect("json report")
    };
    let a = run(&[
        "solve", &config("reference.json"), "--paths", "50", "--dt", "0.01", "--json",
        "--seed", "1",
    ]);
    let b = run(&[
        "solve", &config("reference.json"), "--paths", "50", "--dt", "0.01", "--json",
        "--seed", "2",
    ]);
    let a2 = run(&[
        "solve", &config("reference.json"), "--paths", "50", "--dt", "0.01", "--json",
        "--seed", "1",
    ]);
    assert_eq!(code(&a), 0);
    let (ja, jb, ja2) = (parse(&a), parse(&b), parse(&a2));
    let res = |j: &serde_json::Value| j["fine"]["bsde_residual"]["mean_abs"].as_f64().unwrap();
    assert_ne!(res(&ja), res(&jb), "different seeds must differ");
    assert_eq!(ja, ja2, "same seed must reproduce the full report");
}

// --------------------------------------------------------------------- lq

#[test]
fn lq_reports_law_and_direct_route() {
    let out = run(&["lq", &config("lq.json"), "--paths", "50"]);
    assert_eq!(code(&out), 0, "stderr: {}", stderr(&out));
    let text = stdout(&out);
    assert!(text.contains("u = 2 x + 1 y + 2 z"), "{text}");
    assert!(text.contains("route: direct"), "{text}");
    assert!(text.contains("u(0) = -11.8566"), "{text}");
    assert!(text.contains("terminal residual max 0"), "{text}");
}

#[test]
fn lq_printed_override_takes_transformed_route() {
    let out = run(&[
        "lq",
        &config("lq.json"),
        "--use-printed-fbsde",
        "--paths",
        "50",
    ]);
    assert_eq!(code(&out), 0, "stderr: {}", stderr(&out));
    let text = stdout(&out);
    assert!(
        text.contains("route: transformed (m, n, c) = (1, -0.658, 1)"),
        "{text}"
    );
    assert!(text.contains("transformed x0 = -2.24071"), "{text}");
    assert!(text.contains("Prop4.2(i)"), "{text}");
}

#[test]
fn lq_stationarity_consistent_chain_passes() {
    let out = run(&["lq", &config("lq.json"), "--check-stationarity"]);
    assert_eq!(code(&out), 0, "stdout: {} stderr: {}", stdout(&out), stderr(&out));
    let text = stdout(&out);
    assert!(text.contains("stationarity: pass"), "{text}");
    assert!(text.contains("decay 0.1 -> 0.01: ratio 10"), "{text}");
}

#[test]
fn lq_stationarity_printed_chain_fails_honestly() {
    // The published reference system differs from the Hamiltonian system
    // of this cost functional, so its induced law is not stationary for
    // the true cost: the check must fail and exit 4.
    let out = run(&[
        "lq",
        &config("lq.json"),
        "--use-printed-fbsde",
        "--check-stationarity",
        "--paths",
        "2000",
    ]);
    assert_eq!(code(&out), 4, "stdout: {}", stdout(&out));
    assert!(stdout(&out).contains("stationarity: FAIL"));
}

#[test]
fn lq_csv_includes_control_column() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("control.csv");
    let out = run(&[
        "lq",
        &config("lq.json"),
        "--paths",
        "50",
        "--dt",
        "0.01",
        "--csv",
        &csv.to_string_lossy(),
    ]);
    assert_eq!(code(&out), 0, "stderr: {}", stderr(&out));
    let text = std::fs::read_to_string(&csv).expect("csv written");
    assert!(text.starts_with("path_id,t,X,Y,Z,u\n"), "{}", &text[..60.min(text.len())]);
    let first: Vec<&str> = text.lines().nth(1).unwrap().split(',').collect();
    assert_eq!(first.len(), 6);
}

#[test]
fn lq_rejects_wrong_document_kind_and_degenerate_n() {
    let out = run(&["lq", &config("reference.json"), "--paths", "50"]);
    assert_eq!(code(&out), 2);
    assert!(stderr(&out).contains("kind \"lq\""));

    let dir = tempfile::tempdir().unwrap();
    let doc = write_doc(
        &dir,
        "n0.json",
        r#"{"kind":"lq","A":1,"B":1,"C":1,"D":2,"R":1,"S":2,"N":0,"Q":-4,"x0":1,"T":1}"#,
    );
    let out = run(&["lq", &doc, "--paths", "50"]);
    assert_eq!(code(&out), 2, "stderr: {}", stderr(&out));
}

// ------------------------------------------------------------ json report

#[test]
fn json_report_is_stable_and_carries_exit_code() {
    let out = run(&["analyze", &config("reference.json"), "--json"]);
    assert_eq!(code(&out), 0);
    let report: serde_json::Value = serde_json::from_str(&stdout(&out)).expect("valid json");
    assert_eq!(report["exit_code"], 0);
    assert_eq!(report["command"], "analyze");
    // Emit-parse roundtrip is the identity on the report value.
    let reparsed: serde_json::Value =
        serde_json::from_str(&serde_json::to_string(&report).unwrap()).unwrap();
    assert_eq!(report, reparsed);

    let out = run(&["analyze", &config("undecided.json"), "--json"]);
    assert_eq!(code(&out), 3);
    let report: serde_json::Value = serde_json::from_str(&stdout(&out)).expect("valid json");
    assert_eq!(report["exit_code"], 3);
}

#[test]
fn out_flag_writes_report_file() {
    let dir = tempfile::tempdir().unwrap();
    let path: PathBuf = dir.path().join("report.json");
    let out = run(&[
        "analyze",
        &config("reference.json"),
        "--json",
        "--out",
        &path.to_string_lossy(),
    ]);
    assert_eq!(code(&out), 0);
    assert!(stdout(&out).is_empty(), "report must go to the file");
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(&path).unwrap()).unwrap();
    assert_eq!(report["well_posed"], true);
}

#[test]
fn json_full_precision_vs_human_six_digits() {
    let out_json = run(&["transform", &config("coupled.json"), "--m", "1", "--n", "-0.658", "--json"]);
    let report: serde_json::Value = serde_json::from_str(&stdout(&out_json)).unwrap();
    let h = report["system"]["tilde"]["h"].as_f64().unwrap();
    assert!((h - 1.5526666666666669).abs() < 1e-15, "full precision in JSON, got {h}");
    let out_human = run(&["transform", &config("coupled.json"), "--m", "1", "--n", "-0.658"]);
    assert!(stdout(&out_human).contains("1.55267"), "rounded in human output");
}
