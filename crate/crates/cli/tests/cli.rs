//! End-to-end checks through the installed binaries: spawn `tandem` (and
//! `tool-server`) the way a shell would and assert on exit codes, streams,
//! and the files left behind. Environments are cleared so ambient TANDEM_*
//! variables cannot leak into the settings resolution.

use std::fs;
use std::io::{BufRead, BufReader};
use std::path::{Path, PathBuf};
use std::process::{Command, Output, Stdio};

use tandem_core::trace::read_traces;

fn tandem() -> Command {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_tandem"));
    cmd.env_clear();
    cmd
}

fn assets(rel: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("../../assets")
        .join(rel)
}

fn run_args(cmd: &mut Command) -> &mut Command {
    cmd.arg("--registry")
        .arg(assets("registry.jsonl"))
        .arg("--profile")
        .arg(assets("profile.toml"))
}

fn stdout_of(output: &Output) -> String {
    String::from_utf8_lossy(&output.stdout).into_owned()
}

fn stderr_of(output: &Output) -> String {
    String::from_utf8_lossy(&output.stderr).into_owned()
}

#[test]
fn run_executes_a_fixture_task() {
    let dir = tempfile::tempdir().unwrap();
    let trace_path = dir.path().join("trace.jsonl");
    let output = run_args(
        tandem()
            .arg("run")
            .arg("--fixtures")
            .arg(assets("fixtures/demo.jsonl"))
            .args(["--task", "demo-001-trip-weather"]),
    )
    .arg("--trace-out")
    .arg(&trace_path)
    .output()
    .unwrap();

    assert_eq!(output.status.code(), Some(0), "{}", stderr_of(&output));
    let text = stdout_of(&output);
    assert!(text.contains("task demo-001-trip-weather: completed"), "{text}");

    let traces = read_traces(&trace_path).unwrap();
    assert_eq!(traces.len(), 1);
    assert!(!traces[0].invoked.is_empty());
}

#[test]
fn run_answers_adhoc_queries() {
    let dir = tempfile::tempdir().unwrap();
    let trace_path = dir.path().join("trace.jsonl");
    let output = run_args(
        tandem()
            .arg("run")
            .args(["--query", "what is the weather in Oslo"]),
    )
    .arg("--trace-out")
    .arg(&trace_path)
    .output()
    .unwrap();

    assert_eq!(output.status.code(), Some(0), "{}", stderr_of(&output));
    let traces = read_traces(&trace_path).unwrap();
    assert_eq!(traces[0].task_id, "adhoc");
    assert!(traces[0].final_answer.is_some());
}

#[test]
fn run_reports_missing_input_without_writing() {
    let dir = tempfile::tempdir().unwrap();
    let trace_path = dir.path().join("trace.jsonl");
    let output = run_args(
        tandem()
            .arg("run")
            .arg("--fixtures")
            .arg(dir.path().join("absent.jsonl")),
    )
    .arg("--trace-out")
    .arg(&trace_path)
    .output()
    .unwrap();

    assert_eq!(output.status.code(), Some(3));
    assert!(stderr_of(&output).starts_with("error: input:"));
    assert!(!trace_path.exists());
}

#[test]
fn ablation_flag_changes_token_footprint() {
    let dir = tempfile::tempdir().unwrap();
    let mut tokens = Vec::new();
    for variant in ["base", "full"] {
        let trace_path = dir.path().join(format!("{variant}.jsonl"));
        let output = run_args(
            tandem()
                .arg("run")
                .arg("--fixtures")
                .arg(assets("fixtures/demo.jsonl"))
                .args(["--task", "demo-010-kyoto-guide", "--ablation", variant]),
        )
        .arg("--trace-out")
        .arg(&trace_path)
        .output()
        .unwrap();
        assert_eq!(output.status.code(), Some(0), "{}", stderr_of(&output));
        tokens.push(read_traces(&trace_path).unwrap()[0].input_tokens);
    }
    assert!(
        tokens[1] < tokens[0],
        "all subsystems on should cost fewer prompt tokens than none ({} vs {})",
        tokens[1],
        tokens[0]
    );
}

#[test]
fn eval_writes_deterministic_reports() {
    let dir = tempfile::tempdir().unwrap();
    let names = [
        "report-base.txt",
        "report-base.json",
        "report-bp.txt",
        "report-bp.json",
        "report-bpt.txt",
        "report-bpt.json",
        "report-full.txt",
        "report-full.json",
        "comparison.txt",
    ];

    // Same suite twice, different worker counts: the files must not depend
    // on scheduling.
    for (sub, jobs) in [("a", "4"), ("b", "1")] {
        let output = run_args(
            tandem()
                .arg("eval")
                .arg("--fixtures")
                .arg(assets("fixtures/demo.jsonl"))
                .args(["--jobs", jobs]),
        )
        .arg("--report-dir")
        .arg(dir.path().join(sub))
        .output()
        .unwrap();
        assert_eq!(output.status.code(), Some(0), "{}", stderr_of(&output));
        assert!(stdout_of(&output).contains("reports written to"));
    }

    for name in names {
        let first = fs::read(dir.path().join("a").join(name)).unwrap();
        let second = fs::read(dir.path().join("b").join(name)).unwrap();
        assert_eq!(first, second, "{name} differs between runs");
        if name.ends_with(".txt") && name.starts_with("report-") {
            let text = String::from_utf8(first).unwrap();
            assert!(
                text.contains("partition check:   1.000000000"),
                "{name}: {text}"
            );
        }
    }
}

#[test]
fn eval_rejects_bad_suites_naming_every_offender() {
    let dir = tempfile::tempdir().unwrap();
    let suite = dir.path().join("suite.jsonl");
    fs::write(
        &suite,
        concat!(
            r#"{"task_id":"x","turns":["do things"],"candidate_tools":["web_search","ghost_tool"],"reference_sequence":["web_search"],"reference_answer":"done","metadata":{}}"#,
            "\n",
            r#"{"task_id":"y","turns":["more"],"candidate_tools":["phantom_api","web_search"],"reference_sequence":["web_search"],"reference_answer":"done","metadata":{}}"#,
            "\n",
            r#"{"task_id":"x","turns":["dup"],"candidate_tools":["web_search"],"reference_sequence":["web_search"],"reference_answer":"done","metadata":{}}"#,
            "\n",
        ),
    )
    .unwrap();

    let report_dir = dir.path().join("reports");
    let output = run_args(tandem().arg("eval").arg("--fixtures").arg(&suite))
        .arg("--report-dir")
        .arg(&report_dir)
        .output()
        .unwrap();

    assert_eq!(output.status.code(), Some(3));
    let err = stderr_of(&output);
    assert!(err.contains("x: unknown candidate tool \"ghost_tool\""), "{err}");
    assert!(err.contains("y: unknown candidate tool \"phantom_api\""), "{err}");
    assert!(err.contains("x: duplicate task id"), "{err}");
    assert!(!report_dir.exists(), "no reports for a rejected suite");
}

#[test]
fn eval_judged_run_reports_quality() {
    let dir = tempfile::tempdir().unwrap();
    let output = run_args(
        tandem()
            .arg("eval")
            .arg("--fixtures")
            .arg(assets("fixtures/demo.jsonl"))
            .args(["--variants", "full", "--judge", "stub"]),
    )
    .arg("--report-dir")
    .arg(dir.path())
    .output()
    .unwrap();

    assert_eq!(output.status.code(), Some(0), "{}", stderr_of(&output));
    let text = fs::read_to_string(dir.path().join("report-full.txt")).unwrap();
    assert!(text.contains("quality (10 judged): correctness"), "{text}");
    assert!(!text.contains("not judged"), "{text}");
}

#[test]
fn inspect_renders_stored_steps() {
    let dir = tempfile::tempdir().unwrap();
    let trace_path = dir.path().join("trace.jsonl");
    let run = run_args(
        tandem()
            .arg("run")
            .arg("--fixtures")
            .arg(assets("fixtures/demo.jsonl"))
            .args(["--task", "demo-003-vienna-trip"]),
    )
    .arg("--trace-out")
    .arg(&trace_path)
    .output()
    .unwrap();
    assert_eq!(run.status.code(), Some(0), "{}", stderr_of(&run));

    let output = tandem().arg("inspect").arg(&trace_path).output().unwrap();
    assert_eq!(output.status.code(), Some(0), "{}", stderr_of(&output));
    let text = stdout_of(&output);
    assert!(text.contains("task demo-003-vienna-trip"), "{text}");
    assert!(text.contains("steps:"), "{text}");
    assert!(text.contains("[ok]"), "{text}");
    assert!(text.contains("final answer:"), "{text}");
}

#[test]
fn inspect_rejects_corrupt_records_with_offset() {
    let dir = tempfile::tempdir().unwrap();
    let trace_path = dir.path().join("trace.jsonl");
    fs::write(&trace_path, "not a record\n").unwrap();

    let output = tandem().arg("inspect").arg(&trace_path).output().unwrap();
    assert_eq!(output.status.code(), Some(6));
    let err = stderr_of(&output);
    assert!(err.contains("malformed record at byte"), "{err}");
}

#[test]
fn tools_validate_accepts_the_bundled_registry() {
    let output = tandem()
        .arg("tools")
        .arg("validate")
        .arg("--registry")
        .arg(assets("registry.jsonl"))
        .output()
        .unwrap();
    assert_eq!(output.status.code(), Some(0), "{}", stderr_of(&output));
    assert!(stdout_of(&output).starts_with("registry ok:"));
}

#[test]
fn show_config_output_replays_identically() {
    let dir = tempfile::tempdir().unwrap();
    let first = tandem().arg("--show-config").output().unwrap();
    assert_eq!(first.status.code(), Some(0), "{}", stderr_of(&first));
    let printed = stdout_of(&first);
    let parsed: toml::Value = toml::from_str(&printed).expect("printout is valid TOML");
    assert!(parsed.get("engine").is_some());

    let config_path = dir.path().join("settings.toml");
    fs::write(&config_path, &printed).unwrap();
    let second = tandem()
        .arg("--config")
        .arg(&config_path)
        .arg("--show-config")
        .output()
        .unwrap();
    assert_eq!(second.status.code(), Some(0), "{}", stderr_of(&second));
    assert_eq!(printed, stdout_of(&second));
}

struct KillOnDrop(std::process::Child);

impl Drop for KillOnDrop {
    fn drop(&mut self) {
        let _ = self.0.kill();
        let _ = self.0.wait();
    }
}

#[test]
fn tool_server_answers_remote_listings() {
    let mut child = Command::new(env!("CARGO_BIN_EXE_tool-server"))
        .env_clear()
        .arg("--registry")
        .arg(assets("registry.jsonl"))
        .args(["--addr", "127.0.0.1:0"])
        .stdout(Stdio::piped())
        .stderr(Stdio::null())
        .spawn()
        .unwrap();
    let mut announcement = String::new();
    BufReader::new(child.stdout.take().unwrap())
        .read_line(&mut announcement)
        .unwrap();
    let _guard = KillOnDrop(child);
    let addr = announcement
        .trim()
        .rsplit(' ')
        .next()
        .expect("announcement names the socket");

    let remote = tandem()
        .arg("tools")
        .arg("list")
        .args(["--remote", addr])
        .output()
        .unwrap();
    assert_eq!(remote.status.code(), Some(0), "{}", stderr_of(&remote));

    let local = tandem()
        .arg("tools")
        .arg("list")
        .arg("--registry")
        .arg(assets("registry.jsonl"))
        .output()
        .unwrap();
    assert_eq!(local.status.code(), Some(0), "{}", stderr_of(&local));

    // The wire adds nothing and loses nothing: both listings render the
    // same schemas.
    assert_eq!(stdout_of(&remote), stdout_of(&local));
}
