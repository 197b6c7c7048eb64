use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output, Stdio};
use std::time::{Duration, Instant};

fn fixtures() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../fixtures")
}

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_snopkit"));
    c.env_remove("AGENT_LLM_API_KEY")
        .env_remove("AGENT_LLM_BASE_URL");
    c
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().unwrap()
}

fn text(o: &Output) -> (String, String) {
    (
        String::from_utf8_lossy(&o.stdout).into(),
        String::from_utf8_lossy(&o.stderr).into(),
    )
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn instance_file(id: &str, file: &str) -> String {
    fixtures()
        .join("corpus")
        .join(id)
        .join(file)
        .to_string_lossy()
        .into_owned()
}

fn solve(mode: &str, id: &str, runs: &Path, extra: &[&str]) -> Output {
    let transcript = fixtures()
        .join("transcripts")
        .join(mode)
        .join(format!("{id}.jsonl"));
    let mut args = vec![
        "--mode",
        mode,
        "--backend",
        "replay",
        "--transcript",
        p(&transcript),
        "--runs-dir",
        p(runs),
        "solve",
    ];
    let (snop, data) = (
        instance_file(id, "snop.txt"),
        instance_file(id, "data.json"),
    );
    args.push(&snop);
    args.push(&data);
    args.extend_from_slice(extra);
    run(&args)
}

#[test]
fn solve_replay_exits_zero_and_points_at_the_output() {
    let tmp = tempfile::tempdir().unwrap();
    let o = solve("debug", "prod-plan-1", tmp.path(), &["--run-id", "r1"]);
    let (out, err) = text(&o);
    assert_eq!(o.status.code(), Some(0), "{out}{err}");
    assert!(out.contains("status: solved"));
    let line = out
        .lines()
        .find_map(|l| l.strip_prefix("output: "))
        .unwrap();
    let doc: serde_json::Value = serde_json::from_str(&fs::read_to_string(line).unwrap()).unwrap();
    assert_eq!(doc["objective"], 12.0);
    assert!(tmp.path().join("r1/record.json").exists());

    // Same run id again refuses to overwrite.
    let o = solve("debug", "prod-plan-1", tmp.path(), &["--run-id", "r1"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(text(&o).1.contains("already exists"));
}

#[test]
fn missing_data_file_is_a_usage_error_naming_the_path() {
    let o = run(&[
        "solve",
        &instance_file("prod-plan-1", "snop.txt"),
        "/no/such/data.json",
    ]);
    assert_eq!(o.status.code(), Some(1));
    assert!(text(&o).1.contains("/no/such/data.json"));
}

#[test]
fn outcome_classes_map_to_exit_codes() {
    let tmp = tempfile::tempdir().unwrap();
    assert_eq!(
        solve("prompt_only", "diet-1", tmp.path(), &[])
            .status
            .code(),
        Some(3)
    );
    let tests = fixtures().join("corpus/staffing-1/tests");
    let o = solve(
        "debug_supervised",
        "staffing-1",
        tmp.path(),
        &["--tests", p(&tests)],
    );
    let (out, err) = text(&o);
    assert_eq!(o.status.code(), Some(2), "{out}{err}");
    assert!(out.contains("fix iterations exhausted"));
}

#[test]
fn bench_over_the_fixture_corpus_prints_five_mode_rows() {
    let tmp = tempfile::tempdir().unwrap();
    let out_dir = tmp.path().join("out");
    let o = run(&[
        "--transcript",
        p(&fixtures().join("transcripts")),
        "--runs-dir",
        p(&tmp.path().join("runs")),
        "--workers",
        "4",
        "bench",
        p(&fixtures().join("corpus")),
        "--out",
        p(&out_dir),
    ]);
    let (out, err) = text(&o);
    assert_eq!(o.status.code(), Some(0), "{out}{err}");
    let rows: Vec<&str> = out
        .lines()
        .skip(1)
        .take_while(|l| !l.contains("tokens"))
        .collect();
    assert_eq!(rows.len(), 5, "{out}");
    assert!(rows[0].starts_with("prompt_only") && rows[4].starts_with("full"));
    assert_eq!(
        fs::read_to_string(out_dir.join("runs.csv"))
            .unwrap()
            .lines()
            .count(),
        31
    );
    assert!(fs::read_to_string(out_dir.join("plot.csv"))
        .unwrap()
        .starts_with("kind,mode,instance"));
    assert_eq!(fs::read_dir(out_dir.join("reports")).unwrap().count(), 1);
}

#[test]
fn bench_single_mode_and_sweep() {
    let tmp = tempfile::tempdir().unwrap();
    let base: Vec<String> = vec![
        "--transcript".into(),
        p(&fixtures().join("transcripts")).into(),
        "--runs-dir".into(),
        p(&tmp.path().join("runs")).into(),
    ];
    let corpus = fixtures().join("corpus");
    let mut args: Vec<String> = base.to_vec();
    args.extend([
        "bench".into(),
        p(&corpus).into(),
        "--modes".into(),
        "full".into(),
        "--instances".into(),
        "knapsack-1,blend-1".into(),
        "--out".into(),
        p(&tmp.path().join("a")).into(),
    ]);
    let o = bin().args(&args).output().unwrap();
    let (out, err) = text(&o);
    assert_eq!(o.status.code(), Some(0), "{out}{err}");
    let mode_rows = out
        .lines()
        .filter(|l| l.starts_with("full ") && !l.contains("tokens"))
        .count();
    assert_eq!(mode_rows, 1, "{out}");

    let mut args: Vec<String> = base.to_vec();
    args.extend([
        "--mode".into(),
        "full".into(),
        "bench".into(),
        p(&corpus).into(),
        "--instances".into(),
        "staffing-1".into(),
        "--sweep".into(),
        "augmentations=0..5".into(),
        "--out".into(),
        p(&tmp.path().join("s")).into(),
    ]);
    let o = bin().args(&args).output().unwrap();
    let (out, err) = text(&o);
    assert_eq!(o.status.code(), Some(0), "{out}{err}");
    let csv = fs::read_to_string(tmp.path().join("s/sweep.csv")).unwrap();
    assert_eq!(csv.lines().count(), 7, "{csv}");
    assert!(csv
        .lines()
        .nth(1)
        .unwrap()
        .starts_with("augmentations,0,debug_supervised"));
}

#[test]
fn unknown_config_keys_are_rejected() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("c.toml");
    fs::write(&cfg, "modez = \"full\"\n").unwrap();
    let o = run(&[
        "--config",
        p(&cfg),
        "corpus",
        "validate",
        p(&fixtures().join("corpus")),
    ]);
    assert_eq!(o.status.code(), Some(1));
    assert!(text(&o).1.contains("modez"));
}

#[test]
fn corpus_validates_and_transcripts_inspect() {
    let o = run(&["corpus", "validate", p(&fixtures().join("corpus"))]);
    let (out, err) = text(&o);
    assert_eq!(o.status.code(), Some(0), "{out}{err}");
    assert_eq!(out.lines().filter(|l| l.starts_with("ok ")).count(), 6);

    let o = run(&[
        "transcripts",
        "inspect",
        p(&fixtures().join("transcripts/debug/diet-1.jsonl")),
    ]);
    let (out, _) = text(&o);
    assert_eq!(o.status.code(), Some(0));
    assert!(out.contains("debug-diet-1") && out.contains("records"));
}

fn wait_for(path: &Path) {
    let deadline = Instant::now() + Duration::from_secs(30);
    while !path.exists() {
        assert!(
            Instant::now() < deadline,
            "{} never appeared",
            path.display()
        );
        std::thread::sleep(Duration::from_millis(25));
    }
}

/// Starts an interactive solve that pauses for review.
fn paused_solve(runs: &Path, run_id: &str) -> std::process::Child {
    let transcript = fixtures().join("transcripts/debug_supervised/transport-1.jsonl");
    bin()
        .args([
            "--mode",
            "debug_supervised",
            "--transcript",
            p(&transcript),
            "--runs-dir",
            p(runs),
            "solve",
            &instance_file("transport-1", "snop.txt"),
            &instance_file("transport-1", "data.json"),
            "--run-id",
            run_id,
            "--review",
            "interactive",
            "--review-timeout-secs",
            "60",
        ])
        .stdout(Stdio::piped())
        .stderr(Stdio::piped())
        .spawn()
        .unwrap()
}

fn confirm(runs: &Path, run_id: &str) -> Output {
    let mut child = bin()
        .args(["--runs-dir", p(runs), "review", run_id])
        .stdin(Stdio::piped())
        .stdout(Stdio::piped())
        .spawn()
        .unwrap();
    use std::io::Write;
    child.stdin.take().unwrap().write_all(b"\n").unwrap();
    child.wait_with_output().unwrap()
}

fn record(runs: &Path, run_id: &str) -> serde_json::Value {
    serde_json::from_str(&fs::read_to_string(runs.join(run_id).join("record.json")).unwrap())
        .unwrap()
}

#[test]
fn review_confirms_a_paused_run_unchanged() {
    let tmp = tempfile::tempdir().unwrap();
    let solve = paused_solve(tmp.path(), "rv");
    let att = tmp.path().join("rv/review/attempt-0");
    wait_for(&att.join("PENDING"));
    let o = confirm(tmp.path(), "rv");
    assert_eq!(o.status.code(), Some(0), "{}", text(&o).0);
    assert!(text(&o).0.contains("tests awaiting review"));
    let done = solve.wait_with_output().unwrap();
    assert_eq!(done.status.code(), Some(0), "{:?}", text(&done));
    let rec = record(tmp.path(), "rv");
    let tests = rec["attempts"][0]["tests"].as_array().unwrap();
    assert!(tests.iter().all(|t| t["kind"] == "auto"), "{tests:?}");
}

#[test]
fn review_picks_up_edited_tests() {
    let tmp = tempfile::tempdir().unwrap();
    let solve = paused_solve(tmp.path(), "rv");
    let att = tmp.path().join("rv/review/attempt-0");
    wait_for(&att.join("PENDING"));
    let edited = "# kind: human\nprint('FAIL: reviewer rejects this plan')\n";
    fs::write(att.join("tests/0.py"), edited).unwrap();
    assert_eq!(confirm(tmp.path(), "rv").status.code(), Some(0));
    let done = solve.wait_with_output().unwrap();
    // The fix request now differs from anything recorded, so the run ends
    // without a solution, but the reviewer's test is what ran.
    assert_eq!(done.status.code(), Some(2), "{:?}", text(&done));
    let rec = record(tmp.path(), "rv");
    let a = &rec["attempts"][0];
    assert_eq!(a["tests"][0]["kind"], "human");
    assert_eq!(a["tests"][0]["source"], edited);
    assert_eq!(a["test_reports"][0]["passed"], false);
}

#[test]
fn review_without_a_paused_run_exits_one() {
    let tmp = tempfile::tempdir().unwrap();
    let o = confirm(tmp.path(), "nothing");
    assert_eq!(o.status.code(), Some(1));
}

/// Set `UPDATE_GOLDEN=1` to rewrite.
#[test]
fn help_output_matches_golden_files() {
    let commands: &[&[&str]] = &[
        &[],
        &["solve"],
        &["bench"],
        &["transcripts"],
        &["transcripts", "craft"],
        &["transcripts", "inspect"],
        &["corpus", "validate"],
        &["review"],
    ];
    let golden = Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/golden");
    for cmd in commands {
        let mut args: Vec<&str> = cmd.to_vec();
        args.push("--help");
        let o = run(&args);
        assert_eq!(o.status.code(), Some(0));
        let out = String::from_utf8(o.stdout).unwrap();
        for flag in [
            "--mode",
            "--max-debug-iters",
            "--max-fix-iters",
            "--augmentations",
            "--backend",
            "--transcript",
            "--solver",
            "--timeout-secs",
            "--workers",
            "--config",
        ] {
            assert!(out.contains(flag), "{cmd:?} help lacks {flag}");
        }
        let name = if cmd.is_empty() {
            "snopkit".to_string()
        } else {
            cmd.join("-")
        };
        let path = golden.join(format!("{name}.txt"));
        if std::env::var_os("UPDATE_GOLDEN").is_some() {
            fs::write(&path, &out).unwrap();
        } else {
            let want =
                fs::read_to_string(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
            assert_eq!(
                out, want,
                "{name} help drifted; rerun with UPDATE_GOLDEN=1 if intended"
            );
        }
    }
}
