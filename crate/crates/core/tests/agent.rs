use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use snopkit::agent::{
    FailureReason, Mode, Pipeline, PipelineConfig, ReviewPolicy, RunRecord, RunStatus, State, Task,
    CONFIRMED_MARKER, PENDING_MARKER, RECORD_FILE, REVIEW_DIR,
};
use snopkit::corpus::{load_corpus, load_instance};
use snopkit::craft::{Scenario, ScriptedBackend, StagePlan};
use snopkit::llm::{ChatBackend, ChatExchange, Completion, LlmError};
use snopkit::prompts::PromptRegistry;
use snopkit::sandbox::{Classification, ProcessSandbox, TestKind};

fn corpus() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../fixtures/corpus")
}

fn task(id: &str) -> Task {
    Task::from(&load_instance(&load_corpus(&corpus()).unwrap(), id).unwrap())
}

fn scenario(id: &str, plan: StagePlan, autotests: &[&str]) -> Scenario {
    Scenario {
        instance: id.into(),
        plan,
        rephrasings: BTreeMap::new(),
        autotests: autotests.iter().map(|s| s.to_string()).collect(),
    }
}

fn plan(codegen: &str, debug: &str, fix: &str) -> StagePlan {
    StagePlan {
        codegen: codegen.into(),
        debug: debug.into(),
        fix: fix.into(),
    }
}

fn scripted(s: Scenario) -> ScriptedBackend {
    ScriptedBackend::new(&corpus().join(&s.instance), s).unwrap()
}

fn run_with(
    backend: &dyn ChatBackend,
    config: PipelineConfig,
    review: ReviewPolicy,
    task: &Task,
    runs: &Path,
) -> RunRecord {
    let prompts = PromptRegistry::builtin();
    let sb = ProcessSandbox::default();
    let p = Pipeline {
        config,
        backend,
        prompts: &prompts,
        executor: &sb,
        review,
        runs_dir: runs.to_path_buf(),
    };
    p.run(task, "run").unwrap()
}

fn run(s: Scenario, config: PipelineConfig) -> (RunRecord, tempfile::TempDir) {
    let tmp = tempfile::tempdir().unwrap();
    let t = task(&s.instance);
    let r = run_with(&scripted(s), config, ReviewPolicy::Batch, &t, tmp.path());
    (r, tmp)
}

#[test]
fn debug_loop_repairs_a_crashing_program() {
    let s = scenario("diet-1", plan("broken", "reference", "reference"), &[]);
    let (r, tmp) = run(s, PipelineConfig::for_mode(Mode::Debug));
    assert_eq!(r.status, RunStatus::Solved);
    let a = &r.attempts[0];
    assert_eq!(a.debug_iters, 1);
    assert_eq!(a.executions.len(), 2);
    assert_eq!(a.executions[0].classification, Classification::RuntimeError);
    assert_eq!(a.code_versions.len(), 2);
    assert_eq!(
        a.trail,
        [
            State::Formulate,
            State::Codegen,
            State::Execute,
            State::Debug,
            State::Execute,
            State::Solved
        ]
    );
    assert_eq!(r.winning_output().unwrap()["cost"], 13.0);
    let run_dir = tmp.path().join("run");
    assert!(run_dir.join(RECORD_FILE).exists());
    assert!(!run_dir.join(".partial").exists());
    assert!(run_dir
        .join(a.workspace.as_deref().unwrap())
        .join("exec.log")
        .exists());
}

#[test]
fn debug_prompt_carries_the_traceback() {
    struct Spy(ScriptedBackend, std::sync::Mutex<Vec<String>>);
    impl ChatBackend for Spy {
        fn complete(&self, ex: &ChatExchange) -> Result<Completion, LlmError> {
            if ex.tag.as_deref() == Some("debug") {
                self.1.lock().unwrap().push(ex.user_text());
            }
            self.0.complete(ex)
        }
    }
    let tmp = tempfile::tempdir().unwrap();
    let spy = Spy(
        scripted(scenario(
            "diet-1",
            plan("broken", "reference", "reference"),
            &[],
        )),
        Default::default(),
    );
    run_with(
        &spy,
        PipelineConfig::for_mode(Mode::Debug),
        ReviewPolicy::Batch,
        &task("diet-1"),
        tmp.path(),
    );
    let prompts = spy.1.lock().unwrap();
    assert_eq!(prompts.len(), 1);
    assert!(prompts[0].contains("NameError"), "{}", prompts[0]);
}

#[test]
fn prompt_only_neither_debugs_nor_tests() {
    let s = scenario(
        "diet-1",
        plan("broken", "reference", "reference"),
        &["format"],
    );
    let (r, _tmp) = run(s, PipelineConfig::for_mode(Mode::PromptOnly));
    assert_eq!(r.status, RunStatus::Failed);
    let a = &r.attempts[0];
    assert_eq!(a.executions.len(), 1);
    assert_eq!(a.failure, Some(FailureReason::DebugBudgetExhausted));
    assert!(a.tests.is_empty());
}

#[test]
fn fix_loop_acts_on_supervised_test_failures() {
    let s = scenario("transport-1", plan("bad", "bad", "reference"), &["format"]);
    let (r, _tmp) = run(s.clone(), PipelineConfig::for_mode(Mode::DebugSupervised));
    assert_eq!(r.status, RunStatus::Solved);
    let a = &r.attempts[0];
    assert_eq!(a.fix_iters, 1);
    assert!(a.tests.iter().all(|t| t.kind == TestKind::Supervised));
    assert!(!a.test_reports[0].passed);
    assert!(a.test_reports[1].passed);
    assert_eq!(r.winning_output().unwrap()["total_cost"], 12.0);

    // The weak generated tests alone let the wrong program through.
    let (r, _tmp) = run(s, PipelineConfig::for_mode(Mode::DebugAutotests));
    assert_eq!(r.status, RunStatus::Solved);
    assert_eq!(r.attempts[0].fix_iters, 0);
    assert!(r.attempts[0].tests.iter().all(|t| t.kind == TestKind::Auto));
    assert_eq!(r.winning_output().unwrap()["total_cost"], 9.0);
}

#[test]
fn budgets_bound_the_loops_exactly() {
    for f in [0, 1, 2] {
        let mut c = PipelineConfig::for_mode(Mode::DebugSupervised);
        c.max_fix_iters = f;
        let (r, _tmp) = run(
            scenario("staffing-1", StagePlan::uniform("relaxed"), &[]),
            c,
        );
        let a = &r.attempts[0];
        assert_eq!(r.status, RunStatus::ExecutedOnly);
        assert_eq!(a.failure, Some(FailureReason::FixBudgetExhausted));
        assert_eq!(a.fix_iters, f);
        assert_eq!(a.executions.len(), 1 + f as usize);
    }
    for d in [0, 2] {
        let mut c = PipelineConfig::for_mode(Mode::Debug);
        c.max_debug_iters = d;
        let (r, _tmp) = run(scenario("prod-plan-1", StagePlan::uniform("crash"), &[]), c);
        let a = &r.attempts[0];
        assert_eq!(r.status, RunStatus::Failed);
        assert_eq!(a.failure, Some(FailureReason::DebugBudgetExhausted));
        assert_eq!(a.debug_iters, d);
        assert_eq!(a.executions.len(), 1 + d as usize);
    }
}

#[test]
fn missing_generated_tests_fall_back_to_the_structural_check() {
    let s = scenario("knapsack-1", StagePlan::uniform("reference"), &[]);
    let (r, _tmp) = run(s, PipelineConfig::for_mode(Mode::DebugAutotests));
    assert_eq!(r.status, RunStatus::Solved);
    assert!(r.attempts[0].structural_fallback);
}

#[test]
fn augmentation_stops_at_the_first_solved_rephrasing() {
    let mut s = scenario(
        "staffing-1",
        StagePlan::uniform("relaxed"),
        &["constraints"],
    );
    s.rephrasings
        .insert("2".into(), StagePlan::uniform("reference"));
    let (r, _tmp) = run(s.clone(), PipelineConfig::for_mode(Mode::Full));
    assert_eq!(r.status, RunStatus::Solved);
    assert_eq!(r.attempts.len(), 3);
    assert_eq!(r.winner, Some(2));
    assert!(r.attempts[2].snop.problem_info[0].starts_with("In other words,"));
    assert_eq!(r.winning_workspace(), Some("attempt-2"));
    assert_eq!(r.winning_output().unwrap()["total_cost"], 13);
    let total: u64 = r.attempts.iter().map(|a| a.tokens.completion).sum();
    assert_eq!(r.tokens.completion, total);

    let mut c = PipelineConfig::for_mode(Mode::Full);
    c.concurrent_augmentation = true;
    let (r2, _tmp) = run(s, c);
    assert_eq!(r2.attempts.len(), 6);
    assert_eq!(r2.winner, Some(2));
}

#[test]
fn rephrasing_that_changes_parameters_is_rejected() {
    struct Mutating(ScriptedBackend);
    impl ChatBackend for Mutating {
        fn complete(&self, ex: &ChatExchange) -> Result<Completion, LlmError> {
            let mut c = self.0.complete(ex)?;
            if ex.tag.as_deref() == Some("rephrase") {
                c.text = c.text.replace("\\param{C}", "\\param{CAP}");
            }
            Ok(c)
        }
    }
    let tmp = tempfile::tempdir().unwrap();
    let mut c = PipelineConfig::for_mode(Mode::Full);
    c.augmentations = 2;
    let b = Mutating(scripted(scenario(
        "prod-plan-1",
        StagePlan::uniform("crash"),
        &[],
    )));
    let r = run_with(&b, c, ReviewPolicy::Batch, &task("prod-plan-1"), tmp.path());
    assert_eq!(r.attempts.len(), 3);
    for a in &r.attempts[1..] {
        assert_eq!(
            a.failure,
            Some(FailureReason::ParamSetMutated {
                missing: vec!["C".into()],
                added: vec!["CAP".into()],
            })
        );
        assert!(a.executions.is_empty());
        assert_eq!(a.tokens.calls, 1);
    }
}

#[test]
fn interactive_review_waits_and_uses_edits() {
    let tmp = tempfile::tempdir().unwrap();
    let runs = tmp.path().to_path_buf();
    let review_dir = runs.join("run").join(REVIEW_DIR).join("attempt-0");
    let reviewer = std::thread::spawn(move || {
        let deadline = Instant::now() + Duration::from_secs(20);
        while !review_dir.join(PENDING_MARKER).exists() {
            assert!(Instant::now() < deadline, "no review request");
            std::thread::sleep(Duration::from_millis(20));
        }
        // Swap the weak format check for a real one.
        let src = fs::read_to_string(corpus().join("transport-1/tests/constraints.py")).unwrap();
        fs::write(review_dir.join("tests/0.py"), src).unwrap();
        fs::write(review_dir.join(CONFIRMED_MARKER), "").unwrap();
    });
    let b = scripted(scenario(
        "transport-1",
        plan("bad", "bad", "reference"),
        &["format"],
    ));
    let r = run_with(
        &b,
        PipelineConfig::for_mode(Mode::DebugSupervised),
        ReviewPolicy::interactive(Duration::from_secs(30)),
        &task("transport-1"),
        &runs,
    );
    reviewer.join().unwrap();
    let a = &r.attempts[0];
    assert!(a.trail.contains(&State::Review));
    assert_eq!(a.tests.len(), 1);
    assert_eq!(a.tests[0].kind, TestKind::Human);
    assert_eq!(a.fix_iters, 1);
    assert_eq!(r.winning_output().unwrap()["total_cost"], 12.0);
}

#[test]
fn unconfirmed_review_times_out() {
    let tmp = tempfile::tempdir().unwrap();
    let b = scripted(scenario(
        "knapsack-1",
        StagePlan::uniform("reference"),
        &["format"],
    ));
    let r = run_with(
        &b,
        PipelineConfig::for_mode(Mode::DebugSupervised),
        ReviewPolicy::interactive(Duration::from_millis(200)),
        &task("knapsack-1"),
        tmp.path(),
    );
    assert_eq!(r.attempts[0].failure, Some(FailureReason::ReviewTimeout));
    assert_ne!(r.status, RunStatus::Solved);
}

#[test]
fn reused_run_ids_are_refused() {
    let tmp = tempfile::tempdir().unwrap();
    fs::create_dir(tmp.path().join("run")).unwrap();
    let prompts = PromptRegistry::builtin();
    let sb = ProcessSandbox::default();
    let b = scripted(scenario("knapsack-1", StagePlan::uniform("reference"), &[]));
    let p = Pipeline {
        config: PipelineConfig::for_mode(Mode::Debug),
        backend: &b,
        prompts: &prompts,
        executor: &sb,
        review: ReviewPolicy::Batch,
        runs_dir: tmp.path().to_path_buf(),
    };
    assert!(matches!(
        p.run(&task("knapsack-1"), "run"),
        Err(snopkit::agent::AgentError::RunExists(_))
    ));
}

#[test]
fn record_round_trips_through_json() {
    let s = scenario("knapsack-1", StagePlan::uniform("reference"), &["format"]);
    let (r, tmp) = run(s, PipelineConfig::for_mode(Mode::DebugAutotests));
    let text = fs::read_to_string(tmp.path().join("run").join(RECORD_FILE)).unwrap();
    let back: RunRecord = serde_json::from_str(&text).unwrap();
    assert_eq!(back, r);
}
