use std::fs;
use std::path::{Path, PathBuf};
use std::thread;
use std::time::{Duration, Instant};

use crate::llm::ChatBackend;
use crate::prompts::{Bindings, PromptRegistry, TemplateName};
use crate::sandbox::{Executor, TestEntry, TestKind, TestReport, TestScript, Workspace};
use crate::snop::{check_conformance, check_conformance_seeded, parse_snop, Snop};

use super::extract::{extract_code, fenced_blocks};
use super::{
    AgentError, Attempt, FailureReason, LlmCall, PipelineConfig, ReviewPolicy, RunRecord,
    RunStatus, State, Task, TokenUsage,
};

pub const RECORD_FILE: &str = "record.json";
const PARTIAL_MARKER: &str = ".partial";
const STRUCTURAL_TEST_ID: &str = "structural_conformance";

/// Everything a run needs besides the task.
pub struct Pipeline<'a> {
    pub config: PipelineConfig,
    pub backend: &'a dyn ChatBackend,
    pub prompts: &'a PromptRegistry,
    pub executor: &'a dyn Executor,
    pub review: ReviewPolicy,
    /// Parent of per-run directories.
    pub runs_dir: PathBuf,
}

/// Runs `task` under `pipeline` as `run_id`.
pub fn run_pipeline(
    pipeline: &Pipeline<'_>,
    task: &Task,
    run_id: &str,
) -> Result<RunRecord, AgentError> {
    pipeline.run(task, run_id)
}

fn io_err(path: &Path) -> impl Fn(std::io::Error) -> AgentError + '_ {
    move |source| AgentError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// Per-run context shared by the attempts.
struct Ctx<'p, 'a> {
    p: &'p Pipeline<'a>,
    task: &'p Task,
    run_dir: PathBuf,
}

impl<'a> Pipeline<'a> {
    pub fn run_dir(&self, run_id: &str) -> PathBuf {
        self.runs_dir.join(run_id)
    }

    pub fn run(&self, task: &Task, run_id: &str) -> Result<RunRecord, AgentError> {
        self.config.validate()?;
        let started = Instant::now();
        let run_dir = self.run_dir(run_id);
        fs::create_dir_all(&self.runs_dir).map_err(io_err(&self.runs_dir))?;
        match fs::create_dir(&run_dir) {
            Ok(()) => {}
            Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => {
                return Err(AgentError::RunExists(run_dir))
            }
            Err(e) => return Err(io_err(&run_dir)(e)),
        }
        let partial = run_dir.join(PARTIAL_MARKER);
        fs::write(&partial, "").map_err(io_err(&partial))?;

        let ctx = Ctx {
            p: self,
            task,
            run_dir: run_dir.clone(),
        };
        let attempts = if self.config.concurrent_augmentation {
            ctx.run_concurrent()
        } else {
            ctx.run_sequential()
        };

        let winner = attempts.iter().position(Attempt::is_solved);
        let status = if winner.is_some() {
            RunStatus::Solved
        } else if attempts.iter().any(Attempt::produced_output) {
            RunStatus::ExecutedOnly
        } else {
            RunStatus::Failed
        };
        let mut tokens = TokenUsage::default();
        for a in &attempts {
            tokens.add(a.tokens);
        }
        let record = RunRecord {
            run_id: run_id.to_string(),
            instance_id: task.id.clone(),
            config: self.config.clone(),
            attempts,
            status,
            winner,
            tokens,
            duration_ms: started.elapsed().as_millis() as u64,
        };
        let path = run_dir.join(RECORD_FILE);
        let json = serde_json::to_string_pretty(&record).expect("records serialize");
        fs::write(&path, json).map_err(io_err(&path))?;
        fs::remove_file(&partial).map_err(io_err(&partial))?;
        Ok(record)
    }
}

impl<'p, 'a> Ctx<'p, 'a> {
    fn config(&self) -> &PipelineConfig {
        &self.p.config
    }

    fn run_sequential(&self) -> Vec<Attempt> {
        let mut attempts = Vec::new();
        let mut previous: Vec<Snop> = Vec::new();
        for i in 0..=self.config().augmentations as usize {
            let attempt = if i == 0 {
                self.run_attempt(Attempt::new(0, self.task.snop.clone()))
            } else {
                match self.rephrase(i, &previous) {
                    Ok((snop, usage)) => {
                        previous.push(snop.clone());
                        let mut a = Attempt::new(i, snop);
                        a.llm_calls.push(usage.clone());
                        add_call(&mut a.tokens, &usage);
                        self.run_attempt(a)
                    }
                    Err(failed) => failed,
                }
            };
            let solved = attempt.is_solved();
            attempts.push(attempt);
            if solved {
                break;
            }
        }
        attempts
    }

    /// Rephrasings are generated up front, in order, then every attempt runs
    /// on its own thread.
    fn run_concurrent(&self) -> Vec<Attempt> {
        let mut pending: Vec<Result<Attempt, Attempt>> =
            vec![Ok(Attempt::new(0, self.task.snop.clone()))];
        let mut previous: Vec<Snop> = Vec::new();
        for i in 1..=self.config().augmentations as usize {
            pending.push(match self.rephrase(i, &previous) {
                Ok((snop, usage)) => {
                    previous.push(snop.clone());
                    let mut a = Attempt::new(i, snop);
                    a.llm_calls.push(usage.clone());
                    add_call(&mut a.tokens, &usage);
                    Ok(a)
                }
                Err(failed) => Err(failed),
            });
        }
        thread::scope(|s| {
            let handles: Vec<_> = pending
                .into_iter()
                .map(|p| match p {
                    Ok(a) => Ok(s.spawn(move || self.run_attempt(a))),
                    Err(failed) => Err(failed),
                })
                .collect();
            handles
                .into_iter()
                .map(|h| match h {
                    Ok(h) => h.join().expect("attempt thread panicked"),
                    Err(failed) => failed,
                })
                .collect()
        })
    }

    /// Asks for rephrasing `index`. On failure returns the already-failed
    /// attempt that stands in for it.
    fn rephrase(&self, index: usize, previous: &[Snop]) -> Result<(Snop, LlmCall), Attempt> {
        let original = &self.task.snop;
        let mut failed = Attempt::new(index, original.clone());
        let prev_text = if previous.is_empty() {
            "(none)".to_string()
        } else {
            previous
                .iter()
                .enumerate()
                .map(|(j, s)| {
                    let mut text = format!("Rephrasing {}:\n", j + 1);
                    for line in &s.problem_info {
                        text.push_str(&format!("  - {line}\n"));
                    }
                    text.push_str(&format!("  objective: {}", s.objective));
                    text
                })
                .collect::<Vec<_>>()
                .join("\n")
        };
        let bindings = Bindings::new()
            .set("snop", original.serialize())
            .set("index", index.to_string())
            .set("previous", prev_text);
        let text = match self.call(&mut failed, TemplateName::Rephrase, &bindings) {
            Ok(t) => t,
            Err(reason) => return Err(fail(failed, reason)),
        };
        let call = failed.llm_calls.last().cloned().expect("call recorded");
        let redo = |reason| Err(fail(failed.clone(), reason));
        let body = fenced_blocks(&text).into_iter().next().unwrap_or(text);
        let parsed = match parse_snop(&body) {
            Ok(s) => s,
            Err(e) => {
                return redo(FailureReason::RephraseUnparseable {
                    message: e.to_string(),
                })
            }
        };
        let mut snop = original.clone();
        snop.problem_info = parsed.problem_info;
        snop.objective = parsed.objective;
        if let Err(e) = snop.validate() {
            return redo(FailureReason::RephraseUnparseable {
                message: e.to_string(),
            });
        }
        let before = original.param_names();
        let after = snop.param_names();
        if before != after {
            return redo(FailureReason::ParamSetMutated {
                missing: before.difference(&after).cloned().collect(),
                added: after.difference(&before).cloned().collect(),
            });
        }
        Ok((snop, call))
    }

    /// One completion, with tokens booked on the attempt.
    fn call(
        &self,
        attempt: &mut Attempt,
        name: TemplateName,
        bindings: &Bindings,
    ) -> Result<String, FailureReason> {
        let cfg = self.config();
        let exchange = self
            .p
            .prompts
            .exchange(name, bindings, &cfg.model, cfg.temperature)
            .map_err(|e| FailureReason::Backend {
                message: e.to_string(),
            })?;
        let completion =
            self.p
                .backend
                .complete(&exchange)
                .map_err(|e| FailureReason::Backend {
                    message: e.to_string(),
                })?;
        let call = LlmCall {
            template: name.to_string(),
            prompt_tokens: completion.prompt_tokens,
            completion_tokens: completion.completion_tokens,
        };
        add_call(&mut attempt.tokens, &call);
        attempt.llm_calls.push(call);
        Ok(completion.text)
    }

    fn run_attempt(&self, mut attempt: Attempt) -> Attempt {
        match self.drive(&mut attempt) {
            Ok(()) => attempt.enter(State::Solved),
            Err(reason) => {
                attempt.failure = Some(reason);
                attempt.enter(State::Failed);
            }
        }
        attempt
    }

    fn solver_bindings(&self, snop: &Snop) -> (String, String) {
        let solver = self
            .config()
            .solver
            .clone()
            .unwrap_or_else(|| snop.solver.clone());
        if solver.eq_ignore_ascii_case(crate::snop::ANY) {
            return (
                "a Python optimization library of your choice".to_string(),
                "- none".to_string(),
            );
        }
        let block = self.p.prompts.instruction_block_for(&solver);
        (solver, block.render())
    }

    /// The state machine for one attempt. `Ok` means SOLVED.
    fn drive(&self, a: &mut Attempt) -> Result<(), FailureReason> {
        let cfg = self.config().clone();
        let mode = cfg.mode;
        let exec_timeout = Duration::from_secs(cfg.exec_timeout_secs);
        let test_timeout = Duration::from_secs(cfg.test_timeout_secs);
        let snop_text = a.snop.serialize();
        let ext = self.p.executor.extension().to_string();

        a.enter(State::Formulate);
        let formulation = self.call(
            a,
            TemplateName::Formulation,
            &Bindings::new().set("snop", &snop_text),
        )?;
        if formulation.trim().is_empty() {
            return Err(FailureReason::FormulationEmpty);
        }
        a.formulation = Some(formulation.clone());

        a.enter(State::Codegen);
        let (solver, instructions) = self.solver_bindings(&a.snop);
        let base = Bindings::new()
            .set("snop", &snop_text)
            .set("formulation", &formulation)
            .set("solver", &solver)
            .set("solver_instructions", &instructions);
        let vars = extract_code(&self.call(a, TemplateName::CodegenVars, &base)?);
        let with_vars = base.clone().set("variables_code", &vars);
        let cons = extract_code(&self.call(a, TemplateName::CodegenConstraints, &with_vars)?);
        let obj = extract_code(&self.call(
            a,
            TemplateName::CodegenObjective,
            &with_vars.set("constraints_code", &cons),
        )?);
        let mut code = [vars, cons, obj].concat();
        a.code_versions.push(code.clone());

        let sandbox = |e: crate::sandbox::SandboxError| FailureReason::Sandbox {
            message: e.to_string(),
        };
        let ws_name = format!("attempt-{}", a.id);
        let mut ws = Workspace::create(&self.run_dir, &ws_name).map_err(sandbox)?;
        ws.stage_data(&self.task.data_path).map_err(sandbox)?;
        a.workspace = Some(ws_name);

        let problem = |a: &Attempt| {
            Bindings::new()
                .set("snop", a.snop.serialize())
                .set("formulation", &formulation)
        };
        let mut tests: Option<Vec<TestScript>> = None;
        loop {
            a.enter(State::Execute);
            ws.write_code(&code, &ext).map_err(sandbox)?;
            let result = self
                .p
                .executor
                .execute(&ws, exec_timeout)
                .map_err(sandbox)?;
            let error = result.is_error().then(|| result.error_text(exec_timeout));
            let output = result.output.clone();
            a.executions.push(result);

            if let Some(error) = error {
                if a.debug_iters >= cfg.max_debug_iters {
                    return Err(FailureReason::DebugBudgetExhausted);
                }
                a.enter(State::Debug);
                let b = problem(a).set("code", &code).set("error", error);
                code = extract_code(&self.call(a, TemplateName::Debug, &b)?);
                a.debug_iters += 1;
                a.code_versions.push(code.clone());
                continue;
            }
            if !mode.uses_tests() {
                return Ok(());
            }

            let scripts = match tests.take() {
                Some(t) => t,
                None => {
                    a.enter(State::Testgen);
                    let text = self.call(a, TemplateName::Testgen, &problem(a))?;
                    let mut generated: Vec<TestScript> = fenced_blocks(&text)
                        .into_iter()
                        .filter(|b| !b.trim().is_empty())
                        .enumerate()
                        .map(|(k, source)| TestScript {
                            id: format!("auto-{k}"),
                            kind: TestKind::Auto,
                            source,
                        })
                        .collect();
                    if mode.uses_review() {
                        a.enter(State::Review);
                        generated = self.p.review.review(
                            &self.run_dir,
                            a.id,
                            generated,
                            self.task,
                            &ext,
                        )?;
                    }
                    a.structural_fallback = generated.is_empty();
                    a.tests = generated.clone();
                    generated
                }
            };

            a.enter(State::Testrun);
            let report = if a.structural_fallback {
                self.structural_report(&a.snop, output.as_ref())
            } else {
                self.p
                    .executor
                    .run_tests(&ws, &scripts, test_timeout)
                    .map_err(sandbox)?
            };
            let passed = report.passed;
            let failures = report.failure_text();
            a.test_reports.push(report);
            tests = Some(scripts);
            if passed {
                return Ok(());
            }
            if a.fix_iters >= cfg.max_fix_iters {
                return Err(FailureReason::FixBudgetExhausted);
            }
            a.enter(State::Fix);
            let b = problem(a).set("code", &code).set("test_errors", failures);
            code = extract_code(&self.call(a, TemplateName::Codefix, &b)?);
            a.fix_iters += 1;
            a.code_versions.push(code.clone());
        }
    }

    /// Stand-in test when none were generated: the output must match the
    /// output format, with bounds taken from the data file.
    fn structural_report(&self, snop: &Snop, output: Option<&serde_json::Value>) -> TestReport {
        let message = match (snop.input_tree(), snop.output_tree(), output) {
            (Ok(input), Ok(out_tree), Some(out)) => {
                let bounds = check_conformance(&input, &self.task.data).bounds;
                let report = check_conformance_seeded(&out_tree, out, &bounds);
                report
                    .violations
                    .iter()
                    .map(ToString::to_string)
                    .collect::<Vec<_>>()
                    .join("; ")
            }
            (_, _, None) => "no output document".to_string(),
            (Err(e), _, _) | (_, Err(e), _) => e.to_string(),
        };
        TestReport::from_entries(vec![TestEntry {
            id: STRUCTURAL_TEST_ID.to_string(),
            passed: message.is_empty(),
            message,
        }])
    }
}

fn add_call(tokens: &mut TokenUsage, call: &LlmCall) {
    tokens.add(TokenUsage {
        calls: 1,
        prompt: call.prompt_tokens,
        completion: call.completion_tokens,
    });
}

fn fail(mut a: Attempt, reason: FailureReason) -> Attempt {
    a.failure = Some(reason);
    a.enter(State::Failed);
    a
}
