//! The solve pipeline: formulation, three-part code generation, execution with
//! a debug loop, test generation with an optional review gate, test runs with
//! a fix loop, and fan-out over rephrased problem statements.

mod extract;
mod pipeline;
mod review;

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::corpus::ProblemInstance;
use crate::sandbox::{ExecutionResult, TestReport, TestScript};
use crate::snop::{parse_snop, Snop};

pub use extract::{extract_code, fenced_blocks};
pub use pipeline::{run_pipeline, Pipeline, RECORD_FILE};
pub use review::{ReviewPolicy, CONFIRMED_MARKER, PENDING_MARKER, REVIEW_DIR};

pub const DEFAULT_DEBUG_ITERS: u32 = 3;
pub const DEFAULT_FIX_ITERS: u32 = 3;
pub const DEFAULT_AUGMENTATIONS: u32 = 5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    PromptOnly,
    Debug,
    DebugAutotests,
    DebugSupervised,
    Full,
}

impl Mode {
    pub const ALL: [Mode; 5] = [
        Mode::PromptOnly,
        Mode::Debug,
        Mode::DebugAutotests,
        Mode::DebugSupervised,
        Mode::Full,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Mode::PromptOnly => "prompt_only",
            Mode::Debug => "debug",
            Mode::DebugAutotests => "debug_autotests",
            Mode::DebugSupervised => "debug_supervised",
            Mode::Full => "full",
        }
    }

    pub fn uses_tests(self) -> bool {
        matches!(
            self,
            Mode::DebugAutotests | Mode::DebugSupervised | Mode::Full
        )
    }

    pub fn uses_review(self) -> bool {
        matches!(self, Mode::DebugSupervised | Mode::Full)
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Mode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Mode::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| {
                format!(
                    "unknown mode `{s}` (expected one of {})",
                    Mode::ALL.map(Mode::as_str).join(", ")
                )
            })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    pub mode: Mode,
    pub max_debug_iters: u32,
    pub max_fix_iters: u32,
    pub augmentations: u32,
    /// Replaces the SNOP's solver when set.
    pub solver: Option<String>,
    pub exec_timeout_secs: u64,
    pub test_timeout_secs: u64,
    pub model: String,
    pub temperature: f64,
    /// Run rephrased attempts on parallel threads instead of one by one.
    pub concurrent_augmentation: bool,
}

impl PipelineConfig {
    /// Defaults for a mode: prompt-only has no repair loops, full mode adds
    /// five rephrasings.
    pub fn for_mode(mode: Mode) -> Self {
        let (debug, fix) = match mode {
            Mode::PromptOnly => (0, 0),
            _ => (DEFAULT_DEBUG_ITERS, DEFAULT_FIX_ITERS),
        };
        PipelineConfig {
            mode,
            max_debug_iters: debug,
            max_fix_iters: fix,
            augmentations: if mode == Mode::Full {
                DEFAULT_AUGMENTATIONS
            } else {
                0
            },
            solver: None,
            exec_timeout_secs: crate::sandbox::DEFAULT_TIMEOUT.as_secs(),
            test_timeout_secs: crate::sandbox::DEFAULT_TIMEOUT.as_secs(),
            model: "gpt-4o".into(),
            temperature: 0.0,
            concurrent_augmentation: false,
        }
    }

    pub fn validate(&self) -> Result<(), AgentError> {
        if self.mode == Mode::Full && self.augmentations == 0 {
            return Err(AgentError::InvalidConfig(
                "full mode needs at least one augmentation".into(),
            ));
        }
        if self.mode == Mode::PromptOnly && self.max_debug_iters != 0 {
            return Err(AgentError::InvalidConfig(
                "prompt_only mode cannot use debug iterations".into(),
            ));
        }
        if self.exec_timeout_secs == 0 || self.test_timeout_secs == 0 {
            return Err(AgentError::InvalidConfig(
                "timeouts must be positive".into(),
            ));
        }
        Ok(())
    }

    /// Upper bound on sandbox executions for a whole run.
    pub fn execution_budget(&self) -> u64 {
        (1 + self.augmentations as u64)
            * (1 + self.max_debug_iters as u64 + self.max_fix_iters as u64)
    }
}

#[derive(Debug, Error)]
pub enum AgentError {
    #[error("invalid pipeline configuration: {0}")]
    InvalidConfig(String),
    #[error("run directory {} already exists", .0.display())]
    RunExists(PathBuf),
    #[error("i/o failure at {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("could not load task: {0}")]
    Task(String),
}

/// What the pipeline needs from a problem: the description, the data file and
/// any curated tests for the review gate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Task {
    pub id: String,
    pub snop: Snop,
    pub data_path: PathBuf,
    pub data: Value,
    pub supervised_tests: Vec<TestScript>,
}

impl Task {
    pub fn from_files(id: &str, snop_path: &Path, data_path: &Path) -> Result<Self, AgentError> {
        let raw = std::fs::read_to_string(snop_path)
            .map_err(|e| AgentError::Task(format!("{}: {e}", snop_path.display())))?;
        let snop = parse_snop(&raw)
            .map_err(|e| AgentError::Task(format!("{}: {e}", snop_path.display())))?;
        let data_text = std::fs::read_to_string(data_path)
            .map_err(|e| AgentError::Task(format!("{}: {e}", data_path.display())))?;
        let data = serde_json::from_str(&data_text)
            .map_err(|e| AgentError::Task(format!("{}: {e}", data_path.display())))?;
        Ok(Task {
            id: id.to_string(),
            snop,
            data_path: data_path.to_path_buf(),
            data,
            supervised_tests: Vec::new(),
        })
    }
}

impl From<&ProblemInstance> for Task {
    fn from(p: &ProblemInstance) -> Self {
        Task {
            id: p.id.clone(),
            snop: p.snop.clone(),
            data_path: p.data_path.clone(),
            data: p.data.clone(),
            supervised_tests: p.validity_tests.clone(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum State {
    Formulate,
    Codegen,
    Execute,
    Debug,
    Testgen,
    Review,
    Testrun,
    Fix,
    Solved,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "reason", rename_all = "snake_case")]
pub enum FailureReason {
    FormulationEmpty,
    DebugBudgetExhausted,
    FixBudgetExhausted,
    ParamSetMutated {
        missing: Vec<String>,
        added: Vec<String>,
    },
    RephraseUnparseable {
        message: String,
    },
    Backend {
        message: String,
    },
    Sandbox {
        message: String,
    },
    ReviewTimeout,
    Io {
        message: String,
    },
}

impl fmt::Display for FailureReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            FailureReason::FormulationEmpty => f.write_str("formulation was empty"),
            FailureReason::DebugBudgetExhausted => f.write_str("debug iterations exhausted"),
            FailureReason::FixBudgetExhausted => f.write_str("fix iterations exhausted"),
            FailureReason::ParamSetMutated { missing, added } => write!(
                f,
                "rephrasing changed the parameters (missing {missing:?}, added {added:?})"
            ),
            FailureReason::RephraseUnparseable { message } => {
                write!(f, "rephrasing is not a valid SNOP: {message}")
            }
            FailureReason::Backend { message } => write!(f, "backend failure: {message}"),
            FailureReason::Sandbox { message } => write!(f, "sandbox failure: {message}"),
            FailureReason::ReviewTimeout => f.write_str("test review timed out"),
            FailureReason::Io { message } => write!(f, "i/o failure: {message}"),
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenUsage {
    pub calls: u64,
    pub prompt: u64,
    pub completion: u64,
}

impl TokenUsage {
    pub fn add(&mut self, other: TokenUsage) {
        self.calls += other.calls;
        self.prompt += other.prompt;
        self.completion += other.completion;
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LlmCall {
    pub template: String,
    pub prompt_tokens: u64,
    pub completion_tokens: u64,
}

/// One pass through the state machine for one (possibly rephrased) SNOP.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Attempt {
    pub id: usize,
    /// 0 is the original statement.
    pub rephrasing: usize,
    pub snop: Snop,
    pub state: State,
    pub trail: Vec<State>,
    pub formulation: Option<String>,
    pub code_versions: Vec<String>,
    pub executions: Vec<ExecutionResult>,
    pub tests: Vec<TestScript>,
    /// True when no tests were generated and the structural check stood in.
    pub structural_fallback: bool,
    pub test_reports: Vec<TestReport>,
    pub debug_iters: u32,
    pub fix_iters: u32,
    pub failure: Option<FailureReason>,
    pub llm_calls: Vec<LlmCall>,
    pub tokens: TokenUsage,
    /// Workspace directory relative to the run directory.
    pub workspace: Option<String>,
}

impl Attempt {
    pub fn new(id: usize, snop: Snop) -> Self {
        Attempt {
            id,
            rephrasing: id,
            snop,
            state: State::Formulate,
            trail: Vec::new(),
            formulation: None,
            code_versions: Vec::new(),
            executions: Vec::new(),
            tests: Vec::new(),
            structural_fallback: false,
            test_reports: Vec::new(),
            debug_iters: 0,
            fix_iters: 0,
            failure: None,
            llm_calls: Vec::new(),
            tokens: TokenUsage::default(),
            workspace: None,
        }
    }

    pub fn enter(&mut self, state: State) {
        self.state = state;
        self.trail.push(state);
    }

    pub fn is_solved(&self) -> bool {
        self.state == State::Solved
    }

    pub fn produced_output(&self) -> bool {
        self.executions.iter().any(|e| !e.is_error())
    }

    /// Output of the last execution, when it produced one.
    pub fn final_output(&self) -> Option<&Value> {
        self.executions.last().and_then(|e| e.output.as_ref())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunStatus {
    Solved,
    ExecutedOnly,
    Failed,
}

impl fmt::Display for RunStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            RunStatus::Solved => "solved",
            RunStatus::ExecutedOnly => "executed_only",
            RunStatus::Failed => "failed",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub run_id: String,
    pub instance_id: String,
    pub config: PipelineConfig,
    pub attempts: Vec<Attempt>,
    pub status: RunStatus,
    /// Index into `attempts` of the reported solution.
    pub winner: Option<usize>,
    pub tokens: TokenUsage,
    pub duration_ms: u64,
}

impl RunRecord {
    pub fn is_solved(&self) -> bool {
        self.status == RunStatus::Solved
    }

    pub fn executed(&self) -> bool {
        self.attempts.iter().any(Attempt::produced_output)
    }

    pub fn executions(&self) -> usize {
        self.attempts.iter().map(|a| a.executions.len()).sum()
    }

    pub fn winning_attempt(&self) -> Option<&Attempt> {
        self.winner.and_then(|i| self.attempts.get(i))
    }

    pub fn winning_output(&self) -> Option<&Value> {
        self.winning_attempt().and_then(Attempt::final_output)
    }

    /// Workspace of the winning attempt, relative to the run directory.
    pub fn winning_workspace(&self) -> Option<&str> {
        self.winning_attempt().and_then(|a| a.workspace.as_deref())
    }
}
