//! Per-attempt workspaces and the executor that runs generated programs and
//! test scripts inside them.
//!
//! Generated code only ever sees its own workspace directory: `data.json` is
//! copied in, the program writes `output.json`, and test scripts read both.
//! Confinement is by working directory and a trimmed environment; it is a
//! trust boundary, not a security guarantee.

mod process;
mod workspace;

use std::fmt;
use std::path::PathBuf;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

pub use process::ProcessSandbox;
pub use workspace::{stage, Workspace};

pub const DEFAULT_TIMEOUT: Duration = Duration::from_secs(60);
/// Extra time an execution may take past its timeout while the process group
/// is killed and pipes drain.
pub const GRACE: Duration = Duration::from_secs(1);

#[derive(Debug, Error)]
pub enum SandboxError {
    #[error("i/o failure at {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("could not spawn interpreter `{command}`: {source}")]
    Spawn {
        command: String,
        #[source]
        source: std::io::Error,
    },
    #[error("interpreter command is empty")]
    EmptyCommand,
    #[error("code has not been staged in {}", .0.display())]
    NotStaged(PathBuf),
}

impl SandboxError {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        SandboxError::Io {
            path: path.into(),
            source,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Classification {
    RanWithOutput,
    RanNoOutput,
    RuntimeError,
    Timeout,
}

impl fmt::Display for Classification {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Classification::RanWithOutput => "ran_with_output",
            Classification::RanNoOutput => "ran_no_output",
            Classification::RuntimeError => "runtime_error",
            Classification::Timeout => "timeout",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExecutionResult {
    /// `None` when the process was killed.
    pub exit_code: Option<i32>,
    pub stdout: String,
    pub stderr: String,
    pub duration_ms: u64,
    pub output: Option<Value>,
    /// Set when `output.json` exists but is not valid JSON.
    pub output_error: Option<String>,
    pub classification: Classification,
}

impl ExecutionResult {
    /// Whether the outcome should go to the debug loop rather than testing.
    pub fn is_error(&self) -> bool {
        self.classification != Classification::RanWithOutput
    }

    /// The error description handed back to the model.
    pub fn error_text(&self, timeout: Duration) -> String {
        match self.classification {
            Classification::RanWithOutput => String::new(),
            Classification::Timeout => format!(
                "The program did not finish within {} seconds and was stopped.",
                timeout.as_secs()
            ),
            Classification::RuntimeError => {
                let text = if self.stderr.trim().is_empty() {
                    &self.stdout
                } else {
                    &self.stderr
                };
                let tail = tail_lines(text, 40);
                match self.exit_code {
                    Some(code) if tail.is_empty() => {
                        format!("The program exited with status {code}.")
                    }
                    _ => tail,
                }
            }
            Classification::RanNoOutput => match &self.output_error {
                Some(err) => {
                    format!("The program wrote output.json, but it is not valid JSON: {err}")
                }
                None => "The program finished without writing output.json.".to_string(),
            },
        }
    }
}

fn tail_lines(text: &str, n: usize) -> String {
    let lines: Vec<&str> = text.trim_end().lines().collect();
    lines[lines.len().saturating_sub(n)..].join("\n")
}

/// Decides the classification from the raw outcome of a run.
pub fn classify_run(
    timed_out: bool,
    exit_code: Option<i32>,
    stderr: &str,
    output_present: bool,
    output_valid: bool,
) -> Classification {
    if timed_out {
        Classification::Timeout
    } else if exit_code != Some(0) || stderr.contains("Traceback (most recent call last)") {
        Classification::RuntimeError
    } else if output_present && output_valid {
        Classification::RanWithOutput
    } else {
        Classification::RanNoOutput
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TestKind {
    Auto,
    Supervised,
    Human,
}

impl TestKind {
    pub fn from_header(line: &str) -> Option<TestKind> {
        let rest = line
            .trim()
            .strip_prefix('#')?
            .trim()
            .strip_prefix("kind:")?;
        match rest.trim() {
            "auto" => Some(TestKind::Auto),
            "supervised" => Some(TestKind::Supervised),
            "human" => Some(TestKind::Human),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TestScript {
    pub id: String,
    pub kind: TestKind,
    pub source: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TestEntry {
    pub id: String,
    pub passed: bool,
    pub message: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TestReport {
    pub entries: Vec<TestEntry>,
    pub passed: bool,
}

impl TestReport {
    pub fn from_entries(entries: Vec<TestEntry>) -> Self {
        let passed = entries.iter().all(|e| e.passed);
        TestReport { entries, passed }
    }

    pub fn failures(&self) -> impl Iterator<Item = &TestEntry> {
        self.entries.iter().filter(|e| !e.passed)
    }

    /// One `id: message` line per failing test.
    pub fn failure_text(&self) -> String {
        self.failures()
            .map(|e| format!("{}: {}", e.id, e.message))
            .collect::<Vec<_>>()
            .join("\n")
    }
}

/// Failure message emitted by a test script: the first `FAIL:` line on
/// stdout, else the last non-empty stderr line.
pub fn test_message(stdout: &str, stderr: &str) -> Option<String> {
    stdout
        .lines()
        .find_map(|l| l.trim().strip_prefix("FAIL:").map(|m| m.trim().to_string()))
        .or_else(|| {
            stderr
                .lines()
                .rev()
                .map(str::trim)
                .find(|l| !l.is_empty())
                .map(str::to_string)
        })
}

/// Runs programs and tests inside a workspace. Implementations must be safe to
/// call concurrently on distinct workspaces.
pub trait Executor: Send + Sync {
    /// File extension of the target runtime, without the dot.
    fn extension(&self) -> &str;

    fn execute(&self, ws: &Workspace, timeout: Duration) -> Result<ExecutionResult, SandboxError>;

    fn run_tests(
        &self,
        ws: &Workspace,
        tests: &[TestScript],
        timeout: Duration,
    ) -> Result<TestReport, SandboxError>;
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn classification_precedence() {
        assert_eq!(
            classify_run(true, None, "", true, true),
            Classification::Timeout
        );
        assert_eq!(
            classify_run(false, Some(1), "", true, true),
            Classification::RuntimeError
        );
        assert_eq!(
            classify_run(
                false,
                Some(0),
                "Traceback (most recent call last):\n",
                true,
                true
            ),
            Classification::RuntimeError
        );
        assert_eq!(
            classify_run(false, Some(0), "", true, true),
            Classification::RanWithOutput
        );
        assert_eq!(
            classify_run(false, Some(0), "", true, false),
            Classification::RanNoOutput
        );
        assert_eq!(
            classify_run(false, Some(0), "", false, false),
            Classification::RanNoOutput
        );
    }

    #[test]
    fn message_prefers_fail_marker() {
        assert_eq!(
            test_message("ok\nFAIL: bad total\n", "noise\n").as_deref(),
            Some("bad total")
        );
        assert_eq!(
            test_message("", "a\nlast line\n\n").as_deref(),
            Some("last line")
        );
        assert_eq!(test_message("", ""), None);
    }

    #[test]
    fn kind_header() {
        assert_eq!(
            TestKind::from_header("# kind: supervised"),
            Some(TestKind::Supervised)
        );
        assert_eq!(TestKind::from_header("#kind:auto"), Some(TestKind::Auto));
        assert_eq!(TestKind::from_header("import json"), None);
    }

    #[test]
    fn report_aggregate() {
        let ok = TestEntry {
            id: "a".into(),
            passed: true,
            message: String::new(),
        };
        let bad = TestEntry {
            id: "b".into(),
            passed: false,
            message: "boom".into(),
        };
        assert!(TestReport::from_entries(vec![ok.clone()]).passed);
        let r = TestReport::from_entries(vec![ok, bad]);
        assert!(!r.passed);
        assert_eq!(r.failure_text(), "b: boom");
        assert!(TestReport::from_entries(vec![]).passed);
    }
}
