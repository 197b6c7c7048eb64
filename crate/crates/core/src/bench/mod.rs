//! Mode matrices over a corpus, outcome classification against known optima,
//! success and execution rates, and report files.

mod emit;
mod run;

use std::path::PathBuf;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::agent::{Mode, RunRecord};
use crate::corpus::{check_output, ProblemInstance};
use crate::llm::{token_totals_of, TokenTotals};
use crate::sandbox::Executor;

pub use emit::{
    plot_rows, write_csv, write_json, write_plot_data, write_sweep_csv, PlotRow, CSV_HEADER,
    PLOT_HEADER, SWEEP_HEADER,
};
pub use run::{
    run_matrix, sweep, BackendProvider, BenchSettings, Overrides, RecordingProvider,
    ReplayProvider, SharedProvider, SweepParameter, SweepPoint,
};

pub const CLASSIFICATION_NOTE: &str = "solved = the agent reported success, the winning output's objective matches the known optimum within tolerance, and the corpus validity tests pass on that output";

#[derive(Debug, Error)]
pub enum BenchError {
    #[error("i/o failure at {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("csv failure: {0}")]
    Csv(#[from] csv::Error),
    #[error("{0}")]
    Invalid(String),
}

/// Objective comparison: `|found − expected| ≤ max(abs, rel·|expected|)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Tolerance {
    pub rel: f64,
    pub abs: f64,
}

impl Default for Tolerance {
    fn default() -> Self {
        Tolerance {
            rel: 1e-4,
            abs: 1e-6,
        }
    }
}

impl Tolerance {
    pub fn matches(&self, found: f64, expected: f64) -> bool {
        (found - expected).abs() <= self.abs.max(self.rel * expected.abs())
    }
}

/// Decides whether an output passes the instance's curated validity checks.
pub trait OutputValidator: Sync {
    fn validate(&self, instance: &ProblemInstance, output: &Value) -> bool;
}

/// Accepts every output; for classification over synthetic records.
pub struct AcceptAll;

impl OutputValidator for AcceptAll {
    fn validate(&self, _: &ProblemInstance, _: &Value) -> bool {
        true
    }
}

/// Re-runs the corpus validity tests (and the structural check) in a scratch
/// workspace.
pub struct CorpusTests<'a> {
    pub executor: &'a dyn Executor,
    pub scratch: PathBuf,
    pub timeout: Duration,
}

impl OutputValidator for CorpusTests<'_> {
    fn validate(&self, instance: &ProblemInstance, output: &Value) -> bool {
        check_output(instance, output, self.executor, &self.scratch, self.timeout)
            .map(|r| r.is_clean())
            .unwrap_or(false)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "flag", rename_all = "snake_case")]
pub enum OutcomeFlag {
    ObjectiveFieldMissing,
    ObjectiveMismatch { found: f64, expected: f64 },
    ValidityTestsFailed,
    PipelineError { message: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutcomeRow {
    pub instance: String,
    pub mode: Mode,
    pub executed: bool,
    pub solved: bool,
    pub attempts: usize,
    /// Completion tokens over the whole run.
    pub tokens: u64,
    /// Wall-clock time; kept out of serialized reports so they stay reproducible.
    #[serde(skip)]
    pub duration_ms: u64,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub flags: Vec<OutcomeFlag>,
}

impl OutcomeRow {
    /// A row for a run that never produced a record.
    pub fn errored(instance: &str, mode: Mode, message: String) -> Self {
        OutcomeRow {
            instance: instance.to_string(),
            mode,
            executed: false,
            solved: false,
            attempts: 0,
            tokens: 0,
            duration_ms: 0,
            flags: vec![OutcomeFlag::PipelineError { message }],
        }
    }
}

/// Classifies one run against ground truth.
///
/// Executed means some attempt wrote an output. Solved additionally needs the
/// agent's own success, a matching objective and passing validity tests.
pub fn classify(
    record: &RunRecord,
    instance: &ProblemInstance,
    tol: Tolerance,
    validator: &dyn OutputValidator,
) -> OutcomeRow {
    let executed = record.executed();
    let mut flags = Vec::new();
    let mut solved = false;
    if record.is_solved() {
        if let Some(output) = record.winning_output() {
            match instance.objective_of(output) {
                None => flags.push(OutcomeFlag::ObjectiveFieldMissing),
                Some(found) if !tol.matches(found, instance.optimal_value) => {
                    flags.push(OutcomeFlag::ObjectiveMismatch {
                        found,
                        expected: instance.optimal_value,
                    })
                }
                Some(_) => {
                    if validator.validate(instance, output) {
                        solved = true;
                    } else {
                        flags.push(OutcomeFlag::ValidityTestsFailed);
                    }
                }
            }
        }
    }
    OutcomeRow {
        instance: instance.id.clone(),
        mode: record.config.mode,
        executed,
        solved: solved && executed,
        attempts: record.attempts.len(),
        tokens: record.tokens.completion,
        duration_ms: record.duration_ms,
        flags,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModeSummary {
    pub mode: Mode,
    pub total: usize,
    pub executed: usize,
    pub solved: usize,
    pub success_rate: f64,
    pub execution_rate: f64,
    /// Completion tokens of the solved runs.
    pub solved_tokens: TokenTotals,
}

/// Per-mode rates over `rows`, in the order of `modes`. A mode without rows
/// has rates of 0.
pub fn aggregate(rows: &[OutcomeRow], modes: &[Mode]) -> Vec<ModeSummary> {
    modes
        .iter()
        .map(|&mode| {
            let of_mode: Vec<&OutcomeRow> = rows.iter().filter(|r| r.mode == mode).collect();
            let total = of_mode.len();
            let executed = of_mode.iter().filter(|r| r.executed).count();
            let solved = of_mode.iter().filter(|r| r.solved).count();
            let rate = |n: usize| {
                if total == 0 {
                    0.0
                } else {
                    n as f64 / total as f64
                }
            };
            let solved_counts: Vec<u64> = of_mode
                .iter()
                .filter(|r| r.solved)
                .map(|r| r.tokens)
                .collect();
            ModeSummary {
                mode,
                total,
                executed,
                solved,
                success_rate: rate(solved),
                execution_rate: rate(executed),
                solved_tokens: token_totals_of(&solved_counts),
            }
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchReport {
    pub corpus_version: String,
    pub generated_at: String,
    pub classification: String,
    pub tolerance: Tolerance,
    /// Pipeline configuration used for each mode.
    pub configs: Vec<crate::agent::PipelineConfig>,
    pub modes: Vec<ModeSummary>,
    pub rows: Vec<OutcomeRow>,
}

impl BenchReport {
    pub fn summary(&self, mode: Mode) -> Option<&ModeSummary> {
        self.modes.iter().find(|m| m.mode == mode)
    }

    /// Copy with wall-clock fields cleared, for comparing runs.
    pub fn timing_free(&self) -> BenchReport {
        let mut r = self.clone();
        r.generated_at.clear();
        for row in &mut r.rows {
            row.duration_ms = 0;
        }
        r
    }

    /// Fixed-width table of per-mode rates.
    pub fn rate_table(&self) -> String {
        let mut out = format!(
            "{:<18} {:>7} {:>9} {:>7} {:>13} {:>15}\n",
            "mode", "total", "executed", "solved", "success_rate", "execution_rate"
        );
        for m in &self.modes {
            out.push_str(&format!(
                "{:<18} {:>7} {:>9} {:>7} {:>13.3} {:>15.3}\n",
                m.mode.as_str(),
                m.total,
                m.executed,
                m.solved,
                m.success_rate,
                m.execution_rate
            ));
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(mode: Mode, executed: bool, solved: bool, tokens: u64) -> OutcomeRow {
        OutcomeRow {
            instance: "i".into(),
            mode,
            executed,
            solved,
            attempts: 1,
            tokens,
            duration_ms: 0,
            flags: vec![],
        }
    }

    #[test]
    fn tolerance_floor_and_relative() {
        let t = Tolerance::default();
        assert!(t.matches(12.0, 12.0));
        assert!(!t.matches(11.9, 12.0));
        assert!(t.matches(12.0009, 12.0));
        assert!(!t.matches(12.002, 12.0));
        assert!(t.matches(5e-7, 0.0));
        assert!(!t.matches(2e-6, 0.0));
    }

    #[test]
    fn aggregate_counts_and_tokens() {
        let rows = vec![
            row(Mode::Full, true, true, 100),
            row(Mode::Full, true, false, 50),
            row(Mode::Full, false, false, 10),
            row(Mode::Full, true, true, 300),
        ];
        let s = &aggregate(&rows, &[Mode::Full, Mode::Debug]);
        assert_eq!((s[0].total, s[0].executed, s[0].solved), (4, 3, 2));
        assert_eq!(s[0].success_rate, 0.5);
        assert_eq!(s[0].execution_rate, 0.75);
        assert_eq!(s[0].solved_tokens.sum, 400);
        assert_eq!(s[1].total, 0);
        assert_eq!(s[1].success_rate, 0.0);
    }
}
