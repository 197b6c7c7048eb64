use std::fs;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};
use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::agent::{Mode, Pipeline, PipelineConfig, ReviewPolicy, Task};
use crate::corpus::ProblemInstance;
use crate::llm::{ChatBackend, LlmError, RecordingBackend, ReplayBackend};
use crate::prompts::PromptRegistry;
use crate::sandbox::{Executor, Workspace};

use super::{
    aggregate, classify, BenchError, BenchReport, CorpusTests, OutcomeRow, Tolerance,
    CLASSIFICATION_NOTE,
};

/// Hands out a backend per (mode, instance) run.
pub trait BackendProvider: Sync {
    fn backend(&self, mode: Mode, instance: &str) -> Result<Box<dyn ChatBackend>, LlmError>;
}

/// Replays `<root>/<mode>/<instance>.jsonl`.
pub struct ReplayProvider {
    pub root: PathBuf,
}

impl ReplayProvider {
    pub fn transcript_path(root: &Path, mode: Mode, instance: &str) -> PathBuf {
        root.join(mode.as_str()).join(format!("{instance}.jsonl"))
    }
}

impl BackendProvider for ReplayProvider {
    fn backend(&self, mode: Mode, instance: &str) -> Result<Box<dyn ChatBackend>, LlmError> {
        let path = Self::transcript_path(&self.root, mode, instance);
        Ok(Box::new(ReplayBackend::load(&path)?))
    }
}

/// One backend shared by every run, e.g. a live client.
pub struct SharedProvider(pub Arc<dyn ChatBackend>);

impl BackendProvider for SharedProvider {
    fn backend(&self, _: Mode, _: &str) -> Result<Box<dyn ChatBackend>, LlmError> {
        Ok(Box::new(self.0.clone()))
    }
}

/// Wraps another provider and records each run to
/// `<root>/<mode>/<instance>.jsonl`, replacing any earlier file.
pub struct RecordingProvider<P> {
    pub inner: P,
    pub root: PathBuf,
}

impl<P: BackendProvider> BackendProvider for RecordingProvider<P> {
    fn backend(&self, mode: Mode, instance: &str) -> Result<Box<dyn ChatBackend>, LlmError> {
        let path = ReplayProvider::transcript_path(&self.root, mode, instance);
        let persist = |source| LlmError::PersistFailure {
            path: path.clone(),
            source,
        };
        fs::create_dir_all(path.parent().expect("has parent")).map_err(persist)?;
        match fs::remove_file(&path) {
            Err(e) if e.kind() != std::io::ErrorKind::NotFound => return Err(persist(e)),
            _ => {}
        }
        let inner = self.inner.backend(mode, instance)?;
        Ok(Box::new(RecordingBackend::new(
            inner,
            path,
            run_id(mode, instance),
        )))
    }
}

fn run_id(mode: Mode, instance: &str) -> String {
    format!("{}-{instance}", mode.as_str())
}

/// Per-mode adjustments to the defaults of [`PipelineConfig::for_mode`].
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Overrides {
    /// Ignored for prompt_only, which never debugs.
    pub max_debug_iters: Option<u32>,
    pub max_fix_iters: Option<u32>,
    /// Applies to full mode only; the other modes do not augment.
    pub augmentations: Option<u32>,
    pub solver: Option<String>,
    pub exec_timeout_secs: Option<u64>,
    pub model: Option<String>,
    pub temperature: Option<f64>,
    pub concurrent_augmentation: bool,
}

impl Overrides {
    pub fn apply(&self, mode: Mode) -> PipelineConfig {
        let mut c = PipelineConfig::for_mode(mode);
        if mode != Mode::PromptOnly {
            if let Some(d) = self.max_debug_iters {
                c.max_debug_iters = d;
            }
            if let Some(f) = self.max_fix_iters {
                c.max_fix_iters = f;
            }
        }
        if mode == Mode::Full {
            if let Some(a) = self.augmentations {
                c.augmentations = a;
            }
        }
        if let Some(s) = &self.solver {
            c.solver = Some(s.clone());
        }
        if let Some(t) = self.exec_timeout_secs {
            c.exec_timeout_secs = t;
            c.test_timeout_secs = t;
        }
        if let Some(m) = &self.model {
            c.model = m.clone();
        }
        if let Some(t) = self.temperature {
            c.temperature = t;
        }
        c.concurrent_augmentation = self.concurrent_augmentation;
        c
    }
}

pub struct BenchSettings {
    pub overrides: Overrides,
    pub tolerance: Tolerance,
    pub workers: usize,
    /// A fresh `bench-<n>` directory is created here for each matrix.
    pub runs_dir: PathBuf,
    pub corpus_version: String,
}

impl BenchSettings {
    pub fn new(runs_dir: impl Into<PathBuf>) -> Self {
        BenchSettings {
            overrides: Overrides::default(),
            tolerance: Tolerance::default(),
            workers: 1,
            runs_dir: runs_dir.into(),
            corpus_version: String::new(),
        }
    }
}

struct Job<'a> {
    config: PipelineConfig,
    instance: &'a ProblemInstance,
}

/// Runs every job on up to `workers` threads; rows come back in job order.
fn run_jobs(
    jobs: &[Job<'_>],
    settings: &BenchSettings,
    provider: &dyn BackendProvider,
    executor: &dyn Executor,
    prompts: &PromptRegistry,
    root: &Path,
) -> Vec<OutcomeRow> {
    let next = AtomicUsize::new(0);
    let results: Mutex<Vec<Option<OutcomeRow>>> = Mutex::new(vec![None; jobs.len()]);
    let workers = settings.workers.clamp(1, jobs.len().max(1));
    std::thread::scope(|s| {
        for _ in 0..workers {
            s.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::SeqCst);
                let Some(job) = jobs.get(i) else { break };
                let row = run_one(job, i, settings, provider, executor, prompts, root);
                results.lock().unwrap()[i] = Some(row);
            });
        }
    });
    results
        .into_inner()
        .unwrap()
        .into_iter()
        .map(|r| r.expect("every job ran"))
        .collect()
}

fn run_one(
    job: &Job<'_>,
    index: usize,
    settings: &BenchSettings,
    provider: &dyn BackendProvider,
    executor: &dyn Executor,
    prompts: &PromptRegistry,
    root: &Path,
) -> OutcomeRow {
    let mode = job.config.mode;
    let id = &job.instance.id;
    let backend = match provider.backend(mode, id) {
        Ok(b) => b,
        Err(e) => return OutcomeRow::errored(id, mode, e.to_string()),
    };
    let pipeline = Pipeline {
        config: job.config.clone(),
        backend: backend.as_ref(),
        prompts,
        executor,
        review: ReviewPolicy::Batch,
        runs_dir: root.join("runs"),
    };
    let run_id = format!("{index:03}-{}", run_id(mode, id));
    match pipeline.run(&Task::from(job.instance), &run_id) {
        Ok(record) => {
            let validator = CorpusTests {
                executor,
                scratch: root.join("validation"),
                timeout: Duration::from_secs(job.config.test_timeout_secs),
            };
            classify(&record, job.instance, settings.tolerance, &validator)
        }
        Err(e) => OutcomeRow::errored(id, mode, e.to_string()),
    }
}

fn fresh_root(settings: &BenchSettings, prefix: &str) -> Result<PathBuf, BenchError> {
    Workspace::create_unique(&settings.runs_dir, prefix)
        .map(|w| w.path().to_path_buf())
        .map_err(|e| BenchError::Invalid(e.to_string()))
}

/// Runs every (mode, instance) pair and aggregates rates. Rows are ordered by
/// mode, then by instance order.
pub fn run_matrix(
    instances: &[ProblemInstance],
    modes: &[Mode],
    settings: &BenchSettings,
    provider: &dyn BackendProvider,
    executor: &dyn Executor,
    prompts: &PromptRegistry,
) -> Result<BenchReport, BenchError> {
    let configs: Vec<PipelineConfig> = modes.iter().map(|&m| settings.overrides.apply(m)).collect();
    for c in &configs {
        c.validate()
            .map_err(|e| BenchError::Invalid(e.to_string()))?;
    }
    let root = fresh_root(settings, "bench")?;
    let jobs: Vec<Job> = configs
        .iter()
        .flat_map(|c| {
            instances.iter().map(move |instance| Job {
                config: c.clone(),
                instance,
            })
        })
        .collect();
    let rows = run_jobs(&jobs, settings, provider, executor, prompts, &root);
    Ok(BenchReport {
        corpus_version: settings.corpus_version.clone(),
        generated_at: chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Secs, true),
        classification: CLASSIFICATION_NOTE.to_string(),
        tolerance: settings.tolerance,
        configs,
        modes: super::aggregate(&rows, modes),
        rows,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepParameter {
    /// Rephrasing count; 0 runs debug_supervised, n > 0 runs full with n.
    Augmentations,
    /// Debug and fix budgets together, in the base mode.
    Iters,
}

impl std::str::FromStr for SweepParameter {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "augmentations" => Ok(SweepParameter::Augmentations),
            "iters" | "max_iters" => Ok(SweepParameter::Iters),
            other => Err(format!(
                "unknown sweep parameter `{other}` (expected augmentations or iters)"
            )),
        }
    }
}

impl SweepParameter {
    pub fn as_str(self) -> &'static str {
        match self {
            SweepParameter::Augmentations => "augmentations",
            SweepParameter::Iters => "iters",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub parameter: SweepParameter,
    pub value: u32,
    pub mode: Mode,
    pub total: usize,
    pub executed: usize,
    pub solved: usize,
    pub success_rate: f64,
    pub execution_rate: f64,
}

/// Success and execution rates as one parameter varies over `values`.
pub fn sweep(
    instances: &[ProblemInstance],
    parameter: SweepParameter,
    values: &[u32],
    base_mode: Mode,
    settings: &BenchSettings,
    provider: &dyn BackendProvider,
    executor: &dyn Executor,
    prompts: &PromptRegistry,
) -> Result<Vec<SweepPoint>, BenchError> {
    let root = fresh_root(settings, "sweep")?;
    let mut points = Vec::with_capacity(values.len());
    for &value in values {
        let mut o = settings.overrides.clone();
        let mode = match parameter {
            SweepParameter::Augmentations if value == 0 => Mode::DebugSupervised,
            SweepParameter::Augmentations => {
                o.augmentations = Some(value);
                Mode::Full
            }
            SweepParameter::Iters => {
                o.max_debug_iters = Some(value);
                o.max_fix_iters = Some(value);
                base_mode
            }
        };
        let config = o.apply(mode);
        config
            .validate()
            .map_err(|e| BenchError::Invalid(e.to_string()))?;
        let jobs: Vec<Job> = instances
            .iter()
            .map(|instance| Job {
                config: config.clone(),
                instance,
            })
            .collect();
        let point_root = root.join(format!("{}-{value}", parameter.as_str()));
        let rows = run_jobs(&jobs, settings, provider, executor, prompts, &point_root);
        let s = &aggregate(&rows, &[mode])[0];
        points.push(SweepPoint {
            parameter,
            value,
            mode,
            total: s.total,
            executed: s.executed,
            solved: s.solved,
            success_rate: s.success_rate,
            execution_rate: s.execution_rate,
        });
    }
    Ok(points)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn overrides_respect_mode_semantics() {
        let o = Overrides {
            max_debug_iters: Some(5),
            augmentations: Some(2),
            ..Overrides::default()
        };
        assert_eq!(o.apply(Mode::PromptOnly).max_debug_iters, 0);
        assert_eq!(o.apply(Mode::Debug).max_debug_iters, 5);
        assert_eq!(o.apply(Mode::Debug).augmentations, 0);
        assert_eq!(o.apply(Mode::Full).augmentations, 2);
    }
}
