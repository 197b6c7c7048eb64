//! Configuration merged from defaults, an optional TOML file, the
//! environment and command-line flags, in increasing precedence.

use std::path::{Path, PathBuf};
use std::time::Duration;

use anyhow::{bail, Context, Result};
use clap::{Args, ValueEnum};
use serde::{Deserialize, Serialize};
use snopkit::agent::Mode;
use snopkit::bench::Overrides;
use snopkit::llm::{LiveConfig, ENV_API_KEY, ENV_BASE_URL};
use snopkit::prompts::PromptRegistry;
use snopkit::sandbox::ProcessSandbox;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BackendKind {
    /// Call the chat endpoint.
    Live,
    /// Answer from recorded transcripts.
    Replay,
    /// Call the endpoint and record every exchange.
    Record,
}

fn parse_mode(s: &str) -> Result<Mode, String> {
    s.parse()
}

/// Flags shared by every command.
#[derive(Debug, Clone, Default, Args)]
pub struct ConfigArgs {
    /// TOML file with configuration defaults
    #[arg(long, global = true, value_name = "PATH")]
    pub config: Option<PathBuf>,
    /// Pipeline mode: prompt_only, debug, debug_autotests, debug_supervised or full
    #[arg(long, global = true, value_parser = parse_mode)]
    pub mode: Option<Mode>,
    /// Debug-loop budget per attempt
    #[arg(long, global = true, value_name = "N")]
    pub max_debug_iters: Option<u32>,
    /// Fix-loop budget per attempt
    #[arg(long, global = true, value_name = "N")]
    pub max_fix_iters: Option<u32>,
    /// Number of rephrasings tried in full mode
    #[arg(long, global = true, value_name = "N")]
    pub augmentations: Option<u32>,
    /// Where completions come from
    #[arg(long, global = true, value_enum)]
    pub backend: Option<BackendKind>,
    /// Transcript file (solve) or transcript root directory (bench)
    #[arg(long, global = true, value_name = "PATH")]
    pub transcript: Option<PathBuf>,
    /// Override the solver named in the problem
    #[arg(long, global = true)]
    pub solver: Option<String>,
    /// Time limit for each program and test run
    #[arg(long, global = true, value_name = "SECS")]
    pub timeout_secs: Option<u64>,
    /// Parallel bench runs
    #[arg(long, global = true, value_name = "N")]
    pub workers: Option<usize>,
    /// Directory holding run directories
    #[arg(long, global = true, value_name = "DIR")]
    pub runs_dir: Option<PathBuf>,
    /// Model name sent to the backend
    #[arg(long, global = true)]
    pub model: Option<String>,
    /// Directory of prompt template overrides
    #[arg(long, global = true, value_name = "DIR")]
    pub prompts: Option<PathBuf>,
}

/// Keys accepted in the TOML file.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct FileConfig {
    mode: Option<String>,
    max_debug_iters: Option<u32>,
    max_fix_iters: Option<u32>,
    augmentations: Option<u32>,
    backend: Option<BackendKind>,
    transcript: Option<PathBuf>,
    solver: Option<String>,
    timeout_secs: Option<u64>,
    workers: Option<usize>,
    runs_dir: Option<PathBuf>,
    model: Option<String>,
    temperature: Option<f64>,
    prompts: Option<PathBuf>,
    interpreter: Option<Vec<String>>,
    extension: Option<String>,
    base_url: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CliConfig {
    pub mode: Mode,
    /// `None` keeps the mode's default.
    pub max_debug_iters: Option<u32>,
    pub max_fix_iters: Option<u32>,
    pub augmentations: Option<u32>,
    pub backend: BackendKind,
    pub transcript: Option<PathBuf>,
    pub solver: Option<String>,
    pub timeout_secs: u64,
    pub workers: usize,
    pub runs_dir: PathBuf,
    pub model: String,
    pub temperature: f64,
    pub prompts: Option<PathBuf>,
    pub interpreter: Vec<String>,
    pub extension: String,
    pub base_url: Option<String>,
    #[serde(skip)]
    pub api_key: Option<String>,
}

impl Default for CliConfig {
    fn default() -> Self {
        let sandbox = ProcessSandbox::default();
        let pipeline = snopkit::agent::PipelineConfig::for_mode(Mode::Full);
        CliConfig {
            mode: Mode::Full,
            max_debug_iters: None,
            max_fix_iters: None,
            augmentations: None,
            backend: BackendKind::Replay,
            transcript: None,
            solver: None,
            timeout_secs: pipeline.exec_timeout_secs,
            workers: 1,
            runs_dir: PathBuf::from("runs"),
            model: pipeline.model,
            temperature: pipeline.temperature,
            prompts: None,
            interpreter: sandbox.interpreter_cmd,
            extension: sandbox.extension,
            base_url: None,
            api_key: None,
        }
    }
}

impl CliConfig {
    /// Resolves the configuration; `env` looks variables up by name.
    pub fn resolve(args: &ConfigArgs, env: impl Fn(&str) -> Option<String>) -> Result<Self> {
        let mut c = CliConfig::default();
        if let Some(path) = &args.config {
            let text = std::fs::read_to_string(path)
                .with_context(|| format!("cannot read config file {}", path.display()))?;
            let file: FileConfig = toml::from_str(&text)
                .with_context(|| format!("invalid config file {}", path.display()))?;
            c.apply_file(file)?;
        }
        if let Some(url) = env(ENV_BASE_URL).filter(|s| !s.is_empty()) {
            c.base_url = Some(url);
        }
        c.api_key = env(ENV_API_KEY).filter(|s| !s.is_empty());
        c.apply_flags(args);
        c.check()?;
        Ok(c)
    }

    fn apply_file(&mut self, f: FileConfig) -> Result<()> {
        if let Some(m) = f.mode {
            self.mode = m.parse().map_err(anyhow::Error::msg)?;
        }
        set(&mut self.max_debug_iters, f.max_debug_iters.map(Some));
        set(&mut self.max_fix_iters, f.max_fix_iters.map(Some));
        set(&mut self.augmentations, f.augmentations.map(Some));
        set(&mut self.backend, f.backend);
        set(&mut self.transcript, f.transcript.map(Some));
        set(&mut self.solver, f.solver.map(Some));
        set(&mut self.timeout_secs, f.timeout_secs);
        set(&mut self.workers, f.workers);
        set(&mut self.runs_dir, f.runs_dir);
        set(&mut self.model, f.model);
        set(&mut self.temperature, f.temperature);
        set(&mut self.prompts, f.prompts.map(Some));
        set(&mut self.interpreter, f.interpreter);
        set(&mut self.extension, f.extension);
        set(&mut self.base_url, f.base_url.map(Some));
        Ok(())
    }

    fn apply_flags(&mut self, a: &ConfigArgs) {
        set(&mut self.mode, a.mode);
        set(&mut self.max_debug_iters, a.max_debug_iters.map(Some));
        set(&mut self.max_fix_iters, a.max_fix_iters.map(Some));
        set(&mut self.augmentations, a.augmentations.map(Some));
        set(&mut self.backend, a.backend);
        set(&mut self.transcript, a.transcript.clone().map(Some));
        set(&mut self.solver, a.solver.clone().map(Some));
        set(&mut self.timeout_secs, a.timeout_secs);
        set(&mut self.workers, a.workers);
        set(&mut self.runs_dir, a.runs_dir.clone());
        set(&mut self.model, a.model.clone());
        set(&mut self.prompts, a.prompts.clone().map(Some));
    }

    fn check(&self) -> Result<()> {
        if self.interpreter.is_empty() {
            bail!("interpreter command must not be empty");
        }
        if self.timeout_secs == 0 {
            bail!("timeout_secs must be positive");
        }
        if self.workers == 0 {
            bail!("workers must be at least 1");
        }
        Ok(())
    }

    pub fn overrides(&self) -> Overrides {
        Overrides {
            max_debug_iters: self.max_debug_iters,
            max_fix_iters: self.max_fix_iters,
            augmentations: self.augmentations,
            solver: self.solver.clone(),
            exec_timeout_secs: Some(self.timeout_secs),
            model: Some(self.model.clone()),
            temperature: Some(self.temperature),
            concurrent_augmentation: false,
        }
    }

    pub fn sandbox(&self) -> ProcessSandbox {
        ProcessSandbox {
            interpreter_cmd: self.interpreter.clone(),
            extension: self.extension.clone(),
        }
    }

    pub fn prompts(&self) -> Result<PromptRegistry> {
        match &self.prompts {
            None => Ok(PromptRegistry::builtin()),
            Some(dir) => PromptRegistry::with_overrides(dir)
                .with_context(|| format!("cannot load prompt overrides from {}", dir.display())),
        }
    }

    pub fn live(&self) -> LiveConfig {
        let mut live = LiveConfig::default();
        if let Some(url) = &self.base_url {
            live.base_url = url.clone();
        }
        live.api_key = self.api_key.clone();
        live.timeout = Duration::from_secs(self.timeout_secs.max(120));
        live
    }

    pub fn transcript_or(&self, what: &str) -> Result<&Path> {
        self.transcript
            .as_deref()
            .with_context(|| format!("--transcript is required for {what}"))
    }
}

fn set<T>(slot: &mut T, value: Option<T>) {
    if let Some(v) = value {
        *slot = v;
    }
}
