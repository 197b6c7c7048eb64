//! A scripted backend that answers pipeline requests from the fixture corpus,
//! and crafting of the bundled replay transcripts from it.
//!
//! Each scenario names, per stage, which solution file under
//! `<instance>/solutions/` the "model" answers with. Codegen answers are the
//! file split at its `# --- constraints` and `# --- objective` marker lines;
//! rephrasings prefix the first `problem_info` statement with a lead-in that
//! later lets the backend recognise which rephrasing a request belongs to.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::agent::Mode;
use crate::bench::{run_matrix, BackendProvider, BenchSettings, RecordingProvider};
use crate::corpus::{load_corpus, load_instance, CorpusError};
use crate::llm::{BackendTag, ChatBackend, ChatExchange, Completion, LlmError};
use crate::prompts::{PromptRegistry, TemplateName};
use crate::sandbox::Executor;
use crate::snop::{parse_snop, Snop};

pub const SCENARIO_FILE: &str = "scenarios.json";

#[derive(Debug, Error)]
pub enum CraftError {
    #[error("i/o failure at {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("invalid scenario file {}: {message}", path.display())]
    InvalidScenarios { path: PathBuf, message: String },
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error("crafting run failed: {0}")]
    Bench(String),
}

/// Solution file stems (under `solutions/`) used by each stage.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StagePlan {
    pub codegen: String,
    pub debug: String,
    pub fix: String,
}

impl StagePlan {
    pub fn uniform(stem: &str) -> Self {
        StagePlan {
            codegen: stem.into(),
            debug: stem.into(),
            fix: stem.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Scenario {
    pub instance: String,
    pub plan: StagePlan,
    /// Plans for specific rephrasings, keyed by index; `"0"` is the original.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub rephrasings: BTreeMap<String, StagePlan>,
    /// Stems of the corpus tests returned by testgen.
    pub autotests: Vec<String>,
}

impl Scenario {
    pub fn plan_for(&self, rephrasing: usize) -> &StagePlan {
        self.rephrasings
            .get(&rephrasing.to_string())
            .unwrap_or(&self.plan)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScenarioFile {
    pub scenarios: Vec<Scenario>,
}

impl ScenarioFile {
    pub fn load(path: &Path) -> Result<Self, CraftError> {
        let text = fs::read_to_string(path).map_err(|source| CraftError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        serde_json::from_str(&text).map_err(|e| CraftError::InvalidScenarios {
            path: path.to_path_buf(),
            message: e.to_string(),
        })
    }

    pub fn get(&self, instance: &str) -> Option<&Scenario> {
        self.scenarios.iter().find(|s| s.instance == instance)
    }
}

/// The phrase a rephrasing's first statement starts with.
pub fn lead_in(index: usize) -> String {
    match index {
        1 => "Put differently,".into(),
        2 => "In other words,".into(),
        3 => "Stated another way,".into(),
        4 => "To restate,".into(),
        5 => "Equivalently,".into(),
        k => format!("Variant {k}:"),
    }
}

const MAX_DETECTED: usize = 64;

/// Which rephrasing a prompt is about; 0 when it carries the original.
pub fn detect_rephrasing(prompt: &str) -> usize {
    (1..=MAX_DETECTED)
        .find(|&k| prompt.contains(&format!("- {}", lead_in(k))))
        .unwrap_or(0)
}

/// Splits a solution at its marker lines into (variables, constraints,
/// objective). Without markers everything lands in the first part.
pub fn split_solution(source: &str) -> [String; 3] {
    let mut parts = [String::new(), String::new(), String::new()];
    let mut current = 0;
    for line in source.split_inclusive('\n') {
        let t = line.trim_start();
        if t.starts_with("# --- constraints") {
            current = 1;
        } else if t.starts_with("# --- objective") {
            current = 2;
        }
        parts[current].push_str(line);
    }
    parts
}

fn tokens(chars: usize) -> u64 {
    chars.div_ceil(4) as u64
}

/// Answers from one instance directory according to a [`Scenario`].
#[derive(Debug, Clone)]
pub struct ScriptedBackend {
    dir: PathBuf,
    snop: Snop,
    scenario: Scenario,
}

impl ScriptedBackend {
    pub fn new(instance_dir: &Path, scenario: Scenario) -> Result<Self, CraftError> {
        let path = instance_dir.join("snop.txt");
        let raw = fs::read_to_string(&path).map_err(|source| CraftError::Io {
            path: path.clone(),
            source,
        })?;
        let snop = parse_snop(&raw).map_err(|e| CraftError::InvalidScenarios {
            path,
            message: e.to_string(),
        })?;
        Ok(ScriptedBackend {
            dir: instance_dir.to_path_buf(),
            snop,
            scenario,
        })
    }

    fn read(&self, rel: &str) -> Result<String, LlmError> {
        let path = self.dir.join(rel);
        fs::read_to_string(&path)
            .map_err(|e| LlmError::Other(format!("scripted answer {}: {e}", path.display())))
    }

    fn solution(&self, stem: &str) -> Result<String, LlmError> {
        self.read(&format!("solutions/{stem}.py"))
    }

    fn rephrased(&self, prompt: &str) -> Result<String, LlmError> {
        let index = prompt
            .split("rephrasing number ")
            .nth(1)
            .and_then(|rest| {
                let digits: String = rest.chars().take_while(char::is_ascii_digit).collect();
                digits.parse::<usize>().ok()
            })
            .ok_or_else(|| LlmError::Other("rephrase prompt carries no index".into()))?;
        let mut snop = self.snop.clone();
        if let Some(first) = snop.problem_info.first_mut() {
            *first = format!("{} {first}", lead_in(index));
        }
        Ok(format!("```\n{}```\n", snop.serialize()))
    }

    fn answer(&self, template: TemplateName, prompt: &str) -> Result<String, LlmError> {
        let plan = self.scenario.plan_for(detect_rephrasing(prompt));
        let part = |i: usize| -> Result<String, LlmError> {
            Ok(split_solution(&self.solution(&plan.codegen)?)[i].clone())
        };
        match template {
            TemplateName::Formulation => self.read("solutions/formulation.md"),
            TemplateName::CodegenVars => part(0),
            TemplateName::CodegenConstraints => part(1),
            TemplateName::CodegenObjective => part(2),
            TemplateName::Debug => self.solution(&plan.debug),
            TemplateName::Codefix => self.solution(&plan.fix),
            TemplateName::Testgen => {
                let mut out = String::new();
                for stem in &self.scenario.autotests {
                    let src = self.read(&format!("tests/{stem}.py"))?;
                    out.push_str(&format!("```python\n{src}```\n\n"));
                }
                Ok(out)
            }
            TemplateName::Rephrase => self.rephrased(prompt),
        }
    }
}

impl ChatBackend for ScriptedBackend {
    fn complete(&self, exchange: &ChatExchange) -> Result<Completion, LlmError> {
        let template: TemplateName = exchange
            .tag
            .as_deref()
            .ok_or_else(|| LlmError::Other("scripted backend needs tagged requests".into()))?
            .parse()
            .map_err(|e: crate::prompts::PromptError| LlmError::Other(e.to_string()))?;
        let prompt = exchange.user_text();
        let text = self.answer(template, &prompt)?;
        let prompt_chars: usize = exchange
            .messages
            .iter()
            .map(|m| m.content.chars().count())
            .sum();
        Ok(Completion {
            prompt_tokens: tokens(prompt_chars),
            completion_tokens: tokens(text.chars().count()),
            text,
            backend: BackendTag::Scripted,
        })
    }
}

/// Hands out a [`ScriptedBackend`] per instance of a corpus.
pub struct ScriptedProvider {
    pub corpus_root: PathBuf,
    pub scenarios: ScenarioFile,
}

impl BackendProvider for ScriptedProvider {
    fn backend(&self, _: Mode, instance: &str) -> Result<Box<dyn ChatBackend>, LlmError> {
        let scenario = self
            .scenarios
            .get(instance)
            .ok_or_else(|| LlmError::Other(format!("no scenario for instance `{instance}`")))?;
        let b = ScriptedBackend::new(&self.corpus_root.join(instance), scenario.clone())
            .map_err(|e| LlmError::Other(e.to_string()))?;
        Ok(Box::new(b))
    }
}

/// Records every mode over every scenario instance into
/// `<out>/<mode>/<instance>.jsonl`. `fixtures` holds `corpus/` and
/// `scenarios.json`; pipeline workspaces go under `scratch`.
pub fn craft_transcripts(
    fixtures: &Path,
    out: &Path,
    scratch: &Path,
    executor: &dyn Executor,
    prompts: &PromptRegistry,
) -> Result<Vec<PathBuf>, CraftError> {
    let corpus_root = fixtures.join("corpus");
    let manifest = load_corpus(&corpus_root)?;
    let scenarios = ScenarioFile::load(&fixtures.join(SCENARIO_FILE))?;
    let mut instances = Vec::new();
    for s in &scenarios.scenarios {
        instances.push(load_instance(&manifest, &s.instance)?);
    }
    let provider = RecordingProvider {
        inner: ScriptedProvider {
            corpus_root,
            scenarios,
        },
        root: out.to_path_buf(),
    };
    let settings = BenchSettings::new(scratch);
    let report = run_matrix(
        &instances,
        &Mode::ALL,
        &settings,
        &provider,
        executor,
        prompts,
    )
    .map_err(|e| CraftError::Bench(e.to_string()))?;
    let mut written = Vec::new();
    for row in &report.rows {
        if let Some(crate::bench::OutcomeFlag::PipelineError { message }) = row.flags.first() {
            return Err(CraftError::Bench(format!(
                "{} / {}: {message}",
                row.mode, row.instance
            )));
        }
        written.push(crate::bench::ReplayProvider::transcript_path(
            out,
            row.mode,
            &row.instance,
        ));
    }
    Ok(written)
}
