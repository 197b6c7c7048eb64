//! Prompt templates with `{{slot}}` placeholders and per-solver instruction
//! blocks.
//!
//! `{{{{` renders as a literal `{{`. A `{{` that does not open a well-formed
//! `{{identifier}}` is kept as literal text, so JSON braces in SNOP content
//! never collide with slots.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::llm::{ChatExchange, Message};

pub const SYSTEM_PREAMBLE: &str = include_str!("../templates/system.txt");

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TemplateName {
    Formulation,
    CodegenVars,
    CodegenConstraints,
    CodegenObjective,
    Testgen,
    Rephrase,
    Debug,
    Codefix,
}

impl TemplateName {
    pub const ALL: [TemplateName; 8] = [
        TemplateName::Formulation,
        TemplateName::CodegenVars,
        TemplateName::CodegenConstraints,
        TemplateName::CodegenObjective,
        TemplateName::Testgen,
        TemplateName::Rephrase,
        TemplateName::Debug,
        TemplateName::Codefix,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            TemplateName::Formulation => "formulation",
            TemplateName::CodegenVars => "codegen_vars",
            TemplateName::CodegenConstraints => "codegen_constraints",
            TemplateName::CodegenObjective => "codegen_objective",
            TemplateName::Testgen => "testgen",
            TemplateName::Rephrase => "rephrase",
            TemplateName::Debug => "debug",
            TemplateName::Codefix => "codefix",
        }
    }

    fn builtin_body(self) -> &'static str {
        match self {
            TemplateName::Formulation => include_str!("../templates/formulation.tmpl"),
            TemplateName::CodegenVars => include_str!("../templates/codegen_vars.tmpl"),
            TemplateName::CodegenConstraints => {
                include_str!("../templates/codegen_constraints.tmpl")
            }
            TemplateName::CodegenObjective => include_str!("../templates/codegen_objective.tmpl"),
            TemplateName::Testgen => include_str!("../templates/testgen.tmpl"),
            TemplateName::Rephrase => include_str!("../templates/rephrase.tmpl"),
            TemplateName::Debug => include_str!("../templates/debug.tmpl"),
            TemplateName::Codefix => include_str!("../templates/codefix.tmpl"),
        }
    }
}

impl fmt::Display for TemplateName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for TemplateName {
    type Err = PromptError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        TemplateName::ALL
            .into_iter()
            .find(|t| t.as_str() == s)
            .ok_or_else(|| PromptError::UnknownTemplate(s.to_string()))
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum PromptError {
    #[error("missing binding for slot `{0}`")]
    MissingSlot(String),
    #[error("binding `{0}` does not match any slot")]
    UnknownSlot(String),
    #[error("unknown template `{0}`")]
    UnknownTemplate(String),
    #[error("override for `{template}` has slots {found:?}, expected {expected:?}")]
    SlotMismatch {
        template: String,
        expected: Vec<String>,
        found: Vec<String>,
    },
    #[error("could not read {path}: {message}")]
    Io { path: PathBuf, message: String },
}

#[derive(Debug, Clone, PartialEq, Eq)]
enum Segment {
    Text(String),
    Slot(String),
}

/// A parsed template body.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Template {
    pub name: TemplateName,
    body: String,
    segments: Vec<Segment>,
    slots: BTreeSet<String>,
}

fn is_ident(s: &str) -> bool {
    !s.is_empty()
        && s.bytes().all(|b| b.is_ascii_alphanumeric() || b == b'_')
        && !s.as_bytes()[0].is_ascii_digit()
}

fn parse_body(body: &str) -> Vec<Segment> {
    let mut segments = Vec::new();
    let mut text = String::new();
    let mut rest = body;
    while let Some(i) = rest.find("{{") {
        text.push_str(&rest[..i]);
        let after = &rest[i + 2..];
        if let Some(tail) = after.strip_prefix("{{") {
            text.push_str("{{");
            rest = tail;
            continue;
        }
        match after.find("}}") {
            Some(j) if is_ident(&after[..j]) => {
                if !text.is_empty() {
                    segments.push(Segment::Text(std::mem::take(&mut text)));
                }
                segments.push(Segment::Slot(after[..j].to_string()));
                rest = &after[j + 2..];
            }
            _ => {
                text.push_str("{{");
                rest = after;
            }
        }
    }
    text.push_str(rest);
    if !text.is_empty() {
        segments.push(Segment::Text(text));
    }
    segments
}

impl Template {
    pub fn new(name: TemplateName, body: impl Into<String>) -> Self {
        let body = body.into();
        let segments = parse_body(&body);
        let slots = segments
            .iter()
            .filter_map(|s| match s {
                Segment::Slot(n) => Some(n.clone()),
                Segment::Text(_) => None,
            })
            .collect();
        Template {
            name,
            body,
            segments,
            slots,
        }
    }

    pub fn body(&self) -> &str {
        &self.body
    }

    /// Required slots, sorted.
    pub fn slots(&self) -> impl Iterator<Item = &str> {
        self.slots.iter().map(String::as_str)
    }

    /// Substitutes every slot. Bindings must cover the slots exactly.
    pub fn render(&self, bindings: &Bindings) -> Result<String, PromptError> {
        if let Some(missing) = self.slots.iter().find(|s| !bindings.0.contains_key(*s)) {
            return Err(PromptError::MissingSlot(missing.clone()));
        }
        if let Some(extra) = bindings.0.keys().find(|k| !self.slots.contains(*k)) {
            return Err(PromptError::UnknownSlot(extra.clone()));
        }
        let mut out = String::with_capacity(self.body.len());
        for seg in &self.segments {
            match seg {
                Segment::Text(t) => out.push_str(t),
                Segment::Slot(s) => out.push_str(&bindings.0[s]),
            }
        }
        Ok(out)
    }
}

/// Slot values for one render.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Bindings(BTreeMap<String, String>);

impl Bindings {
    pub fn new() -> Self {
        Bindings::default()
    }

    pub fn set(mut self, slot: &str, value: impl Into<String>) -> Self {
        self.0.insert(slot.to_string(), value.into());
        self
    }

    pub fn get(&self, slot: &str) -> Option<&str> {
        self.0.get(slot).map(String::as_str)
    }
}

impl<K: Into<String>, V: Into<String>> FromIterator<(K, V)> for Bindings {
    fn from_iter<I: IntoIterator<Item = (K, V)>>(iter: I) -> Self {
        Bindings(
            iter.into_iter()
                .map(|(k, v)| (k.into(), v.into()))
                .collect(),
        )
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SolverInstructionBlock {
    pub solver: String,
    pub lines: Vec<String>,
}

impl SolverInstructionBlock {
    pub fn parse(solver: &str, text: &str) -> Self {
        SolverInstructionBlock {
            solver: solver.to_string(),
            lines: text
                .lines()
                .map(str::trim)
                .filter(|l| !l.is_empty())
                .map(str::to_string)
                .collect(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.lines.is_empty()
    }

    /// Bulleted text for the `solver_instructions` slot.
    pub fn render(&self) -> String {
        if self.lines.is_empty() {
            return "- none".to_string();
        }
        self.lines
            .iter()
            .map(|l| format!("- {l}"))
            .collect::<Vec<_>>()
            .join("\n")
    }
}

const BUILTIN_BLOCKS: [(&str, &str); 2] = [
    (
        "cvxpy",
        include_str!("../templates/solver_instructions/cvxpy.txt"),
    ),
    (
        "gurobi",
        include_str!("../templates/solver_instructions/gurobi.txt"),
    ),
];

/// The closed set of templates plus solver blocks.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PromptRegistry {
    templates: BTreeMap<TemplateName, Template>,
    blocks: BTreeMap<String, SolverInstructionBlock>,
    system: String,
}

impl Default for PromptRegistry {
    fn default() -> Self {
        Self::builtin()
    }
}

impl PromptRegistry {
    pub fn builtin() -> Self {
        let templates = TemplateName::ALL
            .into_iter()
            .map(|n| (n, Template::new(n, n.builtin_body())))
            .collect();
        let blocks = BUILTIN_BLOCKS
            .iter()
            .map(|(s, text)| (s.to_string(), SolverInstructionBlock::parse(s, text)))
            .collect();
        PromptRegistry {
            templates,
            blocks,
            system: SYSTEM_PREAMBLE.trim_end().to_string(),
        }
    }

    /// Built-ins overridden by `<dir>/<name>.tmpl` files and
    /// `<dir>/solver_instructions/<solver>.txt` blocks. An override must keep
    /// the slot set of the template it replaces.
    pub fn with_overrides(dir: &Path) -> Result<Self, PromptError> {
        let mut reg = Self::builtin();
        let io = |path: &Path, e: std::io::Error| PromptError::Io {
            path: path.to_path_buf(),
            message: e.to_string(),
        };
        let entries = fs::read_dir(dir).map_err(|e| io(dir, e))?;
        let mut paths: Vec<PathBuf> = entries.filter_map(|e| e.ok().map(|e| e.path())).collect();
        paths.sort();
        for path in paths {
            if path.extension().and_then(|e| e.to_str()) != Some("tmpl") {
                continue;
            }
            let stem = path
                .file_stem()
                .and_then(|s| s.to_str())
                .unwrap_or_default();
            let name: TemplateName = stem.parse()?;
            let body = fs::read_to_string(&path).map_err(|e| io(&path, e))?;
            let t = Template::new(name, body);
            let builtin = &reg.templates[&name];
            if t.slots != builtin.slots {
                return Err(PromptError::SlotMismatch {
                    template: name.to_string(),
                    expected: builtin.slots.iter().cloned().collect(),
                    found: t.slots.iter().cloned().collect(),
                });
            }
            reg.templates.insert(name, t);
        }
        let block_dir = dir.join("solver_instructions");
        if block_dir.is_dir() {
            let mut paths: Vec<PathBuf> = fs::read_dir(&block_dir)
                .map_err(|e| io(&block_dir, e))?
                .filter_map(|e| e.ok().map(|e| e.path()))
                .filter(|p| p.extension().and_then(|e| e.to_str()) == Some("txt"))
                .collect();
            paths.sort();
            for path in paths {
                let solver = path
                    .file_stem()
                    .and_then(|s| s.to_str())
                    .unwrap_or_default();
                if solver.is_empty() {
                    continue;
                }
                let text = fs::read_to_string(&path).map_err(|e| io(&path, e))?;
                reg.blocks.insert(
                    solver.to_string(),
                    SolverInstructionBlock::parse(solver, &text),
                );
            }
        }
        Ok(reg)
    }

    pub fn template(&self, name: TemplateName) -> &Template {
        &self.templates[&name]
    }

    /// Looks a template up by name; unregistered names are an error.
    pub fn get(&self, name: &str) -> Result<&Template, PromptError> {
        Ok(self.template(name.parse()?))
    }

    pub fn system_preamble(&self) -> &str {
        &self.system
    }

    /// The registered block for `solver` (case-insensitive), or an empty one.
    pub fn instruction_block_for(&self, solver: &str) -> SolverInstructionBlock {
        self.blocks
            .get(&solver.to_ascii_lowercase())
            .cloned()
            .unwrap_or_else(|| SolverInstructionBlock {
                solver: solver.to_string(),
                lines: Vec::new(),
            })
    }

    pub fn render(&self, name: TemplateName, bindings: &Bindings) -> Result<String, PromptError> {
        self.template(name).render(bindings)
    }

    /// The system preamble followed by the rendered template as one user message.
    pub fn exchange(
        &self,
        name: TemplateName,
        bindings: &Bindings,
        model: &str,
        temperature: f64,
    ) -> Result<ChatExchange, PromptError> {
        let text = self.render(name, bindings)?;
        Ok(ChatExchange {
            model: model.to_string(),
            messages: vec![Message::system(self.system.clone()), Message::user(text)],
            temperature,
            tag: Some(name.to_string()),
        })
    }
}

/// Block lookup against the built-in registry.
pub fn instruction_block_for(solver: &str) -> SolverInstructionBlock {
    PromptRegistry::builtin().instruction_block_for(solver)
}
