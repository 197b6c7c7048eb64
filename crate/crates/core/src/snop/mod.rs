//! Structured natural-language optimization problems.
//!
//! A [`Snop`] separates the prose of a problem from its numeric data. The
//! on-disk carrier is a small line-oriented key/value document:
//!
//! ```text
//! problem_type: LP
//! problem_info:
//!   - A shop makes \param{N} products.
//!   - Product i earns \param{profit_i} per unit.
//! input_format: {"profit": [profit_i for i in 1..N]}
//! output_info:
//!   - x_i is the quantity of product i
//! output_format: {"x": [x_i for i in 1..N], "objective": obj}
//! objective: Maximize total profit.
//! solver: cvxpy
//! ```
//!
//! Scalar fields are written `key: value`; list fields are a bare `key:` line
//! followed by `  - statement` items. Lines starting with `#` are comments.

mod conformance;
mod format;
mod params;

use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use conformance::{
    check_conformance, check_conformance_seeded, ConformanceReport, Violation, ViolationKind,
};
pub use format::{
    parse_format, Comprehension, FormatError, FormatNode, FormatTree, IndexRange, RangeBound,
};
pub use params::{extract_params, scan_markers, ParamLocation, ParamSet};

/// Tag meaning "let the agent decide" for `problem_type` and `solver`.
pub const ANY: &str = "ANY";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SnopField {
    ProblemType,
    ProblemInfo,
    InputFormat,
    OutputInfo,
    OutputFormat,
    Objective,
    Solver,
}

impl SnopField {
    pub const ALL: [SnopField; 7] = [
        SnopField::ProblemType,
        SnopField::ProblemInfo,
        SnopField::InputFormat,
        SnopField::OutputInfo,
        SnopField::OutputFormat,
        SnopField::Objective,
        SnopField::Solver,
    ];

    pub fn key(self) -> &'static str {
        match self {
            SnopField::ProblemType => "problem_type",
            SnopField::ProblemInfo => "problem_info",
            SnopField::InputFormat => "input_format",
            SnopField::OutputInfo => "output_info",
            SnopField::OutputFormat => "output_format",
            SnopField::Objective => "objective",
            SnopField::Solver => "solver",
        }
    }

    pub fn from_key(key: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|f| f.key() == key)
    }

    pub fn is_list(self) -> bool {
        matches!(self, SnopField::ProblemInfo | SnopField::OutputInfo)
    }
}

impl fmt::Display for SnopField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.key())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Snop {
    pub problem_type: String,
    pub problem_info: Vec<String>,
    pub input_format: String,
    pub output_info: Vec<String>,
    pub output_format: String,
    pub objective: String,
    pub solver: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SnopError {
    #[error("missing field `{0}`")]
    MissingField(SnopField),
    #[error("field `{0}` is empty")]
    EmptyField(SnopField),
    #[error("line {line}: unknown field `{key}`")]
    UnknownField { line: usize, key: String },
    #[error("line {line}: field `{field}` appears more than once")]
    DuplicateField { line: usize, field: SnopField },
    #[error("line {line}: field `{field}` takes a single statement, not a list")]
    NotAList { line: usize, field: SnopField },
    #[error("line {line}: {message}")]
    Syntax { line: usize, message: String },
    #[error("unclosed or malformed \\param marker in {field} statement {statement} at bytes {start}..{end}")]
    MalformedParamMarker {
        field: SnopField,
        statement: usize,
        start: usize,
        end: usize,
    },
    #[error("{field}: {source}")]
    Format {
        field: SnopField,
        #[source]
        source: FormatError,
    },
}

enum RawValue {
    Scalar(String),
    List(Vec<String>),
}

/// Parses a SNOP document. Missing `problem_type` and `solver` default to [`ANY`].
pub fn parse_snop(raw: &str) -> Result<Snop, SnopError> {
    let mut entries: Vec<(SnopField, usize, RawValue)> = Vec::new();
    let mut current_list: Option<usize> = None;

    for (idx, line) in raw.lines().enumerate() {
        let lineno = idx + 1;
        if line.trim().is_empty() || line.starts_with('#') {
            continue;
        }
        if line.starts_with(char::is_whitespace) {
            let item = line.trim_start();
            let Some(text) = item.strip_prefix('-') else {
                return Err(SnopError::Syntax {
                    line: lineno,
                    message: "indented line is not a `- ` list item".into(),
                });
            };
            let Some(pos) = current_list else {
                return Err(SnopError::Syntax {
                    line: lineno,
                    message: "list item outside of a list field".into(),
                });
            };
            let (field, _, value) = &mut entries[pos];
            match value {
                RawValue::List(items) => items.push(text.trim().to_string()),
                RawValue::Scalar(_) => {
                    return Err(SnopError::NotAList {
                        line: lineno,
                        field: *field,
                    })
                }
            }
            continue;
        }

        let Some((key, rest)) = line.split_once(':') else {
            return Err(SnopError::Syntax {
                line: lineno,
                message: "expected `key: value`".into(),
            });
        };
        let key = key.trim();
        let field = SnopField::from_key(key).ok_or_else(|| SnopError::UnknownField {
            line: lineno,
            key: key.to_string(),
        })?;
        if entries.iter().any(|(f, _, _)| *f == field) {
            return Err(SnopError::DuplicateField {
                line: lineno,
                field,
            });
        }
        let rest = rest.trim();
        if rest.is_empty() {
            entries.push((field, lineno, RawValue::List(Vec::new())));
            current_list = Some(entries.len() - 1);
        } else {
            entries.push((field, lineno, RawValue::Scalar(rest.to_string())));
            current_list = None;
        }
    }

    let mut take = |field: SnopField| {
        entries.iter().position(|(f, _, _)| *f == field).map(|i| {
            let (_, line, value) = entries.swap_remove(i);
            (line, value)
        })
    };

    let list = |field: SnopField, v: Option<(usize, RawValue)>| -> Result<Vec<String>, SnopError> {
        match v {
            None => Err(SnopError::MissingField(field)),
            Some((_, RawValue::List(items))) => Ok(items),
            // Inline single statement.
            Some((_, RawValue::Scalar(s))) => Ok(vec![s]),
        }
    };
    let scalar =
        |field: SnopField, v: Option<(usize, RawValue)>| -> Result<Option<String>, SnopError> {
            match v {
                None => Ok(None),
                Some((_, RawValue::Scalar(s))) => Ok(Some(s)),
                Some((_, RawValue::List(items))) if items.is_empty() => Ok(Some(String::new())),
                Some((line, RawValue::List(_))) => Err(SnopError::NotAList { line, field }),
            }
        };
    let required = |field: SnopField, v: Option<String>| -> Result<String, SnopError> {
        match v {
            None => Err(SnopError::MissingField(field)),
            Some(s) if s.is_empty() => Err(SnopError::EmptyField(field)),
            Some(s) => Ok(s),
        }
    };
    let defaulted = |v: Option<String>| match v {
        Some(s) if !s.is_empty() => s,
        _ => ANY.to_string(),
    };

    let problem_type = defaulted(scalar(
        SnopField::ProblemType,
        take(SnopField::ProblemType),
    )?);
    let problem_info = list(SnopField::ProblemInfo, take(SnopField::ProblemInfo))?;
    let input_format = required(
        SnopField::InputFormat,
        scalar(SnopField::InputFormat, take(SnopField::InputFormat))?,
    )?;
    let output_info = list(SnopField::OutputInfo, take(SnopField::OutputInfo))?;
    let output_format = required(
        SnopField::OutputFormat,
        scalar(SnopField::OutputFormat, take(SnopField::OutputFormat))?,
    )?;
    let objective = required(
        SnopField::Objective,
        scalar(SnopField::Objective, take(SnopField::Objective))?,
    )?;
    let solver = defaulted(scalar(SnopField::Solver, take(SnopField::Solver))?);

    let snop = Snop {
        problem_type,
        problem_info,
        input_format,
        output_info,
        output_format,
        objective,
        solver,
    };
    snop.validate()?;
    Ok(snop)
}

impl Snop {
    /// Checks the structural invariants: non-empty info and objective, well-formed
    /// `\param{}` markers everywhere, and parseable format strings.
    pub fn validate(&self) -> Result<(), SnopError> {
        if self.problem_info.iter().all(|s| s.trim().is_empty()) {
            return Err(SnopError::EmptyField(SnopField::ProblemInfo));
        }
        if self.objective.trim().is_empty() {
            return Err(SnopError::EmptyField(SnopField::Objective));
        }
        for (field, statement, text) in self.statements() {
            scan_markers(text).map_err(|span| SnopError::MalformedParamMarker {
                field,
                statement,
                start: span.start,
                end: span.end,
            })?;
        }
        parse_format(&self.input_format).map_err(|source| SnopError::Format {
            field: SnopField::InputFormat,
            source,
        })?;
        parse_format(&self.output_format).map_err(|source| SnopError::Format {
            field: SnopField::OutputFormat,
            source,
        })?;
        Ok(())
    }

    /// Every text-bearing statement as `(field, statement index, text)`.
    /// Scalar fields report statement index 0.
    pub fn statements(&self) -> impl Iterator<Item = (SnopField, usize, &str)> {
        fn scalar(field: SnopField, s: &str) -> std::iter::Once<(SnopField, usize, &str)> {
            std::iter::once((field, 0, s))
        }
        scalar(SnopField::ProblemType, &self.problem_type)
            .chain(
                self.problem_info
                    .iter()
                    .enumerate()
                    .map(|(i, s)| (SnopField::ProblemInfo, i, s.as_str())),
            )
            .chain(scalar(SnopField::InputFormat, &self.input_format))
            .chain(
                self.output_info
                    .iter()
                    .enumerate()
                    .map(|(i, s)| (SnopField::OutputInfo, i, s.as_str())),
            )
            .chain(scalar(SnopField::OutputFormat, &self.output_format))
            .chain(scalar(SnopField::Objective, &self.objective))
            .chain(scalar(SnopField::Solver, &self.solver))
    }

    pub fn input_tree(&self) -> Result<FormatTree, FormatError> {
        parse_format(&self.input_format)
    }

    pub fn output_tree(&self) -> Result<FormatTree, FormatError> {
        parse_format(&self.output_format)
    }

    pub fn solver_is_any(&self) -> bool {
        self.solver.eq_ignore_ascii_case(ANY)
    }

    /// Parameter identifiers only, for cheap equality checks.
    pub fn param_names(&self) -> BTreeSet<String> {
        extract_params(self).names().map(str::to_string).collect()
    }

    /// Canonical serialization. `parse_snop(&s.serialize()) == Ok(s)` for valid SNOPs
    /// whose statements are single-line and trimmed.
    pub fn serialize(&self) -> String {
        let mut out = String::new();
        let scalar = |out: &mut String, field: SnopField, value: &str| {
            out.push_str(field.key());
            out.push_str(": ");
            out.push_str(value);
            out.push('\n');
        };
        let list = |out: &mut String, field: SnopField, items: &[String]| {
            out.push_str(field.key());
            out.push_str(":\n");
            for item in items {
                out.push_str("  - ");
                out.push_str(item);
                out.push('\n');
            }
        };
        scalar(&mut out, SnopField::ProblemType, &self.problem_type);
        list(&mut out, SnopField::ProblemInfo, &self.problem_info);
        scalar(&mut out, SnopField::InputFormat, &self.input_format);
        list(&mut out, SnopField::OutputInfo, &self.output_info);
        scalar(&mut out, SnopField::OutputFormat, &self.output_format);
        scalar(&mut out, SnopField::Objective, &self.objective);
        scalar(&mut out, SnopField::Solver, &self.solver);
        out
    }
}

impl fmt::Display for Snop {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.serialize())
    }
}
