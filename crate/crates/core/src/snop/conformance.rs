use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::format::{FormatNode, FormatTree};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ViolationKind {
    MissingKey,
    KindMismatch,
    InconsistentLength,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Violation {
    MissingKey {
        path: String,
        key: String,
    },
    KindMismatch {
        path: String,
        expected: String,
        found: String,
    },
    InconsistentLength {
        path: String,
        bound: String,
        expected: usize,
        found: usize,
    },
}

impl Violation {
    pub fn kind(&self) -> ViolationKind {
        match self {
            Violation::MissingKey { .. } => ViolationKind::MissingKey,
            Violation::KindMismatch { .. } => ViolationKind::KindMismatch,
            Violation::InconsistentLength { .. } => ViolationKind::InconsistentLength,
        }
    }
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::MissingKey { path, key } => write!(f, "{path}: missing key \"{key}\""),
            Violation::KindMismatch {
                path,
                expected,
                found,
            } => write!(f, "{path}: expected {expected}, found {found}"),
            Violation::InconsistentLength {
                path,
                bound,
                expected,
                found,
            } => write!(
                f,
                "{path}: length {found} disagrees with {bound} = {expected}"
            ),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConformanceReport {
    pub violations: Vec<Violation>,
    /// Lengths inferred for each bound identifier, fixed by the first list seen.
    pub bounds: BTreeMap<String, usize>,
}

impl ConformanceReport {
    pub fn is_conformant(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn kinds(&self) -> Vec<ViolationKind> {
        self.violations.iter().map(Violation::kind).collect()
    }
}

fn json_kind(v: &Value) -> &'static str {
    match v {
        Value::Null => "null",
        Value::Bool(_) => "bool",
        Value::Number(_) => "number",
        Value::String(_) => "string",
        Value::Array(_) => "list",
        Value::Object(_) => "object",
    }
}

/// Checks a parsed JSON document against a format tree in one pass.
///
/// Keys present in the document but absent from the tree are ignored.
pub fn check_conformance(tree: &FormatTree, document: &Value) -> ConformanceReport {
    check_conformance_seeded(tree, document, &BTreeMap::new())
}

/// Like [`check_conformance`], but with bound lengths already fixed, typically
/// the `bounds` of the data file's report when checking an output document.
pub fn check_conformance_seeded(
    tree: &FormatTree,
    document: &Value,
    bounds: &BTreeMap<String, usize>,
) -> ConformanceReport {
    let mut report = ConformanceReport {
        violations: Vec::new(),
        bounds: bounds.clone(),
    };
    walk(&tree.root, document, "$".to_string(), &mut report);
    report
}

fn walk(node: &FormatNode, doc: &Value, path: String, report: &mut ConformanceReport) {
    let mismatch = |report: &mut ConformanceReport, path: String| {
        report.violations.push(Violation::KindMismatch {
            path,
            expected: node.kind_name().to_string(),
            found: json_kind(doc).to_string(),
        })
    };
    match node {
        FormatNode::Any => {}
        FormatNode::ScalarRef(_) => {
            if matches!(doc, Value::Array(_) | Value::Object(_)) {
                mismatch(report, path);
            }
        }
        FormatNode::Object(pairs) => {
            let Value::Object(map) = doc else {
                return mismatch(report, path);
            };
            for (key, child) in pairs {
                match map.get(key) {
                    Some(v) => walk(child, v, format!("{path}.{key}"), report),
                    None => report.violations.push(Violation::MissingKey {
                        path: path.clone(),
                        key: key.clone(),
                    }),
                }
            }
        }
        FormatNode::List {
            element,
            comprehension,
        } => {
            let Value::Array(items) = doc else {
                return mismatch(report, path);
            };
            if let Some(c) = comprehension {
                if let Some(bound) = c.range.bound_ident() {
                    match report.bounds.get(bound) {
                        None => {
                            report.bounds.insert(bound.to_string(), items.len());
                        }
                        Some(&expected) if expected != items.len() => {
                            report.violations.push(Violation::InconsistentLength {
                                path: path.clone(),
                                bound: bound.to_string(),
                                expected,
                                found: items.len(),
                            })
                        }
                        Some(_) => {}
                    }
                } else if let Some(expected) = c.range.fixed_len() {
                    if expected != items.len() {
                        report.violations.push(Violation::InconsistentLength {
                            path: path.clone(),
                            bound: format!("{}..{}", c.range.start, c.range.end),
                            expected,
                            found: items.len(),
                        });
                    }
                }
            }
            for (i, item) in items.iter().enumerate() {
                walk(element, item, format!("{path}[{i}]"), report);
            }
        }
    }
}
