use std::collections::BTreeMap;
use std::ops::Range;

use serde::{Deserialize, Serialize};

use super::{Snop, SnopField};

const MARKER: &str = "\\param{";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParamLocation {
    pub field: SnopField,
    pub statement: usize,
    /// Byte span of the whole `\param{...}` marker within the statement.
    pub span: Range<usize>,
}

/// Distinct parameter identifiers, each with every place it was mentioned.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParamSet {
    params: BTreeMap<String, Vec<ParamLocation>>,
}

impl ParamSet {
    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn contains(&self, name: &str) -> bool {
        self.params.contains_key(name)
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.params.keys().map(String::as_str)
    }

    pub fn locations(&self, name: &str) -> &[ParamLocation] {
        self.params.get(name).map(Vec::as_slice).unwrap_or(&[])
    }

    /// Set equality on identifiers, ignoring locations.
    pub fn same_names(&self, other: &ParamSet) -> bool {
        self.params.keys().eq(other.params.keys())
    }

    fn insert(&mut self, name: String, loc: ParamLocation) {
        self.params.entry(name).or_default().push(loc);
    }
}

/// Finds every `\param{NAME}` marker in `text`.
///
/// Returns the identifiers with the byte span of each marker, or the span of
/// the first marker that is unclosed or whose name is not a non-empty
/// `[A-Za-z0-9_]` identifier.
pub fn scan_markers(text: &str) -> Result<Vec<(String, Range<usize>)>, Range<usize>> {
    let mut found = Vec::new();
    let mut from = 0;
    while let Some(rel) = text[from..].find(MARKER) {
        let start = from + rel;
        let name_start = start + MARKER.len();
        let Some(close_rel) = text[name_start..].find('}') else {
            return Err(start..text.len());
        };
        let name_end = name_start + close_rel;
        let name = &text[name_start..name_end];
        let end = name_end + 1;
        if name.is_empty() || !name.bytes().all(|b| b.is_ascii_alphanumeric() || b == b'_') {
            return Err(start..end);
        }
        found.push((name.to_string(), start..end));
        from = end;
    }
    Ok(found)
}

/// Collects the parameter identifiers marked across all SNOP fields.
///
/// Statements with malformed markers contribute nothing; [`Snop::validate`]
/// rejects those up front.
pub fn extract_params(snop: &Snop) -> ParamSet {
    let mut set = ParamSet::default();
    for (field, statement, text) in snop.statements() {
        if let Ok(markers) = scan_markers(text) {
            for (name, span) in markers {
                set.insert(
                    name,
                    ParamLocation {
                        field,
                        statement,
                        span,
                    },
                );
            }
        }
    }
    set
}
