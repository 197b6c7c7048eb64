//! Problem instances on disk: SNOP, data file, validity tests, optimal value
//! and a sample output, indexed by a `manifest.json` at the corpus root.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::sandbox::{Executor, SandboxError, TestKind, TestReport, TestScript, Workspace};
use crate::snop::{
    check_conformance, check_conformance_seeded, parse_snop, ConformanceReport, FormatError, Snop,
    SnopError, Violation, ViolationKind,
};

pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ProblemClass {
    LP,
    MILP,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NegativeExpectation {
    MissingKey,
    KindMismatch,
    InconsistentLength,
    TestFailure,
}

impl NegativeExpectation {
    pub fn violation_kind(self) -> Option<ViolationKind> {
        match self {
            NegativeExpectation::MissingKey => Some(ViolationKind::MissingKey),
            NegativeExpectation::KindMismatch => Some(ViolationKind::KindMismatch),
            NegativeExpectation::InconsistentLength => Some(ViolationKind::InconsistentLength),
            NegativeExpectation::TestFailure => None,
        }
    }
}

/// A seeded bad output and what checking it must report.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NegativeCase {
    pub file: String,
    pub expect: NegativeExpectation,
    /// For test failures, the test file stem expected to fail.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub test: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManifestEntry {
    pub id: String,
    pub path: String,
    pub problem_class: ProblemClass,
    /// Decimal string, parsed at load time.
    pub optimal_value: String,
    /// Output key that holds the objective value.
    pub objective_key: String,
    #[serde(default)]
    pub negatives: Vec<NegativeCase>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct ManifestFile {
    #[serde(default)]
    version: String,
    #[serde(default)]
    instances: Vec<ManifestEntry>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CorpusManifest {
    pub root: PathBuf,
    pub version: String,
    pub entries: Vec<ManifestEntry>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum View {
    Data,
    SampleOutput,
}

impl fmt::Display for View {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            View::Data => "data file",
            View::SampleOutput => "sample output",
        })
    }
}

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("no {MANIFEST_FILE} in {}", .0.display())]
    MissingManifest(PathBuf),
    #[error("invalid manifest {}: {message}", path.display())]
    InvalidManifest { path: PathBuf, message: String },
    #[error("instance `{id}` points at missing path {}", path.display())]
    DanglingPath { id: String, path: PathBuf },
    #[error("instance id `{0}` appears more than once")]
    DuplicateId(String),
    #[error("unknown instance `{0}`")]
    UnknownId(String),
    #[error("could not read {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{}: invalid JSON: {message}", path.display())]
    Json { path: PathBuf, message: String },
    #[error("instance `{id}`: {source}")]
    Snop {
        id: String,
        #[source]
        source: SnopError,
    },
    #[error("instance `{id}`: {source}")]
    Format {
        id: String,
        #[source]
        source: FormatError,
    },
    #[error("instance `{id}`: optimal value `{value}` is not a number")]
    InvalidOptimalValue { id: String, value: String },
    #[error("instance `{id}`: {view} does not conform: {}", violations.iter().map(|v| v.to_string()).collect::<Vec<_>>().join("; "))]
    ConformanceFailure {
        id: String,
        view: View,
        violations: Vec<Violation>,
    },
    #[error("instance `{0}` has no validity tests")]
    NoValidityTests(String),
    #[error("test {} lacks a `# kind: auto|supervised|human` first line", .0.display())]
    MissingKindHeader(PathBuf),
}

fn read(path: &Path) -> Result<String, CorpusError> {
    fs::read_to_string(path).map_err(|source| CorpusError::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn read_json(path: &Path) -> Result<Value, CorpusError> {
    serde_json::from_str(&read(path)?).map_err(|e| CorpusError::Json {
        path: path.to_path_buf(),
        message: e.to_string(),
    })
}

impl CorpusManifest {
    pub fn ids(&self) -> impl Iterator<Item = &str> {
        self.entries.iter().map(|e| e.id.as_str())
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entry(&self, id: &str) -> Option<&ManifestEntry> {
        self.entries.iter().find(|e| e.id == id)
    }

    pub fn instance_dir(&self, entry: &ManifestEntry) -> PathBuf {
        self.root.join(&entry.path)
    }

    pub fn counts(&self) -> BTreeMap<ProblemClass, usize> {
        let mut counts = BTreeMap::new();
        for e in &self.entries {
            *counts.entry(e.problem_class).or_insert(0) += 1;
        }
        counts
    }
}

/// Reads the manifest and checks that every instance directory exists.
/// Instance contents are not read.
pub fn load_corpus(root: &Path) -> Result<CorpusManifest, CorpusError> {
    let path = root.join(MANIFEST_FILE);
    if !path.is_file() {
        return Err(CorpusError::MissingManifest(root.to_path_buf()));
    }
    let text = read(&path)?;
    let file: ManifestFile = if text.trim().is_empty() {
        ManifestFile::default()
    } else {
        serde_json::from_str(&text).map_err(|e| CorpusError::InvalidManifest {
            path: path.clone(),
            message: e.to_string(),
        })?
    };
    let mut seen = BTreeSet::new();
    for e in &file.instances {
        if !seen.insert(e.id.as_str()) {
            return Err(CorpusError::DuplicateId(e.id.clone()));
        }
        let dir = root.join(&e.path);
        if !dir.is_dir() {
            return Err(CorpusError::DanglingPath {
                id: e.id.clone(),
                path: dir,
            });
        }
    }
    Ok(CorpusManifest {
        root: root.to_path_buf(),
        version: file.version,
        entries: file.instances,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProblemInstance {
    pub id: String,
    pub dir: PathBuf,
    pub snop: Snop,
    pub data_path: PathBuf,
    pub data: Value,
    pub validity_tests: Vec<TestScript>,
    pub optimal_value: f64,
    pub sample_output_path: PathBuf,
    pub sample_output: Value,
    pub problem_class: ProblemClass,
    pub objective_key: String,
    pub negatives: Vec<NegativeCase>,
}

impl ProblemInstance {
    /// The numeric objective stored under the manifest's objective key.
    pub fn objective_of(&self, output: &Value) -> Option<f64> {
        output.get(&self.objective_key).and_then(Value::as_f64)
    }
}

/// Reads `dir/tests/*` sorted by file name; each must start with a kind header.
pub fn load_tests(dir: &Path) -> Result<Vec<TestScript>, CorpusError> {
    load_test_dir(&dir.join("tests"))
}

/// Reads every test script directly inside `tests_dir`, in file-name order.
/// Each must start with a `# kind:` header. A missing directory holds no tests.
pub fn load_test_dir(tests_dir: &Path) -> Result<Vec<TestScript>, CorpusError> {
    let Ok(entries) = fs::read_dir(tests_dir) else {
        return Ok(Vec::new());
    };
    let mut paths: Vec<PathBuf> = entries
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_file())
        .collect();
    paths.sort();
    paths
        .into_iter()
        .map(|p| {
            let source = read(&p)?;
            let kind = source
                .lines()
                .next()
                .and_then(TestKind::from_header)
                .ok_or_else(|| CorpusError::MissingKindHeader(p.clone()))?;
            let id = p
                .file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_default();
            Ok(TestScript { id, kind, source })
        })
        .collect()
}

/// Materializes one instance, verifying conformance of the data file and the
/// sample output eagerly.
pub fn load_instance(manifest: &CorpusManifest, id: &str) -> Result<ProblemInstance, CorpusError> {
    let entry = manifest
        .entry(id)
        .ok_or_else(|| CorpusError::UnknownId(id.to_string()))?;
    let dir = manifest.instance_dir(entry);
    let snop = parse_snop(&read(&dir.join("snop.txt"))?).map_err(|source| CorpusError::Snop {
        id: id.to_string(),
        source,
    })?;
    let data_path = dir.join("data.json");
    let data = read_json(&data_path)?;
    let sample_output_path = dir.join("sample_output.json");
    let sample_output = read_json(&sample_output_path)?;
    let optimal_value = entry
        .optimal_value
        .trim()
        .parse::<f64>()
        .ok()
        .filter(|v| v.is_finite())
        .ok_or_else(|| CorpusError::InvalidOptimalValue {
            id: id.to_string(),
            value: entry.optimal_value.clone(),
        })?;

    let (data_report, sample_report) =
        structural_reports(&snop, &data, &sample_output).map_err(|source| CorpusError::Format {
            id: id.to_string(),
            source,
        })?;
    for (view, report) in [
        (View::Data, data_report),
        (View::SampleOutput, sample_report),
    ] {
        if !report.is_conformant() {
            return Err(CorpusError::ConformanceFailure {
                id: id.to_string(),
                view,
                violations: report.violations,
            });
        }
    }

    let validity_tests = load_tests(&dir)?;
    if validity_tests.is_empty() {
        return Err(CorpusError::NoValidityTests(id.to_string()));
    }
    Ok(ProblemInstance {
        id: id.to_string(),
        dir,
        snop,
        data_path,
        data,
        validity_tests,
        optimal_value,
        sample_output_path,
        sample_output,
        problem_class: entry.problem_class,
        objective_key: entry.objective_key.clone(),
        negatives: entry.negatives.clone(),
    })
}

/// Conformance of the data file to the input format, and of an output
/// document to the output format with bounds carried over from the data.
pub fn structural_reports(
    snop: &Snop,
    data: &Value,
    output: &Value,
) -> Result<(ConformanceReport, ConformanceReport), FormatError> {
    let data_report = check_conformance(&snop.input_tree()?, data);
    let output_report = check_conformance_seeded(&snop.output_tree()?, output, &data_report.bounds);
    Ok((data_report, output_report))
}

/// Outcome of checking an output document against an instance.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct IntegrityReport {
    pub data: ConformanceReport,
    pub output: ConformanceReport,
    pub tests: TestReport,
    /// Objective in the output, when present under the objective key.
    pub objective: Option<f64>,
}

impl IntegrityReport {
    pub fn is_clean(&self) -> bool {
        self.data.is_conformant() && self.output.is_conformant() && self.tests.passed
    }

    /// Stems of the failing validity tests.
    pub fn failed_tests(&self) -> Vec<&str> {
        self.tests.failures().map(|e| e.id.as_str()).collect()
    }
}

/// Checks `output` structurally and runs every validity test against it in a
/// fresh workspace under `scratch`.
pub fn check_output(
    instance: &ProblemInstance,
    output: &Value,
    executor: &dyn Executor,
    scratch: &Path,
    timeout: Duration,
) -> Result<IntegrityReport, SandboxError> {
    // Formats were validated at load; an unparsable one cannot happen here.
    let (data, output_report) =
        structural_reports(&instance.snop, &instance.data, output).unwrap_or_default();
    let ws = Workspace::create_unique(scratch, &format!("check-{}", instance.id))?;
    ws.stage_data(&instance.data_path)?;
    ws.write_output(output)?;
    let tests = executor.run_tests(&ws, &instance.validity_tests, timeout)?;
    Ok(IntegrityReport {
        data,
        output: output_report,
        tests,
        objective: instance.objective_of(output),
    })
}

/// [`check_output`] applied to the instance's own sample output.
pub fn integrity_check(
    instance: &ProblemInstance,
    executor: &dyn Executor,
    scratch: &Path,
    timeout: Duration,
) -> Result<IntegrityReport, SandboxError> {
    check_output(
        instance,
        &instance.sample_output,
        executor,
        scratch,
        timeout,
    )
}
