use std::fs;
use std::path::{Path, PathBuf};
use std::thread;
use std::time::{Duration, Instant};

use crate::sandbox::{TestKind, TestScript};

use super::{FailureReason, Task};

pub const REVIEW_DIR: &str = "review";
pub const PENDING_MARKER: &str = "PENDING";
pub const CONFIRMED_MARKER: &str = "CONFIRMED";

/// How generated tests are reviewed before use.
#[derive(Debug, Clone, PartialEq)]
pub enum ReviewPolicy {
    /// Replace generated tests with the task's curated supervised tests, when
    /// it has any.
    Batch,
    /// Write the tests to `review/attempt-<i>/tests/`, mark the attempt
    /// `PENDING`, and wait until a `CONFIRMED` marker appears. The tests are
    /// then read back, edits included.
    Interactive { poll: Duration, timeout: Duration },
}

impl ReviewPolicy {
    pub fn interactive(timeout: Duration) -> Self {
        ReviewPolicy::Interactive {
            poll: Duration::from_millis(50),
            timeout,
        }
    }

    pub(crate) fn review(
        &self,
        run_dir: &Path,
        attempt: usize,
        generated: Vec<TestScript>,
        task: &Task,
        ext: &str,
    ) -> Result<Vec<TestScript>, FailureReason> {
        match self {
            ReviewPolicy::Batch if task.supervised_tests.is_empty() => Ok(generated),
            ReviewPolicy::Batch => Ok(task.supervised_tests.clone()),
            ReviewPolicy::Interactive { poll, timeout } => {
                let dir = run_dir.join(REVIEW_DIR).join(format!("attempt-{attempt}"));
                interactive(&dir, generated, ext, *poll, *timeout)
                    .map_err(|e| e.unwrap_or(FailureReason::ReviewTimeout))
            }
        }
    }
}

fn io(path: &Path, e: std::io::Error) -> Option<FailureReason> {
    Some(FailureReason::Io {
        message: format!("{}: {e}", path.display()),
    })
}

/// `Err(None)` is a timeout.
fn interactive(
    dir: &Path,
    generated: Vec<TestScript>,
    ext: &str,
    poll: Duration,
    timeout: Duration,
) -> Result<Vec<TestScript>, Option<FailureReason>> {
    let tests_dir = dir.join("tests");
    fs::create_dir_all(&tests_dir).map_err(|e| io(&tests_dir, e))?;
    let mut written = Vec::new();
    for (k, t) in generated.iter().enumerate() {
        let path = tests_dir.join(format!("{k}.{ext}"));
        fs::write(&path, &t.source).map_err(|e| io(&path, e))?;
        written.push((path, t));
    }
    let pending = dir.join(PENDING_MARKER);
    let confirmed = dir.join(CONFIRMED_MARKER);
    fs::write(&pending, format!("{}\n", tests_dir.display())).map_err(|e| io(&pending, e))?;

    let deadline = Instant::now() + timeout;
    while !confirmed.exists() {
        if Instant::now() >= deadline {
            let _ = fs::remove_file(&pending);
            return Err(None);
        }
        thread::sleep(poll);
    }
    let _ = fs::remove_file(&pending);

    let mut paths: Vec<PathBuf> = fs::read_dir(&tests_dir)
        .map_err(|e| io(&tests_dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_file())
        .collect();
    paths.sort();
    let mut tests = Vec::with_capacity(paths.len());
    for path in paths {
        let source = fs::read_to_string(&path).map_err(|e| io(&path, e))?;
        let original = written.iter().find(|(p, _)| *p == path).map(|(_, t)| *t);
        let (id, kind) = match original {
            Some(t) if t.source == source => (t.id.clone(), t.kind),
            Some(t) => (t.id.clone(), TestKind::Human),
            None => (
                path.file_stem()
                    .map(|s| format!("review-{}", s.to_string_lossy()))
                    .unwrap_or_default(),
                TestKind::Human,
            ),
        };
        tests.push(TestScript { id, kind, source });
    }
    Ok(tests)
}
