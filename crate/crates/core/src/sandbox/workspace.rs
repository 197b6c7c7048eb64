use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::SystemTime;

use super::{SandboxError, TestScript};

pub const DATA_FILE: &str = "data.json";
pub const OUTPUT_FILE: &str = "output.json";
pub const LOG_FILE: &str = "exec.log";
pub const TESTS_DIR: &str = "tests";

/// A directory owned by one attempt. Never removed implicitly.
#[derive(Debug, Clone)]
pub struct Workspace {
    path: PathBuf,
    created_at: SystemTime,
    code_file: Option<String>,
}

impl Workspace {
    /// Creates `parent/name`, which must not exist yet.
    pub fn create(parent: &Path, name: &str) -> Result<Self, SandboxError> {
        fs::create_dir_all(parent).map_err(|e| SandboxError::io(parent, e))?;
        let path = parent.join(name);
        fs::create_dir(&path).map_err(|e| SandboxError::io(&path, e))?;
        Ok(Workspace {
            path,
            created_at: SystemTime::now(),
            code_file: None,
        })
    }

    /// Creates `parent/prefix-<n>` for the smallest free `n`.
    pub fn create_unique(parent: &Path, prefix: &str) -> Result<Self, SandboxError> {
        fs::create_dir_all(parent).map_err(|e| SandboxError::io(parent, e))?;
        for n in 0.. {
            let path = parent.join(format!("{prefix}-{n}"));
            match fs::create_dir(&path) {
                Ok(()) => {
                    return Ok(Workspace {
                        path,
                        created_at: SystemTime::now(),
                        code_file: None,
                    })
                }
                Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => continue,
                Err(e) => return Err(SandboxError::io(&path, e)),
            }
        }
        unreachable!()
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn created_at(&self) -> SystemTime {
        self.created_at
    }

    pub fn code_file(&self) -> Option<&str> {
        self.code_file.as_deref()
    }

    pub fn output_path(&self) -> PathBuf {
        self.path.join(OUTPUT_FILE)
    }

    pub fn data_path(&self) -> PathBuf {
        self.path.join(DATA_FILE)
    }

    /// Writes (or replaces) `code.<ext>`.
    pub fn write_code(&mut self, code: &str, ext: &str) -> Result<PathBuf, SandboxError> {
        let name = format!("code.{ext}");
        let path = self.path.join(&name);
        fs::write(&path, code).map_err(|e| SandboxError::io(&path, e))?;
        self.code_file = Some(name);
        Ok(path)
    }

    pub fn stage_data(&self, source: &Path) -> Result<(), SandboxError> {
        let dest = self.data_path();
        fs::copy(source, &dest).map_err(|e| SandboxError::io(source, e))?;
        Ok(())
    }

    /// Writes `tests/<k>.<ext>` for each script, replacing earlier ones,
    /// and returns the file names relative to the workspace.
    pub fn write_tests(
        &self,
        tests: &[TestScript],
        ext: &str,
    ) -> Result<Vec<String>, SandboxError> {
        let dir = self.path.join(TESTS_DIR);
        if dir.exists() {
            fs::remove_dir_all(&dir).map_err(|e| SandboxError::io(&dir, e))?;
        }
        fs::create_dir(&dir).map_err(|e| SandboxError::io(&dir, e))?;
        let mut names = Vec::with_capacity(tests.len());
        for (k, t) in tests.iter().enumerate() {
            let rel = format!("{TESTS_DIR}/{k}.{ext}");
            let path = self.path.join(&rel);
            fs::write(&path, &t.source).map_err(|e| SandboxError::io(&path, e))?;
            names.push(rel);
        }
        Ok(names)
    }

    /// Writes `output.json` directly, for checking an output without running code.
    pub fn write_output(&self, value: &serde_json::Value) -> Result<(), SandboxError> {
        let path = self.output_path();
        let text = serde_json::to_string(value).expect("json values serialize");
        fs::write(&path, text).map_err(|e| SandboxError::io(&path, e))
    }

    pub fn clear_output(&self) -> Result<(), SandboxError> {
        let path = self.output_path();
        match fs::remove_file(&path) {
            Err(e) if e.kind() != std::io::ErrorKind::NotFound => Err(SandboxError::io(&path, e)),
            _ => Ok(()),
        }
    }

    pub fn append_log(&self, line: &str) -> Result<(), SandboxError> {
        let path = self.path.join(LOG_FILE);
        let mut f = fs::OpenOptions::new()
            .create(true)
            .append(true)
            .open(&path)
            .map_err(|e| SandboxError::io(&path, e))?;
        writeln!(f, "{line}").map_err(|e| SandboxError::io(&path, e))
    }

    /// Deletes the workspace and everything in it.
    pub fn remove(self) -> Result<(), SandboxError> {
        fs::remove_dir_all(&self.path).map_err(|e| SandboxError::io(&self.path, e))
    }
}

/// Creates the workspace `parent/name` holding the code file and a copy of the
/// data file.
pub fn stage(
    parent: &Path,
    name: &str,
    code: &str,
    data_path: &Path,
    ext: &str,
) -> Result<Workspace, SandboxError> {
    let mut ws = Workspace::create(parent, name)?;
    ws.write_code(code, ext)?;
    ws.stage_data(data_path)?;
    Ok(ws)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn stage_writes_two_files() {
        let root = tempfile::tempdir().unwrap();
        let data = root.path().join("d.json");
        fs::write(&data, "{}").unwrap();
        let ws = stage(root.path(), "a", "print(1)\n", &data, "py").unwrap();
        let mut names: Vec<_> = fs::read_dir(ws.path())
            .unwrap()
            .map(|e| e.unwrap().file_name().into_string().unwrap())
            .collect();
        names.sort();
        assert_eq!(names, ["code.py", "data.json"]);
    }

    #[test]
    fn unique_paths_are_distinct() {
        let root = tempfile::tempdir().unwrap();
        let a = Workspace::create_unique(root.path(), "attempt").unwrap();
        let b = Workspace::create_unique(root.path(), "attempt").unwrap();
        assert_ne!(a.path(), b.path());
        assert!(Workspace::create(root.path(), "attempt-0").is_err());
    }

    #[test]
    fn unwritable_root_is_io_failure() {
        let root = tempfile::tempdir().unwrap();
        // A regular file cannot hold directories, whatever the privileges.
        let blocker = root.path().join("file");
        fs::write(&blocker, "").unwrap();
        let data = root.path().join("d.json");
        fs::write(&data, "{}").unwrap();
        let err = stage(&blocker.join("runs"), "a", "", &data, "py").unwrap_err();
        assert!(matches!(err, SandboxError::Io { .. }));
    }
}
