use std::fs;
use std::io::Read;
use std::os::unix::process::CommandExt;
use std::path::Path;
use std::process::{Child, Command, Stdio};
use std::thread;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use super::workspace::OUTPUT_FILE;
use super::{
    classify_run, test_message, Classification, ExecutionResult, Executor, SandboxError, TestEntry,
    TestReport, TestScript, Workspace,
};

const POLL: Duration = Duration::from_millis(10);

/// Runs programs as child processes of a configurable interpreter.
///
/// Each run gets its own process group so a timeout kills everything the
/// program spawned. The environment is reduced to `PATH` plus a few
/// interpreter switches.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProcessSandbox {
    /// Command template; `{file}` is replaced by the workspace-relative
    /// script path.
    pub interpreter_cmd: Vec<String>,
    pub extension: String,
}

impl Default for ProcessSandbox {
    fn default() -> Self {
        ProcessSandbox {
            interpreter_cmd: vec!["python3".into(), "{file}".into()],
            extension: "py".into(),
        }
    }
}

struct RawRun {
    exit_code: Option<i32>,
    stdout: String,
    stderr: String,
    duration: Duration,
    timed_out: bool,
}

impl ProcessSandbox {
    fn command(&self, dir: &Path, file: &str) -> Result<Command, SandboxError> {
        let (program, args) = self
            .interpreter_cmd
            .split_first()
            .ok_or(SandboxError::EmptyCommand)?;
        let mut cmd = Command::new(program);
        for a in args {
            cmd.arg(a.replace("{file}", file));
        }
        cmd.current_dir(dir)
            .env_clear()
            .env("PATH", std::env::var_os("PATH").unwrap_or_default())
            .env("HOME", dir)
            .env("LANG", "C.UTF-8")
            .env("PYTHONDONTWRITEBYTECODE", "1")
            .env("PYTHONHASHSEED", "0")
            .stdin(Stdio::null())
            .stdout(Stdio::piped())
            .stderr(Stdio::piped())
            .process_group(0);
        Ok(cmd)
    }

    fn run(&self, dir: &Path, file: &str, timeout: Duration) -> Result<RawRun, SandboxError> {
        let mut cmd = self.command(dir, file)?;
        let start = Instant::now();
        let mut child = cmd.spawn().map_err(|source| SandboxError::Spawn {
            command: self.interpreter_cmd.join(" "),
            source,
        })?;
        let out = drain(child.stdout.take());
        let err = drain(child.stderr.take());
        let (status, timed_out) = wait_or_kill(&mut child, timeout);
        let duration = start.elapsed();
        let clean = |s: String| scrub_paths(&s, dir);
        Ok(RawRun {
            exit_code: status,
            stdout: clean(out.join().unwrap_or_default()),
            stderr: clean(err.join().unwrap_or_default()),
            duration,
            timed_out,
        })
    }
}

fn drain<R: Read + Send + 'static>(pipe: Option<R>) -> thread::JoinHandle<String> {
    thread::spawn(move || {
        let mut buf = Vec::new();
        if let Some(mut p) = pipe {
            let _ = p.read_to_end(&mut buf);
        }
        String::from_utf8_lossy(&buf).into_owned()
    })
}

fn wait_or_kill(child: &mut Child, timeout: Duration) -> (Option<i32>, bool) {
    let deadline = Instant::now() + timeout;
    loop {
        match child.try_wait() {
            Ok(Some(status)) => {
                kill_group(child);
                return (status.code(), false);
            }
            Ok(None) if Instant::now() >= deadline => {
                kill_group(child);
                let _ = child.wait();
                return (None, true);
            }
            Ok(None) => thread::sleep(POLL),
            Err(_) => {
                kill_group(child);
                let _ = child.wait();
                return (None, false);
            }
        }
    }
}

/// Kills the child's process group, which also removes stragglers that would
/// otherwise hold the output pipes open.
fn kill_group(child: &Child) {
    let pgid = child.id() as libc::pid_t;
    // SAFETY: signalling a process group we created; failure (already gone)
    // is harmless.
    unsafe {
        libc::kill(-pgid, libc::SIGKILL);
    }
}

/// Replaces the absolute workspace path with `.` so diagnostics do not depend
/// on where the workspace lives.
fn scrub_paths(text: &str, dir: &Path) -> String {
    let mut out = text.to_string();
    let mut prefixes = vec![dir.to_path_buf()];
    if let Ok(c) = dir.canonicalize() {
        prefixes.insert(0, c);
    }
    for p in prefixes {
        let p = p.to_string_lossy().into_owned();
        if !p.is_empty() {
            out = out.replace(&format!("{p}/"), "").replace(&p, ".");
        }
    }
    out
}

impl Executor for ProcessSandbox {
    fn extension(&self) -> &str {
        &self.extension
    }

    fn execute(&self, ws: &Workspace, timeout: Duration) -> Result<ExecutionResult, SandboxError> {
        let file = ws
            .code_file()
            .ok_or_else(|| SandboxError::NotStaged(ws.path().to_path_buf()))?
            .to_string();
        ws.clear_output()?;
        let raw = self.run(ws.path(), &file, timeout)?;
        let out_path = ws.path().join(OUTPUT_FILE);
        let (output, output_error) = match fs::read_to_string(&out_path) {
            Ok(text) => match serde_json::from_str(&text) {
                Ok(v) => (Some(v), None),
                Err(e) => (None, Some(e.to_string())),
            },
            Err(_) => (None, None),
        };
        let classification = classify_run(
            raw.timed_out,
            raw.exit_code,
            &raw.stderr,
            output.is_some() || output_error.is_some(),
            output.is_some(),
        );
        let output = if classification == Classification::RanWithOutput {
            output
        } else {
            None
        };
        let result = ExecutionResult {
            exit_code: raw.exit_code,
            stdout: raw.stdout,
            stderr: raw.stderr,
            duration_ms: raw.duration.as_millis() as u64,
            output,
            output_error,
            classification,
        };
        ws.append_log(&format!(
            "execute {file}: {classification} exit={:?} duration_ms={}",
            result.exit_code, result.duration_ms
        ))?;
        Ok(result)
    }

    fn run_tests(
        &self,
        ws: &Workspace,
        tests: &[TestScript],
        timeout: Duration,
    ) -> Result<TestReport, SandboxError> {
        let files = ws.write_tests(tests, &self.extension)?;
        let mut entries = Vec::with_capacity(tests.len());
        for (test, file) in tests.iter().zip(files) {
            let raw = self.run(ws.path(), &file, timeout)?;
            let marker = raw
                .stdout
                .lines()
                .any(|l| l.trim_start().starts_with("FAIL:"));
            let passed = !raw.timed_out && raw.exit_code == Some(0) && !marker;
            let message = if passed {
                String::new()
            } else if raw.timed_out {
                format!("test did not finish within {} seconds", timeout.as_secs())
            } else {
                test_message(&raw.stdout, &raw.stderr).unwrap_or_else(|| match raw.exit_code {
                    Some(c) => format!("test exited with status {c}"),
                    None => "test was terminated".to_string(),
                })
            };
            ws.append_log(&format!(
                "test {} ({file}): {} duration_ms={}",
                test.id,
                if passed { "pass" } else { "fail" },
                raw.duration.as_millis()
            ))?;
            entries.push(TestEntry {
                id: test.id.clone(),
                passed,
                message,
            });
        }
        Ok(TestReport::from_entries(entries))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn scrub_removes_workspace_prefix() {
        let dir = Path::new("/tmp/runs/a/attempt-0");
        let text = "File \"/tmp/runs/a/attempt-0/code.py\", line 2\ncwd /tmp/runs/a/attempt-0";
        assert_eq!(scrub_paths(text, dir), "File \"code.py\", line 2\ncwd .");
    }

    #[test]
    fn empty_command_is_rejected() {
        let sb = ProcessSandbox {
            interpreter_cmd: vec![],
            extension: "py".into(),
        };
        assert!(matches!(
            sb.command(Path::new("."), "x.py"),
            Err(SandboxError::EmptyCommand)
        ));
    }
}
