use std::fs::{self, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use super::{BackendTag, ChatBackend, ChatExchange, Completion, LlmError};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TranscriptRecord {
    pub seq: usize,
    pub run_id: String,
    pub digest: String,
    pub request: ChatExchange,
    pub completion: String,
    pub prompt_tokens: u64,
    pub completion_tokens: u64,
}

/// Ordered prompt/completion records, stored as JSON lines.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Transcript {
    pub records: Vec<TranscriptRecord>,
}

impl Transcript {
    pub fn load(path: &Path) -> Result<Self, LlmError> {
        let text = fs::read_to_string(path).map_err(|e| LlmError::TranscriptRead {
            path: path.to_path_buf(),
            message: e.to_string(),
        })?;
        let mut records = Vec::new();
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let rec = serde_json::from_str(line).map_err(|e| LlmError::TranscriptRead {
                path: path.to_path_buf(),
                message: format!("line {}: {e}", i + 1),
            })?;
            records.push(rec);
        }
        Ok(Transcript { records })
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Appends one record in memory and returns it.
    pub fn record(
        &mut self,
        run_id: &str,
        exchange: &ChatExchange,
        completion: &Completion,
    ) -> &TranscriptRecord {
        let rec = TranscriptRecord {
            seq: self.records.len(),
            run_id: run_id.to_string(),
            digest: exchange.digest(),
            request: exchange.clone(),
            completion: completion.text.clone(),
            prompt_tokens: completion.prompt_tokens,
            completion_tokens: completion.completion_tokens,
        };
        self.records.push(rec);
        self.records.last().expect("just pushed")
    }
}

/// Appends one JSON line to `path`, creating the file if needed.
pub fn append_record(path: &Path, rec: &TranscriptRecord) -> Result<(), LlmError> {
    let fail = |source| LlmError::PersistFailure {
        path: path.to_path_buf(),
        source,
    };
    let mut f = OpenOptions::new()
        .create(true)
        .append(true)
        .open(path)
        .map_err(fail)?;
    let line = serde_json::to_string(rec).expect("records serialize");
    writeln!(f, "{line}").map_err(fail)
}

/// Serves completions from a transcript.
///
/// A request takes the earliest unconsumed record with the same digest, so
/// repeated identical prompts are answered in recorded order.
#[derive(Debug)]
pub struct ReplayBackend {
    records: Vec<TranscriptRecord>,
    used: Mutex<Vec<bool>>,
}

impl ReplayBackend {
    pub fn new(transcript: Transcript) -> Self {
        let n = transcript.records.len();
        ReplayBackend {
            records: transcript.records,
            used: Mutex::new(vec![false; n]),
        }
    }

    pub fn load(path: &Path) -> Result<Self, LlmError> {
        Transcript::load(path).map(Self::new)
    }

    pub fn remaining(&self) -> usize {
        self.used.lock().unwrap().iter().filter(|u| !**u).count()
    }
}

impl ChatBackend for ReplayBackend {
    fn complete(&self, exchange: &ChatExchange) -> Result<Completion, LlmError> {
        let digest = exchange.digest();
        let mut used = self.used.lock().unwrap();
        let hit = self
            .records
            .iter()
            .enumerate()
            .find(|(i, r)| !used[*i] && r.digest == digest);
        match hit {
            Some((i, r)) => {
                used[i] = true;
                Ok(Completion {
                    text: r.completion.clone(),
                    prompt_tokens: r.prompt_tokens,
                    completion_tokens: r.completion_tokens,
                    backend: BackendTag::Replay,
                })
            }
            None => Err(LlmError::ReplayMiss { digest }),
        }
    }
}

/// Wraps another backend and appends every successful exchange to a
/// transcript file as it happens.
pub struct RecordingBackend<B> {
    inner: B,
    path: PathBuf,
    run_id: String,
    transcript: Mutex<Transcript>,
}

impl<B: ChatBackend> RecordingBackend<B> {
    pub fn new(inner: B, path: impl Into<PathBuf>, run_id: impl Into<String>) -> Self {
        RecordingBackend {
            inner,
            path: path.into(),
            run_id: run_id.into(),
            transcript: Mutex::new(Transcript::default()),
        }
    }

    pub fn transcript(&self) -> Transcript {
        self.transcript.lock().unwrap().clone()
    }

    pub fn into_inner(self) -> B {
        self.inner
    }
}

impl<B: ChatBackend> ChatBackend for RecordingBackend<B> {
    fn complete(&self, exchange: &ChatExchange) -> Result<Completion, LlmError> {
        let completion = self.inner.complete(exchange)?;
        let mut t = self.transcript.lock().unwrap();
        let rec = t.record(&self.run_id, exchange, &completion).clone();
        append_record(&self.path, &rec)?;
        Ok(completion)
    }
}
