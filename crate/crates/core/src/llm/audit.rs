use std::collections::HashMap;
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use super::{ChatProvider, ChatRequest, ChatResponse, Fingerprint, LlmError, Message};

/// One line of the JSONL audit log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditEntry {
    pub fingerprint: Fingerprint,
    pub model: String,
    pub messages: Vec<Message>,
    pub reply: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub finish_reason: Option<String>,
    #[serde(default)]
    pub attempts: u32,
    #[serde(default)]
    pub latency_ms: u64,
}

/// Forwards to an inner provider and appends every exchange to a JSONL log.
pub struct RecordingProvider<P> {
    inner: P,
    path: PathBuf,
    file: Mutex<File>,
}

impl<P: ChatProvider> RecordingProvider<P> {
    pub fn new(inner: P, path: impl AsRef<Path>) -> Result<Self, LlmError> {
        let path = path.as_ref().to_path_buf();
        let file = OpenOptions::new()
            .create(true)
            .append(true)
            .open(&path)
            .map_err(|e| LlmError::Audit {
                path: path.clone(),
                message: e.to_string(),
            })?;
        Ok(RecordingProvider {
            inner,
            path,
            file: Mutex::new(file),
        })
    }
}

impl<P: ChatProvider> ChatProvider for RecordingProvider<P> {
    fn model(&self) -> &str {
        self.inner.model()
    }

    fn complete(&self, req: &ChatRequest) -> Result<ChatResponse, LlmError> {
        let response = self.inner.complete(req)?;
        let entry = AuditEntry {
            fingerprint: req.fingerprint(),
            model: self.inner.model().to_string(),
            messages: req.messages.clone(),
            reply: response.content.clone(),
            finish_reason: response.finish_reason.clone(),
            attempts: response.attempts,
            latency_ms: response.latency.as_millis() as u64,
        };
        let mut line = serde_json::to_string(&entry).expect("audit entry serializes");
        line.push('\n');
        self.file
            .lock()
            .unwrap()
            .write_all(line.as_bytes())
            .map_err(|e| LlmError::Audit {
                path: self.path.clone(),
                message: e.to_string(),
            })?;
        Ok(response)
    }

    fn register_oracle(&self, fingerprint: Fingerprint, reply: &str) {
        self.inner.register_oracle(fingerprint, reply)
    }
}

/// Answers strictly from a recorded audit log.
pub struct ReplayProvider {
    model: String,
    replies: HashMap<Fingerprint, String>,
}

impl ReplayProvider {
    pub fn load(path: impl AsRef<Path>) -> Result<Self, LlmError> {
        let path = path.as_ref();
        let err = |message: String| LlmError::Audit {
            path: path.to_path_buf(),
            message,
        };
        let file = File::open(path).map_err(|e| err(e.to_string()))?;
        let mut replies = HashMap::new();
        let mut model = String::from("replay");
        for (i, line) in BufReader::new(file).lines().enumerate() {
            let line = line.map_err(|e| err(e.to_string()))?;
            if line.trim().is_empty() {
                continue;
            }
            let entry: AuditEntry = serde_json::from_str(&line).map_err(|e| err(format!("line {}: {e}", i + 1)))?;
            model = entry.model;
            replies.entry(entry.fingerprint).or_insert(entry.reply);
        }
        Ok(ReplayProvider { model, replies })
    }

    pub fn len(&self) -> usize {
        self.replies.len()
    }

    pub fn is_empty(&self) -> bool {
        self.replies.is_empty()
    }
}

impl ChatProvider for ReplayProvider {
    fn model(&self) -> &str {
        &self.model
    }

    fn complete(&self, req: &ChatRequest) -> Result<ChatResponse, LlmError> {
        req.validate()?;
        let fp = req.fingerprint();
        self.replies
            .get(&fp)
            .map(|r| ChatResponse::immediate(r.clone()))
            .ok_or(LlmError::UnknownFingerprint(fp))
    }
}
