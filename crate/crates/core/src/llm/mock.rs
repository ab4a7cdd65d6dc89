use std::collections::HashMap;
use std::path::Path;
use std::sync::RwLock;

use serde_json::Value;

use super::{ChatProvider, ChatRequest, ChatResponse, Fingerprint, LlmError, MockFallback};
use crate::codec::MASK_TOKEN;

/// What the mock answers when a request has no registered fixture.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum MockMode {
    /// Unknown fingerprints are an error.
    Strict,
    /// Unknown fingerprints get this reply.
    Default(String),
    /// Reply with whatever was registered through
    /// [`ChatProvider::register_oracle`]; error otherwise.
    Echo,
    /// Answer the case payload with these colors. A document payload gets
    /// every `"[MASK]"` replaced in turn, a flat palette listing gets an
    /// array with one entry per `_`, and anything else gets the whole list.
    /// Entries that are not valid JSON are treated as strings.
    Fill(Vec<String>),
}

impl From<MockFallback> for MockMode {
    fn from(f: MockFallback) -> Self {
        match f {
            MockFallback::Strict => MockMode::Strict,
            MockFallback::Default(s) => MockMode::Default(s),
            MockFallback::Echo => MockMode::Echo,
            MockFallback::Fill(v) => MockMode::Fill(v),
        }
    }
}

pub struct MockProvider {
    model: String,
    mode: MockMode,
    fixtures: HashMap<Fingerprint, String>,
    oracle: RwLock<HashMap<Fingerprint, String>>,
}

impl MockProvider {
    pub fn new(model: impl Into<String>, mode: MockMode) -> Self {
        MockProvider {
            model: model.into(),
            mode,
            fixtures: HashMap::new(),
            oracle: RwLock::new(HashMap::new()),
        }
    }

    pub fn with_fixture(mut self, fingerprint: Fingerprint, reply: impl Into<String>) -> Self {
        self.fixtures.insert(fingerprint, reply.into());
        self
    }

    /// Registers a reply for the exact request `req`.
    pub fn with_reply(self, req: &ChatRequest, reply: impl Into<String>) -> Self {
        let fp = req.fingerprint();
        self.with_fixture(fp, reply)
    }

    /// Loads a JSON object mapping hex fingerprints to replies.
    pub fn with_fixture_file(mut self, path: &Path) -> Result<Self, LlmError> {
        let err = |message: String| LlmError::Config(format!("mock fixtures {}: {message}", path.display()));
        let text = std::fs::read_to_string(path).map_err(|e| err(e.to_string()))?;
        let table: HashMap<String, String> = serde_json::from_str(&text).map_err(|e| err(e.to_string()))?;
        for (fp, reply) in table {
            let fp = fp.parse().map_err(|_| err(format!("bad fingerprint {fp:?}")))?;
            self.fixtures.insert(fp, reply);
        }
        Ok(self)
    }

    fn fill(values: &[String], req: &ChatRequest) -> Option<String> {
        if values.is_empty() {
            return None;
        }
        let as_json = |s: &String| serde_json::from_str::<Value>(s).unwrap_or_else(|_| Value::String(s.clone()));
        let payload = req.case_payload().unwrap_or_default();

        if payload.contains(&format!("\"{MASK_TOKEN}\"")) {
            let mut doc: Value = serde_json::from_str(payload.trim()).ok()?;
            let mut next = 0;
            replace_masks(&mut doc, &mut || {
                let v = as_json(&values[next % values.len()]);
                next += 1;
                v
            });
            return Some(doc.to_string());
        }

        let blanks = payload.split(['[', ']', ',']).filter(|t| t.trim() == "_").count();
        let items: Vec<Value> = if blanks > 0 {
            (0..blanks).map(|i| as_json(&values[i % values.len()])).collect()
        } else {
            values.iter().map(as_json).collect()
        };
        Some(Value::Array(items).to_string())
    }
}

fn replace_masks(v: &mut Value, next: &mut dyn FnMut() -> Value) {
    match v {
        Value::String(s) if s == MASK_TOKEN => *v = next(),
        Value::Array(items) => items.iter_mut().for_each(|i| replace_masks(i, next)),
        Value::Object(map) => map.values_mut().for_each(|i| replace_masks(i, next)),
        _ => {}
    }
}

impl ChatProvider for MockProvider {
    fn model(&self) -> &str {
        &self.model
    }

    fn complete(&self, req: &ChatRequest) -> Result<ChatResponse, LlmError> {
        req.validate()?;
        let fp = req.fingerprint();
        if let Some(reply) = self.fixtures.get(&fp) {
            return Ok(ChatResponse::immediate(reply.clone()));
        }
        let reply = match &self.mode {
            MockMode::Strict => None,
            MockMode::Default(reply) => Some(reply.clone()),
            MockMode::Echo => self.oracle.read().unwrap().get(&fp).cloned(),
            MockMode::Fill(values) => Self::fill(values, req),
        };
        reply
            .map(ChatResponse::immediate)
            .ok_or(LlmError::UnknownFingerprint(fp))
    }

    fn register_oracle(&self, fingerprint: Fingerprint, reply: &str) {
        if self.mode == MockMode::Echo {
            self.oracle.write().unwrap().insert(fingerprint, reply.to_string());
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::llm::{Message, CASE_MARKER};

    fn req(text: &str) -> ChatRequest {
        ChatRequest::new(vec![Message::system("sys"), Message::user(text)])
    }

    #[test]
    fn registered_prompt_gets_registered_reply() {
        let r = req("hello");
        let mock = MockProvider::new("m", MockMode::Strict).with_reply(&r, "world");
        assert_eq!(mock.complete(&r).unwrap().content, "world");
    }

    #[test]
    fn strict_mode_names_the_fingerprint() {
        let r = req("unknown");
        let mock = MockProvider::new("m", MockMode::Strict);
        match mock.complete(&r) {
            Err(LlmError::UnknownFingerprint(fp)) => assert_eq!(fp, r.fingerprint()),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn echo_mode_answers_from_oracle() {
        let r = req("case");
        let mock = MockProvider::new("m", MockMode::Echo);
        assert!(mock.complete(&r).is_err());
        mock.register_oracle(r.fingerprint(), "[\"#ffffff\"]");
        assert_eq!(mock.complete(&r).unwrap().content, "[\"#ffffff\"]");
    }

    #[test]
    fn oracle_is_ignored_outside_echo_mode() {
        let r = req("case");
        let mock = MockProvider::new("m", MockMode::Default("d".into()));
        mock.register_oracle(r.fingerprint(), "oracle");
        assert_eq!(mock.complete(&r).unwrap().content, "d");
    }

    #[test]
    fn fill_mode_replaces_masks_in_payload_only() {
        let text = format!(
            "### Example\nInput:\n{{\"p\":[\"[MASK]\"]}}\n{CASE_MARKER}{{\"a\":[\"#000000\",\"[MASK]\"],\"b\":[\"[MASK]\"]}}"
        );
        let mock = MockProvider::new("m", MockMode::Fill(vec!["#123456".into()]));
        let reply: Value = serde_json::from_str(&mock.complete(&req(&text)).unwrap().content).unwrap();
        assert_eq!(
            reply,
            serde_json::json!({"a": ["#000000", "#123456"], "b": ["#123456"]})
        );
    }

    #[test]
    fn fill_mode_answers_flat_and_generation_payloads() {
        let mock = MockProvider::new("m", MockMode::Fill(vec!["#111111".into(), "[1, 2, 3]".into()]));
        let flat = format!("{CASE_MARKER}[#000000, _]\n[_, #ffffff]\n[_]");
        assert_eq!(
            mock.complete(&req(&flat)).unwrap().content,
            r##"["#111111",[1,2,3],"#111111"]"##
        );
        let generation = format!("{CASE_MARKER}green grass");
        assert_eq!(
            mock.complete(&req(&generation)).unwrap().content,
            r##"["#111111",[1,2,3]]"##
        );
    }
}
