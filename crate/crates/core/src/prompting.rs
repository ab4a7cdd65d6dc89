//! Prompt assembly and reply parsing for both tasks.
//!
//! A prompt has a system message holding the task profile and a user message
//! holding format guidance, optional exemplar blocks and the case itself
//! after [`CASE_MARKER`]. All wording lives in a [`TemplateSet`].

use std::collections::BTreeMap;
use std::hash::Hasher;
use std::path::Path;

use fnv::FnvHasher;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::codec::{CodecError, ColorCodec};
use crate::color::{Color, Representation, WordHexMode};
use crate::document::{Document, DocumentError, MaskRecord, Palette, PaletteSlot, SlotRef};
use crate::llm::{ChatRequest, Fingerprint, Message, CASE_MARKER};
use crate::retrieval::Exemplar;

/// Number of colors a generated palette must have.
pub const GENERATED_PALETTE_LEN: usize = 5;

#[derive(Debug, Error)]
pub enum PromptError {
    #[error("document has no masked slots")]
    NoMaskedSlots,
    #[error("description text is empty")]
    EmptyText,
    #[error("invalid prompt config: {0}")]
    Config(String),
    #[error("template {name}: {message}")]
    Template { name: String, message: String },
    #[error("exemplar {id}: {message}")]
    Exemplar { id: String, message: String },
    #[error(transparent)]
    Codec(#[from] CodecError),
    #[error(transparent)]
    Document(#[from] DocumentError),
}

/// Why a model reply could not be turned into colors.
#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ReplyError {
    #[error("reply structure: {0}")]
    Structure(String),
    #[error("reply format: {0}")]
    Format(String),
    #[error("expected {expected} colors, got {got}")]
    Count { expected: usize, got: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Task {
    #[default]
    Completion,
    Generation,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProfileVariant {
    #[default]
    Short,
    Long,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Structure {
    #[default]
    Json,
    Flat,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExemplarPolicy {
    #[default]
    Similarity,
    Random,
    None,
}

/// Omitted fields take the defaults of the given task.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(from = "PartialPromptConfig")]
pub struct PromptConfig {
    pub task: Task,
    pub representation: Representation,
    pub profile: ProfileVariant,
    pub structure: Structure,
    pub exemplar_policy: ExemplarPolicy,
    pub exemplar_count: usize,
    /// Corrective re-asks after an unusable reply.
    pub repair_attempts: u32,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct PartialPromptConfig {
    #[serde(default)]
    task: Task,
    representation: Option<Representation>,
    profile: Option<ProfileVariant>,
    structure: Option<Structure>,
    exemplar_policy: Option<ExemplarPolicy>,
    exemplar_count: Option<usize>,
    repair_attempts: Option<u32>,
}

impl From<PartialPromptConfig> for PromptConfig {
    fn from(p: PartialPromptConfig) -> Self {
        let base = match p.task {
            Task::Completion => PromptConfig::completion(),
            Task::Generation => PromptConfig::generation(),
        };
        PromptConfig {
            task: p.task,
            representation: p.representation.unwrap_or(base.representation),
            profile: p.profile.unwrap_or(base.profile),
            structure: p.structure.unwrap_or(base.structure),
            exemplar_policy: p.exemplar_policy.unwrap_or(base.exemplar_policy),
            exemplar_count: p.exemplar_count.unwrap_or(base.exemplar_count),
            repair_attempts: p.repair_attempts.unwrap_or(base.repair_attempts),
        }
    }
}

impl Default for PromptConfig {
    fn default() -> Self {
        PromptConfig::completion()
    }
}

impl PromptConfig {
    pub fn completion() -> Self {
        PromptConfig {
            task: Task::Completion,
            representation: Representation::Hexcode,
            profile: ProfileVariant::Short,
            structure: Structure::Json,
            exemplar_policy: ExemplarPolicy::Similarity,
            exemplar_count: 1,
            repair_attempts: 2,
        }
    }

    pub fn generation() -> Self {
        PromptConfig {
            task: Task::Generation,
            representation: Representation::WordHex(WordHexMode::H),
            ..PromptConfig::completion()
        }
    }

    pub fn validate(&self) -> Result<(), PromptError> {
        if self.structure == Structure::Flat && self.task != Task::Completion {
            return Err(PromptError::Config(
                "flat structure is only available for completion".into(),
            ));
        }
        Ok(())
    }

    /// How many exemplars the prompt should carry.
    pub fn exemplars_wanted(&self) -> usize {
        match self.exemplar_policy {
            ExemplarPolicy::None => 0,
            _ => self.exemplar_count,
        }
    }
}

const BUILTIN: [(&str, &str); 10] = [
    (
        "profile_completion_short.txt",
        include_str!("../templates/profile_completion_short.txt"),
    ),
    (
        "profile_completion_long.txt",
        include_str!("../templates/profile_completion_long.txt"),
    ),
    (
        "profile_generation_short.txt",
        include_str!("../templates/profile_generation_short.txt"),
    ),
    (
        "profile_generation_long.txt",
        include_str!("../templates/profile_generation_long.txt"),
    ),
    (
        "format_completion_json.txt",
        include_str!("../templates/format_completion_json.txt"),
    ),
    (
        "format_completion_flat.txt",
        include_str!("../templates/format_completion_flat.txt"),
    ),
    (
        "format_generation.txt",
        include_str!("../templates/format_generation.txt"),
    ),
    ("exemplar.txt", include_str!("../templates/exemplar.txt")),
    ("user.txt", include_str!("../templates/user.txt")),
    ("repair.txt", include_str!("../templates/repair.txt")),
];

/// The prompt wording, as named text files with `{{placeholder}}` slots.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TemplateSet {
    templates: BTreeMap<String, String>,
}

impl Default for TemplateSet {
    fn default() -> Self {
        TemplateSet::builtin()
    }
}

impl TemplateSet {
    pub fn builtin() -> Self {
        TemplateSet {
            templates: BUILTIN
                .iter()
                .map(|(name, text)| (name.to_string(), text.to_string()))
                .collect(),
        }
    }

    /// Built-in set with any same-named files from `dir` taking precedence.
    pub fn with_overrides(dir: impl AsRef<Path>) -> Result<Self, PromptError> {
        let mut set = TemplateSet::builtin();
        for (name, _) in BUILTIN {
            let path = dir.as_ref().join(name);
            if path.exists() {
                let text = std::fs::read_to_string(&path).map_err(|e| PromptError::Template {
                    name: path.display().to_string(),
                    message: e.to_string(),
                })?;
                set.templates.insert(name.to_string(), text);
            }
        }
        Ok(set)
    }

    pub fn get(&self, name: &str) -> Option<&str> {
        self.templates.get(name).map(String::as_str)
    }

    /// 16 hex digits identifying the exact wording of every template.
    pub fn hash(&self) -> String {
        let mut h = FnvHasher::default();
        for (name, text) in &self.templates {
            h.write(name.as_bytes());
            h.write(&[0]);
            h.write(text.as_bytes());
            h.write(&[0]);
        }
        format!("{:016x}", h.finish())
    }

    /// Substitutes every `{{key}}`. A placeholder without a value is an error.
    pub fn render(&self, name: &str, vars: &[(&str, &str)]) -> Result<String, PromptError> {
        let err = |message: String| PromptError::Template {
            name: name.to_string(),
            message,
        };
        let template = self.get(name).ok_or_else(|| err("no such template".into()))?;
        let mut out = String::with_capacity(template.len());
        let mut rest = template;
        while let Some(start) = rest.find("{{") {
            out.push_str(&rest[..start]);
            let after = &rest[start + 2..];
            let end = after.find("}}").ok_or_else(|| err("unclosed placeholder".into()))?;
            let key = after[..end].trim();
            let value = vars
                .iter()
                .find(|(k, _)| *k == key)
                .map(|(_, v)| *v)
                .ok_or_else(|| err(format!("no value for {{{{{key}}}}}")))?;
            out.push_str(value);
            rest = &after[end + 2..];
        }
        out.push_str(rest);
        Ok(out)
    }
}

/// An assembled prompt, ready to send.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptBundle {
    pub system: String,
    pub user: String,
    /// All exemplar blocks as they appear in `user`; empty without exemplars.
    pub exemplar_block: String,
    pub exemplar_ids: Vec<String>,
    pub fingerprint: Fingerprint,
}

impl PromptBundle {
    fn new(system: String, user: String, exemplar_block: String, exemplar_ids: Vec<String>) -> Self {
        let fingerprint =
            ChatRequest::new(vec![Message::system(system.clone()), Message::user(user.clone())]).fingerprint();
        PromptBundle {
            system,
            user,
            exemplar_block,
            exemplar_ids,
            fingerprint,
        }
    }

    pub fn request(&self) -> ChatRequest {
        ChatRequest::new(vec![
            Message::system(self.system.clone()),
            Message::user(self.user.clone()),
        ])
    }

    /// The case text following the input marker.
    pub fn payload(&self) -> &str {
        self.user
            .rfind(CASE_MARKER)
            .map(|p| &self.user[p + CASE_MARKER.len()..])
            .unwrap_or_default()
    }
}

/// Stable seed for masking an exemplar document.
pub fn exemplar_seed(id: &str) -> u64 {
    let mut h = FnvHasher::default();
    h.write(id.as_bytes());
    h.finish()
}

/// Builds prompts for one configuration.
pub struct PromptBuilder<'a> {
    pub cfg: &'a PromptConfig,
    pub codec: ColorCodec<'a>,
    pub templates: &'a TemplateSet,
}

impl<'a> PromptBuilder<'a> {
    pub fn new(cfg: &'a PromptConfig, codec: ColorCodec<'a>, templates: &'a TemplateSet) -> Self {
        PromptBuilder { cfg, codec, templates }
    }

    fn profile(&self) -> Result<String, PromptError> {
        let name = match (self.cfg.task, self.cfg.profile) {
            (Task::Completion, ProfileVariant::Short) => "profile_completion_short.txt",
            (Task::Completion, ProfileVariant::Long) => "profile_completion_long.txt",
            (Task::Generation, ProfileVariant::Short) => "profile_generation_short.txt",
            (Task::Generation, ProfileVariant::Long) => "profile_generation_long.txt",
        };
        Ok(self.templates.render(name, &[])?.trim_end().to_string())
    }

    fn assemble(
        &self,
        format: &str,
        blocks: Vec<(String, String)>,
        payload: &str,
    ) -> Result<(String, String), PromptError> {
        let mut exemplar_block = String::new();
        for (input, output) in &blocks {
            exemplar_block.push_str(
                &self
                    .templates
                    .render("exemplar.txt", &[("input", input), ("output", output)])?,
            );
        }
        let user = self.templates.render(
            "user.txt",
            &[
                ("format", format.trim_end()),
                ("exemplars", &exemplar_block),
                ("payload", payload),
            ],
        )?;
        Ok((user, exemplar_block))
    }

    /// Renders a masked document as the case payload.
    pub fn completion_payload(&self, doc: &Document) -> Result<String, PromptError> {
        Ok(match self.cfg.structure {
            Structure::Json => doc.render(&self.codec, false)?,
            Structure::Flat => {
                let lines = doc
                    .elements
                    .iter()
                    .map(|e| {
                        let items = e
                            .palette
                            .slots()
                            .iter()
                            .map(|s| match s {
                                PaletteSlot::Filled(c) => self.codec.encode_text(*c),
                                PaletteSlot::Masked => Ok("_".to_string()),
                            })
                            .collect::<Result<Vec<_>, _>>()?;
                        Ok(format!("{}: [{}]", e.kind.as_str(), items.join(", ")))
                    })
                    .collect::<Result<Vec<_>, CodecError>>()?;
                lines.join("\n")
            }
        })
    }

    /// The reply a perfect model would give for `solved` masked per `record`.
    pub fn completion_answer(&self, solved: &Document, record: &MaskRecord) -> Result<String, PromptError> {
        Ok(match self.cfg.structure {
            Structure::Json => solved.render(&self.codec, false)?,
            Structure::Flat => self.color_array(&record.ground_truth())?,
        })
    }

    fn color_array(&self, colors: &[Color]) -> Result<String, PromptError> {
        let items = colors
            .iter()
            .map(|c| self.codec.encode(*c))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(Value::Array(items).to_string())
    }

    pub fn completion(&self, doc_masked: &Document, exemplars: &[Exemplar]) -> Result<PromptBundle, PromptError> {
        self.cfg.validate()?;
        if self.cfg.task != Task::Completion {
            return Err(PromptError::Config("task must be completion".into()));
        }
        let k = doc_masked.masked_slots().len();
        if k == 0 {
            return Err(PromptError::NoMaskedSlots);
        }
        let format_name = match self.cfg.structure {
            Structure::Json => "format_completion_json.txt",
            Structure::Flat => "format_completion_flat.txt",
        };
        let format = self
            .templates
            .render(format_name, &[("color_format", self.codec.format_description())])?;

        let mut blocks = Vec::new();
        let mut ids = Vec::new();
        for ex in exemplars.iter().take(self.cfg.exemplars_wanted()) {
            let bad = |message: String| PromptError::Exemplar {
                id: ex.id.clone(),
                message,
            };
            let solved = Document::from_json_str(&ex.payload).map_err(|e| bad(e.to_string()))?;
            let available = solved.filled_slots().len();
            if available == 0 {
                return Err(bad("document has no colors".into()));
            }
            let (masked, record) = solved
                .mask(k.min(available).min(3), exemplar_seed(&ex.id))
                .map_err(|e| bad(e.to_string()))?;
            blocks.push((
                self.completion_payload(&masked)?,
                self.completion_answer(&solved, &record)?,
            ));
            ids.push(ex.id.clone());
        }

        let payload = self.completion_payload(doc_masked)?;
        let (user, exemplar_block) = self.assemble(&format, blocks, &payload)?;
        Ok(PromptBundle::new(self.profile()?, user, exemplar_block, ids))
    }

    pub fn generation(&self, text: &str, exemplars: &[Exemplar]) -> Result<PromptBundle, PromptError> {
        self.cfg.validate()?;
        if self.cfg.task != Task::Generation {
            return Err(PromptError::Config("task must be generation".into()));
        }
        let text = text.trim();
        if text.is_empty() {
            return Err(PromptError::EmptyText);
        }
        let count = GENERATED_PALETTE_LEN.to_string();
        let format = self.templates.render(
            "format_generation.txt",
            &[("count", &count), ("color_format", self.codec.format_description())],
        )?;

        let mut blocks = Vec::new();
        let mut ids = Vec::new();
        for ex in exemplars.iter().take(self.cfg.exemplars_wanted()) {
            let pair = GenerationPayload::from_json(&ex.payload).map_err(|message| PromptError::Exemplar {
                id: ex.id.clone(),
                message,
            })?;
            blocks.push((pair.text.clone(), self.color_array(&pair.palette)?));
            ids.push(ex.id.clone());
        }

        let (user, exemplar_block) = self.assemble(&format, blocks, text)?;
        Ok(PromptBundle::new(self.profile()?, user, exemplar_block, ids))
    }

    /// The corrective follow-up sent after an unusable reply.
    pub fn repair_message(&self, error: &str) -> Result<String, PromptError> {
        self.templates.render("repair.txt", &[("error", error)])
    }

    pub fn generation_answer(&self, palette: &[Color]) -> Result<String, PromptError> {
        self.color_array(palette)
    }
}

/// Exemplar payload for the generation task.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GenerationPayload {
    pub text: String,
    pub palette: Vec<Color>,
}

impl GenerationPayload {
    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("payload serializes")
    }

    pub fn from_json(s: &str) -> Result<Self, String> {
        serde_json::from_str(s).map_err(|e| e.to_string())
    }
}

pub fn build_completion_prompt(
    doc_masked: &Document,
    exemplars: &[Exemplar],
    cfg: &PromptConfig,
    codec: ColorCodec<'_>,
    templates: &TemplateSet,
) -> Result<PromptBundle, PromptError> {
    PromptBuilder::new(cfg, codec, templates).completion(doc_masked, exemplars)
}

pub fn build_generation_prompt(
    text: &str,
    exemplars: &[Exemplar],
    cfg: &PromptConfig,
    codec: ColorCodec<'_>,
    templates: &TemplateSet,
) -> Result<PromptBundle, PromptError> {
    PromptBuilder::new(cfg, codec, templates).generation(text, exemplars)
}

fn decode(codec: &ColorCodec<'_>, v: &Value) -> Result<Color, ReplyError> {
    codec.decode(v).map_err(|e| ReplyError::Format(e.to_string()))
}

/// The only array inside a single-key object such as `{"colors": [...]}`.
fn wrapped_array(map: &serde_json::Map<String, Value>) -> Option<&Vec<Value>> {
    let mut arrays = map.values().filter_map(Value::as_array);
    let first = arrays.next()?;
    arrays.next().is_none().then_some(first)
}

/// Reads the colors at `positions`. A document object is searched
/// by element id and slot; a bare array is taken as the colors in order.
pub fn parse_completion_reply(
    json: &Value,
    positions: &[SlotRef],
    codec: &ColorCodec<'_>,
) -> Result<Vec<Color>, ReplyError> {
    let flat = |items: &Vec<Value>| {
        if items.len() != positions.len() {
            return Err(ReplyError::Count {
                expected: positions.len(),
                got: items.len(),
            });
        }
        items.iter().map(|v| decode(codec, v)).collect()
    };
    match json {
        Value::Array(items) => flat(items),
        Value::Object(map) if !map.contains_key("elements") => match wrapped_array(map) {
            Some(items) => flat(items),
            None => Err(ReplyError::Structure("reply has no elements".into())),
        },
        Value::Object(map) => {
            let elements = map["elements"]
                .as_array()
                .ok_or_else(|| ReplyError::Structure("elements is not an array".into()))?;
            positions
                .iter()
                .map(|slot| {
                    let element = elements
                        .iter()
                        .find(|e| e.get("id").and_then(Value::as_str) == Some(slot.element_id.as_str()))
                        .ok_or_else(|| ReplyError::Structure(format!("element {:?} is missing", slot.element_id)))?;
                    let value = element
                        .get("color_palette")
                        .and_then(Value::as_array)
                        .and_then(|p| p.get(slot.slot))
                        .ok_or_else(|| {
                            ReplyError::Structure(format!("element {:?} has no slot {}", slot.element_id, slot.slot))
                        })?;
                    decode(codec, value)
                })
                .collect()
        }
        other => Err(ReplyError::Structure(format!(
            "expected an object or array, got {other}"
        ))),
    }
}

/// Decodes exactly five colors from an array or an object wrapping one.
pub fn parse_generation_reply(json: &Value, codec: &ColorCodec<'_>) -> Result<Palette, ReplyError> {
    let items = match json {
        Value::Array(items) => items,
        Value::Object(map) => {
            wrapped_array(map).ok_or_else(|| ReplyError::Structure("expected a JSON array of colors".into()))?
        }
        _ => return Err(ReplyError::Structure("expected a JSON array of colors".into())),
    };
    if items.len() != GENERATED_PALETTE_LEN {
        return Err(ReplyError::Count {
            expected: GENERATED_PALETTE_LEN,
            got: items.len(),
        });
    }
    let colors = items.iter().map(|v| decode(codec, v)).collect::<Result<Vec<_>, _>>()?;
    Ok(Palette::from_colors(colors).expect("five colors"))
}

/// `"title. category. keywords. text one. text two."` with empty parts
/// dropped and whitespace collapsed. Element texts follow document order.
pub fn derive_query_text(doc: &Document) -> String {
    let mut parts: Vec<String> = vec![doc.title.clone(), doc.category.clone(), doc.keywords.join(", ")];
    parts.extend(doc.elements.iter().filter_map(|e| e.text.clone()));
    parts
        .iter()
        .map(|p| p.split_whitespace().collect::<Vec<_>>().join(" "))
        .filter(|p| !p.is_empty())
        .map(|p| if p.ends_with(['.', '!', '?']) { p } else { p + "." })
        .collect::<Vec<_>>()
        .join(" ")
}
