//! Structured design documents: typed elements, per-element palettes, masking
//! and re-filling of palette slots.
//!
//! Canonical JSON layout (keys always emitted in this order, unknown keys
//! preserved after them):
//!
//! ```json
//! {"id": "...", "title": "...", "category": "...", "keywords": ["..."],
//!  "layout": {"width": 1.0, "height": 0.5625},
//!  "elements": [{"id": "...", "type": "text", "layout": {"left": 0.1, "top": 0.2,
//!                "width": 0.5, "height": 0.1}, "opacity": 1.0, "text": "...",
//!                "color_palette": ["#ffffff", "[MASK]"]}]}
//! ```

use std::collections::HashSet;
use std::fmt;

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};
use thiserror::Error;

use crate::codec::{CodecError, ColorCodec, MASK_TOKEN};
use crate::color::Color;

pub const MAX_PALETTE_LEN: usize = 5;

/// Minimum pairwise ΔE between colors of an extracted palette.
pub const MIN_PALETTE_DELTA_E: f64 = 10.0;

#[derive(Debug, Error)]
pub enum DocumentError {
    #[error("invalid JSON at line {line}, column {column}: {message}")]
    Syntax {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("invalid document field `{field}`: {message}")]
    Validation { field: String, message: String },
    #[error("cannot mask {requested} slots: only {available} filled slots")]
    NotEnoughSlots { requested: usize, available: usize },
    #[error("mask count must be between 1 and 3, got {0}")]
    InvalidMaskCount(usize),
    #[error("expected {expected} suggestions, got {got}")]
    SuggestionCount { expected: usize, got: usize },
    #[error("no element `{0}` in document")]
    UnknownElement(String),
    #[error("element `{element_id}` has no palette slot {slot}")]
    UnknownSlot { element_id: String, slot: usize },
    #[error("element `{element_id}` slot {slot} is not masked")]
    SlotNotMasked { element_id: String, slot: usize },
    #[error(transparent)]
    Codec(#[from] CodecError),
}

fn invalid(field: impl Into<String>, message: impl Into<String>) -> DocumentError {
    DocumentError::Validation {
        field: field.into(),
        message: message.into(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ElementKind {
    Text,
    ColoredBackground,
    Svg,
    Raster,
}

impl ElementKind {
    pub const ALL: [ElementKind; 4] = [
        ElementKind::Text,
        ElementKind::ColoredBackground,
        ElementKind::Svg,
        ElementKind::Raster,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ElementKind::Text => "text",
            ElementKind::ColoredBackground => "colored_background",
            ElementKind::Svg => "svg",
            ElementKind::Raster => "raster",
        }
    }

    fn parse(s: &str) -> Option<Self> {
        ElementKind::ALL.into_iter().find(|k| k.as_str() == s)
    }
}

impl fmt::Display for ElementKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Canvas size in unit space: the longer side is 1.0.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Canvas {
    pub width: f64,
    pub height: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Frame {
    pub left: f64,
    pub top: f64,
    pub width: f64,
    pub height: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum PaletteSlot {
    Filled(Color),
    Masked,
}

impl PaletteSlot {
    pub fn color(self) -> Option<Color> {
        match self {
            PaletteSlot::Filled(c) => Some(c),
            PaletteSlot::Masked => None,
        }
    }
}

/// An ordered palette of one to five slots.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Palette {
    slots: Vec<PaletteSlot>,
}

impl Palette {
    pub fn new(slots: Vec<PaletteSlot>) -> Result<Self, DocumentError> {
        if slots.is_empty() || slots.len() > MAX_PALETTE_LEN {
            return Err(invalid(
                "color_palette",
                format!("palette must hold 1 to {MAX_PALETTE_LEN} colors, got {}", slots.len()),
            ));
        }
        Ok(Palette { slots })
    }

    pub fn from_colors(colors: impl IntoIterator<Item = Color>) -> Result<Self, DocumentError> {
        Palette::new(colors.into_iter().map(PaletteSlot::Filled).collect())
    }

    pub fn slots(&self) -> &[PaletteSlot] {
        &self.slots
    }

    pub fn len(&self) -> usize {
        self.slots.len()
    }

    pub fn is_empty(&self) -> bool {
        self.slots.is_empty()
    }

    /// All colors, or `None` if any slot is masked.
    pub fn colors(&self) -> Option<Vec<Color>> {
        self.slots.iter().map(|s| s.color()).collect()
    }

    pub fn filled(&self) -> impl Iterator<Item = Color> + '_ {
        self.slots.iter().filter_map(|s| s.color())
    }

    pub fn masked_count(&self) -> usize {
        self.slots.iter().filter(|s| **s == PaletteSlot::Masked).count()
    }

    /// Whether every pair of filled colors is at least ΔE 10 apart.
    pub fn is_diverse(&self) -> bool {
        let labs: Vec<_> = self.filled().map(Color::to_lab).collect();
        labs.iter()
            .enumerate()
            .all(|(i, a)| labs[i + 1..].iter().all(|b| a.delta_e(*b) >= MIN_PALETTE_DELTA_E))
    }

    pub fn to_json(&self, codec: &ColorCodec<'_>) -> Result<Value, CodecError> {
        self.slots
            .iter()
            .map(|s| match s {
                PaletteSlot::Filled(c) => codec.encode(*c),
                PaletteSlot::Masked => Ok(Value::String(MASK_TOKEN.into())),
            })
            .collect()
    }

    fn from_json(value: &Value, field: &str) -> Result<Self, DocumentError> {
        let items = value
            .as_array()
            .ok_or_else(|| invalid(field, "expected an array of colors"))?;
        let slots = items
            .iter()
            .enumerate()
            .map(|(i, v)| match v.as_str() {
                Some(MASK_TOKEN) => Ok(PaletteSlot::Masked),
                Some(s) => Color::from_hex(s)
                    .map(PaletteSlot::Filled)
                    .map_err(|e| invalid(format!("{field}[{i}]"), e.to_string())),
                None => Err(invalid(format!("{field}[{i}]"), "expected a \"#rrggbb\" string")),
            })
            .collect::<Result<Vec<_>, _>>()?;
        Palette::new(slots).map_err(|e| match e {
            DocumentError::Validation { message, .. } => invalid(field, message),
            other => other,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Element {
    pub id: String,
    pub kind: ElementKind,
    pub frame: Frame,
    pub opacity: f64,
    pub text: Option<String>,
    pub palette: Palette,
    pub extras: Map<String, Value>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Document {
    pub id: String,
    pub title: String,
    pub category: String,
    pub keywords: Vec<String>,
    pub canvas: Canvas,
    pub elements: Vec<Element>,
    pub extras: Map<String, Value>,
}

/// A position in a document's palettes.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct SlotRef {
    pub element_id: String,
    pub slot: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MaskedSlot {
    pub element_id: String,
    pub slot: usize,
    pub ground_truth: Color,
}

impl MaskedSlot {
    pub fn slot_ref(&self) -> SlotRef {
        SlotRef {
            element_id: self.element_id.clone(),
            slot: self.slot,
        }
    }
}

/// Which slots were masked and what they held. Slots are in document order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MaskRecord {
    pub document_id: String,
    pub slots: Vec<MaskedSlot>,
    pub seed: u64,
    pub k: usize,
}

impl MaskRecord {
    pub fn positions(&self) -> Vec<SlotRef> {
        self.slots.iter().map(MaskedSlot::slot_ref).collect()
    }

    pub fn ground_truth(&self) -> Vec<Color> {
        self.slots.iter().map(|s| s.ground_truth).collect()
    }
}

const DOC_KEYS: [&str; 6] = ["id", "title", "category", "keywords", "layout", "elements"];
const ELEMENT_KEYS: [&str; 6] = ["id", "type", "layout", "opacity", "text", "color_palette"];

fn number(obj: &Map<String, Value>, key: &str, field: &str) -> Result<f64, DocumentError> {
    let v = obj
        .get(key)
        .ok_or_else(|| invalid(format!("{field}.{key}"), "missing"))?
        .as_f64()
        .ok_or_else(|| invalid(format!("{field}.{key}"), "expected a number"))?;
    if !v.is_finite() {
        return Err(invalid(format!("{field}.{key}"), "must be finite"));
    }
    Ok(v)
}

fn string(obj: &Map<String, Value>, key: &str, field: &str, required: bool) -> Result<String, DocumentError> {
    match obj.get(key) {
        Some(Value::String(s)) => Ok(s.clone()),
        None if !required => Ok(String::new()),
        None => Err(invalid(format!("{field}{key}"), "missing")),
        Some(_) => Err(invalid(format!("{field}{key}"), "expected a string")),
    }
}

fn extras(obj: &Map<String, Value>, known: &[&str]) -> Map<String, Value> {
    obj.iter()
        .filter(|(k, _)| !known.contains(&k.as_str()))
        .map(|(k, v)| (k.clone(), v.clone()))
        .collect()
}

impl Element {
    fn from_json(value: &Value, index: usize) -> Result<Self, DocumentError> {
        let field = format!("elements[{index}]");
        let obj = value.as_object().ok_or_else(|| invalid(&field, "expected an object"))?;
        let id = string(obj, "id", &format!("{field}."), true)?;
        if id.is_empty() {
            return Err(invalid(format!("{field}.id"), "must not be empty"));
        }
        let kind_str = string(obj, "type", &format!("{field}."), true)?;
        let kind = ElementKind::parse(&kind_str)
            .ok_or_else(|| invalid(format!("{field}.type"), format!("unknown element type {kind_str:?}")))?;

        let layout_field = format!("{field}.layout");
        let layout = obj
            .get("layout")
            .and_then(Value::as_object)
            .ok_or_else(|| invalid(&layout_field, "expected an object"))?;
        let frame = Frame {
            left: number(layout, "left", &layout_field)?,
            top: number(layout, "top", &layout_field)?,
            width: number(layout, "width", &layout_field)?,
            height: number(layout, "height", &layout_field)?,
        };
        if frame.width < 0.0 || frame.height < 0.0 {
            return Err(invalid(&layout_field, "width and height must be non-negative"));
        }

        let opacity = match obj.get("opacity") {
            None => 1.0,
            Some(_) => number(obj, "opacity", &field)?,
        };
        if !(0.0..=1.0).contains(&opacity) {
            return Err(invalid(format!("{field}.opacity"), "must lie in [0, 1]"));
        }

        let text = match obj.get("text") {
            None | Some(Value::Null) => None,
            Some(Value::String(s)) => Some(s.clone()),
            Some(_) => return Err(invalid(format!("{field}.text"), "expected a string")),
        };
        if text.is_some() && kind != ElementKind::Text {
            return Err(invalid(format!("{field}.text"), "only text elements carry text"));
        }

        let palette_field = format!("{field}.color_palette");
        let palette = Palette::from_json(
            obj.get("color_palette")
                .ok_or_else(|| invalid(&palette_field, "missing"))?,
            &palette_field,
        )?;

        Ok(Element {
            id,
            kind,
            frame,
            opacity,
            text,
            palette,
            extras: extras(obj, &ELEMENT_KEYS),
        })
    }

    fn to_json(&self, codec: &ColorCodec<'_>) -> Result<Value, CodecError> {
        let mut obj = Map::new();
        obj.insert("id".into(), Value::from(self.id.clone()));
        obj.insert("type".into(), Value::from(self.kind.as_str()));
        let mut layout = Map::new();
        layout.insert("left".into(), Value::from(self.frame.left));
        layout.insert("top".into(), Value::from(self.frame.top));
        layout.insert("width".into(), Value::from(self.frame.width));
        layout.insert("height".into(), Value::from(self.frame.height));
        obj.insert("layout".into(), Value::Object(layout));
        obj.insert("opacity".into(), Value::from(self.opacity));
        if let Some(text) = &self.text {
            obj.insert("text".into(), Value::from(text.clone()));
        }
        obj.insert("color_palette".into(), self.palette.to_json(codec)?);
        for (k, v) in &self.extras {
            obj.insert(k.clone(), v.clone());
        }
        Ok(Value::Object(obj))
    }
}

impl Document {
    pub fn from_json_str(text: &str) -> Result<Self, DocumentError> {
        let value: Value = serde_json::from_str(text).map_err(|e| DocumentError::Syntax {
            line: e.line(),
            column: e.column(),
            message: e.to_string(),
        })?;
        Document::from_value(&value)
    }

    pub fn from_value(value: &Value) -> Result<Self, DocumentError> {
        let obj = value
            .as_object()
            .ok_or_else(|| invalid("$", "expected a JSON object"))?;
        let id = string(obj, "id", "", true)?;
        let title = string(obj, "title", "", false)?;
        let category = string(obj, "category", "", false)?;
        let keywords = match obj.get("keywords") {
            None => Vec::new(),
            Some(Value::Array(items)) => items
                .iter()
                .enumerate()
                .map(|(i, v)| {
                    v.as_str()
                        .map(str::to_string)
                        .ok_or_else(|| invalid(format!("keywords[{i}]"), "expected a string"))
                })
                .collect::<Result<_, _>>()?,
            Some(_) => return Err(invalid("keywords", "expected an array of strings")),
        };

        let layout = obj
            .get("layout")
            .and_then(Value::as_object)
            .ok_or_else(|| invalid("layout", "expected an object with width and height"))?;
        let canvas = Canvas {
            width: number(layout, "width", "layout")?,
            height: number(layout, "height", "layout")?,
        };
        if canvas.width <= 0.0 || canvas.height <= 0.0 {
            return Err(invalid("layout", "canvas dimensions must be positive"));
        }
        if (canvas.width.max(canvas.height) - 1.0).abs() > 1e-9 {
            return Err(invalid("layout", "the longer canvas side must be 1.0"));
        }

        let elements = obj
            .get("elements")
            .and_then(Value::as_array)
            .ok_or_else(|| invalid("elements", "expected an array"))?
            .iter()
            .enumerate()
            .map(|(i, v)| Element::from_json(v, i))
            .collect::<Result<Vec<_>, _>>()?;
        let mut seen = HashSet::new();
        for e in &elements {
            if !seen.insert(e.id.as_str()) {
                return Err(invalid("elements", format!("duplicate element id {:?}", e.id)));
            }
        }

        Ok(Document {
            id,
            title,
            category,
            keywords,
            canvas,
            elements,
            extras: extras(obj, &DOC_KEYS),
        })
    }

    /// Canonical JSON value with colors rendered by `codec`.
    pub fn to_value(&self, codec: &ColorCodec<'_>) -> Result<Value, CodecError> {
        let mut obj = Map::new();
        obj.insert("id".into(), Value::from(self.id.clone()));
        obj.insert("title".into(), Value::from(self.title.clone()));
        obj.insert("category".into(), Value::from(self.category.clone()));
        obj.insert("keywords".into(), Value::from(self.keywords.clone()));
        let mut layout = Map::new();
        layout.insert("width".into(), Value::from(self.canvas.width));
        layout.insert("height".into(), Value::from(self.canvas.height));
        obj.insert("layout".into(), Value::Object(layout));
        let elements = self
            .elements
            .iter()
            .map(|e| e.to_json(codec))
            .collect::<Result<Vec<_>, _>>()?;
        obj.insert("elements".into(), Value::Array(elements));
        for (k, v) in &self.extras {
            obj.insert(k.clone(), v.clone());
        }
        Ok(Value::Object(obj))
    }

    /// Canonical single-line JSON with hex colors.
    pub fn to_json_string(&self) -> String {
        let value = self.to_value(&ColorCodec::hex()).expect("hex encoding is infallible");
        serde_json::to_string(&value).expect("document serializes")
    }

    pub fn render(&self, codec: &ColorCodec<'_>, pretty: bool) -> Result<String, CodecError> {
        let value = self.to_value(codec)?;
        Ok(if pretty {
            serde_json::to_string_pretty(&value)
        } else {
            serde_json::to_string(&value)
        }
        .expect("document serializes"))
    }

    pub fn element(&self, id: &str) -> Option<&Element> {
        self.elements.iter().find(|e| e.id == id)
    }

    fn element_mut(&mut self, id: &str) -> Result<&mut Element, DocumentError> {
        self.elements
            .iter_mut()
            .find(|e| e.id == id)
            .ok_or_else(|| DocumentError::UnknownElement(id.to_string()))
    }

    /// Filled slots in document order.
    pub fn filled_slots(&self) -> Vec<(SlotRef, Color)> {
        self.slots_matching(|s| s.color())
    }

    /// Masked slots in document order.
    pub fn masked_slots(&self) -> Vec<SlotRef> {
        self.slots_matching(|s| (s == PaletteSlot::Masked).then_some(()))
            .into_iter()
            .map(|(r, _)| r)
            .collect()
    }

    fn slots_matching<T>(&self, f: impl Fn(PaletteSlot) -> Option<T>) -> Vec<(SlotRef, T)> {
        self.elements
            .iter()
            .flat_map(|e| {
                let f = &f;
                e.palette.slots().iter().enumerate().filter_map(move |(i, s)| {
                    f(*s).map(|t| {
                        (
                            SlotRef {
                                element_id: e.id.clone(),
                                slot: i,
                            },
                            t,
                        )
                    })
                })
            })
            .collect()
    }

    pub fn kind_of(&self, element_id: &str) -> Option<ElementKind> {
        self.element(element_id).map(|e| e.kind)
    }

    /// Masks `k` filled slots chosen uniformly (seeded) over the flattened
    /// slot list. `self` is left untouched.
    pub fn mask(&self, k: usize, seed: u64) -> Result<(Document, MaskRecord), DocumentError> {
        if !(1..=3).contains(&k) {
            return Err(DocumentError::InvalidMaskCount(k));
        }
        let filled = self.filled_slots();
        if k > filled.len() {
            return Err(DocumentError::NotEnoughSlots {
                requested: k,
                available: filled.len(),
            });
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut chosen = sample(&mut rng, filled.len(), k).into_vec();
        chosen.sort_unstable();

        let mut masked = self.clone();
        let mut slots = Vec::with_capacity(k);
        for i in chosen {
            let (slot_ref, color) = &filled[i];
            let element = masked.element_mut(&slot_ref.element_id)?;
            element.palette.slots[slot_ref.slot] = PaletteSlot::Masked;
            slots.push(MaskedSlot {
                element_id: slot_ref.element_id.clone(),
                slot: slot_ref.slot,
                ground_truth: *color,
            });
        }
        let record = MaskRecord {
            document_id: self.id.clone(),
            slots,
            seed,
            k,
        };
        Ok((masked, record))
    }

    /// Fills masked slots at `positions` with `colors`, in order.
    pub fn fill(&self, positions: &[SlotRef], colors: &[Color]) -> Result<Document, DocumentError> {
        if positions.len() != colors.len() {
            return Err(DocumentError::SuggestionCount {
                expected: positions.len(),
                got: colors.len(),
            });
        }
        let mut out = self.clone();
        for (pos, color) in positions.iter().zip(colors) {
            let element = out.element_mut(&pos.element_id)?;
            let slot = element
                .palette
                .slots
                .get_mut(pos.slot)
                .ok_or_else(|| DocumentError::UnknownSlot {
                    element_id: pos.element_id.clone(),
                    slot: pos.slot,
                })?;
            if *slot != PaletteSlot::Masked {
                return Err(DocumentError::SlotNotMasked {
                    element_id: pos.element_id.clone(),
                    slot: pos.slot,
                });
            }
            *slot = PaletteSlot::Filled(*color);
        }
        Ok(out)
    }

    pub fn apply_colors(&self, record: &MaskRecord, suggestions: &[Color]) -> Result<Document, DocumentError> {
        self.fill(&record.positions(), suggestions)
    }
}

pub fn parse_document(json_text: &str) -> Result<Document, DocumentError> {
    Document::from_json_str(json_text)
}

pub fn serialize_document(d: &Document) -> String {
    d.to_json_string()
}

pub fn mask_palette(d: &Document, k: usize, seed: u64) -> Result<(Document, MaskRecord), DocumentError> {
    d.mask(k, seed)
}

pub fn apply_colors(d: &Document, record: &MaskRecord, suggestions: &[Color]) -> Result<Document, DocumentError> {
    d.apply_colors(record, suggestions)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::color::Representation;

    const MINIMAL: &str = r##"{"id":"d1","title":"Summer Sale","category":"sale","keywords":["summer","beach"],
        "layout":{"width":1.0,"height":0.5625},
        "elements":[{"id":"bg","type":"colored_background","layout":{"left":0,"top":0,"width":1,"height":0.5625},
        "opacity":1.0,"color_palette":["#ffcc00"]}]}"##;

    fn three_slot() -> Document {
        parse_document(
            r##"{"id":"d3","layout":{"width":1,"height":1},"elements":[
            {"id":"t","type":"text","layout":{"left":0.1,"top":0.1,"width":0.8,"height":0.2},"opacity":0.9,
             "text":"Hello","color_palette":["#ffffff","#000000","#ff0000"]}]}"##,
        )
        .unwrap()
    }

    #[test]
    fn parses_minimal_document() {
        let d = parse_document(MINIMAL).unwrap();
        assert_eq!(d.elements.len(), 1);
        assert_eq!(d.elements[0].kind, ElementKind::ColoredBackground);
        assert_eq!(d.keywords, ["summer", "beach"]);
    }

    #[test]
    fn empty_input_is_a_syntax_error() {
        assert!(matches!(parse_document(""), Err(DocumentError::Syntax { .. })));
    }

    #[test]
    fn duplicate_element_ids_are_rejected() {
        let text = MINIMAL.replace(
            r#""elements":[{"#,
            r##""elements":[{"id":"bg","type":"svg","layout":{"left":0,"top":0,"width":1,"height":1},"color_palette":["#000000"]},{"##,
        );
        match parse_document(&text) {
            Err(DocumentError::Validation { field, .. }) => assert_eq!(field, "elements"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn validation_names_the_field() {
        let bad_opacity = MINIMAL.replace("\"opacity\":1.0", "\"opacity\":1.5");
        match parse_document(&bad_opacity) {
            Err(DocumentError::Validation { field, .. }) => assert_eq!(field, "elements[0].opacity"),
            other => panic!("unexpected {other:?}"),
        }
        let bad_canvas = MINIMAL.replace("\"width\":1.0,\"height\":0.5625", "\"width\":0.9,\"height\":0.5");
        assert!(matches!(
            parse_document(&bad_canvas),
            Err(DocumentError::Validation { .. })
        ));
        let long_palette = MINIMAL.replace(
            r##"["#ffcc00"]"##,
            r##"["#000000","#111111","#222222","#333333","#444444","#555555"]"##,
        );
        match parse_document(&long_palette) {
            Err(DocumentError::Validation { field, .. }) => assert_eq!(field, "elements[0].color_palette"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn key_order_is_canonical_and_extras_survive() {
        let text = MINIMAL.replacen("{\"id\":\"d1\"", "{\"zzz\":{\"a\":1},\"id\":\"d1\"", 1);
        let d = parse_document(&text).unwrap();
        let out = serialize_document(&d);
        assert!(out.starts_with(r#"{"id":"d1","title":"Summer Sale","category":"sale","keywords""#));
        assert!(out.ends_with(r#""zzz":{"a":1}}"#));
        assert_eq!(parse_document(&out).unwrap(), d);
    }

    #[test]
    fn masked_slots_serialize_as_token() {
        let (masked, _) = three_slot().mask(1, 7).unwrap();
        let out = serialize_document(&masked);
        assert_eq!(out.matches("\"[MASK]\"").count(), 1);
        assert_eq!(parse_document(&out).unwrap(), masked);
    }

    #[test]
    fn colors_render_per_representation() {
        let d = parse_document(MINIMAL).unwrap();
        let rgb = d.render(&ColorCodec::plain(Representation::Rgb), false).unwrap();
        assert!(rgb.contains(r#""color_palette":[[255,204,0]]"#));
    }

    #[test]
    fn masking_is_deterministic_and_exhaustive() {
        let d = three_slot();
        let (a, ra) = d.mask(1, 42).unwrap();
        let (b, rb) = d.mask(1, 42).unwrap();
        assert_eq!(a, b);
        assert_eq!(ra, rb);
        let (all, rec) = d.mask(3, 1).unwrap();
        assert_eq!(all.elements[0].palette.masked_count(), 3);
        assert_eq!(rec.ground_truth(), [Color::WHITE, Color::BLACK, Color::new(255, 0, 0)]);
        assert_eq!(d.elements[0].palette.masked_count(), 0);
    }

    #[test]
    fn mask_errors() {
        let d = parse_document(MINIMAL).unwrap();
        assert!(matches!(
            d.mask(2, 0),
            Err(DocumentError::NotEnoughSlots {
                requested: 2,
                available: 1
            })
        ));
        assert!(matches!(d.mask(0, 0), Err(DocumentError::InvalidMaskCount(0))));
        assert!(matches!(d.mask(4, 0), Err(DocumentError::InvalidMaskCount(4))));
    }

    #[test]
    fn apply_restores_original() {
        let d = three_slot();
        let (masked, rec) = d.mask(2, 9).unwrap();
        assert_eq!(masked.apply_colors(&rec, &rec.ground_truth()).unwrap(), d);
        assert!(matches!(
            masked.apply_colors(&rec, &[Color::WHITE]),
            Err(DocumentError::SuggestionCount { expected: 2, got: 1 })
        ));
    }
}
