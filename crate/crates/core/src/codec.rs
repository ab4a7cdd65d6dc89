//! Rendering colors in a prompt representation and decoding model output
//! back into [`Color`]s.

use serde_json::Value;
use thiserror::Error;

use crate::color::{Color, LabColor, Representation, WordHexMode};
use crate::embedding::Embedder;
use crate::naming::{ColorDictionary, NamingError};

/// The literal token standing in for a masked color.
pub const MASK_TOKEN: &str = "[MASK]";

#[derive(Debug, Error)]
pub enum CodecError {
    #[error("representation {0} needs a color dictionary")]
    MissingDictionary(Representation),
    #[error("representation {0} needs an embedding provider")]
    MissingEmbedder(Representation),
    #[error("slot still holds the mask token")]
    Unresolved,
    #[error("cannot decode {value} as {repr}")]
    Undecodable { value: String, repr: Representation },
    #[error(transparent)]
    Naming(#[from] NamingError),
}

/// A representation bundled with whatever it needs to convert both ways.
#[derive(Clone, Copy)]
pub struct ColorCodec<'a> {
    pub repr: Representation,
    dict: Option<&'a ColorDictionary>,
    embedder: Option<&'a dyn Embedder>,
}

impl<'a> ColorCodec<'a> {
    pub fn new(repr: Representation, dict: &'a ColorDictionary, embedder: &'a dyn Embedder) -> Self {
        ColorCodec {
            repr,
            dict: Some(dict),
            embedder: Some(embedder),
        }
    }

    /// Hex codec needing no dictionary.
    pub fn hex() -> ColorCodec<'static> {
        ColorCodec {
            repr: Representation::Hexcode,
            dict: None,
            embedder: None,
        }
    }

    /// A codec for representations that need neither dictionary nor embedder.
    pub fn plain(repr: Representation) -> ColorCodec<'static> {
        ColorCodec {
            repr,
            dict: None,
            embedder: None,
        }
    }

    fn dict(&self) -> Result<&'a ColorDictionary, CodecError> {
        self.dict.ok_or(CodecError::MissingDictionary(self.repr))
    }

    fn word(&self, c: Color) -> Result<&'a str, CodecError> {
        Ok(self.dict()?.hex_to_word(c)?)
    }

    fn color_of_word(&self, word: &str) -> Result<Color, CodecError> {
        let embedder = self.embedder.ok_or(CodecError::MissingEmbedder(self.repr))?;
        Ok(self.dict()?.word_to_hex(word, embedder)?)
    }

    /// JSON form used inside structured documents and replies.
    pub fn encode(&self, c: Color) -> Result<Value, CodecError> {
        Ok(match self.repr {
            Representation::Hexcode => Value::String(c.to_hex()),
            Representation::Word => Value::String(self.word(c)?.to_string()),
            Representation::WordHex(_) => Value::String(format!("{} ({})", self.word(c)?, c.to_hex())),
            Representation::Rgb => Value::from(vec![c.r, c.g, c.b]),
            Representation::Cielab => {
                let lab = c.to_lab();
                Value::from(vec![round2(lab.l), round2(lab.a), round2(lab.b)])
            }
        })
    }

    /// Bare-text form used in flat palette lists, e.g. `white` or
    /// `[255, 255, 255]`.
    pub fn encode_text(&self, c: Color) -> Result<String, CodecError> {
        Ok(match self.encode(c)? {
            Value::String(s) => s,
            Value::Array(items) => {
                let parts: Vec<String> = items.iter().map(Value::to_string).collect();
                format!("[{}]", parts.join(", "))
            }
            other => other.to_string(),
        })
    }

    pub fn decode(&self, value: &Value) -> Result<Color, CodecError> {
        let undecodable = || CodecError::Undecodable {
            value: value.to_string(),
            repr: self.repr,
        };
        if let Value::String(s) = value {
            let t = s.trim();
            if t == MASK_TOKEN || t == "_" {
                return Err(CodecError::Unresolved);
            }
        }
        match self.repr {
            Representation::Hexcode | Representation::WordHex(WordHexMode::H) => {
                let s = value.as_str().ok_or_else(undecodable)?;
                find_hex(s).ok_or_else(undecodable)
            }
            Representation::Rgb => {
                let [r, g, b] = triple(value).ok_or_else(undecodable)?;
                let channel = |v: f64| {
                    let v = v.round();
                    (0.0..=255.0).contains(&v).then_some(v as u8)
                };
                match (channel(r), channel(g), channel(b)) {
                    (Some(r), Some(g), Some(b)) => Ok(Color::new(r, g, b)),
                    _ => Err(undecodable()),
                }
            }
            Representation::Cielab => {
                let [l, a, b] = triple(value).ok_or_else(undecodable)?;
                Ok(LabColor::new(l, a, b).to_color())
            }
            Representation::Word => {
                let s = value.as_str().ok_or_else(undecodable)?;
                let word = s.trim().trim_matches(|c| c == '"' || c == '\'');
                if word.is_empty() {
                    return Err(undecodable());
                }
                self.color_of_word(word)
            }
            Representation::WordHex(WordHexMode::W) => {
                let s = value.as_str().ok_or_else(undecodable)?;
                let word = s.split('(').next().unwrap_or_default().trim();
                if word.is_empty() || word.starts_with('#') {
                    return Err(undecodable());
                }
                self.color_of_word(word)
            }
        }
    }

    /// Human-readable description for format guidance.
    pub fn format_description(&self) -> &'static str {
        match self.repr {
            Representation::Hexcode => "a hex code such as \"#ffffff\"",
            Representation::Word => "a color name such as \"white\"",
            Representation::Rgb => "an [R, G, B] triplet of integers from 0 to 255 such as [255, 255, 255]",
            Representation::Cielab => "a CIELAB (L*, a*, b*) triple written as a JSON array such as [100.0, 0.0, 0.0]",
            Representation::WordHex(_) => "a color name followed by its hex code such as \"white (#ffffff)\"",
        }
    }
}

fn round2(v: f64) -> f64 {
    let r = (v * 100.0).round() / 100.0;
    if r == 0.0 {
        0.0
    } else {
        r
    }
}

/// First `#rrggbb` occurring in `s`.
fn find_hex(s: &str) -> Option<Color> {
    let bytes = s.as_bytes();
    (0..bytes.len()).find_map(|i| {
        if bytes[i] != b'#' || i + 7 > bytes.len() {
            return None;
        }
        let digits = &bytes[i + 1..i + 7];
        let boundary = bytes.get(i + 7).is_none_or(|b| !b.is_ascii_hexdigit());
        if digits.iter().all(u8::is_ascii_hexdigit) && boundary {
            Color::from_hex(&s[i..i + 7]).ok()
        } else {
            None
        }
    })
}

/// Three numbers from a JSON array or from a string such as `"(1, 2, 3)"`.
fn triple(value: &Value) -> Option<[f64; 3]> {
    let numbers: Vec<f64> = match value {
        Value::Array(items) => items
            .iter()
            .map(|v| match v {
                Value::Number(n) => n.as_f64(),
                Value::String(s) => s.trim().parse().ok(),
                _ => None,
            })
            .collect::<Option<_>>()?,
        Value::String(s) => s
            .split(|c: char| !(c.is_ascii_digit() || c == '.' || c == '-' || c == '+' || c == 'e'))
            .filter(|t| !t.is_empty())
            .map(|t| t.parse::<f64>().ok())
            .collect::<Option<_>>()?,
        _ => return None,
    };
    match numbers.as_slice() {
        [a, b, c] if a.is_finite() && b.is_finite() && c.is_finite() => Some([*a, *b, *c]),
        _ => None,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::embedding::HashedTrigramEmbedder;
    use serde_json::json;

    fn dict() -> ColorDictionary {
        ColorDictionary::from_entries([("white", Color::WHITE), ("black", Color::BLACK)])
    }

    #[test]
    fn encodes_every_representation() {
        let d = dict();
        let e = HashedTrigramEmbedder::new();
        let c = Color::WHITE;
        let enc = |r| ColorCodec::new(r, &d, &e).encode(c).unwrap();
        assert_eq!(enc(Representation::Hexcode), json!("#ffffff"));
        assert_eq!(enc(Representation::Word), json!("white"));
        assert_eq!(enc(Representation::WordHex(WordHexMode::H)), json!("white (#ffffff)"));
        assert_eq!(enc(Representation::Rgb), json!([255, 255, 255]));
        assert_eq!(enc(Representation::Cielab), json!([100.0, 0.0, 0.0]));
    }

    #[test]
    fn text_form_has_no_quotes() {
        let rgb = ColorCodec::plain(Representation::Rgb);
        assert_eq!(rgb.encode_text(Color::new(1, 2, 3)).unwrap(), "[1, 2, 3]");
        assert_eq!(ColorCodec::hex().encode_text(Color::BLACK).unwrap(), "#000000");
    }

    #[test]
    fn decodes_lenient_forms() {
        let d = dict();
        let e = HashedTrigramEmbedder::new();
        let h = ColorCodec::new(Representation::WordHex(WordHexMode::H), &d, &e);
        assert_eq!(h.decode(&json!("white (#ffffff)")).unwrap(), Color::WHITE);
        let w = ColorCodec::new(Representation::WordHex(WordHexMode::W), &d, &e);
        assert_eq!(w.decode(&json!("black (#ffffff)")).unwrap(), Color::BLACK);
        let rgb = ColorCodec::plain(Representation::Rgb);
        assert_eq!(rgb.decode(&json!("(10, 20, 30)")).unwrap(), Color::new(10, 20, 30));
        assert_eq!(rgb.decode(&json!([10.4, 20, 29.6])).unwrap(), Color::new(10, 20, 30));
        let lab = ColorCodec::plain(Representation::Cielab);
        assert_eq!(lab.decode(&json!([100, 0, 0])).unwrap(), Color::WHITE);
        assert_eq!(ColorCodec::hex().decode(&json!("#FFFFFF")).unwrap(), Color::WHITE);
    }

    #[test]
    fn rejects_masks_and_garbage() {
        let hex = ColorCodec::hex();
        assert!(matches!(hex.decode(&json!("[MASK]")), Err(CodecError::Unresolved)));
        assert!(matches!(
            hex.decode(&json!("#12345")),
            Err(CodecError::Undecodable { .. })
        ));
        assert!(matches!(
            hex.decode(&json!("#1234567")),
            Err(CodecError::Undecodable { .. })
        ));
        assert!(matches!(hex.decode(&json!(12)), Err(CodecError::Undecodable { .. })));
        let rgb = ColorCodec::plain(Representation::Rgb);
        assert!(rgb.decode(&json!([300, 0, 0])).is_err());
        assert!(rgb.decode(&json!([1, 2])).is_err());
    }

    #[test]
    fn word_forms_require_dictionary() {
        let w = ColorCodec::plain(Representation::Word);
        assert!(matches!(w.encode(Color::WHITE), Err(CodecError::MissingDictionary(_))));
    }
}
