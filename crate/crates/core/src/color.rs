//! sRGB colors, CIELAB conversion, Euclidean ΔE and 16×16×16 bin quantization.
//!
//! [`Color`] is the canonical value every other module stores. The textual
//! forms (hex, words, Lab triples) are views derived from it.
//!
//! CIELAB conversion assumes the sRGB transfer curve and a D65 reference
//! white.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ColorError {
    #[error("invalid hex color {0:?}: expected \"#RRGGBB\"")]
    InvalidHex(String),
    #[error("unknown color representation {0:?}")]
    UnknownRepresentation(String),
}

/// An 8-bit-per-channel sRGB color.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Default)]
pub struct Color {
    pub r: u8,
    pub g: u8,
    pub b: u8,
}

impl Color {
    pub const WHITE: Color = Color::new(255, 255, 255);
    pub const BLACK: Color = Color::new(0, 0, 0);

    pub const fn new(r: u8, g: u8, b: u8) -> Self {
        Color { r, g, b }
    }

    pub fn channels(self) -> [u8; 3] {
        [self.r, self.g, self.b]
    }

    /// Parses `#RRGGBB`, case-insensitively.
    pub fn from_hex(hex: &str) -> Result<Self, ColorError> {
        let bad = || ColorError::InvalidHex(hex.to_string());
        let digits = hex.strip_prefix('#').ok_or_else(bad)?;
        if digits.len() != 6 || !digits.bytes().all(|b| b.is_ascii_hexdigit()) {
            return Err(bad());
        }
        let channel = |i: usize| u8::from_str_radix(&digits[i..i + 2], 16).map_err(|_| bad());
        Ok(Color::new(channel(0)?, channel(2)?, channel(4)?))
    }

    /// Lowercase `#rrggbb`.
    pub fn to_hex(self) -> String {
        format!("#{:02x}{:02x}{:02x}", self.r, self.g, self.b)
    }

    pub fn to_lab(self) -> LabColor {
        let [r, g, b] = self.channels().map(|c| srgb_to_linear(f64::from(c) / 255.0));

        let x = 0.412_456_4 * r + 0.357_576_1 * g + 0.180_437_5 * b;
        let y = 0.212_672_9 * r + 0.715_152_2 * g + 0.072_175_0 * b;
        let z = 0.019_333_9 * r + 0.119_192_0 * g + 0.950_304_1 * b;

        let fx = lab_f(x / WHITE_X);
        let fy = lab_f(y / WHITE_Y);
        let fz = lab_f(z / WHITE_Z);

        LabColor {
            l: (116.0 * fy - 16.0).clamp(0.0, 100.0),
            a: 500.0 * (fx - fy),
            b: 200.0 * (fy - fz),
        }
    }

    pub fn quantize(self) -> BinIndex {
        BinIndex {
            r: self.r / 16,
            g: self.g / 16,
            b: self.b / 16,
        }
    }

    /// Plain Euclidean distance in 8-bit RGB space.
    pub fn rgb_distance(self, other: Color) -> f64 {
        let d = |a: u8, b: u8| f64::from(a) - f64::from(b);
        (d(self.r, other.r).powi(2) + d(self.g, other.g).powi(2) + d(self.b, other.b).powi(2)).sqrt()
    }
}

impl fmt::Display for Color {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_hex())
    }
}

impl FromStr for Color {
    type Err = ColorError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Color::from_hex(s)
    }
}

impl Serialize for Color {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(&self.to_hex())
    }
}

impl<'de> Deserialize<'de> for Color {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        Color::from_hex(&s).map_err(serde::de::Error::custom)
    }
}

// D65 reference white, normalized to Y = 1.
const WHITE_X: f64 = 0.950_47;
const WHITE_Y: f64 = 1.0;
const WHITE_Z: f64 = 1.088_83;

const EPSILON: f64 = 216.0 / 24389.0;
const KAPPA: f64 = 24389.0 / 27.0;

fn srgb_to_linear(c: f64) -> f64 {
    if c <= 0.040_45 {
        c / 12.92
    } else {
        ((c + 0.055) / 1.055).powf(2.4)
    }
}

fn linear_to_srgb(c: f64) -> f64 {
    if c <= 0.003_130_8 {
        12.92 * c
    } else {
        1.055 * c.powf(1.0 / 2.4) - 0.055
    }
}

fn lab_f(t: f64) -> f64 {
    if t > EPSILON {
        t.cbrt()
    } else {
        (KAPPA * t + 16.0) / 116.0
    }
}

fn lab_f_inv(f: f64) -> f64 {
    let cubed = f * f * f;
    if cubed > EPSILON {
        cubed
    } else {
        (116.0 * f - 16.0) / KAPPA
    }
}

/// A CIELAB triple (L*, a*, b*).
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct LabColor {
    pub l: f64,
    pub a: f64,
    pub b: f64,
}

impl LabColor {
    pub const fn new(l: f64, a: f64, b: f64) -> Self {
        LabColor { l, a, b }
    }

    /// Converts back to sRGB. Out-of-gamut results are clamped per channel.
    pub fn to_color(self) -> Color {
        let fy = (self.l + 16.0) / 116.0;
        let fx = fy + self.a / 500.0;
        let fz = fy - self.b / 200.0;

        let x = WHITE_X * lab_f_inv(fx);
        let y = WHITE_Y * lab_f_inv(fy);
        let z = WHITE_Z * lab_f_inv(fz);

        let r = 3.240_454_2 * x - 1.537_138_5 * y - 0.498_531_4 * z;
        let g = -0.969_266_0 * x + 1.876_010_8 * y + 0.041_556_0 * z;
        let b = 0.055_643_4 * x - 0.204_025_9 * y + 1.057_225_2 * z;

        let encode = |c: f64| {
            let v = linear_to_srgb(c.clamp(0.0, 1.0)) * 255.0;
            v.round().clamp(0.0, 255.0) as u8
        };
        Color::new(encode(r), encode(g), encode(b))
    }

    /// Euclidean ΔE (CIE76).
    pub fn delta_e(self, other: LabColor) -> f64 {
        ((self.l - other.l).powi(2) + (self.a - other.a).powi(2) + (self.b - other.b).powi(2)).sqrt()
    }
}

impl From<Color> for LabColor {
    fn from(c: Color) -> Self {
        c.to_lab()
    }
}

impl From<LabColor> for Color {
    fn from(lab: LabColor) -> Self {
        lab.to_color()
    }
}

/// Coordinates of a color in the 16×16×16 RGB grid; each is `channel / 16`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct BinIndex {
    pub r: u8,
    pub g: u8,
    pub b: u8,
}

pub fn hex_to_color(hex: &str) -> Result<Color, ColorError> {
    Color::from_hex(hex)
}

pub fn color_to_hex(c: Color) -> String {
    c.to_hex()
}

pub fn color_to_lab(c: Color) -> LabColor {
    c.to_lab()
}

pub fn lab_to_color(lab: LabColor) -> Color {
    lab.to_color()
}

pub fn delta_e(x: LabColor, y: LabColor) -> f64 {
    x.delta_e(y)
}

pub fn quantize(c: Color) -> BinIndex {
    c.quantize()
}

/// Whether a word-and-hex reply is decoded from its hex part or its word part.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum WordHexMode {
    H,
    W,
}

/// The textual color forms a prompt can use.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum Representation {
    Word,
    #[default]
    Hexcode,
    Rgb,
    Cielab,
    WordHex(WordHexMode),
}

impl Representation {
    pub const ALL: [Representation; 6] = [
        Representation::Hexcode,
        Representation::Word,
        Representation::Rgb,
        Representation::Cielab,
        Representation::WordHex(WordHexMode::H),
        Representation::WordHex(WordHexMode::W),
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Representation::Word => "word",
            Representation::Hexcode => "hexcode",
            Representation::Rgb => "rgb",
            Representation::Cielab => "cielab",
            Representation::WordHex(WordHexMode::H) => "word_hex_h",
            Representation::WordHex(WordHexMode::W) => "word_hex_w",
        }
    }

    /// Whether rendering a color in this representation requires a dictionary.
    pub fn needs_dictionary(self) -> bool {
        matches!(self, Representation::Word | Representation::WordHex(_))
    }
}

impl fmt::Display for Representation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Representation {
    type Err = ColorError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let norm: String = s
            .trim()
            .to_ascii_lowercase()
            .chars()
            .filter(|c| c.is_ascii_alphanumeric())
            .collect();
        Ok(match norm.as_str() {
            "word" => Representation::Word,
            "hex" | "hexcode" => Representation::Hexcode,
            "rgb" => Representation::Rgb,
            "lab" | "cielab" => Representation::Cielab,
            "wordhexh" | "wordhex" => Representation::WordHex(WordHexMode::H),
            "wordhexw" => Representation::WordHex(WordHexMode::W),
            _ => return Err(ColorError::UnknownRepresentation(s.to_string())),
        })
    }
}

impl TryFrom<String> for Representation {
    type Error = ColorError;

    fn try_from(s: String) -> Result<Self, Self::Error> {
        s.parse()
    }
}

impl From<Representation> for String {
    fn from(r: Representation) -> Self {
        r.as_str().to_string()
    }
}
