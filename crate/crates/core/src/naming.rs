//! Conversion between colors and human color words via a name dictionary.
//!
//! The dictionary file uses the xkcd `rgb.txt` layout: one `name<TAB>#rrggbb`
//! entry per line, `#` comment lines and blank lines ignored.
//!
//! * Color → word: exact hex hit, otherwise the entry nearest in RGB.
//! * Word → color: exact name hit, otherwise the five dictionary words whose
//!   embeddings are nearest to the query's, blended per channel with weights
//!   proportional to the reciprocal of each embedding distance.

use std::collections::HashMap;
use std::io::BufRead;
use std::path::Path;
use std::sync::{Arc, Mutex};

use thiserror::Error;

use crate::color::Color;
use crate::embedding::{normalize, EmbedError, Embedder};

/// Number of dictionary neighbours blended for an unknown word.
pub const BLEND_NEIGHBOURS: usize = 5;

/// Default dictionary location, relative to the working directory.
pub const DEFAULT_DICTIONARY_PATH: &str = "data/xkcd_rgb.txt";

#[derive(Debug, Error)]
pub enum NamingError {
    #[error("reading color dictionary {source_name}: {error}")]
    Io { source_name: String, error: std::io::Error },
    #[error("{source_name}:{line}: malformed dictionary line {text:?}")]
    MalformedLine {
        source_name: String,
        line: usize,
        text: String,
    },
    #[error("color dictionary is empty")]
    EmptyDictionary,
    #[error("color word is empty")]
    EmptyWord,
    #[error(transparent)]
    Embedding(#[from] EmbedError),
}

/// Lowercases, trims and collapses internal whitespace.
pub fn normalize_word(word: &str) -> String {
    word.split_whitespace().collect::<Vec<_>>().join(" ").to_lowercase()
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DictionaryEntry {
    pub word: String,
    pub color: Color,
}

pub struct ColorDictionary {
    entries: Vec<DictionaryEntry>,
    by_word: HashMap<String, usize>,
    by_color: HashMap<Color, usize>,
    // provider name -> unit-normalized embeddings of every entry, file order
    embeddings: Mutex<HashMap<String, Arc<Vec<Vec<f32>>>>>,
}

impl std::fmt::Debug for ColorDictionary {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ColorDictionary")
            .field("entries", &self.entries.len())
            .finish()
    }
}

impl ColorDictionary {
    /// Builds a dictionary from `(word, color)` pairs. Words are normalized
    /// and the first occurrence of a duplicate wins.
    pub fn from_entries<I, S>(entries: I) -> Self
    where
        I: IntoIterator<Item = (S, Color)>,
        S: AsRef<str>,
    {
        let mut dict = ColorDictionary {
            entries: Vec::new(),
            by_word: HashMap::new(),
            by_color: HashMap::new(),
            embeddings: Mutex::new(HashMap::new()),
        };
        for (word, color) in entries {
            dict.push(normalize_word(word.as_ref()), color);
        }
        dict
    }

    fn push(&mut self, word: String, color: Color) {
        if word.is_empty() || self.by_word.contains_key(&word) {
            return;
        }
        let idx = self.entries.len();
        self.by_word.insert(word.clone(), idx);
        self.by_color.entry(color).or_insert(idx);
        self.entries.push(DictionaryEntry { word, color });
    }

    pub fn load<R: BufRead>(reader: R, source_name: &str) -> Result<Self, NamingError> {
        let mut dict = ColorDictionary::from_entries(std::iter::empty::<(&str, Color)>());
        for (i, line) in reader.lines().enumerate() {
            let line = line.map_err(|error| NamingError::Io {
                source_name: source_name.to_string(),
                error,
            })?;
            let trimmed = line.trim();
            if trimmed.is_empty() || trimmed.starts_with('#') {
                continue;
            }
            let malformed = || NamingError::MalformedLine {
                source_name: source_name.to_string(),
                line: i + 1,
                text: line.clone(),
            };
            let mut fields = line.split('\t');
            let word = normalize_word(fields.next().unwrap_or_default());
            let hex = fields.next().map(str::trim).ok_or_else(malformed)?;
            if word.is_empty() || fields.any(|rest| !rest.trim().is_empty()) {
                return Err(malformed());
            }
            let color = Color::from_hex(hex).map_err(|_| malformed())?;
            dict.push(word, color);
        }
        Ok(dict)
    }

    pub fn load_path(path: impl AsRef<Path>) -> Result<Self, NamingError> {
        let path = path.as_ref();
        let source_name = path.display().to_string();
        let file = std::fs::File::open(path).map_err(|error| NamingError::Io {
            source_name: source_name.clone(),
            error,
        })?;
        Self::load(std::io::BufReader::new(file), &source_name)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entries(&self) -> &[DictionaryEntry] {
        &self.entries
    }

    pub fn lookup(&self, word: &str) -> Option<Color> {
        self.by_word.get(&normalize_word(word)).map(|&i| self.entries[i].color)
    }

    /// The word for `color`: an exact match if one exists, otherwise the entry
    /// closest in RGB (earliest entry on ties).
    pub fn hex_to_word(&self, color: Color) -> Result<&str, NamingError> {
        if let Some(&i) = self.by_color.get(&color) {
            return Ok(&self.entries[i].word);
        }
        let mut best: Option<(usize, u32)> = None;
        for (i, entry) in self.entries.iter().enumerate() {
            let d = squared_rgb_distance(entry.color, color);
            if best.is_none_or(|(_, bd)| d < bd) {
                best = Some((i, d));
            }
        }
        best.map(|(i, _)| self.entries[i].word.as_str())
            .ok_or(NamingError::EmptyDictionary)
    }

    /// The color for `word`. Dictionary words map directly without touching
    /// the embedder; anything else is blended from its nearest neighbours.
    pub fn word_to_hex(&self, word: &str, embedder: &dyn Embedder) -> Result<Color, NamingError> {
        let word = normalize_word(word);
        if word.is_empty() {
            return Err(NamingError::EmptyWord);
        }
        if let Some(&i) = self.by_word.get(&word) {
            return Ok(self.entries[i].color);
        }
        let neighbours = self.nearest_words(&word, embedder, BLEND_NEIGHBOURS)?;
        Ok(self.blend(&neighbours))
    }

    /// The `n` entries whose unit embeddings are closest to the query's, as
    /// `(entry index, Euclidean distance)`, nearest first.
    pub fn nearest_words(
        &self,
        word: &str,
        embedder: &dyn Embedder,
        n: usize,
    ) -> Result<Vec<(usize, f64)>, NamingError> {
        if self.entries.is_empty() {
            return Err(NamingError::EmptyDictionary);
        }
        let table = self.entry_embeddings(embedder)?;
        let mut query = embedder.embed_one(&normalize_word(word))?;
        if query.len() != embedder.dimension() {
            return Err(EmbedError::DimensionMismatch {
                expected: embedder.dimension(),
                got: query.len(),
            }
            .into());
        }
        normalize(&mut query);

        let mut scored: Vec<(usize, f64)> = table
            .iter()
            .enumerate()
            .map(|(i, v)| (i, euclidean(&query, v)))
            .collect();
        scored.sort_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)));
        scored.truncate(n);
        Ok(scored)
    }

    fn blend(&self, neighbours: &[(usize, f64)]) -> Color {
        if let Some(&(i, _)) = neighbours.iter().find(|(_, d)| *d == 0.0) {
            return self.entries[i].color;
        }
        let total: f64 = neighbours.iter().map(|(_, d)| 1.0 / d).sum();
        let mut acc = [0f64; 3];
        for &(i, d) in neighbours {
            let w = (1.0 / d) / total;
            for (a, c) in acc.iter_mut().zip(self.entries[i].color.channels()) {
                *a += w * f64::from(c);
            }
        }
        let channel = |v: f64| v.round().clamp(0.0, 255.0) as u8;
        Color::new(channel(acc[0]), channel(acc[1]), channel(acc[2]))
    }

    fn entry_embeddings(&self, embedder: &dyn Embedder) -> Result<Arc<Vec<Vec<f32>>>, NamingError> {
        let mut guard = self.embeddings.lock().unwrap();
        if let Some(table) = guard.get(embedder.name()) {
            return Ok(Arc::clone(table));
        }
        let words: Vec<&str> = self.entries.iter().map(|e| e.word.as_str()).collect();
        let mut table = Vec::with_capacity(words.len());
        for chunk in words.chunks(256) {
            let vectors = embedder.embed(chunk)?;
            if vectors.len() != chunk.len() {
                return Err(EmbedError::CountMismatch {
                    expected: chunk.len(),
                    got: vectors.len(),
                }
                .into());
            }
            for mut v in vectors {
                normalize(&mut v);
                table.push(v);
            }
        }
        let table = Arc::new(table);
        guard.insert(embedder.name().to_string(), Arc::clone(&table));
        Ok(table)
    }
}

fn squared_rgb_distance(a: Color, b: Color) -> u32 {
    let d = |x: u8, y: u8| (i32::from(x) - i32::from(y)).unsigned_abs();
    d(a.r, b.r).pow(2) + d(a.g, b.g).pow(2) + d(a.b, b.b).pow(2)
}

fn euclidean(a: &[f32], b: &[f32]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (f64::from(*x) - f64::from(*y)).powi(2))
        .sum::<f64>()
        .sqrt()
}

pub fn load_dictionary<R: BufRead>(reader: R, source_name: &str) -> Result<ColorDictionary, NamingError> {
    ColorDictionary::load(reader, source_name)
}

pub fn hex_to_word(c: Color, dict: &ColorDictionary) -> Result<&str, NamingError> {
    dict.hex_to_word(c)
}

pub fn word_to_hex(word: &str, dict: &ColorDictionary, embedder: &dyn Embedder) -> Result<Color, NamingError> {
    dict.word_to_hex(word, embedder)
}
