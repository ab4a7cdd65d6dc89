use std::collections::{HashMap, HashSet};
use std::fmt;
use std::io::{BufRead, BufReader};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use tracing::{info, warn};

use super::{BenchError, Split};
use crate::color::Color;
use crate::document::Document;
use crate::prompting::GENERATED_PALETTE_LEN;

/// Share of bad records above which ingestion aborts.
pub const MAX_INVALID_FRACTION: f64 = 0.01;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RecordError {
    /// 1-based line (or CSV record) number.
    pub line: usize,
    pub message: String,
}

impl fmt::Display for RecordError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "line {}: {}", self.line, self.message)
    }
}

#[derive(Debug, Clone)]
pub struct Splits<T> {
    pub train: Vec<T>,
    pub validation: Vec<T>,
    pub test: Vec<T>,
    /// Records skipped as invalid.
    pub errors: Vec<RecordError>,
}

impl<T> Default for Splits<T> {
    fn default() -> Self {
        Splits {
            train: Vec::new(),
            validation: Vec::new(),
            test: Vec::new(),
            errors: Vec::new(),
        }
    }
}

impl<T> Splits<T> {
    pub fn get(&self, split: Split) -> &[T] {
        match split {
            Split::Train => &self.train,
            Split::Validation => &self.validation,
            Split::Test => &self.test,
        }
    }

    pub fn counts(&self) -> (usize, usize, usize) {
        (self.train.len(), self.validation.len(), self.test.len())
    }
}

fn check_invalid(source: &Path, total: usize, errors: &[RecordError]) -> Result<(), BenchError> {
    for e in errors {
        warn!(source = %source.display(), "{e}");
    }
    if !errors.is_empty() && errors.len() as f64 > MAX_INVALID_FRACTION * total as f64 {
        return Err(BenchError::Ingest {
            file: source.display().to_string(),
            invalid: errors.len(),
            total,
            errors: errors.to_vec(),
        });
    }
    Ok(())
}

#[derive(Debug, Deserialize)]
struct SplitManifest {
    #[serde(default)]
    train: Vec<String>,
    #[serde(default)]
    validation: Vec<String>,
    #[serde(default)]
    test: Vec<String>,
}

/// Reads a JSONL corpus and assigns documents to splits per the manifest.
/// Documents the manifest does not mention are dropped.
pub fn ingest_completion_corpus(corpus: &Path, splits: &Path) -> Result<Splits<Document>, BenchError> {
    let file = std::fs::File::open(corpus).map_err(|e| BenchError::io(corpus, e))?;
    let mut docs = Vec::new();
    let mut errors = Vec::new();
    let mut total = 0;
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| BenchError::io(corpus, e))?;
        if line.trim().is_empty() {
            continue;
        }
        total += 1;
        match Document::from_json_str(&line) {
            Ok(d) => docs.push(d),
            Err(e) => errors.push(RecordError {
                line: i + 1,
                message: e.to_string(),
            }),
        }
    }
    check_invalid(corpus, total, &errors)?;

    let text = std::fs::read_to_string(splits).map_err(|e| BenchError::io(splits, e))?;
    let manifest: SplitManifest =
        serde_json::from_str(&text).map_err(|e| BenchError::Config(format!("{}: {e}", splits.display())))?;
    let assignment: HashMap<&str, Split> = manifest
        .train
        .iter()
        .map(|id| (id.as_str(), Split::Train))
        .chain(manifest.validation.iter().map(|id| (id.as_str(), Split::Validation)))
        .chain(manifest.test.iter().map(|id| (id.as_str(), Split::Test)))
        .collect();

    let mut out = Splits {
        errors,
        ..Splits::default()
    };
    let mut seen = HashSet::new();
    for d in docs {
        if !seen.insert(d.id.clone()) {
            return Err(BenchError::Config(format!("duplicate document id {:?}", d.id)));
        }
        match assignment.get(d.id.as_str()) {
            Some(Split::Train) => out.train.push(d),
            Some(Split::Validation) => out.validation.push(d),
            Some(Split::Test) => out.test.push(d),
            None => {}
        }
    }
    let (train, validation, test) = out.counts();
    info!(
        train,
        validation,
        test,
        invalid = out.errors.len(),
        "completion corpus loaded"
    );
    Ok(out)
}

/// A text description with its five-color palette.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PatPair {
    pub id: String,
    pub text: String,
    pub palette: Vec<Color>,
}

#[derive(Debug, Deserialize)]
struct PatRecord {
    #[serde(default)]
    id: Option<String>,
    text: String,
    palette: Vec<String>,
    #[serde(default)]
    split: Option<Split>,
}

fn pat_pair(rec: PatRecord, index: usize) -> Result<(PatPair, Option<Split>), String> {
    if rec.palette.len() != GENERATED_PALETTE_LEN {
        return Err(format!(
            "expected {GENERATED_PALETTE_LEN} colors, got {}",
            rec.palette.len()
        ));
    }
    let palette = rec
        .palette
        .iter()
        .map(|s| Color::from_hex(s.trim()).map_err(|e| e.to_string()))
        .collect::<Result<Vec<_>, _>>()?;
    if rec.text.trim().is_empty() {
        return Err("empty text".into());
    }
    let id = rec.id.unwrap_or_else(|| format!("pat-{index:05}"));
    Ok((
        PatPair {
            id,
            text: rec.text.trim().to_string(),
            palette,
        },
        rec.split,
    ))
}

/// Reads PAT pairs from CSV (`id,text,palette[,split]`, palette as
/// space-separated hex codes) or JSONL. Without a split column the pairs are
/// shuffled with `split_seed` and cut 80/10/10.
pub fn ingest_pat(path: &Path, split_seed: u64) -> Result<Splits<PatPair>, BenchError> {
    let mut records: Vec<Result<PatRecord, RecordError>> = Vec::new();
    let is_csv = path.extension().is_some_and(|e| e == "csv");
    if is_csv {
        let mut reader = csv::ReaderBuilder::new()
            .trim(csv::Trim::All)
            .from_path(path)
            .map_err(|e| BenchError::Config(format!("{}: {e}", path.display())))?;
        let headers = reader
            .headers()
            .map_err(|e| BenchError::Config(format!("{}: {e}", path.display())))?
            .clone();
        let col = |name: &str| headers.iter().position(|h| h == name);
        let (text_col, palette_col) = match (col("text"), col("palette")) {
            (Some(t), Some(p)) => (t, p),
            _ => {
                return Err(BenchError::Config(format!(
                    "{}: needs text and palette columns",
                    path.display()
                )))
            }
        };
        let (id_col, split_col) = (col("id"), col("split"));
        for (i, row) in reader.records().enumerate() {
            let line = i + 2;
            records.push(
                row.map_err(|e| RecordError {
                    line,
                    message: e.to_string(),
                })
                .and_then(|row| {
                    let split = match split_col.and_then(|c| row.get(c)).filter(|s| !s.is_empty()) {
                        None => None,
                        Some(s) => Some(
                            serde_json::from_value(serde_json::Value::String(s.to_string())).map_err(|_| {
                                RecordError {
                                    line,
                                    message: format!("unknown split {s:?}"),
                                }
                            })?,
                        ),
                    };
                    Ok(PatRecord {
                        id: id_col.and_then(|c| row.get(c)).map(str::to_string),
                        text: row.get(text_col).unwrap_or_default().to_string(),
                        palette: row
                            .get(palette_col)
                            .unwrap_or_default()
                            .split([' ', ';', '|'])
                            .filter(|s| !s.is_empty())
                            .map(str::to_string)
                            .collect(),
                        split,
                    })
                }),
            );
        }
    } else {
        let file = std::fs::File::open(path).map_err(|e| BenchError::io(path, e))?;
        for (i, line) in BufReader::new(file).lines().enumerate() {
            let line_text = line.map_err(|e| BenchError::io(path, e))?;
            if line_text.trim().is_empty() {
                continue;
            }
            records.push(serde_json::from_str(&line_text).map_err(|e| RecordError {
                line: i + 1,
                message: e.to_string(),
            }));
        }
    }

    let total = records.len();
    let mut errors = Vec::new();
    let mut pairs = Vec::new();
    for (i, rec) in records.into_iter().enumerate() {
        let line = if is_csv { i + 2 } else { i + 1 };
        match rec.and_then(|r| pat_pair(r, i).map_err(|message| RecordError { line, message })) {
            Ok(p) => pairs.push(p),
            Err(e) => errors.push(e),
        }
    }
    check_invalid(path, total, &errors)?;

    let mut out = Splits {
        errors,
        ..Splits::default()
    };
    if pairs.iter().any(|(_, s)| s.is_some()) {
        for (p, s) in pairs {
            match s.unwrap_or(Split::Train) {
                Split::Train => out.train.push(p),
                Split::Validation => out.validation.push(p),
                Split::Test => out.test.push(p),
            }
        }
    } else {
        let (train, validation, test) = seeded_split(pairs.into_iter().map(|(p, _)| p).collect(), split_seed);
        out.train = train;
        out.validation = validation;
        out.test = test;
    }
    let (train, validation, test) = out.counts();
    info!(
        train,
        validation,
        test,
        split_seed,
        invalid = out.errors.len(),
        "PAT pairs loaded"
    );
    Ok(out)
}

/// Shuffles with `seed`, then takes `round(n/10)` for validation, the same
/// for test, and the rest for training.
pub fn seeded_split<T>(mut items: Vec<T>, seed: u64) -> (Vec<T>, Vec<T>, Vec<T>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    items.shuffle(&mut rng);
    let tenth = (items.len() as f64 / 10.0).round() as usize;
    let test = items.split_off(items.len() - tenth);
    let validation = items.split_off(items.len() - tenth);
    (items, validation, test)
}
