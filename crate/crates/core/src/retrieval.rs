//! Exact nearest-neighbour exemplar index over unit-normalized embeddings.
//!
//! On-disk layout (all integers little-endian):
//!
//! ```text
//! b"CGIDX1"                 magic
//! u32 version               currently 1
//! u64 header_len, header    JSON: provider, dimension, count, ids,
//!                           query_texts, payload_offsets
//! u64 payload_len, payloads concatenated UTF-8 payloads
//! count × dimension × f32   vectors, row-major
//! ```

use std::collections::HashSet;
use std::io::{Read, Write};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::embedding::{normalize, EmbedError, Embedder};

pub const INDEX_MAGIC: &[u8; 6] = b"CGIDX1";
const INDEX_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum RetrievalError {
    #[error("exemplar corpus is empty")]
    EmptyCorpus,
    #[error("exemplar index is empty")]
    EmptyIndex,
    #[error("duplicate exemplar id {0:?}")]
    DuplicateId(String),
    #[error("k must be at least 1")]
    ZeroK,
    #[error("index was built with {index} but queried with {query}")]
    ProviderMismatch { index: String, query: String },
    #[error(transparent)]
    Embedding(#[from] EmbedError),
    #[error("index file: {0}")]
    Io(#[from] std::io::Error),
    #[error("index file is malformed: {0}")]
    Format(String),
}

/// One retrievable solved case.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Exemplar {
    pub id: String,
    pub query_text: String,
    /// Canonical JSON: a document for completion, `{"text", "palette"}` for
    /// generation.
    pub payload: String,
}

#[derive(Debug, Clone, Copy)]
pub struct BuildOptions {
    pub batch_size: usize,
    /// Embedding batches in flight at once.
    pub parallel_batches: usize,
}

impl Default for BuildOptions {
    fn default() -> Self {
        BuildOptions {
            batch_size: 64,
            parallel_batches: 4,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExemplarIndex {
    provider: String,
    dimension: usize,
    exemplars: Vec<Exemplar>,
    vectors: Vec<f32>,
}

#[derive(Serialize, Deserialize)]
struct Header {
    provider: String,
    dimension: usize,
    count: usize,
    ids: Vec<String>,
    query_texts: Vec<String>,
    payload_offsets: Vec<u64>,
}

impl ExemplarIndex {
    pub fn build(corpus: Vec<Exemplar>, embedder: &dyn Embedder) -> Result<Self, RetrievalError> {
        Self::build_with(corpus, embedder, BuildOptions::default())
    }

    pub fn build_with(
        corpus: Vec<Exemplar>,
        embedder: &dyn Embedder,
        opts: BuildOptions,
    ) -> Result<Self, RetrievalError> {
        if corpus.is_empty() {
            return Err(RetrievalError::EmptyCorpus);
        }
        let mut seen = HashSet::new();
        for e in &corpus {
            if !seen.insert(e.id.as_str()) {
                return Err(RetrievalError::DuplicateId(e.id.clone()));
            }
        }

        let dimension = embedder.dimension();
        let texts: Vec<&str> = corpus.iter().map(|e| e.query_text.as_str()).collect();
        let batches: Vec<&[&str]> = texts.chunks(opts.batch_size.max(1)).collect();
        let mut embedded: Vec<Vec<Vec<f32>>> = Vec::with_capacity(batches.len());
        for wave in batches.chunks(opts.parallel_batches.max(1)) {
            let results: Vec<Result<Vec<Vec<f32>>, EmbedError>> = std::thread::scope(|s| {
                let handles: Vec<_> = wave.iter().map(|b| s.spawn(move || embedder.embed(b))).collect();
                handles
                    .into_iter()
                    .map(|h| h.join().expect("embedding thread panicked"))
                    .collect()
            });
            for (batch, r) in wave.iter().zip(results) {
                let vectors = r?;
                if vectors.len() != batch.len() {
                    return Err(EmbedError::CountMismatch {
                        expected: batch.len(),
                        got: vectors.len(),
                    }
                    .into());
                }
                embedded.push(vectors);
            }
        }

        let mut vectors = Vec::with_capacity(corpus.len() * dimension);
        for mut v in embedded.into_iter().flatten() {
            if v.len() != dimension {
                return Err(EmbedError::DimensionMismatch {
                    expected: dimension,
                    got: v.len(),
                }
                .into());
            }
            if !normalize(&mut v) {
                v[0] = 1.0;
            }
            vectors.extend_from_slice(&v);
        }

        Ok(ExemplarIndex {
            provider: embedder.name().to_string(),
            dimension,
            exemplars: corpus,
            vectors,
        })
    }

    pub fn provider(&self) -> &str {
        &self.provider
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn len(&self) -> usize {
        self.exemplars.len()
    }

    pub fn is_empty(&self) -> bool {
        self.exemplars.is_empty()
    }

    pub fn exemplars(&self) -> &[Exemplar] {
        &self.exemplars
    }

    pub fn get(&self, id: &str) -> Option<&Exemplar> {
        self.exemplars.iter().find(|e| e.id == id)
    }

    pub fn vector(&self, i: usize) -> &[f32] {
        &self.vectors[i * self.dimension..(i + 1) * self.dimension]
    }

    /// Top `k` exemplars by cosine similarity to `text`, ties broken by id.
    pub fn query_top_k(
        &self,
        text: &str,
        k: usize,
        embedder: &dyn Embedder,
    ) -> Result<Vec<(&Exemplar, f64)>, RetrievalError> {
        if embedder.name() != self.provider {
            return Err(RetrievalError::ProviderMismatch {
                index: self.provider.clone(),
                query: embedder.name().to_string(),
            });
        }
        let query = embedder.embed_one(text)?;
        self.query_vector(&query, k)
    }

    pub fn query_vector(&self, query: &[f32], k: usize) -> Result<Vec<(&Exemplar, f64)>, RetrievalError> {
        if k == 0 {
            return Err(RetrievalError::ZeroK);
        }
        if self.exemplars.is_empty() {
            return Err(RetrievalError::EmptyIndex);
        }
        if query.len() != self.dimension {
            return Err(EmbedError::DimensionMismatch {
                expected: self.dimension,
                got: query.len(),
            }
            .into());
        }
        let mut q = query.to_vec();
        if !normalize(&mut q) {
            q[0] = 1.0;
        }
        let mut scored: Vec<(usize, f64)> = (0..self.exemplars.len())
            .map(|i| {
                let score = self
                    .vector(i)
                    .iter()
                    .zip(&q)
                    .map(|(a, b)| f64::from(*a) * f64::from(*b))
                    .sum::<f64>();
                (i, score.clamp(-1.0, 1.0))
            })
            .collect();
        scored.sort_by(|a, b| {
            b.1.total_cmp(&a.1)
                .then_with(|| self.exemplars[a.0].id.cmp(&self.exemplars[b.0].id))
        });
        scored.truncate(k);
        Ok(scored.into_iter().map(|(i, s)| (&self.exemplars[i], s)).collect())
    }

    /// Uniform seeded choice.
    pub fn sample_random(&self, seed: u64) -> Result<&Exemplar, RetrievalError> {
        if self.exemplars.is_empty() {
            return Err(RetrievalError::EmptyIndex);
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Ok(&self.exemplars[rng.random_range(0..self.exemplars.len())])
    }

    pub fn write_to<W: Write>(&self, mut w: W) -> Result<(), RetrievalError> {
        let mut payloads = Vec::new();
        let mut offsets = Vec::with_capacity(self.exemplars.len() + 1);
        for e in &self.exemplars {
            offsets.push(payloads.len() as u64);
            payloads.extend_from_slice(e.payload.as_bytes());
        }
        offsets.push(payloads.len() as u64);
        let header = Header {
            provider: self.provider.clone(),
            dimension: self.dimension,
            count: self.exemplars.len(),
            ids: self.exemplars.iter().map(|e| e.id.clone()).collect(),
            query_texts: self.exemplars.iter().map(|e| e.query_text.clone()).collect(),
            payload_offsets: offsets,
        };
        let header = serde_json::to_vec(&header).expect("header serializes");

        w.write_all(INDEX_MAGIC)?;
        w.write_all(&INDEX_VERSION.to_le_bytes())?;
        w.write_all(&(header.len() as u64).to_le_bytes())?;
        w.write_all(&header)?;
        w.write_all(&(payloads.len() as u64).to_le_bytes())?;
        w.write_all(&payloads)?;
        for x in &self.vectors {
            w.write_all(&x.to_le_bytes())?;
        }
        Ok(())
    }

    pub fn read_from<R: Read>(mut r: R) -> Result<Self, RetrievalError> {
        let bad = |m: &str| RetrievalError::Format(m.to_string());
        let mut magic = [0u8; 6];
        r.read_exact(&mut magic)?;
        if &magic != INDEX_MAGIC {
            return Err(bad("missing CGIDX1 magic"));
        }
        let mut u32buf = [0u8; 4];
        r.read_exact(&mut u32buf)?;
        let version = u32::from_le_bytes(u32buf);
        if version != INDEX_VERSION {
            return Err(RetrievalError::Format(format!("unsupported version {version}")));
        }
        let read_block = |r: &mut R| -> Result<Vec<u8>, RetrievalError> {
            let mut len = [0u8; 8];
            r.read_exact(&mut len)?;
            let len = u64::from_le_bytes(len) as usize;
            let mut buf = Vec::new();
            r.take(len as u64).read_to_end(&mut buf)?;
            if buf.len() != len {
                return Err(RetrievalError::Format("truncated block".into()));
            }
            Ok(buf)
        };
        let header: Header =
            serde_json::from_slice(&read_block(&mut r)?).map_err(|e| RetrievalError::Format(e.to_string()))?;
        let payloads = read_block(&mut r)?;
        if header.ids.len() != header.count
            || header.query_texts.len() != header.count
            || header.payload_offsets.len() != header.count + 1
        {
            return Err(bad("header counts disagree"));
        }
        let mut exemplars = Vec::with_capacity(header.count);
        for i in 0..header.count {
            let (start, end) = (
                header.payload_offsets[i] as usize,
                header.payload_offsets[i + 1] as usize,
            );
            let bytes = payloads
                .get(start..end)
                .ok_or_else(|| bad("payload offset out of range"))?;
            exemplars.push(Exemplar {
                id: header.ids[i].clone(),
                query_text: header.query_texts[i].clone(),
                payload: String::from_utf8(bytes.to_vec()).map_err(|_| bad("payload is not UTF-8"))?,
            });
        }
        let mut raw = Vec::new();
        r.read_to_end(&mut raw)?;
        if raw.len() != header.count * header.dimension * 4 {
            return Err(bad("vector block has the wrong size"));
        }
        let vectors = raw
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
            .collect();
        Ok(ExemplarIndex {
            provider: header.provider,
            dimension: header.dimension,
            exemplars,
            vectors,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), RetrievalError> {
        let file = std::fs::File::create(path)?;
        let mut w = std::io::BufWriter::new(file);
        self.write_to(&mut w)?;
        w.flush()?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, RetrievalError> {
        let file = std::fs::File::open(path)?;
        Self::read_from(std::io::BufReader::new(file))
    }
}

pub fn build_index(corpus: Vec<Exemplar>, embedder: &dyn Embedder) -> Result<ExemplarIndex, RetrievalError> {
    ExemplarIndex::build(corpus, embedder)
}

pub fn query_top_k<'a>(
    index: &'a ExemplarIndex,
    text: &str,
    k: usize,
    embedder: &dyn Embedder,
) -> Result<Vec<(&'a Exemplar, f64)>, RetrievalError> {
    index.query_top_k(text, k, embedder)
}

pub fn sample_random(index: &ExemplarIndex, seed: u64) -> Result<&Exemplar, RetrievalError> {
    index.sample_random(seed)
}
