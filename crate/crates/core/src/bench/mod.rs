//! Dataset ingestion, benchmark runners, ablation matrices and report files.

mod config;
mod ingest;
mod report;
mod run;

use std::path::{Path, PathBuf};

use thiserror::Error;

pub use config::{
    AblationArm, AppConfig, CompletionSettings, EmbeddingConfig, GenerationSettings, ServiceSettings, Split,
};
pub use ingest::{
    ingest_completion_corpus, ingest_pat, seeded_split, PatPair, RecordError, Splits, MAX_INVALID_FRACTION,
};
pub use report::{emit_ablation, emit_report, render_html, ReportFormat};
pub use run::{
    case_seed, completion_exemplars, generation_exemplars, load_or_build_index, AblationReport, AblationRow, Harness,
};

use crate::embedding::EmbedError;
use crate::llm::LlmError;
use crate::naming::NamingError;
use crate::pipeline::PipelineError;
use crate::prompting::PromptError;
use crate::retrieval::RetrievalError;

#[derive(Debug, Error)]
pub enum BenchError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("config: {0}")]
    Config(String),
    #[error("{file}: {invalid} of {total} records are invalid (first: {})", errors.first().map(ToString::to_string).unwrap_or_default())]
    Ingest {
        file: String,
        invalid: usize,
        total: usize,
        errors: Vec<RecordError>,
    },
    #[error(transparent)]
    Naming(#[from] NamingError),
    #[error(transparent)]
    Embedding(#[from] EmbedError),
    #[error(transparent)]
    Retrieval(#[from] RetrievalError),
    #[error(transparent)]
    Llm(#[from] LlmError),
    #[error(transparent)]
    Prompt(#[from] PromptError),
    #[error("case {id}: {source}")]
    Case { id: String, source: PipelineError },
}

impl BenchError {
    pub fn io(path: &Path, source: std::io::Error) -> Self {
        BenchError::Io {
            path: path.to_path_buf(),
            source,
        }
    }
}
