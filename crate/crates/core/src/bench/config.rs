use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::BenchError;
use crate::embedding::{CachedEmbedder, Embedder, HashedTrigramEmbedder, HttpEmbedder};
use crate::llm::LlmProviderConfig;
use crate::metrics::{ColorSpace, SimilarityStrategy};
use crate::naming::DEFAULT_DICTIONARY_PATH;
use crate::prompting::{PromptConfig, Task};

/// Top-level configuration, read from TOML or JSON.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AppConfig {
    pub seed: u64,
    /// Concurrent cases.
    pub parallel: usize,
    pub color_dict: PathBuf,
    pub templates_dir: Option<PathBuf>,
    pub output_dir: PathBuf,
    pub record: Option<PathBuf>,
    pub replay: Option<PathBuf>,
    pub llm: LlmProviderConfig,
    pub embedding: EmbeddingConfig,
    pub completion: CompletionSettings,
    pub generation: GenerationSettings,
    pub service: ServiceSettings,
    #[serde(rename = "ablation")]
    pub ablation: Vec<AblationArm>,
}

impl Default for AppConfig {
    fn default() -> Self {
        AppConfig {
            seed: 0,
            parallel: 4,
            color_dict: PathBuf::from(DEFAULT_DICTIONARY_PATH),
            templates_dir: None,
            output_dir: PathBuf::from("out"),
            record: None,
            replay: None,
            llm: LlmProviderConfig::default(),
            embedding: EmbeddingConfig::default(),
            completion: CompletionSettings::default(),
            generation: GenerationSettings::default(),
            service: ServiceSettings::default(),
            ablation: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "provider", deny_unknown_fields)]
pub enum EmbeddingConfig {
    #[default]
    HashedTrigram,
    Http {
        endpoint: String,
        model: String,
        dimension: usize,
        #[serde(default = "default_embed_key_env")]
        api_key_env: String,
        #[serde(default = "default_embed_timeout")]
        timeout_secs: u64,
        /// Persistent JSON cache of embedded texts.
        #[serde(default)]
        cache: Option<PathBuf>,
    },
}

fn default_embed_key_env() -> String {
    "EMBED_API_KEY".into()
}

fn default_embed_timeout() -> u64 {
    30
}

impl EmbeddingConfig {
    pub fn build(&self) -> Result<Arc<dyn Embedder>, BenchError> {
        Ok(match self {
            EmbeddingConfig::HashedTrigram => Arc::new(HashedTrigramEmbedder::new()),
            EmbeddingConfig::Http {
                endpoint,
                model,
                dimension,
                api_key_env,
                timeout_secs,
                cache,
            } => {
                let http = HttpEmbedder::new(
                    endpoint.clone(),
                    std::env::var(api_key_env).ok(),
                    model.clone(),
                    *dimension,
                    Duration::from_secs(*timeout_secs),
                );
                match cache {
                    Some(path) => Arc::new(CachedEmbedder::persistent(http, path)?),
                    None => Arc::new(CachedEmbedder::in_memory(http)),
                }
            }
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CompletionSettings {
    /// JSONL corpus, one document per line.
    pub corpus: Option<PathBuf>,
    /// `{"train": [ids], "validation": [ids], "test": [ids]}`.
    pub splits: Option<PathBuf>,
    /// Exemplar index; built from the training split when absent.
    pub index: Option<PathBuf>,
    pub split: Split,
    pub mask_counts: Vec<usize>,
    pub limit: Option<usize>,
    pub prompt: PromptConfig,
}

impl Default for CompletionSettings {
    fn default() -> Self {
        CompletionSettings {
            corpus: None,
            splits: None,
            index: None,
            split: Split::Test,
            mask_counts: vec![1, 2, 3],
            limit: None,
            prompt: PromptConfig::completion(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GenerationSettings {
    /// PAT pairs as CSV or JSONL.
    pub pat: Option<PathBuf>,
    pub index: Option<PathBuf>,
    pub split: Split,
    /// Seed of the 80/10/10 split for files without a split column.
    pub split_seed: u64,
    pub limit: Option<usize>,
    pub prompt: PromptConfig,
    pub similarity: SimilarityStrategy,
    pub color_space: ColorSpace,
}

impl Default for GenerationSettings {
    fn default() -> Self {
        GenerationSettings {
            pat: None,
            index: None,
            split: Split::Test,
            split_seed: 0,
            limit: None,
            prompt: PromptConfig::generation(),
            similarity: SimilarityStrategy::MinAssignment,
            color_space: ColorSpace::Lab,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ServiceSettings {
    pub bind: String,
    pub port: u16,
    /// Allowed CORS origins; empty allows any.
    pub cors_origins: Vec<String>,
    pub body_limit_bytes: usize,
    pub completion_index: Option<PathBuf>,
    pub generation_index: Option<PathBuf>,
}

impl Default for ServiceSettings {
    fn default() -> Self {
        ServiceSettings {
            bind: "127.0.0.1".into(),
            port: 8080,
            cors_origins: Vec::new(),
            body_limit_bytes: 1 << 20,
            completion_index: None,
            generation_index: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    Train,
    Validation,
    #[default]
    Test,
}

/// One row of an ablation matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AblationArm {
    pub name: String,
    /// Row group, e.g. "Color Representations".
    #[serde(default)]
    pub group: String,
    /// Overrides the provider's model name.
    #[serde(default)]
    pub model: Option<String>,
    pub prompt: PromptConfig,
}

impl AblationArm {
    pub fn task(&self) -> Task {
        self.prompt.task
    }
}

impl AppConfig {
    /// Parses TOML, or JSON when the path ends in `.json`. Relative paths
    /// inside the file are resolved against the file's directory.
    pub fn load(path: impl AsRef<Path>) -> Result<Self, BenchError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| BenchError::io(path, e))?;
        let mut cfg: AppConfig = if path.extension().is_some_and(|e| e == "json") {
            serde_json::from_str(&text).map_err(|e| BenchError::Config(format!("{}: {e}", path.display())))?
        } else {
            toml::from_str(&text).map_err(|e| BenchError::Config(format!("{}: {e}", path.display())))?
        };
        let base = path.parent().unwrap_or(Path::new("."));
        cfg.resolve_paths(base);
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        let fix_opt = |p: &mut Option<PathBuf>| {
            if let Some(p) = p {
                fix(p);
            }
        };
        fix(&mut self.color_dict);
        fix(&mut self.output_dir);
        fix_opt(&mut self.templates_dir);
        fix_opt(&mut self.record);
        fix_opt(&mut self.replay);
        fix_opt(&mut self.llm.mock_fixtures);
        fix_opt(&mut self.completion.corpus);
        fix_opt(&mut self.completion.splits);
        fix_opt(&mut self.completion.index);
        fix_opt(&mut self.generation.pat);
        fix_opt(&mut self.generation.index);
        fix_opt(&mut self.service.completion_index);
        fix_opt(&mut self.service.generation_index);
        if let EmbeddingConfig::Http { cache, .. } = &mut self.embedding {
            fix_opt(cache);
        }
    }

    pub fn validate(&self) -> Result<(), BenchError> {
        self.llm.validate()?;
        if self.parallel == 0 {
            return Err(BenchError::Config("parallel must be at least 1".into()));
        }
        if self.record.is_some() && self.replay.is_some() {
            return Err(BenchError::Config("record and replay are mutually exclusive".into()));
        }
        if let Some(k) = self.completion.mask_counts.iter().find(|k| !(1..=3).contains(*k)) {
            return Err(BenchError::Config(format!("mask count {k} is outside 1..=3")));
        }
        if self.completion.prompt.task != Task::Completion {
            return Err(BenchError::Config(
                "completion.prompt.task must be \"completion\"".into(),
            ));
        }
        if self.generation.prompt.task != Task::Generation {
            return Err(BenchError::Config(
                "generation.prompt.task must be \"generation\"".into(),
            ));
        }
        self.completion.prompt.validate()?;
        self.generation.prompt.validate()?;
        for arm in &self.ablation {
            arm.prompt
                .validate()
                .map_err(|e| BenchError::Config(format!("ablation arm {:?}: {e}", arm.name)))?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn toml_with_arms() {
        let text = r##"
seed = 7
color_dict = "dict.txt"

[llm]
provider = "mock"
mock_fallback = { mode = "fill", value = ["#123456"] }

[completion]
corpus = "c.jsonl"
mask_counts = [1]

[[ablation]]
name = "RGB"
prompt = { task = "completion", representation = "rgb" }
"##;
        let mut cfg: AppConfig = toml::from_str(text).unwrap();
        cfg.resolve_paths(Path::new("/base"));
        cfg.validate().unwrap();
        assert_eq!(cfg.seed, 7);
        assert_eq!(cfg.color_dict, Path::new("/base/dict.txt"));
        assert_eq!(cfg.completion.corpus.as_deref(), Some(Path::new("/base/c.jsonl")));
        assert_eq!(cfg.ablation[0].prompt.representation, crate::Representation::Rgb);
        assert_eq!(cfg.ablation[0].prompt.exemplar_count, 1);
        assert_eq!(cfg.parallel, 4);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(toml::from_str::<AppConfig>("sed = 1").is_err());
    }
}
