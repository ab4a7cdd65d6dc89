use std::hash::Hasher;
use std::path::Path;
use std::sync::Arc;

use fnv::FnvHasher;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use tracing::info;

use super::ingest::{ingest_completion_corpus, ingest_pat, PatPair};
use super::{AblationArm, AppConfig, BenchError};
use crate::color::Color;
use crate::document::Document;
use crate::embedding::Embedder;
use crate::llm::{build_provider, ChatProvider, RecordingProvider, ReplayProvider};
use crate::metrics::{CaseRecord, CaseStatus, CompletionMetrics, GenerationMetrics, MetricsReport, RunMetadata, Stat};
use crate::naming::ColorDictionary;
use crate::pipeline::{Pipeline, PipelineError};
use crate::prompting::{derive_query_text, GenerationPayload, PromptConfig, Task, TemplateSet};
use crate::retrieval::{Exemplar, ExemplarIndex};

/// Seed for one case. Depends only on the global seed, the item id and the
/// mask count, so the degree of parallelism never changes masking.
pub fn case_seed(global: u64, id: &str, k: usize) -> u64 {
    let mut h = FnvHasher::default();
    h.write(&global.to_le_bytes());
    h.write(id.as_bytes());
    h.write(&[0]);
    h.write(&(k as u64).to_le_bytes());
    h.finish()
}

pub fn completion_exemplars(docs: &[Document]) -> Vec<Exemplar> {
    docs.iter()
        .map(|d| Exemplar {
            id: d.id.clone(),
            query_text: derive_query_text(d),
            payload: d.to_json_string(),
        })
        .collect()
}

pub fn generation_exemplars(pairs: &[PatPair]) -> Vec<Exemplar> {
    pairs
        .iter()
        .map(|p| Exemplar {
            id: p.id.clone(),
            query_text: p.text.clone(),
            payload: GenerationPayload {
                text: p.text.clone(),
                palette: p.palette.clone(),
            }
            .to_json(),
        })
        .collect()
}

/// Loads `path` if it exists, otherwise builds from `corpus` and saves there.
pub fn load_or_build_index(
    path: Option<&Path>,
    corpus: impl FnOnce() -> Vec<Exemplar>,
    embedder: &dyn Embedder,
) -> Result<ExemplarIndex, BenchError> {
    if let Some(p) = path.filter(|p| p.exists()) {
        return Ok(ExemplarIndex::load(p)?);
    }
    let index = ExemplarIndex::build(corpus(), embedder)?;
    if let Some(p) = path {
        index.save(p)?;
    }
    Ok(index)
}

/// Shared resources for benchmark runs.
pub struct Harness {
    pub config: AppConfig,
    pub dict: Arc<ColorDictionary>,
    pub embedder: Arc<dyn Embedder>,
    pub templates: Arc<TemplateSet>,
}

impl Harness {
    pub fn new(config: AppConfig) -> Result<Self, BenchError> {
        config.validate()?;
        let dict = Arc::new(ColorDictionary::load_path(&config.color_dict)?);
        let embedder = config.embedding.build()?;
        let templates = Arc::new(match &config.templates_dir {
            Some(dir) => TemplateSet::with_overrides(dir)?,
            None => TemplateSet::builtin(),
        });
        Ok(Harness {
            config,
            dict,
            embedder,
            templates,
        })
    }

    /// The configured provider, wrapped for recording or replaced by replay.
    pub fn provider(&self, model: Option<&str>) -> Result<Arc<dyn ChatProvider>, BenchError> {
        if let Some(path) = &self.config.replay {
            return Ok(Arc::new(ReplayProvider::load(path)?));
        }
        let mut llm = self.config.llm.clone();
        if let Some(m) = model {
            llm.model = m.to_string();
        }
        let provider = build_provider(&llm)?;
        Ok(match &self.config.record {
            Some(path) => Arc::new(RecordingProvider::new(provider, path)?),
            None => provider,
        })
    }

    fn pipeline(&self, provider: Arc<dyn ChatProvider>, index: Option<Arc<ExemplarIndex>>) -> Pipeline {
        Pipeline {
            dict: self.dict.clone(),
            embedder: self.embedder.clone(),
            provider,
            templates: self.templates.clone(),
            index,
        }
    }

    fn pool(&self) -> Result<rayon::ThreadPool, BenchError> {
        rayon::ThreadPoolBuilder::new()
            .num_threads(self.config.parallel)
            .build()
            .map_err(|e| BenchError::Config(e.to_string()))
    }

    fn metadata(&self, label: &str, model: &str, prompt: &PromptConfig) -> RunMetadata {
        RunMetadata {
            label: label.to_string(),
            model: model.to_string(),
            prompt: prompt.clone(),
            template_hash: self.templates.hash(),
            embedder: self.embedder.name().to_string(),
            seed: self.config.seed,
            temperature: self.config.llm.temperature,
            similarity_strategy: self.config.generation.similarity,
            color_space: self.config.generation.color_space,
            decisions: vec![
                "distribution: entropy in nats over 16x16x16 RGB bins".into(),
                "similarity: mean matched distance under the cheapest assignment; chamfer reported alongside".into(),
                "unusable replies are re-asked up to repair_attempts times, then scored incorrect".into(),
                "each test document is masked once per mask count".into(),
            ],
        }
    }

    pub fn load_completion(&self) -> Result<(Vec<Document>, Arc<ExemplarIndex>), BenchError> {
        let s = &self.config.completion;
        let corpus = s
            .corpus
            .as_deref()
            .ok_or_else(|| BenchError::Config("completion.corpus is not set".into()))?;
        let splits = s
            .splits
            .as_deref()
            .ok_or_else(|| BenchError::Config("completion.splits is not set".into()))?;
        let data = ingest_completion_corpus(corpus, splits)?;
        let index = load_or_build_index(
            s.index.as_deref(),
            || completion_exemplars(&data.train),
            &*self.embedder,
        )?;
        let mut cases = data.get(s.split).to_vec();
        if let Some(n) = s.limit {
            cases.truncate(n);
        }
        Ok((cases, Arc::new(index)))
    }

    pub fn load_generation(&self) -> Result<(Vec<PatPair>, Arc<ExemplarIndex>), BenchError> {
        let s = &self.config.generation;
        let pat = s
            .pat
            .as_deref()
            .ok_or_else(|| BenchError::Config("generation.pat is not set".into()))?;
        let data = ingest_pat(pat, s.split_seed)?;
        let index = load_or_build_index(
            s.index.as_deref(),
            || generation_exemplars(&data.train),
            &*self.embedder,
        )?;
        let mut cases = data.get(s.split).to_vec();
        if let Some(n) = s.limit {
            cases.truncate(n);
        }
        Ok((cases, Arc::new(index)))
    }

    pub fn eval_completion(&self) -> Result<MetricsReport, BenchError> {
        let (docs, index) = self.load_completion()?;
        let provider = self.provider(None)?;
        let prompt = self.config.completion.prompt.clone();
        let label = provider.model().to_string();
        self.run_completion(&label, &docs, index, provider, &prompt)
    }

    pub fn eval_generation(&self) -> Result<MetricsReport, BenchError> {
        let (pairs, index) = self.load_generation()?;
        let provider = self.provider(None)?;
        let prompt = self.config.generation.prompt.clone();
        let label = provider.model().to_string();
        self.run_generation(&label, &pairs, index, provider, &prompt)
    }

    /// Masks every document once per configured mask count and scores the
    /// suggestions.
    pub fn run_completion(
        &self,
        label: &str,
        docs: &[Document],
        index: Arc<ExemplarIndex>,
        provider: Arc<dyn ChatProvider>,
        prompt: &PromptConfig,
    ) -> Result<MetricsReport, BenchError> {
        let model = provider.model().to_string();
        let pipeline = self.pipeline(provider, Some(index));
        let seed = self.config.seed;
        let jobs: Vec<(&Document, usize)> = docs
            .iter()
            .flat_map(|d| {
                let filled = d.filled_slots().len();
                self.config
                    .completion
                    .mask_counts
                    .iter()
                    .filter(move |&&k| k <= filled)
                    .map(move |&k| (d, k))
            })
            .collect();
        info!(label, cases = jobs.len(), "running completion");

        let cases: Vec<CaseRecord> = self.pool()?.install(|| {
            jobs.par_iter()
                .map(|&(doc, k)| {
                    let case_seed = case_seed(seed, &doc.id, k);
                    let (masked, record) = doc.mask(k, case_seed).expect("mask count checked against filled slots");
                    let kinds = record.slots.iter().filter_map(|s| doc.kind_of(&s.element_id)).collect();
                    let outcome = pipeline.complete(&masked, prompt, case_seed, Some((doc, &record)));
                    let mut case = CaseRecord {
                        id: doc.id.clone(),
                        k: Some(k),
                        kinds,
                        text: None,
                        exemplar_ids: Vec::new(),
                        predicted: Vec::new(),
                        ground_truth: record.ground_truth(),
                        status: CaseStatus::Ok,
                        attempts: 0,
                    };
                    apply_outcome(&mut case, outcome.map(|s| (s.result, s.exemplar_ids, s.attempts)))?;
                    Ok(case)
                })
                .collect::<Result<Vec<_>, BenchError>>()
        })?;

        Ok(MetricsReport {
            metadata: self.metadata(label, &model, prompt),
            incomplete: cases.iter().any(|c| matches!(c.status, CaseStatus::ProviderFailure(_))),
            completion: Some(CompletionMetrics::from_cases(&cases)),
            generation: None,
            cases,
        })
    }

    pub fn run_generation(
        &self,
        label: &str,
        pairs: &[PatPair],
        index: Arc<ExemplarIndex>,
        provider: Arc<dyn ChatProvider>,
        prompt: &PromptConfig,
    ) -> Result<MetricsReport, BenchError> {
        let model = provider.model().to_string();
        let pipeline = self.pipeline(provider, Some(index));
        let seed = self.config.seed;
        info!(label, cases = pairs.len(), "running generation");

        let cases: Vec<CaseRecord> = self.pool()?.install(|| {
            pairs
                .par_iter()
                .map(|pair| {
                    let case_seed = case_seed(seed, &pair.id, 0);
                    let outcome = pipeline.generate(&pair.text, prompt, case_seed, Some(&pair.palette));
                    let mut case = CaseRecord {
                        id: pair.id.clone(),
                        k: None,
                        kinds: Vec::new(),
                        text: Some(pair.text.clone()),
                        exemplar_ids: Vec::new(),
                        predicted: Vec::new(),
                        ground_truth: pair.palette.clone(),
                        status: CaseStatus::Ok,
                        attempts: 0,
                    };
                    apply_outcome(
                        &mut case,
                        outcome.map(|s| (s.result.colors().unwrap_or_default(), s.exemplar_ids, s.attempts)),
                    )?;
                    Ok(case)
                })
                .collect::<Result<Vec<_>, BenchError>>()
        })?;

        let space = self.config.generation.color_space;
        Ok(MetricsReport {
            metadata: self.metadata(label, &model, prompt),
            incomplete: cases.iter().any(|c| matches!(c.status, CaseStatus::ProviderFailure(_))),
            completion: None,
            generation: Some(GenerationMetrics::from_cases(&cases, space)),
            cases,
        })
    }

    /// Runs every configured arm against the same data.
    pub fn run_ablation(&self) -> Result<AblationReport, BenchError> {
        let arms = &self.config.ablation;
        if arms.is_empty() {
            return Err(BenchError::Config("no ablation arms configured".into()));
        }
        let completion = if arms.iter().any(|a| a.task() == Task::Completion) {
            Some(self.load_completion()?)
        } else {
            None
        };
        let generation = if arms.iter().any(|a| a.task() == Task::Generation) {
            Some(self.load_generation()?)
        } else {
            None
        };
        let mut rows = Vec::new();
        let mut reports = Vec::new();
        for arm in arms {
            let provider = self.provider(arm.model.as_deref())?;
            let report = match arm.task() {
                Task::Completion => {
                    let (docs, index) = completion.as_ref().expect("loaded above");
                    self.run_completion(&arm.name, docs, index.clone(), provider, &arm.prompt)?
                }
                Task::Generation => {
                    let (pairs, index) = generation.as_ref().expect("loaded above");
                    self.run_generation(&arm.name, pairs, index.clone(), provider, &arm.prompt)?
                }
            };
            rows.push(AblationRow::new(arm, &report));
            reports.push(report);
        }
        Ok(AblationReport { rows, reports })
    }
}

/// Records provider and reply failures on the case. Anything else is a
/// configuration problem and aborts the run.
fn apply_outcome(
    case: &mut CaseRecord,
    outcome: Result<(Vec<Color>, Vec<String>, u32), PipelineError>,
) -> Result<(), BenchError> {
    match outcome {
        Ok((colors, ids, attempts)) => {
            case.predicted = colors;
            case.exemplar_ids = ids;
            case.attempts = attempts;
        }
        Err(PipelineError::Reply { error, attempts, .. }) => {
            case.status = CaseStatus::ParseFailure(error.to_string());
            case.attempts = attempts;
        }
        Err(PipelineError::Provider(e)) if e.is_provider_failure() => {
            case.status = CaseStatus::ProviderFailure(e.to_string());
        }
        Err(other) => {
            return Err(BenchError::Case {
                id: case.id.clone(),
                source: other,
            })
        }
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    pub arm: String,
    pub group: String,
    pub task: Task,
    pub model: String,
    pub prompt: PromptConfig,
    /// Accuracy for 1, 2 and 3 masked colors.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub accuracy: Vec<Option<f64>>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub distribution: Vec<Option<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub similarity: Option<Stat>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub diversity: Option<Stat>,
    pub incomplete: bool,
}

impl AblationRow {
    pub fn new(arm: &AblationArm, report: &MetricsReport) -> Self {
        let strategy = report.metadata.similarity_strategy;
        let by_k = |f: fn(&crate::metrics::MaskCountMetrics) -> Option<f64>| -> Vec<Option<f64>> {
            let Some(c) = &report.completion else { return Vec::new() };
            (1..=3).map(|k| c.by_k.iter().find(|m| m.k == k).and_then(f)).collect()
        };
        AblationRow {
            arm: arm.name.clone(),
            group: arm.group.clone(),
            task: arm.task(),
            model: report.metadata.model.clone(),
            prompt: arm.prompt.clone(),
            accuracy: by_k(|m| Some(m.accuracy)),
            distribution: by_k(|m| m.distribution),
            similarity: report.generation.as_ref().and_then(|g| g.similarity_for(strategy)),
            diversity: report.generation.as_ref().and_then(|g| g.diversity),
            incomplete: report.incomplete,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationReport {
    pub rows: Vec<AblationRow>,
    pub reports: Vec<MetricsReport>,
}
