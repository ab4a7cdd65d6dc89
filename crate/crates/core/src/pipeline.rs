//! One request end to end: exemplar selection, prompt, provider call, reply
//! parsing and corrective re-asks.

use std::sync::Arc;
use std::time::{Duration, Instant};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::codec::ColorCodec;
use crate::color::Color;
use crate::document::{Document, MaskRecord, Palette, SlotRef};
use crate::embedding::Embedder;
use crate::llm::{extract_json, ChatProvider, ChatRequest, LlmError, Message};
use crate::naming::ColorDictionary;
use crate::prompting::{
    derive_query_text, parse_completion_reply, parse_generation_reply, ExemplarPolicy, PromptBuilder, PromptConfig,
    PromptError, ReplyError, TemplateSet,
};
use crate::retrieval::{Exemplar, ExemplarIndex, RetrievalError};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Prompt(#[from] PromptError),
    #[error(transparent)]
    Retrieval(#[from] RetrievalError),
    #[error("exemplar policy {0:?} needs an exemplar index")]
    NoIndex(ExemplarPolicy),
    #[error(transparent)]
    Provider(#[from] LlmError),
    #[error("unusable reply after {attempts} attempt(s): {error}")]
    Reply {
        error: ReplyError,
        raw: String,
        attempts: u32,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Suggestion<T> {
    pub result: T,
    pub exemplar_ids: Vec<String>,
    /// Provider calls made, including re-asks.
    pub attempts: u32,
    pub elapsed: Duration,
}

/// Everything needed to answer requests. Cheap to clone.
#[derive(Clone)]
pub struct Pipeline {
    pub dict: Arc<ColorDictionary>,
    pub embedder: Arc<dyn Embedder>,
    pub provider: Arc<dyn ChatProvider>,
    pub templates: Arc<TemplateSet>,
    pub index: Option<Arc<ExemplarIndex>>,
}

impl Pipeline {
    pub fn codec(&self, cfg: &PromptConfig) -> ColorCodec<'_> {
        ColorCodec::new(cfg.representation, &self.dict, &*self.embedder)
    }

    pub fn select_exemplars(&self, query: &str, cfg: &PromptConfig, seed: u64) -> Result<Vec<Exemplar>, PipelineError> {
        let n = cfg.exemplars_wanted();
        if n == 0 {
            return Ok(Vec::new());
        }
        let index = self.index.as_ref().ok_or(PipelineError::NoIndex(cfg.exemplar_policy))?;
        Ok(match cfg.exemplar_policy {
            ExemplarPolicy::None => Vec::new(),
            ExemplarPolicy::Similarity => index
                .query_top_k(query, n, &*self.embedder)?
                .into_iter()
                .map(|(e, _)| e.clone())
                .collect(),
            ExemplarPolicy::Random if n == 1 => vec![index.sample_random(seed)?.clone()],
            ExemplarPolicy::Random => {
                if index.is_empty() {
                    return Err(RetrievalError::EmptyIndex.into());
                }
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                rand::seq::index::sample(&mut rng, index.len(), n.min(index.len()))
                    .into_iter()
                    .map(|i| index.exemplars()[i].clone())
                    .collect()
            }
        })
    }

    /// Sends `req`, re-asking up to `cfg.repair_attempts` times while
    /// `parse` rejects the reply.
    fn converse<T>(
        &self,
        builder: &PromptBuilder<'_>,
        req: ChatRequest,
        parse: impl Fn(&str) -> Result<T, ReplyError>,
    ) -> Result<(T, u32), PipelineError> {
        let mut messages = req.messages;
        let mut attempts = 0;
        loop {
            attempts += 1;
            let reply = self.provider.complete(&ChatRequest::new(messages.clone()))?.content;
            match parse(&reply) {
                Ok(v) => return Ok((v, attempts)),
                Err(error) if attempts > builder.cfg.repair_attempts => {
                    return Err(PipelineError::Reply {
                        error,
                        raw: reply,
                        attempts,
                    })
                }
                Err(error) => {
                    messages.push(Message::assistant(reply));
                    messages.push(Message::user(builder.repair_message(&error.to_string())?));
                }
            }
        }
    }

    /// Suggests colors for every masked slot of `doc_masked`, in document
    /// order. `oracle` supplies the solved document for echo-style mocks.
    pub fn complete(
        &self,
        doc_masked: &Document,
        cfg: &PromptConfig,
        seed: u64,
        oracle: Option<(&Document, &MaskRecord)>,
    ) -> Result<Suggestion<Vec<Color>>, PipelineError> {
        let started = Instant::now();
        let codec = self.codec(cfg);
        let builder = PromptBuilder::new(cfg, codec, &self.templates);
        let exemplars = self.select_exemplars(&derive_query_text(doc_masked), cfg, seed)?;
        let bundle = builder.completion(doc_masked, &exemplars)?;
        if let Some((solved, record)) = oracle {
            let answer = builder.completion_answer(solved, record)?;
            self.provider.register_oracle(bundle.fingerprint, &answer);
        }
        let positions: Vec<SlotRef> = doc_masked.masked_slots();
        let (colors, attempts) = self.converse(&builder, bundle.request(), |reply| {
            let json = extract_json(reply).map_err(|e| ReplyError::Structure(e.to_string()))?;
            parse_completion_reply(&json, &positions, &codec)
        })?;
        Ok(Suggestion {
            result: colors,
            exemplar_ids: bundle.exemplar_ids,
            attempts,
            elapsed: started.elapsed(),
        })
    }

    /// Generates a five-color palette for `text`.
    pub fn generate(
        &self,
        text: &str,
        cfg: &PromptConfig,
        seed: u64,
        oracle: Option<&[Color]>,
    ) -> Result<Suggestion<Palette>, PipelineError> {
        let started = Instant::now();
        let codec = self.codec(cfg);
        let builder = PromptBuilder::new(cfg, codec, &self.templates);
        let exemplars = self.select_exemplars(text, cfg, seed)?;
        let bundle = builder.generation(text, &exemplars)?;
        if let Some(palette) = oracle {
            let answer = builder.generation_answer(palette)?;
            self.provider.register_oracle(bundle.fingerprint, &answer);
        }
        let (palette, attempts) = self.converse(&builder, bundle.request(), |reply| {
            let json = extract_json(reply).map_err(|e| ReplyError::Structure(e.to_string()))?;
            parse_generation_reply(&json, &codec)
        })?;
        Ok(Suggestion {
            result: palette,
            exemplar_ids: bundle.exemplar_ids,
            attempts,
            elapsed: started.elapsed(),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::embedding::HashedTrigramEmbedder;
    use crate::llm::{MockMode, MockProvider};

    const DOC: &str = r##"{"id":"d1","title":"Autumn fair","category":"event","keywords":["autumn"],
        "layout":{"width":1.0,"height":1.0},
        "elements":[
          {"id":"bg","type":"colored_background","layout":{"left":0,"top":0,"width":1,"height":1},"opacity":1,"color_palette":["#f4a460"]},
          {"id":"t","type":"text","layout":{"left":0.1,"top":0.1,"width":0.5,"height":0.1},"opacity":1,"text":"Fair","color_palette":["#8b4513","#ffffff"]}
        ]}"##;

    fn pipeline(mode: MockMode, with_index: bool) -> Pipeline {
        let embedder: Arc<dyn Embedder> = Arc::new(HashedTrigramEmbedder::new());
        let index = with_index.then(|| {
            let d = Document::from_json_str(DOC).unwrap();
            let ex = Exemplar {
                id: "x".into(),
                query_text: derive_query_text(&d),
                payload: d.to_json_string(),
            };
            Arc::new(ExemplarIndex::build(vec![ex], &*embedder).unwrap())
        });
        Pipeline {
            dict: Arc::new(ColorDictionary::from_entries([("white", Color::WHITE)])),
            embedder,
            provider: Arc::new(MockProvider::new("mock", mode)),
            templates: Arc::new(TemplateSet::builtin()),
            index,
        }
    }

    #[test]
    fn echo_returns_ground_truth() {
        let p = pipeline(MockMode::Echo, true);
        let doc = Document::from_json_str(DOC).unwrap();
        let (masked, record) = doc.mask(2, 5).unwrap();
        let out = p
            .complete(&masked, &PromptConfig::completion(), 0, Some((&doc, &record)))
            .unwrap();
        assert_eq!(out.result, record.ground_truth());
        assert_eq!(out.exemplar_ids, ["x"]);
        assert_eq!(out.attempts, 1);
    }

    #[test]
    fn bad_replies_are_retried_then_fail() {
        let p = pipeline(MockMode::Default("no idea".into()), false);
        let cfg = PromptConfig {
            exemplar_policy: ExemplarPolicy::None,
            ..PromptConfig::completion()
        };
        let doc = Document::from_json_str(DOC).unwrap();
        let (masked, _) = doc.mask(1, 5).unwrap();
        match p.complete(&masked, &cfg, 0, None) {
            Err(PipelineError::Reply { attempts, raw, .. }) => {
                assert_eq!(attempts, 3);
                assert_eq!(raw, "no idea");
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn similarity_policy_needs_an_index() {
        let p = pipeline(MockMode::Echo, false);
        let r = p.generate("green grass", &PromptConfig::generation(), 0, None);
        assert!(matches!(r, Err(PipelineError::NoIndex(ExemplarPolicy::Similarity))));
    }

    #[test]
    fn fill_mock_generates_five() {
        let fixed: Vec<String> = ["#000000", "#404040", "#808080", "#c0c0c0", "#ffffff"]
            .iter()
            .map(|s| s.to_string())
            .collect();
        let p = pipeline(MockMode::Fill(fixed), false);
        let cfg = PromptConfig {
            exemplar_policy: ExemplarPolicy::None,
            representation: crate::color::Representation::Hexcode,
            ..PromptConfig::generation()
        };
        let out = p.generate("green grass", &cfg, 0, None).unwrap();
        assert_eq!(out.result.len(), 5);
    }
}
