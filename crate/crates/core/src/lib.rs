//! Color palette completion and generation for structured design documents,
//! driven by a chat LLM with retrieved in-context exemplars.

pub mod bench;
pub mod codec;
pub mod color;
pub mod document;
pub mod embedding;
pub mod extract;
pub mod llm;
pub mod metrics;
pub mod naming;
pub mod pipeline;
pub mod prompting;
pub mod retrieval;

pub use codec::{ColorCodec, MASK_TOKEN};
pub use color::{BinIndex, Color, LabColor, Representation, WordHexMode};
pub use document::{Document, Element, ElementKind, MaskRecord, Palette, PaletteSlot, SlotRef};
pub use embedding::{Embedder, HashedTrigramEmbedder};
pub use naming::ColorDictionary;
pub use retrieval::{Exemplar, ExemplarIndex};
