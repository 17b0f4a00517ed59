//! Grapheme-level Hangul OCR toolkit.
//!
//! Classifying whole Hangul syllables means 11,172 classes; decomposing each
//! syllable into its (initial, vowel, final) graphemes reduces that to 52.
//! This crate provides the pieces for the whole experiment: the exact
//! syllable/grapheme codec, a small reverse-mode autodiff tensor engine, the
//! encoder/decoder recognizer built on it, a deterministic procedural glyph
//! corpus, and the accuracy/imbalance metrics.

pub mod codec;
pub mod corpus;
pub mod kv;
pub mod metrics;
pub mod model;
pub mod pgm;
pub mod tensor;

pub use codec::{
    CodecError, GraphemeId, GraphemeSequence, SeqClass, SyllableTriple, CLASSES_WITH_PAD,
    GRAPHEME_CLASSES, PAD_CLASS, SYLLABLE_BASE, SYLLABLE_COUNT,
};
pub use corpus::{CorpusError, CorpusManifest, CorpusSpec, GlyphAtlas, ManifestEntry, Split};
pub use metrics::{EvalReport, FrequencyHistogram, HistUnit, MetricsError};
pub use model::{DecodedText, ModelError, Recognizer, RecognizerConfig, RecognizerMode};
pub use pgm::GrayImage;
pub use tensor::{
    AdamConfig, AdamState, Dtype, Graph, NodeId, Rng, Scalar, Tensor, TensorError,
};
