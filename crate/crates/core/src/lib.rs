//! Extractive-and-abstractive code summarization.
//!
//! The pipeline labels important statements of a code snippet with a greedy
//! ROUGE-L oracle, trains an [`extractor`] to predict those labels, and
//! trains an [`abstracter`] that encodes the predicted statements and the
//! whole snippet separately, concatenates the two encodings and decodes a
//! natural-language summary. [`metrics`] scores the output.

pub mod abstracter;
pub mod checkpoint;
pub mod config;
pub mod corpus;
pub mod encoder;
pub mod emit;
pub mod error;
pub mod extractor;
pub mod metrics;
pub mod numcore;
pub mod oracle;
pub mod segmenter;
pub mod train;

pub use abstracter::{generate_summary, AbstracterModel, DecodeResult, Summarizer};
pub use checkpoint::{Checkpoint, ModelKind};
pub use config::{AbstracterConfig, ExtractorConfig, FusionOrder, RunConfig, TrainConfig};
pub use corpus::{RawPair, TokenSequence, Vocabulary};
pub use extractor::{predict_important, ExtractorModel, Selection};
pub use metrics::{MetricReport, SignificanceResult};
pub use error::{Error, Result};
pub use segmenter::{Language, SegmentedSnippet, Statement};
