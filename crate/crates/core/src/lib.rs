//! Semantic projection of text embeddings onto theory-driven axes, plus the
//! psychometric harness used to evaluate the resulting scores.
//!
//! The usual flow is: load anchors and build [`SemanticAxis`] values, segment
//! raw responses, score them through an [`EmbeddingProvider`], then feed the
//! [`ScoreRecord`]s and clinical totals to the [`evaluation`] tables.

pub mod axes;
pub mod datastore;
pub mod embedding;
pub mod error;
pub mod evaluation;
pub mod pipeline;
pub mod projection;
pub mod psychometrics;
pub mod segmentation;
pub mod sentiment;
pub mod synthetic;
pub mod types;

pub use axes::{build_axis, AnchorKind, AnchorSet, AxisRegistry, SemanticAxis};
pub use datastore::{ClinicalRecord, RunConfig};
pub use embedding::{CachedProvider, EmbeddingCache, EmbeddingProvider, MemoryProvider};
pub use error::{Error, Result, Violation};
pub use evaluation::EvaluationReport;
pub use projection::{project, ScoreRecord};
pub use segmentation::{RawResponse, SegmentedResponse, Segmenter};
pub use sentiment::{SentimentLexicon, SentimentResult};
pub use types::{Construct, ReportRow, Representation, ResponseFormat, Scale, TimePointFilter};
