//! Collective symptom timelines from forum posts: ingest, day annotation,
//! block-model topics, lexicon sentiment, per-day series and their joint
//! correlation structure.

pub mod annotate;
pub mod artifacts;
pub mod correlate;
pub mod hsbm;
pub mod ingest;
pub mod metrics;
pub mod pipeline;
pub mod sentiment;
pub mod series;
pub mod text;

pub use annotate::{annotate_corpus, AnnotationReport, DaySegment, PostFormat, SegmentFormat};
pub use correlate::{ClusterTree, CorrelationMatrix, LabelKind, Linkage, MdsEmbedding};
pub use hsbm::{BipartiteGraph, BlockState, InferConfig, LevelChoice, TopicModel};
pub use ingest::{IngestConfig, RawPost, Source};
pub use pipeline::{run_pipeline, PipelineConfig, PipelineError, RunManifest, Stage};
pub use sentiment::{Denominator, Emotion, EmotionCounts, SentimentLexicon};
pub use series::{DailySeries, LoessConfig, SmoothedCurve, Weighting};
pub use text::{BagOfWords, Corpus, Stoplist, Vocabulary};
