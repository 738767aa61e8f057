//! Unsupervised acoustic unit discovery: syllable-like segmentation by group-delay processing
//! of the short-time energy, DTW similarity and mutual-kNN graph clustering of the segments,
//! HMM acoustic units refined by self-training, plus GMM-UBM gender identification and
//! evaluation of the resulting discrete encoding.

pub mod audio;
pub mod cluster;
pub mod dtw;
pub mod error;
pub mod features;
pub mod gender;
pub mod hmm;
pub mod matrix;
pub mod metrics;
pub mod mixture;
pub mod pipeline;
pub mod segment;
pub mod synthetic;

pub use audio::AudioBuffer;
pub use cluster::{ClusterAssignment, ClusterConfig, SimilarityMatrix};
pub use dtw::DtwConfig;
pub use error::{AudError, Result};
pub use features::{FeatureKind, FeatureSequence, FrameConfig, MfccConfig};
pub use gender::{Gender, GenderDecision, GenderModelSet};
pub use hmm::{AuInventory, Grammar, SelfTrainConfig, Transcription};
pub use matrix::Matrix;
pub use metrics::BitrateReport;
pub use mixture::GaussianMixture;
pub use pipeline::{CorpusManifest, PipelineConfig};
pub use segment::{GroupDelayConfig, Segment, SegmentKind};

/// Toolkit version, as reported by the command-line tool.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
