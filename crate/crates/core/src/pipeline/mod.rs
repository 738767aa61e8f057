//! Corpus-level orchestration: manifests, configuration, the staged discovery run with
//! checksum-based resume, gender partitioning and exemplar resynthesis.

mod config;
mod manifest;
mod resynth;
mod run;

pub use config::{EvalConfig, PipelineConfig, SegmentationConfig};
pub use manifest::{partition_by_gender, CorpusManifest, ManifestEntry};
pub use resynth::{build_exemplars, resynthesize_exemplar, ExemplarStore, CROSSFADE_MS};
pub use run::{
    compute_features, extract_corpus, load_assignment, load_features, load_segments, read_feature_index, read_report, run_pipeline,
    segment_corpus, segment_features, transcribe_corpus, RunLayout, RunSummary, StageLog, StageOutcome, UtteranceInfo,
    STAGES,
};
