//! Evaluation of the discrete encoding and of the intermediate stages.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::cluster::ClusterAssignment;
use crate::error::{AudError, Result};
use crate::hmm::{Transcription, SILENCE};
use crate::segment::Segment;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BitrateReport {
    pub n_symbols: usize,
    pub total_duration: f64,
    pub entropy_bits: f64,
    pub bitrate: f64,
    pub unigram_distribution: BTreeMap<String, f64>,
}

/// `(N / D) · H`, with `H` the unigram entropy in bits of all symbols in `symbols`.
pub fn bitrate_of_symbols<'a>(symbols: impl IntoIterator<Item = &'a str>, total_duration: f64) -> Result<BitrateReport> {
    if !(total_duration > 0.0) || !total_duration.is_finite() {
        return Err(AudError::Config(format!("duration must be positive, got {total_duration}")));
    }
    let mut counts: BTreeMap<String, usize> = BTreeMap::new();
    let mut n = 0usize;
    for s in symbols {
        *counts.entry(s.to_string()).or_default() += 1;
        n += 1;
    }
    if n == 0 {
        return Err(AudError::EmptyInput("no symbols to measure".into()));
    }
    let unigram: BTreeMap<String, f64> = counts.into_iter().map(|(s, c)| (s, c as f64 / n as f64)).collect();
    let entropy = unigram.values().map(|p| -p * p.log2()).sum::<f64>().max(0.0);
    Ok(BitrateReport {
        n_symbols: n,
        total_duration,
        entropy_bits: entropy,
        bitrate: n as f64 / total_duration * entropy,
        unigram_distribution: unigram,
    })
}

/// Bitrate of a transcribed corpus; with `exclude_silence` the silence symbol is dropped
/// before counting.
pub fn bitrate(transcriptions: &[Transcription], total_duration: f64, exclude_silence: bool) -> Result<BitrateReport> {
    let syms = transcriptions
        .iter()
        .flat_map(|t| &t.symbols)
        .map(String::as_str)
        .filter(|s| !(exclude_silence && *s == SILENCE));
    bitrate_of_symbols(syms, total_duration)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundaryScores {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub matched: usize,
    pub hypothesized: usize,
    pub reference: usize,
}

/// Internal boundaries of a segmentation: all segment starts and ends except the very first
/// start and the very last end, with shared endpoints counted once.
pub fn internal_boundaries(segments: &[Segment]) -> Vec<f64> {
    let n = segments.len();
    let mut out: Vec<f64> = segments
        .iter()
        .enumerate()
        .flat_map(|(i, s)| [(i > 0).then_some(s.start), (i + 1 < n).then_some(s.end)])
        .flatten()
        .collect();
    out.sort_by(f64::total_cmp);
    out.dedup_by(|a, b| (*a - *b).abs() < 1e-9);
    out
}

/// Greedy one-to-one matching of boundary times: pairs are taken closest first, each within
/// `tolerance_s`. Empty sets score 1 for precision or recall respectively.
pub fn boundary_scores(hyp: &[f64], reference: &[f64], tolerance_s: f64) -> BoundaryScores {
    let mut pairs: Vec<(f64, usize, usize)> = Vec::new();
    for (i, h) in hyp.iter().enumerate() {
        for (j, r) in reference.iter().enumerate() {
            let d = (h - r).abs();
            if d <= tolerance_s + 1e-12 {
                pairs.push((d, i, j));
            }
        }
    }
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
    let mut used_h = vec![false; hyp.len()];
    let mut used_r = vec![false; reference.len()];
    let mut matched = 0;
    for (_, i, j) in pairs {
        if !used_h[i] && !used_r[j] {
            used_h[i] = true;
            used_r[j] = true;
            matched += 1;
        }
    }
    BoundaryScores::from_counts(matched, hyp.len(), reference.len())
}

impl BoundaryScores {
    pub fn from_counts(matched: usize, hypothesized: usize, reference: usize) -> Self {
        let ratio = |m: usize, n: usize| if n == 0 { 1.0 } else { m as f64 / n as f64 };
        let precision = ratio(matched, hypothesized);
        let recall = ratio(matched, reference);
        let f1 = if precision + recall > 0.0 {
            2.0 * precision * recall / (precision + recall)
        } else {
            0.0
        };
        Self {
            precision,
            recall,
            f1,
            matched,
            hypothesized,
            reference,
        }
    }

    /// Corpus-level scores from summed per-utterance counts.
    pub fn pooled<'a>(scores: impl IntoIterator<Item = &'a BoundaryScores>) -> Self {
        let (m, h, r) = scores
            .into_iter()
            .fold((0, 0, 0), |(m, h, r), s| (m + s.matched, h + s.hypothesized, r + s.reference));
        Self::from_counts(m, h, r)
    }
}

/// Boundary precision, recall and F1 between two segmentations of one utterance.
pub fn boundary_metrics(hypothesis: &[Segment], reference: &[Segment], tolerance_ms: f64) -> BoundaryScores {
    boundary_scores(
        &internal_boundaries(hypothesis),
        &internal_boundaries(reference),
        tolerance_ms / 1000.0,
    )
}

/// Fraction of assigned segments that carry their cluster's majority truth label.
pub fn cluster_purity<T: Ord>(assignment: &ClusterAssignment, truth: &[T]) -> Result<f64> {
    if truth.len() != assignment.labels.len() {
        return Err(AudError::DimensionMismatch {
            expected: assignment.labels.len(),
            got: truth.len(),
        });
    }
    let mut tables: BTreeMap<usize, BTreeMap<&T, usize>> = BTreeMap::new();
    for (label, t) in assignment.labels.iter().zip(truth) {
        if let Some(c) = label {
            *tables.entry(*c).or_default().entry(t).or_default() += 1;
        }
    }
    let total: usize = tables.values().flat_map(|m| m.values()).sum();
    if total == 0 {
        return Err(AudError::EmptyInput("no assigned segments".into()));
    }
    let majority: usize = tables.values().map(|m| m.values().copied().max().unwrap_or(0)).sum();
    Ok(majority as f64 / total as f64)
}

/// Fraction of frames whose symbol is the same in both transcriptions of a corpus.
pub fn label_stability(a: &[Transcription], b: &[Transcription]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(AudError::DimensionMismatch {
            expected: a.len(),
            got: b.len(),
        });
    }
    let mut same = 0usize;
    let mut total = 0usize;
    for (x, y) in a.iter().zip(b) {
        if x.utterance_id != y.utterance_id {
            return Err(AudError::Format(format!(
                "utterance {} paired with {}",
                x.utterance_id, y.utterance_id
            )));
        }
        let (Some(lx), Some(ly)) = (x.frame_labels(), y.frame_labels()) else {
            return Err(AudError::Missing(format!("alignments for {}", x.utterance_id)));
        };
        if lx.len() != ly.len() {
            return Err(AudError::Format(format!(
                "{}: {} vs {} frames",
                x.utterance_id,
                lx.len(),
                ly.len()
            )));
        }
        same += lx.iter().zip(&ly).filter(|(p, q)| p == q).count();
        total += lx.len();
    }
    if total == 0 {
        return Err(AudError::EmptyInput("no frames to compare".into()));
    }
    Ok(same as f64 / total as f64)
}
