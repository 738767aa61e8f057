use log::info;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{AudError, Result};
use crate::features::FeatureSequence;

use super::decode::{transcribe_prepared, Grammar};
use super::train::{train_pairs, TrainOptions, TrainStats};
use super::{AuInventory, Transcription};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    /// Isolated syllable segments, decoded against cluster triplets.
    Stage1Syllables,
    /// Whole utterances, decoded with the free unit loop.
    Stage2Continuous,
}

impl Stage {
    pub fn grammar(self) -> Grammar {
        match self {
            Stage::Stage1Syllables => Grammar::ClusterTriplet,
            Stage::Stage2Continuous => Grammar::FreeLoop,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SelfTrainConfig {
    pub max_iters: usize,
    pub label_change_tol: f64,
    /// Target mixture count for each training pass; the last entry repeats.
    pub mixture_schedule: Vec<usize>,
}

impl Default for SelfTrainConfig {
    fn default() -> Self {
        Self {
            max_iters: 10,
            label_change_tol: 0.01,
            mixture_schedule: vec![1, 1, 2, 2, 4, 4, 8],
        }
    }
}

impl SelfTrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_iters == 0 {
            return Err(AudError::Config("max_iters must be at least 1".into()));
        }
        if !(0.0..1.0).contains(&self.label_change_tol) {
            return Err(AudError::Config("label_change_tol must lie in [0, 1)".into()));
        }
        if self.mixture_schedule.contains(&0) {
            return Err(AudError::Config("mixture counts must be positive".into()));
        }
        Ok(())
    }

    fn mixture_target(&self, pass: usize) -> Option<usize> {
        self.mixture_schedule
            .get(pass)
            .or(self.mixture_schedule.last())
            .copied()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    LabelsStable,
    MaxIters,
    Oscillation,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationStats {
    pub iteration: usize,
    /// Total decoding log-likelihood of this iteration's transcriptions.
    pub log_likelihood: f64,
    /// Fraction of frames whose label differs from the previous iteration (1 at the start).
    pub change_fraction: f64,
    /// Present when a training pass followed this transcription.
    pub train: Option<TrainStats>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceReport {
    pub stage: Stage,
    pub iterations: Vec<IterationStats>,
    pub stop: StopReason,
    pub converged: bool,
    /// Number of training passes run.
    pub passes: usize,
}

impl ConvergenceReport {
    pub fn final_change(&self) -> f64 {
        self.iterations.last().map_or(1.0, |i| i.change_fraction)
    }
}

fn transcribe_all(inv: &AuInventory, corpus: &[(String, FeatureSequence)], grammar: Grammar) -> Result<Vec<Transcription>> {
    let prepared = inv.prepare();
    corpus
        .par_iter()
        .map(|(id, f)| transcribe_prepared(inv, &prepared, f, grammar, id))
        .collect()
}

fn change_fraction(prev: &[Transcription], cur: &[Transcription]) -> f64 {
    let mut changed = 0usize;
    let mut total = 0usize;
    for (a, b) in prev.iter().zip(cur) {
        let (Some(la), Some(lb)) = (a.frame_labels(), b.frame_labels()) else {
            continue;
        };
        total += la.len().max(lb.len());
        changed += la.iter().zip(&lb).filter(|(x, y)| x != y).count() + la.len().abs_diff(lb.len());
    }
    if total == 0 {
        0.0
    } else {
        changed as f64 / total as f64
    }
}

/// Alternates transcription and Viterbi retraining until frame labels settle.
///
/// Iteration `i` transcribes the corpus with the current models and compares frame labels
/// against iteration `i - 1`. It stops when fewer than `label_change_tol` of the frames
/// changed, when the change fraction has failed to decrease three times running, or after
/// `max_iters` training passes. The returned transcriptions come from the returned models.
pub fn self_train(
    inventory: &AuInventory,
    corpus: &[(String, FeatureSequence)],
    stage: Stage,
    cfg: &SelfTrainConfig,
) -> Result<(AuInventory, Vec<Transcription>, ConvergenceReport)> {
    cfg.validate()?;
    if corpus.is_empty() {
        return Err(AudError::EmptyInput("self-training corpus is empty".into()));
    }
    let grammar = stage.grammar();
    let mut inv = inventory.clone();
    let mut iterations: Vec<IterationStats> = Vec::new();
    let mut prev: Option<Vec<Transcription>> = None;
    let mut rising = 0;
    loop {
        let i = iterations.len();
        let trans = transcribe_all(&inv, corpus, grammar)?;
        let change = prev.as_ref().map_or(1.0, |p| change_fraction(p, &trans));
        let ll = trans.iter().map(|t| t.log_likelihood).sum();
        info!("{stage:?} iteration {i}: log-likelihood {ll:.3}, label change {change:.4}");
        if let Some(last) = iterations.last() {
            rising = if change >= last.change_fraction { rising + 1 } else { 0 };
        }
        iterations.push(IterationStats {
            iteration: i,
            log_likelihood: ll,
            change_fraction: change,
            train: None,
        });
        let stop = if prev.is_some() && change < cfg.label_change_tol {
            Some(StopReason::LabelsStable)
        } else if rising >= 3 {
            Some(StopReason::Oscillation)
        } else if i == cfg.max_iters {
            Some(StopReason::MaxIters)
        } else {
            None
        };
        if let Some(stop) = stop {
            let report = ConvergenceReport {
                stage,
                passes: i,
                converged: stop == StopReason::LabelsStable,
                iterations,
                stop,
            };
            return Ok((inv, trans, report));
        }
        let opts = TrainOptions {
            mixture_target: cfg.mixture_target(i),
        };
        let data = corpus.iter().zip(&trans).map(|((_, f), t)| (f, t.symbols.as_slice()));
        let (next, stats) = train_pairs(&inv, data, &opts)?;
        iterations.last_mut().unwrap().train = Some(stats);
        inv = next;
        prev = Some(trans);
    }
}
