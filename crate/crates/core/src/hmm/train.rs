use std::collections::BTreeMap;

use log::{debug, warn};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{AudError, Result};
use crate::features::FeatureSequence;
use crate::mixture::{MixtureStats, PreparedMixture};

use super::viterbi::{build_chain, chain_emissions, viterbi_chain};
use super::{AuInventory, TRANSITION_FLOOR};

/// Utterances per work chunk. Chunks are reduced in input order, so results do not depend
/// on the number of threads.
const CHUNK: usize = 16;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct TrainOptions {
    /// Split every state mixture up to this many components after re-estimation.
    pub mixture_target: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct TrainStats {
    /// Sum of best-path log-likelihoods under the incoming model.
    pub aligned_log_likelihood: f64,
    pub frames: usize,
    /// States that received no frames and kept their parameters.
    pub starved_states: usize,
    /// Utterances shorter than their chain.
    pub skipped: usize,
}

#[derive(Debug, Clone, Default)]
struct StateStats {
    mix: Option<MixtureStats>,
    stays: f64,
    leaves: f64,
}

#[derive(Debug, Default)]
struct Partial {
    states: BTreeMap<(usize, usize), StateStats>,
    log_likelihood: f64,
    frames: usize,
    skipped: usize,
}

impl Partial {
    fn merge(&mut self, other: Partial) {
        for (k, v) in other.states {
            let e = self.states.entry(k).or_default();
            match (&mut e.mix, v.mix) {
                (Some(a), Some(b)) => a.merge(&b),
                (slot @ None, b) => *slot = b,
                _ => {}
            }
            e.stays += v.stays;
            e.leaves += v.leaves;
        }
        self.log_likelihood += other.log_likelihood;
        self.frames += other.frames;
        self.skipped += other.skipped;
    }
}

fn accumulate(
    inv: &AuInventory,
    prepared: &[Vec<PreparedMixture>],
    item: &(&FeatureSequence, Vec<usize>),
    out: &mut Partial,
    post: &mut Vec<f64>,
) -> Result<()> {
    let (features, units) = item;
    let (topo, refs) = build_chain(inv, units);
    if features.len() < refs.len() {
        out.skipped += 1;
        return Ok(());
    }
    let ali = viterbi_chain(&topo, &chain_emissions(prepared, &refs, features))?;
    out.log_likelihood += ali.log_likelihood;
    out.frames += features.len();
    for (t, &s) in ali.states.iter().enumerate() {
        let (u, k) = refs[s];
        let st = out.states.entry((u, k)).or_default();
        let mix = st.mix.get_or_insert_with(|| MixtureStats::new(&inv.units[u].states[k]));
        let x = features.frame(t);
        prepared[u][k].posteriors(x, post);
        mix.add(x, post);
        match ali.states.get(t + 1) {
            Some(&next) if next == s => st.stays += 1.0,
            // moving on, or the final exit
            _ => st.leaves += 1.0,
        }
    }
    Ok(())
}

/// One pass of Viterbi training: align every utterance to its symbol chain, then re-estimate
/// emissions (EM within each state's mixture) and self-loop probabilities from the alignments.
pub fn train_iteration(inv: &AuInventory, dataset: &[(FeatureSequence, Vec<String>)], opts: &TrainOptions) -> Result<(AuInventory, TrainStats)> {
    train_pairs(inv, dataset.iter().map(|(f, s)| (f, s.as_slice())), opts)
}

pub(crate) fn train_pairs<'a>(
    inv: &AuInventory,
    dataset: impl Iterator<Item = (&'a FeatureSequence, &'a [String])>,
    opts: &TrainOptions,
) -> Result<(AuInventory, TrainStats)> {
    let items = dataset
        .map(|(f, syms)| {
            inv.check_features(f)?;
            if syms.is_empty() {
                return Err(AudError::EmptyInput("empty transcription in training data".into()));
            }
            let units = syms.iter().map(|s| inv.index_of(s)).collect::<Result<Vec<_>>>()?;
            Ok((f, units))
        })
        .collect::<Result<Vec<_>>>()?;
    let prepared = inv.prepare();
    let partials = items
        .par_chunks(CHUNK)
        .map(|chunk| {
            let mut p = Partial::default();
            let mut post = Vec::new();
            for item in chunk {
                accumulate(inv, &prepared, item, &mut p, &mut post)?;
            }
            Ok(p)
        })
        .collect::<Result<Vec<_>>>()?;
    let mut total = Partial::default();
    for p in partials {
        total.merge(p);
    }

    let mut out = inv.clone();
    let mut starved = 0;
    for (u, unit) in out.units.iter_mut().enumerate() {
        for k in 0..unit.n_states() {
            match total.states.get(&(u, k)) {
                Some(st) => {
                    if let Some(mix) = &st.mix {
                        let (m, dead) = mix.update(&unit.states[k], &inv.variance_floor);
                        if dead > 0 {
                            debug!("{} state {k}: {dead} empty mixture components", unit.symbol);
                        }
                        unit.states[k] = m;
                    }
                    let n = st.stays + st.leaves;
                    if n > 0.0 {
                        let p = (st.stays / n).clamp(TRANSITION_FLOOR, 1.0 - TRANSITION_FLOOR);
                        unit.set_stay(k, p);
                    }
                }
                None => starved += 1,
            }
            if let Some(target) = opts.mixture_target {
                unit.states[k].split_to(target);
            }
        }
    }
    if starved > 0 {
        warn!("{starved} HMM states received no frames and keep their parameters");
    }
    if total.skipped > 0 {
        warn!("{} utterances shorter than their HMM chain were skipped", total.skipped);
    }
    out.validate()?;
    Ok((
        out,
        TrainStats {
            aligned_log_likelihood: total.log_likelihood,
            frames: total.frames,
            starved_states: starved,
            skipped: total.skipped,
        },
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::FeatureKind;
    use crate::hmm::testutil::inventory;

    fn seq(values: &[f64]) -> FeatureSequence {
        FeatureSequence::from_frames(&values.iter().map(|v| vec![*v]).collect::<Vec<_>>(), FeatureKind::Mfcc).unwrap()
    }

    #[test]
    fn single_state_is_ml_estimate() {
        let inv = inventory(&[("A", vec![vec![0.0]], 0.5)], 1.0);
        let a = [1.0, 2.0, 4.0];
        let b = [0.5, -1.0];
        let data = vec![(seq(&a), vec!["A".into()]), (seq(&b), vec!["A".into()])];
        let (out, stats) = train_iteration(&inv, &data, &TrainOptions::default()).unwrap();
        let all: Vec<f64> = a.iter().chain(&b).cloned().collect();
        let mean = all.iter().sum::<f64>() / 5.0;
        let var = all.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / 5.0;
        assert!((out.units[0].states[0].means[0][0] - mean).abs() < 1e-9);
        assert!((out.units[0].states[0].variances[0][0] - var).abs() < 1e-9);
        // 3 stays, 2 exits
        assert!((out.units[0].stay(0) - 0.6).abs() < 1e-12);
        assert_eq!(stats.frames, 5);
    }

    #[test]
    fn unseen_state_keeps_parameters() {
        let inv = inventory(&[("A", vec![vec![0.0]], 0.5), ("B", vec![vec![9.0]], 0.7)], 1.0);
        let data = vec![(seq(&[0.1, 0.2]), vec!["A".into()])];
        let (out, stats) = train_iteration(&inv, &data, &TrainOptions::default()).unwrap();
        assert_eq!(out.units[1], inv.units[1]);
        assert_eq!(stats.starved_states, 1);
    }

    #[test]
    fn split_after_update() {
        let inv = inventory(&[("A", vec![vec![0.0]], 0.5)], 1.0);
        let data = vec![(seq(&[1.0, 2.0, 3.0]), vec!["A".into()])];
        let (out, _) = train_iteration(&inv, &data, &TrainOptions { mixture_target: Some(2) }).unwrap();
        assert_eq!(out.units[0].states[0].weights, vec![0.5, 0.5]);
    }

    #[test]
    fn unknown_symbol_is_error() {
        let inv = inventory(&[("A", vec![vec![0.0]], 0.5)], 1.0);
        let data = vec![(seq(&[1.0]), vec!["Z".into()])];
        assert!(matches!(
            train_iteration(&inv, &data, &TrainOptions::default()),
            Err(AudError::UnknownSymbol(_))
        ));
    }

    #[test]
    fn short_utterances_are_skipped() {
        let inv = inventory(&[("A", vec![vec![0.0], vec![1.0]], 0.5)], 1.0);
        let data = vec![(seq(&[1.0]), vec!["A".into()]), (seq(&[0.0, 1.0, 1.0]), vec!["A".into()])];
        let (_, stats) = train_iteration(&inv, &data, &TrainOptions::default()).unwrap();
        assert_eq!(stats.skipped, 1);
        assert_eq!(stats.frames, 3);
    }
}
