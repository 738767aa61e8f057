use log::warn;
use serde::{Deserialize, Serialize};

use crate::error::{AudError, Result};
use crate::features::FeatureSequence;
use crate::mixture::PreparedMixture;

use super::viterbi::{build_chain, chain_emissions, viterbi_chain};
use super::{AuInventory, Transcription};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Grammar {
    /// Each cluster's forced rise → steady → fall chain; the best cluster wins.
    ClusterTriplet,
    /// Any unit may follow any unit. Cross-unit transitions carry weight 1, so every
    /// path of a constrained grammar is also a path here with the same score.
    FreeLoop,
}

pub fn transcribe(inv: &AuInventory, features: &FeatureSequence, grammar: Grammar, utterance_id: &str) -> Result<Transcription> {
    transcribe_prepared(inv, &inv.prepare(), features, grammar, utterance_id)
}

/// As [`transcribe`], reusing precomputed state densities across utterances.
pub fn transcribe_prepared(
    inv: &AuInventory,
    prepared: &[Vec<PreparedMixture>],
    features: &FeatureSequence,
    grammar: Grammar,
    utterance_id: &str,
) -> Result<Transcription> {
    inv.check_features(features)?;
    match grammar {
        Grammar::ClusterTriplet => cluster_triplet(inv, prepared, features, utterance_id),
        Grammar::FreeLoop => free_loop(inv, prepared, features, utterance_id),
    }
}

/// Unit sequence and per-frame chain states → symbols and `[start, end)` alignments.
fn collapse(inv: &AuInventory, units: &[usize], states: &[usize]) -> (Vec<String>, Vec<(usize, usize)>) {
    // chain state index → position of its unit in `units`
    let owner: Vec<usize> = units
        .iter()
        .enumerate()
        .flat_map(|(pos, &u)| std::iter::repeat_n(pos, inv.units[u].n_states()))
        .collect();
    let mut symbols = Vec::new();
    let mut ali: Vec<(usize, usize)> = Vec::new();
    let mut current = usize::MAX;
    for (t, &s) in states.iter().enumerate() {
        if owner[s] != current {
            current = owner[s];
            symbols.push(inv.units[units[current]].symbol.clone());
            ali.push((t, t + 1));
        } else {
            ali.last_mut().unwrap().1 = t + 1;
        }
    }
    (symbols, ali)
}

fn cluster_triplet(inv: &AuInventory, prepared: &[Vec<PreparedMixture>], features: &FeatureSequence, id: &str) -> Result<Transcription> {
    if inv.clusters.is_empty() {
        return Err(AudError::Config("inventory has no clusters to decode against".into()));
    }
    let mut best: Option<(f64, Vec<usize>, Vec<usize>)> = None;
    for c in &inv.clusters {
        let units = c
            .symbols()
            .iter()
            .map(|s| inv.index_of(s))
            .collect::<Result<Vec<_>>>()?;
        let (topo, refs) = build_chain(inv, &units);
        if features.len() < refs.len() {
            continue;
        }
        let ali = viterbi_chain(&topo, &chain_emissions(prepared, &refs, features))?;
        if best.as_ref().is_none_or(|b| ali.log_likelihood > b.0) {
            best = Some((ali.log_likelihood, units, ali.states));
        }
    }
    match best {
        Some((ll, units, states)) => {
            let (symbols, ali) = collapse(inv, &units, &states);
            Ok(Transcription {
                utterance_id: id.to_string(),
                symbols,
                alignments: Some(ali),
                log_likelihood: ll,
                warning: false,
            })
        }
        None => best_single_unit(inv, prepared, features, id),
    }
}

/// Fallback for inputs too short for a full triplet: the best-scoring single unit.
fn best_single_unit(inv: &AuInventory, prepared: &[Vec<PreparedMixture>], features: &FeatureSequence, id: &str) -> Result<Transcription> {
    let mut best: Option<(f64, usize, Vec<usize>)> = None;
    for u in 0..inv.len() {
        let (topo, refs) = build_chain(inv, &[u]);
        if features.len() < refs.len() {
            continue;
        }
        let ali = viterbi_chain(&topo, &chain_emissions(prepared, &refs, features))?;
        if best.as_ref().is_none_or(|b| ali.log_likelihood > b.0) {
            best = Some((ali.log_likelihood, u, ali.states));
        }
    }
    let (ll, u, _) = best.ok_or(AudError::InfeasibleAlignment {
        frames: features.len(),
        min_frames: inv.units.iter().map(|u| u.n_states()).min().unwrap_or(1),
    })?;
    warn!("{id}: {} frames too short for a unit triplet, using {}", features.len(), inv.units[u].symbol);
    Ok(Transcription {
        utterance_id: id.to_string(),
        symbols: vec![inv.units[u].symbol.clone()],
        alignments: Some(vec![(0, features.len())]),
        log_likelihood: ll,
        warning: true,
    })
}

const START: i32 = -3;
const STAY: i32 = -1;
const ADVANCE: i32 = -2;

fn free_loop(inv: &AuInventory, prepared: &[Vec<PreparedMixture>], features: &FeatureSequence, id: &str) -> Result<Transcription> {
    let n_units = inv.len();
    let mut offset = Vec::with_capacity(n_units + 1);
    offset.push(0);
    for u in &inv.units {
        offset.push(offset.last().unwrap() + u.n_states());
    }
    let s_total = offset[n_units];
    let mut log_stay = Vec::with_capacity(s_total);
    let mut log_next = Vec::with_capacity(s_total);
    let mut owner = Vec::with_capacity(s_total);
    for (ui, u) in inv.units.iter().enumerate() {
        for s in 0..u.n_states() {
            log_stay.push(u.stay(s).ln());
            log_next.push(u.advance(s).ln());
            owner.push(ui);
        }
    }
    let first = |u: usize| offset[u];
    let last = |u: usize| offset[u + 1] - 1;

    let t_count = features.len();
    let mut emis = vec![0.0; s_total];
    let fill = |t: usize, emis: &mut Vec<f64>| {
        let x = features.frame(t);
        for (u, states) in prepared.iter().enumerate() {
            for (s, m) in states.iter().enumerate() {
                emis[offset[u] + s] = m.log_likelihood(x);
            }
        }
    };
    let mut back = vec![START; t_count * s_total];
    let mut prev = vec![f64::NEG_INFINITY; s_total];
    let mut cur = vec![f64::NEG_INFINITY; s_total];
    fill(0, &mut emis);
    for u in 0..n_units {
        prev[first(u)] = emis[first(u)];
    }
    for t in 1..t_count {
        fill(t, &mut emis);
        let mut best_exit = f64::NEG_INFINITY;
        let mut best_unit = 0;
        for u in 0..n_units {
            let v = prev[last(u)] + log_next[last(u)];
            if v > best_exit {
                best_exit = v;
                best_unit = u;
            }
        }
        for i in 0..s_total {
            let stay = prev[i] + log_stay[i];
            let (from, code) = if i == first(owner[i]) {
                (best_exit, best_unit as i32)
            } else {
                (prev[i - 1] + log_next[i - 1], ADVANCE)
            };
            let (best, code) = if stay >= from { (stay, STAY) } else { (from, code) };
            cur[i] = best + emis[i];
            back[t * s_total + i] = code;
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    let mut end_score = f64::NEG_INFINITY;
    let mut end_unit = 0;
    for u in 0..n_units {
        let v = prev[last(u)] + log_next[last(u)];
        if v > end_score {
            end_score = v;
            end_unit = u;
        }
    }
    if !(end_score > f64::NEG_INFINITY) {
        return Err(AudError::InfeasibleAlignment {
            frames: t_count,
            min_frames: 1,
        });
    }

    // backtrace; a unit token starts wherever the path entered a first state
    let mut state = last(end_unit);
    let mut starts = Vec::new();
    let mut units_rev = Vec::new();
    for t in (0..t_count).rev() {
        let code = back[t * s_total + state];
        match code {
            STAY => {}
            ADVANCE => state -= 1,
            START => {
                starts.push(t);
                units_rev.push(owner[state]);
            }
            from_unit => {
                starts.push(t);
                units_rev.push(owner[state]);
                state = last(from_unit as usize);
            }
        }
    }
    starts.reverse();
    units_rev.reverse();
    let symbols: Vec<String> = units_rev.iter().map(|&u| inv.units[u].symbol.clone()).collect();
    let alignments: Vec<(usize, usize)> = starts
        .iter()
        .enumerate()
        .map(|(k, &s)| (s, starts.get(k + 1).copied().unwrap_or(t_count)))
        .collect();
    Ok(Transcription {
        utterance_id: id.to_string(),
        symbols,
        alignments: Some(alignments),
        log_likelihood: end_score,
        warning: false,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::FeatureKind;
    use crate::hmm::testutil::inventory;
    use crate::hmm::ClusterUnits;

    fn seq(values: &[f64]) -> FeatureSequence {
        FeatureSequence::from_frames(&values.iter().map(|v| vec![*v]).collect::<Vec<_>>(), FeatureKind::Mfcc).unwrap()
    }

    fn two_cluster_inventory() -> AuInventory {
        let mut inv = inventory(
            &[
                ("C00_R", vec![vec![0.0]], 0.6),
                ("C00_S", vec![vec![1.0]], 0.6),
                ("C00_F", vec![vec![2.0]], 0.6),
                ("C01_R", vec![vec![5.0]], 0.6),
                ("C01_S", vec![vec![6.0]], 0.6),
                ("C01_F", vec![vec![7.0]], 0.6),
                ("SIL", vec![vec![-5.0]], 0.9),
            ],
            0.1,
        );
        inv.clusters = vec![ClusterUnits::for_cluster(0), ClusterUnits::for_cluster(1)];
        inv.validate().unwrap();
        inv
    }

    #[test]
    fn triplet_picks_matching_cluster() {
        let inv = two_cluster_inventory();
        let f = seq(&[5.0, 5.1, 6.0, 5.9, 6.1, 7.0, 6.9]);
        let t = transcribe(&inv, &f, Grammar::ClusterTriplet, "u").unwrap();
        assert_eq!(t.symbols, vec!["C01_R", "C01_S", "C01_F"]);
        assert_eq!(t.alignments.unwrap(), vec![(0, 2), (2, 5), (5, 7)]);
    }

    #[test]
    fn silence_only_is_one_sil() {
        let inv = two_cluster_inventory();
        let f = seq(&[-5.0, -5.1, -4.9, -5.0, -5.05, -4.95]);
        let t = transcribe(&inv, &f, Grammar::FreeLoop, "u").unwrap();
        assert_eq!(t.symbols, vec!["SIL"]);
        assert_eq!(t.alignments.unwrap(), vec![(0, 6)]);
    }

    #[test]
    fn free_loop_follows_units() {
        let inv = two_cluster_inventory();
        let f = seq(&[-5.0, -5.0, 0.0, 1.0, 2.0, 6.0, 6.0, -5.0]);
        let t = transcribe(&inv, &f, Grammar::FreeLoop, "u").unwrap();
        assert_eq!(t.symbols, vec!["SIL", "C00_R", "C00_S", "C00_F", "C01_S", "SIL"]);
        let tri = transcribe(&inv, &f, Grammar::ClusterTriplet, "u").unwrap();
        assert!(t.log_likelihood >= tri.log_likelihood - 1e-9);
    }

    #[test]
    fn short_input_falls_back_with_warning() {
        let inv = two_cluster_inventory();
        let t = transcribe(&inv, &seq(&[6.0, 6.1]), Grammar::ClusterTriplet, "u").unwrap();
        assert!(t.warning);
        assert_eq!(t.symbols, vec!["C01_S"]);
    }

    #[test]
    fn triplet_needs_clusters() {
        let inv = inventory(&[("A", vec![vec![0.0]], 0.5)], 1.0);
        assert!(transcribe(&inv, &seq(&[0.0]), Grammar::ClusterTriplet, "u").is_err());
    }
}
