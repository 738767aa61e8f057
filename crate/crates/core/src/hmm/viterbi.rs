use crate::error::{AudError, Result};
use crate::features::FeatureSequence;
use crate::mixture::PreparedMixture;

use super::AuInventory;

/// Left-to-right chain of emitting states. `log_next[s]` leads to `s + 1`; for the last
/// state it is the final exit probability, charged once at the end of the utterance.
#[derive(Debug, Clone, PartialEq)]
pub struct ChainTopology {
    pub log_stay: Vec<f64>,
    pub log_next: Vec<f64>,
}

impl ChainTopology {
    pub fn len(&self) -> usize {
        self.log_stay.len()
    }

    pub fn is_empty(&self) -> bool {
        self.log_stay.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChainAlignment {
    /// Chain state index of every frame.
    pub states: Vec<usize>,
    pub log_likelihood: f64,
}

/// Best path through a left-to-right chain given a `T × S` row-major log-emission matrix.
///
/// The path starts in state 0 and ends in the last state. Between staying and advancing with
/// equal scores the path stays, which places transitions as early as possible.
pub fn viterbi_chain(topo: &ChainTopology, emission: &[f64]) -> Result<ChainAlignment> {
    let s_count = topo.len();
    if s_count == 0 {
        return Err(AudError::Config("empty HMM chain".into()));
    }
    let t_count = emission.len() / s_count;
    if t_count * s_count != emission.len() || t_count == 0 {
        return Err(AudError::DimensionMismatch {
            expected: s_count,
            got: emission.len(),
        });
    }
    if t_count < s_count {
        return Err(AudError::InfeasibleAlignment {
            frames: t_count,
            min_frames: s_count,
        });
    }
    let e = |t: usize, s: usize| emission[t * s_count + s];
    // advanced[t][s]: true if the best path into (t, s) came from s - 1
    let mut advanced = vec![false; t_count * s_count];
    let mut prev = vec![f64::NEG_INFINITY; s_count];
    let mut cur = vec![f64::NEG_INFINITY; s_count];
    prev[0] = e(0, 0);
    for t in 1..t_count {
        // states reachable at t and still able to finish by T-1
        let lo = (s_count + t).saturating_sub(t_count);
        let hi = t.min(s_count - 1);
        cur.iter_mut().for_each(|v| *v = f64::NEG_INFINITY);
        for s in lo..=hi {
            let stay = prev[s] + topo.log_stay[s];
            let adv = if s > 0 { prev[s - 1] + topo.log_next[s - 1] } else { f64::NEG_INFINITY };
            let (best, from_prev) = if stay >= adv { (stay, false) } else { (adv, true) };
            cur[s] = best + e(t, s);
            advanced[t * s_count + s] = from_prev;
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    let last = s_count - 1;
    let log_likelihood = prev[last] + topo.log_next[last];
    if !(log_likelihood > f64::NEG_INFINITY) {
        return Err(AudError::InfeasibleAlignment {
            frames: t_count,
            min_frames: s_count,
        });
    }
    let mut states = vec![0; t_count];
    let mut s = last;
    for t in (0..t_count).rev() {
        states[t] = s;
        if t > 0 && advanced[t * s_count + s] {
            s -= 1;
        }
    }
    Ok(ChainAlignment {
        states,
        log_likelihood,
    })
}

/// Chain topology and per-state (unit, state) references for a unit sequence.
pub(crate) fn build_chain(inv: &AuInventory, units: &[usize]) -> (ChainTopology, Vec<(usize, usize)>) {
    let mut log_stay = Vec::new();
    let mut log_next = Vec::new();
    let mut refs = Vec::new();
    for &u in units {
        let hmm = &inv.units[u];
        for s in 0..hmm.n_states() {
            log_stay.push(hmm.stay(s).ln());
            log_next.push(hmm.advance(s).ln());
            refs.push((u, s));
        }
    }
    (ChainTopology { log_stay, log_next }, refs)
}

pub(crate) fn chain_emissions(prepared: &[Vec<PreparedMixture>], refs: &[(usize, usize)], features: &FeatureSequence) -> Vec<f64> {
    let mut out = Vec::with_capacity(features.len() * refs.len());
    for x in features.frames() {
        out.extend(refs.iter().map(|&(u, s)| prepared[u][s].log_likelihood(x)));
    }
    out
}

/// Aligns `features` to the concatenation of the given units.
pub fn viterbi_align(inv: &AuInventory, units: &[usize], features: &FeatureSequence) -> Result<ChainAlignment> {
    inv.check_features(features)?;
    if units.is_empty() {
        return Err(AudError::Config("empty HMM chain".into()));
    }
    let (topo, refs) = build_chain(inv, units);
    if features.len() < refs.len() {
        return Err(AudError::InfeasibleAlignment {
            frames: features.len(),
            min_frames: refs.len(),
        });
    }
    let prepared = inv.prepare();
    viterbi_chain(&topo, &chain_emissions(&prepared, &refs, features))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::FeatureKind;
    use crate::hmm::testutil::inventory;
    use crate::mixture::log_gaussian_diag;

    #[test]
    fn one_state_closed_form() {
        let inv = inventory(&[("A", vec![vec![0.5]], 0.8)], 2.0);
        let xs = [0.1, 0.9, -0.3, 1.4];
        let f = FeatureSequence::from_frames(&xs.iter().map(|x| vec![*x]).collect::<Vec<_>>(), FeatureKind::Mfcc).unwrap();
        let a = viterbi_align(&inv, &[0], &f).unwrap();
        assert_eq!(a.states, vec![0; 4]);
        let emis: f64 = xs.iter().map(|x| log_gaussian_diag(&[*x], &[0.5], &[2.0])).sum();
        let expected = emis + 3.0 * 0.8f64.ln() + 0.2f64.ln();
        assert!((a.log_likelihood - expected).abs() < 1e-10);
    }

    #[test]
    fn two_units_split_at_mean_change() {
        let inv = inventory(&[("A", vec![vec![0.0]], 0.5), ("B", vec![vec![10.0]], 0.5)], 1.0);
        let frames: Vec<Vec<f64>> = (0..10).map(|t| vec![if t < 5 { 0.0 } else { 10.0 }]).collect();
        let f = FeatureSequence::from_frames(&frames, FeatureKind::Mfcc).unwrap();
        let a = viterbi_align(&inv, &[0, 1], &f).unwrap();
        assert_eq!(a.states, vec![0, 0, 0, 0, 0, 1, 1, 1, 1, 1]);
    }

    #[test]
    fn too_short_is_infeasible() {
        let topo = ChainTopology {
            log_stay: vec![-0.1; 3],
            log_next: vec![-1.0; 3],
        };
        assert!(matches!(
            viterbi_chain(&topo, &[0.0; 6]),
            Err(AudError::InfeasibleAlignment { frames: 2, min_frames: 3 })
        ));
    }

    #[test]
    fn ties_favor_early_transitions() {
        let topo = ChainTopology {
            log_stay: vec![0.0, 0.0],
            log_next: vec![0.0, 0.0],
        };
        let a = viterbi_chain(&topo, &[0.0; 8]).unwrap();
        assert_eq!(a.states, vec![0, 1, 1, 1]);
    }

    #[test]
    fn dimension_mismatch() {
        let inv = inventory(&[("A", vec![vec![0.0, 0.0]], 0.5)], 1.0);
        let f = FeatureSequence::from_frames(&[vec![0.0]], FeatureKind::Mfcc).unwrap();
        assert!(matches!(viterbi_align(&inv, &[0], &f), Err(AudError::DimensionMismatch { .. })));
    }
}
