use aud_core::features::{FeatureKind, FeatureSequence};
use aud_core::hmm::{
    train_iteration, transcribe, viterbi_align, AcousticUnitHmm, AuInventory, ClusterUnits, Grammar, TrainOptions,
};
use aud_core::mixture::{log_gaussian_diag, GaussianMixture};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const FLOOR: f64 = 1e-3;

fn unit(rng: &mut ChaCha8Rng, symbol: &str, n_states: usize, dim: usize) -> AcousticUnitHmm {
    let states = (0..n_states)
        .map(|_| {
            GaussianMixture::single(
                (0..dim).map(|_| rng.random_range(-3.0..3.0)).collect(),
                (0..dim).map(|_| rng.random_range(0.3..2.0)).collect(),
            )
        })
        .collect();
    let mut u = AcousticUnitHmm::left_to_right(symbol, states, 0.5);
    for s in 0..n_states {
        u.set_stay(s, rng.random_range(0.1..0.9));
    }
    u
}

/// Inventory with silence and `n_clusters` rise/steady/fall triplets.
fn inventory(rng: &mut ChaCha8Rng, n_clusters: usize, dim: usize) -> AuInventory {
    let mut units = vec![unit(rng, "SIL", 1, dim)];
    let clusters: Vec<ClusterUnits> = (0..n_clusters).map(ClusterUnits::for_cluster).collect();
    for c in &clusters {
        for s in c.symbols() {
            let n = rng.random_range(1..4);
            units.push(unit(rng, s, n, dim));
        }
    }
    AuInventory::new(dim, vec![FLOOR; dim], units, clusters).unwrap()
}

fn features(rng: &mut ChaCha8Rng, len: usize, dim: usize) -> FeatureSequence {
    let frames: Vec<Vec<f64>> = (0..len).map(|_| (0..dim).map(|_| rng.random_range(-3.0..3.0)).collect()).collect();
    FeatureSequence::from_frames(&frames, FeatureKind::Mfcc).unwrap()
}

/// Score of an explicit state path through the concatenated units.
fn path_score(inv: &AuInventory, units: &[usize], f: &FeatureSequence, path: &[usize]) -> f64 {
    let chain: Vec<(usize, usize)> = units.iter().flat_map(|&u| (0..inv.units[u].n_states()).map(move |s| (u, s))).collect();
    let emit = |t: usize, k: usize| {
        let (u, s) = chain[k];
        let g = &inv.units[u].states[s];
        log_gaussian_diag(f.frame(t), &g.means[0], &g.variances[0])
    };
    let mut score = emit(0, path[0]);
    for t in 1..path.len() {
        let (u, s) = chain[path[t - 1]];
        let p = if path[t] == path[t - 1] { inv.units[u].stay(s) } else { inv.units[u].advance(s) };
        score += p.ln() + emit(t, path[t]);
    }
    let (u, s) = chain[*path.last().unwrap()];
    score + inv.units[u].advance(s).ln()
}

/// Random admissible path: starts in state 0, ends in the last state, steps 0 or 1.
fn random_path(rng: &mut ChaCha8Rng, t: usize, s: usize) -> Vec<usize> {
    let mut advance: Vec<bool> = (0..t - 1).map(|i| i < s - 1).collect();
    for i in (1..advance.len()).rev() {
        advance.swap(i, rng.random_range(0..=i));
    }
    let mut path = vec![0];
    for a in advance {
        path.push(path.last().unwrap() + a as usize);
    }
    path
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn viterbi_beats_every_admissible_path(seed in any::<u64>(), n_units in 1usize..4, extra in 0usize..12) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let inv = inventory(&mut rng, 2, 2);
        let units: Vec<usize> = (0..n_units).map(|_| rng.random_range(0..inv.len())).collect();
        let s: usize = units.iter().map(|&u| inv.units[u].n_states()).sum();
        let f = features(&mut rng, s + extra, 2);
        let best = viterbi_align(&inv, &units, &f).unwrap();
        let own = path_score(&inv, &units, &f, &best.states);
        prop_assert!((own - best.log_likelihood).abs() <= 1e-9 * (1.0 + own.abs()));
        for _ in 0..30 {
            let p = random_path(&mut rng, f.len(), s);
            prop_assert!(best.log_likelihood >= path_score(&inv, &units, &f, &p) - 1e-9);
        }
    }

    #[test]
    fn training_keeps_parameters_valid(seed in any::<u64>(), split in any::<bool>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let inv = inventory(&mut rng, 2, 3);
        let data: Vec<(FeatureSequence, Vec<String>)> = (0..6)
            .map(|i| {
                let c = ClusterUnits::for_cluster(i % 2);
                let syms = ["SIL", &c.rise, &c.steady, &c.fall, "SIL"].map(String::from).to_vec();
                let len = rng.random_range(12..40);
                (features(&mut rng, len, 3), syms)
            })
            .collect();
        let opts = TrainOptions { mixture_target: split.then_some(2) };
        let (next, first) = train_iteration(&inv, &data, &opts).unwrap();
        next.validate().unwrap();
        for u in &next.units {
            for (row, g) in u.transitions.iter().zip(&u.states) {
                prop_assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-9);
                prop_assert!(row.iter().all(|p| *p >= 0.0));
                prop_assert!((g.weights.iter().sum::<f64>() - 1.0).abs() < 1e-9);
                prop_assert!(g.variances.iter().flatten().all(|v| *v >= FLOOR));
            }
        }
        if !split {
            let (_, second) = train_iteration(&next, &data, &opts).unwrap();
            prop_assert!(second.aligned_log_likelihood >= first.aligned_log_likelihood - 1e-6);
        }
    }

    #[test]
    fn decoding_is_deterministic(seed in any::<u64>(), len in 8usize..60) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let inv = inventory(&mut rng, 3, 2);
        let f = features(&mut rng, len, 2);
        let free = transcribe(&inv, &f, Grammar::FreeLoop, "u").unwrap();
        prop_assert_eq!(&free, &transcribe(&inv, &f, Grammar::FreeLoop, "u").unwrap());
        let tri = transcribe(&inv, &f, Grammar::ClusterTriplet, "u").unwrap();
        prop_assert_eq!(&tri, &transcribe(&inv, &f, Grammar::ClusterTriplet, "u").unwrap());
        if !tri.warning {
            prop_assert!(free.log_likelihood >= tri.log_likelihood - 1e-9);
        }
    }
}
