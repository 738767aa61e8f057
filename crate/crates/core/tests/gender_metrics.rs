use std::sync::OnceLock;

use aud_core::features::{FeatureKind, FeatureSequence};
use aud_core::gender::{
    classify_file, train_gender_models, vote_groups, vote_speaker, EmConfig, Gender, GenderConfig, GenderDecision,
    GenderModelSet,
};
use aud_core::metrics::{bitrate_of_symbols, boundary_scores};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

fn frames(rng: &mut ChaCha8Rng, n: usize, center: f64) -> Vec<Vec<f64>> {
    let z = Normal::new(0.0, 1.0).unwrap();
    (0..n).map(|_| (0..4).map(|d| z.sample(rng) + if d == 0 { center } else { 0.0 }).collect()).collect()
}

fn models() -> &'static GenderModelSet {
    static MODELS: OnceLock<GenderModelSet> = OnceLock::new();
    MODELS.get_or_init(|| {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let cfg = GenderConfig {
            ubm: EmConfig {
                n_components: 4,
                iters: 10,
                ..EmConfig::default()
            },
            ..GenderConfig::default()
        };
        let male = frames(&mut rng, 400, 2.0);
        let female = frames(&mut rng, 400, -2.0);
        train_gender_models(&male, &female, &cfg).unwrap()
    })
}

fn decision(id: usize, llr: f64) -> GenderDecision {
    GenderDecision::from_llr(format!("f{id}"), llr)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn file_decision_ignores_frame_order(seed in any::<u64>(), n in 1usize..80, center in -3.0f64..3.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut xs = frames(&mut rng, n, center);
        let a = classify_file(models(), &FeatureSequence::from_frames(&xs, FeatureKind::Mfcc).unwrap(), "a").unwrap();
        for i in (1..xs.len()).rev() {
            xs.swap(i, rng.random_range(0..=i));
        }
        let b = classify_file(models(), &FeatureSequence::from_frames(&xs, FeatureKind::Mfcc).unwrap(), "a").unwrap();
        prop_assert!((a.llr - b.llr).abs() <= 1e-9 * (1.0 + a.llr.abs()));
        if a.llr.abs() > 1e-6 {
            prop_assert_eq!(a.label, b.label);
        }
    }

    #[test]
    fn vote_ignores_decision_order(llrs in prop::collection::vec(-2.0f64..2.0, 1..12), seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut ds: Vec<GenderDecision> = llrs.iter().enumerate().map(|(i, l)| decision(i, *l)).collect();
        let groups: Vec<String> = (0..ds.len()).map(|i| format!("g{}", i % 3)).collect();
        let v = vote_speaker(&ds).unwrap();
        let g = vote_groups(&ds, &groups).unwrap();
        let mut order: Vec<usize> = (0..ds.len()).collect();
        for i in (1..order.len()).rev() {
            order.swap(i, rng.random_range(0..=i));
        }
        ds = order.iter().map(|&i| ds[i].clone()).collect();
        let groups: Vec<String> = order.iter().map(|&i| groups[i].clone()).collect();
        prop_assert_eq!(vote_speaker(&ds).unwrap(), v);
        prop_assert_eq!(vote_groups(&ds, &groups).unwrap(), g);
    }
}

#[test]
fn vote_tie_goes_to_the_most_confident_file() {
    assert_eq!(vote_speaker(&[decision(0, 0.3), decision(1, -0.9)]).unwrap(), Gender::Female);
    assert_eq!(vote_speaker(&[decision(0, 1.3), decision(1, -0.9)]).unwrap(), Gender::Male);
}

fn symbols() -> impl Strategy<Value = Vec<String>> {
    prop::collection::vec(0u8..6, 1..60).prop_map(|v| v.into_iter().map(|c| format!("u{c}")).collect())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(96))]

    #[test]
    fn doubling_the_stream_doubles_the_bitrate(s in symbols(), d in 0.5f64..100.0) {
        let once = bitrate_of_symbols(s.iter().map(String::as_str), d).unwrap();
        let twice = bitrate_of_symbols(s.iter().chain(&s).map(String::as_str), d).unwrap();
        prop_assert!((twice.bitrate - 2.0 * once.bitrate).abs() <= 1e-9 * (1.0 + once.bitrate));
        prop_assert!((twice.entropy_bits - once.entropy_bits).abs() < 1e-12);
    }

    #[test]
    fn entropy_peaks_at_the_uniform_distribution(s in symbols()) {
        let r = bitrate_of_symbols(s.iter().map(String::as_str), 1.0).unwrap();
        let k = r.unigram_distribution.len();
        let max = (k as f64).log2();
        let uniform = r.unigram_distribution.values().all(|p| (p - 1.0 / k as f64).abs() < 1e-12);
        prop_assert!(r.entropy_bits <= max + 1e-12);
        prop_assert_eq!(uniform, (r.entropy_bits - max).abs() < 1e-12);
    }

    #[test]
    fn swapping_roles_swaps_precision_and_recall(
        hyp in prop::collection::vec(0.0f64..10.0, 0..20),
        reference in prop::collection::vec(0.0f64..10.0, 0..20),
        tol in 0.01f64..0.5,
    ) {
        let sort = |mut v: Vec<f64>| { v.sort_by(f64::total_cmp); v };
        let (hyp, reference) = (sort(hyp), sort(reference));
        let a = boundary_scores(&hyp, &reference, tol);
        let b = boundary_scores(&reference, &hyp, tol);
        prop_assert_eq!(a.matched, b.matched);
        prop_assert!((a.precision - b.recall).abs() < 1e-12);
        prop_assert!((a.recall - b.precision).abs() < 1e-12);
        prop_assert!((a.f1 - b.f1).abs() < 1e-12);
    }
}
