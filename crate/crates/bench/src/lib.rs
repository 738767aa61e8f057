//! Seeded inputs shared by the kernel benchmarks.

use aud_core::features::{FeatureKind, FeatureSequence};
use aud_core::synthetic::{syllable_corpus, CorpusSpec};
use aud_core::AudioBuffer;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Uniform random frames in `[-1, 1)`.
pub fn random_sequence(seed: u64, len: usize, dim: usize) -> FeatureSequence {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let data = (0..len * dim).map(|_| rng.random_range(-1.0..1.0)).collect();
    let times = (0..len).map(|t| t as f64 * 0.01).collect();
    FeatureSequence::new(data, dim, times, FeatureKind::Mfcc).unwrap()
}

/// Row-major `len × states` log-emission matrix.
pub fn random_emissions(seed: u64, len: usize, states: usize) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..len * states).map(|_| rng.random_range(-20.0..0.0)).collect()
}

/// One synthetic utterance of templated syllables.
pub fn utterance(seed: u64) -> AudioBuffer {
    let spec = CorpusSpec {
        n_utterances: 1,
        syllables_per_utterance: (6, 6),
        seed,
        ..CorpusSpec::default()
    };
    syllable_corpus(&spec).remove(0).audio
}
