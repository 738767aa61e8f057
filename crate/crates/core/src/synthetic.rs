//! Synthetic speech-like signals with known structure, for tests, demos and benchmarks.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::audio::AudioBuffer;

/// Amplitude of the background noise in "silent" stretches of generated utterances.
pub const NOISE_FLOOR: f64 = 1e-3;

/// Concatenates `(duration_s, is_burst)` parts: bursts are white Gaussian noise
/// (σ = 0.3), the rest exact zeros.
pub fn burst_signal(parts: &[(f64, bool)], sample_rate: u32, seed: u64) -> AudioBuffer {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise = Normal::<f64>::new(0.0, 0.3).unwrap();
    let mut samples = Vec::new();
    for &(dur, burst) in parts {
        let n = (dur * sample_rate as f64).round() as usize;
        if burst {
            samples.extend((0..n).map(|_| noise.sample(&mut rng).clamp(-1.0, 1.0)));
        } else {
            samples.extend(std::iter::repeat_n(0.0, n));
        }
    }
    AudioBuffer::new("bursts", sample_rate, samples).expect("finite samples")
}

/// A syllable as three sub-parts (rising, steady, falling), each a pair of partials.
#[derive(Debug, Clone, PartialEq)]
pub struct SyllableTemplate {
    pub partials_hz: [[f64; 2]; 3],
    pub duration_s: f64,
}

const PARTIALS: [[[f64; 2]; 3]; 6] = [
    [[300.0, 1200.0], [500.0, 1500.0], [400.0, 2200.0]],
    [[800.0, 2500.0], [1000.0, 3000.0], [700.0, 2800.0]],
    [[200.0, 3500.0], [250.0, 600.0], [1800.0, 4000.0]],
    [[1500.0, 5000.0], [1200.0, 1900.0], [600.0, 900.0]],
    [[450.0, 3100.0], [2600.0, 5500.0], [350.0, 700.0]],
    [[650.0, 1700.0], [3300.0, 6200.0], [950.0, 4500.0]],
];

/// The first `n` (at most 6) built-in templates, all 210 ms long.
pub fn templates(n: usize) -> Vec<SyllableTemplate> {
    PARTIALS
        .iter()
        .take(n)
        .map(|p| SyllableTemplate {
            partials_hz: *p,
            duration_s: 0.21,
        })
        .collect()
}

/// Renders a template with relative `jitter` applied to duration and partial frequencies.
pub fn render_syllable<R: Rng>(t: &SyllableTemplate, sample_rate: u32, jitter: f64, rng: &mut R) -> Vec<f64> {
    let jit = |v: f64, rng: &mut R| v * (1.0 + jitter * (2.0 * rng.random::<f64>() - 1.0));
    let total = (jit(t.duration_s, rng) * sample_rate as f64).round() as usize;
    let part_len = total / 3;
    let sr = sample_rate as f64;
    let mut out = Vec::with_capacity(total);
    for (p, partials) in t.partials_hz.iter().enumerate() {
        let f = [jit(partials[0], rng), jit(partials[1], rng)];
        let phase = 2.0 * PI * rng.random::<f64>();
        let len = if p == 2 { total - 2 * part_len } else { part_len };
        for n in 0..len {
            let u = n as f64 / len as f64;
            let env = match p {
                0 => 0.2 + 0.8 * u,
                1 => 1.0,
                _ => 1.0 - 0.8 * u,
            };
            let time = n as f64 / sr;
            let s = 0.25 * (2.0 * PI * f[0] * time + phase).sin() + 0.15 * (2.0 * PI * f[1] * time).sin();
            out.push(env * s);
        }
    }
    out
}

/// Parameters for [`syllable_corpus`].
#[derive(Debug, Clone)]
pub struct CorpusSpec {
    pub n_utterances: usize,
    pub n_templates: usize,
    pub syllables_per_utterance: (usize, usize),
    pub jitter: f64,
    pub sample_rate: u32,
    pub seed: u64,
}

impl Default for CorpusSpec {
    fn default() -> Self {
        Self {
            n_utterances: 60,
            n_templates: 3,
            syllables_per_utterance: (2, 4),
            jitter: 0.05,
            sample_rate: 16000,
            seed: 7,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SyntheticUtterance {
    pub audio: AudioBuffer,
    /// `(start_s, end_s, template index)` of each rendered syllable.
    pub syllables: Vec<(f64, f64, usize)>,
}

/// Utterances of templated syllables separated by 80–150 ms pauses, with 150–250 ms of
/// leading and trailing pause. Pauses carry low-level noise.
pub fn syllable_corpus(spec: &CorpusSpec) -> Vec<SyntheticUtterance> {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let temps = templates(spec.n_templates);
    let floor = Normal::new(0.0, NOISE_FLOOR).unwrap();
    let sr = spec.sample_rate as f64;
    (0..spec.n_utterances)
        .map(|u| {
            let (lo, hi) = spec.syllables_per_utterance;
            let count = rng.random_range(lo..=hi);
            let mut samples = Vec::new();
            let pause = |rng: &mut ChaCha8Rng, samples: &mut Vec<f64>, lo: f64, hi: f64| {
                let n = (rng.random_range(lo..hi) * sr).round() as usize;
                samples.extend((0..n).map(|_| floor.sample(rng)));
            };
            let mut syllables = Vec::with_capacity(count);
            pause(&mut rng, &mut samples, 0.15, 0.25);
            for i in 0..count {
                // every template appears in every utterance cycle so that small corpora stay balanced
                let t = (u + i) % temps.len();
                let start = samples.len() as f64 / sr;
                let syl = render_syllable(&temps[t], spec.sample_rate, spec.jitter, &mut rng);
                samples.extend(syl.iter().map(|s| s + floor.sample(&mut rng)));
                syllables.push((start, samples.len() as f64 / sr, t));
                if i + 1 < count {
                    pause(&mut rng, &mut samples, 0.08, 0.15);
                }
            }
            pause(&mut rng, &mut samples, 0.15, 0.25);
            let audio = AudioBuffer::new(format!("utt{u:03}"), spec.sample_rate, samples).expect("finite samples");
            SyntheticUtterance { audio, syllables }
        })
        .collect()
}
