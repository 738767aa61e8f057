use aud_core::audio::AudioBuffer;
use aud_core::features::{extract, mfcc, short_time_energy, FrameConfig, MfccConfig};
use aud_core::matrix::Matrix;
use aud_core::segment::{group_delay_of_contour, pick_peaks, segment_syllables, GroupDelayConfig, SegmentKind};
use aud_core::synthetic::burst_signal;
use proptest::prelude::*;

fn audio(samples: Vec<f64>) -> AudioBuffer {
    AudioBuffer::new("p", 16000, samples).unwrap()
}

fn samples(len: std::ops::Range<usize>) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-1.0f64..1.0, len)
}

fn raw_frames() -> FrameConfig {
    FrameConfig {
        pre_emphasis: 0.0,
        ..FrameConfig::default()
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn energy_shifts_with_the_signal(x in samples(800..3000)) {
        let cfg = raw_frames();
        let hop = cfg.hop_samples(16000);
        let mut delayed = vec![0.0; hop];
        delayed.extend(&x);
        let a = short_time_energy(&audio(x), &cfg).unwrap();
        let b = short_time_energy(&audio(delayed), &cfg).unwrap();
        prop_assert_eq!(b.len(), a.len() + 1);
        for t in 0..a.len() {
            let (u, v) = (a.as_slice()[t], b.as_slice()[t + 1]);
            prop_assert!((u - v).abs() <= 1e-9 * (1.0 + u.abs()), "frame {}: {} vs {}", t, u, v);
        }
    }

    #[test]
    fn energy_is_nonnegative_and_quadratic(x in samples(400..2000), c in 0.05f64..3.0) {
        let cfg = raw_frames();
        let a = short_time_energy(&audio(x.clone()), &cfg).unwrap();
        let b = short_time_energy(&audio(x.iter().map(|v| v * c).collect()), &cfg).unwrap();
        for (u, v) in a.as_slice().iter().zip(b.as_slice()) {
            prop_assert!(*u >= 0.0);
            prop_assert!((v - c * c * u).abs() <= 1e-9 * (1.0 + v.abs()));
        }
    }

    #[test]
    fn mfcc_frames_match_energy_frames(x in samples(400..4000), silent in any::<bool>()) {
        let x = if silent { vec![0.0; x.len()] } else { x };
        let cfg = MfccConfig::default();
        let a = audio(x);
        let e = short_time_energy(&a, &cfg.frame).unwrap();
        let m = mfcc(&a, &cfg.frame, cfg.n_mels, cfg.n_ceps).unwrap();
        let full = extract(&a, &cfg).unwrap();
        prop_assert_eq!(m.len(), e.len());
        prop_assert_eq!(full.len(), e.len());
        prop_assert_eq!(full.dim(), 39);
        prop_assert!(full.as_slice().iter().all(|v| v.is_finite()));
    }

    #[test]
    fn audf_roundtrip(rows in 1usize..20, cols in 1usize..8, seed in any::<u64>()) {
        let vals: Vec<f64> = (0..rows * cols).map(|i| ((seed.wrapping_add(i as u64) % 1000) as f64 - 500.0) / 7.0).collect();
        let m = Matrix::from_f64(rows, cols, &vals).unwrap();
        let bytes = m.encode();
        prop_assert_eq!(&bytes[..4], b"AUDF");
        prop_assert_eq!(bytes.len(), 16 + 4 * rows * cols);
        prop_assert_eq!(Matrix::decode(&bytes).unwrap(), m);
    }
}

fn burst_layout() -> impl Strategy<Value = Vec<(f64, bool)>> {
    prop::collection::vec((0.15f64..0.35, 0.1f64..0.25), 1..5).prop_map(|v| {
        let mut parts = vec![(0.15, false)];
        for (on, off) in v {
            parts.push((on, true));
            parts.push((off, false));
        }
        parts
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn segments_partition_the_utterance(parts in burst_layout(), seed in any::<u64>()) {
        let a = burst_signal(&parts, 16000, seed);
        let cfg = raw_frames();
        let segs = segment_syllables(&a, &cfg, &GroupDelayConfig::default()).unwrap();
        prop_assert_eq!(segs[0].start, 0.0);
        prop_assert!((segs.last().unwrap().end - a.duration()).abs() < 1e-12);
        for w in segs.windows(2) {
            prop_assert_eq!(w[0].end, w[1].start);
            prop_assert!(w[0].start < w[0].end);
        }
    }

    #[test]
    fn scaling_keeps_the_boundaries(parts in burst_layout(), seed in any::<u64>(), c in 0.1f64..3.0) {
        let a = burst_signal(&parts, 16000, seed);
        let scaled = AudioBuffer::new("p", 16000, a.samples.iter().map(|v| v * c).collect()).unwrap();
        let cfg = raw_frames();
        let g = GroupDelayConfig::default();
        let s1 = segment_syllables(&a, &cfg, &g).unwrap();
        let s2 = segment_syllables(&scaled, &cfg, &g).unwrap();
        prop_assert_eq!(s1.len(), s2.len());
        for (x, y) in s1.iter().zip(&s2) {
            prop_assert!((x.start - y.start).abs() < 1e-9 && (x.end - y.end).abs() < 1e-9);
            prop_assert_eq!(x.kind, y.kind);
        }
    }

    // Does not hold: the rectangular causal cut rings, and the relative peak threshold
    // counts the ripple. See `truncation_ripple_adds_peaks` for a pinned counterexample.
    #[test]
    #[ignore = "peak count is not monotone in wsf"]
    fn larger_wsf_never_adds_peaks(bumps in prop::collection::vec((0.0f64..1.0, 0.2f64..1.0, 2.0f64..8.0), 1..6), m in 64usize..200) {
        // energy-like contour: a floor plus smooth syllable bumps
        let contour: Vec<f64> = (0..m)
            .map(|i| {
                0.01 + bumps
                    .iter()
                    .map(|&(c, a, w)| a * (-(i as f64 - c * m as f64).powi(2) / (2.0 * w * w)).exp())
                    .sum::<f64>()
            })
            .collect();
        let mut last = usize::MAX;
        for wsf in [1usize, 2, 4, 8, 16, 32] {
            let cfg = GroupDelayConfig { wsf, ..GroupDelayConfig::default() };
            let tau = group_delay_of_contour(&contour, &cfg).unwrap();
            let n = pick_peaks(&tau, 3).len();
            prop_assert!(n <= last, "wsf {}: {} peaks after {}", wsf, n, last);
            last = n;
        }
    }
}

#[test]
fn truncation_ripple_adds_peaks() {
    let c: Vec<f64> = (0..64).map(|i| 0.01 + 0.2 * (-(i as f64).powi(2) / 8.0).exp()).collect();
    let count = |wsf| {
        let tau = group_delay_of_contour(&c, &GroupDelayConfig { wsf, ..GroupDelayConfig::default() }).unwrap();
        pick_peaks(&tau, 3).len()
    };
    assert_eq!([1, 2, 4, 8, 16, 32].map(count), [1, 1, 1, 3, 1, 0]);
}

#[test]
fn single_valley_peaks_at_its_center() {
    for m0 in [40usize, 64, 90] {
        let e: Vec<f64> = (0..128)
            .map(|i| 1.0 - 0.9 * (-((i as f64 - m0 as f64).powi(2)) / 32.0).exp())
            .collect();
        let tau = group_delay_of_contour(&e, &GroupDelayConfig::default()).unwrap();
        let arg = (0..tau.len()).max_by(|&a, &b| tau[a].total_cmp(&tau[b])).unwrap();
        assert!(arg.abs_diff(m0) <= 1, "valley at {m0}, peak at {arg}");
    }
}

#[test]
fn two_valleys_an_eighth_apart_are_resolved() {
    let m = 128;
    let (m1, m2) = (52.0, 52.0 + m as f64 / 8.0);
    let e: Vec<f64> = (0..m)
        .map(|i| {
            let x = i as f64;
            1.0 - 0.9 * (-(x - m1).powi(2) / 8.0).exp() - 0.9 * (-(x - m2).powi(2) / 8.0).exp()
        })
        .collect();
    let tau = group_delay_of_contour(&e, &GroupDelayConfig { wsf: 4, ..GroupDelayConfig::default() }).unwrap();
    let peaks = pick_peaks(&tau, 4);
    assert_eq!(peaks.len(), 2, "{peaks:?}");
    assert!(peaks[0].abs_diff(52) <= 2 && peaks[1].abs_diff(68) <= 2, "{peaks:?}");
}

#[test]
fn silence_and_speech_are_labeled() {
    let a = burst_signal(&[(0.3, false), (0.3, true), (0.3, false)], 16000, 1);
    let segs = segment_syllables(&a, &raw_frames(), &GroupDelayConfig::default()).unwrap();
    let kinds: Vec<SegmentKind> = segs.iter().map(|s| s.kind).collect();
    assert_eq!(kinds, [SegmentKind::Silence, SegmentKind::Syllable, SegmentKind::Silence]);
}
