//! Framing, short-time energy and MFCC extraction.

use std::f64::consts::PI;
use std::ops::Range;

use rustfft::num_complex::Complex;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::audio::AudioBuffer;
use crate::error::{AudError, Result};

/// Floor applied to filterbank energies before the log.
pub const LOG_FLOOR: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Window {
    Rectangular,
    Hamming,
}

impl Window {
    pub fn coefficients(self, len: usize) -> Vec<f64> {
        match self {
            Window::Rectangular => vec![1.0; len],
            Window::Hamming if len == 1 => vec![1.0],
            Window::Hamming => (0..len)
                .map(|n| 0.54 - 0.46 * (2.0 * PI * n as f64 / (len - 1) as f64).cos())
                .collect(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FrameConfig {
    pub frame_len_ms: f64,
    pub hop_ms: f64,
    pub pre_emphasis: f64,
    pub window: Window,
}

impl Default for FrameConfig {
    fn default() -> Self {
        Self {
            frame_len_ms: 25.0,
            hop_ms: 10.0,
            pre_emphasis: 0.97,
            window: Window::Hamming,
        }
    }
}

impl FrameConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.hop_ms > 0.0 && self.hop_ms <= self.frame_len_ms) {
            return Err(AudError::Config(format!(
                "need 0 < hop ({} ms) <= frame length ({} ms)",
                self.hop_ms, self.frame_len_ms
            )));
        }
        if !(0.0..1.0).contains(&self.pre_emphasis) {
            return Err(AudError::Config(format!(
                "pre-emphasis {} outside [0, 1)",
                self.pre_emphasis
            )));
        }
        Ok(())
    }

    pub fn frame_samples(&self, sample_rate: u32) -> usize {
        ((self.frame_len_ms * sample_rate as f64 / 1000.0).round() as usize).max(1)
    }

    pub fn hop_samples(&self, sample_rate: u32) -> usize {
        ((self.hop_ms * sample_rate as f64 / 1000.0).round() as usize).max(1)
    }

    /// Number of whole frames that fit in `n_samples`.
    pub fn frame_count(&self, n_samples: usize, sample_rate: u32) -> usize {
        let fl = self.frame_samples(sample_rate);
        if n_samples < fl {
            0
        } else {
            (n_samples - fl) / self.hop_samples(sample_rate) + 1
        }
    }

    /// Center time of frame `m`, in seconds.
    pub fn frame_time(&self, m: usize, sample_rate: u32) -> f64 {
        let start = m * self.hop_samples(sample_rate);
        (start as f64 + self.frame_samples(sample_rate) as f64 / 2.0) / sample_rate as f64
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FeatureKind {
    Mfcc,
    Energy,
}

/// Time-ordered frames of equal-dimension feature vectors, stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureSequence {
    data: Vec<f64>,
    dim: usize,
    frame_times: Vec<f64>,
    kind: FeatureKind,
}

impl FeatureSequence {
    pub fn new(data: Vec<f64>, dim: usize, frame_times: Vec<f64>, kind: FeatureKind) -> Result<Self> {
        if dim == 0 || data.is_empty() || !data.len().is_multiple_of(dim) {
            return Err(AudError::Format(format!(
                "feature buffer of {} values does not hold whole frames of dim {dim}",
                data.len()
            )));
        }
        let t = data.len() / dim;
        if frame_times.len() != t {
            return Err(AudError::Format(format!(
                "{t} frames but {} timestamps",
                frame_times.len()
            )));
        }
        if frame_times.windows(2).any(|w| w[1] <= w[0]) {
            return Err(AudError::Format("frame times not strictly increasing".into()));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(AudError::Format("non-finite feature value".into()));
        }
        if kind == FeatureKind::Energy && (dim != 1 || data.iter().any(|&v| v < 0.0)) {
            return Err(AudError::Format("energy features must be 1-dim and non-negative".into()));
        }
        Ok(Self {
            data,
            dim,
            frame_times,
            kind,
        })
    }

    /// Builds a sequence with frame times `0, 1, 2, ...` (seconds). Handy for synthetic data.
    pub fn from_frames(frames: &[Vec<f64>], kind: FeatureKind) -> Result<Self> {
        let dim = frames.first().map(Vec::len).unwrap_or(0);
        if frames.iter().any(|f| f.len() != dim) {
            return Err(AudError::Format("ragged frames".into()));
        }
        let times = (0..frames.len()).map(|t| t as f64).collect();
        Self::new(frames.concat(), dim, times, kind)
    }

    pub fn len(&self) -> usize {
        self.data.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn kind(&self) -> FeatureKind {
        self.kind
    }

    pub fn frame(&self, t: usize) -> &[f64] {
        &self.data[t * self.dim..(t + 1) * self.dim]
    }

    pub fn frames(&self) -> impl ExactSizeIterator<Item = &[f64]> {
        self.data.chunks_exact(self.dim)
    }

    pub fn frame_times(&self) -> &[f64] {
        &self.frame_times
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    /// Energy contour values (first column).
    pub fn column(&self, d: usize) -> Vec<f64> {
        self.frames().map(|f| f[d]).collect()
    }

    pub fn slice(&self, range: Range<usize>) -> Result<Self> {
        if range.start >= range.end || range.end > self.len() {
            return Err(AudError::EmptyInput(format!(
                "frame range {range:?} outside 0..{}",
                self.len()
            )));
        }
        Ok(Self {
            data: self.data[range.start * self.dim..range.end * self.dim].to_vec(),
            dim: self.dim,
            frame_times: self.frame_times[range].to_vec(),
            kind: self.kind,
        })
    }

    /// Frames whose center time lies in `[start_s, end_s)`.
    pub fn frames_between(&self, start_s: f64, end_s: f64) -> Range<usize> {
        let a = self.frame_times.partition_point(|&t| t < start_s);
        let b = self.frame_times.partition_point(|&t| t < end_s);
        a..b.max(a)
    }

    /// Subtracts the per-dimension mean over all frames.
    pub fn subtract_mean(&mut self) {
        let t = self.len() as f64;
        let mut mean = vec![0.0; self.dim];
        for f in self.data.chunks_exact(self.dim) {
            for (m, v) in mean.iter_mut().zip(f) {
                *m += v;
            }
        }
        mean.iter_mut().for_each(|m| *m /= t);
        for f in self.data.chunks_exact_mut(self.dim) {
            for (v, m) in f.iter_mut().zip(&mean) {
                *v -= m;
            }
        }
    }
}

fn check_length(audio: &AudioBuffer, cfg: &FrameConfig) -> Result<usize> {
    cfg.validate()?;
    let t = cfg.frame_count(audio.len(), audio.sample_rate);
    if t == 0 {
        return Err(AudError::EmptyInput(format!(
            "{}: {} samples is shorter than one {} ms frame",
            audio.utterance_id, audio.len(), cfg.frame_len_ms
        )));
    }
    Ok(t)
}

/// `E[m] = sum_n (w[n] x[m*hop + n])^2`. Pre-emphasis is not applied.
pub fn short_time_energy(audio: &AudioBuffer, cfg: &FrameConfig) -> Result<FeatureSequence> {
    let t = check_length(audio, cfg)?;
    let sr = audio.sample_rate;
    let fl = cfg.frame_samples(sr);
    let hop = cfg.hop_samples(sr);
    let w = cfg.window.coefficients(fl);
    let energy: Vec<f64> = (0..t)
        .map(|m| {
            audio.samples[m * hop..m * hop + fl]
                .iter()
                .zip(&w)
                .map(|(x, w)| (w * x) * (w * x))
                .sum()
        })
        .collect();
    let times = (0..t).map(|m| cfg.frame_time(m, sr)).collect();
    FeatureSequence::new(energy, 1, times, FeatureKind::Energy)
}

pub fn hz_to_mel(hz: f64) -> f64 {
    2595.0 * (1.0 + hz / 700.0).log10()
}

pub fn mel_to_hz(mel: f64) -> f64 {
    700.0 * (10f64.powf(mel / 2595.0) - 1.0)
}

/// Triangular mel filters spanning `0..sample_rate/2` over the bins of an `n_fft`-point DFT.
#[derive(Debug, Clone)]
pub struct MelFilterbank {
    /// `n_mels` rows of `n_fft/2 + 1` weights.
    pub weights: Vec<Vec<f64>>,
    pub center_hz: Vec<f64>,
    pub n_fft: usize,
}

impl MelFilterbank {
    pub fn new(n_mels: usize, n_fft: usize, sample_rate: u32) -> Result<Self> {
        if n_mels == 0 {
            return Err(AudError::Config("n_mels must be at least 1".into()));
        }
        let nyquist = sample_rate as f64 / 2.0;
        let top = hz_to_mel(nyquist);
        let edges: Vec<f64> = (0..n_mels + 2)
            .map(|i| mel_to_hz(top * i as f64 / (n_mels + 1) as f64))
            .collect();
        let n_bins = n_fft / 2 + 1;
        let bin_hz = sample_rate as f64 / n_fft as f64;
        let weights = (0..n_mels)
            .map(|k| {
                let (lo, mid, hi) = (edges[k], edges[k + 1], edges[k + 2]);
                (0..n_bins)
                    .map(|b| {
                        let f = b as f64 * bin_hz;
                        if f <= lo || f >= hi {
                            0.0
                        } else if f <= mid {
                            (f - lo) / (mid - lo)
                        } else {
                            (hi - f) / (hi - mid)
                        }
                    })
                    .collect()
            })
            .collect();
        Ok(Self {
            weights,
            center_hz: edges[1..=n_mels].to_vec(),
            n_fft,
        })
    }

    pub fn apply(&self, magnitude: &[f64]) -> Vec<f64> {
        self.weights
            .iter()
            .map(|w| w.iter().zip(magnitude).map(|(w, m)| w * m).sum())
            .collect()
    }
}

/// Orthonormal DCT-II, keeping the first `n_out` coefficients.
pub fn dct2(input: &[f64], n_out: usize) -> Vec<f64> {
    let n = input.len() as f64;
    (0..n_out)
        .map(|i| {
            let scale = if i == 0 { (1.0 / n).sqrt() } else { (2.0 / n).sqrt() };
            scale
                * input
                    .iter()
                    .enumerate()
                    .map(|(j, x)| x * (PI * i as f64 * (j as f64 + 0.5) / n).cos())
                    .sum::<f64>()
        })
        .collect()
}

/// Per-frame mel filterbank energies (before the log): pre-emphasis, window, |DFT|, filterbank.
pub fn mel_energies(audio: &AudioBuffer, cfg: &FrameConfig, n_mels: usize) -> Result<Vec<Vec<f64>>> {
    let t = check_length(audio, cfg)?;
    let sr = audio.sample_rate;
    let fl = cfg.frame_samples(sr);
    let hop = cfg.hop_samples(sr);
    let n_fft = fl.next_power_of_two();
    let bank = MelFilterbank::new(n_mels, n_fft, sr)?;
    let w = cfg.window.coefficients(fl);

    let x = &audio.samples;
    let a = cfg.pre_emphasis;
    let emphasized: Vec<f64> = (0..x.len())
        .map(|n| if n == 0 { x[0] } else { x[n] - a * x[n - 1] })
        .collect();

    let fft = FftPlanner::<f64>::new().plan_fft_forward(n_fft);
    let mut buf = vec![Complex::new(0.0, 0.0); n_fft];
    let mut out = Vec::with_capacity(t);
    for m in 0..t {
        buf.iter_mut().for_each(|c| *c = Complex::new(0.0, 0.0));
        for (n, (s, w)) in emphasized[m * hop..m * hop + fl].iter().zip(&w).enumerate() {
            buf[n].re = s * w;
        }
        fft.process(&mut buf);
        let mag: Vec<f64> = buf[..n_fft / 2 + 1].iter().map(|c| c.norm()).collect();
        out.push(bank.apply(&mag));
    }
    Ok(out)
}

/// Static MFCCs: `n_ceps` DCT-II coefficients of the floored log mel energies.
pub fn mfcc(audio: &AudioBuffer, cfg: &FrameConfig, n_mels: usize, n_ceps: usize) -> Result<FeatureSequence> {
    if n_mels == 0 {
        return Err(AudError::Config("n_mels must be at least 1".into()));
    }
    if n_ceps == 0 || n_ceps > n_mels {
        return Err(AudError::Config(format!(
            "n_ceps = {n_ceps} must be in 1..={n_mels}"
        )));
    }
    let energies = mel_energies(audio, cfg, n_mels)?;
    let t = energies.len();
    let data: Vec<f64> = energies
        .iter()
        .flat_map(|e| {
            let logs: Vec<f64> = e.iter().map(|v| v.max(LOG_FLOOR).ln()).collect();
            dct2(&logs, n_ceps)
        })
        .collect();
    let times = (0..t).map(|m| cfg.frame_time(m, audio.sample_rate)).collect();
    FeatureSequence::new(data, n_ceps, times, FeatureKind::Mfcc)
}

/// Regression deltas over `±width` frames with edge replication.
pub fn deltas(frames: &[Vec<f64>], width: usize) -> Vec<Vec<f64>> {
    let t = frames.len();
    let denom: f64 = 2.0 * (1..=width).map(|n| (n * n) as f64).sum::<f64>();
    (0..t)
        .map(|i| {
            let dim = frames[i].len();
            (0..dim)
                .map(|d| {
                    (1..=width)
                        .map(|n| {
                            let next = frames[(i + n).min(t - 1)][d];
                            let prev = frames[i.saturating_sub(n)][d];
                            n as f64 * (next - prev)
                        })
                        .sum::<f64>()
                        / denom
                })
                .collect()
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MfccConfig {
    pub frame: FrameConfig,
    pub n_mels: usize,
    pub n_ceps: usize,
    /// Append first and second order deltas.
    pub deltas: bool,
    /// Per-utterance cepstral mean subtraction.
    pub cms: bool,
}

impl Default for MfccConfig {
    fn default() -> Self {
        Self {
            frame: FrameConfig::default(),
            n_mels: 26,
            n_ceps: 13,
            deltas: true,
            cms: false,
        }
    }
}

impl MfccConfig {
    /// Long-window static MFCCs used for gender identification.
    pub fn long_window() -> Self {
        Self {
            frame: FrameConfig {
                frame_len_ms: 100.0,
                hop_ms: 40.0,
                ..FrameConfig::default()
            },
            deltas: false,
            ..Self::default()
        }
    }

    pub fn dim(&self) -> usize {
        if self.deltas {
            3 * self.n_ceps
        } else {
            self.n_ceps
        }
    }
}

/// MFCCs with optional Δ/ΔΔ and mean subtraction, as configured.
pub fn extract(audio: &AudioBuffer, cfg: &MfccConfig) -> Result<FeatureSequence> {
    let base = mfcc(audio, &cfg.frame, cfg.n_mels, cfg.n_ceps)?;
    let mut seq = if cfg.deltas {
        let stat: Vec<Vec<f64>> = base.frames().map(<[f64]>::to_vec).collect();
        let d1 = deltas(&stat, 2);
        let d2 = deltas(&d1, 2);
        let data: Vec<f64> = stat
            .iter()
            .zip(&d1)
            .zip(&d2)
            .flat_map(|((s, a), b)| s.iter().chain(a).chain(b).copied().collect::<Vec<_>>())
            .collect();
        FeatureSequence::new(data, 3 * cfg.n_ceps, base.frame_times().to_vec(), FeatureKind::Mfcc)?
    } else {
        base
    };
    if cfg.cms {
        seq.subtract_mean();
    }
    Ok(seq)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn buffer(samples: Vec<f64>) -> AudioBuffer {
        AudioBuffer::new("t", 16000, samples).unwrap()
    }

    fn rect(frame_ms: f64, hop_ms: f64) -> FrameConfig {
        FrameConfig {
            frame_len_ms: frame_ms,
            hop_ms,
            pre_emphasis: 0.0,
            window: Window::Rectangular,
        }
    }

    #[test]
    fn frame_count_arithmetic() {
        // 160 samples = 10 ms, 80 samples = 5 ms at 16 kHz
        let e = short_time_energy(&buffer(vec![0.1; 400]), &rect(10.0, 5.0)).unwrap();
        assert_eq!(e.len(), 4);
    }

    #[test]
    fn silence_has_zero_energy() {
        let e = short_time_energy(&buffer(vec![0.0; 1600]), &FrameConfig::default()).unwrap();
        assert!(e.as_slice().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn sinusoid_energy_is_half_frame_length() {
        let sr = 16000.0;
        let x: Vec<f64> = (0..16000).map(|n| (2.0 * PI * 440.0 * n as f64 / sr).sin()).collect();
        let cfg = rect(50.0, 10.0);
        let e = short_time_energy(&buffer(x.clone()), &cfg).unwrap();
        let fl = cfg.frame_samples(16000);
        for (m, &v) in e.as_slice().iter().enumerate() {
            // direct summation oracle
            let direct: f64 = x[m * 160..m * 160 + fl].iter().map(|s| s * s).sum();
            assert!((v - direct).abs() < 1e-9);
            assert!((v - fl as f64 / 2.0).abs() / (fl as f64 / 2.0) < 0.02);
        }
    }

    #[test]
    fn too_short_is_empty_input() {
        let err = short_time_energy(&buffer(vec![0.0; 100]), &FrameConfig::default()).unwrap_err();
        assert!(matches!(err, AudError::EmptyInput(_)));
    }

    #[test]
    fn bad_frame_config() {
        let cfg = FrameConfig {
            hop_ms: 30.0,
            ..FrameConfig::default()
        };
        assert!(cfg.validate().is_err());
        let cfg = FrameConfig {
            pre_emphasis: 1.0,
            ..FrameConfig::default()
        };
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn silence_mfcc_is_dct_of_log_floor() {
        let seq = mfcc(&buffer(vec![0.0; 4000]), &FrameConfig::default(), 26, 13).unwrap();
        let expected = dct2(&[LOG_FLOOR.ln(); 26], 13);
        for f in seq.frames() {
            assert_eq!(f, expected.as_slice());
        }
    }

    #[test]
    fn mfcc_config_errors() {
        let a = buffer(vec![0.0; 4000]);
        assert!(matches!(mfcc(&a, &FrameConfig::default(), 0, 0), Err(AudError::Config(_))));
        assert!(matches!(mfcc(&a, &FrameConfig::default(), 10, 11), Err(AudError::Config(_))));
    }

    #[test]
    fn mfcc_is_deterministic_and_matches_ste_frame_count() {
        let x: Vec<f64> = (0..8000).map(|n| ((n * 7919) % 101) as f64 / 101.0 - 0.5).collect();
        let a = buffer(x);
        let cfg = FrameConfig::default();
        let m1 = mfcc(&a, &cfg, 26, 13).unwrap();
        let m2 = mfcc(&a, &cfg, 26, 13).unwrap();
        assert_eq!(m1, m2);
        assert_eq!(m1.len(), short_time_energy(&a, &cfg).unwrap().len());
    }

    #[test]
    fn dct_of_constant_concentrates_in_c0() {
        let c = dct2(&[2.0; 8], 4);
        assert!((c[0] - 2.0 * 8f64.sqrt()).abs() < 1e-12);
        assert!(c[1..].iter().all(|v| v.abs() < 1e-12));
    }

    #[test]
    fn deltas_of_linear_ramp() {
        let frames: Vec<Vec<f64>> = (0..10).map(|t| vec![t as f64]).collect();
        let d = deltas(&frames, 2);
        for row in &d[2..8] {
            assert!((row[0] - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn extract_dims_and_cms() {
        let x: Vec<f64> = (0..8000).map(|n| (n as f64 * 0.05).sin() * 0.3).collect();
        let a = buffer(x);
        let cfg = MfccConfig {
            cms: true,
            ..MfccConfig::default()
        };
        let f = extract(&a, &cfg).unwrap();
        assert_eq!(f.dim(), 39);
        for d in 0..39 {
            let mean: f64 = f.column(d).iter().sum::<f64>() / f.len() as f64;
            assert!(mean.abs() < 1e-9);
        }
    }

    #[test]
    fn frames_between_uses_centers() {
        let f = FeatureSequence::from_frames(&[vec![0.0], vec![1.0], vec![2.0], vec![3.0]], FeatureKind::Mfcc).unwrap();
        assert_eq!(f.frames_between(0.5, 2.5), 1..3);
        assert_eq!(f.frames_between(5.0, 6.0), 4..4);
    }

    #[test]
    fn rejects_bad_sequences() {
        assert!(FeatureSequence::new(vec![1.0, 2.0], 1, vec![0.0, 0.0], FeatureKind::Mfcc).is_err());
        assert!(FeatureSequence::new(vec![-1.0], 1, vec![0.0], FeatureKind::Energy).is_err());
        assert!(FeatureSequence::new(vec![f64::INFINITY], 1, vec![0.0], FeatureKind::Mfcc).is_err());
    }
}
