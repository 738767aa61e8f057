//! Syllable-like segmentation from the group delay of the inverted short-time energy.
//!
//! The energy contour is inverted so that inter-syllable valleys become peaks, treated as a
//! magnitude spectrum, and turned into a causal (minimum-phase) sequence by keeping a tapered
//! initial portion of its inverse DFT. Peaks of the group delay of that sequence mark
//! syllable boundaries.

use std::f64::consts::PI;
use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use rustfft::num_complex::Complex;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::audio::AudioBuffer;
use crate::error::{AudError, Result};
use crate::features::{short_time_energy, FeatureKind, FeatureSequence, FrameConfig};

/// Regularizer in the group-delay denominator.
pub const GD_DELTA: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GroupDelayConfig {
    /// Window scale factor: the causal window keeps `M / wsf` samples.
    pub wsf: usize,
    /// `R[m] = 1 / (E[m] + inverse_energy_floor * max(E))`.
    pub inverse_energy_floor: f64,
    pub min_segment_dur_ms: f64,
    /// Silence threshold: the geometric mean of this percentile of the utterance's frame
    /// energies (a noise level) and the complementary one (a speech level). Segments whose
    /// mean energy is below it are labeled silence.
    pub silence_energy_percentile: f64,
}

impl Default for GroupDelayConfig {
    fn default() -> Self {
        Self {
            wsf: 6,
            inverse_energy_floor: 1.0,
            min_segment_dur_ms: 100.0,
            silence_energy_percentile: 5.0,
        }
    }
}

impl GroupDelayConfig {
    pub fn validate(&self) -> Result<()> {
        if self.wsf < 1 {
            return Err(AudError::Config("wsf must be >= 1".into()));
        }
        if !(self.inverse_energy_floor > 0.0) {
            return Err(AudError::Config("inverse energy floor must be > 0".into()));
        }
        if !(self.min_segment_dur_ms > 0.0) {
            return Err(AudError::Config("min segment duration must be > 0".into()));
        }
        if !(0.0..=50.0).contains(&self.silence_energy_percentile) {
            return Err(AudError::Config("silence percentile outside [0, 50]".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SegmentKind {
    Syllable,
    Silence,
}

impl fmt::Display for SegmentKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SegmentKind::Syllable => "syllable",
            SegmentKind::Silence => "silence",
        })
    }
}

impl FromStr for SegmentKind {
    type Err = AudError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "syllable" => Ok(SegmentKind::Syllable),
            "silence" => Ok(SegmentKind::Silence),
            other => Err(AudError::parse("segment kind", format!("`{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Segment {
    pub utterance_id: String,
    pub start: f64,
    pub end: f64,
    pub kind: SegmentKind,
}

impl Segment {
    pub fn duration(&self) -> f64 {
        self.end - self.start
    }
}

/// Group delay of the minimum-phase sequence derived from the inverted energy contour.
/// Returns one value per contour frame.
pub fn min_phase_group_delay(contour: &FeatureSequence, cfg: &GroupDelayConfig) -> Result<Vec<f64>> {
    if contour.kind() != FeatureKind::Energy {
        return Err(AudError::Config("group delay needs an energy contour".into()));
    }
    group_delay_of_contour(contour.as_slice(), cfg)
}

/// Slice form of [`min_phase_group_delay`].
pub fn group_delay_of_contour(energy: &[f64], cfg: &GroupDelayConfig) -> Result<Vec<f64>> {
    cfg.validate()?;
    let m = energy.len();
    if m < 4 {
        return Err(AudError::EmptyInput(format!("contour of {m} frames, need at least 4")));
    }
    if energy.iter().any(|&e| !(e >= 0.0) || !e.is_finite()) {
        return Err(AudError::Degenerate("energy contour must be finite and non-negative".into()));
    }
    let emax = energy.iter().cloned().fold(0.0, f64::max);
    if emax <= 0.0 {
        return Err(AudError::Degenerate("all-zero energy contour".into()));
    }
    let floor = cfg.inverse_energy_floor * emax;
    let inverse: Vec<f64> = energy.iter().map(|&e| 1.0 / (e + floor)).collect();

    // Even extension to length 2M so that the inverse DFT is real and even.
    let n = 2 * m;
    let mut spec = vec![Complex::new(0.0, 0.0); n];
    for k in 0..m {
        spec[k].re = inverse[k];
    }
    spec[m].re = inverse[m - 1];
    for k in 1..m {
        spec[n - k].re = inverse[k];
    }
    let mut planner = FftPlanner::<f64>::new();
    planner.plan_fft_inverse(n).process(&mut spec);
    let c: Vec<f64> = spec.iter().map(|z| z.re / n as f64).collect();

    // Causal part, half-Hann tapered over [0, M/wsf).
    let keep = (m / cfg.wsf).max(1);
    let mut x = vec![Complex::new(0.0, 0.0); n];
    let mut y = vec![Complex::new(0.0, 0.0); n];
    for i in 0..keep {
        let taper = 0.5 * (1.0 + (PI * i as f64 / keep as f64).cos());
        x[i].re = c[i] * taper;
        y[i].re = i as f64 * x[i].re;
    }
    let fft = planner.plan_fft_forward(n);
    fft.process(&mut x);
    fft.process(&mut y);
    Ok((0..m)
        .map(|k| (x[k].re * y[k].re + x[k].im * y[k].im) / (x[k].norm_sqr() + GD_DELTA))
        .collect())
}

/// Indices that exceed `mean + 0.1·std` of `values` and are the maximum of the
/// `±half` neighborhood, which must lie inside the sequence. Ties go to the earliest index.
pub fn pick_peaks(values: &[f64], half: usize) -> Vec<usize> {
    let n = values.len();
    if n == 0 || 2 * half + 1 > n {
        return Vec::new();
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    let std = (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n as f64).sqrt();
    let thr = mean + 0.1 * std;
    (half..n - half)
        .filter(|&i| {
            let v = values[i];
            v > thr
                && values[i - half..i].iter().all(|&u| u < v)
                && values[i + 1..=i + half].iter().all(|&u| u <= v)
        })
        .collect()
}

/// Neighborhood half-width (frames) used for peak picking.
pub fn peak_half_width(fcfg: &FrameConfig, gcfg: &GroupDelayConfig) -> usize {
    ((gcfg.min_segment_dur_ms / 2.0 / fcfg.hop_ms).round() as usize).max(1)
}

/// Boundary frames from group-delay peaks.
pub fn group_delay_boundaries(energy: &[f64], fcfg: &FrameConfig, gcfg: &GroupDelayConfig) -> Result<Vec<usize>> {
    let tau = group_delay_of_contour(energy, gcfg)?;
    Ok(pick_peaks(&tau, peak_half_width(fcfg, gcfg)))
}

/// Baseline for comparison: valleys of the moving-average-smoothed energy, picked with
/// the same peak rule applied to `-smoothed`.
pub fn smoothed_energy_valleys(energy: &[f64], smoothing_frames: usize, half: usize) -> Vec<usize> {
    let n = energy.len();
    let r = smoothing_frames / 2;
    let smoothed: Vec<f64> = (0..n)
        .map(|i| {
            let lo = i.saturating_sub(r);
            let hi = (i + r + 1).min(n);
            -energy[lo..hi].iter().sum::<f64>() / (hi - lo) as f64
        })
        .collect();
    pick_peaks(&smoothed, half)
}

fn percentile(values: &[f64], p: f64) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let pos = p / 100.0 * (v.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    v[lo] + (v[hi] - v[lo]) * (pos - lo as f64)
}

/// `sqrt(P_p · P_(100-p))` over frame energies, each level offset by `1e-12 · max(E)` so
/// that exact digital silence still yields a positive threshold.
pub fn silence_threshold(energy: &[f64], p: f64) -> f64 {
    let eps = 1e-12 * energy.iter().cloned().fold(0.0, f64::max);
    let low = percentile(energy, p) + eps;
    let high = percentile(energy, 100.0 - p) + eps;
    (low * high).sqrt()
}

/// Splits an utterance into syllable and silence segments that exactly cover `[0, duration]`.
pub fn segment_syllables(audio: &AudioBuffer, fcfg: &FrameConfig, gcfg: &GroupDelayConfig) -> Result<Vec<Segment>> {
    gcfg.validate()?;
    let contour = short_time_energy(audio, fcfg)?;
    let energy = contour.as_slice();
    let times = contour.frame_times();
    let duration = audio.duration();
    let emax = energy.iter().cloned().fold(0.0, f64::max);
    let seg = |start, end, kind| Segment {
        utterance_id: audio.utterance_id.clone(),
        start,
        end,
        kind,
    };
    if emax <= 0.0 {
        return Ok(vec![seg(0.0, duration, SegmentKind::Silence)]);
    }
    if energy.len() < 4 {
        return Ok(vec![seg(0.0, duration, SegmentKind::Syllable)]);
    }

    let tau = group_delay_of_contour(energy, gcfg)?;
    let peaks = pick_peaks(&tau, peak_half_width(fcfg, gcfg));
    // (time, strength) for interior boundaries
    let mut bounds: Vec<(f64, f64)> = peaks
        .iter()
        .map(|&i| (times[i], tau[i]))
        .filter(|&(t, _)| t > 0.0 && t < duration)
        .collect();

    let threshold = silence_threshold(energy, gcfg.silence_energy_percentile);
    let mean_energy = |start: f64, end: f64| -> f64 {
        let r = contour.frames_between(start, end);
        if r.is_empty() {
            // nearest frame to the segment center
            let mid = 0.5 * (start + end);
            let i = times.partition_point(|&t| t < mid).min(times.len() - 1);
            energy[i]
        } else {
            energy[r.clone()].iter().sum::<f64>() / r.len() as f64
        }
    };
    let min_dur = gcfg.min_segment_dur_ms / 1000.0;

    loop {
        let edges: Vec<f64> = std::iter::once(0.0)
            .chain(bounds.iter().map(|b| b.0))
            .chain(std::iter::once(duration))
            .collect();
        let kinds: Vec<SegmentKind> = edges
            .windows(2)
            .map(|w| {
                if mean_energy(w[0], w[1]) < threshold {
                    SegmentKind::Silence
                } else {
                    SegmentKind::Syllable
                }
            })
            .collect();
        // Shortest too-short syllable is merged across its weaker boundary.
        let short = edges
            .windows(2)
            .zip(&kinds)
            .enumerate()
            .filter(|(_, (w, k))| **k == SegmentKind::Syllable && w[1] - w[0] < min_dur)
            .min_by(|a, b| (a.1 .0[1] - a.1 .0[0]).total_cmp(&(b.1 .0[1] - b.1 .0[0])))
            .map(|(i, _)| i);
        match short {
            Some(i) if !bounds.is_empty() => {
                // segment i spans edges[i]..edges[i+1]; its boundaries are bounds[i-1] and bounds[i]
                let left = i.checked_sub(1);
                let right = (i < bounds.len()).then_some(i);
                let drop = match (left, right) {
                    (Some(l), Some(r)) => {
                        if bounds[l].1 <= bounds[r].1 {
                            l
                        } else {
                            r
                        }
                    }
                    (Some(l), None) => l,
                    (None, Some(r)) => r,
                    (None, None) => unreachable!(),
                };
                bounds.remove(drop);
            }
            _ => {
                return Ok(edges
                    .windows(2)
                    .zip(kinds)
                    .map(|(w, k)| seg(w[0], w[1], k))
                    .collect())
            }
        }
    }
}

/// Writes `start_s<TAB>end_s<TAB>kind` lines.
pub fn write_segments(path: impl AsRef<Path>, segments: &[Segment]) -> Result<()> {
    let path = path.as_ref();
    let body: String = segments
        .iter()
        .map(|s| format!("{:.6}\t{:.6}\t{}\n", s.start, s.end, s.kind))
        .collect();
    fs::write(path, body).map_err(|e| AudError::io(path, e))
}

pub fn read_segments(path: impl AsRef<Path>, utterance_id: &str) -> Result<Vec<Segment>> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| AudError::io(path, e))?;
    parse_segments(&text, utterance_id).map_err(|e| match e {
        AudError::Parse { message, .. } => AudError::parse(path.display().to_string(), message),
        other => other,
    })
}

pub fn parse_segments(text: &str, utterance_id: &str) -> Result<Vec<Segment>> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(n, line)| {
            let cols: Vec<&str> = line.split('\t').collect();
            if cols.len() != 3 {
                return Err(AudError::parse("segments", format!("line {}: expected 3 columns", n + 1)));
            }
            let num = |s: &str| {
                s.trim()
                    .parse::<f64>()
                    .map_err(|e| AudError::parse("segments", format!("line {}: {e}", n + 1)))
            };
            Ok(Segment {
                utterance_id: utterance_id.to_string(),
                start: num(cols[0])?,
                end: num(cols[1])?,
                kind: cols[2].trim().parse()?,
            })
        })
        .collect()
}

/// Plain-text corpus summary: counts and a syllable duration histogram in 50 ms bins.
pub fn summary_report(all: &[Vec<Segment>]) -> String {
    let syll: Vec<f64> = all
        .iter()
        .flatten()
        .filter(|s| s.kind == SegmentKind::Syllable)
        .map(Segment::duration)
        .collect();
    let silences = all.iter().flatten().filter(|s| s.kind == SegmentKind::Silence).count();
    let mut out = format!(
        "utterances\t{}\nsyllables\t{}\nsilences\t{}\n",
        all.len(),
        syll.len(),
        silences
    );
    if !syll.is_empty() {
        let mean = syll.iter().sum::<f64>() / syll.len() as f64;
        out.push_str(&format!("mean_syllable_s\t{mean:.4}\n"));
    }
    out.push_str("duration_bin_ms\tcount\n");
    let mut hist = std::collections::BTreeMap::new();
    for d in &syll {
        *hist.entry((d * 1000.0 / 50.0).floor() as u64 * 50).or_insert(0usize) += 1;
    }
    for (bin, count) in hist {
        out.push_str(&format!("{bin}-{}\t{count}\n", bin + 50));
    }
    out
}
