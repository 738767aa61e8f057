//! Dynamic time warping between feature sequences.

use serde::{Deserialize, Serialize};

use crate::error::{AudError, Result};
use crate::features::FeatureSequence;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LocalDistance {
    Euclidean,
    /// `1 - cos(x, y)`; zero vectors are at distance 1 from anything but another zero vector.
    Cosine,
}

/// Step weights: `symmetric1` charges every visited cell once, `symmetric2` charges
/// diagonal steps twice so that the total weight of any path is `n + m`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StepPattern {
    Symmetric1,
    Symmetric2,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DtwConfig {
    pub local_distance: LocalDistance,
    pub step_pattern: StepPattern,
    /// Sakoe-Chiba half-width as a fraction of the longer sequence.
    pub band_ratio: f64,
    pub length_normalize: bool,
}

impl Default for DtwConfig {
    fn default() -> Self {
        Self {
            local_distance: LocalDistance::Euclidean,
            step_pattern: StepPattern::Symmetric2,
            band_ratio: 1.0,
            length_normalize: true,
        }
    }
}

impl DtwConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.band_ratio > 0.0 && self.band_ratio <= 1.0) {
            return Err(AudError::Config(format!("band ratio {} outside (0, 1]", self.band_ratio)));
        }
        Ok(())
    }

    /// Band half-width in frames for sequences of length `n` and `m`.
    pub fn band(&self, n: usize, m: usize) -> usize {
        (self.band_ratio * n.max(m) as f64).ceil() as usize
    }
}

pub fn local_distance(kind: LocalDistance, x: &[f64], y: &[f64]) -> f64 {
    match kind {
        LocalDistance::Euclidean => x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt(),
        LocalDistance::Cosine => {
            let dot: f64 = x.iter().zip(y).map(|(a, b)| a * b).sum();
            let nx = x.iter().map(|a| a * a).sum::<f64>().sqrt();
            let ny = y.iter().map(|a| a * a).sum::<f64>().sqrt();
            match (nx > 0.0, ny > 0.0) {
                (true, true) => (1.0 - dot / (nx * ny)).max(0.0),
                (false, false) => 0.0,
                _ => 1.0,
            }
        }
    }
}

fn check_pair(a: &FeatureSequence, b: &FeatureSequence, cfg: &DtwConfig) -> Result<()> {
    cfg.validate()?;
    if a.dim() != b.dim() {
        return Err(AudError::DimensionMismatch {
            expected: a.dim(),
            got: b.dim(),
        });
    }
    Ok(())
}

/// Minimal accumulated local distance over monotonic alignments, optionally normalized
/// by path length (`symmetric1`: cells on the chosen path; `symmetric2`: `n + m`).
pub fn dtw_distance(a: &FeatureSequence, b: &FeatureSequence, cfg: &DtwConfig) -> Result<f64> {
    check_pair(a, b, cfg)?;
    let (n, m) = (a.len(), b.len());
    let band = cfg.band(n, m);
    if n.abs_diff(m) > band {
        return Err(AudError::InfeasibleBand {
            len_a: n,
            len_b: m,
            band,
        });
    }
    let inside = |i: usize, j: usize| i.abs_diff(j) <= band;

    // cost and number of cells of the best path ending at each cell, row by row
    let mut prev = vec![(f64::INFINITY, 0usize); m];
    let mut cur = vec![(f64::INFINITY, 0usize); m];
    for i in 0..n {
        for j in 0..m {
            cur[j] = (f64::INFINITY, 0);
            if !inside(i, j) {
                continue;
            }
            let d = local_distance(cfg.local_distance, a.frame(i), b.frame(j));
            if i == 0 && j == 0 {
                cur[j] = (d, 1);
                continue;
            }
            let diag_w = match cfg.step_pattern {
                StepPattern::Symmetric1 => 1.0,
                StepPattern::Symmetric2 => 2.0,
            };
            let mut best = (f64::INFINITY, 0);
            // diagonal first so that it wins ties
            if i > 0 && j > 0 && prev[j - 1].0 < f64::INFINITY {
                best = (prev[j - 1].0 + diag_w * d, prev[j - 1].1 + 1);
            }
            if i > 0 && prev[j].0 + d < best.0 {
                best = (prev[j].0 + d, prev[j].1 + 1);
            }
            if j > 0 && cur[j - 1].0 + d < best.0 {
                best = (cur[j - 1].0 + d, cur[j - 1].1 + 1);
            }
            cur[j] = best;
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    let (cost, cells) = prev[m - 1];
    if !cost.is_finite() {
        return Err(AudError::InfeasibleBand {
            len_a: n,
            len_b: m,
            band,
        });
    }
    Ok(if cfg.length_normalize {
        match cfg.step_pattern {
            StepPattern::Symmetric1 => cost / cells as f64,
            StepPattern::Symmetric2 => cost / (n + m) as f64,
        }
    } else {
        cost
    })
}

/// Unnormalized cost of an explicit alignment path under the step pattern. The path must
/// start at `(0, 0)`, end at `(n-1, m-1)` and advance by unit steps.
pub fn path_cost(a: &FeatureSequence, b: &FeatureSequence, cfg: &DtwConfig, path: &[(usize, usize)]) -> Result<f64> {
    check_pair(a, b, cfg)?;
    let valid_end = path.last() == Some(&(a.len() - 1, b.len() - 1));
    if path.first() != Some(&(0, 0)) || !valid_end {
        return Err(AudError::Config("path must run from (0,0) to (n-1,m-1)".into()));
    }
    let mut cost = local_distance(cfg.local_distance, a.frame(0), b.frame(0));
    for w in path.windows(2) {
        let (di, dj) = (w[1].0.wrapping_sub(w[0].0), w[1].1.wrapping_sub(w[0].1));
        let d = local_distance(cfg.local_distance, a.frame(w[1].0), b.frame(w[1].1));
        cost += match (di, dj, cfg.step_pattern) {
            (1, 1, StepPattern::Symmetric2) => 2.0 * d,
            (1, 1, _) | (1, 0, _) | (0, 1, _) => d,
            _ => return Err(AudError::Config(format!("invalid step {:?} -> {:?}", w[0], w[1]))),
        };
    }
    Ok(cost)
}
