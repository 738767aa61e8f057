//! Diagonal-covariance Gaussian mixtures and their sufficient statistics.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{AudError, Result};

const LN_2PI: f64 = 1.837_877_066_409_345_3; // ln(2π)

/// Weights below this are treated as dead components when re-estimating.
pub const MIN_OCCUPANCY: f64 = 1e-10;
const WEIGHT_FLOOR: f64 = 1e-6;

pub fn log_sum_exp(values: &[f64]) -> f64 {
    let max = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    max + values.iter().map(|v| (v - max).exp()).sum::<f64>().ln()
}

pub fn log_gaussian_diag(x: &[f64], mean: &[f64], var: &[f64]) -> f64 {
    let mut acc = 0.0;
    for ((x, m), v) in x.iter().zip(mean).zip(var) {
        acc += (x - m) * (x - m) / v + v.ln() + LN_2PI;
    }
    -0.5 * acc
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaussianMixture {
    pub weights: Vec<f64>,
    pub means: Vec<Vec<f64>>,
    pub variances: Vec<Vec<f64>>,
}

impl GaussianMixture {
    pub fn single(mean: Vec<f64>, variance: Vec<f64>) -> Self {
        Self {
            weights: vec![1.0],
            means: vec![mean],
            variances: vec![variance],
        }
    }

    pub fn n_components(&self) -> usize {
        self.weights.len()
    }

    pub fn dim(&self) -> usize {
        self.means.first().map_or(0, Vec::len)
    }

    pub fn validate(&self, floor: &[f64]) -> Result<()> {
        let c = self.n_components();
        if c == 0 || self.means.len() != c || self.variances.len() != c {
            return Err(AudError::Format("mixture component arrays disagree".into()));
        }
        let d = self.dim();
        if self.means.iter().chain(&self.variances).any(|v| v.len() != d) {
            return Err(AudError::Format("mixture dimension mismatch".into()));
        }
        let wsum: f64 = self.weights.iter().sum();
        if (wsum - 1.0).abs() > 1e-9 || self.weights.iter().any(|w| !(*w >= 0.0)) {
            return Err(AudError::Format(format!("mixture weights sum to {wsum}")));
        }
        for var in &self.variances {
            for (v, f) in var.iter().zip(floor) {
                if !(v.is_finite() && *v >= *f && *v > 0.0) {
                    return Err(AudError::Format(format!("variance {v} below floor {f}")));
                }
            }
        }
        if self.means.iter().flatten().any(|m| !m.is_finite()) {
            return Err(AudError::Format("non-finite mixture mean".into()));
        }
        Ok(())
    }

    /// Precomputes per-component constants for fast scoring.
    pub fn prepare(&self) -> PreparedMixture {
        let comps = (0..self.n_components())
            .map(|c| {
                let var = &self.variances[c];
                let log_det: f64 = var.iter().map(|v| v.ln()).sum();
                PreparedComponent {
                    log_const: self.weights[c].ln() - 0.5 * (log_det + var.len() as f64 * (2.0 * PI).ln()),
                    mean: self.means[c].clone(),
                    inv_var: var.iter().map(|v| 1.0 / v).collect(),
                }
            })
            .collect();
        PreparedMixture { comps }
    }

    pub fn log_likelihood(&self, x: &[f64]) -> f64 {
        let lp: Vec<f64> = (0..self.n_components())
            .map(|c| self.weights[c].ln() + log_gaussian_diag(x, &self.means[c], &self.variances[c]))
            .collect();
        log_sum_exp(&lp)
    }

    /// Splits components until there are `target` of them. Each split replaces a component
    /// by two with means `μ ± 0.2σ` and half the weight. When `target` is at least double the
    /// current count, every component is split once per round.
    pub fn split_to(&mut self, target: usize) {
        while self.n_components() < target {
            let need = target - self.n_components();
            let mut order: Vec<usize> = (0..self.n_components()).collect();
            order.sort_by(|&a, &b| self.weights[b].total_cmp(&self.weights[a]).then(a.cmp(&b)));
            for &c in order.iter().take(need) {
                let sd: Vec<f64> = self.variances[c].iter().map(|v| v.sqrt()).collect();
                let up: Vec<f64> = self.means[c].iter().zip(&sd).map(|(m, s)| m + 0.2 * s).collect();
                let down: Vec<f64> = self.means[c].iter().zip(&sd).map(|(m, s)| m - 0.2 * s).collect();
                self.weights[c] *= 0.5;
                self.means[c] = down;
                self.weights.push(self.weights[c]);
                self.means.push(up);
                self.variances.push(self.variances[c].clone());
            }
        }
    }
}

#[derive(Debug, Clone)]
struct PreparedComponent {
    log_const: f64,
    mean: Vec<f64>,
    inv_var: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct PreparedMixture {
    comps: Vec<PreparedComponent>,
}

impl PreparedMixture {
    /// `ln w_c + ln N(x; μ_c, σ²_c)` per component, written into `out`.
    pub fn component_scores(&self, x: &[f64], out: &mut Vec<f64>) {
        out.clear();
        out.extend(self.comps.iter().map(|c| {
            let mut q = 0.0;
            for ((x, m), iv) in x.iter().zip(&c.mean).zip(&c.inv_var) {
                let d = x - m;
                q += d * d * iv;
            }
            c.log_const - 0.5 * q
        }));
    }

    pub fn log_likelihood(&self, x: &[f64]) -> f64 {
        let mut buf = Vec::with_capacity(self.comps.len());
        self.component_scores(x, &mut buf);
        log_sum_exp(&buf)
    }

    /// Log-likelihood and normalized component posteriors.
    pub fn posteriors(&self, x: &[f64], post: &mut Vec<f64>) -> f64 {
        self.component_scores(x, post);
        let ll = log_sum_exp(post);
        post.iter_mut().for_each(|p| *p = (*p - ll).exp());
        ll
    }
}

/// Zeroth, first and second order statistics, accumulated relative to a per-component
/// shift (the previous means) to keep the variance computation well conditioned.
#[derive(Debug, Clone, PartialEq)]
pub struct MixtureStats {
    pub occupancy: Vec<f64>,
    shift: Vec<Vec<f64>>,
    sum: Vec<Vec<f64>>,
    sum_sq: Vec<Vec<f64>>,
}

impl MixtureStats {
    pub fn new(reference: &GaussianMixture) -> Self {
        let c = reference.n_components();
        let d = reference.dim();
        Self {
            occupancy: vec![0.0; c],
            shift: reference.means.clone(),
            sum: vec![vec![0.0; d]; c],
            sum_sq: vec![vec![0.0; d]; c],
        }
    }

    pub fn add(&mut self, x: &[f64], posteriors: &[f64]) {
        for (c, &g) in posteriors.iter().enumerate() {
            if g == 0.0 {
                continue;
            }
            self.occupancy[c] += g;
            for d in 0..x.len() {
                let dx = x[d] - self.shift[c][d];
                self.sum[c][d] += g * dx;
                self.sum_sq[c][d] += g * dx * dx;
            }
        }
    }

    pub fn merge(&mut self, other: &MixtureStats) {
        for c in 0..self.occupancy.len() {
            self.occupancy[c] += other.occupancy[c];
            for d in 0..self.sum[c].len() {
                self.sum[c][d] += other.sum[c][d];
                self.sum_sq[c][d] += other.sum_sq[c][d];
            }
        }
    }

    /// Data mean assigned to component `c`.
    pub fn mean(&self, c: usize) -> Vec<f64> {
        let n = self.occupancy[c];
        self.shift[c].iter().zip(&self.sum[c]).map(|(s, x)| s + x / n).collect()
    }

    /// Maximum-likelihood update. Components with no occupancy keep their previous
    /// parameters; weights are floored and renormalized; variances floored.
    pub fn update(&self, previous: &GaussianMixture, floor: &[f64]) -> (GaussianMixture, usize) {
        let total: f64 = self.occupancy.iter().sum();
        let mut out = previous.clone();
        let mut dead = 0;
        for c in 0..self.occupancy.len() {
            let n = self.occupancy[c];
            if n < MIN_OCCUPANCY {
                dead += 1;
                out.weights[c] = 0.0;
                continue;
            }
            out.weights[c] = n / total;
            for d in 0..self.sum[c].len() {
                let m = self.sum[c][d] / n;
                let v = self.sum_sq[c][d] / n - m * m;
                out.means[c][d] = self.shift[c][d] + m;
                out.variances[c][d] = v.max(floor[d]);
            }
        }
        if total < MIN_OCCUPANCY {
            return (previous.clone(), dead);
        }
        if out.weights.iter().any(|&w| w < WEIGHT_FLOOR) {
            out.weights.iter_mut().for_each(|w| *w = w.max(WEIGHT_FLOOR));
        }
        let s: f64 = out.weights.iter().sum();
        out.weights.iter_mut().for_each(|w| *w /= s);
        (out, dead)
    }
}
