use log::warn;
use serde::{Deserialize, Serialize};

use crate::cluster::ClusterAssignment;
use crate::error::{AudError, Result};
use crate::features::FeatureSequence;
use crate::mixture::GaussianMixture;

use super::{AcousticUnitHmm, AuInventory, ClusterUnits, SILENCE};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InitConfig {
    pub states_per_unit: usize,
    pub unit_stay: f64,
    pub silence_stay: f64,
    /// Variance floor as a fraction of the global per-dimension variance.
    pub variance_floor_scale: f64,
    /// State `s` of a unit starts at `mean + (s - 1) · offset · std` of its third.
    pub state_mean_offset: f64,
}

impl Default for InitConfig {
    fn default() -> Self {
        Self {
            states_per_unit: 3,
            unit_stay: 0.6,
            silence_stay: 0.9,
            variance_floor_scale: 1e-3,
            state_mean_offset: 0.1,
        }
    }
}

impl InitConfig {
    pub fn validate(&self) -> Result<()> {
        let prob = |p: f64| p > 0.0 && p < 1.0;
        if self.states_per_unit == 0 || !prob(self.unit_stay) || !prob(self.silence_stay) {
            return Err(AudError::Config("HMM topology needs ≥ 1 state and self-loops in (0, 1)".into()));
        }
        if !(self.variance_floor_scale > 0.0) || !self.state_mean_offset.is_finite() {
            return Err(AudError::Config("variance floor scale must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
struct Moments {
    n: usize,
    sum: Vec<f64>,
    sum_sq: Vec<f64>,
}

impl Moments {
    fn new(dim: usize) -> Self {
        Self {
            n: 0,
            sum: vec![0.0; dim],
            sum_sq: vec![0.0; dim],
        }
    }

    fn add(&mut self, x: &[f64]) {
        self.n += 1;
        for (d, v) in x.iter().enumerate() {
            self.sum[d] += v;
            self.sum_sq[d] += v * v;
        }
    }

    fn mean(&self) -> Vec<f64> {
        self.sum.iter().map(|s| s / self.n as f64).collect()
    }

    fn variance(&self) -> Vec<f64> {
        let n = self.n as f64;
        self.sum
            .iter()
            .zip(&self.sum_sq)
            .map(|(s, q)| {
                let m = s / n;
                (q / n - m * m).max(0.0)
            })
            .collect()
    }
}

/// Which third (0, 1, 2) of an `n`-frame segment frame `t` falls in.
fn third(t: usize, n: usize) -> usize {
    t * 3 / n
}

/// Flat-start inventory: every cluster's members are cut into thirds whose pooled frames
/// seed the rise, steady and fall units. `segments[i]` holds the features of the segment
/// labelled `assignment.labels[i]`; silence frames seed the `SIL` unit.
pub fn init_inventory(
    assignment: &ClusterAssignment,
    segments: &[FeatureSequence],
    silence: &[FeatureSequence],
    cfg: &InitConfig,
) -> Result<AuInventory> {
    cfg.validate()?;
    if segments.len() != assignment.labels.len() {
        return Err(AudError::DimensionMismatch {
            expected: assignment.labels.len(),
            got: segments.len(),
        });
    }
    if assignment.n_clusters == 0 {
        return Err(AudError::Degenerate("no clusters to build units from".into()));
    }
    let dim = segments
        .iter()
        .chain(silence)
        .map(FeatureSequence::dim)
        .next()
        .ok_or_else(|| AudError::EmptyInput("no segment features".into()))?;
    if let Some(bad) = segments.iter().chain(silence).find(|f| f.dim() != dim) {
        return Err(AudError::DimensionMismatch { expected: dim, got: bad.dim() });
    }

    let mut global = Moments::new(dim);
    segments.iter().chain(silence).flat_map(|f| f.frames()).for_each(|x| global.add(x));
    if global.n == 0 {
        return Err(AudError::EmptyInput("no feature frames".into()));
    }
    let global_var = global.variance();
    let scale = cfg.variance_floor_scale;
    // a globally constant dimension still needs a positive floor
    let fallback = global_var.iter().cloned().fold(0.0, f64::max).max(1.0) * scale;
    let floor: Vec<f64> = global_var
        .iter()
        .map(|v| if *v * scale > 0.0 { v * scale } else { fallback })
        .collect();
    if global_var.contains(&0.0) {
        warn!("zero-variance feature dimension; its variances are floored");
    }
    let state_for = |m: &Moments, s: usize| {
        let mean = m.mean();
        let var = m.variance();
        let shift = s as f64 - (cfg.states_per_unit as f64 - 1.0) / 2.0;
        let mean = mean
            .iter()
            .zip(&var)
            .map(|(mu, v)| mu + shift * cfg.state_mean_offset * v.sqrt())
            .collect();
        GaussianMixture::single(mean, var.iter().zip(&floor).map(|(v, f)| v.max(*f)).collect())
    };

    let mut units = Vec::with_capacity(3 * assignment.n_clusters + 1);
    let mut clusters = Vec::with_capacity(assignment.n_clusters);
    for c in 0..assignment.n_clusters {
        let members = assignment.members(c);
        let mut parts = [Moments::new(dim), Moments::new(dim), Moments::new(dim)];
        for &i in &members {
            let f = &segments[i];
            for (t, x) in f.frames().enumerate() {
                parts[third(t, f.len())].add(x);
            }
        }
        if let Some(p) = parts.iter().position(|m| m.n == 0) {
            return Err(AudError::Degenerate(format!(
                "cluster {c} has no frames in part {p} ({} members)",
                members.len()
            )));
        }
        let names = ClusterUnits::for_cluster(c);
        for (part, sym) in parts.iter().zip(names.symbols()) {
            let states = (0..cfg.states_per_unit).map(|s| state_for(part, s)).collect();
            units.push(AcousticUnitHmm::left_to_right(sym, states, cfg.unit_stay));
        }
        clusters.push(names);
    }

    let mut sil = Moments::new(dim);
    silence.iter().flat_map(|f| f.frames()).for_each(|x| sil.add(x));
    if sil.n == 0 {
        warn!("no silence frames; {SILENCE} starts from global statistics");
        sil = global;
    }
    let sil_state = GaussianMixture::single(sil.mean(), sil.variance().iter().zip(&floor).map(|(v, f)| v.max(*f)).collect());
    units.push(AcousticUnitHmm::left_to_right(SILENCE, vec![sil_state], cfg.silence_stay));
    AuInventory::new(dim, floor, units, clusters)
}
