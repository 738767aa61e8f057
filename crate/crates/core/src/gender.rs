//! GMM-UBM gender identification: a background model trained by EM on pooled frames,
//! male and female models derived from it by mean-only MAP adaptation, a per-file
//! likelihood-ratio decision and a majority vote per speaker.

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use log::{info, warn};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{AudError, Result};
use crate::features::{FeatureSequence, MfccConfig};
use crate::mixture::{GaussianMixture, MixtureStats, MIN_OCCUPANCY};

pub const MODELS_FORMAT: &str = "aud-gender-models";
pub const SCHEMA_VERSION: u32 = 1;

/// Frames per accumulation chunk; chunks are merged in order for reproducible sums.
const CHUNK: usize = 2048;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EmConfig {
    pub n_components: usize,
    pub iters: usize,
    pub seed: u64,
    /// Variance floor relative to the pooled per-dimension variance.
    pub variance_floor_scale: f64,
}

impl Default for EmConfig {
    fn default() -> Self {
        Self {
            n_components: 64,
            iters: 20,
            seed: 0x6d61_7021,
            variance_floor_scale: 1e-3,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EmFit {
    pub model: GaussianMixture,
    /// Average per-frame log-likelihood before the first update and after every update.
    pub log_likelihood: Vec<f64>,
    pub reseeded: usize,
}

fn variance_floor(frames: &[Vec<f64>], scale: f64) -> Vec<f64> {
    let dim = frames[0].len();
    let n = frames.len() as f64;
    let mut mean = vec![0.0; dim];
    for x in frames {
        mean.iter_mut().zip(x).for_each(|(m, v)| *m += v / n);
    }
    let mut var = vec![0.0; dim];
    for x in frames {
        var.iter_mut().zip(x.iter().zip(&mean)).for_each(|(s, (v, m))| *s += (v - m) * (v - m) / n);
    }
    let fallback = var.iter().cloned().fold(0.0, f64::max).max(1.0) * scale;
    var.iter().map(|v| if v * scale > 0.0 { v * scale } else { fallback }).collect()
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// k-means++ seeding followed by one hard assignment to build the starting mixture.
fn kmeans_pp_init(frames: &[Vec<f64>], k: usize, seed: u64, floor: &[f64]) -> GaussianMixture {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut centers = vec![frames[rng.random_range(0..frames.len())].clone()];
    let mut d2: Vec<f64> = frames.iter().map(|x| sq_dist(x, &centers[0])).collect();
    while centers.len() < k {
        let total: f64 = d2.iter().sum();
        let next = if total > 0.0 {
            let mut r = rng.random::<f64>() * total;
            let mut pick = frames.len() - 1;
            for (i, d) in d2.iter().enumerate() {
                if r < *d {
                    pick = i;
                    break;
                }
                r -= d;
            }
            pick
        } else {
            rng.random_range(0..frames.len())
        };
        centers.push(frames[next].clone());
        for (d, x) in d2.iter_mut().zip(frames) {
            *d = d.min(sq_dist(x, &centers[centers.len() - 1]));
        }
    }
    let init = GaussianMixture {
        weights: vec![1.0 / k as f64; k],
        means: centers,
        variances: vec![floor.to_vec(); k],
    };
    let mut st = MixtureStats::new(&init);
    let mut post = vec![0.0; k];
    for x in frames {
        let nearest = (0..k)
            .min_by(|&a, &b| sq_dist(x, &init.means[a]).total_cmp(&sq_dist(x, &init.means[b])))
            .unwrap();
        post.iter_mut().for_each(|p| *p = 0.0);
        post[nearest] = 1.0;
        st.add(x, &post);
    }
    st.update(&init, floor).0
}

fn e_step(model: &GaussianMixture, frames: &[Vec<f64>]) -> (MixtureStats, f64) {
    let prepared = model.prepare();
    let parts: Vec<(MixtureStats, f64)> = frames
        .par_chunks(CHUNK)
        .map(|chunk| {
            let mut st = MixtureStats::new(model);
            let mut post = Vec::new();
            let mut ll = 0.0;
            for x in chunk {
                ll += prepared.posteriors(x, &mut post);
                st.add(x, &post);
            }
            (st, ll)
        })
        .collect();
    let mut iter = parts.into_iter();
    let (mut st, mut ll) = iter.next().expect("at least one chunk");
    for (s, l) in iter {
        st.merge(&s);
        ll += l;
    }
    (st, ll / frames.len() as f64)
}

/// Splits the broadest live component into the slot of a dead one.
fn reseed(model: &mut GaussianMixture, dead: usize) {
    let spread = |c: usize| model.variances[c].iter().sum::<f64>();
    let src = (0..model.n_components())
        .filter(|&c| c != dead && model.weights[c] > 0.0)
        .max_by(|&a, &b| spread(a).total_cmp(&spread(b)).then(b.cmp(&a)))
        .unwrap_or(dead);
    let sd: Vec<f64> = model.variances[src].iter().map(|v| v.sqrt()).collect();
    model.means[dead] = model.means[src].iter().zip(&sd).map(|(m, s)| m + 0.2 * s).collect();
    model.means[src] = model.means[src].iter().zip(&sd).map(|(m, s)| m - 0.2 * s).collect();
    model.variances[dead] = model.variances[src].clone();
    let w = model.weights[src] / 2.0;
    model.weights[src] = w;
    model.weights[dead] = w;
    let total: f64 = model.weights.iter().sum();
    model.weights.iter_mut().for_each(|x| *x /= total);
}

/// Maximum-likelihood diagonal GMM by EM from a k-means++ start.
pub fn em_fit(frames: &[Vec<f64>], cfg: &EmConfig) -> Result<EmFit> {
    let k = cfg.n_components;
    if k == 0 || !(cfg.variance_floor_scale > 0.0) {
        return Err(AudError::Config("EM needs ≥ 1 component and a positive floor".into()));
    }
    if frames.len() < 10 * k {
        return Err(AudError::EmptyInput(format!(
            "{} frames for {k} components; need at least {}",
            frames.len(),
            10 * k
        )));
    }
    let dim = frames[0].len();
    if let Some(bad) = frames.iter().find(|f| f.len() != dim) {
        return Err(AudError::DimensionMismatch { expected: dim, got: bad.len() });
    }
    let floor = variance_floor(frames, cfg.variance_floor_scale);
    let mut model = kmeans_pp_init(frames, k, cfg.seed, &floor);
    let mut trace = Vec::with_capacity(cfg.iters + 1);
    let mut reseeded = 0;
    for _ in 0..cfg.iters {
        let (st, ll) = e_step(&model, frames);
        trace.push(ll);
        let (next, _) = st.update(&model, &floor);
        model = next;
        let dead: Vec<usize> = (0..k).filter(|&c| st.occupancy[c] < MIN_OCCUPANCY).collect();
        for c in dead {
            warn!("EM component {c} lost all its frames; re-seeding it");
            reseed(&mut model, c);
            reseeded += 1;
        }
    }
    let (_, ll) = e_step(&model, frames);
    trace.push(ll);
    Ok(EmFit {
        model,
        log_likelihood: trace,
        reseeded,
    })
}

/// Mean-only MAP adaptation: `μ'_c = (n_c·x̄_c + r·μ_c) / (n_c + r)`, where `n_c` is the
/// soft count of frames on component `c`. Weights and variances are kept.
pub fn map_adapt(ubm: &GaussianMixture, frames: &[Vec<f64>], relevance: f64) -> Result<GaussianMixture> {
    map_adapt_with(ubm, frames, relevance, false)
}

/// MAP adaptation of the means and, with `adapt_weights`, of the weights:
/// `w'_c ∝ α_c·n_c/N + (1 − α_c)·w_c` with `α_c = n_c / (n_c + r)`. Variances are kept.
pub fn map_adapt_with(ubm: &GaussianMixture, frames: &[Vec<f64>], relevance: f64, adapt_weights: bool) -> Result<GaussianMixture> {
    if !(relevance > 0.0) {
        return Err(AudError::Config("relevance factor must be positive".into()));
    }
    if let Some(bad) = frames.iter().find(|f| f.len() != ubm.dim()) {
        return Err(AudError::DimensionMismatch {
            expected: ubm.dim(),
            got: bad.len(),
        });
    }
    let prepared = ubm.prepare();
    let c = ubm.n_components();
    let mut n = vec![0.0; c];
    let mut sum = vec![vec![0.0; ubm.dim()]; c];
    let mut post = Vec::new();
    for x in frames {
        prepared.posteriors(x, &mut post);
        for (k, g) in post.iter().enumerate() {
            n[k] += g;
            sum[k].iter_mut().zip(x).for_each(|(s, v)| *s += g * v);
        }
    }
    let mut out = ubm.clone();
    for k in 0..c {
        for d in 0..ubm.dim() {
            out.means[k][d] = (sum[k][d] + relevance * ubm.means[k][d]) / (n[k] + relevance);
        }
    }
    if adapt_weights && !frames.is_empty() {
        let total = frames.len() as f64;
        for k in 0..c {
            let alpha = n[k] / (n[k] + relevance);
            out.weights[k] = alpha * n[k] / total + (1.0 - alpha) * ubm.weights[k];
        }
        let z: f64 = out.weights.iter().sum();
        out.weights.iter_mut().for_each(|w| *w /= z);
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Gender {
    Female,
    Male,
}

impl fmt::Display for Gender {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Gender::Female => "female",
            Gender::Male => "male",
        })
    }
}

impl FromStr for Gender {
    type Err = AudError;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "male" | "m" => Ok(Gender::Male),
            "female" | "f" => Ok(Gender::Female),
            other => Err(AudError::parse("gender", format!("unknown label `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenderDecision {
    pub file_id: String,
    /// Average per-frame `log p(x | male) − log p(x | female)`.
    pub llr: f64,
    pub label: Gender,
}

impl GenderDecision {
    /// Positive ratios are male; zero and below are female.
    pub fn from_llr(file_id: impl Into<String>, llr: f64) -> Self {
        Self {
            file_id: file_id.into(),
            llr,
            label: if llr > 0.0 { Gender::Male } else { Gender::Female },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GenderConfig {
    pub features: MfccConfig,
    pub ubm: EmConfig,
    pub relevance_factor: f64,
    /// Adapt mixture weights as well as means. With mean-only adaptation, classes that
    /// occupy disjoint UBM components get nearly identical models.
    pub adapt_weights: bool,
}

impl Default for GenderConfig {
    fn default() -> Self {
        Self {
            features: MfccConfig::long_window(),
            ubm: EmConfig::default(),
            relevance_factor: 16.0,
            adapt_weights: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenderModelSet {
    pub format: String,
    pub version: u32,
    pub relevance_factor: f64,
    pub features: MfccConfig,
    pub ubm: GaussianMixture,
    pub male: GaussianMixture,
    pub female: GaussianMixture,
}

impl GenderModelSet {
    pub fn validate(&self) -> Result<()> {
        if self.format != MODELS_FORMAT || self.version != SCHEMA_VERSION {
            return Err(AudError::UnsupportedFormat(format!(
                "gender models {} v{}, expected {MODELS_FORMAT} v{SCHEMA_VERSION}",
                self.format, self.version
            )));
        }
        for (name, m) in [("ubm", &self.ubm), ("male", &self.male), ("female", &self.female)] {
            m.validate(&[]).map_err(|e| AudError::Format(format!("{name}: {e}")))?;
            if m.n_components() != self.ubm.n_components() || m.dim() != self.ubm.dim() || m.variances != self.ubm.variances {
                return Err(AudError::Format(format!("{name} model does not share the UBM structure")));
            }
        }
        Ok(())
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let m: Self = serde_json::from_str(text)?;
        m.validate()?;
        Ok(m)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_json()? + "\n").map_err(|e| AudError::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| AudError::io(path, e))?;
        Self::from_json(&text)
    }
}

/// Trains the UBM on both classes' frames and adapts one model per class.
pub fn train_gender_models(male: &[Vec<f64>], female: &[Vec<f64>], cfg: &GenderConfig) -> Result<GenderModelSet> {
    if male.is_empty() || female.is_empty() {
        return Err(AudError::EmptyInput("gender training needs frames of both classes".into()));
    }
    let pooled: Vec<Vec<f64>> = male.iter().chain(female).cloned().collect();
    let fit = em_fit(&pooled, &cfg.ubm)?;
    info!(
        "UBM: {} components, log-likelihood {:.4} after {} iterations",
        cfg.ubm.n_components,
        fit.log_likelihood.last().copied().unwrap_or(f64::NAN),
        cfg.ubm.iters
    );
    let set = GenderModelSet {
        format: MODELS_FORMAT.into(),
        version: SCHEMA_VERSION,
        relevance_factor: cfg.relevance_factor,
        features: cfg.features,
        male: map_adapt_with(&fit.model, male, cfg.relevance_factor, cfg.adapt_weights)?,
        female: map_adapt_with(&fit.model, female, cfg.relevance_factor, cfg.adapt_weights)?,
        ubm: fit.model,
    };
    set.validate()?;
    Ok(set)
}

/// Frames of a collection of sequences, in order.
pub fn pool_frames<'a>(seqs: impl IntoIterator<Item = &'a FeatureSequence>) -> Vec<Vec<f64>> {
    seqs.into_iter().flat_map(|s| s.frames().map(<[f64]>::to_vec)).collect()
}

pub fn classify_file(models: &GenderModelSet, features: &FeatureSequence, file_id: &str) -> Result<GenderDecision> {
    if features.is_empty() {
        return Err(AudError::EmptyInput(format!("{file_id}: no frames")));
    }
    if features.dim() != models.ubm.dim() {
        return Err(AudError::DimensionMismatch {
            expected: models.ubm.dim(),
            got: features.dim(),
        });
    }
    let m = models.male.prepare();
    let f = models.female.prepare();
    let total: f64 = features.frames().map(|x| m.log_likelihood(x) - f.log_likelihood(x)).sum();
    Ok(GenderDecision::from_llr(file_id, total / features.len() as f64))
}

pub fn classify_files(models: &GenderModelSet, files: &[(String, FeatureSequence)]) -> Result<Vec<GenderDecision>> {
    files.par_iter().map(|(id, f)| classify_file(models, f, id)).collect()
}

/// Majority label of a speaker's files. A tie goes to the file with the largest `|llr|`;
/// if that is itself tied across labels, female wins.
pub fn vote_speaker(decisions: &[GenderDecision]) -> Result<Gender> {
    if decisions.is_empty() {
        return Err(AudError::EmptyInput("no decisions to vote on".into()));
    }
    let male = decisions.iter().filter(|d| d.label == Gender::Male).count();
    let female = decisions.len() - male;
    if male != female {
        return Ok(if male > female { Gender::Male } else { Gender::Female });
    }
    let strongest = decisions.iter().map(|d| d.llr.abs()).fold(0.0, f64::max);
    let top = decisions.iter().filter(|d| d.llr.abs() == strongest);
    Ok(top.map(|d| d.label).min().unwrap_or(Gender::Female))
}

/// Votes within each group (speaker or session); `groups[i]` names the group of `decisions[i]`.
pub fn vote_groups(decisions: &[GenderDecision], groups: &[String]) -> Result<BTreeMap<String, Gender>> {
    if decisions.len() != groups.len() {
        return Err(AudError::DimensionMismatch {
            expected: decisions.len(),
            got: groups.len(),
        });
    }
    let mut by: BTreeMap<&str, Vec<GenderDecision>> = BTreeMap::new();
    for (d, g) in decisions.iter().zip(groups) {
        by.entry(g).or_default().push(d.clone());
    }
    by.into_iter()
        .map(|(g, ds)| Ok((g.to_string(), vote_speaker(&ds)?)))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dec(llr: f64) -> GenderDecision {
        GenderDecision::from_llr("f", llr)
    }

    #[test]
    fn one_component_is_sample_moments() {
        let frames: Vec<Vec<f64>> = (0..40).map(|i| vec![(i as f64 * 0.37).sin(), i as f64 * 0.1]).collect();
        let fit = em_fit(&frames, &EmConfig { n_components: 1, iters: 1, ..Default::default() }).unwrap();
        for d in 0..2 {
            let mean = frames.iter().map(|x| x[d]).sum::<f64>() / 40.0;
            let var = frames.iter().map(|x| (x[d] - mean).powi(2)).sum::<f64>() / 40.0;
            assert!((fit.model.means[0][d] - mean).abs() < 1e-9);
            assert!((fit.model.variances[0][d] - var).abs() < 1e-9);
        }
    }

    #[test]
    fn too_few_frames() {
        let frames = vec![vec![0.0]; 19];
        assert!(em_fit(&frames, &EmConfig { n_components: 2, ..Default::default() }).is_err());
    }

    #[test]
    fn single_component_map_by_hand() {
        let ubm = GaussianMixture::single(vec![1.0], vec![1.0]);
        let frames = vec![vec![2.0], vec![4.0], vec![3.0]];
        let m = map_adapt(&ubm, &frames, 2.0).unwrap();
        assert!((m.means[0][0] - (3.0 * 3.0 + 2.0 * 1.0) / 5.0).abs() < 1e-12);
        assert_eq!(m.variances, ubm.variances);
    }

    #[test]
    fn weight_adaptation_moves_toward_occupancy() {
        let ubm = GaussianMixture {
            weights: vec![0.5, 0.5],
            means: vec![vec![-5.0], vec![5.0]],
            variances: vec![vec![1.0], vec![1.0]],
        };
        let frames: Vec<Vec<f64>> = (0..48).map(|i| vec![5.0 + (i % 3) as f64 - 1.0]).collect();
        let m = map_adapt_with(&ubm, &frames, 16.0, true).unwrap();
        // n = (0, 48): alpha = (0, 0.75), w ∝ (0.5, 0.75 + 0.125)
        assert!((m.weights[1] - 0.875 / 1.375).abs() < 1e-9, "{:?}", m.weights);
        assert!((m.weights.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        let kept = map_adapt_with(&ubm, &frames, 1e12, true).unwrap();
        assert!((kept.weights[0] - 0.5).abs() < 1e-9);
        assert_eq!(map_adapt(&ubm, &frames, 16.0).unwrap().weights, ubm.weights);
    }

    #[test]
    fn tie_is_female() {
        assert_eq!(dec(0.0).label, Gender::Female);
        assert_eq!(dec(1e-300).label, Gender::Male);
    }

    #[test]
    fn voting() {
        assert_eq!(vote_speaker(&[dec(1.0), dec(2.0), dec(0.5), dec(-1.0)]).unwrap(), Gender::Male);
        assert_eq!(vote_speaker(&[dec(-0.1)]).unwrap(), Gender::Female);
        assert_eq!(vote_speaker(&[dec(1.0), dec(0.5), dec(-3.0), dec(-0.2)]).unwrap(), Gender::Female);
        assert_eq!(vote_speaker(&[dec(1.0), dec(-1.0)]).unwrap(), Gender::Female);
        assert!(vote_speaker(&[]).is_err());
    }

    #[test]
    fn group_votes() {
        let ds = vec![dec(1.0), dec(-1.0), dec(-2.0)];
        let groups = vec!["a".to_string(), "b".to_string(), "b".to_string()];
        let v = vote_groups(&ds, &groups).unwrap();
        assert_eq!(v["a"], Gender::Male);
        assert_eq!(v["b"], Gender::Female);
    }

    #[test]
    fn labels_parse() {
        assert_eq!("M".parse::<Gender>().unwrap(), Gender::Male);
        assert_eq!(Gender::Female.to_string(), "female");
        assert!("x".parse::<Gender>().is_err());
    }
}
