//! DTW similarity matrices and mutual k-nearest-neighbour graph clustering.

use std::fs;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dtw::{dtw_distance, DtwConfig};
use crate::error::{AudError, Result};
use crate::features::FeatureSequence;
use crate::matrix::Matrix;

#[derive(Debug, Clone, PartialEq)]
pub struct SimilarityMatrix {
    pub segment_ids: Vec<String>,
    values: Vec<f64>,
    /// Kernel width: median pairwise DTW distance.
    pub sigma: f64,
}

impl SimilarityMatrix {
    /// Wraps a precomputed symmetric matrix (row-major, `n*n`).
    pub fn from_values(segment_ids: Vec<String>, values: Vec<f64>) -> Result<Self> {
        let n = segment_ids.len();
        if values.len() != n * n {
            return Err(AudError::DimensionMismatch {
                expected: n * n,
                got: values.len(),
            });
        }
        for i in 0..n {
            for j in 0..i {
                if values[i * n + j] != values[j * n + i] || !values[i * n + j].is_finite() {
                    return Err(AudError::Format(format!("similarity ({i},{j}) not symmetric/finite")));
                }
            }
        }
        Ok(Self {
            segment_ids,
            values,
            sigma: f64::NAN,
        })
    }

    pub fn n(&self) -> usize {
        self.segment_ids.len()
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.n() + j]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        let n = self.n();
        &self.values[i * n..(i + 1) * n]
    }

    pub fn to_matrix(&self) -> Result<Matrix> {
        Matrix::from_f64(self.n(), self.n(), &self.values)
    }

    /// Other segments ordered by decreasing similarity to `i`; ties by index.
    pub fn ranked_neighbors(&self, i: usize) -> Vec<usize> {
        let row = self.row(i);
        let mut idx: Vec<usize> = (0..self.n()).filter(|&j| j != i).collect();
        idx.sort_by(|&a, &b| row[b].total_cmp(&row[a]).then(a.cmp(&b)));
        idx
    }
}

/// DTW distance of every unordered pair `i < j`, in row-major upper-triangle order.
pub fn pairwise_dtw(features: &[FeatureSequence], cfg: &DtwConfig) -> Result<Vec<f64>> {
    let n = features.len();
    let pairs: Vec<(usize, usize)> = (0..n).flat_map(|i| (i + 1..n).map(move |j| (i, j))).collect();
    pairs
        .par_iter()
        .map(|&(i, j)| dtw_distance(&features[i], &features[j], cfg))
        .collect()
}

fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// `values[i][j] = exp(-dtw(i, j) / sigma)` with `sigma` the median pairwise distance.
pub fn build_similarity_matrix(segments: &[(String, FeatureSequence)], cfg: &DtwConfig) -> Result<SimilarityMatrix> {
    let n = segments.len();
    if n < 2 {
        return Err(AudError::EmptyInput(format!("need at least 2 segments to cluster, got {n}")));
    }
    let feats: Vec<FeatureSequence> = segments.iter().map(|(_, f)| f.clone()).collect();
    let dist = pairwise_dtw(&feats, cfg)?;
    let mut sigma = median(&dist);
    if !(sigma > 0.0) {
        sigma = 1.0;
    }
    let mut values = vec![0.0; n * n];
    let mut k = 0;
    for i in 0..n {
        values[i * n + i] = 1.0;
        for j in i + 1..n {
            let s = (-dist[k] / sigma).exp();
            values[i * n + j] = s;
            values[j * n + i] = s;
            k += 1;
        }
    }
    Ok(SimilarityMatrix {
        segment_ids: segments.iter().map(|(id, _)| id.clone()).collect(),
        values,
        sigma,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterAssignment {
    /// Cluster per segment; `None` for segments in undersized components.
    pub labels: Vec<Option<usize>>,
    pub k_neighbors: usize,
    pub n_clusters: usize,
}

impl ClusterAssignment {
    pub fn members(&self, cluster: usize) -> Vec<usize> {
        (0..self.labels.len()).filter(|&i| self.labels[i] == Some(cluster)).collect()
    }

    pub fn assigned(&self) -> usize {
        self.labels.iter().flatten().count()
    }
}

struct DisjointSet {
    parent: Vec<usize>,
    size: Vec<usize>,
}

impl DisjointSet {
    fn new(n: usize) -> Self {
        Self {
            parent: (0..n).collect(),
            size: vec![1; n],
        }
    }

    fn find(&mut self, mut x: usize) -> usize {
        while self.parent[x] != x {
            self.parent[x] = self.parent[self.parent[x]];
            x = self.parent[x];
        }
        x
    }

    /// Returns the sizes of the two merged components, or `None` if already joined.
    fn union(&mut self, a: usize, b: usize) -> Option<(usize, usize)> {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra == rb {
            return None;
        }
        let sizes = (self.size[ra], self.size[rb]);
        let (big, small) = if sizes.0 >= sizes.1 { (ra, rb) } else { (rb, ra) };
        self.parent[small] = big;
        self.size[big] += self.size[small];
        Some(sizes)
    }
}

/// Rank of `j` in `i`'s neighbor list, for all pairs.
fn neighbor_ranks(sim: &SimilarityMatrix) -> Vec<usize> {
    let n = sim.n();
    let mut rank = vec![usize::MAX; n * n];
    for i in 0..n {
        for (r, j) in sim.ranked_neighbors(i).into_iter().enumerate() {
            rank[i * n + j] = r;
        }
    }
    rank
}

/// Mutual-kNN graph, connected components, and components of at least `min_cluster_size`
/// numbered by their smallest member.
pub fn knn_graph_cluster(sim: &SimilarityMatrix, k: usize, min_cluster_size: usize) -> Result<ClusterAssignment> {
    let n = sim.n();
    if k == 0 || k >= n {
        return Err(AudError::Config(format!("k = {k} must be in 1..{n}")));
    }
    let rank = neighbor_ranks(sim);
    let mut ds = DisjointSet::new(n);
    for i in 0..n {
        for j in i + 1..n {
            if rank[i * n + j] < k && rank[j * n + i] < k {
                ds.union(i, j);
            }
        }
    }
    let mut root_label = vec![None; n];
    let mut labels = vec![None; n];
    let mut next = 0;
    for i in 0..n {
        let r = ds.find(i);
        if ds.size[r] < min_cluster_size {
            continue;
        }
        let label = *root_label[r].get_or_insert_with(|| {
            next += 1;
            next - 1
        });
        labels[i] = Some(label);
    }
    Ok(ClusterAssignment {
        labels,
        k_neighbors: k,
        n_clusters: next,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ClusterConfig {
    pub dtw: DtwConfig,
    pub min_cluster_size: usize,
    /// Acceptable range for the number of clusters when `k` is selected automatically.
    pub target_clusters: (usize, usize),
    /// Fixed `k`; `None` selects it automatically.
    pub k: Option<usize>,
}

impl Default for ClusterConfig {
    fn default() -> Self {
        Self {
            dtw: DtwConfig::default(),
            min_cluster_size: 10,
            target_clusters: (30, 36),
            k: None,
        }
    }
}

/// Qualified-cluster count and assigned-segment count for every `k` in `1..n`.
///
/// Mutual-kNN edges only appear as `k` grows, so the components for all `k` come from a
/// single pass of unions ordered by the `k` at which each edge enters.
pub fn cluster_count_profile(sim: &SimilarityMatrix, min_cluster_size: usize) -> Vec<(usize, usize, usize)> {
    let n = sim.n();
    let rank = neighbor_ranks(sim);
    let mut entries: Vec<(usize, usize, usize)> = (0..n)
        .flat_map(|i| (i + 1..n).map(move |j| (i, j)))
        .map(|(i, j)| (rank[i * n + j].max(rank[j * n + i]) + 1, i, j))
        .collect();
    entries.sort_unstable();
    let mut ds = DisjointSet::new(n);
    let qualifies = |s: usize| s >= min_cluster_size;
    let mut clusters = if qualifies(1) { n } else { 0 };
    let mut assigned = clusters;
    let mut out = Vec::with_capacity(n.saturating_sub(1));
    let mut e = 0;
    for k in 1..n {
        while e < entries.len() && entries[e].0 <= k {
            let (_, i, j) = entries[e];
            if let Some((a, b)) = ds.union(i, j) {
                let before = qualifies(a) as usize + qualifies(b) as usize;
                clusters = clusters + qualifies(a + b) as usize - before;
                assigned = assigned + if qualifies(a + b) { a + b } else { 0 }
                    - if qualifies(a) { a } else { 0 }
                    - if qualifies(b) { b } else { 0 };
            }
            e += 1;
        }
        out.push((k, clusters, assigned));
    }
    out
}

/// Picks `k` whose cluster count is closest to the target range; ties prefer more assigned
/// segments, then the smaller `k`.
pub fn select_k(sim: &SimilarityMatrix, min_cluster_size: usize, target: (usize, usize)) -> Result<usize> {
    if sim.n() < 2 {
        return Err(AudError::EmptyInput("need at least 2 segments".into()));
    }
    let gap = |c: usize| {
        if c < target.0 {
            target.0 - c
        } else {
            c.saturating_sub(target.1)
        }
    };
    cluster_count_profile(sim, min_cluster_size)
        .into_iter()
        .min_by(|a, b| gap(a.1).cmp(&gap(b.1)).then(b.2.cmp(&a.2)).then(a.0.cmp(&b.0)))
        .map(|(k, _, _)| k)
        .ok_or_else(|| AudError::EmptyInput("no candidate k".into()))
}

pub fn cluster(sim: &SimilarityMatrix, cfg: &ClusterConfig) -> Result<ClusterAssignment> {
    let k = match cfg.k {
        Some(k) => k,
        None => select_k(sim, cfg.min_cluster_size, cfg.target_clusters)?,
    };
    knn_graph_cluster(sim, k, cfg.min_cluster_size)
}

/// Writes `segment_id<TAB>cluster_id` rows, `-1` for unassigned.
pub fn write_clusters(path: impl AsRef<Path>, ids: &[String], assignment: &ClusterAssignment) -> Result<()> {
    let path = path.as_ref();
    let body: String = ids
        .iter()
        .zip(&assignment.labels)
        .map(|(id, l)| format!("{id}\t{}\n", l.map_or(-1, |c| c as i64)))
        .collect();
    fs::write(path, body).map_err(|e| AudError::io(path, e))
}

pub fn read_clusters(path: impl AsRef<Path>) -> Result<Vec<(String, Option<usize>)>> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| AudError::io(path, e))?;
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .enumerate()
        .map(|(n, line)| {
            let (id, label) = line
                .split_once('\t')
                .ok_or_else(|| AudError::parse("clusters", format!("line {}: missing tab", n + 1)))?;
            let label: i64 = label
                .trim()
                .parse()
                .map_err(|e| AudError::parse("clusters", format!("line {}: {e}", n + 1)))?;
            Ok((id.to_string(), usize::try_from(label).ok()))
        })
        .collect()
}
