//! Acoustic-unit HMMs: each discovered syllable cluster contributes a rising-transient,
//! steady-state and falling-transient unit; a single silence unit completes the inventory.

mod decode;
mod init;
mod selftrain;
mod train;
mod viterbi;

use std::collections::HashMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{AudError, Result};
use crate::features::FeatureSequence;
use crate::mixture::{GaussianMixture, PreparedMixture};

pub use decode::{transcribe, transcribe_prepared, Grammar};
pub use init::{init_inventory, InitConfig};
pub use selftrain::{self_train, ConvergenceReport, IterationStats, SelfTrainConfig, Stage, StopReason};
pub use train::{train_iteration, TrainOptions, TrainStats};
pub use viterbi::{viterbi_align, viterbi_chain, ChainAlignment, ChainTopology};

pub const SILENCE: &str = "SIL";
pub const INVENTORY_FORMAT: &str = "aud-inventory";
pub const SCHEMA_VERSION: u32 = 1;

/// Clamp for self-loop probabilities after re-estimation.
pub const TRANSITION_FLOOR: f64 = 1e-3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AcousticUnitHmm {
    pub symbol: String,
    /// `n × (n+1)` left-to-right matrix; the last column is the exit probability.
    pub transitions: Vec<Vec<f64>>,
    pub states: Vec<GaussianMixture>,
}

impl AcousticUnitHmm {
    /// Left-to-right unit with self-loop probability `stay` in every state.
    pub fn left_to_right(symbol: impl Into<String>, states: Vec<GaussianMixture>, stay: f64) -> Self {
        let n = states.len();
        let transitions = (0..n)
            .map(|s| {
                let mut row = vec![0.0; n + 1];
                row[s] = stay;
                row[s + 1] = 1.0 - stay;
                row
            })
            .collect();
        Self {
            symbol: symbol.into(),
            transitions,
            states,
        }
    }

    pub fn n_states(&self) -> usize {
        self.states.len()
    }

    pub fn stay(&self, s: usize) -> f64 {
        self.transitions[s][s]
    }

    /// Probability of leaving state `s` for `s + 1` (or exiting, for the last state).
    pub fn advance(&self, s: usize) -> f64 {
        self.transitions[s][s + 1]
    }

    pub fn set_stay(&mut self, s: usize, p: f64) {
        self.transitions[s][s] = p;
        self.transitions[s][s + 1] = 1.0 - p;
    }

    pub fn validate(&self, feature_dim: usize, floor: &[f64]) -> Result<()> {
        let n = self.n_states();
        if n == 0 || self.transitions.len() != n {
            return Err(AudError::Format(format!("{}: malformed topology", self.symbol)));
        }
        for (s, row) in self.transitions.iter().enumerate() {
            let sum: f64 = row.iter().sum();
            let only_lr = row.iter().enumerate().all(|(j, &p)| p == 0.0 || j == s || j == s + 1);
            if row.len() != n + 1 || (sum - 1.0).abs() > 1e-9 || !only_lr || row.iter().any(|p| *p < 0.0) {
                return Err(AudError::Format(format!("{}: transition row {s} invalid", self.symbol)));
            }
        }
        for st in &self.states {
            if st.dim() != feature_dim {
                return Err(AudError::DimensionMismatch {
                    expected: feature_dim,
                    got: st.dim(),
                });
            }
            st.validate(floor)
                .map_err(|e| AudError::Format(format!("{}: {e}", self.symbol)))?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClusterUnits {
    pub cluster: usize,
    pub rise: String,
    pub steady: String,
    pub fall: String,
}

impl ClusterUnits {
    pub fn for_cluster(cluster: usize) -> Self {
        Self {
            cluster,
            rise: format!("C{cluster:02}_R"),
            steady: format!("C{cluster:02}_S"),
            fall: format!("C{cluster:02}_F"),
        }
    }

    pub fn symbols(&self) -> [&str; 3] {
        [&self.rise, &self.steady, &self.fall]
    }
}

/// The discovered unit alphabet.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuInventory {
    pub format: String,
    pub version: u32,
    pub feature_dim: usize,
    pub variance_floor: Vec<f64>,
    pub units: Vec<AcousticUnitHmm>,
    pub clusters: Vec<ClusterUnits>,
}

impl AuInventory {
    pub fn new(feature_dim: usize, variance_floor: Vec<f64>, units: Vec<AcousticUnitHmm>, clusters: Vec<ClusterUnits>) -> Result<Self> {
        let inv = Self {
            format: INVENTORY_FORMAT.into(),
            version: SCHEMA_VERSION,
            feature_dim,
            variance_floor,
            units,
            clusters,
        };
        inv.validate()?;
        Ok(inv)
    }

    pub fn validate(&self) -> Result<()> {
        if self.format != INVENTORY_FORMAT || self.version != SCHEMA_VERSION {
            return Err(AudError::UnsupportedFormat(format!(
                "inventory {} v{}, expected {INVENTORY_FORMAT} v{SCHEMA_VERSION}",
                self.format, self.version
            )));
        }
        if self.variance_floor.len() != self.feature_dim || self.variance_floor.iter().any(|f| !(*f > 0.0)) {
            return Err(AudError::Format("variance floor must be positive per dimension".into()));
        }
        let mut seen = HashMap::new();
        for (i, u) in self.units.iter().enumerate() {
            if seen.insert(u.symbol.as_str(), i).is_some() {
                return Err(AudError::Format(format!("duplicate symbol {}", u.symbol)));
            }
            u.validate(self.feature_dim, &self.variance_floor)?;
        }
        for c in &self.clusters {
            for s in c.symbols() {
                if !seen.contains_key(s) {
                    return Err(AudError::UnknownSymbol(s.to_string()));
                }
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.units.len()
    }

    pub fn is_empty(&self) -> bool {
        self.units.is_empty()
    }

    pub fn index_of(&self, symbol: &str) -> Result<usize> {
        self.units
            .iter()
            .position(|u| u.symbol == symbol)
            .ok_or_else(|| AudError::UnknownSymbol(symbol.to_string()))
    }

    pub fn symbols(&self) -> Vec<&str> {
        self.units.iter().map(|u| u.symbol.as_str()).collect()
    }

    pub(crate) fn prepare(&self) -> Vec<Vec<PreparedMixture>> {
        self.units
            .iter()
            .map(|u| u.states.iter().map(GaussianMixture::prepare).collect())
            .collect()
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let inv: Self = serde_json::from_str(text)?;
        inv.validate()?;
        Ok(inv)
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

    pub(crate) fn check_features(&self, features: &FeatureSequence) -> Result<()> {
        if features.dim() != self.feature_dim {
            return Err(AudError::DimensionMismatch {
                expected: self.feature_dim,
                got: features.dim(),
            });
        }
        if features.is_empty() {
            return Err(AudError::EmptyInput("no frames to decode".into()));
        }
        Ok(())
    }
}

/// Per-utterance AU sequence; alignments are half-open frame ranges `[start, end)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Transcription {
    pub utterance_id: String,
    pub symbols: Vec<String>,
    pub alignments: Option<Vec<(usize, usize)>>,
    pub log_likelihood: f64,
    /// Set when decoding fell back to a best-effort result.
    pub warning: bool,
}

impl Transcription {
    /// Symbol of every frame, when alignments are present.
    pub fn frame_labels(&self) -> Option<Vec<&str>> {
        let ali = self.alignments.as_ref()?;
        let mut out = Vec::new();
        for (sym, &(a, b)) in self.symbols.iter().zip(ali) {
            out.extend(std::iter::repeat_n(sym.as_str(), b - a));
        }
        Some(out)
    }

    pub fn to_line(&self) -> String {
        self.symbols.join(" ")
    }

    pub fn alignment_tsv(&self) -> Option<String> {
        let ali = self.alignments.as_ref()?;
        Some(
            self.symbols
                .iter()
                .zip(ali)
                .map(|(s, (a, b))| format!("{s}\t{a}\t{b}\n"))
                .collect(),
        )
    }

    /// Writes `<dir>/<id>.txt` and, when aligned, `<dir>/<id>.ali.tsv`.
    pub fn write(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        let txt = dir.join(format!("{}.txt", self.utterance_id));
        fs::write(&txt, self.to_line() + "\n").map_err(|e| AudError::io(&txt, e))?;
        if let Some(tsv) = self.alignment_tsv() {
            let p = dir.join(format!("{}.ali.tsv", self.utterance_id));
            fs::write(&p, tsv).map_err(|e| AudError::io(&p, e))?;
        }
        Ok(())
    }

    /// Reads a transcription back, with alignments if the TSV is present.
    pub fn read(dir: impl AsRef<Path>, utterance_id: &str) -> Result<Self> {
        let dir = dir.as_ref();
        let txt = dir.join(format!("{utterance_id}.txt"));
        let line = fs::read_to_string(&txt).map_err(|e| AudError::io(&txt, e))?;
        let symbols: Vec<String> = line.split_whitespace().map(str::to_string).collect();
        let ali_path = dir.join(format!("{utterance_id}.ali.tsv"));
        let alignments = if ali_path.exists() {
            let text = fs::read_to_string(&ali_path).map_err(|e| AudError::io(&ali_path, e))?;
            let mut ali = Vec::new();
            for (n, l) in text.lines().filter(|l| !l.is_empty()).enumerate() {
                let cols: Vec<&str> = l.split('\t').collect();
                let parse = |s: &str| {
                    s.parse::<usize>()
                        .map_err(|e| AudError::parse(ali_path.display().to_string(), format!("line {}: {e}", n + 1)))
                };
                if cols.len() != 3 || cols[0] != symbols.get(n).map(String::as_str).unwrap_or("") {
                    return Err(AudError::parse(
                        ali_path.display().to_string(),
                        format!("line {} does not match the transcription", n + 1),
                    ));
                }
                ali.push((parse(cols[1])?, parse(cols[2])?));
            }
            Some(ali)
        } else {
            None
        };
        Ok(Self {
            utterance_id: utterance_id.to_string(),
            symbols,
            alignments,
            log_likelihood: f64::NAN,
            warning: false,
        })
    }
}

#[cfg(test)]
pub(crate) mod testutil {
    use super::*;

    /// Inventory of single-Gaussian units with means placed per state.
    pub fn inventory(units: &[(&str, Vec<Vec<f64>>, f64)], var: f64) -> AuInventory {
        let dim = units[0].1[0].len();
        let hmms = units
            .iter()
            .map(|(sym, means, stay)| {
                let states = means
                    .iter()
                    .map(|m| GaussianMixture::single(m.clone(), vec![var; dim]))
                    .collect();
                AcousticUnitHmm::left_to_right(*sym, states, *stay)
            })
            .collect();
        AuInventory::new(dim, vec![1e-6; dim], hmms, Vec::new()).unwrap()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn json_roundtrip_is_exact() {
        let mut inv = testutil::inventory(&[("A", vec![vec![0.1, 1.0 / 3.0]], 0.7), ("SIL", vec![vec![-2.5, 1e-7]], 0.9)], 0.37);
        inv.clusters = vec![];
        let back = AuInventory::from_json(&inv.to_json().unwrap()).unwrap();
        assert_eq!(back, inv);
    }

    #[test]
    fn validation_errors() {
        let mut inv = testutil::inventory(&[("A", vec![vec![0.0]], 0.5)], 1.0);
        inv.units[0].transitions[0][0] = 0.7;
        assert!(inv.validate().is_err());
        let mut inv = testutil::inventory(&[("A", vec![vec![0.0]], 0.5), ("B", vec![vec![0.0]], 0.5)], 1.0);
        inv.units[1].symbol = "A".into();
        assert!(inv.validate().is_err());
        let mut inv = testutil::inventory(&[("A", vec![vec![0.0]], 0.5)], 1.0);
        inv.version = 99;
        assert!(matches!(inv.validate(), Err(AudError::UnsupportedFormat(_))));
        let mut inv = testutil::inventory(&[("A", vec![vec![0.0]], 0.5)], 1.0);
        inv.clusters.push(ClusterUnits::for_cluster(0));
        assert!(matches!(inv.validate(), Err(AudError::UnknownSymbol(_))));
    }

    #[test]
    fn transcription_files_roundtrip() {
        let t = Transcription {
            utterance_id: "u1".into(),
            symbols: vec!["SIL".into(), "C03_R".into(), "C03_S".into()],
            alignments: Some(vec![(0, 4), (4, 7), (7, 12)]),
            log_likelihood: -3.0,
            warning: false,
        };
        let dir = tempfile::tempdir().unwrap();
        t.write(dir.path()).unwrap();
        assert_eq!(
            std::fs::read_to_string(dir.path().join("u1.txt")).unwrap(),
            "SIL C03_R C03_S\n"
        );
        let back = Transcription::read(dir.path(), "u1").unwrap();
        assert_eq!(back.symbols, t.symbols);
        assert_eq!(back.alignments, t.alignments);
        assert_eq!(back.frame_labels().unwrap().len(), 12);
    }
}
