use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::cluster::ClusterConfig;
use crate::error::{AudError, Result};
use crate::features::{FrameConfig, MfccConfig};
use crate::gender::GenderConfig;
use crate::hmm::{InitConfig, SelfTrainConfig};
use crate::segment::GroupDelayConfig;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SegmentationConfig {
    /// Framing of the short-time energy contour.
    pub frame: FrameConfig,
    pub group_delay: GroupDelayConfig,
}

impl Default for SegmentationConfig {
    fn default() -> Self {
        Self {
            frame: FrameConfig {
                pre_emphasis: 0.0,
                ..FrameConfig::default()
            },
            group_delay: GroupDelayConfig::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalConfig {
    pub boundary_tolerance_ms: f64,
    pub exclude_silence: bool,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            boundary_tolerance_ms: 30.0,
            exclude_silence: false,
        }
    }
}

/// Settings for every stage, read from a TOML file. Missing keys take their defaults.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    /// Seed for every randomized step (only the gender UBM initialization draws from it).
    pub seed: u64,
    pub features: MfccConfig,
    pub segmentation: SegmentationConfig,
    pub clustering: ClusterConfig,
    pub init: InitConfig,
    pub stage1: SelfTrainConfig,
    pub stage2: SelfTrainConfig,
    pub gender: GenderConfig,
    pub eval: EvalConfig,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            seed: 20_240_101,
            features: MfccConfig::default(),
            segmentation: SegmentationConfig::default(),
            clustering: ClusterConfig::default(),
            init: InitConfig::default(),
            stage1: SelfTrainConfig::default(),
            stage2: SelfTrainConfig::default(),
            gender: GenderConfig::default(),
            eval: EvalConfig::default(),
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<()> {
        self.features.frame.validate()?;
        if self.features.n_ceps == 0 || self.features.n_ceps > self.features.n_mels {
            return Err(AudError::Config("need 1 ≤ n_ceps ≤ n_mels".into()));
        }
        self.segmentation.frame.validate()?;
        self.segmentation.group_delay.validate()?;
        self.clustering.dtw.validate()?;
        let (lo, hi) = self.clustering.target_clusters;
        if lo == 0 || lo > hi || self.clustering.min_cluster_size == 0 || self.clustering.k == Some(0) {
            return Err(AudError::Config("clustering needs 1 ≤ target low ≤ target high, min size ≥ 1, k ≥ 1".into()));
        }
        self.init.validate()?;
        self.stage1.validate()?;
        self.stage2.validate()?;
        self.gender.features.frame.validate()?;
        if !(self.gender.relevance_factor > 0.0) || self.gender.ubm.n_components == 0 {
            return Err(AudError::Config("gender models need r > 0 and ≥ 1 component".into()));
        }
        if !(self.eval.boundary_tolerance_ms >= 0.0) {
            return Err(AudError::Config("boundary tolerance must be non-negative".into()));
        }
        Ok(())
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| AudError::parse("config", e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| AudError::Config(e.to_string()))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| AudError::io(path, e))?;
        Self::from_toml(&text).map_err(|e| match e {
            AudError::Parse { message, .. } => AudError::parse(path.display().to_string(), message),
            other => other,
        })
    }

    /// Gender settings with the global seed applied to the UBM initialization.
    pub fn seeded_gender(&self) -> GenderConfig {
        let mut g = self.gender.clone();
        g.ubm.seed = self.seed;
        g
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn toml_roundtrip() {
        let cfg = PipelineConfig::default();
        let text = cfg.to_toml().unwrap();
        assert_eq!(PipelineConfig::from_toml(&text).unwrap(), cfg);
    }

    #[test]
    fn partial_file_takes_defaults() {
        let cfg = PipelineConfig::from_toml("seed = 5\n[clustering]\nk = 4\ntarget_clusters = [2, 4]\n").unwrap();
        assert_eq!(cfg.seed, 5);
        assert_eq!(cfg.clustering.k, Some(4));
        assert_eq!(cfg.stage1, SelfTrainConfig::default());
    }

    #[test]
    fn rejects_bad_values() {
        assert!(PipelineConfig::from_toml("[stage1]\nmax_iters = 0\n").is_err());
        assert!(PipelineConfig::from_toml("bogus = 1\n").is_err());
        assert!(PipelineConfig::from_toml("[segmentation.group_delay]\nwsf = 0\n").is_err());
    }
}
