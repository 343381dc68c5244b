//! Network and experiment configuration, stored as TOML.

use std::collections::HashSet;
use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::augment::AugmentPlan;
use crate::committee::NormalizeMode;
use crate::error::{Error, Result};
use crate::layer::{LayerConfig, LcnFloor, Rectifier};

/// Parameters shared by both layers: patch size, whitening, k-means and
/// the post-convolution stages.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageParams {
    pub patch_side: usize,
    pub pool_side: usize,
    pub pool_stride: usize,
    #[serde(default = "one")]
    pub pool_alpha: f64,
    pub lcn_window: usize,
    pub lcn_sigma: f64,
    #[serde(default = "yes")]
    pub dense_preprocess: bool,
    pub n_patches: usize,
    pub zca_epsilon: f64,
    #[serde(default = "default_iters")]
    pub max_iters: usize,
}

fn one() -> f64 {
    1.0
}

fn yes() -> bool {
    true
}

fn default_iters() -> usize {
    crate::kmeans::DEFAULT_MAX_ITERS
}

impl StageParams {
    pub fn layer_config(&self, rectifier: Rectifier) -> LayerConfig {
        LayerConfig {
            rectifier,
            pool_side: self.pool_side,
            pool_stride: self.pool_stride,
            pool_alpha: self.pool_alpha,
            lcn_window: self.lcn_window,
            lcn_sigma: self.lcn_sigma,
            lcn_floor: LcnFloor::MeanSigma,
            dense_preprocess: self.dense_preprocess,
        }
    }

    fn validate(&self, what: &str) -> Result<()> {
        if self.patch_side == 0 || self.n_patches == 0 || self.max_iters == 0 {
            return Err(Error::Config(format!(
                "{what}: patch_side, n_patches and max_iters must be positive"
            )));
        }
        if !(self.zca_epsilon > 0.0) {
            return Err(Error::Config(format!("{what}: zca_epsilon must be positive")));
        }
        self.layer_config(Rectifier::Abs)
            .validate()
            .map_err(|e| Error::Config(format!("{what}: {e}")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Layer1Params {
    pub k: usize,
    #[serde(flatten)]
    pub stage: StageParams,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Layer2Params {
    pub k_per_group: usize,
    pub group_size: usize,
    #[serde(flatten)]
    pub stage: StageParams,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Seeds {
    pub patches: u64,
    pub kmeans1: u64,
    pub kmeans2: u64,
    pub grouping: u64,
}

impl Seeds {
    pub fn new(base: u64) -> Self {
        Self {
            patches: base,
            kmeans1: base.wrapping_add(1),
            kmeans2: base.wrapping_add(2),
            grouping: base.wrapping_add(3),
        }
    }

    /// Shifts every seed by `offset`; offset 0 is the identity.
    pub fn offset(self, offset: u64) -> Self {
        Self {
            patches: self.patches.wrapping_add(offset),
            kmeans1: self.kmeans1.wrapping_add(offset),
            kmeans2: self.kmeans2.wrapping_add(offset),
            grouping: self.grouping.wrapping_add(offset),
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DescriptorMode {
    #[default]
    Layer2Only,
    ConcatLayers,
}

/// Everything needed to rebuild one committee member.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkConfig {
    pub name: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scale_factor: Option<f64>,
    pub rectifier: Rectifier,
    #[serde(default)]
    pub descriptor_mode: DescriptorMode,
    pub layer1: Layer1Params,
    pub layer2: Layer2Params,
    #[serde(default)]
    pub augment: AugmentPlan,
    pub seeds: Seeds,
}

impl NetworkConfig {
    pub fn validate(&self) -> Result<()> {
        if self.name.is_empty() || self.name.chars().any(char::is_whitespace) {
            return Err(Error::Config(format!("network name {:?} must be a single token", self.name)));
        }
        if let Some(f) = self.scale_factor {
            if !(f > 0.0 && f <= 1.0) {
                return Err(Error::Config(format!("{}: scale factor {f} outside (0, 1]", self.name)));
            }
        }
        if self.augment.scale_factor.is_some() {
            return Err(Error::Config(format!(
                "{}: set scale_factor on the network, not in augment",
                self.name
            )));
        }
        self.augment.validate()?;
        if self.layer1.k == 0 || self.layer2.k_per_group == 0 || self.layer2.group_size == 0 {
            return Err(Error::Config(format!("{}: filter and group counts must be positive", self.name)));
        }
        self.layer1.stage.validate("layer1")?;
        self.layer2.stage.validate("layer2")?;
        let maps = self.layer1.k * self.rectifier.fan_out();
        if !maps.is_multiple_of(self.layer2.group_size) {
            return Err(Error::InvalidGrouping {
                k1: maps,
                n_k: self.layer2.group_size,
            });
        }
        Ok(())
    }

    pub fn layer1_config(&self) -> LayerConfig {
        self.layer1.stage.layer_config(self.rectifier)
    }

    pub fn layer2_config(&self) -> LayerConfig {
        self.layer2.stage.layer_config(self.rectifier)
    }

    /// `(height, width)` after optional rescaling.
    pub fn working_size(&self, height: usize, width: usize) -> (usize, usize) {
        match self.scale_factor {
            Some(f) if f != 1.0 => (
                ((height as f64 * f).round() as usize).max(1),
                ((width as f64 * f).round() as usize).max(1),
            ),
            _ => (height, width),
        }
    }

    /// Output shape of each layer for an input of the given size:
    /// `[(depth, h, w) after layer 1, (depth per group, h, w) after layer 2]`.
    pub fn layer_shapes(&self, height: usize, width: usize) -> Result<[(usize, usize, usize); 2]> {
        let (h, w) = self.working_size(height, width);
        let l1 = self
            .layer1_config()
            .output_shape(h, w, self.layer1.stage.patch_side, self.layer1.k)?;
        let l2 = self.layer2_config().output_shape(
            l1.1,
            l1.2,
            self.layer2.stage.patch_side,
            self.layer2.k_per_group,
        )?;
        Ok([l1, l2])
    }

    /// Length of the descriptor this network produces.
    pub fn descriptor_dim(&self, height: usize, width: usize) -> Result<usize> {
        let [l1, l2] = self.layer_shapes(height, width)?;
        let groups = l1.0 / self.layer2.group_size;
        let top = groups * l2.0 * l2.1 * l2.2;
        Ok(match self.descriptor_mode {
            DescriptorMode::Layer2Only => top,
            DescriptorMode::ConcatLayers => top + l1.0 * l1.1 * l1.2,
        })
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }
}

pub const LAYER1_EPSILON: f64 = 0.01;
pub const LAYER2_EPSILON: f64 = 0.1;
pub const LAYER1_PATCHES: usize = 400_000;
pub const LAYER2_PATCHES: usize = 200_000;

fn layer1(k: usize, patch_side: usize, pool: usize, stride: usize, lcn_window: usize) -> Layer1Params {
    Layer1Params {
        k,
        stage: StageParams {
            patch_side,
            pool_side: pool,
            pool_stride: stride,
            pool_alpha: 1.0,
            lcn_window,
            lcn_sigma: lcn_window as f64 / 4.0,
            dense_preprocess: true,
            n_patches: LAYER1_PATCHES,
            zca_epsilon: LAYER1_EPSILON,
            max_iters: crate::kmeans::DEFAULT_MAX_ITERS,
        },
    }
}

fn layer2_default() -> Layer2Params {
    Layer2Params {
        k_per_group: 75,
        group_size: 4,
        stage: StageParams {
            patch_side: 3,
            pool_side: 3,
            pool_stride: 3,
            pool_alpha: 1.0,
            lcn_window: 3,
            lcn_sigma: 0.75,
            dense_preprocess: true,
            n_patches: LAYER2_PATCHES,
            zca_epsilon: LAYER2_EPSILON,
            max_iters: crate::kmeans::DEFAULT_MAX_ITERS,
        },
    }
}

/// The five base networks of the STL-10 committee, with the augmentation
/// each one contributes to the committee.
pub fn preset(name: &str) -> Result<NetworkConfig> {
    let base = |name: &str, seed: u64| NetworkConfig {
        name: name.to_string(),
        scale_factor: None,
        rectifier: Rectifier::Abs,
        descriptor_mode: DescriptorMode::Layer2Only,
        layer1: layer1(300, 16, 12, 12, 9),
        layer2: layer2_default(),
        augment: AugmentPlan::mirror_and_rotations(),
        seeds: Seeds::new(seed),
    };
    let cfg = match name.to_ascii_uppercase().as_str() {
        "N1" => base("N1", 1000),
        "N2" => NetworkConfig {
            layer1: layer1(300, 16, 12, 8, 9),
            ..base("N2", 2000)
        },
        "N3" => NetworkConfig {
            layer1: layer1(300, 16, 9, 9, 9),
            ..base("N3", 3000)
        },
        // 32x32 input; 16x16 filters leave too little room for layer 2
        "N4" => NetworkConfig {
            scale_factor: Some(1.0 / 3.0),
            layer1: layer1(300, 8, 4, 4, 5),
            augment: AugmentPlan::mirror(),
            ..base("N4", 4000)
        },
        "N5" => NetworkConfig {
            rectifier: Rectifier::OnOff,
            augment: AugmentPlan::mirror(),
            ..base("N5", 5000)
        },
        other => return Err(Error::Config(format!("unknown preset {other:?}"))),
    };
    Ok(cfg)
}

pub const PRESETS: [&str; 5] = ["N1", "N2", "N3", "N4", "N5"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DataPaths {
    pub train_images: PathBuf,
    pub train_labels: PathBuf,
    pub test_images: PathBuf,
    pub test_labels: PathBuf,
    pub folds: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SvmSettings {
    #[serde(default = "one")]
    pub reg_c: f64,
    /// When set, `reg_c` is chosen from this grid by 5-fold cross-validation
    /// on each training fold.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cv_grid: Option<Vec<f64>>,
}

impl Default for SvmSettings {
    fn default() -> Self {
        Self {
            reg_c: 1.0,
            cv_grid: None,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScoreScaling {
    #[default]
    PerImage,
    PerNetwork,
}

impl From<ScoreScaling> for NormalizeMode {
    fn from(s: ScoreScaling) -> Self {
        match s {
            ScoreScaling::PerImage => NormalizeMode::PerImage,
            ScoreScaling::PerNetwork => NormalizeMode::PerNetwork,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CommitteeSettings {
    #[serde(default)]
    pub normalize: ScoreScaling,
}

/// Top-level experiment file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub data: DataPaths,
    #[serde(default)]
    pub svm: SvmSettings,
    #[serde(default)]
    pub committee: CommitteeSettings,
    #[serde(rename = "network")]
    pub networks: Vec<NetworkConfig>,
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        if self.networks.is_empty() {
            return Err(Error::Config("experiment lists no networks".into()));
        }
        let mut names = HashSet::new();
        for n in &self.networks {
            n.validate()?;
            if !names.insert(&n.name) {
                return Err(Error::Config(format!("duplicate network name {}", n.name)));
            }
        }
        Ok(())
    }

    pub fn network(&self, name: &str) -> Result<&NetworkConfig> {
        self.networks
            .iter()
            .find(|n| n.name == name)
            .ok_or_else(|| Error::Config(format!("no network named {name:?}")))
    }

    /// The five-network committee with STL-10 file names relative to `dir`.
    pub fn stl10_committee(dir: &str) -> Result<Self> {
        let p = |f: &str| PathBuf::from(format!("{dir}/{f}"));
        Ok(Self {
            data: DataPaths {
                train_images: p("train_X.bin"),
                train_labels: p("train_y.bin"),
                test_images: p("test_X.bin"),
                test_labels: p("test_y.bin"),
                folds: p("fold_indices.txt"),
            },
            svm: SvmSettings::default(),
            committee: CommitteeSettings::default(),
            networks: PRESETS.iter().map(|n| preset(n)).collect::<Result<_>>()?,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_are_valid_and_sized() {
        for name in PRESETS {
            let cfg = preset(name).unwrap();
            cfg.validate().unwrap();
            cfg.layer_shapes(96, 96).unwrap();
        }
        let n1 = preset("N1").unwrap();
        assert_eq!(n1.layer_shapes(96, 96).unwrap(), [(300, 6, 6), (75, 1, 1)]);
        assert_eq!(n1.descriptor_dim(96, 96).unwrap(), 75 * 75);
        let n2 = preset("N2").unwrap();
        assert_eq!(n2.layer_shapes(96, 96).unwrap()[0], (300, 9, 9));
        let n4 = preset("N4").unwrap();
        assert_eq!(n4.working_size(96, 96), (32, 32));
        let n5 = preset("N5").unwrap();
        assert_eq!(n5.layer_shapes(96, 96).unwrap()[0].0, 600);
    }

    #[test]
    fn toml_round_trip() {
        for name in PRESETS {
            let cfg = preset(name).unwrap();
            assert_eq!(NetworkConfig::from_toml(&cfg.to_toml().unwrap()).unwrap(), cfg);
        }
        let exp = ExperimentConfig::stl10_committee("data").unwrap();
        assert_eq!(ExperimentConfig::from_toml(&exp.to_toml().unwrap()).unwrap(), exp);
    }

    #[test]
    fn indivisible_grouping_rejected() {
        let mut cfg = preset("N1").unwrap();
        cfg.layer1.k = 10;
        assert!(matches!(cfg.validate(), Err(Error::InvalidGrouping { k1: 10, n_k: 4 })));
    }

    #[test]
    fn duplicate_names_rejected() {
        let mut exp = ExperimentConfig::stl10_committee("d").unwrap();
        exp.networks[1].name = "N1".into();
        assert!(exp.validate().is_err());
    }
}
