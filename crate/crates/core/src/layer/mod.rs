//! One feature-extraction layer: dense convolution with a learned filter
//! bank, rectification, local contrast normalization and pooling, plus the
//! random grouping that connects consecutive layers.

mod conv;
mod grouping;
mod lcn;
mod pool;

use serde::{Deserialize, Serialize};

pub use conv::{convolve_valid, rectify_abs, rectify_on_off};
pub use grouping::{make_groups, GroupAssignment};
pub use lcn::{gaussian_1d, gaussian_window, lcn_divisive, lcn_subtractive};
pub use pool::{pool, pooled_len};

use crate::error::{Error, Result};
use crate::kmeans::FilterBank;
use crate::tensor::FeatureMapSet;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Rectifier {
    Abs,
    OnOff,
}

impl Rectifier {
    /// Output maps per filter.
    pub fn fan_out(self) -> usize {
        match self {
            Rectifier::Abs => 1,
            Rectifier::OnOff => 2,
        }
    }
}

/// Floor used by divisive normalization. Only the per-image mean of the
/// local standard deviation is supported.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LcnFloor {
    #[default]
    MeanSigma,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerConfig {
    pub rectifier: Rectifier,
    pub pool_side: usize,
    pub pool_stride: usize,
    #[serde(default = "default_alpha")]
    pub pool_alpha: f64,
    pub lcn_window: usize,
    pub lcn_sigma: f64,
    #[serde(default)]
    pub lcn_floor: LcnFloor,
    #[serde(default = "default_true")]
    pub dense_preprocess: bool,
}

fn default_alpha() -> f64 {
    1.0
}

fn default_true() -> bool {
    true
}

impl LayerConfig {
    /// Defaults with `lcn_sigma = window / 4`.
    pub fn new(rectifier: Rectifier, pool_side: usize, pool_stride: usize, lcn_window: usize) -> Self {
        Self {
            rectifier,
            pool_side,
            pool_stride,
            pool_alpha: 1.0,
            lcn_window,
            lcn_sigma: lcn_window as f64 / 4.0,
            lcn_floor: LcnFloor::MeanSigma,
            dense_preprocess: true,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.pool_side == 0 || self.pool_stride == 0 {
            return Err(Error::Config("pool side and stride must be at least 1".into()));
        }
        if !(self.pool_alpha >= 1.0) {
            return Err(Error::Config(format!("pool_alpha {} must be >= 1", self.pool_alpha)));
        }
        if self.lcn_window < 3 || self.lcn_window.is_multiple_of(2) {
            return Err(Error::Config(format!(
                "lcn_window {} must be odd and at least 3",
                self.lcn_window
            )));
        }
        if !(self.lcn_sigma > 0.0) {
            return Err(Error::Config("lcn_sigma must be positive".into()));
        }
        Ok(())
    }

    /// Closed-form `(depth, height, width)` of [`run_layer`]'s output, or an
    /// error naming the first stage that would not fit.
    pub fn output_shape(&self, height: usize, width: usize, patch_side: usize, k: usize) -> Result<(usize, usize, usize)> {
        if patch_side > height || patch_side > width {
            return Err(Error::InvalidPatchSize {
                patch: patch_side,
                height,
                width,
            });
        }
        let (ch, cw) = (height - patch_side + 1, width - patch_side + 1);
        if self.lcn_window > ch.min(cw) {
            return Err(Error::InvalidWindow(format!(
                "LCN window {} exceeds convolution output {ch}x{cw}",
                self.lcn_window
            )));
        }
        if self.pool_side > ch.min(cw) {
            return Err(Error::InvalidWindow(format!(
                "pool window {} exceeds convolution output {ch}x{cw}",
                self.pool_side
            )));
        }
        Ok((
            k * self.rectifier.fan_out(),
            pooled_len(ch, self.pool_side, self.pool_stride),
            pooled_len(cw, self.pool_side, self.pool_stride),
        ))
    }
}

/// Convolution, rectification, subtractive then divisive normalization, and
/// pooling, in that order.
pub fn run_layer(input: &FeatureMapSet, bank: &FilterBank, cfg: &LayerConfig) -> Result<FeatureMapSet> {
    let conv = convolve_valid(input, bank, cfg.dense_preprocess)?;
    let rect = match cfg.rectifier {
        Rectifier::Abs => rectify_abs(&conv),
        Rectifier::OnOff => rectify_on_off(&conv),
    };
    let v = lcn_subtractive(&rect, cfg.lcn_window, cfg.lcn_sigma)?;
    let y = lcn_divisive(&v, cfg.lcn_window, cfg.lcn_sigma)?;
    pool(&y, cfg.pool_side, cfg.pool_stride, cfg.pool_alpha)
}
