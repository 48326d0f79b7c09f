//! Run configuration, loaded from JSON and validated across modules.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{CoreError, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Precision {
    F32,
    #[default]
    F64,
}

impl std::str::FromStr for Precision {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "f32" | "32" => Ok(Precision::F32),
            "f64" | "64" => Ok(Precision::F64),
            other => Err(format!("unknown precision `{other}`, expected f32 or f64")),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BackboneConfig {
    pub in_channels: usize,
    pub input_size: usize,
    pub stage_channels: Vec<usize>,
    pub stage_strides: Vec<usize>,
}

impl Default for BackboneConfig {
    fn default() -> Self {
        BackboneConfig {
            in_channels: 3,
            input_size: 112,
            stage_channels: vec![16, 32, 64, 64],
            stage_strides: vec![4, 2, 2, 1],
        }
    }
}

/// Spatial extent of the top feature map; the region slicing is defined on 7 rows.
pub const TOP_SIZE: usize = 7;

impl BackboneConfig {
    pub fn stages(&self) -> usize {
        self.stage_channels.len()
    }

    /// Side length `S_l` after each stage.
    pub fn spatial_sizes(&self) -> Vec<usize> {
        let mut s = self.input_size;
        self.stage_strides
            .iter()
            .map(|&st| {
                s /= st.max(1);
                s
            })
            .collect()
    }

    pub fn top_channels(&self) -> usize {
        *self.stage_channels.last().unwrap_or(&0)
    }

    pub fn validate(&self) -> Result<()> {
        let field = |f: &str| format!("backbone.{f}");
        if self.in_channels == 0 {
            return Err(CoreError::validation(field("in_channels"), "must be positive"));
        }
        if self.stage_channels.is_empty() {
            return Err(CoreError::validation(field("stage_channels"), "need at least one stage"));
        }
        if self.stage_channels.iter().any(|&c| c == 0) {
            return Err(CoreError::validation(field("stage_channels"), "channel counts must be positive"));
        }
        if self.stage_strides.len() != self.stage_channels.len() {
            return Err(CoreError::validation(
                field("stage_strides"),
                format!("{} strides for {} stages", self.stage_strides.len(), self.stage_channels.len()),
            ));
        }
        if self.stage_strides.iter().any(|&s| s == 0) {
            return Err(CoreError::validation(field("stage_strides"), "strides must be positive"));
        }
        let total: usize = self.stage_strides.iter().product();
        if self.input_size == 0 || self.input_size % total != 0 {
            return Err(CoreError::validation(
                field("input_size"),
                format!("input size {} is not divisible by the stride product {total}", self.input_size),
            ));
        }
        let sizes = self.spatial_sizes();
        let top = *sizes.last().unwrap();
        if top != TOP_SIZE {
            return Err(CoreError::validation(
                field("stage_strides"),
                format!("final spatial extent is {top}, must be {TOP_SIZE}"),
            ));
        }
        if let Some(s) = sizes.iter().find(|&&s| s % TOP_SIZE != 0) {
            return Err(CoreError::validation(
                field("stage_strides"),
                format!("intermediate extent {s} is not a multiple of {TOP_SIZE}"),
            ));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MfdConfig {
    /// Adjacent-frame radius.
    pub k: usize,
    /// `false` runs the ablation where `G = x_L`.
    pub enabled: bool,
    /// Optional explicit resize strides; must equal `S_l / 7` when given.
    pub resize_strides: Option<Vec<usize>>,
}

impl Default for MfdConfig {
    fn default() -> Self {
        MfdConfig { k: 5, enabled: true, resize_strides: None }
    }
}

/// AU identifiers per facial region, in combination-bit order.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RegionMap {
    pub up: Vec<u32>,
    pub mid: Vec<u32>,
    pub low: Vec<u32>,
}

pub const REGION_NAMES: [&str; 3] = ["up", "mid", "low"];

impl RegionMap {
    /// The BP4D assignment with twelve target AUs plus AU9.
    pub fn bp4d() -> Self {
        RegionMap { up: vec![1, 2, 4, 7], mid: vec![6, 9], low: vec![9, 10, 12, 14, 15, 17, 23, 24, 25, 26] }
    }

    /// Default synthetic layout: four upper, two middle and two lower AUs,
    /// with AU9 listed in both the middle and lower regions.
    pub fn synthetic() -> Self {
        RegionMap { up: vec![1, 2, 4, 7], mid: vec![6, 9], low: vec![9, 12, 25] }
    }

    pub fn regions(&self) -> [&[u32]; 3] {
        [&self.up, &self.mid, &self.low]
    }

    /// First region (up, mid, low order) listing `au`.
    pub fn home_of(&self, au: u32) -> Option<usize> {
        self.regions().iter().position(|r| r.contains(&au))
    }
}

impl Default for RegionMap {
    fn default() -> Self {
        Self::synthetic()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HsrConfig {
    /// Node feature width `b`.
    pub au_dim: usize,
}

impl Default for HsrConfig {
    fn default() -> Self {
        HsrConfig { au_dim: 32 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub lr: f64,
    pub epochs: usize,
    pub validation_interval: usize,
    pub weight_decay: f64,
    /// Clip length `T`.
    #[serde(rename = "T")]
    pub t: usize,
    pub lambda: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub seed: u64,
    /// Global gradient-norm clip; off when absent.
    pub grad_clip: Option<f64>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            batch_size: 8,
            lr: 1e-4,
            epochs: 200,
            validation_interval: 25,
            weight_decay: 5e-4,
            t: 16,
            lambda: 0.01,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            seed: 0,
            grad_clip: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
pub struct DataConfig {
    pub train_dir: Option<PathBuf>,
    pub eval_dir: Option<PathBuf>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub au_ids: Vec<u32>,
    pub regions: RegionMap,
    pub backbone: BackboneConfig,
    pub mfd: MfdConfig,
    pub hsr: HsrConfig,
    pub train: TrainConfig,
    pub data: DataConfig,
    pub output_dir: PathBuf,
    pub precision: Precision,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            au_ids: vec![1, 2, 4, 7, 6, 9, 12, 25],
            regions: RegionMap::synthetic(),
            backbone: BackboneConfig::default(),
            mfd: MfdConfig::default(),
            hsr: HsrConfig::default(),
            train: TrainConfig::default(),
            data: DataConfig::default(),
            output_dir: PathBuf::from("runs/default"),
            precision: Precision::F64,
        }
    }
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: RunConfig = serde_json::from_str(text).map_err(|e| CoreError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Reads and validates; relative data and output paths resolve against
    /// the config file's directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CoreError::io(path, e))?;
        let mut cfg = Self::from_json(&text)?;
        let base = path.parent().unwrap_or(Path::new("."));
        let resolve = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        resolve(&mut cfg.output_dir);
        cfg.data.train_dir.as_mut().map(resolve);
        cfg.data.eval_dir.as_mut().map(resolve);
        Ok(cfg)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    /// Hex SHA-256 of the compact JSON form.
    pub fn hash(&self) -> String {
        hex::encode(Sha256::digest(serde_json::to_vec(self).expect("config serializes")))
    }

    pub fn n_aus(&self) -> usize {
        self.au_ids.len()
    }

    /// Home region index for every AU in `au_ids` order.
    pub fn homes(&self) -> Vec<usize> {
        self.au_ids.iter().map(|&a| self.regions.home_of(a).expect("validated")).collect()
    }

    pub fn resize_strides(&self) -> Vec<usize> {
        self.backbone.spatial_sizes().iter().map(|s| s / TOP_SIZE).collect()
    }

    pub fn validate(&self) -> Result<()> {
        self.backbone.validate()?;
        if self.au_ids.is_empty() {
            return Err(CoreError::validation("au_ids", "need at least one AU"));
        }
        let mut seen = std::collections::HashSet::new();
        if let Some(d) = self.au_ids.iter().find(|a| !seen.insert(**a)) {
            return Err(CoreError::validation("au_ids", format!("AU{d} listed twice")));
        }
        for (name, region) in REGION_NAMES.iter().zip(self.regions.regions()) {
            let field = format!("regions.{name}");
            if region.is_empty() {
                return Err(CoreError::validation(field, "region has no AUs"));
            }
            if region.len() > 16 {
                return Err(CoreError::validation(field, "more than 16 AUs in one region"));
            }
            if let Some(a) = region.iter().find(|a| !self.au_ids.contains(a)) {
                return Err(CoreError::validation(field, format!("AU{a} is not in au_ids")));
            }
            let mut s = std::collections::HashSet::new();
            if let Some(a) = region.iter().find(|a| !s.insert(**a)) {
                return Err(CoreError::validation(field, format!("AU{a} listed twice")));
            }
        }
        if let Some(a) = self.au_ids.iter().find(|&&a| self.regions.home_of(a).is_none()) {
            return Err(CoreError::validation("regions", format!("AU{a} has no region")));
        }
        if self.mfd.k == 0 {
            return Err(CoreError::validation("mfd.k", "must be at least 1"));
        }
        if let Some(rs) = &self.mfd.resize_strides {
            if *rs != self.resize_strides() {
                return Err(CoreError::validation(
                    "mfd.resize_strides",
                    format!("{rs:?} does not map stage sizes onto {TOP_SIZE}; expected {:?}", self.resize_strides()),
                ));
            }
        }
        if self.hsr.au_dim == 0 {
            return Err(CoreError::validation("hsr.au_dim", "must be positive"));
        }
        let t = &self.train;
        let positive = [
            ("train.batch_size", t.batch_size as f64),
            ("train.lr", t.lr),
            ("train.validation_interval", t.validation_interval as f64),
            ("train.T", t.t as f64),
        ];
        for (f, v) in positive {
            if !(v > 0.0) || !v.is_finite() {
                return Err(CoreError::validation(f, "must be positive"));
            }
        }
        if !(t.weight_decay >= 0.0) {
            return Err(CoreError::validation("train.weight_decay", "must be non-negative"));
        }
        if !(t.lambda >= 0.0) {
            return Err(CoreError::validation("train.lambda", "must be non-negative"));
        }
        for (f, b) in [("train.beta1", t.beta1), ("train.beta2", t.beta2)] {
            if !(0.0..1.0).contains(&b) {
                return Err(CoreError::validation(f, "must lie in [0, 1)"));
            }
        }
        if !(t.eps > 0.0) {
            return Err(CoreError::validation("train.eps", "must be positive"));
        }
        if let Some(c) = t.grad_clip {
            if !(c > 0.0) {
                return Err(CoreError::validation("train.grad_clip", "must be positive"));
            }
        }
        Ok(())
    }
}
