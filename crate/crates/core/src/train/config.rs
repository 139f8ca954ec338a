use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub lr0: f64,
    pub momentum: f64,
    pub wd_backbone: f64,
    pub wd_head: f64,
    pub max_iteration: usize,
    pub poly_power: f64,
    /// (height, width)
    pub crop: (usize, usize),
    pub batch: usize,
    pub aux_weight: f64,
    pub scale_range: (f64, f64),
    pub threshold: f64,
    pub seed: u64,
    /// Turns every augmentation off (crops still apply).
    pub augment: bool,
    pub blur_prob: f64,
    pub blur_sigma: (f64, f64),
    /// Brightness, contrast and saturation factors drawn from `1 ± color_jitter`.
    pub color_jitter: f64,
    /// Worker threads for per-sample gradients; 0 = available parallelism.
    pub workers: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            lr0: 0.02,
            momentum: 0.9,
            wd_backbone: 5e-4,
            wd_head: 1e-4,
            max_iteration: 1000,
            poly_power: 0.9,
            crop: (540, 720),
            batch: 2,
            aux_weight: 0.4,
            scale_range: (0.5, 2.0),
            threshold: 0.5,
            seed: 0,
            augment: true,
            blur_prob: 0.5,
            blur_sigma: (0.1, 1.5),
            color_jitter: 0.2,
            workers: 0,
        }
    }
}

impl TrainConfig {
    /// Memorisation setting for toy slides: full-canvas crops, no augmentation.
    pub fn toy_overfit(canvas: (usize, usize), max_iteration: usize) -> Self {
        Self {
            crop: canvas,
            max_iteration,
            augment: false,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::config(msg));
        if !(self.lr0 > 0.0) {
            return bad(format!("lr0 must be positive, got {}", self.lr0));
        }
        if !(self.poly_power > 0.0) {
            return bad(format!("poly_power must be positive, got {}", self.poly_power));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return bad(format!("momentum must lie in [0, 1), got {}", self.momentum));
        }
        if self.wd_backbone < 0.0 || self.wd_head < 0.0 || self.aux_weight < 0.0 {
            return bad("weight decays and aux_weight must be non-negative".into());
        }
        if !(self.scale_range.0 > 0.0 && self.scale_range.0 <= self.scale_range.1) {
            return bad(format!("scale_range must satisfy 0 < min <= max, got {:?}", self.scale_range));
        }
        if self.crop.0 == 0 || self.crop.1 == 0 || self.batch == 0 {
            return bad("crop and batch must be positive".into());
        }
        if !(self.threshold > 0.0 && self.threshold < 1.0) {
            return bad(format!("threshold must lie in (0, 1), got {}", self.threshold));
        }
        if !(0.0..=1.0).contains(&self.blur_prob) || self.blur_sigma.0 < 0.0 || self.blur_sigma.0 > self.blur_sigma.1 {
            return bad("invalid blur settings".into());
        }
        if !(0.0..1.0).contains(&self.color_jitter) {
            return bad(format!("color_jitter must lie in [0, 1), got {}", self.color_jitter));
        }
        Ok(())
    }

    /// Iterations between validation passes (10% of the run).
    pub fn validation_interval(&self) -> usize {
        (self.max_iteration / 10).max(1)
    }
}
