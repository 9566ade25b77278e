use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::multitask::{Family, Mode};

/// Synthetic sky: Gaussian blobs advecting over an infrared image.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SceneConfig {
    pub rows: usize,
    pub cols: usize,
    pub days: usize,
    pub frames_per_day: usize,
    /// Frames between consecutive transit slots.
    pub transit_period: usize,
    /// Wind speed in pixels per frame.
    pub wind_speed: f64,
    pub step_seconds: f64,
    /// Probability that a transit slot has no cloud.
    pub clear_probability: f64,
    /// Sky brightness temperature in K.
    pub clear_temperature: f64,
    pub air_temperature: f64,
    /// K/m, negative.
    pub lapse_rate: f64,
    /// CSI drop at full opacity over the Sun.
    pub attenuation: f64,
    pub csi_floor: f64,
    pub csi_noise: f64,
    /// Explicit blobs; when non-empty no random blobs are drawn.
    pub blobs: Vec<BlobSpec>,
}

impl Default for SceneConfig {
    fn default() -> Self {
        Self {
            rows: 41,
            cols: 41,
            days: 4,
            frames_per_day: 500,
            transit_period: 100,
            wind_speed: 0.5,
            step_seconds: 15.0,
            clear_probability: 0.15,
            clear_temperature: 253.0,
            air_temperature: 288.0,
            lapse_rate: -6.5e-3,
            attenuation: 0.85,
            csi_floor: 0.1,
            csi_noise: 0.0,
            blobs: Vec::new(),
        }
    }
}

/// One cloud: center `(row, col)` at `start_frame`, constant velocity in
/// pixels per frame, alive for `lifetime` frames.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BlobSpec {
    pub center: [f64; 2],
    pub velocity: [f64; 2],
    pub sigma: f64,
    pub opacity: f64,
    pub height: f64,
    pub start_frame: usize,
    pub lifetime: usize,
    pub condition: crate::multitask::SkyCondition,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VelocitySource {
    OpticalFlow,
    Truth,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FeatureConfig {
    /// Forecast horizons in frames, ascending.
    pub horizons: Vec<usize>,
    pub n_mc: usize,
    /// Diagonal field of view in degrees.
    pub fov: f64,
    pub velocity: VelocitySource,
    /// Velocity errors are floored at this fraction of the mean speed.
    pub relative_error_floor: f64,
    /// Layer height used when no cloud is visible (m).
    pub default_height: f64,
    /// Pixels warmer than the clear sky by this much (K) count as cloud.
    pub cloud_threshold: f64,
    pub min_eigen: f64,
}

impl Default for FeatureConfig {
    fn default() -> Self {
        Self {
            horizons: vec![12, 16, 20, 24, 28, 32],
            n_mc: 1000,
            fov: 40.0,
            velocity: VelocitySource::OpticalFlow,
            relative_error_floor: 0.1,
            default_height: 1500.0,
            cloud_threshold: 1.0,
            min_eigen: 1e-4,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SelectionConfig {
    pub lof_k: usize,
    /// Trailing days held out for testing.
    pub test_days: usize,
    /// Per-expert training caps.
    pub cap_single: usize,
    pub cap_joint: usize,
    /// Experts with fewer samples fall back to the pooled model.
    pub min_expert_samples: usize,
}

impl Default for SelectionConfig {
    fn default() -> Self {
        Self { lof_k: 3, test_days: 1, cap_single: 3500, cap_joint: 2500, min_expert_samples: 30 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub families: Vec<Family>,
    pub modes: Vec<Mode>,
    /// Horizon sources (1-based map indices) feeding the features.
    pub sources: Vec<usize>,
    /// Inter-horizon length scale for joint models.
    pub length_scale: f64,
    pub folds: usize,
    pub jitter: f64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            families: Family::ALL.to_vec(),
            modes: vec![Mode::Independent],
            sources: vec![1, 2, 3, 4, 5, 6],
            length_scale: 2.0,
            folds: 3,
            jitter: 1e-8,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub seed: u64,
    pub scene: SceneConfig,
    pub features: FeatureConfig,
    pub selection: SelectionConfig,
    pub model: ModelConfig,
}

impl PipelineConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_toml(&std::fs::read_to_string(path)?)
    }

    pub fn validate(&self) -> Result<()> {
        let s = &self.scene;
        if s.rows < 8 || s.cols < 8 {
            return Err(Error::InvalidArgument("scene must be at least 8x8".into()));
        }
        if s.days == 0 || s.frames_per_day == 0 || s.transit_period == 0 {
            return Err(Error::InvalidArgument("scene needs days, frames and a transit period".into()));
        }
        if !(s.step_seconds > 0.0) {
            return Err(Error::InvalidHyperparameter { name: "step_seconds", value: s.step_seconds });
        }
        if !(0.0..=1.0).contains(&s.csi_floor) || !(s.attenuation >= 0.0) {
            return Err(Error::InvalidArgument("csi_floor must be in [0, 1] and attenuation ≥ 0".into()));
        }
        let h = &self.features.horizons;
        if h.is_empty() || h.windows(2).any(|w| w[0] >= w[1]) || h[0] == 0 {
            return Err(Error::InvalidArgument("horizons must be positive and strictly ascending".into()));
        }
        if let Some(&src) = self.model.sources.iter().find(|&&c| c == 0 || c > h.len()) {
            return Err(Error::InvalidArgument(format!("source {src} is not a horizon index")));
        }
        if self.model.families.is_empty() || self.model.modes.is_empty() {
            return Err(Error::Empty("model families or modes"));
        }
        if self.model.folds < 2 {
            return Err(Error::InvalidArgument("need at least 2 folds".into()));
        }
        if self.selection.lof_k == 0 {
            return Err(Error::InvalidArgument("lof_k must be positive".into()));
        }
        if self.selection.test_days >= s.days {
            return Err(Error::InvalidArgument("test_days must leave training days".into()));
        }
        Ok(())
    }

    pub fn horizon_seconds(&self) -> Vec<f64> {
        self.features.horizons.iter().map(|&h| h as f64 * self.scene.step_seconds).collect()
    }
}
