//! Experiment configuration: one TOML file, one table per concern.
//!
//! Every field has a default, so an empty file is a valid configuration.
//! Unknown keys are rejected.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::autodiff::AdamConfig;
use crate::error::{Error, Result};
use crate::model::{LossWeights, ModelConfig};
use crate::preprocess::{AugmentConfig, RansacConfig, SamplerConfig};
use crate::scene::WindowConfig;
use crate::targets::TargetConfig;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub epochs: usize,
    /// Overrides `epochs` when set.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub iterations: Option<usize>,
    pub batch: usize,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub plateau_factor: f64,
    /// Iterations without improvement of the smoothed validation ADE before
    /// the learning rate is multiplied by `plateau_factor`.
    pub plateau_window: usize,
    /// Weight of the previous value in the exponential smoothing of the
    /// validation ADE.
    pub plateau_smoothing: f64,
    /// Relative drop of the smoothed ADE that counts as an improvement.
    pub plateau_threshold: f64,
    pub eval_every: usize,
    pub val_fraction: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 150,
            iterations: None,
            batch: 64,
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            plateau_factor: 0.5,
            plateau_window: 5000,
            plateau_smoothing: 0.5,
            plateau_threshold: 1e-4,
            eval_every: 250,
            val_fraction: 0.1,
        }
    }
}

impl TrainConfig {
    pub fn adam(&self) -> AdamConfig {
        AdamConfig { lr: self.lr, beta1: self.beta1, beta2: self.beta2, eps: self.eps }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(format!("train: {m}")));
        if self.epochs == 0 || self.batch == 0 || self.eval_every == 0 || self.plateau_window == 0 || self.iterations == Some(0) {
            return bad("epochs, iterations, batch, eval_every and plateau_window must be positive".into());
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return bad(format!("lr must be positive, got {}", self.lr));
        }
        if !(self.plateau_factor > 0.0 && self.plateau_factor < 1.0) {
            return bad(format!("plateau_factor must lie in (0, 1), got {}", self.plateau_factor));
        }
        if !(0.0..1.0).contains(&self.plateau_smoothing) || !(0.0..1.0).contains(&self.plateau_threshold) {
            return bad("plateau_smoothing and plateau_threshold must lie in [0, 1)".into());
        }
        if !(0.0..1.0).contains(&self.val_fraction) {
            return bad(format!("val_fraction must lie in [0, 1), got {}", self.val_fraction));
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) || !(self.eps > 0.0) {
            return bad("adam betas must lie in [0, 1) and eps be positive".into());
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvalConfig {
    /// Also score the constant-velocity baseline.
    pub baseline: bool,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self { baseline: true }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PathsConfig {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub corpus_dir: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub map_file: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub out_dir: Option<PathBuf>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    /// Root seed; data splits, initialization, sampling and evaluation
    /// derive their own streams from it.
    pub seed: u64,
    pub scene: WindowConfig,
    pub targets: TargetConfig,
    pub model: ModelConfig,
    pub loss: LossWeights,
    pub augment: AugmentConfig,
    pub sampler: SamplerConfig,
    pub ransac: RansacConfig,
    pub train: TrainConfig,
    pub eval: EvalConfig,
    pub paths: PathsConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            scene: WindowConfig::default(),
            targets: TargetConfig::default(),
            model: ModelConfig::default(),
            loss: LossWeights::default(),
            augment: AugmentConfig::default(),
            sampler: SamplerConfig::default(),
            ransac: RansacConfig::default(),
            train: TrainConfig::default(),
            eval: EvalConfig::default(),
            paths: PathsConfig::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text).map_err(|e| match e {
            Error::Config(m) => Error::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_toml()).map_err(|e| Error::io(path, e))
    }

    pub fn validate(&self) -> Result<()> {
        if self.scene.t_obs < 2 || self.scene.t_pred == 0 || !(self.scene.hz > 0.0 && self.scene.hz.is_finite()) {
            return Err(Error::Config(format!("scene: need t_obs >= 2, t_pred >= 1, hz > 0; got {:?}", self.scene)));
        }
        self.targets.validate()?;
        self.model.validate()?;
        self.loss.validate()?;
        self.train.validate()?;
        let a = &self.augment;
        if !(a.noise_sigma >= 0.0 && a.noise_sigma.is_finite()) || !(0.0..=1.0).contains(&a.drop_prob) {
            return Err(Error::Config("augment: noise_sigma must be >= 0 and drop_prob in [0, 1]".into()));
        }
        if !(0.0..=1.0).contains(&self.sampler.straight_fraction) {
            return Err(Error::Config("sampler: straight_fraction must lie in [0, 1]".into()));
        }
        let r = &self.ransac;
        if !(r.tolerance > 0.0) || r.max_trials == 0 || !(r.min_sample_fraction > 0.0 && r.min_sample_fraction <= 1.0) {
            return Err(Error::Config("ransac: tolerance and max_trials must be positive, min_sample_fraction in (0, 1]".into()));
        }
        if !(r.curve_run_fraction > 0.0 && r.curve_run_fraction <= 1.0) {
            return Err(Error::Config("ransac: curve_run_fraction must lie in (0, 1]".into()));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_is_defaults() {
        assert_eq!(ExperimentConfig::from_toml("").unwrap(), ExperimentConfig::default());
    }

    #[test]
    fn roundtrip() {
        let mut cfg = ExperimentConfig::default();
        cfg.seed = 42;
        cfg.train.iterations = Some(2000);
        cfg.targets.rho = 0.125;
        cfg.paths.out_dir = Some(PathBuf::from("runs/a"));
        let text = cfg.to_toml();
        let back = ExperimentConfig::from_toml(&text).unwrap();
        assert_eq!(back, cfg);
        assert_eq!(back.to_toml(), text);
    }

    #[test]
    fn unknown_and_invalid_rejected() {
        assert!(ExperimentConfig::from_toml("[train]\nlearning_rate = 0.1\n").is_err());
        assert!(ExperimentConfig::from_toml("bogus = 1\n").is_err());
        assert!(ExperimentConfig::from_toml("[train]\nplateau_factor = 1.5\n").is_err());
        assert!(ExperimentConfig::from_toml("[model]\nheads = 5\n").is_err());
    }

    #[test]
    fn reference_defaults() {
        let c = ExperimentConfig::default();
        assert_eq!((c.scene.t_obs, c.scene.t_pred, c.scene.hz), (20, 30, 10.0));
        assert_eq!((c.model.embed, c.model.hidden, c.targets.count), (16, 32, 32));
        assert_eq!((c.loss.gan, c.loss.ade, c.loss.fde), (1.4, 1.0, 1.5));
        assert_eq!((c.train.lr, c.train.batch, c.train.epochs, c.train.plateau_window), (1e-3, 64, 150, 5000));
        assert_eq!(c.train.plateau_factor, 0.5);
        assert_eq!(c.augment.noise_sigma, 0.25);
        assert_eq!(c.sampler.straight_fraction, 0.3);
        assert_eq!((c.ransac.tolerance, c.ransac.max_trials, c.ransac.min_sample_fraction), (2.0, 30, 0.6));
    }
}
