//! The networks: a social encoder (per-agent LSTM plus self-attention), an
//! LSTM generator conditioned on goal points, social context and noise, and
//! an LSTM discriminator over whole trajectories.
//!
//! Everything runs in the AGENT's local frame at the last observation.

pub mod encoder;
pub mod features;
pub mod gan;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{Linear, LstmCell, ParamSet, Tensor};
use crate::error::{Error, Result};
use crate::scene::WindowConfig;

pub use encoder::{encode_motion, encode_tape, mhsa, mhsa_tape, social_forward, SocialContext};
pub use features::{Batch, SceneFeatures};
pub use gan::{
    discriminator_loss_tape, discriminator_tape, generator_forward, generator_loss_tape, generator_tape, GenLoss, GenOut,
    discriminate, discriminator_loss, generate, generator_loss, sample_discriminator_input, DiscriminatorSample,
    LossWeights,
};

/// Name of the checkpoint record holding the architecture.
pub const META_RECORD: &str = "meta/model";

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelConfig {
    pub embed: usize,
    pub hidden: usize,
    pub heads: usize,
    pub z_dim: usize,
    /// Goal points are multiplied by this before entering the network.
    pub target_scale: f64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self { embed: 16, hidden: 32, heads: 4, z_dim: 8, target_scale: 0.1 }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        if self.embed == 0 || self.hidden == 0 || self.heads == 0 {
            return Err(Error::Config("model: embed, hidden and heads must be positive".into()));
        }
        if self.hidden % self.heads != 0 {
            return Err(Error::Config(format!("model: {} heads do not divide hidden size {}", self.heads, self.hidden)));
        }
        if !self.target_scale.is_finite() {
            return Err(Error::Config("model: target_scale must be finite".into()));
        }
        Ok(())
    }

    pub fn head_dim(&self) -> usize {
        self.hidden / self.heads
    }
}

/// Layer layout of the whole model. Parameter names live under `gen/` and `dis/`.
#[derive(Clone, Debug)]
pub struct Model {
    pub cfg: ModelConfig,
    pub window: WindowConfig,
    pub enc_embed: Linear,
    pub enc_lstm: LstmCell,
    pub q: Linear,
    pub k: Linear,
    pub v: Linear,
    pub o: Linear,
    pub tp_embed: Linear,
    pub fuse: Linear,
    pub dec_embed: Linear,
    pub dec_lstm: LstmCell,
    pub out: Linear,
    pub dis_embed: Linear,
    pub dis_lstm: LstmCell,
    pub dis_head: Linear,
}

impl Model {
    pub fn new(cfg: ModelConfig, window: WindowConfig) -> Result<Self> {
        cfg.validate()?;
        if window.t_obs < 2 || window.t_pred == 0 {
            return Err(Error::Config(format!("window needs t_obs >= 2 and t_pred >= 1, got {}/{}", window.t_obs, window.t_pred)));
        }
        let (e, h) = (cfg.embed, cfg.hidden);
        Ok(Self {
            cfg,
            window,
            enc_embed: Linear::new("gen/enc/embed", 2, e),
            enc_lstm: LstmCell::new("gen/enc/lstm", e, h),
            q: Linear::new("gen/enc/mhsa/q", h, h),
            k: Linear::new("gen/enc/mhsa/k", h, h),
            v: Linear::new("gen/enc/mhsa/v", h, h),
            o: Linear::new("gen/enc/mhsa/o", h, h),
            tp_embed: Linear::new("gen/tp_embed", 2, e),
            fuse: Linear::new("gen/fuse", e + h + cfg.z_dim, h),
            dec_embed: Linear::new("gen/dec_embed", 2, e),
            dec_lstm: LstmCell::new("gen/dec_lstm", e, h),
            out: Linear::new("gen/out", h, 2),
            dis_embed: Linear::new("dis/embed", 2, e),
            dis_lstm: LstmCell::new("dis/lstm", e, h),
            dis_head: Linear::new("dis/head", h, 1),
        })
    }

    fn linears(&self) -> [&Linear; 11] {
        [
            &self.enc_embed,
            &self.q,
            &self.k,
            &self.v,
            &self.o,
            &self.tp_embed,
            &self.fuse,
            &self.dec_embed,
            &self.out,
            &self.dis_embed,
            &self.dis_head,
        ]
    }

    fn cells(&self) -> [&LstmCell; 3] {
        [&self.enc_lstm, &self.dec_lstm, &self.dis_lstm]
    }

    fn meta(&self) -> Tensor {
        let c = &self.cfg;
        let w = &self.window;
        Tensor::vector(vec![
            w.t_obs as f64,
            w.t_pred as f64,
            w.hz,
            c.embed as f64,
            c.hidden as f64,
            c.heads as f64,
            c.z_dim as f64,
            c.target_scale,
        ])
    }

    /// Random initialization: uniform in `±1/sqrt(fan_in)`, LSTM forget bias 1.
    pub fn init(&self, rng: &mut impl Rng) -> ParamSet {
        let mut p = ParamSet::new();
        for l in self.linears() {
            l.init(&mut p, rng);
        }
        for c in self.cells() {
            c.init(&mut p, rng);
        }
        p.insert(META_RECORD, self.meta());
        p
    }

    /// All-zero weights and biases.
    pub fn init_zero(&self) -> ParamSet {
        let mut p = ParamSet::new();
        for l in self.linears() {
            l.init_zero(&mut p);
        }
        for c in self.cells() {
            c.init_zero(&mut p);
        }
        p.insert(META_RECORD, self.meta());
        p
    }

    /// Rebuilds the layout recorded in a checkpoint and checks every tensor.
    pub fn from_params(params: &ParamSet) -> Result<Self> {
        let meta = params
            .get(META_RECORD)
            .ok_or_else(|| Error::Incompatible(format!("checkpoint lacks the `{META_RECORD}` record")))?;
        let m = meta.data();
        if m.len() != 8 || m.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::Incompatible(format!("malformed `{META_RECORD}` record {m:?}")));
        }
        let window = WindowConfig { t_obs: m[0] as usize, t_pred: m[1] as usize, hz: m[2] };
        let cfg = ModelConfig { embed: m[3] as usize, hidden: m[4] as usize, heads: m[5] as usize, z_dim: m[6] as usize, target_scale: m[7] };
        let model = Self::new(cfg, window)?;
        let reference = model.init_zero();
        for (name, t) in reference.iter() {
            match params.get(name) {
                Some(p) if p.shape() == t.shape() => {}
                Some(p) => {
                    return Err(Error::Incompatible(format!("parameter `{name}` has shape {:?}, expected {:?}", p.shape(), t.shape())))
                }
                None => return Err(Error::Incompatible(format!("checkpoint lacks parameter `{name}`"))),
            }
        }
        if let Some(extra) = params.names().find(|n| reference.get(n).is_none()) {
            return Err(Error::Incompatible(format!("unexpected parameter `{extra}`")));
        }
        Ok(model)
    }

    /// Errors unless scenes were cut with the window this model was built for.
    pub fn check_window(&self, window: WindowConfig) -> Result<()> {
        if window != self.window {
            return Err(Error::Incompatible(format!(
                "model expects t_obs={} t_pred={} hz={}, scene has t_obs={} t_pred={} hz={}",
                self.window.t_obs, self.window.t_pred, self.window.hz, window.t_obs, window.t_pred, window.hz
            )));
        }
        Ok(())
    }
}

/// Reads a checkpoint and rebuilds the model it was saved from.
pub fn load_checkpoint(path: &std::path::Path) -> Result<(Model, ParamSet)> {
    let params = crate::autodiff::checkpoint::load(path)?;
    let model = Model::from_params(&params).map_err(|e| match e {
        Error::Incompatible(m) => Error::Incompatible(format!("{}: {m}", path.display())),
        other => other,
    })?;
    Ok((model, params))
}

pub fn is_generator_param(name: &str) -> bool {
    name.starts_with("gen/")
}

pub fn is_discriminator_param(name: &str) -> bool {
    name.starts_with("dis/")
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn layout_roundtrips_through_params() {
        let m = Model::new(ModelConfig::default(), WindowConfig::default()).unwrap();
        let p = m.init(&mut ChaCha8Rng::seed_from_u64(0));
        let back = Model::from_params(&p).unwrap();
        assert_eq!(back.cfg, m.cfg);
        assert_eq!(back.window, m.window);
        assert_eq!(p.get("gen/enc/lstm/w_ih").unwrap().shape(), [128, 16]);
        assert_eq!(p.get("gen/fuse/weight").unwrap().shape(), [32, 56]);
        assert_eq!(p.get("dis/head/weight").unwrap().shape(), [1, 32]);
    }

    #[test]
    fn incompatible_params_rejected() {
        let m = Model::new(ModelConfig::default(), WindowConfig::default()).unwrap();
        let mut p = m.init_zero();
        p.insert("gen/out/bias", Tensor::zeros(&[3]));
        assert!(matches!(Model::from_params(&p), Err(Error::Incompatible(_))));
        let mut p = m.init_zero();
        p.insert("gen/extra", Tensor::zeros(&[1]));
        assert!(Model::from_params(&p).is_err());
        assert!(m.check_window(WindowConfig { t_obs: 10, ..WindowConfig::default() }).is_err());
        assert!(Model::new(ModelConfig { heads: 5, ..ModelConfig::default() }, WindowConfig::default()).is_err());
    }
}
