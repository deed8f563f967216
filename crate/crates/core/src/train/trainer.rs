use std::io::Write;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use super::eval::{label_scenes, predict_scenes};
use super::metrics::{ade, fde};
use super::scheduler::PlateauScheduler;
use crate::autodiff::{AdamState, Bound, ParamGrads, ParamSet, Tape, Tensor};
use crate::config::ExperimentConfig;
use crate::error::{Error, Result};
use crate::model::gan::{discriminator_loss_tape, generator_forward, generator_loss_tape};
use crate::model::{is_discriminator_param, is_generator_param, Batch, Model, SceneFeatures};
use crate::preprocess::{augment, BalancedSampler, Curvature, UniformSampler};
use crate::scene::Scene;

pub const METRICS_HEADER: &str = "iteration,g_loss,d_loss,lr,val_ade,val_fde";

// Stream salts so that each consumer of the root seed is independent.
const SPLIT_SALT: u64 = 0x5A17;
const INIT_SALT: u64 = 0x1A17;
const SAMPLER_SALT: u64 = 0x5A3B;
const STEP_SALT: u64 = 0x57E9;
const LABEL_SALT: u64 = 0x1AB1;
/// Seed of the fixed goal-point and noise draws used for validation.
pub const VALIDATION_SALT: u64 = 0x7A11;

/// One line of the metrics log: mean losses since the previous line.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LogRow {
    pub iteration: usize,
    pub g_loss: f64,
    pub d_loss: f64,
    pub lr: f64,
    pub val_ade: f64,
    pub val_fde: f64,
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub model: Model,
    /// Parameters with the lowest validation ADE seen.
    pub best: ParamSet,
    pub best_iteration: usize,
    pub best_val_ade: f64,
    /// Parameters after the last update.
    pub last: ParamSet,
    pub log: Vec<LogRow>,
    pub iterations: usize,
    pub train_size: usize,
    pub val_size: usize,
}

impl TrainOutcome {
    pub fn write_log(&self, mut w: impl Write) -> std::io::Result<()> {
        writeln!(w, "{METRICS_HEADER}")?;
        for r in &self.log {
            writeln!(w, "{},{},{},{},{},{}", r.iteration, r.g_loss, r.d_loss, r.lr, r.val_ade, r.val_fde)?;
        }
        Ok(())
    }

    pub fn log_string(&self) -> String {
        let mut buf = Vec::new();
        self.write_log(&mut buf).expect("writing to memory");
        String::from_utf8(buf).expect("ascii")
    }
}

enum Sampler {
    Balanced(BalancedSampler),
    Uniform(UniformSampler),
}

impl Sampler {
    fn next_batch(&mut self) -> Vec<usize> {
        match self {
            Self::Balanced(s) => s.next_batch(),
            Self::Uniform(s) => s.next_batch(),
        }
    }
}

/// Gradients of the group, with zeros for parameters the loss does not reach.
fn complete(grads: ParamGrads, params: &ParamSet, bound: &Bound, group: fn(&str) -> bool) -> ParamGrads {
    let mut grads = grads;
    for (name, _) in bound.iter() {
        if group(name) && grads.get(name).is_none() {
            grads.insert(name.clone(), Tensor::zeros(params.get(name).expect("bound from params").shape()));
        }
    }
    grads
}

/// Splits indices into (train, validation). An empty validation share falls
/// back to validating on the training scenes.
fn split(n: usize, fraction: f64, seed: u64) -> (Vec<usize>, Vec<usize>) {
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed ^ SPLIT_SALT));
    let n_val = (fraction * n as f64).floor() as usize;
    let val = idx[..n_val].to_vec();
    let mut train = idx[n_val..].to_vec();
    train.sort_unstable();
    let mut val = if val.is_empty() { train.clone() } else { val };
    val.sort_unstable();
    (train, val)
}

fn validate(model: &Model, params: &ParamSet, scenes: &[Scene], cfg: &ExperimentConfig) -> Result<(f64, f64)> {
    let preds = predict_scenes(model, params, scenes, &cfg.targets, cfg.seed ^ VALIDATION_SALT)?;
    let (mut a, mut f) = (0.0, 0.0);
    for (s, p) in scenes.iter().zip(&preds) {
        let truth = s.agent_future();
        a += ade(&p.positions, &truth)?;
        f += fde(&p.positions, &truth)?;
    }
    let n = scenes.len() as f64;
    Ok((a / n, f / n))
}

/// Adversarial training with alternating generator and discriminator steps.
///
/// Each iteration draws a batch, augments every scene and samples its goal
/// points, then takes one Adam step on the generator (adversarial plus
/// displacement losses) and one on the discriminator (real futures against
/// the detached generated ones). Every `eval_every` iterations and at the
/// end the validation ADE/FDE is measured, the plateau scheduler updated and
/// a log row written; the parameters with the best validation ADE are kept.
pub fn train(cfg: &ExperimentConfig, scenes: &[Scene]) -> Result<TrainOutcome> {
    train_with_progress(cfg, scenes, |_| {})
}

/// [`train`] with a callback per log row.
pub fn train_with_progress(cfg: &ExperimentConfig, scenes: &[Scene], mut progress: impl FnMut(&LogRow)) -> Result<TrainOutcome> {
    cfg.validate()?;
    let tc = &cfg.train;
    let model = Model::new(cfg.model, cfg.scene)?;
    if scenes.is_empty() {
        return Err(Error::Config("training corpus is empty".into()));
    }
    for s in scenes {
        model.check_window(s.window())?;
    }

    let (train_idx, val_idx) = split(scenes.len(), tc.val_fraction, cfg.seed);
    if train_idx.is_empty() {
        return Err(Error::Config(format!("validation fraction {} leaves no training scenes", tc.val_fraction)));
    }
    // Crop each training map once; rotation keeps the goal-point crop inside
    // a square of half-width d * sqrt(2) around the last observed position.
    let margin = cfg.targets.crop_half_width * std::f64::consts::SQRT_2 + 5.0;
    let train_set: Vec<Scene> = train_idx
        .par_iter()
        .map(|&i| {
            let s = &scenes[i];
            s.with_map(std::sync::Arc::new(s.map().crop(s.agent_last_observed(), margin)))
        })
        .collect();
    let val_set: Vec<Scene> = val_idx.iter().map(|&i| scenes[i].clone()).collect();

    let mut sampler = if cfg.sampler.class_balance {
        let labels: Vec<Curvature> = label_scenes(&train_set, &cfg.ransac, cfg.seed ^ LABEL_SALT)?;
        Sampler::Balanced(BalancedSampler::new(&labels, tc.batch, cfg.sampler.straight_fraction, cfg.seed ^ SAMPLER_SALT)?)
    } else {
        Sampler::Uniform(UniformSampler::new(train_set.len(), tc.batch, cfg.seed ^ SAMPLER_SALT)?)
    };

    let mut params = model.init(&mut ChaCha8Rng::seed_from_u64(cfg.seed ^ INIT_SALT));
    let gen_names: Vec<String> = params.names().filter(|n| is_generator_param(n)).cloned().collect();
    let dis_names: Vec<String> = params.names().filter(|n| is_discriminator_param(n)).cloned().collect();
    let mut adam_g = AdamState::new(tc.adam(), &params, &gen_names);
    let mut adam_d = AdamState::new(tc.adam(), &params, &dis_names);
    let mut scheduler = PlateauScheduler::new(tc.lr, tc.plateau_factor, tc.plateau_window, tc.plateau_smoothing, tc.plateau_threshold);

    let iterations = tc.iterations.unwrap_or(tc.epochs * train_set.len().div_ceil(tc.batch));
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ STEP_SALT);
    let mut log = Vec::new();
    let (mut g_sum, mut d_sum, mut since) = (0.0, 0.0, 0usize);
    let mut best = params.clone();
    let (mut best_iteration, mut best_val_ade) = (0, f64::INFINITY);

    for it in 1..=iterations {
        let idx = sampler.next_batch();
        let seeds: Vec<u64> = idx.iter().map(|_| rng.random()).collect();
        let feats = idx
            .par_iter()
            .zip(&seeds)
            .map(|(&i, &seed)| {
                let mut r = ChaCha8Rng::seed_from_u64(seed);
                if cfg.augment.enabled {
                    SceneFeatures::build(&augment(&train_set[i], &mut r, &cfg.augment), &cfg.targets, &mut r)
                } else {
                    SceneFeatures::build(&train_set[i], &cfg.targets, &mut r)
                }
            })
            .collect::<Result<Vec<_>>>()?;
        let z: Vec<f64> = (0..idx.len() * model.cfg.z_dim).map(|_| rng.sample(StandardNormal)).collect();
        let refs: Vec<&SceneFeatures> = feats.iter().collect();
        let batch = Batch::new(&model, &refs, Tensor::matrix(idx.len(), model.cfg.z_dim, z))?;

        let mut tape = Tape::new();
        let bound = tape.bind(&params, is_generator_param);
        let gen = generator_forward(&model, &mut tape, &bound, &batch)?;
        let loss = generator_loss_tape(&model, &mut tape, &bound, &cfg.loss, &batch, &gen)?;
        let fake: Vec<Tensor> = gen.deltas.iter().map(|d| tape.value(*d).clone()).collect();
        g_sum += tape.value(loss.total).data()[0];
        let grads = tape.backward(loss.total)?.into_params(&bound);
        let grads = complete(grads, &params, &bound, is_generator_param);
        adam_g.apply(&mut params, grads)?;

        let mut tape = Tape::new();
        let bound = tape.bind(&params, is_discriminator_param);
        let d_loss = discriminator_loss_tape(&model, &mut tape, &bound, &batch, &fake)?;
        d_sum += tape.value(d_loss).data()[0];
        let grads = tape.backward(d_loss)?.into_params(&bound);
        let grads = complete(grads, &params, &bound, is_discriminator_param);
        adam_d.apply(&mut params, grads)?;
        since += 1;

        if it % tc.eval_every == 0 || it == iterations {
            let (val_ade, val_fde) = validate(&model, &params, &val_set, cfg)?;
            let lr = scheduler.observe(it, val_ade);
            adam_g.lr = lr;
            adam_d.lr = lr;
            let row = LogRow { iteration: it, g_loss: g_sum / since as f64, d_loss: d_sum / since as f64, lr, val_ade, val_fde };
            progress(&row);
            log.push(row);
            (g_sum, d_sum, since) = (0.0, 0.0, 0);
            if val_ade < best_val_ade {
                best_val_ade = val_ade;
                best_iteration = it;
                best = params.clone();
            }
        }
    }

    Ok(TrainOutcome {
        model,
        best,
        best_iteration,
        best_val_ade,
        last: params,
        log,
        iterations,
        train_size: train_set.len(),
        val_size: val_set.len(),
    })
}
