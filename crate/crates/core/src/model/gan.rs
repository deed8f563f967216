//! Generator, discriminator and the adversarial objective.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::encoder::{encode_tape, mhsa_tape};
use super::features::Batch;
use super::{is_discriminator_param, is_generator_param, Model};
use crate::autodiff::{Bound, ParamSet, Tape, Tensor, Var};
use crate::error::{Error, Result};
use crate::geometry::Point;
use crate::targets::TargetPointSet;

/// Weights of the adversarial, average and final squared-error terms.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LossWeights {
    pub gan: f64,
    pub ade: f64,
    pub fde: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self { gan: 1.4, ade: 1.0, fde: 1.5 }
    }
}

impl LossWeights {
    pub fn validate(&self) -> Result<()> {
        if [self.gan, self.ade, self.fde].iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
            return Err(Error::Config(format!("loss weights must be finite and non-negative: {self:?}")));
        }
        Ok(())
    }
}

pub struct GenOut {
    /// `[B x 2*t_pred]` local positions, interleaved x, y.
    pub positions: Var,
    /// Per-step `[B x 2]` displacements.
    pub deltas: Vec<Var>,
}

/// Decoder unroll. `targets` is `[B*L x 2]`, `c_so` `[B x H]`, `z` `[B x Z]`,
/// `last_delta` `[B x 2]`.
#[allow(clippy::too_many_arguments)]
pub fn generator_tape(
    model: &Model,
    tape: &mut Tape,
    bound: &Bound,
    c_so: Var,
    targets: Var,
    target_count: usize,
    z: Var,
    last_delta: Var,
) -> Result<GenOut> {
    let tp = model.tp_embed.forward(tape, bound, targets)?;
    let tp = tape.tanh(tp)?;
    let tp = tape.segment_mean(tp, target_count)?;
    let cond = tape.concat_cols(&[tp, c_so, z])?;
    let h0 = model.fuse.forward(tape, bound, cond)?;
    let mut h = tape.tanh(h0)?;
    let b = tape.value(h).shape()[0];
    let mut c = tape.constant(Tensor::zeros(&[b, model.cfg.hidden]));
    let mut prev = last_delta;
    let mut pos: Option<Var> = None;
    let mut positions = Vec::with_capacity(model.window.t_pred);
    let mut deltas = Vec::with_capacity(model.window.t_pred);
    for _ in 0..model.window.t_pred {
        let e = model.dec_embed.forward(tape, bound, prev)?;
        let e = tape.tanh(e)?;
        (h, c) = model.dec_lstm.forward(tape, bound, e, h, c)?;
        let d = model.out.forward(tape, bound, h)?;
        let p = match pos {
            None => d,
            Some(p) => tape.add(p, d)?,
        };
        pos = Some(p);
        positions.push(p);
        deltas.push(d);
        prev = d;
    }
    Ok(GenOut { positions: tape.concat_cols(&positions)?, deltas })
}

/// Logits `[R x 1]` for `R` displacement sequences given step by step.
pub fn discriminator_tape(model: &Model, tape: &mut Tape, bound: &Bound, steps: &[Var]) -> Result<Var> {
    let first = steps.first().ok_or_else(|| Error::Config("discriminator needs at least one displacement".into()))?;
    let r = tape.value(*first).shape()[0];
    let mut h = tape.constant(Tensor::zeros(&[r, model.cfg.hidden]));
    let mut c = tape.constant(Tensor::zeros(&[r, model.cfg.hidden]));
    for x in steps {
        let e = model.dis_embed.forward(tape, bound, *x)?;
        let e = tape.tanh(e)?;
        (h, c) = model.dis_lstm.forward(tape, bound, e, h, c)?;
    }
    Ok(model.dis_head.forward(tape, bound, h)?)
}

/// Encoder, attention over each scene's agents, and generator for a batch.
pub fn generator_forward(model: &Model, tape: &mut Tape, bound: &Bound, batch: &Batch) -> Result<GenOut> {
    let steps: Vec<Var> = batch.enc_steps.iter().map(|t| tape.constant(t.clone())).collect();
    let hidden = encode_tape(model, tape, bound, &steps)?;
    let (c_so, _) = mhsa_tape(model, tape, bound, hidden, &batch.groups, &batch.agent_rows)?;
    let targets = tape.constant(batch.targets.clone());
    let z = tape.constant(batch.z.clone());
    let last = tape.constant(batch.last_delta.clone());
    generator_tape(model, tape, bound, c_so, targets, batch.target_count, z, last)
}

pub struct GenLoss {
    pub total: Var,
    pub adversarial: f64,
    pub ade: f64,
    pub fde: f64,
}

/// Weighted generator objective, averaged over the batch. The adversarial
/// term is the non-saturating `-log D(fake)`; it is skipped when its weight
/// is zero.
pub fn generator_loss_tape(
    model: &Model,
    tape: &mut Tape,
    bound: &Bound,
    weights: &LossWeights,
    batch: &Batch,
    gen: &GenOut,
) -> Result<GenLoss> {
    let b = batch.size as f64;
    let t_pred = model.window.t_pred;
    let future = tape.constant(batch.future.clone());
    let se = tape.squared_error(gen.positions, future)?;
    let ade = tape.scale(se, 1.0 / (b * t_pred as f64))?;
    let last_pred = tape.slice_cols(gen.positions, 2 * (t_pred - 1), 2)?;
    let last_true = tape.slice_cols(future, 2 * (t_pred - 1), 2)?;
    let fe = tape.squared_error(last_pred, last_true)?;
    let fde = tape.scale(fe, 1.0 / b)?;
    let wa = tape.scale(ade, weights.ade)?;
    let wf = tape.scale(fde, weights.fde)?;
    let mut total = tape.add(wa, wf)?;
    let mut adversarial = 0.0;
    if weights.gan != 0.0 {
        let mut steps: Vec<Var> = batch.obs_deltas.iter().map(|t| tape.constant(t.clone())).collect();
        steps.extend(&gen.deltas);
        let logits = discriminator_tape(model, tape, bound, &steps)?;
        let adv = tape.bce_with_logits(logits, &vec![1.0; batch.size])?;
        adversarial = tape.value(adv).data()[0];
        let wg = tape.scale(adv, weights.gan)?;
        total = tape.add(total, wg)?;
    }
    Ok(GenLoss { total, adversarial, ade: tape.value(ade).data()[0], fde: tape.value(fde).data()[0] })
}

/// `BCE(D(real), 1) + BCE(D(fake), 0)`, each averaged over the batch; the
/// fakes are plain values, detached from the generator.
pub fn discriminator_loss_tape(
    model: &Model,
    tape: &mut Tape,
    bound: &Bound,
    batch: &Batch,
    fake_deltas: &[Tensor],
) -> Result<Var> {
    let stack = |a: &Tensor, b: &Tensor| {
        let mut d = a.data().to_vec();
        d.extend_from_slice(b.data());
        Tensor::matrix(a.shape()[0] + b.shape()[0], 2, d)
    };
    let mut steps = Vec::with_capacity(batch.obs_deltas.len() + fake_deltas.len());
    for o in &batch.obs_deltas {
        steps.push(tape.constant(stack(o, o)));
    }
    for (real, fake) in batch.future_deltas.iter().zip(fake_deltas) {
        steps.push(tape.constant(stack(real, fake)));
    }
    let logits = discriminator_tape(model, tape, bound, &steps)?;
    let mut labels = vec![1.0; batch.size];
    labels.extend(vec![0.0; batch.size]);
    let bce = tape.bce_with_logits(logits, &labels)?;
    Ok(tape.scale(bce, 2.0)?)
}

fn deltas_of(points: &[Point]) -> Vec<Point> {
    points.windows(2).map(|w| w[1].sub(w[0])).collect()
}

/// Predicted absolute future: goal points and last displacement are in the
/// local frame of `c_ph`, the result in global coordinates.
pub fn generate(
    model: &Model,
    params: &ParamSet,
    c_ph: &TargetPointSet,
    c_so: &[f64],
    z: &[f64],
    last_delta: Point,
) -> Result<Vec<Point>> {
    if c_so.len() != model.cfg.hidden || z.len() != model.cfg.z_dim || c_ph.points.is_empty() {
        return Err(Error::Incompatible(format!(
            "generator inputs: context {} (want {}), noise {} (want {}), {} goal points",
            c_so.len(),
            model.cfg.hidden,
            z.len(),
            model.cfg.z_dim,
            c_ph.points.len()
        )));
    }
    let mut tape = Tape::new();
    let bound = tape.bind(params, is_generator_param);
    let s = model.cfg.target_scale;
    let tp = Tensor::matrix(c_ph.points.len(), 2, c_ph.points.iter().flat_map(|p| [p.x * s, p.y * s]).collect());
    let tp = tape.constant(tp);
    let c_so = tape.constant(Tensor::matrix(1, c_so.len(), c_so.to_vec()));
    let z = tape.constant(Tensor::matrix(1, z.len(), z.to_vec()));
    let last = tape.constant(Tensor::matrix(1, 2, vec![last_delta.x, last_delta.y]));
    let out = generator_tape(model, &mut tape, &bound, c_so, tp, c_ph.points.len(), z, last)?;
    let flat = tape.value(out.positions).data();
    Ok(flat.chunks(2).map(|p| c_ph.frame.to_global(Point::new(p[0], p[1]))).collect())
}

/// Probability that `full_traj` (observation followed by future,
/// `t_obs + t_pred` positions) is real. The discriminator sees displacements
/// only, but they are direction-dependent: pass positions in the AGENT frame
/// used everywhere else in the model ([`SceneFeatures::frame`]).
///
/// [`SceneFeatures::frame`]: super::SceneFeatures::frame
pub fn discriminate(model: &Model, params: &ParamSet, full_traj: &[Point]) -> Result<f64> {
    let want = model.window.total();
    if full_traj.len() != want {
        return Err(Error::Incompatible(format!("discriminator expects {want} positions, got {}", full_traj.len())));
    }
    let mut tape = Tape::new();
    let bound = tape.bind(params, is_discriminator_param);
    let steps: Vec<Var> = deltas_of(full_traj).into_iter().map(|d| tape.constant(Tensor::matrix(1, 2, vec![d.x, d.y]))).collect();
    let logit = discriminator_tape(model, &mut tape, &bound, &steps)?;
    let p = tape.sigmoid(logit)?;
    Ok(tape.value(p).data()[0])
}

/// `gan * -ln(d_fake) + ade * mean_t |pred_t - truth_t|^2 + fde * |pred_T - truth_T|^2`.
pub fn generator_loss(weights: &LossWeights, d_fake: f64, pred: &[Point], truth: &[Point]) -> Result<f64> {
    if pred.len() != truth.len() || pred.is_empty() {
        return Err(Error::Incompatible(format!("prediction of {} frames vs ground truth of {}", pred.len(), truth.len())));
    }
    let sq = |a: &Point, b: &Point| {
        let d = a.sub(*b);
        d.dot(d)
    };
    let ade = pred.iter().zip(truth).map(|(a, b)| sq(a, b)).sum::<f64>() / pred.len() as f64;
    let fde = sq(pred.last().unwrap(), truth.last().unwrap());
    let adv = if weights.gan == 0.0 { 0.0 } else { weights.gan * -d_fake.ln() };
    Ok(adv + weights.ade * ade + weights.fde * fde)
}

/// `-ln(d_real) - ln(1 - d_fake)`.
pub fn discriminator_loss(d_real: f64, d_fake: f64) -> f64 {
    -d_real.ln() - (1.0 - d_fake).ln()
}

/// One trajectory shown to the discriminator and its true label (1 = real).
#[derive(Clone, Debug, PartialEq)]
pub struct DiscriminatorSample {
    pub trajectory: Vec<Point>,
    pub label: f64,
}

impl DiscriminatorSample {
    pub fn real(obs: &[Point], truth: &[Point]) -> Self {
        Self { trajectory: obs.iter().chain(truth).copied().collect(), label: 1.0 }
    }

    pub fn fake(obs: &[Point], pred: &[Point]) -> Self {
        Self { trajectory: obs.iter().chain(pred).copied().collect(), label: 0.0 }
    }
}

/// Observation followed by either the prediction or the ground truth, each
/// with probability one half.
pub fn sample_discriminator_input(pred: &[Point], truth: &[Point], obs: &[Point], rng: &mut impl Rng) -> DiscriminatorSample {
    if rng.random_bool(0.5) {
        DiscriminatorSample::real(obs, truth)
    } else {
        DiscriminatorSample::fake(obs, pred)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{ModelConfig, SceneFeatures};
    use crate::scene::{generate_synthetic_scene, ScenarioKind, WindowConfig};
    use crate::targets::{scene_targets, TargetConfig};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn model() -> Model {
        Model::new(ModelConfig::default(), WindowConfig::default()).unwrap()
    }

    fn inputs(scene_seed: u64) -> (TargetPointSet, Point, Vec<Point>) {
        let s = generate_synthetic_scene(scene_seed, ScenarioKind::Curve);
        let (_, tps) = scene_targets(&s, &TargetConfig::default(), &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
        let obs = s.agent_observed();
        let last = tps.frame.vec_to_local(obs[19].sub(obs[18]));
        (tps, last, obs)
    }

    #[test]
    fn zero_generator_holds_position() {
        let m = model();
        let p = m.init_zero();
        let (tps, last, obs) = inputs(1);
        let out = generate(&m, &p, &tps, &[0.3; 32], &[1.0; 8], last).unwrap();
        assert_eq!(out.len(), 30);
        for q in out {
            assert!(q.dist(obs[19]) < 1e-12);
        }
    }

    #[test]
    fn noise_changes_the_forecast() {
        let m = model();
        let p = m.init(&mut ChaCha8Rng::seed_from_u64(4));
        let (tps, last, _) = inputs(2);
        let a = generate(&m, &p, &tps, &[0.1; 32], &[0.5; 8], last).unwrap();
        let b = generate(&m, &p, &tps, &[0.1; 32], &[-0.5; 8], last).unwrap();
        let diff = a.iter().zip(&b).map(|(x, y)| x.dist(*y)).fold(0.0, f64::max);
        assert!(diff > 1e-6);
        assert!(generate(&m, &p, &tps, &[0.1; 31], &[0.5; 8], last).is_err());
    }

    #[test]
    fn discriminator_range() {
        let m = model();
        let traj: Vec<Point> = (0..50).map(|i| Point::new(i as f64, (i as f64 * 0.1).sin())).collect();
        assert_eq!(discriminate(&m, &m.init_zero(), &traj).unwrap(), 0.5);
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..20 {
            let p = m.init(&mut rng);
            let t: Vec<Point> = (0..50).map(|_| Point::new(rng.random_range(-50.0..50.0), rng.random_range(-50.0..50.0))).collect();
            let d = discriminate(&m, &p, &t).unwrap();
            assert!(d > 0.0 && d < 1.0);
        }
        assert!(discriminate(&m, &m.init_zero(), &traj[..49]).is_err());
    }

    #[test]
    fn scalar_losses() {
        let y: Vec<Point> = (0..30).map(|i| Point::new(i as f64, 0.0)).collect();
        let w = LossWeights::default();
        assert_eq!(generator_loss(&w, 1.0, &y, &y).unwrap(), 0.0);
        let off: Vec<Point> = y.iter().map(|p| p.add(Point::new(3.0, 4.0))).collect();
        let only_l2 = LossWeights { gan: 0.0, ..w };
        assert_eq!(generator_loss(&only_l2, 0.3, &off, &y).unwrap(), 62.5);
        assert_eq!(discriminator_loss(1.0, 0.0), 0.0);
        assert!((discriminator_loss(0.5, 0.5) - 2.0 * 2f64.ln()).abs() < 1e-15);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..100 {
            let (r, f): (f64, f64) = (rng.random_range(0.01..0.99), rng.random_range(0.01..0.99));
            assert!((discriminator_loss(r, f) - (-(r.ln()) - (1.0 - f).ln())).abs() < 1e-12);
        }
    }

    #[test]
    fn weighted_loss_matches_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let pred: Vec<Point> = (0..30).map(|_| Point::new(rng.random_range(-5.0..5.0), rng.random_range(-5.0..5.0))).collect();
        let truth: Vec<Point> = (0..30).map(|_| Point::new(rng.random_range(-5.0..5.0), rng.random_range(-5.0..5.0))).collect();
        let d = 0.37;
        let mut sq = 0.0;
        for i in 0..30 {
            sq += (pred[i].x - truth[i].x).powi(2) + (pred[i].y - truth[i].y).powi(2);
        }
        let last = (pred[29].x - truth[29].x).powi(2) + (pred[29].y - truth[29].y).powi(2);
        let oracle = 1.4 * -(d as f64).ln() + sq / 30.0 + 1.5 * last;
        assert!((generator_loss(&LossWeights::default(), d, &pred, &truth).unwrap() - oracle).abs() < 1e-12);
    }

    #[test]
    fn discriminator_input_draws() {
        let obs = vec![Point::ORIGIN; 20];
        let pred = vec![Point::new(1.0, 0.0); 30];
        let truth = vec![Point::new(2.0, 0.0); 30];
        assert_eq!(DiscriminatorSample::real(&obs, &truth).label, 1.0);
        assert_eq!(DiscriminatorSample::fake(&obs, &pred).label, 0.0);
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut real = 0;
        for _ in 0..10_000 {
            let s = sample_discriminator_input(&pred, &truth, &obs, &mut rng);
            assert_eq!(s.trajectory.len(), 50);
            let expect = if s.label == 1.0 { truth[0] } else { pred[0] };
            assert_eq!(s.trajectory[20], expect);
            real += (s.label == 1.0) as usize;
        }
        assert!((4800..=5200).contains(&real), "{real}");
    }

    #[test]
    fn batch_loss_matches_scalar_loss() {
        let m = model();
        let p = m.init(&mut ChaCha8Rng::seed_from_u64(3));
        let s = generate_synthetic_scene(8, ScenarioKind::TurnWithTraffic);
        let f = SceneFeatures::build(&s, &TargetConfig::default(), &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        let z = vec![0.2, -0.1, 0.0, 1.0, 0.5, -0.7, 0.3, 0.9];
        let batch = Batch::new(&m, &[&f], Tensor::matrix(1, 8, z.clone())).unwrap();
        let mut tape = Tape::new();
        let bound = tape.bind(&p, is_generator_param);
        let gen = generator_forward(&m, &mut tape, &bound, &batch).unwrap();
        let w = LossWeights::default();
        let loss = generator_loss_tape(&m, &mut tape, &bound, &w, &batch, &gen).unwrap();

        let ctx = crate::model::social_forward(&m, &p, &s, &TargetConfig::default()).unwrap();
        let pred = generate(&m, &p, &f.targets, ctx.target_context(), &z, f.last_delta()).unwrap();
        let full: Vec<Point> = s.agent_observed().into_iter().chain(pred.iter().copied()).map(|q| f.frame.to_local(q)).collect();
        let d = discriminate(&m, &p, &full).unwrap();
        let scalar = generator_loss(&w, d, &pred, &s.agent_future()).unwrap();
        let total = tape.value(loss.total).data()[0];
        assert!((total - scalar).abs() < 1e-9 * scalar.max(1.0), "{total} vs {scalar}");
        assert!((loss.adversarial + d.ln()).abs() < 1e-9);
        assert!(loss.ade >= 0.0 && loss.fde >= 0.0);
    }
}
