//! Per-agent motion encoding and multi-head self-attention across agents.

use super::features::local_deltas;
use super::{is_generator_param, Model};
use crate::autodiff::{Bound, ParamSet, Tape, Tensor, Var};
use crate::error::{Error, Result};
use crate::preprocess::DisplacementTrack;
use crate::scene::Scene;
use crate::targets::{estimate_dynamics, TargetConfig};

/// Runs the embedding and encoder LSTM over `steps` (one `[N x 2]` per
/// displacement) and returns the final hidden state `[N x H]`.
pub fn encode_tape(model: &Model, tape: &mut Tape, bound: &Bound, steps: &[Var]) -> Result<Var> {
    let first = steps.first().ok_or_else(|| Error::Config("motion encoding needs at least one displacement".into()))?;
    let n = tape.value(*first).shape()[0];
    let mut h = tape.constant(Tensor::zeros(&[n, model.cfg.hidden]));
    let mut c = tape.constant(Tensor::zeros(&[n, model.cfg.hidden]));
    for x in steps {
        let e = model.enc_embed.forward(tape, bound, *x)?;
        let e = tape.tanh(e)?;
        (h, c) = model.enc_lstm.forward(tape, bound, e, h, c)?;
    }
    Ok(h)
}

/// Self-attention of the `queries` rows of `hidden` over all rows sharing
/// their group. Returns the context `[Q x H]` (output projection plus
/// residual) and each head's attention weights `[Q x N]`.
pub fn mhsa_tape(
    model: &Model,
    tape: &mut Tape,
    bound: &Bound,
    hidden: Var,
    groups: &[usize],
    queries: &[usize],
) -> Result<(Var, Vec<Var>)> {
    let n = groups.len();
    let hq = tape.gather_rows(hidden, queries)?;
    let q = model.q.forward(tape, bound, hq)?;
    let k = model.k.forward(tape, bound, hidden)?;
    let v = model.v.forward(tape, bound, hidden)?;
    let mask: Vec<bool> = queries.iter().flat_map(|&r| groups.iter().map(move |g| *g == groups[r])).collect();
    let mask = (!mask.iter().all(|m| *m)).then_some(mask);
    let d = model.cfg.head_dim();
    let scale = 1.0 / (d as f64).sqrt();
    let mut heads = Vec::with_capacity(model.cfg.heads);
    let mut weights = Vec::with_capacity(model.cfg.heads);
    for i in 0..model.cfg.heads {
        let qh = tape.slice_cols(q, i * d, d)?;
        let kh = tape.slice_cols(k, i * d, d)?;
        let vh = tape.slice_cols(v, i * d, d)?;
        let scores = tape.matmul_t(qh, kh)?;
        let scores = tape.scale(scores, scale)?;
        let a = tape.masked_softmax(scores, mask.as_deref())?;
        heads.push(tape.matmul(a, vh)?);
        weights.push(a);
    }
    debug_assert_eq!(tape.value(weights[0]).shape(), [queries.len(), n]);
    let cat = tape.concat_cols(&heads)?;
    let out = model.o.forward(tape, bound, cat)?;
    Ok((tape.add(out, hq)?, weights))
}

/// Social context of every encoded agent.
#[derive(Clone, Debug, PartialEq)]
pub struct SocialContext {
    /// `[N x H]`, one row per agent.
    pub rows: Tensor,
    /// Per head `[N x N]` attention weights; row i attends over all agents.
    pub weights: Vec<Tensor>,
    /// Row of the target AGENT.
    pub target: usize,
}

impl SocialContext {
    pub fn target_context(&self) -> &[f64] {
        self.rows.row(self.target)
    }
}

fn bind_generator(tape: &mut Tape, params: &ParamSet) -> Bound {
    tape.bind(params, is_generator_param)
}

/// Final encoder hidden state per track, `[N x H]`. Every track needs the
/// same number of displacements.
pub fn encode_motion(model: &Model, params: &ParamSet, tracks: &[DisplacementTrack]) -> Result<Tensor> {
    let len = tracks.first().ok_or_else(|| Error::Config("motion encoding needs at least one track".into()))?.deltas.len();
    if let Some(t) = tracks.iter().find(|t| t.deltas.len() != len) {
        return Err(Error::Incompatible(format!("tracks of {} and {} displacements", len, t.deltas.len())));
    }
    let mut tape = Tape::new();
    let bound = bind_generator(&mut tape, params);
    let steps: Vec<Var> = (0..len)
        .map(|i| tape.constant(Tensor::matrix(tracks.len(), 2, tracks.iter().flat_map(|t| [t.deltas[i].x, t.deltas[i].y]).collect())))
        .collect();
    let h = encode_tape(model, &mut tape, &bound, &steps)?;
    Ok(tape.value(h).clone())
}

/// Self-attention over one scene's agents; row 0 is taken as the target.
pub fn mhsa(model: &Model, params: &ParamSet, hidden: &Tensor) -> Result<SocialContext> {
    let n = hidden.shape().first().copied().unwrap_or(0);
    if n == 0 || hidden.shape() != [n, model.cfg.hidden] {
        return Err(Error::Incompatible(format!("attention input of shape {:?}", hidden.shape())));
    }
    let mut tape = Tape::new();
    let bound = bind_generator(&mut tape, params);
    let h = tape.constant(hidden.clone());
    let all: Vec<usize> = (0..n).collect();
    let (ctx, weights) = mhsa_tape(model, &mut tape, &bound, h, &vec![0; n], &all)?;
    Ok(SocialContext {
        rows: tape.value(ctx).clone(),
        weights: weights.iter().map(|w| tape.value(*w).clone()).collect(),
        target: 0,
    })
}

/// Displacements in the AGENT frame, encoding, then attention over every
/// agent observed in at least two frames.
pub fn social_forward(model: &Model, params: &ParamSet, scene: &Scene, targets: &TargetConfig) -> Result<SocialContext> {
    model.check_window(scene.window())?;
    let state = estimate_dynamics(&scene.agent_observed(), scene.window().hz, targets)?;
    let deltas = local_deltas(scene, state.frame())?;
    let tracks: Vec<DisplacementTrack> =
        deltas.into_iter().map(|d| DisplacementTrack { origin: crate::geometry::Point::ORIGIN, deltas: d }).collect();
    let hidden = encode_motion(model, params, &tracks)?;
    mhsa(model, params, &hidden)
}
