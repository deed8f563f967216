use rand::Rng;

use super::Model;
use crate::autodiff::Tensor;
use crate::error::{Error, Result};
use crate::geometry::{Frame, Point};
use crate::preprocess::to_displacements;
use crate::scene::Scene;
use crate::targets::{scene_targets, TargetConfig, TargetPointSet};

/// Network inputs for one scene, in the AGENT frame at the last observation.
#[derive(Clone, Debug, PartialEq)]
pub struct SceneFeatures {
    pub scene_id: String,
    pub frame: Frame,
    pub stationary: bool,
    /// Observed per-frame displacements of every encoded agent, AGENT first.
    /// Agents seen in fewer than two observed frames are left out; gaps are
    /// filled by replicating the nearest known frame.
    pub agent_deltas: Vec<Vec<Point>>,
    pub targets: TargetPointSet,
    /// Ground-truth future relative to the last observed position.
    pub future: Vec<Point>,
}

impl SceneFeatures {
    pub fn build(scene: &Scene, targets: &TargetConfig, rng: &mut impl Rng) -> Result<Self> {
        let (state, tps) = scene_targets(scene, targets, rng)?;
        let frame = tps.frame;
        let agent_deltas = local_deltas(scene, frame)?;
        let future = scene.agent_future().into_iter().map(|p| frame.to_local(p)).collect();
        Ok(Self { scene_id: scene.scene_id.clone(), frame, stationary: state.stationary, agent_deltas, targets: tps, future })
    }

    pub fn last_delta(&self) -> Point {
        *self.agent_deltas[0].last().expect("at least one observed displacement")
    }

    pub fn future_deltas(&self) -> Vec<Point> {
        let mut prev = Point::ORIGIN;
        self.future
            .iter()
            .map(|p| {
                let d = p.sub(prev);
                prev = *p;
                d
            })
            .collect()
    }

    pub fn to_global(&self, local: &[Point]) -> Vec<Point> {
        local.iter().map(|p| self.frame.to_global(*p)).collect()
    }
}

/// Observed displacements of every agent with at least two observed frames,
/// AGENT first, rotated into `frame`.
pub fn local_deltas(scene: &Scene, frame: Frame) -> Result<Vec<Vec<Point>>> {
    let obs = 0..scene.window().t_obs;
    let local = |d: &[Point]| d.iter().map(|v| frame.vec_to_local(*v)).collect::<Vec<_>>();
    let mut out = vec![local(&to_displacements(scene.agent(), obs.clone())?.deltas)];
    for (i, t) in scene.tracks().iter().enumerate() {
        if i != scene.agent_index() && t.count_in(obs.clone()) >= 2 {
            out.push(local(&to_displacements(t, obs.clone())?.deltas));
        }
    }
    Ok(out)
}

fn rows(points: impl Iterator<Item = Point>) -> Tensor {
    let data: Vec<f64> = points.flat_map(|p| [p.x, p.y]).collect();
    Tensor::matrix(data.len() / 2, 2, data)
}

/// Stacked tensors for a batch of scenes.
#[derive(Clone, Debug)]
pub struct Batch {
    pub size: usize,
    /// One `[N x 2]` tensor per observed displacement step, N encoded agents.
    pub enc_steps: Vec<Tensor>,
    /// Batch index of each encoded agent row.
    pub groups: Vec<usize>,
    /// Row of each scene's AGENT among the encoded agents.
    pub agent_rows: Vec<usize>,
    /// `[B*L x 2]`, already scaled.
    pub targets: Tensor,
    pub target_count: usize,
    /// `[B x 2]`
    pub last_delta: Tensor,
    /// AGENT observed displacements, one `[B x 2]` per step.
    pub obs_deltas: Vec<Tensor>,
    /// `[B x 2*t_pred]`, interleaved x, y per frame.
    pub future: Tensor,
    /// One `[B x 2]` per future step.
    pub future_deltas: Vec<Tensor>,
    /// `[B x z_dim]`
    pub z: Tensor,
}

impl Batch {
    pub fn new(model: &Model, feats: &[&SceneFeatures], z: Tensor) -> Result<Self> {
        let b = feats.len();
        if b == 0 {
            return Err(Error::Config("empty batch".into()));
        }
        let (t_obs, t_pred) = (model.window.t_obs, model.window.t_pred);
        let l = feats[0].targets.points.len();
        for f in feats {
            if f.agent_deltas.iter().any(|d| d.len() != t_obs - 1) || f.future.len() != t_pred {
                return Err(Error::Incompatible(format!("scene {} does not match the model window", f.scene_id)));
            }
            if f.targets.points.len() != l || l == 0 {
                return Err(Error::Incompatible(format!("scene {} has {} goal points, batch uses {l}", f.scene_id, f.targets.points.len())));
            }
        }
        if z.shape() != [b, model.cfg.z_dim] {
            return Err(Error::Incompatible(format!("noise shape {:?} for batch {b}", z.shape())));
        }

        let mut groups = Vec::new();
        let mut agent_rows = Vec::with_capacity(b);
        for (i, f) in feats.iter().enumerate() {
            agent_rows.push(groups.len());
            groups.extend(std::iter::repeat_n(i, f.agent_deltas.len()));
        }
        let enc_steps = (0..t_obs - 1)
            .map(|t| rows(feats.iter().flat_map(|f| f.agent_deltas.iter().map(move |d| d[t]))))
            .collect();
        let s = model.cfg.target_scale;
        let targets = rows(feats.iter().flat_map(|f| f.targets.points.iter().map(move |p| p.scale(s))));
        let last_delta = rows(feats.iter().map(|f| f.last_delta()));
        let obs_deltas = (0..t_obs - 1).map(|t| rows(feats.iter().map(|f| f.agent_deltas[0][t]))).collect();
        let future = Tensor::matrix(b, 2 * t_pred, feats.iter().flat_map(|f| f.future.iter().flat_map(|p| [p.x, p.y])).collect());
        let fd: Vec<Vec<Point>> = feats.iter().map(|f| f.future_deltas()).collect();
        let future_deltas = (0..t_pred).map(|t| rows(fd.iter().map(|d| d[t]))).collect();
        Ok(Self { size: b, enc_steps, groups, agent_rows, targets, target_count: l, last_delta, obs_deltas, future, future_deltas, z })
    }
}
