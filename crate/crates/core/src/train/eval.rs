use std::io::Write;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::Serialize;

use super::metrics::{ade, constant_velocity_baseline, fde};
use crate::autodiff::{Tape, Tensor};
use crate::error::{Error, Result};
use crate::geometry::Point;
use crate::model::gan::generator_forward;
use crate::model::{Batch, Model, SceneFeatures};
use crate::preprocess::{classify_curvature, Curvature, RansacConfig};
use crate::scene::Scene;
use crate::targets::{TargetConfig, TargetPointSet};
use crate::autodiff::ParamSet;

/// Scenes per forward pass during evaluation.
const EVAL_CHUNK: usize = 64;

/// Published full-scale benchmark result (unimodal, goal points and class
/// balancing), kept in reports for orientation only.
pub const REFERENCE_ADE: f64 = 1.67;
pub const REFERENCE_FDE: f64 = 3.82;

fn fnv1a(s: &str) -> u64 {
    s.bytes().fold(0xcbf2_9ce4_8422_2325, |h, b| (h ^ b as u64).wrapping_mul(0x0000_0100_0000_01b3))
}

/// Random stream for a scene that depends only on `seed` and the scene id,
/// so results do not depend on corpus order or chunking.
pub fn scene_rng(seed: u64, scene_id: &str) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed ^ fnv1a(scene_id))
}

/// One K=1 forecast.
#[derive(Clone, Debug, PartialEq)]
pub struct Prediction {
    pub scene_id: String,
    /// Global coordinates, `t_pred` positions.
    pub positions: Vec<Point>,
    pub targets: TargetPointSet,
}

fn predict_chunk(model: &Model, params: &ParamSet, scenes: &[&Scene], targets: &TargetConfig, seed: u64) -> Result<Vec<Prediction>> {
    let z_dim = model.cfg.z_dim;
    let mut feats = Vec::with_capacity(scenes.len());
    let mut z = Vec::with_capacity(scenes.len() * z_dim);
    for s in scenes {
        model.check_window(s.window())?;
        let mut rng = scene_rng(seed, &s.scene_id);
        feats.push(SceneFeatures::build(s, targets, &mut rng)?);
        z.extend((0..z_dim).map(|_| rng.sample::<f64, _>(StandardNormal)));
    }
    let refs: Vec<&SceneFeatures> = feats.iter().collect();
    let batch = Batch::new(model, &refs, Tensor::matrix(scenes.len(), z_dim, z))?;
    let mut tape = Tape::new();
    let bound = tape.bind(params, |_| false);
    let out = generator_forward(model, &mut tape, &bound, &batch)?;
    let flat = tape.value(out.positions);
    Ok(feats
        .into_iter()
        .enumerate()
        .map(|(i, f)| {
            let local: Vec<Point> = flat.row(i).chunks(2).map(|p| Point::new(p[0], p[1])).collect();
            Prediction { scene_id: f.scene_id.clone(), positions: f.to_global(&local), targets: f.targets }
        })
        .collect())
}

/// K=1 forecasts for every scene: goal points and the noise draw come from
/// [`scene_rng`]. Runs chunks in parallel; output follows input order.
pub fn predict_scenes(model: &Model, params: &ParamSet, scenes: &[Scene], targets: &TargetConfig, seed: u64) -> Result<Vec<Prediction>> {
    let refs: Vec<&Scene> = scenes.iter().collect();
    let chunks: Vec<Vec<Prediction>> =
        refs.par_chunks(EVAL_CHUNK).map(|c| predict_chunk(model, params, c, targets, seed)).collect::<Result<_>>()?;
    Ok(chunks.into_iter().flatten().collect())
}

/// RANSAC label of each scene's AGENT track, each from its own stream.
pub fn label_scenes(scenes: &[Scene], cfg: &RansacConfig, seed: u64) -> Result<Vec<Curvature>> {
    scenes.iter().map(|s| Ok(classify_curvature(s.agent(), &mut scene_rng(seed, &s.scene_id), cfg)?.label)).collect()
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SceneResult {
    pub scene_id: String,
    pub label: Curvature,
    pub ade: f64,
    pub fde: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Summary {
    pub mean: f64,
    pub q1: f64,
    pub median: f64,
    pub q3: f64,
    pub min: f64,
    pub max: f64,
}

/// Quantile by linear interpolation between order statistics.
fn quantile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

impl Summary {
    /// `None` for an empty sample.
    pub fn of(values: &[f64]) -> Option<Self> {
        if values.is_empty() {
            return None;
        }
        let mut v = values.to_vec();
        v.sort_by(f64::total_cmp);
        Some(Self {
            mean: v.iter().sum::<f64>() / v.len() as f64,
            q1: quantile(&v, 0.25),
            median: quantile(&v, 0.5),
            q3: quantile(&v, 0.75),
            min: v[0],
            max: v[v.len() - 1],
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Aggregate {
    pub count: usize,
    pub ade: Summary,
    pub fde: Summary,
}

impl Aggregate {
    fn of<'a>(rows: impl Iterator<Item = &'a SceneResult>) -> Option<Self> {
        let (a, f): (Vec<f64>, Vec<f64>) = rows.map(|r| (r.ade, r.fde)).unzip();
        Some(Self { count: a.len(), ade: Summary::of(&a)?, fde: Summary::of(&f)? })
    }
}

/// Aggregates per class; a class without scenes is absent.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Aggregates {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub overall: Option<Aggregate>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub straight: Option<Aggregate>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub curve: Option<Aggregate>,
}

impl Aggregates {
    pub fn of(rows: &[SceneResult]) -> Self {
        let class = |c: Curvature| Aggregate::of(rows.iter().filter(|r| r.label == c));
        Self { overall: Aggregate::of(rows.iter()), straight: class(Curvature::Straight), curve: class(Curvature::Curve) }
    }

    fn notes(&self, what: &str) -> Vec<String> {
        let mut out = Vec::new();
        for (name, a) in [("straight", &self.straight), ("curve", &self.curve)] {
            if a.is_none() {
                out.push(format!("{what}: no {name} scenes, {name} aggregate omitted"));
            }
        }
        out
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Reference {
    pub setting: &'static str,
    pub ade: f64,
    pub fde: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Baseline {
    pub name: &'static str,
    pub aggregates: Aggregates,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EvalReport {
    pub reference: Reference,
    pub aggregates: Aggregates,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub baseline: Option<Baseline>,
    pub notes: Vec<String>,
    #[serde(skip)]
    pub rows: Vec<SceneResult>,
    #[serde(skip)]
    pub baseline_rows: Vec<SceneResult>,
}

pub const EVAL_CSV_HEADER: &str = "scene_id,label,ade,fde";

impl EvalReport {
    /// Builds aggregates and notes from per-scene rows.
    pub fn from_rows(rows: Vec<SceneResult>, baseline_rows: Option<Vec<SceneResult>>) -> Self {
        let aggregates = Aggregates::of(&rows);
        let mut notes = aggregates.notes("model");
        if rows.is_empty() {
            notes.insert(0, "model: no scenes, overall aggregate omitted".into());
        }
        let baseline = baseline_rows.as_ref().map(|b| Baseline { name: "constant_velocity", aggregates: Aggregates::of(b) });
        Self {
            reference: Reference {
                setting: "full-scale real-world benchmark, unimodal with goal points and class balancing; \
                          context only, not reproducible on a desk-scale synthetic corpus",
                ade: REFERENCE_ADE,
                fde: REFERENCE_FDE,
            },
            aggregates,
            baseline,
            notes,
            rows,
            baseline_rows: baseline_rows.unwrap_or_default(),
        }
    }

    pub fn write_csv(&self, mut w: impl Write) -> std::io::Result<()> {
        writeln!(w, "{EVAL_CSV_HEADER}")?;
        for r in &self.rows {
            writeln!(w, "{},{},{},{}", r.scene_id, r.label, r.ade, r.fde)?;
        }
        Ok(())
    }

    pub fn csv_string(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf).expect("writing to memory");
        String::from_utf8(buf).expect("ascii")
    }

    pub fn json_string(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }

    /// Writes `<stem>.csv` and `<stem>.json` into `dir`.
    pub fn save(&self, dir: &Path, stem: &str) -> Result<()> {
        let csv = dir.join(format!("{stem}.csv"));
        std::fs::write(&csv, self.csv_string()).map_err(|e| Error::io(&csv, e))?;
        let json = dir.join(format!("{stem}.json"));
        std::fs::write(&json, self.json_string()).map_err(|e| Error::io(&json, e))
    }
}

/// Forecasts every scene, scores it, and aggregates per class.
pub fn evaluate(
    model: &Model,
    params: &ParamSet,
    scenes: &[Scene],
    labels: &[Curvature],
    targets: &TargetConfig,
    seed: u64,
    baseline: bool,
) -> Result<EvalReport> {
    if labels.len() != scenes.len() {
        return Err(Error::Incompatible(format!("{} labels for {} scenes", labels.len(), scenes.len())));
    }
    let preds = predict_scenes(model, params, scenes, targets, seed)?;
    let score = |s: &Scene, label: Curvature, p: &[Point]| -> Result<SceneResult> {
        let truth = s.agent_future();
        Ok(SceneResult { scene_id: s.scene_id.clone(), label, ade: ade(p, &truth)?, fde: fde(p, &truth)? })
    };
    let rows = scenes.iter().zip(labels).zip(&preds).map(|((s, l), p)| score(s, *l, &p.positions)).collect::<Result<Vec<_>>>()?;
    let base = if baseline {
        Some(scenes.iter().zip(labels).map(|(s, l)| score(s, *l, &constant_velocity_baseline(s))).collect::<Result<Vec<_>>>()?)
    } else {
        None
    };
    Ok(EvalReport::from_rows(rows, base))
}
