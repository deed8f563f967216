use crate::error::{Error, Result};
use crate::geometry::Point;
use crate::scene::Scene;

fn check(pred: &[Point], truth: &[Point]) -> Result<()> {
    if pred.len() != truth.len() || pred.is_empty() {
        return Err(Error::Incompatible(format!("prediction of {} frames vs ground truth of {}", pred.len(), truth.len())));
    }
    Ok(())
}

/// Mean Euclidean distance over all frames.
pub fn ade(pred: &[Point], truth: &[Point]) -> Result<f64> {
    check(pred, truth)?;
    Ok(pred.iter().zip(truth).map(|(a, b)| a.dist(*b)).sum::<f64>() / pred.len() as f64)
}

/// Euclidean distance at the last frame.
pub fn fde(pred: &[Point], truth: &[Point]) -> Result<f64> {
    check(pred, truth)?;
    Ok(pred[pred.len() - 1].dist(truth[truth.len() - 1]))
}

/// Repeats the AGENT's last observed displacement over the prediction window.
pub fn constant_velocity_baseline(scene: &Scene) -> Vec<Point> {
    let obs = scene.agent_observed();
    let last = obs[obs.len() - 1];
    let d = last.sub(obs[obs.len() - 2]);
    (1..=scene.window().t_pred).map(|k| last.add(d.scale(k as f64))).collect()
}
