//! Goal points: where the AGENT could plausibly be at the end of the horizon.
//!
//! Velocity and heading at the last observed frame come from a decay-weighted
//! mean over per-frame displacements. Candidates are drawn from an annular
//! sector around the constant-velocity end point and kept only when they land
//! on the drivable area.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{normalize_angle, Frame, Point};
use crate::scene::{DrivableArea, Scene};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TargetConfig {
    /// Number of goal points L.
    pub count: usize,
    /// Weight of a displacement `k` frames before the last is `decay^k`.
    pub decay: f64,
    /// Relative half-width of the radial band around the CV distance.
    pub rho: f64,
    /// Half-angle of the bearing cone, degrees.
    pub phi_max_deg: f64,
    /// Half-width of the square map crop around the AGENT, meters.
    pub crop_half_width: f64,
    /// Below this speed (m/s) the AGENT counts as stationary.
    pub stationary_speed: f64,
    /// Stationary agents get goal points within this radius, meters.
    pub stationary_radius: f64,
    pub max_attempts: usize,
}

impl Default for TargetConfig {
    fn default() -> Self {
        Self {
            count: 32,
            decay: 0.9,
            rho: 0.2,
            phi_max_deg: 30.0,
            crop_half_width: 40.0,
            stationary_speed: 0.5,
            stationary_radius: 2.0,
            max_attempts: 4096,
        }
    }
}

impl TargetConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(format!("targets: {m}")));
        if self.count == 0 {
            return bad("count must be positive");
        }
        if !(self.decay > 0.0 && self.decay <= 1.0) {
            return bad("decay must lie in (0, 1]");
        }
        if !(0.0..=1.0).contains(&self.rho) {
            return bad("rho must lie in [0, 1]");
        }
        if !(0.0..=180.0).contains(&self.phi_max_deg) {
            return bad("phi_max_deg must lie in [0, 180]");
        }
        if self.crop_half_width <= 0.0 || self.stationary_radius < 0.0 || self.stationary_speed < 0.0 {
            return bad("distances and speeds must be non-negative, crop positive");
        }
        if self.max_attempts == 0 {
            return bad("max_attempts must be positive");
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DynamicState {
    /// m/s
    pub speed: f64,
    /// radians in (-pi, pi]
    pub heading: f64,
    pub position: Point,
    pub stationary: bool,
}

impl DynamicState {
    /// Local frame at the last observation: origin at `position`, x along `heading`.
    pub fn frame(&self) -> Frame {
        Frame { origin: self.position, heading: self.heading }
    }
}

/// Dynamics at the last of `observed` (positions sampled at `hz`).
///
/// Zero-length displacements carry no heading and are skipped in the
/// circular mean; if every displacement is zero the heading is 0.
pub fn estimate_dynamics(observed: &[Point], hz: f64, cfg: &TargetConfig) -> Result<DynamicState> {
    if observed.len() < 2 {
        return Err(Error::MalformedScene(format!("dynamics need >= 2 observed frames, got {}", observed.len())));
    }
    let n = observed.len() - 1;
    let (mut wsum, mut speed, mut sx, mut sy) = (0.0, 0.0, 0.0, 0.0);
    let mut w = 1.0;
    for k in (0..n).rev() {
        let d = observed[k + 1].sub(observed[k]);
        let len = d.norm();
        wsum += w;
        speed += w * len * hz;
        if len > 0.0 {
            sx += w * d.x / len;
            sy += w * d.y / len;
        }
        w *= cfg.decay;
    }
    let speed = speed / wsum;
    let heading = if sx == 0.0 && sy == 0.0 { 0.0 } else { normalize_angle(sy.atan2(sx)) };
    Ok(DynamicState { speed, heading, position: observed[n], stationary: speed < cfg.stationary_speed })
}

/// Drivable polygons clipped to the square of half-width `d` around `center`.
pub fn crop_drivable(area: &DrivableArea, center: Point, d: f64) -> Result<DrivableArea> {
    if !(d > 0.0) {
        return Err(Error::Config(format!("crop half-width must be positive, got {d}")));
    }
    Ok(area.crop(center, d))
}

#[derive(Clone, Debug, PartialEq)]
pub struct TargetPointSet {
    /// Agent-local coordinates.
    pub points: Vec<Point>,
    pub frame: Frame,
    /// How many points were accepted by rejection sampling before padding.
    pub accepted: usize,
}

impl TargetPointSet {
    pub fn global(&self) -> Vec<Point> {
        self.points.iter().map(|p| self.frame.to_global(*p)).collect()
    }
}

/// Rejection-samples `cfg.count` goal points for a horizon of `horizon` seconds.
///
/// Short of `count` accepted points, the accepted ones are repeated in order.
/// With none accepted, every point is the constant-velocity end point moved
/// to the nearest drivable location (or left as is on an empty map).
pub fn sample_target_points(
    state: &DynamicState,
    area: &DrivableArea,
    horizon: f64,
    cfg: &TargetConfig,
    rng: &mut impl Rng,
) -> TargetPointSet {
    let frame = state.frame();
    let mut accepted = Vec::with_capacity(cfg.count);
    let r0 = state.speed * horizon;
    let phi = cfg.phi_max_deg.to_radians();
    for _ in 0..cfg.max_attempts {
        if accepted.len() == cfg.count {
            break;
        }
        let local = if state.stationary {
            let r = cfg.stationary_radius * rng.random::<f64>().sqrt();
            let a = rng.random_range(-std::f64::consts::PI..std::f64::consts::PI);
            Point::new(r * a.cos(), r * a.sin())
        } else {
            let r = rng.random_range(r0 * (1.0 - cfg.rho)..=r0 * (1.0 + cfg.rho));
            let b = rng.random_range(-phi..=phi);
            Point::new(r * b.cos(), r * b.sin())
        };
        if area.contains(frame.to_global(local)) {
            accepted.push(local);
        }
    }
    let n_accepted = accepted.len();
    let points = if accepted.is_empty() {
        let cv = Point::new(if state.stationary { 0.0 } else { r0 }, 0.0);
        let snapped = area.nearest_drivable(frame.to_global(cv)).map(|g| frame.to_local(g)).unwrap_or(cv);
        vec![snapped; cfg.count]
    } else {
        (0..cfg.count).map(|i| accepted[i % n_accepted]).collect()
    };
    TargetPointSet { points, frame, accepted: n_accepted }
}

/// Dynamics, map crop and goal sampling for a scene's AGENT.
pub fn scene_targets(scene: &Scene, cfg: &TargetConfig, rng: &mut impl Rng) -> Result<(DynamicState, TargetPointSet)> {
    let w = scene.window();
    let state = estimate_dynamics(&scene.agent_observed(), w.hz, cfg)?;
    let area = crop_drivable(scene.map(), state.position, cfg.crop_half_width)?;
    let targets = sample_target_points(&state, &area, w.horizon(), cfg, rng);
    Ok((state, targets))
}
