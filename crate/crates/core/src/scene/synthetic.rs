//! Seeded synthetic scenes with known maneuver class.
//!
//! The AGENT follows a unicycle model (speed, yaw rate) so its path has
//! bounded curvature. Every track gets a corridor polygon around its path;
//! the union of corridors is the scene's drivable area.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{AgentTrack, DrivableArea, Role, Scene, WindowConfig};
use crate::geometry::{Point, Polygon};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScenarioKind {
    Straight,
    Curve,
    Brake,
    TurnWithTraffic,
}

impl ScenarioKind {
    pub const ALL: [ScenarioKind; 4] = [Self::Straight, Self::Curve, Self::Brake, Self::TurnWithTraffic];

    /// Whether the maneuver bends the path (the construction-known class).
    pub fn is_curved(self) -> bool {
        matches!(self, Self::Curve | Self::TurnWithTraffic)
    }

    pub fn name(self) -> &'static str {
        match self {
            Self::Straight => "straight",
            Self::Curve => "curve",
            Self::Brake => "brake",
            Self::TurnWithTraffic => "turn_with_traffic",
        }
    }

    fn salt(self) -> u64 {
        match self {
            Self::Straight => 0x51,
            Self::Curve => 0xC7,
            Self::Brake => 0xB2,
            Self::TurnWithTraffic => 0x7E,
        }
    }
}

impl fmt::Display for ScenarioKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ScenarioKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL.into_iter().find(|k| k.name() == s).ok_or_else(|| format!("unknown scenario kind `{s}`"))
    }
}

const AGENT_HALF_WIDTH: f64 = 3.5;
const OTHER_HALF_WIDTH: f64 = 2.5;

/// Integrates a unicycle: per step `k` the vehicle moves `speeds[k] * dt`
/// along the mid-step heading and turns by `yaw_rates[k] * dt`.
fn integrate(start: Point, heading: f64, speeds: &[f64], yaw_rates: &[f64], dt: f64) -> Vec<Point> {
    let mut out = Vec::with_capacity(speeds.len() + 1);
    let mut p = start;
    let mut psi = heading;
    out.push(p);
    for (v, w) in speeds.iter().zip(yaw_rates) {
        let mid = psi + w * dt / 2.0;
        p = p.add(Point::new(mid.cos(), mid.sin()).scale(v * dt));
        psi += w * dt;
        out.push(p);
    }
    out
}

fn straight_line(start: Point, heading: f64, speed: f64, frames: usize, dt: f64) -> Vec<Point> {
    let dir = Point::new(heading.cos(), heading.sin());
    (0..frames).map(|k| start.add(dir.scale(speed * dt * k as f64))).collect()
}

/// Polygon covering `half_width` on both sides of a polyline, extended
/// straight by `before` / `after` meters at its ends.
fn corridor(path: &[Point], half_width: f64, before: f64, after: f64) -> Option<Polygon> {
    let mut center: Vec<Point> = Vec::with_capacity(path.len() + 2);
    for p in path {
        if center.last().is_none_or(|q: &Point| q.dist(*p) > 0.05) {
            center.push(*p);
        }
    }
    if center.len() < 2 {
        return None;
    }
    let n = center.len();
    let d0 = center[1].sub(center[0]).scale(1.0 / center[1].dist(center[0]));
    let d1 = center[n - 1].sub(center[n - 2]).scale(1.0 / center[n - 1].dist(center[n - 2]));
    center.insert(0, center[0].sub(d0.scale(before.max(0.5))));
    center.push(center[center.len() - 1].add(d1.scale(after.max(0.5))));

    let n = center.len();
    let mut left = Vec::with_capacity(n);
    let mut right = Vec::with_capacity(n);
    for i in 0..n {
        let a = center[i.saturating_sub(1)];
        let b = center[(i + 1).min(n - 1)];
        let t = b.sub(a);
        let t = t.scale(1.0 / t.norm());
        let normal = Point::new(-t.y, t.x).scale(half_width);
        left.push(center[i].add(normal));
        right.push(center[i].sub(normal));
    }
    right.reverse();
    let mut verts = right;
    verts.extend(left);
    let poly = Polygon::new(verts);
    Some(if poly.signed_area() < 0.0 { poly.reversed() } else { poly })
}

struct Builder {
    rng: ChaCha8Rng,
    window: WindowConfig,
    tracks: Vec<AgentTrack>,
    polygons: Vec<Polygon>,
}

impl Builder {
    fn push(&mut self, id: String, role: Role, frames: Vec<usize>, positions: Vec<Point>, half_width: f64, after: f64) {
        if let Some(poly) = corridor(&positions, half_width, 8.0, after) {
            self.polygons.push(poly);
        }
        self.tracks.push(AgentTrack::new(id, role, frames, positions).expect("generated frames increase"));
    }

    /// Constant-velocity neighbour, possibly appearing late or leaving early.
    fn other(&mut self, idx: usize, anchor: Point, heading: f64) {
        let total = self.window.total();
        let dt = self.window.dt();
        let speed = if self.rng.random_bool(0.15) { 0.0 } else { self.rng.random_range(3.0..13.0) };
        let (start, end) = if self.rng.random_bool(0.3) {
            let s = self.rng.random_range(0..15);
            (s, self.rng.random_range(s + 6..total))
        } else {
            (0, total - 1)
        };
        let path = straight_line(anchor, heading, speed, total, dt);
        let frames: Vec<usize> = (start..=end).collect();
        let positions = frames.iter().map(|f| path[*f]).collect();
        let after = if speed == 0.0 { 3.0 } else { 10.0 };
        self.push(format!("other-{idx}"), Role::Other, frames, positions, OTHER_HALF_WIDTH, after);
    }
}

/// Deterministic scene for `(seed, kind)` with the default window.
pub fn generate_synthetic_scene(seed: u64, kind: ScenarioKind) -> Scene {
    generate_synthetic_scene_with(seed, kind, WindowConfig::default())
}

pub fn generate_synthetic_scene_with(seed: u64, kind: ScenarioKind, window: WindowConfig) -> Scene {
    let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ kind.salt());
    let total = window.total();
    let dt = window.dt();
    let steps = total - 1;
    let start = Point::new(rng.random_range(-20.0..20.0), rng.random_range(-20.0..20.0));
    let heading0 = rng.random_range(-PI..PI);

    let (agent, speed0, other_count) = match kind {
        ScenarioKind::Straight => {
            let v = rng.random_range(6.0..13.0);
            (straight_line(start, heading0, v, total, dt), v, rng.random_range(0..=4))
        }
        ScenarioKind::Curve => {
            let v = rng.random_range(9.0..13.0);
            let sweep = rng.random_range(100f64..135.0).to_radians() * if rng.random_bool(0.5) { 1.0 } else { -1.0 };
            let w = sweep / (steps as f64 * dt);
            (integrate(start, heading0, &vec![v; steps], &vec![w; steps], dt), v, rng.random_range(0..=4))
        }
        ScenarioKind::Brake => {
            let v0 = rng.random_range(8.0..14.0);
            let onset = rng.random_range(10..30);
            let decel = rng.random_range(2.5..5.0);
            let speeds: Vec<f64> = (0..steps)
                .map(|k| if k < onset { v0 } else { (v0 - decel * (k - onset) as f64 * dt).max(0.0) })
                .collect();
            let mut positions = Vec::with_capacity(total);
            let dir = Point::new(heading0.cos(), heading0.sin());
            let mut s = 0.0;
            positions.push(start);
            for v in &speeds {
                s += v * dt;
                positions.push(start.add(dir.scale(s)));
            }
            (positions, v0, rng.random_range(0..=4))
        }
        ScenarioKind::TurnWithTraffic => {
            let v = rng.random_range(8.0..12.0);
            let onset = rng.random_range(3..12);
            let radius = rng.random_range(10.0..16.0);
            let sweep = rng.random_range(85f64..100.0).to_radians();
            let sign = if rng.random_bool(0.5) { 1.0 } else { -1.0 };
            let ramp = 8usize;
            let w_max = v * 0.85 / radius;
            let mut yaw = Vec::with_capacity(steps);
            let mut speeds = Vec::with_capacity(steps);
            let mut turned = 0.0;
            for k in 0..steps {
                let in_turn = k >= onset && turned < sweep;
                let w = if in_turn { w_max * (((k - onset + 1) as f64) / ramp as f64).min(1.0) } else { 0.0 };
                let w = w.min((sweep - turned) / dt);
                turned += w * dt;
                yaw.push(sign * w);
                speeds.push(if k >= onset { v * 0.85 } else { v });
            }
            (integrate(start, heading0, &speeds, &yaw, dt), v, rng.random_range(2..=6))
        }
    };

    let mut b = Builder { rng, window, tracks: Vec::new(), polygons: Vec::new() };
    let frames: Vec<usize> = (0..total).collect();
    let after = 25.0;
    b.push("agent".into(), Role::Agent, frames.clone(), agent.clone(), AGENT_HALF_WIDTH, after);

    let dir0 = Point::new(heading0.cos(), heading0.sin());
    let av_start = start.sub(dir0.scale(b.rng.random_range(10.0..20.0)));
    let av = straight_line(av_start, heading0, speed0 * 0.8, total, dt);
    b.push("av".into(), Role::Av, frames, av, OTHER_HALF_WIDTH, 10.0);

    for i in 0..other_count {
        let k = b.rng.random_range(0..total);
        let base = agent[k];
        let tangent = if k + 1 < total { agent[k + 1].sub(agent[k]) } else { agent[k].sub(agent[k - 1]) };
        let psi = if tangent.norm() > 1e-9 { tangent.y.atan2(tangent.x) } else { heading0 };
        let crossing = kind == ScenarioKind::TurnWithTraffic && b.rng.random_bool(0.4);
        let (anchor, heading) = if crossing {
            let side = if b.rng.random_bool(0.5) { 1.0 } else { -1.0 };
            let h = psi + side * PI / 2.0;
            (base.sub(Point::new(h.cos(), h.sin()).scale(b.rng.random_range(15.0..30.0))), h)
        } else {
            let lateral = b.rng.random_range(4.0..9.0) * if b.rng.random_bool(0.5) { 1.0 } else { -1.0 };
            let longitudinal = b.rng.random_range(-25.0..25.0);
            let n = Point::new(-psi.sin(), psi.cos());
            let t = Point::new(psi.cos(), psi.sin());
            let oncoming = b.rng.random_bool(0.3);
            (base.add(n.scale(lateral)).add(t.scale(longitudinal)), if oncoming { psi + PI } else { psi })
        };
        b.other(i, anchor, heading);
    }

    let area = DrivableArea::new(b.polygons).expect("corridors are simple polygons");
    Scene::new(format!("syn-{}-{seed}", kind.name()), b.tracks, Arc::new(area), window).expect("generated scene is valid")
}

#[cfg(test)]
mod tests {
    use super::*;

    fn headings(points: &[Point]) -> Vec<f64> {
        points.windows(2).map(|w| (w[1].y - w[0].y).atan2(w[1].x - w[0].x)).collect()
    }

    #[test]
    fn straight_headings_are_constant() {
        let s = generate_synthetic_scene(1, ScenarioKind::Straight);
        let h = headings(s.agent().positions());
        assert!(h.iter().all(|a| (a - h[0]).abs() < 1e-9));
    }

    #[test]
    fn curve_turns_at_least_thirty_degrees() {
        let s = generate_synthetic_scene(2, ScenarioKind::Curve);
        let h = headings(s.agent().positions());
        let total: f64 = h.windows(2).map(|w| crate::geometry::normalize_angle(w[1] - w[0])).sum();
        assert!(total.abs() >= 30f64.to_radians(), "turned {}", total.to_degrees());
    }

    #[test]
    fn same_seed_same_scene() {
        for kind in ScenarioKind::ALL {
            assert_eq!(generate_synthetic_scene(9, kind), generate_synthetic_scene(9, kind));
        }
        assert_ne!(generate_synthetic_scene(9, ScenarioKind::Curve), generate_synthetic_scene(10, ScenarioKind::Curve));
    }

    #[test]
    fn agent_stays_on_drivable_area() {
        for seed in 0..40 {
            for kind in ScenarioKind::ALL {
                let s = generate_synthetic_scene(seed, kind);
                for p in s.agent().positions() {
                    assert!(s.map().contains(*p), "{} leaves the map at {p:?}", s.scene_id);
                }
                let others = s.tracks().iter().filter(|t| t.role == Role::Other).count();
                assert!(others <= 6);
                for t in s.tracks() {
                    assert!(t.last_frame() < s.window().total());
                }
            }
        }
    }

    #[test]
    fn kind_names_parse() {
        for k in ScenarioKind::ALL {
            assert_eq!(k.name().parse::<ScenarioKind>().unwrap(), k);
        }
        assert!("zigzag".parse::<ScenarioKind>().is_err());
    }
}
