//! Forecasting scenes, drivable-area maps and their file formats.

pub mod corpus;
mod csv_io;
mod map;
pub mod synthetic;

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::Point;

pub use corpus::{load_corpus, save_corpus, synthetic_corpus, Corpus, ManifestEntry};
pub use csv_io::{read_scene_csv, read_scene_csv_from, write_scene_csv, write_scene_csv_to, CSV_HEADER};
pub use map::{point_in_drivable, DrivableArea};
pub use synthetic::{generate_synthetic_scene, generate_synthetic_scene_with, ScenarioKind};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Role {
    Agent,
    Av,
    Other,
}

impl Role {
    pub fn csv_name(self) -> &'static str {
        match self {
            Role::Agent => "AGENT",
            Role::Av => "AV",
            Role::Other => "OTHERS",
        }
    }

    pub fn parse(s: &str) -> Option<Role> {
        match s {
            "AGENT" => Some(Role::Agent),
            "AV" => Some(Role::Av),
            "OTHERS" | "OTHER" => Some(Role::Other),
            _ => None,
        }
    }
}

impl fmt::Display for Role {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.csv_name())
    }
}

/// Observation / prediction split and sampling rate.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct WindowConfig {
    pub t_obs: usize,
    pub t_pred: usize,
    pub hz: f64,
}

impl Default for WindowConfig {
    fn default() -> Self {
        Self { t_obs: 20, t_pred: 30, hz: 10.0 }
    }
}

impl WindowConfig {
    pub fn total(&self) -> usize {
        self.t_obs + self.t_pred
    }

    pub fn dt(&self) -> f64 {
        1.0 / self.hz
    }

    /// Prediction horizon in seconds.
    pub fn horizon(&self) -> f64 {
        self.t_pred as f64 / self.hz
    }
}

/// One agent's positions, keyed by strictly increasing frame index.
#[derive(Clone, Debug, PartialEq)]
pub struct AgentTrack {
    pub track_id: String,
    pub role: Role,
    frames: Vec<usize>,
    positions: Vec<Point>,
}

impl AgentTrack {
    pub fn new(track_id: impl Into<String>, role: Role, frames: Vec<usize>, positions: Vec<Point>) -> Result<Self> {
        let track_id = track_id.into();
        if frames.len() != positions.len() {
            return Err(Error::Format(format!("track {track_id}: {} frames vs {} positions", frames.len(), positions.len())));
        }
        if frames.is_empty() {
            return Err(Error::Format(format!("track {track_id} is empty")));
        }
        if let Some(w) = frames.windows(2).find(|w| w[1] <= w[0]) {
            return Err(Error::Format(format!("track {track_id}: non-monotonic frames {} then {}", w[0], w[1])));
        }
        Ok(Self { track_id, role, frames, positions })
    }

    /// Contiguous track starting at frame 0.
    pub fn from_positions(track_id: impl Into<String>, role: Role, positions: Vec<Point>) -> Result<Self> {
        let frames = (0..positions.len()).collect();
        Self::new(track_id, role, frames, positions)
    }

    pub fn frames(&self) -> &[usize] {
        &self.frames
    }

    pub fn positions(&self) -> &[Point] {
        &self.positions
    }

    pub fn points(&self) -> impl Iterator<Item = (usize, Point)> + '_ {
        self.frames.iter().copied().zip(self.positions.iter().copied())
    }

    pub fn first_frame(&self) -> usize {
        self.frames[0]
    }

    pub fn last_frame(&self) -> usize {
        *self.frames.last().unwrap()
    }

    pub fn position_at(&self, frame: usize) -> Option<Point> {
        self.frames.binary_search(&frame).ok().map(|i| self.positions[i])
    }

    pub fn covers(&self, range: std::ops::Range<usize>) -> bool {
        range.clone().all(|f| self.position_at(f).is_some())
    }

    pub fn count_in(&self, range: std::ops::Range<usize>) -> usize {
        self.frames.iter().filter(|f| range.contains(f)).count()
    }

    /// Positions over `range` with gaps filled from the previous present
    /// frame; frames before the first present one take its position.
    /// `None` when no frame of the range is present.
    pub fn filled(&self, range: std::ops::Range<usize>) -> Option<Vec<Point>> {
        let first = self.points().find(|(f, _)| range.contains(f))?.1;
        let mut last = first;
        Some(
            range
                .map(|f| {
                    if let Some(p) = self.position_at(f) {
                        last = p;
                    }
                    last
                })
                .collect(),
        )
    }

    pub fn map_positions(&self, f: impl Fn(Point) -> Point) -> AgentTrack {
        AgentTrack {
            track_id: self.track_id.clone(),
            role: self.role,
            frames: self.frames.clone(),
            positions: self.positions.iter().map(|p| f(*p)).collect(),
        }
    }

    pub fn positions_mut(&mut self) -> &mut [Point] {
        &mut self.positions
    }
}

/// One forecasting sample.
#[derive(Clone, Debug, PartialEq)]
pub struct Scene {
    pub scene_id: String,
    tracks: Vec<AgentTrack>,
    map: Arc<DrivableArea>,
    window: WindowConfig,
    agent: usize,
}

impl Scene {
    pub fn new(scene_id: impl Into<String>, tracks: Vec<AgentTrack>, map: Arc<DrivableArea>, window: WindowConfig) -> Result<Self> {
        let scene_id = scene_id.into();
        let agents: Vec<usize> = tracks.iter().enumerate().filter(|(_, t)| t.role == Role::Agent).map(|(i, _)| i).collect();
        let agent = match agents.as_slice() {
            [one] => *one,
            [] => return Err(Error::MalformedScene(format!("{scene_id}: no AGENT track"))),
            many => return Err(Error::MalformedScene(format!("{scene_id}: {} AGENT tracks", many.len()))),
        };
        let total = window.total();
        if let Some(missing) = (0..total).find(|f| tracks[agent].position_at(*f).is_none()) {
            return Err(Error::MalformedScene(format!("{scene_id}: AGENT misses frame {missing}")));
        }
        if let Some(t) = tracks.iter().find(|t| t.last_frame() >= total) {
            return Err(Error::MalformedScene(format!(
                "{scene_id}: track {} reaches frame {} beyond {} frames",
                t.track_id,
                t.last_frame(),
                total
            )));
        }
        Ok(Self { scene_id, tracks, map, window, agent })
    }

    pub fn tracks(&self) -> &[AgentTrack] {
        &self.tracks
    }

    pub fn map(&self) -> &Arc<DrivableArea> {
        &self.map
    }

    pub fn window(&self) -> WindowConfig {
        self.window
    }

    pub fn agent_index(&self) -> usize {
        self.agent
    }

    pub fn agent(&self) -> &AgentTrack {
        &self.tracks[self.agent]
    }

    pub fn agent_observed(&self) -> Vec<Point> {
        (0..self.window.t_obs).map(|f| self.agent().position_at(f).unwrap()).collect()
    }

    pub fn agent_future(&self) -> Vec<Point> {
        (self.window.t_obs..self.window.total()).map(|f| self.agent().position_at(f).unwrap()).collect()
    }

    pub fn agent_last_observed(&self) -> Point {
        self.agent().position_at(self.window.t_obs - 1).unwrap()
    }

    pub fn with_map(&self, map: Arc<DrivableArea>) -> Scene {
        Scene { map, ..self.clone() }
    }

    /// Applies `f` to every track position and every map vertex.
    pub fn transformed(&self, f: impl Fn(Point) -> Point + Copy) -> Scene {
        Scene {
            scene_id: self.scene_id.clone(),
            tracks: self.tracks.iter().map(|t| t.map_positions(f)).collect(),
            map: Arc::new(self.map.transformed(f)),
            window: self.window,
            agent: self.agent,
        }
    }

    pub(crate) fn with_tracks(&self, tracks: Vec<AgentTrack>) -> Scene {
        debug_assert_eq!(tracks.len(), self.tracks.len());
        Scene { tracks, ..self.clone() }
    }
}
