use std::ops::Range;

use crate::error::{Error, Result};
use crate::geometry::Point;
use crate::scene::AgentTrack;

/// Absolute start position plus per-frame displacement vectors.
#[derive(Clone, Debug, PartialEq)]
pub struct DisplacementTrack {
    pub origin: Point,
    pub deltas: Vec<Point>,
}

impl DisplacementTrack {
    pub fn from_positions(positions: &[Point]) -> Option<Self> {
        let origin = *positions.first()?;
        let deltas = positions.windows(2).map(|w| w[1].sub(w[0])).collect();
        Some(Self { origin, deltas })
    }

    /// Cumulative sum of the deltas starting at `origin`.
    pub fn reconstruct(&self) -> Vec<Point> {
        let mut out = Vec::with_capacity(self.deltas.len() + 1);
        let mut p = self.origin;
        out.push(p);
        for d in &self.deltas {
            p = p.add(*d);
            out.push(p);
        }
        out
    }
}

/// Displacements over `frames`, gaps filled by replicating the last
/// present frame.
pub fn to_displacements(track: &AgentTrack, frames: Range<usize>) -> Result<DisplacementTrack> {
    if frames.is_empty() {
        return Err(Error::Format(format!("track {}: empty frame range", track.track_id)));
    }
    let positions = track
        .filled(frames.clone())
        .ok_or_else(|| Error::Format(format!("track {} has no frame in {frames:?}", track.track_id)))?;
    Ok(DisplacementTrack::from_positions(&positions).expect("non-empty range"))
}
