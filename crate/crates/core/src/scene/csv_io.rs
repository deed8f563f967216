//! Argoverse-style scene CSV.
//!
//! `TIMESTAMP,TRACK_ID,OBJECT_TYPE,X,Y,CITY_NAME`, timestamps in float
//! seconds. Frames are `round((t - t_min) * hz)`; the city column is ignored.

use std::collections::HashMap;
use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;
use std::sync::Arc;

use super::{AgentTrack, DrivableArea, Role, Scene, WindowConfig};
use crate::error::{Error, Result};
use crate::geometry::Point;

pub const CSV_HEADER: [&str; 6] = ["TIMESTAMP", "TRACK_ID", "OBJECT_TYPE", "X", "Y", "CITY_NAME"];

const CITY: &str = "SYN";

pub fn read_scene_csv(path: &Path, map: Arc<DrivableArea>, window: WindowConfig) -> Result<Scene> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let scene_id = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    read_scene_csv_from(file, scene_id, map, window).map_err(|e| match e {
        Error::Format(m) => Error::Format(format!("{}: {m}", path.display())),
        Error::MalformedScene(m) => Error::MalformedScene(format!("{}: {m}", path.display())),
        other => other,
    })
}

struct Row {
    t: f64,
    id: String,
    role: Role,
    p: Point,
}

pub fn read_scene_csv_from(
    reader: impl Read,
    scene_id: impl Into<String>,
    map: Arc<DrivableArea>,
    window: WindowConfig,
) -> Result<Scene> {
    let scene_id = scene_id.into();
    let mut rdr = csv::ReaderBuilder::new().has_headers(false).trim(csv::Trim::All).from_reader(reader);
    let mut records = rdr.records();
    let header = match records.next() {
        None => return Err(Error::MalformedScene(format!("{scene_id}: empty file"))),
        Some(h) => h.map_err(|e| Error::Format(e.to_string()))?,
    };
    if header.iter().collect::<Vec<_>>() != CSV_HEADER {
        return Err(Error::Format(format!("unexpected header {:?}", header.iter().collect::<Vec<_>>())));
    }

    let mut rows = Vec::new();
    for (line, rec) in records.enumerate() {
        let rec = rec.map_err(|e| Error::Format(e.to_string()))?;
        let line = line + 2;
        if rec.len() != CSV_HEADER.len() {
            return Err(Error::Format(format!("line {line}: {} fields", rec.len())));
        }
        let num = |i: usize| -> Result<f64> {
            let v: f64 = rec[i].parse().map_err(|_| Error::Format(format!("line {line}: bad {} `{}`", CSV_HEADER[i], &rec[i])))?;
            if v.is_finite() {
                Ok(v)
            } else {
                Err(Error::Format(format!("line {line}: non-finite {}", CSV_HEADER[i])))
            }
        };
        let role = Role::parse(&rec[2]).ok_or_else(|| Error::Format(format!("line {line}: unknown OBJECT_TYPE `{}`", &rec[2])))?;
        rows.push(Row { t: num(0)?, id: rec[1].to_string(), role, p: Point::new(num(3)?, num(4)?) });
    }
    if rows.is_empty() {
        return Err(Error::MalformedScene(format!("{scene_id}: no rows")));
    }
    let agents = rows.iter().filter(|r| r.role == Role::Agent).map(|r| r.id.as_str()).collect::<std::collections::BTreeSet<_>>();
    if agents.len() != 1 {
        return Err(Error::MalformedScene(format!("{scene_id}: {} AGENT tracks", agents.len())));
    }

    let t0 = rows.iter().map(|r| r.t).fold(f64::INFINITY, f64::min);
    let mut order: Vec<String> = Vec::new();
    let mut grouped: HashMap<String, (Role, Vec<usize>, Vec<Point>)> = HashMap::new();
    for r in rows {
        let frame = ((r.t - t0) * window.hz).round() as usize;
        let entry = grouped.entry(r.id.clone()).or_insert_with(|| {
            order.push(r.id.clone());
            (r.role, Vec::new(), Vec::new())
        });
        if entry.0 != r.role {
            return Err(Error::Format(format!("track {} changes OBJECT_TYPE", r.id)));
        }
        if entry.1.last().is_some_and(|&last| frame <= last) {
            return Err(Error::Format(format!("track {}: non-monotonic timestamps at frame {frame}", r.id)));
        }
        entry.1.push(frame);
        entry.2.push(r.p);
    }
    let tracks = order
        .into_iter()
        .map(|id| {
            let (role, frames, positions) = grouped.remove(&id).unwrap();
            AgentTrack::new(id, role, frames, positions)
        })
        .collect::<Result<Vec<_>>>()?;
    Scene::new(scene_id, tracks, map, window)
}

/// Writes track by track in scene order, so reading preserves track order.
pub fn write_scene_csv_to(scene: &Scene, writer: impl Write) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let wrap = |e: csv::Error| Error::Format(e.to_string());
    w.write_record(CSV_HEADER).map_err(wrap)?;
    let hz = scene.window().hz;
    for track in scene.tracks() {
        for (frame, p) in track.points() {
            let t = frame as f64 / hz;
            w.write_record([
                t.to_string(),
                track.track_id.clone(),
                track.role.csv_name().to_string(),
                p.x.to_string(),
                p.y.to_string(),
                CITY.to_string(),
            ])
            .map_err(wrap)?;
        }
    }
    w.flush().map_err(|e| Error::Format(e.to_string()))
}

pub fn write_scene_csv(scene: &Scene, path: &Path) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    write_scene_csv_to(scene, std::io::BufWriter::new(file)).map_err(|e| match e {
        Error::Format(m) => Error::io(path, std::io::Error::other(m)),
        other => other,
    })
}
