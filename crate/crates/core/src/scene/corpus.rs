//! A directory of scenes sharing one map, with a manifest of labels.
//!
//! Layout: `<scene_id>.csv` per scene, `map.json`, and `manifest.csv` with
//! header `scene_id,kind,label` listing scenes in corpus order.

use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::synthetic::generate_synthetic_scene_with;
use super::{read_scene_csv, write_scene_csv, DrivableArea, ScenarioKind, Scene, WindowConfig};
use crate::error::{Error, Result};
use crate::geometry::Point;
use crate::preprocess::Curvature;

pub const MANIFEST_FILE: &str = "manifest.csv";
pub const MAP_FILE: &str = "map.json";

/// Distance between neighbouring scenes of a synthetic corpus. Scenes are
/// laid out on a grid so one merged map serves all of them.
pub const GRID_SPACING: f64 = 400.0;

#[derive(Clone, Debug, PartialEq)]
pub struct ManifestEntry {
    pub scene_id: String,
    /// Free-form generator tag; empty for external data.
    pub kind: String,
    pub label: Curvature,
}

#[derive(Clone, Debug)]
pub struct Corpus {
    pub scenes: Vec<Scene>,
    pub map: Arc<DrivableArea>,
    /// Manifest labels when the corpus has a manifest.
    pub labels: Option<Vec<Curvature>>,
}

/// `n` synthetic scenes, `round(straight_fraction * n)` of them from the
/// straight classes (constant speed or braking) and the rest from the curved
/// ones (steady curve or turn in traffic). Labels are construction-known.
pub fn synthetic_corpus(n: usize, straight_fraction: f64, seed: u64, window: WindowConfig) -> Result<(Corpus, Vec<ManifestEntry>)> {
    if !(0.0..=1.0).contains(&straight_fraction) {
        return Err(Error::Config(format!("straight fraction must lie in [0, 1], got {straight_fraction}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n_straight = (straight_fraction * n as f64).round() as usize;
    let mut straight: Vec<bool> = (0..n).map(|i| i < n_straight).collect();
    straight.shuffle(&mut rng);
    let side = (n as f64).sqrt().ceil().max(1.0) as usize;

    let mut scenes = Vec::with_capacity(n);
    let mut entries = Vec::with_capacity(n);
    let mut maps = Vec::with_capacity(n);
    for (i, s) in straight.into_iter().enumerate() {
        let kind = match (s, rng.random_bool(0.5)) {
            (true, true) => ScenarioKind::Straight,
            (true, false) => ScenarioKind::Brake,
            (false, true) => ScenarioKind::Curve,
            (false, false) => ScenarioKind::TurnWithTraffic,
        };
        let offset = Point::new((i % side) as f64 * GRID_SPACING, (i / side) as f64 * GRID_SPACING);
        let mut scene = generate_synthetic_scene_with(rng.random(), kind, window).transformed(|p| p.add(offset));
        scene.scene_id = format!("scene-{i:05}");
        maps.push((**scene.map()).clone());
        entries.push(ManifestEntry {
            scene_id: scene.scene_id.clone(),
            kind: kind.name().to_string(),
            label: if kind.is_curved() { Curvature::Curve } else { Curvature::Straight },
        });
        scenes.push(scene);
    }
    let map = Arc::new(DrivableArea::merged(maps));
    let scenes = scenes.into_iter().map(|s| s.with_map(map.clone())).collect();
    let labels = Some(entries.iter().map(|e| e.label).collect());
    Ok((Corpus { scenes, map, labels }, entries))
}

fn manifest_error(path: &Path, msg: impl std::fmt::Display) -> Error {
    Error::Format(format!("{}: {msg}", path.display()))
}

pub fn write_manifest(path: &Path, entries: &[ManifestEntry]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| manifest_error(path, e))?;
    w.write_record(["scene_id", "kind", "label"]).map_err(|e| manifest_error(path, e))?;
    for e in entries {
        w.write_record([e.scene_id.as_str(), e.kind.as_str(), e.label.name()]).map_err(|e| manifest_error(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_manifest(path: &Path) -> Result<Vec<ManifestEntry>> {
    let mut r = csv::Reader::from_path(path).map_err(|e| match e.kind() {
        csv::ErrorKind::Io(_) => Error::io(path, std::io::Error::other(e.to_string())),
        _ => manifest_error(path, e),
    })?;
    let header = r.headers().map_err(|e| manifest_error(path, e))?;
    if header.iter().collect::<Vec<_>>() != ["scene_id", "kind", "label"] {
        return Err(manifest_error(path, "expected header scene_id,kind,label"));
    }
    let mut out = Vec::new();
    for (i, rec) in r.records().enumerate() {
        let rec = rec.map_err(|e| manifest_error(path, e))?;
        let label = Curvature::parse(&rec[2]).ok_or_else(|| manifest_error(path, format!("line {}: bad label `{}`", i + 2, &rec[2])))?;
        out.push(ManifestEntry { scene_id: rec[0].to_string(), kind: rec[1].to_string(), label });
    }
    Ok(out)
}

/// Writes every scene, the map and the manifest into `dir`, creating it.
pub fn save_corpus(dir: &Path, corpus: &Corpus, entries: &[ManifestEntry]) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    for s in &corpus.scenes {
        write_scene_csv(s, &dir.join(format!("{}.csv", s.scene_id)))?;
    }
    corpus.map.save(&dir.join(MAP_FILE))?;
    write_manifest(&dir.join(MANIFEST_FILE), entries)
}

/// Reads a corpus directory. Scenes come in manifest order when a manifest
/// exists, otherwise every `*.csv` sorted by name. `map` defaults to
/// `dir/map.json`.
pub fn load_corpus(dir: &Path, map: Option<&Path>, window: WindowConfig) -> Result<Corpus> {
    let map_path = map.map(Path::to_path_buf).unwrap_or_else(|| dir.join(MAP_FILE));
    let area = Arc::new(DrivableArea::load(&map_path)?);
    let manifest = dir.join(MANIFEST_FILE);
    let (files, labels): (Vec<PathBuf>, _) = if manifest.exists() {
        let entries = read_manifest(&manifest)?;
        (entries.iter().map(|e| dir.join(format!("{}.csv", e.scene_id))).collect(), Some(entries.iter().map(|e| e.label).collect()))
    } else {
        let mut files: Vec<PathBuf> = fs::read_dir(dir)
            .map_err(|e| Error::io(dir, e))?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|x| x == "csv"))
            .collect();
        files.sort();
        (files, None)
    };
    let scenes = files.iter().map(|f| read_scene_csv(f, area.clone(), window)).collect::<Result<Vec<_>>>()?;
    Ok(Corpus { scenes, map: area, labels })
}
