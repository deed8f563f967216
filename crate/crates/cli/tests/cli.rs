use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};
use std::sync::Arc;

use trajgan::autodiff::checkpoint;
use trajgan::geometry::{Point, Polygon};
use trajgan::model::{Model, ModelConfig};
use trajgan::preprocess::{classify_curvature, Curvature, RansacConfig};
use trajgan::scene::corpus::read_manifest;
use trajgan::scene::{write_scene_csv, AgentTrack, DrivableArea, Role, Scene, WindowConfig};

fn trajgan(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_trajgan")).args(args).env("TRAJGAN_LOG", "error").output().expect("binary runs")
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn files(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut out: Vec<(String, Vec<u8>)> =
        fs::read_dir(dir).unwrap().map(|e| e.unwrap().path()).map(|p| (p.file_name().unwrap().to_string_lossy().into(), fs::read(&p).unwrap())).collect();
    out.sort();
    out
}

#[test]
fn gen_data_is_deterministic_and_labelled() {
    let tmp = tempfile::tempdir().unwrap();
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    for d in [&a, &b] {
        let out = trajgan(&["--seed", "5", "--out", s(d), "gen-data", "--n", "100", "--mix", "0.5"]);
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    }
    assert_eq!(files(&a), files(&b));
    assert_eq!(files(&a).len(), 102);

    let entries = read_manifest(&a.join("manifest.csv")).unwrap();
    let straight = entries.iter().filter(|e| e.label == Curvature::Straight).count();
    assert_eq!(straight, 50);
    let corpus = trajgan::scene::load_corpus(&a, None, WindowConfig::default()).unwrap();
    let mut rng = rand_chacha_rng();
    let agree = corpus
        .scenes
        .iter()
        .zip(&entries)
        .filter(|(sc, e)| classify_curvature(sc.agent(), &mut rng, &RansacConfig::default()).unwrap().label == e.label)
        .count();
    assert!(agree >= 95, "{agree}/100 manifest labels confirmed");
}

fn rand_chacha_rng() -> impl rand::Rng {
    use rand::SeedableRng;
    rand_chacha::ChaCha8Rng::seed_from_u64(0)
}

#[test]
fn gen_data_empty() {
    let tmp = tempfile::tempdir().unwrap();
    let out = trajgan(&["--out", s(tmp.path()), "gen-data", "--n", "0"]);
    assert!(out.status.success());
    assert_eq!(fs::read_to_string(tmp.path().join("manifest.csv")).unwrap(), "scene_id,kind,label\n");
}

fn stationary_fixture(dir: &Path) -> (PathBuf, PathBuf, Point) {
    let w = WindowConfig::default();
    let stop = Point::new(12.0, -3.0);
    let agent = AgentTrack::from_positions("agent", Role::Agent, vec![stop; w.total()]).unwrap();
    let other = AgentTrack::from_positions("car", Role::Other, (0..w.total()).map(|i| Point::new(i as f64, 5.0)).collect()).unwrap();
    let area = DrivableArea::new(vec![Polygon::new(vec![
        Point::new(-50.0, -50.0),
        Point::new(80.0, -50.0),
        Point::new(80.0, 50.0),
        Point::new(-50.0, 50.0),
    ])])
    .unwrap();
    let map = dir.join("map.json");
    area.save(&map).unwrap();
    let scene = Scene::new("parked", vec![agent, other], Arc::new(area), w).unwrap();
    let csv = dir.join("parked.csv");
    write_scene_csv(&scene, &csv).unwrap();
    let model = Model::new(ModelConfig::default(), w).unwrap();
    let ckpt = dir.join("zero.tgf");
    checkpoint::save(&model.init_zero(), &ckpt).unwrap();
    (csv, ckpt, stop)
}

#[test]
fn predict_zero_checkpoint_holds_position() {
    let tmp = tempfile::tempdir().unwrap();
    let (scene, ckpt, stop) = stationary_fixture(tmp.path());
    let out_dir = tmp.path().join("out");
    let out = trajgan(&["--out", s(&out_dir), "predict", "--checkpoint", s(&ckpt), "--scene", s(&scene), "--svg"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = fs::read_to_string(out_dir.join("parked_prediction.csv")).unwrap();
    let rows: Vec<&str> = csv.lines().collect();
    assert_eq!(rows[0], "frame,x,y");
    assert_eq!(rows.len(), 31);
    for (k, row) in rows[1..].iter().enumerate() {
        assert_eq!(*row, format!("{},{},{}", 20 + k, stop.x, stop.y));
    }
    let svg = fs::read_to_string(out_dir.join("parked.svg")).unwrap();
    assert_eq!(svg.matches("<polyline class=\"track ").count(), 2);
    assert_eq!(svg.matches("<circle class=\"target\"").count(), 32);
}

#[test]
fn missing_map_and_bad_usage() {
    let tmp = tempfile::tempdir().unwrap();
    let (scene, ckpt, _) = stationary_fixture(tmp.path());
    let out = trajgan(&["--out", s(tmp.path()), "predict", "--checkpoint", s(&ckpt), "--scene", s(&scene), "--map", "/no/such/map.json"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("/no/such/map.json"));

    assert_eq!(trajgan(&["frobnicate"]).status.code(), Some(1));
    assert_eq!(trajgan(&["predict"]).status.code(), Some(1));
    let cfg = tmp.path().join("bad.toml");
    fs::write(&cfg, "[train]\nlearnin_rate = 0.1\n").unwrap();
    assert_eq!(trajgan(&["--config", s(&cfg), "--out", s(tmp.path()), "gen-data", "--n", "0"]).status.code(), Some(1));
}

#[test]
fn incompatible_checkpoint_window() {
    let tmp = tempfile::tempdir().unwrap();
    let (scene, _, _) = stationary_fixture(tmp.path());
    let model = Model::new(ModelConfig::default(), WindowConfig { t_obs: 10, t_pred: 20, hz: 10.0 }).unwrap();
    let ckpt = tmp.path().join("short.tgf");
    checkpoint::save(&model.init_zero(), &ckpt).unwrap();
    let out = trajgan(&["--out", s(tmp.path()), "predict", "--checkpoint", s(&ckpt), "--scene", s(&scene)]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("t_obs"));
}

#[test]
fn evaluate_straight_only_corpus() {
    let tmp = tempfile::tempdir().unwrap();
    let corpus = tmp.path().join("corpus");
    assert!(trajgan(&["--out", s(&corpus), "gen-data", "--n", "12", "--mix", "1.0"]).status.success());
    let ckpt = tmp.path().join("zero.tgf");
    checkpoint::save(&Model::new(ModelConfig::default(), WindowConfig::default()).unwrap().init_zero(), &ckpt).unwrap();
    let out_dir = tmp.path().join("eval");
    let out = trajgan(&["--out", s(&out_dir), "evaluate", "--checkpoint", s(&ckpt), "--corpus", s(&corpus)]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));

    let json: serde_json::Value = serde_json::from_str(&fs::read_to_string(out_dir.join("eval.json")).unwrap()).unwrap();
    assert!(json["aggregates"].get("curve").is_none());
    assert!(json["notes"].as_array().unwrap().iter().any(|n| n.as_str().unwrap().contains("curve aggregate omitted")));
    assert_eq!(json["reference"]["ade"], 1.67);

    // Aggregates recomputed from the per-scene CSV.
    let csv = fs::read_to_string(out_dir.join("eval.csv")).unwrap();
    let mut fde: Vec<f64> = csv.lines().skip(1).map(|l| l.split(',').nth(3).unwrap().parse().unwrap()).collect();
    assert_eq!(fde.len(), 12);
    fde.sort_by(f64::total_cmp);
    let median = 0.5 * (fde[5] + fde[6]);
    let mean = fde.iter().sum::<f64>() / 12.0;
    let agg = &json["aggregates"]["straight"]["fde"];
    assert!((agg["median"].as_f64().unwrap() - median).abs() < 1e-12);
    assert!((agg["mean"].as_f64().unwrap() - mean).abs() < 1e-12);
    for name in ["boxplot_ade.svg", "boxplot_fde.svg"] {
        assert!(fs::read_to_string(out_dir.join(name)).unwrap().starts_with("<svg"));
    }
    let ckpt_before = fs::read(&ckpt).unwrap();
    let out_dir2 = tmp.path().join("eval2");
    assert!(trajgan(&["--out", s(&out_dir2), "evaluate", "--checkpoint", s(&ckpt), "--corpus", s(&corpus)]).status.success());
    assert_eq!(files(&out_dir), files(&out_dir2));
    assert_eq!(fs::read(&ckpt).unwrap(), ckpt_before);
}

#[test]
fn evaluate_empty_corpus_fails() {
    let tmp = tempfile::tempdir().unwrap();
    let corpus = tmp.path().join("corpus");
    assert!(trajgan(&["--out", s(&corpus), "gen-data", "--n", "0"]).status.success());
    let ckpt = tmp.path().join("zero.tgf");
    checkpoint::save(&Model::new(ModelConfig::default(), WindowConfig::default()).unwrap().init_zero(), &ckpt).unwrap();
    let out = trajgan(&["--out", s(tmp.path()), "evaluate", "--checkpoint", s(&ckpt), "--corpus", s(&corpus)]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn train_and_plot_are_reproducible() {
    let tmp = tempfile::tempdir().unwrap();
    let corpus = tmp.path().join("corpus");
    assert!(trajgan(&["--out", s(&corpus), "gen-data", "--n", "10", "--mix", "0.3"]).status.success());
    let cfg = tmp.path().join("cfg.toml");
    fs::write(&cfg, "[train]\niterations = 6\neval_every = 3\nbatch = 4\n").unwrap();
    let mut runs = Vec::new();
    for name in ["r1", "r2"] {
        let dir = tmp.path().join(name);
        let out = trajgan(&["--config", s(&cfg), "--seed", "9", "--out", s(&dir), "train", "--corpus", s(&corpus)]);
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
        let scene = corpus.join("scene-00002.csv");
        let ckpt = dir.join("checkpoint.tgf");
        assert!(trajgan(&["--seed", "9", "--out", s(&dir), "plot", "--scene", s(&scene), "--checkpoint", s(&ckpt)]).status.success());
        runs.push(files(&dir));
    }
    assert_eq!(runs[0], runs[1]);
    let names: Vec<&str> = runs[0].iter().map(|(n, _)| n.as_str()).collect();
    assert_eq!(names, ["checkpoint.tgf", "config.toml", "last.tgf", "metrics.csv", "scene-00002.svg"]);
    let log = String::from_utf8(runs[0][3].1.clone()).unwrap();
    assert!(log.starts_with("iteration,g_loss,d_loss,lr,val_ade,val_fde\n3,"));
    assert_eq!(log.lines().count(), 3);
}
