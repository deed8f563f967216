use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use anyhow::{bail, Result};
use clap::{Parser, Subcommand};
use log::info;

use trajgan::autodiff::checkpoint;
use trajgan::config::ExperimentConfig;
use trajgan::model::load_checkpoint;
use trajgan::plot::{boxplot_svg, scene_svg, Metric};
use trajgan::scene::{load_corpus, read_scene_csv, save_corpus, synthetic_corpus, DrivableArea, Scene};
use trajgan::train::{evaluate, label_scenes, predict_scenes, train_with_progress};

const EXIT_USAGE: u8 = 1;
const EXIT_DATA: u8 = 2;
const EXIT_NUMERIC: u8 = 3;

#[derive(Parser, Debug)]
#[command(name = "trajgan", version, about = "Goal-conditioned GAN vehicle trajectory forecasting")]
struct Cli {
    /// Experiment configuration (TOML). Defaults apply to anything left out.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the configured root seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory; overrides `paths.out_dir` (default `out`).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Writes a synthetic corpus: scene CSVs, one map and a label manifest.
    GenData {
        #[arg(long, default_value_t = 100)]
        n: usize,
        /// Fraction of straight scenes.
        #[arg(long, default_value_t = 0.3)]
        mix: f64,
    },
    /// Trains on a corpus; writes checkpoints and the metrics log.
    Train {
        #[arg(long)]
        corpus: Option<PathBuf>,
        #[arg(long)]
        map: Option<PathBuf>,
    },
    /// Forecasts one scene.
    Predict {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        scene: PathBuf,
        #[arg(long)]
        map: Option<PathBuf>,
        /// Also render the scene and forecast as SVG.
        #[arg(long)]
        svg: bool,
    },
    /// Scores a checkpoint on a corpus; writes the report and boxplots.
    Evaluate {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        corpus: Option<PathBuf>,
        #[arg(long)]
        map: Option<PathBuf>,
    },
    /// Renders a scene, with the forecast of a checkpoint when given.
    Plot {
        #[arg(long)]
        scene: PathBuf,
        #[arg(long)]
        map: Option<PathBuf>,
        #[arg(long)]
        checkpoint: Option<PathBuf>,
    },
}

struct Ctx {
    cfg: ExperimentConfig,
    out: PathBuf,
}

impl Ctx {
    fn new(cli: &Cli) -> Result<Self> {
        let mut cfg = match &cli.config {
            Some(p) => ExperimentConfig::load(p)?,
            None => ExperimentConfig::default(),
        };
        if let Some(seed) = cli.seed {
            cfg.seed = seed;
        }
        let out = cli.out.clone().or_else(|| cfg.paths.out_dir.clone()).unwrap_or_else(|| PathBuf::from("out"));
        fs::create_dir_all(&out).map_err(|e| trajgan::Error::io(&out, e))?;
        Ok(Self { cfg, out })
    }

    fn corpus_dir(&self, arg: &Option<PathBuf>) -> Result<PathBuf> {
        match arg.clone().or_else(|| self.cfg.paths.corpus_dir.clone()) {
            Some(p) => Ok(p),
            None => bail!(Usage("no corpus given: pass --corpus or set paths.corpus_dir".into())),
        }
    }

    fn map_path(&self, arg: &Option<PathBuf>) -> Option<PathBuf> {
        arg.clone().or_else(|| self.cfg.paths.map_file.clone())
    }

    fn write(&self, name: &str, contents: impl AsRef<[u8]>) -> Result<PathBuf> {
        let path = self.out.join(name);
        fs::write(&path, contents).map_err(|e| trajgan::Error::io(&path, e))?;
        Ok(path)
    }
}

#[derive(Debug)]
struct Usage(String);

impl std::fmt::Display for Usage {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for Usage {}

fn load_scene(ctx: &Ctx, scene: &Path, map: &Option<PathBuf>) -> Result<Scene> {
    let map = match ctx.map_path(map) {
        Some(p) => p,
        None => scene.parent().unwrap_or(Path::new(".")).join(trajgan::scene::corpus::MAP_FILE),
    };
    let area = Arc::new(DrivableArea::load(&map)?);
    Ok(read_scene_csv(scene, area, ctx.cfg.scene)?)
}

fn gen_data(ctx: &Ctx, n: usize, mix: f64) -> Result<()> {
    let (corpus, entries) = synthetic_corpus(n, mix, ctx.cfg.seed, ctx.cfg.scene)?;
    save_corpus(&ctx.out, &corpus, &entries)?;
    let straight = entries.iter().filter(|e| e.label == trajgan::preprocess::Curvature::Straight).count();
    info!("wrote {n} scenes ({straight} straight, {} curve) to {}", n - straight, ctx.out.display());
    Ok(())
}

fn train(ctx: &Ctx, corpus: &Option<PathBuf>, map: &Option<PathBuf>) -> Result<()> {
    let dir = ctx.corpus_dir(corpus)?;
    let corpus = load_corpus(&dir, ctx.map_path(map).as_deref(), ctx.cfg.scene)?;
    info!("training on {} scenes from {}", corpus.scenes.len(), dir.display());
    let outcome = train_with_progress(&ctx.cfg, &corpus.scenes, |r| {
        info!(
            "iter {:>6}  g {:.4}  d {:.4}  lr {:.2e}  val ade {:.3} fde {:.3}",
            r.iteration, r.g_loss, r.d_loss, r.lr, r.val_ade, r.val_fde
        )
    })?;
    checkpoint::save(&outcome.best, &ctx.out.join("checkpoint.tgf")).map_err(trajgan::Error::from)?;
    checkpoint::save(&outcome.last, &ctx.out.join("last.tgf")).map_err(trajgan::Error::from)?;
    ctx.write("metrics.csv", outcome.log_string())?;
    ctx.write("config.toml", ctx.cfg.to_toml())?;
    info!(
        "best val ade {:.3} at iteration {} of {}; wrote {}",
        outcome.best_val_ade,
        outcome.best_iteration,
        outcome.iterations,
        ctx.out.display()
    );
    Ok(())
}

fn predict(ctx: &Ctx, ckpt: &Path, scene: &Path, map: &Option<PathBuf>, svg: bool) -> Result<()> {
    let (model, params) = load_checkpoint(ckpt)?;
    let scene = load_scene(ctx, scene, map)?;
    let pred = predict_scenes(&model, &params, std::slice::from_ref(&scene), &ctx.cfg.targets, ctx.cfg.seed)?.remove(0);
    let t_obs = scene.window().t_obs;
    let mut csv = String::from("frame,x,y\n");
    for (k, p) in pred.positions.iter().enumerate() {
        csv.push_str(&format!("{},{},{}\n", t_obs + k, p.x, p.y));
    }
    let path = ctx.write(&format!("{}_prediction.csv", scene.scene_id), csv)?;
    info!("wrote {}", path.display());
    if svg {
        let targets = pred.targets.global();
        let path = ctx.write(&format!("{}.svg", scene.scene_id), scene_svg(&scene, Some(&pred.positions), Some(&targets)))?;
        info!("wrote {}", path.display());
    }
    Ok(())
}

fn evaluate_cmd(ctx: &Ctx, ckpt: &Path, corpus: &Option<PathBuf>, map: &Option<PathBuf>) -> Result<()> {
    let (model, params) = load_checkpoint(ckpt)?;
    let dir = ctx.corpus_dir(corpus)?;
    let corpus = load_corpus(&dir, ctx.map_path(map).as_deref(), ctx.cfg.scene)?;
    if corpus.scenes.is_empty() {
        bail!(trajgan::Error::MalformedScene(format!("corpus {} has no scenes", dir.display())));
    }
    let labels = label_scenes(&corpus.scenes, &ctx.cfg.ransac, ctx.cfg.seed)?;
    let report = evaluate(&model, &params, &corpus.scenes, &labels, &ctx.cfg.targets, ctx.cfg.seed, ctx.cfg.eval.baseline)?;
    report.save(&ctx.out, "eval")?;
    for m in [Metric::Ade, Metric::Fde] {
        ctx.write(&format!("boxplot_{}.svg", m.name()), boxplot_svg(&report, m))?;
    }
    for note in &report.notes {
        log::warn!("{note}");
    }
    if let Some(all) = report.aggregates.overall {
        info!("{} scenes: ade {:.3} fde {:.3}", all.count, all.ade.mean, all.fde.mean);
    }
    Ok(())
}

fn plot(ctx: &Ctx, scene: &Path, map: &Option<PathBuf>, ckpt: &Option<PathBuf>) -> Result<()> {
    let scene = load_scene(ctx, scene, map)?;
    let svg = match ckpt {
        Some(c) => {
            let (model, params) = load_checkpoint(c)?;
            let pred = predict_scenes(&model, &params, std::slice::from_ref(&scene), &ctx.cfg.targets, ctx.cfg.seed)?.remove(0);
            scene_svg(&scene, Some(&pred.positions), Some(&pred.targets.global()))
        }
        None => scene_svg(&scene, None, None),
    };
    let path = ctx.write(&format!("{}.svg", scene.scene_id), svg)?;
    info!("wrote {}", path.display());
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    let ctx = Ctx::new(&cli)?;
    match &cli.command {
        Command::GenData { n, mix } => gen_data(&ctx, *n, *mix),
        Command::Train { corpus, map } => train(&ctx, corpus, map),
        Command::Predict { checkpoint, scene, map, svg } => predict(&ctx, checkpoint, scene, map, *svg),
        Command::Evaluate { checkpoint, corpus, map } => evaluate_cmd(&ctx, checkpoint, corpus, map),
        Command::Plot { scene, map, checkpoint } => plot(&ctx, scene, map, checkpoint),
    }
}

fn exit_code(err: &anyhow::Error) -> u8 {
    if err.downcast_ref::<Usage>().is_some() {
        return EXIT_USAGE;
    }
    match err.downcast_ref::<trajgan::Error>() {
        Some(e) if e.is_numeric() => EXIT_NUMERIC,
        Some(trajgan::Error::Config(_)) => EXIT_USAGE,
        _ => EXIT_DATA,
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("TRAJGAN_LOG", "info")).format_timestamp(None).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
