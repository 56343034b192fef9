//! Command-line front end: dataset generation, training, flow inference,
//! analogy reconstruction, and motion-based segmentation, all as plain files
//! on disk. Exit codes: 0 success, 1 runtime failure, 2 usage error.

use std::fmt;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

use gatedflow::datagen::{
    dump_pairs, load_pairs, make_pairs, make_scene, PairKind, TransformLabel,
};
use gatedflow::flow::{analogy_reconstruct, max_flow_field, render_flow, RenderMode};
use gatedflow::model::FactoredGrbm;
use gatedflow::motion::{classify_global_motion, segment_foreground, GlobalMotion, MotionKind};
use gatedflow::netpbm::{read_pgm, write_pgm};
use gatedflow::training::{train_with, TrainConfig};

/// Argument-level mistakes that should exit 2 rather than 1.
#[derive(Debug)]
struct UsageError(String);

impl fmt::Display for UsageError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.0.fmt(f)
    }
}

impl std::error::Error for UsageError {}

fn usage(msg: impl Into<String>) -> anyhow::Error {
    anyhow::Error::new(UsageError(msg.into()))
}

#[derive(Parser)]
#[command(
    name = "gatedflow",
    version,
    about = "Motion learning on binary image pairs with a factored gated RBM"
)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Generate a dataset of transformed image pairs as PGM files + manifest
    GenPairs(GenPairsArgs),
    /// Generate one two-motion scene (background + moving block) as PGM files
    GenScene(GenSceneArgs),
    /// Train a model with CD-1 and save it (plus an epoch,mse history CSV)
    Train(TrainArgs),
    /// Infer the max-flow field between two images and render it
    Flow(FlowArgs),
    /// Apply the transformation shown by an exemplar pair to a novel image
    Analogy(AnalogyArgs),
    /// Estimate global motion between two images and segment violating pixels
    Segment(SegmentArgs),
    /// Evaluate a model on a pair dataset (flow accuracy + reconstruction)
    Eval(EvalArgs),
}

#[derive(Clone, Copy, PartialEq, ValueEnum)]
enum Kind {
    Translation,
    Rotation,
}

impl Kind {
    fn pair_kind(self) -> PairKind {
        match self {
            Kind::Translation => PairKind::Translation9,
            Kind::Rotation => PairKind::RotationUniform,
        }
    }
}

#[derive(Args)]
struct GenPairsArgs {
    /// Transformation family
    #[arg(long, value_enum)]
    kind: Kind,
    /// Number of pairs
    #[arg(long, default_value_t = 10000)]
    n: usize,
    /// Image side length in pixels
    #[arg(long, default_value_t = 13)]
    size: usize,
    /// Probability of a pixel being on
    #[arg(long, default_value_t = 0.1)]
    density: f64,
    /// PRNG seed
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output directory
    #[arg(long, default_value = "pairs")]
    out: PathBuf,
}

#[derive(Args)]
struct GenSceneArgs {
    /// Image side length in pixels
    #[arg(long, default_value_t = 13)]
    size: usize,
    /// Background dot density
    #[arg(long, default_value_t = 0.1)]
    density: f64,
    /// Background shift, x component
    #[arg(long, default_value_t = 1, allow_negative_numbers = true)]
    bg_dx: i32,
    /// Background shift, y component
    #[arg(long, default_value_t = 0, allow_negative_numbers = true)]
    bg_dy: i32,
    /// Foreground rectangle top row
    #[arg(long, default_value_t = 4)]
    rect_row: usize,
    /// Foreground rectangle left column
    #[arg(long, default_value_t = 4)]
    rect_col: usize,
    /// Foreground rectangle height
    #[arg(long, default_value_t = 4)]
    rect_h: usize,
    /// Foreground rectangle width
    #[arg(long, default_value_t = 4)]
    rect_w: usize,
    /// Foreground shift, x component
    #[arg(long, default_value_t = -1, allow_negative_numbers = true)]
    fg_dx: i32,
    /// Foreground shift, y component
    #[arg(long, default_value_t = 0, allow_negative_numbers = true)]
    fg_dy: i32,
    /// PRNG seed
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output directory (writes x.pgm, y.pgm, truth.pgm)
    #[arg(long, default_value = "scene")]
    out: PathBuf,
}

#[derive(Args)]
struct TrainArgs {
    /// Transformation family (sets the default epoch count)
    #[arg(long, value_enum)]
    kind: Kind,
    /// Directory of pairs from gen-pairs; omit to generate in memory
    #[arg(long)]
    data: Option<PathBuf>,
    /// Number of pairs to generate when --data is absent
    #[arg(long, default_value_t = 10000)]
    n: usize,
    /// Image side length when generating
    #[arg(long, default_value_t = 13)]
    size: usize,
    /// Dot density when generating
    #[arg(long, default_value_t = 0.1)]
    density: f64,
    /// Number of factors
    #[arg(long, default_value_t = 200)]
    factors: usize,
    /// Number of hidden mapping units
    #[arg(long, default_value_t = 100)]
    hidden: usize,
    /// Training epochs (default: 500 for translation, 700 for rotation)
    #[arg(long)]
    epochs: Option<usize>,
    /// Minibatch size
    #[arg(long, default_value_t = 100)]
    batch_size: usize,
    /// Learning rate
    #[arg(long, default_value_t = 0.01)]
    learning_rate: f64,
    /// Momentum coefficient
    #[arg(long, default_value_t = 0.9)]
    momentum: f64,
    /// Target mean hidden activation for the sparsity nudge
    #[arg(long, default_value_t = 0.02)]
    target_hidden: f64,
    /// Sparsity nudge rate (0 disables)
    #[arg(long, default_value_t = 0.001)]
    sparsity_rate: f64,
    /// Std-dev of the Gaussian weight initialization
    #[arg(long, default_value_t = 0.01)]
    weight_init_std: f64,
    /// PRNG seed (drives init, sampling, shuffling, and generation)
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Worker threads for batch statistics
    #[arg(long, default_value_t = 1)]
    threads: usize,
    /// Output model file
    #[arg(long, default_value = "model.grbm")]
    model: PathBuf,
    /// Per-epoch reconstruction error CSV (default: <model>.history.csv)
    #[arg(long)]
    history: Option<PathBuf>,
    /// Save model_epochN.grbm snapshots every N epochs (0 disables)
    #[arg(long, default_value_t = 0)]
    checkpoint_every: usize,
}

#[derive(Args)]
struct FlowArgs {
    /// Trained model file
    #[arg(long, default_value = "model.grbm")]
    model: PathBuf,
    /// First frame (PGM)
    #[arg(long)]
    x: PathBuf,
    /// Second frame (PGM)
    #[arg(long)]
    y: PathBuf,
    /// Write the field as arrow text ("row col drow dcol" per active pixel)
    #[arg(long)]
    arrows: Option<PathBuf>,
    /// Write the field as a direction-colored PPM
    #[arg(long)]
    ppm: Option<PathBuf>,
}

#[derive(Args)]
struct AnalogyArgs {
    /// Trained model file
    #[arg(long, default_value = "model.grbm")]
    model: PathBuf,
    /// Exemplar first frame (PGM)
    #[arg(long)]
    exemplar_x: PathBuf,
    /// Exemplar second frame (PGM)
    #[arg(long)]
    exemplar_y: PathBuf,
    /// Novel input image (PGM)
    #[arg(long)]
    novel: PathBuf,
    /// Output reconstruction (PGM)
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct SegmentArgs {
    /// Trained model file
    #[arg(long, default_value = "model.grbm")]
    model: PathBuf,
    /// First frame (PGM)
    #[arg(long)]
    x: PathBuf,
    /// Second frame (PGM)
    #[arg(long)]
    y: PathBuf,
    /// Output foreground mask (PGM, 255 = foreground)
    #[arg(long)]
    mask: PathBuf,
    /// Minimum consensus before the global motion counts
    #[arg(long, default_value_t = 0.5)]
    min_consensus: f64,
    /// Violation tolerance in pixels (infinity norm)
    #[arg(long, default_value_t = 1.0)]
    tol: f64,
}

#[derive(Args)]
struct EvalArgs {
    /// Trained model file
    #[arg(long, default_value = "model.grbm")]
    model: PathBuf,
    /// Directory of pairs from gen-pairs
    #[arg(long)]
    data: PathBuf,
    /// Tolerance in degrees for counting a rotation estimate as correct
    #[arg(long, default_value_t = 15.0)]
    rotation_tol: f64,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.cmd) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            if e.downcast_ref::<UsageError>().is_some() {
                ExitCode::from(2)
            } else {
                ExitCode::from(1)
            }
        }
    }
}

fn run(cmd: Cmd) -> Result<()> {
    match cmd {
        Cmd::GenPairs(a) => gen_pairs(a),
        Cmd::GenScene(a) => gen_scene(a),
        Cmd::Train(a) => train_cmd(a),
        Cmd::Flow(a) => flow_cmd(a),
        Cmd::Analogy(a) => analogy_cmd(a),
        Cmd::Segment(a) => segment_cmd(a),
        Cmd::Eval(a) => eval_cmd(a),
    }
}

fn check_dataset_args(n: usize, size: usize, density: f64) -> Result<()> {
    if n == 0 {
        return Err(usage("--n must be at least 1"));
    }
    if size == 0 {
        return Err(usage("--size must be at least 1"));
    }
    if !(0.0..=1.0).contains(&density) {
        return Err(usage(format!("--density must be in [0,1], got {density}")));
    }
    Ok(())
}

fn gen_pairs(a: GenPairsArgs) -> Result<()> {
    check_dataset_args(a.n, a.size, a.density)?;
    let pairs = make_pairs(a.kind.pair_kind(), a.n, a.size, a.density, a.seed)?;
    std::fs::create_dir_all(&a.out).with_context(|| format!("creating {}", a.out.display()))?;
    dump_pairs(&a.out, &pairs)?;
    println!("wrote {} pairs to {}", pairs.len(), a.out.display());
    Ok(())
}

fn gen_scene(a: GenSceneArgs) -> Result<()> {
    check_dataset_args(1, a.size, a.density)?;
    let scene = make_scene(
        a.size,
        a.density,
        (a.bg_dx, a.bg_dy),
        (a.rect_row, a.rect_col, a.rect_h, a.rect_w),
        (a.fg_dx, a.fg_dy),
        a.seed,
    )?;
    std::fs::create_dir_all(&a.out).with_context(|| format!("creating {}", a.out.display()))?;
    write_pgm(&a.out.join("x.pgm"), &scene.pair.x)?;
    write_pgm(&a.out.join("y.pgm"), &scene.pair.y)?;
    let truth = gatedflow::motion::SegMask::from_labels(
        scene.pair.x.width(),
        scene.pair.x.height(),
        scene.truth_mask.clone(),
    )?;
    write_pgm(&a.out.join("truth.pgm"), &truth.to_image())?;
    println!("wrote scene to {}", a.out.display());
    Ok(())
}

fn train_cmd(a: TrainArgs) -> Result<()> {
    let pairs = match &a.data {
        Some(dir) => load_pairs(dir)?,
        None => {
            check_dataset_args(a.n, a.size, a.density)?;
            make_pairs(a.kind.pair_kind(), a.n, a.size, a.density, a.seed)?
        }
    };
    let epochs = a.epochs.unwrap_or(match a.kind {
        Kind::Translation => 500,
        Kind::Rotation => 700,
    });
    let cfg = TrainConfig {
        factors: a.factors,
        hidden: a.hidden,
        epochs,
        batch_size: a.batch_size,
        learning_rate: a.learning_rate,
        momentum: a.momentum,
        target_hidden: a.target_hidden,
        sparsity_rate: a.sparsity_rate,
        weight_init_std: a.weight_init_std,
        seed: a.seed,
        threads: a.threads,
        ..TrainConfig::default()
    };
    cfg.validate().map_err(|e| usage(e.to_string()))?;

    let history_path = a
        .history
        .clone()
        .unwrap_or_else(|| sibling_with_suffix(&a.model, ".history.csv"));
    let mut history = String::from("epoch,mse\n");
    let checkpoint_stem = a.model.with_extension("");
    let report = train_with(&pairs, &cfg, |epoch, model, mse| {
        history.push_str(&format!("{epoch},{mse}\n"));
        if a.checkpoint_every > 0 && epoch % a.checkpoint_every == 0 {
            let path = PathBuf::from(format!("{}_epoch{epoch}.grbm", checkpoint_stem.display()));
            model.save(&path)?;
        }
        Ok(())
    })?;
    report.model.save(&a.model)?;
    std::fs::write(&history_path, history)
        .with_context(|| format!("writing {}", history_path.display()))?;
    println!(
        "trained {} epochs on {} pairs; final mse {:.6}; model {}",
        epochs,
        pairs.len(),
        report.epoch_mse.last().copied().unwrap_or(f64::NAN),
        a.model.display()
    );
    Ok(())
}

fn sibling_with_suffix(path: &Path, suffix: &str) -> PathBuf {
    let mut s = path.as_os_str().to_os_string();
    s.push(suffix);
    PathBuf::from(s)
}

fn load_pair_files(
    model: &FactoredGrbm,
    x: &Path,
    y: &Path,
) -> Result<gatedflow::datagen::ImagePair> {
    let x = read_pgm(x)?;
    let y = read_pgm(y)?;
    if x.len() != model.n_inputs() || y.len() != model.n_outputs() {
        return Err(usage(format!(
            "model expects {}/{} pixels, images have {}/{}",
            model.n_inputs(),
            model.n_outputs(),
            x.len(),
            y.len()
        )));
    }
    Ok(gatedflow::datagen::ImagePair {
        x,
        y,
        label: TransformLabel::Identity,
    })
}

fn flow_cmd(a: FlowArgs) -> Result<()> {
    if a.arrows.is_none() && a.ppm.is_none() {
        return Err(usage(
            "pass --arrows and/or --ppm to write the field somewhere",
        ));
    }
    let model = FactoredGrbm::load(&a.model)?;
    let pair = load_pair_files(&model, &a.x, &a.y)?;
    let flow = max_flow_field(&model, &pair)?;
    if let Some(path) = &a.arrows {
        render_flow(&flow, path, RenderMode::ArrowsText)?;
        println!("wrote {}", path.display());
    }
    if let Some(path) = &a.ppm {
        render_flow(&flow, path, RenderMode::ColorPpm)?;
        println!("wrote {}", path.display());
    }
    Ok(())
}

fn analogy_cmd(a: AnalogyArgs) -> Result<()> {
    let model = FactoredGrbm::load(&a.model)?;
    let exemplar = load_pair_files(&model, &a.exemplar_x, &a.exemplar_y)?;
    let novel = read_pgm(&a.novel)?;
    let recon = analogy_reconstruct(&model, &exemplar, &novel)?;
    write_pgm(&a.out, &recon)?;
    println!("wrote {}", a.out.display());
    Ok(())
}

fn segment_cmd(a: SegmentArgs) -> Result<()> {
    let model = FactoredGrbm::load(&a.model)?;
    let pair = load_pair_files(&model, &a.x, &a.y)?;
    let flow = max_flow_field(&model, &pair)?;
    let gm = classify_global_motion(&flow, a.min_consensus);
    describe_motion(&gm);
    let mask = segment_foreground(&flow, &gm, a.tol)?;
    write_pgm(&a.mask, &mask.to_image())?;
    println!(
        "wrote {} ({} foreground pixels)",
        a.mask.display(),
        mask.foreground_count()
    );
    Ok(())
}

fn describe_motion(gm: &GlobalMotion) {
    match gm.kind {
        MotionKind::Translation { dx, dy } => {
            println!(
                "global motion: translation {dx} {dy} (consensus {:.3})",
                gm.consensus
            )
        }
        MotionKind::Rotation { theta } => {
            println!(
                "global motion: rotation {theta} (consensus {:.3})",
                gm.consensus
            )
        }
        MotionKind::Unknown => {
            println!("global motion: unknown (consensus {:.3})", gm.consensus)
        }
    }
}

fn eval_cmd(a: EvalArgs) -> Result<()> {
    let model = FactoredGrbm::load(&a.model)?;
    let pairs = load_pairs(&a.data)?;
    let mut translation = (0usize, 0usize);
    let mut rotation = (0usize, 0usize);
    let mut mse_sum = 0.0;
    for pair in &pairs {
        mse_sum += gatedflow::training::recon_error(&model, pair)?;
        let flow = max_flow_field(&model, pair)?;
        if flow.active_count() == 0 {
            continue;
        }
        match pair.label {
            TransformLabel::Translation { dx, dy } => {
                translation.1 += 1;
                let (mx, my, _) = gatedflow::motion::estimate_translation(&flow)?;
                if (mx, my) == (i64::from(dx), i64::from(dy)) {
                    translation.0 += 1;
                }
            }
            TransformLabel::Rotation { theta } => {
                rotation.1 += 1;
                let (est, _) = gatedflow::motion::estimate_rotation(&flow)?;
                let d = (est - theta).abs();
                if d.min(360.0 - d) <= a.rotation_tol {
                    rotation.0 += 1;
                }
            }
            TransformLabel::Identity => {
                translation.1 += 1;
                let (mx, my, _) = gatedflow::motion::estimate_translation(&flow)?;
                if (mx, my) == (0, 0) {
                    translation.0 += 1;
                }
            }
        }
    }
    println!("pairs {}", pairs.len());
    println!("mean_mse {:.6}", mse_sum / pairs.len() as f64);
    if translation.1 > 0 {
        println!(
            "modal_shift_accuracy {:.4} ({}/{})",
            translation.0 as f64 / translation.1 as f64,
            translation.0,
            translation.1
        );
    }
    if rotation.1 > 0 {
        println!(
            "rotation_accuracy {:.4} ({}/{})",
            rotation.0 as f64 / rotation.1 as f64,
            rotation.0,
            rotation.1
        );
    }
    Ok(())
}
