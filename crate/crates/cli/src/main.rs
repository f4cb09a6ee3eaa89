use clap::{Args, Parser, Subcommand};
use patchstyle::config::parse_kv;
use patchstyle::gradcheck;
use patchstyle::image::GrayImage;
use patchstyle::nets::{Generator, IdentityTranslator, Model, Translator};
use patchstyle::patches::{mine_all, synth_style, Dataset, MiningParams, StyleSpec};
use patchstyle::stylize::{
    seam_metric, stylize, stylize_independent, OrientationSeed, SeedRegion, StylizeOptions,
};
use patchstyle::train::{trace_to_csv, train_with, TrainConfig};
use patchstyle::{Error, Result};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

#[derive(Parser)]
#[command(
    name = "patchstyle",
    version,
    about = "Seamless patch-based sketch stylization"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Styles a plain sketch with a procedural style (stripes, dashes, dots).
    SynthStyle(SynthArgs),
    /// Mines aligned plain/styled patch pairs into a dataset directory.
    Mine(MineArgs),
    /// Trains a translator on a mined dataset.
    Train(TrainArgs),
    /// Stylizes a sketch with a trained checkpoint.
    Stylize(StylizeArgs),
    /// Runs the finite-difference gradient suite.
    Gradcheck(GradcheckArgs),
    /// Measures seams of an image along a patch grid.
    SeamReport(SeamArgs),
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    output: PathBuf,
    /// kind[:period[:phase[:thickness]]]
    #[arg(long, default_value = "stripes:6:0:3")]
    style: String,
}

#[derive(Args)]
struct MineArgs {
    /// Plain exemplar; repeat together with --styled for several pairs.
    #[arg(long, required = true)]
    plain: Vec<PathBuf>,
    #[arg(long, required = true)]
    styled: Vec<PathBuf>,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    patch_size: Option<usize>,
    #[arg(long)]
    rotation_step: Option<u32>,
    #[arg(long)]
    stride: Option<usize>,
    #[arg(long)]
    ink_threshold: Option<f64>,
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long)]
    dataset: PathBuf,
    /// Final checkpoint path.
    #[arg(long)]
    out: PathBuf,
    /// Loss trace CSV; defaults to the checkpoint path with a .csv extension.
    #[arg(long)]
    trace: Option<PathBuf>,
    /// Directory for periodic checkpoints and failure dumps.
    #[arg(long)]
    work_dir: Option<PathBuf>,
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    iterations: Option<usize>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    learning_rate: Option<f64>,
    #[arg(long)]
    delta: Option<usize>,
    /// l1, l1+adv, l1+shape or full.
    #[arg(long)]
    losses: Option<String>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    checkpoint_every: Option<usize>,
    /// width,res_blocks,down_levels
    #[arg(long)]
    generator: Option<String>,
    /// Comma-separated widths of the stride-2 layers.
    #[arg(long)]
    discriminator: Option<String>,
    /// Print losses every this many iterations (0 = silent).
    #[arg(long, default_value_t = 100)]
    log_every: usize,
}

#[derive(Args)]
struct StylizeArgs {
    #[arg(long)]
    input: PathBuf,
    /// Checkpoint file, or `identity` for a pass-through translator.
    #[arg(long)]
    checkpoint: Option<String>,
    #[arg(long)]
    output: PathBuf,
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    patch_size: Option<usize>,
    #[arg(long)]
    overlap: Option<usize>,
    /// raster or random:SEED
    #[arg(long)]
    root: Option<String>,
    /// bfs or raster
    #[arg(long)]
    order: Option<String>,
    /// erode:R or dilate:R
    #[arg(long)]
    pre: Option<String>,
    /// x,y,w,h[@sx,sy] region pasted from --exemplar into each root window.
    #[arg(long)]
    seed_orientation: Option<String>,
    #[arg(long)]
    exemplar: Option<PathBuf>,
    #[arg(long)]
    ink_threshold: Option<f64>,
    /// Translate every window on its own, without overlap or conditioning.
    #[arg(long)]
    independent: bool,
}

#[derive(Args)]
struct GradcheckArgs {
    #[arg(long, default_value_t = 11)]
    seed: u64,
}

#[derive(Args)]
struct SeamArgs {
    #[arg(long)]
    input: PathBuf,
    #[arg(long, default_value_t = 64)]
    patch_size: usize,
    #[arg(long, default_value_t = 16)]
    overlap: usize,
}

/// Config-file pairs followed by the flags that were given, so later
/// entries win.
fn layered(
    config: Option<&Path>,
    flags: Vec<(&str, Option<String>)>,
) -> Result<Vec<(String, String)>> {
    let mut kv = match config {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
            parse_kv(&text)?
        }
        None => Vec::new(),
    };
    kv.extend(
        flags
            .into_iter()
            .filter_map(|(k, v)| v.map(|v| (k.to_string(), v))),
    );
    Ok(kv)
}

fn show<T: ToString>(v: &Option<T>) -> Option<String> {
    v.as_ref().map(|v| v.to_string())
}

fn print_config(command: &str, lines: &[(String, String)]) {
    println!("# {command} resolved config");
    for (k, v) in lines {
        println!("{k}={v}");
    }
}

fn synth(a: SynthArgs) -> Result<()> {
    let style: StyleSpec = a.style.parse()?;
    print_config("synth-style", &[("style".into(), style.to_string())]);
    let plain = GrayImage::load(&a.input)?;
    synth_style(&plain, &style).save(&a.output)?;
    println!("wrote {}", a.output.display());
    Ok(())
}

fn mining(a: MineArgs) -> Result<()> {
    if a.plain.len() != a.styled.len() {
        return Err(Error::Alignment(format!(
            "{} plain but {} styled exemplars",
            a.plain.len(),
            a.styled.len()
        )));
    }
    let kv = layered(
        a.config.as_deref(),
        vec![
            ("patch_size", show(&a.patch_size)),
            ("rotation_step", show(&a.rotation_step)),
            ("stride", show(&a.stride)),
            ("ink_threshold", show(&a.ink_threshold)),
        ],
    )?;
    let mut params = MiningParams::default();
    for (k, v) in &kv {
        let bad = || Error::Config(format!("bad value for {k}: {v:?}"));
        match k.as_str() {
            "patch_size" => params.patch_size = v.parse().map_err(|_| bad())?,
            "rotation_step" => params.rotation_step = v.parse().map_err(|_| bad())?,
            "stride" => params.stride = v.parse().map_err(|_| bad())?,
            "ink_threshold" => params.ink_threshold = v.parse().map_err(|_| bad())?,
            _ => return Err(Error::Config(format!("unknown mine key {k:?}"))),
        }
    }
    print_config(
        "mine",
        &[
            ("patch_size".into(), params.patch_size.to_string()),
            ("rotation_step".into(), params.rotation_step.to_string()),
            ("stride".into(), params.stride.to_string()),
            ("ink_threshold".into(), params.ink_threshold.to_string()),
        ],
    );
    let mut exemplars = Vec::new();
    for (p, s) in a.plain.iter().zip(&a.styled) {
        exemplars.push((GrayImage::load(p)?, GrayImage::load(s)?));
    }
    let pairs = mine_all(&exemplars, &params)?;
    let names = a
        .plain
        .iter()
        .zip(&a.styled)
        .map(|(p, s)| format!("{}|{}", p.display(), s.display()))
        .collect();
    let ds = Dataset::new(params, names, pairs);
    ds.write(&a.out)?;
    println!("mined {} pairs into {}", ds.pairs.len(), a.out.display());
    Ok(())
}

fn training(a: TrainArgs) -> Result<()> {
    let ds = Dataset::read(&a.dataset)?;
    let mut cfg = TrainConfig {
        patch_size: ds.manifest.params.patch_size,
        ..TrainConfig::default()
    };
    let kv = layered(
        a.config.as_deref(),
        vec![
            ("iterations", show(&a.iterations)),
            ("batch_size", show(&a.batch_size)),
            ("learning_rate", show(&a.learning_rate)),
            ("delta", show(&a.delta)),
            ("losses", a.losses.clone()),
            ("seed", show(&a.seed)),
            ("checkpoint_every", show(&a.checkpoint_every)),
            ("generator", a.generator.clone()),
            ("discriminator", a.discriminator.clone()),
        ],
    )?;
    cfg.apply_kv(&kv)?;
    cfg.validate()?;
    println!("# train resolved config");
    print!("{}", cfg.to_kv_text());
    println!("dataset={} ({} pairs)", a.dataset.display(), ds.pairs.len());
    let every = a.log_every;
    let out = train_with(&ds.pairs, &cfg, a.work_dir.as_deref(), |r| {
        if every > 0 && (r.iteration % every == 0 || r.iteration + 1 == cfg.iterations) {
            println!(
                "iteration {}: l1 {:.5} adv {:.5} shape {:.5} d_real {:.5} d_fake {:.5}",
                r.iteration, r.l1, r.adv_g, r.shape, r.d_real, r.d_fake
            );
        }
    })?;
    out.model.save(&a.out)?;
    let trace = a.trace.unwrap_or_else(|| a.out.with_extension("csv"));
    std::fs::write(&trace, trace_to_csv(&out.trace))
        .map_err(|e| Error::Config(format!("{}: {e}", trace.display())))?;
    println!("wrote {} and {}", a.out.display(), trace.display());
    Ok(())
}

fn stylizing(a: StylizeArgs) -> Result<()> {
    let kv = layered(
        a.config.as_deref(),
        vec![
            ("checkpoint", a.checkpoint.clone()),
            ("patch_size", show(&a.patch_size)),
            ("overlap", show(&a.overlap)),
            ("root", a.root.clone()),
            ("order", a.order.clone()),
            ("pre", a.pre.clone()),
            ("seed_orientation", a.seed_orientation.clone()),
            (
                "exemplar",
                a.exemplar.as_ref().map(|p| p.display().to_string()),
            ),
            ("ink_threshold", show(&a.ink_threshold)),
        ],
    )?;
    let mut opts = StylizeOptions::default();
    let (mut checkpoint, mut region, mut exemplar) = (None, None, None);
    for (k, v) in &kv {
        let bad = || Error::Config(format!("bad value for {k}: {v:?}"));
        match k.as_str() {
            "checkpoint" => checkpoint = Some(v.clone()),
            "patch_size" => opts.patch_size = v.parse().map_err(|_| bad())?,
            "overlap" => opts.overlap = v.parse().map_err(|_| bad())?,
            "root" => opts.root = v.parse()?,
            "order" => opts.order = v.parse()?,
            "pre" => opts.pre = if v == "none" { None } else { Some(v.parse()?) },
            "seed_orientation" => region = Some(v.parse::<SeedRegion>()?),
            "exemplar" => exemplar = Some(PathBuf::from(v)),
            "ink_threshold" => opts.ink_threshold = v.parse().map_err(|_| bad())?,
            _ => return Err(Error::Config(format!("unknown stylize key {k:?}"))),
        }
    }
    let checkpoint =
        checkpoint.ok_or_else(|| Error::Config("stylize needs --checkpoint".into()))?;
    let mut shown = vec![
        ("checkpoint".to_string(), checkpoint.clone()),
        ("patch_size".into(), opts.patch_size.to_string()),
        (
            "overlap".into(),
            if a.independent {
                "0".into()
            } else {
                opts.overlap.to_string()
            },
        ),
        ("root".into(), opts.root.to_string()),
        ("order".into(), opts.order.to_string()),
        (
            "pre".into(),
            opts.pre.map_or("none".into(), |p| p.to_string()),
        ),
        ("ink_threshold".into(), opts.ink_threshold.to_string()),
        ("independent".into(), a.independent.to_string()),
    ];
    match (region, exemplar) {
        (Some(region), Some(path)) => {
            shown.push(("seed_orientation".into(), region.to_string()));
            shown.push(("exemplar".into(), path.display().to_string()));
            opts.seed = Some(OrientationSeed {
                exemplar: GrayImage::load(&path)?,
                region,
            });
        }
        (Some(_), None) => return Err(Error::Config("--seed-orientation needs --exemplar".into())),
        (None, _) => {}
    }
    print_config("stylize", &shown);

    let translator: Box<dyn Translator> = if checkpoint == "identity" {
        Box::new(IdentityTranslator)
    } else {
        Box::new(Generator::from_model(&Model::load(&checkpoint)?))
    };
    let mut sketch = GrayImage::load(&a.input)?;
    let image = if a.independent {
        if let Some(op) = opts.pre {
            sketch = op.apply(&sketch);
        }
        stylize_independent(&sketch, translator.as_ref(), opts.patch_size)?
    } else {
        let out = stylize(&sketch, translator.as_ref(), &opts)?;
        println!(
            "translated {} windows in {} component(s) on a {}x{} grid",
            out.graph.node_count(),
            out.graph.component_count(),
            out.grid.rows,
            out.grid.cols
        );
        out.image
    };
    image.save(&a.output)?;
    println!("wrote {}", a.output.display());
    Ok(())
}

fn gradchecking(a: GradcheckArgs) -> Result<()> {
    print_config(
        "gradcheck",
        &[
            ("seed".into(), a.seed.to_string()),
            ("step".into(), gradcheck::STEP.to_string()),
        ],
    );
    let reports = gradcheck::full_suite(a.seed)?;
    let mut worst = 0.0f64;
    for r in &reports {
        println!(
            "{:<26} {:>5} coords  max rel error {:.3e}",
            r.name, r.checked, r.max_rel_error
        );
        worst = worst.max(r.max_rel_error);
    }
    println!("max relative error: {worst:.3e}");
    if worst >= 1e-3 {
        return Err(Error::Numeric(format!(
            "max relative error {worst:.3e} is not below 1e-3"
        )));
    }
    Ok(())
}

fn seam_report(a: SeamArgs) -> Result<()> {
    print_config(
        "seam-report",
        &[
            ("patch_size".into(), a.patch_size.to_string()),
            ("overlap".into(), a.overlap.to_string()),
        ],
    );
    let img = GrayImage::load(&a.input)?;
    println!(
        "seam_metric={}",
        seam_metric(&img, a.patch_size, a.overlap)?
    );
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::SynthStyle(a) => synth(a),
        Command::Mine(a) => mining(a),
        Command::Train(a) => training(a),
        Command::Stylize(a) => stylizing(a),
        Command::Gradcheck(a) => gradchecking(a),
        Command::SeamReport(a) => seam_report(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error[{}]: {e}", e.class());
            ExitCode::FAILURE
        }
    }
}
