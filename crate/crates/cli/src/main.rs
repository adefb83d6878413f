//! `panfuse`: panoptic fusion, evaluation and synthetic data from the command line.

mod eval;
mod fuse;
mod manifest;
mod synth;

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, CommandFactory, Parser, Subcommand};
use panfuse_core::fusion::{DEFAULT_MASK_THRESHOLD, DEFAULT_MIN_STUFF_AREA};
use panfuse_core::metrics::DEFAULT_RECALL_IOU;
use panfuse_core::synth::{Perturbation, SceneSpec};
use panfuse_core::FusionConfig;

use crate::eval::{EvalOptions, Metric};
use crate::manifest::Manifest;

#[derive(Parser)]
#[command(name = "panfuse", version, about = "Panoptic fusion and evaluation")]
struct Cli {
    /// Worker threads for per-image processing [default: all cores]
    #[arg(long, global = true)]
    workers: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fuse semantic probabilities and instance masks into panoptic maps
    Fuse {
        #[arg(long)]
        manifest: PathBuf,
        /// Output directory
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        thresholds: FusionFlags,
        /// Also write per-image wall-clock timings to timings.json
        #[arg(long)]
        timings: bool,
    },
    /// Evaluate predictions listed in a manifest
    Eval {
        #[arg(value_enum)]
        metric: Metric,
        #[arg(long)]
        manifest: PathBuf,
        /// Write the JSON report here
        #[arg(long)]
        out: Option<PathBuf>,
        /// Read predictions `<image_id>.png` from this directory, e.g. the
        /// output of `fuse`, instead of the manifest's pred_panoptic entries
        #[arg(long)]
        pred: Option<PathBuf>,
        /// Print the JSON report instead of the table
        #[arg(long)]
        json: bool,
        /// Binarization threshold for predicted masks (map50) [default: 0.5]
        #[arg(long)]
        mask_threshold: Option<f32>,
        /// Box IoU needed to count a ground-truth box as recalled [default: 0.5]
        #[arg(long)]
        recall_iou: Option<f64>,
    },
    /// Generate deterministic synthetic scenes
    Synth {
        /// Output directory
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        scene: SynthFlags,
    },
    /// Show defaults, or summarize a manifest
    Info {
        #[arg(long)]
        manifest: Option<PathBuf>,
    },
}

#[derive(Args)]
struct FusionFlags {
    /// Stuff classes with fewer pixels are replaced [default: 4096]
    #[arg(long)]
    min_stuff_area: Option<u64>,
    /// A soft mask claims a pixel at or above this value [default: 0.5]
    #[arg(long)]
    mask_threshold: Option<f32>,
}

#[derive(Args)]
struct SynthFlags {
    /// Seed of the first scene; further scenes use consecutive seeds
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Number of scenes
    #[arg(long, default_value_t = 1)]
    count: usize,
    #[arg(long, default_value_t = 128)]
    height: usize,
    #[arg(long, default_value_t = 128)]
    width: usize,
    #[arg(long, default_value_t = 3)]
    stuff_classes: usize,
    #[arg(long, default_value_t = 5)]
    thing_classes: usize,
    #[arg(long, default_value_t = 5)]
    instances: usize,
    /// Maximum mask and proposal shift in pixels
    #[arg(long, default_value_t = 0)]
    mask_jitter: u32,
    #[arg(long, default_value_t = 0.0)]
    score_noise: f64,
    #[arg(long, default_value_t = 0.0)]
    drop_probability: f64,
}

fn fusion_config(flags: &FusionFlags, m: &Manifest) -> FusionConfig {
    let c = &m.run.config;
    FusionConfig {
        min_stuff_area: flags.min_stuff_area.or(c.min_stuff_area).unwrap_or(DEFAULT_MIN_STUFF_AREA),
        mask_threshold: flags.mask_threshold.or(c.mask_threshold).unwrap_or(DEFAULT_MASK_THRESHOLD),
    }
}

fn info(manifest: Option<PathBuf>) -> Result<()> {
    let Some(path) = manifest else {
        println!("panfuse {}", env!("CARGO_PKG_VERSION"));
        println!("min_stuff_area  {DEFAULT_MIN_STUFF_AREA}");
        println!("mask_threshold  {DEFAULT_MASK_THRESHOLD}");
        println!("recall_iou      {DEFAULT_RECALL_IOU}");
        return Ok(());
    };
    let m = Manifest::load(&path)?;
    let cfg = fusion_config(&FusionFlags { min_stuff_area: None, mask_threshold: None }, &m);
    println!("manifest        {}", path.display());
    println!("images          {}", m.run.images.len());
    println!("min_stuff_area  {}", cfg.min_stuff_area);
    println!("mask_threshold  {}", cfg.mask_threshold);
    println!("recall_iou      {}", m.run.config.recall_iou.unwrap_or(DEFAULT_RECALL_IOU));
    if m.run.taxonomy.is_some() {
        let t = m.taxonomy()?;
        println!("classes");
        for e in t.entries() {
            let kind = serde_json::to_value(e.kind)?;
            println!("  {:>5}  {:<6}  {}", e.id.0, kind.as_str().unwrap_or_default(), e.name);
        }
    }
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(n) = cli.workers {
        pool = pool.num_threads(n.max(1));
    }
    pool.build_global().context("starting worker pool")?;

    match cli.command {
        Command::Fuse { manifest, out, thresholds, timings } => {
            let m = Manifest::load(&manifest)?;
            let cfg = fusion_config(&thresholds, &m);
            fuse::run(&m, &cfg, &out, timings)?;
            println!("fused {} image(s) into {}", m.run.images.len(), out.display());
        }
        Command::Eval { metric, manifest, out, pred, json, mask_threshold, recall_iou } => {
            let m = Manifest::load(&manifest)?;
            let c = &m.run.config;
            let opts = EvalOptions {
                mask_threshold: mask_threshold.or(c.mask_threshold).unwrap_or(DEFAULT_MASK_THRESHOLD),
                recall_iou: recall_iou.or(c.recall_iou).unwrap_or(DEFAULT_RECALL_IOU),
                pred_dir: pred,
            };
            let result = eval::run(&m, metric, &opts)?;
            if let Some(path) = out {
                eval::write_output(&path, &result.json)?;
            }
            if json {
                print!("{}", result.json);
            } else {
                print!("{}", result.table);
            }
        }
        Command::Synth { out, scene } => {
            let spec = SceneSpec {
                seed: scene.seed,
                height: scene.height,
                width: scene.width,
                n_stuff_classes: scene.stuff_classes,
                n_instances: scene.instances,
                perturbation: Perturbation {
                    mask_jitter: scene.mask_jitter,
                    score_noise: scene.score_noise,
                    drop_probability: scene.drop_probability,
                },
            };
            if let Err(e) = spec.validate() {
                Cli::command().error(clap::error::ErrorKind::ValueValidation, e).exit();
            }
            let opts = synth::SynthOptions {
                first_seed: scene.seed,
                count: scene.count,
                thing_classes: scene.thing_classes,
                spec,
            };
            let path = synth::run(&opts, &out)?;
            println!("{}", path.display());
        }
        Command::Info { manifest } => info(manifest)?,
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
