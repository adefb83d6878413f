use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::ValueEnum;
use panfuse_core::io::{read_boxes, read_instances, read_panoptic, read_semantic_probs, write_report};
use panfuse_core::metrics::{
    box_recall, mean_recall, things_as_instances, ApAccumulator, MeanAp, MeanIou, MiouAccumulator, PqAccumulator,
    PqStats, QualitySummary,
};
use panfuse_core::{argmax_semantic, ClassTaxonomy};
use rayon::prelude::*;
use serde::Serialize;

use crate::manifest::{ImageEntry, Manifest};

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Metric {
    Pq,
    Miou,
    Map50,
    Recall,
}

pub struct EvalOptions {
    pub mask_threshold: f32,
    pub recall_iou: f64,
    /// Directory of fused predictions named `<image_id>.png`; overrides the
    /// manifest's `pred_panoptic` entries.
    pub pred_dir: Option<PathBuf>,
}

#[derive(Serialize)]
struct PqReport {
    metric: &'static str,
    images: usize,
    #[serde(flatten)]
    stats: PqStats,
}

#[derive(Serialize)]
struct MiouReport {
    metric: &'static str,
    images: usize,
    #[serde(flatten)]
    result: MeanIou,
}

#[derive(Serialize)]
struct MapReport {
    metric: &'static str,
    images: usize,
    mask_threshold: f32,
    #[serde(flatten)]
    result: MeanAp,
}

#[derive(Serialize)]
struct ImageRecall {
    image_id: String,
    recall: f64,
    gt_boxes: usize,
    proposals: usize,
}

#[derive(Serialize)]
struct RecallReport {
    metric: &'static str,
    iou_threshold: f64,
    mean_recall: f64,
    per_image: Vec<ImageRecall>,
}

/// A finished evaluation: the JSON report and its human-readable table.
pub struct Evaluation {
    pub json: String,
    pub table: String,
}

fn pct(v: f64) -> String {
    format!("{:.1}", 100.0 * v)
}

/// Runs `f` on every image in parallel and returns the results in manifest
/// order, failing on the first error in that order.
fn per_image<T: Send>(m: &Manifest, f: impl Fn(&ImageEntry) -> Result<T> + Sync) -> Result<Vec<T>> {
    m.run
        .images
        .par_iter()
        .map(|img| f(img).with_context(|| format!("image {}", img.image_id)))
        .collect::<Vec<_>>()
        .into_iter()
        .collect()
}

fn pred_path(m: &Manifest, img: &ImageEntry, opts: &EvalOptions) -> Result<PathBuf> {
    match &opts.pred_dir {
        Some(dir) => Ok(dir.join(format!("{}.png", img.image_id))),
        None => m.require("pred_panoptic", &img.pred_panoptic),
    }
}

fn eval_pq(m: &Manifest, t: &ClassTaxonomy, opts: &EvalOptions) -> Result<Evaluation> {
    let parts = per_image(m, |img| {
        let gt = read_panoptic(&m.require("gt_panoptic", &img.gt_panoptic)?, t)?;
        let pred = read_panoptic(&pred_path(m, img, opts)?, t)?;
        let mut acc = PqAccumulator::new();
        acc.add(&pred, &gt)?;
        Ok(acc)
    })?;
    let mut acc = PqAccumulator::new();
    for p in &parts {
        acc.merge(p);
    }
    let stats = acc.finish(t)?;
    let mut table = String::new();
    let head = ["PQ", "SQ", "RQ", "PQ^Th", "SQ^Th", "RQ^Th", "PQ^St", "SQ^St", "RQ^St"];
    let row = |q: &QualitySummary| [pct(q.pq), pct(q.sq), pct(q.rq)];
    let cells: Vec<String> = [&stats.all, &stats.things, &stats.stuff].into_iter().flat_map(row).collect();
    writeln!(table, "{}", head.map(|h| format!("{h:>7}")).join("")).unwrap();
    writeln!(table, "{}", cells.iter().map(|c| format!("{c:>7}")).collect::<String>()).unwrap();
    let json = write_report(&PqReport { metric: "pq", images: acc.images(), stats })?;
    Ok(Evaluation { json, table })
}

fn eval_miou(m: &Manifest, t: &ClassTaxonomy) -> Result<Evaluation> {
    let parts = per_image(m, |img| {
        let gt = read_panoptic(&m.require("gt_panoptic", &img.gt_panoptic)?, t)?;
        let probs = read_semantic_probs(&m.require("probs", &img.probs)?, t)?;
        let mut acc = MiouAccumulator::new();
        acc.add(&argmax_semantic(&probs), &gt.to_semantic(), t)?;
        Ok(acc)
    })?;
    let mut acc = MiouAccumulator::new();
    for p in &parts {
        acc.merge(p);
    }
    let result = acc.finish()?;
    let table = format!("{:>7}\n{:>7}\n", "mIoU", pct(result.miou));
    let json = write_report(&MiouReport { metric: "miou", images: parts.len(), result })?;
    Ok(Evaluation { json, table })
}

fn eval_map50(m: &Manifest, t: &ClassTaxonomy, opts: &EvalOptions) -> Result<Evaluation> {
    let parts = per_image(m, |img| {
        let gt = read_panoptic(&m.require("gt_panoptic", &img.gt_panoptic)?, t)?;
        let pred = read_instances(&m.require("instances", &img.instances)?, t)?;
        Ok((pred, things_as_instances(&gt, t)?))
    })?;
    // Matching is per image but the ranking spans the whole dataset.
    let mut acc = ApAccumulator::new();
    for (pred, gt) in &parts {
        acc.add(pred, gt, t, opts.mask_threshold)?;
    }
    let result = acc.finish()?;
    let table = format!("{:>7}\n{:>7}\n", "mAP^0.5", pct(result.map));
    let json =
        write_report(&MapReport { metric: "map50", images: parts.len(), mask_threshold: opts.mask_threshold, result })?;
    Ok(Evaluation { json, table })
}

fn eval_recall(m: &Manifest, opts: &EvalOptions) -> Result<Evaluation> {
    let per_image = per_image(m, |img| {
        let path = m.require("boxes", &img.boxes)?;
        let records = read_boxes(&path)?;
        let Some(rec) = records.iter().find(|r| r.image_id == img.image_id) else {
            bail!("{}: no record for image_id {:?}", path.display(), img.image_id);
        };
        Ok(ImageRecall {
            image_id: img.image_id.clone(),
            recall: box_recall(&rec.gt, &rec.proposals, opts.recall_iou),
            gt_boxes: rec.gt.len(),
            proposals: rec.proposals.len(),
        })
    })?;
    let recalls: Vec<f64> = per_image.iter().map(|r| r.recall).collect();
    let mean = mean_recall(&recalls)?;
    let table = format!("{:>11}\n{:>11.3}\n", "mean recall", mean);
    let json =
        write_report(&RecallReport { metric: "recall", iou_threshold: opts.recall_iou, mean_recall: mean, per_image })?;
    Ok(Evaluation { json, table })
}

pub fn run(m: &Manifest, metric: Metric, opts: &EvalOptions) -> Result<Evaluation> {
    if !(opts.recall_iou > 0.0 && opts.recall_iou <= 1.0) {
        bail!("recall IoU threshold {} must lie in (0, 1]", opts.recall_iou);
    }
    if !(opts.mask_threshold > 0.0 && opts.mask_threshold < 1.0) {
        bail!("mask threshold {} must lie strictly inside (0, 1)", opts.mask_threshold);
    }
    if metric == Metric::Recall {
        return eval_recall(m, opts);
    }
    if m.run.images.is_empty() {
        bail!("{}: no images to evaluate", m.path.display());
    }
    let t = m.taxonomy()?;
    match metric {
        Metric::Pq => eval_pq(m, &t, opts),
        Metric::Miou => eval_miou(m, &t),
        Metric::Map50 => eval_map50(m, &t, opts),
        Metric::Recall => unreachable!(),
    }
}

pub fn write_output(path: &Path, json: &str) -> Result<()> {
    panfuse_core::io::write_atomic(path, json.as_bytes())?;
    Ok(())
}
