use std::path::Path;
use std::time::Instant;

use anyhow::{Context, Result};
use panfuse_core::io::{read_instances, read_semantic_probs, write_json, write_panoptic};
use panfuse_core::{extract_segments, fuse, ClassTaxonomy, FusionConfig};
use rayon::prelude::*;
use serde::Serialize;

use crate::manifest::{ImageEntry, Manifest};

#[derive(Serialize)]
struct ImageSummary {
    image_id: String,
    output: String,
    segments: usize,
    things_segments: usize,
    stuff_segments: usize,
    void_pixels: usize,
}

#[derive(Serialize)]
struct Summary {
    config: FusionConfig,
    images: Vec<ImageSummary>,
}

#[derive(Serialize)]
struct Timing {
    image_id: String,
    fuse_ms: f64,
    total_ms: f64,
}

fn fuse_one(
    m: &Manifest,
    img: &ImageEntry,
    t: &ClassTaxonomy,
    cfg: &FusionConfig,
    out: &Path,
) -> Result<(ImageSummary, Timing)> {
    let start = Instant::now();
    let probs_path = m.require("probs", &img.probs)?;
    let inst_path = m.require("instances", &img.instances)?;
    let probs = read_semantic_probs(&probs_path, t)?;
    let instances = read_instances(&inst_path, t)?;
    let fuse_start = Instant::now();
    let pan = fuse(&probs, &instances, t, cfg)?;
    let fuse_ms = fuse_start.elapsed().as_secs_f64() * 1e3;
    let name = format!("{}.png", img.image_id);
    write_panoptic(&out.join(&name), &pan)?;
    let segments = extract_segments(&pan);
    let things_segments = segments.iter().filter(|s| t.is_thing(s.key.class_id)).count();
    let summary = ImageSummary {
        image_id: img.image_id.clone(),
        output: name,
        segments: segments.len(),
        things_segments,
        stuff_segments: segments.len() - things_segments,
        void_pixels: pan.void_count(),
    };
    let timing = Timing { image_id: img.image_id.clone(), fuse_ms, total_ms: start.elapsed().as_secs_f64() * 1e3 };
    Ok((summary, timing))
}

/// Fuses every image of the manifest into `out`, writing one panoptic PNG and
/// sidecar per image plus `summary.json`. Wall-clock timings vary between
/// runs, so they go to a separate `timings.json` and only on request.
pub fn run(m: &Manifest, cfg: &FusionConfig, out: &Path, timings: bool) -> Result<()> {
    cfg.validate()?;
    std::fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    let results: Vec<Result<(ImageSummary, Timing)>> = if m.run.images.is_empty() {
        Vec::new()
    } else {
        let t = m.taxonomy()?;
        m.run
            .images
            .par_iter()
            .map(|img| fuse_one(m, img, &t, cfg, out).with_context(|| format!("image {}", img.image_id)))
            .collect()
    };
    let mut images = Vec::with_capacity(results.len());
    let mut times = Vec::with_capacity(results.len());
    for r in results {
        let (s, t) = r?;
        images.push(s);
        times.push(t);
    }
    write_json(&out.join("summary.json"), &Summary { config: *cfg, images })?;
    if timings {
        write_json(&out.join("timings.json"), &times)?;
    }
    Ok(())
}
