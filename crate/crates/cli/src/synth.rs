use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use panfuse_core::io::{
    write_boxes, write_instances, write_json, write_panoptic, write_semantic_probs, write_taxonomy, BoxRecord,
};
use panfuse_core::synth::{generate_scene, SceneSpec};
use panfuse_core::ClassTaxonomy;
use rayon::prelude::*;

use crate::manifest::{ImageEntry, RunManifest};

pub struct SynthOptions {
    pub first_seed: u64,
    pub count: usize,
    pub thing_classes: usize,
    pub spec: SceneSpec,
}

/// Writes `count` scenes with consecutive seeds into `out` together with a
/// taxonomy, a box file and a manifest that `fuse` and `eval` accept as is.
/// Returns the manifest path.
pub fn run(opts: &SynthOptions, out: &Path) -> Result<PathBuf> {
    let t = ClassTaxonomy::synthetic(opts.spec.n_stuff_classes, opts.thing_classes)?;
    std::fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    write_taxonomy(&out.join("taxonomy.json"), &t)?;

    let seeds: Vec<u64> = (0..opts.count as u64).map(|k| opts.first_seed.wrapping_add(k)).collect();
    let records = seeds
        .par_iter()
        .map(|&seed| {
            let id = format!("scene_{seed}");
            let spec = SceneSpec { seed, ..opts.spec };
            let scene = generate_scene(&spec, &t).with_context(|| format!("seed {seed}"))?;
            write_semantic_probs(&out.join(format!("{id}.probs.pftb")), &scene.probs)?;
            write_instances(&out.join(format!("{id}.instances.pftb")), &scene.instances)?;
            write_panoptic(&out.join(format!("{id}.gt.png")), &scene.gt)?;
            Ok(BoxRecord { image_id: id, gt: scene.gt_boxes, proposals: scene.proposal_boxes })
        })
        .collect::<Vec<Result<BoxRecord>>>()
        .into_iter()
        .collect::<Result<Vec<_>>>()?;
    write_boxes(&out.join("boxes.jsonl"), &records)?;

    let images = records
        .iter()
        .map(|r| ImageEntry {
            image_id: r.image_id.clone(),
            probs: Some(format!("{}.probs.pftb", r.image_id).into()),
            instances: Some(format!("{}.instances.pftb", r.image_id).into()),
            gt_panoptic: Some(format!("{}.gt.png", r.image_id).into()),
            pred_panoptic: None,
            boxes: Some("boxes.jsonl".into()),
        })
        .collect();
    let manifest = RunManifest { taxonomy: Some("taxonomy.json".into()), config: Default::default(), images };
    let path = out.join("manifest.json");
    write_json(&path, &manifest)?;
    Ok(path)
}
