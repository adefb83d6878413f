use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::types::{ClassId, ClassTaxonomy, SemanticLabelMap};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MeanIou {
    pub per_class: BTreeMap<ClassId, f64>,
    pub miou: f64,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
struct Counts {
    intersection: u64,
    union: u64,
    in_gt: bool,
}

/// Intersection and union counts per class, summed over images.
///
/// Pixels whose ground truth is void are skipped entirely. Only classes that
/// occur in some ground truth enter the mean.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct MiouAccumulator {
    counts: BTreeMap<ClassId, Counts>,
}

impl MiouAccumulator {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, pred: &SemanticLabelMap, gt: &SemanticLabelMap, t: &ClassTaxonomy) -> Result<()> {
        if pred.height() != gt.height() || pred.width() != gt.width() {
            return Err(Error::DimensionMismatch(format!(
                "prediction {}x{} vs ground truth {}x{}",
                pred.height(),
                pred.width(),
                gt.height(),
                gt.width()
            )));
        }
        pred.validate_against(t)?;
        gt.validate_against(t)?;
        for (&p, &g) in pred.labels().iter().zip(gt.labels()) {
            if g.is_void() {
                continue;
            }
            if p == g {
                let c = self.counts.entry(g).or_default();
                c.intersection += 1;
                c.union += 1;
                c.in_gt = true;
            } else {
                let c = self.counts.entry(g).or_default();
                c.union += 1;
                c.in_gt = true;
                if !p.is_void() {
                    self.counts.entry(p).or_default().union += 1;
                }
            }
        }
        Ok(())
    }

    pub fn merge(&mut self, other: &MiouAccumulator) {
        for (&id, c) in &other.counts {
            let e = self.counts.entry(id).or_default();
            e.intersection += c.intersection;
            e.union += c.union;
            e.in_gt |= c.in_gt;
        }
    }

    pub fn finish(&self) -> Result<MeanIou> {
        let per_class: BTreeMap<ClassId, f64> = self
            .counts
            .iter()
            .filter(|(_, c)| c.in_gt)
            .map(|(&id, c)| (id, c.intersection as f64 / c.union as f64))
            .collect();
        if per_class.is_empty() {
            return Err(Error::EmptyInput("no labeled ground-truth pixels"));
        }
        let miou = per_class.values().sum::<f64>() / per_class.len() as f64;
        Ok(MeanIou { per_class, miou })
    }
}

/// Mean IoU over the classes present in the ground truth.
pub fn mean_iou(pred: &SemanticLabelMap, gt: &SemanticLabelMap, t: &ClassTaxonomy) -> Result<MeanIou> {
    let mut acc = MiouAccumulator::new();
    acc.add(pred, gt, t)?;
    acc.finish()
}
