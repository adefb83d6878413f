//! Brute-force panoptic quality, written for clarity rather than speed.
//! Used to cross-check the optimized metric.

use std::collections::{BTreeMap, BTreeSet};

use crate::error::{Error, Result};
use crate::metrics::{ClassQuality, PqStats, PqTally, QualitySummary};
use crate::types::{ClassId, ClassKind, ClassTaxonomy, PanopticMap, SegmentKey};

fn pixel_sets(map: &PanopticMap) -> BTreeMap<SegmentKey, BTreeSet<usize>> {
    let mut sets: BTreeMap<SegmentKey, BTreeSet<usize>> = BTreeMap::new();
    for (i, &k) in map.pixels().iter().enumerate() {
        if !k.is_void() {
            sets.entry(k).or_default().insert(i);
        }
    }
    sets
}

/// Panoptic quality over `(prediction, ground truth)` pairs by comparing
/// every same-class segment pair as explicit pixel sets.
pub fn brute_force_pq(pairs: &[(&PanopticMap, &PanopticMap)], t: &ClassTaxonomy) -> Result<PqStats> {
    let mut tallies: BTreeMap<ClassId, PqTally> = BTreeMap::new();
    for &(pred, gt) in pairs {
        if pred.pixels().len() != gt.pixels().len() || pred.width() != gt.width() {
            return Err(Error::DimensionMismatch("oracle inputs differ in size".into()));
        }
        let void: BTreeSet<usize> =
            gt.pixels().iter().enumerate().filter(|(_, k)| k.is_void()).map(|(i, _)| i).collect();
        let preds = pixel_sets(pred);
        let gts = pixel_sets(gt);
        let mut matched_pred = BTreeSet::new();
        let mut matched_gt = BTreeSet::new();
        for (pk, ps) in &preds {
            let visible: BTreeSet<usize> = ps.difference(&void).copied().collect();
            for (gk, gs) in &gts {
                if pk.class_id != gk.class_id {
                    continue;
                }
                let inter = visible.intersection(gs).count();
                let union = visible.union(gs).count();
                let iou = inter as f64 / union as f64;
                if iou > 0.5 {
                    matched_pred.insert(*pk);
                    matched_gt.insert(*gk);
                    let tally = tallies.entry(gk.class_id).or_default();
                    tally.tp += 1;
                    tally.iou_sum += iou;
                }
            }
        }
        for gk in gts.keys().filter(|k| !matched_gt.contains(*k)) {
            tallies.entry(gk.class_id).or_default().fn_ += 1;
        }
        for (pk, ps) in preds.iter().filter(|(k, _)| !matched_pred.contains(*k)) {
            let on_void = ps.intersection(&void).count() as f64;
            if on_void / ps.len() as f64 <= 0.5 {
                tallies.entry(pk.class_id).or_default().fp += 1;
            }
        }
    }

    let mut per_class = BTreeMap::new();
    for (id, tally) in tallies {
        if tally.tp + tally.fp + tally.fn_ == 0 {
            continue;
        }
        if !t.contains(id) {
            return Err(Error::UnknownClassId { class_id: id, context: "oracle".into() });
        }
        let tp = tally.tp as f64;
        let sq = if tally.tp == 0 { 0.0 } else { tally.iou_sum / tp };
        let rq = tp / (tp + tally.fp as f64 / 2.0 + tally.fn_ as f64 / 2.0);
        per_class.insert(id, ClassQuality { pq: sq * rq, sq, rq, tally });
    }
    let mean = |filter: &dyn Fn(ClassId) -> bool| {
        let chosen: Vec<&ClassQuality> = per_class.iter().filter(|(id, _)| filter(**id)).map(|(_, q)| q).collect();
        let n = chosen.len();
        if n == 0 {
            return QualitySummary::default();
        }
        QualitySummary {
            pq: chosen.iter().map(|q| q.pq).sum::<f64>() / n as f64,
            sq: chosen.iter().map(|q| q.sq).sum::<f64>() / n as f64,
            rq: chosen.iter().map(|q| q.rq).sum::<f64>() / n as f64,
            n,
        }
    };
    Ok(PqStats {
        all: mean(&|_| true),
        things: mean(&|id| t.kind(id) == Some(ClassKind::Things)),
        stuff: mean(&|id| t.kind(id) == Some(ClassKind::Stuff)),
        per_class,
    })
}
