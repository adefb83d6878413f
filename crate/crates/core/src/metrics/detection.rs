//! Mask average precision at IoU 0.5.
//!
//! Predictions are visited per class in descending score order and greedily
//! matched to the best remaining ground-truth mask. AP is the exact area under
//! the precision/recall step curve after making precision non-increasing
//! from the right.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::types::{extract_segments, ClassId, ClassTaxonomy, InstanceDetection, InstanceSet, PanopticMap, SoftMask};

pub const AP_IOU_THRESHOLD: f64 = 0.5;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MeanAp {
    pub per_class: BTreeMap<ClassId, f64>,
    pub map: f64,
}

/// IoU of two masks binarized at their own thresholds.
pub fn mask_iou(a: &SoftMask, a_threshold: f32, b: &SoftMask, b_threshold: f32) -> f64 {
    let area_a = a.count_at_least(a_threshold) as u64;
    let area_b = b.count_at_least(b_threshold) as u64;
    let (at, al, ar, ac) = a.window();
    let (bt, bl, br, bc) = b.window();
    let (top, bottom) = (at.max(bt), (at + ar).min(bt + br));
    let (left, right) = (al.max(bl), (al + ac).min(bl + bc));
    let mut inter = 0u64;
    for y in top..bottom.max(top) {
        for x in left..right.max(left) {
            inter += (a.value(y, x) >= a_threshold && b.value(y, x) >= b_threshold) as u64;
        }
    }
    let union = area_a + area_b - inter;
    if union == 0 {
        0.0
    } else {
        inter as f64 / union as f64
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
struct ClassRecords {
    gt_count: u64,
    /// (score, image, prediction index, true positive)
    hits: Vec<(f64, usize, usize, bool)>,
}

/// Collects per-class hit lists over a dataset.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ApAccumulator {
    classes: BTreeMap<ClassId, ClassRecords>,
    images: usize,
}

impl ApAccumulator {
    pub fn new() -> Self {
        Self::default()
    }

    /// `mask_threshold` binarizes the predicted masks; ground-truth masks are
    /// expected to be binary.
    pub fn add(&mut self, pred: &InstanceSet, gt: &InstanceSet, t: &ClassTaxonomy, mask_threshold: f32) -> Result<()> {
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
        let image = self.images;
        self.images += 1;

        for d in gt.detections() {
            self.classes.entry(d.class_id).or_default().gt_count += 1;
        }
        let preds = pred.detections();
        let mut order: Vec<usize> = (0..preds.len()).collect();
        order.sort_by(|&i, &j| preds[j].score.total_cmp(&preds[i].score).then(i.cmp(&j)));
        let mut gt_taken = vec![false; gt.len()];
        for i in order {
            let p = &preds[i];
            let mut best: Option<(usize, f64)> = None;
            for (g, gd) in gt.detections().iter().enumerate() {
                if gt_taken[g] || gd.class_id != p.class_id {
                    continue;
                }
                let iou = mask_iou(&p.mask, mask_threshold, &gd.mask, 0.5);
                if best.map_or(true, |(_, b)| iou > b) {
                    best = Some((g, iou));
                }
            }
            let tp = match best {
                Some((g, iou)) if iou >= AP_IOU_THRESHOLD => {
                    gt_taken[g] = true;
                    true
                }
                _ => false,
            };
            self.classes.entry(p.class_id).or_default().hits.push((p.score, image, i, tp));
        }
        Ok(())
    }

    pub fn finish(&self) -> Result<MeanAp> {
        let per_class: BTreeMap<ClassId, f64> = self
            .classes
            .iter()
            .filter(|(_, r)| r.gt_count > 0)
            .map(|(&id, r)| (id, average_precision(&r.hits, r.gt_count)))
            .collect();
        if per_class.is_empty() {
            return Err(Error::EmptyInput("no ground-truth instances"));
        }
        let map = per_class.values().sum::<f64>() / per_class.len() as f64;
        Ok(MeanAp { per_class, map })
    }
}

fn average_precision(hits: &[(f64, usize, usize, bool)], gt_count: u64) -> f64 {
    let mut sorted = hits.to_vec();
    sorted.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
    let (mut tp, mut fp) = (0u64, 0u64);
    let mut curve = Vec::with_capacity(sorted.len());
    for &(_, _, _, hit) in &sorted {
        if hit {
            tp += 1;
        } else {
            fp += 1;
        }
        curve.push((tp as f64 / gt_count as f64, tp as f64 / (tp + fp) as f64));
    }
    for i in (0..curve.len().saturating_sub(1)).rev() {
        curve[i].1 = curve[i].1.max(curve[i + 1].1);
    }
    let mut ap = 0.0;
    let mut prev_recall = 0.0;
    for &(recall, precision) in &curve {
        ap += (recall - prev_recall) * precision;
        prev_recall = recall;
    }
    ap
}

/// The things segments of a panoptic map as binary, score-1 detections, in
/// first-pixel raster order. Used as ground truth for mask AP.
pub fn things_as_instances(p: &PanopticMap, t: &ClassTaxonomy) -> Result<InstanceSet> {
    let (h, w) = (p.height(), p.width());
    let mut detections = Vec::new();
    for seg in extract_segments(p) {
        if !t.is_thing(seg.key.class_id) {
            continue;
        }
        let (mut y0, mut y1, mut x0, mut x1) = (usize::MAX, 0, usize::MAX, 0);
        for (i, _) in p.pixels().iter().enumerate().filter(|(_, &k)| k == seg.key) {
            let (y, x) = (i / w, i % w);
            y0 = y0.min(y);
            y1 = y1.max(y + 1);
            x0 = x0.min(x);
            x1 = x1.max(x + 1);
        }
        let (rows, cols) = (y1 - y0, x1 - x0);
        let mut values = vec![0.0f32; rows * cols];
        for y in y0..y1 {
            for x in x0..x1 {
                if p.get(y, x) == seg.key {
                    values[(y - y0) * cols + (x - x0)] = 1.0;
                }
            }
        }
        let mask = SoftMask::from_window(h, w, y0, x0, rows, cols, &values)?;
        detections.push(InstanceDetection::new(seg.key.class_id, 1.0, mask)?);
    }
    InstanceSet::new(h, w, detections)
}

/// Mask mAP at IoU 0.5 for a single image.
pub fn map50(pred: &InstanceSet, gt: &InstanceSet, t: &ClassTaxonomy, mask_threshold: f32) -> Result<MeanAp> {
    let mut acc = ApAccumulator::new();
    acc.add(pred, gt, t, mask_threshold)?;
    acc.finish()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::types::SegmentKey;

    fn tax() -> ClassTaxonomy {
        ClassTaxonomy::synthetic(1, 2).unwrap()
    }

    const CAT: ClassId = ClassId(2);
    const DOG: ClassId = ClassId(3);

    /// 1×8 image; the detection covers the listed columns.
    fn det(class: ClassId, score: f64, cols: &[usize]) -> InstanceDetection {
        let mut v = vec![0.0; 8];
        for &c in cols {
            v[c] = 1.0;
        }
        InstanceDetection::new(class, score, SoftMask::from_dense(1, 8, &v).unwrap()).unwrap()
    }

    fn set(d: Vec<InstanceDetection>) -> InstanceSet {
        InstanceSet::new(1, 8, d).unwrap()
    }

    /// Hand-enumerated all-point AP of a ranked hit list.
    fn oracle_ap(ranked_hits: &[bool], gt: usize) -> f64 {
        // Precision at each recall level is the best precision at any rank
        // reaching at least that recall.
        let mut points = Vec::new();
        let mut tp = 0;
        for (k, &h) in ranked_hits.iter().enumerate() {
            tp += h as usize;
            points.push((tp as f64 / gt as f64, tp as f64 / (k + 1) as f64));
        }
        let mut area = 0.0;
        for step in 1..=gt {
            let r = step as f64 / gt as f64;
            let p = points.iter().filter(|(rr, _)| *rr >= r - 1e-12).map(|p| p.1).fold(0.0, f64::max);
            area += p / gt as f64;
        }
        area
    }

    #[test]
    fn tp_fp_tp_fixture() {
        let gt = set(vec![det(CAT, 1.0, &[0, 1]), det(CAT, 1.0, &[4, 5])]);
        let pred = set(vec![det(CAT, 0.9, &[0, 1]), det(CAT, 0.8, &[7]), det(CAT, 0.7, &[4, 5])]);
        let r = map50(&pred, &gt, &tax(), 0.5).unwrap();
        let expected = oracle_ap(&[true, false, true], 2);
        assert!((expected - 5.0 / 6.0).abs() < 1e-12);
        assert!((r.map - 5.0 / 6.0).abs() < 1e-12);
    }

    #[test]
    fn exact_predictions_score_one() {
        let gt = set(vec![det(CAT, 1.0, &[0, 1]), det(DOG, 1.0, &[3, 4, 5])]);
        let pred = set(vec![det(DOG, 0.2, &[3, 4, 5]), det(CAT, 0.1, &[0, 1])]);
        assert_eq!(map50(&pred, &gt, &tax(), 0.5).unwrap().map, 1.0);
    }

    #[test]
    fn no_predictions_scores_zero() {
        let gt = set(vec![det(CAT, 1.0, &[0, 1])]);
        assert_eq!(map50(&set(vec![]), &gt, &tax(), 0.5).unwrap().map, 0.0);
    }

    #[test]
    fn iou_at_half_is_a_hit() {
        let gt = set(vec![det(CAT, 1.0, &[0, 1])]);
        let pred = set(vec![det(CAT, 0.5, &[1])]);
        assert_eq!(map50(&pred, &gt, &tax(), 0.5).unwrap().map, 1.0);
    }

    #[test]
    fn classes_without_gt_do_not_count() {
        let gt = set(vec![det(CAT, 1.0, &[0, 1])]);
        let pred = set(vec![det(CAT, 0.9, &[0, 1]), det(DOG, 0.95, &[5])]);
        let r = map50(&pred, &gt, &tax(), 0.5).unwrap();
        assert_eq!(r.per_class.len(), 1);
        assert_eq!(r.map, 1.0);
    }

    #[test]
    fn mask_iou_respects_thresholds() {
        let a = SoftMask::from_dense(1, 4, &[0.9, 0.4, 0.6, 0.0]).unwrap();
        let b = SoftMask::from_dense(1, 4, &[1.0, 1.0, 1.0, 0.0]).unwrap();
        assert!((mask_iou(&a, 0.5, &b, 0.5) - 2.0 / 3.0).abs() < 1e-15);
        assert_eq!(mask_iou(&a, 0.3, &b, 0.5), 1.0);
    }

    #[test]
    fn panoptic_things_become_binary_detections() {
        let t = tax();
        let s = SegmentKey::stuff(ClassId(1));
        let a = SegmentKey::new(CAT, 1);
        let b = SegmentKey::new(DOG, 2);
        let pixels = vec![a, a, s, b, s, a, s, b];
        let p = PanopticMap::new(2, 4, pixels, &t).unwrap();
        let set = things_as_instances(&p, &t).unwrap();
        assert_eq!(set.len(), 2);
        let cat = &set.detections()[0];
        assert_eq!((cat.class_id, cat.score), (CAT, 1.0));
        assert_eq!(cat.mask.to_dense(), vec![1.0, 1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0]);
        assert_eq!(set.detections()[1].mask.count_at_least(0.5), 2);
        assert_eq!(map50(&set, &set, &t, 0.5).unwrap().map, 1.0);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn monotone_score_transform_keeps_map(
                gts in prop::collection::vec((prop::bool::ANY, 0usize..8, 1usize..4), 1..4),
                preds in prop::collection::vec((prop::bool::ANY, 0usize..8, 1usize..4, 0.0f64..1.0), 0..6),
            ) {
                let mk = |car: bool, start: usize, len: usize, score: f64| {
                    let cols: Vec<usize> = (start..(start + len).min(8)).collect();
                    det(if car { CAT } else { DOG }, score, &cols)
                };
                let gt = set(gts.iter().map(|&(c, s, l)| mk(c, s, l, 1.0)).collect());
                let p1 = set(preds.iter().map(|&(c, s, l, sc)| mk(c, s, l, sc)).collect());
                let p2 = set(preds.iter().map(|&(c, s, l, sc)| mk(c, s, l, sc * sc * 0.5)).collect());
                let a = map50(&p1, &gt, &tax(), 0.5).unwrap();
                let b = map50(&p2, &gt, &tax(), 0.5).unwrap();
                prop_assert_eq!(a, b);
            }
        }
    }
}
