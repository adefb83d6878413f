//! Panoptic quality and its segmentation/recognition factors.
//!
//! Segments are matched when they share a class and their IoU is strictly
//! above one half, which makes every match unique. Ground-truth void pixels
//! are excluded from the IoU union, and an unmatched prediction lying mostly
//! over void is ignored instead of being counted as a false positive.
//!
//! Tallies are accumulated per class and only turned into ratios at the end,
//! so multi-image accumulation is associative and order independent.

use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::types::{extract_segments, ClassId, ClassKind, ClassTaxonomy, PanopticMap, SegmentInfo, SegmentKey};

/// IoU of two pixel sets given as membership masks over the same grid.
pub fn segment_iou(a: &[bool], b: &[bool]) -> f64 {
    assert_eq!(a.len(), b.len(), "pixel sets must share one grid");
    let (mut inter, mut union) = (0u64, 0u64);
    for (&x, &y) in a.iter().zip(b) {
        inter += (x && y) as u64;
        union += (x || y) as u64;
    }
    if union == 0 {
        0.0
    } else {
        inter as f64 / union as f64
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SegmentMatch {
    pub pred: SegmentKey,
    pub gt: SegmentKey,
    pub iou: f64,
}

pub(crate) fn check_dims(pred: &PanopticMap, gt: &PanopticMap) -> Result<()> {
    if pred.height() != gt.height() || pred.width() != gt.width() {
        return Err(Error::DimensionMismatch(format!(
            "prediction {}x{} vs ground truth {}x{}",
            pred.height(),
            pred.width(),
            gt.height(),
            gt.width()
        )));
    }
    Ok(())
}

/// Segment lists of both maps plus their pairwise pixel intersections.
struct Overlaps {
    pred: Vec<SegmentInfo>,
    gt: Vec<SegmentInfo>,
    /// Pixels of each prediction segment that fall on ground-truth void.
    pred_on_void: Vec<u64>,
    intersections: HashMap<(usize, usize), u64>,
}

fn segment_indices(map: &PanopticMap, segments: &[SegmentInfo]) -> Vec<usize> {
    let index: HashMap<SegmentKey, usize> = segments.iter().enumerate().map(|(i, s)| (s.key, i)).collect();
    let mut last = (SegmentKey::VOID, usize::MAX);
    map.pixels()
        .iter()
        .map(|&k| {
            if k.is_void() {
                usize::MAX
            } else if k == last.0 {
                last.1
            } else {
                let i = index[&k];
                last = (k, i);
                i
            }
        })
        .collect()
}

impl Overlaps {
    fn compute(pred: &PanopticMap, gt: &PanopticMap) -> Self {
        let pred_segments = extract_segments(pred);
        let gt_segments = extract_segments(gt);
        let pi = segment_indices(pred, &pred_segments);
        let gi = segment_indices(gt, &gt_segments);
        let mut pred_on_void = vec![0u64; pred_segments.len()];
        let mut intersections = HashMap::new();
        for (&p, &g) in pi.iter().zip(&gi) {
            if p == usize::MAX {
                continue;
            }
            if g == usize::MAX {
                pred_on_void[p] += 1;
            } else {
                *intersections.entry((p, g)).or_insert(0u64) += 1;
            }
        }
        Self { pred: pred_segments, gt: gt_segments, pred_on_void, intersections }
    }

    /// `(intersection, union)` of a pair, with void pixels left out.
    fn counts(&self, p: usize, g: usize, inter: u64) -> (u64, u64) {
        let union = self.pred[p].area - self.pred_on_void[p] + self.gt[g].area - inter;
        (inter, union)
    }

    /// Matched `(pred, gt, iou)` index triples sorted by gt index.
    fn matches(&self) -> Vec<(usize, usize, f64)> {
        let mut pred_used = vec![false; self.pred.len()];
        let mut gt_used = vec![false; self.gt.len()];
        let mut out = Vec::new();
        for (&(p, g), &inter) in &self.intersections {
            if self.pred[p].key.class_id != self.gt[g].key.class_id {
                continue;
            }
            let (inter, union) = self.counts(p, g, inter);
            // iou > 0.5, in exact integer arithmetic
            if 2 * inter > union {
                assert!(
                    !pred_used[p] && !gt_used[g],
                    "segment matched twice at IoU > 0.5: pred {:?}, gt {:?}",
                    self.pred[p].key,
                    self.gt[g].key
                );
                pred_used[p] = true;
                gt_used[g] = true;
                out.push((p, g, inter as f64 / union as f64));
            }
        }
        out.sort_by_key(|&(_, g, _)| g);
        out
    }
}

/// Pairs of same-class segments with IoU strictly above 0.5.
pub fn match_segments(pred: &PanopticMap, gt: &PanopticMap) -> Result<Vec<SegmentMatch>> {
    check_dims(pred, gt)?;
    let ov = Overlaps::compute(pred, gt);
    Ok(ov
        .matches()
        .into_iter()
        .map(|(p, g, iou)| SegmentMatch { pred: ov.pred[p].key, gt: ov.gt[g].key, iou })
        .collect())
}

/// Raw per-class counts before ratios are taken.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct PqTally {
    pub tp: u64,
    pub fp: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
    pub iou_sum: f64,
}

impl PqTally {
    pub fn merge(&mut self, other: &PqTally) {
        self.tp += other.tp;
        self.fp += other.fp;
        self.fn_ += other.fn_;
        self.iou_sum += other.iou_sum;
    }

    pub fn is_empty(&self) -> bool {
        self.tp + self.fp + self.fn_ == 0
    }

    pub fn quality(&self) -> ClassQuality {
        let denom = self.tp as f64 + 0.5 * self.fp as f64 + 0.5 * self.fn_ as f64;
        let rq = if denom > 0.0 { self.tp as f64 / denom } else { 0.0 };
        let sq = if self.tp > 0 { self.iou_sum / self.tp as f64 } else { 0.0 };
        ClassQuality { pq: sq * rq, sq, rq, tally: *self }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassQuality {
    pub pq: f64,
    pub sq: f64,
    pub rq: f64,
    #[serde(flatten)]
    pub tally: PqTally,
}

/// Mean PQ/SQ/RQ over the `n` classes of one kind.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct QualitySummary {
    pub pq: f64,
    pub sq: f64,
    pub rq: f64,
    pub n: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PqStats {
    pub per_class: BTreeMap<ClassId, ClassQuality>,
    pub all: QualitySummary,
    pub things: QualitySummary,
    pub stuff: QualitySummary,
}

impl PqStats {
    /// Derives per-class ratios and the all/things/stuff means. Classes with
    /// no segment on either side are left out.
    pub fn from_tallies(tallies: &BTreeMap<ClassId, PqTally>, t: &ClassTaxonomy) -> Result<Self> {
        let mut per_class = BTreeMap::new();
        let mut sums: [(f64, f64, f64, usize); 2] = [(0.0, 0.0, 0.0, 0); 2];
        for (&id, tally) in tallies {
            if tally.is_empty() {
                continue;
            }
            let kind = t.require(id, "panoptic quality")?;
            let q = tally.quality();
            let slot = &mut sums[(kind == ClassKind::Stuff) as usize];
            slot.0 += q.pq;
            slot.1 += q.sq;
            slot.2 += q.rq;
            slot.3 += 1;
            per_class.insert(id, q);
        }
        let summary = |pq: f64, sq: f64, rq: f64, n: usize| {
            if n == 0 {
                QualitySummary::default()
            } else {
                let n_f = n as f64;
                QualitySummary { pq: pq / n_f, sq: sq / n_f, rq: rq / n_f, n }
            }
        };
        let [th, st] = sums;
        // Mean over all classes, summed in class-id order.
        let (mut pq, mut sq, mut rq) = (0.0, 0.0, 0.0);
        for q in per_class.values() {
            pq += q.pq;
            sq += q.sq;
            rq += q.rq;
        }
        Ok(Self {
            all: summary(pq, sq, rq, per_class.len()),
            things: summary(th.0, th.1, th.2, th.3),
            stuff: summary(st.0, st.1, st.2, st.3),
            per_class,
        })
    }
}

/// Accumulates panoptic tallies over any number of images.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct PqAccumulator {
    tallies: BTreeMap<ClassId, PqTally>,
    images: usize,
}

impl PqAccumulator {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, pred: &PanopticMap, gt: &PanopticMap) -> Result<()> {
        check_dims(pred, gt)?;
        let ov = Overlaps::compute(pred, gt);
        let matches = ov.matches();
        let mut pred_matched = vec![false; ov.pred.len()];
        let mut gt_matched = vec![false; ov.gt.len()];
        for &(p, g, iou) in &matches {
            pred_matched[p] = true;
            gt_matched[g] = true;
            let t = self.tallies.entry(ov.gt[g].key.class_id).or_default();
            t.tp += 1;
            t.iou_sum += iou;
        }
        for (g, seg) in ov.gt.iter().enumerate() {
            if !gt_matched[g] {
                self.tallies.entry(seg.key.class_id).or_default().fn_ += 1;
            }
        }
        for (p, seg) in ov.pred.iter().enumerate() {
            if pred_matched[p] {
                continue;
            }
            // more than half of the segment over void: ignored
            if 2 * ov.pred_on_void[p] > seg.area {
                continue;
            }
            self.tallies.entry(seg.key.class_id).or_default().fp += 1;
        }
        self.images += 1;
        Ok(())
    }

    pub fn merge(&mut self, other: &PqAccumulator) {
        for (&id, t) in &other.tallies {
            self.tallies.entry(id).or_default().merge(t);
        }
        self.images += other.images;
    }

    pub fn images(&self) -> usize {
        self.images
    }

    pub fn tallies(&self) -> &BTreeMap<ClassId, PqTally> {
        &self.tallies
    }

    pub fn finish(&self, t: &ClassTaxonomy) -> Result<PqStats> {
        PqStats::from_tallies(&self.tallies, t)
    }
}

/// Panoptic quality of a single prediction against its ground truth.
pub fn panoptic_quality(pred: &PanopticMap, gt: &PanopticMap, t: &ClassTaxonomy) -> Result<PqStats> {
    let mut acc = PqAccumulator::new();
    acc.add(pred, gt)?;
    acc.finish(t)
}
