//! Merging heuristics that turn a semantic probability map and a set of
//! soft instance masks into a panoptic map.
//!
//! The pipeline is
//! `stuffify -> suppress_small_stuff -> resolve_overlaps -> paste_instances`:
//! things are removed from the semantic output in favour of the best stuff
//! class, rare stuff classes are folded into frequent ones, overlapping
//! instances are split per pixel by mask probability, and finally instances
//! are painted over the stuff background.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::types::{ClassId, ClassTaxonomy, InstanceSet, PanopticMap, SegmentKey, SemanticLabelMap, SemanticProbMap};

pub const DEFAULT_MIN_STUFF_AREA: u64 = 4096;
pub const DEFAULT_MASK_THRESHOLD: f32 = 0.5;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FusionConfig {
    /// Stuff classes covering fewer pixels than this are replaced.
    pub min_stuff_area: u64,
    /// A soft mask claims a pixel when its value is at least this.
    pub mask_threshold: f32,
}

impl Default for FusionConfig {
    fn default() -> Self {
        Self { min_stuff_area: DEFAULT_MIN_STUFF_AREA, mask_threshold: DEFAULT_MASK_THRESHOLD }
    }
}

impl FusionConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.mask_threshold > 0.0 && self.mask_threshold < 1.0) {
            return Err(Error::InvalidValue(format!(
                "mask threshold {} must lie strictly inside (0, 1)",
                self.mask_threshold
            )));
        }
        Ok(())
    }
}

const UNASSIGNED: u32 = u32::MAX;

/// Owner detection of every pixel after overlap resolution.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct InstanceAssignment {
    height: usize,
    width: usize,
    owner: Vec<u32>,
}

impl InstanceAssignment {
    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    /// Detection index owning the pixel at raster index `idx`.
    pub fn get(&self, idx: usize) -> Option<usize> {
        match self.owner[idx] {
            UNASSIGNED => None,
            i => Some(i as usize),
        }
    }

    pub fn assigned_count(&self) -> usize {
        self.owner.iter().filter(|&&o| o != UNASSIGNED).count()
    }
}

/// Assigns each pixel to at most one detection.
///
/// A detection claims the pixels where its soft mask reaches the threshold.
/// Among claimants the highest mask value wins, then the higher score, then
/// the lower index.
pub fn resolve_overlaps(s: &InstanceSet, cfg: &FusionConfig) -> InstanceAssignment {
    let n = s.height() * s.width();
    let mut owner = vec![UNASSIGNED; n];
    let mut best = vec![0.0f32; n];
    let threshold = cfg.mask_threshold;
    let dets = s.detections();
    // Visiting detections in index order means an exact tie on both value and
    // score keeps the earlier (lower) index.
    for (i, det) in dets.iter().enumerate() {
        det.mask.for_each_in_window(|idx, v| {
            if v < threshold {
                return;
            }
            let current = owner[idx];
            let wins =
                current == UNASSIGNED || v > best[idx] || (v == best[idx] && det.score > dets[current as usize].score);
            if wins {
                owner[idx] = i as u32;
                best[idx] = v;
            }
        });
    }
    InstanceAssignment { height: s.height(), width: s.width(), owner }
}

fn stuff_channels(m: &SemanticProbMap, t: &ClassTaxonomy) -> Vec<usize> {
    m.class_ids().iter().enumerate().filter(|(_, &id)| t.is_stuff(id)).map(|(i, _)| i).collect()
}

/// Index into `channels` of the largest value in `px`, earliest on ties.
fn argmax_over(px: &[f32], channels: &[usize]) -> usize {
    let mut best = 0;
    let mut best_v = px[channels[0]];
    for (k, &c) in channels.iter().enumerate().skip(1) {
        if px[c] > best_v {
            best = k;
            best_v = px[c];
        }
    }
    best
}

/// Labels every pixel with its most probable stuff class.
pub fn stuffify(m: &SemanticProbMap, t: &ClassTaxonomy) -> Result<SemanticLabelMap> {
    m.validate_against(t)?;
    let channels = stuff_channels(m, t);
    if channels.is_empty() {
        return Err(Error::NoStuffClasses);
    }
    let ids = m.class_ids();
    let labels = m.probs().chunks_exact(m.num_classes()).map(|px| ids[channels[argmax_over(px, &channels)]]).collect();
    SemanticLabelMap::new(m.height(), m.width(), labels)
}

/// Replaces stuff classes whose pixel count is below `min_stuff_area`.
///
/// Eligible classes are the stuff classes whose count in `labels` reaches the
/// threshold. Each pixel carrying an ineligible label is moved to its most
/// probable eligible class. Counts come from the input only, so a single pass
/// is final. With no eligible class the map is returned unchanged.
pub fn suppress_small_stuff(
    labels: &SemanticLabelMap,
    m: &SemanticProbMap,
    t: &ClassTaxonomy,
    cfg: &FusionConfig,
) -> Result<SemanticLabelMap> {
    if labels.height() != m.height() || labels.width() != m.width() {
        return Err(Error::DimensionMismatch(format!(
            "labels {}x{} vs probabilities {}x{}",
            labels.height(),
            labels.width(),
            m.height(),
            m.width()
        )));
    }
    let ids = m.class_ids();
    let channels = stuff_channels(m, t);
    let mut counts = vec![0u64; ids.len()];
    // Channel lookup per pixel through a small cache; labels are runs.
    let mut last: Option<(ClassId, usize)> = None;
    let mut label_channel = Vec::with_capacity(labels.labels().len());
    for &l in labels.labels() {
        let c = match last {
            Some((id, c)) if id == l => c,
            _ => {
                let c = ids.iter().position(|&id| id == l).ok_or_else(|| Error::UnknownClassId {
                    class_id: l,
                    context: "label missing from the probability map".into(),
                })?;
                if !channels.contains(&c) {
                    return Err(Error::InvalidValue(format!("label {l} is not a stuff class")));
                }
                last = Some((l, c));
                c
            }
        };
        counts[c] += 1;
        label_channel.push(c);
    }

    let eligible: Vec<usize> = channels.iter().copied().filter(|&c| counts[c] >= cfg.min_stuff_area).collect();
    let mut is_eligible = vec![false; ids.len()];
    for &c in &eligible {
        is_eligible[c] = true;
    }
    if eligible.is_empty() || channels.iter().all(|&c| is_eligible[c] || counts[c] == 0) {
        return Ok(labels.clone());
    }

    let out = label_channel
        .iter()
        .enumerate()
        .map(|(idx, &c)| if is_eligible[c] { ids[c] } else { ids[eligible[argmax_over(m.pixel(idx), &eligible)]] })
        .collect();
    SemanticLabelMap::new(labels.height(), labels.width(), out)
}

/// Paints assigned instances over the stuff background.
///
/// Detections are ranked by descending score (ties by index) and receive
/// instance ids `1..` in that order. Detections owning no pixel get no id.
pub fn paste_instances(stuff: &SemanticLabelMap, a: &InstanceAssignment, s: &InstanceSet) -> Result<PanopticMap> {
    let (h, w) = (stuff.height(), stuff.width());
    if a.height != h || a.width != w || s.height() != h || s.width() != w {
        return Err(Error::DimensionMismatch(format!(
            "stuff {h}x{w}, assignment {}x{}, instances {}x{}",
            a.height,
            a.width,
            s.height(),
            s.width()
        )));
    }
    let dets = s.detections();
    let mut owned = vec![0u64; dets.len()];
    for &o in &a.owner {
        if o != UNASSIGNED {
            owned[o as usize] += 1;
        }
    }
    let ids = instance_ids(s, &owned);
    let pixels = stuff
        .labels()
        .iter()
        .zip(&a.owner)
        .map(|(&label, &o)| {
            if o == UNASSIGNED {
                SegmentKey::stuff(label)
            } else {
                SegmentKey::new(dets[o as usize].class_id, ids[o as usize])
            }
        })
        .collect();
    Ok(PanopticMap::from_raw(h, w, pixels))
}

/// Instance id per detection (0 for detections owning no pixels).
fn instance_ids(s: &InstanceSet, owned: &[u64]) -> Vec<u32> {
    let dets = s.detections();
    let mut order: Vec<usize> = (0..dets.len()).collect();
    order.sort_by(|&i, &j| dets[j].score.total_cmp(&dets[i].score).then(i.cmp(&j)));
    let mut ids = vec![0u32; dets.len()];
    let mut next = 1u32;
    for i in order {
        if owned[i] > 0 {
            ids[i] = next;
            next += 1;
        }
    }
    ids
}

/// Full merge of semantic and instance outputs into a panoptic map.
pub fn fuse(m: &SemanticProbMap, s: &InstanceSet, t: &ClassTaxonomy, cfg: &FusionConfig) -> Result<PanopticMap> {
    cfg.validate()?;
    if m.height() != s.height() || m.width() != s.width() {
        return Err(Error::DimensionMismatch(format!(
            "probabilities {}x{} vs instances {}x{}",
            m.height(),
            m.width(),
            s.height(),
            s.width()
        )));
    }
    s.validate_against(t)?;
    let stuff = stuffify(m, t)?;
    let stuff = suppress_small_stuff(&stuff, m, t, cfg)?;
    let assignment = resolve_overlaps(s, cfg);
    paste_instances(&stuff, &assignment, s)
}
