//! Domain types shared by fusion, metrics, io and synth.
//!
//! Every map is stored row-major. Values are validated once at construction
//! and are immutable afterwards, so they can be shared across threads freely.

use std::collections::{BTreeMap, HashMap};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Tolerance on the per-pixel probability sum of a [`SemanticProbMap`].
pub const PROB_SUM_TOLERANCE: f64 = 1e-4;

/// Identifier of a semantic class. `ClassId::VOID` marks unlabeled pixels.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ClassId(pub u32);

impl ClassId {
    pub const VOID: ClassId = ClassId(0);

    pub fn is_void(self) -> bool {
        self == Self::VOID
    }
}

impl fmt::Debug for ClassId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "ClassId({})", self.0)
    }
}

impl fmt::Display for ClassId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ClassKind {
    Things,
    Stuff,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClassEntry {
    pub id: ClassId,
    pub name: String,
    pub kind: ClassKind,
}

/// The class universe split into things and stuff. Void is always id 0.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ClassTaxonomy {
    entries: Vec<ClassEntry>,
    index: BTreeMap<ClassId, usize>,
}

impl ClassTaxonomy {
    pub fn new(entries: Vec<ClassEntry>) -> Result<Self> {
        let mut index = BTreeMap::new();
        for (i, e) in entries.iter().enumerate() {
            if e.id.is_void() {
                return Err(Error::InvalidTaxonomy(format!("class '{}' uses the reserved void id 0", e.name)));
            }
            if index.insert(e.id, i).is_some() {
                return Err(Error::InvalidTaxonomy(format!("duplicate class id {}", e.id)));
            }
        }
        if !entries.iter().any(|e| e.kind == ClassKind::Stuff) {
            return Err(Error::InvalidTaxonomy("at least one stuff class is required".into()));
        }
        Ok(Self { entries, index })
    }

    /// `n_stuff` stuff classes with ids `1..=n_stuff`, followed by `n_things`
    /// thing classes.
    pub fn synthetic(n_stuff: usize, n_things: usize) -> Result<Self> {
        let stuff = (0..n_stuff).map(|i| ClassEntry {
            id: ClassId(i as u32 + 1),
            name: format!("stuff_{}", i + 1),
            kind: ClassKind::Stuff,
        });
        let things = (0..n_things).map(|i| ClassEntry {
            id: ClassId((n_stuff + i) as u32 + 1),
            name: format!("thing_{}", i + 1),
            kind: ClassKind::Things,
        });
        Self::new(stuff.chain(things).collect())
    }

    pub fn entries(&self) -> &[ClassEntry] {
        &self.entries
    }

    pub fn get(&self, id: ClassId) -> Option<&ClassEntry> {
        self.index.get(&id).map(|&i| &self.entries[i])
    }

    pub fn kind(&self, id: ClassId) -> Option<ClassKind> {
        self.get(id).map(|e| e.kind)
    }

    pub fn contains(&self, id: ClassId) -> bool {
        self.index.contains_key(&id)
    }

    pub fn is_stuff(&self, id: ClassId) -> bool {
        self.kind(id) == Some(ClassKind::Stuff)
    }

    pub fn is_thing(&self, id: ClassId) -> bool {
        self.kind(id) == Some(ClassKind::Things)
    }

    pub fn ids_of(&self, kind: ClassKind) -> impl Iterator<Item = ClassId> + '_ {
        self.entries.iter().filter(move |e| e.kind == kind).map(|e| e.id)
    }

    pub(crate) fn require(&self, id: ClassId, context: &str) -> Result<ClassKind> {
        self.kind(id).ok_or_else(|| Error::UnknownClassId { class_id: id, context: context.to_string() })
    }
}

fn check_len(what: &str, height: usize, width: usize, depth: usize, len: usize) -> Result<()> {
    let expected = height
        .checked_mul(width)
        .and_then(|n| n.checked_mul(depth))
        .ok_or_else(|| Error::DimensionMismatch(format!("{what}: {height}x{width}x{depth} overflows")))?;
    if expected != len {
        return Err(Error::DimensionMismatch(format!(
            "{what}: expected {expected} values for {height}x{width}x{depth}, got {len}"
        )));
    }
    Ok(())
}

/// Per-pixel class probabilities, stored H×W×C with classes innermost.
#[derive(Clone, Debug, PartialEq)]
pub struct SemanticProbMap {
    height: usize,
    width: usize,
    class_ids: Vec<ClassId>,
    probs: Vec<f32>,
}

impl SemanticProbMap {
    pub fn new(height: usize, width: usize, class_ids: Vec<ClassId>, probs: Vec<f32>) -> Result<Self> {
        if class_ids.is_empty() {
            return Err(Error::InvalidValue("probability map has no classes".into()));
        }
        let mut seen = class_ids.clone();
        seen.sort_unstable();
        if let Some(w) = seen.windows(2).find(|w| w[0] == w[1]) {
            return Err(Error::InvalidValue(format!("duplicate class id {} in probability map", w[0])));
        }
        if let Some(id) = class_ids.iter().find(|c| c.is_void()) {
            return Err(Error::UnknownClassId { class_id: *id, context: "void cannot carry probability".into() });
        }
        check_len("probability map", height, width, class_ids.len(), probs.len())?;
        if let Some(pixel) = first_invalid_prob_pixel(&probs, class_ids.len()) {
            return Err(Error::InvalidValue(format!(
                "pixel {pixel} has probabilities outside [0,1] or a sum outside 1 ± {PROB_SUM_TOLERANCE}"
            )));
        }
        Ok(Self { height, width, class_ids, probs })
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn class_ids(&self) -> &[ClassId] {
        &self.class_ids
    }

    pub fn num_classes(&self) -> usize {
        self.class_ids.len()
    }

    pub fn probs(&self) -> &[f32] {
        &self.probs
    }

    /// Probabilities of the pixel at raster index `idx`, in `class_ids` order.
    pub fn pixel(&self, idx: usize) -> &[f32] {
        let c = self.class_ids.len();
        &self.probs[idx * c..(idx + 1) * c]
    }

    pub fn validate_against(&self, taxonomy: &ClassTaxonomy) -> Result<()> {
        for &id in &self.class_ids {
            taxonomy.require(id, "probability map class list")?;
        }
        Ok(())
    }
}

/// Index of the first pixel violating the probability invariants, if any.
pub(crate) fn first_invalid_prob_pixel(probs: &[f32], num_classes: usize) -> Option<usize> {
    probs.chunks_exact(num_classes).position(|px| {
        let mut sum = 0.0f64;
        for &p in px {
            if !(0.0..=1.0).contains(&p) {
                return true;
            }
            sum += p as f64;
        }
        (sum - 1.0).abs() > PROB_SUM_TOLERANCE
    })
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SemanticLabelMap {
    height: usize,
    width: usize,
    labels: Vec<ClassId>,
}

impl SemanticLabelMap {
    pub fn new(height: usize, width: usize, labels: Vec<ClassId>) -> Result<Self> {
        check_len("label map", height, width, 1, labels.len())?;
        Ok(Self { height, width, labels })
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn labels(&self) -> &[ClassId] {
        &self.labels
    }

    pub fn label(&self, y: usize, x: usize) -> ClassId {
        self.labels[y * self.width + x]
    }

    pub fn validate_against(&self, taxonomy: &ClassTaxonomy) -> Result<()> {
        let mut checked = ClassId::VOID;
        for &l in &self.labels {
            if l != checked && !l.is_void() {
                taxonomy.require(l, "label map")?;
                checked = l;
            }
        }
        Ok(())
    }
}

/// An H×W soft mask whose values are zero outside a rectangular window.
///
/// Only the window is stored. The window is always the tight bounding box of
/// the nonzero values, so structural equality is equality of the full H×W
/// arrays.
#[derive(Clone, Debug, PartialEq)]
pub struct SoftMask {
    height: usize,
    width: usize,
    top: usize,
    left: usize,
    rows: usize,
    cols: usize,
    values: Vec<f32>,
}

impl SoftMask {
    pub fn from_dense(height: usize, width: usize, values: &[f32]) -> Result<Self> {
        check_len("soft mask", height, width, 1, values.len())?;
        Self::from_window(height, width, 0, 0, height, width, values)
    }

    /// Builds a mask from the `rows`×`cols` window at (`top`, `left`).
    pub fn from_window(
        height: usize,
        width: usize,
        top: usize,
        left: usize,
        rows: usize,
        cols: usize,
        values: &[f32],
    ) -> Result<Self> {
        if top + rows > height || left + cols > width {
            return Err(Error::DimensionMismatch(format!(
                "mask window {rows}x{cols} at ({top},{left}) exceeds {height}x{width}"
            )));
        }
        check_len("mask window", rows, cols, 1, values.len())?;
        if let Some(v) = values.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(Error::InvalidValue(format!("mask value {v} outside [0,1]")));
        }
        let (mut y0, mut y1, mut x0, mut x1) = (usize::MAX, 0, usize::MAX, 0);
        for r in 0..rows {
            let row = &values[r * cols..(r + 1) * cols];
            if let Some(first) = row.iter().position(|&v| v > 0.0) {
                let last = row.iter().rposition(|&v| v > 0.0).unwrap();
                y0 = y0.min(r);
                y1 = r + 1;
                x0 = x0.min(first);
                x1 = x1.max(last + 1);
            }
        }
        if y0 == usize::MAX {
            return Ok(Self::empty(height, width));
        }
        let (crop_rows, crop_cols) = (y1 - y0, x1 - x0);
        let mut cropped = Vec::with_capacity(crop_rows * crop_cols);
        for r in y0..y1 {
            cropped.extend_from_slice(&values[r * cols + x0..r * cols + x1]);
        }
        Ok(Self { height, width, top: top + y0, left: left + x0, rows: crop_rows, cols: crop_cols, values: cropped })
    }

    pub fn empty(height: usize, width: usize) -> Self {
        Self { height, width, top: 0, left: 0, rows: 0, cols: 0, values: Vec::new() }
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    /// `(top, left, rows, cols)` of the stored window.
    pub fn window(&self) -> (usize, usize, usize, usize) {
        (self.top, self.left, self.rows, self.cols)
    }

    pub fn window_values(&self) -> &[f32] {
        &self.values
    }

    pub fn value(&self, y: usize, x: usize) -> f32 {
        if y < self.top || x < self.left || y >= self.top + self.rows || x >= self.left + self.cols {
            return 0.0;
        }
        self.values[(y - self.top) * self.cols + (x - self.left)]
    }

    pub fn to_dense(&self) -> Vec<f32> {
        let mut out = vec![0.0; self.height * self.width];
        for r in 0..self.rows {
            let dst = (self.top + r) * self.width + self.left;
            out[dst..dst + self.cols].copy_from_slice(&self.values[r * self.cols..(r + 1) * self.cols]);
        }
        out
    }

    /// Calls `f(raster_index, value)` for every stored pixel.
    pub fn for_each_in_window(&self, mut f: impl FnMut(usize, f32)) {
        for r in 0..self.rows {
            let base = (self.top + r) * self.width + self.left;
            for (c, &v) in self.values[r * self.cols..(r + 1) * self.cols].iter().enumerate() {
                f(base + c, v);
            }
        }
    }

    /// Number of pixels with value ≥ `threshold` (threshold > 0).
    pub fn count_at_least(&self, threshold: f32) -> usize {
        self.values.iter().filter(|&&v| v >= threshold).count()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct InstanceDetection {
    pub class_id: ClassId,
    pub score: f64,
    pub mask: SoftMask,
}

impl InstanceDetection {
    pub fn new(class_id: ClassId, score: f64, mask: SoftMask) -> Result<Self> {
        if !(0.0..=1.0).contains(&score) {
            return Err(Error::InvalidValue(format!("detection score {score} outside [0,1]")));
        }
        Ok(Self { class_id, score, mask })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct InstanceSet {
    height: usize,
    width: usize,
    detections: Vec<InstanceDetection>,
}

impl InstanceSet {
    pub fn new(height: usize, width: usize, detections: Vec<InstanceDetection>) -> Result<Self> {
        for (i, d) in detections.iter().enumerate() {
            if d.mask.height() != height || d.mask.width() != width {
                return Err(Error::DimensionMismatch(format!(
                    "detection {i} mask is {}x{}, set is {height}x{width}",
                    d.mask.height(),
                    d.mask.width()
                )));
            }
        }
        Ok(Self { height, width, detections })
    }

    pub fn empty(height: usize, width: usize) -> Self {
        Self { height, width, detections: Vec::new() }
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn detections(&self) -> &[InstanceDetection] {
        &self.detections
    }

    pub fn len(&self) -> usize {
        self.detections.len()
    }

    pub fn is_empty(&self) -> bool {
        self.detections.is_empty()
    }

    pub fn validate_against(&self, taxonomy: &ClassTaxonomy) -> Result<()> {
        for d in &self.detections {
            if taxonomy.require(d.class_id, "instance detection")? != ClassKind::Things {
                return Err(Error::InvalidValue(format!("detection class {} is not a things class", d.class_id)));
            }
        }
        Ok(())
    }
}

/// `(class id, instance id)` of one panoptic pixel.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Default, Serialize, Deserialize)]
pub struct SegmentKey {
    pub class_id: ClassId,
    pub instance_id: u32,
}

impl SegmentKey {
    pub const VOID: SegmentKey = SegmentKey { class_id: ClassId::VOID, instance_id: 0 };

    pub fn new(class_id: ClassId, instance_id: u32) -> Self {
        Self { class_id, instance_id }
    }

    pub fn stuff(class_id: ClassId) -> Self {
        Self { class_id, instance_id: 0 }
    }

    pub fn is_void(&self) -> bool {
        self.class_id.is_void()
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PanopticMap {
    height: usize,
    width: usize,
    pixels: Vec<SegmentKey>,
}

impl PanopticMap {
    pub fn new(height: usize, width: usize, pixels: Vec<SegmentKey>, taxonomy: &ClassTaxonomy) -> Result<Self> {
        check_len("panoptic map", height, width, 1, pixels.len())?;
        let mut checked = None;
        for &key in &pixels {
            if checked == Some(key) {
                continue;
            }
            check_key(key, taxonomy)?;
            checked = Some(key);
        }
        Ok(Self { height, width, pixels })
    }

    /// All-void map.
    pub fn void(height: usize, width: usize) -> Self {
        Self { height, width, pixels: vec![SegmentKey::VOID; height * width] }
    }

    pub(crate) fn from_raw(height: usize, width: usize, pixels: Vec<SegmentKey>) -> Self {
        debug_assert_eq!(pixels.len(), height * width);
        Self { height, width, pixels }
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn pixels(&self) -> &[SegmentKey] {
        &self.pixels
    }

    pub fn get(&self, y: usize, x: usize) -> SegmentKey {
        self.pixels[y * self.width + x]
    }

    /// Class id of every pixel, as a semantic label map.
    pub fn to_semantic(&self) -> SemanticLabelMap {
        SemanticLabelMap {
            height: self.height,
            width: self.width,
            labels: self.pixels.iter().map(|k| k.class_id).collect(),
        }
    }

    pub fn void_count(&self) -> usize {
        self.pixels.iter().filter(|k| k.is_void()).count()
    }

    /// Returns a copy with every pixel for which `f(y, x)` holds set to void.
    pub fn with_void_where(&self, mut f: impl FnMut(usize, usize) -> bool) -> Self {
        let mut pixels = self.pixels.clone();
        for (i, px) in pixels.iter_mut().enumerate() {
            if f(i / self.width, i % self.width) {
                *px = SegmentKey::VOID;
            }
        }
        Self { height: self.height, width: self.width, pixels }
    }
}

fn check_key(key: SegmentKey, taxonomy: &ClassTaxonomy) -> Result<()> {
    if key.class_id.is_void() {
        if key.instance_id != 0 {
            return Err(Error::InvalidValue(format!("void pixel carries instance id {}", key.instance_id)));
        }
        return Ok(());
    }
    match taxonomy.require(key.class_id, "panoptic map")? {
        ClassKind::Stuff if key.instance_id != 0 => {
            Err(Error::InvalidValue(format!("stuff class {} carries instance id {}", key.class_id, key.instance_id)))
        }
        ClassKind::Things if key.instance_id == 0 => {
            Err(Error::InvalidValue(format!("things class {} carries instance id 0", key.class_id)))
        }
        _ => Ok(()),
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SegmentInfo {
    pub key: SegmentKey,
    pub area: u64,
}

/// Per-pixel argmax over the class list. Ties go to the earlier class.
pub fn argmax_semantic(m: &SemanticProbMap) -> SemanticLabelMap {
    let labels = m.probs.chunks_exact(m.num_classes()).map(|px| m.class_ids[argmax_first(px)]).collect();
    SemanticLabelMap { height: m.height, width: m.width, labels }
}

/// Index of the maximum, lowest index on ties.
pub(crate) fn argmax_first(values: &[f32]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}

/// One entry per non-void key, in first-pixel raster order.
///
/// A stuff class always forms a single segment, connected or not.
pub fn extract_segments(p: &PanopticMap) -> Vec<SegmentInfo> {
    let mut index: HashMap<SegmentKey, usize> = HashMap::new();
    let mut segments: Vec<SegmentInfo> = Vec::new();
    let mut last: Option<(SegmentKey, usize)> = None;
    for &key in &p.pixels {
        if key.is_void() {
            continue;
        }
        let slot = match last {
            Some((k, s)) if k == key => s,
            _ => {
                let s = *index.entry(key).or_insert_with(|| {
                    segments.push(SegmentInfo { key, area: 0 });
                    segments.len() - 1
                });
                last = Some((key, s));
                s
            }
        };
        segments[slot].area += 1;
    }
    segments
}

#[cfg(test)]
mod tests {
    use super::*;

    const S: ClassId = ClassId(1);
    const T: ClassId = ClassId(2);

    fn tax() -> ClassTaxonomy {
        ClassTaxonomy::new(vec![
            ClassEntry { id: S, name: "road".into(), kind: ClassKind::Stuff },
            ClassEntry { id: T, name: "car".into(), kind: ClassKind::Things },
        ])
        .unwrap()
    }

    #[test]
    fn taxonomy_rejects_void_and_duplicates() {
        let e = |id, kind| ClassEntry { id: ClassId(id), name: "x".into(), kind };
        assert!(ClassTaxonomy::new(vec![e(0, ClassKind::Stuff)]).is_err());
        assert!(ClassTaxonomy::new(vec![e(1, ClassKind::Stuff), e(1, ClassKind::Things)]).is_err());
        assert!(ClassTaxonomy::new(vec![e(1, ClassKind::Things)]).is_err());
        assert!(ClassTaxonomy::new(vec![e(3, ClassKind::Stuff), e(1, ClassKind::Things)]).is_ok());
    }

    #[test]
    fn argmax_picks_max_then_first_listed() {
        let ids = vec![ClassId(5), ClassId(6)];
        let m = SemanticProbMap::new(1, 2, ids, vec![0.6, 0.4, 0.5, 0.5]).unwrap();
        assert_eq!(argmax_semantic(&m).labels(), &[ClassId(5), ClassId(5)]);

        let third = 1.0 / 3.0;
        let uniform = SemanticProbMap::new(2, 2, vec![ClassId(9), ClassId(7), ClassId(8)], vec![third; 12]).unwrap();
        assert!(argmax_semantic(&uniform).labels().iter().all(|&l| l == ClassId(9)));
    }

    #[test]
    fn prob_map_rejects_bad_sums() {
        let ids = vec![ClassId(1), ClassId(2)];
        assert!(SemanticProbMap::new(1, 1, ids.clone(), vec![0.6, 0.6]).is_err());
        assert!(SemanticProbMap::new(1, 1, ids.clone(), vec![1.2, -0.2]).is_err());
        assert!(SemanticProbMap::new(1, 1, ids.clone(), vec![0.6]).is_err());
        assert!(SemanticProbMap::new(1, 1, vec![ClassId(1), ClassId(1)], vec![0.5, 0.5]).is_err());
        assert!(SemanticProbMap::new(1, 1, ids, vec![0.99995, 0.0]).is_ok());
    }

    #[test]
    fn extract_segments_counts() {
        assert!(extract_segments(&PanopticMap::void(3, 3)).is_empty());

        let mut px = vec![SegmentKey::stuff(S); 16];
        for (y, x) in [(1, 1), (1, 2), (2, 1), (2, 2)] {
            px[y * 4 + x] = SegmentKey::new(T, 1);
        }
        let p = PanopticMap::new(4, 4, px, &tax()).unwrap();
        let segs = extract_segments(&p);
        assert_eq!(
            segs,
            vec![
                SegmentInfo { key: SegmentKey::stuff(S), area: 12 },
                SegmentInfo { key: SegmentKey::new(T, 1), area: 4 },
            ]
        );
    }

    #[test]
    fn disconnected_stuff_is_one_segment() {
        // 3 pixels on the left, 5 on the right, separated by a void column.
        let mut px = vec![SegmentKey::VOID; 12];
        for i in [0, 4, 8, 2, 3, 6, 7, 11] {
            px[i] = SegmentKey::stuff(S);
        }
        let p = PanopticMap::new(3, 4, px, &tax()).unwrap();
        assert_eq!(extract_segments(&p), vec![SegmentInfo { key: SegmentKey::stuff(S), area: 8 }]);
    }

    #[test]
    fn panoptic_map_enforces_instance_rules() {
        let t = tax();
        assert!(PanopticMap::new(1, 1, vec![SegmentKey::new(S, 1)], &t).is_err());
        assert!(PanopticMap::new(1, 1, vec![SegmentKey::new(T, 0)], &t).is_err());
        assert!(PanopticMap::new(1, 1, vec![SegmentKey::new(ClassId(0), 3)], &t).is_err());
        assert!(PanopticMap::new(1, 1, vec![SegmentKey::new(ClassId(9), 0)], &t).is_err());
    }

    #[test]
    fn soft_mask_window_is_canonical() {
        let mut dense = vec![0.0; 20];
        dense[7] = 0.5;
        dense[13] = 1.0;
        let a = SoftMask::from_dense(4, 5, &dense).unwrap();
        assert_eq!(a.window(), (1, 2, 2, 2));
        assert_eq!(a.to_dense(), dense);
        let b = SoftMask::from_window(4, 5, 0, 0, 4, 5, &dense).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.value(1, 2), 0.5);
        assert_eq!(a.value(0, 0), 0.0);
        assert_eq!(SoftMask::from_dense(2, 2, &[0.0; 4]).unwrap(), SoftMask::empty(2, 2));
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn prob_map() -> impl Strategy<Value = SemanticProbMap> {
            (1usize..6, 1usize..6, 1usize..5).prop_flat_map(|(h, w, c)| {
                prop::collection::vec(prop::collection::vec(0u8..8, c), h * w).prop_map(move |px| {
                    let mut probs = Vec::with_capacity(h * w * c);
                    for raw in px {
                        let total: u32 = raw.iter().map(|&v| v as u32).sum::<u32>().max(1);
                        if raw.iter().all(|&v| v == 0) {
                            probs.extend((0..c).map(|i| if i == 0 { 1.0 } else { 0.0 }));
                        } else {
                            probs.extend(raw.iter().map(|&v| v as f32 / total as f32));
                        }
                    }
                    let ids = (1..=c as u32).map(ClassId).collect();
                    SemanticProbMap::new(h, w, ids, probs).unwrap()
                })
            })
        }

        proptest! {
            #[test]
            fn argmax_invariant_under_per_pixel_rescaling(m in prob_map(), scale_exp in -3i32..3) {
                // Power-of-two rescaling keeps every comparison exact.
                let scale = 2f32.powi(scale_exp);
                let scaled: Vec<f32> = m.probs().iter().map(|p| p * scale).collect();
                let base = argmax_semantic(&m);
                let rescaled = SemanticProbMap { probs: scaled, ..m.clone() };
                prop_assert_eq!(argmax_semantic(&rescaled), base);
            }

            #[test]
            fn segment_areas_cover_non_void(
                (h, w, cells) in (1usize..8, 1usize..8).prop_flat_map(|(h, w)| {
                    (Just(h), Just(w), prop::collection::vec(0u32..5, h * w))
                })
            ) {
                let t = ClassTaxonomy::synthetic(2, 2).unwrap();
                // 0 void, 1..2 stuff, 3..4 things with instance 1 or 2.
                let px: Vec<SegmentKey> = cells.iter().enumerate().map(|(i, &c)| match c {
                    0 => SegmentKey::VOID,
                    1 | 2 => SegmentKey::stuff(ClassId(c)),
                    _ => SegmentKey::new(ClassId(c), 1 + (i % 2) as u32),
                }).collect();
                let p = PanopticMap::new(h, w, px, &t).unwrap();
                let segs = extract_segments(&p);
                let total: u64 = segs.iter().map(|s| s.area).sum();
                prop_assert_eq!(total as usize, h * w - p.void_count());
                prop_assert!(segs.iter().all(|s| s.area >= 1));
            }
        }
    }
}
