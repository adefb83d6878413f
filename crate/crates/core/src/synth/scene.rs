use serde::{Deserialize, Serialize};

use super::rng::{mix64, SplitMix64};
use crate::error::{Error, Result};
use crate::fusion::DEFAULT_MIN_STUFF_AREA;
use crate::io::MAX_SEGMENT_ID;
use crate::metrics::BBox;
use crate::types::{
    ClassId, ClassKind, ClassTaxonomy, InstanceDetection, InstanceSet, PanopticMap, SegmentKey, SemanticProbMap,
    SoftMask,
};

/// Smoothing mass spread over the non-target classes of each pixel.
pub const PROB_SMOOTHING: f64 = 1e-6;

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Perturbation {
    /// Maximum shift, in pixels, applied to masks and proposal box edges.
    pub mask_jitter: u32,
    /// Scales the random reduction of detection scores and mask values.
    pub score_noise: f64,
    /// Probability that a ground-truth instance is not detected.
    pub drop_probability: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SceneSpec {
    pub seed: u64,
    pub height: usize,
    pub width: usize,
    pub n_stuff_classes: usize,
    pub n_instances: usize,
    pub perturbation: Perturbation,
}

impl SceneSpec {
    pub fn new(seed: u64, height: usize, width: usize, n_stuff_classes: usize, n_instances: usize) -> Self {
        Self { seed, height, width, n_stuff_classes, n_instances, perturbation: Perturbation::default() }
    }

    pub fn with_perturbation(mut self, p: Perturbation) -> Self {
        self.perturbation = p;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.height == 0 || self.width == 0 {
            return Err(Error::InvalidValue(format!("scene size {}x{}", self.height, self.width)));
        }
        if self.n_stuff_classes == 0 {
            return Err(Error::InvalidValue("a scene needs at least one stuff class".into()));
        }
        let p = &self.perturbation;
        if !(p.score_noise.is_finite() && p.score_noise >= 0.0) {
            return Err(Error::InvalidValue(format!("score noise {}", p.score_noise)));
        }
        if !(0.0..=1.0).contains(&p.drop_probability) {
            return Err(Error::InvalidValue(format!("drop probability {}", p.drop_probability)));
        }
        Ok(())
    }
}

/// A synthetic image: ground truth plus simulated network outputs.
#[derive(Clone, Debug, PartialEq)]
pub struct Scene {
    pub gt: PanopticMap,
    pub probs: SemanticProbMap,
    pub instances: InstanceSet,
    pub gt_boxes: Vec<BBox>,
    pub proposal_boxes: Vec<BBox>,
}

#[derive(Clone, Copy, Debug)]
enum Shape {
    Rect,
    Ellipse,
}

/// Everything drawn for one instance. All fields are drawn whether or not
/// they end up used, so the stream for a seed is independent of the
/// perturbation settings.
#[derive(Clone, Copy, Debug)]
struct InstanceDraw {
    shape: Shape,
    class: usize,
    top: usize,
    left: usize,
    rows: usize,
    cols: usize,
    drop_u: f64,
    score_u: f64,
    shift: (i64, i64),
    box_jitter: [i64; 4],
    noise_key: u64,
}

impl InstanceDraw {
    fn covers(&self, y: usize, x: usize) -> bool {
        if y < self.top || x < self.left || y >= self.top + self.rows || x >= self.left + self.cols {
            return false;
        }
        match self.shape {
            Shape::Rect => true,
            Shape::Ellipse => {
                // Pixel centers inside the inscribed ellipse.
                let cy = (y - self.top) as f64 + 0.5 - self.rows as f64 / 2.0;
                let cx = (x - self.left) as f64 + 0.5 - self.cols as f64 / 2.0;
                let (ry, rx) = (self.rows as f64 / 2.0, self.cols as f64 / 2.0);
                (cy / ry).powi(2) + (cx / rx).powi(2) <= 1.0
            }
        }
    }
}

/// Row heights of the stuff bands.
///
/// When the image is large enough every band reaches the default minimum
/// stuff area; otherwise, when possible, every band stays below it. Either
/// way the default small-stuff suppression leaves the bands untouched.
fn band_heights(rng: &mut SplitMix64, height: usize, width: usize, n: usize) -> Vec<usize> {
    let min_area = DEFAULT_MIN_STUFF_AREA as usize;
    let rows_for_min = min_area.div_ceil(width);
    let max_small_rows = (min_area - 1) / width;
    let (lo, hi) = if n * rows_for_min <= height {
        (rows_for_min, usize::MAX)
    } else if max_small_rows >= 1 && n * max_small_rows >= height {
        (1, max_small_rows)
    } else {
        (height / n, usize::MAX)
    };
    let mut heights = vec![lo; n];
    let mut remaining = height - lo * n;
    while remaining > 0 {
        let open: Vec<usize> = (0..n).filter(|&k| heights[k] < hi).collect();
        heights[open[rng.below(open.len())]] += 1;
        remaining -= 1;
    }
    heights
}

fn draw_instance(rng: &mut SplitMix64, h: usize, w: usize, n_things: usize, jitter: i64) -> InstanceDraw {
    let shape = if rng.next_u64() & 1 == 0 { Shape::Rect } else { Shape::Ellipse };
    let class = rng.below(n_things.max(1));
    let size = |rng: &mut SplitMix64, extent: usize| {
        let lo = (extent / 16).max(1);
        let hi = (extent / 4).max(lo);
        rng.range_inclusive(lo as i64, hi as i64) as usize
    };
    let rows = size(rng, h);
    let cols = size(rng, w);
    let top = rng.below(h - rows + 1);
    let left = rng.below(w - cols + 1);
    let drop_u = rng.next_f64();
    let score_u = rng.next_f64();
    let shift = (rng.range_inclusive(-jitter, jitter), rng.range_inclusive(-jitter, jitter));
    let mut box_jitter = [0i64; 4];
    for j in &mut box_jitter {
        *j = rng.range_inclusive(-jitter, jitter);
    }
    let noise_key = rng.next_u64();
    InstanceDraw { shape, class, top, left, rows, cols, drop_u, score_u, shift, box_jitter, noise_key }
}

/// Tight bounding box of a set of raster indices.
fn tight_box(pixels: &[usize], width: usize) -> BBox {
    let (mut y0, mut y1, mut x0, mut x1) = (usize::MAX, 0, usize::MAX, 0);
    for &i in pixels {
        let (y, x) = (i / width, i % width);
        y0 = y0.min(y);
        y1 = y1.max(y + 1);
        x0 = x0.min(x);
        x1 = x1.max(x + 1);
    }
    BBox::new(x0 as f64, y0 as f64, x1 as f64, y1 as f64).expect("non-empty pixel set")
}

/// Generates a deterministic scene for `spec` over the classes of `t`.
///
/// Stuff forms horizontal bands; things are rectangles and ellipses painted
/// in order, later ones occluding earlier ones. Without perturbation the
/// instance masks are exactly the visible thing segments with score 1 and
/// the proposals are the ground-truth boxes.
pub fn generate_scene(spec: &SceneSpec, t: &ClassTaxonomy) -> Result<Scene> {
    spec.validate()?;
    let (h, w) = (spec.height, spec.width);
    let stuff: Vec<ClassId> = t.ids_of(ClassKind::Stuff).take(spec.n_stuff_classes).collect();
    let things: Vec<ClassId> = t.ids_of(ClassKind::Things).collect();
    if stuff.len() < spec.n_stuff_classes {
        return Err(Error::SpecTooLarge(format!(
            "{} stuff classes requested, taxonomy has {}",
            spec.n_stuff_classes,
            stuff.len()
        )));
    }
    if spec.n_stuff_classes > h {
        return Err(Error::SpecTooLarge(format!("{} stuff bands do not fit {h} rows", spec.n_stuff_classes)));
    }
    if spec.n_instances > 0 && things.is_empty() {
        return Err(Error::SpecTooLarge("instances requested but the taxonomy has no things classes".into()));
    }
    if spec.n_instances + spec.n_stuff_classes > MAX_SEGMENT_ID as usize {
        return Err(Error::SpecTooLarge(format!("{} instances exceed the segment id space", spec.n_instances)));
    }
    let pert = spec.perturbation;
    let jitter = pert.mask_jitter as i64;
    let mut rng = SplitMix64::new(spec.seed);

    // Stuff bands, classes in a random order.
    let heights = band_heights(&mut rng, h, w, stuff.len());
    let mut order: Vec<usize> = (0..stuff.len()).collect();
    for i in (1..order.len()).rev() {
        order.swap(i, rng.below(i + 1));
    }
    let mut row_stuff = Vec::with_capacity(h);
    for (band, &rows) in heights.iter().enumerate() {
        row_stuff.extend(std::iter::repeat(stuff[order[band]]).take(rows));
    }

    // Instances painted in order; `owner` holds the last painter.
    let draws: Vec<InstanceDraw> =
        (0..spec.n_instances).map(|_| draw_instance(&mut rng, h, w, things.len(), jitter)).collect();
    let mut owner = vec![u32::MAX; h * w];
    for (k, d) in draws.iter().enumerate() {
        for y in d.top..d.top + d.rows {
            for x in d.left..d.left + d.cols {
                if d.covers(y, x) {
                    owner[y * w + x] = k as u32;
                }
            }
        }
    }
    let mut visible: Vec<Vec<usize>> = vec![Vec::new(); draws.len()];
    for (i, &o) in owner.iter().enumerate() {
        if o != u32::MAX {
            visible[o as usize].push(i);
        }
    }
    // Fully occluded instances vanish; the rest get ids in paint order.
    let kept: Vec<usize> = (0..draws.len()).filter(|&k| !visible[k].is_empty()).collect();
    let mut instance_id = vec![0u32; draws.len()];
    for (n, &k) in kept.iter().enumerate() {
        instance_id[k] = n as u32 + 1;
    }

    let pixels: Vec<SegmentKey> = owner
        .iter()
        .enumerate()
        .map(|(i, &o)| match o {
            u32::MAX => SegmentKey::stuff(row_stuff[i / w]),
            k => SegmentKey::new(things[draws[k as usize].class], instance_id[k as usize]),
        })
        .collect();
    let gt = PanopticMap::new(h, w, pixels, t)?;

    let probs = semantic_probs(h, w, &stuff, &things, &row_stuff, &owner, &draws)?;

    let mut detections = Vec::new();
    let mut gt_boxes = Vec::with_capacity(kept.len());
    let mut proposal_boxes = Vec::new();
    for &k in &kept {
        let d = &draws[k];
        let gt_box = tight_box(&visible[k], w);
        gt_boxes.push(gt_box);
        if d.drop_u < pert.drop_probability {
            continue;
        }
        let score = (1.0 - pert.score_noise * d.score_u).clamp(0.0, 1.0);
        let mask = shifted_mask(h, w, &visible[k], d, pert.score_noise, &gt_box)?;
        detections.push(InstanceDetection::new(things[d.class], score, mask)?);
        proposal_boxes.push(jittered_box(&gt_box, d.box_jitter, h, w));
    }
    let instances = InstanceSet::new(h, w, detections)?;
    Ok(Scene { gt, probs, instances, gt_boxes, proposal_boxes })
}

/// Smoothed one-hot probabilities. Stuff pixels put `1 − ε` on their band's
/// class; thing pixels put `1 − ε` on the thing class and `ε/2` on the band
/// beneath, so the best stuff class is still the band.
fn semantic_probs(
    h: usize,
    w: usize,
    stuff: &[ClassId],
    things: &[ClassId],
    row_stuff: &[ClassId],
    owner: &[u32],
    draws: &[InstanceDraw],
) -> Result<SemanticProbMap> {
    let class_ids: Vec<ClassId> = stuff.iter().chain(things).copied().collect();
    let c = class_ids.len();
    let eps = PROB_SMOOTHING;
    let stuff_index = |id: ClassId| stuff.iter().position(|&s| s == id).unwrap();

    // Per-pixel vectors repeat, so build each distinct one once.
    let background = |target: usize| -> Vec<f32> {
        if c == 1 {
            return vec![1.0];
        }
        let rest = (eps / (c - 1) as f64) as f32;
        let mut v = vec![rest; c];
        v[target] = (1.0 - eps) as f32;
        v
    };
    let over_thing = |thing: usize, band: usize| -> Vec<f32> {
        let mut v = vec![0.0f32; c];
        if c == 2 {
            v[band] = eps as f32;
        } else {
            let rest = (eps / 2.0 / (c - 2) as f64) as f32;
            v.iter_mut().for_each(|x| *x = rest);
            v[band] = (eps / 2.0) as f32;
        }
        v[thing] = (1.0 - eps) as f32;
        v
    };
    let stuff_vecs: Vec<Vec<f32>> = (0..stuff.len()).map(background).collect();
    let mut thing_vecs: std::collections::HashMap<(usize, usize), Vec<f32>> = std::collections::HashMap::new();

    let mut probs = Vec::with_capacity(h * w * c);
    for (i, &o) in owner.iter().enumerate() {
        let band = stuff_index(row_stuff[i / w]);
        if o == u32::MAX {
            probs.extend_from_slice(&stuff_vecs[band]);
        } else {
            let thing = stuff.len() + draws[o as usize].class;
            let v = thing_vecs.entry((thing, band)).or_insert_with(|| over_thing(thing, band));
            probs.extend_from_slice(v);
        }
    }
    SemanticProbMap::new(h, w, class_ids, probs)
}

/// The visible segment shifted by the instance's jitter, with values lowered
/// by per-pixel noise.
fn shifted_mask(
    h: usize,
    w: usize,
    visible: &[usize],
    d: &InstanceDraw,
    noise: f64,
    gt_box: &BBox,
) -> Result<SoftMask> {
    let (dy, dx) = d.shift;
    let clip = |v: i64, hi: usize| v.clamp(0, hi as i64) as usize;
    let top = clip(gt_box.y_min() as i64 + dy, h);
    let bottom = clip(gt_box.y_max() as i64 + dy, h);
    let left = clip(gt_box.x_min() as i64 + dx, w);
    let right = clip(gt_box.x_max() as i64 + dx, w);
    if top >= bottom || left >= right {
        return Ok(SoftMask::empty(h, w));
    }
    let (rows, cols) = (bottom - top, right - left);
    let mut values = vec![0.0f32; rows * cols];
    for &i in visible {
        let y = (i / w) as i64 + dy;
        let x = (i % w) as i64 + dx;
        if y < top as i64 || y >= bottom as i64 || x < left as i64 || x >= right as i64 {
            continue;
        }
        let v = if noise == 0.0 {
            1.0
        } else {
            let u = (mix64(d.noise_key ^ (i as u64)) >> 11) as f64 / (1u64 << 53) as f64;
            (1.0 - noise * u).clamp(0.0, 1.0)
        };
        values[(y as usize - top) * cols + (x as usize - left)] = v as f32;
    }
    SoftMask::from_window(h, w, top, left, rows, cols, &values)
}

fn jittered_box(b: &BBox, jitter: [i64; 4], h: usize, w: usize) -> BBox {
    let x0 = (b.x_min() + jitter[0] as f64).clamp(0.0, w as f64);
    let y0 = (b.y_min() + jitter[1] as f64).clamp(0.0, h as f64);
    let x1 = (b.x_max() + jitter[2] as f64).clamp(0.0, w as f64);
    let y1 = (b.y_max() + jitter[3] as f64).clamp(0.0, h as f64);
    BBox::new(x0, y0, x1, y1).unwrap_or(*b)
}
