use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DEFAULT_RECALL_IOU: f64 = 0.5;

/// Axis-aligned box in pixel coordinates, half-open `[min, max)`.
///
/// Serialized as `[x_min, y_min, x_max, y_max]`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "[f64; 4]", into = "[f64; 4]")]
pub struct BBox {
    x_min: f64,
    y_min: f64,
    x_max: f64,
    y_max: f64,
}

impl BBox {
    pub fn new(x_min: f64, y_min: f64, x_max: f64, y_max: f64) -> Result<Self> {
        if ![x_min, y_min, x_max, y_max].iter().all(|v| v.is_finite()) {
            return Err(Error::NonFiniteInput(format!("box [{x_min}, {y_min}, {x_max}, {y_max})")));
        }
        if !(x_min < x_max && y_min < y_max) {
            return Err(Error::InvalidValue(format!("empty box [{x_min}, {y_min}, {x_max}, {y_max})")));
        }
        Ok(Self { x_min, y_min, x_max, y_max })
    }

    pub fn x_min(&self) -> f64 {
        self.x_min
    }

    pub fn y_min(&self) -> f64 {
        self.y_min
    }

    pub fn x_max(&self) -> f64 {
        self.x_max
    }

    pub fn y_max(&self) -> f64 {
        self.y_max
    }

    pub fn area(&self) -> f64 {
        (self.x_max - self.x_min) * (self.y_max - self.y_min)
    }

    pub fn iou(&self, other: &BBox) -> f64 {
        let w = (self.x_max.min(other.x_max) - self.x_min.max(other.x_min)).max(0.0);
        let h = (self.y_max.min(other.y_max) - self.y_min.max(other.y_min)).max(0.0);
        let inter = w * h;
        inter / (self.area() + other.area() - inter)
    }
}

impl TryFrom<[f64; 4]> for BBox {
    type Error = Error;

    fn try_from(v: [f64; 4]) -> Result<Self> {
        BBox::new(v[0], v[1], v[2], v[3])
    }
}

impl From<BBox> for [f64; 4] {
    fn from(b: BBox) -> Self {
        [b.x_min, b.y_min, b.x_max, b.y_max]
    }
}

/// Fraction of ground-truth boxes covered by at least one proposal with
/// IoU ≥ `iou_threshold`. One proposal may cover several boxes. An empty
/// ground truth has recall 1.
pub fn box_recall(gt: &[BBox], proposals: &[BBox], iou_threshold: f64) -> f64 {
    assert!(iou_threshold > 0.0 && iou_threshold <= 1.0, "IoU threshold must lie in (0, 1]");
    if gt.is_empty() {
        return 1.0;
    }
    let covered = gt.iter().filter(|g| proposals.iter().any(|p| p.iou(g) >= iou_threshold)).count();
    covered as f64 / gt.len() as f64
}

/// Arithmetic mean of per-image recalls.
pub fn mean_recall(per_image: &[f64]) -> Result<f64> {
    if per_image.is_empty() {
        return Err(Error::EmptyInput("no per-image recall values"));
    }
    if let Some(v) = per_image.iter().find(|v| !(0.0..=1.0).contains(*v)) {
        return Err(Error::InvalidValue(format!("recall {v} outside [0,1]")));
    }
    Ok(per_image.iter().sum::<f64>() / per_image.len() as f64)
}
