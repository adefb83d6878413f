use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// The seven terms of the joint training objective.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LossComponents {
    /// RPN objectness (softmax cross-entropy).
    pub rpn_obj: f64,
    /// RPN box regression (smooth L1).
    pub rpn_reg: f64,
    /// Detection classification (softmax cross-entropy).
    pub det_cls: f64,
    /// Detection box regression (smooth L1).
    pub det_reg: f64,
    /// Instance mask (sigmoid cross-entropy).
    pub mask: f64,
    /// Semantic segmentation (sparse softmax cross-entropy).
    pub seg: f64,
    /// L2 weight regularization.
    pub reg: f64,
}

impl LossComponents {
    pub fn splat(v: f64) -> Self {
        Self { rpn_obj: v, rpn_reg: v, det_cls: v, det_reg: v, mask: v, seg: v, reg: v }
    }

    fn terms(&self) -> [f64; 7] {
        [self.rpn_obj, self.rpn_reg, self.det_cls, self.det_reg, self.mask, self.seg, self.reg]
    }
}

/// Balancing weights, one per loss term, in the same order.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LossWeights(pub [f64; 7]);

impl Default for LossWeights {
    fn default() -> Self {
        Self([1.0, 1.0, 1.0, 0.15, 0.3, 1.0, 5.5e-5])
    }
}

/// Weighted sum of the loss terms, accumulated in term order.
pub fn weighted_total_loss(c: &LossComponents, w: &LossWeights) -> Result<f64> {
    let terms = c.terms();
    for (name, v) in [("components", &terms), ("weights", &w.0)] {
        if let Some(x) = v.iter().find(|x| !x.is_finite()) {
            return Err(Error::NonFiniteInput(format!("{name} contain {x}")));
        }
        if let Some(x) = v.iter().find(|x| **x < 0.0) {
            return Err(Error::InvalidValue(format!("{name} contain negative value {x}")));
        }
    }
    Ok(terms.iter().zip(&w.0).fold(0.0, |acc, (t, l)| acc + l * t))
}
