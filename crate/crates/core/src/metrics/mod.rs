//! Evaluation metrics: panoptic quality, mean IoU, mask mAP@0.5, proposal
//! recall and the weighted training loss.

mod detection;
mod loss;
mod panoptic;
mod recall;
mod semantic;

pub use detection::{map50, mask_iou, things_as_instances, ApAccumulator, MeanAp, AP_IOU_THRESHOLD};
pub use loss::{weighted_total_loss, LossComponents, LossWeights};
pub use panoptic::{
    match_segments, panoptic_quality, segment_iou, ClassQuality, PqAccumulator, PqStats, PqTally, QualitySummary,
    SegmentMatch,
};
pub use recall::{box_recall, mean_recall, BBox, DEFAULT_RECALL_IOU};
pub use semantic::{mean_iou, MeanIou, MiouAccumulator};
