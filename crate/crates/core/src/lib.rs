//! Panoptic fusion of semantic and instance predictions, with the metrics,
//! file formats and synthetic data needed to evaluate it.

pub mod error;
pub mod fusion;
pub mod io;
pub mod metrics;
pub mod synth;
pub mod types;

pub use error::{Error, Result};
pub use fusion::{fuse, FusionConfig};
pub use types::{
    argmax_semantic, extract_segments, ClassEntry, ClassId, ClassKind, ClassTaxonomy, InstanceDetection, InstanceSet,
    PanopticMap, SegmentInfo, SegmentKey, SemanticLabelMap, SemanticProbMap, SoftMask,
};
