//! On-disk formats.
//!
//! | value             | files                                                   |
//! |-------------------|---------------------------------------------------------|
//! | taxonomy          | JSON `{"classes": [{"id", "kind", "name"}], "void_id": 0}` |
//! | probability map   | `PFTB` tensor H×W×C + `.json` sidecar `{"class_ids": [..]}` |
//! | instance set      | `PFTB` tensor N×H×W + `.json` sidecar with `detections`  |
//! | panoptic map      | RGB PNG of segment ids + `.json` sidecar                  |
//! | label map         | 16-bit grayscale PNG of class ids                         |
//! | boxes             | JSON lines `{"gt", "image_id", "proposals"}`              |
//!
//! All JSON is written with sorted keys and a trailing newline. Every write
//! goes to a temporary file in the target directory and is renamed into place.

mod png;
mod tensor;

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metrics::BBox;
use crate::types::{
    first_invalid_prob_pixel, ClassEntry, ClassId, ClassTaxonomy, InstanceDetection, InstanceSet, SemanticProbMap,
    SoftMask,
};

pub use self::png::{
    decode_label_map, decode_panoptic, encode_label_map, encode_panoptic, read_label_map, read_panoptic,
    rgb_to_segment_id, segment_id_to_rgb, sidecar_path, write_label_map, write_panoptic, PanopticEncoding,
    PanopticSidecar, SegmentRecord, MAX_SEGMENT_ID,
};
pub use self::tensor::{decode_tensor, encode_tensor, read_tensor, write_tensor, Tensor, DTYPE_F32, MAGIC, VERSION};

/// Writes `bytes` to `path` through a temporary file and an atomic rename.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| Error::io(dir, e))?;
    tmp.write_all(bytes).map_err(|e| Error::io(path, e))?;
    tmp.persist(path).map_err(|e| Error::io(path, e.error))?;
    Ok(())
}

/// Pretty JSON with object keys sorted at every level.
pub fn to_sorted_json<T: Serialize>(value: &T) -> Result<String> {
    let v = serde_json::to_value(value).map_err(|e| Error::json("<value>", e))?;
    let mut s = serde_json::to_string_pretty(&v).map_err(|e| Error::json("<value>", e))?;
    s.push('\n');
    Ok(s)
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    write_atomic(path, to_sorted_json(value)?.as_bytes())
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_slice(&bytes).map_err(|e| Error::json(path, e))
}

#[derive(Serialize, Deserialize)]
struct TaxonomyFile {
    classes: Vec<ClassEntry>,
    #[serde(default)]
    void_id: u32,
}

pub fn write_taxonomy(path: &Path, t: &ClassTaxonomy) -> Result<()> {
    write_json(path, &TaxonomyFile { classes: t.entries().to_vec(), void_id: 0 })
}

pub fn read_taxonomy(path: &Path) -> Result<ClassTaxonomy> {
    let file: TaxonomyFile = read_json(path)?;
    if file.void_id != 0 {
        return Err(Error::InvalidFile {
            path: path.to_path_buf(),
            offset: 0,
            reason: format!("void_id must be 0, found {}", file.void_id),
        });
    }
    ClassTaxonomy::new(file.classes).map_err(|e| match e {
        Error::InvalidTaxonomy(reason) => Error::InvalidFile { path: path.to_path_buf(), offset: 0, reason },
        other => other,
    })
}

#[derive(Serialize, Deserialize)]
struct ProbsSidecar {
    class_ids: Vec<ClassId>,
}

pub fn write_semantic_probs(path: &Path, m: &SemanticProbMap) -> Result<()> {
    write_tensor(path, &[m.height(), m.width(), m.num_classes()], m.probs())?;
    write_json(&sidecar_path(path), &ProbsSidecar { class_ids: m.class_ids().to_vec() })
}

fn file_error(path: &Path, offset: usize, reason: String) -> Error {
    Error::InvalidFile { path: path.to_path_buf(), offset: offset as u64, reason }
}

/// Header size of a `PFTB` tensor of the given rank.
fn tensor_header(rank: usize) -> usize {
    8 + 4 * rank
}

pub fn read_semantic_probs(path: &Path, t: &ClassTaxonomy) -> Result<SemanticProbMap> {
    let tensor = read_tensor(path)?;
    let side: ProbsSidecar = read_json(&sidecar_path(path))?;
    if tensor.dims.len() != 3 || tensor.dims[2] != side.class_ids.len() {
        return Err(Error::DimensionMismatch(format!(
            "{}: tensor dims {:?} vs {} classes in sidecar",
            path.display(),
            tensor.dims,
            side.class_ids.len()
        )));
    }
    for &id in &side.class_ids {
        t.require(id, &format!("class list of {}", sidecar_path(path).display()))?;
    }
    let c = side.class_ids.len();
    if let Some(px) = first_invalid_prob_pixel(&tensor.data, c) {
        return Err(file_error(
            path,
            tensor_header(3) + px * c * 4,
            format!("pixel {px}: probabilities outside [0,1] or not summing to 1"),
        ));
    }
    SemanticProbMap::new(tensor.dims[0], tensor.dims[1], side.class_ids, tensor.data)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
struct DetectionRecord {
    class_id: ClassId,
    score: f64,
}

#[derive(Serialize, Deserialize)]
struct InstancesSidecar {
    height: usize,
    width: usize,
    detections: Vec<DetectionRecord>,
}

pub fn write_instances(path: &Path, s: &InstanceSet) -> Result<()> {
    let plane = s.height() * s.width();
    let mut data = Vec::with_capacity(plane * s.len());
    for d in s.detections() {
        data.extend(d.mask.to_dense());
    }
    write_tensor(path, &[s.len(), s.height(), s.width()], &data)?;
    let side = InstancesSidecar {
        height: s.height(),
        width: s.width(),
        detections: s.detections().iter().map(|d| DetectionRecord { class_id: d.class_id, score: d.score }).collect(),
    };
    write_json(&sidecar_path(path), &side)
}

pub fn read_instances(path: &Path, t: &ClassTaxonomy) -> Result<InstanceSet> {
    let tensor = read_tensor(path)?;
    let side_path = sidecar_path(path);
    let side: InstancesSidecar = read_json(&side_path)?;
    let expected = [side.detections.len(), side.height, side.width];
    if tensor.dims != expected {
        return Err(Error::DimensionMismatch(format!(
            "{}: tensor dims {:?} vs sidecar {:?}",
            path.display(),
            tensor.dims,
            expected
        )));
    }
    let plane = side.height * side.width;
    let mut detections = Vec::with_capacity(side.detections.len());
    for (i, rec) in side.detections.iter().enumerate() {
        let values = &tensor.data[i * plane..(i + 1) * plane];
        if let Some(j) = values.iter().position(|v| !(0.0..=1.0).contains(v)) {
            return Err(file_error(
                path,
                tensor_header(3) + (i * plane + j) * 4,
                format!("mask {i} value outside [0,1]"),
            ));
        }
        let mask = SoftMask::from_dense(side.height, side.width, values)?;
        let det = InstanceDetection::new(rec.class_id, rec.score, mask)
            .map_err(|e| file_error(&side_path, 0, format!("detection {i}: {e}")))?;
        detections.push(det);
    }
    let set = InstanceSet::new(side.height, side.width, detections)?;
    set.validate_against(t)?;
    Ok(set)
}

/// Ground-truth and proposal boxes of one image.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoxRecord {
    pub image_id: String,
    pub gt: Vec<BBox>,
    pub proposals: Vec<BBox>,
}

pub fn encode_boxes(records: &[BoxRecord]) -> Result<Vec<u8>> {
    let mut out = Vec::new();
    for r in records {
        let v = serde_json::to_value(r).map_err(|e| Error::json("<boxes>", e))?;
        out.extend(serde_json::to_string(&v).map_err(|e| Error::json("<boxes>", e))?.bytes());
        out.push(b'\n');
    }
    Ok(out)
}

pub fn decode_boxes(path: &Path, bytes: &[u8]) -> Result<Vec<BoxRecord>> {
    let mut out = Vec::new();
    let mut offset = 0;
    for line in bytes.split_inclusive(|&b| b == b'\n') {
        let text = line.strip_suffix(b"\n").unwrap_or(line);
        if !text.iter().all(u8::is_ascii_whitespace) {
            let rec = serde_json::from_slice(text).map_err(|e| file_error(path, offset, e.to_string()))?;
            out.push(rec);
        }
        offset += line.len();
    }
    Ok(out)
}

pub fn write_boxes(path: &Path, records: &[BoxRecord]) -> Result<()> {
    write_atomic(path, &encode_boxes(records)?)
}

pub fn read_boxes(path: &Path) -> Result<Vec<BoxRecord>> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_boxes(path, &bytes)
}

/// Serializes a metric report: UTF-8 JSON, sorted keys.
pub fn write_report<T: Serialize>(report: &T) -> Result<String> {
    to_sorted_json(report)
}
