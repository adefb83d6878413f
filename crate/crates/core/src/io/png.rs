//! PNG-backed maps: panoptic segment-id images and 16-bit label maps.
//!
//! A panoptic PNG is 8-bit RGB with `segment_id = R + 256·G + 65536·B` and
//! id 0 reserved for void. Its JSON sidecar lists every segment once:
//!
//! ```json
//! {"segments_info": [{"area": 12, "class_id": 1, "id": 1, "instance_id": 0}]}
//! ```
//!
//! Segment ids are assigned in first-pixel raster order starting at 1, which
//! makes the encoding canonical. Readers also accept `category_id` for
//! `class_id`, tolerate extra fields such as `iscrowd`, and derive instance
//! ids when `instance_id` is absent.

use std::collections::HashMap;
use std::io::Cursor;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::types::{extract_segments, ClassId, ClassKind, ClassTaxonomy, PanopticMap, SegmentKey, SemanticLabelMap};

pub const MAX_SEGMENT_ID: u32 = (1 << 24) - 1;

pub fn segment_id_to_rgb(id: u32) -> [u8; 3] {
    [(id & 0xff) as u8, ((id >> 8) & 0xff) as u8, ((id >> 16) & 0xff) as u8]
}

pub fn rgb_to_segment_id(rgb: [u8; 3]) -> u32 {
    rgb[0] as u32 + 256 * rgb[1] as u32 + 65536 * rgb[2] as u32
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SegmentRecord {
    pub id: u32,
    #[serde(alias = "category_id")]
    pub class_id: ClassId,
    pub area: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub instance_id: Option<u32>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PanopticSidecar {
    pub segments_info: Vec<SegmentRecord>,
}

/// In-memory form of a panoptic PNG and its sidecar.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PanopticEncoding {
    pub png: Vec<u8>,
    pub sidecar: Vec<u8>,
}

fn png_error(path: &Path, e: impl std::fmt::Display) -> Error {
    Error::Png { path: path.to_path_buf(), reason: e.to_string() }
}

fn encode_png(
    path: &Path,
    width: usize,
    height: usize,
    color: png::ColorType,
    depth: png::BitDepth,
    data: &[u8],
) -> Result<Vec<u8>> {
    if width == 0 || height == 0 || width > u32::MAX as usize || height > u32::MAX as usize {
        return Err(png_error(path, format!("cannot encode a {height}x{width} image")));
    }
    let mut out = Vec::new();
    let mut enc = png::Encoder::new(&mut out, width as u32, height as u32);
    enc.set_color(color);
    enc.set_depth(depth);
    enc.set_compression(png::Compression::Balanced);
    enc.set_filter(png::Filter::Adaptive);
    let mut writer = enc.write_header().map_err(|e| png_error(path, e))?;
    writer.write_image_data(data).map_err(|e| png_error(path, e))?;
    writer.finish().map_err(|e| png_error(path, e))?;
    Ok(out)
}

fn decode_png(
    path: &Path,
    bytes: &[u8],
    color: png::ColorType,
    depth: png::BitDepth,
) -> Result<(usize, usize, Vec<u8>)> {
    let decoder = png::Decoder::new_with_limits(Cursor::new(bytes), png::Limits { bytes: 1 << 32 });
    let mut reader = decoder.read_info().map_err(|e| png_error(path, e))?;
    let size = reader.output_buffer_size().ok_or_else(|| png_error(path, "image too large"))?;
    let mut buf = vec![0u8; size];
    let info = reader.next_frame(&mut buf).map_err(|e| png_error(path, e))?;
    if info.color_type != color || info.bit_depth != depth {
        return Err(png_error(
            path,
            format!("expected {color:?} at {depth:?}, found {:?} at {:?}", info.color_type, info.bit_depth),
        ));
    }
    buf.truncate(info.buffer_size());
    Ok((info.height as usize, info.width as usize, buf))
}

/// Encodes a panoptic map into PNG bytes plus sidecar JSON bytes.
pub fn encode_panoptic(p: &PanopticMap) -> Result<PanopticEncoding> {
    let segments = extract_segments(p);
    if segments.len() > MAX_SEGMENT_ID as usize {
        return Err(Error::IdOverflow(segments.len()));
    }
    let ids: HashMap<SegmentKey, u32> = segments.iter().enumerate().map(|(i, s)| (s.key, i as u32 + 1)).collect();
    let mut rgb = Vec::with_capacity(p.pixels().len() * 3);
    let mut last = (SegmentKey::VOID, 0u32);
    for &key in p.pixels() {
        let id = if key.is_void() {
            0
        } else if key == last.0 {
            last.1
        } else {
            let id = ids[&key];
            last = (key, id);
            id
        };
        rgb.extend_from_slice(&segment_id_to_rgb(id));
    }
    let png =
        encode_png(Path::new("<panoptic>"), p.width(), p.height(), png::ColorType::Rgb, png::BitDepth::Eight, &rgb)?;
    let sidecar = PanopticSidecar {
        segments_info: segments
            .iter()
            .enumerate()
            .map(|(i, s)| SegmentRecord {
                id: i as u32 + 1,
                class_id: s.key.class_id,
                area: s.area,
                instance_id: Some(s.key.instance_id),
            })
            .collect(),
    };
    let sidecar = super::to_sorted_json(&sidecar)?.into_bytes();
    Ok(PanopticEncoding { png, sidecar })
}

/// Decodes a panoptic PNG and its sidecar; the paths only label errors.
pub fn decode_panoptic(
    png_path: &Path,
    png_bytes: &[u8],
    sidecar_path: &Path,
    sidecar_bytes: &[u8],
    t: &ClassTaxonomy,
) -> Result<PanopticMap> {
    let (h, w, rgb) = decode_png(png_path, png_bytes, png::ColorType::Rgb, png::BitDepth::Eight)?;
    let sidecar: PanopticSidecar = serde_json::from_slice(sidecar_bytes).map_err(|e| Error::json(sidecar_path, e))?;
    let malformed = |reason: String| Error::MalformedSidecar { path: sidecar_path.to_path_buf(), reason };

    let mut keys: HashMap<u32, (SegmentKey, u64)> = HashMap::new();
    let mut seen_keys: HashMap<SegmentKey, u32> = HashMap::new();
    let mut next_instance = 1u32;
    for rec in &sidecar.segments_info {
        if rec.id == 0 || rec.id > MAX_SEGMENT_ID {
            return Err(malformed(format!("segment id {} out of range", rec.id)));
        }
        let kind = t.require(rec.class_id, &format!("segment {} in {}", rec.id, sidecar_path.display()))?;
        let instance_id = match (rec.instance_id, kind) {
            (Some(i), _) => i,
            (None, ClassKind::Stuff) => 0,
            (None, ClassKind::Things) => {
                next_instance += 1;
                next_instance - 1
            }
        };
        let key = SegmentKey::new(rec.class_id, instance_id);
        if let Some(other) = seen_keys.insert(key, rec.id) {
            return Err(malformed(format!(
                "segments {other} and {} share class {} instance {instance_id}",
                rec.id, rec.class_id
            )));
        }
        if keys.insert(rec.id, (key, rec.area)).is_some() {
            return Err(malformed(format!("segment id {} listed twice", rec.id)));
        }
    }

    let mut counts: HashMap<u32, u64> = HashMap::new();
    let mut pixels = Vec::with_capacity(h * w);
    let mut last = (0u32, SegmentKey::VOID);
    for (i, px) in rgb.chunks_exact(3).enumerate() {
        let id = rgb_to_segment_id([px[0], px[1], px[2]]);
        if id == 0 {
            pixels.push(SegmentKey::VOID);
            continue;
        }
        let key = if id == last.0 {
            last.1
        } else {
            let key =
                keys.get(&id).ok_or_else(|| malformed(format!("segment id {id} at pixel {i} missing from sidecar")))?.0;
            last = (id, key);
            key
        };
        *counts.entry(id).or_insert(0) += 1;
        pixels.push(key);
    }
    for rec in &sidecar.segments_info {
        let found = counts.get(&rec.id).copied().unwrap_or(0);
        if found != rec.area {
            return Err(malformed(format!("segment {} declares area {} but covers {found} pixels", rec.id, rec.area)));
        }
    }
    PanopticMap::new(h, w, pixels, t)
}

pub fn sidecar_path(png_path: &Path) -> PathBuf {
    png_path.with_extension("json")
}

/// Writes `<path>` (PNG) and its `.json` sidecar.
pub fn write_panoptic(path: &Path, p: &PanopticMap) -> Result<()> {
    let enc = encode_panoptic(p)?;
    super::write_atomic(path, &enc.png)?;
    super::write_atomic(&sidecar_path(path), &enc.sidecar)
}

pub fn read_panoptic(path: &Path, t: &ClassTaxonomy) -> Result<PanopticMap> {
    let side = sidecar_path(path);
    let png_bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    let side_bytes = std::fs::read(&side).map_err(|e| Error::io(&side, e))?;
    decode_panoptic(path, &png_bytes, &side, &side_bytes, t)
}

/// 16-bit grayscale PNG of class ids.
pub fn encode_label_map(m: &SemanticLabelMap) -> Result<Vec<u8>> {
    let mut data = Vec::with_capacity(m.labels().len() * 2);
    for &l in m.labels() {
        let v = u16::try_from(l.0)
            .map_err(|_| Error::InvalidValue(format!("class id {l} does not fit a 16-bit label map")))?;
        data.extend_from_slice(&v.to_be_bytes());
    }
    encode_png(Path::new("<labels>"), m.width(), m.height(), png::ColorType::Grayscale, png::BitDepth::Sixteen, &data)
}

pub fn decode_label_map(path: &Path, bytes: &[u8], t: &ClassTaxonomy) -> Result<SemanticLabelMap> {
    let (h, w, data) = decode_png(path, bytes, png::ColorType::Grayscale, png::BitDepth::Sixteen)?;
    let labels = data.chunks_exact(2).map(|c| ClassId(u16::from_be_bytes([c[0], c[1]]) as u32)).collect();
    let m = SemanticLabelMap::new(h, w, labels)?;
    m.validate_against(t)?;
    Ok(m)
}

pub fn write_label_map(path: &Path, m: &SemanticLabelMap) -> Result<()> {
    super::write_atomic(path, &encode_label_map(m)?)
}

pub fn read_label_map(path: &Path, t: &ClassTaxonomy) -> Result<SemanticLabelMap> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_label_map(path, &bytes, t)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tax() -> ClassTaxonomy {
        ClassTaxonomy::synthetic(2, 2).unwrap()
    }

    fn decode(enc: &PanopticEncoding) -> Result<PanopticMap> {
        decode_panoptic(Path::new("p.png"), &enc.png, Path::new("p.json"), &enc.sidecar, &tax())
    }

    #[test]
    fn rgb_packing() {
        assert_eq!(segment_id_to_rgb(300), [44, 1, 0]);
        assert_eq!(rgb_to_segment_id([44, 1, 0]), 300);
        assert_eq!(rgb_to_segment_id(segment_id_to_rgb(MAX_SEGMENT_ID)), MAX_SEGMENT_ID);
    }

    #[test]
    fn all_void_map() {
        let enc = encode_panoptic(&PanopticMap::void(3, 2)).unwrap();
        let (_, _, rgb) = decode_png(Path::new("x"), &enc.png, png::ColorType::Rgb, png::BitDepth::Eight).unwrap();
        assert!(rgb.iter().all(|&b| b == 0));
        assert_eq!(String::from_utf8(enc.sidecar.clone()).unwrap(), "{\n  \"segments_info\": []\n}\n");
        assert_eq!(decode(&enc).unwrap(), PanopticMap::void(3, 2));
    }

    #[test]
    fn ids_follow_raster_order_and_round_trip() {
        let t = tax();
        let px = vec![
            SegmentKey::new(ClassId(3), 7),
            SegmentKey::stuff(ClassId(2)),
            SegmentKey::VOID,
            SegmentKey::stuff(ClassId(1)),
            SegmentKey::new(ClassId(3), 7),
            SegmentKey::new(ClassId(4), 1),
        ];
        let p = PanopticMap::new(2, 3, px, &t).unwrap();
        let enc = encode_panoptic(&p).unwrap();
        let side: PanopticSidecar = serde_json::from_slice(&enc.sidecar).unwrap();
        let ids: Vec<(u32, u32, u64)> = side.segments_info.iter().map(|r| (r.id, r.class_id.0, r.area)).collect();
        assert_eq!(ids, vec![(1, 3, 2), (2, 2, 1), (3, 1, 1), (4, 4, 1)]);
        let back = decode(&enc).unwrap();
        assert_eq!(back, p);
        assert_eq!(encode_panoptic(&back).unwrap(), enc);
    }

    #[test]
    fn sidecar_validation() {
        let t = tax();
        let p =
            PanopticMap::new(1, 2, vec![SegmentKey::stuff(ClassId(1)), SegmentKey::new(ClassId(3), 1)], &t).unwrap();
        let enc = encode_panoptic(&p).unwrap();
        let with_sidecar = |json: &str| PanopticEncoding { png: enc.png.clone(), sidecar: json.as_bytes().to_vec() };

        let missing = with_sidecar(r#"{"segments_info":[{"id":1,"class_id":1,"area":1}]}"#);
        assert!(matches!(decode(&missing), Err(Error::MalformedSidecar { .. })));
        let wrong_area =
            with_sidecar(r#"{"segments_info":[{"id":1,"class_id":1,"area":2},{"id":2,"class_id":3,"area":1}]}"#);
        assert!(matches!(decode(&wrong_area), Err(Error::MalformedSidecar { .. })));
        let unknown =
            with_sidecar(r#"{"segments_info":[{"id":1,"class_id":9,"area":1},{"id":2,"class_id":3,"area":1}]}"#);
        assert!(matches!(decode(&unknown), Err(Error::UnknownClassId { .. })));
        let dup = with_sidecar(r#"{"segments_info":[{"id":1,"class_id":1,"area":1},{"id":1,"class_id":3,"area":1}]}"#);
        assert!(matches!(decode(&dup), Err(Error::MalformedSidecar { .. })));
        // challenge-style records: category_id, iscrowd, no instance ids
        let coco = with_sidecar(
            r#"{"segments_info":[{"id":1,"category_id":1,"area":1,"iscrowd":0},{"id":2,"category_id":3,"area":1,"iscrowd":1}]}"#,
        );
        assert_eq!(decode(&coco).unwrap(), p);
    }

    #[test]
    fn label_map_round_trip() {
        let t = tax();
        let m = SemanticLabelMap::new(2, 2, vec![ClassId(0), ClassId(1), ClassId(4), ClassId(2)]).unwrap();
        let bytes = encode_label_map(&m).unwrap();
        assert_eq!(decode_label_map(Path::new("l.png"), &bytes, &t).unwrap(), m);
        let bad = SemanticLabelMap::new(1, 1, vec![ClassId(70000)]).unwrap();
        assert!(encode_label_map(&bad).is_err());
        let unknown = encode_label_map(&SemanticLabelMap::new(1, 1, vec![ClassId(9)]).unwrap()).unwrap();
        assert!(decode_label_map(Path::new("l.png"), &unknown, &t).is_err());
    }
}
