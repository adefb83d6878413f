use std::collections::HashSet;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use panfuse_core::io::read_taxonomy;
use panfuse_core::ClassTaxonomy;
use serde::{Deserialize, Serialize};

/// Threshold overrides carried by a manifest. Command-line flags win over
/// these, and these win over the built-in defaults.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigOverrides {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub min_stuff_area: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mask_threshold: Option<f32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub recall_iou: Option<f64>,
}

/// Input files of one image. Paths are relative to the manifest.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ImageEntry {
    pub image_id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub probs: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub instances: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gt_panoptic: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pred_panoptic: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub boxes: Option<PathBuf>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunManifest {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub taxonomy: Option<PathBuf>,
    #[serde(default)]
    pub config: ConfigOverrides,
    #[serde(default)]
    pub images: Vec<ImageEntry>,
}

/// A manifest together with the directory its paths are relative to.
pub struct Manifest {
    pub path: PathBuf,
    pub base: PathBuf,
    pub run: RunManifest,
}

impl Manifest {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading manifest {}", path.display()))?;
        let run: RunManifest =
            serde_json::from_str(&text).with_context(|| format!("parsing manifest {}", path.display()))?;
        let mut seen = HashSet::new();
        for img in &run.images {
            if !seen.insert(img.image_id.as_str()) {
                bail!("{}: duplicate image_id {:?}", path.display(), img.image_id);
            }
        }
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Ok(Self { path: path.to_path_buf(), base, run })
    }

    pub fn resolve(&self, p: &Path) -> PathBuf {
        self.base.join(p)
    }

    pub fn taxonomy(&self) -> Result<ClassTaxonomy> {
        let rel = self
            .run
            .taxonomy
            .as_deref()
            .with_context(|| format!("{}: missing input: taxonomy", self.path.display()))?;
        let path = self.resolve(rel);
        Ok(read_taxonomy(&path)?)
    }

    /// Resolved path of an optional per-image field, or a missing-input error
    /// naming the field.
    pub fn require(&self, field: &str, value: &Option<PathBuf>) -> Result<PathBuf> {
        match value {
            Some(p) => Ok(self.resolve(p)),
            None => bail!("missing input: {field}"),
        }
    }
}
