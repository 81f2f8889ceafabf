use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::measure::{BBox, ClassId, Detection, View};

use super::png::load_mask_png;
use super::{io_err, DatasetError, Result};

/// Index of per-class mask PNGs, the alternative to COCO input.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MaskManifest {
    pub images: Vec<ManifestImage>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManifestImage {
    pub image_id: String,
    pub view: View,
    pub width: usize,
    pub height: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scale_cm_per_px: Option<f64>,
    pub detections: Vec<ManifestDetection>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManifestDetection {
    pub class: ClassId,
    /// Relative to the manifest's directory.
    pub mask: PathBuf,
    /// `[x, y, w, h]`; the tight box of the mask when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bbox: Option<[f64; 4]>,
    #[serde(default = "full_score")]
    pub score: f64,
}

fn full_score() -> f64 {
    1.0
}

/// Returns the manifest and the directory its mask paths are relative to.
pub fn load_manifest(path: impl AsRef<Path>) -> Result<(MaskManifest, PathBuf)> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(io_err(path))?;
    let de = &mut serde_json::Deserializer::from_str(&text);
    let manifest: MaskManifest = serde_path_to_error::deserialize(de).map_err(|e| DatasetError::Parse {
        file: path.display().to_string(),
        json_path: e.path().to_string(),
        message: e.inner().to_string(),
    })?;
    let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
    Ok((manifest, base))
}

impl ManifestImage {
    pub fn detections(&self, base: &Path) -> Result<Vec<Detection>> {
        self.detections
            .iter()
            .map(|d| {
                let path = base.join(&d.mask);
                let mask = load_mask_png(&path)?;
                if (mask.width(), mask.height()) != (self.width, self.height) {
                    return Err(DatasetError::Validation {
                        file: path.display().to_string(),
                        context: format!("image {}", self.image_id),
                        reason: format!(
                            "mask is {}x{}, manifest says {}x{}",
                            mask.width(),
                            mask.height(),
                            self.width,
                            self.height
                        ),
                    });
                }
                let bbox = match d.bbox {
                    Some([x, y, w, h]) => BBox::new(x, y, w, h),
                    None => BBox::of_mask(&mask).unwrap_or(BBox::new(0.0, 0.0, 0.0, 0.0)),
                };
                Ok(Detection {
                    class: d.class,
                    bbox,
                    mask,
                    score: d.score,
                })
            })
            .collect()
    }
}
