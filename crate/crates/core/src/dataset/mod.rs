//! Dataset input and output: COCO-style annotations, polygon rasterization,
//! mask and overlay PNGs, and a synthetic M-mode generator with analytic
//! ground truth.

mod coco;
mod manifest;
mod overlay;
mod png;
mod raster;
mod synth;

use std::path::PathBuf;

use thiserror::Error;

use crate::geometry::GeometryError;
use crate::measure::MeasureError;

pub use coco::{
    load_coco, load_coco_results, parse_coco, parse_coco_results, CocoAnnotation, CocoCategory, CocoImage,
    CocoSubset, KeyMap,
};
pub use manifest::{load_manifest, ManifestDetection, ManifestImage, MaskManifest};
pub use overlay::{render_overlay, ANCHOR_COLOR, SEGMENT_COLOR};
pub use png::{load_mask_png, mask_from_gray, mask_to_gray, save_mask_png};
pub use raster::{mask_polygons, polygon_to_mask, polygons_to_mask, Polygon};
pub use synth::{
    generate_synthetic, random_spec, write_synthetic_dataset, BandSpec, RandomSpecOptions, SyntheticSample,
    SyntheticSpec,
};

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{file}: parse error at `{json_path}`: {message}")]
    Parse {
        file: String,
        json_path: String,
        message: String,
    },
    #[error("{file}: {context}: {reason}")]
    Validation {
        file: String,
        context: String,
        reason: String,
    },
    #[error("degenerate polygon: {distinct} distinct vertices (need at least 3)")]
    DegeneratePolygon { distinct: usize },
    #[error("{path}: {message}")]
    Image { path: PathBuf, message: String },
    #[error("{path}: expected an 8-bit single-channel image, found {found}")]
    ChannelCount { path: PathBuf, found: String },
    #[error("invalid synthetic spec: {0}")]
    InvalidSpec(String),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Measure(#[from] MeasureError),
}

pub type Result<T, E = DatasetError> = std::result::Result<T, E>;

pub(crate) fn io_err(path: impl Into<PathBuf>) -> impl FnOnce(std::io::Error) -> DatasetError {
    let path = path.into();
    move |source| DatasetError::Io { path, source }
}
