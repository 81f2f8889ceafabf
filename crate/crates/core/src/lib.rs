//! Panel attention kernels and automatic measurement of M-mode
//! echocardiogram masks.

pub mod attention;
pub mod dataset;
pub mod eval;
pub mod geometry;
pub mod measure;
pub mod tensor;

pub use dataset::DatasetError;
pub use geometry::{BinaryMask, Contour, ConvexityDefect, GeometryError, PixelCoord};
pub use measure::{BBox, ClassId, Detection, Indicator, IndicatorSet, MeasureError, Scale, View};
pub use tensor::{Matrix, ParamBlob, ParamEntry, Real, Tensor, TensorError};
