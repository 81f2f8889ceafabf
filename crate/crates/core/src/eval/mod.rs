//! Evaluation: indicator error tables, mask and box average precision, and
//! the attention complexity table.

mod ap;
mod complexity;
mod errors;

use thiserror::Error;

pub use ap::{average_precision, box_iou, class_ap, coco_thresholds, mask_iou, ApResult, Instance, IouKind};
pub use complexity::{complexity_report, format_complexity, ComplexityRow};
pub use errors::{mae_mse_table, ErrorRow, ErrorTable};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EvalError {
    #[error("no indicator is present in both predictions and ground truth")]
    EmptyComparison,
    #[error("masks differ in size: {0}x{1} vs {2}x{3}")]
    MaskSize(usize, usize, usize, usize),
    #[error("complexity: {0}")]
    Complexity(String),
}

pub type Result<T, E = EvalError> = std::result::Result<T, E>;
