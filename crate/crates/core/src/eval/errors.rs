use std::collections::BTreeMap;
use std::fmt;

use serde::Serialize;

use crate::measure::{ImageRecord, Indicator};

use super::{EvalError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ErrorRow {
    pub mae: f64,
    pub mse: f64,
    pub count: usize,
}

/// Per-indicator MAE and MSE in centimetres.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ErrorTable {
    pub rows: BTreeMap<Indicator, ErrorRow>,
    pub mean_mae: f64,
    pub std_mae: f64,
    pub mean_mse: f64,
    pub std_mse: f64,
    /// Images present in both inputs.
    pub images: usize,
}

fn mean_std(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// Compare predictions with truths by `image_id`, per indicator present on
/// both sides. Images are visited in id order, so the result does not
/// depend on input order.
pub fn mae_mse_table(preds: &[ImageRecord], truths: &[ImageRecord]) -> Result<ErrorTable> {
    let truth: BTreeMap<&str, &ImageRecord> = truths.iter().map(|t| (t.image_id.as_str(), t)).collect();
    let mut pairs: Vec<(&ImageRecord, &ImageRecord)> = preds
        .iter()
        .filter_map(|p| truth.get(p.image_id.as_str()).map(|t| (p, *t)))
        .collect();
    pairs.sort_by(|a, b| a.0.image_id.cmp(&b.0.image_id));

    let mut sums: BTreeMap<Indicator, (f64, f64, usize)> = BTreeMap::new();
    for (p, t) in &pairs {
        for ind in Indicator::ALL {
            if let (Some(a), Some(b)) = (p.get(ind), t.get(ind)) {
                let e = sums.entry(ind).or_default();
                let d = a - b;
                e.0 += d.abs();
                e.1 += d * d;
                e.2 += 1;
            }
        }
    }
    if sums.is_empty() {
        return Err(EvalError::EmptyComparison);
    }
    let rows: BTreeMap<Indicator, ErrorRow> = sums
        .into_iter()
        .map(|(k, (a, s, n))| {
            (
                k,
                ErrorRow {
                    mae: a / n as f64,
                    mse: s / n as f64,
                    count: n,
                },
            )
        })
        .collect();
    let maes: Vec<f64> = rows.values().map(|r| r.mae).collect();
    let mses: Vec<f64> = rows.values().map(|r| r.mse).collect();
    let (mean_mae, std_mae) = mean_std(&maes);
    let (mean_mse, std_mse) = mean_std(&mses);
    Ok(ErrorTable {
        rows,
        mean_mae,
        std_mae,
        mean_mse,
        std_mse,
        images: pairs.len(),
    })
}

impl fmt::Display for ErrorTable {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "{:<10} {:>10} {:>10} {:>6}", "indicator", "MAE", "MSE", "n")?;
        for (k, r) in &self.rows {
            writeln!(f, "{:<10} {:>10.4} {:>10.5} {:>6}", k.name(), r.mae, r.mse, r.count)?;
        }
        writeln!(f, "{:<10} {:>10.4} {:>10.5}", "mean", self.mean_mae, self.mean_mse)?;
        write!(f, "{:<10} {:>10.4} {:>10.5}", "std", self.std_mae, self.std_mse)
    }
}
