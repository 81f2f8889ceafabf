use std::collections::BTreeMap;
use std::fmt::Write;

use serde::{Deserialize, Serialize};

use super::{Indicator, IndicatorSet, View};

/// Serialized form of one image's measurements.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImageRecord {
    pub image_id: String,
    pub view: View,
    pub indicators: BTreeMap<String, f64>,
    pub anchors: BTreeMap<String, [usize; 2]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

impl ImageRecord {
    pub fn from_set(image_id: impl Into<String>, set: &IndicatorSet) -> Self {
        Self {
            image_id: image_id.into(),
            view: set.view,
            indicators: set.values.iter().map(|(k, m)| (k.name().to_owned(), m.cm)).collect(),
            anchors: set
                .anchors
                .iter()
                .map(|(k, p)| ((*k).to_owned(), [p.x, p.y]))
                .collect(),
            error: None,
        }
    }

    pub fn failed(image_id: impl Into<String>, view: View, error: impl ToString) -> Self {
        Self {
            image_id: image_id.into(),
            view,
            indicators: BTreeMap::new(),
            anchors: BTreeMap::new(),
            error: Some(error.to_string()),
        }
    }

    pub fn get(&self, ind: Indicator) -> Option<f64> {
        self.indicators.get(ind.name()).copied()
    }
}

pub const CSV_HEADER: &str = "image_id,view,aor_diam,la_dim,lvid_s,ivs_s,lvpw_s,lvid_d,ivs_d,lvpw_d,error";

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n', '\r']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_owned()
    }
}

/// One header line plus one row per record; absent indicators are empty cells.
pub fn indicators_csv(records: &[ImageRecord]) -> String {
    let mut out = String::from(CSV_HEADER);
    out.push('\n');
    for r in records {
        let _ = write!(out, "{},{}", csv_field(&r.image_id), r.view);
        for ind in Indicator::ALL {
            out.push(',');
            if let Some(v) = r.get(ind) {
                let _ = write!(out, "{v}");
            }
        }
        out.push(',');
        out.push_str(&csv_field(r.error.as_deref().unwrap_or("")));
        out.push('\n');
    }
    out
}
