use std::fmt::Write;

use serde::Serialize;

use crate::attention::{mac_count, AttentionKind, MacBreakdown};

use super::{EvalError, Result};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ComplexityRow {
    pub c: usize,
    pub h: usize,
    pub w: usize,
    pub nl_before: MacBreakdown,
    pub nl_after: MacBreakdown,
    pub panel: MacBreakdown,
    pub conv3x3: MacBreakdown,
    /// Panel over full-resolution attention term.
    pub panel_over_nl_before: f64,
    pub panel_over_nl_after: f64,
    /// Total panel MACs over the 3x3 baseline.
    pub panel_total_over_conv3x3: f64,
}

/// MACs of every attention variant for each `(c, h, w)`.
pub fn complexity_report(shapes: &[(usize, usize, usize)]) -> Result<Vec<ComplexityRow>> {
    shapes
        .iter()
        .map(|&(c, h, w)| {
            let get = |k| mac_count(k, c, h, w).map_err(|e| EvalError::Complexity(e.to_string()));
            let (nb, na, p, cv) = (
                get(AttentionKind::NlBefore)?,
                get(AttentionKind::NlAfter)?,
                get(AttentionKind::Panel)?,
                get(AttentionKind::Conv3x3)?,
            );
            Ok(ComplexityRow {
                c,
                h,
                w,
                panel_over_nl_before: p.attention as f64 / nb.attention as f64,
                panel_over_nl_after: p.attention as f64 / na.attention as f64,
                panel_total_over_conv3x3: p.total() as f64 / cv.total() as f64,
                nl_before: nb,
                nl_after: na,
                panel: p,
                conv3x3: cv,
            })
        })
        .collect()
}

/// Aligned text table of attention-term MACs and ratios.
pub fn format_complexity(rows: &[ComplexityRow]) -> String {
    let mut s = String::new();
    let _ = writeln!(
        s,
        "{:>16} {:>16} {:>16} {:>16} {:>14} {:>10} {:>10}",
        "shape", "nl_before", "nl_after", "panel", "conv3x3", "p/nl_b", "p/nl_a"
    );
    for r in rows {
        let _ = writeln!(
            s,
            "{:>16} {:>16} {:>16} {:>16} {:>14} {:>10.6} {:>10.6}",
            format!("{}x{}x{}", r.c, r.h, r.w),
            r.nl_before.attention,
            r.nl_after.attention,
            r.panel.attention,
            r.conv3x3.total(),
            r.panel_over_nl_before,
            r.panel_over_nl_after
        );
    }
    s
}
