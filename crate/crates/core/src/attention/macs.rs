//! Multiply-accumulate accounting for the attention variants compared in
//! the block design: attention before down-sampling, attention after
//! down-sampling, panel attention, and a plain depth-wise 3x3.

use serde::Serialize;

use super::{AttentionError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum AttentionKind {
    /// Non-local attention at full resolution, then a stride-2 1x1 down-sample.
    NlBefore,
    /// Down-sample first, then non-local attention over `hw/2` positions.
    NlAfter,
    /// Panel attention over `hw/4` positions of `c`-channel streams.
    Panel,
    /// Depth-wise 3x3 convolution, the local-only baseline.
    Conv3x3,
}

impl AttentionKind {
    pub const ALL: [AttentionKind; 4] = [Self::NlBefore, Self::NlAfter, Self::Panel, Self::Conv3x3];

    pub fn name(self) -> &'static str {
        match self {
            Self::NlBefore => "nl_before",
            Self::NlAfter => "nl_after",
            Self::Panel => "panel",
            Self::Conv3x3 => "conv3x3",
        }
    }
}

/// MAC counts split by stage.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct MacBreakdown {
    /// The `Qᵀ K` dot-product term.
    pub attention: u128,
    /// Weighting the values, `A Vᵀ`.
    pub aggregation: u128,
    /// Channel maps, convolutions and down-sampling.
    pub linear: u128,
}

impl MacBreakdown {
    pub fn total(&self) -> u128 {
        self.attention + self.aggregation + self.linear
    }
}

/// Exact MACs of one variant on a `(c, h, w)` input.
///
/// `NlAfter` needs `h*w` even and `Panel` needs `h` and `w` even.
pub fn mac_count(kind: AttentionKind, c: usize, h: usize, w: usize) -> Result<MacBreakdown> {
    if c == 0 || h == 0 || w == 0 {
        return Err(AttentionError::InvalidDims(format!("({c}, {h}, {w})")));
    }
    let (c, s) = (c as u128, (h * w) as u128);
    let out = match kind {
        AttentionKind::NlBefore => MacBreakdown {
            attention: c * s * s,
            aggregation: c * s * s,
            // X', Q, K, V maps at full size plus the strided 1x1 down-sample.
            linear: 4 * c * c * s + c * c * (s / 4),
        },
        AttentionKind::NlAfter => {
            if s % 2 != 0 {
                return Err(AttentionError::InvalidDims(format!(
                    "nl_after needs an even number of positions, got {s}"
                )));
            }
            let r = s / 2;
            MacBreakdown {
                attention: c * r * r,
                aggregation: c * r * r,
                linear: c * c * r + 4 * c * c * r,
            }
        }
        AttentionKind::Panel => {
            if !h.is_multiple_of(2) || !w.is_multiple_of(2) {
                return Err(AttentionError::OddSpatial { h, w });
            }
            let r = s / 4;
            MacBreakdown {
                attention: c * r * r,
                aggregation: c * r * r,
                // depth-wise 3x3 over 4c channels, four c x c stream maps,
                // 2x2 stride-2 skip.
                linear: 9 * 4 * c * r + 4 * c * c * r + 4 * c * c * r,
            }
        }
        AttentionKind::Conv3x3 => MacBreakdown {
            attention: 0,
            aggregation: 0,
            linear: 9 * c * s,
        },
    };
    Ok(out)
}
