use std::collections::BTreeMap;

use serde::Serialize;

use crate::geometry::BinaryMask;
use crate::measure::{BBox, ClassId};

/// One detection or ground-truth object. Ground truths ignore `score`.
#[derive(Debug, Clone, PartialEq)]
pub struct Instance {
    pub image_id: String,
    pub class: ClassId,
    pub bbox: BBox,
    pub mask: Option<BinaryMask>,
    pub score: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum IouKind {
    Mask,
    Box,
}

/// `|A n B| / |A u B|`, zero when both are empty. Masks of different sizes
/// are compared over their common frame.
pub fn mask_iou(a: &BinaryMask, b: &BinaryMask) -> f64 {
    let (w, h) = (a.width().min(b.width()), a.height().min(b.height()));
    let (mut inter, mut union) = (0usize, 0usize);
    for y in 0..h {
        for x in 0..w {
            let (p, q) = (a.get(x, y), b.get(x, y));
            inter += (p && q) as usize;
            union += (p || q) as usize;
        }
    }
    union += a.count() + b.count() - count_in(a, w, h) - count_in(b, w, h);
    if union == 0 {
        0.0
    } else {
        inter as f64 / union as f64
    }
}

fn count_in(m: &BinaryMask, w: usize, h: usize) -> usize {
    (0..h).map(|y| (0..w).filter(|&x| m.get(x, y)).count()).sum()
}

pub fn box_iou(a: &BBox, b: &BBox) -> f64 {
    let iw = ((a.x + a.w).min(b.x + b.w) - a.x.max(b.x)).max(0.0);
    let ih = ((a.y + a.h).min(b.y + b.h) - a.y.max(b.y)).max(0.0);
    let inter = iw * ih;
    let union = a.area() + b.area() - inter;
    if union <= 0.0 {
        0.0
    } else {
        inter / union
    }
}

/// `0.50, 0.55, ..., 0.95`.
pub fn coco_thresholds() -> Vec<f64> {
    (0..10).map(|i| (50 + 5 * i) as f64 / 100.0).collect()
}

fn iou(kind: IouKind, a: &Instance, b: &Instance) -> f64 {
    match kind {
        IouKind::Box => box_iou(&a.bbox, &b.bbox),
        IouKind::Mask => match (&a.mask, &b.mask) {
            (Some(p), Some(q)) => mask_iou(p, q),
            _ => 0.0,
        },
    }
}

/// AP per IoU threshold for one class, or `None` when the class has no
/// ground truth.
///
/// Detections are matched greedily in descending score order (input order
/// breaks ties); each takes the unmatched ground truth of the same image
/// with the highest IoU at or above the threshold. Precision is made
/// monotone and sampled at 101 recall points.
pub fn class_ap(dets: &[Instance], gts: &[Instance], class: ClassId, thresholds: &[f64], kind: IouKind) -> Option<Vec<f64>> {
    let gts: Vec<&Instance> = gts.iter().filter(|g| g.class == class).collect();
    if gts.is_empty() {
        return None;
    }
    let mut dets: Vec<&Instance> = dets.iter().filter(|d| d.class == class).collect();
    dets.sort_by(|a, b| b.score.total_cmp(&a.score));

    let ious: Vec<Vec<f64>> = dets
        .iter()
        .map(|d| {
            gts.iter()
                .map(|g| if g.image_id == d.image_id { iou(kind, d, g) } else { -1.0 })
                .collect()
        })
        .collect();

    let aps = thresholds
        .iter()
        .map(|&t| {
            let mut taken = vec![false; gts.len()];
            let mut tp = Vec::with_capacity(dets.len());
            for row in &ious {
                let mut best: Option<(usize, f64)> = None;
                for (g, &v) in row.iter().enumerate() {
                    if !taken[g] && v >= t && best.is_none_or(|(_, bv)| v > bv) {
                        best = Some((g, v));
                    }
                }
                if let Some((g, _)) = best {
                    taken[g] = true;
                }
                tp.push(best.is_some());
            }
            interpolated_ap(&tp, gts.len())
        })
        .collect();
    Some(aps)
}

fn interpolated_ap(tp: &[bool], n_gt: usize) -> f64 {
    let mut recall = Vec::with_capacity(tp.len());
    let mut precision = Vec::with_capacity(tp.len());
    let (mut t, mut f) = (0usize, 0usize);
    for &hit in tp {
        if hit {
            t += 1;
        } else {
            f += 1;
        }
        recall.push(t as f64 / n_gt as f64);
        precision.push(t as f64 / (t + f) as f64);
    }
    for i in (0..precision.len().saturating_sub(1)).rev() {
        precision[i] = precision[i].max(precision[i + 1]);
    }
    let mut sum = 0.0;
    for r in 0..=100 {
        let r = r as f64 / 100.0;
        let i = recall.partition_point(|&x| x < r);
        if i < precision.len() {
            sum += precision[i];
        }
    }
    sum / 101.0
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ApResult {
    pub thresholds: Vec<f64>,
    /// Mask AP per class, one value per threshold.
    pub mask: BTreeMap<ClassId, Vec<f64>>,
    pub boxes: BTreeMap<ClassId, Vec<f64>>,
    pub mask_map: f64,
    pub box_map: f64,
    /// Mean of `mask_map` and `box_map`.
    pub avg_map: f64,
}

fn mean_ap(per_class: &BTreeMap<ClassId, Vec<f64>>) -> f64 {
    let all: Vec<f64> = per_class.values().flatten().copied().collect();
    if all.is_empty() {
        0.0
    } else {
        all.iter().sum::<f64>() / all.len() as f64
    }
}

/// Mask and box AP for every class with ground truth.
pub fn average_precision(dets: &[Instance], gts: &[Instance], thresholds: &[f64]) -> ApResult {
    let per = |kind| -> BTreeMap<ClassId, Vec<f64>> {
        ClassId::ALL
            .iter()
            .filter_map(|&c| class_ap(dets, gts, c, thresholds, kind).map(|v| (c, v)))
            .collect()
    };
    let mask = per(IouKind::Mask);
    let boxes = per(IouKind::Box);
    let (mask_map, box_map) = (mean_ap(&mask), mean_ap(&boxes));
    ApResult {
        thresholds: thresholds.to_vec(),
        mask,
        boxes,
        mask_map,
        box_map,
        avg_map: (mask_map + box_map) / 2.0,
    }
}
