use crate::geometry::{find_contours, BinaryMask};

use super::{DatasetError, Result};

/// Closed polygon in pixel coordinates; pixel `(x, y)` has its centre at `(x, y)`.
pub type Polygon = Vec<(f64, f64)>;

fn distinct_vertices(poly: &[(f64, f64)]) -> usize {
    let mut v: Vec<(u64, u64)> = poly.iter().map(|&(x, y)| (x.to_bits(), y.to_bits())).collect();
    v.sort_unstable();
    v.dedup();
    v.len()
}

fn on_segment(a: (f64, f64), b: (f64, f64), p: (f64, f64)) -> bool {
    let cross = (b.0 - a.0) * (p.1 - a.1) - (b.1 - a.1) * (p.0 - a.0);
    let scale = (b.0 - a.0).abs().max((b.1 - a.1).abs()).max(1.0);
    cross.abs() <= 1e-9 * scale
        && p.0 >= a.0.min(b.0) - 1e-9
        && p.0 <= a.0.max(b.0) + 1e-9
        && p.1 >= a.1.min(b.1) - 1e-9
        && p.1 <= a.1.max(b.1) + 1e-9
}

/// Rasterize one polygon with the even-odd rule, sampling pixel centres.
/// Pixels whose centre lies on an edge are included. Vertices outside the
/// frame are allowed; the result is clipped.
pub fn polygon_to_mask(poly: &[(f64, f64)], width: usize, height: usize) -> Result<BinaryMask> {
    let mut mask = BinaryMask::new(width, height);
    fill_into(&mut mask, poly)?;
    Ok(mask)
}

/// Union of several polygons (a multi-part COCO segmentation).
pub fn polygons_to_mask(polys: &[Polygon], width: usize, height: usize) -> Result<BinaryMask> {
    let mut mask = BinaryMask::new(width, height);
    for p in polys {
        fill_into(&mut mask, p)?;
    }
    Ok(mask)
}

fn fill_into(mask: &mut BinaryMask, poly: &[(f64, f64)]) -> Result<()> {
    let distinct = distinct_vertices(poly);
    if distinct < 3 {
        return Err(DatasetError::DegeneratePolygon { distinct });
    }
    let (w, h) = (mask.width() as i64, mask.height() as i64);
    let n = poly.len();
    let edges = || (0..n).map(|i| (poly[i], poly[(i + 1) % n]));

    let y_min = poly.iter().map(|p| p.1).fold(f64::INFINITY, f64::min).ceil().max(0.0) as i64;
    let y_max = poly.iter().map(|p| p.1).fold(f64::NEG_INFINITY, f64::max).floor().min((h - 1) as f64) as i64;
    let mut xs = Vec::new();
    for y in y_min..=y_max {
        let yf = y as f64;
        xs.clear();
        for (a, b) in edges() {
            if (a.1 <= yf && yf < b.1) || (b.1 <= yf && yf < a.1) {
                xs.push(a.0 + (yf - a.1) * (b.0 - a.0) / (b.1 - a.1));
            }
        }
        xs.sort_by(f64::total_cmp);
        for pair in xs.chunks_exact(2) {
            let x0 = pair[0].ceil().max(0.0) as i64;
            let x1 = pair[1].floor().min((w - 1) as f64) as i64;
            for x in x0..=x1 {
                mask.set(x as usize, y as usize, true);
            }
        }
    }
    // Centres exactly on an edge, including horizontal edges and vertices.
    for (a, b) in edges() {
        let x_lo = a.0.min(b.0).ceil().max(0.0) as i64;
        let x_hi = a.0.max(b.0).floor().min((w - 1) as f64) as i64;
        let y_lo = a.1.min(b.1).ceil().max(0.0) as i64;
        let y_hi = a.1.max(b.1).floor().min((h - 1) as f64) as i64;
        for y in y_lo..=y_hi {
            for x in x_lo..=x_hi {
                if on_segment(a, b, (x as f64, y as f64)) {
                    mask.set(x as usize, y as usize, true);
                }
            }
        }
    }
    Ok(())
}

/// Outer-border polygons of every component, through pixel centres.
/// Components with fewer than three distinct border pixels are skipped.
pub fn mask_polygons(mask: &BinaryMask) -> Vec<Polygon> {
    find_contours(mask)
        .into_iter()
        .map(|c| c.points().iter().map(|p| (p.x as f64, p.y as f64)).collect::<Polygon>())
        .filter(|p| distinct_vertices(p) >= 3)
        .collect()
}
