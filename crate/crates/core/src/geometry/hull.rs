use super::{Contour, GeometryError, PixelCoord, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConvexityDefect {
    pub start: PixelCoord,
    pub end: PixelCoord,
    pub farthest: PixelCoord,
    /// Perpendicular distance from `farthest` to the line through `start` and `end`.
    pub distance: f64,
    pub start_index: usize,
    pub end_index: usize,
    pub farthest_index: usize,
}

fn cross(o: PixelCoord, a: PixelCoord, b: PixelCoord) -> i64 {
    let (ox, oy) = (o.x as i64, o.y as i64);
    (a.x as i64 - ox) * (b.y as i64 - oy) - (a.y as i64 - oy) * (b.x as i64 - ox)
}

/// Convex hull vertices as indices into the contour.
///
/// Monotone chain. Collinear points are dropped and each distinct position
/// is represented by its first occurrence. The result is clockwise on screen
/// and starts at the lowest contour index.
pub fn convex_hull(contour: &Contour) -> Vec<usize> {
    let pts = contour.points();
    let mut order: Vec<usize> = (0..pts.len()).collect();
    order.sort_by_key(|&i| (pts[i].x, pts[i].y, i));
    order.dedup_by_key(|&mut i| (pts[i].x, pts[i].y));
    if order.len() <= 2 {
        return {
            let mut v = order;
            v.sort_unstable();
            v
        };
    }
    let mut hull: Vec<usize> = Vec::with_capacity(order.len() * 2);
    let push = |hull: &mut Vec<usize>, floor: usize, i: usize| {
        while hull.len() >= floor && cross(pts[hull[hull.len() - 2]], pts[hull[hull.len() - 1]], pts[i]) <= 0 {
            hull.pop();
        }
        hull.push(i);
    };
    for &i in &order {
        push(&mut hull, 2, i);
    }
    let floor = hull.len() + 1;
    for &i in order.iter().rev().skip(1) {
        push(&mut hull, floor, i);
    }
    hull.pop();
    // Andrew's order is counterclockwise with y up, i.e. clockwise on screen.
    let first = (0..hull.len()).min_by_key(|&k| hull[k]).unwrap_or(0);
    hull.rotate_left(first);
    hull
}

/// For every hull edge, the contour point between its endpoints that lies
/// farthest from the edge line. Edges without interior points or with zero
/// depth produce no defect. Among equally deep consecutive points the middle
/// one is reported.
pub fn convexity_defects(contour: &Contour, hull: &[usize]) -> Vec<ConvexityDefect> {
    let pts = contour.points();
    let n = pts.len();
    let mut idx: Vec<usize> = hull.iter().copied().filter(|&i| i < n).collect();
    idx.sort_unstable();
    idx.dedup();
    if idx.len() < 2 {
        return Vec::new();
    }
    let mut out = Vec::new();
    for k in 0..idx.len() {
        let (s, e) = (idx[k], idx[(k + 1) % idx.len()]);
        let (a, b) = (pts[s], pts[e]);
        let (dx, dy) = (b.x as f64 - a.x as f64, b.y as f64 - a.y as f64);
        let len = dx.hypot(dy);
        if len == 0.0 {
            continue;
        }
        let span = (e + n - s) % n;
        // Deepest point; a plateau of equally deep points resolves to the
        // middle of its first run.
        let mut best: Option<(usize, usize, f64)> = None;
        let mut run_open = false;
        for off in 1..span {
            let i = (s + off) % n;
            let d = cross(a, b, pts[i]).unsigned_abs() as f64 / len;
            match best {
                Some((_, _, bd)) if d < bd => run_open = false,
                Some((first, _, bd)) if d == bd => {
                    if run_open {
                        best = Some((first, off, d));
                    }
                }
                _ => {
                    best = Some((off, off, d));
                    run_open = true;
                }
            }
        }
        let best = best.map(|(first, last, d)| ((s + (first + last) / 2) % n, d));
        if let Some((i, d)) = best {
            if d > 0.0 {
                out.push(ConvexityDefect {
                    start: a,
                    end: b,
                    farthest: pts[i],
                    distance: d,
                    start_index: s,
                    end_index: e,
                    farthest_index: i,
                });
            }
        }
    }
    out
}

/// Farthest point of the deepest defect on the upper side of a clockwise
/// contour, where hull edges run toward +x. Ties go to the smaller column.
pub fn upper_defect_point(defects: &[ConvexityDefect]) -> Result<PixelCoord> {
    defects
        .iter()
        .filter(|d| d.end.x > d.start.x)
        .min_by(|a, b| {
            b.distance
                .total_cmp(&a.distance)
                .then(a.farthest.x.cmp(&b.farthest.x))
        })
        .map(|d| d.farthest)
        .ok_or(GeometryError::NoDiastole)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{find_contours, BinaryMask};
    use proptest::prelude::*;

    fn p(x: usize, y: usize) -> PixelCoord {
        PixelCoord::new(x, y)
    }

    // Brute force: a pair (i, j) is a hull edge when every other point is on
    // the clockwise-inner side or strictly inside the segment.
    pub(crate) fn brute_force_hull(pts: &[PixelCoord]) -> std::collections::BTreeSet<PixelCoord> {
        let mut out = std::collections::BTreeSet::new();
        let mut uniq = pts.to_vec();
        uniq.sort();
        uniq.dedup();
        if uniq.len() <= 2 {
            return uniq.into_iter().collect();
        }
        for &a in &uniq {
            for &b in &uniq {
                if a == b {
                    continue;
                }
                let ok = uniq.iter().all(|&q| {
                    let c = cross(a, b, q);
                    let between = (a.x.min(b.x)..=a.x.max(b.x)).contains(&q.x)
                        && (a.y.min(b.y)..=a.y.max(b.y)).contains(&q.y);
                    c > 0 || (c == 0 && between)
                });
                if ok {
                    out.insert(a);
                    out.insert(b);
                }
            }
        }
        out
    }

    #[test]
    fn triangle_keeps_all_three() {
        let c = Contour::new(vec![p(0, 0), p(4, 0), p(0, 4)]);
        assert_eq!(convex_hull(&c), vec![0, 1, 2]);
    }

    #[test]
    fn collinear_gives_endpoints() {
        let c = Contour::new(vec![p(0, 0), p(1, 1), p(2, 2), p(3, 3)]);
        assert_eq!(convex_hull(&c), vec![0, 3]);
        assert_eq!(convex_hull(&Contour::new(vec![p(2, 2)])), vec![0]);
        assert_eq!(convex_hull(&Contour::new(vec![p(2, 2), p(2, 2)])), vec![0]);
    }

    #[test]
    fn hull_runs_clockwise_on_screen() {
        let c = Contour::new(vec![p(0, 0), p(0, 5), p(5, 5), p(5, 0), p(2, 2)]);
        let h = convex_hull(&c);
        assert_eq!(h, vec![0, 3, 2, 1]);
    }

    #[test]
    fn perpendicular_distance() {
        let c = Contour::new(vec![p(0, 0), p(0, 2), p(4, 0)]);
        let d = convexity_defects(&c, &[0, 2]);
        assert_eq!(d.len(), 1);
        assert_eq!(d[0].farthest, p(0, 2));
        assert!((d[0].distance - 2.0).abs() < 1e-12);
    }

    #[test]
    fn convex_contour_has_no_defects() {
        let m = BinaryMask::from_fn(8, 6, |x, y| (1..=6).contains(&x) && (1..=4).contains(&y));
        let c = &find_contours(&m)[0];
        assert!(convexity_defects(c, &convex_hull(c)).is_empty());
    }

    #[test]
    fn u_shape_valley_is_the_dominant_upper_defect() {
        let m = BinaryMask::from_ascii(&[
            "##.......##",
            "##.......##",
            "###.....###",
            "####...####",
            "###########",
            "###########",
        ]);
        let c = &find_contours(&m)[0];
        let defects = convexity_defects(c, &convex_hull(c));
        let deepest = defects.iter().max_by(|a, b| a.distance.total_cmp(&b.distance)).unwrap();
        assert_eq!(deepest.farthest.y, 4);
        assert!((4..=6).contains(&deepest.farthest.x));
        assert!((deepest.distance - 4.0).abs() < 1e-12);
        let up = upper_defect_point(&defects).unwrap();
        assert_eq!(up, p(5, 4));
    }

    #[test]
    fn bottom_defects_are_ignored() {
        let top = ConvexityDefect {
            start: p(0, 0),
            end: p(10, 0),
            farthest: p(5, 3),
            distance: 3.0,
            start_index: 0,
            end_index: 10,
            farthest_index: 5,
        };
        let bottom = ConvexityDefect {
            start: p(10, 9),
            end: p(0, 9),
            farthest: p(4, 2),
            distance: 7.0,
            ..top
        };
        assert_eq!(upper_defect_point(&[top, bottom]).unwrap(), p(5, 3));
        assert_eq!(upper_defect_point(&[bottom]).unwrap_err(), GeometryError::NoDiastole);
        let tie = ConvexityDefect { farthest: p(2, 3), ..top };
        assert_eq!(upper_defect_point(&[top, tie]).unwrap(), p(2, 3));
    }

    proptest! {
        #[test]
        fn hull_matches_brute_force(raw in prop::collection::vec((0usize..10, 0usize..10), 1..=12)) {
            let pts: Vec<PixelCoord> = raw.iter().map(|&(x, y)| p(x, y)).collect();
            let c = Contour::new(pts.clone());
            let hull = convex_hull(&c);
            let got: std::collections::BTreeSet<_> = hull.iter().map(|&i| pts[i]).collect();
            prop_assert_eq!(got.len(), hull.len());
            prop_assert_eq!(got, brute_force_hull(&pts));
            if hull.len() >= 3 {
                for k in 0..hull.len() {
                    let (a, b) = (pts[hull[k]], pts[hull[(k + 1) % hull.len()]]);
                    for &q in &pts {
                        prop_assert!(cross(a, b, q) >= 0);
                    }
                }
            }
        }

        #[test]
        fn defect_distances_ignore_translation(
            bits in prop::collection::vec(prop::bool::weighted(0.6), 64),
            dx in 0usize..5,
            dy in 0usize..5,
        ) {
            let m = BinaryMask::from_fn(8, 8, |x, y| bits[y * 8 + x]);
            let shifted = BinaryMask::from_fn(14, 14, |x, y| x >= dx && y >= dy && m.get(x - dx, y - dy));
            let a = find_contours(&m);
            let b = find_contours(&shifted);
            prop_assert_eq!(a.len(), b.len());
            for (ca, cb) in a.iter().zip(&b) {
                let da: Vec<f64> = convexity_defects(ca, &convex_hull(ca)).iter().map(|d| d.distance).collect();
                let db: Vec<f64> = convexity_defects(cb, &convex_hull(cb)).iter().map(|d| d.distance).collect();
                prop_assert_eq!(da, db);
            }
        }
    }
}
