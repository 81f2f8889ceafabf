use super::{BinaryMask, PixelCoord};

/// Closed outer boundary of one 8-connected component, clockwise on screen.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Contour {
    points: Vec<PixelCoord>,
}

impl Contour {
    pub fn new(points: Vec<PixelCoord>) -> Self {
        Self { points }
    }

    pub fn points(&self) -> &[PixelCoord] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn into_points(self) -> Vec<PixelCoord> {
        self.points
    }
}

// Neighbour offsets in clockwise screen order starting east.
const DIRS: [(i64, i64); 8] = [(1, 0), (1, 1), (0, 1), (-1, 1), (-1, 0), (-1, -1), (0, -1), (1, -1)];
const EAST: usize = 0;

struct Labels {
    stride: i64,
    cells: Vec<i32>,
}

impl Labels {
    // One pixel of zero padding on every side.
    fn new(mask: &BinaryMask) -> Self {
        let (w, h) = (mask.width(), mask.height());
        let stride = w + 2;
        let mut cells = vec![0i32; stride * (h + 2)];
        for y in 0..h {
            for x in 0..w {
                if mask.get(x, y) {
                    cells[(y + 1) * stride + x + 1] = 1;
                }
            }
        }
        Self {
            stride: stride as i64,
            cells,
        }
    }

    #[inline]
    fn at(&self, p: (i64, i64)) -> i32 {
        self.cells[(p.1 * self.stride + p.0) as usize]
    }

    #[inline]
    fn set(&mut self, p: (i64, i64), v: i32) {
        self.cells[(p.1 * self.stride + p.0) as usize] = v;
    }
}

fn dir_index(from: (i64, i64), to: (i64, i64)) -> usize {
    let d = (to.0 - from.0, to.1 - from.1);
    DIRS.iter().position(|&o| o == d).expect("neighbouring pixels")
}

fn step(p: (i64, i64), d: usize) -> (i64, i64) {
    (p.0 + DIRS[d].0, p.1 + DIRS[d].1)
}

/// Border following from `start`, entered from the zero pixel `from`.
/// Returns the border in the tracing order (counterclockwise on screen for
/// outer borders) and marks it with `nbd`.
fn trace(labels: &mut Labels, start: (i64, i64), from: (i64, i64), nbd: i32) -> Vec<(i64, i64)> {
    let d_from = dir_index(start, from);
    let first = (0..8)
        .map(|k| (d_from + k) % 8)
        .map(|d| step(start, d))
        .find(|&q| labels.at(q) != 0);
    let Some(p1) = first else {
        labels.set(start, -nbd);
        return vec![start];
    };
    let mut out = Vec::new();
    let mut p2 = p1;
    let mut p3 = start;
    loop {
        let d2 = dir_index(p3, p2);
        let mut east_zero = false;
        let mut p4 = p2;
        for k in 1..=8 {
            let d = (d2 + 8 - k) % 8;
            let q = step(p3, d);
            if labels.at(q) != 0 {
                p4 = q;
                break;
            }
            if d == EAST {
                east_zero = true;
            }
        }
        if east_zero {
            labels.set(p3, -nbd);
        } else if labels.at(p3) == 1 {
            labels.set(p3, nbd);
        }
        out.push(p3);
        if p4 == start && p3 == p1 {
            break;
        }
        p2 = p3;
        p3 = p4;
    }
    out
}

/// Outer borders of all 8-connected foreground components.
///
/// Components come in raster order of their first pixel, i.e. topmost then
/// leftmost. Each contour starts at that pixel and runs clockwise. Holes are
/// traced only to keep the labelling consistent and are not returned.
pub fn find_contours(mask: &BinaryMask) -> Vec<Contour> {
    let mut labels = Labels::new(mask);
    let mut contours = Vec::new();
    let mut nbd = 1;
    for y in 1..=mask.height() as i64 {
        for x in 1..=mask.width() as i64 {
            let v = labels.at((x, y));
            if v == 1 && labels.at((x - 1, y)) == 0 {
                nbd += 1;
                let raw = trace(&mut labels, (x, y), (x - 1, y), nbd);
                let mut pts = Vec::with_capacity(raw.len());
                pts.push(raw[0]);
                pts.extend(raw[1..].iter().rev());
                contours.push(Contour::new(
                    pts.into_iter()
                        .map(|(px, py)| PixelCoord::new(px as usize - 1, py as usize - 1))
                        .collect(),
                ));
            } else if v >= 1 && labels.at((x + 1, y)) == 0 {
                nbd += 1;
                trace(&mut labels, (x, y), (x + 1, y), nbd);
            }
        }
    }
    contours
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::collections::BTreeSet;

    fn p(x: usize, y: usize) -> PixelCoord {
        PixelCoord::new(x, y)
    }

    // 8-connected components by flood fill, in raster order of first pixel.
    fn components(mask: &BinaryMask) -> Vec<BTreeSet<PixelCoord>> {
        let mut seen = vec![false; mask.width() * mask.height()];
        let mut out = Vec::new();
        for start in mask.pixels() {
            if seen[start.y * mask.width() + start.x] {
                continue;
            }
            let mut comp = BTreeSet::new();
            let mut stack = vec![start];
            seen[start.y * mask.width() + start.x] = true;
            while let Some(q) = stack.pop() {
                comp.insert(q);
                for dy in -1..=1 {
                    for dx in -1..=1 {
                        if let Some(r) = q.offset(dx, dy) {
                            if mask.get(r.x, r.y) && !seen[r.y * mask.width() + r.x] {
                                seen[r.y * mask.width() + r.x] = true;
                                stack.push(r);
                            }
                        }
                    }
                }
            }
            out.push(comp);
        }
        out
    }

    fn signed_area(c: &Contour) -> i64 {
        let pts = c.points();
        (0..pts.len())
            .map(|i| {
                let (a, b) = (pts[i], pts[(i + 1) % pts.len()]);
                a.x as i64 * b.y as i64 - b.x as i64 * a.y as i64
            })
            .sum()
    }

    #[test]
    fn single_pixel() {
        let mut m = BinaryMask::new(3, 3);
        m.set(1, 2, true);
        assert_eq!(find_contours(&m), vec![Contour::new(vec![p(1, 2)])]);
    }

    #[test]
    fn empty_mask_has_no_contours() {
        assert!(find_contours(&BinaryMask::new(5, 4)).is_empty());
        assert!(find_contours(&BinaryMask::new(0, 0)).is_empty());
    }

    #[test]
    fn square_border_is_clockwise_from_top_left() {
        let m = BinaryMask::from_fn(5, 5, |x, y| (1..=3).contains(&x) && (1..=3).contains(&y));
        let c = find_contours(&m);
        assert_eq!(c.len(), 1);
        let expected = vec![p(1, 1), p(2, 1), p(3, 1), p(3, 2), p(3, 3), p(2, 3), p(1, 3), p(1, 2)];
        assert_eq!(c[0].points(), expected.as_slice());
    }

    #[test]
    fn two_squares_top_first() {
        let m = BinaryMask::from_ascii(&[
            "........",
            ".....##.",
            ".....##.",
            "........",
            ".##.....",
            ".##.....",
        ]);
        let c = find_contours(&m);
        assert_eq!(c.len(), 2);
        assert_eq!(c[0].points()[0], p(5, 1));
        assert_eq!(c[1].points()[0], p(1, 4));
        let comps = components(&m);
        for (contour, comp) in c.iter().zip(&comps) {
            assert!(contour.points().iter().all(|q| comp.contains(q)));
        }
    }

    #[test]
    fn diagonal_pixels_form_one_component() {
        let m = BinaryMask::from_ascii(&["#..", ".#.", "..#"]);
        let c = find_contours(&m);
        assert_eq!(c.len(), 1);
        assert_eq!(c[0].points(), &[p(0, 0), p(1, 1), p(2, 2), p(1, 1)]);
    }

    #[test]
    fn ring_yields_outer_border_and_inner_blob() {
        let m = BinaryMask::from_ascii(&[
            "#######",
            "#.....#",
            "#.###.#",
            "#.###.#",
            "#.....#",
            "#######",
        ]);
        let c = find_contours(&m);
        assert_eq!(c.len(), 2);
        assert_eq!(c[0].points()[0], p(0, 0));
        assert_eq!(c[1].points()[0], p(2, 2));
        assert_eq!(c[1].len(), 6);
    }

    #[test]
    fn touches_image_border() {
        let m = BinaryMask::from_fn(4, 3, |_, _| true);
        let c = find_contours(&m);
        assert_eq!(c[0].len(), 10);
        assert!(signed_area(&c[0]) > 0);
    }

    fn blob_mask() -> impl Strategy<Value = BinaryMask> {
        (2usize..14, 2usize..14)
            .prop_flat_map(|(w, h)| prop::collection::vec(prop::bool::weighted(0.45), w * h).prop_map(move |g| (w, h, g)))
            .prop_map(|(w, h, g)| BinaryMask::from_vec(w, h, g).unwrap())
    }

    proptest! {
        #[test]
        fn contours_match_components(m in blob_mask()) {
            let contours = find_contours(&m);
            let comps = components(&m);
            prop_assert_eq!(contours.len(), comps.len());
            for (c, comp) in contours.iter().zip(&comps) {
                prop_assert_eq!(c.points()[0], *comp.iter().min_by_key(|q| (q.y, q.x)).unwrap());
                let pts = c.points();
                for (i, q) in pts.iter().enumerate() {
                    prop_assert!(comp.contains(q));
                    let boundary = [(1, 0), (-1, 0), (0, 1), (0, -1)]
                        .iter()
                        .any(|&(dx, dy)| !m.get_signed(q.x as i64 + dx, q.y as i64 + dy));
                    prop_assert!(boundary);
                    let r = pts[(i + 1) % pts.len()];
                    prop_assert!((q.x as i64 - r.x as i64).abs() <= 1 && (q.y as i64 - r.y as i64).abs() <= 1);
                }
                // clockwise on screen means positive shoelace sum with y down
                prop_assert!(signed_area(c) >= 0);
            }
        }
    }
}
