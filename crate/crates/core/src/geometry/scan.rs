use std::fmt;

use serde::{Deserialize, Serialize};

use super::{BinaryMask, Contour, GeometryError, PixelCoord, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScanDir {
    Up,
    Down,
}

impl ScanDir {
    fn step(self) -> i64 {
        match self {
            ScanDir::Up => -1,
            ScanDir::Down => 1,
        }
    }
}

impl fmt::Display for ScanDir {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ScanDir::Up => "up",
            ScanDir::Down => "down",
        })
    }
}

/// Topmost contour point; ties go to the smallest column.
pub fn topmost_point(contour: &Contour) -> Result<PixelCoord> {
    contour
        .points()
        .iter()
        .copied()
        .min_by_key(|p| (p.y, p.x))
        .ok_or(GeometryError::EmptyContour)
}

/// Walk the start column one pixel at a time and return the last mask pixel
/// before the walk leaves the mask.
///
/// When `start` is outside the mask the walk first crosses the gap until it
/// enters the mask. Reaching the image border while inside the mask returns
/// the border pixel.
pub fn scan_until_exit(mask: &BinaryMask, start: PixelCoord, dir: ScanDir) -> Result<PixelCoord> {
    if !mask.contains(start) {
        return Err(GeometryError::OutOfFrame {
            x: start.x,
            y: start.y,
            width: mask.width(),
            height: mask.height(),
        });
    }
    let x = start.x;
    let step = dir.step();
    let mut y = start.y as i64;
    let in_frame = |y: i64| y >= 0 && y < mask.height() as i64;
    if !mask.get(x, y as usize) {
        loop {
            y += step;
            if !in_frame(y) {
                return Err(GeometryError::NoBoundary {
                    column: x,
                    from_row: start.y,
                    dir,
                });
            }
            if mask.get(x, y as usize) {
                break;
            }
        }
    }
    while in_frame(y + step) && mask.get(x, (y + step) as usize) {
        y += step;
    }
    Ok(PixelCoord::new(x, y as usize))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn band(width: usize, height: usize, rows: std::ops::RangeInclusive<usize>) -> BinaryMask {
        BinaryMask::from_fn(width, height, |_, y| rows.contains(&y))
    }

    #[test]
    fn full_band_scan() {
        let m = band(4, 12, 3..=7);
        assert_eq!(scan_until_exit(&m, PixelCoord::new(2, 7), ScanDir::Up).unwrap(), PixelCoord::new(2, 3));
        assert_eq!(scan_until_exit(&m, PixelCoord::new(2, 3), ScanDir::Down).unwrap(), PixelCoord::new(2, 7));
    }

    #[test]
    fn already_at_edge_returns_start() {
        let m = band(4, 12, 3..=7);
        assert_eq!(scan_until_exit(&m, PixelCoord::new(1, 3), ScanDir::Up).unwrap(), PixelCoord::new(1, 3));
        assert_eq!(scan_until_exit(&m, PixelCoord::new(1, 7), ScanDir::Down).unwrap(), PixelCoord::new(1, 7));
    }

    #[test]
    fn crosses_a_gap_into_the_next_band() {
        // upper band rows 2..=5, lower band rows 10..=14
        let m = BinaryMask::from_fn(3, 20, |_, y| (2..=5).contains(&y) || (10..=14).contains(&y));
        let upper = BinaryMask::from_fn(3, 20, |_, y| (2..=5).contains(&y));
        // from the top of the lower band, through background, to the far edge of the upper band
        assert_eq!(scan_until_exit(&upper, PixelCoord::new(0, 10), ScanDir::Up).unwrap(), PixelCoord::new(0, 2));
        let background = m.complement();
        assert_eq!(
            scan_until_exit(&background, PixelCoord::new(0, 10), ScanDir::Up).unwrap(),
            PixelCoord::new(0, 6)
        );
    }

    #[test]
    fn border_pixel_ends_the_walk() {
        let m = band(2, 6, 0..=3);
        assert_eq!(scan_until_exit(&m, PixelCoord::new(0, 2), ScanDir::Up).unwrap(), PixelCoord::new(0, 0));
    }

    #[test]
    fn missing_mask_is_an_error() {
        let m = BinaryMask::from_fn(5, 5, |x, _| x == 0);
        assert_eq!(
            scan_until_exit(&m, PixelCoord::new(3, 2), ScanDir::Down).unwrap_err(),
            GeometryError::NoBoundary { column: 3, from_row: 2, dir: ScanDir::Down }
        );
        assert!(scan_until_exit(&m, PixelCoord::new(9, 2), ScanDir::Down).is_err());
    }

    #[test]
    fn topmost_prefers_left_on_ties() {
        let c = Contour::new(vec![PixelCoord::new(5, 2), PixelCoord::new(3, 2), PixelCoord::new(1, 4)]);
        assert_eq!(topmost_point(&c).unwrap(), PixelCoord::new(3, 2));
        assert_eq!(topmost_point(&Contour::new(vec![PixelCoord::new(7, 7)])).unwrap(), PixelCoord::new(7, 7));
        assert_eq!(topmost_point(&Contour::new(vec![])).unwrap_err(), GeometryError::EmptyContour);
    }

    proptest! {
        #[test]
        fn scans_stay_in_their_column(
            bits in prop::collection::vec(any::<bool>(), 40),
            start in 0usize..40,
            up in any::<bool>(),
        ) {
            let m = BinaryMask::from_fn(1, 40, |_, y| bits[y]);
            let dir = if up { ScanDir::Up } else { ScanDir::Down };
            if let Ok(p) = scan_until_exit(&m, PixelCoord::new(0, start), dir) {
                prop_assert_eq!(p.x, 0);
                prop_assert!(m.get(0, p.y));
                if up { prop_assert!(p.y <= start) } else { prop_assert!(p.y >= start) }
                let next = p.y as i64 + if up { -1 } else { 1 };
                prop_assert!(!m.get_signed(0, next));
            }
        }
    }
}
