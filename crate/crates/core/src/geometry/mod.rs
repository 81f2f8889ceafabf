//! Binary-mask geometry: border following, convex hulls, convexity defects
//! and column scans.
//!
//! Coordinates are integer pixel indices with the origin at the top-left
//! corner and `y` growing downward. "Clockwise" always refers to the image
//! as displayed.

mod contour;
mod hull;
mod scan;

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use contour::{find_contours, Contour};
pub use hull::{convex_hull, convexity_defects, upper_defect_point, ConvexityDefect};
pub use scan::{scan_until_exit, topmost_point, ScanDir};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error("empty contour")]
    EmptyContour,
    #[error("column {column} never reaches the mask scanning {dir} from row {from_row}")]
    NoBoundary {
        column: usize,
        from_row: usize,
        dir: ScanDir,
    },
    #[error("no convexity defect on the upper side of the contour")]
    NoDiastole,
    #[error("pixel ({x}, {y}) outside {width}x{height} frame")]
    OutOfFrame {
        x: usize,
        y: usize,
        width: usize,
        height: usize,
    },
    #[error("mask data length {len} does not match {width}x{height}")]
    DataLength { width: usize, height: usize, len: usize },
}

pub type Result<T, E = GeometryError> = std::result::Result<T, E>;

/// A pixel position: `x` is the column, `y` the row.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct PixelCoord {
    pub x: usize,
    pub y: usize,
}

impl PixelCoord {
    pub const fn new(x: usize, y: usize) -> Self {
        Self { x, y }
    }

    /// Shift by a signed offset, `None` if the result would be negative.
    pub fn offset(self, dx: i64, dy: i64) -> Option<Self> {
        let x = self.x as i64 + dx;
        let y = self.y as i64 + dy;
        (x >= 0 && y >= 0).then(|| Self::new(x as usize, y as usize))
    }
}

impl fmt::Display for PixelCoord {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {})", self.x, self.y)
    }
}

/// Axis-aligned pixel bounds, inclusive on both ends.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PixelBounds {
    pub x0: usize,
    pub y0: usize,
    pub x1: usize,
    pub y1: usize,
}

/// Row-major boolean grid.
#[derive(Clone, PartialEq, Eq)]
pub struct BinaryMask {
    width: usize,
    height: usize,
    grid: Vec<bool>,
}

impl fmt::Debug for BinaryMask {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "BinaryMask {}x{} ({} set)", self.width, self.height, self.count())?;
        if self.width * self.height <= 4096 {
            for y in 0..self.height {
                let row: String = (0..self.width)
                    .map(|x| if self.get(x, y) { '#' } else { '.' })
                    .collect();
                writeln!(f, "{row}")?;
            }
        }
        Ok(())
    }
}

impl BinaryMask {
    pub fn new(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            grid: vec![false; width * height],
        }
    }

    pub fn from_vec(width: usize, height: usize, grid: Vec<bool>) -> Result<Self> {
        if grid.len() != width * height {
            return Err(GeometryError::DataLength {
                width,
                height,
                len: grid.len(),
            });
        }
        Ok(Self { width, height, grid })
    }

    pub fn from_fn(width: usize, height: usize, f: impl Fn(usize, usize) -> bool) -> Self {
        let mut grid = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                grid.push(f(x, y));
            }
        }
        Self { width, height, grid }
    }

    /// Parse rows of `#` (set) and `.` (clear). Handy in tests.
    pub fn from_ascii(rows: &[&str]) -> Self {
        let height = rows.len();
        let width = rows.first().map_or(0, |r| r.len());
        Self::from_fn(width, height, |x, y| rows[y].as_bytes()[x] == b'#')
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn as_slice(&self) -> &[bool] {
        &self.grid
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> bool {
        x < self.width && y < self.height && self.grid[y * self.width + x]
    }

    /// Like [`get`](Self::get) but accepts signed coordinates; outside is clear.
    #[inline]
    pub fn get_signed(&self, x: i64, y: i64) -> bool {
        x >= 0 && y >= 0 && self.get(x as usize, y as usize)
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, value: bool) {
        if x < self.width && y < self.height {
            self.grid[y * self.width + x] = value;
        }
    }

    pub fn contains(&self, p: PixelCoord) -> bool {
        p.x < self.width && p.y < self.height
    }

    pub fn count(&self) -> usize {
        self.grid.iter().filter(|&&v| v).count()
    }

    pub fn is_empty(&self) -> bool {
        !self.grid.iter().any(|&v| v)
    }

    pub fn pixels(&self) -> impl Iterator<Item = PixelCoord> + '_ {
        self.grid
            .iter()
            .enumerate()
            .filter(|(_, &v)| v)
            .map(move |(i, _)| PixelCoord::new(i % self.width, i / self.width))
    }

    /// Tight bounds of the set pixels.
    pub fn bounds(&self) -> Option<PixelBounds> {
        let mut b: Option<PixelBounds> = None;
        for p in self.pixels() {
            b = Some(match b {
                None => PixelBounds {
                    x0: p.x,
                    y0: p.y,
                    x1: p.x,
                    y1: p.y,
                },
                Some(b) => PixelBounds {
                    x0: b.x0.min(p.x),
                    y0: b.y0.min(p.y),
                    x1: b.x1.max(p.x),
                    y1: b.y1.max(p.y),
                },
            });
        }
        b
    }

    pub fn union(&self, other: &Self) -> Self {
        assert_eq!((self.width, self.height), (other.width, other.height));
        Self {
            width: self.width,
            height: self.height,
            grid: self.grid.iter().zip(&other.grid).map(|(&a, &b)| a || b).collect(),
        }
    }

    pub fn intersection_count(&self, other: &Self) -> usize {
        self.grid.iter().zip(&other.grid).filter(|(&a, &b)| a && b).count()
    }

    pub fn complement(&self) -> Self {
        Self {
            width: self.width,
            height: self.height,
            grid: self.grid.iter().map(|&v| !v).collect(),
        }
    }

    /// Shift every set pixel by `(dx, dy)`; pixels leaving the frame are dropped.
    pub fn translated(&self, dx: i64, dy: i64) -> Self {
        let mut out = Self::new(self.width, self.height);
        for p in self.pixels() {
            if let Some(q) = p.offset(dx, dy) {
                out.set(q.x, q.y, true);
            }
        }
        out
    }

    /// Clear every pixel outside `keep` (inclusive bounds).
    pub fn retain_within(&mut self, keep: PixelBounds) {
        for y in 0..self.height {
            for x in 0..self.width {
                if x < keep.x0 || x > keep.x1 || y < keep.y0 || y > keep.y1 {
                    self.grid[y * self.width + x] = false;
                }
            }
        }
    }
}
