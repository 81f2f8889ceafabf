//! Dense single-image tensors and the handful of layer primitives the
//! attention block is built from.
//!
//! Every forward primitive in [`ops`] has an analytic adjoint next to it
//! (`*_backward`). The adjoints are checked against [`finite_diff_grad`] in
//! double precision.

mod gradcheck;
pub mod ops;
mod params;

use std::fmt::Debug;
use std::iter::Sum;

use num_traits::{Float, FromPrimitive, ToPrimitive};
use thiserror::Error;

pub use gradcheck::{finite_diff_grad, finite_diff_grad_slice};
pub use ops::{
    batch_norm_inference, grouped_conv3x3, layer_norm, linear_channel_map, matmul, patch_conv2x2,
    pixel_shuffle, pixel_unshuffle, prelu, softmax_axis, Axis, BatchNormParams, LayerNormParams,
    NormMode, NORM_EPS,
};
pub use params::{BlobEncoding, ParamBlob, ParamEntry};

/// Floating point element type of tensors. Implemented for `f32` and `f64`.
pub trait Real:
    Float + FromPrimitive + ToPrimitive + Debug + Default + Sum + Send + Sync + 'static
{
    fn lit(v: f64) -> Self {
        Self::from_f64(v).expect("literal representable")
    }
}

impl Real for f32 {}
impl Real for f64 {}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TensorError {
    #[error("data length {len} does not match shape {shape:?}")]
    DataLength { shape: Vec<usize>, len: usize },
    #[error("{op}: spatial size {h}x{w} is not divisible by {factor}")]
    SpatialNotDivisible {
        op: &'static str,
        h: usize,
        w: usize,
        factor: usize,
    },
    #[error("{op}: {channels} channels not divisible by {factor}")]
    ChannelsNotDivisible {
        op: &'static str,
        channels: usize,
        factor: usize,
    },
    #[error("{op}: shape mismatch, expected {expected:?}, got {actual:?}")]
    ShapeMismatch {
        op: &'static str,
        expected: Vec<usize>,
        actual: Vec<usize>,
    },
    #[error("{op}: invalid argument: {reason}")]
    InvalidArgument { op: &'static str, reason: String },
    #[error("missing parameter `{0}`")]
    MissingParam(String),
    #[error("parameter blob: {0}")]
    Blob(String),
}

pub type Result<T, E = TensorError> = std::result::Result<T, E>;

/// Rank-3 feature map `(channels, height, width)` in row-major order.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor<T = f32> {
    c: usize,
    h: usize,
    w: usize,
    data: Vec<T>,
}

impl<T: Real> Tensor<T> {
    pub fn new(c: usize, h: usize, w: usize, data: Vec<T>) -> Result<Self> {
        if data.len() != c * h * w {
            return Err(TensorError::DataLength {
                shape: vec![c, h, w],
                len: data.len(),
            });
        }
        Ok(Self { c, h, w, data })
    }

    pub fn zeros(c: usize, h: usize, w: usize) -> Self {
        Self {
            c,
            h,
            w,
            data: vec![T::zero(); c * h * w],
        }
    }

    pub fn from_fn(c: usize, h: usize, w: usize, mut f: impl FnMut(usize, usize, usize) -> T) -> Self {
        let mut data = Vec::with_capacity(c * h * w);
        for ch in 0..c {
            for i in 0..h {
                for j in 0..w {
                    data.push(f(ch, i, j));
                }
            }
        }
        Self { c, h, w, data }
    }

    pub fn shape(&self) -> (usize, usize, usize) {
        (self.c, self.h, self.w)
    }

    pub fn channels(&self) -> usize {
        self.c
    }

    pub fn height(&self) -> usize {
        self.h
    }

    pub fn width(&self) -> usize {
        self.w
    }

    /// Number of spatial positions `h * w`.
    pub fn spatial(&self) -> usize {
        self.h * self.w
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<T> {
        self.data
    }

    #[inline]
    pub fn index(&self, ch: usize, i: usize, j: usize) -> usize {
        (ch * self.h + i) * self.w + j
    }

    #[inline]
    pub fn at(&self, ch: usize, i: usize, j: usize) -> T {
        self.data[self.index(ch, i, j)]
    }

    #[inline]
    pub fn at_mut(&mut self, ch: usize, i: usize, j: usize) -> &mut T {
        let idx = self.index(ch, i, j);
        &mut self.data[idx]
    }

    pub fn channel(&self, ch: usize) -> &[T] {
        let s = self.spatial();
        &self.data[ch * s..(ch + 1) * s]
    }

    pub fn channel_mut(&mut self, ch: usize) -> &mut [T] {
        let s = self.spatial();
        &mut self.data[ch * s..(ch + 1) * s]
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn map(&self, f: impl Fn(T) -> T) -> Self {
        Self {
            c: self.c,
            h: self.h,
            w: self.w,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        self.expect_same_shape("add", other)?;
        Ok(Self {
            c: self.c,
            h: self.h,
            w: self.w,
            data: self.data.iter().zip(&other.data).map(|(&a, &b)| a + b).collect(),
        })
    }

    pub fn add_assign(&mut self, other: &Self) -> Result<()> {
        self.expect_same_shape("add_assign", other)?;
        for (a, &b) in self.data.iter_mut().zip(&other.data) {
            *a = *a + b;
        }
        Ok(())
    }

    /// Frobenius inner product `<self, other>`.
    pub fn dot(&self, other: &Self) -> Result<T> {
        self.expect_same_shape("dot", other)?;
        Ok(self.data.iter().zip(&other.data).map(|(&a, &b)| a * b).sum())
    }

    pub fn cast<U: Real>(&self) -> Tensor<U> {
        Tensor {
            c: self.c,
            h: self.h,
            w: self.w,
            data: self
                .data
                .iter()
                .map(|v| U::from_f64(v.to_f64().unwrap_or(f64::NAN)).unwrap_or(U::nan()))
                .collect(),
        }
    }

    /// Flatten into the `(c, h*w)` matrix view used by attention.
    pub fn to_matrix(&self) -> Matrix<T> {
        Matrix {
            rows: self.c,
            cols: self.spatial(),
            data: self.data.clone(),
        }
    }

    pub fn from_matrix(m: Matrix<T>, h: usize, w: usize) -> Result<Self> {
        if m.cols != h * w {
            return Err(TensorError::ShapeMismatch {
                op: "from_matrix",
                expected: vec![m.rows, h * w],
                actual: vec![m.rows, m.cols],
            });
        }
        Ok(Self {
            c: m.rows,
            h,
            w,
            data: m.data,
        })
    }

    fn expect_same_shape(&self, op: &'static str, other: &Self) -> Result<()> {
        if self.shape() != other.shape() {
            return Err(TensorError::ShapeMismatch {
                op,
                expected: vec![self.c, self.h, self.w],
                actual: vec![other.c, other.h, other.w],
            });
        }
        Ok(())
    }
}

/// Row-major dense matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix<T = f32> {
    rows: usize,
    cols: usize,
    data: Vec<T>,
}

impl<T: Real> Matrix<T> {
    pub fn new(rows: usize, cols: usize, data: Vec<T>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(TensorError::DataLength {
                shape: vec![rows, cols],
                len: data.len(),
            });
        }
        Ok(Self { rows, cols, data })
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![T::zero(); rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = T::one();
        }
        m
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> T) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for c in 0..cols {
                data.push(f(r, c));
            }
        }
        Self { rows, cols, data }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<T> {
        self.data
    }

    #[inline]
    pub fn at(&self, r: usize, c: usize) -> T {
        self.data[r * self.cols + c]
    }

    #[inline]
    pub fn at_mut(&mut self, r: usize, c: usize) -> &mut T {
        &mut self.data[r * self.cols + c]
    }

    pub fn row(&self, r: usize) -> &[T] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn transpose(&self) -> Self {
        Self::from_fn(self.cols, self.rows, |r, c| self.at(c, r))
    }

    pub fn cast<U: Real>(&self) -> Matrix<U> {
        Matrix {
            rows: self.rows,
            cols: self.cols,
            data: self
                .data
                .iter()
                .map(|v| U::from_f64(v.to_f64().unwrap_or(f64::NAN)).unwrap_or(U::nan()))
                .collect(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_wrong_data_length() {
        let err = Tensor::<f32>::new(2, 2, 2, vec![0.0; 7]).unwrap_err();
        assert!(matches!(err, TensorError::DataLength { len: 7, .. }));
    }

    #[test]
    fn matrix_round_trip_keeps_layout() {
        let t = Tensor::<f64>::from_fn(2, 3, 2, |c, i, j| (c * 100 + i * 10 + j) as f64);
        let m = t.to_matrix();
        assert_eq!(m.rows(), 2);
        assert_eq!(m.cols(), 6);
        assert_eq!(m.at(1, 3), 111.0);
        assert_eq!(Tensor::from_matrix(m, 3, 2).unwrap(), t);
    }
}
