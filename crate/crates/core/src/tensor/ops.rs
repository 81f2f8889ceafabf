//! Forward primitives and their adjoints.

use super::{Matrix, ParamBlob, ParamEntry, Real, Result, Tensor, TensorError};

/// Variance floor used by both normalisations.
pub const NORM_EPS: f64 = 1e-5;

/// Space-to-depth: `(c, h, w) -> (c*r*r, h/r, w/r)`.
///
/// Input element `(ch, i, j)` lands at
/// `(ch*r*r + (i % r)*r + (j % r), i / r, j / r)`.
pub fn pixel_unshuffle<T: Real>(x: &Tensor<T>, r: usize) -> Result<Tensor<T>> {
    let (c, h, w) = x.shape();
    if r == 0 {
        return Err(TensorError::InvalidArgument {
            op: "pixel_unshuffle",
            reason: "factor must be positive".into(),
        });
    }
    if h % r != 0 || w % r != 0 {
        return Err(TensorError::SpatialNotDivisible {
            op: "pixel_unshuffle",
            h,
            w,
            factor: r,
        });
    }
    let (oh, ow) = (h / r, w / r);
    let mut out = Tensor::zeros(c * r * r, oh, ow);
    for ch in 0..c {
        for i in 0..h {
            for j in 0..w {
                let oc = ch * r * r + (i % r) * r + (j % r);
                *out.at_mut(oc, i / r, j / r) = x.at(ch, i, j);
            }
        }
    }
    Ok(out)
}

/// Depth-to-space, the exact inverse of [`pixel_unshuffle`].
pub fn pixel_shuffle<T: Real>(x: &Tensor<T>, r: usize) -> Result<Tensor<T>> {
    let (c, h, w) = x.shape();
    if r == 0 {
        return Err(TensorError::InvalidArgument {
            op: "pixel_shuffle",
            reason: "factor must be positive".into(),
        });
    }
    if c % (r * r) != 0 {
        return Err(TensorError::ChannelsNotDivisible {
            op: "pixel_shuffle",
            channels: c,
            factor: r * r,
        });
    }
    let oc = c / (r * r);
    let mut out = Tensor::zeros(oc, h * r, w * r);
    for ch in 0..oc {
        for i in 0..h * r {
            for j in 0..w * r {
                let ic = ch * r * r + (i % r) * r + (j % r);
                *out.at_mut(ch, i, j) = x.at(ic, i / r, j / r);
            }
        }
    }
    Ok(out)
}

fn conv3x3_dims<T: Real>(
    x: &Tensor<T>,
    kernels: &ParamEntry<T>,
    groups: usize,
) -> Result<(usize, usize, usize)> {
    let c_in = x.channels();
    if groups == 0 || !c_in.is_multiple_of(groups) {
        return Err(TensorError::ChannelsNotDivisible {
            op: "grouped_conv3x3",
            channels: c_in,
            factor: groups.max(1),
        });
    }
    let shape = kernels.shape();
    let cin_g = c_in / groups;
    if shape.len() != 4 || shape[1] != cin_g || shape[2] != 3 || shape[3] != 3 || !shape[0].is_multiple_of(groups)
    {
        return Err(TensorError::ShapeMismatch {
            op: "grouped_conv3x3",
            expected: vec![shape.first().copied().unwrap_or(0), cin_g, 3, 3],
            actual: shape.to_vec(),
        });
    }
    let c_out = shape[0];
    Ok((c_out, cin_g, c_out / groups))
}

/// Grouped 3x3 cross-correlation, stride 1, zero padding 1.
///
/// `kernels` has shape `(c_out, c_in / groups, 3, 3)`.
pub fn grouped_conv3x3<T: Real>(
    x: &Tensor<T>,
    kernels: &ParamEntry<T>,
    groups: usize,
) -> Result<Tensor<T>> {
    let (c_out, cin_g, cout_g) = conv3x3_dims(x, kernels, groups)?;
    let (_, h, w) = x.shape();
    let k = kernels.data();
    let mut out = Tensor::zeros(c_out, h, w);
    for oc in 0..c_out {
        let g = oc / cout_g;
        for icg in 0..cin_g {
            let ic = g * cin_g + icg;
            let kbase = (oc * cin_g + icg) * 9;
            let src = x.channel(ic);
            let dst = out.channel_mut(oc);
            for i in 0..h {
                for j in 0..w {
                    let mut acc = T::zero();
                    for di in 0..3 {
                        let si = i as isize + di as isize - 1;
                        if si < 0 || si >= h as isize {
                            continue;
                        }
                        for dj in 0..3 {
                            let sj = j as isize + dj as isize - 1;
                            if sj < 0 || sj >= w as isize {
                                continue;
                            }
                            acc = acc + k[kbase + di * 3 + dj] * src[si as usize * w + sj as usize];
                        }
                    }
                    dst[i * w + j] = dst[i * w + j] + acc;
                }
            }
        }
    }
    Ok(out)
}

/// Adjoint of [`grouped_conv3x3`]: returns `(dx, dkernels)`.
pub fn grouped_conv3x3_backward<T: Real>(
    x: &Tensor<T>,
    kernels: &ParamEntry<T>,
    groups: usize,
    dy: &Tensor<T>,
) -> Result<(Tensor<T>, ParamEntry<T>)> {
    let (c_out, cin_g, cout_g) = conv3x3_dims(x, kernels, groups)?;
    let (c_in, h, w) = x.shape();
    if dy.shape() != (c_out, h, w) {
        return Err(TensorError::ShapeMismatch {
            op: "grouped_conv3x3_backward",
            expected: vec![c_out, h, w],
            actual: vec![dy.channels(), dy.height(), dy.width()],
        });
    }
    let k = kernels.data();
    let mut dx = Tensor::zeros(c_in, h, w);
    let mut dk = vec![T::zero(); k.len()];
    for oc in 0..c_out {
        let g = oc / cout_g;
        let g_out = dy.channel(oc);
        for icg in 0..cin_g {
            let ic = g * cin_g + icg;
            let kbase = (oc * cin_g + icg) * 9;
            for i in 0..h {
                for j in 0..w {
                    let gv = g_out[i * w + j];
                    if gv == T::zero() {
                        continue;
                    }
                    for di in 0..3 {
                        let si = i as isize + di as isize - 1;
                        if si < 0 || si >= h as isize {
                            continue;
                        }
                        for dj in 0..3 {
                            let sj = j as isize + dj as isize - 1;
                            if sj < 0 || sj >= w as isize {
                                continue;
                            }
                            let (si, sj) = (si as usize, sj as usize);
                            dk[kbase + di * 3 + dj] = dk[kbase + di * 3 + dj] + gv * x.at(ic, si, sj);
                            let d = dx.at_mut(ic, si, sj);
                            *d = *d + gv * k[kbase + di * 3 + dj];
                        }
                    }
                }
            }
        }
    }
    Ok((dx, ParamEntry::new(kernels.shape().to_vec(), dk)?))
}

fn patch_dims<T: Real>(x: &Tensor<T>, kernel: &ParamEntry<T>) -> Result<usize> {
    let (c_in, h, w) = x.shape();
    let shape = kernel.shape();
    if shape.len() != 4 || shape[1] != c_in || shape[2] != 2 || shape[3] != 2 {
        return Err(TensorError::ShapeMismatch {
            op: "patch_conv2x2",
            expected: vec![shape.first().copied().unwrap_or(0), c_in, 2, 2],
            actual: shape.to_vec(),
        });
    }
    if h % 2 != 0 || w % 2 != 0 {
        return Err(TensorError::SpatialNotDivisible {
            op: "patch_conv2x2",
            h,
            w,
            factor: 2,
        });
    }
    Ok(shape[0])
}

/// Non-overlapping 2x2 convolution with stride 2 (patch down-sampling).
///
/// `kernel` has shape `(c_out, c_in, 2, 2)`.
pub fn patch_conv2x2<T: Real>(x: &Tensor<T>, kernel: &ParamEntry<T>) -> Result<Tensor<T>> {
    let c_out = patch_dims(x, kernel)?;
    let (c_in, h, w) = x.shape();
    let (oh, ow) = (h / 2, w / 2);
    let k = kernel.data();
    let mut out = Tensor::zeros(c_out, oh, ow);
    for oc in 0..c_out {
        for ic in 0..c_in {
            let kb = (oc * c_in + ic) * 4;
            for i in 0..oh {
                for j in 0..ow {
                    let v = k[kb] * x.at(ic, 2 * i, 2 * j)
                        + k[kb + 1] * x.at(ic, 2 * i, 2 * j + 1)
                        + k[kb + 2] * x.at(ic, 2 * i + 1, 2 * j)
                        + k[kb + 3] * x.at(ic, 2 * i + 1, 2 * j + 1);
                    let o = out.at_mut(oc, i, j);
                    *o = *o + v;
                }
            }
        }
    }
    Ok(out)
}

/// Adjoint of [`patch_conv2x2`]: returns `(dx, dkernel)`.
pub fn patch_conv2x2_backward<T: Real>(
    x: &Tensor<T>,
    kernel: &ParamEntry<T>,
    dy: &Tensor<T>,
) -> Result<(Tensor<T>, ParamEntry<T>)> {
    let c_out = patch_dims(x, kernel)?;
    let (c_in, h, w) = x.shape();
    let (oh, ow) = (h / 2, w / 2);
    if dy.shape() != (c_out, oh, ow) {
        return Err(TensorError::ShapeMismatch {
            op: "patch_conv2x2_backward",
            expected: vec![c_out, oh, ow],
            actual: vec![dy.channels(), dy.height(), dy.width()],
        });
    }
    let k = kernel.data();
    let mut dk = vec![T::zero(); k.len()];
    let mut dx = Tensor::zeros(c_in, h, w);
    for oc in 0..c_out {
        for ic in 0..c_in {
            let kb = (oc * c_in + ic) * 4;
            for i in 0..oh {
                for j in 0..ow {
                    let g = dy.at(oc, i, j);
                    for (t, (di, dj)) in [(0, 0), (0, 1), (1, 0), (1, 1)].into_iter().enumerate() {
                        let (si, sj) = (2 * i + di, 2 * j + dj);
                        dk[kb + t] = dk[kb + t] + g * x.at(ic, si, sj);
                        let d = dx.at_mut(ic, si, sj);
                        *d = *d + g * k[kb + t];
                    }
                }
            }
        }
    }
    Ok((dx, ParamEntry::new(kernel.shape().to_vec(), dk)?))
}

/// Per-pixel channel mixing (a 1x1 convolution): `out[o] = sum_k w[o, k] * x[k]`.
pub fn linear_channel_map<T: Real>(x: &Tensor<T>, w: &Matrix<T>) -> Result<Tensor<T>> {
    if w.cols() != x.channels() {
        return Err(TensorError::ShapeMismatch {
            op: "linear_channel_map",
            expected: vec![w.rows(), x.channels()],
            actual: vec![w.rows(), w.cols()],
        });
    }
    let out = matmul(w, &x.to_matrix())?;
    Tensor::from_matrix(out, x.height(), x.width())
}

/// Adjoint of [`linear_channel_map`]: returns `(dx, dw)`.
pub fn linear_channel_map_backward<T: Real>(
    x: &Tensor<T>,
    w: &Matrix<T>,
    dy: &Tensor<T>,
) -> Result<(Tensor<T>, Matrix<T>)> {
    let (dw, dx) = matmul_backward(w, &x.to_matrix(), &dy.to_matrix())?;
    Ok((Tensor::from_matrix(dx, x.height(), x.width())?, dw))
}

pub fn matmul<T: Real>(a: &Matrix<T>, b: &Matrix<T>) -> Result<Matrix<T>> {
    if a.cols() != b.rows() {
        return Err(TensorError::ShapeMismatch {
            op: "matmul",
            expected: vec![a.cols(), b.cols()],
            actual: vec![b.rows(), b.cols()],
        });
    }
    let (n, m, p) = (a.rows(), a.cols(), b.cols());
    let mut out = Matrix::zeros(n, p);
    let bd = b.data();
    for i in 0..n {
        let arow = a.row(i);
        let orow = &mut out.data_mut()[i * p..(i + 1) * p];
        for (k, &av) in arow.iter().enumerate().take(m) {
            if av == T::zero() {
                continue;
            }
            let brow = &bd[k * p..(k + 1) * p];
            for (o, &bv) in orow.iter_mut().zip(brow) {
                *o = *o + av * bv;
            }
        }
    }
    Ok(out)
}

/// Adjoint of [`matmul`]: for `c = a b`, returns `(dc bᵀ, aᵀ dc)`.
pub fn matmul_backward<T: Real>(
    a: &Matrix<T>,
    b: &Matrix<T>,
    dc: &Matrix<T>,
) -> Result<(Matrix<T>, Matrix<T>)> {
    if dc.rows() != a.rows() || dc.cols() != b.cols() {
        return Err(TensorError::ShapeMismatch {
            op: "matmul_backward",
            expected: vec![a.rows(), b.cols()],
            actual: vec![dc.rows(), dc.cols()],
        });
    }
    let da = matmul(dc, &b.transpose())?;
    let db = matmul(&a.transpose(), dc)?;
    Ok((da, db))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Axis {
    /// Normalise each row (sum over columns).
    Rows,
    /// Normalise each column (sum over rows).
    Cols,
}

/// Max-subtracted softmax along `axis`.
pub fn softmax_axis<T: Real>(x: &Matrix<T>, axis: Axis) -> Matrix<T> {
    match axis {
        Axis::Rows => {
            let mut out = x.clone();
            let cols = x.cols();
            for row in out.data_mut().chunks_mut(cols.max(1)) {
                softmax_in_place(row);
            }
            out
        }
        Axis::Cols => softmax_axis(&x.transpose(), Axis::Rows).transpose(),
    }
}

fn softmax_in_place<T: Real>(v: &mut [T]) {
    let max = v.iter().copied().fold(T::neg_infinity(), T::max);
    let mut sum = T::zero();
    for e in v.iter_mut() {
        *e = (*e - max).exp();
        sum = sum + *e;
    }
    for e in v.iter_mut() {
        *e = *e / sum;
    }
}

/// Adjoint of [`softmax_axis`] given its output `y`.
pub fn softmax_axis_backward<T: Real>(y: &Matrix<T>, dy: &Matrix<T>, axis: Axis) -> Result<Matrix<T>> {
    if y.rows() != dy.rows() || y.cols() != dy.cols() {
        return Err(TensorError::ShapeMismatch {
            op: "softmax_axis_backward",
            expected: vec![y.rows(), y.cols()],
            actual: vec![dy.rows(), dy.cols()],
        });
    }
    match axis {
        Axis::Rows => {
            let cols = y.cols();
            let mut dx = Matrix::zeros(y.rows(), cols);
            for r in 0..y.rows() {
                let (yr, gr) = (y.row(r), dy.row(r));
                let inner: T = yr.iter().zip(gr).map(|(&a, &b)| a * b).sum();
                for c in 0..cols {
                    *dx.at_mut(r, c) = yr[c] * (gr[c] - inner);
                }
            }
            Ok(dx)
        }
        Axis::Cols => Ok(softmax_axis_backward(&y.transpose(), &dy.transpose(), Axis::Rows)?.transpose()),
    }
}

/// Per-channel affine terms of the spatial layer normalisation.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerNormParams<T = f32> {
    pub gamma: Vec<T>,
    pub beta: Vec<T>,
}

impl<T: Real> LayerNormParams<T> {
    pub fn identity(c: usize) -> Self {
        Self {
            gamma: vec![T::one(); c],
            beta: vec![T::zero(); c],
        }
    }

    pub fn zeros(c: usize) -> Self {
        Self {
            gamma: vec![T::zero(); c],
            beta: vec![T::zero(); c],
        }
    }
}

/// Inference-mode batch normalisation: stored statistics plus affine terms.
#[derive(Debug, Clone, PartialEq)]
pub struct BatchNormParams<T = f32> {
    pub gamma: Vec<T>,
    pub beta: Vec<T>,
    pub running_mean: Vec<T>,
    pub running_var: Vec<T>,
}

impl<T: Real> BatchNormParams<T> {
    /// Statistics `(0, 1 - eps)` so that the transform is exactly the identity.
    pub fn identity(c: usize) -> Self {
        Self {
            gamma: vec![T::one(); c],
            beta: vec![T::zero(); c],
            running_mean: vec![T::zero(); c],
            running_var: vec![T::one() - T::lit(NORM_EPS); c],
        }
    }

    pub fn zeros(c: usize) -> Self {
        Self {
            gamma: vec![T::zero(); c],
            beta: vec![T::zero(); c],
            running_mean: vec![T::zero(); c],
            running_var: vec![T::zero(); c],
        }
    }
}

fn check_channels<T: Real>(op: &'static str, x: &Tensor<T>, lens: &[usize]) -> Result<()> {
    for &len in lens {
        if len != x.channels() {
            return Err(TensorError::ShapeMismatch {
                op,
                expected: vec![x.channels()],
                actual: vec![len],
            });
        }
    }
    Ok(())
}

/// Normalises every channel over its `h*w` positions, then applies `gamma`/`beta`.
pub fn layer_norm<T: Real>(x: &Tensor<T>, p: &LayerNormParams<T>) -> Result<Tensor<T>> {
    check_channels("layer_norm", x, &[p.gamma.len(), p.beta.len()])?;
    let mut out = x.clone();
    let n = T::from_usize(x.spatial()).unwrap();
    let eps = T::lit(NORM_EPS);
    for ch in 0..x.channels() {
        let v = out.channel_mut(ch);
        let mean = v.iter().copied().sum::<T>() / n;
        let var = v.iter().map(|&e| (e - mean) * (e - mean)).sum::<T>() / n;
        let inv = T::one() / (var + eps).sqrt();
        for e in v.iter_mut() {
            *e = p.gamma[ch] * (*e - mean) * inv + p.beta[ch];
        }
    }
    Ok(out)
}

/// Adjoint of [`layer_norm`]: returns `(dx, dparams)`.
pub fn layer_norm_backward<T: Real>(
    x: &Tensor<T>,
    p: &LayerNormParams<T>,
    dy: &Tensor<T>,
) -> Result<(Tensor<T>, LayerNormParams<T>)> {
    check_channels("layer_norm_backward", x, &[p.gamma.len(), p.beta.len()])?;
    if dy.shape() != x.shape() {
        return Err(TensorError::ShapeMismatch {
            op: "layer_norm_backward",
            expected: vec![x.channels(), x.height(), x.width()],
            actual: vec![dy.channels(), dy.height(), dy.width()],
        });
    }
    let c = x.channels();
    let n = T::from_usize(x.spatial()).unwrap();
    let eps = T::lit(NORM_EPS);
    let mut dx = Tensor::zeros(c, x.height(), x.width());
    let mut grads = LayerNormParams::zeros(c);
    for ch in 0..c {
        let v = x.channel(ch);
        let g = dy.channel(ch);
        let mean = v.iter().copied().sum::<T>() / n;
        let var = v.iter().map(|&e| (e - mean) * (e - mean)).sum::<T>() / n;
        let inv = T::one() / (var + eps).sqrt();
        let xhat: Vec<T> = v.iter().map(|&e| (e - mean) * inv).collect();
        grads.gamma[ch] = g.iter().zip(&xhat).map(|(&a, &b)| a * b).sum();
        grads.beta[ch] = g.iter().copied().sum();
        let dxhat: Vec<T> = g.iter().map(|&a| a * p.gamma[ch]).collect();
        let mean_d = dxhat.iter().copied().sum::<T>() / n;
        let mean_dx = dxhat.iter().zip(&xhat).map(|(&a, &b)| a * b).sum::<T>() / n;
        for (o, (&d, &xh)) in dx.channel_mut(ch).iter_mut().zip(dxhat.iter().zip(&xhat)) {
            *o = inv * (d - mean_d - xh * mean_dx);
        }
    }
    Ok((dx, grads))
}

pub fn batch_norm_inference<T: Real>(x: &Tensor<T>, p: &BatchNormParams<T>) -> Result<Tensor<T>> {
    check_channels(
        "batch_norm_inference",
        x,
        &[p.gamma.len(), p.beta.len(), p.running_mean.len(), p.running_var.len()],
    )?;
    let eps = T::lit(NORM_EPS);
    let mut out = x.clone();
    for ch in 0..x.channels() {
        let scale = p.gamma[ch] / (p.running_var[ch] + eps).sqrt();
        let (m, b) = (p.running_mean[ch], p.beta[ch]);
        for e in out.channel_mut(ch) {
            *e = (*e - m) * scale + b;
        }
    }
    Ok(out)
}

/// Adjoint of [`batch_norm_inference`], including the (frozen) statistics.
pub fn batch_norm_inference_backward<T: Real>(
    x: &Tensor<T>,
    p: &BatchNormParams<T>,
    dy: &Tensor<T>,
) -> Result<(Tensor<T>, BatchNormParams<T>)> {
    check_channels(
        "batch_norm_inference_backward",
        x,
        &[p.gamma.len(), p.beta.len(), p.running_mean.len(), p.running_var.len()],
    )?;
    let eps = T::lit(NORM_EPS);
    let c = x.channels();
    let mut dx = Tensor::zeros(c, x.height(), x.width());
    let mut grads = BatchNormParams::zeros(c);
    let half = T::lit(0.5);
    for ch in 0..c {
        let denom = p.running_var[ch] + eps;
        let inv = T::one() / denom.sqrt();
        let m = p.running_mean[ch];
        let (xs, gs) = (x.channel(ch), dy.channel(ch));
        let mut sum_g = T::zero();
        let mut sum_gc = T::zero();
        for (o, (&xv, &g)) in dx.channel_mut(ch).iter_mut().zip(xs.iter().zip(gs)) {
            *o = g * p.gamma[ch] * inv;
            sum_g = sum_g + g;
            sum_gc = sum_gc + g * (xv - m);
        }
        grads.beta[ch] = sum_g;
        grads.gamma[ch] = sum_gc * inv;
        grads.running_mean[ch] = -sum_g * p.gamma[ch] * inv;
        grads.running_var[ch] = -half * p.gamma[ch] * sum_gc * inv / denom;
    }
    Ok((dx, grads))
}

/// `v` for `v >= 0`, `slope * v` otherwise.
pub fn prelu<T: Real>(x: &Tensor<T>, slope: T) -> Tensor<T> {
    x.map(|v| if v >= T::zero() { v } else { slope * v })
}

/// Adjoint of [`prelu`]: returns `(dx, dslope)`.
pub fn prelu_backward<T: Real>(x: &Tensor<T>, slope: T, dy: &Tensor<T>) -> Result<(Tensor<T>, T)> {
    if dy.shape() != x.shape() {
        return Err(TensorError::ShapeMismatch {
            op: "prelu_backward",
            expected: vec![x.channels(), x.height(), x.width()],
            actual: vec![dy.channels(), dy.height(), dy.width()],
        });
    }
    let mut dslope = T::zero();
    let mut dx = dy.clone();
    for (d, &v) in dx.data_mut().iter_mut().zip(x.data()) {
        if v < T::zero() {
            dslope = dslope + *d * v;
            *d = *d * slope;
        }
    }
    Ok((dx, dslope))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NormMode {
    LayerNorm,
    BatchNormInference,
    Prelu,
}

/// Normalisation/activation driven by a named parameter blob.
///
/// Expected entries: `gamma`, `beta` (layer norm); additionally
/// `running_mean`, `running_var` (batch norm); `slope` (PReLU, defaults to
/// 0.25 when absent).
pub fn norm_act<T: Real>(x: &Tensor<T>, params: &ParamBlob<T>, mode: NormMode) -> Result<Tensor<T>> {
    match mode {
        NormMode::LayerNorm => layer_norm(
            x,
            &LayerNormParams {
                gamma: params.require("gamma")?.data().to_vec(),
                beta: params.require("beta")?.data().to_vec(),
            },
        ),
        NormMode::BatchNormInference => batch_norm_inference(
            x,
            &BatchNormParams {
                gamma: params.require("gamma")?.data().to_vec(),
                beta: params.require("beta")?.data().to_vec(),
                running_mean: params.require("running_mean")?.data().to_vec(),
                running_var: params.require("running_var")?.data().to_vec(),
            },
        ),
        NormMode::Prelu => {
            let slope = match params.get("slope") {
                Some(e) => *e.data().first().ok_or_else(|| {
                    TensorError::Blob("`slope` must hold one value".into())
                })?,
                None => T::lit(0.25),
            };
            Ok(prelu(x, slope))
        }
    }
}
