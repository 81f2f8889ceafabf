//! Panel attention: lossless down-sampling attention.
//!
//! The block maps `(c, h, w) -> (c, h/2, w/2)`:
//!
//! 1. optional `c x c` transition,
//! 2. pixel-unshuffle by 2 to `(4c, h/2, w/2)`,
//! 3. depth-wise 3x3 local attention over the `4c` channels,
//! 4. four panel streams `X'`, `Q`, `K`, `V`, each taking every 4th channel
//!    (offsets 0..4) followed by its own `c x c` map,
//! 5. dot-product attention of `Q`, `K`, `V` at the reduced size,
//! 6. `y = act(norm(X' + attention)) + skip(x)` where `skip` is a stride-2
//!    2x2 patch convolution of the block input.

mod gradcheck;
mod macs;

use rand::Rng;
use thiserror::Error;

use crate::tensor::ops::{
    batch_norm_inference_backward, grouped_conv3x3_backward, layer_norm_backward,
    linear_channel_map_backward, matmul_backward, patch_conv2x2_backward, prelu_backward,
    softmax_axis_backward,
};
use crate::tensor::{
    batch_norm_inference, grouped_conv3x3, layer_norm, linear_channel_map, matmul, patch_conv2x2,
    pixel_shuffle, pixel_unshuffle, prelu, softmax_axis, Axis, BatchNormParams, LayerNormParams,
    Matrix, ParamBlob, ParamEntry, Real, Tensor, TensorError,
};

pub use gradcheck::{check_panel_gradients, GradCheckReport, GroupError, GRAD_REL_TOL};
pub use macs::{mac_count, AttentionKind, MacBreakdown};

/// Channel stride of the panel grouping.
pub const PANEL_STRIDE: usize = 4;

/// Default PReLU slope when none is configured.
pub const DEFAULT_PRELU_SLOPE: f64 = 0.25;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AttentionError {
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error("panel attention needs even spatial dims, got {h}x{w}")]
    OddSpatial { h: usize, w: usize },
    #[error("panel start {start} outside 1..={stride}")]
    StartOutOfRange { start: usize, stride: usize },
    #[error("parameter `{name}` has shape {actual:?}, expected {expected:?}")]
    ParamShape {
        name: &'static str,
        expected: Vec<usize>,
        actual: Vec<usize>,
    },
    #[error("block requires {0}")]
    MissingStage(&'static str),
    #[error("invalid dimensions: {0}")]
    InvalidDims(String),
}

pub type Result<T, E = AttentionError> = std::result::Result<T, E>;

/// Stream order inside [`PanelParams::stream_maps`].
pub const STREAM_NAMES: [&str; 4] = ["x", "q", "k", "v"];

/// Weights of one panel attention block over `c` channels.
///
/// The same type carries parameter gradients returned by
/// [`panel_attention_backward`].
#[derive(Debug, Clone, PartialEq)]
pub struct PanelParams<T = f32> {
    pub channels: usize,
    pub transition: Option<Matrix<T>>,
    /// Depth-wise kernels, shape `(4c, 1, 3, 3)`.
    pub local_kernels: ParamEntry<T>,
    /// `X'`, `Q`, `K`, `V` maps, each `c x c`.
    pub stream_maps: [Matrix<T>; 4],
    pub layer_norm: Option<LayerNormParams<T>>,
    pub batch_norm: Option<BatchNormParams<T>>,
    pub prelu_slope: T,
    /// Patch down-sampling skip, shape `(c, c, 2, 2)`.
    pub skip_down: ParamEntry<T>,
}

impl<T: Real> PanelParams<T> {
    /// All-zero weights, no transition, no normalisation, slope 0.
    pub fn zeros(c: usize) -> Self {
        Self {
            channels: c,
            transition: None,
            local_kernels: ParamEntry::zeros(vec![4 * c, 1, 3, 3]),
            stream_maps: std::array::from_fn(|_| Matrix::zeros(c, c)),
            layer_norm: None,
            batch_norm: None,
            prelu_slope: T::zero(),
            skip_down: ParamEntry::zeros(vec![c, c, 2, 2]),
        }
    }

    /// Uniform fan-in scaled initialisation with double normalisation,
    /// unit-gain norms and the default PReLU slope.
    pub fn random(c: usize, with_transition: bool, rng: &mut impl Rng) -> Self {
        let mut uniform = |n: usize, fan_in: usize| -> Vec<T> {
            let bound = 1.0 / (fan_in as f64).sqrt();
            (0..n).map(|_| T::lit(rng.random_range(-bound..bound))).collect()
        };
        let transition = with_transition.then(|| Matrix::new(c, c, uniform(c * c, c)).unwrap());
        let local_kernels = ParamEntry::new(vec![4 * c, 1, 3, 3], uniform(36 * c, 9)).unwrap();
        let stream_maps = std::array::from_fn(|_| Matrix::new(c, c, uniform(c * c, c)).unwrap());
        let skip_down = ParamEntry::new(vec![c, c, 2, 2], uniform(4 * c * c, 4 * c)).unwrap();
        Self {
            channels: c,
            transition,
            local_kernels,
            stream_maps,
            layer_norm: Some(LayerNormParams::identity(c)),
            batch_norm: Some(BatchNormParams::identity(c)),
            prelu_slope: T::lit(DEFAULT_PRELU_SLOPE),
            skip_down,
        }
    }

    /// Number of weights in the four stream maps: `4 c^2`.
    pub fn stream_weight_count(&self) -> usize {
        self.stream_maps.iter().map(|m| m.rows() * m.cols()).sum()
    }

    pub fn validate(&self) -> Result<()> {
        let c = self.channels;
        if c == 0 {
            return Err(AttentionError::InvalidDims("zero channels".into()));
        }
        let check = |name: &'static str, actual: Vec<usize>, expected: Vec<usize>| {
            if actual == expected {
                Ok(())
            } else {
                Err(AttentionError::ParamShape {
                    name,
                    expected,
                    actual,
                })
            }
        };
        if let Some(t) = &self.transition {
            check("transition", vec![t.rows(), t.cols()], vec![c, c])?;
        }
        check("local_kernels", self.local_kernels.shape().to_vec(), vec![4 * c, 1, 3, 3])?;
        for m in &self.stream_maps {
            check("stream_maps", vec![m.rows(), m.cols()], vec![c, c])?;
        }
        if let Some(ln) = &self.layer_norm {
            check("layer_norm", vec![ln.gamma.len(), ln.beta.len()], vec![c, c])?;
        }
        if let Some(bn) = &self.batch_norm {
            check(
                "batch_norm",
                vec![bn.gamma.len(), bn.beta.len(), bn.running_mean.len(), bn.running_var.len()],
                vec![c; 4],
            )?;
        }
        check("skip_down", self.skip_down.shape().to_vec(), vec![c, c, 2, 2])
    }

    /// Flatten into a named blob (the JSON manifest layout).
    pub fn to_blob(&self) -> ParamBlob<T> {
        let c = self.channels;
        let mut b = ParamBlob::new();
        let vec_entry = |v: &[T]| ParamEntry::new(vec![v.len()], v.to_vec()).unwrap();
        if let Some(t) = &self.transition {
            b.insert("transition", ParamEntry::new(vec![c, c], t.data().to_vec()).unwrap());
        }
        b.insert("local_kernels", self.local_kernels.clone());
        for (name, m) in STREAM_NAMES.iter().zip(&self.stream_maps) {
            b.insert(
                format!("stream_maps.{name}"),
                ParamEntry::new(vec![c, c], m.data().to_vec()).unwrap(),
            );
        }
        if let Some(ln) = &self.layer_norm {
            b.insert("layer_norm.gamma", vec_entry(&ln.gamma));
            b.insert("layer_norm.beta", vec_entry(&ln.beta));
        }
        if let Some(bn) = &self.batch_norm {
            b.insert("batch_norm.gamma", vec_entry(&bn.gamma));
            b.insert("batch_norm.beta", vec_entry(&bn.beta));
            b.insert("batch_norm.running_mean", vec_entry(&bn.running_mean));
            b.insert("batch_norm.running_var", vec_entry(&bn.running_var));
        }
        b.insert("prelu_slope", vec_entry(&[self.prelu_slope]));
        b.insert("skip_down", self.skip_down.clone());
        b
    }

    /// Inverse of [`to_blob`](Self::to_blob). Optional stages are present
    /// exactly when their entries are.
    pub fn from_blob(blob: &ParamBlob<T>) -> Result<Self> {
        let kernels = blob.require("local_kernels")?;
        let c = kernels.shape().first().copied().unwrap_or(0) / 4;
        let square = |name: &str| -> Result<Matrix<T>> {
            Ok(Matrix::new(c, c, blob.require_shape(name, &[c, c])?.data().to_vec())?)
        };
        let vector = |name: &str| -> Result<Vec<T>> { Ok(blob.require_shape(name, &[c])?.data().to_vec()) };
        let transition = match blob.get("transition") {
            Some(_) => Some(square("transition")?),
            None => None,
        };
        let stream_maps = [
            square("stream_maps.x")?,
            square("stream_maps.q")?,
            square("stream_maps.k")?,
            square("stream_maps.v")?,
        ];
        let layer_norm = match blob.get("layer_norm.gamma") {
            Some(_) => Some(LayerNormParams {
                gamma: vector("layer_norm.gamma")?,
                beta: vector("layer_norm.beta")?,
            }),
            None => None,
        };
        let batch_norm = match blob.get("batch_norm.gamma") {
            Some(_) => Some(BatchNormParams {
                gamma: vector("batch_norm.gamma")?,
                beta: vector("batch_norm.beta")?,
                running_mean: vector("batch_norm.running_mean")?,
                running_var: vector("batch_norm.running_var")?,
            }),
            None => None,
        };
        let prelu_slope = match blob.get("prelu_slope") {
            Some(_) => blob.require_shape("prelu_slope", &[1])?.data()[0],
            None => T::lit(DEFAULT_PRELU_SLOPE),
        };
        let params = Self {
            channels: c,
            transition,
            local_kernels: kernels.clone(),
            stream_maps,
            layer_norm,
            batch_norm,
            prelu_slope,
            skip_down: blob.require("skip_down")?.clone(),
        };
        params.validate()?;
        Ok(params)
    }

    pub fn cast<U: Real>(&self) -> PanelParams<U> {
        let v = |x: &[T]| -> Vec<U> { x.iter().map(|e| U::lit(e.to_f64().unwrap())).collect() };
        PanelParams {
            channels: self.channels,
            transition: self.transition.as_ref().map(Matrix::cast),
            local_kernels: self.local_kernels.cast(),
            stream_maps: std::array::from_fn(|i| self.stream_maps[i].cast()),
            layer_norm: self.layer_norm.as_ref().map(|p| LayerNormParams {
                gamma: v(&p.gamma),
                beta: v(&p.beta),
            }),
            batch_norm: self.batch_norm.as_ref().map(|p| BatchNormParams {
                gamma: v(&p.gamma),
                beta: v(&p.beta),
                running_mean: v(&p.running_mean),
                running_var: v(&p.running_var),
            }),
            prelu_slope: U::lit(self.prelu_slope.to_f64().unwrap()),
            skip_down: self.skip_down.cast(),
        }
    }
}

/// Intermediate tensors of one forward pass.
#[derive(Debug, Clone, PartialEq)]
pub struct PanelTrace<T = f32> {
    /// After the optional transition, `(c, h, w)`.
    pub x_l: Tensor<T>,
    /// Unshuffled, `(4c, h/2, w/2)`.
    pub x_s: Tensor<T>,
    /// After the depth-wise local attention, `(4c, h/2, w/2)`.
    pub x_la: Tensor<T>,
    /// Raw panel selections before the stream maps, each `(c, h/2, w/2)`.
    pub selections: [Tensor<T>; 4],
    /// `X'`, `Q`, `K`, `V` after their maps.
    pub streams: [Tensor<T>; 4],
    /// Row-stochastic attention weights, `s' x s'` with `s' = hw/4`.
    pub attention: Matrix<T>,
    pub x_ga: Tensor<T>,
    /// `X' + X_ga` before normalisation.
    pub pre_norm: Tensor<T>,
    pub after_layer_norm: Tensor<T>,
    pub after_batch_norm: Tensor<T>,
    pub activated: Tensor<T>,
    pub skip: Tensor<T>,
    pub y: Tensor<T>,
}

impl<T: Real> PanelTrace<T> {
    pub fn x_prime(&self) -> &Tensor<T> {
        &self.streams[0]
    }
    pub fn q(&self) -> &Tensor<T> {
        &self.streams[1]
    }
    pub fn k(&self) -> &Tensor<T> {
        &self.streams[2]
    }
    pub fn v(&self) -> &Tensor<T> {
        &self.streams[3]
    }
}

/// Channels `start-1, start-1+p, start-1+2p, ...` of `x` (`start` is 1-based).
pub fn select_panel_group<T: Real>(x: &Tensor<T>, start: usize, p: usize) -> Result<Tensor<T>> {
    if p == 0 || start == 0 || start > p {
        return Err(AttentionError::StartOutOfRange { start, stride: p });
    }
    let (c, h, w) = x.shape();
    if c % p != 0 {
        return Err(TensorError::ChannelsNotDivisible {
            op: "select_panel_group",
            channels: c,
            factor: p,
        }
        .into());
    }
    let mut out = Tensor::zeros(c / p, h, w);
    for g in 0..c / p {
        out.channel_mut(g).copy_from_slice(x.channel(g * p + start - 1));
    }
    Ok(out)
}

/// Writes `group` back into the channels [`select_panel_group`] reads from.
pub fn scatter_panel_group<T: Real>(
    target: &mut Tensor<T>,
    group: &Tensor<T>,
    start: usize,
    p: usize,
) -> Result<()> {
    if p == 0 || start == 0 || start > p {
        return Err(AttentionError::StartOutOfRange { start, stride: p });
    }
    let (c, h, w) = target.shape();
    if group.shape() != (c / p, h, w) || c % p != 0 {
        return Err(TensorError::ShapeMismatch {
            op: "scatter_panel_group",
            expected: vec![c / p, h, w],
            actual: vec![group.channels(), group.height(), group.width()],
        }
        .into());
    }
    for g in 0..c / p {
        target.channel_mut(g * p + start - 1).copy_from_slice(group.channel(g));
    }
    Ok(())
}

fn check_qkv<T: Real>(q: &Tensor<T>, k: &Tensor<T>, v: &Tensor<T>) -> Result<()> {
    for other in [k, v] {
        if other.shape() != q.shape() {
            return Err(TensorError::ShapeMismatch {
                op: "nl_attention",
                expected: vec![q.channels(), q.height(), q.width()],
                actual: vec![other.channels(), other.height(), other.width()],
            }
            .into());
        }
    }
    Ok(())
}

/// Non-local dot-product attention. Returns the output and the `s x s`
/// weights `softmax_rows(Qᵀ K)`.
pub fn nl_attention_with_weights<T: Real>(
    q: &Tensor<T>,
    k: &Tensor<T>,
    v: &Tensor<T>,
) -> Result<(Tensor<T>, Matrix<T>)> {
    check_qkv(q, k, v)?;
    let (qm, km, vm) = (q.to_matrix(), k.to_matrix(), v.to_matrix());
    let scores = matmul(&qm.transpose(), &km)?;
    let a = softmax_axis(&scores, Axis::Rows);
    // (A Vᵀ)ᵀ = V Aᵀ
    let out = matmul(&vm, &a.transpose())?;
    Ok((Tensor::from_matrix(out, q.height(), q.width())?, a))
}

pub fn nl_attention<T: Real>(q: &Tensor<T>, k: &Tensor<T>, v: &Tensor<T>) -> Result<Tensor<T>> {
    Ok(nl_attention_with_weights(q, k, v)?.0)
}

/// Adjoint of [`nl_attention`] given the forward weights `a`.
pub fn nl_attention_backward<T: Real>(
    q: &Tensor<T>,
    k: &Tensor<T>,
    v: &Tensor<T>,
    a: &Matrix<T>,
    dout: &Tensor<T>,
) -> Result<(Tensor<T>, Tensor<T>, Tensor<T>)> {
    check_qkv(q, k, v)?;
    let (h, w) = (q.height(), q.width());
    let (qm, km, vm) = (q.to_matrix(), k.to_matrix(), v.to_matrix());
    let at = a.transpose();
    let (dv, dat) = matmul_backward(&vm, &at, &dout.to_matrix())?;
    let ds = softmax_axis_backward(a, &dat.transpose(), Axis::Rows)?;
    let (dqt, dk) = matmul_backward(&qm.transpose(), &km, &ds)?;
    Ok((
        Tensor::from_matrix(dqt.transpose(), h, w)?,
        Tensor::from_matrix(dk, h, w)?,
        Tensor::from_matrix(dv, h, w)?,
    ))
}

fn check_input<T: Real>(x: &Tensor<T>, params: &PanelParams<T>) -> Result<()> {
    params.validate()?;
    let (c, h, w) = x.shape();
    if h % 2 != 0 || w % 2 != 0 || h == 0 || w == 0 {
        return Err(AttentionError::OddSpatial { h, w });
    }
    if c != params.channels {
        return Err(TensorError::ShapeMismatch {
            op: "panel_attention",
            expected: vec![params.channels, h, w],
            actual: vec![c, h, w],
        }
        .into());
    }
    Ok(())
}

/// Forward pass of the panel attention block. Output `(c, h/2, w/2)`.
pub fn panel_attention_forward<T: Real>(
    x: &Tensor<T>,
    params: &PanelParams<T>,
) -> Result<(Tensor<T>, PanelTrace<T>)> {
    check_input(x, params)?;
    let c4 = 4 * params.channels;
    let x_l = match &params.transition {
        Some(t) => linear_channel_map(x, t)?,
        None => x.clone(),
    };
    let x_s = pixel_unshuffle(&x_l, 2)?;
    let x_la = grouped_conv3x3(&x_s, &params.local_kernels, c4)?;
    let mut selections = Vec::with_capacity(4);
    let mut streams = Vec::with_capacity(4);
    for (idx, map) in params.stream_maps.iter().enumerate() {
        let sel = select_panel_group(&x_la, idx + 1, PANEL_STRIDE)?;
        streams.push(linear_channel_map(&sel, map)?);
        selections.push(sel);
    }
    let selections: [Tensor<T>; 4] = selections.try_into().expect("four streams");
    let streams: [Tensor<T>; 4] = streams.try_into().expect("four streams");
    let (x_ga, attention) = nl_attention_with_weights(&streams[1], &streams[2], &streams[3])?;
    let pre_norm = streams[0].add(&x_ga)?;
    let after_layer_norm = match &params.layer_norm {
        Some(p) => layer_norm(&pre_norm, p)?,
        None => pre_norm.clone(),
    };
    let after_batch_norm = match &params.batch_norm {
        Some(p) => batch_norm_inference(&after_layer_norm, p)?,
        None => after_layer_norm.clone(),
    };
    let activated = prelu(&after_batch_norm, params.prelu_slope);
    let skip = patch_conv2x2(x, &params.skip_down)?;
    let y = activated.add(&skip)?;
    let trace = PanelTrace {
        x_l,
        x_s,
        x_la,
        selections,
        streams,
        attention,
        x_ga,
        pre_norm,
        after_layer_norm,
        after_batch_norm,
        activated,
        skip,
        y: y.clone(),
    };
    Ok((y, trace))
}

/// Gradients of `L = <dy, y>` with respect to the input and every weight.
pub fn panel_attention_backward<T: Real>(
    x: &Tensor<T>,
    params: &PanelParams<T>,
    dy: &Tensor<T>,
) -> Result<(Tensor<T>, PanelParams<T>)> {
    let (y, tr) = panel_attention_forward(x, params)?;
    if dy.shape() != y.shape() {
        return Err(TensorError::ShapeMismatch {
            op: "panel_attention_backward",
            expected: vec![y.channels(), y.height(), y.width()],
            actual: vec![dy.channels(), dy.height(), dy.width()],
        }
        .into());
    }
    let c = params.channels;
    let mut grads = PanelParams::zeros(c);

    let (mut dx, dskip) = patch_conv2x2_backward(x, &params.skip_down, dy)?;
    grads.skip_down = dskip;

    let (d_bn_out, dslope) = prelu_backward(&tr.after_batch_norm, params.prelu_slope, dy)?;
    grads.prelu_slope = dslope;
    let d_ln_out = match &params.batch_norm {
        Some(p) => {
            let (d, g) = batch_norm_inference_backward(&tr.after_layer_norm, p, &d_bn_out)?;
            grads.batch_norm = Some(g);
            d
        }
        None => d_bn_out,
    };
    let d_pre = match &params.layer_norm {
        Some(p) => {
            let (d, g) = layer_norm_backward(&tr.pre_norm, p, &d_ln_out)?;
            grads.layer_norm = Some(g);
            d
        }
        None => d_ln_out,
    };

    let (dq, dk, dv) = nl_attention_backward(
        &tr.streams[1],
        &tr.streams[2],
        &tr.streams[3],
        &tr.attention,
        &d_pre,
    )?;
    let d_streams = [d_pre, dq, dk, dv];
    let mut d_la = Tensor::zeros(4 * c, tr.x_la.height(), tr.x_la.width());
    for (idx, d_stream) in d_streams.iter().enumerate() {
        let (d_sel, d_map) =
            linear_channel_map_backward(&tr.selections[idx], &params.stream_maps[idx], d_stream)?;
        grads.stream_maps[idx] = d_map;
        scatter_panel_group(&mut d_la, &d_sel, idx + 1, PANEL_STRIDE)?;
    }
    let (d_s, d_kernels) = grouped_conv3x3_backward(&tr.x_s, &params.local_kernels, 4 * c, &d_la)?;
    grads.local_kernels = d_kernels;
    let d_l = pixel_shuffle(&d_s, 2)?;
    match &params.transition {
        Some(t) => {
            let (d, dt) = linear_channel_map_backward(x, t, &d_l)?;
            grads.transition = Some(dt);
            dx.add_assign(&d)?;
        }
        None => dx.add_assign(&d_l)?,
    }
    Ok((dx, grads))
}

/// The backbone block: panel attention with layer norm followed by batch
/// norm and a PReLU activation. Both normalisation stages must be set.
pub fn upa_block_forward<T: Real>(x: &Tensor<T>, params: &PanelParams<T>) -> Result<Tensor<T>> {
    if params.layer_norm.is_none() {
        return Err(AttentionError::MissingStage("layer normalisation"));
    }
    if params.batch_norm.is_none() {
        return Err(AttentionError::MissingStage("batch normalisation"));
    }
    Ok(panel_attention_forward(x, params)?.0)
}

#[cfg(test)]
mod tests;
