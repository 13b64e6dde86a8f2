use ndarray::linalg::general_mat_mul;
use ndarray::{s, Array1, Array2, Array3, ArrayView2, Axis};

use super::{DenseParams, SpectralConvParams};
use crate::error::{Error, Result};
use crate::graph::{CoarseningHierarchy, SpectralBasis};

/// A batch of per-node feature matrices stored as `(nodes, batch, channels)`.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureBatch(pub Array3<f64>);

impl FeatureBatch {
    pub fn zeros(nodes: usize, batch: usize, channels: usize) -> Self {
        Self(Array3::zeros((nodes, batch, channels)))
    }

    /// Stacks `nodes × channels` samples into one batch.
    pub fn from_samples<'a>(samples: impl IntoIterator<Item = ArrayView2<'a, f64>>) -> Result<Self> {
        let samples: Vec<_> = samples.into_iter().collect();
        let Some(first) = samples.first() else {
            return Err(Error::Shape("empty batch".into()));
        };
        let (m, c) = first.dim();
        let mut out = Array3::zeros((m, samples.len(), c));
        for (b, s) in samples.iter().enumerate() {
            if s.dim() != (m, c) {
                return Err(Error::Shape(format!("sample {b} is {:?}, expected {:?}", s.dim(), (m, c))));
            }
            out.slice_mut(s![.., b, ..]).assign(s);
        }
        Ok(Self(out))
    }

    pub fn nodes(&self) -> usize {
        self.0.dim().0
    }

    pub fn batch(&self) -> usize {
        self.0.dim().1
    }

    pub fn channels(&self) -> usize {
        self.0.dim().2
    }

    /// The `nodes × channels` matrix of one sample.
    pub fn sample(&self, b: usize) -> ArrayView2<'_, f64> {
        self.0.slice(s![.., b, ..])
    }
}

/// Applies `op` (an `m × m` matrix) to every column of the `(m, batch·c)`
/// unfolding of `x`.
fn node_transform(op: ArrayView2<f64>, x: &Array3<f64>) -> Array3<f64> {
    let (m, b, c) = x.dim();
    let x = x.as_standard_layout();
    let flat = x.view().into_shape_with_order((m, b * c)).expect("contiguous");
    let mut out = Array2::zeros((op.nrows(), b * c));
    general_mat_mul(1.0, &op, &flat, 0.0, &mut out);
    out.into_shape_with_order((op.nrows(), b, c)).expect("contiguous")
}

/// `Φᵀ x` per channel and sample.
pub(crate) fn to_spectral(basis: &SpectralBasis, x: &Array3<f64>) -> Array3<f64> {
    node_transform(basis.eigenvectors.t(), x)
}

/// `Φ x̂` per channel and sample.
pub(crate) fn from_spectral(basis: &SpectralBasis, x: &Array3<f64>) -> Array3<f64> {
    node_transform(basis.eigenvectors.view(), x)
}

fn check_conv(params: &SpectralConvParams, basis: &SpectralBasis, nodes: usize, channels: usize) -> Result<()> {
    if nodes != basis.len() || nodes != params.nodes() {
        return Err(Error::Shape(format!(
            "signal has {nodes} nodes, basis {} and filters {}",
            basis.len(),
            params.nodes()
        )));
    }
    if channels != params.in_channels() {
        return Err(Error::Shape(format!(
            "signal has {channels} channels, filters expect {}",
            params.in_channels()
        )));
    }
    Ok(())
}

/// Spectral graph convolution without nonlinearity:
/// `y_k = Σ_{k'} Φ diag(ĝ_{k,k',·}) Φᵀ x_{k'}`.
pub fn spectral_conv_forward(
    params: &SpectralConvParams,
    basis: &SpectralBasis,
    input: &FeatureBatch,
) -> Result<FeatureBatch> {
    Ok(conv_forward_cached(params, basis, input)?.0)
}

/// Forward pass that also returns the spectral input `Φᵀ x` for backward.
pub(crate) fn conv_forward_cached(
    params: &SpectralConvParams,
    basis: &SpectralBasis,
    input: &FeatureBatch,
) -> Result<(FeatureBatch, Array3<f64>)> {
    check_conv(params, basis, input.nodes(), input.channels())?;
    let (m, b, _) = input.0.dim();
    let q = params.out_channels();
    let x_hat = to_spectral(basis, &input.0);
    let mut y_hat = Array3::zeros((m, b, q));
    for i in 0..m {
        let g_i = params.filters.slice(s![.., .., i]);
        let mut y_i = y_hat.index_axis_mut(Axis(0), i);
        general_mat_mul(1.0, &x_hat.index_axis(Axis(0), i), &g_i.t(), 0.0, &mut y_i);
    }
    Ok((FeatureBatch(from_spectral(basis, &y_hat)), x_hat))
}

/// Backward pass of a spectral convolution.
///
/// Given `dy = ∂L/∂y` and the cached `x̂ = Φᵀ x`, returns the filter gradient
/// `∂L/∂ĝ_{k,k',i} = Σ_b (Φᵀ dy_k)_i (x̂_{k'})_i` and, if requested, `∂L/∂x`.
pub(crate) fn conv_backward(
    params: &SpectralConvParams,
    basis: &SpectralBasis,
    x_hat: &Array3<f64>,
    dy: &Array3<f64>,
    want_input_grad: bool,
) -> (Array3<f64>, Option<Array3<f64>>) {
    let (m, b, p) = x_hat.dim();
    let dy_hat = to_spectral(basis, dy);
    let mut dg = Array3::zeros(params.filters.raw_dim());
    for i in 0..m {
        let mut dg_i = dg.slice_mut(s![.., .., i]);
        general_mat_mul(
            1.0,
            &dy_hat.index_axis(Axis(0), i).t(),
            &x_hat.index_axis(Axis(0), i),
            0.0,
            &mut dg_i,
        );
    }
    let dx = want_input_grad.then(|| {
        let mut dx_hat = Array3::zeros((m, b, p));
        for i in 0..m {
            let g_i = params.filters.slice(s![.., .., i]);
            let mut dx_i = dx_hat.index_axis_mut(Axis(0), i);
            general_mat_mul(1.0, &dy_hat.index_axis(Axis(0), i), &g_i, 0.0, &mut dx_i);
        }
        from_spectral(basis, &dx_hat)
    });
    (dg, dx)
}

pub fn relu(input: &FeatureBatch) -> FeatureBatch {
    FeatureBatch(input.0.mapv(|v| v.max(0.0)))
}

/// Zeroes `grad` wherever `pre` is not strictly positive.
pub(crate) fn relu_backward<D: ndarray::Dimension>(
    grad: &mut ndarray::Array<f64, D>,
    pre: &ndarray::Array<f64, D>,
) {
    ndarray::Zip::from(grad).and(pre).for_each(|g, &p| {
        if p <= 0.0 {
            *g = 0.0;
        }
    });
}

/// Source node (at the finer level) of each pooled value, same shape as the
/// pooled batch.
pub type PoolIndices = Array3<usize>;

/// Max pooling with factor 2 from `level` to `level + 1`: output node `j`
/// takes the maximum of input nodes `2j` and `2j + 1`, ties going to `2j`.
pub fn graph_max_pool(
    h: &CoarseningHierarchy,
    level: usize,
    input: &FeatureBatch,
) -> Result<(FeatureBatch, PoolIndices)> {
    if level + 1 >= h.num_levels() {
        return Err(Error::InvalidArgument(format!(
            "cannot pool from level {level} of a {}-level hierarchy",
            h.num_levels()
        )));
    }
    let m = h.levels[level].padded_len();
    if input.nodes() != m {
        return Err(Error::Shape(format!("pool input has {} nodes, level {level} has {m}", input.nodes())));
    }
    let (_, b, c) = input.0.dim();
    let mut out = Array3::zeros((m / 2, b, c));
    let mut arg = Array3::zeros((m / 2, b, c));
    for j in 0..m / 2 {
        let left = input.0.index_axis(Axis(0), 2 * j);
        let right = input.0.index_axis(Axis(0), 2 * j + 1);
        ndarray::Zip::from(out.index_axis_mut(Axis(0), j))
            .and(arg.index_axis_mut(Axis(0), j))
            .and(left)
            .and(right)
            .for_each(|o, a, &l, &r| {
                if l >= r {
                    *o = l;
                    *a = 2 * j;
                } else {
                    *o = r;
                    *a = 2 * j + 1;
                }
            });
    }
    Ok((FeatureBatch(out), arg))
}

/// Routes pooled gradients back to the recorded argmax positions.
pub(crate) fn pool_backward(grad: &Array3<f64>, arg: &PoolIndices, fine_nodes: usize) -> Array3<f64> {
    let (m, b, c) = grad.dim();
    let mut out = Array3::zeros((fine_nodes, b, c));
    for j in 0..m {
        for bi in 0..b {
            for ci in 0..c {
                out[[arg[[j, bi, ci]], bi, ci]] += grad[[j, bi, ci]];
            }
        }
    }
    out
}

/// `x Wᵀ + b` for a `(batch, in)` input.
pub fn dense_forward(params: &DenseParams, input: ArrayView2<f64>) -> Result<Array2<f64>> {
    if input.ncols() != params.in_dim() {
        return Err(Error::Shape(format!(
            "dense input has {} features, layer expects {}",
            input.ncols(),
            params.in_dim()
        )));
    }
    let mut out = input.dot(&params.weight.t());
    out += &params.bias;
    Ok(out)
}

/// Row-wise softmax and mean cross-entropy `−log p_label`.
///
/// The per-row maximum is subtracted before exponentiation, so large logits
/// do not overflow.
pub fn softmax_cross_entropy(logits: ArrayView2<f64>, labels: &[usize]) -> Result<(f64, Array2<f64>)> {
    let (b, c) = logits.dim();
    if labels.len() != b {
        return Err(Error::Shape(format!("{} labels for {b} samples", labels.len())));
    }
    if let Some(&bad) = labels.iter().find(|&&l| l >= c) {
        return Err(Error::Shape(format!("label {bad} out of range for {c} classes")));
    }
    let mut probs = Array2::zeros((b, c));
    let mut loss = 0.0;
    for (row, (z, &label)) in logits.rows().into_iter().zip(labels).enumerate() {
        let max = z.fold(f64::NEG_INFINITY, |m, &v| m.max(v));
        let shifted: Array1<f64> = z.mapv(|v| v - max);
        let log_sum = shifted.mapv(f64::exp).sum().ln();
        loss -= shifted[label] - log_sum;
        probs
            .row_mut(row)
            .assign(&shifted.mapv(|v| (v - log_sum).exp()));
    }
    let loss = if b > 0 { loss / b as f64 } else { 0.0 };
    Ok((loss, probs))
}
