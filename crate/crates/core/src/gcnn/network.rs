use ndarray::{Array2, Array3, Axis};

use super::layers::{
    conv_backward, conv_forward_cached, dense_forward, graph_max_pool, pool_backward, relu, relu_backward,
    softmax_cross_entropy, FeatureBatch, PoolIndices,
};
use super::{DenseParams, GcnnModel};
use crate::error::{Error, Result};

/// Intermediate activations of one forward pass, kept for backpropagation.
#[derive(Debug, Clone)]
pub struct ForwardTape {
    pub batch: usize,
    pub x_hat1: Array3<f64>,
    pub pre1: Array3<f64>,
    pub arg1: PoolIndices,
    pub x_hat2: Array3<f64>,
    pub pre2: Array3<f64>,
    pub arg2: PoolIndices,
    /// Flattened pooled features, `(batch, nodes · channels)`, node-major.
    pub flat: Array2<f64>,
    pub hidden_pre: Array2<f64>,
    pub hidden: Array2<f64>,
    pub logits: Array2<f64>,
}

/// Parameter gradients, shaped like the model's tensors.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub conv1: Array3<f64>,
    pub conv2: Array3<f64>,
    pub fc: DenseParams,
    pub out: DenseParams,
}

impl Gradients {
    pub fn zeros_like(model: &GcnnModel) -> Self {
        Self {
            conv1: Array3::zeros(model.conv1.filters.raw_dim()),
            conv2: Array3::zeros(model.conv2.filters.raw_dim()),
            fc: DenseParams::zeros(model.fc.out_dim(), model.fc.in_dim()),
            out: DenseParams::zeros(model.out.out_dim(), model.out.in_dim()),
        }
    }

    /// Flat slices in [`PARAM_GROUPS`](super::PARAM_GROUPS) order.
    pub fn groups(&self) -> [(&'static str, &[f64]); 6] {
        let g = super::PARAM_GROUPS;
        [
            (g[0], self.conv1.as_slice().expect("standard layout")),
            (g[1], self.conv2.as_slice().expect("standard layout")),
            (g[2], self.fc.weight.as_slice().expect("standard layout")),
            (g[3], self.fc.bias.as_slice().expect("standard layout")),
            (g[4], self.out.weight.as_slice().expect("standard layout")),
            (g[5], self.out.bias.as_slice().expect("standard layout")),
        ]
    }

    pub fn groups_mut(&mut self) -> [(&'static str, &mut [f64]); 6] {
        let g = super::PARAM_GROUPS;
        [
            (g[0], self.conv1.as_slice_mut().expect("standard layout")),
            (g[1], self.conv2.as_slice_mut().expect("standard layout")),
            (g[2], self.fc.weight.as_slice_mut().expect("standard layout")),
            (g[3], self.fc.bias.as_slice_mut().expect("standard layout")),
            (g[4], self.out.weight.as_slice_mut().expect("standard layout")),
            (g[5], self.out.bias.as_slice_mut().expect("standard layout")),
        ]
    }
}

/// Runs the network on a batch of padded, permuted inputs (`k × 3` each).
///
/// Returns the `(batch, classes)` logits and the tape for [`backward`].
pub fn forward(model: &GcnnModel, input: &FeatureBatch) -> Result<(Array2<f64>, ForwardTape)> {
    let h = &model.hierarchy;
    if input.nodes() != h.padded_len() || input.channels() != model.conv1.in_channels() {
        return Err(Error::Shape(format!(
            "input is {} nodes × {} channels, model expects {} × {}",
            input.nodes(),
            input.channels(),
            h.padded_len(),
            model.conv1.in_channels()
        )));
    }
    let batch = input.batch();

    let (pre1, x_hat1) = conv_forward_cached(&model.conv1, &h.levels[0].basis, input)?;
    let (pool1, arg1) = graph_max_pool(h, 0, &relu(&pre1))?;
    let (pre2, x_hat2) = conv_forward_cached(&model.conv2, &h.levels[1].basis, &pool1)?;
    let (pool2, arg2) = graph_max_pool(h, 1, &relu(&pre2))?;

    let flat = flatten(&pool2.0);
    let hidden_pre = dense_forward(&model.fc, flat.view())?;
    let hidden = hidden_pre.mapv(|v| v.max(0.0));
    let logits = dense_forward(&model.out, hidden.view())?;

    let tape = ForwardTape {
        batch,
        x_hat1,
        pre1: pre1.0,
        arg1,
        x_hat2,
        pre2: pre2.0,
        arg2,
        flat,
        hidden_pre,
        hidden,
        logits: logits.clone(),
    };
    Ok((logits, tape))
}

/// `(nodes, batch, channels)` → `(batch, nodes · channels)`, node-major.
fn flatten(x: &Array3<f64>) -> Array2<f64> {
    let (m, b, c) = x.dim();
    x.view()
        .permuted_axes([1, 0, 2])
        .as_standard_layout()
        .into_owned()
        .into_shape_with_order((b, m * c))
        .expect("contiguous")
}

fn unflatten(x: &Array2<f64>, nodes: usize, channels: usize) -> Array3<f64> {
    let b = x.nrows();
    x.to_owned()
        .into_shape_with_order((b, nodes, channels))
        .expect("contiguous")
        .permuted_axes([1, 0, 2])
        .as_standard_layout()
        .into_owned()
}

/// Mean cross-entropy over the batch plus `l2 · Σ θ²` over non-bias parameters.
pub fn loss(model: &GcnnModel, logits: &Array2<f64>, labels: &[usize], l2: f64) -> Result<f64> {
    let (ce, _) = softmax_cross_entropy(logits.view(), labels)?;
    Ok(ce + l2 * model.weight_sq_norm())
}

/// Exact gradients of [`loss`] with respect to every parameter.
pub fn backward(model: &GcnnModel, tape: &ForwardTape, labels: &[usize], l2: f64) -> Result<Gradients> {
    let h = &model.hierarchy;
    if labels.len() != tape.batch || tape.logits.ncols() != model.out.out_dim() {
        return Err(Error::Shape(format!(
            "tape holds {} samples × {} classes, got {} labels for a {}-class model",
            tape.batch,
            tape.logits.ncols(),
            labels.len(),
            model.out.out_dim()
        )));
    }
    if tape.pre1.dim() != (h.padded_len(), tape.batch, model.conv1.out_channels())
        || tape.flat.ncols() != model.fc.in_dim()
    {
        return Err(Error::Shape("tape was produced by a different model".into()));
    }
    let batch = tape.batch as f64;

    // Softmax cross-entropy: (p - onehot) / B.
    let (_, probs) = softmax_cross_entropy(tape.logits.view(), labels)?;
    let mut d_logits = probs;
    for (row, &label) in labels.iter().enumerate() {
        d_logits[[row, label]] -= 1.0;
    }
    d_logits /= batch;

    let dense_grads = |d_out: &Array2<f64>, input: &Array2<f64>, params: &DenseParams| DenseParams {
        weight: d_out.t().dot(input) + &(&params.weight * (2.0 * l2)),
        bias: d_out.sum_axis(Axis(0)),
    };

    let out = dense_grads(&d_logits, &tape.hidden, &model.out);
    let mut d_hidden = d_logits.dot(&model.out.weight);
    relu_backward(&mut d_hidden, &tape.hidden_pre);

    let fc = dense_grads(&d_hidden, &tape.flat, &model.fc);
    let d_flat = d_hidden.dot(&model.fc.weight);

    let level2 = h.levels[2].padded_len();
    let d_pool2 = unflatten(&d_flat, level2, model.conv2.out_channels());
    let mut d_pre2 = pool_backward(&d_pool2, &tape.arg2, h.levels[1].padded_len());
    relu_backward(&mut d_pre2, &tape.pre2);
    let (mut conv2, d_pool1) = conv_backward(&model.conv2, &h.levels[1].basis, &tape.x_hat2, &d_pre2, true);
    conv2.scaled_add(2.0 * l2, &model.conv2.filters);

    let mut d_pre1 = pool_backward(&d_pool1.expect("requested"), &tape.arg1, h.levels[0].padded_len());
    relu_backward(&mut d_pre1, &tape.pre1);
    let (mut conv1, _) = conv_backward(&model.conv1, &h.levels[0].basis, &tape.x_hat1, &d_pre1, false);
    conv1.scaled_add(2.0 * l2, &model.conv1.filters);

    Ok(Gradients { conv1, conv2, fc, out })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gcnn::{build_hierarchy, init_model, Architecture};
    use crate::streamline::NormalizationTransform;

    fn tiny_model(seed: u64) -> GcnnModel {
        let arch = Architecture {
            num_nodes: 8,
            num_levels: 3,
            conv1_channels: 2,
            conv2_channels: 3,
            hidden: 4,
            classes: 2,
        };
        init_model(build_hierarchy(&arch).unwrap(), arch, seed, NormalizationTransform::identity(), "t").unwrap()
    }

    fn random_batch(model: &GcnnModel, b: usize, seed: u64) -> FeatureBatch {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        FeatureBatch(Array3::from_shape_simple_fn((model.padded_len(), b, 3), || {
            rng.random_range(-1.0..1.0)
        }))
    }

    #[test]
    fn flatten_is_node_major() {
        let x = Array3::from_shape_fn((2, 1, 3), |(m, _, c)| (10 * m + c) as f64);
        assert_eq!(flatten(&x).row(0).to_vec(), vec![0.0, 1.0, 2.0, 10.0, 11.0, 12.0]);
        assert_eq!(unflatten(&flatten(&x), 2, 3), x);
    }

    #[test]
    fn logits_shape_and_zero_propagation() {
        let model = tiny_model(1);
        let (logits, _) = forward(&model, &random_batch(&model, 5, 2)).unwrap();
        assert_eq!(logits.dim(), (5, 2));
        let (zero, _) = forward(&model, &FeatureBatch::zeros(model.padded_len(), 3, 3)).unwrap();
        assert!(zero.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn samples_are_independent() {
        let model = tiny_model(3);
        let x = random_batch(&model, 4, 9);
        let (single, _) = forward(&model, &x).unwrap();
        let doubled = FeatureBatch(ndarray::concatenate(Axis(1), &[x.0.view(), x.0.view()]).unwrap());
        let (twice, _) = forward(&model, &doubled).unwrap();
        for b in 0..4 {
            for c in 0..2 {
                assert!((single[[b, c]] - twice[[b, c]]).abs() <= 1e-12);
                assert!((single[[b, c]] - twice[[b + 4, c]]).abs() <= 1e-12);
            }
        }
    }

    #[test]
    fn l2_term_is_exact() {
        let model = tiny_model(4);
        let x = random_batch(&model, 3, 1);
        let labels = [0, 1, 1];
        let (logits, tape) = forward(&model, &x).unwrap();
        let with = backward(&model, &tape, &labels, 0.3).unwrap();
        let without = backward(&model, &tape, &labels, 0.0).unwrap();
        for ((name, a), (_, b)) in with.groups().iter().zip(without.groups().iter()) {
            let params = model.param_groups().into_iter().find(|(n, _)| n == name).unwrap().1;
            for i in 0..a.len() {
                let reg = if GcnnModel::is_regularized(name) { 0.6 * params[i] } else { 0.0 };
                assert!((a[i] - b[i] - reg).abs() < 1e-14, "{name}[{i}]");
            }
        }
        let direct: f64 = model
            .param_groups()
            .iter()
            .filter(|(n, _)| !n.ends_with("bias"))
            .flat_map(|(_, g)| g.iter())
            .map(|v| v * v)
            .sum();
        let ce = loss(&model, &logits, &labels, 0.0).unwrap();
        assert!((loss(&model, &logits, &labels, 0.3).unwrap() - ce - 0.3 * direct).abs() < 1e-14);
    }

    #[test]
    fn saturated_predictions_have_vanishing_data_gradient() {
        let mut model = tiny_model(5);
        // A huge bias for class 1 makes p(label = 1) = 1 up to rounding.
        model.out.bias[1] = 1e3;
        let x = random_batch(&model, 4, 3);
        let (_, tape) = forward(&model, &x).unwrap();
        let g = backward(&model, &tape, &[1, 1, 1, 1], 0.0).unwrap();
        for (name, v) in g.groups() {
            assert!(v.iter().all(|x| x.abs() < 1e-12), "{name}");
        }
    }

    #[test]
    fn mismatched_tape_is_rejected() {
        let model = tiny_model(6);
        let (_, tape) = forward(&model, &random_batch(&model, 2, 0)).unwrap();
        assert!(backward(&model, &tape, &[0, 1, 0], 0.0).is_err());
        assert!(forward(&model, &FeatureBatch::zeros(5, 1, 3)).is_err());
    }
}
