//! The spectral graph convolutional network.
//!
//! Layer stack for one bundle detector:
//!
//! ```text
//! input (k × 3) → GC(c1) → ReLU → P2 → GC(c2) → ReLU → P2 → flatten
//!               → FC(hidden) → ReLU → FC(classes) → softmax
//! ```
//!
//! All feature tensors use the [`FeatureBatch`] layout `(nodes, batch,
//! channels)`, so a graph Fourier transform of a whole batch is a single
//! matrix product with the eigenvector matrix.

mod gradcheck;
mod layers;
mod network;

use std::sync::Arc;

pub use gradcheck::{finite_difference_check, GradCheckReport, GroupCheck};
pub use layers::{
    dense_forward, graph_max_pool, relu, softmax_cross_entropy, spectral_conv_forward, FeatureBatch,
    PoolIndices,
};
pub use network::{backward, forward, loss, ForwardTape, Gradients};

use ndarray::{Array1, Array2, Array3};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::graph::CoarseningHierarchy;
use crate::streamline::NormalizationTransform;

/// xyz coordinates.
pub const INPUT_CHANNELS: usize = 3;

/// Layer sizes of a detector network.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Architecture {
    /// Points per resampled streamline.
    pub num_nodes: usize,
    /// Graphs in the coarsening hierarchy, finest included.
    pub num_levels: usize,
    pub conv1_channels: usize,
    pub conv2_channels: usize,
    pub hidden: usize,
    pub classes: usize,
}

impl Default for Architecture {
    /// `GC32-P2-GC64-P2-FC512` on 100-point streamlines with a two-way output.
    fn default() -> Self {
        Self {
            num_nodes: 100,
            num_levels: 3,
            conv1_channels: 32,
            conv2_channels: 64,
            hidden: 512,
            classes: 2,
        }
    }
}

impl Architecture {
    pub fn validate(&self) -> Result<()> {
        if self.num_levels < 3 {
            return Err(Error::InvalidArgument(format!(
                "two pooling stages need at least 3 hierarchy levels, got {}",
                self.num_levels
            )));
        }
        if self.num_nodes < 1
            || self.conv1_channels == 0
            || self.conv2_channels == 0
            || self.hidden == 0
            || self.classes < 2
        {
            return Err(Error::InvalidArgument(format!("degenerate architecture {self:?}")));
        }
        Ok(())
    }
}

/// Spectral filters of one graph convolution layer.
///
/// `filters[[k, k', i]]` multiplies the `i`-th graph Fourier coefficient of
/// input channel `k'` on its way to output channel `k`.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralConvParams {
    pub level: usize,
    /// Shape `(out_channels, in_channels, nodes)`.
    pub filters: Array3<f64>,
}

impl SpectralConvParams {
    pub fn out_channels(&self) -> usize {
        self.filters.dim().0
    }

    pub fn in_channels(&self) -> usize {
        self.filters.dim().1
    }

    pub fn nodes(&self) -> usize {
        self.filters.dim().2
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DenseParams {
    /// Shape `(out, in)`.
    pub weight: Array2<f64>,
    pub bias: Array1<f64>,
}

impl DenseParams {
    pub fn zeros(out: usize, input: usize) -> Self {
        Self {
            weight: Array2::zeros((out, input)),
            bias: Array1::zeros(out),
        }
    }

    pub fn in_dim(&self) -> usize {
        self.weight.ncols()
    }

    pub fn out_dim(&self) -> usize {
        self.weight.nrows()
    }
}

/// A binary detector for one bundle.
#[derive(Debug, Clone)]
pub struct GcnnModel {
    pub arch: Architecture,
    pub hierarchy: Arc<CoarseningHierarchy>,
    pub conv1: SpectralConvParams,
    pub conv2: SpectralConvParams,
    pub fc: DenseParams,
    pub out: DenseParams,
    pub normalization: NormalizationTransform,
    pub bundle: String,
}

/// Parameter group names, in serialization order.
pub const PARAM_GROUPS: [&str; 6] = ["conv1", "conv2", "fc.weight", "fc.bias", "out.weight", "out.bias"];

impl GcnnModel {
    /// Input length after padding.
    pub fn padded_len(&self) -> usize {
        self.hierarchy.padded_len()
    }

    /// Length of the flattened feature vector entering the hidden layer.
    pub fn flat_len(&self) -> usize {
        self.hierarchy.levels[2].padded_len() * self.arch.conv2_channels
    }

    /// Checks that every tensor matches the architecture and hierarchy.
    pub fn validate(&self) -> Result<()> {
        self.arch.validate()?;
        let h = &self.hierarchy;
        if h.num_nodes() != self.arch.num_nodes || h.num_levels() != self.arch.num_levels {
            return Err(Error::Inconsistent(format!(
                "hierarchy has {} nodes / {} levels, architecture expects {} / {}",
                h.num_nodes(),
                h.num_levels(),
                self.arch.num_nodes,
                self.arch.num_levels
            )));
        }
        let expect = |name: &str, got: &[usize], want: &[usize]| {
            if got == want {
                Ok(())
            } else {
                Err(Error::Inconsistent(format!("{name} has shape {got:?}, expected {want:?}")))
            }
        };
        let a = &self.arch;
        expect(
            "conv1",
            self.conv1.filters.shape(),
            &[a.conv1_channels, INPUT_CHANNELS, h.levels[0].padded_len()],
        )?;
        expect(
            "conv2",
            self.conv2.filters.shape(),
            &[a.conv2_channels, a.conv1_channels, h.levels[1].padded_len()],
        )?;
        expect("fc.weight", self.fc.weight.shape(), &[a.hidden, self.flat_len()])?;
        expect("fc.bias", self.fc.bias.shape(), &[a.hidden])?;
        expect("out.weight", self.out.weight.shape(), &[a.classes, a.hidden])?;
        expect("out.bias", self.out.bias.shape(), &[a.classes])?;
        if self.conv1.level != 0 || self.conv2.level != 1 {
            return Err(Error::Inconsistent("convolution levels must be 0 and 1".into()));
        }
        let finite = self.param_groups().iter().all(|(_, g)| g.iter().all(|v| v.is_finite()));
        if !finite {
            return Err(Error::Inconsistent("non-finite parameter".into()));
        }
        self.normalization.validate()
    }

    /// Every learnable tensor as a flat row-major slice, in [`PARAM_GROUPS`] order.
    pub fn param_groups(&self) -> [(&'static str, &[f64]); 6] {
        [
            (PARAM_GROUPS[0], self.conv1.filters.as_slice().expect("standard layout")),
            (PARAM_GROUPS[1], self.conv2.filters.as_slice().expect("standard layout")),
            (PARAM_GROUPS[2], self.fc.weight.as_slice().expect("standard layout")),
            (PARAM_GROUPS[3], self.fc.bias.as_slice().expect("standard layout")),
            (PARAM_GROUPS[4], self.out.weight.as_slice().expect("standard layout")),
            (PARAM_GROUPS[5], self.out.bias.as_slice().expect("standard layout")),
        ]
    }

    pub fn param_groups_mut(&mut self) -> [(&'static str, &mut [f64]); 6] {
        [
            (PARAM_GROUPS[0], self.conv1.filters.as_slice_mut().expect("standard layout")),
            (PARAM_GROUPS[1], self.conv2.filters.as_slice_mut().expect("standard layout")),
            (PARAM_GROUPS[2], self.fc.weight.as_slice_mut().expect("standard layout")),
            (PARAM_GROUPS[3], self.fc.bias.as_slice_mut().expect("standard layout")),
            (PARAM_GROUPS[4], self.out.weight.as_slice_mut().expect("standard layout")),
            (PARAM_GROUPS[5], self.out.bias.as_slice_mut().expect("standard layout")),
        ]
    }

    /// Whether a parameter group takes part in the L2 penalty (biases do not).
    pub fn is_regularized(group: &str) -> bool {
        !group.ends_with("bias")
    }

    /// `Σ θ²` over regularized parameters.
    pub fn weight_sq_norm(&self) -> f64 {
        self.param_groups()
            .iter()
            .filter(|(name, _)| Self::is_regularized(name))
            .flat_map(|(_, g)| g.iter())
            .map(|v| v * v)
            .sum()
    }
}

/// Initializes a detector with He-style random parameters.
///
/// Spectral filters are drawn from `N(0, 2 / (p m))` (`p` input channels,
/// `m` nodes of the layer's graph), dense weights from `N(0, 2 / in)`;
/// biases start at zero.
pub fn init_model(
    hierarchy: Arc<CoarseningHierarchy>,
    arch: Architecture,
    seed: u64,
    normalization: NormalizationTransform,
    bundle: impl Into<String>,
) -> Result<GcnnModel> {
    arch.validate()?;
    if hierarchy.num_levels() < 3 {
        return Err(Error::InvalidArgument(format!(
            "hierarchy has {} levels, need at least 3",
            hierarchy.num_levels()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = |std: f64| {
        let dist = Normal::new(0.0, std).expect("positive std");
        move |rng: &mut ChaCha8Rng| dist.sample(rng)
    };

    let m0 = hierarchy.levels[0].padded_len();
    let m1 = hierarchy.levels[1].padded_len();
    let flat = hierarchy.levels[2].padded_len() * arch.conv2_channels;

    let draw3 = |shape: (usize, usize, usize), std: f64, rng: &mut ChaCha8Rng| {
        let sample = normal(std);
        Array3::from_shape_simple_fn(shape, || sample(rng))
    };
    let conv1 = draw3(
        (arch.conv1_channels, INPUT_CHANNELS, m0),
        (2.0 / (INPUT_CHANNELS * m0) as f64).sqrt(),
        &mut rng,
    );
    let conv2 = draw3(
        (arch.conv2_channels, arch.conv1_channels, m1),
        (2.0 / (arch.conv1_channels * m1) as f64).sqrt(),
        &mut rng,
    );
    let dense = |out: usize, input: usize, rng: &mut ChaCha8Rng| {
        let sample = normal((2.0 / input as f64).sqrt());
        DenseParams {
            weight: Array2::from_shape_simple_fn((out, input), || sample(rng)),
            bias: Array1::zeros(out),
        }
    };
    let fc = dense(arch.hidden, flat, &mut rng);
    let out = dense(arch.classes, arch.hidden, &mut rng);

    let model = GcnnModel {
        arch,
        hierarchy,
        conv1: SpectralConvParams { level: 0, filters: conv1 },
        conv2: SpectralConvParams { level: 1, filters: conv2 },
        fc,
        out,
        normalization,
        bundle: bundle.into(),
    };
    model.validate()?;
    Ok(model)
}

/// Builds the path-graph hierarchy an architecture runs on.
pub fn build_hierarchy(arch: &Architecture) -> Result<Arc<CoarseningHierarchy>> {
    let g = crate::graph::build_path_graph(arch.num_nodes)?;
    Ok(Arc::new(crate::graph::graclus_coarsen(&g, arch.num_levels)?))
}
