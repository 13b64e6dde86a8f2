use std::collections::{BTreeMap, HashSet};

use ndarray::{Array2, Axis};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::graph::CoarseningHierarchy;
use crate::streamline::{
    apply_normalization, resample_uniform, BoundingBox, NormalizationTransform, Streamline, StreamlineSet,
};

/// One network input with its binary label.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    /// Padded, permuted `k × 3` coordinate matrix.
    pub input: Array2<f64>,
    /// 1 for the target bundle, 0 otherwise.
    pub label: usize,
    pub id: u64,
    pub reversed: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BinaryDataset {
    pub bundle: String,
    pub normalization: NormalizationTransform,
    pub samples: Vec<Sample>,
}

impl BinaryDataset {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// `(negatives, positives)`
    pub fn class_counts(&self) -> (usize, usize) {
        let pos = self.samples.iter().filter(|s| s.label == 1).count();
        (self.samples.len() - pos, pos)
    }

    /// Appends a reversed copy of every sample (same label, node order
    /// reversed along the streamline).
    pub fn with_reversals(&self, hierarchy: &CoarseningHierarchy) -> Result<BinaryDataset> {
        let mut samples = self.samples.clone();
        for s in &self.samples {
            let mut nodes = hierarchy.unpermute_signal(s.input.view())?;
            nodes.invert_axis(Axis(0));
            samples.push(Sample {
                input: hierarchy.permute_signal(nodes.view())?,
                label: s.label,
                id: s.id,
                reversed: !s.reversed,
            });
        }
        Ok(BinaryDataset {
            bundle: self.bundle.clone(),
            normalization: self.normalization,
            samples,
        })
    }
}

/// How negatives from "spatially neighboring" bundles are found.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum NeighborRule {
    /// Bundles whose axis-aligned bounding box intersects the target's.
    #[default]
    BoundingBoxOverlap,
    /// No neighbor negatives; all negatives are drawn at random.
    Disabled,
}

/// Resamples, normalizes and permutes one streamline into a `k × 3` network input.
pub fn prepare_input(
    s: &Streamline,
    normalization: &NormalizationTransform,
    hierarchy: &CoarseningHierarchy,
) -> Result<Array2<f64>> {
    let resampled = resample_uniform(s, hierarchy.num_nodes())?;
    let normalized = apply_normalization(normalization, &resampled);
    let mut nodes = Array2::zeros((normalized.points.len(), 3));
    for (mut row, p) in nodes.rows_mut().into_iter().zip(&normalized.points) {
        row[0] = p.x;
        row[1] = p.y;
        row[2] = p.z;
    }
    hierarchy.permute_signal(nodes.view())
}

fn bundle_boxes(set: &StreamlineSet) -> BTreeMap<&str, BoundingBox> {
    let mut boxes: BTreeMap<&str, BoundingBox> = BTreeMap::new();
    for s in &set.streamlines {
        if let Some(label) = s.label.as_deref() {
            let bb = boxes.entry(label).or_insert_with(BoundingBox::empty);
            *bb = bb.union(&s.bounding_box());
        }
    }
    boxes
}

/// Bundles other than `target` whose bounding boxes intersect the target's,
/// in name order.
pub fn neighboring_bundles<'a>(set: &'a StreamlineSet, target: &str) -> Vec<&'a str> {
    let boxes = bundle_boxes(set);
    let Some(target_box) = boxes.get(target) else {
        return Vec::new();
    };
    boxes
        .iter()
        .filter(|(name, bb)| **name != target && bb.intersects(target_box))
        .map(|(name, _)| *name)
        .collect()
}

/// Draws `min(count, pool.len())` distinct entries, returned in pool order.
fn sample_without_replacement<'a>(
    pool: &[&'a Streamline],
    count: usize,
    rng: &mut ChaCha8Rng,
) -> Vec<&'a Streamline> {
    let take = count.min(pool.len());
    let mut idx = rand::seq::index::sample(rng, pool.len(), take).into_vec();
    idx.sort_unstable();
    idx.into_iter().map(|i| pool[i]).collect()
}

/// Builds the training set of a one-vs-rest detector for `target`.
///
/// Positives are every streamline of the target bundle. Negatives are up to
/// `N_pos` streamlines drawn without replacement from neighboring bundles,
/// plus `min(N_pos, available)` drawn from every remaining non-target
/// streamline. Sample order: positives, neighbor negatives, random
/// negatives, each in set order.
pub fn assemble_binary_dataset(
    all: &StreamlineSet,
    target: &str,
    rule: NeighborRule,
    seed: u64,
    normalization: &NormalizationTransform,
    hierarchy: &CoarseningHierarchy,
) -> Result<BinaryDataset> {
    let positives: Vec<&Streamline> = all.with_label(target).collect();
    if positives.is_empty() {
        return Err(Error::MissingBundle(target.to_string()));
    }
    let n_pos = positives.len();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let neighbors: HashSet<&str> = match rule {
        NeighborRule::BoundingBoxOverlap => neighboring_bundles(all, target).into_iter().collect(),
        NeighborRule::Disabled => HashSet::new(),
    };
    let is_neighbor = |s: &Streamline| s.label.as_deref().is_some_and(|l| neighbors.contains(l));
    let others: Vec<&Streamline> = all
        .streamlines
        .iter()
        .filter(|s| s.label.as_deref() != Some(target))
        .collect();

    let neighbor_pool: Vec<&Streamline> = others.iter().copied().filter(|s| is_neighbor(s)).collect();
    let neighbor_negatives = sample_without_replacement(&neighbor_pool, n_pos, &mut rng);
    let taken: HashSet<u64> = neighbor_negatives.iter().map(|s| s.id).collect();
    let random_pool: Vec<&Streamline> = others.into_iter().filter(|s| !taken.contains(&s.id)).collect();
    let random_negatives = sample_without_replacement(&random_pool, n_pos, &mut rng);

    let mut samples = Vec::with_capacity(n_pos + neighbor_negatives.len() + random_negatives.len());
    let labeled = positives
        .iter()
        .map(|s| (*s, 1))
        .chain(neighbor_negatives.iter().map(|s| (*s, 0)))
        .chain(random_negatives.iter().map(|s| (*s, 0)));
    for (s, label) in labeled {
        samples.push(Sample {
            input: prepare_input(s, normalization, hierarchy)?,
            label,
            id: s.id,
            reversed: false,
        });
    }
    Ok(BinaryDataset {
        bundle: target.to_string(),
        normalization: *normalization,
        samples,
    })
}

/// Every streamline of `set`, labeled 1 if it belongs to `target`.
pub fn label_all(
    set: &StreamlineSet,
    target: &str,
    normalization: &NormalizationTransform,
    hierarchy: &CoarseningHierarchy,
) -> Result<BinaryDataset> {
    let samples = set
        .streamlines
        .iter()
        .map(|s| {
            Ok(Sample {
                input: prepare_input(s, normalization, hierarchy)?,
                label: usize::from(s.label.as_deref() == Some(target)),
                id: s.id,
                reversed: false,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(BinaryDataset {
        bundle: target.to_string(),
        normalization: *normalization,
        samples,
    })
}

/// Seeded streamline-level split into `(train, validation)`; the validation
/// part receives `round(fraction · len)` streamlines. Both parts keep the
/// original relative order.
pub fn split_streamlines(set: &StreamlineSet, fraction: f64, seed: u64) -> Result<(StreamlineSet, StreamlineSet)> {
    if !(0.0..1.0).contains(&fraction) {
        return Err(Error::InvalidArgument(format!("validation fraction must be in [0, 1), got {fraction}")));
    }
    let mut order: Vec<usize> = (0..set.len()).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let n_val = (fraction * set.len() as f64).round() as usize;
    let mut is_val = vec![false; set.len()];
    for &i in &order[..n_val] {
        is_val[i] = true;
    }
    let (mut train, mut val) = (Vec::new(), Vec::new());
    for (s, v) in set.streamlines.iter().zip(is_val) {
        if v {
            val.push(s.clone());
        } else {
            train.push(s.clone());
        }
    }
    Ok((
        StreamlineSet {
            streamlines: train,
            source: format!("{} (train split)", set.source),
        },
        StreamlineSet {
            streamlines: val,
            source: format!("{} (validation split)", set.source),
        },
    ))
}
