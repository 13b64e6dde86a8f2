use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::network::{backward, forward, loss};
use super::{FeatureBatch, GcnnModel};
use crate::error::{Error, Result};

/// Parameters compared per group; smaller groups are checked exhaustively.
pub const SAMPLES_PER_GROUP: usize = 200;

#[derive(Debug, Clone, PartialEq)]
pub struct GroupCheck {
    pub name: &'static str,
    pub checked: usize,
    pub max_rel_error: f64,
    /// Flat index of the worst element.
    pub worst_index: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub step: f64,
    pub tolerance: f64,
    pub groups: Vec<GroupCheck>,
}

impl GradCheckReport {
    pub fn max_rel_error(&self) -> f64 {
        self.groups.iter().map(|g| g.max_rel_error).fold(0.0, f64::max)
    }

    pub fn passed(&self) -> bool {
        self.max_rel_error() <= self.tolerance
    }
}

/// Compares analytic gradients of the regularized loss against central
/// differences `(L(θ + h) − L(θ − h)) / 2h`.
///
/// The relative error of each element is `|a − b| / max(|a|, |b|, 1e-8)`.
/// Each group is checked on a seeded random subsample of
/// [`SAMPLES_PER_GROUP`] elements, or on every element if it is smaller.
pub fn finite_difference_check(
    model: &GcnnModel,
    batch: &FeatureBatch,
    labels: &[usize],
    l2: f64,
    step: f64,
    tolerance: f64,
    seed: u64,
) -> Result<GradCheckReport> {
    if !(step > 0.0) {
        return Err(Error::InvalidArgument(format!("finite-difference step must be positive, got {step}")));
    }
    let (_, tape) = forward(model, batch)?;
    let analytic = backward(model, &tape, labels, l2)?;

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut probe = model.clone();
    let eval = |m: &GcnnModel| -> Result<f64> {
        let (logits, _) = forward(m, batch)?;
        loss(m, &logits, labels, l2)
    };

    let mut groups = Vec::with_capacity(6);
    for (g, (name, grad)) in analytic.groups().into_iter().enumerate() {
        let len = grad.len();
        let indices: Vec<usize> = if len <= SAMPLES_PER_GROUP {
            (0..len).collect()
        } else {
            let mut v = rand::seq::index::sample(&mut rng, len, SAMPLES_PER_GROUP).into_vec();
            v.sort_unstable();
            v
        };

        let mut worst = (0.0_f64, indices.first().copied().unwrap_or(0));
        for &i in &indices {
            let original = probe.param_groups()[g].1[i];
            probe.param_groups_mut()[g].1[i] = original + step;
            let plus = eval(&probe)?;
            probe.param_groups_mut()[g].1[i] = original - step;
            let minus = eval(&probe)?;
            probe.param_groups_mut()[g].1[i] = original;

            let numeric = (plus - minus) / (2.0 * step);
            let a = grad[i];
            let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(1e-8);
            if rel > worst.0 {
                worst = (rel, i);
            }
        }
        groups.push(GroupCheck {
            name,
            checked: indices.len(),
            max_rel_error: worst.0,
            worst_index: worst.1,
        });
    }

    Ok(GradCheckReport { step, tolerance, groups })
}
