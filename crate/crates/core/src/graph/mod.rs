//! Graphs over streamline sample points: the path graph, its normalized
//! Laplacian and spectral basis, and the coarsening hierarchy used for pooling.

mod coarsen;
mod eigen;

pub use coarsen::{graclus_coarsen, CoarseningHierarchy, CoarseningLevel};
pub use eigen::{eigendecompose, SpectralBasis};

use ndarray::Array2;

use crate::error::{Error, Result};

/// Undirected weighted graph with a dense symmetric adjacency matrix.
///
/// The base graph of a resampled streamline is a path with unit weights;
/// coarsened graphs carry summed non-negative weights and may contain
/// isolated padding nodes.
#[derive(Debug, Clone, PartialEq)]
pub struct PathGraph {
    weights: Array2<f64>,
    degrees: Vec<f64>,
}

impl PathGraph {
    pub fn from_weights(weights: Array2<f64>) -> Result<Self> {
        let n = weights.nrows();
        if weights.ncols() != n {
            return Err(Error::Shape(format!("adjacency is {}x{}", n, weights.ncols())));
        }
        for i in 0..n {
            if weights[[i, i]] != 0.0 {
                return Err(Error::InvalidArgument(format!("self loop at node {i}")));
            }
            for j in 0..i {
                let w = weights[[i, j]];
                if !(w >= 0.0) || !w.is_finite() {
                    return Err(Error::InvalidArgument(format!("invalid weight {w} on edge ({j}, {i})")));
                }
                if w != weights[[j, i]] {
                    return Err(Error::NotSymmetric((w - weights[[j, i]]).abs()));
                }
            }
        }
        let degrees = weights.rows().into_iter().map(|r| r.sum()).collect();
        Ok(Self { weights, degrees })
    }

    pub fn num_nodes(&self) -> usize {
        self.degrees.len()
    }

    pub fn weights(&self) -> &Array2<f64> {
        &self.weights
    }

    pub fn weight(&self, i: usize, j: usize) -> f64 {
        self.weights[[i, j]]
    }

    pub fn degrees(&self) -> &[f64] {
        &self.degrees
    }

    pub fn is_isolated(&self, i: usize) -> bool {
        self.degrees[i] == 0.0
    }

    /// Edges `(i, j, w)` with `i < j` and `w > 0`, in row-major order.
    pub fn edges(&self) -> Vec<(usize, usize, f64)> {
        let n = self.num_nodes();
        let mut out = Vec::new();
        for i in 0..n {
            for j in i + 1..n {
                let w = self.weights[[i, j]];
                if w > 0.0 {
                    out.push((i, j, w));
                }
            }
        }
        out
    }

    pub fn neighbors(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        self.weights
            .row(i)
            .into_iter()
            .copied()
            .enumerate()
            .filter(|&(_, w)| w > 0.0)
    }
}

/// The unit-weight path graph on `n` nodes: `w(i, i+1) = w(i+1, i) = 1`.
pub fn build_path_graph(n: usize) -> Result<PathGraph> {
    if n < 1 {
        return Err(Error::InvalidArgument("path graph needs at least one node".into()));
    }
    let mut w = Array2::zeros((n, n));
    for i in 0..n - 1 {
        w[[i, i + 1]] = 1.0;
        w[[i + 1, i]] = 1.0;
    }
    PathGraph::from_weights(w)
}

/// `I - D^{-1/2} W D^{-1/2}`, with rows and columns of isolated nodes set to zero.
pub fn normalized_laplacian(g: &PathGraph) -> Array2<f64> {
    let n = g.num_nodes();
    let inv_sqrt: Vec<f64> = g
        .degrees()
        .iter()
        .map(|&d| if d > 0.0 { 1.0 / d.sqrt() } else { 0.0 })
        .collect();
    let mut lap = Array2::zeros((n, n));
    for i in 0..n {
        if g.is_isolated(i) {
            continue;
        }
        lap[[i, i]] = 1.0;
        for (j, w) in g.neighbors(i) {
            lap[[i, j]] = -w * inv_sqrt[i] * inv_sqrt[j];
        }
    }
    lap
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn single_node() {
        let g = build_path_graph(1).unwrap();
        assert_eq!(g.degrees(), &[0.0]);
        assert!(g.edges().is_empty());
        assert_eq!(normalized_laplacian(&g), array![[0.0]]);
        assert!(build_path_graph(0).is_err());
    }

    #[test]
    fn three_nodes() {
        let g = build_path_graph(3).unwrap();
        assert_eq!(g.edges(), vec![(0, 1, 1.0), (1, 2, 1.0)]);
        assert_eq!(g.degrees(), &[1.0, 2.0, 1.0]);
        let l = normalized_laplacian(&g);
        let h = -1.0 / 2f64.sqrt();
        let expected = array![[1.0, h, 0.0], [h, 1.0, h], [0.0, h, 1.0]];
        assert!(l.iter().zip(&expected).all(|(a, b)| (a - b).abs() < 1e-15));
    }

    #[test]
    fn hundred_nodes() {
        let g = build_path_graph(100).unwrap();
        assert_eq!(g.edges().len(), 99);
        assert_eq!(g.degrees()[0], 1.0);
        assert_eq!(g.degrees()[99], 1.0);
        assert!(g.degrees()[1..99].iter().all(|&d| d == 2.0));
    }

    #[test]
    fn two_node_laplacian() {
        let l = normalized_laplacian(&build_path_graph(2).unwrap());
        assert_eq!(l, array![[1.0, -1.0], [-1.0, 1.0]]);
    }

    #[test]
    fn isolated_node_row_is_zero() {
        let mut w = Array2::zeros((3, 3));
        w[[0, 1]] = 1.0;
        w[[1, 0]] = 1.0;
        let l = normalized_laplacian(&PathGraph::from_weights(w).unwrap());
        assert!(l.row(2).iter().all(|&v| v == 0.0));
        assert!(l.column(2).iter().all(|&v| v == 0.0));
        assert_eq!(l[[0, 0]], 1.0);
    }

    #[test]
    fn rejects_asymmetric_weights() {
        let w = array![[0.0, 1.0], [0.5, 0.0]];
        assert!(matches!(PathGraph::from_weights(w), Err(Error::NotSymmetric(_))));
    }
}
