use ndarray::{Array2, ArrayView2};

use super::{eigendecompose, normalized_laplacian, PathGraph, SpectralBasis};
use crate::error::{Error, Result};

/// One graph of the coarsening hierarchy, laid out in pooling order.
///
/// Node `a` of this level pools into node `a / 2` of the next-coarser level.
#[derive(Debug, Clone)]
pub struct CoarseningLevel {
    /// Padded graph in pooling order; fake nodes are isolated.
    pub graph: PathGraph,
    pub basis: SpectralBasis,
    pub real_mask: Vec<bool>,
    /// Parent position at the next-coarser level; empty at the coarsest level.
    pub parent_of: Vec<usize>,
    /// Index of the real node occupying each position, in `real_graph` numbering.
    pub origin: Vec<Option<usize>>,
    /// The level's graph without padding, in matching order.
    pub real_graph: PathGraph,
    /// Clusters of `real_graph` nodes forming each next-level node (1 or 2
    /// members each); empty at the coarsest level.
    pub clusters: Vec<Vec<usize>>,
}

impl CoarseningLevel {
    pub fn padded_len(&self) -> usize {
        self.real_mask.len()
    }

    pub fn real_count(&self) -> usize {
        self.real_mask.iter().filter(|&&r| r).count()
    }

    pub fn fake_count(&self) -> usize {
        self.padded_len() - self.real_count()
    }
}

/// Multiscale graphs from finest to coarsest, with the input permutation that
/// turns graph pooling into stride-2 pooling over a 1D signal.
#[derive(Debug, Clone)]
pub struct CoarseningHierarchy {
    pub levels: Vec<CoarseningLevel>,
    /// Finest-level node at each padded input position (`None` for fakes).
    pub input_permutation: Vec<Option<usize>>,
}

impl CoarseningHierarchy {
    /// Number of real nodes at the finest level.
    pub fn num_nodes(&self) -> usize {
        self.levels[0].real_graph.num_nodes()
    }

    /// Padded input length `k`.
    pub fn padded_len(&self) -> usize {
        self.input_permutation.len()
    }

    pub fn num_levels(&self) -> usize {
        self.levels.len()
    }

    pub fn level(&self, i: usize) -> Result<&CoarseningLevel> {
        self.levels
            .get(i)
            .ok_or_else(|| Error::InvalidArgument(format!("level {i} out of range (have {})", self.levels.len())))
    }

    /// Scatters a per-node signal (`n × channels`) into padded pooling order
    /// (`k × channels`), filling fake positions with zero.
    pub fn permute_signal(&self, values: ArrayView2<f64>) -> Result<Array2<f64>> {
        if values.nrows() != self.num_nodes() {
            return Err(Error::Shape(format!(
                "signal has {} nodes, hierarchy expects {}",
                values.nrows(),
                self.num_nodes()
            )));
        }
        let mut out = Array2::zeros((self.padded_len(), values.ncols()));
        for (pos, node) in self.input_permutation.iter().enumerate() {
            if let Some(node) = node {
                out.row_mut(pos).assign(&values.row(*node));
            }
        }
        Ok(out)
    }

    /// Inverse of [`permute_signal`](Self::permute_signal): gathers real
    /// positions back into node order.
    pub fn unpermute_signal(&self, values: ArrayView2<f64>) -> Result<Array2<f64>> {
        if values.nrows() != self.padded_len() {
            return Err(Error::Shape(format!(
                "signal has {} positions, hierarchy expects {}",
                values.nrows(),
                self.padded_len()
            )));
        }
        let mut out = Array2::zeros((self.num_nodes(), values.ncols()));
        for (pos, node) in self.input_permutation.iter().enumerate() {
            if let Some(node) = node {
                out.row_mut(*node).assign(&values.row(pos));
            }
        }
        Ok(out)
    }
}

/// Greedy Graclus matching of one graph.
///
/// Nodes are visited in ascending order; each unmarked node is paired with
/// the unmarked neighbor maximizing `w(i,j) (1/d_i + 1/d_j)`, ties going to
/// the smaller index. Returns the clusters (in creation order) and the
/// coarse graph whose edge weights sum the crossing fine weights.
fn match_once(g: &PathGraph) -> Result<(Vec<Vec<usize>>, PathGraph)> {
    let n = g.num_nodes();
    let deg = g.degrees();
    let mut marked = vec![false; n];
    let mut cluster_of = vec![0usize; n];
    let mut clusters = Vec::with_capacity(n / 2 + 1);

    for i in 0..n {
        if marked[i] {
            continue;
        }
        marked[i] = true;
        let mut best: Option<(usize, f64)> = None;
        for (j, w) in g.neighbors(i) {
            if marked[j] {
                continue;
            }
            let score = w * (1.0 / deg[i] + 1.0 / deg[j]);
            if best.is_none_or(|(_, s)| score > s) {
                best = Some((j, score));
            }
        }
        let id = clusters.len();
        cluster_of[i] = id;
        match best {
            Some((j, _)) => {
                marked[j] = true;
                cluster_of[j] = id;
                clusters.push(vec![i.min(j), i.max(j)]);
            }
            None => clusters.push(vec![i]),
        }
    }

    let mut coarse = Array2::zeros((clusters.len(), clusters.len()));
    for (i, j, w) in g.edges() {
        let (a, b) = (cluster_of[i], cluster_of[j]);
        if a != b {
            coarse[[a, b]] += w;
            coarse[[b, a]] += w;
        }
    }
    Ok((clusters, PathGraph::from_weights(coarse)?))
}

/// Builds a hierarchy of `num_levels` graphs (the finest included) by
/// repeated Graclus matching, pads singletons with fake nodes so that every
/// coarse node has exactly two children, and computes each level's spectral
/// basis on its padded graph.
pub fn graclus_coarsen(g: &PathGraph, num_levels: usize) -> Result<CoarseningHierarchy> {
    if num_levels < 1 {
        return Err(Error::InvalidArgument("hierarchy needs at least one level".into()));
    }

    let mut graphs = vec![g.clone()];
    let mut clusters = Vec::with_capacity(num_levels - 1);
    for _ in 1..num_levels {
        let (c, coarse) = match_once(graphs.last().unwrap())?;
        clusters.push(c);
        graphs.push(coarse);
    }

    // Pooling order, propagated from the coarsest level down.
    let coarsest = num_levels - 1;
    let mut orders: Vec<Vec<Option<usize>>> = vec![Vec::new(); num_levels];
    orders[coarsest] = (0..graphs[coarsest].num_nodes()).map(Some).collect();
    for level in (0..coarsest).rev() {
        let parent_order = &orders[level + 1];
        let mut order = Vec::with_capacity(2 * parent_order.len());
        for slot in parent_order {
            match slot {
                Some(c) => {
                    let children = &clusters[level][*c];
                    order.extend(children.iter().map(|&v| Some(v)));
                    if children.len() == 1 {
                        order.push(None);
                    }
                }
                None => order.extend([None, None]),
            }
        }
        orders[level] = order;
    }

    let mut levels = Vec::with_capacity(num_levels);
    for (level, (order, real_graph)) in orders.iter().zip(&graphs).enumerate() {
        let m = order.len();
        let mut w = Array2::zeros((m, m));
        for (a, na) in order.iter().enumerate() {
            let Some(na) = na else { continue };
            for (b, nb) in order.iter().enumerate() {
                if let Some(nb) = nb {
                    w[[a, b]] = real_graph.weight(*na, *nb);
                }
            }
        }
        let graph = PathGraph::from_weights(w)?;
        let basis = eigendecompose(&normalized_laplacian(&graph))?;
        levels.push(CoarseningLevel {
            graph,
            basis,
            real_mask: order.iter().map(Option::is_some).collect(),
            parent_of: if level < coarsest { (0..m).map(|a| a / 2).collect() } else { Vec::new() },
            origin: order.clone(),
            real_graph: real_graph.clone(),
            clusters: clusters.get(level).cloned().unwrap_or_default(),
        });
    }

    Ok(CoarseningHierarchy {
        input_permutation: orders.swap_remove(0),
        levels,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::build_path_graph;
    use ndarray::array;

    #[test]
    fn four_node_path_two_levels() {
        let h = graclus_coarsen(&build_path_graph(4).unwrap(), 2).unwrap();
        assert_eq!(h.levels[0].clusters, vec![vec![0, 1], vec![2, 3]]);
        let coarse = &h.levels[1].real_graph;
        assert_eq!(coarse.num_nodes(), 2);
        assert_eq!(coarse.edges(), vec![(0, 1, 1.0)]);
        assert_eq!(h.levels[0].fake_count(), 0);
        assert_eq!(h.padded_len(), 4);
        assert_eq!(h.input_permutation, vec![Some(0), Some(1), Some(2), Some(3)]);
    }

    #[test]
    fn three_node_path_two_levels() {
        let h = graclus_coarsen(&build_path_graph(3).unwrap(), 2).unwrap();
        assert_eq!(h.levels[0].clusters, vec![vec![0, 1], vec![2]]);
        assert_eq!(h.levels[1].padded_len(), 2);
        assert_eq!(h.padded_len(), 4);
        assert_eq!(h.input_permutation, vec![Some(0), Some(1), Some(2), None]);
        assert_eq!(h.levels[0].real_mask, vec![true, true, true, false]);
        assert!(h.levels[0].graph.is_isolated(3));

        let signal = array![[1.0], [2.0], [3.0]];
        let p = h.permute_signal(signal.view()).unwrap();
        assert_eq!(p, array![[1.0], [2.0], [3.0], [0.0]]);
        assert_eq!(h.unpermute_signal(p.view()).unwrap(), signal);
        assert!(h.permute_signal(array![[1.0], [2.0]].view()).is_err());
    }

    #[test]
    fn fakes_propagate_to_coarser_levels() {
        // 5 → 3 → 2: level 1 needs a fake, and it expands to two fakes below.
        let h = graclus_coarsen(&build_path_graph(5).unwrap(), 3).unwrap();
        let sizes: Vec<_> = h.levels.iter().map(|l| l.real_count()).collect();
        assert_eq!(sizes, vec![5, 3, 2]);
        let padded: Vec<_> = h.levels.iter().map(|l| l.padded_len()).collect();
        assert_eq!(padded, vec![8, 4, 2]);
        assert_eq!(
            h.input_permutation,
            vec![Some(0), Some(1), Some(2), Some(3), Some(4), None, None, None]
        );
    }

    #[test]
    fn single_level_is_identity() {
        let h = graclus_coarsen(&build_path_graph(7).unwrap(), 1).unwrap();
        assert_eq!(h.padded_len(), 7);
        assert!(h.levels[0].parent_of.is_empty());
        assert!(graclus_coarsen(&build_path_graph(7).unwrap(), 0).is_err());
    }

    #[test]
    fn matching_objective_and_ties() {
        // Path 1 - 0 - 2 with node 0 visited first.
        let graph = |w1: f64, w2: f64| {
            let mut w = Array2::zeros((3, 3));
            w[[0, 1]] = w1;
            w[[1, 0]] = w1;
            w[[0, 2]] = w2;
            w[[2, 0]] = w2;
            PathGraph::from_weights(w).unwrap()
        };
        // Scores: 1 * (1/4 + 1) = 1.25 against 3 * (1/4 + 1/3) = 1.75.
        let (c, coarse) = match_once(&graph(1.0, 3.0)).unwrap();
        assert_eq!(c, vec![vec![0, 2], vec![1]]);
        assert_eq!(coarse.edges(), vec![(0, 1, 1.0)]);
        // Equal scores: the smaller neighbor index wins.
        let (c, _) = match_once(&graph(1.0, 1.0)).unwrap();
        assert_eq!(c, vec![vec![0, 1], vec![2]]);
    }
}
