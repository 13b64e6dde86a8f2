use ndarray::{Array1, Array2, ArrayView2};

use crate::error::{Error, Result};

/// Eigenpairs of a graph Laplacian: `laplacian = Φ diag(λ) Φᵀ`.
///
/// Eigenvalues are ascending. Each eigenvector (column of `eigenvectors`) is
/// signed so that its largest-magnitude entry is positive, the lowest index
/// winning ties.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralBasis {
    pub eigenvalues: Array1<f64>,
    pub eigenvectors: Array2<f64>,
}

impl SpectralBasis {
    pub fn len(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn is_empty(&self) -> bool {
        self.eigenvalues.is_empty()
    }

    /// `Φ diag(λ) Φᵀ`
    pub fn reconstruct(&self) -> Array2<f64> {
        let scaled = &self.eigenvectors * &self.eigenvalues;
        scaled.dot(&self.eigenvectors.t())
    }
}

const SYMMETRY_TOL: f64 = 1e-12;
const SIGN_TIE_TOL: f64 = 1e-10;

/// Eigendecomposition of a symmetric matrix whose off-diagonal sparsity
/// pattern is a disjoint union of paths (a normalized path-graph Laplacian,
/// possibly padded with isolated nodes).
///
/// Each connected component is reordered along its path into a symmetric
/// tridiagonal matrix and solved with implicit-shift QL. Component spectra
/// are merged and stably sorted ascending.
pub fn eigendecompose(laplacian: &Array2<f64>) -> Result<SpectralBasis> {
    let n = laplacian.nrows();
    if laplacian.ncols() != n {
        return Err(Error::Shape(format!("matrix is {}x{}", n, laplacian.ncols())));
    }
    check_symmetric(laplacian.view())?;

    let mut pairs: Vec<(f64, Vec<f64>)> = Vec::with_capacity(n);
    for component in path_components(laplacian.view())? {
        let size = component.len();
        let mut diag: Vec<f64> = component.iter().map(|&i| laplacian[[i, i]]).collect();
        let mut off: Vec<f64> = component
            .windows(2)
            .map(|w| laplacian[[w[0], w[1]]])
            .collect();
        off.push(0.0);
        let mut vectors = Array2::<f64>::eye(size);
        tridiagonal_ql(&mut diag, &mut off, &mut vectors)?;

        for (col, &lambda) in diag.iter().enumerate() {
            let mut v = vec![0.0; n];
            for (row, &node) in component.iter().enumerate() {
                v[node] = vectors[[row, col]];
            }
            pairs.push((lambda, v));
        }
    }

    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));

    let mut eigenvalues = Array1::zeros(n);
    let mut eigenvectors = Array2::zeros((n, n));
    for (col, (lambda, mut v)) in pairs.into_iter().enumerate() {
        fix_sign(&mut v);
        eigenvalues[col] = lambda;
        for (row, x) in v.into_iter().enumerate() {
            eigenvectors[[row, col]] = x;
        }
    }
    Ok(SpectralBasis {
        eigenvalues,
        eigenvectors,
    })
}

fn check_symmetric(a: ArrayView2<f64>) -> Result<()> {
    let n = a.nrows();
    let scale = a.iter().fold(1.0_f64, |m, v| m.max(v.abs()));
    let mut worst = 0.0_f64;
    for i in 0..n {
        for j in 0..i {
            let d = (a[[i, j]] - a[[j, i]]).abs();
            if !d.is_finite() {
                return Err(Error::NotSymmetric(f64::INFINITY));
            }
            worst = worst.max(d);
        }
    }
    if worst > SYMMETRY_TOL * scale {
        return Err(Error::NotSymmetric(worst));
    }
    Ok(())
}

/// Connected components of the off-diagonal pattern, each listed in path
/// order starting from its lowest-index endpoint. Components are returned in
/// order of their lowest node index.
fn path_components(a: ArrayView2<f64>) -> Result<Vec<Vec<usize>>> {
    let n = a.nrows();
    let neighbors: Vec<Vec<usize>> = (0..n)
        .map(|i| (0..n).filter(|&j| j != i && a[[i, j]] != 0.0).collect())
        .collect();

    let mut seen = vec![false; n];
    let mut components = Vec::new();
    for root in 0..n {
        if seen[root] {
            continue;
        }
        // Collect the component by flood fill, then walk it as a path.
        let mut members = vec![root];
        seen[root] = true;
        let mut cursor = 0;
        while cursor < members.len() {
            let v = members[cursor];
            cursor += 1;
            if neighbors[v].len() > 2 {
                return Err(Error::NotAPath(root));
            }
            for &u in &neighbors[v] {
                if !seen[u] {
                    seen[u] = true;
                    members.push(u);
                }
            }
        }
        let edge_count: usize = members.iter().map(|&v| neighbors[v].len()).sum::<usize>() / 2;
        if edge_count + 1 != members.len() {
            return Err(Error::NotAPath(root));
        }
        let start = *members
            .iter()
            .filter(|&&v| neighbors[v].len() <= 1)
            .min()
            .ok_or(Error::NotAPath(root))?;

        let mut order = Vec::with_capacity(members.len());
        let mut prev = usize::MAX;
        let mut cur = start;
        loop {
            order.push(cur);
            match neighbors[cur].iter().find(|&&u| u != prev) {
                Some(&next) if order.len() < members.len() => {
                    prev = cur;
                    cur = next;
                }
                _ => break,
            }
        }
        components.push(order);
    }
    Ok(components)
}

/// Implicit-shift QL iteration on a symmetric tridiagonal matrix.
///
/// `diag` holds the diagonal, `off[i]` the entry coupling rows `i` and `i+1`
/// (the last entry is ignored). On return `diag` holds the eigenvalues and
/// the columns of `vectors` (which must start as the identity) the
/// corresponding eigenvectors. The total number of QL sweeps is capped at
/// `30 n`.
fn tridiagonal_ql(diag: &mut [f64], off: &mut [f64], vectors: &mut Array2<f64>) -> Result<()> {
    let n = diag.len();
    if n <= 1 {
        return Ok(());
    }
    off[n - 1] = 0.0;
    let max_sweeps = 30 * n;
    let mut sweeps = 0;

    for l in 0..n {
        loop {
            let mut m = l;
            while m + 1 < n {
                let scale = diag[m].abs() + diag[m + 1].abs();
                if off[m].abs() <= f64::EPSILON * scale {
                    break;
                }
                m += 1;
            }
            if m == l {
                break;
            }
            sweeps += 1;
            if sweeps > max_sweeps {
                return Err(Error::NoConvergence(max_sweeps));
            }

            // Wilkinson-style shift from the leading 2x2 block.
            let mut g = (diag[l + 1] - diag[l]) / (2.0 * off[l]);
            let r = g.hypot(1.0);
            g = diag[m] - diag[l] + off[l] / (g + r.copysign(g));

            let (mut s, mut c, mut p) = (1.0, 1.0, 0.0);
            let mut deflated = false;
            for i in (l..m).rev() {
                let f = s * off[i];
                let b = c * off[i];
                let r = f.hypot(g);
                off[i + 1] = r;
                if r == 0.0 {
                    diag[i + 1] -= p;
                    off[m] = 0.0;
                    deflated = true;
                    break;
                }
                s = f / r;
                c = g / r;
                g = diag[i + 1] - p;
                let t = (diag[i] - g) * s + 2.0 * c * b;
                p = s * t;
                diag[i + 1] = g + p;
                g = c * t - b;

                for k in 0..n {
                    let vk1 = vectors[[k, i + 1]];
                    let vk = vectors[[k, i]];
                    vectors[[k, i + 1]] = s * vk + c * vk1;
                    vectors[[k, i]] = c * vk - s * vk1;
                }
            }
            if deflated {
                continue;
            }
            diag[l] -= p;
            off[l] = g;
            off[m] = 0.0;
        }
    }
    Ok(())
}

fn fix_sign(v: &mut [f64]) {
    let max = v.iter().fold(0.0_f64, |m, x| m.max(x.abs()));
    if max == 0.0 {
        return;
    }
    let pivot = v
        .iter()
        .position(|x| x.abs() >= max * (1.0 - SIGN_TIE_TOL))
        .expect("max is attained");
    if v[pivot] < 0.0 {
        v.iter_mut().for_each(|x| *x = -*x);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{build_path_graph, normalized_laplacian};
    use ndarray::array;

    fn path_basis(n: usize) -> SpectralBasis {
        eigendecompose(&normalized_laplacian(&build_path_graph(n).unwrap())).unwrap()
    }

    #[test]
    fn two_node_path() {
        let b = path_basis(2);
        assert!((b.eigenvalues[0] - 0.0).abs() < 1e-12);
        assert!((b.eigenvalues[1] - 2.0).abs() < 1e-12);
        let h = 1.0 / 2f64.sqrt();
        let expected = array![[h, h], [h, -h]];
        for (a, e) in b.eigenvectors.iter().zip(&expected) {
            assert!((a - e).abs() < 1e-12, "{}", b.eigenvectors);
        }
    }

    #[test]
    fn three_node_path() {
        let b = path_basis(3);
        for (l, e) in b.eigenvalues.iter().zip([0.0, 1.0, 2.0]) {
            assert!((l - e).abs() < 1e-12);
        }
        // λ = 0 eigenvector is D^{1/2} 1 normalized: (1, √2, 1) / 2.
        let v0 = b.eigenvectors.column(0);
        let expected = [0.5, 2f64.sqrt() / 2.0, 0.5];
        for (a, e) in v0.iter().zip(expected) {
            assert!((a - e).abs() < 1e-12);
        }
    }

    #[test]
    fn isolated_nodes_get_unit_vectors() {
        let mut lap = Array2::zeros((4, 4));
        lap.slice_mut(ndarray::s![0..2, 0..2])
            .assign(&array![[1.0, -1.0], [-1.0, 1.0]]);
        let b = eigendecompose(&lap).unwrap();
        let zeros = b.eigenvalues.iter().filter(|l| l.abs() < 1e-10).count();
        assert_eq!(zeros, 3);
        // Columns for the padding nodes are exact unit vectors.
        let unit_cols = (0..4)
            .filter(|&c| {
                let col = b.eigenvectors.column(c);
                col[2] == 1.0 || col[3] == 1.0
            })
            .count();
        assert_eq!(unit_cols, 2);
    }

    #[test]
    fn rejects_non_symmetric_and_non_paths() {
        let a = array![[1.0, 0.5], [0.4, 1.0]];
        assert!(matches!(eigendecompose(&a), Err(Error::NotSymmetric(_))));
        let tri = array![[1.0, -0.5, -0.5], [-0.5, 1.0, -0.5], [-0.5, -0.5, 1.0]];
        assert!(matches!(eigendecompose(&tri), Err(Error::NotAPath(0))));
    }

    #[test]
    fn signs_are_fixed() {
        let b = path_basis(17);
        for c in 0..17 {
            let col = b.eigenvectors.column(c);
            let max = col.iter().fold(0.0_f64, |m, x| m.max(x.abs()));
            let first = col.iter().find(|x| x.abs() >= max * (1.0 - 1e-10)).unwrap();
            assert!(*first > 0.0);
        }
    }

    #[test]
    fn scrambled_path_order() {
        // The path 2 - 0 - 3 - 1 stored in arbitrary node order.
        let mut w = Array2::zeros((4, 4));
        for (i, j) in [(2, 0), (0, 3), (3, 1)] {
            w[[i, j]] = 1.0;
            w[[j, i]] = 1.0;
        }
        let g = crate::graph::PathGraph::from_weights(w).unwrap();
        let lap = normalized_laplacian(&g);
        let b = eigendecompose(&lap).unwrap();
        let err = (&b.reconstruct() - &lap).iter().fold(0.0_f64, |m, v| m.max(v.abs()));
        assert!(err < 1e-12);
    }
}
