mod common;

use common::{jacobi_eigen, matmul, max_abs_diff, path_laplacian_by_hand};
use fibergcn::gcnn::{spectral_conv_forward, FeatureBatch, SpectralConvParams};
use fibergcn::graph::{build_path_graph, eigendecompose, graclus_coarsen, normalized_laplacian, PathGraph};
use ndarray::{Array2, Array3};
use proptest::prelude::*;

/// Weighted path forest: consecutive nodes of a shuffled order are joined
/// with the given weights (zero means no edge).
fn path_forest() -> impl Strategy<Value = PathGraph> {
    (1usize..=16)
        .prop_flat_map(|n| {
            let weights = prop::collection::vec(prop_oneof![1 => Just(0.0), 4 => 0.1f64..5.0], n.saturating_sub(1));
            let order = Just((0..n).collect::<Vec<_>>()).prop_shuffle();
            (weights, order)
        })
        .prop_map(|(weights, order)| {
            let n = order.len();
            let mut w = Array2::zeros((n, n));
            for (k, &wt) in weights.iter().enumerate() {
                let (a, b) = (order[k], order[k + 1]);
                w[[a, b]] = wt;
                w[[b, a]] = wt;
            }
            PathGraph::from_weights(w).unwrap()
        })
}

fn batch(nodes: usize, b: usize, c: usize, values: &[f64]) -> FeatureBatch {
    FeatureBatch(Array3::from_shape_fn((nodes, b, c), |(i, j, k)| values[(i * b * c + j * c + k) % values.len()]))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn eigendecomposition_matches_jacobi(g in path_forest()) {
        let lap = normalized_laplacian(&g);
        let basis = eigendecompose(&lap).unwrap();
        let (vals, vecs) = jacobi_eigen(&lap);
        let n = vals.len();
        for i in 0..n {
            prop_assert!((basis.eigenvalues[i] - vals[i]).abs() < 1e-8, "λ{i}: {} vs {}", basis.eigenvalues[i], vals[i]);
        }
        let phi = &basis.eigenvectors;
        let gram = matmul(&phi.t().to_owned(), phi);
        prop_assert!(max_abs_diff(&gram, &Array2::eye(n)) < 1e-10);
        let lambda = Array2::from_diag(&basis.eigenvalues);
        prop_assert!(max_abs_diff(&matmul(&lap, phi), &matmul(phi, &lambda)) < 1e-10);
        prop_assert!(max_abs_diff(&basis.reconstruct(), &lap) < 1e-8);

        // Eigenvalue clusters span the same subspaces as the oracle's.
        let mut start = 0;
        while start < n {
            let mut end = start + 1;
            while end < n && vals[end] - vals[end - 1] <= 1e-6 {
                end += 1;
            }
            let ours = phi.slice(ndarray::s![.., start..end]).to_owned();
            let theirs = vecs.slice(ndarray::s![.., start..end]).to_owned();
            let pa = matmul(&ours, &ours.t().to_owned());
            let pb = matmul(&theirs, &theirs.t().to_owned());
            prop_assert!(max_abs_diff(&pa, &pb) <= 1e-6, "cluster {start}..{end}");
            start = end;
        }

        for i in 0..n {
            let col = phi.column(i);
            let big = col.iter().fold(0.0f64, |m, v| m.max(v.abs()));
            let first = col.iter().position(|v| (v.abs() - big).abs() <= 1e-10 * big).unwrap();
            prop_assert!(col[first] > 0.0);
        }
    }

    #[test]
    fn laplacian_is_psd_and_bounded(g in path_forest(), xs in prop::collection::vec(-1.0f64..1.0, 16)) {
        let lap = normalized_laplacian(&g);
        let n = lap.nrows();
        let x = Array2::from_shape_fn((n, 1), |(i, _)| xs[i]);
        let q = matmul(&x.t().to_owned(), &matmul(&lap, &x))[[0, 0]];
        prop_assert!(q >= -1e-12);
        let basis = eigendecompose(&lap).unwrap();
        for &l in basis.eigenvalues.iter() {
            prop_assert!((-1e-10..=2.0 + 1e-10).contains(&l));
        }
    }

    #[test]
    fn zero_multiplicity_counts_fakes(n in 2usize..80, levels in 1usize..=4) {
        let h = graclus_coarsen(&build_path_graph(n).unwrap(), levels).unwrap();
        for level in &h.levels {
            let zeros = level.basis.eigenvalues.iter().filter(|l| l.abs() < 1e-10).count();
            prop_assert_eq!(zeros, 1 + level.fake_count());
            for &l in level.basis.eigenvalues.iter() {
                prop_assert!((-1e-10..=2.0 + 1e-10).contains(&l));
            }
        }
    }

    #[test]
    fn transform_preserves_norm(n in 2usize..60, xs in prop::collection::vec(-3.0f64..3.0, 1..50)) {
        let h = graclus_coarsen(&build_path_graph(n).unwrap(), 3).unwrap();
        for level in &h.levels {
            let m = level.padded_len();
            let x = Array2::from_shape_fn((m, 1), |(i, _)| xs[i % xs.len()]);
            let xh = matmul(&level.basis.eigenvectors.t().to_owned(), &x);
            let norm = |a: &Array2<f64>| a.iter().map(|v| v * v).sum::<f64>().sqrt();
            prop_assert!((norm(&x) - norm(&xh)).abs() < 1e-10 * norm(&x).max(1.0));
        }
    }

    #[test]
    fn identity_and_eigenvalue_filters(n in 2usize..60, b in 1usize..4, c in 1usize..4,
                                       xs in prop::collection::vec(-1.0f64..1.0, 1..64)) {
        let h = graclus_coarsen(&build_path_graph(n).unwrap(), 3).unwrap();
        let level = &h.levels[0];
        let m = level.padded_len();
        let x = batch(m, b, c, &xs);

        let mut id = Array3::zeros((c, c, m));
        for k in 0..c {
            id.slice_mut(ndarray::s![k, k, ..]).fill(1.0);
        }
        let y = spectral_conv_forward(&SpectralConvParams { level: 0, filters: id.clone() }, &level.basis, &x).unwrap();
        let diff = y.0.iter().zip(x.0.iter()).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        prop_assert!(diff < 1e-10, "identity filter deviates by {diff}");

        let mut lam = Array3::zeros((c, c, m));
        for k in 0..c {
            lam.slice_mut(ndarray::s![k, k, ..]).assign(&level.basis.eigenvalues);
        }
        let y = spectral_conv_forward(&SpectralConvParams { level: 0, filters: lam }, &level.basis, &x).unwrap();
        let lap = normalized_laplacian(&level.graph);
        for j in 0..b {
            for k in 0..c {
                let col = Array2::from_shape_fn((m, 1), |(i, _)| x.0[[i, j, k]]);
                let direct = matmul(&lap, &col);
                for i in 0..m {
                    prop_assert!((y.0[[i, j, k]] - direct[[i, 0]]).abs() < 1e-8);
                }
            }
        }
    }

    #[test]
    fn convolution_matches_dense_formula(n in 2usize..30, q in 1usize..4, p in 1usize..4,
                                         gs in prop::collection::vec(-1.0f64..1.0, 1..40),
                                         xs in prop::collection::vec(-1.0f64..1.0, 1..40)) {
        let h = graclus_coarsen(&build_path_graph(n).unwrap(), 3).unwrap();
        let level = &h.levels[1];
        let m = level.padded_len();
        let b = 2;
        let filters = Array3::from_shape_fn((q, p, m), |(a, bb, cc)| gs[(a * 7 + bb * 3 + cc) % gs.len()]);
        let x = batch(m, b, p, &xs);
        let y = spectral_conv_forward(&SpectralConvParams { level: 1, filters: filters.clone() }, &level.basis, &x).unwrap();
        let phi = &level.basis.eigenvectors;
        for j in 0..b {
            for k in 0..q {
                let mut want: Array2<f64> = Array2::zeros((m, 1));
                for kp in 0..p {
                    let xc = Array2::from_shape_fn((m, 1), |(i, _)| x.0[[i, j, kp]]);
                    let g = Array2::from_diag(&filters.slice(ndarray::s![k, kp, ..]).to_owned());
                    want = want + matmul(phi, &matmul(&g, &matmul(&phi.t().to_owned(), &xc)));
                }
                for i in 0..m {
                    prop_assert!((y.0[[i, j, k]] - want[[i, 0]]).abs() < 1e-10);
                }
            }
        }
    }
}

#[test]
fn laplacian_entries_by_hand() {
    for n in [1, 2, 3, 8, 100] {
        let l = normalized_laplacian(&build_path_graph(n).unwrap());
        assert!(max_abs_diff(&l, &path_laplacian_by_hand(n)) < 1e-15, "n = {n}");
    }
}

#[test]
fn path_spectra_are_closed_form() {
    // Normalized path Laplacian eigenvalues are 1 - cos(πk/(n-1)).
    for n in [2usize, 3, 8, 100] {
        let basis = eigendecompose(&normalized_laplacian(&build_path_graph(n).unwrap())).unwrap();
        for k in 0..n {
            let want = 1.0 - (std::f64::consts::PI * k as f64 / (n - 1) as f64).cos();
            assert!((basis.eigenvalues[k] - want).abs() < 1e-10, "n={n} k={k}");
        }
    }
}
