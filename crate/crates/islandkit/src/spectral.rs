//! Normalized Laplacians, spectral embeddings, subspace projection distance,
//! the modified multi-layer Laplacian, row normalization, and k-means.
//!
//! The printed Laplacian expression with a positive half-power of D only has
//! the [0, 2] spectrum in its symmetric form D^(-1/2)(D - W)D^(-1/2), so that
//! form is what this module computes.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::layers::SimilarityMatrix;
use crate::modularity::Partition;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LaplacianKind {
    Normalized,
    Modified,
}

/// A symmetric Laplacian with its degree vector. Normalized kind has
/// eigenvalues in [0, 2]; the modified kind may be indefinite.
#[derive(Debug, Clone)]
pub struct LaplacianMatrix {
    kind: LaplacianKind,
    values: DMatrix<f64>,
    degrees: DVector<f64>,
}

impl LaplacianMatrix {
    pub fn kind(&self) -> LaplacianKind {
        self.kind
    }

    pub fn dim(&self) -> usize {
        self.values.nrows()
    }

    pub fn values(&self) -> &DMatrix<f64> {
        &self.values
    }

    pub fn degrees(&self) -> &DVector<f64> {
        &self.degrees
    }
}

/// Symmetric normalized Laplacian D^(-1/2)(D - W)D^(-1/2). Isolated vertices
/// (zero degree) get L_ii = 1 with a zero row/column otherwise.
pub fn normalized_laplacian(w: &SimilarityMatrix) -> LaplacianMatrix {
    let n = w.dim();
    let degrees = DVector::from_iterator(
        n,
        (0..n).map(|i| (0..n).map(|j| w.weight(i, j)).sum::<f64>()),
    );
    let inv_sqrt: Vec<f64> = degrees
        .iter()
        .map(|&d| if d > 0.0 { 1.0 / d.sqrt() } else { 0.0 })
        .collect();
    let mut l = DMatrix::zeros(n, n);
    for i in 0..n {
        l[(i, i)] = 1.0;
        for j in (i + 1)..n {
            let v = -w.weight(i, j) * inv_sqrt[i] * inv_sqrt[j];
            l[(i, j)] = v;
            l[(j, i)] = v;
        }
    }
    LaplacianMatrix {
        kind: LaplacianKind::Normalized,
        values: l,
        degrees,
    }
}

/// Spectral embedding: the k eigenvectors with smallest eigenvalues, columns
/// orthonormal and ordered by ascending eigenvalue.
#[derive(Debug, Clone)]
pub struct EmbeddingMatrix {
    basis: DMatrix<f64>,
    eigenvalues: Vec<f64>,
}

impl EmbeddingMatrix {
    pub fn dim(&self) -> usize {
        self.basis.nrows()
    }

    pub fn k(&self) -> usize {
        self.basis.ncols()
    }

    pub fn basis(&self) -> &DMatrix<f64> {
        &self.basis
    }

    /// Eigenvalues of the embedded columns, ascending.
    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    /// Builds an embedding from an explicit orthonormal basis. The columns
    /// are checked to be orthonormal within 1e-8.
    pub fn from_basis(basis: DMatrix<f64>, eigenvalues: Vec<f64>) -> Result<Self> {
        let residual = orthonormality_residual(&basis);
        if residual > 1e-8 {
            return Err(Error::NotOrthonormal(residual));
        }
        Ok(EmbeddingMatrix { basis, eigenvalues })
    }
}

fn orthonormality_residual(u: &DMatrix<f64>) -> f64 {
    let k = u.ncols();
    let gram = u.transpose() * u;
    let mut residual = 0.0f64;
    for i in 0..k {
        for j in 0..k {
            let target = if i == j { 1.0 } else { 0.0 };
            residual += (gram[(i, j)] - target).powi(2);
        }
    }
    residual.sqrt()
}

/// Full symmetric eigendecomposition, eigenpairs sorted ascending, each
/// eigenvector signed so its largest-magnitude entry is positive.
pub(crate) fn symmetric_eigen_sorted(m: &DMatrix<f64>) -> Result<(Vec<f64>, DMatrix<f64>)> {
    let n = m.nrows();
    let sym_residual = {
        let mut r = 0.0f64;
        for i in 0..n {
            for j in 0..n {
                r = r.max((m[(i, j)] - m[(j, i)]).abs());
            }
        }
        r
    };
    let eig = nalgebra::linalg::SymmetricEigen::try_new(m.clone(), f64::EPSILON, 100_000)
        .ok_or_else(|| Error::EigenFailure {
            n,
            sym_residual,
            max_abs: m.iter().fold(0.0f64, |acc, &v| acc.max(v.abs())),
        })?;
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| {
        eig.eigenvalues[a]
            .partial_cmp(&eig.eigenvalues[b])
            .unwrap()
            .then(a.cmp(&b))
    });
    let eigenvalues: Vec<f64> = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let mut vectors = DMatrix::zeros(n, n);
    for (col, &src) in order.iter().enumerate() {
        let mut v = eig.eigenvectors.column(src).clone_owned();
        // Deterministic sign: make the largest-magnitude entry positive.
        let mut pivot = 0;
        for i in 1..n {
            if v[i].abs() > v[pivot].abs() {
                pivot = i;
            }
        }
        if v[pivot] < 0.0 {
            v.neg_mut();
        }
        vectors.set_column(col, &v);
    }
    Ok((eigenvalues, vectors))
}

/// k smallest-eigenvalue eigenvectors of a Laplacian.
pub fn spectral_embedding(l: &LaplacianMatrix, k: usize) -> Result<EmbeddingMatrix> {
    let n = l.dim();
    if k == 0 || k > n {
        return Err(Error::TooManyClusters { k, n });
    }
    let (eigenvalues, vectors) = symmetric_eigen_sorted(l.values())?;
    Ok(EmbeddingMatrix {
        basis: vectors.columns(0, k).clone_owned(),
        eigenvalues: eigenvalues[..k].to_vec(),
    })
}

/// Riemannian squared projection distance between a target subspace and M
/// individual subspaces: d^2 = kM - sum_i tr(U U^T U_i U_i^T).
pub fn projection_distance(u: &EmbeddingMatrix, subspaces: &[EmbeddingMatrix]) -> Result<f64> {
    let k = u.k();
    for s in std::iter::once(u).chain(subspaces.iter()) {
        if s.dim() != u.dim() || s.k() != k {
            return Err(Error::DimensionMismatch(format!(
                "subspaces must all be {}x{k}",
                u.dim()
            )));
        }
        let residual = orthonormality_residual(s.basis());
        if residual > 1e-8 {
            return Err(Error::NotOrthonormal(residual));
        }
    }
    let m = subspaces.len() as f64;
    let mut overlap = 0.0;
    for s in subspaces {
        // tr(U U^T U_i U_i^T) = ||U^T U_i||_F^2.
        let g = u.basis().transpose() * s.basis();
        overlap += g.iter().map(|&x| x * x).sum::<f64>();
    }
    Ok(k as f64 * m - overlap)
}

/// Modified Laplacian L_m = sum_i L_i - alpha * sum_i U_i U_i^T. Symmetric by
/// construction; indefinite for alpha > 0.
pub fn modified_laplacian(
    laplacians: &[LaplacianMatrix],
    subspaces: &[EmbeddingMatrix],
    alpha: f64,
) -> Result<LaplacianMatrix> {
    if laplacians.is_empty() || laplacians.len() != subspaces.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} Laplacians vs {} subspaces",
            laplacians.len(),
            subspaces.len()
        )));
    }
    if alpha < 0.0 {
        return Err(Error::Config(format!("alpha must be >= 0, got {alpha}")));
    }
    let n = laplacians[0].dim();
    for (l, u) in laplacians.iter().zip(subspaces) {
        if l.dim() != n || u.dim() != n {
            return Err(Error::DimensionMismatch(format!(
                "all layers must be {n}x{n}"
            )));
        }
    }
    let mut sum = DMatrix::zeros(n, n);
    for l in laplacians {
        sum += l.values();
    }
    if alpha > 0.0 {
        for u in subspaces {
            sum -= alpha * (u.basis() * u.basis().transpose());
        }
        // Re-symmetrize: the projector products round asymmetrically.
        for i in 0..n {
            for j in (i + 1)..n {
                let v = 0.5 * (sum[(i, j)] + sum[(j, i)]);
                sum[(i, j)] = v;
                sum[(j, i)] = v;
            }
        }
    }
    Ok(LaplacianMatrix {
        kind: LaplacianKind::Modified,
        values: sum,
        degrees: DVector::zeros(n),
    })
}

/// Row-normalized embedding plus the indices of any zero rows that were left
/// untouched.
#[derive(Debug, Clone)]
pub struct RowNormalized {
    pub matrix: DMatrix<f64>,
    pub zero_rows: Vec<usize>,
}

/// Scales each row to unit Euclidean norm. Rows with norm below 1e-12 are
/// left as zero and flagged.
pub fn row_normalize(u: &EmbeddingMatrix) -> RowNormalized {
    let mut matrix = u.basis().clone();
    let mut zero_rows = Vec::new();
    for i in 0..matrix.nrows() {
        let norm: f64 = matrix.row(i).iter().map(|&x| x * x).sum::<f64>().sqrt();
        if norm < 1e-12 {
            zero_rows.push(i);
            continue;
        }
        for j in 0..matrix.ncols() {
            matrix[(i, j)] /= norm;
        }
    }
    RowNormalized { matrix, zero_rows }
}

const KMEANS_MAX_ITERS: usize = 300;
const KMEANS_SHIFT_TOL: f64 = 1e-9;

/// Lloyd's algorithm with k-means++ seeding and deterministic restarts.
/// Returns the minimum-inertia assignment across `restarts` runs whose
/// sub-seeds derive from `seed`.
pub fn kmeans_cluster(
    points: &DMatrix<f64>,
    k: usize,
    seed: u64,
    restarts: usize,
) -> Result<Partition> {
    let n = points.nrows();
    if k == 0 || k > n {
        return Err(Error::TooManyClusters { k, n });
    }
    let restarts = restarts.max(1);
    let mut best: Option<(f64, Vec<usize>)> = None;
    for r in 0..restarts {
        // splitmix-style sub-seed derivation keeps restarts decorrelated.
        let sub_seed = seed ^ (r as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15).wrapping_add(r as u64);
        let (inertia, labels) = lloyd_run(points, k, sub_seed);
        match &best {
            Some((best_inertia, _)) if inertia >= *best_inertia => {}
            _ => best = Some((inertia, labels)),
        }
    }
    let (_, labels) = best.unwrap();
    Ok(Partition::canonicalize(&labels))
}

fn sq_dist(points: &DMatrix<f64>, i: usize, centroid: &[f64]) -> f64 {
    (0..points.ncols())
        .map(|d| {
            let diff = points[(i, d)] - centroid[d];
            diff * diff
        })
        .sum()
}

fn lloyd_run(points: &DMatrix<f64>, k: usize, seed: u64) -> (f64, Vec<usize>) {
    let n = points.nrows();
    let dim = points.ncols();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    // k-means++ seeding.
    let mut centroids: Vec<Vec<f64>> = Vec::with_capacity(k);
    let first = rng.gen_range(0..n);
    centroids.push(points.row(first).iter().cloned().collect());
    let mut d2: Vec<f64> = (0..n).map(|i| sq_dist(points, i, &centroids[0])).collect();
    while centroids.len() < k {
        let total: f64 = d2.iter().sum();
        let chosen = if total <= 0.0 {
            // All points coincide with existing centroids; any choice works.
            rng.gen_range(0..n)
        } else {
            // D^2-weighted draw.
            let target = rng.gen_range(0.0..total);
            let mut acc = 0.0;
            let mut pick = n - 1;
            for (i, &d) in d2.iter().enumerate() {
                acc += d;
                if acc > target {
                    pick = i;
                    break;
                }
            }
            pick
        };
        centroids.push(points.row(chosen).iter().cloned().collect());
        for (i, slot) in d2.iter_mut().enumerate() {
            let d = sq_dist(points, i, centroids.last().unwrap());
            if d < *slot {
                *slot = d;
            }
        }
    }

    let mut labels = vec![0usize; n];
    let mut inertia = f64::INFINITY;
    for _iter in 0..KMEANS_MAX_ITERS {
        // Assignment step; ties go to the lowest centroid index.
        let mut new_inertia = 0.0;
        for (i, label) in labels.iter_mut().enumerate() {
            let mut best_c = 0;
            let mut best_d = sq_dist(points, i, &centroids[0]);
            for (c, centroid) in centroids.iter().enumerate().skip(1) {
                let d = sq_dist(points, i, centroid);
                if d < best_d {
                    best_d = d;
                    best_c = c;
                }
            }
            *label = best_c;
            new_inertia += best_d;
        }
        // Lloyd iterations never increase the objective.
        assert!(
            new_inertia <= inertia * (1.0 + 1e-12) + 1e-12,
            "k-means inertia increased: {inertia} -> {new_inertia}"
        );
        inertia = new_inertia;

        // Update step.
        let mut sums = vec![vec![0.0; dim]; k];
        let mut counts = vec![0usize; k];
        for i in 0..n {
            counts[labels[i]] += 1;
            for d in 0..dim {
                sums[labels[i]][d] += points[(i, d)];
            }
        }
        let mut shift = 0.0f64;
        for c in 0..k {
            if counts[c] == 0 {
                // Reseed an empty cluster with the point farthest from its
                // centroid (deterministic; strictly reduces inertia).
                let far = (0..n)
                    .max_by(|&a, &b| {
                        sq_dist(points, a, &centroids[labels[a]])
                            .partial_cmp(&sq_dist(points, b, &centroids[labels[b]]))
                            .unwrap()
                            .then(b.cmp(&a))
                    })
                    .unwrap();
                let new_centroid: Vec<f64> = points.row(far).iter().cloned().collect();
                shift = f64::INFINITY;
                centroids[c] = new_centroid;
                continue;
            }
            for d in 0..dim {
                let next = sums[c][d] / counts[c] as f64;
                shift = shift.max((next - centroids[c][d]).abs());
                centroids[c][d] = next;
            }
        }
        if shift < KMEANS_SHIFT_TOL {
            break;
        }
    }
    (inertia, labels)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::layers::LayerKind;
    use approx::assert_relative_eq;

    fn layer_from_edges(n: usize, edges: &[(usize, usize, f64)]) -> SimilarityMatrix {
        let mut w = DMatrix::zeros(n, n);
        for &(i, j, weight) in edges {
            w[(i, j)] += weight;
            w[(j, i)] += weight;
        }
        SimilarityMatrix::new(LayerKind::Frequency, w).unwrap()
    }

    #[test]
    fn k2_laplacian_spectrum() {
        let l = normalized_laplacian(&layer_from_edges(2, &[(0, 1, 1.0)]));
        let (vals, _) = symmetric_eigen_sorted(l.values()).unwrap();
        assert_relative_eq!(vals[0], 0.0, epsilon = 1e-12);
        assert_relative_eq!(vals[1], 2.0, epsilon = 1e-12);
    }

    #[test]
    fn known_null_vector() {
        let mut edges = Vec::new();
        for i in 0..5 {
            edges.push((i, (i + 1) % 6, 1.0 + i as f64));
        }
        let layer = layer_from_edges(6, &edges);
        let l = normalized_laplacian(&layer);
        let null = DVector::from_iterator(6, l.degrees().iter().map(|&d| d.sqrt()));
        let out = l.values() * null;
        assert!(out.iter().all(|&x| x.abs() <= 1e-10), "residual {out}");
    }

    #[test]
    fn complete_k4_eigenvalues() {
        let mut edges = Vec::new();
        for i in 0..4 {
            for j in (i + 1)..4 {
                edges.push((i, j, 1.0));
            }
        }
        let l = normalized_laplacian(&layer_from_edges(4, &edges));
        let (vals, _) = symmetric_eigen_sorted(l.values()).unwrap();
        assert_relative_eq!(vals[0], 0.0, epsilon = 1e-10);
        for &v in &vals[1..] {
            // Closed form n/(n-1) for complete graphs.
            assert_relative_eq!(v, 4.0 / 3.0, epsilon = 1e-10);
        }
    }

    #[test]
    fn isolated_vertex_convention() {
        let layer = layer_from_edges(3, &[(0, 1, 2.0)]);
        let l = normalized_laplacian(&layer);
        assert_eq!(l.values()[(2, 2)], 1.0);
        assert_eq!(l.values()[(2, 0)], 0.0);
        assert_eq!(l.values()[(2, 1)], 0.0);
    }

    #[test]
    fn embedding_zero_multiplicity_counts_components() {
        // Two disjoint edges: two connected components, two ~0 eigenvalues.
        let layer = layer_from_edges(4, &[(0, 1, 1.0), (2, 3, 1.0)]);
        let l = normalized_laplacian(&layer);
        let u = spectral_embedding(&l, 2).unwrap();
        assert!(u.eigenvalues()[0].abs() <= 1e-8);
        assert!(u.eigenvalues()[1].abs() <= 1e-8);
    }

    #[test]
    fn embedding_k1_is_scaled_degree_vector() {
        let layer = layer_from_edges(4, &[(0, 1, 1.0), (1, 2, 2.0), (2, 3, 1.5), (0, 3, 0.5)]);
        let l = normalized_laplacian(&layer);
        let u = spectral_embedding(&l, 1).unwrap();
        let mut expected = DVector::from_iterator(4, l.degrees().iter().map(|&d| d.sqrt()));
        expected /= expected.norm();
        let col = u.basis().column(0);
        // Up to sign; the convention makes the largest entry positive, and
        // all entries of D^(1/2) 1 are positive.
        for i in 0..4 {
            assert_relative_eq!(col[i], expected[i], epsilon = 1e-9);
        }
    }

    #[test]
    fn rayleigh_trace_identity() {
        use rand::Rng;
        let mut rng = ChaCha8Rng::seed_from_u64(41);
        let n = 20;
        let mut edges = Vec::new();
        for i in 0..n {
            for j in (i + 1)..n {
                if rng.gen_bool(0.3) {
                    edges.push((i, j, rng.gen_range(0.1..2.0)));
                }
            }
        }
        let l = normalized_laplacian(&layer_from_edges(n, &edges));
        let u = spectral_embedding(&l, 3).unwrap();
        let trace = (u.basis().transpose() * l.values() * u.basis()).trace();
        let expected: f64 = u.eigenvalues().iter().sum();
        assert!((trace - expected).abs() <= 1e-8);
    }

    #[test]
    fn embedding_columns_orthonormal() {
        let layer = layer_from_edges(5, &[(0, 1, 1.0), (1, 2, 1.0), (2, 3, 1.0), (3, 4, 1.0)]);
        let l = normalized_laplacian(&layer);
        let u = spectral_embedding(&l, 3).unwrap();
        assert!(orthonormality_residual(u.basis()) <= 1e-10);
    }

    fn coordinate_embedding(n: usize, cols: &[usize]) -> EmbeddingMatrix {
        let mut basis = DMatrix::zeros(n, cols.len());
        for (c, &row) in cols.iter().enumerate() {
            basis[(row, c)] = 1.0;
        }
        EmbeddingMatrix::from_basis(basis, vec![0.0; cols.len()]).unwrap()
    }

    #[test]
    fn projection_distance_identical_subspaces() {
        let u = coordinate_embedding(6, &[0, 1]);
        let d = projection_distance(&u, &[u.clone(), u.clone(), u.clone()]).unwrap();
        assert!(d.abs() <= 1e-10);
    }

    #[test]
    fn projection_distance_orthogonal_subspaces() {
        let u = coordinate_embedding(6, &[0, 1]);
        let v = coordinate_embedding(6, &[2, 3]);
        let d = projection_distance(&u, &[v]).unwrap();
        assert_relative_eq!(d, 2.0, epsilon = 1e-10);
    }

    // SVD-based oracle: d^2 = sum over layers of sum_j (1 - sigma_j^2) where
    // sigma_j are the singular values of U^T U_i.
    fn projection_distance_svd_oracle(u: &EmbeddingMatrix, subspaces: &[EmbeddingMatrix]) -> f64 {
        let mut total = 0.0;
        for s in subspaces {
            let g = u.basis().transpose() * s.basis();
            let svd = nalgebra::linalg::SVD::new(g, false, false);
            total += svd
                .singular_values
                .iter()
                .map(|&sv| 1.0 - sv * sv)
                .sum::<f64>();
        }
        total
    }

    fn random_orthonormal(n: usize, k: usize, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
        use rand::Rng;
        let raw = DMatrix::from_fn(n, k, |_, _| rng.gen_range(-1.0..1.0));
        let qr = raw.qr();
        let q = qr.q();
        q.columns(0, k).clone_owned()
    }

    #[test]
    fn projection_distance_matches_svd_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        for _ in 0..20 {
            let u = EmbeddingMatrix::from_basis(random_orthonormal(10, 3, &mut rng), vec![0.0; 3])
                .unwrap();
            let subs: Vec<EmbeddingMatrix> = (0..3)
                .map(|_| {
                    EmbeddingMatrix::from_basis(
                        random_orthonormal(10, 3, &mut rng),
                        vec![0.0; 3],
                    )
                    .unwrap()
                })
                .collect();
            let d = projection_distance(&u, &subs).unwrap();
            let oracle = projection_distance_svd_oracle(&u, &subs);
            assert_relative_eq!(d, oracle, epsilon = 1e-9);
            assert!((-1e-10..=3.0 * 3.0 + 1e-10).contains(&d));
        }
    }

    #[test]
    fn projection_distance_rejects_non_orthonormal() {
        let mut basis = DMatrix::zeros(4, 2);
        basis[(0, 0)] = 1.0;
        basis[(0, 1)] = 1.0; // same direction twice
        basis[(1, 1)] = 0.5;
        let err = EmbeddingMatrix::from_basis(basis, vec![0.0; 2]).unwrap_err();
        assert_eq!(err.code(), "not_orthonormal");
    }

    #[test]
    fn modified_laplacian_alpha_zero_is_sum() {
        let l1 = normalized_laplacian(&layer_from_edges(4, &[(0, 1, 1.0), (2, 3, 1.0)]));
        let l2 = normalized_laplacian(&layer_from_edges(4, &[(1, 2, 2.0), (0, 3, 1.0)]));
        let u1 = spectral_embedding(&l1, 2).unwrap();
        let u2 = spectral_embedding(&l2, 2).unwrap();
        let lm = modified_laplacian(
            &[l1.clone(), l2.clone()],
            &[u1, u2],
            0.0,
        )
        .unwrap();
        let expected = l1.values() + l2.values();
        for i in 0..4 {
            for j in 0..4 {
                assert!((lm.values()[(i, j)] - expected[(i, j)]).abs() <= 1e-12);
            }
        }
    }

    #[test]
    fn modified_laplacian_single_layer_alpha_zero_identity() {
        let l1 = normalized_laplacian(&layer_from_edges(3, &[(0, 1, 1.0), (1, 2, 1.0)]));
        let u1 = spectral_embedding(&l1, 2).unwrap();
        let lm = modified_laplacian(std::slice::from_ref(&l1), &[u1], 0.0).unwrap();
        assert_eq!(lm.values(), l1.values());
    }

    #[test]
    fn modified_laplacian_entrywise_against_direct_arithmetic() {
        let l1 = normalized_laplacian(&layer_from_edges(5, &[(0, 1, 1.0), (1, 2, 1.0), (3, 4, 2.0)]));
        let l2 = normalized_laplacian(&layer_from_edges(5, &[(0, 4, 1.5), (2, 3, 0.5)]));
        let u = spectral_embedding(&l1, 2).unwrap();
        // M = 2 with U1 = U2 = U and alpha = 1: L1 + L2 - 2 U U^T.
        let lm = modified_laplacian(&[l1.clone(), l2.clone()], &[u.clone(), u.clone()], 1.0).unwrap();
        let direct = l1.values() + l2.values() - 2.0 * (u.basis() * u.basis().transpose());
        for i in 0..5 {
            for j in 0..5 {
                assert!((lm.values()[(i, j)] - direct[(i, j)]).abs() <= 1e-12);
            }
        }
        // Symmetry holds exactly after re-symmetrization.
        for i in 0..5 {
            for j in 0..5 {
                assert_eq!(lm.values()[(i, j)], lm.values()[(j, i)]);
            }
        }
    }

    #[test]
    fn modified_laplacian_dimension_mismatch() {
        let l1 = normalized_laplacian(&layer_from_edges(3, &[(0, 1, 1.0)]));
        let l2 = normalized_laplacian(&layer_from_edges(4, &[(0, 1, 1.0)]));
        let u1 = spectral_embedding(&l1, 1).unwrap();
        let u2 = spectral_embedding(&l2, 1).unwrap();
        assert!(modified_laplacian(&[l1, l2], &[u1, u2], 0.5).is_err());
    }

    #[test]
    fn row_normalize_examples() {
        let mut basis = DMatrix::zeros(3, 2);
        basis[(0, 0)] = 3.0;
        basis[(0, 1)] = 4.0;
        basis[(1, 0)] = 1.0;
        // row 2 stays zero
        let u = EmbeddingMatrix {
            basis,
            eigenvalues: vec![0.0, 0.0],
        };
        let rn = row_normalize(&u);
        assert_relative_eq!(rn.matrix[(0, 0)], 0.6, epsilon = 1e-15);
        assert_relative_eq!(rn.matrix[(0, 1)], 0.8, epsilon = 1e-15);
        assert_eq!(rn.matrix[(1, 0)], 1.0);
        assert_eq!(rn.zero_rows, vec![2]);
        assert_eq!(rn.matrix[(2, 0)], 0.0);
    }

    #[test]
    fn row_normalize_unit_rows_unchanged() {
        let mut basis = DMatrix::zeros(2, 2);
        basis[(0, 0)] = 1.0;
        basis[(1, 1)] = 1.0;
        let u = EmbeddingMatrix {
            basis: basis.clone(),
            eigenvalues: vec![0.0, 0.0],
        };
        let rn = row_normalize(&u);
        for i in 0..2 {
            for j in 0..2 {
                assert!((rn.matrix[(i, j)] - basis[(i, j)]).abs() <= 1e-15);
            }
        }
    }

    #[test]
    fn kmeans_separated_clouds() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        use rand::Rng;
        let mut pts = DMatrix::zeros(20, 2);
        for i in 0..10 {
            pts[(i, 0)] = rng.gen_range(-0.1..0.1);
            pts[(i, 1)] = rng.gen_range(-0.1..0.1);
        }
        for i in 10..20 {
            pts[(i, 0)] = 10.0 + rng.gen_range(-0.1..0.1);
            pts[(i, 1)] = 10.0 + rng.gen_range(-0.1..0.1);
        }
        for seed in 0..5 {
            let p = kmeans_cluster(&pts, 2, seed, 1).unwrap();
            let first = p.cluster_of(0);
            assert!((0..10).all(|i| p.cluster_of(i) == first));
            let second = p.cluster_of(10);
            assert_ne!(first, second);
            assert!((10..20).all(|i| p.cluster_of(i) == second));
        }
    }

    #[test]
    fn kmeans_k_equals_n_gives_singletons() {
        let mut pts = DMatrix::zeros(4, 1);
        for i in 0..4 {
            pts[(i, 0)] = i as f64;
        }
        let p = kmeans_cluster(&pts, 4, 9, 20).unwrap();
        assert_eq!(p.k(), 4);
        let mut seen = std::collections::HashSet::new();
        for i in 0..4 {
            assert!(seen.insert(p.cluster_of(i)));
        }
    }

    #[test]
    fn kmeans_deterministic_for_seed() {
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        use rand::Rng;
        let pts = DMatrix::from_fn(30, 3, |_, _| rng.gen_range(-1.0..1.0));
        let a = kmeans_cluster(&pts, 4, 1234, 20).unwrap();
        let b = kmeans_cluster(&pts, 4, 1234, 20).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn kmeans_rejects_k_above_n() {
        let pts = DMatrix::zeros(3, 2);
        let err = kmeans_cluster(&pts, 4, 0, 1).unwrap_err();
        assert_eq!(err.code(), "too_many_clusters");
    }
}
