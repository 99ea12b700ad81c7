//! Stage I: greedy modularity clustering of a similarity layer, finding the
//! number and membership of coherent bus groups without a predefined group
//! count.
//!
//! Weighted generalization: degrees are row sums, m is total weight / 2, and
//! the delta runs over all ordered pairs including i = j (diagonals are zero
//! by the layer invariant).

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::layers::SimilarityMatrix;

/// A partition of buses into contiguous cluster ids 0..k-1.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Partition {
    assignment: Vec<usize>,
    k: usize,
}

impl Partition {
    /// Validates that cluster ids are exactly 0..k-1 with every id present.
    pub fn new(assignment: Vec<usize>) -> Result<Self> {
        if assignment.is_empty() {
            return Err(Error::Validation("partition covers no vertices".into()));
        }
        let k = assignment.iter().max().copied().unwrap() + 1;
        let mut present = vec![false; k];
        for &c in &assignment {
            present[c] = true;
        }
        if !present.iter().all(|&p| p) {
            return Err(Error::Validation(
                "partition cluster ids are not contiguous".into(),
            ));
        }
        Ok(Partition { assignment, k })
    }

    /// Relabels arbitrary cluster labels into contiguous ids ordered by first
    /// appearance, so equal clusterings are represented identically.
    pub fn canonicalize(labels: &[usize]) -> Self {
        let mut map = std::collections::HashMap::new();
        let mut assignment = Vec::with_capacity(labels.len());
        for &l in labels {
            let next = map.len();
            let id = *map.entry(l).or_insert(next);
            assignment.push(id);
        }
        Partition {
            assignment,
            k: map.len(),
        }
    }

    pub fn single_cluster(n: usize) -> Self {
        Partition {
            assignment: vec![0; n],
            k: 1,
        }
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn len(&self) -> usize {
        self.assignment.len()
    }

    pub fn is_empty(&self) -> bool {
        self.assignment.is_empty()
    }

    pub fn cluster_of(&self, vertex: usize) -> usize {
        self.assignment[vertex]
    }

    pub fn assignment(&self) -> &[usize] {
        &self.assignment
    }

    /// Members of each cluster, each sorted ascending.
    pub fn clusters(&self) -> Vec<Vec<usize>> {
        let mut out = vec![Vec::new(); self.k];
        for (v, &c) in self.assignment.iter().enumerate() {
            out[c].push(v);
        }
        out
    }
}

/// One agglomeration step: clusters `a` and `b` merged with modularity gain
/// `delta_q`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MergeStep {
    pub a: usize,
    pub b: usize,
    pub delta_q: f64,
}

/// Result of stage-I coherency detection.
#[derive(Debug, Clone)]
pub struct CoherencyResult {
    pub partition: Partition,
    /// Modularity of the returned partition.
    pub q: f64,
    pub merge_history: Vec<MergeStep>,
}

/// Modularity of a partition on a nonnegative layer, computed per community
/// as in_c/S - (deg_c/S)^2 with S the total degree. This form makes the
/// single-community partition evaluate to exactly 0.
pub fn modularity_score(layer: &SimilarityMatrix, p: &Partition) -> Result<f64> {
    let n = layer.dim();
    if p.len() != n {
        return Err(Error::DimensionMismatch(format!(
            "partition covers {} vertices, layer has {n}",
            p.len()
        )));
    }
    let w = layer.weights();
    let degrees: Vec<f64> = (0..n).map(|i| (0..n).map(|j| w[(i, j)]).sum()).collect();
    let total: f64 = degrees.iter().sum();
    if total <= 0.0 {
        return Err(Error::EmptyGraph);
    }
    let clusters = p.clusters();
    let mut q = 0.0;
    for members in &clusters {
        let mut internal = 0.0;
        let mut degree = 0.0;
        for &i in members {
            // Summing the full row for a single community reproduces the
            // degree bit-for-bit, so Q telescopes to exactly 0 there.
            let mut row = 0.0;
            for &j in members {
                row += w[(i, j)];
            }
            internal += row;
            degree += degrees[i];
        }
        let frac = degree / total;
        q += internal / total - frac * frac;
    }
    Ok(q)
}

/// CNM-style agglomeration: start from singletons, repeatedly merge the pair
/// with the largest positive modularity gain. Ties break on the smaller
/// (min id, max id) pair. Returns the partition at the peak modularity along
/// the merge path; if the path never reaches Q >= 0, the all-merged
/// single-community partition (Q = 0) is returned.
pub fn greedy_modularity_cluster(layer: &SimilarityMatrix) -> Result<CoherencyResult> {
    let n = layer.dim();
    let w = layer.weights();
    let degrees: Vec<f64> = (0..n).map(|i| (0..n).map(|j| w[(i, j)]).sum()).collect();
    let total: f64 = degrees.iter().sum();
    if total <= 0.0 {
        return Err(Error::EmptyGraph);
    }

    // Live clusters are identified by their smallest member vertex.
    let mut alive: Vec<bool> = vec![true; n];
    let mut members: Vec<Vec<usize>> = (0..n).map(|v| vec![v]).collect();
    let mut degree: Vec<f64> = degrees.clone();
    let mut internal: Vec<f64> = vec![0.0; n];
    // between[a][b] = total weight between clusters a and b (unordered).
    let mut between: Vec<Vec<f64>> = (0..n)
        .map(|i| (0..n).map(|j| w[(i, j)]).collect())
        .collect();

    let singleton_q: f64 = (0..n)
        .map(|i| {
            let frac = degree[i] / total;
            internal[i] / total - frac * frac
        })
        .sum();

    let mut history = Vec::new();
    let mut q = singleton_q;
    let mut best_q = q;
    let mut best_merge_count = 0usize;

    loop {
        // Largest delta-Q over live pairs; first-seen wins ties, and pairs are
        // scanned in ascending (a, b), which is the documented tie-break.
        let mut best: Option<(usize, usize, f64)> = None;
        for a in 0..n {
            if !alive[a] {
                continue;
            }
            for b in (a + 1)..n {
                if !alive[b] {
                    continue;
                }
                let delta = 2.0 * (between[a][b] / total - (degree[a] / total) * (degree[b] / total));
                match best {
                    Some((_, _, d)) if delta <= d => {}
                    _ => best = Some((a, b, delta)),
                }
            }
        }
        let Some((a, b, delta)) = best else { break };
        if delta <= 0.0 {
            break;
        }

        history.push(MergeStep { a, b, delta_q: delta });
        // Merge b into a (a < b keeps the smallest-member id stable).
        internal[a] += internal[b] + 2.0 * between[a][b];
        degree[a] += degree[b];
        let moved = std::mem::take(&mut members[b]);
        members[a].extend(moved);
        alive[b] = false;
        for c in 0..n {
            if c != a && alive[c] {
                let extra = between[b.min(c)][b.max(c)];
                between[a.min(c)][a.max(c)] += extra;
            }
        }
        q += delta;
        if q > best_q {
            best_q = q;
            best_merge_count = history.len();
        }
    }

    let (partition, result_q) = if best_q < 0.0 {
        // No point of the merge path reached Q >= 0: fall back to the
        // single-community partition, whose modularity is exactly 0.
        (Partition::single_cluster(n), 0.0)
    } else {
        // Replay the merge prefix that achieved the peak. Cluster indices in
        // the history are never reused, so relabeling b -> a per step is
        // sufficient.
        let mut labels: Vec<usize> = (0..n).collect();
        for step in &history[..best_merge_count] {
            for l in labels.iter_mut() {
                if *l == step.b {
                    *l = step.a;
                }
            }
        }
        let partition = Partition::canonicalize(&labels);
        let q = modularity_score(layer, &partition)?;
        (partition, q)
    };

    Ok(CoherencyResult {
        partition,
        q: result_q,
        merge_history: history,
    })
}

/// Stage-I entry point: coherent bus groups on the configured layer. The
/// result's k feeds stage II.
pub fn detect_coherent_groups(layer: &SimilarityMatrix) -> Result<CoherencyResult> {
    greedy_modularity_cluster(layer)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::layers::LayerKind;
    use nalgebra::DMatrix;

    pub(crate) fn layer_from_edges(n: usize, edges: &[(usize, usize, f64)]) -> SimilarityMatrix {
        let mut w = DMatrix::zeros(n, n);
        for &(i, j, weight) in edges {
            w[(i, j)] += weight;
            w[(j, i)] += weight;
        }
        SimilarityMatrix::new(LayerKind::Frequency, w).unwrap()
    }

    fn two_triangles() -> SimilarityMatrix {
        layer_from_edges(
            6,
            &[
                (0, 1, 1.0),
                (1, 2, 1.0),
                (0, 2, 1.0),
                (3, 4, 1.0),
                (4, 5, 1.0),
                (3, 5, 1.0),
            ],
        )
    }

    #[test]
    fn single_community_is_exactly_zero() {
        let layer = two_triangles();
        let p = Partition::single_cluster(6);
        assert_eq!(modularity_score(&layer, &p).unwrap(), 0.0);
    }

    #[test]
    fn two_triangles_by_triangle_is_half() {
        let layer = two_triangles();
        let p = Partition::new(vec![0, 0, 0, 1, 1, 1]).unwrap();
        // Direct evaluation: m = 6, per-group internal 6 (ordered), degree 6,
        // per-group term 6/12 - (6/12)^2 = 0.25, total 0.5.
        assert_eq!(modularity_score(&layer, &p).unwrap(), 0.5);
    }

    #[test]
    fn k2_singletons_minus_half() {
        let layer = layer_from_edges(2, &[(0, 1, 1.0)]);
        let p = Partition::new(vec![0, 1]).unwrap();
        // d_i = 1, m = 1: Q = 2 * (0 - (1/2)^2) = -0.5.
        assert_eq!(modularity_score(&layer, &p).unwrap(), -0.5);
    }

    #[test]
    fn empty_graph_is_error() {
        let layer = layer_from_edges(3, &[]);
        let p = Partition::single_cluster(3);
        assert_eq!(
            modularity_score(&layer, &p).unwrap_err().code(),
            "empty_graph"
        );
    }

    #[test]
    fn modularity_within_bounds() {
        use rand::Rng;
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(19);
        for _ in 0..25 {
            let n = rng.gen_range(2..9);
            let mut edges = Vec::new();
            for i in 0..n {
                for j in (i + 1)..n {
                    if rng.gen_bool(0.6) {
                        edges.push((i, j, rng.gen_range(0.1..2.0)));
                    }
                }
            }
            if edges.is_empty() {
                edges.push((0, 1, 1.0));
            }
            let layer = layer_from_edges(n, &edges);
            let labels: Vec<usize> = (0..n).map(|_| rng.gen_range(0..3)).collect();
            let p = Partition::canonicalize(&labels);
            let q = modularity_score(&layer, &p).unwrap();
            assert!((-1.0..=1.0).contains(&q), "Q = {q} out of range");
        }
    }

    #[test]
    fn greedy_recovers_bridged_triangles() {
        let mut edges = vec![
            (0, 1, 1.0),
            (1, 2, 1.0),
            (0, 2, 1.0),
            (3, 4, 1.0),
            (4, 5, 1.0),
            (3, 5, 1.0),
            (2, 3, 1.0), // bridge
        ];
        edges.sort_unstable_by_key(|e| (e.0, e.1));
        let layer = layer_from_edges(6, &edges);
        let res = greedy_modularity_cluster(&layer).unwrap();
        assert_eq!(res.partition.k(), 2);
        assert_eq!(res.partition.assignment(), &[0, 0, 0, 1, 1, 1]);
        assert_eq!(modularity_score(&layer, &res.partition).unwrap(), res.q);
    }

    #[test]
    fn greedy_k2_merges_to_single_community() {
        let layer = layer_from_edges(2, &[(0, 1, 1.0)]);
        let res = greedy_modularity_cluster(&layer).unwrap();
        assert_eq!(res.partition.k(), 1);
        assert_eq!(res.q, 0.0);
        assert_eq!(res.merge_history.len(), 1);
        assert_eq!(res.merge_history[0].delta_q, 0.5);
    }

    #[test]
    fn uniform_complete_graph_collapses_to_one_group() {
        let n = 6;
        let mut edges = Vec::new();
        for i in 0..n {
            for j in (i + 1)..n {
                edges.push((i, j, 1.0));
            }
        }
        let layer = layer_from_edges(n, &edges);
        let res = detect_coherent_groups(&layer).unwrap();
        assert_eq!(res.partition.k(), 1);
        assert_eq!(res.q, 0.0);
    }

    #[test]
    fn block_diagonal_two_blocks_recovered() {
        let mut edges = Vec::new();
        for block in 0..2 {
            let off = block * 4;
            for i in 0..4 {
                for j in (i + 1)..4 {
                    edges.push((off + i, off + j, 0.9));
                }
            }
        }
        let layer = layer_from_edges(8, &edges);
        let res = detect_coherent_groups(&layer).unwrap();
        assert_eq!(res.partition.k(), 2);
        assert_eq!(res.partition.assignment(), &[0, 0, 0, 0, 1, 1, 1, 1]);
    }

    #[test]
    fn returned_q_never_below_zero_when_history_positive() {
        use rand::Rng;
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(23);
        for _ in 0..30 {
            let n = rng.gen_range(3..10);
            let mut edges = Vec::new();
            for i in 0..n {
                for j in (i + 1)..n {
                    if rng.gen_bool(0.5) {
                        edges.push((i, j, rng.gen_range(0.05..3.0)));
                    }
                }
            }
            if edges.is_empty() {
                edges.push((0, 1, 1.0));
            }
            let layer = layer_from_edges(n, &edges);
            let res = greedy_modularity_cluster(&layer).unwrap();
            assert!(res.q >= 0.0, "returned Q = {} below 0", res.q);
            assert_eq!(modularity_score(&layer, &res.partition).unwrap(), res.q);
        }
    }

    #[test]
    fn permutation_equivariance() {
        let edges = [
            (0, 1, 2.0),
            (1, 2, 2.0),
            (0, 2, 2.0),
            (3, 4, 2.0),
            (2, 3, 0.1),
        ];
        let layer = layer_from_edges(5, &edges);
        let res = greedy_modularity_cluster(&layer).unwrap();

        // Permute vertices with sigma and re-cluster.
        let sigma = [4, 2, 0, 1, 3]; // new index of old vertex v
        let permuted: Vec<(usize, usize, f64)> = edges
            .iter()
            .map(|&(i, j, w)| (sigma[i].min(sigma[j]), sigma[i].max(sigma[j]), w))
            .collect();
        let permuted_layer = layer_from_edges(5, &permuted);
        let res_p = greedy_modularity_cluster(&permuted_layer).unwrap();

        assert_eq!(res.partition.k(), res_p.partition.k());
        // Same clusters up to id renaming: compare co-membership.
        for i in 0..5 {
            for j in 0..5 {
                let same = res.partition.cluster_of(i) == res.partition.cluster_of(j);
                let same_p =
                    res_p.partition.cluster_of(sigma[i]) == res_p.partition.cluster_of(sigma[j]);
                assert_eq!(same, same_p, "pair ({i},{j})");
            }
        }
    }
}
