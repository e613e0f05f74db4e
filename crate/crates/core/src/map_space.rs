//! The space of persistence maps: pairwise L2 distances, a Laplacian
//! eigenmap of the kNN graph built on them, eigengap-based choice of the
//! cluster count, and Lloyd clustering with medoid-snapped centroids.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{jacobi_eigen, DenseMatrix};
use crate::pmap::PersistenceMap;

pub const DEFAULT_KNN: usize = 5;
pub const MAX_LLOYD_ITERATIONS: usize = 100;
/// Eigenvalues (and eigengaps) below this are treated as exact zeros.
pub const ZERO_EIGENVALUE: f64 = 1e-10;

/// Symmetric matrix of pairwise distances scaled so the largest entry is 1.
#[derive(Debug, Clone, PartialEq)]
pub struct DistanceMatrix {
    n: usize,
    entries: Vec<f64>,
    raw_max: f64,
}

impl DistanceMatrix {
    /// Normalizes raw distances by their maximum (an all-zero matrix stays zero).
    pub fn from_raw(n: usize, raw: Vec<f64>) -> Result<Self> {
        if raw.len() != n * n {
            return Err(Error::BadMatrix);
        }
        let raw_max = raw.iter().copied().fold(0.0, f64::max);
        let entries = if raw_max > 0.0 { raw.iter().map(|x| x / raw_max).collect() } else { raw };
        let m = DistanceMatrix { n, entries, raw_max };
        m.validate()?;
        Ok(m)
    }

    /// Wraps an already normalized matrix, e.g. one read back from CSV.
    pub fn from_normalized(rows: &[Vec<f64>]) -> Result<Self> {
        let n = rows.len();
        if rows.iter().any(|r| r.len() != n) {
            return Err(Error::BadMatrix);
        }
        let m = DistanceMatrix { n, entries: rows.concat(), raw_max: 1.0 };
        m.validate()?;
        Ok(m)
    }

    fn validate(&self) -> Result<()> {
        for i in 0..self.n {
            if self.get(i, i) != 0.0 {
                return Err(Error::BadMatrix);
            }
            for j in 0..i {
                let x = self.get(i, j);
                if x != self.get(j, i) || !(x >= 0.0) || !x.is_finite() {
                    return Err(Error::BadMatrix);
                }
            }
        }
        Ok(())
    }

    pub fn n(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.entries[i * self.n + j]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.entries[i * self.n..(i + 1) * self.n]
    }

    pub fn rows(&self) -> Vec<Vec<f64>> {
        (0..self.n).map(|i| self.row(i).to_vec()).collect()
    }

    /// Largest distance before normalization.
    pub fn raw_max(&self) -> f64 {
        self.raw_max
    }
}

/// Plain L2 distance between two equally long vectors.
pub fn l2_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

/// Raw pairwise L2 distances between vectors, entries computed in parallel.
pub fn raw_distances(vectors: &[&[f64]]) -> Vec<f64> {
    let n = vectors.len();
    let pairs: Vec<(usize, usize)> = (0..n).flat_map(|i| ((i + 1)..n).map(move |j| (i, j))).collect();
    let values: Vec<f64> = pairs.par_iter().map(|&(i, j)| l2_distance(vectors[i], vectors[j])).collect();
    let mut raw = vec![0.0; n * n];
    for (&(i, j), d) in pairs.iter().zip(values) {
        raw[i * n + j] = d;
        raw[j * n + i] = d;
    }
    raw
}

/// Normalized L2 distance matrix between persistence maps.
pub fn distance_matrix(maps: &[PersistenceMap]) -> Result<DistanceMatrix> {
    if maps.len() < 2 {
        return Err(Error::TooFewMembers { needed: 2, got: maps.len() });
    }
    if maps.iter().any(|m| m.topology != maps[0].topology) {
        return Err(Error::TopologyMismatch);
    }
    let vectors: Vec<&[f64]> = maps.iter().map(|m| m.phi.as_slice()).collect();
    DistanceMatrix::from_raw(maps.len(), raw_distances(&vectors))
}

/// Undirected graph on ensemble members.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Adjacency {
    n: usize,
    edges: Vec<bool>,
}

impl Adjacency {
    pub fn from_edges(n: usize, edges: &[(usize, usize)]) -> Self {
        let mut a = Adjacency { n, edges: vec![false; n * n] };
        for &(x, y) in edges {
            if x != y {
                a.edges[x * n + y] = true;
                a.edges[y * n + x] = true;
            }
        }
        a
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn has_edge(&self, x: usize, y: usize) -> bool {
        self.edges[x * self.n + y]
    }

    pub fn degree(&self, x: usize) -> usize {
        (0..self.n).filter(|&y| self.has_edge(x, y)).count()
    }

    pub fn edge_list(&self) -> Vec<(usize, usize)> {
        (0..self.n).flat_map(|x| ((x + 1)..self.n).filter(move |&y| self.has_edge(x, y)).map(move |y| (x, y))).collect()
    }

    /// Component id per node, numbered in order of first appearance.
    pub fn components(&self) -> Vec<usize> {
        let mut comp = vec![usize::MAX; self.n];
        let mut next = 0;
        for start in 0..self.n {
            if comp[start] != usize::MAX {
                continue;
            }
            let mut stack = vec![start];
            comp[start] = next;
            while let Some(x) = stack.pop() {
                for y in 0..self.n {
                    if self.has_edge(x, y) && comp[y] == usize::MAX {
                        comp[y] = next;
                        stack.push(y);
                    }
                }
            }
            next += 1;
        }
        comp
    }

    pub fn component_count(&self) -> usize {
        self.components().iter().copied().max().map_or(0, |m| m + 1)
    }
}

/// Symmetrized kNN graph: `x ~ y` when either is among the other's `knn`
/// nearest members (ties broken by smaller member id).
pub fn knn_graph(matrix: &DistanceMatrix, knn: usize) -> Result<Adjacency> {
    let n = matrix.n();
    if knn < 1 || knn >= n {
        return Err(Error::BadKnn { knn, n });
    }
    let mut edges = Vec::with_capacity(n * knn);
    for x in 0..n {
        let mut others: Vec<usize> = (0..n).filter(|&y| y != x).collect();
        others.sort_by(|&a, &b| matrix.get(x, a).total_cmp(&matrix.get(x, b)).then(a.cmp(&b)));
        edges.extend(others[..knn].iter().map(|&y| (x, y)));
    }
    Ok(Adjacency::from_edges(n, &edges))
}

/// Binary weights `W`, degrees `D` (diagonal) and `L = D - W`.
#[derive(Debug, Clone)]
pub struct Laplacian {
    pub weights: DenseMatrix,
    pub degrees: Vec<f64>,
    pub laplacian: DenseMatrix,
}

pub fn laplacian(graph: &Adjacency) -> Result<Laplacian> {
    let n = graph.n();
    let weights = DenseMatrix::from_fn(n, |i, j| if graph.has_edge(i, j) { 1.0 } else { 0.0 });
    let degrees: Vec<f64> = (0..n).map(|i| weights.row(i).iter().sum()).collect();
    if let Some(isolated) = degrees.iter().position(|&d| d == 0.0) {
        return Err(Error::IsolatedNode(isolated));
    }
    let laplacian = DenseMatrix::from_fn(n, |i, j| if i == j { degrees[i] } else { -weights[(i, j)] });
    Ok(Laplacian { weights, degrees, laplacian })
}

/// Solutions of `L psi = lambda D psi`, ascending in `lambda`.
#[derive(Debug, Clone)]
pub struct GeneralizedEigen {
    pub values: Vec<f64>,
    /// `vectors[i]` is `psi_i`, one entry per member.
    pub vectors: Vec<Vec<f64>>,
}

impl GeneralizedEigen {
    /// `max_i ||L psi_i - lambda_i D psi_i||_inf`.
    pub fn max_residual(&self, lap: &Laplacian) -> f64 {
        self.values
            .iter()
            .zip(&self.vectors)
            .map(|(&lambda, psi)| {
                let lpsi = lap.laplacian.mul_vec(psi);
                lpsi.iter()
                    .zip(psi)
                    .zip(&lap.degrees)
                    .map(|((l, p), d)| (l - lambda * d * p).abs())
                    .fold(0.0, f64::max)
            })
            .fold(0.0, f64::max)
    }
}

/// Reduces to the symmetric problem `D^-1/2 L D^-1/2 u = lambda u`, solves it
/// with Jacobi rotations and maps back with `psi = D^-1/2 u`. Each `psi` is
/// signed so its largest-magnitude entry is positive.
pub fn generalized_eigs(lap: &Laplacian) -> Result<GeneralizedEigen> {
    let n = lap.degrees.len();
    if let Some(bad) = lap.degrees.iter().position(|&d| !(d > 0.0)) {
        return Err(Error::IsolatedNode(bad));
    }
    let inv_sqrt: Vec<f64> = lap.degrees.iter().map(|d| 1.0 / d.sqrt()).collect();
    let sym = DenseMatrix::from_fn(n, |i, j| inv_sqrt[i] * lap.laplacian[(i, j)] * inv_sqrt[j]);
    let eig = jacobi_eigen(&sym)?;

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.values[a].total_cmp(&eig.values[b]).then(a.cmp(&b)));
    let values = order.iter().map(|&i| eig.values[i]).collect();
    let vectors = order
        .iter()
        .map(|&col| {
            let mut psi: Vec<f64> = (0..n).map(|k| inv_sqrt[k] * eig.vectors[(k, col)]).collect();
            let pivot = (0..n).fold(0, |best, k| if psi[k].abs() > psi[best].abs() { k } else { best });
            if psi[pivot] < 0.0 {
                psi.iter_mut().for_each(|x| *x = -*x);
            }
            psi
        })
        .collect();
    Ok(GeneralizedEigen { values, vectors })
}

/// Eigengaps `delta_k = |lambda_k - lambda_{k+1}|` for `k = 1..n-1`, with
/// eigenvalues counted from 1 (so `delta_k` separates the `k` smallest from
/// the rest). Entry `k - 1` of the result holds `delta_k`.
pub fn eigengaps(eigenvalues: &[f64]) -> Vec<f64> {
    eigenvalues.windows(2).map(|w| (w[1] - w[0]).abs()).collect()
}

/// Position of the first local maximum of the eigengap sequence.
///
/// Gaps below [`ZERO_EIGENVALUE`] count as zero and a maximum must rise
/// strictly above its predecessor (`delta_0 = 0`), so a run of vanishing
/// gaps from several exactly-zero eigenvalues is skipped. Ties on the
/// falling side are accepted and the last gap counts as a maximum.
pub fn suggest_k(eigenvalues: &[f64]) -> usize {
    let gaps: Vec<f64> =
        eigengaps(eigenvalues).into_iter().map(|g| if g < ZERO_EIGENVALUE { 0.0 } else { g }).collect();
    for (i, &g) in gaps.iter().enumerate() {
        let prev = if i == 0 { 0.0 } else { gaps[i - 1] };
        let next = gaps.get(i + 1).copied().unwrap_or(f64::NEG_INFINITY);
        if g > prev && g >= next {
            return i + 1;
        }
    }
    1
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SpectralEmbedding {
    pub eigenvalues: Vec<f64>,
    pub eigenvectors: Vec<Vec<f64>>,
    /// `coords[x] = (psi_1(x), ..., psi_{n_d}(x))`
    pub coords: Vec<Vec<f64>>,
    pub n_d: usize,
    pub knn: Option<usize>,
    pub eigengaps: Vec<f64>,
}

impl SpectralEmbedding {
    pub fn n(&self) -> usize {
        self.eigenvalues.len()
    }

    /// Coordinates on eigenvectors `psi_1..psi_dims`.
    pub fn coords_with_dims(&self, dims: usize) -> Vec<Vec<f64>> {
        (0..self.n()).map(|x| (1..=dims).map(|i| self.eigenvectors[i][x]).collect()).collect()
    }

    /// Planar view `(psi_1, psi_2)`; the second coordinate is 0 for two members.
    pub fn planar(&self) -> Vec<[f64; 2]> {
        (0..self.n())
            .map(|x| {
                let y = self.eigenvectors.get(2).map_or(0.0, |v| v[x]);
                [self.eigenvectors[1][x], y]
            })
            .collect()
    }

    pub fn suggested_k(&self) -> usize {
        suggest_k(&self.eigenvalues)
    }
}

/// Drops `psi_0` and keeps the next `n_d` eigenvectors as coordinates.
pub fn embed(eigs: &GeneralizedEigen, n_d: usize) -> Result<SpectralEmbedding> {
    let n = eigs.values.len();
    if n_d < 1 || n_d >= n {
        return Err(Error::BadEmbeddingDim { n_d, n });
    }
    let mut e = SpectralEmbedding {
        eigenvalues: eigs.values.clone(),
        eigenvectors: eigs.vectors.clone(),
        coords: Vec::new(),
        n_d,
        knn: None,
        eigengaps: eigengaps(&eigs.values),
    };
    e.coords = e.coords_with_dims(n_d);
    Ok(e)
}

/// Distance matrix -> kNN graph -> Laplacian eigenmap with `n_d` dimensions.
pub fn spectral_embedding(matrix: &DistanceMatrix, knn: usize, n_d: usize) -> Result<SpectralEmbedding> {
    let graph = knn_graph(matrix, knn)?;
    let eigs = generalized_eigs(&laplacian(&graph)?)?;
    let mut e = embed(&eigs, n_d)?;
    e.knn = Some(knn);
    Ok(e)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Clustering {
    pub k: usize,
    pub labels: Vec<usize>,
    /// Member id of each cluster's medoid, indexed by label.
    pub medoids: Vec<usize>,
    /// Objective after every assignment step.
    pub objective_trace: Vec<f64>,
    pub iterations: usize,
    pub suggested_k: Option<usize>,
}

impl Clustering {
    pub fn objective(&self) -> f64 {
        *self.objective_trace.last().unwrap_or(&0.0)
    }

    pub fn members_of(&self, cluster: usize) -> Vec<usize> {
        (0..self.labels.len()).filter(|&x| self.labels[x] == cluster).collect()
    }

    pub fn sizes(&self) -> Vec<usize> {
        (0..self.k).map(|c| self.labels.iter().filter(|&&l| l == c).count()).collect()
    }
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Nearest medoid per point, ties to the smaller medoid member id. A
/// medoid always stays in its own cluster, so no cluster is ever empty.
fn assign(points: &[Vec<f64>], medoids: &[usize]) -> (Vec<usize>, f64) {
    let mut objective = 0.0;
    let labels = points
        .iter()
        .enumerate()
        .map(|(x, p)| {
            if let Some(own) = medoids.iter().position(|&m| m == x) {
                return own;
            }
            let mut best = 0;
            let mut best_d = f64::INFINITY;
            for (c, &m) in medoids.iter().enumerate() {
                let d = sq_dist(p, &points[m]);
                if d < best_d || (d == best_d && m < medoids[best]) {
                    best = c;
                    best_d = d;
                }
            }
            objective += best_d;
            best
        })
        .collect();
    (labels, objective)
}

/// Farthest-point traversal from member `seed mod n`.
fn farthest_point_seeds(points: &[Vec<f64>], k: usize, seed: u64) -> Vec<usize> {
    let n = points.len();
    let first = (seed % n as u64) as usize;
    let mut medoids = vec![first];
    let mut nearest: Vec<f64> = points.iter().map(|p| sq_dist(p, &points[first])).collect();
    while medoids.len() < k {
        let next = (0..n)
            .filter(|x| !medoids.contains(x))
            .fold(None, |best: Option<usize>, x| match best {
                Some(b) if nearest[b] >= nearest[x] => Some(b),
                _ => Some(x),
            })
            .expect("k <= n");
        medoids.push(next);
        for x in 0..n {
            nearest[x] = nearest[x].min(sq_dist(&points[x], &points[next]));
        }
    }
    medoids
}

/// Lloyd iterations where each centroid is snapped to the cluster member
/// nearest the cluster barycenter (ties to the smaller member id).
pub fn lloyd_medoids(points: &[Vec<f64>], k: usize, seed: u64) -> Result<Clustering> {
    let n = points.len();
    if k < 1 || k > n {
        return Err(Error::BadK { k, n });
    }
    let mut medoids = farthest_point_seeds(points, k, seed);
    let (mut labels, mut objective) = assign(points, &medoids);
    let mut trace = vec![objective];
    let mut iterations = 0;

    while iterations < MAX_LLOYD_ITERATIONS {
        iterations += 1;
        for c in 0..k {
            let members: Vec<usize> = (0..n).filter(|&x| labels[x] == c).collect();
            let dim = points[members[0]].len();
            let mut bary = vec![0.0; dim];
            for &x in &members {
                bary.iter_mut().zip(&points[x]).for_each(|(b, p)| *b += p);
            }
            bary.iter_mut().for_each(|b| *b /= members.len() as f64);
            medoids[c] = members
                .iter()
                .copied()
                .min_by(|&a, &b| sq_dist(&points[a], &bary).total_cmp(&sq_dist(&points[b], &bary)).then(a.cmp(&b)))
                .expect("cluster not empty");
        }
        let (new_labels, new_objective) = assign(points, &medoids);
        let changed = new_labels != labels;
        labels = new_labels;
        objective = new_objective;
        trace.push(objective);
        if !changed {
            break;
        }
    }

    // canonical numbering: clusters ordered by their smallest member
    let mut first_seen: Vec<usize> = Vec::with_capacity(k);
    for &l in &labels {
        if !first_seen.contains(&l) {
            first_seen.push(l);
        }
    }
    let mut remap = vec![0; k];
    for (new, &old) in first_seen.iter().enumerate() {
        remap[old] = new;
    }
    let labels = labels.iter().map(|&l| remap[l]).collect();
    let mut canonical_medoids = vec![0; k];
    for (old, &m) in medoids.iter().enumerate() {
        canonical_medoids[remap[old]] = m;
    }

    Ok(Clustering { k, labels, medoids: canonical_medoids, objective_trace: trace, iterations, suggested_k: None })
}

/// Clusters the embedding with `n_d = k - 1` coordinates (one for `k = 1`).
pub fn cluster(embedding: &SpectralEmbedding, k: usize, seed: u64) -> Result<Clustering> {
    let n = embedding.n();
    if k < 1 || k > n {
        return Err(Error::BadK { k, n });
    }
    let dims = (k.max(2) - 1).min(n - 1);
    let mut c = lloyd_medoids(&embedding.coords_with_dims(dims), k, seed)?;
    c.suggested_k = Some(embedding.suggested_k());
    Ok(c)
}

/// Adjusted Rand index between two labelings of the same items.
pub fn adjusted_rand_index(a: &[usize], b: &[usize]) -> f64 {
    assert_eq!(a.len(), b.len());
    let n = a.len();
    let ka = a.iter().max().map_or(0, |m| m + 1);
    let kb = b.iter().max().map_or(0, |m| m + 1);
    let mut table = vec![vec![0u64; kb]; ka];
    for (&x, &y) in a.iter().zip(b) {
        table[x][y] += 1;
    }
    let choose2 = |x: u64| (x * x.saturating_sub(1)) as f64 / 2.0;
    let index: f64 = table.iter().flatten().map(|&c| choose2(c)).sum();
    let rows: f64 = table.iter().map(|r| choose2(r.iter().sum())).sum();
    let cols: f64 = (0..kb).map(|j| choose2(table.iter().map(|r| r[j]).sum())).sum();
    let total = choose2(n as u64);
    let expected = rows * cols / total;
    let max_index = 0.5 * (rows + cols);
    if max_index == expected {
        return 1.0;
    }
    (index - expected) / (max_index - expected)
}
