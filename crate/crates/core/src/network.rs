//! Communication graphs and symmetric doubly stochastic mixing matrices.

use std::collections::{BTreeSet, VecDeque};

use nalgebra::{DMatrix, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Eigenvalues of `I - W` at or below this magnitude count as zero.
pub const ZERO_EIGENVALUE_TOL: f64 = 1e-10;

#[derive(Debug, Error, PartialEq)]
pub enum NetworkError {
    #[error("graph needs at least {min} nodes, got {got}")]
    TooFewNodes { min: usize, got: usize },
    #[error("invalid edge ({0}, {1})")]
    InvalidEdge(usize, usize),
    #[error("graph is not connected")]
    Disconnected,
    #[error("step t = {t} outside the admissible range (0, {max})")]
    StepOutOfRange { t: f64, max: f64 },
    #[error("weight matrix must be square with {expected} rows")]
    Shape { expected: usize },
}

/// Undirected simple graph on nodes `0..n`; each edge stored once as `(min, max)`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "GraphRepr", into = "GraphRepr")]
pub struct Graph {
    n: usize,
    edges: BTreeSet<(usize, usize)>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct GraphRepr {
    n: usize,
    edges: Vec<[usize; 2]>,
}

impl TryFrom<GraphRepr> for Graph {
    type Error = NetworkError;

    fn try_from(r: GraphRepr) -> Result<Self, Self::Error> {
        Graph::new(r.n, r.edges.into_iter().map(|[i, j]| (i, j)))
    }
}

impl From<Graph> for GraphRepr {
    fn from(g: Graph) -> Self {
        Self {
            n: g.n,
            edges: g.edges.into_iter().map(|(i, j)| [i, j]).collect(),
        }
    }
}

impl Graph {
    /// Builds a graph; rejects self-loops and out-of-range endpoints. Duplicate
    /// edges (in either orientation) collapse to one. Connectivity is not required here.
    pub fn new(n: usize, edges: impl IntoIterator<Item = (usize, usize)>) -> Result<Self, NetworkError> {
        let mut set = BTreeSet::new();
        for (i, j) in edges {
            if i == j || i >= n || j >= n {
                return Err(NetworkError::InvalidEdge(i, j));
            }
            set.insert((i.min(j), i.max(j)));
        }
        Ok(Self { n, edges: set })
    }

    pub fn path(n: usize) -> Result<Self, NetworkError> {
        if n < 2 {
            return Err(NetworkError::TooFewNodes { min: 2, got: n });
        }
        Self::new(n, (1..n).map(|v| (v - 1, v)))
    }

    pub fn complete(n: usize) -> Result<Self, NetworkError> {
        if n < 2 {
            return Err(NetworkError::TooFewNodes { min: 2, got: n });
        }
        Self::new(n, (0..n).flat_map(|i| (i + 1..n).map(move |j| (i, j))))
    }

    pub fn star(n: usize) -> Result<Self, NetworkError> {
        if n < 2 {
            return Err(NetworkError::TooFewNodes { min: 2, got: n });
        }
        Self::new(n, (1..n).map(|v| (0, v)))
    }

    pub fn num_nodes(&self) -> usize {
        self.n
    }

    pub fn edges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.edges.iter().copied()
    }

    pub fn num_edges(&self) -> usize {
        self.edges.len()
    }

    pub fn has_edge(&self, i: usize, j: usize) -> bool {
        self.edges.contains(&(i.min(j), i.max(j)))
    }

    pub fn neighbors(&self) -> Vec<Vec<usize>> {
        let mut adj = vec![Vec::new(); self.n];
        for &(i, j) in &self.edges {
            adj[i].push(j);
            adj[j].push(i);
        }
        adj
    }

    pub fn degrees(&self) -> Vec<usize> {
        let mut deg = vec![0; self.n];
        for &(i, j) in &self.edges {
            deg[i] += 1;
            deg[j] += 1;
        }
        deg
    }

    pub fn max_degree(&self) -> usize {
        self.degrees().into_iter().max().unwrap_or(0)
    }

    pub fn is_connected(&self) -> bool {
        if self.n == 0 {
            return false;
        }
        let adj = self.neighbors();
        let mut seen = vec![false; self.n];
        let mut queue = VecDeque::from([0]);
        seen[0] = true;
        let mut count = 1;
        while let Some(v) = queue.pop_front() {
            for &u in &adj[v] {
                if !seen[u] {
                    seen[u] = true;
                    count += 1;
                    queue.push_back(u);
                }
            }
        }
        count == self.n
    }

    /// Combinatorial Laplacian `D - A`.
    pub fn laplacian(&self) -> DMatrix<f64> {
        let mut l = DMatrix::zeros(self.n, self.n);
        for &(i, j) in &self.edges {
            l[(i, j)] -= 1.0;
            l[(j, i)] -= 1.0;
            l[(i, i)] += 1.0;
            l[(j, j)] += 1.0;
        }
        l
    }
}

/// Uniformly random labelled spanning tree (Prüfer decoding); deterministic per seed.
pub fn random_tree(n: usize, seed: u64) -> Result<Graph, NetworkError> {
    if n < 2 {
        return Err(NetworkError::TooFewNodes { min: 2, got: n });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let code: Vec<usize> = (0..n - 2).map(|_| rng.random_range(0..n)).collect();

    let mut degree = vec![1usize; n];
    for &v in &code {
        degree[v] += 1;
    }
    let mut leaves: BTreeSet<usize> = (0..n).filter(|&v| degree[v] == 1).collect();
    let mut edges = Vec::with_capacity(n - 1);
    for &v in &code {
        let leaf = leaves.pop_first().expect("a Prüfer code always leaves a leaf");
        edges.push((leaf, v));
        degree[v] -= 1;
        if degree[v] == 1 {
            leaves.insert(v);
        }
    }
    let last: Vec<usize> = leaves.into_iter().collect();
    edges.push((last[0], last[1]));
    Graph::new(n, edges)
}

/// Symmetric mixing matrix `W` with the spectral data of `I - W` cached.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "MixingRepr", into = "MixingRepr")]
pub struct MixingMatrix {
    w: DMatrix<f64>,
    sigma_max_iw: f64,
    lambda_min_nz_iw: f64,
}

#[derive(Serialize, Deserialize)]
struct MixingRepr {
    #[serde(rename = "W")]
    w: Vec<Vec<f64>>,
    sigma_max: f64,
    lambda_min_nz: f64,
}

impl TryFrom<MixingRepr> for MixingMatrix {
    type Error = NetworkError;

    fn try_from(r: MixingRepr) -> Result<Self, Self::Error> {
        let n = r.w.len();
        if r.w.iter().any(|row| row.len() != n) {
            return Err(NetworkError::Shape { expected: n });
        }
        Ok(MixingMatrix::from_weights(DMatrix::from_fn(n, n, |i, j| r.w[i][j])))
    }
}

impl From<MixingMatrix> for MixingRepr {
    fn from(m: MixingMatrix) -> Self {
        Self {
            w: crate::matrix_rows(&m.w),
            sigma_max: m.sigma_max_iw,
            lambda_min_nz: m.lambda_min_nz_iw,
        }
    }
}

impl MixingMatrix {
    /// Wraps an arbitrary square weight matrix and computes the spectral fields.
    /// No invariants are enforced; see [`validate_mixing`].
    pub fn from_weights(w: DMatrix<f64>) -> Self {
        let eig = i_minus_w_eigenvalues(&w);
        let sigma_max_iw = eig.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
        let lambda_min_nz_iw = eig
            .iter()
            .copied()
            .find(|v| *v > ZERO_EIGENVALUE_TOL)
            .unwrap_or(0.0);
        Self {
            w,
            sigma_max_iw,
            lambda_min_nz_iw,
        }
    }

    pub fn weights(&self) -> &DMatrix<f64> {
        &self.w
    }

    pub fn size(&self) -> usize {
        self.w.nrows()
    }

    /// `σ_max(I - W)`.
    pub fn sigma_max(&self) -> f64 {
        self.sigma_max_iw
    }

    /// `λ̃_min(I - W)`: smallest nonzero eigenvalue.
    pub fn lambda_min_nonzero(&self) -> f64 {
        self.lambda_min_nz_iw
    }

    /// `λ_max(I - W)`; equals `σ_max` for a PSD `I - W`.
    pub fn lambda_max(&self) -> f64 {
        self.sorted_spectrum().last().copied().unwrap_or(0.0)
    }

    pub fn i_minus_w(&self) -> DMatrix<f64> {
        DMatrix::identity(self.size(), self.size()) - &self.w
    }

    /// Ascending eigenvalues of the symmetric part of `I - W`.
    pub fn sorted_spectrum(&self) -> Vec<f64> {
        i_minus_w_eigenvalues(&self.w)
    }
}

fn i_minus_w_eigenvalues(w: &DMatrix<f64>) -> Vec<f64> {
    let n = w.nrows();
    let iw = DMatrix::identity(n, n) - w;
    let sym = (&iw + iw.transpose()) * 0.5;
    let mut eig: Vec<f64> = SymmetricEigen::new(sym).eigenvalues.iter().copied().collect();
    eig.sort_by(f64::total_cmp);
    eig
}

/// `W = I - t L`. The default `t = 1/(Δ+1)` keeps every entry nonnegative and the
/// diagonal strictly positive.
pub fn mixing_from_laplacian(g: &Graph, t: Option<f64>) -> Result<MixingMatrix, NetworkError> {
    if !g.is_connected() {
        return Err(NetworkError::Disconnected);
    }
    let lap = g.laplacian();
    let max_deg = g.max_degree() as f64;
    let t = match t {
        None => 1.0 / (max_deg + 1.0),
        Some(t) => {
            let lambda_max = SymmetricEigen::new(lap.clone()).eigenvalues.max();
            let upper = (2.0 / lambda_max).min(1.0 / max_deg);
            // t = 1/Δ is admissible; t = 2/λ_max is not.
            let ok = t > 0.0 && t < 2.0 / lambda_max && t <= 1.0 / max_deg;
            if !ok {
                return Err(NetworkError::StepOutOfRange { t, max: upper });
            }
            t
        }
    };
    let n = g.num_nodes();
    Ok(MixingMatrix::from_weights(
        DMatrix::identity(n, n) - lap * t,
    ))
}

/// Metropolis–Hastings weights `w_ij = 1/(1 + max(deg_i, deg_j))`.
pub fn mixing_metropolis(g: &Graph) -> Result<MixingMatrix, NetworkError> {
    if !g.is_connected() {
        return Err(NetworkError::Disconnected);
    }
    let n = g.num_nodes();
    let deg = g.degrees();
    let mut w = DMatrix::zeros(n, n);
    for (i, j) in g.edges() {
        let v = 1.0 / (1.0 + deg[i].max(deg[j]) as f64);
        w[(i, j)] = v;
        w[(j, i)] = v;
    }
    for i in 0..n {
        let off: f64 = w.row(i).iter().sum();
        w[(i, i)] = 1.0 - off;
    }
    Ok(MixingMatrix::from_weights(w))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "check", rename_all = "kebab-case")]
pub enum MixingFailure {
    Shape,
    Symmetry { max_deviation: f64 },
    Nonnegativity { min_entry: f64 },
    RowSums { max_deviation: f64 },
    ColumnSums { max_deviation: f64 },
    Spectrum { min: f64, max: f64 },
    NullSpace { zero_eigenvalues: usize },
    Sparsity { i: usize, j: usize, weight: f64 },
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct MixingReport {
    pub failures: Vec<MixingFailure>,
}

impl MixingReport {
    pub fn passed(&self) -> bool {
        self.failures.is_empty()
    }
}

/// Checks every mixing-matrix property against `graph`, reporting each failure.
pub fn validate_mixing(m: &MixingMatrix, graph: &Graph, tol: f64) -> MixingReport {
    let w = m.weights();
    let n = w.nrows();
    let mut failures = Vec::new();
    if w.ncols() != n || n != graph.num_nodes() {
        failures.push(MixingFailure::Shape);
        return MixingReport { failures };
    }

    let asym = (w - w.transpose()).amax();
    if asym > tol {
        failures.push(MixingFailure::Symmetry {
            max_deviation: asym,
        });
    }
    let min_entry = w.min();
    if min_entry < -tol {
        failures.push(MixingFailure::Nonnegativity { min_entry });
    }
    let row_dev = w
        .row_iter()
        .map(|r| (r.sum() - 1.0).abs())
        .fold(0.0, f64::max);
    if row_dev > tol {
        failures.push(MixingFailure::RowSums {
            max_deviation: row_dev,
        });
    }
    let col_dev = w
        .column_iter()
        .map(|c| (c.sum() - 1.0).abs())
        .fold(0.0, f64::max);
    if col_dev > tol {
        failures.push(MixingFailure::ColumnSums {
            max_deviation: col_dev,
        });
    }

    let spectrum = m.sorted_spectrum();
    let (lo, hi) = (spectrum[0], spectrum[n - 1]);
    if lo < -tol || hi > 2.0 + tol {
        failures.push(MixingFailure::Spectrum { min: lo, max: hi });
    }
    let zero_eigenvalues = spectrum.iter().filter(|v| v.abs() <= tol).count();
    if zero_eigenvalues != 1 {
        failures.push(MixingFailure::NullSpace { zero_eigenvalues });
    }

    for i in 0..n {
        for j in 0..n {
            if i == j {
                continue;
            }
            let weight = w[(i, j)];
            let edge = graph.has_edge(i, j);
            if (edge && weight <= tol) || (!edge && weight.abs() > tol) {
                failures.push(MixingFailure::Sparsity { i, j, weight });
            }
        }
    }
    MixingReport { failures }
}
