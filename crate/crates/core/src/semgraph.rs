//! The semantic word graph: construction from co-occurrence statistics,
//! graph dissimilarities, and the two semantic smoothing operators (a
//! distance-based Gaussian kernel and the graph-regularized least-squares
//! solve).

use std::cmp::Ordering;
use std::collections::{BTreeMap, BinaryHeap, HashMap};
use std::sync::Arc;

use ndarray::Array2;
use rayon::prelude::*;

use crate::signals::{Domain, Signal1D};
use crate::textio::{Document, Vocabulary};
use crate::{Error, Result};

/// Sparse symmetric weighted graph over vocabulary indices.
#[derive(Debug, Clone, PartialEq)]
pub struct SemanticGraph {
    adjacency: Vec<BTreeMap<usize, f64>>,
    node_weights: Vec<f64>,
}

impl SemanticGraph {
    pub fn new(size: usize) -> Self {
        SemanticGraph {
            adjacency: vec![BTreeMap::new(); size],
            node_weights: vec![1.0; size],
        }
    }

    pub fn size(&self) -> usize {
        self.adjacency.len()
    }

    pub fn edge_count(&self) -> usize {
        self.adjacency.iter().map(BTreeMap::len).sum::<usize>() / 2
    }

    /// Inserts or overwrites the undirected edge `{y, z}`.
    pub fn add_edge(&mut self, y: usize, z: usize, weight: f64) -> Result<()> {
        let m = self.size();
        if y >= m || z >= m {
            return Err(Error::param(format!("edge ({y}, {z}) outside a graph of {m} nodes")));
        }
        if y == z {
            return Err(Error::param(format!("self-edge on node {y}")));
        }
        if !(weight > 0.0) || !weight.is_finite() {
            return Err(Error::param(format!("edge weight must be finite and positive, got {weight}")));
        }
        self.adjacency[y].insert(z, weight);
        self.adjacency[z].insert(y, weight);
        Ok(())
    }

    pub fn weight(&self, y: usize, z: usize) -> Option<f64> {
        self.adjacency.get(y)?.get(&z).copied()
    }

    pub fn neighbors(&self, y: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        self.adjacency[y].iter().map(|(&z, &w)| (z, w))
    }

    /// Each undirected edge once, as `(y, z, weight)` with `y < z`.
    pub fn edges(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        self.adjacency.iter().enumerate().flat_map(|(y, adj)| {
            adj.range(y + 1..).map(move |(&z, &w)| (y, z, w))
        })
    }

    pub fn node_weights(&self) -> &[f64] {
        &self.node_weights
    }

    pub fn set_node_weight(&mut self, y: usize, weight: f64) -> Result<()> {
        if y >= self.size() {
            return Err(Error::param(format!("node {y} outside a graph of {} nodes", self.size())));
        }
        if !(weight > 0.0) || !weight.is_finite() {
            return Err(Error::param(format!("node weight must be finite and positive, got {weight}")));
        }
        self.node_weights[y] = weight;
        Ok(())
    }

    /// Connected-component label per node, labels assigned in node order.
    pub fn components(&self) -> Vec<usize> {
        let m = self.size();
        let mut label = vec![usize::MAX; m];
        let mut next = 0;
        for start in 0..m {
            if label[start] != usize::MAX {
                continue;
            }
            let mut stack = vec![start];
            label[start] = next;
            while let Some(y) = stack.pop() {
                for &z in self.adjacency[y].keys() {
                    if label[z] == usize::MAX {
                        label[z] = next;
                        stack.push(z);
                    }
                }
            }
            next += 1;
        }
        label
    }

    pub fn is_connected(&self) -> bool {
        self.components().iter().all(|&c| c == 0)
    }
}

/// Positive PMI graph from windowed co-occurrence counts.
///
/// Two tokens of a document co-occur when they are at most `window`
/// positions apart. Counts are add-one smoothed over all ordered word pairs:
/// `pmi(y, z) = ln((c_yz + 1) N / (n_y n_z))` with `n_y = sum_z (c_yz + 1)`
/// and `N = sum_y n_y`. Only observed pairs whose PMI exceeds both zero and
/// `threshold` become edges.
pub fn build_pmi_graph(
    corpus: &[Document],
    vocab: &Vocabulary,
    window: usize,
    threshold: f64,
) -> Result<SemanticGraph> {
    if window == 0 {
        return Err(Error::param("co-occurrence window must be at least 1"));
    }
    let m = vocab.len();
    let mut counts: HashMap<(usize, usize), u64> = HashMap::new();
    for doc in corpus {
        let tokens: Vec<usize> = doc.tokens().collect();
        if let Some(&bad) = tokens.iter().find(|&&t| t >= m) {
            return Err(Error::param(format!("document {} has token index {bad} outside the vocabulary", doc.id)));
        }
        for i in 0..tokens.len() {
            for j in i + 1..tokens.len().min(i + window + 1) {
                let (y, z) = (tokens[i], tokens[j]);
                if y != z {
                    *counts.entry((y.min(z), y.max(z))).or_insert(0) += 1;
                }
            }
        }
    }
    let mut graph = SemanticGraph::new(m);
    if m < 2 {
        log::warn!("semantic graph is empty: vocabulary has fewer than two words");
        return Ok(graph);
    }
    let smoothing = (m - 1) as f64;
    let mut marginal = vec![smoothing; m];
    let mut pairs = 0.0;
    for (&(y, z), &c) in &counts {
        marginal[y] += c as f64;
        marginal[z] += c as f64;
        pairs += c as f64;
    }
    let total = 2.0 * pairs + (m * (m - 1)) as f64;
    let mut sorted: Vec<_> = counts.into_iter().collect();
    sorted.sort_unstable();
    for ((y, z), c) in sorted {
        let pmi = ((c as f64 + 1.0) * total / (marginal[y] * marginal[z])).ln();
        if pmi > threshold && pmi > 0.0 {
            graph.add_edge(y, z, pmi)?;
        }
    }
    if graph.edge_count() == 0 {
        log::warn!("semantic graph is empty: no pair exceeds the PMI threshold {threshold}");
    }
    Ok(graph)
}

#[derive(Clone, Copy, PartialEq)]
struct Frontier {
    dist: f64,
    node: usize,
}

impl Eq for Frontier {}

impl Ord for Frontier {
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .dist
            .total_cmp(&self.dist)
            .then_with(|| other.node.cmp(&self.node))
    }
}

impl PartialOrd for Frontier {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Shortest-path distances from `source` under edge length `1 / weight`,
/// exploring only up to `limit`. Returns `(node, distance)` pairs.
fn shortest_paths(graph: &SemanticGraph, source: usize, limit: f64) -> Vec<(usize, f64)> {
    let mut dist: HashMap<usize, f64> = HashMap::new();
    let mut settled = Vec::new();
    let mut heap = BinaryHeap::new();
    dist.insert(source, 0.0);
    heap.push(Frontier { dist: 0.0, node: source });
    while let Some(Frontier { dist: d, node }) = heap.pop() {
        if d > dist[&node] {
            continue;
        }
        settled.push((node, d));
        for (z, w) in graph.neighbors(node) {
            let nd = d + 1.0 / w;
            if nd > limit {
                continue;
            }
            if dist.get(&z).is_none_or(|&old| nd < old) {
                dist.insert(z, nd);
                heap.push(Frontier { dist: nd, node: z });
            }
        }
    }
    settled
}

/// Dense all-pairs dissimilarity: shortest-path length with edge length
/// `1 / weight`; unreachable pairs are `+inf`.
pub fn graph_dissimilarity(graph: &SemanticGraph) -> Array2<f64> {
    let m = graph.size();
    let rows: Vec<Vec<(usize, f64)>> = (0..m)
        .into_par_iter()
        .map(|y| shortest_paths(graph, y, f64::INFINITY))
        .collect();
    let mut out = Array2::from_elem((m, m), f64::INFINITY);
    for (y, row) in rows.into_iter().enumerate() {
        for (z, d) in row {
            out[[y, z]] = d;
        }
    }
    // Paths found from either end can differ in the last bit; keep the
    // matrix exactly symmetric.
    for y in 0..m {
        for z in y + 1..m {
            let d = out[[y, z]].min(out[[z, y]]);
            out[[y, z]] = d;
            out[[z, y]] = d;
        }
    }
    out
}

/// A linear operator acting on the semantic axis of a signal.
#[derive(Debug, Clone)]
pub enum SemanticOperator {
    Identity(usize),
    /// Row-stochastic kernel stored as sparse rows. Applied transposed,
    /// `out[z] = sum_y f[y] K[y][z]`, so total mass is conserved.
    Kernel { size: usize, rows: Vec<Vec<(usize, f64)>> },
    /// Graph-regularized least squares with tradeoff `lambda`.
    GraphSolve { graph: Arc<SemanticGraph>, lambda: f64 },
}

impl SemanticOperator {
    pub fn size(&self) -> usize {
        match self {
            SemanticOperator::Identity(m) => *m,
            SemanticOperator::Kernel { size, .. } => *size,
            SemanticOperator::GraphSolve { graph, .. } => graph.size(),
        }
    }

    pub fn apply_vector(&self, f: &[f64]) -> Result<Vec<f64>> {
        if f.len() != self.size() {
            return Err(Error::DimensionMismatch(format!(
                "vector of length {}, operator over {} words",
                f.len(),
                self.size()
            )));
        }
        match self {
            SemanticOperator::Identity(_) => Ok(f.to_vec()),
            SemanticOperator::Kernel { size, rows } => {
                let mut out = vec![0.0; *size];
                for (y, &fy) in f.iter().enumerate() {
                    if fy == 0.0 {
                        continue;
                    }
                    for &(z, k) in &rows[y] {
                        out[z] += fy * k;
                    }
                }
                Ok(out)
            }
            SemanticOperator::GraphSolve { graph, lambda } => graph_smooth_values(f, graph, *lambda),
        }
    }

    /// Applies the operator to every row of `values`.
    pub fn apply_rows(&self, values: &Array2<f64>) -> Result<Array2<f64>> {
        if let SemanticOperator::Identity(m) = self {
            if values.ncols() != *m {
                return Err(Error::DimensionMismatch(format!(
                    "signal has {} columns, operator over {m} words",
                    values.ncols()
                )));
            }
            return Ok(values.clone());
        }
        let rows: Vec<Vec<f64>> = (0..values.nrows())
            .into_par_iter()
            .map(|i| self.apply_vector(&values.row(i).to_vec()))
            .collect::<Result<_>>()?;
        let (n, m) = values.dim();
        Ok(Array2::from_shape_vec((n, m), rows.into_iter().flatten().collect()).expect("shape preserved"))
    }

    /// Dense matrix form; row `y` holds the weights word `y` spreads to.
    pub fn to_dense(&self) -> Result<Array2<f64>> {
        let m = self.size();
        let mut out = Array2::zeros((m, m));
        for y in 0..m {
            let mut e = vec![0.0; m];
            e[y] = 1.0;
            let row = self.apply_vector(&e)?;
            out.row_mut(y).assign(&ndarray::Array1::from(row));
        }
        Ok(out)
    }
}

/// Entries below this fraction of the self-weight are dropped from the
/// sparse kernel rows.
const KERNEL_CUTOFF: f64 = 1e-16;

/// Row-normalized Gaussian of graph dissimilarity,
/// `K[y][z] ~ exp(-d_yz^2 / (2 s))`. At `s = 0` this is the identity.
pub fn semantic_kernel_operator(graph: &SemanticGraph, s: f64) -> Result<SemanticOperator> {
    if !(s >= 0.0) || !s.is_finite() {
        return Err(Error::InvalidScale(s));
    }
    let m = graph.size();
    if s == 0.0 {
        return Ok(SemanticOperator::Identity(m));
    }
    let limit = (2.0 * s * (1.0 / KERNEL_CUTOFF).ln()).sqrt();
    let rows: Vec<Vec<(usize, f64)>> = (0..m)
        .into_par_iter()
        .map(|y| {
            let mut row: Vec<(usize, f64)> = shortest_paths(graph, y, limit)
                .into_iter()
                .map(|(z, d)| (z, (-(d * d) / (2.0 * s)).exp()))
                .collect();
            row.sort_unstable_by_key(|&(z, _)| z);
            let total: f64 = row.iter().map(|(_, w)| w).sum();
            row.iter_mut().for_each(|(_, w)| *w /= total);
            row
        })
        .collect();
    Ok(SemanticOperator::Kernel { size: m, rows })
}

fn check_lambda(lambda: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&lambda) {
        return Err(Error::param(format!("lambda must lie in [0, 1], got {lambda}")));
    }
    Ok(())
}

/// Minimizes
/// `(1 - lambda) sum_y mu_y (g_y - f_y)^2 + lambda sum_y sum_z mu_yz (g_y - g_z)^2`
/// where the double sum runs over ordered pairs, so every edge is counted
/// twice. The stationarity system is
/// `((1 - lambda) D_mu + 2 lambda L) g = (1 - lambda) D_mu f`, solved by
/// Jacobi-preconditioned conjugate gradients.
///
/// At `lambda = 1` the minimizer is the `mu`-weighted mean of `f`, which is
/// unique only on a connected graph.
pub fn graph_smooth_values(f: &[f64], graph: &SemanticGraph, lambda: f64) -> Result<Vec<f64>> {
    check_lambda(lambda)?;
    let m = graph.size();
    if f.len() != m {
        return Err(Error::DimensionMismatch(format!("signal of length {}, graph of {m} nodes", f.len())));
    }
    if lambda == 0.0 || m == 0 {
        return Ok(f.to_vec());
    }
    let mu = graph.node_weights();
    if lambda == 1.0 {
        if !graph.is_connected() {
            return Err(Error::SingularSystem(
                "lambda = 1 on a disconnected graph has no unique minimizer".into(),
            ));
        }
        let mean = f.iter().zip(mu).map(|(a, w)| a * w).sum::<f64>() / mu.iter().sum::<f64>();
        return Ok(vec![mean; m]);
    }
    let fidelity = 1.0 - lambda;
    let coupling = 2.0 * lambda;
    let apply = |x: &[f64], out: &mut [f64]| {
        for y in 0..m {
            let mut acc = fidelity * mu[y] * x[y];
            for (z, w) in graph.neighbors(y) {
                acc += coupling * w * (x[y] - x[z]);
            }
            out[y] = acc;
        }
    };
    let diag: Vec<f64> = (0..m)
        .map(|y| fidelity * mu[y] + coupling * graph.neighbors(y).map(|(_, w)| w).sum::<f64>())
        .collect();
    let b: Vec<f64> = f.iter().zip(mu).map(|(v, w)| fidelity * w * v).collect();
    conjugate_gradient(apply, &diag, &b, f)
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn conjugate_gradient<F>(apply: F, diag: &[f64], b: &[f64], guess: &[f64]) -> Result<Vec<f64>>
where
    F: Fn(&[f64], &mut [f64]),
{
    let m = b.len();
    let b_norm = dot(b, b).sqrt();
    if b_norm == 0.0 {
        return Ok(vec![0.0; m]);
    }
    let tol = (1e-13 * b_norm).min(1e-10);
    let mut x = guess.to_vec();
    let mut ax = vec![0.0; m];
    apply(&x, &mut ax);
    let mut r: Vec<f64> = b.iter().zip(&ax).map(|(bi, ai)| bi - ai).collect();
    let mut z: Vec<f64> = r.iter().zip(diag).map(|(ri, di)| ri / di).collect();
    let mut p = z.clone();
    let mut rz = dot(&r, &z);
    let mut ap = vec![0.0; m];
    let max_iter = 20 * m + 200;
    for _ in 0..max_iter {
        if dot(&r, &r).sqrt() <= tol {
            return Ok(x);
        }
        apply(&p, &mut ap);
        let alpha = rz / dot(&p, &ap);
        for i in 0..m {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        for i in 0..m {
            z[i] = r[i] / diag[i];
        }
        let rz_next = dot(&r, &z);
        let beta = rz_next / rz;
        rz = rz_next;
        for i in 0..m {
            p[i] = z[i] + beta * p[i];
        }
    }
    if dot(&r, &r).sqrt() <= tol {
        Ok(x)
    } else {
        Err(Error::SingularSystem(format!(
            "conjugate gradients did not reach residual {tol:e} in {max_iter} iterations"
        )))
    }
}

pub fn graph_smooth(f: &Signal1D, graph: &SemanticGraph, lambda: f64) -> Result<Signal1D> {
    if f.domain() != Domain::Semantic {
        return Err(Error::param("graph smoothing applies to semantic-domain signals"));
    }
    let values = graph_smooth_values(f.values(), graph, lambda)?;
    Signal1D::new(values.into_iter().map(|v| v.max(0.0)).collect(), Domain::Semantic)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SemanticMode {
    /// Gaussian kernel of graph dissimilarity at scale `s_y`.
    #[default]
    DistanceKernel,
    /// Graph-regularized least squares with `lambda = s_y / (1 + s_y)`.
    GraphSolve,
}

impl SemanticMode {
    pub fn parse(name: &str) -> Result<Self> {
        match name {
            "distance-kernel" => Ok(SemanticMode::DistanceKernel),
            "graph-solve" => Ok(SemanticMode::GraphSolve),
            other => Err(Error::param(format!("unknown semantic mode '{other}'"))),
        }
    }
}

/// Builds semantic operators for any semantic scale from one graph. Without
/// a graph every operator is the identity.
#[derive(Debug, Clone)]
pub struct SemanticSmoother {
    size: usize,
    graph: Option<Arc<SemanticGraph>>,
    mode: SemanticMode,
}

impl SemanticSmoother {
    pub fn new(graph: Arc<SemanticGraph>, mode: SemanticMode) -> Self {
        SemanticSmoother {
            size: graph.size(),
            graph: Some(graph),
            mode,
        }
    }

    pub fn identity(size: usize) -> Self {
        SemanticSmoother {
            size,
            graph: None,
            mode: SemanticMode::DistanceKernel,
        }
    }

    pub fn size(&self) -> usize {
        self.size
    }

    pub fn operator(&self, s_y: f64) -> Result<SemanticOperator> {
        if !(s_y >= 0.0) || !s_y.is_finite() {
            return Err(Error::InvalidScale(s_y));
        }
        let Some(graph) = &self.graph else {
            return Ok(SemanticOperator::Identity(self.size));
        };
        if s_y == 0.0 {
            return Ok(SemanticOperator::Identity(self.size));
        }
        match self.mode {
            SemanticMode::DistanceKernel => semantic_kernel_operator(graph, s_y),
            SemanticMode::GraphSolve => Ok(SemanticOperator::GraphSolve {
                graph: Arc::clone(graph),
                lambda: s_y / (1.0 + s_y),
            }),
        }
    }
}
