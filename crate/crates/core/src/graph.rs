//! Weighted digraphs, their Laplacian and incidence matrices, and the
//! topology classes the convergence results are conditioned on.
//!
//! Edge convention: an edge `(j, i, a)` means node `i` receives from node `j`
//! with weight `a`, i.e. `A[i][j] = a > 0`.

use std::collections::HashSet;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GraphError {
    #[error("edge {index} ({from} -> {to}) is a self-loop")]
    SelfLoop { index: usize, from: usize, to: usize },
    #[error("edge {index} ({from} -> {to}) has non-positive weight {weight}")]
    NonPositiveWeight {
        index: usize,
        from: usize,
        to: usize,
        weight: f64,
    },
    #[error("edge {index} ({from} -> {to}) duplicates an earlier edge")]
    DuplicateEdge { index: usize, from: usize, to: usize },
    #[error("edge {index} ({from} -> {to}) references a node outside 0..{n}")]
    IndexOutOfRange {
        index: usize,
        from: usize,
        to: usize,
        n: usize,
    },
    #[error("graph must have at least one node")]
    Empty,
    #[error("label count {got} does not match node count {n}")]
    LabelCount { got: usize, n: usize },
    #[error("edge order is not a permutation of the graph's edges: {0}")]
    InvalidEdgeOrder(String),
    #[error("graph is not strongly connected")]
    NotStronglyConnected,
    #[error("left null vector solve failed: {0}")]
    NullVector(String),
    #[error("graph file: {0}")]
    Parse(String),
}

/// A directed edge `from -> to`; `to` receives from `from`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Edge {
    pub from: usize,
    pub to: usize,
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct WeightedDigraph {
    n: usize,
    edges: Vec<Edge>,
    labels: Option<Vec<String>>,
}

/// On-disk graph layout: `{"n": 3, "edges": [[j, i, w], ...], "labels": [...]}`.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GraphFile {
    pub n: usize,
    pub edges: Vec<(usize, usize, f64)>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub labels: Option<Vec<String>>,
}

impl WeightedDigraph {
    /// Validates and builds a graph from `(from, to, weight)` triples.
    pub fn new(n: usize, edges: &[(usize, usize, f64)]) -> Result<Self, GraphError> {
        if n == 0 {
            return Err(GraphError::Empty);
        }
        let mut seen = HashSet::new();
        let mut out = Vec::with_capacity(edges.len());
        for (index, &(from, to, weight)) in edges.iter().enumerate() {
            if from >= n || to >= n {
                return Err(GraphError::IndexOutOfRange {
                    index,
                    from,
                    to,
                    n,
                });
            }
            if from == to {
                return Err(GraphError::SelfLoop { index, from, to });
            }
            if !(weight > 0.0) || !weight.is_finite() {
                return Err(GraphError::NonPositiveWeight {
                    index,
                    from,
                    to,
                    weight,
                });
            }
            if !seen.insert((from, to)) {
                return Err(GraphError::DuplicateEdge { index, from, to });
            }
            out.push(Edge { from, to, weight });
        }
        Ok(Self {
            n,
            edges: out,
            labels: None,
        })
    }

    pub fn with_labels(mut self, labels: Vec<String>) -> Result<Self, GraphError> {
        if labels.len() != self.n {
            return Err(GraphError::LabelCount {
                got: labels.len(),
                n: self.n,
            });
        }
        self.labels = Some(labels);
        Ok(self)
    }

    pub fn from_file_repr(file: &GraphFile) -> Result<Self, GraphError> {
        let g = Self::new(file.n, &file.edges)?;
        match &file.labels {
            Some(labels) => g.with_labels(labels.clone()),
            None => Ok(g),
        }
    }

    pub fn to_file_repr(&self) -> GraphFile {
        GraphFile {
            n: self.n,
            edges: self.edges.iter().map(|e| (e.from, e.to, e.weight)).collect(),
            labels: self.labels.clone(),
        }
    }

    pub fn from_json(text: &str) -> Result<Self, GraphError> {
        let file: GraphFile =
            serde_json::from_str(text).map_err(|e| GraphError::Parse(e.to_string()))?;
        Self::from_file_repr(&file)
    }

    pub fn load(path: &Path) -> Result<Self, GraphError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| GraphError::Parse(format!("{}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    /// Directed ring `0 -> 1 -> ... -> n-1 -> 0` with unit weights.
    pub fn directed_ring(n: usize) -> Result<Self, GraphError> {
        let edges: Vec<_> = (0..n).map(|k| (k, (k + 1) % n, 1.0)).collect();
        Self::new(n, &edges)
    }

    /// Directed path `0 -> 1 -> ... -> n-1` with unit weights.
    pub fn directed_path(n: usize) -> Result<Self, GraphError> {
        let edges: Vec<_> = (1..n).map(|k| (k - 1, k, 1.0)).collect();
        Self::new(n, &edges)
    }

    /// Complete undirected graph with unit weights.
    pub fn complete(n: usize) -> Result<Self, GraphError> {
        let mut edges = Vec::new();
        for i in 0..n {
            for j in 0..n {
                if i != j {
                    edges.push((j, i, 1.0));
                }
            }
        }
        Self::new(n, &edges)
    }

    /// Undirected graph from `(p, q, w)` pairs; both directions are stored.
    pub fn undirected(n: usize, pairs: &[(usize, usize, f64)]) -> Result<Self, GraphError> {
        let edges: Vec<_> = pairs
            .iter()
            .flat_map(|&(p, q, w)| [(p, q, w), (q, p, w)])
            .collect();
        Self::new(n, &edges)
    }

    pub fn node_count(&self) -> usize {
        self.n
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn labels(&self) -> Option<&[String]> {
        self.labels.as_deref()
    }

    /// `a_ij`: weight with which node `i` receives from node `j`.
    pub fn weight(&self, i: usize, j: usize) -> f64 {
        self.edges
            .iter()
            .find(|e| e.to == i && e.from == j)
            .map_or(0.0, |e| e.weight)
    }

    pub fn adjacency(&self) -> DMatrix<f64> {
        let mut a = DMatrix::zeros(self.n, self.n);
        for e in &self.edges {
            a[(e.to, e.from)] = e.weight;
        }
        a
    }

    /// In-edges of node `i` as `(from, weight)`.
    pub fn in_edges(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        self.edges
            .iter()
            .filter(move |e| e.to == i)
            .map(|e| (e.from, e.weight))
    }

    /// `L = Δ_in - A`. The diagonal is accumulated from the same weights as the
    /// off-diagonal row entries, so `L·1 = 0` holds exactly for representable sums.
    pub fn laplacian(&self) -> DMatrix<f64> {
        let mut l = DMatrix::zeros(self.n, self.n);
        for e in &self.edges {
            l[(e.to, e.from)] -= e.weight;
            l[(e.to, e.to)] += e.weight;
        }
        l
    }

    /// `n × m` incidence matrix: `+1` where edge `k` originates, `-1` where it
    /// terminates. `edge_order` lists `(from, to)` pairs and must be a
    /// permutation of the edge set.
    pub fn incidence_matrix(&self, edge_order: &[(usize, usize)]) -> Result<DMatrix<f64>, GraphError> {
        if edge_order.len() != self.edges.len() {
            return Err(GraphError::InvalidEdgeOrder(format!(
                "expected {} edges, got {}",
                self.edges.len(),
                edge_order.len()
            )));
        }
        let mut seen = HashSet::new();
        let mut b = DMatrix::zeros(self.n, edge_order.len());
        for (k, &(from, to)) in edge_order.iter().enumerate() {
            if !self.edges.iter().any(|e| e.from == from && e.to == to) {
                return Err(GraphError::InvalidEdgeOrder(format!(
                    "({from}, {to}) is not an edge"
                )));
            }
            if !seen.insert((from, to)) {
                return Err(GraphError::InvalidEdgeOrder(format!(
                    "({from}, {to}) listed twice"
                )));
            }
            b[(from, k)] = 1.0;
            b[(to, k)] = -1.0;
        }
        Ok(b)
    }

    /// Incidence matrix in stored edge order.
    pub fn incidence(&self) -> DMatrix<f64> {
        let order: Vec<_> = self.edges.iter().map(|e| (e.from, e.to)).collect();
        self.incidence_matrix(&order)
            .expect("stored edge order is always valid")
    }

    /// Out-neighbour adjacency lists (`from -> [to]`).
    pub fn successors(&self) -> Vec<Vec<usize>> {
        let mut succ = vec![Vec::new(); self.n];
        for e in &self.edges {
            succ[e.from].push(e.to);
        }
        succ
    }

    pub fn is_symmetric(&self) -> bool {
        self.edges.iter().all(|e| {
            self.edges
                .iter()
                .any(|r| r.from == e.to && r.to == e.from && r.weight == e.weight)
        })
    }

    pub fn classify(&self) -> TopologyClass {
        let succ = self.successors();
        let sccs = tarjan_scc(&succ);
        let mut comp_of = vec![0usize; self.n];
        for (c, comp) in sccs.iter().enumerate() {
            for &v in comp {
                comp_of[v] = c;
            }
        }
        let mut has_incoming = vec![false; sccs.len()];
        for e in &self.edges {
            if comp_of[e.from] != comp_of[e.to] {
                has_incoming[comp_of[e.to]] = true;
            }
        }
        let sources: Vec<usize> = (0..sccs.len()).filter(|&c| !has_incoming[c]).collect();
        let roots = if sources.len() == 1 {
            let mut r = sccs[sources[0]].clone();
            r.sort_unstable();
            r
        } else {
            Vec::new()
        };

        let mut indeg = vec![0usize; self.n];
        let mut outdeg = vec![0usize; self.n];
        for e in &self.edges {
            indeg[e.to] += 1;
            outdeg[e.from] += 1;
        }
        let strongly_connected = sccs.len() == 1;
        let directed_ring = self.n >= 2
            && strongly_connected
            && indeg.iter().all(|&d| d == 1)
            && outdeg.iter().all(|&d| d == 1);
        let directed_tree = !roots.is_empty() && self.edges.len() + 1 == self.n;

        TopologyClass {
            undirected: self.is_symmetric(),
            strongly_connected,
            directed_ring,
            directed_tree,
            roots,
        }
    }

    /// Positive `w` with `wᵀL = 0` and `Σw = 1`, from the stacked least-squares
    /// system `[Lᵀ; 1ᵀ] w = [0; 1]`.
    pub fn left_null_vector(&self) -> Result<DVector<f64>, GraphError> {
        if !self.classify().strongly_connected {
            return Err(GraphError::NotStronglyConnected);
        }
        let n = self.n;
        let l = self.laplacian();
        let mut stacked = DMatrix::zeros(n + 1, n);
        stacked.view_mut((0, 0), (n, n)).copy_from(&l.transpose());
        stacked.row_mut(n).fill(1.0);
        let mut rhs = DVector::zeros(n + 1);
        rhs[n] = 1.0;
        let svd = stacked.svd(true, true);
        let w = svd
            .solve(&rhs, 1e-14)
            .map_err(|e| GraphError::NullVector(e.to_string()))?;
        if w.iter().any(|&wi| wi <= 1e-12) {
            return Err(GraphError::NullVector(format!(
                "non-positive component in {w:?}"
            )));
        }
        let residual = (w.transpose() * &l).amax();
        if residual > 1e-10 {
            return Err(GraphError::NullVector(format!("residual {residual:e}")));
        }
        Ok(w)
    }

    /// Relabels nodes: node `k` becomes `perm[k]`.
    pub fn permuted(&self, perm: &[usize]) -> Result<Self, GraphError> {
        let edges: Vec<_> = self
            .edges
            .iter()
            .map(|e| (perm[e.from], perm[e.to], e.weight))
            .collect();
        Self::new(self.n, &edges)
    }
}

/// Topology flags. Flags are not exclusive: a directed ring is also strongly
/// connected, an undirected connected graph is also strongly connected.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct TopologyClass {
    pub undirected: bool,
    pub strongly_connected: bool,
    pub directed_ring: bool,
    /// The graph is itself a directed spanning tree (one root, `n - 1` edges).
    pub directed_tree: bool,
    /// Nodes that reach every other node: the unique source component of the
    /// condensation. Empty when no directed spanning tree exists.
    pub roots: Vec<usize>,
}

impl TopologyClass {
    pub fn has_spanning_tree(&self) -> bool {
        !self.roots.is_empty()
    }

    pub fn is_general(&self) -> bool {
        !self.undirected && !self.has_spanning_tree()
    }

    pub fn flags(&self) -> Vec<&'static str> {
        let mut f = Vec::new();
        if self.undirected {
            f.push("undirected");
        }
        if self.strongly_connected {
            f.push("strongly_connected");
        }
        if self.has_spanning_tree() {
            f.push("has_spanning_tree");
        }
        if self.directed_ring {
            f.push("directed_ring");
        }
        if self.directed_tree {
            f.push("directed_tree");
        }
        if self.is_general() {
            f.push("general");
        }
        f
    }
}

/// Iterative Tarjan SCC over successor lists. Components come out in reverse
/// topological order of the condensation.
pub fn tarjan_scc(succ: &[Vec<usize>]) -> Vec<Vec<usize>> {
    let n = succ.len();
    let mut index = vec![usize::MAX; n];
    let mut low = vec![0usize; n];
    let mut on_stack = vec![false; n];
    let mut stack = Vec::new();
    let mut comps = Vec::new();
    let mut counter = 0usize;
    // (node, next successor position)
    let mut call: Vec<(usize, usize)> = Vec::new();

    for start in 0..n {
        if index[start] != usize::MAX {
            continue;
        }
        call.push((start, 0));
        index[start] = counter;
        low[start] = counter;
        counter += 1;
        stack.push(start);
        on_stack[start] = true;

        while let Some(&(v, pos)) = call.last() {
            if pos < succ[v].len() {
                let w = succ[v][pos];
                if let Some(top) = call.last_mut() {
                    top.1 += 1;
                }
                if index[w] == usize::MAX {
                    index[w] = counter;
                    low[w] = counter;
                    counter += 1;
                    stack.push(w);
                    on_stack[w] = true;
                    call.push((w, 0));
                } else if on_stack[w] {
                    low[v] = low[v].min(index[w]);
                }
            } else {
                call.pop();
                if let Some(&(parent, _)) = call.last() {
                    low[parent] = low[parent].min(low[v]);
                }
                if low[v] == index[v] {
                    let mut comp = Vec::new();
                    loop {
                        let w = stack.pop().expect("tarjan stack underflow");
                        on_stack[w] = false;
                        comp.push(w);
                        if w == v {
                            break;
                        }
                    }
                    comps.push(comp);
                }
            }
        }
    }
    comps
}
