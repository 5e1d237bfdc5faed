//! Weighted digraphs, their out-Laplacians and spectra, and the orthonormal
//! basis of the disagreement subspace.
//!
//! Edge convention: the edge `(i, j)` with weight `a_ij > 0` means agent `j`
//! sends information to agent `i`. Agent `i` therefore receives from its
//! out-neighbors `{j : a_ij > 0}` and broadcasts to its in-neighbors
//! `{k : a_ki > 0}`. Edge lists are 1-based (`1..=n`) at the API and file
//! boundary; everything else indexes agents from zero.

use std::collections::VecDeque;
use std::fmt;
use std::path::Path;

use nalgebra::linalg::Schur;
use nalgebra::{Complex, DMatrix, DVector, SymmetricEigen};
use thiserror::Error;

/// Default tolerance for the weight-balance test.
pub const BALANCE_TOL: f64 = 1e-9;

/// Eigenvalues of `Sym(L)` at or below this magnitude are reported as zero.
const ZERO_EIG_TOL: f64 = 1e-10;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GraphError {
    #[error("invalid edge ({receiver}, {sender}) for a graph on {n} nodes")]
    InvalidEdge {
        receiver: usize,
        sender: usize,
        n: usize,
    },
    #[error("edge ({receiver}, {sender}) has non-positive or non-finite weight {weight}")]
    InvalidWeight {
        receiver: usize,
        sender: usize,
        weight: f64,
    },
    #[error("duplicate edge ({receiver}, {sender})")]
    DuplicateEdge { receiver: usize, sender: usize },
    #[error("graph needs at least {min} nodes, got {n}")]
    TooSmall { n: usize, min: usize },
    #[error("graph is not weight-balanced")]
    NotWeightBalanced,
    #[error("graph is not connected")]
    NotConnected,
    #[error("graph is not undirected")]
    NotUndirected,
    #[error("unknown graph preset `{0}`")]
    UnknownPreset(String),
    #[error("graph file line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("cannot read graph file: {0}")]
    Io(String),
}

/// One directed, weighted edge: `sender` transmits to `receiver`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Edge {
    pub receiver: usize,
    pub sender: usize,
    pub weight: f64,
}

impl Edge {
    pub fn new(receiver: usize, sender: usize, weight: f64) -> Self {
        Edge {
            receiver,
            sender,
            weight,
        }
    }
}

impl From<(usize, usize, f64)> for Edge {
    fn from((receiver, sender, weight): (usize, usize, f64)) -> Self {
        Edge::new(receiver, sender, weight)
    }
}

/// Immutable weighted digraph with its out-Laplacian precomputed.
#[derive(Clone, PartialEq)]
pub struct WeightedDigraph {
    weights: DMatrix<f64>,
    laplacian: DMatrix<f64>,
}

impl fmt::Debug for WeightedDigraph {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("WeightedDigraph")
            .field("n", &self.n())
            .field("edges", &self.edges().len())
            .finish()
    }
}

/// Build a digraph from a 1-based edge list.
pub fn build_digraph<E: Into<Edge> + Copy>(
    n: usize,
    edges: &[E],
) -> Result<WeightedDigraph, GraphError> {
    WeightedDigraph::from_edges(n, edges.iter().map(|&e| e.into()))
}

impl WeightedDigraph {
    pub fn from_edges<I>(n: usize, edges: I) -> Result<Self, GraphError>
    where
        I: IntoIterator<Item = Edge>,
    {
        if n == 0 {
            return Err(GraphError::TooSmall { n, min: 1 });
        }
        let mut weights = DMatrix::zeros(n, n);
        for e in edges {
            let Edge {
                receiver,
                sender,
                weight,
            } = e;
            if receiver == 0 || sender == 0 || receiver > n || sender > n || receiver == sender
            {
                return Err(GraphError::InvalidEdge {
                    receiver,
                    sender,
                    n,
                });
            }
            if !(weight.is_finite() && weight > 0.0) {
                return Err(GraphError::InvalidWeight {
                    receiver,
                    sender,
                    weight,
                });
            }
            let slot = &mut weights[(receiver - 1, sender - 1)];
            if *slot != 0.0 {
                return Err(GraphError::DuplicateEdge { receiver, sender });
            }
            *slot = weight;
        }
        Ok(Self::from_weights_unchecked(weights))
    }

    fn from_weights_unchecked(weights: DMatrix<f64>) -> Self {
        let laplacian = out_laplacian_of(&weights);
        WeightedDigraph { weights, laplacian }
    }

    pub fn n(&self) -> usize {
        self.weights.nrows()
    }

    /// `a_ij`, zero-based.
    pub fn weight(&self, i: usize, j: usize) -> f64 {
        self.weights[(i, j)]
    }

    pub fn weights(&self) -> &DMatrix<f64> {
        &self.weights
    }

    /// The out-Laplacian `L = D_out - A`.
    pub fn laplacian(&self) -> &DMatrix<f64> {
        &self.laplacian
    }

    pub fn out_degree(&self, i: usize) -> f64 {
        self.weights.row(i).sum()
    }

    pub fn in_degree(&self, i: usize) -> f64 {
        self.weights.column(i).sum()
    }

    /// Agents that `i` receives from.
    pub fn out_neighbors(&self, i: usize) -> impl Iterator<Item = usize> + '_ {
        (0..self.n()).filter(move |&j| self.weights[(i, j)] > 0.0)
    }

    /// Agents that receive from `i`.
    pub fn in_neighbors(&self, i: usize) -> impl Iterator<Item = usize> + '_ {
        (0..self.n()).filter(move |&k| self.weights[(k, i)] > 0.0)
    }

    /// 1-based edge list in row-major order.
    pub fn edges(&self) -> Vec<Edge> {
        let n = self.n();
        let mut out = Vec::new();
        for i in 0..n {
            for j in 0..n {
                let w = self.weights[(i, j)];
                if w > 0.0 {
                    out.push(Edge::new(i + 1, j + 1, w));
                }
            }
        }
        out
    }

    pub fn is_undirected(&self) -> bool {
        self.weights == self.weights.transpose()
    }

    pub fn is_weight_balanced(&self, tol: f64) -> bool {
        is_weight_balanced(self, tol)
    }

    pub fn is_strongly_connected(&self) -> bool {
        is_strongly_connected(self)
    }

    /// Relabel nodes: node `i` of `self` becomes node `perm[i]`.
    pub fn permuted(&self, perm: &[usize]) -> Result<Self, GraphError> {
        let n = self.n();
        let mut seen = vec![false; n];
        for &p in perm {
            if p >= n || std::mem::replace(&mut seen[p], true) {
                return Err(GraphError::Parse {
                    line: 0,
                    msg: "relabeling is not a permutation".into(),
                });
            }
        }
        if perm.len() != n {
            return Err(GraphError::TooSmall { n: perm.len(), min: n });
        }
        let mut weights = DMatrix::zeros(n, n);
        for i in 0..n {
            for j in 0..n {
                weights[(perm[i], perm[j])] = self.weights[(i, j)];
            }
        }
        Ok(Self::from_weights_unchecked(weights))
    }

    /// Parse the plain-text edge-list format: a header `n <count>` followed by
    /// one `i j w` (receiver, sender, weight) per line. `#` starts a comment.
    pub fn parse_edge_list(text: &str) -> Result<Self, GraphError> {
        let mut n = None;
        let mut edges = Vec::new();
        for (idx, raw) in text.lines().enumerate() {
            let line_no = idx + 1;
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let toks: Vec<&str> = line.split_whitespace().collect();
            let parse_err = |msg: &str| GraphError::Parse {
                line: line_no,
                msg: msg.to_string(),
            };
            match n {
                None => {
                    if toks.len() != 2 || toks[0] != "n" {
                        return Err(parse_err("expected header `n <count>`"));
                    }
                    n = Some(
                        toks[1]
                            .parse::<usize>()
                            .map_err(|_| parse_err("node count is not an integer"))?,
                    );
                }
                Some(_) => {
                    if toks.len() != 3 {
                        return Err(parse_err("expected `i j w`"));
                    }
                    let i = toks[0]
                        .parse::<usize>()
                        .map_err(|_| parse_err("receiver is not an integer"))?;
                    let j = toks[1]
                        .parse::<usize>()
                        .map_err(|_| parse_err("sender is not an integer"))?;
                    let w = toks[2]
                        .parse::<f64>()
                        .map_err(|_| parse_err("weight is not a number"))?;
                    edges.push(Edge::new(i, j, w));
                }
            }
        }
        let n = n.ok_or(GraphError::Parse {
            line: 0,
            msg: "missing header `n <count>`".into(),
        })?;
        Self::from_edges(n, edges)
    }

    pub fn to_edge_list(&self) -> String {
        let mut s = format!("n {}\n", self.n());
        for e in self.edges() {
            s.push_str(&format!("{} {} {}\n", e.receiver, e.sender, e.weight));
        }
        s
    }

    pub fn load(path: &Path) -> Result<Self, GraphError> {
        let text = std::fs::read_to_string(path).map_err(|e| GraphError::Io(e.to_string()))?;
        Self::parse_edge_list(&text)
    }

    /// Resolve a preset name, falling back to reading `spec` as a file path.
    pub fn resolve(spec: &str) -> Result<Self, GraphError> {
        match preset(spec) {
            Ok(g) => Ok(g),
            Err(GraphError::UnknownPreset(_)) if Path::new(spec).exists() => {
                Self::load(Path::new(spec))
            }
            Err(e) => Err(e),
        }
    }
}

fn out_laplacian_of(weights: &DMatrix<f64>) -> DMatrix<f64> {
    let n = weights.nrows();
    let mut l = -weights.clone();
    for i in 0..n {
        l[(i, i)] = weights.row(i).sum();
    }
    l
}

/// `L = D_out - A`; every row sums to zero.
pub fn out_laplacian(g: &WeightedDigraph) -> DMatrix<f64> {
    g.laplacian.clone()
}

pub fn is_weight_balanced(g: &WeightedDigraph, tol: f64) -> bool {
    (0..g.n()).all(|i| (g.in_degree(i) - g.out_degree(i)).abs() <= tol)
}

/// Forward and backward reachability from node 0 over positive-weight edges.
pub fn is_strongly_connected(g: &WeightedDigraph) -> bool {
    let n = g.n();
    let reach = |forward: bool| {
        let mut seen = vec![false; n];
        let mut queue = VecDeque::from([0usize]);
        seen[0] = true;
        while let Some(u) = queue.pop_front() {
            #[allow(clippy::needless_range_loop)]
            for v in 0..n {
                let w = if forward { g.weight(v, u) } else { g.weight(u, v) };
                if w > 0.0 && !seen[v] {
                    seen[v] = true;
                    queue.push_back(v);
                }
            }
        }
        seen.into_iter().all(|s| s)
    };
    reach(true) && reach(false)
}

/// Spectral data of a digraph's Laplacian.
#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct GraphSpectrum {
    /// Eigenvalues of `Sym(L)`, ascending.
    pub sym_eigenvalues: Vec<f64>,
    pub lambda_hat_2: f64,
    pub lambda_hat_n: f64,
    /// Largest real part among the eigenvalues of `L`.
    pub lambda_n: f64,
    /// Second-smallest real part among the eigenvalues of `L`.
    pub re_lambda_2: f64,
    /// Operator 2-norm of `L`; equals `lambda_n` for undirected graphs.
    pub l_norm: f64,
    pub weight_balanced: bool,
    pub strongly_connected: bool,
    pub undirected: bool,
}

impl GraphSpectrum {
    /// `Sym(L)` bounds are only meaningful for strongly connected,
    /// weight-balanced digraphs.
    pub fn certified(&self) -> bool {
        self.weight_balanced && self.strongly_connected
    }

    pub fn require_certified(&self) -> Result<(), GraphError> {
        if !self.weight_balanced {
            Err(GraphError::NotWeightBalanced)
        } else if !self.strongly_connected {
            Err(GraphError::NotConnected)
        } else {
            Ok(())
        }
    }
}

/// Eigenvalues of a general square matrix. The Schur iteration is capped
/// (nalgebra's default is not), retrying with looser tolerances.
pub fn general_eigenvalues(m: &DMatrix<f64>) -> Option<Vec<Complex<f64>>> {
    let cap = 1000 * m.nrows().max(1);
    [1e-15, 1e-12, 1e-9].into_iter().find_map(|eps| {
        Schur::try_new(m.clone(), eps, cap).map(|s| s.complex_eigenvalues().iter().copied().collect())
    })
}

pub fn sorted_symmetric_eigenvalues(m: DMatrix<f64>) -> Vec<f64> {
    let mut ev: Vec<f64> = SymmetricEigen::new(m).eigenvalues.iter().copied().collect();
    ev.sort_by(f64::total_cmp);
    ev
}

pub fn spectral_summary(g: &WeightedDigraph) -> GraphSpectrum {
    let l = g.laplacian();
    let sym = (l + l.transpose()) * 0.5;
    let mut sym_ev = sorted_symmetric_eigenvalues(sym);
    for ev in sym_ev.iter_mut() {
        if ev.abs() <= ZERO_EIG_TOL {
            *ev = 0.0;
        }
    }
    let n = g.n();
    let undirected = g.is_undirected();
    let (re_lambda_2, lambda_n) = if undirected {
        (
            sym_ev.get(1).copied().unwrap_or(0.0),
            *sym_ev.last().unwrap(),
        )
    } else {
        match general_eigenvalues(l) {
            Some(ev) => {
                let mut re: Vec<f64> = ev.iter().map(|c| c.re).collect();
                re.sort_by(f64::total_cmp);
                let clean = |x: f64| if x.abs() <= ZERO_EIG_TOL { 0.0 } else { x };
                (
                    clean(re.get(1).copied().unwrap_or(0.0)),
                    clean(*re.last().unwrap()),
                )
            }
            // Bounds that hold for any balanced digraph.
            None => (sym_ev.get(1).copied().unwrap_or(0.0), l.clone().singular_values().max()),
        }
    };
    let l_norm = l.clone().singular_values().max();
    GraphSpectrum {
        lambda_hat_2: sym_ev.get(1).copied().unwrap_or(0.0),
        lambda_hat_n: sym_ev[n - 1],
        sym_eigenvalues: sym_ev,
        lambda_n,
        re_lambda_2,
        l_norm,
        weight_balanced: is_weight_balanced(g, BALANCE_TOL),
        strongly_connected: is_strongly_connected(g),
        undirected,
    }
}

/// `r = 1/sqrt(n) 1` together with an orthonormal basis `R` of its
/// orthogonal complement.
#[derive(Debug, Clone, PartialEq)]
pub struct DisagreementBasis {
    pub r: DVector<f64>,
    pub complement: DMatrix<f64>,
}

impl DisagreementBasis {
    pub fn n(&self) -> usize {
        self.r.len()
    }

    /// The orthogonal matrix `[r R]`.
    pub fn full(&self) -> DMatrix<f64> {
        let n = self.n();
        let mut q = DMatrix::zeros(n, n);
        q.set_column(0, &self.r);
        q.columns_mut(1, n - 1).copy_from(&self.complement);
        q
    }

    /// `R^T M R` for an `n x n` matrix `M`.
    pub fn compress(&self, m: &DMatrix<f64>) -> DMatrix<f64> {
        self.complement.transpose() * m * &self.complement
    }
}

/// `Pi_n = I - (1/n) 1 1^T`.
pub fn projector(n: usize) -> DMatrix<f64> {
    DMatrix::identity(n, n) - DMatrix::from_element(n, n, 1.0 / n as f64)
}

/// Modified Gram-Schmidt (two passes) over the projected unit vectors
/// `Pi e_1, ..., Pi e_{n-1}`, which span the complement of `r`.
pub fn complement_basis(n: usize) -> Result<DisagreementBasis, GraphError> {
    if n < 2 {
        return Err(GraphError::TooSmall { n, min: 2 });
    }
    let r = DVector::from_element(n, 1.0 / (n as f64).sqrt());
    let pi = projector(n);
    let mut cols: Vec<DVector<f64>> = Vec::with_capacity(n - 1);
    for k in 0..n - 1 {
        let mut c: DVector<f64> = pi.column(k).into_owned();
        for _ in 0..2 {
            let proj = r.dot(&c);
            c.axpy(-proj, &r, 1.0);
            for q in &cols {
                let proj = q.dot(&c);
                c.axpy(-proj, q, 1.0);
            }
        }
        let norm = c.norm();
        cols.push(c / norm);
    }
    Ok(DisagreementBasis {
        r,
        complement: DMatrix::from_columns(&cols),
    })
}

/// Arrows of the 10-node unit-weight benchmark digraph, as `(tail, head)` of
/// each drawn arrow. The arrow `a -> b` is the edge `(a, b)`: `b` sends to `a`.
/// The two double-headed arrows contribute one edge in each direction.
const FIG2_ARROWS: [(usize, usize); 16] = [
    (1, 2),
    (2, 3),
    (3, 4),
    (4, 5),
    (5, 4),
    (5, 6),
    (6, 7),
    (7, 8),
    (8, 7),
    (9, 8),
    (10, 9),
    (10, 1),
    (2, 10),
    (4, 2),
    (7, 5),
    (8, 10),
];

/// Node relabelings that generate the two companion digraphs of the
/// switching experiment. Relabeling preserves balance and connectivity.
const FIG2_RELABEL_B: [usize; 10] = [3, 4, 5, 6, 7, 8, 9, 0, 1, 2];
const FIG2_RELABEL_C: [usize; 10] = [9, 8, 7, 6, 5, 4, 3, 2, 1, 0];

pub fn fig2() -> WeightedDigraph {
    WeightedDigraph::from_edges(10, FIG2_ARROWS.iter().map(|&(a, b)| Edge::new(a, b, 1.0)))
        .expect("benchmark digraph is valid")
}

/// The three digraphs the switching experiment cycles through.
pub fn fig2_switching_set() -> [WeightedDigraph; 3] {
    let base = fig2();
    let b = base.permuted(&FIG2_RELABEL_B).expect("valid permutation");
    let c = base.permuted(&FIG2_RELABEL_C).expect("valid permutation");
    [base, b, c]
}

pub fn complete(n: usize) -> Result<WeightedDigraph, GraphError> {
    let edges = (1..=n)
        .flat_map(|i| (1..=n).filter(move |&j| j != i).map(move |j| Edge::new(i, j, 1.0)));
    WeightedDigraph::from_edges(n, edges)
}

pub fn path(n: usize) -> Result<WeightedDigraph, GraphError> {
    let edges = (1..n).flat_map(|i| [Edge::new(i, i + 1, 1.0), Edge::new(i + 1, i, 1.0)]);
    WeightedDigraph::from_edges(n, edges)
}

/// Undirected ring.
pub fn cycle(n: usize) -> Result<WeightedDigraph, GraphError> {
    if n < 3 {
        return Err(GraphError::TooSmall { n, min: 3 });
    }
    let edges = (1..=n).flat_map(move |i| {
        let next = i % n + 1;
        [Edge::new(i, next, 1.0), Edge::new(next, i, 1.0)]
    });
    WeightedDigraph::from_edges(n, edges)
}

/// Directed ring where agent `i` receives from agent `i + 1`.
pub fn directed_cycle(n: usize) -> Result<WeightedDigraph, GraphError> {
    if n < 2 {
        return Err(GraphError::TooSmall { n, min: 2 });
    }
    WeightedDigraph::from_edges(n, (1..=n).map(|i| Edge::new(i, i % n + 1, 1.0)))
}

/// Named presets: `fig2`, `fig2b`, `fig2c`, `k<N>`, `path<N>`, `cycle<N>`,
/// `dcycle<N>`.
pub fn preset(name: &str) -> Result<WeightedDigraph, GraphError> {
    let unknown = || GraphError::UnknownPreset(name.to_string());
    let sized = |prefix: &str| -> Option<usize> {
        name.strip_prefix(prefix).and_then(|s| s.parse::<usize>().ok())
    };
    match name {
        "fig2" => return Ok(fig2()),
        "fig2b" | "fig2c" => {
            let [_, b, c] = fig2_switching_set();
            return Ok(if name == "fig2b" { b } else { c });
        }
        _ => {}
    }
    if let Some(n) = sized("dcycle") {
        directed_cycle(n)
    } else if let Some(n) = sized("cycle") {
        cycle(n)
    } else if let Some(n) = sized("path") {
        path(n)
    } else if let Some(n) = sized("k") {
        complete(n)
    } else {
        Err(unknown())
    }
}
