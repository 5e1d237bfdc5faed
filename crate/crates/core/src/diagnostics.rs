//! Offline analysis of traces: orthogonal analysis coordinates,
//! Lyapunov and LaSalle functions, decay verification and the gradient
//! reconstruction attack.

use nalgebra::DMatrix;
use serde::Serialize;
use thiserror::Error;

use crate::costs::NetworkCost;
use crate::dynamics::{equilibrium_at, AlgorithmParams, Trace};
use crate::graph::{complement_basis, DisagreementBasis, GraphError, WeightedDigraph};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DiagError {
    #[error("dimension mismatch: {0}")]
    DimMismatch(String),
    #[error("trace spacing {spacing} exceeds the allowed {limit}")]
    InsufficientSampling { spacing: f64, limit: f64 },
    #[error("agent {observer} cannot see agent {missing}, which reconstruction of agent {target} needs")]
    InsufficientVisibility {
        observer: usize,
        target: usize,
        missing: usize,
    },
    #[error("invalid diagnostic input: {0}")]
    InvalidInput(String),
    #[error(transparent)]
    Graph(#[from] GraphError),
}

/// `z = [r R]^T (x - x_bar)` and `w = [r R]^T (v - v_bar)` as N x d
/// matrices; row 0 is the consensus component.
#[derive(Debug, Clone, PartialEq)]
pub struct AnalysisCoordinates {
    pub z: DMatrix<f64>,
    pub w: DMatrix<f64>,
}

impl AnalysisCoordinates {
    pub fn z1(&self) -> DMatrix<f64> {
        self.z.rows(0, 1).into_owned()
    }

    pub fn z_rest(&self) -> DMatrix<f64> {
        self.z.rows(1, self.z.nrows() - 1).into_owned()
    }

    pub fn w1(&self) -> DMatrix<f64> {
        self.w.rows(0, 1).into_owned()
    }

    pub fn w_rest(&self) -> DMatrix<f64> {
        self.w.rows(1, self.w.nrows() - 1).into_owned()
    }

    /// `|p|^2` with `p = (z, w_rest)`.
    pub fn p_norm_sq(&self) -> f64 {
        self.z.norm_squared() + self.w_rest().norm_squared()
    }
}

pub fn to_analysis_coords(
    x: &DMatrix<f64>,
    v: &DMatrix<f64>,
    equilibrium: (&DMatrix<f64>, &DMatrix<f64>),
    basis: &DisagreementBasis,
) -> Result<AnalysisCoordinates, DiagError> {
    let (x_bar, v_bar) = equilibrium;
    if x.shape() != x_bar.shape() || v.shape() != v_bar.shape() || x.shape() != v.shape() {
        return Err(DiagError::DimMismatch("state and equilibrium shapes differ".into()));
    }
    if basis.n() != x.nrows() {
        return Err(DiagError::DimMismatch(format!(
            "basis is for {} agents, state has {}",
            basis.n(),
            x.nrows()
        )));
    }
    let t = basis.full().transpose();
    Ok(AnalysisCoordinates {
        z: &t * (x - x_bar),
        w: &t * (v - v_bar),
    })
}

/// `1/18 a(phi+1)|z1|^2 + (phi a / 2)|z_rest|^2 + 1/(2a) |a z_rest + w_rest|^2`.
pub fn lyapunov_digraph(c: &AnalysisCoordinates, alpha: f64, phi: f64) -> f64 {
    let z2 = c.z_rest();
    let mix = &z2 * alpha + c.w_rest();
    alpha * (phi + 1.0) / 18.0 * c.z1().norm_squared()
        + 0.5 * phi * alpha * z2.norm_squared()
        + mix.norm_squared() / (2.0 * alpha)
}

/// `sum_k w[:,k]^T M w[:,k]`, i.e. `w^T (M (x) I) w` for agent-major stacking.
fn weighted_sq(w: &DMatrix<f64>, m: &DMatrix<f64>) -> f64 {
    (w.transpose() * m * w).trace()
}

/// Needs the same complement basis the coordinates were built with.
fn reduced_inverse_for(
    g: &WeightedDigraph,
    basis: &DisagreementBasis,
) -> Result<DMatrix<f64>, DiagError> {
    if !g.is_undirected() {
        return Err(GraphError::NotUndirected.into());
    }
    let reduced = basis.compress(g.laplacian());
    let reduced = (&reduced + reduced.transpose()) * 0.5;
    let chol = reduced.cholesky().ok_or(GraphError::NotConnected)?;
    Ok(chol.inverse())
}

/// The undirected-graph Lyapunov function; requires `phi >= 1`.
pub fn lyapunov_undirected(
    c: &AnalysisCoordinates,
    alpha: f64,
    beta: f64,
    phi: f64,
    g: &WeightedDigraph,
    basis: &DisagreementBasis,
) -> Result<f64, DiagError> {
    if phi < 1.0 {
        return Err(DiagError::InvalidInput(format!("phi must be at least 1, got {phi}")));
    }
    let inv = reduced_inverse_for(g, basis)?;
    Ok(lyapunov_undirected_with(c, alpha, beta, phi, &inv))
}

fn lyapunov_undirected_with(
    c: &AnalysisCoordinates,
    alpha: f64,
    beta: f64,
    phi: f64,
    inv: &DMatrix<f64>,
) -> f64 {
    let z2 = c.z_rest();
    let w2 = c.w_rest();
    let mix = &z2 * alpha + &w2;
    0.5 * alpha * (phi + 1.0) * c.z1().norm_squared()
        + 0.5 * phi * alpha * z2.norm_squared()
        + mix.norm_squared() / (2.0 * alpha)
        + (phi + 1.0) / (2.0 * beta) * weighted_sq(&w2, inv)
}

/// `1/2 |z|^2 + 1/(2 a b) w_rest^T ((R^T L R)^{-1} (x) I) w_rest`.
pub fn lasalle_function(
    c: &AnalysisCoordinates,
    alpha: f64,
    beta: f64,
    g: &WeightedDigraph,
    basis: &DisagreementBasis,
) -> Result<f64, DiagError> {
    let inv = reduced_inverse_for(g, basis)?;
    Ok(lasalle_with(c, alpha, beta, &inv))
}

fn lasalle_with(c: &AnalysisCoordinates, alpha: f64, beta: f64, inv: &DMatrix<f64>) -> f64 {
    0.5 * c.z.norm_squared() + weighted_sq(&c.w_rest(), inv) / (2.0 * alpha * beta)
}

/// Which function to evaluate along a trace.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FunctionId {
    Digraph { phi: f64 },
    Undirected { phi: f64 },
    LaSalle,
}

/// One function value per sample.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Series {
    pub t: Vec<f64>,
    pub value: Vec<f64>,
    pub p_norm_sq: Vec<f64>,
    pub w1_norm: Vec<f64>,
}

/// Evaluates the chosen function along `trace`. The undirected and LaSalle
/// forms use the graph of each sample.
pub fn lyapunov_series(
    trace: &Trace,
    nc: &NetworkCost,
    p: AlgorithmParams,
    which: FunctionId,
    graphs: &[WeightedDigraph],
) -> Result<Series, DiagError> {
    let (x_bar, v_bar) = equilibrium_at(nc, p, &trace.x_star);
    let basis = complement_basis(trace.n)?;
    let inverses: Vec<Option<DMatrix<f64>>> = match which {
        FunctionId::Digraph { .. } => vec![None; graphs.len()],
        _ => graphs
            .iter()
            .map(|g| reduced_inverse_for(g, &basis).map(Some))
            .collect::<Result<_, _>>()?,
    };
    if let FunctionId::Undirected { phi } = which {
        if phi < 1.0 {
            return Err(DiagError::InvalidInput(format!("phi must be at least 1, got {phi}")));
        }
    }
    let mut out = Series {
        t: Vec::with_capacity(trace.samples.len()),
        value: Vec::with_capacity(trace.samples.len()),
        p_norm_sq: Vec::with_capacity(trace.samples.len()),
        w1_norm: Vec::with_capacity(trace.samples.len()),
    };
    for s in &trace.samples {
        let c = to_analysis_coords(&s.x, &s.v, (&x_bar, &v_bar), &basis)?;
        let inv = inverses.get(s.graph).and_then(|o| o.as_ref());
        let value = match (which, inv) {
            (FunctionId::Digraph { phi }, _) => lyapunov_digraph(&c, p.alpha, phi),
            (FunctionId::Undirected { phi }, Some(inv)) => {
                lyapunov_undirected_with(&c, p.alpha, p.beta, phi, inv)
            }
            (FunctionId::LaSalle, Some(inv)) => lasalle_with(&c, p.alpha, p.beta, inv),
            _ => {
                return Err(DiagError::InvalidInput(format!(
                    "sample uses graph {} but only {} graphs were given",
                    s.graph,
                    graphs.len()
                )))
            }
        };
        out.t.push(s.t);
        out.value.push(value);
        out.p_norm_sq.push(c.p_norm_sq());
        out.w1_norm.push(c.w1().norm());
    }
    Ok(out)
}

/// Outcome of a sampled derivative bound `dV/dt <= -bound |p|^2 + slack`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DecayReport {
    pub samples: usize,
    pub passed: usize,
    pub fraction: f64,
    /// Largest `dV/dt + bound |p|^2 - slack` seen; non-positive when all pass.
    pub worst_margin: f64,
    /// Least-squares decay rate of `sqrt(V)`, comparable to rate bounds on
    /// `|x - x_bar|`.
    pub measured_rate: f64,
    pub pass: bool,
}

/// Central-difference `dV/dt` at interior samples checked against
/// `-bound |p|^2 + 1e-6 (1 + |p|^2)`.
pub fn decay_check(series: &Series, h: f64, bound: f64) -> Result<DecayReport, DiagError> {
    let n = series.t.len();
    if n < 3 {
        return Err(DiagError::InsufficientSampling {
            spacing: f64::INFINITY,
            limit: 10.0 * h,
        });
    }
    let spacing = series
        .t
        .windows(2)
        .map(|w| w[1] - w[0])
        .fold(0.0, f64::max);
    if spacing > 10.0 * h * (1.0 + 1e-9) {
        return Err(DiagError::InsufficientSampling {
            spacing,
            limit: 10.0 * h,
        });
    }
    let mut passed = 0;
    let mut worst = f64::NEG_INFINITY;
    for k in 1..n - 1 {
        let dv = (series.value[k + 1] - series.value[k - 1]) / (series.t[k + 1] - series.t[k - 1]);
        let p2 = series.p_norm_sq[k];
        let margin = dv + bound * p2 - 1e-6 * (1.0 + p2);
        worst = worst.max(margin);
        if margin <= 0.0 {
            passed += 1;
        }
    }
    let checked = n - 2;
    Ok(DecayReport {
        samples: checked,
        passed,
        fraction: passed as f64 / checked as f64,
        worst_margin: worst,
        measured_rate: fitted_rate(&series.t, &series.value),
        pass: passed == checked,
    })
}

/// `-1/2` times the least-squares slope of `ln V` over samples where `V`
/// is well above roundoff.
pub fn fitted_rate(t: &[f64], v: &[f64]) -> f64 {
    let floor = v.first().copied().unwrap_or(0.0) * 1e-20;
    let pts: Vec<(f64, f64)> = t
        .iter()
        .zip(v)
        .filter(|(_, &v)| v > floor.max(1e-280))
        .map(|(&t, &v)| (t, v.ln()))
        .collect();
    if pts.len() < 2 {
        return f64::NAN;
    }
    let m = pts.len() as f64;
    let (st, sy) = pts.iter().fold((0.0, 0.0), |(a, b), (t, y)| (a + t, b + y));
    let (mt, my) = (st / m, sy / m);
    let (num, den) = pts.iter().fold((0.0, 0.0), |(a, b), (t, y)| {
        (a + (t - mt) * (y - my), b + (t - mt).powi(2))
    });
    -0.5 * num / den
}

/// Largest increase between consecutive values; non-positive for a
/// non-increasing series.
pub fn max_increase(values: &[f64]) -> f64 {
    values
        .windows(2)
        .map(|w| w[1] - w[0])
        .fold(f64::NEG_INFINITY, f64::max)
}

/// Gradient estimates for the target agent at interior sample times.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Reconstruction {
    pub t: Vec<f64>,
    /// One row per time, `d` columns.
    pub gradient: Vec<Vec<f64>>,
    /// `v^j(0)` was unknown and taken as zero.
    pub biased: bool,
}

/// Passive observer `i` rebuilds `grad f^j(x^j(t))` from received histories:
/// differentiates `x^j`, integrates `alpha beta sum_k a_jk (x^j - x^k)` from
/// `v^j(0)` with the trapezoidal rule, then solves the `x^j` equation.
/// Observer `i` must receive from `j` and from every agent `j` receives from.
pub fn reconstruct_gradient(
    observer: usize,
    target: usize,
    trace: &Trace,
    g: &WeightedDigraph,
    p: AlgorithmParams,
    v_j0: Option<&[f64]>,
) -> Result<Reconstruction, DiagError> {
    let n = g.n();
    if observer >= n || target >= n || observer == target {
        return Err(DiagError::InvalidInput(format!(
            "observer {observer} and target {target} must be distinct agents of {n}"
        )));
    }
    if trace.n != n {
        return Err(DiagError::DimMismatch("trace and graph sizes differ".into()));
    }
    if trace.samples.iter().any(|s| s.graph != trace.samples[0].graph) {
        return Err(DiagError::InvalidInput("reconstruction needs a fixed topology".into()));
    }
    let needed = std::iter::once(target).chain(g.out_neighbors(target));
    for k in needed {
        if k != observer && g.weight(observer, k) <= 0.0 {
            return Err(DiagError::InsufficientVisibility {
                observer,
                target,
                missing: k,
            });
        }
    }
    let d = trace.d;
    if trace.samples.len() < 3 {
        return Err(DiagError::InsufficientSampling {
            spacing: f64::INFINITY,
            limit: 0.0,
        });
    }
    let j = target;
    let disagreement = |s: &crate::dynamics::Sample| -> Vec<f64> {
        (0..d)
            .map(|c| {
                g.out_neighbors(j)
                    .map(|k| g.weight(j, k) * (s.x[(j, c)] - s.x[(k, c)]))
                    .sum()
            })
            .collect()
    };
    let sums: Vec<Vec<f64>> = trace.samples.iter().map(disagreement).collect();
    let mut v = v_j0.map_or(vec![0.0; d], <[f64]>::to_vec);
    let mut v_hist = vec![v.clone()];
    for k in 1..trace.samples.len() {
        let dt = trace.samples[k].t - trace.samples[k - 1].t;
        for c in 0..d {
            v[c] += 0.5 * dt * p.alpha * p.beta * (sums[k][c] + sums[k - 1][c]);
        }
        v_hist.push(v.clone());
    }
    let mut out = Reconstruction {
        t: Vec::new(),
        gradient: Vec::new(),
        biased: v_j0.is_none(),
    };
    for k in 1..trace.samples.len() - 1 {
        let (prev, cur, next) = (&trace.samples[k - 1], &trace.samples[k], &trace.samples[k + 1]);
        let est: Vec<f64> = (0..d)
            .map(|c| {
                let xdot = (next.x[(j, c)] - prev.x[(j, c)]) / (next.t - prev.t);
                (-xdot - p.beta * sums[k][c] - v_hist[k][c]) / p.alpha
            })
            .collect();
        out.t.push(cur.t);
        out.gradient.push(est);
    }
    Ok(out)
}
