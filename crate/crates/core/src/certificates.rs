//! Closed-form sufficient conditions, communication bounds and rate bounds,
//! assembled into a single report.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;
use thiserror::Error;

use crate::costs::{minimize_global, AgentConstants, CostError, Interval, NetworkCost};
use crate::dynamics::{equilibrium_at, AlgorithmParams};
use crate::exec::Execution;
use crate::graph::{complement_basis, spectral_summary, GraphError, GraphSpectrum, WeightedDigraph};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CertError {
    #[error("condition not met: {0}")]
    Infeasible(String),
    #[error("invalid certificate input: {0}")]
    InvalidInput(String),
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    Cost(#[from] CostError),
}

/// `m_lower = min m^i`, `M_upper = max M^i`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ConvexityBounds {
    pub m_lower: f64,
    #[serde(rename = "M_upper")]
    pub big_m_upper: f64,
}

impl ConvexityBounds {
    pub fn new(m_lower: f64, big_m_upper: f64) -> Result<Self, CertError> {
        if !(m_lower > 0.0 && m_lower <= big_m_upper && big_m_upper.is_finite()) {
            return Err(CertError::InvalidInput(format!(
                "need 0 < m_lower <= M_upper, got m_lower = {m_lower}, M_upper = {big_m_upper}"
            )));
        }
        Ok(ConvexityBounds {
            m_lower,
            big_m_upper,
        })
    }

    pub fn from_agents(agents: &[AgentConstants]) -> Result<Self, CertError> {
        let m = agents.iter().map(|a| a.m).fold(f64::INFINITY, f64::min);
        let big_m = agents.iter().map(|a| a.big_m).fold(0.0, f64::max);
        Self::new(m, big_m)
    }
}

/// `phi + 1 > 4 M_upper`.
pub fn phi_condition(phi: f64, b: ConvexityBounds) -> bool {
    phi + 1.0 > 4.0 * b.big_m_upper
}

/// `gamma = a^2 (phi+1) m + 9 b l phi a - 4 a^2 (M m + (phi+1)^2)`.
pub fn gamma(alpha: f64, beta: f64, phi: f64, b: ConvexityBounds, lambda_hat_2: f64) -> f64 {
    gamma_with(9.0, alpha, beta, phi, b, lambda_hat_2)
}

/// As [`gamma`] with the coupling coefficient 9/2.
pub fn gamma_prime(alpha: f64, beta: f64, phi: f64, b: ConvexityBounds, lambda_hat_2: f64) -> f64 {
    gamma_with(4.5, alpha, beta, phi, b, lambda_hat_2)
}

fn gamma_with(c: f64, alpha: f64, beta: f64, phi: f64, b: ConvexityBounds, lh2: f64) -> f64 {
    let a2 = alpha * alpha;
    a2 * (phi + 1.0) * b.m_lower + c * beta * lh2 * phi * alpha
        - 4.0 * a2 * (b.big_m_upper * b.m_lower + (phi + 1.0).powi(2))
}

/// Threshold above which every `beta` makes `gamma` positive (given the
/// `phi` condition).
pub fn suggest_beta(alpha: f64, phi: f64, lambda_hat_2: f64) -> f64 {
    4.0 * (phi + 1.0).powi(2) * alpha / (9.0 * phi * lambda_hat_2)
}

/// Same threshold for `gamma_prime`.
pub fn suggest_beta_prime(alpha: f64, phi: f64, lambda_hat_2: f64) -> f64 {
    2.0 * suggest_beta(alpha, phi, lambda_hat_2)
}

/// `phi = M^2 / (2m) + delta / (2 m alpha^2) - 1`; feasible when positive.
pub fn phi_from_delta(alpha: f64, delta: f64, b: ConvexityBounds) -> f64 {
    b.big_m_upper.powi(2) / (2.0 * b.m_lower) + delta / (2.0 * b.m_lower * alpha * alpha) - 1.0
}

/// Periodic communication bound.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PeriodBound {
    pub phi: f64,
    pub zeta: f64,
    pub tau: f64,
    pub feasible: bool,
}

pub fn zeta(alpha: f64, beta: f64, eps: f64, delta: f64, phi: f64, l2: f64, ln: f64) -> f64 {
    let num = 2.0 * eps * (1.0 - eps) * l2 * delta.min(1.0);
    let den = alpha * beta * ln * ln * phi + 4.0 * alpha * alpha * l2 * (1.0 + phi).powi(2);
    (num / den).sqrt()
}

/// `tau(zeta)` for the periodic bound.
pub fn tau_from_zeta(alpha: f64, beta: f64, big_m: f64, ln: f64, zeta: f64) -> f64 {
    let c = alpha * big_m + 1.0;
    let den = c + beta * ln * (1.0 + alpha * alpha).sqrt() * (1.0 + zeta);
    (c * zeta / den).ln_1p() / c
}

/// Largest admissible period: `Delta in (0, tau)` certifies convergence.
pub fn tau_period(
    alpha: f64,
    beta: f64,
    eps: f64,
    delta: f64,
    b: ConvexityBounds,
    lambda_2: f64,
    lambda_n: f64,
) -> Result<PeriodBound, CertError> {
    if !(eps > 0.0 && eps < 1.0) {
        return Err(CertError::InvalidInput(format!("epsilon must lie in (0, 1), got {eps}")));
    }
    if !(delta > 0.0) {
        return Err(CertError::InvalidInput(format!("delta must be positive, got {delta}")));
    }
    let phi = phi_from_delta(alpha, delta, b);
    if phi <= 0.0 {
        return Ok(PeriodBound {
            phi,
            zeta: 0.0,
            tau: 0.0,
            feasible: false,
        });
    }
    let zeta = zeta(alpha, beta, eps, delta, phi, lambda_2, lambda_n);
    let tau = tau_from_zeta(alpha, beta, b.big_m_upper, lambda_n, zeta);
    Ok(PeriodBound {
        phi,
        zeta,
        tau,
        feasible: tau > 0.0,
    })
}

/// Relative-disagreement threshold of the centralized trigger.
pub fn kappa(alpha: f64, beta: f64, eps: f64, delta: f64, phi: f64, l2: f64, ln: f64) -> f64 {
    let num = 2.0 * (eps * delta * l2 + 2.0 * phi * alpha * beta * l2 * l2 * eps * eps * (1.0 - eps));
    let den = alpha * beta * phi * ln * ln + 2.0 * l2 * alpha * alpha * (1.0 + phi).powi(2);
    num / den
}

/// The matrix `F` on `(z1, z_rest, w_rest)`, used by the digraph Lyapunov
/// function `V = p^T F p`.
pub fn matrix_f(alpha: f64, phi: f64, n: usize, d: usize) -> DMatrix<f64> {
    let a = alpha * (phi + 1.0);
    let r = (n - 1) * d;
    let mut f = DMatrix::zeros(d + 2 * r, d + 2 * r);
    for k in 0..d {
        f[(k, k)] = 0.5 * a / 9.0;
    }
    for k in 0..r {
        let (z, w) = (d + k, d + r + k);
        f[(z, z)] = 0.5 * a;
        f[(z, w)] = 0.5;
        f[(w, z)] = 0.5;
        f[(w, w)] = 0.5 / alpha;
    }
    f
}

/// `(lamF_min, lamF_max)` from the diagonal block and the 2 x 2 block
/// `1/2 [[alpha(phi+1), 1], [1, 1/alpha]]`.
pub fn matrix_f_extremes(alpha: f64, phi: f64, n: usize, d: usize) -> (f64, f64) {
    let a = alpha * (phi + 1.0);
    let first = a / 18.0;
    if n < 2 || d == 0 {
        return (first, first);
    }
    let c = 1.0 / alpha;
    let root = ((a - c).powi(2) + 4.0).sqrt();
    let lo = 0.25 * (a + c - root);
    let hi = 0.25 * (a + c + root);
    (first.min(lo), first.max(hi))
}

/// `(R^T L R)^{-1}` for a connected undirected graph.
pub fn reduced_laplacian_inverse(g: &WeightedDigraph) -> Result<DMatrix<f64>, CertError> {
    if !g.is_undirected() {
        return Err(GraphError::NotUndirected.into());
    }
    let basis = complement_basis(g.n())?;
    let reduced = basis.compress(g.laplacian());
    let reduced = (&reduced + reduced.transpose()) * 0.5;
    let chol = reduced.cholesky().ok_or(GraphError::NotConnected)?;
    let inv = chol.inverse();
    if !inv.iter().all(|v| v.is_finite()) || inv.amax() > 1e12 {
        return Err(GraphError::NotConnected.into());
    }
    Ok(inv)
}

/// The matrix `E` on `(z1, z_rest, w_rest)` for the undirected Lyapunov
/// function.
pub fn matrix_e(
    alpha: f64,
    beta: f64,
    phi: f64,
    g: &WeightedDigraph,
    d: usize,
) -> Result<DMatrix<f64>, CertError> {
    let inv = reduced_laplacian_inverse(g)?;
    let n = g.n();
    let r = (n - 1) * d;
    let a = alpha * (phi + 1.0);
    let mut e = DMatrix::zeros(d + 2 * r, d + 2 * r);
    for k in 0..d {
        e[(k, k)] = 0.5 * a;
    }
    let inv_k = inv.kronecker(&DMatrix::<f64>::identity(d, d)) * ((phi + 1.0) / beta);
    for k in 0..r {
        let (z, w) = (d + k, d + r + k);
        e[(z, z)] = 0.5 * a;
        e[(z, w)] = 0.5;
        e[(w, z)] = 0.5;
        e[(w, w)] = 0.5 / alpha;
    }
    for i in 0..r {
        for j in 0..r {
            e[(d + r + i, d + r + j)] += 0.5 * inv_k[(i, j)];
        }
    }
    Ok(e)
}

pub fn matrix_e_extreme(
    alpha: f64,
    beta: f64,
    phi: f64,
    g: &WeightedDigraph,
) -> Result<f64, CertError> {
    // The Kronecker structure makes the spectrum independent of d.
    let e = matrix_e(alpha, beta, phi, g, 1)?;
    Ok(e.symmetric_eigenvalues().max())
}

/// `min{7/16, gamma/9} / (2 lamF_max)`.
pub fn rate_digraph(gamma: f64, lam_f_max: f64) -> Result<f64, CertError> {
    if gamma <= 0.0 {
        return Err(CertError::Infeasible(format!("gamma = {gamma} is not positive")));
    }
    Ok((7.0f64 / 16.0).min(gamma / 9.0) / (2.0 * lam_f_max))
}

/// `min{alpha, beta Re(lambda_2)}` for unit-Hessian quadratic costs.
pub fn rate_quadratic(alpha: f64, beta: f64, re_lambda_2: f64) -> f64 {
    alpha.min(beta * re_lambda_2)
}

/// `1/4 eps min{1/2, delta} / lamE_max`.
pub fn rate_periodic(eps: f64, delta: f64, lam_e_max: f64) -> f64 {
    0.25 * eps * delta.min(0.5) / lam_e_max
}

/// `1/4 min{delta, 2 phi a b l2 (1-eps)^2, 1-eps, eps/2} / lamE_max`.
pub fn rate_centralized(
    alpha: f64,
    beta: f64,
    eps: f64,
    delta: f64,
    phi: f64,
    l2: f64,
    lam_e_max: f64,
) -> f64 {
    let m = delta
        .min(2.0 * phi * alpha * beta * l2 * (1.0 - eps).powi(2))
        .min(1.0 - eps)
        .min(0.5 * eps);
    0.25 * m / lam_e_max
}

/// `min{7/16, gamma'/9}`.
pub fn eta(gamma_prime: f64) -> f64 {
    (7.0f64 / 16.0).min(gamma_prime / 9.0)
}

/// Ultimate bound `phi a b lamF_max / (4 eta lamF_min) |eps|^2` of the
/// distributed scheme.
pub fn steady_state_bound(
    alpha: f64,
    beta: f64,
    phi: f64,
    eta: f64,
    lam_f: (f64, f64),
    eps_norm_sq: f64,
) -> f64 {
    phi * alpha * beta * lam_f.1 / (4.0 * eta * lam_f.0) * eps_norm_sq
}

/// `theta = (lamF_max / lamF_min) |(x0 - x_bar, v0 - v_bar)| + steady-state bound`.
pub fn theta(init_distance: f64, lam_f: (f64, f64), steady_state: f64) -> f64 {
    lam_f.1 / lam_f.0 * init_distance + steady_state
}

/// Per-agent lower bounds on inter-event times of the distributed scheme.
pub fn tau_i_lower_bounds(
    alpha: f64,
    beta: f64,
    eps: &[f64],
    big_m: &[f64],
    d_out: &[f64],
    theta: f64,
) -> Result<Vec<f64>, CertError> {
    if eps.len() != big_m.len() || eps.len() != d_out.len() {
        return Err(CertError::InvalidInput("per-agent vectors differ in length".into()));
    }
    eps.iter()
        .zip(big_m)
        .zip(d_out)
        .enumerate()
        .map(|(i, ((&e, &m), &dd))| {
            if !(e > 0.0) {
                return Err(CertError::InvalidInput(format!(
                    "epsilon for agent {} must be positive",
                    i + 1
                )));
            }
            if !(m > 0.0) {
                return Err(CertError::InvalidInput(format!(
                    "agent {} needs a positive gradient-Lipschitz constant",
                    i + 1
                )));
            }
            let am = alpha * m;
            let denom = 2.0 * dd.sqrt() * (am + 2.0 * beta * dd + 1.0) * theta;
            Ok((am * e / denom).ln_1p() / am)
        })
        .collect()
}

/// Inputs for [`certify`].
#[derive(Debug, Clone)]
pub struct CertifyInput {
    /// Realization set; a single graph for fixed topologies.
    pub graphs: Vec<WeightedDigraph>,
    pub costs: NetworkCost,
    pub params: AlgorithmParams,
    /// Design `phi` for the gamma conditions; defaults to `4 M_upper + 1`.
    pub phi: Option<f64>,
    /// Analysis scalars of the periodic and centralized bounds.
    pub epsilon: f64,
    pub delta: f64,
    /// Trigger thresholds of the distributed scheme.
    pub eps_agents: Option<Vec<f64>>,
    /// Initial condition for `theta`; defaults to zero `v`.
    pub x0: Option<DMatrix<f64>>,
    pub v0: Option<DMatrix<f64>>,
    pub estimation_box: Option<Interval>,
}

impl CertifyInput {
    pub fn new(graph: WeightedDigraph, costs: NetworkCost, params: AlgorithmParams) -> Self {
        CertifyInput {
            graphs: vec![graph],
            costs,
            params,
            phi: None,
            epsilon: DEFAULT_EPSILON,
            delta: DEFAULT_DELTA,
            eps_agents: None,
            x0: None,
            v0: None,
            estimation_box: None,
        }
    }
}

pub const DEFAULT_EPSILON: f64 = 0.5;
pub const DEFAULT_DELTA: f64 = 1.0;

/// Which guarantees apply to the configuration.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct Feasibility {
    /// Balanced strongly connected digraph, `phi` condition and `gamma > 0`.
    pub digraph_continuous: bool,
    /// Connected undirected graph, any `alpha, beta`.
    pub undirected_continuous: bool,
    pub periodic: bool,
    pub centralized_event: bool,
    pub distributed_event: bool,
}

#[allow(non_snake_case)]
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CertificateReport {
    pub alpha: f64,
    pub beta: f64,
    pub n: usize,
    pub d: usize,
    pub m_lower: f64,
    #[serde(rename = "M_upper")]
    pub big_m_upper: f64,
    pub m_i: Vec<f64>,
    #[serde(rename = "M_i")]
    pub big_m_i: Vec<f64>,
    pub constants_estimated: bool,
    pub undirected: bool,
    pub lambda_hat_2: f64,
    pub lambda_2: f64,
    #[serde(rename = "lambda_N")]
    pub lambda_n: f64,
    pub re_lambda_2: f64,
    pub x_star: Vec<f64>,

    pub phi: f64,
    pub phi_condition: bool,
    pub gamma: f64,
    pub gamma_prime: f64,
    pub suggested_beta: f64,
    pub suggested_beta_prime: f64,
    pub lamF_min: f64,
    pub lamF_max: f64,
    pub rate_digraph: Option<f64>,
    pub rate_quadratic: Option<f64>,

    pub epsilon: f64,
    pub delta: f64,
    pub phi_delta: f64,
    pub zeta: f64,
    pub tau: f64,
    pub suggested_delta: f64,
    pub kappa: f64,
    pub lamE_max: Option<f64>,
    pub rate_periodic: Option<f64>,
    pub rate_centralized: Option<f64>,

    pub eps_agents: Option<Vec<f64>>,
    pub eta: f64,
    pub theta: Option<f64>,
    pub tau_i: Option<Vec<f64>>,
    pub steady_state_bound: Option<f64>,
    pub rate_distributed: Option<f64>,

    pub feasible: Feasibility,
    /// Schemes whose bound is evaluated on a digraph outside its proven
    /// setting.
    pub empirical_only: Vec<String>,
    pub notes: Vec<String>,
}

/// Worst-case spectral quantities over a realization set.
fn combined_spectrum(graphs: &[WeightedDigraph]) -> Result<GraphSpectrum, CertError> {
    let mut specs = graphs.iter().map(spectral_summary);
    let mut acc = specs
        .next()
        .ok_or_else(|| CertError::InvalidInput("no graph given".into()))?;
    for s in specs {
        acc.lambda_hat_2 = acc.lambda_hat_2.min(s.lambda_hat_2);
        acc.re_lambda_2 = acc.re_lambda_2.min(s.re_lambda_2);
        acc.lambda_n = acc.lambda_n.max(s.lambda_n);
        acc.l_norm = acc.l_norm.max(s.l_norm);
        acc.undirected &= s.undirected;
        acc.weight_balanced &= s.weight_balanced;
        acc.strongly_connected &= s.strongly_connected;
    }
    Ok(acc)
}

/// Every constant for the configuration, with verdicts. Needs the global
/// optimizer, so this is an offline computation.
pub fn certify(input: &CertifyInput) -> Result<CertificateReport, CertError> {
    let nc = &input.costs;
    let (n, d) = (nc.n(), nc.dim());
    let AlgorithmParams { alpha, beta } = input.params;
    if !(input.epsilon > 0.0 && input.epsilon < 1.0) {
        return Err(CertError::InvalidInput(format!(
            "epsilon must lie in (0, 1), got {}",
            input.epsilon
        )));
    }
    if !(input.delta > 0.0) {
        return Err(CertError::InvalidInput(format!(
            "delta must be positive, got {}",
            input.delta
        )));
    }
    if let Some(eps) = &input.eps_agents {
        if eps.len() != n || eps.iter().any(|e| !(*e > 0.0)) {
            return Err(CertError::InvalidInput(
                "every agent needs a positive trigger epsilon".into(),
            ));
        }
    }
    let spec = combined_spectrum(&input.graphs)?;
    if input.graphs.iter().any(|g| g.n() != n) {
        return Err(CertError::InvalidInput("graph size differs from cost count".into()));
    }
    spec.require_certified()?;

    let agents = nc.agent_constants(input.estimation_box)?;
    let bounds = ConvexityBounds::from_agents(&agents)?;
    let x_star = minimize_global(nc, 1e-12)?;
    let mut notes = Vec::new();
    let mut empirical_only = Vec::new();
    let estimated = agents.iter().any(|a| a.estimated);
    if estimated {
        notes.push(format!(
            "constants for some agents are sampled over {:?}",
            input.estimation_box.unwrap_or(crate::costs::DEFAULT_BOX)
        ));
    }

    // Continuous-time digraph condition.
    let phi = input.phi.unwrap_or(4.0 * bounds.big_m_upper + 1.0);
    let lh2 = spec.lambda_hat_2;
    let phi_ok = phi_condition(phi, bounds);
    let g = gamma(alpha, beta, phi, bounds, lh2);
    let gp = gamma_prime(alpha, beta, phi, bounds, lh2);
    let lam_f = matrix_f_extremes(alpha, phi, n, d);
    let digraph_ok = phi_ok && g > 0.0;
    let rate_dg = if digraph_ok {
        Some(rate_digraph(g, lam_f.1)?)
    } else {
        None
    };
    let quadratic = nc
        .agents()
        .iter()
        .all(|c| matches!(c, crate::costs::CostModel::Quadratic { .. }));
    let rate_q = quadratic.then(|| rate_quadratic(alpha, beta, spec.re_lambda_2));

    // Undirected spectrum; on digraphs the bounds use |L| in place of the
    // largest eigenvalue.
    let undirected = spec.undirected;
    let (l2, ln) = if undirected {
        (spec.lambda_hat_2, spec.lambda_n)
    } else {
        (spec.lambda_hat_2, spec.l_norm)
    };
    let pb = tau_period(alpha, beta, input.epsilon, input.delta, bounds, l2, ln)?;
    let k = if pb.phi > 0.0 {
        kappa(alpha, beta, input.epsilon, input.delta, pb.phi, l2, ln)
    } else {
        f64::NAN
    };
    if !undirected {
        empirical_only.extend(["periodic", "centralized_event", "distributed_event"].map(String::from));
    }
    let lam_e = if undirected && input.graphs.len() == 1 && pb.phi > 0.0 {
        Some(matrix_e_extreme(alpha, beta, pb.phi, &input.graphs[0])?)
    } else {
        None
    };
    let rate_p = lam_e.map(|l| rate_periodic(input.epsilon, input.delta, l));
    let rate_c = lam_e.map(|l| rate_centralized(alpha, beta, input.epsilon, input.delta, pb.phi, l2, l));

    // Distributed triggers.
    let et = eta(gp);
    let distributed_ok_params = phi_ok && gp > 0.0;
    let (mut theta_v, mut tau_i, mut steady, mut rate_dist) = (None, None, None, None);
    if let Some(eps) = &input.eps_agents {
        if distributed_ok_params {
            let (x_bar, v_bar) = equilibrium_at(nc, input.params, &x_star);
            let x0 = input.x0.clone().unwrap_or_else(|| x_bar.clone());
            let v0 = input.v0.clone().unwrap_or_else(|| DMatrix::zeros(n, d));
            if x0.shape() != (n, d) || v0.shape() != (n, d) {
                return Err(CertError::InvalidInput("initial state has the wrong shape".into()));
            }
            let dist = ((&x0 - &x_bar).norm_squared() + (&v0 - &v_bar).norm_squared()).sqrt();
            let eps_sq = DVector::from_column_slice(eps).norm_squared();
            let ss = steady_state_bound(alpha, beta, phi, et, lam_f, eps_sq);
            let th = theta(dist, lam_f, ss);
            let big_m: Vec<f64> = agents.iter().map(|a| a.big_m).collect();
            let d_out: Vec<f64> = (0..n)
                .map(|i| {
                    input
                        .graphs
                        .iter()
                        .map(|g| g.out_degree(i))
                        .fold(0.0, f64::max)
                })
                .collect();
            tau_i = Some(tau_i_lower_bounds(alpha, beta, eps, &big_m, &d_out, th)?);
            theta_v = Some(th);
            steady = Some(ss);
            rate_dist = Some(et / lam_f.1);
        } else {
            notes.push("distributed bounds need phi + 1 > 4 M_upper and gamma_prime > 0".into());
        }
    }

    let connected_undirected = undirected && spec.lambda_hat_2 > 0.0;
    let feasible = Feasibility {
        digraph_continuous: digraph_ok,
        undirected_continuous: connected_undirected,
        periodic: connected_undirected && pb.feasible,
        centralized_event: connected_undirected && pb.feasible && k < 1.0,
        distributed_event: connected_undirected
            && distributed_ok_params
            && tau_i.as_ref().is_some_and(|t| t.iter().all(|&v| v > 0.0)),
    };
    if pb.phi <= 0.0 {
        notes.push(format!(
            "phi from delta = {} is not positive; increase delta",
            input.delta
        ));
    }
    if !digraph_ok {
        notes.push(format!(
            "gamma condition fails; beta > {:.6} with phi = {phi} satisfies it",
            suggest_beta(alpha, phi, lh2)
        ));
    }

    Ok(CertificateReport {
        alpha,
        beta,
        n,
        d,
        m_lower: bounds.m_lower,
        big_m_upper: bounds.big_m_upper,
        m_i: agents.iter().map(|a| a.m).collect(),
        big_m_i: agents.iter().map(|a| a.big_m).collect(),
        constants_estimated: estimated,
        undirected,
        lambda_hat_2: spec.lambda_hat_2,
        lambda_2: l2,
        lambda_n: ln,
        re_lambda_2: spec.re_lambda_2,
        x_star,
        phi,
        phi_condition: phi_ok,
        gamma: g,
        gamma_prime: gp,
        suggested_beta: suggest_beta(alpha, phi, lh2),
        suggested_beta_prime: suggest_beta_prime(alpha, phi, lh2),
        lamF_min: lam_f.0,
        lamF_max: lam_f.1,
        rate_digraph: rate_dg,
        rate_quadratic: rate_q,
        epsilon: input.epsilon,
        delta: input.delta,
        phi_delta: pb.phi,
        zeta: pb.zeta,
        tau: pb.tau,
        suggested_delta: 0.9 * pb.tau,
        kappa: k,
        lamE_max: lam_e,
        rate_periodic: rate_p,
        rate_centralized: rate_c,
        eps_agents: input.eps_agents.clone(),
        eta: et,
        theta: theta_v,
        tau_i,
        steady_state_bound: steady,
        rate_distributed: rate_dist,
        feasible,
        empirical_only,
        notes,
    })
}

/// Best `(epsilon, delta, tau)` on a grid.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GridOptimum {
    pub epsilon: f64,
    pub delta: f64,
    pub phi: f64,
    pub tau: f64,
}

/// Maximizes the period bound over `epsilon in (0,1)` and a log-spaced
/// `delta` grid.
pub fn best_period(
    alpha: f64,
    beta: f64,
    b: ConvexityBounds,
    lambda_2: f64,
    lambda_n: f64,
    exec: Execution,
) -> Option<GridOptimum> {
    let eps_grid: Vec<f64> = (1..40).map(|k| k as f64 / 40.0).collect();
    let delta_grid: Vec<f64> = (0..=60).map(|k| 10f64.powf(-3.0 + k as f64 * 0.1)).collect();
    let cells: Vec<(f64, f64)> = eps_grid
        .iter()
        .flat_map(|&e| delta_grid.iter().map(move |&dl| (e, dl)))
        .collect();
    exec.map(&cells, |&(e, dl)| {
        tau_period(alpha, beta, e, dl, b, lambda_2, lambda_n)
            .ok()
            .filter(|p| p.feasible)
            .map(|p| GridOptimum {
                epsilon: e,
                delta: dl,
                phi: p.phi,
                tau: p.tau,
            })
    })
    .into_iter()
    .flatten()
    .fold(None, |best: Option<GridOptimum>, c| match best {
        Some(b) if b.tau >= c.tau => Some(b),
        _ => Some(c),
    })
}
