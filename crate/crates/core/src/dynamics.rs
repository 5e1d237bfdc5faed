//! Network state, the algorithm's vector fields and the fixed-step
//! integration loop with communication and topology switching.

use nalgebra::DMatrix;
use serde::Serialize;
use thiserror::Error;

use crate::costs::{minimize_global, CostError, NetworkCost};
use crate::graph::{spectral_summary, GraphError, WeightedDigraph};
use crate::schedulers::{CommScheme, Scheduler, SchedulerError};

/// Any state entry above this magnitude counts as divergence.
pub const BLOWUP_LIMIT: f64 = 1e12;

/// Tolerance on `|sum_i v^i(0)|`.
pub const INIT_SUM_TOL: f64 = 1e-9;

#[derive(Debug, Error)]
pub enum SimError {
    #[error("initial v must sum to zero, |sum| = {sum:e}")]
    BadInitialization { sum: f64 },
    #[error("state diverged at t = {t}")]
    NumericalBlowup { t: f64, trace: Box<Trace> },
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    Cost(#[from] CostError),
    #[error(transparent)]
    Scheduler(#[from] SchedulerError),
}

/// Step-level failure; the loop attaches the partial trace.
#[derive(Debug, Error, Clone, Copy, PartialEq)]
#[error("non-finite or exploding state at t = {t}")]
pub struct NumericalBlowup {
    pub t: f64,
}

/// Step sizes `alpha` and `beta`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, serde::Deserialize)]
pub struct AlgorithmParams {
    pub alpha: f64,
    pub beta: f64,
}

impl AlgorithmParams {
    pub fn new(alpha: f64, beta: f64) -> Result<Self, SimError> {
        if !(alpha > 0.0 && alpha.is_finite()) {
            return Err(SimError::InvalidConfig(format!("alpha must be positive, got {alpha}")));
        }
        if !(beta > 0.0 && beta.is_finite()) {
            return Err(SimError::InvalidConfig(format!("beta must be positive, got {beta}")));
        }
        Ok(AlgorithmParams { alpha, beta })
    }
}

/// Estimates `x`, integral states `v`, last broadcasts `x_hat`; one agent per row.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkState {
    pub t: f64,
    pub x: DMatrix<f64>,
    pub v: DMatrix<f64>,
    pub x_hat: DMatrix<f64>,
    pub last_event: Vec<f64>,
}

impl NetworkState {
    /// State at t = 0 right after the initial broadcast.
    pub fn new(x: DMatrix<f64>, v: DMatrix<f64>) -> Self {
        let n = x.nrows();
        NetworkState {
            t: 0.0,
            x_hat: x.clone(),
            x,
            v,
            last_event: vec![0.0; n],
        }
    }

    pub fn n(&self) -> usize {
        self.x.nrows()
    }

    pub fn dim(&self) -> usize {
        self.x.ncols()
    }

    /// Agent `i` broadcasts its current estimate.
    pub fn broadcast(&mut self, i: usize) {
        for k in 0..self.x.ncols() {
            self.x_hat[(i, k)] = self.x[(i, k)];
        }
        self.last_event[i] = self.t;
    }

    /// Column sums of `v`.
    pub fn v_sum(&self) -> Vec<f64> {
        self.v.column_iter().map(|c| c.sum()).collect()
    }

    fn is_sane(&self) -> bool {
        self.x
            .iter()
            .chain(self.v.iter())
            .all(|v| v.is_finite() && v.abs() <= BLOWUP_LIMIT)
    }
}

/// `(dx, dv)` as N x d matrices.
pub type Field = (DMatrix<f64>, DMatrix<f64>);

fn standard_rhs(
    x: &DMatrix<f64>,
    v: &DMatrix<f64>,
    lap_term: &DMatrix<f64>,
    nc: &NetworkCost,
    p: AlgorithmParams,
) -> Field {
    let grad = nc.separable_gradient(x);
    let dv = lap_term * (p.alpha * p.beta);
    let dx = -(grad * p.alpha) - lap_term * p.beta - v;
    (dx, dv)
}

/// Continuous communication: disagreement terms use the current `x`.
pub fn continuous_field(
    state: &NetworkState,
    g: &WeightedDigraph,
    nc: &NetworkCost,
    p: AlgorithmParams,
) -> Field {
    let lx = g.laplacian() * &state.x;
    standard_rhs(&state.x, &state.v, &lx, nc, p)
}

/// Discrete communication: disagreement terms use the broadcasts `x_hat`.
pub fn sampled_field(
    state: &NetworkState,
    g: &WeightedDigraph,
    nc: &NetworkCost,
    p: AlgorithmParams,
) -> Field {
    let lx = g.laplacian() * &state.x_hat;
    standard_rhs(&state.x, &state.v, &lx, nc, p)
}

/// The parameter-free variant `v' = L x`, `x' = -grad f(x) - v`.
pub fn simplified_field(state: &NetworkState, g: &WeightedDigraph, nc: &NetworkCost) -> Field {
    let lx = g.laplacian() * &state.x;
    let dx = -nc.separable_gradient(&state.x) - &state.v;
    (dx, lx)
}

/// One classical Runge-Kutta step of `field(x, v)`. `x_hat` is left alone.
pub fn rk4_step<F>(field: F, state: &NetworkState, h: f64) -> Result<NetworkState, NumericalBlowup>
where
    F: Fn(&DMatrix<f64>, &DMatrix<f64>) -> Field,
{
    let (x, v) = (&state.x, &state.v);
    let (k1x, k1v) = field(x, v);
    let (k2x, k2v) = field(&(x + &k1x * (0.5 * h)), &(v + &k1v * (0.5 * h)));
    let (k3x, k3v) = field(&(x + &k2x * (0.5 * h)), &(v + &k2v * (0.5 * h)));
    let (k4x, k4v) = field(&(x + &k3x * h), &(v + &k3v * h));
    let mut next = state.clone();
    next.x = x + (k1x + (k2x + k3x) * 2.0 + k4x) * (h / 6.0);
    next.v = v + (k1v + (k2v + k3v) * 2.0 + k4v) * (h / 6.0);
    next.t = state.t + h;
    if next.is_sane() {
        Ok(next)
    } else {
        Err(NumericalBlowup { t: next.t })
    }
}

/// One forward-Euler step.
pub fn euler_step<F>(field: F, state: &NetworkState, h: f64) -> Result<NetworkState, NumericalBlowup>
where
    F: Fn(&DMatrix<f64>, &DMatrix<f64>) -> Field,
{
    let (dx, dv) = field(&state.x, &state.v);
    let mut next = state.clone();
    next.x += dx * h;
    next.v += dv * h;
    next.t = state.t + h;
    if next.is_sane() {
        Ok(next)
    } else {
        Err(NumericalBlowup { t: next.t })
    }
}

/// The fixed point `x_bar = 1 (x)* x*`, `v_bar^i = -alpha grad f^i(x*)`.
pub fn equilibrium(
    nc: &NetworkCost,
    p: AlgorithmParams,
) -> Result<(DMatrix<f64>, DMatrix<f64>), CostError> {
    let x_star = minimize_global(nc, 1e-12)?;
    Ok(equilibrium_at(nc, p, &x_star))
}

pub fn equilibrium_at(
    nc: &NetworkCost,
    p: AlgorithmParams,
    x_star: &[f64],
) -> (DMatrix<f64>, DMatrix<f64>) {
    let (n, d) = (nc.n(), nc.dim());
    let x_bar = DMatrix::from_fn(n, d, |_, k| x_star[k]);
    let v_bar = nc.separable_gradient(&x_bar) * (-p.alpha);
    (x_bar, v_bar)
}

/// The state matrix of the algorithm for unit-Hessian quadratic costs,
/// acting on `[x; v]` stacked agent-major:
/// `[[-alpha I - beta L(x)I, -I], [alpha beta L(x)I, 0]]`.
pub fn quadratic_system_matrix(g: &WeightedDigraph, p: AlgorithmParams, d: usize) -> DMatrix<f64> {
    let n = g.n();
    let nd = n * d;
    let lk = g.laplacian().kronecker(&DMatrix::<f64>::identity(d, d));
    let mut a = DMatrix::zeros(2 * nd, 2 * nd);
    let top_left = -DMatrix::<f64>::identity(nd, nd) * p.alpha - &lk * p.beta;
    a.view_mut((0, 0), (nd, nd)).copy_from(&top_left);
    a.view_mut((0, nd), (nd, nd))
        .copy_from(&(-DMatrix::<f64>::identity(nd, nd)));
    a.view_mut((nd, 0), (nd, nd))
        .copy_from(&(&lk * (p.alpha * p.beta)));
    a
}

/// The realization set of a piecewise-constant topology.
#[derive(Debug, Clone)]
pub struct SwitchingSchedule {
    graphs: Vec<WeightedDigraph>,
    dwell: f64,
    order: Vec<usize>,
}

impl SwitchingSchedule {
    pub fn fixed(g: WeightedDigraph) -> Result<Self, GraphError> {
        Self::new(vec![g], f64::INFINITY, vec![0])
    }

    /// Every graph must be strongly connected and weight-balanced, on the
    /// same node count.
    pub fn new(
        graphs: Vec<WeightedDigraph>,
        dwell: f64,
        order: Vec<usize>,
    ) -> Result<Self, GraphError> {
        let n = graphs.first().ok_or(GraphError::TooSmall { n: 0, min: 1 })?.n();
        for g in &graphs {
            if g.n() != n {
                return Err(GraphError::InvalidEdge {
                    receiver: g.n(),
                    sender: n,
                    n,
                });
            }
            if !g.is_weight_balanced(crate::graph::BALANCE_TOL) {
                return Err(GraphError::NotWeightBalanced);
            }
            if !g.is_strongly_connected() {
                return Err(GraphError::NotConnected);
            }
        }
        let order = if order.is_empty() {
            (0..graphs.len()).collect()
        } else {
            order
        };
        if let Some(&bad) = order.iter().find(|&&i| i >= graphs.len()) {
            return Err(GraphError::UnknownPreset(format!("schedule index {bad}")));
        }
        Ok(SwitchingSchedule {
            graphs,
            dwell,
            order,
        })
    }

    /// Cycle through all graphs in listed order.
    pub fn cycling(graphs: Vec<WeightedDigraph>, dwell: f64) -> Result<Self, GraphError> {
        Self::new(graphs, dwell, Vec::new())
    }

    pub fn n(&self) -> usize {
        self.graphs[0].n()
    }

    pub fn graphs(&self) -> &[WeightedDigraph] {
        &self.graphs
    }

    pub fn dwell(&self) -> f64 {
        self.dwell
    }

    pub fn order(&self) -> &[usize] {
        &self.order
    }

    pub fn is_switching(&self) -> bool {
        self.order.len() > 1 && self.dwell.is_finite()
    }

    /// Smallest algebraic connectivity over the realization set.
    pub fn lambda_hat_2_min(&self) -> f64 {
        self.graphs
            .iter()
            .map(|g| spectral_summary(g).lambda_hat_2)
            .fold(f64::INFINITY, f64::min)
    }

    /// Index into `graphs` active during step `k`, given the dwell in steps.
    fn active(&self, k: usize, dwell_steps: usize) -> usize {
        if !self.is_switching() {
            return self.order[0];
        }
        self.order[(k / dwell_steps) % self.order.len()]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, serde::Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Integrator {
    #[default]
    Rk4,
    Euler,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, serde::Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum DynamicsKind {
    /// The alpha/beta algorithm.
    #[default]
    Standard,
    /// `v' = L x`, `x' = -grad f - v`.
    Simplified,
}

/// Everything a single run needs.
#[derive(Debug, Clone)]
pub struct SimConfig {
    pub schedule: SwitchingSchedule,
    pub costs: NetworkCost,
    pub params: AlgorithmParams,
    pub scheme: CommScheme,
    pub dynamics: DynamicsKind,
    pub integrator: Integrator,
    pub t_final: f64,
    pub h: f64,
    pub stride: usize,
    pub x0: DMatrix<f64>,
    pub v0: DMatrix<f64>,
    /// Reference optimizer for error columns; solved when absent.
    pub x_star: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub t: f64,
    pub x: DMatrix<f64>,
    pub v: DMatrix<f64>,
    pub x_hat: DMatrix<f64>,
    /// Index of the active graph in the schedule.
    pub graph: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EventRecord {
    pub agent: usize,
    pub t: f64,
}

/// Sampled trajectory plus broadcast log.
#[derive(Debug, Clone, PartialEq)]
pub struct Trace {
    pub n: usize,
    pub d: usize,
    pub h: f64,
    pub stride: usize,
    pub scheme: String,
    pub x_star: Vec<f64>,
    pub samples: Vec<Sample>,
    pub events: Vec<EventRecord>,
}

impl Trace {
    pub fn times(&self) -> Vec<f64> {
        self.samples.iter().map(|s| s.t).collect()
    }

    /// Time of the last recorded sample.
    pub fn t_end(&self) -> f64 {
        self.samples.last().map_or(0.0, |s| s.t)
    }

    /// `|x^i - x*|` for every agent at sample `s`.
    pub fn errors(&self, s: &Sample) -> Vec<f64> {
        (0..self.n)
            .map(|i| {
                (0..self.d)
                    .map(|k| (s.x[(i, k)] - self.x_star[k]).powi(2))
                    .sum::<f64>()
                    .sqrt()
            })
            .collect()
    }

    pub fn final_errors(&self) -> Vec<f64> {
        self.samples.last().map(|s| self.errors(s)).unwrap_or_default()
    }

    pub fn max_final_error(&self) -> f64 {
        self.final_errors().into_iter().fold(0.0, f64::max)
    }

    /// `max_t |sum_i v^i(t)|` over samples.
    pub fn max_v_sum(&self) -> f64 {
        self.samples
            .iter()
            .map(|s| {
                s.v.column_iter()
                    .map(|c| c.sum().powi(2))
                    .sum::<f64>()
                    .sqrt()
            })
            .fold(0.0, f64::max)
    }

    /// Event times of one agent.
    pub fn agent_events(&self, agent: usize) -> Vec<f64> {
        self.events
            .iter()
            .filter(|e| e.agent == agent)
            .map(|e| e.t)
            .collect()
    }
}

fn validate(cfg: &SimConfig) -> Result<(usize, usize), SimError> {
    let (n, d) = (cfg.costs.n(), cfg.costs.dim());
    let bad = |m: String| Err(SimError::InvalidConfig(m));
    if cfg.schedule.n() != n {
        return bad(format!("graph has {} nodes but there are {n} costs", cfg.schedule.n()));
    }
    if cfg.x0.shape() != (n, d) || cfg.v0.shape() != (n, d) {
        return bad(format!("initial state must be {n} x {d}"));
    }
    if !(cfg.h > 0.0 && cfg.h.is_finite()) {
        return bad(format!("step h must be positive, got {}", cfg.h));
    }
    if !(cfg.t_final > 0.0 && cfg.t_final.is_finite()) {
        return bad(format!("t_final must be positive, got {}", cfg.t_final));
    }
    if cfg.stride == 0 {
        return bad("stride must be at least 1".into());
    }
    AlgorithmParams::new(cfg.params.alpha, cfg.params.beta)?;
    cfg.scheme.validate(Some(n))?;
    if let CommScheme::Periodic { delta } = cfg.scheme {
        if cfg.h > delta / 10.0 * (1.0 + 1e-12) {
            return bad(format!("periodic delta {delta} needs h <= delta/10, got h = {}", cfg.h));
        }
    }
    if cfg.integrator == Integrator::Euler && cfg.scheme != CommScheme::Continuous {
        return bad("the Euler integrator communicates every step; use the continuous scheme".into());
    }
    let sum = cfg
        .v0
        .column_iter()
        .map(|c| c.sum().powi(2))
        .sum::<f64>()
        .sqrt();
    if sum > INIT_SUM_TOL {
        return Err(SimError::BadInitialization { sum });
    }
    let dwell_steps = if cfg.schedule.is_switching() {
        let ratio = cfg.schedule.dwell() / cfg.h;
        let steps = ratio.round();
        if steps < 1.0 || (ratio - steps).abs() > 1e-6 * ratio.max(1.0) {
            return bad(format!(
                "dwell {} must be a multiple of h = {}",
                cfg.schedule.dwell(),
                cfg.h
            ));
        }
        steps as usize
    } else {
        usize::MAX
    };
    let steps = (cfg.t_final / cfg.h - 1e-9).ceil() as usize;
    Ok((steps, dwell_steps))
}

/// Integrates the configured scheme on the grid `t_k = k h`. At each node the
/// active graph is selected, the scheduler applies broadcasts, the state is
/// recorded every `stride` nodes (and at the final node), then one step is
/// taken with the graph held fixed.
pub fn simulate(cfg: &SimConfig) -> Result<Trace, SimError> {
    let (steps, dwell_steps) = validate(cfg)?;
    let x_star = match &cfg.x_star {
        Some(x) => x.clone(),
        None => minimize_global(&cfg.costs, 1e-12)?,
    };
    let (n, d) = (cfg.costs.n(), cfg.costs.dim());
    let mut trace = Trace {
        n,
        d,
        h: cfg.h,
        stride: cfg.stride,
        scheme: match cfg.integrator {
            Integrator::Euler => "euler".to_string(),
            Integrator::Rk4 => cfg.scheme.label().to_string(),
        },
        x_star,
        samples: Vec::with_capacity(steps / cfg.stride + 2),
        events: Vec::new(),
    };
    let mut state = NetworkState::new(cfg.x0.clone(), cfg.v0.clone());
    let sampled = cfg.scheme.is_sampled();
    if sampled {
        trace
            .events
            .extend((0..n).map(|agent| EventRecord { agent, t: 0.0 }));
    }
    let mut scheduler = Scheduler::new(cfg.scheme.clone(), cfg.h);
    let p = cfg.params;
    let nc = &cfg.costs;

    for k in 0..=steps {
        state.t = k as f64 * cfg.h;
        let gi = cfg.schedule.active(k, dwell_steps);
        let g = &cfg.schedule.graphs()[gi];
        if k > 0 {
            for agent in scheduler.poll(&mut state, g)? {
                trace.events.push(EventRecord { agent, t: state.t });
            }
        }
        if k % cfg.stride == 0 || k == steps {
            trace.samples.push(Sample {
                t: state.t,
                x: state.x.clone(),
                v: state.v.clone(),
                x_hat: state.x_hat.clone(),
                graph: gi,
            });
        }
        if k == steps {
            break;
        }
        let lap = g.laplacian();
        let result = match (cfg.dynamics, sampled) {
            (DynamicsKind::Standard, false) => {
                let f = |x: &DMatrix<f64>, v: &DMatrix<f64>| {
                    standard_rhs(x, v, &(lap * x), nc, p)
                };
                step(cfg.integrator, f, &state, cfg.h)
            }
            (DynamicsKind::Standard, true) => {
                let lx_hat = lap * &state.x_hat;
                let f = |x: &DMatrix<f64>, v: &DMatrix<f64>| standard_rhs(x, v, &lx_hat, nc, p);
                step(cfg.integrator, f, &state, cfg.h)
            }
            (DynamicsKind::Simplified, false) => {
                let f = |x: &DMatrix<f64>, v: &DMatrix<f64>| {
                    (-nc.separable_gradient(x) - v, lap * x)
                };
                step(cfg.integrator, f, &state, cfg.h)
            }
            (DynamicsKind::Simplified, true) => {
                let lx_hat = lap * &state.x_hat;
                let f = |x: &DMatrix<f64>, v: &DMatrix<f64>| {
                    (-nc.separable_gradient(x) - v, lx_hat.clone())
                };
                step(cfg.integrator, f, &state, cfg.h)
            }
        };
        match result {
            Ok(next) => state = next,
            Err(NumericalBlowup { t }) => {
                return Err(SimError::NumericalBlowup {
                    t,
                    trace: Box::new(trace),
                })
            }
        }
    }
    Ok(trace)
}

fn step<F>(integrator: Integrator, f: F, state: &NetworkState, h: f64) -> Result<NetworkState, NumericalBlowup>
where
    F: Fn(&DMatrix<f64>, &DMatrix<f64>) -> Field,
{
    match integrator {
        Integrator::Rk4 => rk4_step(f, state, h),
        Integrator::Euler => euler_step(f, state, h),
    }
}

/// Forward Euler on the continuous field with step `cfg.h`; communication is
/// implicit at every step.
pub fn euler_simulate(cfg: &SimConfig) -> Result<Trace, SimError> {
    let mut cfg = cfg.clone();
    cfg.integrator = Integrator::Euler;
    cfg.scheme = CommScheme::Continuous;
    simulate(&cfg)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::costs::CostModel;
    use crate::graph::{self, build_digraph};
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn pair() -> (WeightedDigraph, NetworkCost) {
        (
            graph::complete(2).unwrap(),
            NetworkCost::new(vec![CostModel::squared(4.0), CostModel::squared(-2.0)]).unwrap(),
        )
    }

    fn col(v: &[f64]) -> DMatrix<f64> {
        DMatrix::from_column_slice(v.len(), 1, v)
    }

    fn unit() -> AlgorithmParams {
        AlgorithmParams::new(1.0, 1.0).unwrap()
    }

    fn base_config(g: WeightedDigraph, nc: NetworkCost, x0: &[f64]) -> SimConfig {
        let n = nc.n();
        SimConfig {
            schedule: SwitchingSchedule::fixed(g).unwrap(),
            costs: nc,
            params: unit(),
            scheme: CommScheme::Continuous,
            dynamics: DynamicsKind::Standard,
            integrator: Integrator::Rk4,
            t_final: 1.0,
            h: 1e-3,
            stride: 10,
            x0: col(x0),
            v0: DMatrix::zeros(n, 1),
            x_star: None,
        }
    }

    #[test]
    fn params_must_be_positive() {
        assert!(AlgorithmParams::new(0.0, 1.0).is_err());
        assert!(AlgorithmParams::new(1.0, -1.0).is_err());
    }

    #[test]
    fn pair_fields() {
        let (g, nc) = pair();
        let s = NetworkState::new(col(&[0.0, 0.0]), col(&[0.0, 0.0]));
        let (dx, dv) = continuous_field(&s, &g, &nc, unit());
        assert_eq!(dx.as_slice(), &[8.0, -4.0]);
        assert_eq!(dv.as_slice(), &[0.0, 0.0]);

        let mut s2 = s.clone();
        s2.x_hat = col(&[1.0, 1.0]);
        let (dx, dv) = sampled_field(&s2, &g, &nc, unit());
        assert_eq!(dx.as_slice(), &[8.0, -4.0]);
        assert_eq!(dv.as_slice(), &[0.0, 0.0]);

        let (dx, dv) = simplified_field(&s, &g, &nc);
        assert_eq!(dx.as_slice(), &[8.0, -4.0]);
        assert_eq!(dv.as_slice(), &[0.0, 0.0]);

        let s3 = NetworkState::new(col(&[1.0, -1.0]), col(&[0.5, -0.5]));
        let (dx, dv) = simplified_field(&s3, &g, &nc);
        assert_eq!(dv.as_slice(), &[2.0, -2.0]);
        assert_eq!(dx.as_slice(), &[6.0 - 0.5, -2.0 + 0.5]);
    }

    #[test]
    fn sampled_equals_continuous_after_broadcast() {
        let (g, nc) = pair();
        let s = NetworkState::new(col(&[0.3, -1.7]), col(&[0.2, -0.2]));
        assert_eq!(
            continuous_field(&s, &g, &nc, unit()),
            sampled_field(&s, &g, &nc, unit())
        );
    }

    #[test]
    fn consensus_state_has_no_dv() {
        let (g, nc) = pair();
        let s = NetworkState::new(col(&[2.0, 2.0]), col(&[0.0, 0.0]));
        let (dx, dv) = continuous_field(&s, &g, &nc, AlgorithmParams::new(0.5, 3.0).unwrap());
        assert_eq!(dv.as_slice(), &[0.0, 0.0]);
        assert_eq!(dx.as_slice(), &[-0.5 * 2.0 * (2.0 - 4.0), -0.5 * 2.0 * 4.0]);
    }

    #[test]
    fn equilibrium_pair_and_fixed_point() {
        let (g, nc) = pair();
        let (xb, vb) = equilibrium(&nc, unit()).unwrap();
        assert_abs_diff_eq!(xb[(0, 0)], 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(xb[(1, 0)], 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(vb[(0, 0)], 6.0, epsilon = 1e-10);
        assert_abs_diff_eq!(vb[(1, 0)], -6.0, epsilon = 1e-10);
        let s = NetworkState::new(xb, vb);
        let (dx, dv) = continuous_field(&s, &g, &nc, unit());
        assert!(dx.norm() + dv.norm() <= 1e-10);
    }

    #[test]
    fn equilibrium_identical_costs_and_suite() {
        let nc = NetworkCost::new(vec![CostModel::squared(3.0); 4]).unwrap();
        let (_, vb) = equilibrium(&nc, unit()).unwrap();
        assert!(vb.amax() <= 1e-12);
        let suite = NetworkCost::catalog_suite();
        let (_, vb) = equilibrium(&suite, unit()).unwrap();
        assert!(vb.sum().abs() <= 1e-10);
    }

    #[test]
    fn rk4_scalar_exponential() {
        let s = NetworkState::new(col(&[1.0]), col(&[0.0]));
        let next = rk4_step(|x, v| (-x, v * 0.0), &s, 0.1).unwrap();
        assert_abs_diff_eq!(next.x[(0, 0)], (-0.1f64).exp(), epsilon = 1e-7);
        assert_abs_diff_eq!(next.t, 0.1);
        let still = rk4_step(|x, v| (x * 0.0, v * 0.0), &s, 0.1).unwrap();
        assert_eq!(still.x, s.x);
        assert_eq!(still.x_hat, s.x_hat);
    }

    #[test]
    fn rk4_matches_matrix_exponential() {
        let g = graph::preset("fig2").unwrap();
        let nc = NetworkCost::new(vec![
            CostModel::Quadratic {
                a: vec![0.0],
                b: 0.0
            };
            10
        ])
        .unwrap();
        let p = AlgorithmParams::new(1.0, 1.0).unwrap();
        let a = quadratic_system_matrix(&g, p, 1);
        let x0: Vec<f64> = (0..10).map(|i| (i as f64 - 4.5) * 0.7).collect();
        let s = NetworkState::new(col(&x0), DMatrix::zeros(10, 1));
        let mut s0 = nalgebra::DVector::zeros(20);
        s0.rows_mut(0, 10).copy_from_slice(&x0);
        for h in [0.1, 0.05, 0.01] {
            let exact = (&a * h).exp() * &s0;
            let next = rk4_step(|x, v| continuous_field(&NetworkState::new(x.clone(), v.clone()), &g, &nc, p), &s, h).unwrap();
            let mut got = nalgebra::DVector::zeros(20);
            got.rows_mut(0, 10).copy_from(&next.x.column(0));
            got.rows_mut(10, 10).copy_from(&next.v.column(0));
            assert!((got - exact).norm() <= 10.0 * h.powi(5) * s0.norm(), "h = {h}");
        }
    }

    #[test]
    fn rk4_blowup_detected() {
        let s = NetworkState::new(col(&[1e11]), col(&[0.0]));
        let r = rk4_step(|x, v| (x * 100.0, v * 0.0), &s, 0.1);
        assert!(r.is_err());
    }

    #[test]
    fn quadratic_spectrum_k2() {
        let g = graph::complete(2).unwrap();
        let p = AlgorithmParams::new(0.7, 1.3).unwrap();
        let a = quadratic_system_matrix(&g, p, 1);
        let mut ev: Vec<f64> = graph::general_eigenvalues(&a).unwrap().iter().map(|c| c.re).collect();
        ev.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let mut expected = vec![-0.7, -0.7, 0.0, -1.3 * 2.0];
        expected.sort_by(|a, b| a.partial_cmp(b).unwrap());
        for (e, x) in ev.iter().zip(&expected) {
            assert_abs_diff_eq!(e, x, epsilon = 1e-8);
        }
    }

    #[test]
    fn bad_initialization() {
        let (g, nc) = pair();
        let mut cfg = base_config(g, nc, &[0.0, 0.0]);
        cfg.v0 = col(&[1.0, -1.0]);
        assert!(simulate(&cfg).is_ok());
        cfg.v0 = col(&[1.0, 0.0]);
        assert!(matches!(simulate(&cfg), Err(SimError::BadInitialization { .. })));
    }

    #[test]
    fn periodic_requires_fine_step() {
        let (g, nc) = pair();
        let mut cfg = base_config(g, nc, &[0.0, 0.0]);
        cfg.scheme = CommScheme::Periodic { delta: 0.005 };
        assert!(matches!(simulate(&cfg), Err(SimError::InvalidConfig(_))));
    }

    #[test]
    fn continuous_pair_converges_and_conserves() {
        let (g, nc) = pair();
        let mut cfg = base_config(g, nc, &[-3.0, 5.0]);
        cfg.t_final = 40.0;
        let tr = simulate(&cfg).unwrap();
        assert!(tr.max_final_error() < 1e-6);
        assert!(tr.max_v_sum() <= 1e-9);
        assert!(tr.events.is_empty());
        let times = tr.times();
        assert!(times.windows(2).all(|w| w[1] > w[0]));
        assert_abs_diff_eq!(*times.last().unwrap(), 40.0, epsilon = 1e-9);
    }

    #[test]
    fn periodic_event_log() {
        let (g, nc) = pair();
        let mut cfg = base_config(g, nc, &[-3.0, 5.0]);
        cfg.t_final = 10.0;
        cfg.scheme = CommScheme::Periodic { delta: 0.5 };
        let tr = simulate(&cfg).unwrap();
        let ev = tr.agent_events(0);
        assert_eq!(ev.len(), 21);
        for (k, t) in ev.iter().enumerate() {
            assert_abs_diff_eq!(*t, 0.5 * k as f64, epsilon = 1e-9);
        }
        // x_hat refreshed exactly at broadcasts.
        let s = tr.samples.iter().find(|s| (s.t - 2.5).abs() < 1e-9).unwrap();
        assert_eq!(s.x_hat, s.x);
    }

    #[test]
    fn switching_requires_dwell_multiple() {
        let (_, nc) = pair();
        let k2 = graph::complete(2).unwrap();
        let heavy = build_digraph(2, &[(1, 2, 2.0), (2, 1, 2.0)]).unwrap();
        let schedule = SwitchingSchedule::cycling(vec![k2.clone(), heavy], 0.0105).unwrap();
        let mut cfg = base_config(k2, nc, &[0.0, 1.0]);
        cfg.schedule = schedule;
        assert!(matches!(simulate(&cfg), Err(SimError::InvalidConfig(_))));
        cfg.schedule = SwitchingSchedule::cycling(cfg.schedule.graphs().to_vec(), 0.25).unwrap();
        let tr = simulate(&cfg).unwrap();
        let used: Vec<usize> = tr.samples.iter().map(|s| s.graph).collect();
        assert_eq!(used[0], 0);
        assert_eq!(tr.samples.iter().find(|s| (s.t - 0.3).abs() < 1e-9).unwrap().graph, 1);
        assert_eq!(tr.samples.iter().find(|s| (s.t - 0.6).abs() < 1e-9).unwrap().graph, 0);
    }

    #[test]
    fn schedule_rejects_unbalanced() {
        let g = build_digraph(3, &[(1, 2, 1.0), (2, 3, 1.0), (3, 1, 1.0), (1, 3, 1.0)]).unwrap();
        assert!(SwitchingSchedule::fixed(g).is_err());
    }

    #[test]
    fn euler_fixed_point_and_blowup() {
        let nc = NetworkCost::new(vec![CostModel::squared(0.0); 2]).unwrap();
        let g = graph::complete(2).unwrap();
        let mut cfg = base_config(g.clone(), nc, &[0.0, 0.0]);
        cfg.h = 0.2;
        let tr = euler_simulate(&cfg).unwrap();
        assert!(tr.samples.iter().all(|s| s.x.amax() == 0.0 && s.v.amax() == 0.0));

        let stiff = NetworkCost::new(vec![CostModel::squared(0.0); 2]).unwrap();
        let mut cfg = base_config(g, stiff, &[1.0, -1.0]);
        cfg.h = 1.5;
        cfg.t_final = 300.0;
        match euler_simulate(&cfg) {
            Err(SimError::NumericalBlowup { trace, .. }) => assert!(!trace.samples.is_empty()),
            other => panic!("expected blowup, got {other:?}"),
        }
    }

    #[test]
    fn euler_error_is_first_order() {
        let (g, nc) = pair();
        let mut cfg = base_config(g, nc, &[-3.0, 5.0]);
        cfg.t_final = 1.0;
        cfg.stride = 1;
        cfg.h = 1e-3;
        let reference = simulate(&cfg).unwrap();
        let exact = reference.samples.last().unwrap().x.clone();
        let err = |h: f64| {
            let mut c = cfg.clone();
            c.h = h;
            let tr = euler_simulate(&c).unwrap();
            (&tr.samples.last().unwrap().x - &exact).norm()
        };
        let (e1, e2) = (err(0.01), err(0.005));
        let ratio = e1 / e2;
        assert!((1.8..2.2).contains(&ratio), "ratio {ratio}");
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]
        #[test]
        fn field_conserves_v_sum(xs in proptest::collection::vec(-5.0f64..5.0, 10),
                                 hats in proptest::collection::vec(-5.0f64..5.0, 10)) {
            let g = graph::preset("fig2").unwrap();
            let nc = NetworkCost::catalog_suite();
            let mut s = NetworkState::new(col(&xs), DMatrix::zeros(10, 1));
            s.x_hat = col(&hats);
            let (_, dv) = sampled_field(&s, &g, &nc, unit());
            prop_assert!(dv.sum().abs() <= 1e-12);
            let (_, dv) = continuous_field(&s, &g, &nc, unit());
            prop_assert!(dv.sum().abs() <= 1e-12);
        }
    }
}
