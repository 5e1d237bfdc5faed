//! Communication-time generation: periodic, centralized event-triggered with
//! a dwell time, and distributed event-triggered broadcasts.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dynamics::{NetworkState, Trace};
use crate::graph::WeightedDigraph;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SchedulerError {
    #[error("periodic delta must be positive, got {0}")]
    BadDelta(f64),
    #[error("kappa must lie in (0, 1), got {0}")]
    BadKappa(f64),
    #[error("dwell time tau must be positive, got {0}")]
    BadTau(f64),
    #[error("epsilon for agent {agent} must be positive, got {value}")]
    BadEpsilon { agent: usize, value: f64 },
    #[error("epsilon vector has {got} entries for {n} agents")]
    EpsilonLength { got: usize, n: usize },
    #[error("trigger cascade did not settle within {0} passes")]
    CascadeOverflow(usize),
}

/// How agents share their estimates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum CommScheme {
    Continuous,
    Periodic { delta: f64 },
    CentralizedEvent { kappa: f64, tau: f64 },
    DistributedEvent { eps: Vec<f64> },
}

impl CommScheme {
    pub fn periodic(delta: f64) -> Result<Self, SchedulerError> {
        let s = CommScheme::Periodic { delta };
        s.validate(None)?;
        Ok(s)
    }

    pub fn centralized(kappa: f64, tau: f64) -> Result<Self, SchedulerError> {
        let s = CommScheme::CentralizedEvent { kappa, tau };
        s.validate(None)?;
        Ok(s)
    }

    pub fn distributed(eps: Vec<f64>) -> Result<Self, SchedulerError> {
        let s = CommScheme::DistributedEvent { eps };
        s.validate(None)?;
        Ok(s)
    }

    /// Parameter checks; `n` additionally checks the epsilon length.
    pub fn validate(&self, n: Option<usize>) -> Result<(), SchedulerError> {
        match self {
            CommScheme::Continuous => Ok(()),
            CommScheme::Periodic { delta } => {
                if delta.is_finite() && *delta > 0.0 {
                    Ok(())
                } else {
                    Err(SchedulerError::BadDelta(*delta))
                }
            }
            CommScheme::CentralizedEvent { kappa, tau } => {
                if !(*kappa > 0.0 && *kappa < 1.0) {
                    return Err(SchedulerError::BadKappa(*kappa));
                }
                if !(tau.is_finite() && *tau > 0.0) {
                    return Err(SchedulerError::BadTau(*tau));
                }
                Ok(())
            }
            CommScheme::DistributedEvent { eps } => {
                if let Some(n) = n {
                    if eps.len() != n {
                        return Err(SchedulerError::EpsilonLength { got: eps.len(), n });
                    }
                }
                for (agent, &value) in eps.iter().enumerate() {
                    if !(value.is_finite() && value > 0.0) {
                        return Err(SchedulerError::BadEpsilon { agent, value });
                    }
                }
                Ok(())
            }
        }
    }

    /// Whether the dynamics use the broadcast copy `x_hat`.
    pub fn is_sampled(&self) -> bool {
        !matches!(self, CommScheme::Continuous)
    }

    pub fn label(&self) -> &'static str {
        match self {
            CommScheme::Continuous => "continuous",
            CommScheme::Periodic { .. } => "periodic",
            CommScheme::CentralizedEvent { .. } => "centralized_event",
            CommScheme::DistributedEvent { .. } => "distributed_event",
        }
    }
}

/// Grid-aligned periodic test: due once `t - last >= delta - h/2`.
pub fn periodic_due(t: f64, delta: f64, last: f64, h: f64) -> bool {
    t - last >= delta - 0.5 * h
}

/// `|Pi y|^2` for an N x d matrix, i.e. the squared norm after removing the
/// column means.
pub fn disagreement_sq(y: &DMatrix<f64>) -> f64 {
    let n = y.nrows() as f64;
    y.column_iter()
        .map(|c| {
            let mean = c.sum() / n;
            c.iter().map(|v| (v - mean).powi(2)).sum::<f64>()
        })
        .sum()
}

/// Centralized law: broadcast once the dwell has elapsed and
/// `|Pi(x(t_k) - x(t))|^2 > kappa |Pi x(t)|^2`.
pub fn centralized_trigger_check(
    state: &NetworkState,
    x_at_last: &DMatrix<f64>,
    kappa: f64,
    t_last: f64,
    tau: f64,
) -> bool {
    if state.t - t_last < tau {
        return false;
    }
    disagreement_sq(&(x_at_last - &state.x)) > kappa * disagreement_sq(&state.x)
}

/// The two sides of agent `i`'s distributed trigger:
/// `4 d_out |x_hat^i - x^i|^2` and `sum_j a_ij |x_hat^i - x_hat^j|^2 + eps_i^2`.
pub fn distributed_trigger_sides(
    agent: usize,
    state: &NetworkState,
    g: &WeightedDigraph,
    eps_i: f64,
) -> (f64, f64) {
    let d = state.x.ncols();
    let drift: f64 = (0..d)
        .map(|k| (state.x_hat[(agent, k)] - state.x[(agent, k)]).powi(2))
        .sum();
    let lhs = 4.0 * g.out_degree(agent) * drift;
    let mut rhs = eps_i * eps_i;
    for j in g.out_neighbors(agent) {
        let a = g.weight(agent, j);
        let gap: f64 = (0..d)
            .map(|k| (state.x_hat[(agent, k)] - state.x_hat[(j, k)]).powi(2))
            .sum();
        rhs += a * gap;
    }
    (lhs, rhs)
}

pub fn distributed_trigger_check(
    agent: usize,
    state: &NetworkState,
    g: &WeightedDigraph,
    eps_i: f64,
) -> bool {
    let (lhs, rhs) = distributed_trigger_sides(agent, state, g, eps_i);
    lhs > rhs
}

/// Applies the distributed law until no agent triggers, refreshing `x_hat`
/// for every broadcaster. Agents are visited in ascending order on each
/// pass. Returns the broadcasters in firing order.
pub fn cascade_resolve(
    state: &mut NetworkState,
    g: &WeightedDigraph,
    eps: &[f64],
) -> Result<Vec<usize>, SchedulerError> {
    let n = state.x.nrows();
    let mut fired = Vec::new();
    for _ in 0..=n {
        let before = fired.len();
        for (i, &e) in eps.iter().enumerate().take(n) {
            if distributed_trigger_check(i, state, g, e) {
                state.broadcast(i);
                fired.push(i);
            }
        }
        if fired.len() == before {
            return Ok(fired);
        }
    }
    Err(SchedulerError::CascadeOverflow(n + 1))
}

/// Run-local scheduler state.
#[derive(Debug, Clone)]
pub struct Scheduler {
    scheme: CommScheme,
    h: f64,
    periods: u64,
    t_last: f64,
}

impl Scheduler {
    pub fn new(scheme: CommScheme, h: f64) -> Self {
        Scheduler {
            scheme,
            h,
            periods: 1,
            t_last: 0.0,
        }
    }

    pub fn scheme(&self) -> &CommScheme {
        &self.scheme
    }

    /// Decide broadcasts at the node `state.t` (never called at t = 0, where
    /// everyone broadcasts) and apply them. Returns who broadcast.
    pub fn poll(
        &mut self,
        state: &mut NetworkState,
        g: &WeightedDigraph,
    ) -> Result<Vec<usize>, SchedulerError> {
        let n = state.x.nrows();
        match &self.scheme {
            CommScheme::Continuous => {
                state.x_hat.copy_from(&state.x);
                Ok(Vec::new())
            }
            CommScheme::Periodic { delta } => {
                // Nominal instants k * delta, snapped to the nearest node.
                let nominal = (self.periods - 1) as f64 * delta;
                if periodic_due(state.t, *delta, nominal, self.h) {
                    self.periods += 1;
                    Ok(broadcast_all(state, n))
                } else {
                    Ok(Vec::new())
                }
            }
            CommScheme::CentralizedEvent { kappa, tau } => {
                let x_at_last = state.x_hat.clone();
                if centralized_trigger_check(state, &x_at_last, *kappa, self.t_last, *tau) {
                    self.t_last = state.t;
                    Ok(broadcast_all(state, n))
                } else {
                    Ok(Vec::new())
                }
            }
            CommScheme::DistributedEvent { eps } => cascade_resolve(state, g, eps),
        }
    }
}

fn broadcast_all(state: &mut NetworkState, n: usize) -> Vec<usize> {
    for i in 0..n {
        state.broadcast(i);
    }
    (0..n).collect()
}

/// Per-agent event statistics and the sampled Zeno proxy.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EventStats {
    pub counts: Vec<usize>,
    /// Minimum inter-event gap per agent; the horizon when an agent has
    /// fewer than two events.
    pub min_gap: Vec<f64>,
    pub global_min_gap: f64,
    pub zeno_flag: bool,
}

pub fn event_stats(trace: &Trace) -> EventStats {
    let n = trace.n;
    let horizon = trace.t_end();
    let mut counts = vec![0usize; n];
    let mut last: Vec<Option<f64>> = vec![None; n];
    let mut min_gap = vec![horizon; n];
    for e in &trace.events {
        counts[e.agent] += 1;
        if let Some(prev) = last[e.agent] {
            min_gap[e.agent] = min_gap[e.agent].min(e.t - prev);
        }
        last[e.agent] = Some(e.t);
    }
    let global_min_gap = min_gap.iter().copied().fold(horizon, f64::min);
    EventStats {
        zeno_flag: global_min_gap <= 2.0 * trace.h,
        counts,
        min_gap,
        global_min_gap,
    }
}
