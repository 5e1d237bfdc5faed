//! Local cost functions, their convexity constants and the centralized
//! minimizer used as ground truth.

use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Deserializer, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CostError {
    #[error("unknown cost `{0}`")]
    UnknownCost(String),
    #[error("cost list is empty")]
    Empty,
    #[error("cost dimensions disagree: agent {agent} has dimension {got}, expected {expected}")]
    DimMismatch {
        agent: usize,
        got: usize,
        expected: usize,
    },
    #[error("agent {agent} has no global gradient-Lipschitz constant; supply an estimation box")]
    MissingLipschitz { agent: usize },
    #[error("agent {agent} has no positive strong-convexity constant")]
    MissingStrongConvexity { agent: usize },
    #[error("no sign change of the global gradient found up to |x| = {limit:e}")]
    Unbounded { limit: f64 },
    #[error("global minimizer did not converge: {0}")]
    OracleFailure(String),
}

/// Closed interval applied to every coordinate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(from = "[f64; 2]", into = "[f64; 2]")]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
}

impl Interval {
    pub const fn new(lo: f64, hi: f64) -> Self {
        Interval { lo, hi }
    }

    pub fn width(&self) -> f64 {
        self.hi - self.lo
    }
}

impl From<[f64; 2]> for Interval {
    fn from([lo, hi]: [f64; 2]) -> Self {
        Interval { lo, hi }
    }
}

impl From<Interval> for [f64; 2] {
    fn from(i: Interval) -> Self {
        [i.lo, i.hi]
    }
}

/// Box used for empirical constants of globally Lipschitz catalog entries.
pub const DEFAULT_BOX: Interval = Interval::new(-10.0, 10.0);

/// Pair count for empirical constant estimation.
pub const DEFAULT_SAMPLES: usize = 20_000;

/// The ten scalar benchmark costs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Catalog {
    F1,
    F2,
    F3,
    F4,
    F5,
    F6,
    F7,
    F8,
    F9,
    F10,
}

impl Catalog {
    pub const ALL: [Catalog; 10] = [
        Catalog::F1,
        Catalog::F2,
        Catalog::F3,
        Catalog::F4,
        Catalog::F5,
        Catalog::F6,
        Catalog::F7,
        Catalog::F8,
        Catalog::F9,
        Catalog::F10,
    ];

    pub fn value(self, x: f64) -> f64 {
        match self {
            Catalog::F1 => 0.5 * (-0.5 * x).exp() + 0.4 * (0.3 * x).exp(),
            Catalog::F2 => (x - 4.0).powi(2),
            Catalog::F3 => 0.5 * x * x * (x * x).ln_1p() + x * x,
            Catalog::F4 => x * x + (0.1 * x).exp(),
            Catalog::F5 => log_add_exp(-0.1 * x, 0.3 * x) + 0.1 * x * x,
            Catalog::F6 => x * x / (2.0 + x * x).ln(),
            Catalog::F7 => 0.2 * (-0.2 * x).exp() + 0.4 * (0.4 * x).exp(),
            Catalog::F8 => x.powi(4) + 2.0 * x * x + 2.0,
            Catalog::F9 => x * x / (x * x + 1.0).sqrt() + 0.1 * x * x,
            Catalog::F10 => (x + 2.0).powi(2),
        }
    }

    pub fn derivative(self, x: f64) -> f64 {
        match self {
            Catalog::F1 => -0.25 * (-0.5 * x).exp() + 0.12 * (0.3 * x).exp(),
            Catalog::F2 => 2.0 * (x - 4.0),
            Catalog::F3 => {
                let q = x * x;
                x * q.ln_1p() + x * q / (1.0 + q) + 2.0 * x
            }
            Catalog::F4 => 2.0 * x + 0.1 * (0.1 * x).exp(),
            // d/dx ln(e^{-0.1x} + e^{0.3x}) = -0.1 + 0.4 sigmoid(0.4x)
            Catalog::F5 => -0.1 + 0.4 * sigmoid(0.4 * x) + 0.2 * x,
            Catalog::F6 => {
                let q = 2.0 + x * x;
                let lq = q.ln();
                2.0 * x / lq - 2.0 * x.powi(3) / (q * lq * lq)
            }
            Catalog::F7 => -0.04 * (-0.2 * x).exp() + 0.16 * (0.4 * x).exp(),
            Catalog::F8 => 4.0 * x.powi(3) + 4.0 * x,
            Catalog::F9 => {
                let q = x * x + 1.0;
                x * (x * x + 2.0) / (q * q.sqrt()) + 0.2 * x
            }
            Catalog::F10 => 2.0 * (x + 2.0),
        }
    }

    /// Entries whose gradient is only locally Lipschitz.
    pub fn locally_lipschitz(self) -> bool {
        matches!(self, Catalog::F1 | Catalog::F4 | Catalog::F7 | Catalog::F8)
    }

    fn exact_constants(self) -> Option<(f64, f64)> {
        match self {
            Catalog::F2 | Catalog::F10 => Some((2.0, 2.0)),
            _ => None,
        }
    }
}

impl fmt::Display for Catalog {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let idx = Catalog::ALL.iter().position(|c| c == self).unwrap() + 1;
        write!(f, "f{idx}")
    }
}

impl FromStr for Catalog {
    type Err = CostError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        s.strip_prefix('f')
            .and_then(|k| k.parse::<usize>().ok())
            .filter(|k| (1..=10).contains(k))
            .map(|k| Catalog::ALL[k - 1])
            .ok_or_else(|| CostError::UnknownCost(s.to_string()))
    }
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

fn log_add_exp(a: f64, b: f64) -> f64 {
    let m = a.max(b);
    m + (-(a - b).abs()).exp().ln_1p()
}

/// A differentiable local cost `f^i : R^d -> R`.
///
/// The JSON form is tagged by `kind`, e.g. `{"kind":"catalog","name":"f3"}`
/// or `{"kind":"quadratic","a":1.0,"b":0.0}`; vector fields accept a scalar
/// for `d = 1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum CostModel {
    Catalog { name: Catalog },
    /// `1/2 (x^T x + x^T a + b)`.
    Quadratic {
        #[serde(deserialize_with = "scalar_or_vec")]
        a: Vec<f64>,
        #[serde(default)]
        b: f64,
    },
    /// `|x - c|^2`.
    Squared {
        #[serde(deserialize_with = "scalar_or_vec")]
        center: Vec<f64>,
    },
    /// `|x - c|^4`; convex but not strongly convex.
    Quartic {
        #[serde(deserialize_with = "scalar_or_vec")]
        center: Vec<f64>,
    },
    /// `s^T x`.
    Linear {
        #[serde(deserialize_with = "scalar_or_vec")]
        slope: Vec<f64>,
    },
}

fn scalar_or_vec<'de, D: Deserializer<'de>>(de: D) -> Result<Vec<f64>, D::Error> {
    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Either {
        One(f64),
        Many(Vec<f64>),
    }
    Ok(match Either::deserialize(de)? {
        Either::One(v) => vec![v],
        Either::Many(v) => v,
    })
}

impl CostModel {
    /// Look up a catalog entry: `f1`..`f10`, or `quadratic(a,b)` for the scalar
    /// member `1/2 (x^2 + a x + b)`.
    pub fn catalog(name: &str) -> Result<Self, CostError> {
        let name = name.trim();
        if let Some(args) = name
            .strip_prefix("quadratic(")
            .and_then(|s| s.strip_suffix(')'))
        {
            let parts: Vec<f64> = args
                .split(',')
                .map(|p| p.trim().parse::<f64>())
                .collect::<Result<_, _>>()
                .map_err(|_| CostError::UnknownCost(name.to_string()))?;
            return match parts.as_slice() {
                [a, b] => Ok(CostModel::Quadratic { a: vec![*a], b: *b }),
                _ => Err(CostError::UnknownCost(name.to_string())),
            };
        }
        name.parse::<Catalog>()
            .map(|name| CostModel::Catalog { name })
    }

    pub fn squared(center: f64) -> Self {
        CostModel::Squared {
            center: vec![center],
        }
    }

    pub fn quartic(center: f64) -> Self {
        CostModel::Quartic {
            center: vec![center],
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            CostModel::Catalog { .. } => 1,
            CostModel::Quadratic { a, .. } => a.len(),
            CostModel::Squared { center } | CostModel::Quartic { center } => center.len(),
            CostModel::Linear { slope } => slope.len(),
        }
    }

    pub fn value(&self, x: &[f64]) -> f64 {
        match self {
            CostModel::Catalog { name } => name.value(x[0]),
            CostModel::Quadratic { a, b } => {
                0.5 * (dot(x, x) + dot(x, a) + b)
            }
            CostModel::Squared { center } => dist_sq(x, center),
            CostModel::Quartic { center } => dist_sq(x, center).powi(2),
            CostModel::Linear { slope } => dot(x, slope),
        }
    }

    pub fn gradient_into(&self, x: &[f64], out: &mut [f64]) {
        match self {
            CostModel::Catalog { name } => out[0] = name.derivative(x[0]),
            CostModel::Quadratic { a, .. } => {
                for k in 0..out.len() {
                    out[k] = x[k] + 0.5 * a[k];
                }
            }
            CostModel::Squared { center } => {
                for k in 0..out.len() {
                    out[k] = 2.0 * (x[k] - center[k]);
                }
            }
            CostModel::Quartic { center } => {
                let r2 = dist_sq(x, center);
                for k in 0..out.len() {
                    out[k] = 4.0 * r2 * (x[k] - center[k]);
                }
            }
            CostModel::Linear { slope } => out.copy_from_slice(slope),
        }
    }

    pub fn gradient(&self, x: &[f64]) -> Vec<f64> {
        let mut g = vec![0.0; x.len()];
        self.gradient_into(x, &mut g);
        g
    }

    /// Declared (exact) strong-convexity constant `m`.
    pub fn strong_convexity(&self) -> Option<f64> {
        match self {
            CostModel::Catalog { name } => name.exact_constants().map(|c| c.0),
            CostModel::Quadratic { .. } => Some(1.0),
            CostModel::Squared { .. } => Some(2.0),
            CostModel::Quartic { .. } | CostModel::Linear { .. } => None,
        }
    }

    /// Declared (exact) global gradient-Lipschitz constant `M`.
    pub fn lipschitz(&self) -> Option<f64> {
        match self {
            CostModel::Catalog { name } => name.exact_constants().map(|c| c.1),
            CostModel::Quadratic { .. } => Some(1.0),
            CostModel::Squared { .. } => Some(2.0),
            CostModel::Quartic { .. } => None,
            CostModel::Linear { .. } => Some(0.0),
        }
    }

    /// True when the gradient is only Lipschitz on compact sets.
    pub fn locally_lipschitz(&self) -> bool {
        match self {
            CostModel::Catalog { name } => name.locally_lipschitz(),
            CostModel::Quartic { .. } => true,
            _ => false,
        }
    }

    pub fn label(&self) -> String {
        match self {
            CostModel::Catalog { name } => name.to_string(),
            CostModel::Quadratic { a, b } => format!("quadratic(a={a:?}, b={b})"),
            CostModel::Squared { center } => format!("squared(c={center:?})"),
            CostModel::Quartic { center } => format!("quartic(c={center:?})"),
            CostModel::Linear { slope } => format!("linear(s={slope:?})"),
        }
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn dist_sq(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Per-agent convexity constants `m^i`, `M^i`, and whether they came from
/// sampling rather than a closed form.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct AgentConstants {
    pub m: f64,
    #[serde(rename = "M")]
    pub big_m: f64,
    pub estimated: bool,
}

/// The network objective `f = sum_i f^i` over agents sharing a dimension.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkCost {
    agents: Vec<CostModel>,
    dim: usize,
}

pub fn network_cost(models: Vec<CostModel>) -> Result<NetworkCost, CostError> {
    NetworkCost::new(models)
}

impl NetworkCost {
    pub fn new(agents: Vec<CostModel>) -> Result<Self, CostError> {
        let dim = agents.first().ok_or(CostError::Empty)?.dim();
        for (agent, c) in agents.iter().enumerate() {
            if c.dim() != dim || c.dim() == 0 {
                return Err(CostError::DimMismatch {
                    agent,
                    got: c.dim(),
                    expected: dim,
                });
            }
        }
        Ok(NetworkCost { agents, dim })
    }

    /// The ten benchmark costs `f1..f10`, in order.
    pub fn catalog_suite() -> Self {
        NetworkCost::new(
            Catalog::ALL
                .iter()
                .map(|&name| CostModel::Catalog { name })
                .collect(),
        )
        .expect("catalog entries are scalar")
    }

    pub fn n(&self) -> usize {
        self.agents.len()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn agents(&self) -> &[CostModel] {
        &self.agents
    }

    pub fn agent(&self, i: usize) -> &CostModel {
        &self.agents[i]
    }

    /// `f(x) = sum_i f^i(x)`.
    pub fn value(&self, x: &[f64]) -> f64 {
        self.agents.iter().map(|c| c.value(x)).sum()
    }

    /// `grad f(x) = sum_i grad f^i(x)`.
    pub fn gradient(&self, x: &[f64]) -> Vec<f64> {
        let mut total = vec![0.0; self.dim];
        let mut g = vec![0.0; self.dim];
        for c in &self.agents {
            c.gradient_into(x, &mut g);
            for (t, gi) in total.iter_mut().zip(&g) {
                *t += gi;
            }
        }
        total
    }

    /// `f~(x) = sum_i f^i(x^i)` with one agent per row of `x`.
    pub fn separable_value(&self, x: &DMatrix<f64>) -> f64 {
        let mut row = vec![0.0; self.dim];
        (0..self.n())
            .map(|i| {
                copy_row(x, i, &mut row);
                self.agents[i].value(&row)
            })
            .sum()
    }

    /// Row `i` of the result is `grad f^i(x^i)`.
    pub fn separable_gradient(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        let mut out = DMatrix::zeros(self.n(), self.dim);
        self.separable_gradient_into(x, &mut out);
        out
    }

    pub fn separable_gradient_into(&self, x: &DMatrix<f64>, out: &mut DMatrix<f64>) {
        let d = self.dim;
        let mut row = vec![0.0; d];
        let mut g = vec![0.0; d];
        for (i, c) in self.agents.iter().enumerate() {
            copy_row(x, i, &mut row);
            c.gradient_into(&row, &mut g);
            for k in 0..d {
                out[(i, k)] = g[k];
            }
        }
    }

    /// `min_i m^i` when every agent declares a positive constant.
    pub fn m_lower(&self) -> Option<f64> {
        self.agents
            .iter()
            .map(|c| c.strong_convexity().filter(|&m| m > 0.0))
            .collect::<Option<Vec<_>>>()
            .map(|v| v.into_iter().fold(f64::INFINITY, f64::min))
    }

    /// `max_i M^i` when every agent declares a global constant.
    pub fn big_m_upper(&self) -> Option<f64> {
        self.agents
            .iter()
            .map(CostModel::lipschitz)
            .collect::<Option<Vec<_>>>()
            .map(|v| v.into_iter().fold(0.0, f64::max))
    }

    /// Some agent's gradient is only locally Lipschitz.
    pub fn locally_lipschitz_only(&self) -> bool {
        self.agents.iter().any(CostModel::locally_lipschitz)
    }

    /// Constants for every agent. Closed forms are used where available;
    /// the rest are sampled over `estimation_box`, which defaults to
    /// [`DEFAULT_BOX`] for globally Lipschitz entries and is mandatory for
    /// locally Lipschitz ones.
    pub fn agent_constants(
        &self,
        estimation_box: Option<Interval>,
    ) -> Result<Vec<AgentConstants>, CostError> {
        self.agents
            .iter()
            .enumerate()
            .map(|(agent, c)| {
                if let (Some(m), Some(big_m)) = (c.strong_convexity(), c.lipschitz()) {
                    if m > 0.0 {
                        return Ok(AgentConstants {
                            m,
                            big_m,
                            estimated: false,
                        });
                    }
                    return Err(CostError::MissingStrongConvexity { agent });
                }
                let domain = match estimation_box {
                    Some(b) => b,
                    None if c.locally_lipschitz() => {
                        return Err(CostError::MissingLipschitz { agent })
                    }
                    None => DEFAULT_BOX,
                };
                let est = check_convexity_constants(c, domain, DEFAULT_SAMPLES);
                if est.m_est <= 0.0 {
                    return Err(CostError::MissingStrongConvexity { agent });
                }
                Ok(AgentConstants {
                    m: est.m_est,
                    big_m: est.big_m_est,
                    estimated: true,
                })
            })
            .collect()
    }
}

fn copy_row(x: &DMatrix<f64>, i: usize, row: &mut [f64]) {
    for (k, r) in row.iter_mut().enumerate() {
        *r = x[(i, k)];
    }
}

/// Empirical curvature range of a cost over a box.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ConvexityEstimate {
    pub m_est: f64,
    #[serde(rename = "M_est")]
    pub big_m_est: f64,
    /// The sampled `m` fell below the declared one.
    pub m_violation: bool,
    /// The sampled `M` exceeded the declared one.
    pub big_m_violation: bool,
}

/// Min and max over sampled pairs of `(z-x)^T (grad f(z) - grad f(x)) / |z-x|^2`
/// and `|grad f(z) - grad f(x)| / |z - x|`. Half the pairs are short secants
/// so that the estimate approaches the curvature extremes; the box corners
/// along the diagonal are always included.
pub fn check_convexity_constants(
    model: &CostModel,
    domain: Interval,
    samples: usize,
) -> ConvexityEstimate {
    let d = model.dim();
    let samples = samples.max(2);
    let mut rng = ChaCha8Rng::seed_from_u64(ESTIMATE_SEED ^ d as u64);
    let short = 1e-4 * domain.width();
    let mut m_est = f64::INFINITY;
    let mut big_m_est: f64 = 0.0;
    let mut gx = vec![0.0; d];
    let mut gz = vec![0.0; d];
    let mut visit = |x: &[f64], z: &[f64]| {
        model.gradient_into(x, &mut gx);
        model.gradient_into(z, &mut gz);
        let dz: Vec<f64> = z.iter().zip(x).map(|(a, b)| a - b).collect();
        let dg: Vec<f64> = gz.iter().zip(&gx).map(|(a, b)| a - b).collect();
        let nz = dot(&dz, &dz);
        if nz == 0.0 {
            return;
        }
        m_est = m_est.min(dot(&dz, &dg) / nz);
        big_m_est = big_m_est.max((dot(&dg, &dg) / nz).sqrt());
    };
    let lo = vec![domain.lo; d];
    let hi = vec![domain.hi; d];
    visit(&lo, &lo.iter().map(|v| v + short).collect::<Vec<_>>());
    visit(&hi.iter().map(|v| v - short).collect::<Vec<_>>(), &hi);
    for k in 0..samples {
        let x: Vec<f64> = (0..d).map(|_| rng.gen_range(domain.lo..=domain.hi)).collect();
        let z: Vec<f64> = if k % 2 == 0 {
            (0..d).map(|_| rng.gen_range(domain.lo..=domain.hi)).collect()
        } else {
            x.iter()
                .map(|&v| (v + rng.gen_range(-short..=short)).clamp(domain.lo, domain.hi))
                .collect()
        };
        visit(&x, &z);
    }
    let m_violation = model
        .strong_convexity()
        .is_some_and(|m| m_est < m * (1.0 - 1e-6) - 1e-12);
    let big_m_violation = model
        .lipschitz()
        .is_some_and(|big_m| big_m_est > big_m * (1.0 + 1e-6) + 1e-12);
    ConvexityEstimate {
        m_est,
        big_m_est,
        m_violation,
        big_m_violation,
    }
}

const ESTIMATE_SEED: u64 = 0x5eed_0fc0;

/// Bracket limit for the scalar minimizer.
const BRACKET_LIMIT: f64 = 1e12;

/// The unique minimizer of a strictly convex `f = sum_i f^i`, to
/// `|grad f(x*)| <= tol`. Scalar problems use bracketing and bisection on the
/// strictly increasing derivative; vector problems use damped Newton with a
/// finite-difference Hessian.
pub fn minimize_global(nc: &NetworkCost, tol: f64) -> Result<Vec<f64>, CostError> {
    if nc.dim() == 1 {
        bisect_scalar(|x| nc.gradient(&[x])[0], tol).map(|x| vec![x])
    } else {
        damped_newton(nc, tol)
    }
}

fn bisect_scalar(g: impl Fn(f64) -> f64, tol: f64) -> Result<f64, CostError> {
    let g0 = g(0.0);
    if g0.abs() <= tol {
        return Ok(0.0);
    }
    let (mut lo, mut hi) = (-1.0, 1.0);
    loop {
        let (glo, ghi) = (g(lo), g(hi));
        if glo.is_nan() || ghi.is_nan() {
            return Err(CostError::OracleFailure(format!(
                "gradient is NaN while bracketing at [{lo}, {hi}]"
            )));
        }
        if glo <= 0.0 && ghi >= 0.0 {
            break;
        }
        if hi >= BRACKET_LIMIT {
            return Err(CostError::Unbounded {
                limit: BRACKET_LIMIT,
            });
        }
        lo *= 2.0;
        hi *= 2.0;
    }
    let mut best = (f64::INFINITY, 0.0);
    loop {
        let mid = 0.5 * (lo + hi);
        let gm = g(mid);
        if gm.abs() < best.0 {
            best = (gm.abs(), mid);
        }
        if gm.abs() <= tol {
            return Ok(mid);
        }
        if mid <= lo || mid >= hi {
            break;
        }
        if gm < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    // Interval collapsed to adjacent floats; take the better endpoint.
    for x in [lo, hi] {
        let gx = g(x).abs();
        if gx < best.0 {
            best = (gx, x);
        }
    }
    if best.0 <= tol {
        Ok(best.1)
    } else {
        Err(CostError::OracleFailure(format!(
            "bisection stalled at x = {} with |f'(x)| = {:e}",
            best.1, best.0
        )))
    }
}

fn damped_newton(nc: &NetworkCost, tol: f64) -> Result<Vec<f64>, CostError> {
    let d = nc.dim();
    let mut x = DVector::<f64>::zeros(d);
    for _ in 0..500 {
        let g = DVector::from_vec(nc.gradient(x.as_slice()));
        if !g.iter().all(|v| v.is_finite()) {
            return Err(CostError::OracleFailure("non-finite gradient".into()));
        }
        if g.norm() <= tol {
            return Ok(x.as_slice().to_vec());
        }
        let mut h = DMatrix::zeros(d, d);
        for k in 0..d {
            let step = 1e-6 * x[k].abs().max(1.0);
            let mut xp = x.clone();
            let mut xm = x.clone();
            xp[k] += step;
            xm[k] -= step;
            let gp = nc.gradient(xp.as_slice());
            let gm = nc.gradient(xm.as_slice());
            for r in 0..d {
                h[(r, k)] = (gp[r] - gm[r]) / (2.0 * step);
            }
        }
        let h = (&h + h.transpose()) * 0.5;
        let dir = match h.clone().cholesky() {
            Some(ch) => -ch.solve(&g),
            None => -g.clone(),
        };
        let f0 = nc.value(x.as_slice());
        let slope = g.dot(&dir);
        let mut t = 1.0;
        let mut next = &x + &dir * t;
        while nc.value(next.as_slice()) > f0 + 1e-4 * t * slope && t > 1e-12 {
            t *= 0.5;
            next = &x + &dir * t;
        }
        if (&next - &x).norm() == 0.0 {
            let gn = DVector::from_vec(nc.gradient(next.as_slice())).norm();
            if gn <= tol {
                return Ok(next.as_slice().to_vec());
            }
            return Err(CostError::OracleFailure(format!(
                "Newton step stalled with |grad| = {gn:e}"
            )));
        }
        x = next;
    }
    Err(CostError::OracleFailure(
        "Newton iteration limit reached".into(),
    ))
}
