//! Scenario files: a JSON description of one experiment, its validation,
//! and the built-in presets.

use std::path::Path;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::certificates::{certify, CertError, CertifyInput, DEFAULT_DELTA, DEFAULT_EPSILON};
use crate::costs::{CostModel, Interval, NetworkCost};
use crate::dynamics::{AlgorithmParams, DynamicsKind, Integrator, SimConfig, SwitchingSchedule};
use crate::graph::{Edge, WeightedDigraph};
use crate::schedulers::CommScheme;

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("{path}:{line}:{column}: {msg}")]
    Parse {
        path: String,
        line: usize,
        column: usize,
        msg: String,
    },
    #[error("invalid `{field}`: {msg}")]
    Validation { field: String, msg: String },
    #[error("unknown preset `{0}`")]
    UnknownPreset(String),
    #[error("cannot read {path}: {msg}")]
    Io { path: String, msg: String },
}

fn invalid(field: &str, msg: impl ToString) -> ScenarioError {
    ScenarioError::Validation {
        field: field.to_string(),
        msg: msg.to_string(),
    }
}

/// Default step.
pub const DEFAULT_H: f64 = 1e-3;
/// Default recording stride in steps.
pub const DEFAULT_STRIDE: usize = 10;
/// Default box for random initial estimates.
pub const DEFAULT_X0_BOX: Interval = Interval::new(-5.0, 5.0);

/// A graph given by preset name, edge-list file path, or inline edges.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum GraphSpec {
    Named(String),
    Inline { n: usize, edges: Vec<(usize, usize, f64)> },
}

impl GraphSpec {
    fn build(&self, base: Option<&Path>) -> Result<WeightedDigraph, crate::graph::GraphError> {
        match self {
            GraphSpec::Named(name) => match (crate::graph::preset(name), base) {
                (Ok(g), _) => Ok(g),
                (Err(_), Some(dir)) if dir.join(name).exists() => {
                    WeightedDigraph::load(&dir.join(name))
                }
                _ => WeightedDigraph::resolve(name),
            },
            GraphSpec::Inline { n, edges } => WeightedDigraph::from_edges(
                *n,
                edges.iter().map(|&(i, j, w)| Edge::new(i, j, w)),
            ),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SwitchingSpec {
    pub graphs: Vec<GraphSpec>,
    /// Seconds each graph stays active.
    pub dwell: f64,
    /// Cyclic index sequence; all graphs in listed order when omitted.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub order: Vec<usize>,
}

/// A cost given by catalog name (`"f3"`, `"quadratic(1,0)"`) or in full.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum CostSpec {
    Name(String),
    Model(CostModel),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ScalarOrVec {
    Scalar(f64),
    Vector(Vec<f64>),
}

impl ScalarOrVec {
    fn expand(&self, n: usize) -> Vec<f64> {
        match self {
            ScalarOrVec::Scalar(v) => vec![*v; n],
            ScalarOrVec::Vector(v) => v.clone(),
        }
    }
}

/// Communication scheme as written in a file. Centralized `kappa` and
/// `tau` default to the certificate values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SchemeSpec {
    Continuous,
    Periodic {
        delta: f64,
    },
    CentralizedEvent {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        kappa: Option<f64>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        tau: Option<f64>,
    },
    DistributedEvent {
        eps: ScalarOrVec,
    },
}

/// Initial estimates: explicit (one value per agent for `d = 1`, or one row
/// per agent) or uniform in a box from the scenario seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum InitSpec {
    Flat(Vec<f64>),
    Rows(Vec<Vec<f64>>),
    Uniform { uniform: Interval },
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct AnalysisSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub epsilon: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub delta: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub phi: Option<f64>,
    /// Box for sampled convexity constants.
    #[serde(default, rename = "box", skip_serializing_if = "Option::is_none")]
    pub estimation_box: Option<Interval>,
}

/// The on-disk scenario.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioFile {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub graph: Option<GraphSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub switching: Option<SwitchingSpec>,
    pub costs: Vec<CostSpec>,
    pub alpha: f64,
    pub beta: f64,
    #[serde(default = "continuous")]
    pub scheme: SchemeSpec,
    #[serde(default)]
    pub integrator: Integrator,
    #[serde(default)]
    pub dynamics: DynamicsKind,
    pub t_final: f64,
    #[serde(default = "default_h")]
    pub h: f64,
    #[serde(default = "default_stride")]
    pub stride: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub x0: Option<InitSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub v0: Option<InitSpec>,
    #[serde(default, skip_serializing_if = "is_default_analysis")]
    pub analysis: AnalysisSpec,
}

fn continuous() -> SchemeSpec {
    SchemeSpec::Continuous
}

fn default_h() -> f64 {
    DEFAULT_H
}

fn default_stride() -> usize {
    DEFAULT_STRIDE
}

fn is_default_analysis(a: &AnalysisSpec) -> bool {
    *a == AnalysisSpec::default()
}

/// A validated, fully resolved scenario.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub name: String,
    pub schedule: SwitchingSchedule,
    pub costs: NetworkCost,
    pub params: AlgorithmParams,
    pub scheme: CommScheme,
    pub integrator: Integrator,
    pub dynamics: DynamicsKind,
    pub t_final: f64,
    pub h: f64,
    pub stride: usize,
    pub seed: u64,
    pub x0: DMatrix<f64>,
    pub v0: DMatrix<f64>,
    pub epsilon: f64,
    pub delta: f64,
    pub phi: Option<f64>,
    pub estimation_box: Option<Interval>,
}

/// Reads and validates a scenario file. Relative graph paths resolve
/// against the file's directory first.
pub fn parse_scenario(path: &Path) -> Result<Scenario, ScenarioError> {
    let text = std::fs::read_to_string(path).map_err(|e| ScenarioError::Io {
        path: path.display().to_string(),
        msg: e.to_string(),
    })?;
    let file = parse_scenario_str(&text, &path.display().to_string())?;
    file.resolve_in(path.parent())
}

pub fn parse_scenario_str(text: &str, origin: &str) -> Result<ScenarioFile, ScenarioError> {
    serde_json::from_str(text).map_err(|e| ScenarioError::Parse {
        path: origin.to_string(),
        line: e.line(),
        column: e.column(),
        msg: e.to_string(),
    })
}

fn init_matrix(
    spec: &InitSpec,
    field: &str,
    n: usize,
    d: usize,
    rng: &mut ChaCha8Rng,
) -> Result<DMatrix<f64>, ScenarioError> {
    match spec {
        InitSpec::Flat(v) if d == 1 && v.len() == n => Ok(DMatrix::from_column_slice(n, 1, v)),
        InitSpec::Flat(v) if v.len() == n * d => Ok(DMatrix::from_row_slice(n, d, v)),
        InitSpec::Flat(v) => Err(invalid(field, format!("expected {n} x {d} values, got {}", v.len()))),
        InitSpec::Rows(rows) => {
            if rows.len() != n || rows.iter().any(|r| r.len() != d) {
                return Err(invalid(field, format!("expected {n} rows of {d} values")));
            }
            Ok(DMatrix::from_fn(n, d, |i, k| rows[i][k]))
        }
        InitSpec::Uniform { uniform } => {
            if !(uniform.lo < uniform.hi) {
                return Err(invalid(field, "uniform box needs lo < hi"));
            }
            Ok(DMatrix::from_fn(n, d, |_, _| rng.gen_range(uniform.lo..uniform.hi)))
        }
    }
}

fn positive(field: &str, v: f64) -> Result<(), ScenarioError> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(invalid(field, format!("must be positive, got {v}")))
    }
}

impl ScenarioFile {
    pub fn resolve(&self) -> Result<Scenario, ScenarioError> {
        self.resolve_in(None)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("scenario serializes")
    }

    /// As [`ScenarioFile::resolve`], looking up relative graph files in
    /// `base` first.
    pub fn resolve_in(&self, base: Option<&Path>) -> Result<Scenario, ScenarioError> {
        positive("alpha", self.alpha)?;
        positive("beta", self.beta)?;
        positive("t_final", self.t_final)?;
        positive("h", self.h)?;
        if self.stride == 0 {
            return Err(invalid("stride", "must be at least 1"));
        }

        let schedule = match (&self.graph, &self.switching) {
            (Some(_), Some(_)) => return Err(invalid("graph", "give either `graph` or `switching`, not both")),
            (None, None) => return Err(invalid("graph", "missing; give `graph` or `switching`")),
            (Some(g), None) => {
                let g = g.build(base).map_err(|e| invalid("graph", e))?;
                SwitchingSchedule::fixed(g).map_err(|e| invalid("graph", e))?
            }
            (None, Some(sw)) => {
                positive("switching.dwell", sw.dwell)?;
                let graphs = sw
                    .graphs
                    .iter()
                    .map(|g| g.build(base))
                    .collect::<Result<Vec<_>, _>>()
                    .map_err(|e| invalid("switching.graphs", e))?;
                let schedule = SwitchingSchedule::new(graphs, sw.dwell, sw.order.clone())
                    .map_err(|e| invalid("switching.graphs", e))?;
                let ratio = sw.dwell / self.h;
                if (ratio - ratio.round()).abs() > 1e-6 * ratio.max(1.0) || ratio.round() < 1.0 {
                    return Err(invalid("switching.dwell", format!("{} is not a multiple of h = {}", sw.dwell, self.h)));
                }
                schedule
            }
        };

        let models = self
            .costs
            .iter()
            .map(|c| match c {
                CostSpec::Name(name) => CostModel::catalog(name),
                CostSpec::Model(m) => Ok(m.clone()),
            })
            .collect::<Result<Vec<_>, _>>()
            .map_err(|e| invalid("costs", e))?;
        let costs = NetworkCost::new(models).map_err(|e| invalid("costs", e))?;
        let (n, d) = (costs.n(), costs.dim());
        if schedule.n() != n {
            return Err(invalid("costs", format!("{n} costs for a graph of {} agents", schedule.n())));
        }

        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        let x0_spec = self.x0.clone().unwrap_or(InitSpec::Uniform {
            uniform: DEFAULT_X0_BOX,
        });
        let x0 = init_matrix(&x0_spec, "x0", n, d, &mut rng)?;
        let v0 = match &self.v0 {
            Some(spec) => init_matrix(spec, "v0", n, d, &mut rng)?,
            None => DMatrix::zeros(n, d),
        };
        let v_sum = v0.row_sum().norm();
        if v_sum > crate::dynamics::INIT_SUM_TOL {
            return Err(invalid("v0", format!("entries must sum to zero, |sum| = {v_sum:e}")));
        }

        let epsilon = self.analysis.epsilon.unwrap_or(DEFAULT_EPSILON);
        let delta = self.analysis.delta.unwrap_or(DEFAULT_DELTA);
        if !(epsilon > 0.0 && epsilon < 1.0) {
            return Err(invalid("analysis.epsilon", format!("must lie in (0, 1), got {epsilon}")));
        }
        positive("analysis.delta", delta)?;
        if let Some(phi) = self.analysis.phi {
            positive("analysis.phi", phi)?;
        }
        let params = AlgorithmParams {
            alpha: self.alpha,
            beta: self.beta,
        };

        let mut scenario = Scenario {
            name: self.name.clone().unwrap_or_else(|| "scenario".into()),
            schedule,
            costs,
            params,
            scheme: CommScheme::Continuous,
            integrator: self.integrator,
            dynamics: self.dynamics,
            t_final: self.t_final,
            h: self.h,
            stride: self.stride,
            seed: self.seed,
            x0,
            v0,
            epsilon,
            delta,
            phi: self.analysis.phi,
            estimation_box: self.analysis.estimation_box,
        };
        scenario.scheme = match &self.scheme {
            SchemeSpec::Continuous => CommScheme::Continuous,
            SchemeSpec::Periodic { delta } => {
                positive("scheme.delta", *delta)?;
                if self.h > delta / 10.0 * (1.0 + 1e-12) {
                    return Err(invalid("h", format!("must be at most delta/10 = {}", delta / 10.0)));
                }
                CommScheme::Periodic { delta: *delta }
            }
            SchemeSpec::CentralizedEvent { kappa, tau } => {
                let (kappa, tau) = match (kappa, tau) {
                    (Some(k), Some(t)) => (*k, *t),
                    _ => {
                        let report = certify(&scenario.certify_input())
                            .map_err(|e| invalid("scheme", format!("cannot derive kappa/tau: {e}")))?;
                        (kappa.unwrap_or(report.kappa), tau.unwrap_or(report.tau))
                    }
                };
                if !(kappa > 0.0 && kappa < 1.0) {
                    return Err(invalid("scheme.kappa", format!("must lie in (0, 1), got {kappa}")));
                }
                positive("scheme.tau", tau)?;
                CommScheme::CentralizedEvent { kappa, tau }
            }
            SchemeSpec::DistributedEvent { eps } => {
                let eps = eps.expand(n);
                if eps.len() != n {
                    return Err(invalid("scheme.eps", format!("expected {n} entries, got {}", eps.len())));
                }
                if let Some(bad) = eps.iter().find(|e| !(**e > 0.0)) {
                    return Err(invalid("scheme.eps", format!("entries must be positive, got {bad}")));
                }
                CommScheme::DistributedEvent { eps }
            }
        };
        if self.integrator == Integrator::Euler && scenario.scheme != CommScheme::Continuous {
            return Err(invalid("integrator", "euler communicates every step and needs the continuous scheme"));
        }
        Ok(scenario)
    }
}

impl Scenario {
    pub fn sim_config(&self) -> SimConfig {
        SimConfig {
            schedule: self.schedule.clone(),
            costs: self.costs.clone(),
            params: self.params,
            scheme: self.scheme.clone(),
            dynamics: self.dynamics,
            integrator: self.integrator,
            t_final: self.t_final,
            h: self.h,
            stride: self.stride,
            x0: self.x0.clone(),
            v0: self.v0.clone(),
            x_star: None,
        }
    }

    pub fn certify_input(&self) -> CertifyInput {
        CertifyInput {
            graphs: self.schedule.graphs().to_vec(),
            costs: self.costs.clone(),
            params: self.params,
            phi: self.phi,
            epsilon: self.epsilon,
            delta: self.delta,
            eps_agents: match &self.scheme {
                CommScheme::DistributedEvent { eps } => Some(eps.clone()),
                _ => None,
            },
            x0: Some(self.x0.clone()),
            v0: Some(self.v0.clone()),
            estimation_box: self.estimation_box,
        }
    }

    pub fn certify(&self) -> Result<crate::certificates::CertificateReport, CertError> {
        certify(&self.certify_input())
    }
}

/// Names accepted by [`preset`].
pub const PRESETS: [&str; 8] = [
    "fig1a", "fig1b", "fig1c", "fig3a", "fig3b", "fig4a", "fig4b", "fig5",
];

/// Seed for the random initial estimates of every preset.
pub const PRESET_SEED: u64 = 2014;

/// The ten-agent experiments. Initial estimates are uniform in [-5, 5]
/// from [`PRESET_SEED`], except the Euler comparison pair, which starts in
/// [-1, 1] (see [`EULER_X0_BOX`]).
pub fn preset(name: &str) -> Result<ScenarioFile, ScenarioError> {
    let costs: Vec<CostSpec> = (1..=10).map(|k| CostSpec::Name(format!("f{k}"))).collect();
    let base = ScenarioFile {
        name: Some(name.to_string()),
        graph: Some(GraphSpec::Named("fig2".into())),
        switching: None,
        costs,
        alpha: 1.0,
        beta: 1.0,
        scheme: SchemeSpec::Continuous,
        integrator: Integrator::Rk4,
        dynamics: DynamicsKind::Standard,
        t_final: 60.0,
        h: DEFAULT_H,
        stride: DEFAULT_STRIDE,
        seed: PRESET_SEED,
        x0: Some(InitSpec::Uniform {
            uniform: DEFAULT_X0_BOX,
        }),
        v0: None,
        // Four agents are only locally Lipschitz; certificates estimate
        // their constants over the initial box.
        analysis: AnalysisSpec {
            estimation_box: Some(DEFAULT_X0_BOX),
            ..AnalysisSpec::default()
        },
    };
    let switching = |beta: f64| ScenarioFile {
        graph: None,
        switching: Some(SwitchingSpec {
            graphs: ["fig2", "fig2b", "fig2c"]
                .map(|g| GraphSpec::Named(g.into()))
                .to_vec(),
            dwell: 2.0,
            order: Vec::new(),
        }),
        beta,
        ..base.clone()
    };
    let periodic = |beta: f64, delta: f64, x0: Interval| ScenarioFile {
        beta,
        scheme: SchemeSpec::Periodic { delta },
        x0: Some(InitSpec::Uniform { uniform: x0 }),
        ..base.clone()
    };
    Ok(match name {
        "fig1a" => switching(0.5),
        "fig1b" => switching(1.0),
        "fig1c" => switching(5.0),
        "fig3a" => periodic(1.0, 0.5, DEFAULT_X0_BOX),
        "fig3b" => periodic(0.5, 1.0, DEFAULT_X0_BOX),
        "fig4a" => periodic(2.0, 0.2, EULER_X0_BOX),
        "fig4b" => ScenarioFile {
            integrator: Integrator::Euler,
            h: 0.2,
            stride: 1,
            x0: Some(InitSpec::Uniform {
                uniform: EULER_X0_BOX,
            }),
            ..base.clone()
        },
        // The shortest inter-event gap of this run is about 6e-4 s; the
        // finer step keeps it resolvable.
        "fig5" => ScenarioFile {
            scheme: SchemeSpec::DistributedEvent {
                eps: ScalarOrVec::Scalar(0.002),
            },
            h: 1e-4,
            stride: 100,
            ..base.clone()
        },
        _ => return Err(ScenarioError::UnknownPreset(name.to_string())),
    })
}

/// Initial box for the Euler comparison presets. A step of 0.2 is close to
/// the stability edge for the quartic agent, so large starts diverge
/// regardless of the communication scheme.
pub const EULER_X0_BOX: Interval = Interval::new(-1.0, 1.0);

#[cfg(test)]
mod tests {
    use super::*;

    fn minimal() -> String {
        r#"{
            "graph": "fig2",
            "costs": ["f1","f2","f3","f4","f5","f6","f7","f8","f9","f10"],
            "alpha": 1, "beta": 1,
            "scheme": {"kind": "continuous"},
            "t_final": 10
        }"#
        .to_string()
    }

    fn resolve(text: &str) -> Result<Scenario, ScenarioError> {
        parse_scenario_str(text, "test.json")?.resolve()
    }

    #[test]
    fn minimal_gets_defaults() {
        let s = resolve(&minimal()).unwrap();
        assert_eq!(s.h, 1e-3);
        assert_eq!(s.stride, 10);
        assert_eq!(s.v0, DMatrix::zeros(10, 1));
        assert!(s.x0.iter().all(|v| (-5.0..5.0).contains(v)));
        assert_eq!(s.scheme, CommScheme::Continuous);
    }

    #[test]
    fn nonzero_v_sum_rejected() {
        let text = minimal().replace(
            r#""t_final": 10"#,
            r#""t_final": 10, "v0": [1,0,0,0,0,0,0,0,0,0]"#,
        );
        match resolve(&text) {
            Err(ScenarioError::Validation { field, .. }) => assert_eq!(field, "v0"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn nonpositive_delta_rejected() {
        let text = minimal().replace(r#"{"kind": "continuous"}"#, r#"{"kind": "periodic", "delta": 0}"#);
        match resolve(&text) {
            Err(ScenarioError::Validation { field, .. }) => assert_eq!(field, "scheme.delta"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn parse_error_has_position() {
        match resolve("{\n \"graph\": \"fig2\",\n \"costs\": [\n}") {
            Err(ScenarioError::Parse { line, .. }) => assert!(line >= 3),
            other => panic!("{other:?}"),
        }
        assert!(matches!(
            resolve(&minimal().replace("\"alpha\"", "\"alhpa\"")),
            Err(ScenarioError::Parse { .. })
        ));
    }

    #[test]
    fn mismatched_costs_rejected() {
        let text = minimal().replace(r#""f9","f10""#, r#""f9""#);
        assert!(matches!(resolve(&text), Err(ScenarioError::Validation { ref field, .. }) if field == "costs"));
        let text = minimal().replace(r#""f10""#, r#""f11""#);
        assert!(matches!(resolve(&text), Err(ScenarioError::Validation { ref field, .. }) if field == "costs"));
    }

    #[test]
    fn inline_graph_and_explicit_init() {
        let text = r#"{
            "graph": {"n": 2, "edges": [[1,2,1.0],[2,1,1.0]]},
            "costs": [{"kind":"squared","center":4}, {"kind":"squared","center":-2}],
            "alpha": 1, "beta": 6,
            "scheme": {"kind":"distributed_event","eps":0.002},
            "x0": [0, 0], "v0": [1, -1],
            "t_final": 5
        }"#;
        let s = resolve(text).unwrap();
        assert_eq!(s.scheme, CommScheme::DistributedEvent { eps: vec![0.002, 0.002] });
        assert_eq!(s.v0[(0, 0)], 1.0);
        let cert = s.certify().unwrap();
        assert!(cert.tau_i.is_some());
    }

    #[test]
    fn centralized_parameters_from_certificate() {
        let text = r#"{
            "graph": "cycle10",
            "costs": [{"kind":"squared","center":1},{"kind":"squared","center":2},{"kind":"squared","center":3},
                      {"kind":"squared","center":4},{"kind":"squared","center":5},{"kind":"squared","center":6},
                      {"kind":"squared","center":7},{"kind":"squared","center":8},{"kind":"squared","center":9},
                      {"kind":"squared","center":10}],
            "alpha": 1, "beta": 1,
            "scheme": {"kind":"centralized_event"},
            "analysis": {"delta": 4},
            "t_final": 1
        }"#;
        let s = resolve(text).unwrap();
        match s.scheme {
            CommScheme::CentralizedEvent { kappa, tau } => {
                assert!(kappa > 0.0 && kappa < 1.0);
                assert!(tau > 0.0);
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn presets_validate_and_match_captions() {
        for name in PRESETS {
            let file = preset(name).unwrap();
            let s = file.resolve().unwrap_or_else(|e| panic!("{name}: {e}"));
            assert_eq!(s.costs.n(), 10);
            assert_eq!(s.params.alpha, 1.0);
            let again = parse_scenario_str(&file.to_json(), name).unwrap();
            assert_eq!(again, file);
        }
        assert_eq!(preset("fig1c").unwrap().beta, 5.0);
        let f3b = preset("fig3b").unwrap();
        assert_eq!((f3b.beta, f3b.scheme), (0.5, SchemeSpec::Periodic { delta: 1.0 }));
        let f4b = preset("fig4b").unwrap();
        assert_eq!((f4b.integrator, f4b.beta, f4b.h), (Integrator::Euler, 1.0, 0.2));
        assert!(preset("fig1b").unwrap().resolve().unwrap().schedule.is_switching());
        assert!(matches!(preset("fig9"), Err(ScenarioError::UnknownPreset(_))));
    }
}
