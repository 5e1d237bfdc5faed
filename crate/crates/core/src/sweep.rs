//! Batches of independent runs and seeded parameter fuzzing, fanned out
//! through [`Execution`].

use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::certificates::{
    gamma, kappa, phi_from_delta, suggest_beta, ConvexityBounds,
};
use crate::dynamics::{simulate, SimError, Trace};
use crate::exec::Execution;
use crate::scenario::Scenario;
use crate::schedulers::{event_stats, EventStats};

/// What a run reports besides its trace.
#[derive(Debug, Clone, Serialize)]
pub struct RunSummary {
    pub name: String,
    pub scheme: String,
    pub t_end: f64,
    pub x_star: Vec<f64>,
    pub final_errors: Vec<f64>,
    pub max_final_error: f64,
    pub max_v_sum: f64,
    pub events: EventStats,
    pub wall_time_s: f64,
    /// Set when the run stopped on divergence.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub blowup_t: Option<f64>,
    /// `(t, ln max_i |x^i - x*|)` per sample.
    pub log_error: Vec<(f64, f64)>,
}

impl RunSummary {
    pub fn new(name: &str, trace: &Trace, wall_time_s: f64, blowup_t: Option<f64>) -> Self {
        let log_error = trace
            .samples
            .iter()
            .map(|s| {
                let worst = trace.errors(s).into_iter().fold(0.0, f64::max);
                (s.t, worst.max(f64::MIN_POSITIVE).ln())
            })
            .collect();
        RunSummary {
            name: name.to_string(),
            scheme: trace.scheme.clone(),
            t_end: trace.t_end(),
            x_star: trace.x_star.clone(),
            final_errors: trace.final_errors(),
            max_final_error: trace.max_final_error(),
            max_v_sum: trace.max_v_sum(),
            events: event_stats(trace),
            wall_time_s,
            blowup_t,
            log_error,
        }
    }
}

#[derive(Debug)]
pub struct Run {
    pub trace: Trace,
    pub summary: RunSummary,
}

/// Simulates one scenario. A divergent run still yields its partial trace;
/// only configuration errors come back as `Err`.
pub fn run_scenario(s: &Scenario) -> Result<Run, SimError> {
    let start = Instant::now();
    let (trace, blowup) = match simulate(&s.sim_config()) {
        Ok(trace) => (trace, None),
        Err(SimError::NumericalBlowup { t, trace }) => (*trace, Some(t)),
        Err(e) => return Err(e),
    };
    let summary = RunSummary::new(&s.name, &trace, start.elapsed().as_secs_f64(), blowup);
    Ok(Run { trace, summary })
}

/// Independent runs, one per scenario, results in input order.
pub fn run_batch(scenarios: &[Scenario], exec: Execution) -> Vec<Result<Run, SimError>> {
    exec.map(scenarios, run_scenario)
}

/// Outcome of a fuzz campaign over random admissible tuples.
#[derive(Debug, Clone, Serialize)]
pub struct FuzzReport {
    pub cases: usize,
    pub violations: usize,
    /// Largest kappa, or smallest gamma, seen.
    pub extreme: f64,
}

#[derive(Debug, Clone, Copy)]
struct KappaCase {
    alpha: f64,
    beta: f64,
    eps: f64,
    delta: f64,
    phi: f64,
    l2: f64,
    ln: f64,
}

fn log_uniform(rng: &mut ChaCha8Rng, lo: f64, hi: f64) -> f64 {
    rng.gen_range(lo.ln()..hi.ln()).exp()
}

fn random_bounds(rng: &mut ChaCha8Rng) -> ConvexityBounds {
    let m = log_uniform(rng, 0.05, 5.0);
    ConvexityBounds::new(m, m * rng.gen_range(1.0..10.0)).expect("m <= M")
}

/// Draws `cases` tuples with `phi = phi_from_delta(...) > 0` and `lambda_N
/// >= lambda_2`, and counts those with `kappa >= 1`.
pub fn kappa_fuzz(cases: usize, seed: u64, exec: Execution) -> FuzzReport {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut tuples = Vec::with_capacity(cases);
    while tuples.len() < cases {
        let alpha = log_uniform(&mut rng, 0.01, 10.0);
        let delta = log_uniform(&mut rng, 1e-3, 1e3);
        let b = random_bounds(&mut rng);
        let phi = phi_from_delta(alpha, delta, b);
        if !(phi > 0.0) {
            continue;
        }
        let l2 = log_uniform(&mut rng, 0.01, 10.0);
        tuples.push(KappaCase {
            alpha,
            beta: log_uniform(&mut rng, 0.01, 10.0),
            eps: rng.gen_range(1e-3..1.0 - 1e-3),
            delta,
            phi,
            l2,
            ln: l2 * rng.gen_range(1.0..20.0),
        });
    }
    let values = exec.map(&tuples, |c| kappa(c.alpha, c.beta, c.eps, c.delta, c.phi, c.l2, c.ln));
    FuzzReport {
        cases,
        violations: values.iter().filter(|k| !(**k < 1.0 && **k > 0.0)).count(),
        extreme: values.iter().copied().fold(f64::NEG_INFINITY, f64::max),
    }
}

/// Draws `cases` tuples with `phi > 4 M - 1`, sets `beta` to the suggested
/// threshold (nudged up by one part in 1e9), and counts `gamma <= 0`.
pub fn beta_fuzz(cases: usize, seed: u64, exec: Execution) -> FuzzReport {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let tuples: Vec<(f64, f64, ConvexityBounds, f64)> = (0..cases)
        .map(|_| {
            let alpha = log_uniform(&mut rng, 0.01, 10.0);
            let b = random_bounds(&mut rng);
            let phi = (4.0 * b.big_m_upper - 1.0).max(0.0) + log_uniform(&mut rng, 1e-6, 50.0);
            (alpha, phi, b, log_uniform(&mut rng, 0.01, 10.0))
        })
        .collect();
    let values = exec.map(&tuples, |&(alpha, phi, b, l2)| {
        let beta = suggest_beta(alpha, phi, l2) * (1.0 + 1e-9);
        gamma(alpha, beta, phi, b, l2)
    });
    FuzzReport {
        cases,
        violations: values.iter().filter(|g| !(**g > 0.0)).count(),
        extreme: values.iter().copied().fold(f64::INFINITY, f64::min),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::preset;

    #[test]
    fn batch_matches_single_runs_in_order() {
        let scenarios: Vec<Scenario> = ["fig1c", "fig3a"]
            .iter()
            .map(|n| {
                let mut f = preset(n).unwrap();
                f.t_final = 2.0;
                f.resolve().unwrap()
            })
            .collect();
        let par = run_batch(&scenarios, Execution::Parallel);
        let seq = run_batch(&scenarios, Execution::Sequential);
        for (p, s) in par.iter().zip(&seq) {
            let (p, s) = (p.as_ref().unwrap(), s.as_ref().unwrap());
            assert_eq!(p.summary.final_errors, s.summary.final_errors);
            assert_eq!(p.trace.events.len(), s.trace.events.len());
        }
        assert_eq!(par[0].as_ref().unwrap().summary.name, "fig1c");
        assert_eq!(par[1].as_ref().unwrap().summary.events.counts[0], 5);
    }

    #[test]
    fn blowup_keeps_partial_trace() {
        let mut f = preset("fig4b").unwrap();
        f.x0 = Some(crate::scenario::InitSpec::Flat(vec![40.0; 10]));
        f.v0 = None;
        let run = run_scenario(&f.resolve().unwrap()).unwrap();
        assert!(run.summary.blowup_t.is_some());
        assert!(!run.trace.samples.is_empty());
    }

    #[test]
    fn fuzz_is_seeded_and_mode_independent() {
        let a = kappa_fuzz(200, 7, Execution::Parallel);
        let b = kappa_fuzz(200, 7, Execution::Sequential);
        assert_eq!(a.extreme, b.extreme);
        assert_eq!(a.violations, 0);
        assert_eq!(beta_fuzz(200, 7, Execution::Parallel).violations, 0);
    }

    #[test]
    fn log_error_tracks_samples() {
        let mut f = preset("fig1c").unwrap();
        f.t_final = 1.0;
        let run = run_scenario(&f.resolve().unwrap()).unwrap();
        assert_eq!(run.summary.log_error.len(), run.trace.samples.len());
        let (_, last) = *run.summary.log_error.last().unwrap();
        assert!((last - run.summary.max_final_error.ln()).abs() < 1e-12);
    }
}
