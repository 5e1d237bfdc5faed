//! `sim`: run scenarios, print certificates, reproduce presets, check graphs.

use std::fs::{self, File};
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};
use serde::Serialize;

use distopt::certificates::{CertError, CertificateReport, Feasibility};
use distopt::costs::CostError;
use distopt::dynamics::{SimError, Trace};
use distopt::exec::Execution;
use distopt::graph::{spectral_summary, GraphSpectrum, WeightedDigraph};
use distopt::scenario::{self, Scenario, ScenarioError, ScenarioFile};
use distopt::schedulers::CommScheme;
use distopt::sweep::{run_batch, Run, RunSummary};

const EXIT_VALIDATION: u8 = 2;
const EXIT_BLOWUP: u8 = 3;
const EXIT_INFEASIBLE: u8 = 4;

#[derive(Parser)]
#[command(name = "sim", version, about = "Distributed convex optimization simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate one or more scenario files.
    Run {
        #[arg(required = true)]
        scenarios: Vec<PathBuf>,
        /// Output directory; one subdirectory per scenario when several
        /// are given.
        #[arg(long, default_value = "out")]
        out: PathBuf,
        /// Overrides the scenario seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Worker threads for several scenarios; 1 runs them in order.
        #[arg(long, default_value_t = 0)]
        jobs: usize,
        /// Attach the certificate report to each summary.
        #[arg(long)]
        certify: bool,
    },
    /// Print the certificate report of a scenario as JSON.
    Certify { scenario: PathBuf },
    /// Run a built-in experiment, or print its scenario with --emit.
    Preset {
        name: String,
        #[arg(long)]
        emit: bool,
        /// Defaults to out/<name>.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Graph utilities.
    Graph {
        #[command(subcommand)]
        command: GraphCommand,
    },
}

#[derive(Subcommand)]
enum GraphCommand {
    /// Report balance, connectivity and spectrum of an edge-list file.
    Check { graph: PathBuf },
}

/// An error with its exit code.
struct Failure {
    code: u8,
    err: anyhow::Error,
}

impl Failure {
    fn validation(err: impl Into<anyhow::Error>) -> Self {
        Failure {
            code: EXIT_VALIDATION,
            err: err.into(),
        }
    }
}

impl From<anyhow::Error> for Failure {
    fn from(err: anyhow::Error) -> Self {
        Failure { code: 1, err }
    }
}

impl From<ScenarioError> for Failure {
    fn from(e: ScenarioError) -> Self {
        match e {
            ScenarioError::Io { .. } => Failure {
                code: 1,
                err: e.into(),
            },
            _ => Failure::validation(e),
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run {
            scenarios,
            out,
            seed,
            jobs,
            certify,
        } => cmd_run(&scenarios, &out, seed, jobs, certify),
        Command::Certify { scenario } => cmd_certify(&scenario),
        Command::Preset {
            name,
            emit,
            out,
            seed,
        } => cmd_preset(&name, emit, out, seed),
        Command::Graph {
            command: GraphCommand::Check { graph },
        } => cmd_graph_check(&graph),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(f) => {
            eprintln!("error: {:#}", f.err);
            ExitCode::from(f.code)
        }
    }
}

/// Writes to stdout; a closed pipe (`| head`) is not an error.
fn print_out(text: &str) {
    let mut out = io::stdout().lock();
    let _ = writeln!(out, "{text}").and_then(|_| out.flush());
}

fn load(path: &Path, seed: Option<u64>) -> Result<Scenario, Failure> {
    let text = fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))?;
    let mut file = scenario::parse_scenario_str(&text, &path.display().to_string())?;
    if let Some(seed) = seed {
        file.seed = seed;
    }
    if file.name.is_none() {
        file.name = path.file_stem().map(|s| s.to_string_lossy().into_owned());
    }
    Ok(file.resolve_in(path.parent())?)
}

fn cmd_run(paths: &[PathBuf], out: &Path, seed: Option<u64>, jobs: usize, certify: bool) -> Result<u8, Failure> {
    let scenarios = paths
        .iter()
        .map(|p| load(p, seed))
        .collect::<Result<Vec<_>, _>>()?;
    let exec = if jobs == 1 {
        Execution::Sequential
    } else {
        if jobs > 1 {
            // Only the first configuration of the global pool takes effect.
            rayon::ThreadPoolBuilder::new().num_threads(jobs).build_global().ok();
        }
        Execution::Parallel
    };
    let runs = run_batch(&scenarios, exec);
    let nested = scenarios.len() > 1;
    let mut code = 0;
    for (s, run) in scenarios.iter().zip(runs) {
        let run = run.map_err(|e| match e {
            SimError::InvalidConfig(_) | SimError::BadInitialization { .. } => Failure::validation(e),
            other => Failure::from(anyhow::Error::from(other)),
        })?;
        let dir = if nested { out.join(&s.name) } else { out.to_path_buf() };
        let cert = certify.then(|| s.certify());
        write_outputs(&dir, s, &run, cert)?;
        report_run(&dir, &run.summary);
        if run.summary.blowup_t.is_some() {
            code = EXIT_BLOWUP;
        }
    }
    Ok(code)
}

fn report_run(dir: &Path, s: &RunSummary) {
    match s.blowup_t {
        Some(t) => eprintln!(
            "{}: numerical blowup at t = {t}; partial outputs in {}",
            s.name,
            dir.display()
        ),
        None => eprintln!(
            "{}: t = {}, max error {:.3e}, {} broadcasts -> {}",
            s.name,
            s.t_end,
            s.max_final_error,
            s.events.counts.iter().sum::<usize>(),
            dir.display()
        ),
    }
}

#[derive(Serialize)]
struct Summary<'a> {
    seed: u64,
    alpha: f64,
    beta: f64,
    h: f64,
    #[serde(flatten)]
    run: &'a RunSummary,
    #[serde(skip_serializing_if = "Option::is_none")]
    certificate: Option<CertificateEntry>,
}

#[derive(Serialize)]
#[serde(untagged)]
enum CertificateEntry {
    Report(Box<CertificateReport>),
    Error { error: String },
}

fn write_outputs(
    dir: &Path,
    s: &Scenario,
    run: &Run,
    cert: Option<Result<CertificateReport, CertError>>,
) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("cannot create {}", dir.display()))?;
    write_trace(&dir.join("trace.csv"), &run.trace)?;
    write_events(&dir.join("events.csv"), &run.trace)?;
    let summary = Summary {
        seed: s.seed,
        alpha: s.params.alpha,
        beta: s.params.beta,
        h: s.h,
        run: &run.summary,
        certificate: cert.map(|c| match c {
            Ok(r) => CertificateEntry::Report(Box::new(r)),
            Err(e) => CertificateEntry::Error { error: e.to_string() },
        }),
    };
    let file = File::create(dir.join("summary.json"))?;
    serde_json::to_writer_pretty(io::BufWriter::new(file), &summary)?;
    Ok(())
}

/// One row per (sample, agent). `event` is 1 when the agent broadcast
/// since the previous sample (at `t = 0` for the initial broadcast).
fn write_trace(path: &Path, trace: &Trace) -> Result<()> {
    let mut w = csv::Writer::from_path(path).with_context(|| format!("cannot write {}", path.display()))?;
    let d = trace.d;
    let mut header = vec!["t".to_string(), "agent".to_string()];
    if d == 1 {
        header.extend(["x".into(), "v".into()]);
    } else {
        header.extend((1..=d).map(|k| format!("x{k}")));
        header.extend((1..=d).map(|k| format!("v{k}")));
    }
    header.extend(["err".into(), "event".into()]);
    w.write_record(&header)?;

    let mut next_event = 0;
    let mut events = trace.events.clone();
    events.sort_by(|a, b| a.t.total_cmp(&b.t));
    let mut fired = vec![false; trace.n];
    for s in &trace.samples {
        fired.iter_mut().for_each(|f| *f = false);
        while next_event < events.len() && events[next_event].t <= s.t {
            fired[events[next_event].agent] = true;
            next_event += 1;
        }
        let errs = trace.errors(s);
        for i in 0..trace.n {
            let mut row = vec![s.t.to_string(), (i + 1).to_string()];
            row.extend((0..d).map(|k| s.x[(i, k)].to_string()));
            row.extend((0..d).map(|k| s.v[(i, k)].to_string()));
            row.push(errs[i].to_string());
            row.push(u8::from(fired[i]).to_string());
            w.write_record(&row)?;
        }
    }
    w.flush()?;
    Ok(())
}

fn write_events(path: &Path, trace: &Trace) -> Result<()> {
    let mut w = csv::Writer::from_path(path).with_context(|| format!("cannot write {}", path.display()))?;
    w.write_record(["agent", "t"])?;
    for e in &trace.events {
        w.write_record([(e.agent + 1).to_string(), e.t.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

fn scheme_feasible(s: &Scenario, f: &Feasibility) -> bool {
    match s.scheme {
        CommScheme::Continuous if s.schedule.graphs().iter().all(|g| g.is_undirected()) => {
            f.undirected_continuous
        }
        CommScheme::Continuous => f.digraph_continuous,
        CommScheme::Periodic { .. } => f.periodic,
        CommScheme::CentralizedEvent { .. } => f.centralized_event,
        CommScheme::DistributedEvent { .. } => f.distributed_event,
    }
}

fn cmd_certify(path: &Path) -> Result<u8, Failure> {
    let s = load(path, None)?;
    let report = match s.certify() {
        Ok(r) => r,
        Err(CertError::Cost(CostError::MissingLipschitz { agent })) => {
            return Err(Failure::validation(anyhow::anyhow!(
                "agent {} has only a locally Lipschitz gradient; add \"analysis\": {{\"box\": [lo, hi]}} to estimate its constants there",
                agent + 1
            )))
        }
        Err(CertError::Infeasible(msg)) => {
            eprintln!("infeasible: {msg}");
            return Ok(EXIT_INFEASIBLE);
        }
        Err(e) => return Err(Failure::validation(e)),
    };
    print_out(&serde_json::to_string_pretty(&report).context("cannot encode report")?);
    if scheme_feasible(&s, &report.feasible) {
        Ok(0)
    } else {
        eprintln!("the certificate does not cover this scenario's scheme; see \"feasible\" and \"notes\"");
        Ok(EXIT_INFEASIBLE)
    }
}

fn cmd_preset(name: &str, emit: bool, out: Option<PathBuf>, seed: Option<u64>) -> Result<u8, Failure> {
    let mut file: ScenarioFile = scenario::preset(name)?;
    if let Some(seed) = seed {
        file.seed = seed;
    }
    if emit {
        print_out(&file.to_json());
        return Ok(0);
    }
    let s = file.resolve()?;
    let out = out.unwrap_or_else(|| Path::new("out").join(name));
    let run = distopt::sweep::run_scenario(&s).map_err(|e| Failure::from(anyhow::Error::from(e)))?;
    write_outputs(&out, &s, &run, None)?;
    report_run(&out, &run.summary);
    Ok(if run.summary.blowup_t.is_some() { EXIT_BLOWUP } else { 0 })
}

#[derive(Serialize)]
struct GraphReport {
    n: usize,
    edges: usize,
    #[serde(flatten)]
    spectrum: GraphSpectrum,
}

fn cmd_graph_check(path: &Path) -> Result<u8, Failure> {
    let g = WeightedDigraph::load(path).map_err(Failure::validation)?;
    let spectrum = spectral_summary(&g);
    let certified = spectrum.certified();
    let report = GraphReport {
        n: g.n(),
        edges: g.edges().len(),
        spectrum,
    };
    print_out(&serde_json::to_string_pretty(&report).context("cannot encode report")?);
    if certified {
        Ok(0)
    } else {
        eprintln!("graph is not a weight-balanced, strongly connected digraph");
        Ok(EXIT_VALIDATION)
    }
}
