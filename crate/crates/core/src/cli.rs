//! Command-line front end. `run` returns the process exit code so tests can
//! drive it in-process.

use std::ffi::OsString;
use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use thiserror::Error;

use crate::equilibria::{
    bipartite_spectrum, find_equilibria, omega_set, star_closed_form, EquilibriaError,
    EquilibriaReport, OmegaDescriptor, SolverOptions,
};
use crate::experiments::{
    run_ensemble, unstable_avoidance_report, write_trials_csv, ExperimentError, ExperimentSpec,
    Target,
};
use crate::graph::{Family, Graph, GraphError, Hypergraph};
use crate::model::{FieldSpec, Model, ModelError, Topology};
use crate::report::{fmt17, write_equilibria_csv, write_json, write_trajectory_csv};
use crate::urn::{simulate, CheckpointSchedule, RngSpec, UrnError, UrnState};
use crate::verify::{check_case, continuum_checks, run_suite, Case, CheckResult, VerifyOptions};

/// Environment variable capping the Monte Carlo worker count.
pub const THREADS_ENV: &str = "POLYAGRAPH_THREADS";

/// Largest vertex count for which Monte Carlo runs enumerate equilibria for labels.
const LABEL_FACE_LIMIT: usize = 10;

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Urn(#[from] UrnError),
    #[error(transparent)]
    Equilibria(#[from] EquilibriaError),
    #[error(transparent)]
    Experiment(#[from] ExperimentError),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error("{0}")]
    Invalid(String),
}

fn io_at(path: &Path) -> impl FnOnce(io::Error) -> CliError + '_ {
    move |source| CliError::Io {
        path: path.to_path_buf(),
        source,
    }
}

#[derive(Debug, Parser)]
#[command(name = "polyagraph", version, about = "Graph-based Polya urn toolkit")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run one urn trajectory and write it as CSV.
    Simulate(SimulateArgs),
    /// Enumerate and classify equilibria of the mean-field flow.
    Equilibria(EquilibriaArgs),
    /// Run an ensemble of independent trials.
    Montecarlo(MontecarloArgs),
    /// Run the property suite.
    Verify(VerifyArgs),
}

#[derive(Debug, Clone, Args)]
pub struct ModelArgs {
    /// Generator string (complete:5, cycle:4, path:3, star:4,
    /// complete_bipartite:3:3, hyper:one-edge:4) or an edge-list file.
    #[arg(long)]
    pub graph: String,
    /// Uniform interaction exponent.
    #[arg(long, conflicts_with_all = ["alpha_table", "hyper"])]
    pub alpha: Option<f64>,
    /// Key/value file of per-edge exponents: `default = a` and `i-j = a` lines.
    #[arg(long, conflicts_with = "hyper")]
    pub alpha_table: Option<PathBuf>,
    /// Read the graph file as a hypergraph (one hyperedge per line).
    #[arg(long)]
    pub hyper: bool,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    #[arg(long, default_value_t = 100_000)]
    pub steps: u64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Comma-separated initial ball counts (default: one per bin).
    #[arg(long)]
    pub initial: Option<String>,
    #[arg(long, default_value = "polyagraph-run")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct EquilibriaArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    #[arg(long, default_value_t = 0x5eed)]
    pub seed: u64,
    /// Only search the full-support face.
    #[arg(long)]
    pub interior_only: bool,
    #[arg(long, default_value = "polyagraph-run")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct MontecarloArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    #[arg(long, default_value_t = 100_000)]
    pub steps: u64,
    #[arg(long, default_value_t = 200)]
    pub trials: u64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// uniform, omega, star, point:x1,x2,..., equilibria or none.
    #[arg(long, default_value = "none")]
    pub target: String,
    /// Sup-norm radius for convergence and label hits.
    #[arg(long, default_value_t = 0.05)]
    pub tolerance: f64,
    /// Sup-norm radius around unstable equilibria.
    #[arg(long, default_value_t = 0.02)]
    pub avoidance_radius: f64,
    #[arg(long)]
    pub threads: Option<usize>,
    #[arg(long)]
    pub initial: Option<String>,
    #[arg(long, default_value = "polyagraph-run")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct VerifyArgs {
    /// Restrict the suite to one model instead of the standard grid.
    #[arg(long)]
    pub graph: Option<String>,
    #[arg(long, requires = "graph")]
    pub alpha: Option<f64>,
    #[arg(long, requires = "graph")]
    pub hyper: bool,
    /// Smaller sample sizes.
    #[arg(long)]
    pub quick: bool,
    #[arg(long)]
    pub seed: Option<u64>,
}

/// Parses `args` (including the program name) and runs the command.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    let stdout = io::stdout();
    match execute(&cli.command, &mut stdout.lock()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            1
        }
    }
}

/// Runs a parsed command, writing the human-readable report to `out`.
pub fn execute<W: Write>(command: &Command, out: &mut W) -> Result<i32, CliError> {
    match command {
        Command::Simulate(a) => cmd_simulate(a, out),
        Command::Equilibria(a) => cmd_equilibria(a, out),
        Command::Montecarlo(a) => cmd_montecarlo(a, out),
        Command::Verify(a) => cmd_verify(a, out),
    }
}

fn read(path: &Path) -> Result<String, CliError> {
    fs::read_to_string(path).map_err(io_at(path))
}

pub fn build_model(args: &ModelArgs) -> Result<Model, CliError> {
    let topology = match args.graph.parse::<Family>() {
        Ok(Family::HyperOneEdge(m)) => Topology::Hyper(Hypergraph::one_edge(m)?),
        Ok(f) if args.hyper => {
            return Err(CliError::Invalid(format!(
                "--hyper expects a hypergraph file, got generator {f}"
            )))
        }
        Ok(f) => Topology::Graph(Graph::generate(&f)?),
        Err(_) if looks_like_generator(&args.graph) && !Path::new(&args.graph).exists() => {
            return Err(GraphError::InvalidGenerator(args.graph.clone()).into())
        }
        Err(_) => {
            let text = read(Path::new(&args.graph))?;
            if args.hyper {
                Topology::Hyper(Hypergraph::parse(&text)?)
            } else {
                Topology::Graph(Graph::parse(&text)?)
            }
        }
    };
    let spec = match (&topology, &args.alpha_table) {
        (Topology::Hyper(_), _) => {
            if args.alpha.is_some_and(|a| a != 1.0) {
                return Err(CliError::Invalid(
                    "hypergraphs use proportional choice; --alpha must be 1 or absent".into(),
                ));
            }
            FieldSpec::Hypergraph
        }
        (Topology::Graph(g), Some(path)) => FieldSpec::PerEdgeAlpha(parse_alpha_table(g, &read(path)?)?),
        (Topology::Graph(_), None) => FieldSpec::UniformAlpha(args.alpha.unwrap_or(1.0)),
    };
    Ok(Model::new(topology, spec)?)
}

fn looks_like_generator(s: &str) -> bool {
    s.contains(':') && !s.contains('/') && !s.contains('.')
}

/// Per-edge exponents from `key = value` lines. Keys are `default` or an edge
/// `i-j` in 1-based labels; every edge needs a value from one of the two.
pub fn parse_alpha_table(graph: &Graph, text: &str) -> Result<Vec<f64>, CliError> {
    let mut default = None;
    let mut table = vec![None; graph.edge_count()];
    for (k, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let bad = |msg: &str| CliError::Invalid(format!("alpha table line {}: {msg}", k + 1));
        let (key, value) = line.split_once('=').ok_or_else(|| bad("expected `key = value`"))?;
        let value: f64 = value
            .trim()
            .parse()
            .map_err(|_| bad("value is not a number"))?;
        let key = key.trim();
        if key == "default" {
            default = Some(value);
            continue;
        }
        let (i, j) = key
            .split_once('-')
            .and_then(|(i, j)| Some((i.trim().parse::<usize>().ok()?, j.trim().parse::<usize>().ok()?)))
            .ok_or_else(|| bad("key must be `default` or `i-j`"))?;
        let e = (i >= 1 && j >= 1)
            .then(|| graph.edge_index(i - 1, j - 1))
            .flatten()
            .ok_or_else(|| bad(&format!("{i}-{j} is not an edge")))?;
        table[e] = Some(value);
    }
    table
        .into_iter()
        .enumerate()
        .map(|(e, v)| {
            v.or(default).ok_or_else(|| {
                let (i, j) = graph.edges()[e];
                CliError::Invalid(format!("alpha table has no value for edge {}-{}", i + 1, j + 1))
            })
        })
        .collect()
}

fn parse_initial(model: &Model, s: Option<&str>) -> Result<Option<Vec<u64>>, CliError> {
    let Some(s) = s else { return Ok(None) };
    let counts = s
        .split(',')
        .map(|t| t.trim().parse::<u64>())
        .collect::<Result<Vec<_>, _>>()
        .map_err(|_| CliError::Invalid(format!("bad initial counts `{s}`")))?;
    UrnState::new(model, counts.clone())?;
    Ok(Some(counts))
}

fn parse_target(model: &Model, s: &str) -> Result<Target, CliError> {
    let m = model.vertex_count();
    let need_graph = || {
        model
            .graph()
            .ok_or_else(|| CliError::Invalid(format!("target `{s}` needs a graph")))
    };
    Ok(match s {
        "none" => Target::None,
        "uniform" => Target::Point(vec![1.0 / m as f64; m]),
        "omega" => Target::Omega(omega_set(need_graph()?)?),
        "star" => {
            let g = need_graph()?;
            if !is_star(g) {
                return Err(CliError::Invalid("target `star` needs a star graph".into()));
            }
            let alpha = model
                .common_alpha()
                .ok_or_else(|| CliError::Invalid("target `star` needs a uniform exponent".into()))?;
            Target::Point(star_closed_form(m, alpha)?)
        }
        "equilibria" => {
            let report = find_equilibria(model, &SolverOptions::default())?;
            Target::EquilibriaSet(report.equilibria().map(|e| e.point.clone()).collect())
        }
        _ => {
            let coords = s
                .strip_prefix("point:")
                .ok_or_else(|| CliError::Invalid(format!("unknown target `{s}`")))?
                .split(',')
                .map(|t| t.trim().parse::<f64>())
                .collect::<Result<Vec<_>, _>>()
                .map_err(|_| CliError::Invalid(format!("bad target point `{s}`")))?;
            Target::Point(coords)
        }
    })
}

fn create_dir(path: &Path) -> Result<(), CliError> {
    fs::create_dir_all(path).map_err(io_at(path))
}

fn write_file(path: &Path, f: impl FnOnce(&mut io::BufWriter<fs::File>) -> io::Result<()>) -> Result<(), CliError> {
    let file = fs::File::create(path).map_err(io_at(path))?;
    let mut w = io::BufWriter::new(file);
    f(&mut w).and_then(|()| w.flush()).map_err(io_at(path))
}

fn write_json_file<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    write_file(path, |w| {
        write_json(&mut *w, value)?;
        writeln!(w)
    })
}

#[derive(Serialize)]
struct SpecRecord<'a> {
    command: &'a str,
    graph: &'a str,
    model: String,
    field: &'a FieldSpec,
    steps: Option<u64>,
    trials: Option<u64>,
    master_seed: u64,
    spec_hash: String,
    target: Option<&'a str>,
    tolerance: Option<f64>,
}

#[derive(Serialize)]
struct SimulateSummary {
    master_seed: u64,
    spec_hash: String,
    steps: u64,
    final_counts: Vec<u64>,
    final_proportions: Vec<f64>,
}

fn cmd_simulate<W: Write>(a: &SimulateArgs, out: &mut W) -> Result<i32, CliError> {
    let model = build_model(&a.model)?;
    let initial = parse_initial(&model, a.initial.as_deref())?;
    let mut spec = ExperimentSpec::new(model.clone(), a.steps, 1, a.seed);
    spec.initial_counts = initial.clone();
    spec.schedule = CheckpointSchedule::default();
    let hash = spec.hash();
    let state = match initial {
        Some(c) => UrnState::new(&model, c)?,
        None => UrnState::ones(&model),
    };
    let mut rng = RngSpec::new(a.seed, 0).rng();
    let result = simulate(&model, state, a.steps, &mut rng, &spec.schedule)?;

    create_dir(&a.out.join("trajectories"))?;
    write_json_file(
        &a.out.join("spec.json"),
        &SpecRecord {
            command: "simulate",
            graph: &a.model.graph,
            model: model.canonical_text(),
            field: model.spec(),
            steps: Some(a.steps),
            trials: None,
            master_seed: a.seed,
            spec_hash: hash.clone(),
            target: None,
            tolerance: None,
        },
    )?;
    write_file(&a.out.join("trajectories").join("trajectory.csv"), |w| {
        write_trajectory_csv(w, &result)
    })?;
    let summary = SimulateSummary {
        master_seed: a.seed,
        spec_hash: hash,
        steps: a.steps,
        final_counts: result.final_state.counts.clone(),
        final_proportions: result.final_state.proportions(),
    };
    write_json_file(&a.out.join("summary.json"), &summary)?;
    let x: Vec<String> = summary.final_proportions.iter().map(|v| fmt17(*v)).collect();
    writeln!(out, "steps {}", a.steps).map_err(io_at(&a.out))?;
    writeln!(out, "final {}", x.join(",")).map_err(io_at(&a.out))?;
    Ok(0)
}

#[derive(Serialize)]
struct EquilibriaSummary<'a> {
    spec_hash: String,
    seed: u64,
    report: &'a EquilibriaReport,
    omega: Option<OmegaDescriptor>,
    spectral_flags: &'a [SpectralRow],
    star_closed_form: Option<Vec<f64>>,
}

#[derive(Serialize)]
struct SpectralRow {
    p: f64,
    relation_error: f64,
    second_smallest_abs_real: f64,
    zero_is_simple: bool,
    nonzero_have_negative_real_part: bool,
    complex_real_parts_equal_half_degree: bool,
    degree_is_largest_real_eigenvalue: bool,
    degree_is_simple: bool,
}

fn cmd_equilibria<W: Write>(a: &EquilibriaArgs, out: &mut W) -> Result<i32, CliError> {
    let model = build_model(&a.model)?;
    let opts = SolverOptions {
        seed: a.seed,
        full_support_only: a.interior_only,
        ..SolverOptions::default()
    };
    let report = find_equilibria(&model, &opts)?;
    let m = model.vertex_count();
    let mut omega = None;
    let mut spectral_flags = Vec::new();
    let mut closed = None;
    if let Some(g) = model.graph() {
        if let Ok(o) = omega_set(g) {
            if model.common_alpha() == Some(1.0) {
                for k in 1..=5 {
                    let p = o.mass() * k as f64 / 6.0;
                    let r = bipartite_spectrum(g, p)?;
                    spectral_flags.push(SpectralRow {
                        p,
                        relation_error: r.relation_error,
                        second_smallest_abs_real: r.second_smallest_abs_real,
                        zero_is_simple: r.zero_is_simple,
                        nonzero_have_negative_real_part: r.nonzero_have_negative_real_part,
                        complex_real_parts_equal_half_degree: r.complex_real_parts_equal_half_degree,
                        degree_is_largest_real_eigenvalue: r.degree_is_largest_real_eigenvalue,
                        degree_is_simple: r.degree_is_simple,
                    });
                }
            }
            omega = Some(o);
        }
        if is_star(g) {
            closed = model.common_alpha().and_then(|al| star_closed_form(m, al).ok());
        }
    }
    let mut spec = ExperimentSpec::new(model.clone(), 0, 1, a.seed);
    spec.schedule = CheckpointSchedule::Explicit(Vec::new());
    create_dir(&a.out)?;
    write_file(&a.out.join("equilibria.csv"), |w| write_equilibria_csv(w, m, &report))?;
    write_json_file(
        &a.out.join("summary.json"),
        &EquilibriaSummary {
            spec_hash: spec.hash(),
            seed: a.seed,
            report: &report,
            omega,
            spectral_flags: &spectral_flags,
            star_closed_form: closed,
        },
    )?;
    let w = |e: io::Error| CliError::Io {
        path: PathBuf::from("<stdout>"),
        source: e,
    };
    write_equilibria_csv(&mut *out, m, &report).map_err(w)?;
    for f in report.continua() {
        if let crate::equilibria::FaceOutcome::Continuum { dimension } = f.outcome {
            let s: Vec<String> = f.support.iter().map(|v| (v + 1).to_string()).collect();
            writeln!(out, "continuum support={} dimension={dimension}", s.join(" ")).map_err(w)?;
        }
    }
    for r in &spectral_flags {
        let all = r.zero_is_simple
            && r.nonzero_have_negative_real_part
            && r.complex_real_parts_equal_half_degree
            && r.degree_is_largest_real_eigenvalue
            && r.degree_is_simple;
        writeln!(out, "spectrum p={} flags={}", fmt17(r.p), all).map_err(w)?;
    }
    Ok(0)
}

/// Center at the last vertex, joined to every leaf and nothing else.
fn is_star(g: &Graph) -> bool {
    let m = g.vertex_count();
    m >= 3 && g.degree(m - 1) == m - 1 && g.edge_count() == m - 1
}

/// `--threads`, capped by the environment variable when set.
pub fn worker_count(requested: Option<usize>) -> Option<usize> {
    let cap = std::env::var(THREADS_ENV)
        .ok()
        .and_then(|v| v.trim().parse::<usize>().ok())
        .filter(|&n| n > 0);
    match (requested, cap) {
        (Some(r), Some(c)) => Some(r.min(c)),
        (r, c) => r.or(c),
    }
}

#[derive(Serialize)]
struct MontecarloSummary<'a> {
    #[serde(flatten)]
    ensemble: &'a crate::experiments::EnsembleSummary,
    labels: &'a [Vec<f64>],
    avoidance: Option<crate::experiments::AvoidanceReport>,
}

fn cmd_montecarlo<W: Write>(a: &MontecarloArgs, out: &mut W) -> Result<i32, CliError> {
    let model = build_model(&a.model)?;
    let mut spec = ExperimentSpec::new(model.clone(), a.steps, a.trials, a.seed);
    spec.initial_counts = parse_initial(&model, a.initial.as_deref())?;
    spec.target = parse_target(&model, &a.target)?;
    spec.tolerance = a.tolerance;
    spec.workers = worker_count(a.threads);
    let mut unstable = Vec::new();
    if model.vertex_count() <= LABEL_FACE_LIMIT {
        let report = find_equilibria(&model, &SolverOptions::default())?;
        for e in report.isolated() {
            spec.labels.push(e.point.clone());
            if e.assessment.classification.is_unstable() {
                unstable.push(e.point.clone());
            }
        }
    }
    let ensemble = run_ensemble(&spec)?;
    let avoidance = (!unstable.is_empty())
        .then(|| unstable_avoidance_report(&model, &unstable, &ensemble.trials, a.avoidance_radius));

    create_dir(&a.out.join("trajectories"))?;
    write_json_file(
        &a.out.join("spec.json"),
        &SpecRecord {
            command: "montecarlo",
            graph: &a.model.graph,
            model: model.canonical_text(),
            field: model.spec(),
            steps: Some(a.steps),
            trials: Some(a.trials),
            master_seed: a.seed,
            spec_hash: ensemble.summary.spec_hash.clone(),
            target: Some(&a.target),
            tolerance: Some(a.tolerance),
        },
    )?;
    write_file(&a.out.join("trajectories").join("trials.csv"), |w| {
        write_trials_csv(w, &ensemble.summary, &ensemble.trials)
    })?;
    let summary = MontecarloSummary {
        ensemble: &ensemble.summary,
        labels: &spec.labels,
        avoidance,
    };
    write_json_file(&a.out.join("summary.json"), &summary)?;
    let w = |e: io::Error| CliError::Io {
        path: PathBuf::from("<stdout>"),
        source: e,
    };
    let s = &ensemble.summary;
    writeln!(out, "trials {} failed {}", s.n_trials, s.n_failed).map_err(w)?;
    if let Some(f) = s.fraction_within_tolerance {
        writeln!(out, "fraction_within_tolerance {}", fmt17(f)).map_err(w)?;
    }
    if let Some(q) = s.checkpoints.last().and_then(|c| c.distance.as_ref()) {
        writeln!(out, "final_distance_median {}", fmt17(q.median)).map_err(w)?;
    }
    for (label, (hits, near)) in spec
        .labels
        .iter()
        .zip(s.label_hits.iter().zip(&s.label_within_tolerance))
    {
        let p: Vec<String> = label.iter().map(|v| fmt17(*v)).collect();
        writeln!(out, "label {} nearest {hits} within_tolerance {near}", p.join(",")).map_err(w)?;
    }
    if summary.avoidance.as_ref().is_some_and(|r| r.failed) {
        writeln!(out, "avoidance FAILED").map_err(w)?;
    }
    Ok(0)
}

fn cmd_verify<W: Write>(a: &VerifyArgs, out: &mut W) -> Result<i32, CliError> {
    let mut opts = if a.quick {
        VerifyOptions::quick()
    } else {
        VerifyOptions::full()
    };
    if let Some(seed) = a.seed {
        opts.seed = seed;
    }
    let checks: Vec<CheckResult> = match &a.graph {
        None => run_suite(&opts),
        Some(graph) => {
            let model = build_model(&ModelArgs {
                graph: graph.clone(),
                alpha: a.alpha,
                alpha_table: None,
                hyper: a.hyper,
            })?;
            let case = Case::new(graph.clone(), model);
            let mut checks = check_case(&case, &opts);
            let needs_continuum = case.model.graph().is_none()
                && !checks.iter().any(|c| c.name == "continuum_detected");
            if needs_continuum {
                use rand::SeedableRng;
                let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(opts.seed);
                checks.extend(continuum_checks(&case, opts.points_per_case, &mut rng));
            }
            checks
        }
    };
    let w = |e: io::Error| CliError::Io {
        path: PathBuf::from("<stdout>"),
        source: e,
    };
    let mut failed = 0;
    for c in &checks {
        if !c.passed {
            failed += 1;
        }
        writeln!(
            out,
            "{} {} [{}] worst={} bound={}",
            if c.passed { "PASS" } else { "FAIL" },
            c.name,
            c.case,
            fmt17(c.worst),
            fmt17(c.bound)
        )
        .map_err(w)?;
    }
    writeln!(out, "{} checks, {} failed", checks.len(), failed).map_err(w)?;
    Ok(i32::from(failed > 0))
}
