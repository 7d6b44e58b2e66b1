use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use serde_json::Value;

use pco_core::analysis::{rate_bounds, DEFAULT_BOUNDS_GRID};
use pco_core::dynamics::PhaseState;
use pco_core::experiments::{
    desync_census, run_grid, run_grid_with_jobs, summarize_ode, summarize_pulse, CensusReport, ExperimentConfig,
    ExperimentReport, SimulationSummary,
};
use pco_core::prf::{
    verify_epsilon_monotonicity, AdmissibilityReport, EpsilonMonotonicityReport,
    PhaseResponseFunction,
};
use pco_core::scenario::{InitialPhases, Scenario, Simulator};
use pco_core::Error;

/// Default directory for output files when `--output` is not given.
const OUT_DIR_ENV: &str = "PCO_OUT_DIR";

#[derive(Parser, Debug)]
#[command(name = "pco", version, about = "Pulse-coupled oscillator synchronization toolkit")]
struct Cli {
    #[command(flatten)]
    global: GlobalOpts,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug)]
struct GlobalOpts {
    /// Overrides the seed in the scenario or experiment file.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output file; defaults to $PCO_OUT_DIR/<command>.<ext>, else stdout.
    #[arg(short, long, global = true)]
    output: Option<PathBuf>,
    #[arg(short, long, global = true, value_enum, default_value_t = Format::Json)]
    format: Format,
    /// Increase log verbosity (-v info, -vv debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    /// Worker threads for sweeps.
    #[arg(short, long, global = true)]
    jobs: Option<usize>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum Format {
    Csv,
    Json,
    Table,
}

impl Format {
    fn extension(self) -> &'static str {
        match self {
            Format::Csv => "csv",
            Format::Json => "json",
            Format::Table => "txt",
        }
    }
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Check a PRF for admissibility and, for Tanh, the width monotonicity.
    PrfCheck(PrfCheckArgs),
    /// Theoretical rate bounds and sufficient conditions for a scenario.
    Bounds(BoundsArgs),
    /// Simulate one scenario.
    Simulate(SimulateArgs),
    /// Run a Monte Carlo grid.
    Sweep(ExperimentArgs),
    /// Count runs that fail to synchronize by t_max.
    DesyncCensus(ExperimentArgs),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum Family {
    Tanh,
    Sine,
}

#[derive(Args, Debug)]
struct PrfCheckArgs {
    #[arg(long, value_enum, conflicts_with = "table", required_unless_present = "table")]
    family: Option<Family>,
    /// Width of the Tanh family.
    #[arg(long, allow_hyphen_values = true)]
    epsilon: Option<f64>,
    /// Amplitude of the Sine family.
    #[arg(long, allow_hyphen_values = true)]
    amplitude: Option<f64>,
    /// Tabulated PRF as CSV `x,q`.
    #[arg(long)]
    table: Option<PathBuf>,
    #[arg(long, default_value_t = 10_000)]
    grid: usize,
}

#[derive(Args, Debug)]
struct BoundsArgs {
    scenario: PathBuf,
    /// Overrides `eps_bar` in the scenario.
    #[arg(long)]
    eps_bar: Option<f64>,
    #[arg(long, default_value_t = DEFAULT_BOUNDS_GRID)]
    grid: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum SimulatorArg {
    Ode,
    Pulse,
}

#[derive(Args, Debug)]
struct SimulateArgs {
    scenario: PathBuf,
    /// Overrides the simulator in the scenario.
    #[arg(long, value_enum)]
    simulator: Option<SimulatorArg>,
    /// Overrides the step size.
    #[arg(long)]
    dt: Option<f64>,
    /// Trajectory CSV; defaults to $PCO_OUT_DIR/simulate_trajectory.csv.
    #[arg(long)]
    trajectory: Option<PathBuf>,
    /// Keep every n-th integration step in the trajectory.
    #[arg(long, default_value_t = 10)]
    stride: usize,
}

#[derive(Args, Debug)]
struct ExperimentArgs {
    /// Experiment config file.
    #[arg(required_unless_present = "preset", conflicts_with = "preset")]
    config: Option<PathBuf>,
    /// A shipped config: table1, table2, table3 or desync.
    #[arg(long)]
    preset: Option<String>,
    /// Overrides the number of runs per cell.
    #[arg(long)]
    runs: Option<usize>,
}

/// A failed check (exit 1) versus a usage or configuration problem (exit 2).
enum Outcome {
    Passed,
    CheckFailed,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.global.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match run(&cli) {
        Ok(Outcome::Passed) => ExitCode::SUCCESS,
        Ok(Outcome::CheckFailed) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}

fn run(cli: &Cli) -> Result<Outcome, Error> {
    let g = &cli.global;
    match &cli.command {
        Command::PrfCheck(a) => cmd_prf_check(g, a),
        Command::Bounds(a) => cmd_bounds(g, a),
        Command::Simulate(a) => cmd_simulate(g, a),
        Command::Sweep(a) => cmd_sweep(g, a),
        Command::DesyncCensus(a) => cmd_desync_census(g, a),
    }
}

fn default_path(name: &str) -> Option<PathBuf> {
    std::env::var_os(OUT_DIR_ENV).map(|dir| PathBuf::from(dir).join(name))
}

fn open_output(explicit: Option<&Path>, default_name: &str) -> Result<Box<dyn Write>, Error> {
    let path = explicit.map(Path::to_path_buf).or_else(|| default_path(default_name));
    match path {
        Some(p) => {
            if let Some(dir) = p.parent().filter(|d| !d.as_os_str().is_empty()) {
                std::fs::create_dir_all(dir)?;
            }
            log::info!("writing {}", p.display());
            Ok(Box::new(BufWriter::new(File::create(p)?)))
        }
        None => Ok(Box::new(io::stdout().lock())),
    }
}

fn primary_output(g: &GlobalOpts, command: &str) -> Result<Box<dyn Write>, Error> {
    open_output(
        g.output.as_deref(),
        &format!("{command}.{}", g.format.extension()),
    )
}

/// Writes a record as JSON, as `key,value` CSV rows of its leaves, or as
/// aligned text.
fn emit<T: Serialize>(g: &GlobalOpts, command: &str, record: &T) -> Result<(), Error> {
    let value = serde_json::to_value(record)?;
    let mut w = primary_output(g, command)?;
    match g.format {
        Format::Json => {
            serde_json::to_writer_pretty(&mut w, &value)?;
            writeln!(w)?;
        }
        Format::Csv => {
            let mut wtr = csv::Writer::from_writer(&mut w);
            wtr.write_record(["key", "value"])?;
            for (k, v) in leaves(&value) {
                wtr.write_record([k, v])?;
            }
            wtr.flush()?;
        }
        Format::Table => {
            let rows = leaves(&value);
            let width = rows.iter().map(|(k, _)| k.len()).max().unwrap_or(0);
            for (k, v) in rows {
                writeln!(w, "{k:<width$}  {v}")?;
            }
        }
    }
    w.flush()?;
    Ok(())
}

fn leaves(v: &Value) -> Vec<(String, String)> {
    fn walk(prefix: String, v: &Value, out: &mut Vec<(String, String)>) {
        let join = |k: &str| {
            if prefix.is_empty() {
                k.to_string()
            } else {
                format!("{prefix}.{k}")
            }
        };
        match v {
            Value::Object(m) => m.iter().for_each(|(k, v)| walk(join(k), v, out)),
            Value::Array(a) => a
                .iter()
                .enumerate()
                .for_each(|(i, v)| walk(join(&i.to_string()), v, out)),
            Value::String(s) => out.push((prefix, s.clone())),
            other => out.push((prefix, other.to_string())),
        }
    }
    let mut out = Vec::new();
    walk(String::new(), v, &mut out);
    out
}

#[derive(Serialize)]
struct PrfCheckRecord {
    prf: PhaseResponseFunction,
    passed: bool,
    admissibility: AdmissibilityReport,
    #[serde(skip_serializing_if = "Option::is_none")]
    epsilon_monotonicity: Option<EpsilonMonotonicityReport>,
}

fn cmd_prf_check(g: &GlobalOpts, a: &PrfCheckArgs) -> Result<Outcome, Error> {
    let prf = match (&a.table, a.family) {
        (Some(path), _) => PhaseResponseFunction::Custom(
            pco_core::prf::PrfTable::from_csv_path(path)?,
        ),
        (None, Some(Family::Tanh)) => PhaseResponseFunction::tanh(
            a.epsilon
                .ok_or_else(|| Error::InvalidArgument("--epsilon is required for tanh".into()))?,
        )?,
        (None, Some(Family::Sine)) => {
            PhaseResponseFunction::sine(a.amplitude.unwrap_or(1.0))?
        }
        (None, None) => return Err(Error::InvalidArgument("give --family or --table".into())),
    };
    let admissibility = prf.validate_admissibility(a.grid)?;
    let epsilon_monotonicity = match prf {
        PhaseResponseFunction::Tanh { epsilon } => {
            Some(verify_epsilon_monotonicity(&[epsilon], a.grid)?)
        }
        _ => None,
    };
    let passed =
        admissibility.passed() && epsilon_monotonicity.as_ref().is_none_or(|r| r.passed());
    if !passed {
        eprintln!(
            "check failed: {} oddness and {} sign violations, value at zero {}",
            admissibility.odd_violations.len(),
            admissibility.sign_violations.len(),
            admissibility.value_at_zero
        );
    }
    emit(
        g,
        "prf-check",
        &PrfCheckRecord {
            prf,
            passed,
            admissibility,
            epsilon_monotonicity,
        },
    )?;
    Ok(if passed {
        Outcome::Passed
    } else {
        Outcome::CheckFailed
    })
}

fn load_scenario(g: &GlobalOpts, path: &Path) -> Result<Scenario, Error> {
    let mut s = Scenario::from_json_path(path)?;
    if let (Some(seed), InitialPhases::Uniform { seed: s0, .. }) = (g.seed, &mut s.initial) {
        *s0 = seed;
    }
    Ok(s)
}

#[derive(Serialize)]
struct BoundsRecord {
    scenario: Scenario,
    eps_bar: f64,
    #[serde(flatten)]
    report: pco_core::analysis::BoundsReport,
}

fn cmd_bounds(g: &GlobalOpts, a: &BoundsArgs) -> Result<Outcome, Error> {
    let scenario = load_scenario(g, &a.scenario)?;
    let eps_bar = a
        .eps_bar
        .or(scenario.eps_bar)
        .ok_or_else(|| Error::Config("eps_bar missing: set it in the scenario or pass --eps-bar".into()))?;
    let topo = scenario.topology()?;
    let report = rate_bounds(&topo, &scenario.qg, &scenario.ql, eps_bar, a.grid)?;
    emit(
        g,
        "bounds",
        &BoundsRecord {
            scenario: scenario.resolved()?,
            eps_bar,
            report,
        },
    )?;
    Ok(Outcome::Passed)
}

#[derive(Serialize)]
struct SimulateRecord {
    scenario: Scenario,
    initial_phases: Vec<f64>,
    #[serde(flatten)]
    summary: SimulationSummary,
}

fn write_trace_csv(w: impl Write, config: &str, states: &[PhaseState]) -> Result<(), Error> {
    let mut w = w;
    writeln!(w, "# config: {config}")?;
    let traj = pco_core::dynamics::Trajectory {
        snapshots: states.to_vec(),
        ..Default::default()
    };
    traj.write_csv(w)
}

fn cmd_simulate(g: &GlobalOpts, a: &SimulateArgs) -> Result<Outcome, Error> {
    let mut scenario = load_scenario(g, &a.scenario)?;
    if let Some(sim) = a.simulator {
        scenario.simulator = match sim {
            SimulatorArg::Ode => Simulator::Ode,
            SimulatorArg::Pulse => Simulator::Pulse,
        };
    }
    if let Some(dt) = a.dt {
        scenario.dt = dt;
    }
    let topo = scenario.topology()?;
    let xi0 = scenario.initial_phases(topo.n())?;
    let resolved = scenario.resolved()?;
    let config_json = serde_json::to_string(&resolved)?;

    let run = match scenario.simulator {
        Simulator::Ode => {
            let cfg = scenario.integration_config().with_stride(a.stride.max(1));
            summarize_ode(&topo, &scenario.qg, &scenario.ql, &xi0, &cfg, &scenario.energy)?
        }
        Simulator::Pulse => summarize_pulse(
            &topo,
            &scenario.qg,
            &scenario.ql,
            &xi0,
            scenario.t_max,
            scenario.sync_tol,
            &scenario.energy,
        )?,
    };

    if let Some(w) = a
        .trajectory
        .clone()
        .or_else(|| default_path("simulate_trajectory.csv"))
        .map(|p| open_output(Some(&p), ""))
        .transpose()?
    {
        write_trace_csv(w, &config_json, &run.states)?;
    }
    emit(
        g,
        "simulate",
        &SimulateRecord {
            scenario: resolved,
            initial_phases: xi0,
            summary: run.summary,
        },
    )?;
    Ok(Outcome::Passed)
}

fn load_experiment(g: &GlobalOpts, a: &ExperimentArgs) -> Result<ExperimentConfig, Error> {
    let mut cfg = match (&a.config, &a.preset) {
        (Some(p), _) => ExperimentConfig::from_json_path(p)?,
        (None, Some(name)) => ExperimentConfig::preset(name)?,
        (None, None) => return Err(Error::Config("give a config file or --preset".into())),
    };
    if let Some(seed) = g.seed {
        cfg.seed = seed;
    }
    if let Some(runs) = a.runs {
        cfg.runs = runs;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn execute(g: &GlobalOpts, cfg: &ExperimentConfig) -> Result<ExperimentReport, Error> {
    match g.jobs {
        Some(j) => run_grid_with_jobs(cfg, j),
        None => run_grid(cfg),
    }
}

fn write_report(g: &GlobalOpts, command: &str, report: &ExperimentReport) -> Result<(), Error> {
    let mut w = primary_output(g, command)?;
    match g.format {
        Format::Csv => report.write_csv(&mut w)?,
        Format::Json => report.write_json(&mut w)?,
        Format::Table => {
            writeln!(w, "# config: {}", serde_json::to_string(&report.config)?)?;
            write!(w, "{}", report.format_table())?;
        }
    }
    w.flush()?;
    Ok(())
}

fn cmd_sweep(g: &GlobalOpts, a: &ExperimentArgs) -> Result<Outcome, Error> {
    let cfg = load_experiment(g, a)?;
    let report = execute(g, &cfg)?;
    write_report(g, "sweep", &report)?;
    Ok(Outcome::Passed)
}

fn cmd_desync_census(g: &GlobalOpts, a: &ExperimentArgs) -> Result<Outcome, Error> {
    let cfg = load_experiment(g, a)?;
    let census: CensusReport = match g.jobs {
        Some(j) => rayon_pool(j)?.install(|| desync_census(&cfg))?,
        None => desync_census(&cfg)?,
    };
    eprintln!(
        "{} of {} runs unsynchronized by t_max = {}",
        census.unsynchronized, census.runs, cfg.t_max
    );
    match g.format {
        Format::Json => emit(g, "desync-census", &census)?,
        _ => {
            #[derive(Serialize)]
            struct Brief<'a> {
                config: &'a ExperimentConfig,
                runs: usize,
                unsynchronized: usize,
                fraction_unsynchronized: f64,
                residual_norms: &'a [f64],
            }
            emit(
                g,
                "desync-census",
                &Brief {
                    config: &cfg,
                    runs: census.runs,
                    unsynchronized: census.unsynchronized,
                    fraction_unsynchronized: census.fraction_unsynchronized,
                    residual_norms: &census.residual_norms,
                },
            )?
        }
    }
    Ok(Outcome::Passed)
}

fn rayon_pool(jobs: usize) -> Result<rayon::ThreadPool, Error> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .map_err(|e| Error::Config(format!("thread pool: {e}")))
}
