//! Monte Carlo sweeps over PRF shapes and coupling strengths.

use std::fmt::Write as _;
use std::io::Write;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dynamics::{
    fit_rate, integrate, norm2, norm_inf, stable_step, IntegrationConfig, PhaseState, Trajectory, DEFAULT_SYNC_TOL,
};
use crate::error::{Error, Result};
use crate::prf::PhaseResponseFunction;
use crate::pulse_sim::{EnergyConfig, PulseNetwork};
use crate::scenario::{
    derive_seed, Attachment, Simulator, TopologyRef, UniformInit, DEFAULT_DT, DEFAULT_T_MAX,
};
use crate::topology::Topology;

const TABLE1_JSON: &str = include_str!("../presets/table1.json");
const TABLE2_JSON: &str = include_str!("../presets/table2.json");
const TABLE3_JSON: &str = include_str!("../presets/table3.json");
const DESYNC_JSON: &str = include_str!("../presets/desync.json");

pub const PRESETS: [&str; 4] = ["table1", "table2", "table3", "desync"];

fn default_runs() -> usize {
    100
}
fn default_dt() -> f64 {
    DEFAULT_DT
}
fn default_t_max() -> f64 {
    DEFAULT_T_MAX
}
fn default_sync_tol() -> f64 {
    DEFAULT_SYNC_TOL
}

/// A grid over `eps_g × eps_l × g × l` with Tanh PRFs, sampled `runs` times
/// per cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub name: String,
    pub topology: TopologyRef,
    pub attach: Attachment,
    pub eps_g: Vec<f64>,
    pub eps_l: Vec<f64>,
    pub g: Vec<f64>,
    pub l: Vec<f64>,
    pub init: UniformInit,
    pub seed: u64,
    #[serde(default = "default_runs")]
    pub runs: usize,
    #[serde(default)]
    pub simulator: Simulator,
    #[serde(default = "default_sync_tol")]
    pub sync_tol: f64,
    #[serde(default = "default_t_max")]
    pub t_max: f64,
    #[serde(default = "default_dt")]
    pub dt: f64,
    #[serde(default)]
    pub energy: EnergyConfig,
}

impl ExperimentConfig {
    pub fn from_json_str(s: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(s)?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Loads a config file; a topology given by path is inlined.
    pub fn from_json_path(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let mut cfg = Self::from_json_str(&std::fs::read_to_string(path)?)?;
        cfg.topology = cfg.topology.inlined(path.parent())?;
        Ok(cfg)
    }

    pub fn preset(name: &str) -> Result<Self> {
        let json = match name {
            "table1" => TABLE1_JSON,
            "table2" => TABLE2_JSON,
            "table3" => TABLE3_JSON,
            "desync" => DESYNC_JSON,
            _ => {
                return Err(Error::Config(format!(
                    "unknown preset {name:?}; expected one of {PRESETS:?}"
                )))
            }
        };
        Self::from_json_str(json)
    }

    pub fn validate(&self) -> Result<()> {
        self.init.validate()?;
        if self.runs == 0 {
            return Err(Error::Config("runs must be ≥ 1".into()));
        }
        for (name, axis) in [
            ("eps_g", &self.eps_g),
            ("eps_l", &self.eps_l),
            ("g", &self.g),
            ("l", &self.l),
        ] {
            if axis.is_empty() {
                return Err(Error::Config(format!("grid axis {name} is empty")));
            }
            if axis.iter().any(|v| !v.is_finite() || *v < 0.0) {
                return Err(Error::Config(format!("grid axis {name} needs finite values ≥ 0")));
            }
        }
        if self.eps_g.iter().chain(&self.eps_l).any(|&e| e <= 0.0) {
            return Err(Error::Config("PRF widths must be > 0".into()));
        }
        if !(self.t_max.is_finite() && self.t_max >= 0.0) {
            return Err(Error::Config("t_max must be finite and ≥ 0".into()));
        }
        if !(self.dt > 0.0 && self.sync_tol > 0.0) {
            return Err(Error::Config("dt and sync_tol must be > 0".into()));
        }
        Ok(())
    }

    /// Cells in row-major order over `eps_g, eps_l, g, l`.
    pub fn cells(&self) -> Vec<CellParams> {
        let mut out = Vec::new();
        for &eps_g in &self.eps_g {
            for &eps_l in &self.eps_l {
                for &g in &self.g {
                    for &l in &self.l {
                        out.push(CellParams { eps_g, eps_l, g, l });
                    }
                }
            }
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CellParams {
    pub eps_g: f64,
    pub eps_l: f64,
    pub g: f64,
    pub l: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub cell: usize,
    pub run: usize,
    pub seed: u64,
    pub t_sync: Option<f64>,
    /// Up to `t_sync`, or up to the end of the run when unsynchronized.
    pub energy: f64,
    pub alpha_hat: Option<f64>,
    pub final_norm_inf: Option<f64>,
    pub error: Option<String>,
}

impl RunRecord {
    pub fn converged(&self) -> bool {
        self.t_sync.is_some()
    }
}

/// Means are taken over converged runs only.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellSummary {
    pub index: usize,
    #[serde(flatten)]
    pub params: CellParams,
    pub runs: usize,
    pub converged: usize,
    pub failed: usize,
    pub converged_fraction: f64,
    pub mean_t_sync: Option<f64>,
    pub std_t_sync: Option<f64>,
    pub mean_energy: Option<f64>,
    pub mean_alpha_hat: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub config: ExperimentConfig,
    pub cells: Vec<CellSummary>,
    pub runs: Vec<RunRecord>,
}

struct CellSetup {
    topo: Topology,
    qg: PhaseResponseFunction,
    ql: PhaseResponseFunction,
}

fn setup_cell(base: &Topology, attach: &Attachment, p: &CellParams) -> Result<CellSetup> {
    Ok(CellSetup {
        topo: base.with_coupling(attach.gains(base.n(), p.g)?, p.l)?,
        qg: PhaseResponseFunction::tanh(p.eps_g)?,
        ql: PhaseResponseFunction::tanh(p.eps_l)?,
    })
}

fn run_one(cfg: &ExperimentConfig, setup: &CellSetup, cell: usize, run: usize) -> RunRecord {
    let seed = derive_seed(cfg.seed, cell as u64, run as u64);
    let xi0 = cfg.init.draw(setup.topo.n(), seed);
    let mut record = RunRecord {
        cell,
        run,
        seed,
        t_sync: None,
        energy: 0.0,
        alpha_hat: None,
        final_norm_inf: None,
        error: None,
    };
    let result = match cfg.simulator {
        Simulator::Ode => simulate_ode(cfg, setup, &xi0),
        Simulator::Pulse => simulate_pulse(cfg, setup, &xi0),
    };
    match result {
        Ok(r) => {
            record.t_sync = r.t_sync;
            record.energy = r.energy;
            record.alpha_hat = r.alpha_hat;
            record.final_norm_inf = Some(r.final_norm_inf);
        }
        Err(e) => {
            log::warn!("cell {cell} run {run}: {e}");
            record.error = Some(e.to_string());
        }
    }
    record
}

/// The result of one simulation, whichever simulator produced it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationSummary {
    pub t_sync: Option<f64>,
    pub energy: f64,
    pub alpha_hat: Option<f64>,
    pub final_norm_inf: f64,
    pub t_end: f64,
}

/// A simulation summary with the recorded states: integrator snapshots for
/// the averaged model, the once-per-period trace for the pulse simulation.
#[derive(Debug, Clone, PartialEq)]
pub struct SimulationRun {
    pub summary: SimulationSummary,
    pub states: Vec<PhaseState>,
}

fn fitted_rate(traj: &Trajectory, t_end: f64) -> Option<f64> {
    fit_rate(traj, (0.0, t_end)).ok().map(|f| f.alpha_hat)
}

fn simulate_ode(cfg: &ExperimentConfig, s: &CellSetup, xi0: &[f64]) -> Result<SimulationSummary> {
    let icfg = IntegrationConfig::new(cfg.dt, cfg.t_max, cfg.sync_tol);
    Ok(summarize_ode(&s.topo, &s.qg, &s.ql, xi0, &icfg, &cfg.energy)?.summary)
}

/// Runs the averaged model, never with a step beyond [`stable_step`]; energy
/// assumes one pulse per node per period.
pub fn summarize_ode(
    topo: &Topology,
    qg: &PhaseResponseFunction,
    ql: &PhaseResponseFunction,
    xi0: &[f64],
    icfg: &IntegrationConfig,
    energy: &EnergyConfig,
) -> Result<SimulationRun> {
    let mut icfg = *icfg;
    let limit = stable_step(topo, qg, ql);
    if icfg.dt > limit {
        log::debug!("step {} reduced to the stability limit {limit}", icfg.dt);
        icfg.dt = limit;
    }
    let out = integrate(topo, qg, ql, xi0, &icfg)?;
    let t_end = out.final_state.t;
    let elapsed = out.t_sync.unwrap_or(t_end);
    let summary = SimulationSummary {
        t_sync: out.t_sync,
        energy: energy.periodic_energy(topo.n(), elapsed, topo.period()),
        alpha_hat: fitted_rate(&out.trajectory, elapsed),
        final_norm_inf: out.final_state.norm_inf(),
        t_end,
    };
    let mut states = out.trajectory.snapshots;
    if icfg.record_stride > 0 && states.last().map(|s| s.t) != Some(t_end) {
        states.push(out.final_state);
    }
    Ok(SimulationRun { summary, states })
}

fn simulate_pulse(cfg: &ExperimentConfig, s: &CellSetup, xi0: &[f64]) -> Result<SimulationSummary> {
    Ok(summarize_pulse(&s.topo, &s.qg, &s.ql, xi0, cfg.t_max, cfg.sync_tol, &cfg.energy)?.summary)
}

/// Runs the pulse simulation; the rate is fitted on the once-per-period trace.
pub fn summarize_pulse(
    topo: &Topology,
    qg: &PhaseResponseFunction,
    ql: &PhaseResponseFunction,
    xi0: &[f64],
    t_max: f64,
    sync_tol: f64,
    energy: &EnergyConfig,
) -> Result<SimulationRun> {
    let mut net = PulseNetwork::from_deviations(topo.clone(), qg.clone(), ql.clone(), xi0, *energy)?;
    let out = net.run(t_max, sync_tol)?;
    let traj = Trajectory::from_norms(
        out.trace.iter().map(|s| s.t).collect(),
        out.trace.iter().map(|s| norm2(&s.xi)).collect(),
    );
    let summary = SimulationSummary {
        t_sync: out.t_sync,
        energy: out.energy,
        alpha_hat: fitted_rate(&traj, out.t_sync.unwrap_or(out.t_end)),
        final_norm_inf: norm_inf(&net.deviations()),
        t_end: out.t_end,
    };
    Ok(SimulationRun {
        summary,
        states: out.trace,
    })
}

fn mean_std(xs: &[f64]) -> (Option<f64>, Option<f64>) {
    if xs.is_empty() {
        return (None, None);
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let std = if xs.len() > 1 {
        (xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
    } else {
        0.0
    };
    (Some(mean), Some(std))
}

fn summarize(index: usize, params: CellParams, records: &[RunRecord]) -> CellSummary {
    let converged: Vec<&RunRecord> = records.iter().filter(|r| r.converged()).collect();
    let times: Vec<f64> = converged.iter().filter_map(|r| r.t_sync).collect();
    let energies: Vec<f64> = converged.iter().map(|r| r.energy).collect();
    let rates: Vec<f64> = converged.iter().filter_map(|r| r.alpha_hat).collect();
    let (mean_t_sync, std_t_sync) = mean_std(&times);
    CellSummary {
        index,
        params,
        runs: records.len(),
        converged: converged.len(),
        failed: records.iter().filter(|r| r.error.is_some()).count(),
        converged_fraction: converged.len() as f64 / records.len().max(1) as f64,
        mean_t_sync,
        std_t_sync,
        mean_energy: mean_std(&energies).0,
        mean_alpha_hat: mean_std(&rates).0,
    }
}

/// Runs every cell of the grid on the global rayon pool. The report does not
/// depend on scheduling.
pub fn run_grid(cfg: &ExperimentConfig) -> Result<ExperimentReport> {
    cfg.validate()?;
    let base = cfg.topology.resolve(None)?;
    let cells = cfg.cells();
    let setups = cells
        .iter()
        .map(|p| setup_cell(&base, &cfg.attach, p))
        .collect::<Result<Vec<_>>>()?;
    let jobs: Vec<(usize, usize)> = (0..cells.len())
        .flat_map(|c| (0..cfg.runs).map(move |r| (c, r)))
        .collect();
    let runs: Vec<RunRecord> = jobs
        .par_iter()
        .map(|&(c, r)| run_one(cfg, &setups[c], c, r))
        .collect();
    let summaries = cells
        .iter()
        .enumerate()
        .map(|(c, p)| summarize(c, *p, &runs[c * cfg.runs..(c + 1) * cfg.runs]))
        .collect();
    Ok(ExperimentReport {
        config: cfg.clone(),
        cells: summaries,
        runs,
    })
}

/// Like [`run_grid`], on a dedicated pool of `jobs` threads.
pub fn run_grid_with_jobs(cfg: &ExperimentConfig, jobs: usize) -> Result<ExperimentReport> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    pool.install(|| run_grid(cfg))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CensusReport {
    pub runs: usize,
    pub unsynchronized: usize,
    pub fraction_unsynchronized: f64,
    /// `‖ξ‖∞` at `t_max` for each unsynchronized run.
    pub residual_norms: Vec<f64>,
    pub report: ExperimentReport,
}

/// Counts runs that have not synchronized by `t_max`, over all cells.
pub fn desync_census(cfg: &ExperimentConfig) -> Result<CensusReport> {
    let report = run_grid(cfg)?;
    let unsynced: Vec<&RunRecord> = report.runs.iter().filter(|r| !r.converged()).collect();
    Ok(CensusReport {
        runs: report.runs.len(),
        unsynchronized: unsynced.len(),
        fraction_unsynchronized: unsynced.len() as f64 / report.runs.len() as f64,
        residual_norms: unsynced.iter().filter_map(|r| r.final_norm_inf).collect(),
        report,
    })
}

impl ExperimentReport {
    pub fn cell(&self, eps_g: f64, eps_l: f64, g: f64, l: f64) -> Option<&CellSummary> {
        self.cells.iter().find(|c| {
            c.params.eps_g == eps_g && c.params.eps_l == eps_l && c.params.g == g && c.params.l == l
        })
    }

    /// One row per cell, preceded by `#` lines holding the resolved config.
    pub fn write_csv(&self, mut w: impl Write) -> Result<()> {
        writeln!(w, "# config: {}", serde_json::to_string(&self.config)?)?;
        let mut wtr = csv::Writer::from_writer(w);
        for cell in &self.cells {
            wtr.serialize(CsvRow::from(cell))?;
        }
        wtr.flush()?;
        Ok(())
    }

    pub fn write_json(&self, mut w: impl Write) -> Result<()> {
        serde_json::to_writer_pretty(&mut w, self)?;
        writeln!(w)?;
        Ok(())
    }

    /// Rows are `(eps_g, g)` pairs, columns `(eps_l, l)` pairs. Each entry is
    /// `(mean sync time, mean energy [mJ])` with the converged count, or
    /// `no sync`.
    pub fn format_table(&self) -> String {
        let cfg = &self.config;
        let row_keys: Vec<(f64, f64)> = cfg
            .eps_g
            .iter()
            .flat_map(|&e| cfg.g.iter().map(move |&g| (e, g)))
            .collect();
        let col_keys: Vec<(f64, f64)> = cfg
            .eps_l
            .iter()
            .flat_map(|&e| cfg.l.iter().map(move |&l| (e, l)))
            .collect();
        let label = |a: &str, x: f64, b: &str, y: f64, vary_a: bool, vary_b: bool| match (vary_a, vary_b) {
            (true, false) => format!("{a}={x}"),
            (false, true) => format!("{b}={y}"),
            _ => format!("{a}={x},{b}={y}"),
        };
        let (vary_eg, vary_g) = (cfg.eps_g.len() > 1, cfg.g.len() > 1);
        let (vary_el, vary_l) = (cfg.eps_l.len() > 1, cfg.l.len() > 1);

        let mut grid = vec![Vec::with_capacity(col_keys.len() + 1)];
        grid[0].push(String::new());
        for &(el, l) in &col_keys {
            grid[0].push(label("eps_l", el, "l", l, vary_el, vary_l));
        }
        for &(eg, g) in &row_keys {
            let mut row = vec![label("eps_g", eg, "g", g, vary_eg, vary_g)];
            for &(el, l) in &col_keys {
                let entry = match self.cell(eg, el, g, l) {
                    Some(c) => match (c.mean_t_sync, c.mean_energy) {
                        (Some(t), Some(e)) => {
                            format!("({:.2}, {:.2}) {}/{}", t, e * 1e3, c.converged, c.runs)
                        }
                        _ => format!("no sync 0/{}", c.runs),
                    },
                    None => "-".into(),
                };
                row.push(entry);
            }
            grid.push(row);
        }
        let widths: Vec<usize> = (0..grid[0].len())
            .map(|j| grid.iter().map(|r| r[j].chars().count()).max().unwrap_or(0))
            .collect();
        let mut out = String::new();
        if !cfg.name.is_empty() {
            let _ = writeln!(out, "{}", cfg.name);
        }
        for row in &grid {
            let cells: Vec<String> = row
                .iter()
                .zip(&widths)
                .map(|(s, &w)| format!("{s:>w$}"))
                .collect();
            let _ = writeln!(out, "{}", cells.join(" | "));
        }
        out
    }
}

#[derive(Serialize)]
struct CsvRow {
    cell: usize,
    eps_g: f64,
    eps_l: f64,
    g: f64,
    l: f64,
    runs: usize,
    converged: usize,
    failed: usize,
    converged_fraction: f64,
    mean_t_sync: Option<f64>,
    std_t_sync: Option<f64>,
    mean_energy: Option<f64>,
    mean_alpha_hat: Option<f64>,
}

impl From<&CellSummary> for CsvRow {
    fn from(c: &CellSummary) -> Self {
        Self {
            cell: c.index,
            eps_g: c.params.eps_g,
            eps_l: c.params.eps_l,
            g: c.params.g,
            l: c.params.l,
            runs: c.runs,
            converged: c.converged,
            failed: c.failed,
            converged_fraction: c.converged_fraction,
            mean_t_sync: c.mean_t_sync,
            std_t_sync: c.std_t_sync,
            mean_energy: c.mean_energy,
            mean_alpha_hat: c.mean_alpha_hat,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> ExperimentConfig {
        ExperimentConfig::from_json_str(
            r#"{
                "topology": {"inline": {"n": 3, "edges": [[0, 1], [1, 2]], "g": [0, 0, 0], "l": 0, "T": 1.0}},
                "attach": "first",
                "eps_g": [0.4, 1.6],
                "eps_l": [0.4],
                "g": [0.05],
                "l": [0.05],
                "init": {"uniform": [-1.0, 1.0]},
                "seed": 3,
                "runs": 4,
                "t_max": 5000
            }"#,
        )
        .unwrap()
    }

    #[test]
    fn presets_parse() {
        for name in PRESETS {
            let cfg = ExperimentConfig::preset(name).unwrap();
            assert_eq!(cfg.runs, 100);
        }
        assert!(ExperimentConfig::preset("nope").is_err());
    }

    #[test]
    fn grid_is_deterministic_and_summarized() {
        let cfg = small();
        let a = run_grid(&cfg).unwrap();
        let b = run_grid_with_jobs(&cfg, 1).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.cells.len(), 2);
        assert_eq!(a.runs.len(), 8);
        for c in &a.cells {
            assert_eq!(c.converged, 4);
            assert_eq!(c.converged_fraction, 1.0);
            assert!(c.mean_alpha_hat.unwrap() > 0.0);
        }
        let fast = a.cell(0.4, 0.4, 0.05, 0.05).unwrap().mean_t_sync.unwrap();
        let slow = a.cell(1.6, 0.4, 0.05, 0.05).unwrap().mean_t_sync.unwrap();
        assert!(fast < slow);
    }

    #[test]
    fn zero_init_cell_syncs_immediately() {
        let mut cfg = small();
        cfg.eps_g.truncate(1);
        cfg.runs = 1;
        cfg.init = UniformInit { uniform: [0.0, 1e-300] };
        let r = run_grid(&cfg).unwrap();
        assert_eq!(r.cells[0].mean_t_sync, Some(0.0));
    }

    #[test]
    fn pulse_simulator_cells_run() {
        let mut cfg = small();
        cfg.simulator = Simulator::Pulse;
        cfg.runs = 2;
        let r = run_grid(&cfg).unwrap();
        assert!(r.cells.iter().all(|c| c.converged == 2));
    }

    #[test]
    fn outputs_embed_config() {
        let mut cfg = small();
        cfg.runs = 1;
        let r = run_grid(&cfg).unwrap();
        let mut csv = Vec::new();
        r.write_csv(&mut csv).unwrap();
        let text = String::from_utf8(csv).unwrap();
        let first = text.lines().next().unwrap();
        let embedded: ExperimentConfig =
            serde_json::from_str(first.strip_prefix("# config: ").unwrap()).unwrap();
        assert_eq!(embedded, cfg);
        assert_eq!(text.lines().count(), 2 + r.cells.len());
        let mut json = Vec::new();
        r.write_json(&mut json).unwrap();
        let back: ExperimentReport = serde_json::from_slice(&json).unwrap();
        assert_eq!(back, r);
        let table = r.format_table();
        assert!(table.contains("eps_g=0.4"));
    }

    #[test]
    fn census_counts_unsynchronized_runs() {
        let mut cfg = small();
        cfg.t_max = 1.0;
        let c = desync_census(&cfg).unwrap();
        assert_eq!(c.unsynchronized, 8);
        assert_eq!(c.fraction_unsynchronized, 1.0);
        assert_eq!(c.residual_norms.len(), 8);
    }

    #[test]
    fn rejects_bad_configs() {
        let mut cfg = small();
        cfg.runs = 0;
        assert!(cfg.validate().is_err());
        let mut cfg = small();
        cfg.eps_l.clear();
        assert!(cfg.validate().is_err());
        let mut cfg = small();
        cfg.init = UniformInit { uniform: [-4.0, 0.0] };
        assert!(cfg.validate().is_err());
    }
}
