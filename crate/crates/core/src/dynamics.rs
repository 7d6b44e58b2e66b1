//! Averaged phase-deviation dynamics
//!
//! ```text
//! ξ̇_i = Δ_i − (g_i/T)·Q_g(ξ_i) + (l/T)·Σ_j a_ij·Q_l(ξ_j − ξ_i)
//! ```
//!
//! where `ξ_i ∈ [-π, π]` is node `i`'s phase minus the cue's phase. The
//! integrator is fixed-step RK4 with the state re-wrapped after every step.

use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::prf::{wrap_angle, PhaseResponseFunction};
use crate::topology::Topology;

/// Default synchronization threshold on `‖ξ‖∞`, radians.
pub const DEFAULT_SYNC_TOL: f64 = 1e-3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhaseState {
    pub xi: Vec<f64>,
    pub t: f64,
}

impl PhaseState {
    pub fn new(xi: Vec<f64>) -> Self {
        Self { xi, t: 0.0 }
    }

    pub fn norm2(&self) -> f64 {
        norm2(&self.xi)
    }

    pub fn norm_inf(&self) -> f64 {
        norm_inf(&self.xi)
    }
}

pub fn norm2(xi: &[f64]) -> f64 {
    xi.iter().map(|x| x * x).sum::<f64>().sqrt()
}

pub fn norm_inf(xi: &[f64]) -> f64 {
    xi.iter().fold(0.0, |m, x| m.max(x.abs()))
}

/// Largest `|Q'|` over the circle, from central differences on a fine grid.
pub fn max_slope(q: &PhaseResponseFunction) -> f64 {
    const POINTS: usize = 4096;
    let h = 1e-6;
    (0..POINTS)
        .map(|k| -std::f64::consts::PI + std::f64::consts::TAU * k as f64 / POINTS as f64)
        .map(|x| ((q.evaluate(x + h) - q.evaluate(x - h)) / (2.0 * h)).abs())
        .fold(q.slope_at_zero().abs(), f64::max)
}

/// Step size at which RK4 stays well inside its stability region: the
/// reciprocal of a bound on the Jacobian norm,
/// `(max_i g_i·max|Q_g'| + 2·l·d_max·max|Q_l'|) / T`.
pub fn stable_step(topo: &Topology, qg: &PhaseResponseFunction, ql: &PhaseResponseFunction) -> f64 {
    let rate = (topo.max_gain() * max_slope(qg)
        + 2.0 * topo.local_strength() * topo.max_degree() as f64 * max_slope(ql))
        / topo.period();
    if rate > 0.0 {
        1.0 / rate
    } else {
        f64::INFINITY
    }
}

/// Right-hand side evaluated node by node, straight from the defining sum.
pub fn vector_field(
    topo: &Topology,
    qg: &PhaseResponseFunction,
    ql: &PhaseResponseFunction,
    xi: &[f64],
) -> Result<Vec<f64>> {
    let n = topo.n();
    if xi.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            actual: xi.len(),
        });
    }
    let inv_t = 1.0 / topo.period();
    let l = topo.local_strength();
    Ok((0..n)
        .map(|i| {
            let local: f64 = topo
                .neighbors(i)
                .iter()
                .map(|&j| ql.evaluate(xi[j] - xi[i]))
                .sum();
            topo.natural_freq_offsets()[i] - topo.global_gains()[i] * inv_t * qg.evaluate(xi[i])
                + l * inv_t * local
        })
        .collect())
}

/// Compiled form of the vector field used by the integrator: each edge term
/// is evaluated once and applied antisymmetrically.
#[derive(Debug, Clone)]
pub struct PhaseField<'a> {
    qg: &'a PhaseResponseFunction,
    ql: &'a PhaseResponseFunction,
    edges: Vec<(usize, usize)>,
    gain_rate: Vec<f64>,
    local_rate: f64,
    delta: Vec<f64>,
}

impl<'a> PhaseField<'a> {
    pub fn new(
        topo: &Topology,
        qg: &'a PhaseResponseFunction,
        ql: &'a PhaseResponseFunction,
    ) -> Self {
        let inv_t = 1.0 / topo.period();
        Self {
            qg,
            ql,
            edges: topo.edges().to_vec(),
            gain_rate: topo.global_gains().iter().map(|g| g * inv_t).collect(),
            local_rate: topo.local_strength() * inv_t,
            delta: topo.natural_freq_offsets().to_vec(),
        }
    }

    pub fn dim(&self) -> usize {
        self.delta.len()
    }

    pub fn eval(&self, xi: &[f64], out: &mut [f64]) {
        for (i, o) in out.iter_mut().enumerate() {
            let g = self.gain_rate[i];
            *o = self.delta[i] - if g != 0.0 { g * self.qg.evaluate(xi[i]) } else { 0.0 };
        }
        if self.local_rate != 0.0 {
            for &(i, j) in &self.edges {
                let q = self.local_rate * self.ql.evaluate(xi[j] - xi[i]);
                out[i] += q;
                out[j] -= q;
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IntegrationConfig {
    /// Step size, seconds.
    pub dt: f64,
    pub t_max: f64,
    pub sync_tol: f64,
    /// Keep a full state snapshot every `stride` steps (0 keeps none).
    #[serde(default)]
    pub record_stride: usize,
}

impl IntegrationConfig {
    pub fn new(dt: f64, t_max: f64, sync_tol: f64) -> Self {
        Self {
            dt,
            t_max,
            sync_tol,
            record_stride: 0,
        }
    }

    pub fn with_stride(mut self, stride: usize) -> Self {
        self.record_stride = stride;
        self
    }

    fn validate(&self) -> Result<()> {
        if !(self.dt.is_finite() && self.dt > 0.0) {
            return Err(Error::InvalidArgument(format!("dt = {} must be > 0", self.dt)));
        }
        if !(self.sync_tol.is_finite() && self.sync_tol > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "sync_tol = {} must be > 0",
                self.sync_tol
            )));
        }
        if !(self.t_max >= 0.0) {
            return Err(Error::InvalidArgument(format!(
                "t_max = {} must be ≥ 0",
                self.t_max
            )));
        }
        Ok(())
    }
}

/// Norm history of one trajectory, one entry per step, plus optional state
/// snapshots.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub norm2: Vec<f64>,
    pub norm_inf: Vec<f64>,
    pub snapshots: Vec<PhaseState>,
}

impl Trajectory {
    /// A norm-only trajectory, e.g. for fitting externally produced data.
    pub fn from_norms(times: Vec<f64>, norm2: Vec<f64>) -> Self {
        let norm_inf = norm2.clone();
        Self {
            times,
            norm2,
            norm_inf,
            snapshots: Vec::new(),
        }
    }

    fn push(&mut self, t: f64, xi: &[f64]) {
        self.times.push(t);
        self.norm2.push(norm2(xi));
        self.norm_inf.push(norm_inf(xi));
    }

    /// `t, xi_0..xi_{N-1}, norm2, norm_inf`, one row per snapshot.
    pub fn write_csv(&self, mut w: impl Write) -> Result<()> {
        let n = self.snapshots.first().map_or(0, |s| s.xi.len());
        let mut header = vec!["t".to_string()];
        header.extend((0..n).map(|i| format!("xi_{i}")));
        header.push("norm2".into());
        header.push("norm_inf".into());
        let mut wtr = csv::WriterBuilder::new().from_writer(&mut w);
        wtr.write_record(&header)?;
        for s in &self.snapshots {
            let mut row = vec![s.t.to_string()];
            row.extend(s.xi.iter().map(f64::to_string));
            row.push(s.norm2().to_string());
            row.push(s.norm_inf().to_string());
            wtr.write_record(&row)?;
        }
        wtr.flush()?;
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IntegrationOutcome {
    pub trajectory: Trajectory,
    pub converged: bool,
    /// Start of the first stretch of at least one period with `‖ξ‖∞ < sync_tol`.
    pub t_sync: Option<f64>,
    pub steps: usize,
    pub final_state: PhaseState,
}

fn rk4_step(field: &PhaseField, xi: &mut [f64], dt: f64, k: &mut [Vec<f64>; 5]) {
    let n = xi.len();
    let [k1, k2, k3, k4, tmp] = k;
    field.eval(xi, k1);
    for i in 0..n {
        tmp[i] = xi[i] + 0.5 * dt * k1[i];
    }
    field.eval(tmp, k2);
    for i in 0..n {
        tmp[i] = xi[i] + 0.5 * dt * k2[i];
    }
    field.eval(tmp, k3);
    for i in 0..n {
        tmp[i] = xi[i] + dt * k3[i];
    }
    field.eval(tmp, k4);
    for i in 0..n {
        xi[i] = wrap_angle(xi[i] + dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]));
    }
}

/// Integrates from `xi0` until `‖ξ‖∞ < sync_tol` has held for one full
/// period, or until `t_max`.
pub fn integrate(
    topo: &Topology,
    qg: &PhaseResponseFunction,
    ql: &PhaseResponseFunction,
    xi0: &[f64],
    cfg: &IntegrationConfig,
) -> Result<IntegrationOutcome> {
    cfg.validate()?;
    let n = topo.n();
    if xi0.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            actual: xi0.len(),
        });
    }
    if let Some(x) = xi0.iter().find(|x| !x.is_finite()) {
        return Err(Error::InvalidArgument(format!("non-finite initial deviation {x}")));
    }
    let field = PhaseField::new(topo, qg, ql);
    let period = topo.period();
    let mut xi: Vec<f64> = xi0.iter().map(|&x| wrap_angle(x)).collect();
    let mut k: [Vec<f64>; 5] = std::array::from_fn(|_| vec![0.0; n]);
    let max_steps = (cfg.t_max / cfg.dt).ceil() as usize;

    let mut traj = Trajectory::default();
    let mut t = 0.0;
    let mut step = 0usize;
    traj.push(t, &xi);
    if cfg.record_stride > 0 {
        traj.snapshots.push(PhaseState { xi: xi.clone(), t });
    }
    let mut entry = (norm_inf(&xi) < cfg.sync_tol).then_some(0.0);
    let mut converged = false;

    while step < max_steps {
        rk4_step(&field, &mut xi, cfg.dt, &mut k);
        step += 1;
        t = step as f64 * cfg.dt;
        if xi.iter().any(|x| !x.is_finite()) {
            return Err(Error::Diverged { t });
        }
        traj.push(t, &xi);
        if cfg.record_stride > 0 && step % cfg.record_stride == 0 {
            traj.snapshots.push(PhaseState { xi: xi.clone(), t });
        }
        if norm_inf(&xi) < cfg.sync_tol {
            let start = *entry.get_or_insert(t);
            if t - start >= period - 1e-9 * cfg.dt {
                converged = true;
                break;
            }
        } else {
            entry = None;
        }
    }
    if cfg.record_stride > 0 && traj.snapshots.last().map(|s| s.t) != Some(t) {
        traj.snapshots.push(PhaseState { xi: xi.clone(), t });
    }
    Ok(IntegrationOutcome {
        trajectory: traj,
        converged,
        t_sync: if converged { entry } else { None },
        steps: step,
        final_state: PhaseState { xi, t },
    })
}

/// Minimum number of samples accepted by [`fit_rate`].
pub const MIN_FIT_SAMPLES: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RateFit {
    /// Negated slope of `ln‖ξ(t)‖₂`, 1/s.
    pub alpha_hat: f64,
    /// `exp(intercept)/‖ξ(0)‖₂`.
    pub c_hat: f64,
    pub r_squared: f64,
    pub samples: usize,
}

/// Least-squares line through `(t, ln‖ξ(t)‖₂)` over `window`.
pub fn fit_rate(traj: &Trajectory, window: (f64, f64)) -> Result<RateFit> {
    let (t0, t1) = window;
    let pts: Vec<(f64, f64)> = traj
        .times
        .iter()
        .zip(&traj.norm2)
        .filter(|&(&t, &v)| t >= t0 && t <= t1 && v > 0.0)
        .map(|(&t, &v)| (t, v.ln()))
        .collect();
    if pts.len() < MIN_FIT_SAMPLES {
        return Err(Error::InsufficientData {
            have: pts.len(),
            need: MIN_FIT_SAMPLES,
        });
    }
    let m = pts.len() as f64;
    let mean_t = pts.iter().map(|p| p.0).sum::<f64>() / m;
    let mean_y = pts.iter().map(|p| p.1).sum::<f64>() / m;
    let (mut stt, mut sty, mut syy) = (0.0, 0.0, 0.0);
    for &(t, y) in &pts {
        let (dt, dy) = (t - mean_t, y - mean_y);
        stt += dt * dt;
        sty += dt * dy;
        syy += dy * dy;
    }
    let slope = sty / stt;
    let intercept = mean_y - slope * mean_t;
    let r_squared = if syy == 0.0 {
        1.0
    } else {
        (sty * sty / (stt * syy)).clamp(0.0, 1.0)
    };
    let norm0 = traj.norm2.first().copied().unwrap_or(f64::NAN);
    Ok(RateFit {
        alpha_hat: -slope,
        c_hat: intercept.exp() / norm0,
        r_squared,
        samples: pts.len(),
    })
}

/// A boundary state where the field points outward.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundaryViolation {
    pub node: usize,
    /// `+1` for the face `ξ_i = ε̄`, `-1` for `ξ_i = -ε̄`.
    pub face: i8,
    pub derivative: f64,
    pub state: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InvarianceReport {
    pub eps_bar: f64,
    pub samples: usize,
    /// States with `|ξ̇_i|` at rounding level on the face: neither inward
    /// nor outward.
    pub boundary_cases: usize,
    pub violations: Vec<BoundaryViolation>,
}

impl InvarianceReport {
    pub fn passed(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Derivatives below this magnitude on a face count as boundary cases.
pub const BOUNDARY_ZERO_TOL: f64 = 1e-12;

/// Classifies the face `ξ_i = face·ε̄` of one state. `None` means inward.
pub fn boundary_direction(
    topo: &Topology,
    qg: &PhaseResponseFunction,
    ql: &PhaseResponseFunction,
    state: &[f64],
    node: usize,
    face: i8,
) -> Result<Option<f64>> {
    let d = vector_field(topo, qg, ql, state)?[node];
    let outward = d * face as f64;
    Ok((outward >= -BOUNDARY_ZERO_TOL).then_some(d))
}

/// Samples states on the faces of `[-ε̄, ε̄]^N` and checks that the field
/// points into the box.
///
/// Half of the samples place the node's neighbors uniformly in the box; the
/// other half pin them to the opposite face, which is where local coupling
/// pushes outward hardest.
pub fn check_invariance(
    topo: &Topology,
    qg: &PhaseResponseFunction,
    ql: &PhaseResponseFunction,
    eps_bar: f64,
    samples: usize,
    seed: u64,
) -> Result<InvarianceReport> {
    if !(0.0..std::f64::consts::PI).contains(&eps_bar) {
        return Err(Error::Domain {
            name: "eps_bar",
            value: eps_bar,
            domain: "[0, π)",
        });
    }
    let n = topo.n();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut report = InvarianceReport {
        eps_bar,
        samples,
        boundary_cases: 0,
        violations: Vec::new(),
    };
    for s in 0..samples {
        let node = rng.gen_range(0..n);
        let face: i8 = if rng.gen_bool(0.5) { 1 } else { -1 };
        let mut state: Vec<f64> = (0..n)
            .map(|_| {
                if eps_bar > 0.0 {
                    rng.gen_range(-eps_bar..=eps_bar)
                } else {
                    0.0
                }
            })
            .collect();
        if s % 2 == 1 {
            for &j in topo.neighbors(node) {
                state[j] = -face as f64 * eps_bar;
            }
        }
        state[node] = face as f64 * eps_bar;
        if let Some(d) = boundary_direction(topo, qg, ql, &state, node, face)? {
            if d.abs() <= BOUNDARY_ZERO_TOL {
                report.boundary_cases += 1;
            } else {
                report.violations.push(BoundaryViolation {
                    node,
                    face,
                    derivative: d,
                    state,
                });
            }
        }
    }
    Ok(report)
}
