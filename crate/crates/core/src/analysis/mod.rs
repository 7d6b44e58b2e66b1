//! Lower bounds on the exponential synchronization rate and the sufficient
//! conditions they rest on.
//!
//! Two regimes are distinguished by the half-width `ε̄` of the deviation box
//! `[-ε̄, ε̄]^N` the network starts in:
//!
//! * `ε̄ < π/2`: `α₁ = λ_min(σ₁G + σ₂·l·L) / T`, valid when the local graph is
//!   connected and at least one node hears the cue.
//! * `π/2 ≤ ε̄ < π`: `α₂ = (σ₃·g_min − σ₄·l·λ_max(L)) / T`, which needs every
//!   node attached to the cue and may come out non-positive, meaning "no
//!   guarantee".

mod eigen;

use std::f64::consts::{FRAC_PI_2, PI};

use serde::{Deserialize, Serialize};

pub use eigen::{symmetric_eigen, symmetric_eigenvalues, SymmetricEigen, SYMMETRY_TOLERANCE};

use crate::error::{Error, Result};
use crate::prf::{compute_bounds, PhaseResponseFunction, PrfBounds};
use crate::topology::Topology;

/// Default grid resolution for the ratio extrema.
pub const DEFAULT_BOUNDS_GRID: usize = 10_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Regime {
    InsideHalfPi,
    OutsideHalfPi,
}

impl Regime {
    pub fn of(eps_bar: f64) -> Self {
        if eps_bar < FRAC_PI_2 {
            Self::InsideHalfPi
        } else {
            Self::OutsideHalfPi
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateBounds {
    pub regime: Regime,
    pub period: f64,
    /// `λ_min(σ₁G + σ₂·l·L)/T`; set in the inside-π/2 regime.
    pub alpha1: Option<f64>,
    /// `(σ₃·g_min − σ₄·l·λ_max(L))/T`; set in the outside-π/2 regime.
    pub alpha2: Option<f64>,
    pub prf_bounds: PrfBounds,
    /// Spectrum of the matrix whose extreme eigenvalue gives the bound
    /// (`σ₁G + σ₂·l·L` or `L`).
    pub eigenvalues: Vec<f64>,
    pub g_min: f64,
    /// Whether the hypotheses behind the bound hold for this network.
    pub guarantee: bool,
}

impl RateBounds {
    pub fn rate(&self) -> f64 {
        self.alpha1.or(self.alpha2).unwrap_or(f64::NAN)
    }
}

/// The rate bound for `ε̄ < π/2`.
pub fn alpha1(
    topo: &Topology,
    qg: &PhaseResponseFunction,
    ql: &PhaseResponseFunction,
    eps_bar: f64,
    grid_points: usize,
) -> Result<RateBounds> {
    if !(0.0..FRAC_PI_2).contains(&eps_bar) {
        return Err(Error::Domain {
            name: "eps_bar",
            value: eps_bar,
            domain: "[0, π/2)",
        });
    }
    let b = compute_bounds(qg, ql, eps_bar, grid_points)?;
    let eig = symmetric_eigenvalues(&rate_matrix(topo, b.sigma1, b.sigma2))?;
    let local = check_local_sync(topo);
    Ok(RateBounds {
        regime: Regime::InsideHalfPi,
        period: topo.period(),
        alpha1: Some(eig[0] / topo.period()),
        alpha2: None,
        prf_bounds: b,
        eigenvalues: eig.iter().copied().collect(),
        g_min: topo.min_gain(),
        guarantee: local.passed,
    })
}

/// `σ₁G + σ₂·l·L`.
pub fn rate_matrix(topo: &Topology, sigma1: f64, sigma2: f64) -> nalgebra::DMatrix<f64> {
    topo.gain_matrix() * sigma1 + topo.laplacian_f64() * (sigma2 * topo.local_strength())
}

/// The rate bound for `π/2 ≤ ε̄ < π`. Negative values are returned as-is.
pub fn alpha2(
    topo: &Topology,
    qg: &PhaseResponseFunction,
    ql: &PhaseResponseFunction,
    eps_bar: f64,
    grid_points: usize,
) -> Result<RateBounds> {
    if !(FRAC_PI_2..PI).contains(&eps_bar) {
        return Err(Error::Domain {
            name: "eps_bar",
            value: eps_bar,
            domain: "[π/2, π)",
        });
    }
    let b = compute_bounds(qg, ql, eps_bar, grid_points)?;
    let eig = symmetric_eigenvalues(&topo.laplacian_f64())?;
    let lambda_max = eig[eig.len() - 1];
    let g_min = topo.min_gain();
    let a2 = (b.sigma3 * g_min - b.sigma4 * topo.local_strength() * lambda_max) / topo.period();
    let global = global_conditions(topo, &b, lambda_max);
    Ok(RateBounds {
        regime: Regime::OutsideHalfPi,
        period: topo.period(),
        alpha1: None,
        alpha2: Some(a2),
        prf_bounds: b,
        eigenvalues: eig.iter().copied().collect(),
        g_min,
        guarantee: a2 > 0.0 && global.passed(),
    })
}

/// Full audit record for one `ε̄`, dispatching on the regime.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundsReport {
    pub bounds: RateBounds,
    pub local_conditions: LocalSyncReport,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub global_conditions: Option<GlobalSyncReport>,
}

pub fn rate_bounds(
    topo: &Topology,
    qg: &PhaseResponseFunction,
    ql: &PhaseResponseFunction,
    eps_bar: f64,
    grid_points: usize,
) -> Result<BoundsReport> {
    let local_conditions = check_local_sync(topo);
    match Regime::of(eps_bar) {
        Regime::InsideHalfPi => Ok(BoundsReport {
            bounds: alpha1(topo, qg, ql, eps_bar, grid_points)?,
            local_conditions,
            global_conditions: None,
        }),
        Regime::OutsideHalfPi => Ok(BoundsReport {
            bounds: alpha2(topo, qg, ql, eps_bar, grid_points)?,
            local_conditions,
            global_conditions: Some(check_global_sync(topo, qg, ql, eps_bar, grid_points)?),
        }),
    }
}

/// Hypotheses for convergence from inside `(-π/2, π/2)^N`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LocalSyncReport {
    pub connected: bool,
    pub max_gain: f64,
    pub any_gain_positive: bool,
    pub passed: bool,
}

pub fn check_local_sync(topo: &Topology) -> LocalSyncReport {
    let connected = topo.is_connected();
    let max_gain = topo.max_gain();
    LocalSyncReport {
        connected,
        max_gain,
        any_gain_positive: max_gain > 0.0,
        passed: connected && max_gain > 0.0,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConditionStatus {
    Pass,
    Fail,
    /// The right-hand side divides by a non-positive constant.
    Inapplicable,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Inequality {
    pub lhs: f64,
    pub rhs: Option<f64>,
    /// `lhs - rhs` when defined.
    pub margin: Option<f64>,
    pub status: ConditionStatus,
}

impl Inequality {
    fn strict(lhs: f64, rhs: f64) -> Self {
        Self::compare(lhs, rhs, lhs > rhs)
    }

    fn weak(lhs: f64, rhs: f64) -> Self {
        Self::compare(lhs, rhs, lhs >= rhs)
    }

    fn compare(lhs: f64, rhs: f64, ok: bool) -> Self {
        Self {
            lhs,
            rhs: Some(rhs),
            margin: Some(lhs - rhs),
            status: if ok {
                ConditionStatus::Pass
            } else {
                ConditionStatus::Fail
            },
        }
    }

    fn inapplicable(lhs: f64) -> Self {
        Self {
            lhs,
            rhs: None,
            margin: None,
            status: ConditionStatus::Inapplicable,
        }
    }
}

/// Hypotheses for convergence when the extreme deviation leaves
/// `(-π/2, π/2)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GlobalSyncReport {
    pub eps_bar: f64,
    pub lambda_max: f64,
    pub all_attached: bool,
    /// `g_min > σ₄·l·λ_max(L)/σ₃`.
    pub decay: Inequality,
    /// Per node: `g_i ≥ (l/γ₁)·Σ_j a_ij·γ₂` with `γ₁ = min_{[0, ε̄]} Q_g`.
    pub invariance: Vec<Inequality>,
    /// Per node, with `γ₁` replaced by the boundary value `Q_g(ε̄)`.
    pub invariance_boundary: Vec<Inequality>,
}

impl GlobalSyncReport {
    /// `decay` holds and, node by node, the invariance inequality holds in
    /// its literal form or (where that form is inapplicable) in the boundary
    /// form.
    pub fn passed(&self) -> bool {
        self.all_attached
            && self.decay.status == ConditionStatus::Pass
            && self
                .invariance
                .iter()
                .zip(&self.invariance_boundary)
                .all(|(lit, bnd)| match lit.status {
                    ConditionStatus::Pass => true,
                    ConditionStatus::Fail => false,
                    ConditionStatus::Inapplicable => bnd.status == ConditionStatus::Pass,
                })
    }
}

pub fn check_global_sync(
    topo: &Topology,
    qg: &PhaseResponseFunction,
    ql: &PhaseResponseFunction,
    eps_bar: f64,
    grid_points: usize,
) -> Result<GlobalSyncReport> {
    if !(FRAC_PI_2..PI).contains(&eps_bar) {
        return Err(Error::Domain {
            name: "eps_bar",
            value: eps_bar,
            domain: "[π/2, π)",
        });
    }
    let b = compute_bounds(qg, ql, eps_bar, grid_points)?;
    let eig = symmetric_eigenvalues(&topo.laplacian_f64())?;
    Ok(global_conditions(topo, &b, eig[eig.len() - 1]))
}

fn global_conditions(topo: &Topology, b: &PrfBounds, lambda_max: f64) -> GlobalSyncReport {
    let l = topo.local_strength();
    let g_min = topo.min_gain();
    let decay = if b.sigma3 > 0.0 {
        Inequality::strict(g_min, b.sigma4 * l * lambda_max / b.sigma3)
    } else {
        Inequality::inapplicable(g_min)
    };
    let per_node = |gamma1: f64| -> Vec<Inequality> {
        (0..topo.n())
            .map(|i| {
                let g = topo.global_gains()[i];
                let push = l * topo.degree(i) as f64 * b.gamma2;
                if push == 0.0 {
                    Inequality::weak(g, 0.0)
                } else if gamma1 <= 0.0 {
                    Inequality::inapplicable(g)
                } else {
                    Inequality::weak(g, push / gamma1)
                }
            })
            .collect()
    };
    GlobalSyncReport {
        eps_bar: b.eps_bar,
        lambda_max,
        all_attached: g_min > 0.0,
        decay,
        invariance: per_node(b.gamma1),
        invariance_boundary: per_node(b.gamma1_boundary),
    }
}

/// `α₁` along a parameter sweep and whether it never decreased.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MonotonicityReport {
    pub parameter: String,
    pub points: Vec<(f64, f64)>,
    pub nondecreasing: bool,
}

fn monotone(parameter: &str, points: Vec<(f64, f64)>) -> MonotonicityReport {
    let nondecreasing = points
        .windows(2)
        .all(|w| w[1].1 >= w[0].1 - 1e-12 * w[0].1.abs().max(1e-300));
    MonotonicityReport {
        parameter: parameter.into(),
        points,
        nondecreasing,
    }
}

/// `α₁` with every cue gain multiplied by each entry of `scales` (taken in
/// the given order, expected increasing).
pub fn gain_sweep(
    topo: &Topology,
    qg: &PhaseResponseFunction,
    ql: &PhaseResponseFunction,
    eps_bar: f64,
    scales: &[f64],
    grid_points: usize,
) -> Result<MonotonicityReport> {
    let mut points = Vec::with_capacity(scales.len());
    for &s in scales {
        let gains = topo.global_gains().iter().map(|g| g * s).collect();
        let t = topo.with_coupling(gains, topo.local_strength())?;
        points.push((s, alpha1(&t, qg, ql, eps_bar, grid_points)?.rate()));
    }
    Ok(monotone("g_scale", points))
}

/// `α₁` with a tanh cue response at each ε in `eps_values` (expected
/// decreasing).
pub fn cue_epsilon_sweep(
    topo: &Topology,
    ql: &PhaseResponseFunction,
    eps_bar: f64,
    eps_values: &[f64],
    grid_points: usize,
) -> Result<MonotonicityReport> {
    let mut points = Vec::with_capacity(eps_values.len());
    for &e in eps_values {
        let qg = PhaseResponseFunction::tanh(e)?;
        points.push((e, alpha1(topo, &qg, ql, eps_bar, grid_points)?.rate()));
    }
    Ok(monotone("epsilon_g", points))
}

/// Experimental: leaderless rate `σ₂·l·λ₂(L)/T` on the mean-zero subspace,
/// the `G = 0` special case of `α₁` with deviations measured from the
/// network mean.
pub fn leaderless_rate(
    topo: &Topology,
    ql: &PhaseResponseFunction,
    eps_bar: f64,
    grid_points: usize,
) -> Result<f64> {
    let b = compute_bounds(ql, ql, eps_bar, grid_points)?;
    let eig = symmetric_eigenvalues(&topo.laplacian_f64())?;
    let lambda2 = if eig.len() > 1 { eig[1] } else { 0.0 };
    Ok(b.sigma2 * topo.local_strength() * lambda2 / topo.period())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn tanh(e: f64) -> PhaseResponseFunction {
        PhaseResponseFunction::tanh(e).unwrap()
    }

    fn ring(n: usize, g: Vec<f64>, l: f64) -> Topology {
        let edges: Vec<_> = (0..n).map(|i| (i, (i + 1) % n)).collect();
        Topology::new(n, &edges, g, l, 1.0).unwrap()
    }

    #[test]
    fn leaderless_alpha1_is_zero() {
        let t = ring(5, vec![0.0; 5], 0.01);
        let b = alpha1(&t, &tanh(0.4), &tanh(0.4), 1.0, 2000).unwrap();
        assert_abs_diff_eq!(b.rate(), 0.0, epsilon = 1e-15);
        assert!(!b.guarantee);
    }

    #[test]
    fn two_node_closed_form() {
        let (g1, l) = (0.01, 0.02);
        let t = Topology::new(2, &[(0, 1)], vec![g1, 0.0], l, 2.0).unwrap();
        let (qg, ql) = (tanh(0.8), PhaseResponseFunction::sine(1.0).unwrap());
        let b = alpha1(&t, &qg, &ql, 0.7, 4000).unwrap();
        let (s1, s2) = (b.prf_bounds.sigma1, b.prf_bounds.sigma2);
        // eigenvalues of [[a, -c], [-c, c]] with a = s1 g1 + s2 l, c = s2 l
        let (a, c) = (s1 * g1 + s2 * l, s2 * l);
        let tr = a + c;
        let det = a * c - c * c;
        let lmin = (tr - (tr * tr - 4.0 * det).sqrt()) / 2.0;
        assert_abs_diff_eq!(b.rate(), lmin / 2.0, epsilon = 1e-14);
        assert!(b.guarantee);
    }

    #[test]
    fn alpha1_is_homogeneous_in_coupling() {
        let t = ring(6, vec![0.01, 0.0, 0.02, 0.0, 0.0, 0.0], 0.01);
        let t2 = t
            .with_coupling(t.global_gains().iter().map(|g| 2.0 * g).collect(), 0.02)
            .unwrap();
        let (qg, ql) = (tanh(0.4), tanh(0.2));
        let a = alpha1(&t, &qg, &ql, 1.0, 2000).unwrap().rate();
        let b = alpha1(&t2, &qg, &ql, 1.0, 2000).unwrap().rate();
        assert_abs_diff_eq!(b, 2.0 * a, epsilon = 1e-15);
    }

    #[test]
    fn alpha1_domain() {
        let t = ring(3, vec![0.01; 3], 0.01);
        assert!(alpha1(&t, &tanh(0.4), &tanh(0.4), FRAC_PI_2, 2000).is_err());
        assert!(alpha2(&t, &tanh(0.4), &tanh(0.4), 1.0, 2000).is_err());
        assert!(alpha2(&t, &tanh(0.4), &tanh(0.4), PI, 2000).is_err());
    }

    #[test]
    fn alpha2_without_local_coupling() {
        let t = ring(4, vec![0.01, 0.02, 0.03, 0.04], 0.0);
        let qg = tanh(0.4);
        let b = alpha2(&t, &qg, &tanh(0.05), 2.0, 4000).unwrap();
        assert_abs_diff_eq!(
            b.rate(),
            b.prf_bounds.sigma3 * 0.01,
            epsilon = 1e-15
        );
        assert!(b.guarantee);
    }

    #[test]
    fn alpha2_sine_at_half_pi_ignores_l() {
        let s = PhaseResponseFunction::sine(1.0).unwrap();
        let a = alpha2(&ring(4, vec![0.01; 4], 0.0), &s, &s, FRAC_PI_2, 4000).unwrap();
        let b = alpha2(&ring(4, vec![0.01; 4], 0.5), &s, &s, FRAC_PI_2, 4000).unwrap();
        assert_abs_diff_eq!(a.prf_bounds.sigma4, 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(a.rate(), b.rate(), epsilon = 1e-12);
        assert_abs_diff_eq!(a.rate(), 0.01 * 2.0 / PI, epsilon = 1e-12);
    }

    #[test]
    fn alpha2_unattached_node_gives_no_guarantee() {
        let t = ring(4, vec![0.01, 0.01, 0.0, 0.01], 0.01);
        let b = alpha2(&t, &tanh(0.4), &tanh(0.4), 2.5, 4000).unwrap();
        assert!(b.prf_bounds.sigma4 > 0.0);
        assert!(b.rate() < 0.0);
        assert!(!b.guarantee);
    }

    #[test]
    fn local_conditions() {
        let connected = ring(4, vec![0.01, 0.0, 0.0, 0.0], 0.01);
        assert!(check_local_sync(&connected).passed);
        let split = Topology::new(4, &[(0, 1), (2, 3)], vec![0.01; 4], 0.01, 1.0).unwrap();
        let r = check_local_sync(&split);
        assert!(!r.passed && !r.connected);
        assert!(!check_local_sync(&ring(4, vec![0.0; 4], 0.01)).passed);
    }

    #[test]
    fn global_conditions_without_local_coupling() {
        let t = ring(5, vec![0.01; 5], 0.0);
        let r = check_global_sync(&t, &tanh(0.4), &tanh(0.05), 2.5, 4000).unwrap();
        assert!(r.passed());
        assert!(r
            .invariance
            .iter()
            .all(|c| c.status == ConditionStatus::Pass));
    }

    #[test]
    fn global_conditions_sine_half_pi() {
        let s = PhaseResponseFunction::sine(1.0).unwrap();
        let t = ring(5, vec![0.01; 5], 0.05);
        let r = check_global_sync(&t, &s, &s, FRAC_PI_2, 4000).unwrap();
        // γ₂ = 0, so the invariance inequality reduces to g_i ≥ 0
        assert!(r.invariance.iter().all(|c| c.status == ConditionStatus::Pass
            && c.rhs == Some(0.0)));
    }

    #[test]
    fn literal_gamma1_makes_invariance_inapplicable() {
        let t = ring(5, vec![0.01; 5], 0.01);
        let r = check_global_sync(&t, &tanh(0.4), &tanh(0.4), 2.0, 4000).unwrap();
        assert!(r
            .invariance
            .iter()
            .all(|c| c.status == ConditionStatus::Inapplicable));
        assert!(r.invariance_boundary.iter().all(|c| c.rhs.is_some()));
    }

    #[test]
    fn sweeps_are_monotone() {
        let t = ring(6, vec![0.01, 0.0, 0.0, 0.0, 0.0, 0.0], 0.01);
        let ql = tanh(0.2);
        let g = gain_sweep(&t, &tanh(0.4), &ql, 1.0, &[1.0, 2.0, 3.0], 2000).unwrap();
        assert!(g.nondecreasing);
        let e = cue_epsilon_sweep(&t, &ql, 1.0, &[1.6, 0.8, 0.4], 2000).unwrap();
        assert!(e.nondecreasing);
        assert!(e.points[2].1 > e.points[0].1);
    }

    #[test]
    fn leaderless_rate_uses_fiedler_value() {
        let t = ring(4, vec![0.0; 4], 0.01);
        let s = PhaseResponseFunction::sine(1.0).unwrap();
        let r = leaderless_rate(&t, &s, 0.0, 1000).unwrap();
        assert_abs_diff_eq!(r, 0.01 * 2.0, epsilon = 1e-12);
    }
}
