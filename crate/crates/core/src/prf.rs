//! Phase response functions (PRFs).
//!
//! A PRF maps the phase difference seen when a pulse arrives to the phase
//! correction it causes. Every family here is 2π-periodic: arguments are
//! reduced into `[-π, π]` before evaluation.
//!
//! The module also computes the extremal ratio constants over a deviation box
//! `[-ε̄, ε̄]` that the rate bounds in [`crate::analysis`] are built from.

use std::f64::consts::{PI, TAU};
use std::io::Read;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Symmetry and zero tolerance for closed-form families.
pub const ANALYTIC_TOLERANCE: f64 = 1e-9;
/// Symmetry and zero tolerance for interpolated tables.
pub const TABLE_TOLERANCE: f64 = 1e-6;
/// Finite-difference half-step used for the slope of tabulated PRFs.
pub const TABLE_SLOPE_STEP: f64 = 1e-6;

/// Reduces an angle into `[-π, π]`.
///
/// Arguments already inside the interval are returned unchanged, so
/// `wrap_angle(-x) == -wrap_angle(x)` holds exactly there.
#[inline]
pub fn wrap_angle(x: f64) -> f64 {
    if (-PI..=PI).contains(&x) {
        return x;
    }
    let r = x.rem_euclid(TAU);
    if r > PI {
        r - TAU
    } else {
        r
    }
}

/// A tabulated PRF, linearly interpolated and wrapped periodically across ±π.
#[derive(Debug, Clone, PartialEq)]
pub struct PrfTable {
    angles: Vec<f64>,
    values: Vec<f64>,
}

impl PrfTable {
    pub fn new(points: Vec<(f64, f64)>) -> Result<Self> {
        if points.len() < 3 {
            return Err(Error::InvalidPrf(format!(
                "table needs at least 3 points, got {}",
                points.len()
            )));
        }
        let (angles, values): (Vec<f64>, Vec<f64>) = points.into_iter().unzip();
        if let Some(bad) = angles.iter().chain(&values).find(|v| !v.is_finite()) {
            return Err(Error::InvalidPrf(format!("non-finite table entry {bad}")));
        }
        if let Some(a) = angles.iter().find(|a| a.abs() > PI) {
            return Err(Error::InvalidPrf(format!("angle {a} outside [-π, π]")));
        }
        if let Some(w) = angles.windows(2).find(|w| w[1] <= w[0]) {
            return Err(Error::InvalidPrf(format!(
                "angles must be strictly increasing ({} then {})",
                w[0], w[1]
            )));
        }
        Ok(Self { angles, values })
    }

    /// Samples `f` at `n` equally spaced angles covering `[-π, π)`.
    pub fn tabulate(n: usize, f: impl Fn(f64) -> f64) -> Result<Self> {
        let step = TAU / n as f64;
        Self::new(
            (0..n)
                .map(|k| {
                    let x = -PI + step * k as f64;
                    (x, f(x))
                })
                .collect(),
        )
    }

    /// Loads a two-column `angle_rad,value` CSV. A header row is optional.
    pub fn from_csv_reader(reader: impl Read) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new()
            .has_headers(false)
            .trim(csv::Trim::All)
            .comment(Some(b'#'))
            .from_reader(reader);
        let mut points = Vec::new();
        for (row, record) in rdr.records().enumerate() {
            let record = record?;
            if record.len() != 2 {
                return Err(Error::InvalidPrf(format!(
                    "row {}: expected 2 columns, got {}",
                    row + 1,
                    record.len()
                )));
            }
            let parsed = (record[0].parse::<f64>(), record[1].parse::<f64>());
            match parsed {
                (Ok(x), Ok(y)) => points.push((x, y)),
                _ if row == 0 => continue,
                _ => {
                    return Err(Error::InvalidPrf(format!(
                        "row {}: cannot parse {:?}",
                        row + 1,
                        record
                    )))
                }
            }
        }
        Self::new(points)
    }

    pub fn from_csv_path(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_csv_reader(std::fs::File::open(path)?)
    }

    pub fn points(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.angles.iter().copied().zip(self.values.iter().copied())
    }

    pub fn len(&self) -> usize {
        self.angles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.angles.is_empty()
    }

    fn interpolate(&self, x: f64) -> f64 {
        let n = self.angles.len();
        let k = self.angles.partition_point(|&a| a <= x);
        let (x0, y0, x1, y1) = if k == 0 {
            (
                self.angles[n - 1] - TAU,
                self.values[n - 1],
                self.angles[0],
                self.values[0],
            )
        } else if k == n {
            if x == self.angles[n - 1] {
                return self.values[n - 1];
            }
            (
                self.angles[n - 1],
                self.values[n - 1],
                self.angles[0] + TAU,
                self.values[0],
            )
        } else {
            (
                self.angles[k - 1],
                self.values[k - 1],
                self.angles[k],
                self.values[k],
            )
        };
        y0 + (y1 - y0) * (x - x0) / (x1 - x0)
    }
}

/// A 2π-periodic phase response function.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "PrfDoc", into = "PrfDoc")]
pub enum PhaseResponseFunction {
    /// `tanh(x/ε)/tanh(π/ε) - x/π` on `[-π, π]`; sharper for small ε.
    Tanh { epsilon: f64 },
    /// `a·sin(x)`.
    Sine { amplitude: f64 },
    Custom(PrfTable),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "lowercase", deny_unknown_fields)]
enum PrfDoc {
    Tanh { epsilon: f64 },
    Sine { amplitude: f64 },
    Custom { points: Vec<(f64, f64)> },
}

impl TryFrom<PrfDoc> for PhaseResponseFunction {
    type Error = Error;

    fn try_from(doc: PrfDoc) -> Result<Self> {
        match doc {
            PrfDoc::Tanh { epsilon } => Self::tanh(epsilon),
            PrfDoc::Sine { amplitude } => Self::sine(amplitude),
            PrfDoc::Custom { points } => Ok(Self::Custom(PrfTable::new(points)?)),
        }
    }
}

impl From<PhaseResponseFunction> for PrfDoc {
    fn from(prf: PhaseResponseFunction) -> Self {
        match prf {
            PhaseResponseFunction::Tanh { epsilon } => PrfDoc::Tanh { epsilon },
            PhaseResponseFunction::Sine { amplitude } => PrfDoc::Sine { amplitude },
            PhaseResponseFunction::Custom(table) => PrfDoc::Custom {
                points: table.points().collect(),
            },
        }
    }
}

impl PhaseResponseFunction {
    pub fn tanh(epsilon: f64) -> Result<Self> {
        if !(epsilon.is_finite() && epsilon > 0.0) {
            return Err(Error::Domain {
                name: "epsilon",
                value: epsilon,
                domain: "(0, ∞)",
            });
        }
        Ok(Self::Tanh { epsilon })
    }

    pub fn sine(amplitude: f64) -> Result<Self> {
        if !(amplitude.is_finite() && amplitude > 0.0) {
            return Err(Error::Domain {
                name: "amplitude",
                value: amplitude,
                domain: "(0, ∞)",
            });
        }
        Ok(Self::Sine { amplitude })
    }

    pub fn table(points: Vec<(f64, f64)>) -> Result<Self> {
        Ok(Self::Custom(PrfTable::new(points)?))
    }

    pub fn is_analytic(&self) -> bool {
        !matches!(self, Self::Custom(_))
    }

    /// Zero/oddness tolerance appropriate for this family.
    pub fn tolerance(&self) -> f64 {
        if self.is_analytic() {
            ANALYTIC_TOLERANCE
        } else {
            TABLE_TOLERANCE
        }
    }

    /// Evaluates `Q(x)` after reducing `x` into `[-π, π]`.
    #[inline]
    pub fn evaluate(&self, x: f64) -> f64 {
        let x = wrap_angle(x);
        match self {
            Self::Tanh { epsilon } => (x / epsilon).tanh() / (PI / epsilon).tanh() - x / PI,
            Self::Sine { amplitude } => amplitude * x.sin(),
            Self::Custom(table) => table.interpolate(x),
        }
    }

    /// `lim_{x→0} Q(x)/x`.
    pub fn slope_at_zero(&self) -> f64 {
        match self {
            Self::Tanh { epsilon } => 1.0 / (epsilon * (PI / epsilon).tanh()) - 1.0 / PI,
            Self::Sine { amplitude } => *amplitude,
            Self::Custom(table) => {
                let h = TABLE_SLOPE_STEP;
                (table.interpolate(h) - table.interpolate(-h)) / (2.0 * h)
            }
        }
    }

    /// `Q(x)/x`, with the removable singularity at zero filled by the slope.
    #[inline]
    pub fn ratio(&self, x: f64) -> f64 {
        if x == 0.0 {
            self.slope_at_zero()
        } else {
            self.evaluate(x) / x
        }
    }

    /// Checks `Q(0) = 0`, oddness and the sign condition `x·Q(x) > 0` on the
    /// grid `-π + 2πk/n`, `k = 1..n-1`.
    pub fn validate_admissibility(&self, grid_points: usize) -> Result<AdmissibilityReport> {
        if grid_points < 100 {
            return Err(Error::InvalidArgument(format!(
                "admissibility grid needs at least 100 points, got {grid_points}"
            )));
        }
        let tol = self.tolerance();
        let q0 = self.evaluate(0.0);
        let step = TAU / grid_points as f64;
        let mut odd_violations = Vec::new();
        let mut sign_violations = Vec::new();
        for k in 1..grid_points {
            let x = -PI + step * k as f64;
            if x == 0.0 {
                continue;
            }
            let q = self.evaluate(x);
            if (q + self.evaluate(-x)).abs() >= tol {
                odd_violations.push(x);
            }
            if x * q <= 0.0 {
                sign_violations.push(x);
            }
        }
        Ok(AdmissibilityReport {
            grid_points,
            tolerance: tol,
            value_at_zero: q0,
            zero_ok: q0.abs() < tol,
            odd_violations,
            sign_violations,
        })
    }
}

/// Outcome of [`PhaseResponseFunction::validate_admissibility`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdmissibilityReport {
    pub grid_points: usize,
    pub tolerance: f64,
    pub value_at_zero: f64,
    pub zero_ok: bool,
    pub odd_violations: Vec<f64>,
    pub sign_violations: Vec<f64>,
}

impl AdmissibilityReport {
    pub fn passed(&self) -> bool {
        self.zero_ok && self.odd_violations.is_empty() && self.sign_violations.is_empty()
    }
}

/// Extremal ratio constants of a `(Q_g, Q_l)` pair over the box `[-ε̄, ε̄]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PrfBounds {
    pub eps_bar: f64,
    /// min `Q_g(x)/x` over `[-ε̄, ε̄]`.
    pub sigma1: f64,
    /// min `Q_l(x)/x` over `[-2ε̄, 2ε̄]`.
    pub sigma2: f64,
    /// Same extremum as `sigma1`; kept separately for the wide-box bound.
    pub sigma3: f64,
    /// max `-Q_l(x)/x` over `[-2ε̄, 2ε̄]`.
    pub sigma4: f64,
    /// min `Q_g(x)` over `[0, ε̄]`.
    pub gamma1: f64,
    /// max `-Q_l(x)` over `[0, 2ε̄]`.
    pub gamma2: f64,
    /// `Q_g(ε̄)`: the restoring pull of the cue on the box boundary.
    pub gamma1_boundary: f64,
}

fn grid(lo: f64, hi: f64, n: usize) -> impl Iterator<Item = f64> {
    let step = (hi - lo) / (n - 1) as f64;
    (0..n).map(move |k| if k + 1 == n { hi } else { lo + step * k as f64 })
}

fn extremum(
    lo: f64,
    hi: f64,
    n: usize,
    f: impl Fn(f64) -> f64,
    pick: fn(f64, f64) -> f64,
) -> f64 {
    let mut acc = f(lo);
    if lo < 0.0 && hi > 0.0 {
        acc = pick(acc, f(0.0));
    }
    if hi > lo {
        for x in grid(lo, hi, n) {
            acc = pick(acc, f(x));
        }
    }
    acc
}

/// Dense grid search for the constants in [`PrfBounds`].
///
/// Intervals that reach beyond ±π are evaluated through the periodic
/// extension of `Q_l`, which is what makes `sigma4` non-negative once
/// `ε̄ ≥ π/2`.
pub fn compute_bounds(
    qg: &PhaseResponseFunction,
    ql: &PhaseResponseFunction,
    eps_bar: f64,
    grid_points: usize,
) -> Result<PrfBounds> {
    if !(0.0..PI).contains(&eps_bar) {
        return Err(Error::Domain {
            name: "eps_bar",
            value: eps_bar,
            domain: "[0, π)",
        });
    }
    if grid_points < 1000 {
        return Err(Error::InvalidArgument(format!(
            "bounds grid needs at least 1000 points, got {grid_points}"
        )));
    }
    let e = eps_bar;
    let n = grid_points;
    let sigma1 = extremum(-e, e, n, |x| qg.ratio(x), f64::min);
    let sigma2 = extremum(-2.0 * e, 2.0 * e, n, |x| ql.ratio(x), f64::min);
    let sigma4 = extremum(-2.0 * e, 2.0 * e, n, |x| -ql.ratio(x), f64::max);
    let gamma1 = extremum(0.0, e, n, |x| qg.evaluate(x), f64::min);
    let gamma2 = extremum(0.0, 2.0 * e, n, |x| -ql.evaluate(x), f64::max);
    Ok(PrfBounds {
        eps_bar,
        sigma1,
        sigma2,
        sigma3: sigma1,
        sigma4,
        gamma1,
        gamma2,
        gamma1_boundary: qg.evaluate(e),
    })
}

/// `ln(tanh(|x|/ε) / tanh(π/ε))`, i.e. `ln(|x|·(Q(x)/x + 1/π))` for the tanh
/// family.
///
/// At fixed `x` this orders `Q(x)/x` across ε exactly like the ratio itself,
/// but stays resolvable when both tanh factors round to 1 in double precision.
pub fn tanh_gain_log(x: f64, epsilon: f64) -> f64 {
    ln_tanh(x.abs() / epsilon) - ln_tanh(PI / epsilon)
}

fn ln_tanh(a: f64) -> f64 {
    if a < 1.0 {
        a.tanh().ln()
    } else {
        let e = (-2.0 * a).exp();
        (-e).ln_1p() - e.ln_1p()
    }
}

/// `f(x, ε)·e^{-2π/ε}` where
/// `f(x, ε) = [π(e^{2x/ε} − e^{−2x/ε}) − x(e^{2π/ε} − e^{−2π/ε})]/x`.
///
/// The sign of `f` decides the sign of `∂(Q(x)/x)/∂ε` for the tanh family.
/// The rescaling keeps it finite for small ε without changing the sign.
pub fn epsilon_sensitivity_kernel(x: f64, epsilon: f64) -> f64 {
    let a = 2.0 / epsilon;
    let numer = PI * (((x - PI) * a).exp() - ((-x - PI) * a).exp())
        - x * (1.0 - (-2.0 * PI * a).exp());
    numer / x
}

/// Per-ε summary of [`verify_epsilon_monotonicity`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpsilonCheck {
    pub epsilon: f64,
    /// Largest rescaled kernel value on the grid (expected negative).
    pub max_kernel: f64,
    pub kernel_violations: Vec<f64>,
    /// Abscissae where `Q(x)/x` failed to drop when ε grew by 0.1 %.
    pub ratio_violations: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpsilonMonotonicityReport {
    pub grid_points: usize,
    pub checks: Vec<EpsilonCheck>,
}

impl EpsilonMonotonicityReport {
    pub fn passed(&self) -> bool {
        self.checks
            .iter()
            .all(|c| c.kernel_violations.is_empty() && c.ratio_violations.is_empty())
    }
}

/// Numerically confirms that, for the tanh family, `Q(x)/x` strictly grows as
/// ε shrinks on `(-π, π) \ {0}`: the sensitivity kernel is negative on the grid
/// and the ratio at `ε(1 + 10⁻³)` sits below the ratio at ε.
pub fn verify_epsilon_monotonicity(
    eps_values: &[f64],
    x_grid: usize,
) -> Result<EpsilonMonotonicityReport> {
    if x_grid < 1000 {
        return Err(Error::InvalidArgument(format!(
            "x grid needs at least 1000 points, got {x_grid}"
        )));
    }
    let step = TAU / x_grid as f64;
    let xs: Vec<f64> = (1..x_grid)
        .map(|k| -PI + step * k as f64)
        .filter(|&x| x != 0.0)
        .collect();
    let mut checks = Vec::with_capacity(eps_values.len());
    for &eps in eps_values {
        PhaseResponseFunction::tanh(eps)?;
        let bumped = eps * (1.0 + 1e-3);
        let mut max_kernel = f64::NEG_INFINITY;
        let mut kernel_violations = Vec::new();
        let mut ratio_violations = Vec::new();
        for &x in &xs {
            let f = epsilon_sensitivity_kernel(x, eps);
            max_kernel = max_kernel.max(f);
            if f >= 0.0 {
                kernel_violations.push(x);
            }
            if tanh_gain_log(x, bumped) >= tanh_gain_log(x, eps) {
                ratio_violations.push(x);
            }
        }
        checks.push(EpsilonCheck {
            epsilon: eps,
            max_kernel,
            kernel_violations,
            ratio_violations,
        });
    }
    Ok(EpsilonMonotonicityReport {
        grid_points: x_grid,
        checks,
    })
}
