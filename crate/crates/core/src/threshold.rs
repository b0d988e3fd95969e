//! Optimal dynamic cutoff curves and expected-revenue curves.
//!
//! Curve `i` solves the fixed point
//!
//! ```text
//! ŷ_i(t) = h(ŷ_i(t)) + λ∫ₜᵀ S(ŷ_i(s)) ds − λ∫ₜᵀ S(ŷ_{i−1}(s)) ds,   ŷ = y^(1/η)
//! ```
//!
//! with `h = (1 − F)/f`, `S = (1 − F)²/f` and no subtracted term for `i = 1`.
//! The revenue of `i` unit-rate VMIs is `R_i(t) = λ∫ₜᵀ S(ŷ_i(s)) ds`.
//!
//! Curves are stored as their excess over the terminal reserve `x*`. Deep
//! curves sit within 1e−100 of `x*` near the horizon, and only the excess
//! keeps them distinguishable in `f64`.

use std::io::{self, Write};

use crate::arrival::{ArrivalModel, CharacteristicLaw, LINEARISE_BELOW};
use crate::error::{Error, Result};
use crate::numeric::{format_sig, tail_trapezoid};

/// Closed-form cutoff curves used as independent oracles.
pub mod closed_form {
    use std::f64::consts::E;

    /// `y₁(t)` for exponential `x̂` with rate `alpha`.
    pub fn y1_exponential(t: f64, lambda: f64, alpha: f64, eta: f64, horizon: f64) -> f64 {
        let u = lambda * (horizon - t);
        alpha.powf(-eta) * (1.0 + (1.0 + u / E).ln()).powf(eta)
    }

    pub fn y2_exponential(t: f64, lambda: f64, alpha: f64, eta: f64, horizon: f64) -> f64 {
        let u = lambda * (horizon - t);
        let inner = u * u / (2.0 * E * (u + E));
        alpha.powf(-eta) * (1.0 + (1.0 + inner).ln()).powf(eta)
    }

    pub fn y3_exponential(t: f64, lambda: f64, alpha: f64, eta: f64, horizon: f64) -> f64 {
        let u = lambda * (horizon - t);
        let inner = u.powi(3) / (3.0 * E * (u * u + 2.0 * E * (u + E)));
        alpha.powf(-eta) * (1.0 + (1.0 + inner).ln()).powf(eta)
    }

    /// `y₁(t)` for `x̂` uniform on `[0, beta]`.
    pub fn y1_uniform(t: f64, lambda: f64, beta: f64, eta: f64, horizon: f64) -> f64 {
        let u = lambda * (horizon - t);
        beta.powf(eta) * (1.0 - 2.0 / (u + 4.0)).powf(eta)
    }
}

/// Knobs of the threshold solver.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverSettings {
    /// Number of grid intervals `M`; the grid has `M + 1` points.
    pub grid_intervals: usize,
    /// Picard iterations allowed per grid node.
    pub max_iterations: usize,
    /// Relative change between successive iterates that counts as converged.
    pub tolerance: f64,
    /// Bound on the relative fixed-point residual of each finished curve.
    pub residual_tolerance: f64,
    /// Relaxation applied once successive updates alternate in sign.
    pub damping: f64,
}

impl Default for SolverSettings {
    fn default() -> Self {
        Self {
            grid_intervals: 2000,
            max_iterations: 500,
            tolerance: 1e-12,
            residual_tolerance: 1e-6,
            damping: 0.5,
        }
    }
}

/// Lookup table of cutoff curves `y_1 > y_2 > … > y_N₀` on a uniform grid.
///
/// The family for `n` available VMIs is the first `n` curves.
#[derive(Debug, Clone, PartialEq)]
pub struct ThresholdTable {
    horizon: f64,
    eta: f64,
    reserve: f64,
    dt: f64,
    grid: Vec<f64>,
    excess: Vec<Vec<f64>>,
}

fn uniform_grid(horizon: f64, intervals: usize) -> Vec<f64> {
    let dt = horizon / intervals as f64;
    (0..=intervals)
        .map(|m| if m == intervals { horizon } else { m as f64 * dt })
        .collect()
}

impl ThresholdTable {
    /// Builds a table from per-curve excesses over `reserve` (transformed
    /// scale). Each curve must have one value per grid point.
    pub fn from_excess(horizon: f64, eta: f64, reserve: f64, excess: Vec<Vec<f64>>) -> Result<Self> {
        let points = excess.first().map(Vec::len).unwrap_or(0);
        if excess.is_empty() || points < 2 {
            return Err(Error::Table("need at least one curve and two grid points".into()));
        }
        if excess.iter().any(|c| c.len() != points) {
            return Err(Error::Table("curves have differing lengths".into()));
        }
        let intervals = points - 1;
        Ok(Self {
            horizon,
            eta,
            reserve,
            dt: horizon / intervals as f64,
            grid: uniform_grid(horizon, intervals),
            excess,
        })
    }

    pub fn n_initial(&self) -> usize {
        self.excess.len()
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn eta(&self) -> f64 {
        self.eta
    }

    /// Terminal reserve `x*` on the transformed scale.
    pub fn reserve(&self) -> f64 {
        self.reserve
    }

    pub fn grid(&self) -> &[f64] {
        &self.grid
    }

    /// Excess of curve `i` (1-based) over the reserve at every grid point.
    pub fn excess_curve(&self, i: usize) -> Result<&[f64]> {
        self.check_curve(i)?;
        Ok(&self.excess[i - 1])
    }

    /// Curve `i` in raw-characteristic units at every grid point.
    pub fn curve(&self, i: usize) -> Result<Vec<f64>> {
        Ok(self
            .excess_curve(i)?
            .iter()
            .map(|e| self.to_raw(*e))
            .collect())
    }

    /// `y_i(t_m)` in raw units.
    pub fn value(&self, i: usize, m: usize) -> Result<f64> {
        let curve = self.excess_curve(i)?;
        curve
            .get(m)
            .map(|e| self.to_raw(*e))
            .ok_or(Error::IndexOutOfRange {
                what: "grid",
                index: m,
                max: curve.len() - 1,
            })
    }

    fn to_raw(&self, excess: f64) -> f64 {
        (self.reserve + excess).powf(self.eta)
    }

    fn check_curve(&self, i: usize) -> Result<()> {
        if i == 0 || i > self.excess.len() {
            return Err(Error::IndexOutOfRange {
                what: "curve",
                index: i,
                max: self.excess.len(),
            });
        }
        Ok(())
    }

    /// Grid cell and weight for `t`, snapping to grid points.
    fn locate(&self, t: f64) -> Result<(usize, f64)> {
        let slack = 1e-12 * self.horizon.max(1.0);
        if !(t >= -slack && t <= self.horizon + slack) {
            return Err(Error::TimeOutOfRange {
                t,
                horizon: self.horizon,
            });
        }
        let intervals = self.grid.len() - 1;
        let pos = (t / self.dt).clamp(0.0, intervals as f64);
        let nearest = pos.round();
        if (pos - nearest).abs() < 1e-9 {
            let m = nearest as usize;
            return Ok(if m == intervals { (m - 1, 1.0) } else { (m, 0.0) });
        }
        let m = (pos.floor() as usize).min(intervals - 1);
        Ok((m, pos - m as f64))
    }

    /// Interpolated excess of curve `i` at time `t`.
    pub fn excess_at(&self, i: usize, t: f64) -> Result<f64> {
        self.check_curve(i)?;
        let (m, w) = self.locate(t)?;
        let c = &self.excess[i - 1];
        Ok(if w == 0.0 {
            c[m]
        } else if w == 1.0 {
            c[m + 1]
        } else {
            c[m] + w * (c[m + 1] - c[m])
        })
    }

    /// `y_i(t)` in raw units, linear between grid points.
    pub fn threshold_at(&self, i: usize, t: f64) -> Result<f64> {
        Ok(self.to_raw(self.excess_at(i, t)?))
    }

    /// `ŷ_i(t) = y_i(t)^(1/η)`.
    pub fn transformed_at(&self, i: usize, t: f64) -> Result<f64> {
        Ok(self.reserve + self.excess_at(i, t)?)
    }

    /// Raw thresholds `y_1(t) … y_n(t)` of the family for `n` available VMIs.
    pub fn family_at(&self, n: usize, t: f64) -> Result<Vec<f64>> {
        if n > self.n_initial() {
            return Err(Error::IndexOutOfRange {
                what: "family size",
                index: n,
                max: self.n_initial(),
            });
        }
        (1..=n).map(|i| self.threshold_at(i, t)).collect()
    }

    /// Curve ordering: strict before the horizon, all curves meeting the
    /// reserve at `T`, and every curve nonincreasing in time.
    pub fn check_invariants(&self) -> Result<()> {
        let last = self.grid.len() - 1;
        for (k, curve) in self.excess.iter().enumerate() {
            if curve[last] != 0.0 {
                return Err(Error::Table(format!("curve {} misses the terminal reserve", k + 1)));
            }
            if let Some(m) = (0..last).find(|&m| curve[m] < curve[m + 1]) {
                return Err(Error::Table(format!(
                    "curve {} increases at grid index {m}",
                    k + 1
                )));
            }
        }
        for m in 0..last {
            if self.excess[self.excess.len() - 1][m] <= 0.0 {
                return Err(Error::OrderingViolation {
                    upper: self.excess.len(),
                    lower: self.excess.len() + 1,
                    index: m,
                });
            }
            for k in 1..self.excess.len() {
                if self.excess[k][m] >= self.excess[k - 1][m] {
                    return Err(Error::OrderingViolation {
                        upper: k,
                        lower: k + 1,
                        index: m,
                    });
                }
            }
        }
        Ok(())
    }

    /// CSV with columns `t, y_1, …, y_N0`, 12 significant digits.
    pub fn write_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        write!(w, "t")?;
        for i in 1..=self.n_initial() {
            write!(w, ",y_{i}")?;
        }
        writeln!(w)?;
        for (m, t) in self.grid.iter().enumerate() {
            write!(w, "{}", format_sig(*t, 12))?;
            for curve in &self.excess {
                write!(w, ",{}", format_sig(self.to_raw(curve[m]), 12))?;
            }
            writeln!(w)?;
        }
        Ok(())
    }

    /// Reads a table written by [`ThresholdTable::write_csv`]. The reserve
    /// is taken from the terminal row.
    pub fn from_csv(text: &str, eta: f64) -> Result<Self> {
        let rows = parse_numeric_csv(text, "y_")?;
        let n = rows[0].len() - 1;
        let horizon = rows[rows.len() - 1][0];
        let intervals = rows.len() - 1;
        if rows[0][0] != 0.0 || !(horizon > 0.0) {
            return Err(Error::Table("time column must run from 0 to T > 0".into()));
        }
        let dt = horizon / intervals as f64;
        for (m, row) in rows.iter().enumerate() {
            if (row[0] - m as f64 * dt).abs() > 1e-6 * dt.max(1e-300) + 1e-9 {
                return Err(Error::Table(format!("non-uniform time grid at row {}", m + 1)));
            }
            if row[1..].iter().any(|y| !(*y > 0.0)) {
                return Err(Error::Table(format!("nonpositive threshold at row {}", m + 1)));
            }
        }
        let reserve = rows[intervals][1].powf(1.0 / eta);
        let excess = (0..n)
            .map(|k| {
                rows.iter()
                    .map(|row| (row[k + 1].powf(1.0 / eta) - reserve).max(0.0))
                    .collect()
            })
            .collect();
        Self::from_excess(horizon, eta, reserve, excess)
    }
}

fn parse_numeric_csv(text: &str, prefix: &str) -> Result<Vec<Vec<f64>>> {
    let mut lines = text.lines().filter(|l| !l.trim().is_empty());
    let header = lines
        .next()
        .ok_or_else(|| Error::Table("empty file".into()))?;
    let cols: Vec<&str> = header.split(',').map(str::trim).collect();
    if cols.len() < 2 || cols[0] != "t" {
        return Err(Error::Table("header must start with t".into()));
    }
    for (k, c) in cols[1..].iter().enumerate() {
        if *c != format!("{prefix}{}", k + 1) {
            return Err(Error::Table(format!("unexpected column {c}")));
        }
    }
    let mut rows = Vec::new();
    for (lineno, line) in lines.enumerate() {
        let row: std::result::Result<Vec<f64>, _> =
            line.split(',').map(|v| v.trim().parse::<f64>()).collect();
        let row = row.map_err(|e| Error::Table(format!("row {}: {e}", lineno + 1)))?;
        if row.len() != cols.len() {
            return Err(Error::Table(format!("row {} has {} fields", lineno + 1, row.len())));
        }
        rows.push(row);
    }
    if rows.len() < 2 {
        return Err(Error::Table("need at least two rows".into()));
    }
    Ok(rows)
}

/// Expected revenue `R_i(t)` of `i` unit-rate VMIs, for `i = 1..N₀`.
#[derive(Debug, Clone, PartialEq)]
pub struct RevenueCurve {
    horizon: f64,
    eta: f64,
    grid: Vec<f64>,
    values: Vec<Vec<f64>>,
}

impl RevenueCurve {
    pub fn n_initial(&self) -> usize {
        self.values.len()
    }

    pub fn grid(&self) -> &[f64] {
        &self.grid
    }

    pub fn curve(&self, i: usize) -> Result<&[f64]> {
        if i == 0 || i > self.values.len() {
            return Err(Error::IndexOutOfRange {
                what: "curve",
                index: i,
                max: self.values.len(),
            });
        }
        Ok(&self.values[i - 1])
    }

    /// `R_i(t)` with linear interpolation; `R_0 ≡ 0`.
    pub fn value_at(&self, i: usize, t: f64) -> Result<f64> {
        if i == 0 {
            return Ok(0.0);
        }
        let curve = self.curve(i)?;
        if !(t >= 0.0 && t <= self.horizon * (1.0 + 1e-12)) {
            return Err(Error::TimeOutOfRange {
                t,
                horizon: self.horizon,
            });
        }
        let intervals = self.grid.len() - 1;
        let pos = (t / self.horizon * intervals as f64).clamp(0.0, intervals as f64);
        let m = (pos.floor() as usize).min(intervals - 1);
        let w = pos - m as f64;
        Ok(curve[m] + w * (curve[m + 1] - curve[m]))
    }

    /// Increment form of the expected revenue:
    /// `Σ r_i^(1/η) (R_i(t) − R_{i−1}(t))`.
    pub fn expected_revenue(&self, rates: &[f64], t: f64) -> Result<f64> {
        check_rates(rates, self.n_initial())?;
        let mut total = 0.0;
        let mut below = 0.0;
        for (k, r) in rates.iter().enumerate() {
            let here = self.value_at(k + 1, t)?;
            total += r.powf(1.0 / self.eta) * (here - below);
            below = here;
        }
        Ok(total)
    }

    /// CSV with columns `t, R_1, …, R_N0`.
    pub fn write_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        write!(w, "t")?;
        for i in 1..=self.n_initial() {
            write!(w, ",R_{i}")?;
        }
        writeln!(w)?;
        for (m, t) in self.grid.iter().enumerate() {
            write!(w, "{}", format_sig(*t, 12))?;
            for curve in &self.values {
                write!(w, ",{}", format_sig(curve[m], 12))?;
            }
            writeln!(w)?;
        }
        Ok(())
    }
}

fn check_rates(rates: &[f64], max: usize) -> Result<()> {
    if rates.len() > max {
        return Err(Error::IndexOutOfRange {
            what: "rate count",
            index: rates.len(),
            max,
        });
    }
    if rates.windows(2).any(|w| w[0] < w[1]) {
        return Err(Error::Unsorted { what: "rates" });
    }
    if rates.iter().any(|r| !(*r > 0.0)) {
        return Err(Error::InvalidParameter {
            name: "rate",
            value: rates.iter().copied().find(|r| !(*r > 0.0)).unwrap_or(f64::NAN),
            reason: "must be positive",
        });
    }
    Ok(())
}

/// Integrand of curve `i` at one node: `S(ŷ_1)` for the first curve,
/// `S(ŷ_i) − S(ŷ_{i−1})` afterwards, evaluated through excesses.
fn integrand(law: &dyn CharacteristicLaw, reserve: f64, e: f64, prev: Option<f64>) -> Result<f64> {
    match prev {
        None => law.squared_survival_over_pdf(reserve + e),
        Some(p) => law.survival_term_difference(reserve, e, p),
    }
}

struct NodeSolve {
    value: f64,
    iterations: usize,
}

/// Damped Picard iteration for the scalar fixed point at one grid node.
///
/// Once the excess is large enough for shifted differences to be evaluated
/// directly they carry absolute rounding of order `ε · scale`, so
/// convergence is also accepted below that floor.
fn picard_node<G>(mut rhs: G, start: f64, scale: f64, settings: &SolverSettings, curve: usize) -> Result<NodeSolve>
where
    G: FnMut(f64) -> Result<f64>,
{
    let mut x = start;
    let mut relax = 1.0;
    let mut last_sign = 0.0;
    let mut last_change = f64::INFINITY;
    for k in 0..settings.max_iterations {
        let next = rhs(x)?;
        let delta = next - x;
        if !delta.is_finite() {
            break;
        }
        last_change = delta.abs() / next.abs().max(f64::MIN_POSITIVE);
        let floor = if next.abs() > LINEARISE_BELOW * scale {
            16.0 * f64::EPSILON * scale
        } else {
            0.0
        };
        if delta == 0.0 || delta.abs() <= settings.tolerance * next.abs() + floor {
            return Ok(NodeSolve {
                value: next,
                iterations: k + 1,
            });
        }
        let sign = delta.signum();
        if last_sign != 0.0 && sign != last_sign {
            relax = settings.damping;
        }
        last_sign = sign;
        x += relax * delta;
    }
    Err(Error::NonConvergence {
        curve,
        iterations: settings.max_iterations,
        residual: last_change,
    })
}

/// Solves the cutoff curves `y_1 … y_{n_initial}` and the matching revenue
/// curves on `[0, horizon]`.
///
/// Each curve is marched backward from the horizon; at every grid node the
/// trapezoid-discretised equation is a scalar fixed point solved by damped
/// Picard iteration started from the neighbouring node.
pub fn solve_thresholds(
    model: &ArrivalModel,
    n_initial: usize,
    horizon: f64,
    settings: &SolverSettings,
) -> Result<(ThresholdTable, RevenueCurve)> {
    if n_initial == 0 {
        return Err(Error::InvalidParameter {
            name: "n_initial",
            value: 0.0,
            reason: "need at least one VMI",
        });
    }
    if !(horizon > 0.0 && horizon.is_finite()) {
        return Err(Error::InvalidParameter {
            name: "horizon",
            value: horizon,
            reason: "must be positive and finite",
        });
    }
    if settings.grid_intervals < 100 {
        return Err(Error::InvalidParameter {
            name: "grid_intervals",
            value: settings.grid_intervals as f64,
            reason: "need at least 100 intervals",
        });
    }
    if !(settings.damping > 0.0 && settings.damping <= 1.0) {
        return Err(Error::InvalidParameter {
            name: "damping",
            value: settings.damping,
            reason: "must lie in (0, 1]",
        });
    }

    let law = model.law();
    let reserve = model.reserve()?;
    let lambda = model.lambda();
    let intervals = settings.grid_intervals;
    let dt = horizon / intervals as f64;
    let half_step = 0.5 * lambda * dt;

    let mut excess: Vec<Vec<f64>> = Vec::with_capacity(n_initial);
    let mut revenue: Vec<Vec<f64>> = Vec::with_capacity(n_initial);

    for curve_no in 1..=n_initial {
        let prev = excess.last();
        let mut e = vec![0.0; intervals + 1];
        let mut g = vec![0.0; intervals + 1];
        // λ∫ₜᵀ (S(ŷ_i) − S(ŷ_{i−1})) ds on the grid
        let mut diff_integral = vec![0.0; intervals + 1];
        g[intervals] = integrand(law, reserve, 0.0, prev.map(|p| p[intervals]))?;

        for m in (0..intervals).rev() {
            let carried = diff_integral[m + 1] + half_step * g[m + 1];
            let prev_here = prev.map(|p| p[m]);
            let node = picard_node(
                |x| {
                    Ok(law.hazard_inverse_shift(reserve, x)?
                        + carried
                        + half_step * integrand(law, reserve, x, prev_here)?)
                },
                e[m + 1],
                reserve.abs().max(1.0),
                settings,
                curve_no,
            )?;
            debug_assert!(node.iterations <= settings.max_iterations);
            e[m] = node.value;
            g[m] = integrand(law, reserve, e[m], prev_here)?;
            diff_integral[m] = carried + half_step * g[m];
        }

        // Residual of the whole discretised curve, recomputed from scratch.
        let scaled: Vec<f64> = g.iter().map(|v| lambda * v).collect();
        let rebuilt = tail_trapezoid(&scaled, dt);
        let mut residual: f64 = 0.0;
        for m in 0..=intervals {
            let rhs = law.hazard_inverse_shift(reserve, e[m])? + rebuilt[m];
            residual = residual.max((e[m] - rhs).abs() / (reserve + e[m]).abs());
        }
        if !(residual <= settings.residual_tolerance) {
            return Err(Error::NonConvergence {
                curve: curve_no,
                iterations: settings.max_iterations,
                residual,
            });
        }

        let below = revenue.last();
        let r: Vec<f64> = diff_integral
            .iter()
            .enumerate()
            .map(|(m, d)| below.map_or(0.0, |b: &Vec<f64>| b[m]) + d)
            .collect();
        excess.push(e);
        revenue.push(r);
    }

    let table = ThresholdTable::from_excess(horizon, model.eta(), reserve, excess)?;
    table.check_invariants()?;
    let grid = table.grid().to_vec();
    Ok((
        table,
        RevenueCurve {
            horizon,
            eta: model.eta(),
            grid,
            values: revenue,
        },
    ))
}

/// Relative fixed-point residual of curve `i`, evaluated directly on the
/// transformed scale with `R_{i−1}` taken from the stored revenue curve.
pub fn fixed_point_residual(
    model: &ArrivalModel,
    table: &ThresholdTable,
    revenue: &RevenueCurve,
    i: usize,
) -> Result<f64> {
    let grid = table.grid();
    let dt = table.horizon() / (grid.len() - 1) as f64;
    let transformed: Vec<f64> = table
        .excess_curve(i)?
        .iter()
        .map(|e| table.reserve() + e)
        .collect();
    let integrand: Vec<f64> = transformed
        .iter()
        .map(|y| Ok(model.lambda() * model.squared_survival_over_pdf(*y)?))
        .collect::<Result<_>>()?;
    let own = tail_trapezoid(&integrand, dt);
    let below: Vec<f64> = if i == 1 {
        vec![0.0; grid.len()]
    } else {
        revenue.curve(i - 1)?.to_vec()
    };
    let mut worst: f64 = 0.0;
    for m in 0..grid.len() {
        let rhs = model.hazard_inverse(transformed[m])? + own[m] - below[m];
        worst = worst.max((transformed[m] - rhs).abs() / transformed[m].abs());
    }
    Ok(worst)
}

/// Expected revenue `Σ r_i^(1/η) ψ(ŷ_i(t))` of the available VMIs at `t`.
pub fn expected_revenue(
    model: &ArrivalModel,
    table: &ThresholdTable,
    rates: &[f64],
    t: f64,
) -> Result<f64> {
    check_rates(rates, table.n_initial())?;
    let law = model.law();
    let reserve = table.reserve();
    let at_reserve = law.virtual_valuation(reserve)?;
    let mut total = 0.0;
    for (k, r) in rates.iter().enumerate() {
        let e = table.excess_at(k + 1, t)?;
        // ψ(x* + e) = ψ(x*) + e − (h(x* + e) − h(x*))
        let psi = at_reserve + e - law.hazard_inverse_shift(reserve, e)?;
        total += r.powf(1.0 / table.eta()) * psi;
    }
    Ok(total)
}
