//! Pointwise check of the convergence conditions on `g(t)` for schedules of
//! the form `Gamma = (M/beta) artanh[(c1 t + c2)^{-g(t)}]`.

use std::f64::consts::E;

use serde::{Deserialize, Serialize};

use super::Schedule;
use crate::error::{Result, SqaError};
use crate::lattice::{PofM, TrotterSystem};
use crate::numeric::logspace;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct Proposition1Options {
    /// Coordination constant in the norm bound; defaults to the system's coordination number.
    pub b: Option<usize>,
    pub cprime: f64,
    pub cdoubleprime: f64,
    /// Exponent `c` of the gap prefactor `A(N) = a sqrt(N) e^{-cN}`; unknown, default 0.
    pub assumed_c: f64,
    /// Check times; defaults to [`default_check_grid`].
    pub grid: Option<Vec<f64>>,
}

impl Default for Proposition1Options {
    fn default() -> Self {
        Self { b: None, cprime: 0.0, cdoubleprime: 0.0, assumed_c: 0.0, grid: None }
    }
}

/// Worst case of `bound - value` over the grid.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConditionCheck {
    pub ok: bool,
    pub worst_margin: f64,
    pub worst_time: f64,
}

impl ConditionCheck {
    fn from_margins(times: &[f64], margins: &[f64]) -> Self {
        let (i, worst) = margins
            .iter()
            .copied()
            .enumerate()
            .fold((0, f64::INFINITY), |acc, (i, m)| if m < acc.1 { (i, m) } else { acc });
        Self { ok: worst >= 0.0, worst_margin: worst, worst_time: times[i] }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Proposition1Report {
    /// `0 < g <= 1/2N`.
    pub condition1: ConditionCheck,
    /// `|g'| <= c' / (u log u)`.
    pub condition2: ConditionCheck,
    /// `|g''| <= c'' / (u log u)`.
    pub condition3: ConditionCheck,
    /// Earliest grid time from which all three conditions hold at every later grid point.
    pub earliest_passing_time: Option<f64>,
    /// `(3b c1/4N + 3b c'/2 + c''/2) M 2^{2N} e^{2N beta p(M) + 2Nc}`.
    pub constant_condition_lhs: f64,
    /// `|gamma'| e^{4N gamma} <= c1/4N + c'/2`.
    pub first_derivative_bound: ConditionCheck,
    /// `|gamma''| e^{4N gamma} <= c1 c'/(u log u) + c1^2/(4N u) + c''/2`.
    pub second_derivative_bound: ConditionCheck,
    pub c1: f64,
    pub c2: f64,
    pub cprime: f64,
    pub cdoubleprime: f64,
    pub assumed_c: f64,
    pub b: usize,
    pub p_of_m: PofM,
    pub numeric_derivatives: bool,
    pub grid: Vec<f64>,
}

impl Proposition1Report {
    pub fn all_conditions_hold(&self) -> bool {
        self.condition1.ok && self.condition2.ok && self.condition3.ok
    }
}

/// 200 log-spaced times on `[t0, 1e6]` with `c1 t0 + c2 = e + 0.1`.
pub fn default_check_grid(c1: f64, c2: f64) -> Vec<f64> {
    let t0 = (E + 0.1 - c2) / c1;
    if t0 > 0.0 {
        logspace(t0, 1e6, 200)
    } else {
        let mut g = vec![0.0];
        g.extend(logspace(1e-3, 1e6, 199));
        g
    }
}

pub fn check_proposition1(
    schedule: &Schedule,
    sys: &TrotterSystem,
    opts: &Proposition1Options,
) -> Result<Proposition1Report> {
    let (c1, c2, exponent) = schedule
        .as_general()
        .ok_or_else(|| SqaError::input("the condition checker needs a power-law or general schedule"))?;
    let grid = opts.grid.clone().unwrap_or_else(|| default_check_grid(c1, c2));
    if grid.is_empty() || grid.windows(2).any(|w| w[1] <= w[0]) {
        return Err(SqaError::input("check grid must be non-empty and increasing"));
    }
    if let Some(&t) = grid.iter().find(|&&t| c1 * t + c2 <= 1.0) {
        return Err(SqaError::input(format!("grid point t = {t} has c1 t + c2 <= 1")));
    }

    let n = sys.n_sites() as f64;
    let b = opts.b.unwrap_or_else(|| sys.coordination_number());
    let (cp, cpp) = (opts.cprime, opts.cdoubleprime);
    let mut m1 = Vec::with_capacity(grid.len());
    let mut m2 = Vec::with_capacity(grid.len());
    let mut m3 = Vec::with_capacity(grid.len());
    let mut d1 = Vec::with_capacity(grid.len());
    let mut d2 = Vec::with_capacity(grid.len());
    let mut numeric = false;
    for &t in &grid {
        let u = c1 * t + c2;
        let l = u.ln();
        let ([g, dg, d2g], fd) = exponent.eval(t, c1, c2);
        numeric |= fd;
        m1.push((1.0 / (2.0 * n) - g).min(g));
        m2.push(cp / (u * l) - dg.abs());
        m3.push(cpp / (u * l) - d2g.abs());

        // gamma and derivatives from the general form; e^{4N gamma} = u^{2N g}
        let weight = (2.0 * n * g * l).exp();
        let dgamma = 0.5 * dg * l + 0.5 * g * c1 / u;
        let d2gamma = 0.5 * d2g * l + dg * c1 / u - 0.5 * g * c1 * c1 / (u * u);
        d1.push(c1 / (4.0 * n) + cp / 2.0 - dgamma.abs() * weight);
        d2.push(c1 * cp / (u * l) + c1 * c1 / (4.0 * n * u) + cpp / 2.0 - d2gamma.abs() * weight);
    }

    let earliest = (0..grid.len())
        .find(|&i| (i..grid.len()).all(|j| m1[j] >= 0.0 && m2[j] >= 0.0 && m3[j] >= 0.0))
        .map(|i| grid[i]);

    let p = sys.p_of_m();
    let bf = b as f64;
    let prefactor = 3.0 * bf * c1 / (4.0 * n) + 1.5 * bf * cp + 0.5 * cpp;
    let exponent_term = 2.0 * n * sys.beta() * p.value + 2.0 * n * opts.assumed_c;
    let lhs = prefactor * sys.trotter_slices() as f64 * (2.0 * n * std::f64::consts::LN_2 + exponent_term).exp();

    Ok(Proposition1Report {
        condition1: ConditionCheck::from_margins(&grid, &m1),
        condition2: ConditionCheck::from_margins(&grid, &m2),
        condition3: ConditionCheck::from_margins(&grid, &m3),
        earliest_passing_time: earliest,
        constant_condition_lhs: lhs,
        first_derivative_bound: ConditionCheck::from_margins(&grid, &d1),
        second_derivative_bound: ConditionCheck::from_margins(&grid, &d2),
        c1,
        c2,
        cprime: cp,
        cdoubleprime: cpp,
        assumed_c: opts.assumed_c,
        b,
        p_of_m: p,
        numeric_derivatives: numeric,
        grid,
    })
}
