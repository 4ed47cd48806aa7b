//! Small numerical helpers: adaptive quadrature, monotone cubic
//! interpolation and time grids.

use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Result, SqaError};

/// Adaptive Simpson quadrature of `f` over `[a, b]` with Richardson
/// correction. `rel_tol` is relative to the magnitude of the running
/// estimate; `abs_floor` guards integrals that are exactly zero.
pub fn integrate<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, rel_tol: f64, abs_floor: f64) -> f64 {
    if a == b {
        return 0.0;
    }
    let fa = f(a);
    let fb = f(b);
    let m = 0.5 * (a + b);
    let fm = f(m);
    let whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    let tol = (rel_tol * whole.abs()).max(abs_floor);
    simpson_step(f, a, b, fa, fm, fb, whole, tol, 50)
}

#[allow(clippy::too_many_arguments)]
fn simpson_step<F: Fn(f64) -> f64>(
    f: &F,
    a: f64,
    b: f64,
    fa: f64,
    fm: f64,
    fb: f64,
    whole: f64,
    tol: f64,
    depth: u32,
) -> f64 {
    let m = 0.5 * (a + b);
    let lm = 0.5 * (a + m);
    let rm = 0.5 * (m + b);
    let flm = f(lm);
    let frm = f(rm);
    let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
    let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
    let delta = left + right - whole;
    if depth == 0 || delta.abs() <= 15.0 * tol {
        return left + right + delta / 15.0;
    }
    simpson_step(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1)
        + simpson_step(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1)
}

/// Piecewise cubic Hermite interpolant with Fritsch-Carlson slopes; preserves
/// monotonicity of the data.
#[derive(Debug, Clone)]
pub struct Pchip {
    x: Vec<f64>,
    y: Vec<f64>,
    d: Vec<f64>,
}

impl Pchip {
    pub fn new(x: Vec<f64>, y: Vec<f64>) -> Result<Self> {
        if x.len() != y.len() || x.len() < 2 {
            return Err(SqaError::input("interpolation needs at least two matching knots"));
        }
        if x.windows(2).any(|w| w[1] <= w[0]) {
            return Err(SqaError::input("interpolation knots must be strictly increasing"));
        }
        let n = x.len();
        let h: Vec<f64> = x.windows(2).map(|w| w[1] - w[0]).collect();
        let delta: Vec<f64> = (0..n - 1).map(|i| (y[i + 1] - y[i]) / h[i]).collect();
        let mut d = vec![0.0; n];
        if n == 2 {
            d[0] = delta[0];
            d[1] = delta[0];
        } else {
            for i in 1..n - 1 {
                if delta[i - 1] * delta[i] > 0.0 {
                    let w1 = 2.0 * h[i] + h[i - 1];
                    let w2 = h[i] + 2.0 * h[i - 1];
                    d[i] = (w1 + w2) / (w1 / delta[i - 1] + w2 / delta[i]);
                }
            }
            d[0] = end_slope(h[0], h[1], delta[0], delta[1]);
            d[n - 1] = end_slope(h[n - 2], h[n - 3], delta[n - 2], delta[n - 3]);
        }
        Ok(Self { x, y, d })
    }

    pub fn eval(&self, t: f64) -> f64 {
        let n = self.x.len();
        let i = match self.x.partition_point(|&v| v <= t) {
            0 => 0,
            p if p >= n => n - 2,
            p => p - 1,
        };
        let h = self.x[i + 1] - self.x[i];
        let s = (t - self.x[i]) / h;
        let s2 = s * s;
        let s3 = s2 * s;
        let h00 = 2.0 * s3 - 3.0 * s2 + 1.0;
        let h10 = s3 - 2.0 * s2 + s;
        let h01 = -2.0 * s3 + 3.0 * s2;
        let h11 = s3 - s2;
        h00 * self.y[i] + h10 * h * self.d[i] + h01 * self.y[i + 1] + h11 * h * self.d[i + 1]
    }

    pub fn domain(&self) -> (f64, f64) {
        (self.x[0], self.x[self.x.len() - 1])
    }
}

fn end_slope(h0: f64, h1: f64, d0: f64, d1: f64) -> f64 {
    let d = ((2.0 * h0 + h1) * d0 - h0 * d1) / (h0 + h1);
    if d.signum() != d0.signum() {
        0.0
    } else if d0.signum() != d1.signum() && d.abs() > 3.0 * d0.abs() {
        3.0 * d0
    } else {
        d
    }
}

/// `n` points log-spaced on `[t0, t1]`, both ends included.
pub fn logspace(t0: f64, t1: f64, n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![t0],
        _ => {
            let (a, b) = (t0.ln(), t1.ln());
            (0..n)
                .map(|i| {
                    if i == n - 1 {
                        t1
                    } else {
                        (a + (b - a) * i as f64 / (n - 1) as f64).exp()
                    }
                })
                .collect()
        }
    }
}

/// A time grid as written on the command line (`log:t0,t1,n`,
/// `lin:t0,t1,n`) or in a config file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TimeGrid {
    Log { t0: f64, t1: f64, n: usize },
    Linear { t0: f64, t1: f64, n: usize },
    Explicit { points: Vec<f64> },
}

impl TimeGrid {
    pub fn points(&self) -> Vec<f64> {
        match self {
            TimeGrid::Log { t0, t1, n } => logspace(*t0, *t1, *n),
            TimeGrid::Linear { t0, t1, n } => match n {
                0 => Vec::new(),
                1 => vec![*t0],
                _ => (0..*n).map(|i| t0 + (t1 - t0) * i as f64 / (*n - 1) as f64).collect(),
            },
            TimeGrid::Explicit { points } => points.clone(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            TimeGrid::Log { t0, t1, n } => {
                if !(*t0 > 0.0 && t1 > t0 && *n >= 1) {
                    return Err(SqaError::input("log grid needs 0 < t0 < t1 and n >= 1"));
                }
            }
            TimeGrid::Linear { t0, t1, n } => {
                if !(*t0 >= 0.0 && t1 >= t0 && *n >= 1) {
                    return Err(SqaError::input("linear grid needs 0 <= t0 <= t1 and n >= 1"));
                }
            }
            TimeGrid::Explicit { points } => {
                if points.is_empty() || points.windows(2).any(|w| w[1] <= w[0]) || points[0] < 0.0 {
                    return Err(SqaError::input("explicit grid must be non-empty, non-negative and increasing"));
                }
            }
        }
        Ok(())
    }
}

impl FromStr for TimeGrid {
    type Err = SqaError;

    fn from_str(s: &str) -> Result<Self> {
        let (kind, rest) = s
            .split_once(':')
            .ok_or_else(|| SqaError::input(format!("grid '{s}' must look like log:t0,t1,n")))?;
        let parts: Vec<&str> = rest.split(',').map(str::trim).collect();
        if parts.len() != 3 {
            return Err(SqaError::input(format!("grid '{s}' needs exactly three values")));
        }
        let num = |p: &str| p.parse::<f64>().map_err(|_| SqaError::input(format!("bad grid value '{p}'")));
        let t0 = num(parts[0])?;
        let t1 = num(parts[1])?;
        let n = parts[2].parse::<usize>().map_err(|_| SqaError::input(format!("bad grid count '{}'", parts[2])))?;
        let grid = match kind {
            "log" => TimeGrid::Log { t0, t1, n },
            "lin" | "linear" => TimeGrid::Linear { t0, t1, n },
            other => return Err(SqaError::input(format!("unknown grid kind '{other}'"))),
        };
        grid.validate()?;
        Ok(grid)
    }
}
