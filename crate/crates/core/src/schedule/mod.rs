//! Transverse-field schedules `Gamma(t)` and the induced Trotter coupling
//! `gamma(t) = (1/2) log coth(beta Gamma / M)` with its first two time
//! derivatives.

mod proposition;
mod reparam;

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Result, SqaError};
use crate::lattice::TrotterSystem;

pub use proposition::{check_proposition1, default_check_grid, ConditionCheck, Proposition1Options, Proposition1Report};
pub use reparam::{field_from_interpolation, interpolation_from_field, Reparametrization};

/// Below this value of `beta Gamma / M` the series `log coth x ~ -log x + x^2/3` is used.
const SMALL_ARGUMENT: f64 = 1e-8;

/// Trotter coupling `gamma = (1/2) log coth(beta Gamma / M)`.
pub fn gamma_from_field(field: f64, beta: f64, m: usize) -> Result<f64> {
    if !(field > 0.0) {
        return Err(SqaError::domain(format!("transverse field must be positive, got {field}")));
    }
    let x = beta * field / m as f64;
    Ok(half_log_coth(x, x.ln()))
}

/// `(1/2) log coth x`, given `x` and `ln x` (the latter lets callers pass an
/// argument that has underflowed).
fn half_log_coth(x: f64, ln_x: f64) -> f64 {
    if x < SMALL_ARGUMENT {
        0.5 * (-ln_x + x * x / 3.0)
    } else {
        0.5 * (2.0 / (2.0 * x).exp_m1()).ln_1p()
    }
}

/// Inverse of [`gamma_from_field`]: `Gamma = (M/beta) artanh(e^{-2 gamma})`.
pub fn field_from_gamma(gamma: f64, beta: f64, m: usize) -> Result<f64> {
    if !(gamma > 0.0) {
        return Err(SqaError::domain(format!("Trotter coupling must be positive, got {gamma}")));
    }
    Ok(m as f64 / beta * artanh_exp_neg(2.0 * gamma))
}

/// `artanh(e^{-y})` for `y > 0`, accurate near both ends.
fn artanh_exp_neg(y: f64) -> f64 {
    let z = (-y).exp();
    if z < 0.5 {
        0.5 * (z.ln_1p() - (-z).ln_1p())
    } else {
        0.5 * ((1.0 + z).ln() - (-(-y).exp_m1()).ln())
    }
}

/// Value of a schedule at one instant.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScheduleValue {
    pub field: f64,
    pub gamma: f64,
    pub dgamma: f64,
    pub d2gamma: f64,
}

/// A user-supplied exponent `g(t)` for the general family. Derivatives are
/// optional; when absent, central differences are used and flagged.
pub trait ExponentFn: Send + Sync {
    fn value(&self, t: f64) -> f64;
    fn first(&self, _t: f64) -> Option<f64> {
        None
    }
    fn second(&self, _t: f64) -> Option<f64> {
        None
    }
}

impl<F: Fn(f64) -> f64 + Send + Sync> ExponentFn for F {
    fn value(&self, t: f64) -> f64 {
        self(t)
    }
}

/// An exponent given as three closures `g`, `g'`, `g''`.
pub struct AnalyticExponent<G, D1, D2> {
    pub g: G,
    pub dg: D1,
    pub d2g: D2,
}

impl<G, D1, D2> ExponentFn for AnalyticExponent<G, D1, D2>
where
    G: Fn(f64) -> f64 + Send + Sync,
    D1: Fn(f64) -> f64 + Send + Sync,
    D2: Fn(f64) -> f64 + Send + Sync,
{
    fn value(&self, t: f64) -> f64 {
        (self.g)(t)
    }
    fn first(&self, t: f64) -> Option<f64> {
        Some((self.dg)(t))
    }
    fn second(&self, t: f64) -> Option<f64> {
        Some((self.d2g)(t))
    }
}

/// Exponent `g(t)` in `Gamma(t) = (M/beta) artanh[(c1 t + c2)^{-g(t)}]`.
#[derive(Clone, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "snake_case")]
pub enum Exponent {
    /// `g(t) = value`.
    Constant { value: f64 },
    /// `g(t) = scale * (1 - 1/log(c1 t + c2))`.
    LogCorrected { scale: f64 },
    #[serde(skip)]
    Custom(Arc<dyn ExponentFn>),
}

impl fmt::Debug for Exponent {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Exponent::Constant { value } => write!(f, "Constant({value})"),
            Exponent::LogCorrected { scale } => write!(f, "LogCorrected({scale})"),
            Exponent::Custom(_) => write!(f, "Custom"),
        }
    }
}

impl Exponent {
    /// `(g, g', g'')` at `t`, plus whether derivatives were differenced numerically.
    fn eval(&self, t: f64, c1: f64, c2: f64) -> ([f64; 3], bool) {
        match self {
            Exponent::Constant { value } => ([*value, 0.0, 0.0], false),
            Exponent::LogCorrected { scale } => {
                let u = c1 * t + c2;
                let l = u.ln();
                let g = scale * (1.0 - 1.0 / l);
                let dg = scale * c1 / (u * l * l);
                let d2g = -scale * c1 * c1 * (l + 2.0) / (u * u * l * l * l);
                ([g, dg, d2g], false)
            }
            Exponent::Custom(f) => {
                let g = f.value(t);
                let mut numeric = false;
                let dg = f.first(t).unwrap_or_else(|| {
                    numeric = true;
                    central_first(|x| f.value(x), t, 1e-3 * (1.0 + t))
                });
                let d2g = f.second(t).unwrap_or_else(|| {
                    numeric = true;
                    central_second(|x| f.value(x), t, 4e-3 * (1.0 + t))
                });
                ([g, dg, d2g], numeric)
            }
        }
    }

    fn is_numeric(&self) -> bool {
        match self {
            Exponent::Custom(f) => f.first(0.0).is_none() || f.second(0.0).is_none(),
            _ => false,
        }
    }
}

/// Richardson-extrapolated central difference.
fn central_first(f: impl Fn(f64) -> f64, t: f64, h: f64) -> f64 {
    let d = |h: f64| (f(t + h) - f(t - h)) / (2.0 * h);
    let h = h.min(t.max(0.0)).max(h * 1e-3);
    (4.0 * d(h / 2.0) - d(h)) / 3.0
}

fn central_second(f: impl Fn(f64) -> f64, t: f64, h: f64) -> f64 {
    let d = |h: f64| (f(t + h) - 2.0 * f(t) + f(t - h)) / (h * h);
    let h = h.min(t.max(0.0)).max(h * 1e-3);
    (4.0 * d(h / 2.0) - d(h)) / 3.0
}

#[derive(Debug, Clone)]
pub enum Family {
    /// `Gamma = (M/beta) artanh[(4N(c1 t + c2))^{-1/2N}]`.
    PowerLaw { c1: f64, c2: f64 },
    /// `Gamma = (M/beta) artanh[(c1 t + c2)^{-g(t)}]`.
    GeneralG { c1: f64, c2: f64, exponent: Exponent },
    /// `Gamma = initial * exp(-rate t)`; decays too fast to converge.
    ExponentialDecay { initial: f64, rate: f64 },
    Constant { value: f64 },
}

/// A transverse-field schedule bound to a system's `N`, `M` and `beta`.
#[derive(Debug, Clone)]
pub struct Schedule {
    family: Family,
    n_sites: usize,
    trotter_slices: usize,
    beta: f64,
    time_scale: f64,
}

impl Schedule {
    fn bound(family: Family, sys: &TrotterSystem) -> Self {
        Self {
            family,
            n_sites: sys.n_sites(),
            trotter_slices: sys.trotter_slices(),
            beta: sys.beta(),
            time_scale: 1.0,
        }
    }

    pub fn power_law(sys: &TrotterSystem, c1: f64, c2: f64) -> Result<Self> {
        if !(c1 > 0.0) || !(c2 >= 1.0) {
            return Err(SqaError::input(format!("power law needs c1 > 0 and c2 >= 1, got c1={c1}, c2={c2}")));
        }
        Ok(Self::bound(Family::PowerLaw { c1, c2 }, sys))
    }

    pub fn general(sys: &TrotterSystem, c1: f64, c2: f64, exponent: Exponent) -> Result<Self> {
        if !(c1 > 0.0) || !(c2 >= 1.0) {
            return Err(SqaError::input(format!("general schedule needs c1 > 0 and c2 >= 1, got c1={c1}, c2={c2}")));
        }
        Ok(Self::bound(Family::GeneralG { c1, c2, exponent }, sys))
    }

    pub fn exponential_decay(sys: &TrotterSystem, initial: f64, rate: f64) -> Result<Self> {
        if !(initial > 0.0) || !(rate > 0.0) {
            return Err(SqaError::input("exponential decay needs positive initial field and rate"));
        }
        Ok(Self::bound(Family::ExponentialDecay { initial, rate }, sys))
    }

    pub fn constant(sys: &TrotterSystem, value: f64) -> Result<Self> {
        if !(value > 0.0 && value.is_finite()) {
            return Err(SqaError::domain(format!("constant transverse field must be positive, got {value}")));
        }
        Ok(Self::bound(Family::Constant { value }, sys))
    }

    /// Discrete-time comparison schedule `Gamma = (M/beta) artanh[(t+2)^{-exponent}]`
    /// with `exponent = 2 / (R L1)`.
    pub fn markov_chain_bound(sys: &TrotterSystem, exponent: f64) -> Result<Self> {
        Self::general(sys, 1.0, 2.0, Exponent::Constant { value: exponent })
    }

    /// Same schedule run `factor` times slower: `gamma_new(t) = gamma(t / factor)`.
    pub fn stretched(&self, factor: f64) -> Result<Self> {
        if !(factor > 0.0) {
            return Err(SqaError::input("stretch factor must be positive"));
        }
        Ok(Self { time_scale: self.time_scale * factor, ..self.clone() })
    }

    pub fn family(&self) -> &Family {
        &self.family
    }

    pub fn time_scale(&self) -> f64 {
        self.time_scale
    }

    pub fn n_sites(&self) -> usize {
        self.n_sites
    }

    pub fn trotter_slices(&self) -> usize {
        self.trotter_slices
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn is_constant(&self) -> bool {
        matches!(self.family, Family::Constant { .. })
    }

    /// True when derivatives come from finite differences.
    pub fn uses_numeric_derivatives(&self) -> bool {
        matches!(&self.family, Family::GeneralG { exponent, .. } if exponent.is_numeric())
    }

    /// The `(c1, c2, g)` representation of power-law and general schedules,
    /// with any stretch folded in. Power law maps to `g = 1/2N` with both
    /// constants scaled by `4N`.
    pub fn as_general(&self) -> Option<(f64, f64, Exponent)> {
        let n4 = 4.0 * self.n_sites as f64;
        match &self.family {
            Family::PowerLaw { c1, c2 } => Some((
                n4 * c1 / self.time_scale,
                n4 * c2,
                Exponent::Constant { value: 1.0 / (2.0 * self.n_sites as f64) },
            )),
            Family::GeneralG { c1, c2, exponent } if self.time_scale == 1.0 => Some((*c1, *c2, exponent.clone())),
            Family::GeneralG { c1, c2, exponent } => {
                let scale = self.time_scale;
                let exponent = match exponent {
                    Exponent::Custom(f) => {
                        let f = f.clone();
                        Exponent::Custom(Arc::new(Rescaled { inner: f, scale }))
                    }
                    builtin => builtin.clone(),
                };
                Some((c1 / scale, *c2, exponent))
            }
            _ => None,
        }
    }

    /// `(g, g', g'')` of the general representation at `t`.
    pub fn exponent_at(&self, t: f64) -> Option<[f64; 3]> {
        let (c1, c2, exponent) = self.as_general()?;
        Some(exponent.eval(t, c1, c2).0)
    }

    /// `Gamma(t)`, `gamma(t)`, `gamma'(t)`, `gamma''(t)`.
    pub fn eval(&self, t: f64) -> Result<ScheduleValue> {
        if !(t >= 0.0) {
            return Err(SqaError::domain(format!("schedule time must be non-negative, got {t}")));
        }
        let s = self.time_scale;
        let base = self.eval_unscaled(t / s)?;
        Ok(ScheduleValue { dgamma: base.dgamma / s, d2gamma: base.d2gamma / (s * s), ..base })
    }

    fn eval_unscaled(&self, t: f64) -> Result<ScheduleValue> {
        let n = self.n_sites as f64;
        let m = self.trotter_slices;
        let beta = self.beta;
        match &self.family {
            Family::PowerLaw { c1, c2 } => {
                let u = c1 * t + c2;
                let gamma = (4.0 * n * u).ln() / (4.0 * n);
                Ok(ScheduleValue {
                    field: field_from_gamma(gamma, beta, m)?,
                    gamma,
                    dgamma: c1 / (4.0 * n * u),
                    d2gamma: -c1 * c1 / (4.0 * n * u * u),
                })
            }
            Family::GeneralG { c1, c2, exponent } => {
                let u = c1 * t + c2;
                if !(u > 1.0) {
                    return Err(SqaError::domain(format!("c1 t + c2 = {u} must exceed 1")));
                }
                let l = u.ln();
                let ([g, dg, d2g], _) = exponent.eval(t, *c1, *c2);
                let gamma = 0.5 * g * l;
                Ok(ScheduleValue {
                    field: field_from_gamma(gamma, beta, m)?,
                    gamma,
                    dgamma: 0.5 * dg * l + 0.5 * g * c1 / u,
                    d2gamma: 0.5 * d2g * l + dg * c1 / u - 0.5 * g * c1 * c1 / (u * u),
                })
            }
            Family::ExponentialDecay { initial, rate } => {
                let ln_x = (beta * initial / m as f64).ln() - rate * t;
                let x = ln_x.exp();
                let gamma = half_log_coth(x, ln_x);
                let y = 2.0 * x;
                let sh = y.sinh();
                let (ratio, curvature) = if y < 1e-4 {
                    // y / sinh y and (y/2)(y cosh y - sinh y) / sinh^2 y to second order
                    (1.0 - y * y / 6.0, y * y / 6.0)
                } else if y < 0.1 {
                    let y2 = y * y;
                    let odd = y * y2 * (1.0 / 3.0 + y2 * (1.0 / 30.0 + y2 / 840.0));
                    (y / sh, 0.5 * y * odd / (sh * sh))
                } else {
                    (y / sh, 0.5 * y * (y * y.cosh() - sh) / (sh * sh))
                };
                Ok(ScheduleValue {
                    field: initial * (-rate * t).exp(),
                    gamma,
                    dgamma: 0.5 * rate * ratio,
                    d2gamma: rate * rate * curvature,
                })
            }
            Family::Constant { value } => Ok(ScheduleValue {
                field: *value,
                gamma: gamma_from_field(*value, beta, m)?,
                dgamma: 0.0,
                d2gamma: 0.0,
            }),
        }
    }

    pub fn to_spec(&self) -> Option<ScheduleSpec> {
        let base = match &self.family {
            Family::PowerLaw { c1, c2 } => ScheduleSpec::PowerLaw { c1: *c1, c2: *c2, stretch: None },
            Family::GeneralG { c1, c2, exponent } => match exponent {
                Exponent::Custom(_) => return None,
                e => ScheduleSpec::GeneralG { c1: *c1, c2: *c2, exponent: e.clone(), stretch: None },
            },
            Family::ExponentialDecay { initial, rate } => {
                ScheduleSpec::ExponentialDecay { initial: *initial, rate: *rate, stretch: None }
            }
            Family::Constant { value } => ScheduleSpec::Constant { value: *value },
        };
        let stretch = (self.time_scale != 1.0).then_some(self.time_scale);
        Some(base.with_stretch(stretch))
    }
}

struct Rescaled {
    inner: Arc<dyn ExponentFn>,
    scale: f64,
}

impl ExponentFn for Rescaled {
    fn value(&self, t: f64) -> f64 {
        self.inner.value(t / self.scale)
    }
    fn first(&self, t: f64) -> Option<f64> {
        self.inner.first(t / self.scale).map(|v| v / self.scale)
    }
    fn second(&self, t: f64) -> Option<f64> {
        self.inner.second(t / self.scale).map(|v| v / (self.scale * self.scale))
    }
}

/// On-disk schedule description. `N`, `M` and `beta` come from the problem.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum ScheduleSpec {
    PowerLaw {
        c1: f64,
        c2: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        stretch: Option<f64>,
    },
    GeneralG {
        c1: f64,
        c2: f64,
        exponent: Exponent,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        stretch: Option<f64>,
    },
    ExponentialDecay {
        initial: f64,
        rate: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        stretch: Option<f64>,
    },
    Constant {
        value: f64,
    },
}

impl ScheduleSpec {
    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    fn with_stretch(self, s: Option<f64>) -> Self {
        match self {
            ScheduleSpec::PowerLaw { c1, c2, .. } => ScheduleSpec::PowerLaw { c1, c2, stretch: s },
            ScheduleSpec::GeneralG { c1, c2, exponent, .. } => ScheduleSpec::GeneralG { c1, c2, exponent, stretch: s },
            ScheduleSpec::ExponentialDecay { initial, rate, .. } => {
                ScheduleSpec::ExponentialDecay { initial, rate, stretch: s }
            }
            constant => constant,
        }
    }

    /// Short label for tables and file names.
    pub fn label(&self) -> String {
        match self {
            ScheduleSpec::PowerLaw { c1, .. } => format!("power_law(c1={c1})"),
            ScheduleSpec::GeneralG { c1, exponent, .. } => format!("general_g(c1={c1},{exponent:?})"),
            ScheduleSpec::ExponentialDecay { rate, .. } => format!("exponential_decay(rate={rate})"),
            ScheduleSpec::Constant { value } => format!("constant({value})"),
        }
    }

    pub fn bind(&self, sys: &TrotterSystem) -> Result<Schedule> {
        let (schedule, stretch) = match self {
            ScheduleSpec::PowerLaw { c1, c2, stretch } => (Schedule::power_law(sys, *c1, *c2)?, *stretch),
            ScheduleSpec::GeneralG { c1, c2, exponent, stretch } => {
                (Schedule::general(sys, *c1, *c2, exponent.clone())?, *stretch)
            }
            ScheduleSpec::ExponentialDecay { initial, rate, stretch } => {
                (Schedule::exponential_decay(sys, *initial, *rate)?, *stretch)
            }
            ScheduleSpec::Constant { value } => (Schedule::constant(sys, *value)?, None),
        };
        match stretch {
            Some(f) => schedule.stretched(f),
            None => Ok(schedule),
        }
    }
}
