//! Bounded-coefficient schedules `s(t) H_Ising - (1 - s(t)) H_TF` rewritten in
//! the unbounded form via the clock `t~(t) = int_0^t s`, with
//! `Gamma(t~) = (1 - s) / s`.

use std::sync::Arc;

use crate::error::{Result, SqaError};
use crate::numeric::{integrate, Pchip};

const QUAD_REL_TOL: f64 = 1e-10;
const MONOTONE_SAMPLES: usize = 4096;

/// Tabulated map between physical time `t` and the reparametrized clock `t~`.
#[derive(Clone)]
pub struct Reparametrization {
    interpolation: Arc<dyn Fn(f64) -> f64 + Send + Sync>,
    horizon: f64,
    t: Vec<f64>,
    t_tilde: Vec<f64>,
    inverse: Option<Pchip>,
}

impl std::fmt::Debug for Reparametrization {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Reparametrization").field("horizon", &self.horizon).field("knots", &self.t.len()).finish()
    }
}

impl Reparametrization {
    /// Tabulates `t~` on `knots` uniform points of `[0, horizon]`.
    pub fn new<S>(interpolation: S, horizon: f64, knots: usize) -> Result<Self>
    where
        S: Fn(f64) -> f64 + Send + Sync + 'static,
    {
        if !(horizon > 0.0) || knots < 2 {
            return Err(SqaError::input("reparametrization needs a positive horizon and at least two knots"));
        }
        let mut last = f64::NEG_INFINITY;
        for i in 0..=MONOTONE_SAMPLES {
            let t = horizon * i as f64 / MONOTONE_SAMPLES as f64;
            let v = interpolation(t);
            if !(0.0..=1.0).contains(&v) {
                return Err(SqaError::input(format!("s({t}) = {v} is outside [0, 1]")));
            }
            if v < last - 1e-12 {
                return Err(SqaError::input(format!("s is not monotone increasing near t = {t}")));
            }
            if i > 0 && v <= 0.0 {
                return Err(SqaError::input(format!("s({t}) must be positive on (0, T]")));
            }
            last = v;
        }
        let t: Vec<f64> = (0..knots).map(|i| horizon * i as f64 / (knots - 1) as f64).collect();
        let mut t_tilde = Vec::with_capacity(knots);
        let mut acc = 0.0;
        t_tilde.push(0.0);
        for w in t.windows(2) {
            acc += integrate(&interpolation, w[0], w[1], QUAD_REL_TOL, 1e-300);
            t_tilde.push(acc);
        }
        // the inverse exists where t~ is strictly increasing
        let inverse = Pchip::new(t_tilde.clone(), t.clone()).ok();
        Ok(Self { interpolation: Arc::new(interpolation), horizon, t, t_tilde, inverse })
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    /// `t~(t)` by quadrature from the nearest knot below `t`.
    pub fn t_tilde_at(&self, t: f64) -> f64 {
        let i = self.t.partition_point(|&x| x <= t).saturating_sub(1).min(self.t.len() - 1);
        self.t_tilde[i] + integrate(&|x| (self.interpolation)(x), self.t[i], t, QUAD_REL_TOL, 1e-300)
    }

    /// `t(t~)` by monotone interpolation of the table.
    pub fn t_at(&self, t_tilde: f64) -> Result<f64> {
        let p = self
            .inverse
            .as_ref()
            .ok_or_else(|| SqaError::State("t~ is not strictly increasing on the knots".into()))?;
        Ok(p.eval(t_tilde))
    }

    /// Induced transverse field `Gamma(t~) = (1 - s) / s` at physical time `t`.
    pub fn field_at(&self, t: f64) -> f64 {
        field_from_interpolation((self.interpolation)(t))
    }

    /// `Gamma` as a function of the new clock.
    pub fn field_at_tilde(&self, t_tilde: f64) -> Result<f64> {
        Ok(self.field_at(self.t_at(t_tilde)?))
    }

    pub fn knots(&self) -> (&[f64], &[f64]) {
        (&self.t, &self.t_tilde)
    }
}

/// `Gamma = (1 - s) / s`.
pub fn field_from_interpolation(s: f64) -> f64 {
    (1.0 - s) / s
}

/// `s = 1 / (1 + Gamma)`.
pub fn interpolation_from_field(field: f64) -> f64 {
    1.0 / (1.0 + field)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn identity_interpolation() {
        let r = Reparametrization::new(|_| 1.0, 10.0, 11).unwrap();
        for t in [0.0, 1.5, 7.25, 10.0] {
            assert_relative_eq!(r.t_tilde_at(t), t, epsilon = 1e-12);
            assert_eq!(r.field_at(t), 0.0);
        }
        assert_relative_eq!(r.t_at(3.3).unwrap(), 3.3, epsilon = 1e-12);
    }

    #[test]
    fn tanh_clock_is_log_cosh() {
        let r = Reparametrization::new(f64::tanh, 20.0, 201).unwrap();
        let tt = r.t_tilde_at(20.0);
        assert_relative_eq!(tt, 20.0f64.cosh().ln(), max_relative = 1e-10);
        assert!((tt - (20.0 - std::f64::consts::LN_2)).abs() < 1e-6);
        for t in [0.5, 3.0, 12.0] {
            assert_relative_eq!(r.t_at(r.t_tilde_at(t)).unwrap(), t, max_relative = 1e-4);
        }
        assert!(r.field_at(0.0).is_infinite());
    }

    #[test]
    fn power_law_interpolation_round_trip() {
        let (c1, g) = (0.3f64, 0.25);
        for tt in [2.0, 40.0, 1e3, 1e6] {
            let gamma = (c1 * tt).powf(-g);
            let s = interpolation_from_field(gamma);
            assert_relative_eq!(s, 1.0 / (1.0 + (c1 * tt).powf(-g)), epsilon = 1e-15);
            assert_relative_eq!(field_from_interpolation(s), gamma, max_relative = 1e-8);
            assert_relative_eq!(interpolation_from_field(field_from_interpolation(s)), s, epsilon = 1e-8);
        }
    }

    #[test]
    fn rejects_non_monotone_and_out_of_range() {
        assert!(Reparametrization::new(|t: f64| 0.5 + 0.4 * t.sin(), 10.0, 11).is_err());
        assert!(Reparametrization::new(|t: f64| 2.0 * t, 10.0, 11).is_err());
        assert!(Reparametrization::new(|_| 0.0, 10.0, 11).is_err());
        assert!(Reparametrization::new(|_| 1.0, 0.0, 11).is_err());
    }
}
