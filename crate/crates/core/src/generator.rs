//! Heat-bath transition matrix `W`, its symmetrized form `H`, the
//! imaginary-time generator `Hcal(t) = H - (1/2) d(beta H_0)/dt` and the
//! spectral quantities built from them.
//!
//! States are indexed by the bit pattern of the spin configuration; column
//! `s` of `W` holds the rates out of state `s`, so `dP/dt = W P`.

use std::io::Write;

use nalgebra::{DMatrix, DVector, Schur};
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Result, SqaError};
use crate::lattice::{StateTable, TrotterSystem};
use crate::schedule::{Schedule, ScheduleValue};

pub const SPECTRUM_SCHEMA: &str = "# schema: sqa.spectrum/1";

const SIMILARITY_TOL: f64 = 1e-9;
const SYMMETRY_TOL: f64 = 1e-10;
const FD_REL_TOL: f64 = 1e-5;

/// Heat-bath flip rate `e^h / (2 cosh h)` for local field `h = beta H_{j,k}`.
#[inline]
pub fn heat_bath_rate(h: f64) -> f64 {
    1.0 / (1.0 + (-2.0 * h).exp())
}

/// `ln` of [`heat_bath_rate`], accurate when the rate underflows.
#[inline]
fn ln_heat_bath_rate(h: f64) -> f64 {
    let x = -2.0 * h;
    if x > 0.0 {
        -x - (-x).exp().ln_1p()
    } else {
        -x.exp().ln_1p()
    }
}

#[inline]
fn sech(h: f64) -> f64 {
    1.0 / h.cosh()
}

/// Dense operators of one Trotter system, sharing a precomputed state table.
#[derive(Debug, Clone)]
pub struct Generator {
    table: StateTable,
    coordination: usize,
    n_sites: usize,
    slices: usize,
}

impl Generator {
    pub fn new(sys: &TrotterSystem) -> Result<Self> {
        Ok(Self {
            table: StateTable::new(sys)?,
            coordination: sys.coordination_number(),
            n_sites: sys.n_sites(),
            slices: sys.trotter_slices(),
        })
    }

    pub fn table(&self) -> &StateTable {
        &self.table
    }

    pub fn dim(&self) -> usize {
        self.table.dim()
    }

    pub fn n_spins(&self) -> usize {
        self.table.n_spins()
    }

    pub fn coordination_number(&self) -> usize {
        self.coordination
    }

    /// Transition matrix `W` at Trotter coupling `gamma`.
    pub fn w(&self, gamma: f64) -> DMatrix<f64> {
        let dim = self.dim();
        let mut w = DMatrix::zeros(dim, dim);
        for s in 0..dim {
            let mut out = 0.0;
            for i in 0..self.n_spins() {
                let r = heat_bath_rate(self.table.local_field(s, i, gamma));
                w[(s ^ (1 << i), s)] = r;
                out += r;
            }
            w[(s, s)] = -out;
        }
        w
    }

    /// Symmetric quantum Hamiltonian `H`, assembled entrywise.
    pub fn h(&self, gamma: f64) -> DMatrix<f64> {
        let dim = self.dim();
        let mut h = DMatrix::zeros(dim, dim);
        for s in 0..dim {
            let mut diag = 0.0;
            for i in 0..self.n_spins() {
                let f = self.table.local_field(s, i, gamma);
                diag += heat_bath_rate(f);
                h[(s ^ (1 << i), s)] = -0.5 * sech(f);
            }
            h[(s, s)] = diag;
        }
        h
    }

    /// `e^{beta H_0 / 2} (-W) e^{-beta H_0 / 2}` evaluated entrywise in the log
    /// domain, for checking the direct assembly of `H`.
    pub fn h_by_similarity(&self, gamma: f64) -> DMatrix<f64> {
        let dim = self.dim();
        let action = self.table.actions(gamma);
        let shift = action.iter().copied().fold(f64::INFINITY, f64::min);
        let mut h = DMatrix::zeros(dim, dim);
        for s in 0..dim {
            let mut out = 0.0;
            for i in 0..self.n_spins() {
                let f = self.table.local_field(s, i, gamma);
                let to = s ^ (1 << i);
                let ln_rate = ln_heat_bath_rate(f);
                out += ln_rate.exp();
                let half_diff = 0.5 * ((action[to] - shift) - (action[s] - shift));
                h[(to, s)] = -(ln_rate + half_diff).exp();
            }
            h[(s, s)] = out;
        }
        h
    }

    /// Full generator at a schedule point: `H + (gamma'/2) diag(bonds)`.
    pub fn full(&self, v: &ScheduleValue) -> DMatrix<f64> {
        let mut h = self.h(v.gamma);
        for s in 0..self.dim() {
            h[(s, s)] += 0.5 * v.dgamma * self.table.trotter_bonds(s);
        }
        h
    }

    /// Analytic time derivative of the full generator.
    pub fn full_derivative(&self, v: &ScheduleValue) -> DMatrix<f64> {
        let dim = self.dim();
        let mut d = DMatrix::zeros(dim, dim);
        for s in 0..dim {
            let mut diag = 0.5 * v.d2gamma * self.table.trotter_bonds(s);
            for i in 0..self.n_spins() {
                let f = self.table.local_field(s, i, v.gamma);
                let df = -v.dgamma * self.table.trotter_factor(s, i);
                let se = sech(f);
                diag += 0.5 * se * se * df;
                d[(s ^ (1 << i), s)] = 0.5 * f.tanh() * se * df;
            }
            d[(s, s)] = diag;
        }
        d
    }

    /// `out = W(gamma) p` without forming `W`.
    pub fn apply_w(&self, gamma: f64, p: &[f64], out: &mut [f64]) {
        out.iter_mut().for_each(|x| *x = 0.0);
        for s in 0..self.dim() {
            let ps = p[s];
            if ps == 0.0 {
                continue;
            }
            for i in 0..self.n_spins() {
                let flow = heat_bath_rate(self.table.local_field(s, i, gamma)) * ps;
                out[s ^ (1 << i)] += flow;
                out[s] -= flow;
            }
        }
    }

    /// `out = Hcal(t) phi` without forming the matrix.
    pub fn apply_full(&self, v: &ScheduleValue, phi: &[f64], out: &mut [f64]) {
        for s in 0..self.dim() {
            let mut acc = 0.5 * v.dgamma * self.table.trotter_bonds(s) * phi[s];
            for i in 0..self.n_spins() {
                let f = self.table.local_field(s, i, v.gamma);
                acc += heat_bath_rate(f) * phi[s] - 0.5 * sech(f) * phi[s ^ (1 << i)];
            }
            out[s] = acc;
        }
    }

    /// `MN (3b/2 |gamma'| + 1/2 |gamma''|)` with `b` the coordination number.
    pub fn bound_rhs(&self, v: &ScheduleValue, b: usize) -> f64 {
        let mn = (self.n_sites * self.slices) as f64;
        mn * (1.5 * b as f64 * v.dgamma.abs() + 0.5 * v.d2gamma.abs())
    }

    /// Smallest integer `b` for which the norm bound covers `norm`.
    pub fn restoring_b(&self, v: &ScheduleValue, norm: f64) -> Option<usize> {
        let mn = (self.n_sites * self.slices) as f64;
        let rest = norm / mn - 0.5 * v.d2gamma.abs();
        if rest <= 0.0 {
            return Some(0);
        }
        if v.dgamma == 0.0 {
            return None;
        }
        Some((rest / (1.5 * v.dgamma.abs())).ceil() as usize)
    }

    /// Spectral report at time `t`.
    pub fn report(&self, schedule: &Schedule, t: f64) -> Result<SpectralReport> {
        let v = schedule.eval(t)?;
        let gap = spectral_gap(&self.full(&v))?;
        let deriv = self.full_derivative(&v);
        let norm_dh = spectral_norm(&deriv);
        let fd_rel_error = self.check_derivative(schedule, t, &deriv)?;
        let b = self.coordination;
        let bound = self.bound_rhs(&v, b);
        let ratio = if gap.degenerate {
            f64::INFINITY
        } else {
            norm_dh / (gap.gap * gap.gap)
        };
        Ok(SpectralReport {
            t,
            field: v.field,
            gamma: v.gamma,
            dgamma: v.dgamma,
            d2gamma: v.d2gamma,
            gap: gap.gap,
            ground_energy: gap.ground_energy,
            degenerate: gap.degenerate,
            norm_dh,
            fd_rel_error,
            b,
            bound_rhs_norm: bound,
            bound_margin: bound - norm_dh,
            restoring_b: if norm_dh > bound { self.restoring_b(&v, norm_dh) } else { None },
            adiabatic_ratio: ratio,
            q: gap.gap.ln() + 2.0 * self.n_sites as f64 * v.gamma,
        })
    }

    /// Central difference of the full generator, `h = 1e-5 (1 + t)`; returns
    /// the max-entry error relative to the largest analytic entry.
    fn check_derivative(&self, schedule: &Schedule, t: f64, analytic: &DMatrix<f64>) -> Result<f64> {
        if schedule.is_constant() {
            return Ok(0.0);
        }
        let h = (1e-5 * (1.0 + t)).min(t.max(0.0));
        let (lo, hi, width) = if h > 0.0 { (t - h, t + h, 2.0 * h) } else { (t, t + 1e-5, 1e-5) };
        let fd = (self.full(&schedule.eval(hi)?) - self.full(&schedule.eval(lo)?)) / width;
        let scale = analytic.amax();
        let diff = (&fd - analytic).amax();
        // one-sided differences at t = 0 are only first order
        let tol = if h > 0.0 { FD_REL_TOL } else { 1e-3 };
        let rel = if scale > 0.0 { diff / scale } else { diff };
        if rel > tol && diff > 1e-12 {
            return Err(SqaError::Check(format!(
                "analytic dHcal/dt disagrees with finite differences at t = {t}: relative error {rel:.3e}"
            )));
        }
        Ok(rel)
    }
}

/// Dense `W(gamma)`.
pub fn build_w(sys: &TrotterSystem, gamma: f64) -> Result<DMatrix<f64>> {
    Ok(Generator::new(sys)?.w(gamma))
}

/// Dense `H(gamma)`, verified against the similarity transform of `-W`.
pub fn build_h(sys: &TrotterSystem, gamma: f64) -> Result<DMatrix<f64>> {
    let g = Generator::new(sys)?;
    let h = g.h(gamma);
    let sim = g.h_by_similarity(gamma);
    let dev = (&h - &sim).amax();
    if dev > SIMILARITY_TOL {
        return Err(SqaError::Check(format!("direct H differs from the similarity transform of -W by {dev:.3e}")));
    }
    Ok(h)
}

/// Dense full generator at time `t`.
pub fn build_generator(sys: &TrotterSystem, schedule: &Schedule, t: f64) -> Result<DMatrix<f64>> {
    Ok(Generator::new(sys)?.full(&schedule.eval(t)?))
}

#[derive(Debug, Clone, Serialize)]
pub struct GapInfo {
    pub gap: f64,
    pub ground_energy: f64,
    pub degenerate: bool,
    /// Ascending eigenvalues.
    pub eigenvalues: Vec<f64>,
}

fn check_symmetric(m: &DMatrix<f64>) -> Result<()> {
    if !m.is_square() {
        return Err(SqaError::input("matrix is not square"));
    }
    let asym = (m - m.transpose()).amax();
    if asym > SYMMETRY_TOL {
        return Err(SqaError::input(format!("matrix is not symmetric (max asymmetry {asym:.3e})")));
    }
    Ok(())
}

/// Ascending eigenvalues of a symmetric matrix.
pub fn symmetric_eigenvalues(m: &DMatrix<f64>) -> Result<Vec<f64>> {
    check_symmetric(m)?;
    let mut ev: Vec<f64> = m.clone().symmetric_eigenvalues().iter().copied().collect();
    ev.sort_by(f64::total_cmp);
    Ok(ev)
}

/// Gap between the two lowest eigenvalues of a symmetric matrix. A gap
/// below `1e-12` of the spectral scale is reported as zero and flagged.
pub fn spectral_gap(m: &DMatrix<f64>) -> Result<GapInfo> {
    let ev = symmetric_eigenvalues(m)?;
    if ev.len() < 2 {
        return Err(SqaError::input("spectral gap needs at least a 2x2 matrix"));
    }
    let scale = ev[0].abs().max(ev[ev.len() - 1].abs()).max(1.0);
    let raw = ev[1] - ev[0];
    let degenerate = raw <= 1e-12 * scale;
    Ok(GapInfo { gap: if degenerate { 0.0 } else { raw }, ground_energy: ev[0], degenerate, eigenvalues: ev })
}

/// Spectral norm of a symmetric matrix.
pub fn spectral_norm(m: &DMatrix<f64>) -> f64 {
    m.clone().symmetric_eigenvalues().amax()
}

/// Eigenvalues of `-W` sorted by real part; `W` is not symmetric so a general
/// eigensolver is used, after an exact power-of-two balancing.
pub fn minus_w_eigenvalues(w: &DMatrix<f64>) -> Result<Vec<(f64, f64)>> {
    let mut a = -w;
    balance(&mut a);
    // QR without exceptional shifts can stall when deflating at machine
    // precision on clustered spectra; loosen the relative threshold instead
    let schur = [1e-15, 1e-13, 1e-12]
        .into_iter()
        .find_map(|eps| Schur::try_new(a.clone(), eps, 1000 * w.nrows().max(10)))
        .ok_or_else(|| SqaError::Check("general eigensolver did not converge".into()))?;
    let mut ev: Vec<(f64, f64)> = schur.complex_eigenvalues().iter().map(|z| (z.re, z.im)).collect();
    ev.sort_by(|a, b| a.0.total_cmp(&b.0));
    Ok(ev)
}

/// Parlett-Reinsch balancing by powers of two; leaves the spectrum unchanged.
fn balance(a: &mut DMatrix<f64>) {
    let n = a.nrows();
    loop {
        let mut done = true;
        for i in 0..n {
            let c: f64 = (0..n).filter(|&k| k != i).map(|k| a[(k, i)].abs()).sum();
            let r: f64 = (0..n).filter(|&k| k != i).map(|k| a[(i, k)].abs()).sum();
            if c == 0.0 || r == 0.0 {
                continue;
            }
            // column i scales by f and row i by 1/f
            let mut f = 1.0;
            while c * f < r / f / 2.0 {
                f *= 2.0;
            }
            while c * f > r / f * 2.0 {
                f /= 2.0;
            }
            if f != 1.0 && c * f + r / f < 0.95 * (c + r) {
                done = false;
                for k in 0..n {
                    a[(k, i)] *= f;
                    a[(i, k)] /= f;
                }
            }
        }
        if done {
            break;
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct SpectralReport {
    pub t: f64,
    pub field: f64,
    pub gamma: f64,
    pub dgamma: f64,
    pub d2gamma: f64,
    pub gap: f64,
    pub ground_energy: f64,
    pub degenerate: bool,
    pub norm_dh: f64,
    pub fd_rel_error: f64,
    pub b: usize,
    pub bound_rhs_norm: f64,
    pub bound_margin: f64,
    pub restoring_b: Option<usize>,
    pub adiabatic_ratio: f64,
    pub q: f64,
}

pub fn adiabatic_ratio(sys: &TrotterSystem, schedule: &Schedule, t: f64) -> Result<SpectralReport> {
    Generator::new(sys)?.report(schedule, t)
}

/// Reports over a time grid, evaluated in parallel.
pub fn spectral_sweep(sys: &TrotterSystem, schedule: &Schedule, grid: &[f64]) -> Result<Vec<SpectralReport>> {
    let g = Generator::new(sys)?;
    grid.par_iter().map(|&t| g.report(schedule, t)).collect()
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct GapPoint {
    pub t: f64,
    pub gamma: f64,
    pub gap: f64,
    pub q: f64,
}

/// `q(t) = ln gap + 2 N gamma` along the grid. The bound says `q` stays above
/// the t-independent floor `ln(a sqrt(N) / 2^N) - N (beta p(M) + c)`.
pub fn verify_gap_bound(sys: &TrotterSystem, schedule: &Schedule, grid: &[f64]) -> Result<Vec<GapPoint>> {
    let g = Generator::new(sys)?;
    let n = sys.n_sites() as f64;
    grid.par_iter()
        .map(|&t| {
            let v = schedule.eval(t)?;
            let info = spectral_gap(&g.full(&v))?;
            Ok(GapPoint { t, gamma: v.gamma, gap: info.gap, q: info.gap.ln() + 2.0 * n * v.gamma })
        })
        .collect()
}

/// Largest `|<w|A|v>| / ||A||` over random unit vector pairs; errors if any
/// sample exceeds the norm by more than `1e-10`.
pub fn matrix_element_vs_norm<R: Rng + ?Sized>(m: &DMatrix<f64>, trials: usize, rng: &mut R) -> Result<f64> {
    let norm = spectral_norm(m);
    let n = m.nrows();
    let unit = |rng: &mut R| {
        let v = DVector::from_iterator(n, (0..n).map(|_| rng.sample::<f64, _>(StandardNormal)));
        let len = v.norm();
        v / len
    };
    let mut worst: f64 = 0.0;
    for _ in 0..trials {
        let v = unit(rng);
        let w = unit(rng);
        let el = w.dot(&(m * &v)).abs();
        if el > norm + 1e-10 {
            return Err(SqaError::Check(format!("matrix element {el} exceeds the operator norm {norm}")));
        }
        if norm > 0.0 {
            worst = worst.max(el / norm);
        }
    }
    Ok(worst)
}

/// Writes the spectral sweep as CSV with a schema line.
pub fn write_spectrum_csv<W: Write>(reports: &[SpectralReport], mut out: W) -> Result<()> {
    writeln!(out, "{SPECTRUM_SCHEMA}")?;
    writeln!(out, "t,Gamma,gamma,dgamma,d2gamma,gap,norm_dH,bound_rhs_norm,adiabatic_ratio,q,bound_margin,b")?;
    for r in reports {
        writeln!(
            out,
            "{:e},{:e},{:e},{:e},{:e},{:e},{:e},{:e},{:e},{:e},{:e},{}",
            r.t,
            r.field,
            r.gamma,
            r.dgamma,
            r.d2gamma,
            r.gap,
            r.norm_dh,
            r.bound_rhs_norm,
            r.adiabatic_ratio,
            r.q,
            r.bound_margin,
            r.b
        )?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::{CouplingGraph, SpinConfiguration};
    use approx::assert_relative_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn random_system(rng: &mut ChaCha8Rng, n: usize, m: usize, beta: f64, alpha: f64) -> TrotterSystem {
        let mut edges = Vec::new();
        for a in 0..n {
            for b in a + 1..n {
                edges.push((a, b, rng.random_range(-1.0..1.0)));
            }
        }
        TrotterSystem::new(CouplingGraph::new(n, edges).unwrap(), m, beta, alpha).unwrap()
    }

    #[test]
    fn degenerate_flip_rate_is_half() {
        assert_eq!(heat_bath_rate(0.0), 0.5);
        for h in [-30.0, -3.0, 0.4, 12.0] {
            assert_relative_eq!(ln_heat_bath_rate(h).exp(), heat_bath_rate(h), max_relative = 1e-14);
            assert_relative_eq!(heat_bath_rate(h), h.exp() / (2.0 * h.cosh()), max_relative = 1e-13);
        }
    }

    #[test]
    fn columns_sum_to_zero_and_rates_are_nonnegative() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let sys = random_system(&mut rng, 3, 1 + 2, 1.3, 0.0);
        let w = build_w(&sys, 0.6).unwrap();
        for c in 0..w.ncols() {
            assert!(w.column(c).sum().abs() < 1e-12);
            for r in 0..w.nrows() {
                if r != c {
                    assert!(w[(r, c)] >= 0.0);
                }
            }
        }
    }

    #[test]
    fn detailed_balance_on_single_flip_pairs() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let sys = random_system(&mut rng, 2, 2, 2.0, 0.0);
        let gamma = 0.4;
        let w = build_w(&sys, gamma).unwrap();
        // action from the lattice directly, not the state table
        let action: Vec<f64> = (0..sys.dim())
            .map(|s| sys.trotter_action(&SpinConfiguration::from_index(s, 2, 2), gamma).unwrap())
            .collect();
        let z_ref = action.iter().copied().fold(f64::INFINITY, f64::min);
        for a in 0..sys.dim() {
            for i in 0..sys.n_spins() {
                let b = a ^ (1 << i);
                let lhs = w[(a, b)] * (-(action[b] - z_ref)).exp();
                let rhs = w[(b, a)] * (-(action[a] - z_ref)).exp();
                assert!((lhs - rhs).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn h_is_symmetric_and_matches_similarity() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for (beta, alpha) in [(0.5, 0.0), (8.0, 0.0), (2.0, 0.5)] {
            let sys = random_system(&mut rng, 2, 3, beta, alpha);
            let h = build_h(&sys, 0.9).unwrap();
            assert!((&h - h.transpose()).amax() < 1e-12);
        }
    }

    #[test]
    fn stationary_vector_is_ground_state() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let sys = random_system(&mut rng, 2, 2, 1.5, 0.0);
        let g = Generator::new(&sys).unwrap();
        let gamma = 0.3;
        let a = g.table().actions(gamma);
        let min = a.iter().copied().fold(f64::INFINITY, f64::min);
        let v = DVector::from_iterator(a.len(), a.iter().map(|x| (-(x - min) / 2.0).exp()));
        assert!((g.h(gamma) * v).amax() < 1e-10);
    }

    #[test]
    fn spectra_of_h_and_minus_w_coincide() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let sys = random_system(&mut rng, 2, 3, 1.0, 0.0);
        let g = Generator::new(&sys).unwrap();
        let h = symmetric_eigenvalues(&g.h(0.5)).unwrap();
        let w = minus_w_eigenvalues(&g.w(0.5)).unwrap();
        for (a, (re, im)) in h.iter().zip(&w) {
            assert!((a - re).abs() < 1e-9);
            assert!(im.abs() < 1e-9);
        }
    }

    #[test]
    fn balancing_keeps_the_spectrum() {
        // triangular up to a badly scaled coupling; eigenvalues of -A are 1, 2, 3
        let a = DMatrix::from_row_slice(3, 3, &[-1.0, 1e8, 0.0, 0.0, -2.0, 1e-8, 0.0, 0.0, -3.0]);
        let ev = minus_w_eigenvalues(&a).unwrap();
        for (k, (re, im)) in ev.iter().enumerate() {
            assert!((re - (k + 1) as f64).abs() < 1e-12 && *im == 0.0);
        }
        let mut b = a.clone();
        balance(&mut b);
        assert!(b.amax() < a.amax());
    }

    #[test]
    fn generator_correction_counts_trotter_bonds() {
        let sys = TrotterSystem::new(CouplingGraph::new(1, []).unwrap(), 3, 1.0, 0.0).unwrap();
        let s = Schedule::power_law(&sys, 1.0, 1.0).unwrap();
        let v = s.eval(2.0).unwrap();
        let g = Generator::new(&sys).unwrap();
        let full = g.full(&v);
        let h = g.h(v.gamma);
        let up = SpinConfiguration::all_up(1, 3).to_index();
        // D = -3 for the all-up column
        assert_relative_eq!(full[(up, up)] - h[(up, up)], -0.5 * v.dgamma * -3.0, epsilon = 1e-15);
        assert!((&full - full.transpose()).amax() < 1e-12);
        let c = Schedule::constant(&sys, 0.7).unwrap();
        let vc = c.eval(5.0).unwrap();
        assert_eq!(g.full(&vc), g.h(vc.gamma));
    }

    #[test]
    fn gap_examples() {
        let px = DMatrix::from_row_slice(2, 2, &[0.0, -1.0, -1.0, 0.0]);
        let info = spectral_gap(&px).unwrap();
        assert_relative_eq!(info.gap, 2.0, epsilon = 1e-14);
        assert!(!info.degenerate);
        let d = DMatrix::from_diagonal(&DVector::from_vec(vec![0.0, 0.0, 1.0]));
        let info = spectral_gap(&d).unwrap();
        assert!(info.degenerate);
        assert_eq!(info.gap, 0.0);
        let skew = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 0.0, 0.0]);
        assert!(matches!(spectral_gap(&skew), Err(SqaError::Input(_))));
    }

    #[test]
    fn ground_state_of_h_is_simple() {
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        for _ in 0..50 {
            let n = rng.random_range(1..=3usize);
            let m = rng.random_range(2..=(9 / n).max(2));
            let beta = rng.random_range(0.2..4.0);
            let sys = random_system(&mut rng, n, m, beta, 0.0);
            let gamma = rng.random_range(0.05..2.0);
            let info = spectral_gap(&build_h(&sys, gamma).unwrap()).unwrap();
            assert!(!info.degenerate && info.gap > 0.0);
            assert!(info.ground_energy.abs() < 1e-10);
        }
    }

    #[test]
    fn constant_schedule_has_zero_ratio() {
        let sys = TrotterSystem::new(CouplingGraph::ring(2, 1.0).unwrap(), 2, 1.0, 0.0).unwrap();
        let r = adiabatic_ratio(&sys, &Schedule::constant(&sys, 0.5).unwrap(), 3.0).unwrap();
        assert_eq!(r.norm_dh, 0.0);
        assert_eq!(r.adiabatic_ratio, 0.0);
    }

    #[test]
    fn norm_bound_holds_on_power_law() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let sys = random_system(&mut rng, 2, 2, 2.0, 0.0);
        let s = Schedule::power_law(&sys, 1.0, 1.0).unwrap();
        for r in spectral_sweep(&sys, &s, &crate::numeric::logspace(1e-2, 1e4, 20)).unwrap() {
            assert!(r.norm_dh <= r.bound_rhs_norm, "t={}: {} > {}", r.t, r.norm_dh, r.bound_rhs_norm);
            assert!(r.fd_rel_error < FD_REL_TOL);
        }
    }

    #[test]
    fn restoring_b_is_minimal() {
        let sys = TrotterSystem::new(CouplingGraph::ring(2, 1.0).unwrap(), 2, 1.0, 0.0).unwrap();
        let g = Generator::new(&sys).unwrap();
        let v = ScheduleValue { field: 1.0, gamma: 0.3, dgamma: 0.1, d2gamma: -0.02 };
        let norm = g.bound_rhs(&v, 4) - 1e-9;
        assert_eq!(g.restoring_b(&v, norm), Some(4));
        assert_eq!(g.restoring_b(&v, g.bound_rhs(&v, 4) + 1e-9), Some(5));
    }

    #[test]
    fn slowing_the_schedule_halves_the_ratio() {
        let sys = TrotterSystem::new(CouplingGraph::ring(2, 1.0).unwrap(), 2, 1.0, 0.0).unwrap();
        let s = Schedule::power_law(&sys, 1.0, 1.0).unwrap();
        let slow = s.stretched(2.0).unwrap();
        for t in [1e2, 1e3, 1e4] {
            let fast = adiabatic_ratio(&sys, &s, t).unwrap();
            let slow = adiabatic_ratio(&sys, &slow, 2.0 * t).unwrap();
            let r = slow.adiabatic_ratio / fast.adiabatic_ratio;
            assert!((r - 0.5).abs() <= 0.1, "t={t}: ratio {r}");
        }
    }

    #[test]
    fn matrix_elements_never_exceed_the_norm() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let id = DMatrix::<f64>::identity(5, 5);
        assert!(matrix_element_vs_norm(&id, 200, &mut rng).unwrap() <= 1.0 + 1e-12);
        for _ in 0..100 {
            let a = DMatrix::from_fn(16, 16, |_, _| rng.random_range(-1.0..1.0));
            let sym = &a + a.transpose();
            matrix_element_vs_norm(&sym, 100, &mut rng).unwrap();
        }
        // top eigenvector saturates the bound
        let a = DMatrix::from_fn(6, 6, |_, _| rng.random_range(-1.0..1.0));
        let sym = &a + a.transpose();
        let eig = sym.clone().symmetric_eigen();
        let k = eig.eigenvalues.iamax();
        let v: DVector<f64> = eig.eigenvectors.column(k).into_owned();
        let ratio = v.dot(&(&sym * &v)).abs() / spectral_norm(&sym);
        assert!((ratio - 1.0).abs() < 1e-10);
    }

    #[test]
    fn q_is_finite_at_start() {
        let sys = TrotterSystem::new(CouplingGraph::ring(2, 1.0).unwrap(), 2, 1.0, 0.0).unwrap();
        let s = Schedule::power_law(&sys, 1.0, 1.0).unwrap();
        let pts = verify_gap_bound(&sys, &s, &[0.0, 1.0]).unwrap();
        assert!(pts.iter().all(|p| p.q.is_finite()));
    }
}
