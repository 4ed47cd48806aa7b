//! Exact evolution of the master equation `dP/dt = W(t) P` and of the
//! imaginary-time equation `-d phi/dt = Hcal(t) phi`, with equilibrium and
//! adiabaticity diagnostics along the way.

use std::io::Write;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::Serialize;

use crate::error::{Result, SqaError};
use crate::generator::Generator;
use crate::lattice::TrotterSystem;
use crate::numeric::logspace;
use crate::schedule::Schedule;

pub const TRACE_SCHEMA: &str = "# schema: sqa.trace/1";

/// `P ∝ exp(-a)` for a vector of dimensionless actions, computed after
/// shifting by the minimum.
pub fn boltzmann_from_actions(actions: &[f64]) -> Vec<f64> {
    let min = actions.iter().copied().fold(f64::INFINITY, f64::min);
    let mut p: Vec<f64> = actions.iter().map(|a| (-(a - min)).exp()).collect();
    let z: f64 = p.iter().sum();
    p.iter_mut().for_each(|x| *x /= z);
    p
}

/// Equilibrium distribution `e^{-beta H_0} / Z` at Trotter coupling `gamma`.
pub fn boltzmann(sys: &TrotterSystem, gamma: f64) -> Result<Vec<f64>> {
    let g = Generator::new(sys)?;
    Ok(boltzmann_from_actions(&g.table().actions(gamma)))
}

/// Total variation distance `(1/2) sum |p - q|`.
pub fn tv_distance(p: &[f64], q: &[f64]) -> Result<f64> {
    if p.len() != q.len() {
        return Err(SqaError::input(format!("distributions of length {} and {}", p.len(), q.len())));
    }
    Ok((0.5 * p.iter().zip(q).map(|(a, b)| (a - b).abs()).sum::<f64>()).clamp(0.0, 1.0))
}

/// Unit vector along `e^{a/2} p`, evaluated in the log domain.
pub fn ray_from_probability(actions: &[f64], p: &[f64]) -> Vec<f64> {
    let logs: Vec<f64> =
        actions.iter().zip(p).map(|(a, &x)| if x > 0.0 { 0.5 * a + x.ln() } else { f64::NEG_INFINITY }).collect();
    let max = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut v: Vec<f64> = logs.iter().map(|l| (l - max).exp()).collect();
    normalize_l2(&mut v);
    v
}

/// Probability vector `∝ e^{-a/2} phi` for a nonnegative ray.
pub fn probability_from_ray(actions: &[f64], phi: &[f64]) -> Vec<f64> {
    let logs: Vec<f64> = actions
        .iter()
        .zip(phi)
        .map(|(a, &x)| if x > 0.0 { -0.5 * a + x.ln() } else { f64::NEG_INFINITY })
        .collect();
    let max = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut p: Vec<f64> = logs.iter().map(|l| (l - max).exp()).collect();
    let z: f64 = p.iter().sum();
    p.iter_mut().for_each(|x| *x /= z);
    p
}

fn normalize_l2(v: &mut [f64]) {
    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if n > 0.0 {
        v.iter_mut().for_each(|x| *x /= n);
    }
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct Tolerance {
    pub rtol: f64,
    pub atol: f64,
}

impl Default for Tolerance {
    fn default() -> Self {
        Self { rtol: 1e-8, atol: 1e-12 }
    }
}

#[derive(Debug, Clone, Copy, Default, Serialize)]
pub struct IntegrationStats {
    pub accepted: usize,
    pub rejected: usize,
    pub evaluations: usize,
    /// Largest `|sum P - 1|` seen before renormalization (master equation only).
    pub max_sum_drift: f64,
}

const DP_C: [f64; 7] = [0.0, 0.2, 0.3, 0.8, 8.0 / 9.0, 1.0, 1.0];
const DP_A: [[f64; 6]; 7] = [
    [0.0; 6],
    [0.2, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0, 0.0, 0.0],
    [9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0, 0.0],
    [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0],
];
const DP_E: [f64; 7] = [
    71.0 / 57600.0,
    0.0,
    -71.0 / 16695.0,
    71.0 / 1920.0,
    -17253.0 / 339200.0,
    22.0 / 525.0,
    -1.0 / 40.0,
];

/// Dormand-Prince 5(4) from `t_obs[0]` through every observation time.
/// `observe` is called with the state at each observation time; `accept`
/// may adjust the state after every accepted step.
fn dormand_prince<F, A, O>(
    mut rhs: F,
    mut y: Vec<f64>,
    t_obs: &[f64],
    tol: Tolerance,
    mut accept: A,
    mut observe: O,
) -> Result<IntegrationStats>
where
    F: FnMut(f64, &[f64], &mut [f64]) -> Result<()>,
    A: FnMut(&mut [f64]),
    O: FnMut(usize, f64, &[f64]) -> Result<()>,
{
    let n = y.len();
    let mut stats = IntegrationStats::default();
    let mut k = vec![vec![0.0; n]; 7];
    let mut stage = vec![0.0; n];
    let mut y_new = vec![0.0; n];
    let mut t = t_obs[0];
    observe(0, t, &y)?;
    let span = t_obs[t_obs.len() - 1] - t;
    let mut h = (1e-3 * span).clamp(1e-8, 1e-2);
    for (idx, &target) in t_obs.iter().enumerate().skip(1) {
        while t < target {
            let reach = target - t;
            let clamp = h >= reach;
            let step = if clamp { reach } else { h };
            rhs(t, &y, &mut k[0])?;
            for s in 1..7 {
                for i in 0..n {
                    let mut acc = y[i];
                    for (j, kj) in k.iter().enumerate().take(s) {
                        acc += step * DP_A[s][j] * kj[i];
                    }
                    stage[i] = acc;
                }
                if s == 6 {
                    y_new.copy_from_slice(&stage);
                }
                rhs(t + DP_C[s] * step, &stage, &mut k[s])?;
            }
            stats.evaluations += 7;
            let mut err = 0.0;
            for i in 0..n {
                let mut e = 0.0;
                for (s, ks) in k.iter().enumerate() {
                    e += DP_E[s] * ks[i];
                }
                let sc = tol.atol + tol.rtol * y[i].abs().max(y_new[i].abs());
                err += (step * e / sc).powi(2);
            }
            let err = (err / n as f64).sqrt();
            if err <= 1.0 {
                stats.accepted += 1;
                t = if clamp { target } else { t + step };
                std::mem::swap(&mut y, &mut y_new);
                accept(&mut y);
                let grow = if err == 0.0 { 5.0 } else { (0.9 * err.powf(-0.2)).clamp(0.2, 5.0) };
                // a step shortened to land on an observation does not shrink h
                h = if clamp { h.max(step * grow) } else { step * grow };
            } else {
                stats.rejected += 1;
                h = step * (0.9 * err.powf(-0.2)).clamp(0.2, 1.0);
                if h < 1e-14 * t.abs().max(1.0) {
                    return Err(SqaError::Stiff { t, step: h });
                }
            }
        }
        observe(idx, t, &y)?;
    }
    Ok(stats)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum TraceKind {
    Master,
    Imaginary,
}

#[derive(Debug, Clone, Serialize)]
pub struct EvolveOptions {
    pub tolerance: Tolerance,
    /// Number of log-spaced observation times after `t = 0`.
    pub observation_points: usize,
    /// Explicit observation times (must start at 0); overrides the log grid.
    pub times: Option<Vec<f64>>,
    /// Eigen-decompose the generator at each observation time.
    pub track_spectrum: bool,
    pub k_max: usize,
}

impl Default for EvolveOptions {
    fn default() -> Self {
        Self { tolerance: Tolerance::default(), observation_points: 256, times: None, track_spectrum: true, k_max: 3 }
    }
}

impl EvolveOptions {
    fn grid(&self, horizon: f64) -> Result<Vec<f64>> {
        if !(horizon > 0.0) {
            return Err(SqaError::input("horizon must be positive"));
        }
        let grid = match &self.times {
            Some(t) => t.clone(),
            None => {
                let mut g = vec![0.0];
                let first = (horizon * 1e-6).max(1e-3).min(horizon);
                if self.observation_points > 0 {
                    g.extend(logspace(first, horizon, self.observation_points));
                }
                g.dedup();
                g
            }
        };
        if grid.first() != Some(&0.0) || grid.windows(2).any(|w| w[1] <= w[0]) {
            return Err(SqaError::input("observation times must start at 0 and increase"));
        }
        Ok(grid)
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct EvolutionTrace {
    pub kind: TraceKind,
    pub times: Vec<f64>,
    pub gammas: Vec<f64>,
    pub tv_inst: Vec<f64>,
    pub tv_final: Vec<f64>,
    /// `|<0(t)|phi>|` with `|0(t)>` the instantaneous ground state of `Hcal(t)`.
    pub overlap0: Vec<f64>,
    /// `|c_j|` for `j = 1..=k_max` at each observation.
    pub excitations: Vec<Vec<f64>>,
    pub gap: Vec<f64>,
    /// `P` for master traces, the unit ray `phi` for imaginary-time traces.
    #[serde(skip)]
    pub states: Vec<Vec<f64>>,
    pub k_max: usize,
    pub stats: IntegrationStats,
}

impl EvolutionTrace {
    pub fn final_state(&self) -> &[f64] {
        self.states.last().map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn final_tv_inst(&self) -> f64 {
        self.tv_inst.last().copied().unwrap_or(f64::NAN)
    }

    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "{TRACE_SCHEMA}")?;
        let mut head = String::from("t,tv_inst,tv_final,overlap0");
        for j in 1..=self.k_max {
            head.push_str(&format!(",c{j}"));
        }
        head.push_str(",gap");
        writeln!(out, "{head}")?;
        for i in 0..self.times.len() {
            let mut row = format!("{:e},{:e},{:e},{:e}", self.times[i], self.tv_inst[i], self.tv_final[i], self.overlap0[i]);
            for c in &self.excitations[i] {
                row.push_str(&format!(",{c:e}"));
            }
            row.push_str(&format!(",{:e}", self.gap[i]));
            writeln!(out, "{row}")?;
        }
        Ok(())
    }
}

/// Ascending eigen-decomposition with each eigenvector's largest-magnitude
/// entry made positive.
fn sorted_eigen(m: DMatrix<f64>) -> (Vec<f64>, DMatrix<f64>) {
    let eig = SymmetricEigen::new(m);
    let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let vals = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let mut vecs = DMatrix::zeros(eig.eigenvectors.nrows(), order.len());
    for (c, &i) in order.iter().enumerate() {
        let mut v = eig.eigenvectors.column(i).into_owned();
        let big = v.iamax();
        if v[big] < 0.0 {
            v.neg_mut();
        }
        vecs.set_column(c, &v);
    }
    (vals, vecs)
}

struct Observer<'a> {
    gen: &'a Generator,
    schedule: &'a Schedule,
    final_p: Vec<f64>,
    opts: &'a EvolveOptions,
    trace: EvolutionTrace,
}

impl Observer<'_> {
    fn record(&mut self, t: f64, state: &[f64]) -> Result<()> {
        let v = self.schedule.eval(t)?;
        let actions = self.gen.table().actions(v.gamma);
        let (p, phi) = match self.trace.kind {
            TraceKind::Master => (state.to_vec(), ray_from_probability(&actions, state)),
            TraceKind::Imaginary => {
                let mut phi = state.to_vec();
                normalize_l2(&mut phi);
                (probability_from_ray(&actions, &phi), phi)
            }
        };
        let eq = boltzmann_from_actions(&actions);
        self.trace.times.push(t);
        self.trace.gammas.push(v.gamma);
        self.trace.tv_inst.push(tv_distance(&p, &eq)?);
        self.trace.tv_final.push(tv_distance(&p, &self.final_p)?);
        if self.opts.track_spectrum {
            let (vals, vecs) = sorted_eigen(self.gen.full(&v));
            let phi = DVector::from_column_slice(&phi);
            self.trace.overlap0.push(vecs.column(0).dot(&phi).abs());
            let k = self.trace.k_max.min(vals.len() - 1);
            let mut c: Vec<f64> = (1..=k).map(|j| vecs.column(j).dot(&phi).abs()).collect();
            c.resize(self.trace.k_max, f64::NAN);
            self.trace.excitations.push(c);
            self.trace.gap.push(vals[1] - vals[0]);
        } else {
            self.trace.overlap0.push(f64::NAN);
            self.trace.excitations.push(vec![f64::NAN; self.trace.k_max]);
            self.trace.gap.push(f64::NAN);
        }
        match self.trace.kind {
            TraceKind::Master => self.trace.states.push(p),
            TraceKind::Imaginary => self.trace.states.push(phi),
        }
        Ok(())
    }
}

fn new_observer<'a>(
    gen: &'a Generator,
    schedule: &'a Schedule,
    horizon: f64,
    opts: &'a EvolveOptions,
    kind: TraceKind,
) -> Result<Observer<'a>> {
    let final_p = boltzmann_from_actions(&gen.table().actions(schedule.eval(horizon)?.gamma));
    Ok(Observer {
        gen,
        schedule,
        final_p,
        opts,
        trace: EvolutionTrace {
            kind,
            times: Vec::new(),
            gammas: Vec::new(),
            tv_inst: Vec::new(),
            tv_final: Vec::new(),
            overlap0: Vec::new(),
            excitations: Vec::new(),
            gap: Vec::new(),
            states: Vec::new(),
            k_max: opts.k_max,
            stats: IntegrationStats::default(),
        },
    })
}

/// Uniform (infinite-temperature) start.
pub fn uniform(dim: usize) -> Vec<f64> {
    vec![1.0 / dim as f64; dim]
}

/// Integrates the master equation from `p0` to `horizon`.
pub fn integrate_master(
    gen: &Generator,
    schedule: &Schedule,
    p0: &[f64],
    horizon: f64,
    opts: &EvolveOptions,
) -> Result<EvolutionTrace> {
    if p0.len() != gen.dim() {
        return Err(SqaError::input(format!("initial vector has length {} but the state space has {}", p0.len(), gen.dim())));
    }
    let sum: f64 = p0.iter().sum();
    if p0.iter().any(|&x| x < 0.0) || (sum - 1.0).abs() > 1e-9 {
        return Err(SqaError::input("initial vector is not a probability distribution"));
    }
    let grid = opts.grid(horizon)?;
    let mut obs = new_observer(gen, schedule, horizon, opts, TraceKind::Master)?;
    let mut drift: f64 = 0.0;
    let stats = dormand_prince(
        |t, p, out| {
            let v = schedule.eval(t)?;
            gen.apply_w(v.gamma, p, out);
            Ok(())
        },
        p0.to_vec(),
        &grid,
        opts.tolerance,
        |p| {
            let s: f64 = p.iter().sum();
            drift = drift.max((s - 1.0).abs());
            for x in p.iter_mut() {
                if *x < 0.0 && *x > -1e-10 {
                    *x = 0.0;
                }
            }
            let s: f64 = p.iter().sum();
            p.iter_mut().for_each(|x| *x /= s);
        },
        |_, t, p| obs.record(t, p),
    )?;
    let mut trace = obs.trace;
    trace.stats = IntegrationStats { max_sum_drift: drift, ..stats };
    Ok(trace)
}

/// Integrates `-d phi/dt = Hcal(t) phi` from `phi0`, renormalizing the ray
/// after every step.
pub fn integrate_imaginary(
    gen: &Generator,
    schedule: &Schedule,
    phi0: &[f64],
    horizon: f64,
    opts: &EvolveOptions,
) -> Result<EvolutionTrace> {
    if phi0.len() != gen.dim() || phi0.iter().all(|&x| x == 0.0) {
        return Err(SqaError::input("initial ray must be nonzero and match the state space"));
    }
    let grid = opts.grid(horizon)?;
    let mut obs = new_observer(gen, schedule, horizon, opts, TraceKind::Imaginary)?;
    let mut phi = phi0.to_vec();
    normalize_l2(&mut phi);
    let stats = dormand_prince(
        |t, phi, out| {
            let v = schedule.eval(t)?;
            gen.apply_full(&v, phi, out);
            out.iter_mut().for_each(|x| *x = -*x);
            Ok(())
        },
        phi,
        &grid,
        opts.tolerance,
        normalize_l2,
        |_, t, phi| obs.record(t, phi),
    )?;
    let mut trace = obs.trace;
    trace.stats = stats;
    Ok(trace)
}

/// The ray `e^{beta H_0(0)/2} p0` matching a master-equation start.
pub fn imaginary_start(gen: &Generator, schedule: &Schedule, p0: &[f64]) -> Result<Vec<f64>> {
    let v = schedule.eval(0.0)?;
    Ok(ray_from_probability(&gen.table().actions(v.gamma), p0))
}

/// Per observation time, the largest entrywise difference between the unit
/// rays `e^{beta H_0/2} P` of a master trace and `phi` of an imaginary-time
/// trace recorded on the same grid.
pub fn correspondence_series(gen: &Generator, master: &EvolutionTrace, imaginary: &EvolutionTrace) -> Result<Vec<f64>> {
    if master.kind != TraceKind::Master || imaginary.kind != TraceKind::Imaginary {
        return Err(SqaError::input("need one master and one imaginary-time trace"));
    }
    if master.times != imaginary.times {
        return Err(SqaError::input("traces were recorded on different grids"));
    }
    Ok((0..master.times.len())
        .map(|i| {
            let ray = ray_from_probability(&gen.table().actions(master.gammas[i]), &master.states[i]);
            ray.iter().zip(&imaginary.states[i]).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max)
        })
        .collect())
}

/// Maximum of [`correspondence_series`].
pub fn correspondence_deviation(gen: &Generator, master: &EvolutionTrace, imaginary: &EvolutionTrace) -> Result<f64> {
    Ok(correspondence_series(gen, master, imaginary)?.into_iter().fold(0.0, f64::max))
}

#[derive(Debug, Clone, Serialize)]
pub struct Excitations {
    pub t: f64,
    /// `|<j|phi>|` for the normalized ray.
    pub measured: Vec<f64>,
    /// First-order prediction `|<j|dHcal/dt|0>| / Delta_j^2`.
    pub predicted: Vec<f64>,
    /// `|<j|dHcal/dt|0>|`.
    pub coupling: Vec<f64>,
    pub level_gaps: Vec<f64>,
}

impl Excitations {
    /// Position (0 for level 1) of the lowest level that the time dependence
    /// couples to the ground state. Levels in other symmetry sectors have
    /// zero coupling and stay unpopulated.
    pub fn first_coupled(&self) -> Option<usize> {
        let top = self.coupling.iter().copied().fold(0.0, f64::max);
        self.coupling.iter().position(|&c| top > 0.0 && c > 1e-8 * top)
    }
}

/// Projects `phi` onto the instantaneous eigenvectors of `Hcal(t)` and
/// evaluates the first-order adiabatic prediction for levels `1..=k_max`.
pub fn excitation_coefficients(gen: &Generator, phi: &[f64], schedule: &Schedule, t: f64, k_max: usize) -> Result<Excitations> {
    if phi.len() != gen.dim() {
        return Err(SqaError::input("ray length does not match the state space"));
    }
    if k_max == 0 || k_max >= gen.dim() {
        return Err(SqaError::input(format!("k_max must lie in 1..{}", gen.dim())));
    }
    let v = schedule.eval(t)?;
    let (vals, vecs) = sorted_eigen(gen.full(&v));
    for j in 0..k_max {
        let split = vals[j + 1] - vals[j];
        if split < 1e-10 {
            return Err(SqaError::Degenerate { level: j, next: j + 1, split });
        }
    }
    let mut unit = DVector::from_column_slice(phi);
    unit /= unit.norm();
    let d = gen.full_derivative(&v);
    let ground = vecs.column(0).into_owned();
    let d0 = &d * &ground;
    let mut out =
        Excitations { t, measured: Vec::new(), predicted: Vec::new(), coupling: Vec::new(), level_gaps: Vec::new() };
    for j in 1..=k_max {
        let vj = vecs.column(j);
        let gap = vals[j] - vals[0];
        out.measured.push(vj.dot(&unit).abs());
        let c = vj.dot(&d0).abs();
        out.coupling.push(c);
        out.predicted.push(c / (gap * gap));
        out.level_gaps.push(gap);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::CouplingGraph;
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn ring_system(n: usize, m: usize, beta: f64) -> TrotterSystem {
        let g = if n == 1 { CouplingGraph::new(1, []).unwrap() } else { CouplingGraph::ring(n, 1.0).unwrap() };
        TrotterSystem::new(g, m, beta, 0.0).unwrap()
    }

    fn short(times: Vec<f64>) -> EvolveOptions {
        EvolveOptions { times: Some(times), ..EvolveOptions::default() }
    }

    #[test]
    fn tv_examples() {
        let p = [0.1, 0.2, 0.7];
        assert_eq!(tv_distance(&p, &p).unwrap(), 0.0);
        assert_eq!(tv_distance(&[1.0, 0.0], &[0.0, 1.0]).unwrap(), 1.0);
        assert_relative_eq!(tv_distance(&[0.25; 4], &[1.0, 0.0, 0.0, 0.0]).unwrap(), 0.75);
        assert!(tv_distance(&[1.0], &[0.5, 0.5]).is_err());
    }

    #[test]
    fn boltzmann_examples() {
        let e: f64 = 1.7;
        let p = boltzmann_from_actions(&[0.0, e]);
        assert_relative_eq!(p[0], 1.0 / (1.0 + (-e).exp()), epsilon = 1e-15);
        assert_relative_eq!(p[1], (-e).exp() / (1.0 + (-e).exp()), epsilon = 1e-15);
        let flat = boltzmann_from_actions(&[3.0; 8]);
        assert!(flat.iter().all(|&x| (x - 0.125).abs() < 1e-15));
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let sys = TrotterSystem::new(CouplingGraph::new(2, [(0, 1, rng.random_range(-1.0..1.0))]).unwrap(), 2, 1.2, 0.0)
            .unwrap();
        let gen = Generator::new(&sys).unwrap();
        let p = boltzmann(&sys, 0.8).unwrap();
        let wp = gen.w(0.8) * DVector::from_vec(p);
        assert!(wp.amax() < 1e-12);
    }

    #[test]
    fn constant_schedule_relaxes_to_equilibrium() {
        let sys = ring_system(1, 2, 1.0);
        let gen = Generator::new(&sys).unwrap();
        let s = Schedule::constant(&sys, 0.6).unwrap();
        let eq = boltzmann(&sys, s.eval(0.0).unwrap().gamma).unwrap();
        for p0 in [uniform(4), vec![1.0, 0.0, 0.0, 0.0], vec![0.0, 0.5, 0.5, 0.0]] {
            let tr = integrate_master(&gen, &s, &p0, 200.0, &short(vec![0.0, 100.0, 200.0])).unwrap();
            assert!(tv_distance(tr.final_state(), &eq).unwrap() < 1e-8);
        }
    }

    #[test]
    fn stationary_start_stays_put() {
        let sys = ring_system(2, 2, 1.5);
        let gen = Generator::new(&sys).unwrap();
        let s = Schedule::constant(&sys, 0.4).unwrap();
        let eq = boltzmann(&sys, s.eval(0.0).unwrap().gamma).unwrap();
        let tr = integrate_master(&gen, &s, &eq, 50.0, &EvolveOptions { observation_points: 32, ..Default::default() })
            .unwrap();
        assert!(tr.tv_inst.iter().all(|&x| x < 1e-9));
    }

    #[test]
    fn probability_is_conserved() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let sys = TrotterSystem::new(
            CouplingGraph::new(2, [(0, 1, rng.random_range(-1.0..1.0))]).unwrap(),
            3,
            rng.random_range(0.5..2.0),
            0.0,
        )
        .unwrap();
        let gen = Generator::new(&sys).unwrap();
        let s = Schedule::power_law(&sys, 1.0, 1.0).unwrap();
        let tr = integrate_master(&gen, &s, &uniform(gen.dim()), 30.0, &EvolveOptions { observation_points: 16, ..Default::default() })
            .unwrap();
        assert!(tr.stats.max_sum_drift < 1e-9);
        for p in &tr.states {
            assert!(p.iter().all(|&x| x >= -1e-12));
            assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        }
        assert!(tr.tv_inst.iter().chain(&tr.tv_final).all(|&x| (0.0..=1.0).contains(&x)));
    }

    #[test]
    fn imaginary_time_finds_the_ground_state() {
        let sys = ring_system(1, 2, 1.0);
        let gen = Generator::new(&sys).unwrap();
        let s = Schedule::constant(&sys, 0.8).unwrap();
        let tr = integrate_imaginary(&gen, &s, &[1.0, 0.2, 0.3, 0.9], 200.0, &short(vec![0.0, 200.0])).unwrap();
        assert!(tr.overlap0.last().unwrap() > &(1.0 - 1e-8));
    }

    #[test]
    fn eigenstate_is_stationary_in_imaginary_time() {
        let sys = ring_system(2, 2, 1.0);
        let gen = Generator::new(&sys).unwrap();
        let s = Schedule::constant(&sys, 0.5).unwrap();
        let (_, vecs) = sorted_eigen(gen.h(s.eval(0.0).unwrap().gamma));
        let g0: Vec<f64> = vecs.column(0).iter().copied().collect();
        let tr = integrate_imaginary(&gen, &s, &g0, 20.0, &EvolveOptions { observation_points: 20, ..Default::default() })
            .unwrap();
        for phi in &tr.states {
            for (a, b) in phi.iter().zip(&g0) {
                assert!((a - b).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn master_and_imaginary_traces_correspond() {
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        let sys = TrotterSystem::new(
            CouplingGraph::new(2, [(0, 1, rng.random_range(-1.0..1.0))]).unwrap(),
            2,
            1.0,
            0.0,
        )
        .unwrap();
        let gen = Generator::new(&sys).unwrap();
        let s = Schedule::power_law(&sys, 1.0, 1.0).unwrap();
        let opts = EvolveOptions { observation_points: 64, track_spectrum: false, ..Default::default() };
        let p0 = uniform(gen.dim());
        let m = integrate_master(&gen, &s, &p0, 100.0, &opts).unwrap();
        let i = integrate_imaginary(&gen, &s, &imaginary_start(&gen, &s, &p0).unwrap(), 100.0, &opts).unwrap();
        assert!(correspondence_deviation(&gen, &m, &i).unwrap() <= 1e-6);
    }

    #[test]
    fn ground_state_has_no_excitations() {
        let sys = ring_system(1, 3, 1.0);
        let gen = Generator::new(&sys).unwrap();
        let s = Schedule::power_law(&sys, 1.0, 1.0).unwrap();
        let v = s.eval(5.0).unwrap();
        let (_, vecs) = sorted_eigen(gen.full(&v));
        let g0: Vec<f64> = vecs.column(0).iter().copied().collect();
        let ex = excitation_coefficients(&gen, &g0, &s, 5.0, 3).unwrap();
        assert!(ex.measured.iter().all(|&c| c < 1e-10));
        assert!(ex.predicted.iter().all(|c| c.is_finite()));
    }

    #[test]
    fn stretching_halves_the_first_coupled_amplitude() {
        let sys = ring_system(1, 3, 1.0);
        let gen = Generator::new(&sys).unwrap();
        let fast = Schedule::power_law(&sys, 1.0, 1.0).unwrap();
        let slow = fast.stretched(2.0).unwrap();
        let run = |s: &Schedule, t: f64| {
            let (_, vecs) = sorted_eigen(gen.full(&s.eval(0.0).unwrap()));
            let g0: Vec<f64> = vecs.column(0).iter().copied().collect();
            let tr = integrate_imaginary(&gen, s, &g0, t, &short(vec![0.0, t])).unwrap();
            excitation_coefficients(&gen, tr.final_state(), s, t, 2).unwrap()
        };
        let a = run(&fast, 300.0);
        let b = run(&slow, 600.0);
        let j = a.first_coupled().unwrap();
        // level 1 is odd under a global spin flip
        assert_eq!(j, 1);
        assert!(a.measured[0] < 1e-10);
        let ratio = b.measured[j] / a.measured[j];
        assert!((ratio - 0.5).abs() < 0.1, "ratio {ratio}");
        assert!((a.measured[j] / a.predicted[j] - 1.0).abs() < 0.5);
    }

    #[test]
    fn degenerate_levels_are_rejected() {
        // two decoupled spins on decoupled slices: the first excited level is degenerate
        let sys = TrotterSystem::new(CouplingGraph::new(2, []).unwrap(), 2, 1.0, 0.0).unwrap();
        let gen = Generator::new(&sys).unwrap();
        let s = Schedule::constant(&sys, 0.5).unwrap();
        let err = excitation_coefficients(&gen, &uniform(16), &s, 1.0, 3).unwrap_err();
        assert!(matches!(err, SqaError::Degenerate { .. }));
    }

    #[test]
    fn bad_inputs() {
        let sys = ring_system(1, 2, 1.0);
        let gen = Generator::new(&sys).unwrap();
        let s = Schedule::constant(&sys, 0.5).unwrap();
        assert!(integrate_master(&gen, &s, &[0.5, 0.5, 0.5, 0.5], 1.0, &EvolveOptions::default()).is_err());
        assert!(integrate_master(&gen, &s, &uniform(4), -1.0, &EvolveOptions::default()).is_err());
        assert!(integrate_imaginary(&gen, &s, &[0.0; 4], 1.0, &EvolveOptions::default()).is_err());
    }
}
