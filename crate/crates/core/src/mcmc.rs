//! Single-spin-flip heat-bath Monte Carlo on the Trotter lattice under a
//! time-dependent schedule. One attempt advances simulated time by
//! `1 / (N M)`, so a sweep is one unit of master-equation time.

use std::collections::BTreeMap;
use std::io::Write;
use std::sync::atomic::{AtomicUsize, Ordering};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Result, SqaError};
use crate::evolve::tv_distance;
use crate::generator::heat_bath_rate;
use crate::lattice::{SpinConfiguration, TrotterSystem};
use crate::numeric::Pchip;
use crate::schedule::Schedule;

pub const HISTOGRAM_SCHEMA: &str = "# schema: sqa.histogram/1";

/// Replicas are pooled into this many groups for bootstrap error bars.
pub const BOOTSTRAP_GROUPS: usize = 16;
const BOOTSTRAP_RESAMPLES: usize = 256;
const BOOTSTRAP_SEED: u64 = 0x5eed_b007;
const CACHE_KNOTS: usize = 1024;
const CACHE_REL_TOL: f64 = 1e-6;
/// Largest lattice for which per-state counts are kept.
const MAX_HISTOGRAM_SPINS: usize = 24;

/// `gamma(t)` lookup: monotone cubic interpolation in `ln(1 + t)`, or direct
/// evaluation when the interpolant misses the tolerance.
#[derive(Debug, Clone)]
pub struct GammaCache {
    schedule: Schedule,
    table: Option<Pchip>,
    constant: Option<f64>,
    horizon: f64,
}

impl GammaCache {
    pub fn new(schedule: &Schedule, horizon: f64) -> Result<Self> {
        if schedule.is_constant() {
            let g = schedule.eval(0.0)?.gamma;
            return Ok(Self { schedule: schedule.clone(), table: None, constant: Some(g), horizon });
        }
        let x_max = horizon.ln_1p();
        let xs: Vec<f64> = (0..CACHE_KNOTS).map(|i| x_max * i as f64 / (CACHE_KNOTS - 1) as f64).collect();
        let ys = xs.iter().map(|x| Ok(schedule.eval(x.exp_m1())?.gamma)).collect::<Result<Vec<f64>>>()?;
        let table = Pchip::new(xs.clone(), ys).ok().filter(|p| {
            xs.windows(2).all(|w| {
                let mid = 0.5 * (w[0] + w[1]);
                match schedule.eval(mid.exp_m1()) {
                    Ok(v) => (p.eval(mid) - v.gamma).abs() <= CACHE_REL_TOL * v.gamma.abs().max(1e-300),
                    Err(_) => false,
                }
            })
        });
        Ok(Self { schedule: schedule.clone(), table, constant: None, horizon })
    }

    /// Whether lookups go through the interpolant.
    pub fn is_tabulated(&self) -> bool {
        self.table.is_some() || self.constant.is_some()
    }

    #[inline]
    pub fn gamma(&self, t: f64) -> Result<f64> {
        if let Some(g) = self.constant {
            return Ok(g);
        }
        match &self.table {
            Some(p) if t <= self.horizon => Ok(p.eval(t.ln_1p())),
            _ => Ok(self.schedule.eval(t)?.gamma),
        }
    }
}

/// One Markov chain: its spins, its random stream and the attempts made.
#[derive(Debug, Clone)]
pub struct SamplerState {
    pub config: SpinConfiguration,
    pub attempts: u64,
    pub flips: u64,
    pub stream: u64,
    rng: ChaCha8Rng,
}

impl SamplerState {
    /// Chain `stream` of `seed`, starting from `init`.
    pub fn new(sys: &TrotterSystem, seed: u64, stream: u64, init: InitialState) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(stream);
        let (n, m) = (sys.n_sites(), sys.trotter_slices());
        let config = match init {
            InitialState::AllUp => SpinConfiguration::all_up(n, m),
            InitialState::Uniform => {
                let mut c = SpinConfiguration::all_down(n, m);
                for k in 0..m {
                    for j in 0..n {
                        if rng.random::<bool>() {
                            c.flip(j, k);
                        }
                    }
                }
                c
            }
        };
        Self { config, attempts: 0, flips: 0, stream, rng }
    }

    /// Simulated time `attempts / (N M)`.
    pub fn sim_time(&self, sys: &TrotterSystem) -> f64 {
        self.attempts as f64 / sys.n_spins() as f64
    }

    /// Position in the random stream, in 32-bit words.
    pub fn stream_position(&self) -> u128 {
        self.rng.get_word_pos()
    }
}

/// Probability that a heat-bath attempt at `(site, slice)` flips the spin.
pub fn flip_probability(sys: &TrotterSystem, config: &SpinConfiguration, site: usize, slice: usize, gamma: f64) -> f64 {
    let (fixed, trotter) = sys.local_terms(config, site, slice);
    heat_bath_rate(-(fixed + gamma * trotter))
}

/// One attempt at a uniformly chosen spin using the coupling at the current
/// simulated time.
#[inline]
pub fn step(state: &mut SamplerState, sys: &TrotterSystem, gamma: &GammaCache) -> Result<()> {
    let g = gamma.gamma(state.sim_time(sys))?;
    let i = state.rng.random_range(0..sys.n_spins());
    let (site, slice) = (i % sys.n_sites(), i / sys.n_sites());
    let p = flip_probability(sys, &state.config, site, slice, g);
    if state.rng.random::<f64>() < p {
        state.config.flip(site, slice);
        state.flips += 1;
    }
    state.attempts += 1;
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitialState {
    #[default]
    Uniform,
    AllUp,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SampleOptions {
    pub horizon: f64,
    pub replicas: usize,
    pub seed: u64,
    /// Samples recorded per replica: the first at `horizon`, then every
    /// `sample_spacing` sweeps.
    #[serde(default = "one")]
    pub samples_per_replica: usize,
    #[serde(default = "one_f")]
    pub sample_spacing: f64,
    #[serde(default)]
    pub initial: InitialState,
    /// Report progress to stderr every this many finished replicas.
    #[serde(default)]
    pub progress_every: Option<usize>,
}

fn one() -> usize {
    1
}

fn one_f() -> f64 {
    1.0
}

impl SampleOptions {
    pub fn new(horizon: f64, replicas: usize, seed: u64) -> Self {
        Self {
            horizon,
            replicas,
            seed,
            samples_per_replica: 1,
            sample_spacing: 1.0,
            initial: InitialState::Uniform,
            progress_every: None,
        }
    }

    fn validate(&self) -> Result<()> {
        if !(self.horizon >= 0.0) || self.replicas == 0 || self.samples_per_replica == 0 || !(self.sample_spacing > 0.0) {
            return Err(SqaError::input("sampling needs horizon >= 0, replicas >= 1, samples >= 1 and spacing > 0"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EnergyCount {
    pub energy: f64,
    pub count: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AcceptanceStats {
    pub attempts: u64,
    pub flips: u64,
    pub rate: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunSummary {
    pub horizon: f64,
    pub replicas: usize,
    pub samples_per_replica: usize,
    pub seed: u64,
    /// Histogram of the lowest classical slice energy in each sample.
    pub final_energy_histogram: Vec<EnergyCount>,
    pub ground_energy: Option<f64>,
    pub ground_hit_rate: Option<f64>,
    /// Counts per dense state index, when the lattice is small enough.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub empirical_distribution: Option<Vec<u64>>,
    /// The same counts split over replica groups `r mod 16`.
    #[serde(skip)]
    pub group_counts: Option<Vec<Vec<u64>>>,
    pub acceptance: AcceptanceStats,
    pub gamma_tabulated: bool,
}

impl RunSummary {
    pub fn total_samples(&self) -> u64 {
        self.final_energy_histogram.iter().map(|e| e.count).sum()
    }

    /// Empirical frequencies over dense states.
    pub fn frequencies(&self) -> Result<Vec<f64>> {
        let counts = self.empirical_distribution.as_ref().ok_or_else(|| SqaError::State("run kept no state histogram".into()))?;
        let total: u64 = counts.iter().sum();
        Ok(counts.iter().map(|&c| c as f64 / total as f64).collect())
    }

    pub fn write_histogram_csv<W: Write>(&self, mut out: W) -> Result<()> {
        let counts = self.empirical_distribution.as_ref().ok_or_else(|| SqaError::State("run kept no state histogram".into()))?;
        writeln!(out, "{HISTOGRAM_SCHEMA}")?;
        writeln!(out, "state,count")?;
        for (i, c) in counts.iter().enumerate() {
            writeln!(out, "{i},{c}")?;
        }
        Ok(())
    }
}

/// Exhaustive classical ground energy for small graphs.
pub fn classical_ground_energy(sys: &TrotterSystem) -> Option<f64> {
    let n = sys.n_sites();
    if n > MAX_HISTOGRAM_SPINS {
        return None;
    }
    let mut best = f64::INFINITY;
    let mut spins = vec![-1i8; n];
    for mask in 0..(1usize << n) {
        for (j, s) in spins.iter_mut().enumerate() {
            *s = if mask >> j & 1 == 1 { 1 } else { -1 };
        }
        best = best.min(sys.graph().classical_energy(&spins).ok()?);
    }
    Some(best)
}

/// The lowest classical energy among the Trotter slices.
fn readout_energy(sys: &TrotterSystem, config: &SpinConfiguration) -> f64 {
    (0..sys.trotter_slices())
        .map(|k| sys.graph().classical_energy(&config.slice(k)).unwrap_or(f64::INFINITY))
        .fold(f64::INFINITY, f64::min)
}

fn energy_key(e: f64) -> i64 {
    (e * 1e9).round() as i64
}

struct ReplicaResult {
    energies: Vec<f64>,
    states: Vec<usize>,
    attempts: u64,
    flips: u64,
}

fn run_replica(sys: &TrotterSystem, gamma: &GammaCache, opts: &SampleOptions, replica: usize) -> Result<ReplicaResult> {
    let mut state = SamplerState::new(sys, opts.seed, replica as u64, opts.initial);
    let per_sweep = sys.n_spins() as f64;
    let mut energies = Vec::with_capacity(opts.samples_per_replica);
    let mut states = Vec::with_capacity(opts.samples_per_replica);
    for s in 0..opts.samples_per_replica {
        let until = ((opts.horizon + s as f64 * opts.sample_spacing) * per_sweep).round() as u64;
        while state.attempts < until {
            step(&mut state, sys, gamma)?;
        }
        energies.push(readout_energy(sys, &state.config));
        states.push(state.config.to_index());
    }
    Ok(ReplicaResult { energies, states, attempts: state.attempts, flips: state.flips })
}

/// Runs `replicas` independent chains from `seed`; replica `r` uses stream
/// `r`, so results do not depend on the thread count.
pub fn run_annealed(sys: &TrotterSystem, schedule: &Schedule, opts: &SampleOptions) -> Result<RunSummary> {
    opts.validate()?;
    let last = opts.horizon + (opts.samples_per_replica - 1) as f64 * opts.sample_spacing;
    let cache = GammaCache::new(schedule, last)?;
    let done = AtomicUsize::new(0);
    let results: Vec<ReplicaResult> = (0..opts.replicas)
        .into_par_iter()
        .map(|r| {
            let out = run_replica(sys, &cache, opts, r);
            if let Some(every) = opts.progress_every.filter(|&e| e > 0) {
                let d = done.fetch_add(1, Ordering::Relaxed) + 1;
                if d.is_multiple_of(every) || d == opts.replicas {
                    eprintln!("sample: {d}/{} replicas", opts.replicas);
                }
            }
            out
        })
        .collect::<Result<_>>()?;

    let keep_states = sys.n_spins() <= MAX_HISTOGRAM_SPINS;
    let dim = if keep_states { 1usize << sys.n_spins() } else { 0 };
    let mut groups = keep_states.then(|| vec![vec![0u64; dim]; BOOTSTRAP_GROUPS]);
    let mut hist: BTreeMap<i64, (f64, u64)> = BTreeMap::new();
    let (mut attempts, mut flips) = (0u64, 0u64);
    for (r, res) in results.iter().enumerate() {
        attempts += res.attempts;
        flips += res.flips;
        for &e in &res.energies {
            hist.entry(energy_key(e)).or_insert((e, 0)).1 += 1;
        }
        if let Some(g) = groups.as_mut() {
            for &s in &res.states {
                g[r % BOOTSTRAP_GROUPS][s] += 1;
            }
        }
    }
    let empirical = groups.as_ref().map(|g| (0..dim).map(|s| g.iter().map(|row| row[s]).sum()).collect());
    let ground = classical_ground_energy(sys);
    let total: u64 = hist.values().map(|v| v.1).sum();
    let ground_hit_rate = ground.map(|g| {
        let hits: u64 = hist.values().filter(|(e, _)| (e - g).abs() <= 1e-9 * g.abs().max(1.0)).map(|v| v.1).sum();
        hits as f64 / total as f64
    });
    Ok(RunSummary {
        horizon: opts.horizon,
        replicas: opts.replicas,
        samples_per_replica: opts.samples_per_replica,
        seed: opts.seed,
        final_energy_histogram: hist.into_values().map(|(energy, count)| EnergyCount { energy, count }).collect(),
        ground_energy: ground,
        ground_hit_rate,
        empirical_distribution: empirical,
        group_counts: groups,
        acceptance: AcceptanceStats {
            attempts,
            flips,
            rate: if attempts > 0 { flips as f64 / attempts as f64 } else { 0.0 },
        },
        gamma_tabulated: cache.is_tabulated(),
    })
}

/// One run per horizon, all from the same seed.
pub fn run_horizons(sys: &TrotterSystem, schedule: &Schedule, horizons: &[f64], opts: &SampleOptions) -> Result<Vec<RunSummary>> {
    horizons.iter().map(|&h| run_annealed(sys, schedule, &SampleOptions { horizon: h, ..opts.clone() })).collect()
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct TvEstimate {
    pub tv: f64,
    pub standard_error: f64,
}

/// TV distance between the run's empirical distribution and `exact`, with a
/// standard error from resampling the replica groups.
pub fn estimate_tv(summary: &RunSummary, exact: &[f64]) -> Result<TvEstimate> {
    let freq = summary.frequencies()?;
    let tv = tv_distance(&freq, exact)?;
    let groups = summary.group_counts.as_ref().ok_or_else(|| SqaError::State("run kept no replica groups".into()))?;
    let filled: Vec<&Vec<u64>> = groups.iter().filter(|g| g.iter().any(|&c| c > 0)).collect();
    if filled.len() < 2 {
        return Ok(TvEstimate { tv, standard_error: f64::NAN });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(BOOTSTRAP_SEED);
    let mut pooled = vec![0u64; exact.len()];
    let mut values = Vec::with_capacity(BOOTSTRAP_RESAMPLES);
    for _ in 0..BOOTSTRAP_RESAMPLES {
        pooled.iter_mut().for_each(|c| *c = 0);
        for _ in 0..filled.len() {
            let g = filled[rng.random_range(0..filled.len())];
            for (p, c) in pooled.iter_mut().zip(g.iter()) {
                *p += c;
            }
        }
        let total: u64 = pooled.iter().sum();
        let f: Vec<f64> = pooled.iter().map(|&c| c as f64 / total as f64).collect();
        values.push(tv_distance(&f, exact)?);
    }
    let mean = values.iter().sum::<f64>() / values.len() as f64;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (values.len() - 1) as f64;
    Ok(TvEstimate { tv, standard_error: var.sqrt() })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::evolve::boltzmann;
    use crate::lattice::CouplingGraph;
    use approx::assert_relative_eq;

    fn system(n: usize, m: usize, beta: f64) -> TrotterSystem {
        let g = if n == 1 { CouplingGraph::new(1, []).unwrap() } else { CouplingGraph::ring(n, 1.0).unwrap() };
        TrotterSystem::new(g, m, beta, 0.0).unwrap()
    }

    #[test]
    fn free_spins_flip_with_probability_half() {
        let sys = TrotterSystem::new(CouplingGraph::new(3, []).unwrap(), 2, 1.0, 0.0).unwrap();
        let c = SpinConfiguration::from_index(0b101101, 3, 2);
        for k in 0..2 {
            for j in 0..3 {
                assert_eq!(flip_probability(&sys, &c, j, k, 0.0), 0.5);
            }
        }
    }

    #[test]
    fn forward_backward_ratio_is_boltzmann_factor() {
        let sys = TrotterSystem::new(CouplingGraph::new(2, [(0, 1, -0.7)]).unwrap(), 3, 1.4, 0.0).unwrap();
        let gamma = 0.45;
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        for _ in 0..50 {
            let c = SpinConfiguration::from_index(rng.random_range(0..64), 2, 3);
            let (j, k) = (rng.random_range(0..2), rng.random_range(0..3));
            let mut d = c.clone();
            d.flip(j, k);
            let da = sys.trotter_action(&d, gamma).unwrap() - sys.trotter_action(&c, gamma).unwrap();
            let ratio = flip_probability(&sys, &c, j, k, gamma) / flip_probability(&sys, &d, j, k, gamma);
            assert_relative_eq!(ratio, (-da).exp(), max_relative = 1e-12);
        }
    }

    #[test]
    fn sim_time_counts_sweeps() {
        let sys = system(2, 3, 1.0);
        let s = Schedule::constant(&sys, 0.5).unwrap();
        let cache = GammaCache::new(&s, 10.0).unwrap();
        let mut st = SamplerState::new(&sys, 1, 0, InitialState::AllUp);
        for _ in 0..15 {
            step(&mut st, &sys, &cache).unwrap();
        }
        assert_eq!(st.sim_time(&sys), 2.5);
    }

    #[test]
    fn gamma_cache_meets_tolerance() {
        let sys = system(2, 2, 1.0);
        for s in [
            Schedule::power_law(&sys, 1.0, 1.0).unwrap(),
            Schedule::exponential_decay(&sys, 1.0, 1.0).unwrap(),
            Schedule::general(&sys, 0.8, 3.0, crate::schedule::Exponent::LogCorrected { scale: 0.25 }).unwrap(),
        ] {
            let c = GammaCache::new(&s, 1e4).unwrap();
            for t in crate::numeric::logspace(1e-3, 1e4, 97) {
                let exact = s.eval(t).unwrap().gamma;
                assert!((c.gamma(t).unwrap() - exact).abs() <= 1e-6 * exact.abs());
            }
        }
    }

    #[test]
    fn fixed_field_sampling_matches_boltzmann() {
        let sys = system(1, 2, 1.0);
        let s = Schedule::constant(&sys, 0.8).unwrap();
        let opts = SampleOptions { samples_per_replica: 2000, ..SampleOptions::new(5.0, 100, 42) };
        let run = run_annealed(&sys, &s, &opts).unwrap();
        let exact = boltzmann(&sys, s.eval(0.0).unwrap().gamma).unwrap();
        let est = estimate_tv(&run, &exact).unwrap();
        assert!(est.tv < 0.01, "tv {}", est.tv);
        assert_eq!(run.total_samples(), 200_000);
    }

    #[test]
    fn runs_are_deterministic() {
        let sys = system(2, 2, 1.0);
        let s = Schedule::power_law(&sys, 1.0, 1.0).unwrap();
        let opts = SampleOptions::new(20.0, 64, 9);
        let a = run_annealed(&sys, &s, &opts).unwrap();
        let b = run_annealed(&sys, &s, &opts).unwrap();
        assert_eq!(a, b);
        assert_eq!(serde_json::to_string(&a).unwrap(), serde_json::to_string(&b).unwrap());
        let c = run_annealed(&sys, &s, &SampleOptions { seed: 10, ..opts }).unwrap();
        assert_ne!(a.empirical_distribution, c.empirical_distribution);
    }

    #[test]
    fn tv_estimate_examples() {
        let sys = system(1, 2, 1.0);
        let s = Schedule::constant(&sys, 0.8).unwrap();
        let run = run_annealed(&sys, &s, &SampleOptions::new(1.0, 1, 3)).unwrap();
        let est = estimate_tv(&run, &[0.25; 4]).unwrap();
        assert_relative_eq!(est.tv, 0.75);
        let freq = run.frequencies().unwrap();
        assert_eq!(estimate_tv(&run, &freq).unwrap().tv, 0.0);
        let bare = RunSummary { empirical_distribution: None, ..run };
        assert!(matches!(estimate_tv(&bare, &[0.25; 4]), Err(SqaError::State(_))));
    }

    #[test]
    fn ground_energy_of_ring() {
        assert_eq!(classical_ground_energy(&system(3, 2, 1.0)), Some(-3.0));
    }
}
