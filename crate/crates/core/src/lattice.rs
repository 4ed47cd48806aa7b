//! Spatial Ising couplings and the Suzuki-Trotter lattice built on top of them.
//!
//! A [`TrotterSystem`] holds `N` spatial sites replicated over `M` Trotter
//! slices. Slices form a periodic ring: slice `M` couples back to slice `1`.
//! Spins are addressed by `(site, slice)` and stored at flat index
//! `slice * N + site`.
//!
//! All energies returned here are dimensionless actions (already multiplied
//! by the inverse temperature), except [`CouplingGraph::classical_energy`]
//! which is in the units of the couplings.

use std::f64::consts::PI;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Result, SqaError};

/// Default cap on `N * M` for operations that enumerate all `2^(N*M)` states.
pub const DEFAULT_DENSE_CAP: usize = 14;

/// Hard limit for the dense cap; beyond this a state index no longer fits
/// comfortably in memory-backed tables.
pub const MAX_DENSE_CAP: usize = 24;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Edge {
    pub a: usize,
    pub b: usize,
    pub coupling: f64,
}

/// Pairwise couplings `J_{jj'}` of the classical Ising problem.
#[derive(Debug, Clone, PartialEq)]
pub struct CouplingGraph {
    n_sites: usize,
    edges: Vec<Edge>,
    adjacency: Vec<Vec<(usize, f64)>>,
}

impl CouplingGraph {
    /// Builds a graph from `(j, j', J)` triples with 0-based site indices.
    /// Pairs may be given in either order; they are stored with `a < b`.
    pub fn new(n_sites: usize, edges: impl IntoIterator<Item = (usize, usize, f64)>) -> Result<Self> {
        if n_sites == 0 {
            return Err(SqaError::input("a coupling graph needs at least one site"));
        }
        let mut stored: Vec<Edge> = Vec::new();
        let mut adjacency = vec![Vec::new(); n_sites];
        for (x, y, coupling) in edges {
            if x >= n_sites || y >= n_sites {
                return Err(SqaError::input(format!(
                    "edge ({x}, {y}) references a site outside 0..{n_sites}"
                )));
            }
            if x == y {
                return Err(SqaError::input(format!("self-edge on site {x}")));
            }
            if !coupling.is_finite() {
                return Err(SqaError::input(format!("coupling on ({x}, {y}) is not finite")));
            }
            let (a, b) = if x < y { (x, y) } else { (y, x) };
            if stored.iter().any(|e| e.a == a && e.b == b) {
                return Err(SqaError::input(format!("duplicate edge ({a}, {b})")));
            }
            stored.push(Edge { a, b, coupling });
            adjacency[a].push((b, coupling));
            adjacency[b].push((a, coupling));
        }
        Ok(Self { n_sites, edges: stored, adjacency })
    }

    /// Uniform ring `0-1-...-(n-1)-0`. Two sites give a single bond.
    pub fn ring(n_sites: usize, coupling: f64) -> Result<Self> {
        let edges: Vec<_> = match n_sites {
            0 | 1 => Vec::new(),
            2 => vec![(0, 1, coupling)],
            n => (0..n).map(|j| (j, (j + 1) % n, coupling)).collect(),
        };
        Self::new(n_sites, edges)
    }

    pub fn n_sites(&self) -> usize {
        self.n_sites
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn neighbors(&self, site: usize) -> &[(usize, f64)] {
        &self.adjacency[site]
    }

    pub fn max_degree(&self) -> usize {
        self.adjacency.iter().map(Vec::len).max().unwrap_or(0)
    }

    /// `max_j sum_{j'} |J_{jj'}|`.
    pub fn max_abs_field(&self) -> f64 {
        self.adjacency
            .iter()
            .map(|nb| nb.iter().map(|(_, c)| c.abs()).sum::<f64>())
            .fold(0.0, f64::max)
    }

    /// `-sum_<jj'> J_{jj'} s_j s_j'` for one slice of `±1` spins.
    pub fn classical_energy(&self, slice: &[i8]) -> Result<f64> {
        if slice.len() != self.n_sites {
            return Err(SqaError::input(format!(
                "slice has {} spins, graph has {} sites",
                slice.len(),
                self.n_sites
            )));
        }
        Ok(-self
            .edges
            .iter()
            .map(|e| e.coupling * f64::from(slice[e.a]) * f64::from(slice[e.b]))
            .sum::<f64>())
    }
}

/// The Trotterized classical model: graph, slice count, inverse temperature
/// and ohmic bath strength.
#[derive(Debug, Clone)]
pub struct TrotterSystem {
    graph: CouplingGraph,
    trotter_slices: usize,
    beta: f64,
    alpha: f64,
    dense_cap: Option<usize>,
    // bath_kernel[d] = (alpha/2) (pi/M)^2 / sin^2(pi d / M), d = 1..M-1; index 0 unused.
    bath_kernel: Vec<f64>,
}

impl TrotterSystem {
    /// Builds a system with the default dense cap of 14 spins.
    pub fn new(graph: CouplingGraph, trotter_slices: usize, beta: f64, alpha: f64) -> Result<Self> {
        Self::with_dense_cap(graph, trotter_slices, beta, alpha, DEFAULT_DENSE_CAP)
    }

    /// Builds a system and rejects it when `N * M` exceeds `cap`.
    pub fn with_dense_cap(
        graph: CouplingGraph,
        trotter_slices: usize,
        beta: f64,
        alpha: f64,
        cap: usize,
    ) -> Result<Self> {
        if cap > MAX_DENSE_CAP {
            return Err(SqaError::input(format!("dense cap {cap} exceeds the hard limit {MAX_DENSE_CAP}")));
        }
        let sys = Self::build(graph, trotter_slices, beta, alpha, Some(cap))?;
        let spins = sys.n_spins();
        if spins > cap {
            return Err(SqaError::ResourceCap { spins, cap });
        }
        Ok(sys)
    }

    /// Builds a system for stochastic sampling only. Exact (dense) operations
    /// on it fail with [`SqaError::ResourceCap`].
    pub fn sampling_only(graph: CouplingGraph, trotter_slices: usize, beta: f64, alpha: f64) -> Result<Self> {
        Self::build(graph, trotter_slices, beta, alpha, None)
    }

    fn build(
        graph: CouplingGraph,
        trotter_slices: usize,
        beta: f64,
        alpha: f64,
        dense_cap: Option<usize>,
    ) -> Result<Self> {
        if trotter_slices < 2 {
            return Err(SqaError::input("at least two Trotter slices are required"));
        }
        if !(beta.is_finite() && beta > 0.0) {
            return Err(SqaError::input(format!("inverse temperature must be positive, got {beta}")));
        }
        if !(alpha.is_finite() && alpha >= 0.0) {
            return Err(SqaError::input(format!("bath strength must be non-negative, got {alpha}")));
        }
        let m = trotter_slices;
        let mut bath_kernel = vec![0.0; m];
        for (d, slot) in bath_kernel.iter_mut().enumerate().skip(1) {
            *slot = bath_magnitude(d, m, alpha);
        }
        Ok(Self { graph, trotter_slices, beta, alpha, dense_cap, bath_kernel })
    }

    pub fn graph(&self) -> &CouplingGraph {
        &self.graph
    }

    pub fn n_sites(&self) -> usize {
        self.graph.n_sites
    }

    pub fn trotter_slices(&self) -> usize {
        self.trotter_slices
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn is_open(&self) -> bool {
        self.alpha > 0.0
    }

    pub fn n_spins(&self) -> usize {
        self.graph.n_sites * self.trotter_slices
    }

    pub fn dense_cap(&self) -> Option<usize> {
        self.dense_cap
    }

    /// Fails unless all `2^(N*M)` states may be enumerated.
    pub fn require_dense(&self) -> Result<()> {
        match self.dense_cap {
            Some(cap) if self.n_spins() <= cap => Ok(()),
            Some(cap) => Err(SqaError::ResourceCap { spins: self.n_spins(), cap }),
            None => Err(SqaError::ResourceCap { spins: self.n_spins(), cap: 0 }),
        }
    }

    /// Number of dense states `2^(N*M)`.
    pub fn dim(&self) -> usize {
        1usize << self.n_spins()
    }

    #[inline]
    pub fn flat_index(&self, site: usize, slice: usize) -> usize {
        slice * self.graph.n_sites + site
    }

    /// Coordination number of a lattice site: spatial degree, the two
    /// Trotter neighbours and, with a bath, the `M - 1` bath partners.
    pub fn coordination_number(&self) -> usize {
        let bath = if self.is_open() { self.trotter_slices - 1 } else { 0 };
        self.graph.max_degree() + 2 + bath
    }

    /// Dimensionless Trotterized action `beta H_0` at Trotter coupling `gamma`.
    pub fn trotter_action(&self, config: &SpinConfiguration, gamma: f64) -> Result<f64> {
        self.check_config(config)?;
        let (static_part, bonds) = self.action_parts(config);
        Ok(static_part - gamma * bonds)
    }

    /// Splits the action into its gamma-independent part and the periodic
    /// Trotter bond sum `sum_{j,k} s_j^k s_j^{k+1}`, so that
    /// `beta H_0 = static - gamma * bonds`.
    pub(crate) fn action_parts(&self, config: &SpinConfiguration) -> (f64, f64) {
        let n = self.graph.n_sites;
        let m = self.trotter_slices;
        let scale = self.beta / m as f64;
        let mut spatial = 0.0;
        let mut bonds = 0.0;
        let mut bath = 0.0;
        for k in 0..m {
            for e in &self.graph.edges {
                spatial += e.coupling * f64::from(config.get(e.a, k) * config.get(e.b, k));
            }
            let next = (k + 1) % m;
            for j in 0..n {
                bonds += f64::from(config.get(j, k) * config.get(j, next));
            }
        }
        if self.is_open() {
            for j in 0..n {
                for k in 1..m {
                    for kp in 0..k {
                        bath += self.bath_kernel[k - kp] * f64::from(config.get(j, k) * config.get(j, kp));
                    }
                }
            }
        }
        (-scale * spatial - bath, bonds)
    }

    /// Returns `beta H_{j,k}`: flipping spin `(site, slice)` changes the
    /// action by `-2 beta H_{j,k}`.
    pub fn local_field(&self, config: &SpinConfiguration, site: usize, slice: usize, gamma: f64) -> Result<f64> {
        self.check_config(config)?;
        if site >= self.n_sites() || slice >= self.trotter_slices {
            return Err(SqaError::input(format!(
                "spin ({site}, {slice}) outside {} sites x {} slices",
                self.n_sites(),
                self.trotter_slices
            )));
        }
        let (fixed, trotter) = self.local_terms(config, site, slice);
        Ok(-(fixed + gamma * trotter))
    }

    /// The two pieces of `-beta H_{j,k}`: the gamma-independent part
    /// (spatial couplings and bath) and the Trotter factor
    /// `s_j^k (s_j^{k+1} + s_j^{k-1})`.
    #[inline]
    pub(crate) fn local_terms(&self, config: &SpinConfiguration, site: usize, slice: usize) -> (f64, f64) {
        let m = self.trotter_slices;
        let s = config.get(site, slice);
        let mut spatial = 0.0;
        for &(nb, c) in &self.graph.adjacency[site] {
            spatial += c * f64::from(config.get(nb, slice));
        }
        let mut fixed = self.beta / m as f64 * spatial;
        if self.is_open() {
            let mut bath = 0.0;
            for kp in 0..m {
                if kp != slice {
                    bath += self.bath_kernel[slice.abs_diff(kp)] * f64::from(config.get(site, kp));
                }
            }
            fixed += bath;
        }
        let up = config.get(site, (slice + 1) % m);
        let down = config.get(site, (slice + m - 1) % m);
        (f64::from(s) * fixed, f64::from(s * (up + down)))
    }

    /// Upper bound `p(M)` on the gamma-independent part of `|beta H_{j,k}| / beta`.
    pub fn p_of_m(&self) -> PofM {
        let analytic = self.p_of_m_analytic();
        let column = if self.is_open() { self.trotter_slices - 1 } else { 0 };
        let local_bits = self.graph.max_degree() + column;
        let dense_ok = self.dense_cap.is_some_and(|cap| self.n_spins() <= cap);
        if !dense_ok || local_bits > 24 {
            return PofM { value: analytic, method: PofMMethod::AnalyticBound };
        }
        PofM { value: self.p_of_m_enumerated(), method: PofMMethod::Enumerated }
    }

    fn p_of_m_analytic(&self) -> f64 {
        let m = self.trotter_slices;
        let bath: f64 = (1..m).map(|d| self.bath_kernel[d]).sum();
        self.graph.max_abs_field() / m as f64 + bath / self.beta
    }

    /// Enumerates neighbour spins and, for open systems, the rest of the
    /// site's Trotter column. The centre spin is fixed to +1 since the
    /// expression is odd under a global flip.
    fn p_of_m_enumerated(&self) -> f64 {
        let m = self.trotter_slices;
        let inv_m = 1.0 / m as f64;
        let mut best: f64 = 0.0;
        for j in 0..self.n_sites() {
            let nbs = &self.graph.adjacency[j];
            let column_len = if self.is_open() { m - 1 } else { 0 };
            for k in 0..m {
                let bits = nbs.len() + column_len;
                for mask in 0u64..(1u64 << bits) {
                    let sign = |b: usize| if mask >> b & 1 == 1 { 1.0 } else { -1.0 };
                    let spatial: f64 = nbs.iter().enumerate().map(|(b, (_, c))| c * sign(b)).sum();
                    let mut bath = 0.0;
                    let mut b = nbs.len();
                    for kp in 0..m {
                        if kp == k || !self.is_open() {
                            continue;
                        }
                        bath += self.bath_kernel[k.abs_diff(kp)] * sign(b);
                        b += 1;
                    }
                    let value = (inv_m * spatial + bath / self.beta).abs();
                    best = best.max(value);
                }
            }
        }
        best
    }

    fn check_config(&self, config: &SpinConfiguration) -> Result<()> {
        if config.n_sites != self.n_sites() || config.n_slices != self.trotter_slices {
            return Err(SqaError::input(format!(
                "configuration is {}x{}, system is {}x{}",
                config.n_sites,
                config.n_slices,
                self.n_sites(),
                self.trotter_slices
            )));
        }
        Ok(())
    }
}

/// `(alpha/2)(pi/M)^2 sin^{-2}(pi d / M)`.
fn bath_magnitude(d: usize, m: usize, alpha: f64) -> f64 {
    if alpha == 0.0 {
        return 0.0;
    }
    let ratio = PI / m as f64;
    let s = (ratio * d as f64).sin();
    0.5 * alpha * ratio * ratio / (s * s)
}

/// Coefficient multiplying `s_j^k s_j^{k'}` in the action from the ohmic
/// bath: `-(alpha/2)(pi/M)^2 sin^{-2}(pi |k-k'| / M)`. Slices are 0-based.
pub fn bath_coupling(k: usize, kp: usize, m: usize, alpha: f64) -> Result<f64> {
    if k == kp {
        return Err(SqaError::input("bath kernel diverges for k == k'"));
    }
    if k >= m || kp >= m {
        return Err(SqaError::input(format!("slices ({k}, {kp}) outside 0..{m}")));
    }
    Ok(-bath_magnitude(k.abs_diff(kp), m, alpha))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PofMMethod {
    Enumerated,
    AnalyticBound,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PofM {
    pub value: f64,
    pub method: PofMMethod,
}

/// `N * M` spins of value ±1, bit-packed; a set bit is spin up.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct SpinConfiguration {
    n_sites: usize,
    n_slices: usize,
    words: Vec<u64>,
}

impl SpinConfiguration {
    pub fn all_up(n_sites: usize, n_slices: usize) -> Self {
        let n = n_sites * n_slices;
        let mut words = vec![u64::MAX; n.div_ceil(64)];
        if !n.is_multiple_of(64) {
            if let Some(last) = words.last_mut() {
                *last = (1u64 << (n % 64)) - 1;
            }
        }
        Self { n_sites, n_slices, words }
    }

    pub fn all_down(n_sites: usize, n_slices: usize) -> Self {
        let n = n_sites * n_slices;
        Self { n_sites, n_slices, words: vec![0; n.div_ceil(64)] }
    }

    /// Configuration whose bit pattern is `index` (bit `k*N + j` is spin `(j, k)`).
    pub fn from_index(index: usize, n_sites: usize, n_slices: usize) -> Self {
        let mut c = Self::all_down(n_sites, n_slices);
        if !c.words.is_empty() {
            c.words[0] = index as u64;
        }
        c
    }

    /// Builds from `±1` values laid out slice-major.
    pub fn from_spins(spins: &[i8], n_sites: usize, n_slices: usize) -> Result<Self> {
        if spins.len() != n_sites * n_slices {
            return Err(SqaError::input(format!(
                "{} spins given for a {n_sites}x{n_slices} lattice",
                spins.len()
            )));
        }
        let mut c = Self::all_down(n_sites, n_slices);
        for (i, &s) in spins.iter().enumerate() {
            match s {
                1 => c.words[i / 64] |= 1 << (i % 64),
                -1 => {}
                other => return Err(SqaError::input(format!("spin value {other} is not ±1"))),
            }
        }
        Ok(c)
    }

    /// Dense state index; only meaningful for fewer than 64 spins.
    pub fn to_index(&self) -> usize {
        self.words.first().copied().unwrap_or(0) as usize
    }

    pub fn n_sites(&self) -> usize {
        self.n_sites
    }

    pub fn n_slices(&self) -> usize {
        self.n_slices
    }

    #[inline]
    pub fn get(&self, site: usize, slice: usize) -> i8 {
        let i = slice * self.n_sites + site;
        if self.words[i / 64] >> (i % 64) & 1 == 1 {
            1
        } else {
            -1
        }
    }

    #[inline]
    pub fn flip(&mut self, site: usize, slice: usize) {
        let i = slice * self.n_sites + site;
        self.words[i / 64] ^= 1 << (i % 64);
    }

    pub fn slice(&self, slice: usize) -> Vec<i8> {
        (0..self.n_sites).map(|j| self.get(j, slice)).collect()
    }
}

/// Precomputed per-state data for exact operations on `2^(N*M)` states.
///
/// For state `s` and spin `i`, `-beta H_{j,k} = fixed_field + gamma * trotter_field`;
/// the action is `static_action - gamma * trotter_bonds`.
#[derive(Debug, Clone)]
pub struct StateTable {
    n_spins: usize,
    static_action: Vec<f64>,
    trotter_bonds: Vec<f64>,
    fixed_field: Vec<f64>,
    trotter_field: Vec<i8>,
}

impl StateTable {
    pub fn new(sys: &TrotterSystem) -> Result<Self> {
        sys.require_dense()?;
        let n = sys.n_sites();
        let m = sys.trotter_slices();
        let n_spins = sys.n_spins();
        let dim = sys.dim();
        let mut static_action = Vec::with_capacity(dim);
        let mut trotter_bonds = Vec::with_capacity(dim);
        let mut fixed_field = Vec::with_capacity(dim * n_spins);
        let mut trotter_field = Vec::with_capacity(dim * n_spins);
        for index in 0..dim {
            let config = SpinConfiguration::from_index(index, n, m);
            let (s, b) = sys.action_parts(&config);
            static_action.push(s);
            trotter_bonds.push(b);
            for k in 0..m {
                for j in 0..n {
                    let (fixed, trotter) = sys.local_terms(&config, j, k);
                    fixed_field.push(fixed);
                    trotter_field.push(trotter as i8);
                }
            }
        }
        Ok(Self { n_spins, static_action, trotter_bonds, fixed_field, trotter_field })
    }

    pub fn n_spins(&self) -> usize {
        self.n_spins
    }

    pub fn dim(&self) -> usize {
        self.static_action.len()
    }

    /// `beta H_0(s)` at Trotter coupling `gamma`.
    #[inline]
    pub fn action(&self, state: usize, gamma: f64) -> f64 {
        self.static_action[state] - gamma * self.trotter_bonds[state]
    }

    /// `sum_{j,k} s_j^k s_j^{k+1}` for `state`.
    #[inline]
    pub fn trotter_bonds(&self, state: usize) -> f64 {
        self.trotter_bonds[state]
    }

    /// `beta H_{j,k}` for flipping spin `spin` (flat index) out of `state`.
    #[inline]
    pub fn local_field(&self, state: usize, spin: usize, gamma: f64) -> f64 {
        let i = state * self.n_spins + spin;
        -(self.fixed_field[i] + gamma * f64::from(self.trotter_field[i]))
    }

    /// `s_j^k (s_j^{k+1} + s_j^{k-1})` for `spin` in `state`.
    #[inline]
    pub fn trotter_factor(&self, state: usize, spin: usize) -> f64 {
        f64::from(self.trotter_field[state * self.n_spins + spin])
    }

    pub fn actions(&self, gamma: f64) -> Vec<f64> {
        (0..self.dim()).map(|s| self.action(s, gamma)).collect()
    }
}

/// On-disk problem description. Site indices are 1-based.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProblemFile {
    pub n_sites: usize,
    pub edges: Vec<(usize, usize, f64)>,
    pub trotter_slices: usize,
    pub beta: f64,
    #[serde(default)]
    pub alpha: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dense_cap: Option<usize>,
}

impl ProblemFile {
    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn graph(&self) -> Result<CouplingGraph> {
        let mut edges = Vec::with_capacity(self.edges.len());
        for &(a, b, c) in &self.edges {
            if a == 0 || b == 0 {
                return Err(SqaError::input("problem file site indices are 1-based"));
            }
            edges.push((a - 1, b - 1, c));
        }
        CouplingGraph::new(self.n_sites, edges)
    }

    /// Builds a dense-capable system, enforcing the cap.
    pub fn system(&self) -> Result<TrotterSystem> {
        let cap = self.dense_cap.unwrap_or(DEFAULT_DENSE_CAP);
        TrotterSystem::with_dense_cap(self.graph()?, self.trotter_slices, self.beta, self.alpha, cap)
    }

    /// Builds a system for sampling; dense operations stay available only
    /// when `N * M` is within the cap.
    pub fn sampling_system(&self) -> Result<TrotterSystem> {
        match self.system() {
            Err(SqaError::ResourceCap { .. }) => {
                TrotterSystem::sampling_only(self.graph()?, self.trotter_slices, self.beta, self.alpha)
            }
            other => other,
        }
    }

    pub fn from_system(sys: &TrotterSystem) -> Self {
        Self {
            n_sites: sys.n_sites(),
            edges: sys.graph().edges().iter().map(|e| (e.a + 1, e.b + 1, e.coupling)).collect(),
            trotter_slices: sys.trotter_slices(),
            beta: sys.beta(),
            alpha: sys.alpha(),
            dense_cap: sys.dense_cap(),
        }
    }
}
