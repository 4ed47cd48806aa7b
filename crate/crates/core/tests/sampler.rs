use nalgebra::{DMatrix, DVector};

use sqa_core::evolve::*;
use sqa_core::generator::Generator;
use sqa_core::lattice::*;
use sqa_core::mcmc::*;
use sqa_core::schedule::*;

fn ring(n: usize, m: usize, beta: f64) -> TrotterSystem {
    TrotterSystem::new(CouplingGraph::ring(n, 1.0).unwrap(), m, beta, 0.0).unwrap()
}

/// The chain's law after `n` attempts is the ordered product of
/// `I + W(t_k) / (N M)` with `t_k = k / (N M)`.
fn discrete_law(gen: &Generator, s: &Schedule, attempts: usize) -> Vec<f64> {
    let nm = gen.n_spins() as f64;
    let mut p = DVector::from_column_slice(&uniform(gen.dim()));
    for k in 0..attempts {
        let w = gen.w(s.eval(k as f64 / nm).unwrap().gamma);
        p = (DMatrix::identity(gen.dim(), gen.dim()) + w / nm) * p;
    }
    p.as_slice().to_vec()
}

#[test]
fn annealed_chain_follows_its_discrete_law() {
    let sys = ring(1, 2, 1.0);
    let gen = Generator::new(&sys).unwrap();
    let s = Schedule::power_law(&sys, 1.0, 1.0).unwrap();
    for (horizon, attempts) in [(0.5, 1), (2.0, 4), (5.0, 10)] {
        let run = run_annealed(&sys, &s, &SampleOptions::new(horizon, 200_000, 11)).unwrap();
        let est = estimate_tv(&run, &discrete_law(&gen, &s, attempts)).unwrap();
        assert!(est.tv < 0.005, "horizon {horizon}: tv {}", est.tv);
    }
}

#[test]
fn discretization_gap_shrinks_with_horizon_resolution() {
    // at fixed physical time the one-attempt-per-1/(NM) chain differs from
    // the master equation by O(dt); more spins means smaller dt
    let sys = ring(1, 2, 1.0);
    let gen = Generator::new(&sys).unwrap();
    let s = Schedule::power_law(&sys, 1.0, 1.0).unwrap();
    let opts = EvolveOptions { times: Some(vec![0.0, 0.5, 4.0]), track_spectrum: false, ..Default::default() };
    let exact = integrate_master(&gen, &s, &uniform(4), 4.0, &opts).unwrap();
    let early = tv_distance(&discrete_law(&gen, &s, 1), &exact.states[1]).unwrap();
    let late = tv_distance(&discrete_law(&gen, &s, 8), &exact.states[2]).unwrap();
    assert!(early > 0.05 && late < early / 2.0, "early {early}, late {late}");
}

#[test]
fn bootstrap_error_scales_with_replicas() {
    let sys = ring(2, 2, 1.0);
    let s = Schedule::constant(&sys, 0.8).unwrap();
    let exact = boltzmann(&sys, s.eval(0.0).unwrap().gamma).unwrap();
    let se = |r: usize| {
        let run = run_annealed(&sys, &s, &SampleOptions::new(5.0, r, 3)).unwrap();
        estimate_tv(&run, &exact).unwrap().standard_error
    };
    let ratio = se(8_000) / se(32_000);
    assert!((ratio - 2.0).abs() <= 0.6, "ratio {ratio}");
}

#[test]
fn ground_hit_rate_rises_with_horizon() {
    let sys = ring(3, 2, 2.0);
    let gen = Generator::new(&sys).unwrap();
    let s = Schedule::power_law(&sys, 1.0, 1.0).unwrap();
    let horizons = [1e2, 1e3, 1e4];
    let runs = run_horizons(&sys, &s, &horizons, &SampleOptions::new(0.0, 2000, 5)).unwrap();
    let rates: Vec<f64> = runs.iter().map(|r| r.ground_hit_rate.unwrap()).collect();
    for w in rates.windows(2) {
        assert!(w[1] >= w[0] - 0.02, "{rates:?}");
    }

    // exact oracle: probability that the lowest-energy slice is a ground state
    let ground = classical_ground_energy(&sys).unwrap();
    let opts = EvolveOptions { times: Some([0.0].into_iter().chain(horizons).collect()), track_spectrum: false, ..Default::default() };
    let tr = integrate_master(&gen, &s, &uniform(gen.dim()), 1e4, &opts).unwrap();
    let exact: Vec<f64> = tr.states[1..]
        .iter()
        .map(|p| {
            p.iter()
                .enumerate()
                .filter(|&(idx, _)| {
                    let c = SpinConfiguration::from_index(idx, 3, 2);
                    let e = (0..2).map(|k| sys.graph().classical_energy(&c.slice(k)).unwrap()).fold(f64::INFINITY, f64::min);
                    (e - ground).abs() < 1e-9
                })
                .map(|(_, q)| q)
                .sum()
        })
        .collect();
    for w in exact.windows(2) {
        assert!(w[1] > w[0], "{exact:?}");
    }
    for (m, e) in rates.iter().zip(&exact) {
        assert!((m - e).abs() < 0.05, "sampled {rates:?} exact {exact:?}");
    }
}

#[test]
fn identical_seeds_give_identical_summaries() {
    let sys = ring(3, 3, 1.0);
    let s = Schedule::power_law(&sys, 1.0, 1.0).unwrap();
    let opts = SampleOptions { samples_per_replica: 3, ..SampleOptions::new(20.0, 64, 9) };
    let a = serde_json::to_string(&run_annealed(&sys, &s, &opts).unwrap()).unwrap();
    let b = serde_json::to_string(&run_annealed(&sys, &s, &opts).unwrap()).unwrap();
    assert_eq!(a, b);
    let c = serde_json::to_string(&run_annealed(&sys, &s, &SampleOptions { seed: 10, ..opts }).unwrap()).unwrap();
    assert_ne!(a, c);
}
