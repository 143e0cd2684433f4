//! Stochastic-solver invariants for the CC distance estimator: symmetry up
//! to solver slack, the approximate triangle inequality, and bracketing.

use ccgeo::metric::{cc_chord_lower, cc_distance, cc_distance_upper, CCSolverConfig};
use ccgeo::{Distribution, Domain, FinslerNorm};
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn cfg(seed: u64) -> CCSolverConfig {
    CCSolverConfig {
        segments: 10,
        restarts: 8,
        max_sweeps: 50,
        seed,
        ..CCSolverConfig::default()
    }
}

#[test]
fn heisenberg_upper_values_are_symmetric_within_solver_slack() {
    let d = Distribution::heisenberg();
    let norm = FinslerNorm::euclidean();
    let dom = Domain::symmetric(3, 0.8, 3).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(2101);
    let solver = cfg(2102);
    let mut worst = 0.0f64;
    for _ in 0..20 {
        let p = dom.sample_uniform(&mut rng);
        let q = dom.sample_uniform(&mut rng);
        if (&q - &p).norm() < 0.2 {
            continue;
        }
        let (fwd, _) = cc_distance_upper(&p, &q, &d, &norm, &solver).unwrap();
        let (bwd, _) = cc_distance_upper(&q, &p, &d, &norm, &solver).unwrap();
        let spread = (fwd - bwd).abs() / (0.5 * (fwd + bwd));
        worst = worst.max(spread);
        assert!(spread <= 0.02, "p={p:?} q={q:?}: {fwd} vs {bwd}");
    }
    println!("max symmetry spread {worst:.4}");
}

#[test]
fn heisenberg_upper_values_satisfy_approximate_triangle_inequality() {
    let d = Distribution::heisenberg();
    let norm = FinslerNorm::euclidean();
    let dom = Domain::symmetric(3, 0.7, 3).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(2201);
    let solver = cfg(2202);
    for _ in 0..6 {
        let p = dom.sample_uniform(&mut rng);
        let q = dom.sample_uniform(&mut rng);
        let r = dom.sample_uniform(&mut rng);
        let (pq, _) = cc_distance_upper(&p, &q, &d, &norm, &solver).unwrap();
        let (qr, _) = cc_distance_upper(&q, &r, &d, &norm, &solver).unwrap();
        let (pr, _) = cc_distance_upper(&p, &r, &d, &norm, &solver).unwrap();
        let slack = 3.0 * solver.endpoint_tolerance;
        assert!(
            pr <= pq + qr + slack,
            "triangle violated: {pr} > {pq} + {qr} + {slack}"
        );
    }
}

#[test]
fn euclidean_bracket_is_tight() {
    let d = Distribution::euclidean(3);
    let norm = FinslerNorm::euclidean();
    let dom = Domain::symmetric(3, 1.0, 3).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(2301);
    let solver = cfg(2302);
    for _ in 0..10 {
        let p = dom.sample_uniform(&mut rng);
        let q = dom.sample_uniform(&mut rng);
        if (&q - &p).norm() < 0.1 {
            continue;
        }
        let interval = cc_distance(&p, &q, &d, &norm, &solver).unwrap();
        assert!(interval.lower <= interval.upper);
        assert!(interval.upper / interval.lower <= 1.001);
    }
}

#[test]
fn chord_lower_bound_never_exceeds_upper_value() {
    let d = Distribution::heisenberg();
    let norm = FinslerNorm::euclidean();
    let dom = Domain::symmetric(3, 0.8, 3).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(2401);
    let solver = cfg(2402);
    for _ in 0..8 {
        let p = dom.sample_uniform(&mut rng);
        let q = dom.sample_uniform(&mut rng);
        let lower = cc_chord_lower(&p, &q, &norm);
        if lower < 0.05 {
            continue;
        }
        let (upper, _) = cc_distance_upper(&p, &q, &d, &norm, &solver).unwrap();
        assert!(lower <= upper + 1e-9, "lower {lower} > upper {upper}");
    }
}
