mod common;

use common::{exact_simplex, random_instance, vertex_enumeration};
use mot_core::lp::Sense;
use mot_core::measures::binomial_marginal;
use mot_core::mot::{solve_mot, MotProblem, Payoff};
use num_traits::ToPrimitive;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[test]
fn exact_solvers_agree() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut compared = 0;
    for _ in 0..60 {
        let dates = rng.gen_range(1..=3);
        let inst = random_instance(&mut rng, dates);
        let Some(enumerated) = vertex_enumeration(&inst, 20_000) else { continue };
        assert_eq!(Some(enumerated), exact_simplex(&inst), "{inst:?}");
        compared += 1;
    }
    assert!(compared >= 30, "only {compared} instances were small enough");
}

#[test]
fn lp_matches_exact_optimum() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    for _ in 0..60 {
        let dates = rng.gen_range(1..=3);
        let inst = random_instance(&mut rng, dates);
        let exact = exact_simplex(&inst).expect("martingale coupling exists").to_f64().unwrap();
        let got = solve_mot(&inst.problem()).unwrap().objective;
        assert!((got - exact).abs() <= 1e-9, "{got} vs {exact}: {inst:?}");
    }
}

#[test]
fn binomial_value_matches_path_enumeration() {
    // x₆ − x₁ is the sum of five ±1 steps.
    let total: i64 = (0..32u32).map(|bits| (2 * bits.count_ones() as i64 - 5).max(0)).sum();
    let exact = total as f64 / 32.0;
    let ms = (1..=6).map(|k| binomial_marginal(100.0, k)).collect();
    let p = MotProblem::new(ms, Payoff::from_spec("forward-call", 6).unwrap(), Sense::Min).unwrap();
    for sense in [Sense::Min, Sense::Max] {
        let v = solve_mot(&p.with_sense(sense)).unwrap().objective;
        assert!((v - exact).abs() <= 1e-7, "{sense:?}: {v} vs {exact}");
    }
}
