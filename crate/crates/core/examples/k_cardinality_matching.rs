//! The matching primitive on its own: min-cost flow against exhaustive search.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use strata_balance::matching::{brute_force_match, solve_one_to_one, solve_relaxed, MatchingProblem};

fn main() -> strata_balance::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut row = |k| (0..k).map(|_| rng.random_range(-2.0..2.0)).collect::<Vec<f64>>();
    let a: Vec<_> = (0..4).map(|_| row(2)).collect();
    let b: Vec<_> = (0..6).map(|_| row(2)).collect();

    for alpha in [2, 4, 9] {
        let p = MatchingProblem::from_rows(a.clone(), b.clone(), alpha)?;
        let flow = solve_one_to_one(&p);
        let brute = brute_force_match(&p)?;
        println!(
            "alpha {alpha}: {} pairs, flow {:.6}, brute force {:.6}",
            flow.cardinality, flow.objective, brute.objective
        );
        for pair in &flow.pairs {
            println!("    {} - {}  {:.3}", pair.a_id, pair.b_id, pair.distance);
        }
    }

    // Relaxed mode lets B patients be reused, so each A takes its nearest B.
    let p = MatchingProblem::from_rows(a, b, 4)?;
    let relaxed = solve_relaxed(&p);
    println!("relaxed: objective {:.6}, reuse {:?}", relaxed.objective, relaxed.b_multiplicity);
    Ok(())
}
