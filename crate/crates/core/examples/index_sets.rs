//! Multi-index sets, the half-set lower bound `L(Λ)` and the starting-size
//! heuristic.
//!
//! Run with `cargo run --example index_sets`.

use quadgen::error::Result;
use quadgen::indexset::{anova_set, ball_set, heuristic_size, maximal_half_set, total_degree_set, LpNorm};

fn main() -> Result<()> {
    println!("{:>4} {:>4} {:>8} {:>6} {:>10}", "d", "k", "N", "L", "heuristic");
    for (d, k) in [(2, 20), (3, 20), (4, 13), (5, 10), (10, 5)] {
        let set = total_degree_set(d, k);
        let half = maximal_half_set(&set)?;
        println!("{d:>4} {k:>4} {:>8} {:>6} {:>10}", set.len(), half.size, heuristic_size(&set, true));
    }

    let anova = anova_set(20, 2, 4)?;
    println!("\nANOVA order 2, degree 4, d = 20: N = {}", anova.len());

    let hyperbolic = ball_set(2, LpNorm::P(0.5), 4.0, None)?;
    let half = maximal_half_set(&hyperbolic)?;
    println!(
        "l_1/2 ball of radius 4 in 2-d: N = {}, L = {} (unique maximal half-set: {})",
        hyperbolic.len(),
        half.size,
        half.unique
    );
    for a in half.theta.iter() {
        print!("{:?} ", a.coords());
    }
    println!();
    Ok(())
}
