//! Quasi-optimal rules on a line through the origin for the ANOVA-order-1
//! set, with and without sign flips.
//!
//! Run with `cargo run --example diagonal_rules`.

use quadgen::error::Result;
use quadgen::indexset::anova_set;
use quadgen::moments::MomentProblem;
use quadgen::orthopoly::Measure1d;
use quadgen::reduce::{diagonal_gauss_rule, quasi_optimality_report, verify};

fn main() -> Result<()> {
    let d = 5;
    let n = 6;
    let factors = vec![Measure1d::parabolic(); d];
    let set = anova_set(d, 1, n)?;
    let problem = MomentProblem::tensor(&set, &factors)?;
    for signs in [None, Some(vec![1i8, -1, 1, -1, -1])] {
        let rule = diagonal_gauss_rule(&factors, n, signs.as_deref())?;
        let v = verify(&rule, &problem)?;
        let q = quasi_optimality_report(&rule, &set, &problem.basis)?;
        println!("signs {signs:?}: {} nodes for {} moments", rule.len(), set.len());
        println!(
            "  residual {:.1e}, M = L: {}, max |w - λ_Θ(x)| over {} half-sets: {:.1e}",
            v.residual_l2,
            q.is_quasi_optimal,
            q.half_sets_checked,
            q.weight_check.unwrap_or(f64::NAN)
        );
        for (x, w) in rule.nodes.iter().zip(&rule.weights) {
            println!("  {:>9.5?} {w:.6}", x);
        }
    }
    Ok(())
}
