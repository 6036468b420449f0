//! Reduced quadrature for the uniform measure on `[-1,1]^2`, exact for total
//! degree 10, and a comparison with the l1 starting rule.
//!
//! Run with `cargo run --release --example total_degree_rule`.

use quadgen::error::Result;
use quadgen::indexset::{maximal_half_set, total_degree_set};
use quadgen::moments::MomentProblem;
use quadgen::orthopoly::Measure1d;
use quadgen::reduce::{generate, verify, GenerateOptions};

fn main() -> Result<()> {
    let set = total_degree_set(2, 10);
    let problem = MomentProblem::tensor(&set, &[Measure1d::uniform(), Measure1d::uniform()])?;
    let out = generate(&problem, &GenerateOptions { seed: 7, ..Default::default() })?;
    let report = verify(&out.rule, &problem)?;
    println!("N = {}, L(Λ) = {}", set.len(), maximal_half_set(&set)?.size);
    println!("l1 stage: {} points, residual {:.2e}", out.initial.len(), out.initial.residual_l2);
    for a in &out.attempts {
        println!("  M = {:>3}: objective {:.2e} after {} iterations ({:?})", a.m, a.objective, a.iterations, a.exit);
    }
    println!(
        "final: {} points, residual {:.2e}, smallest weight {:.3e}",
        out.rule.len(),
        report.residual_l2,
        report.min_weight
    );
    let f = |x: &[f64]| (x[0] + 0.5 * x[1]).cos();
    let exact = 1.0f64.sin() * 0.5f64.sin() / 0.5;
    println!("E[cos(x + y/2)]: rule {:.15}, exact {:.15}", out.rule.integrate(f), exact);
    Ok(())
}
