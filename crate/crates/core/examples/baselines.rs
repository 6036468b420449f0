//! Comparison rules on `[-1,1]^d`: Monte Carlo, Sobol, Clenshaw-Curtis sparse
//! grids and Stroud degree-2/3 rules.
//!
//! Run with `cargo run --example baselines`.

use quadgen::baselines::{l2_star_discrepancy, monte_carlo_rule, sobol_points, sobol_rule, sparse_grid, stroud};
use quadgen::domains::Measure;
use quadgen::error::Result;

fn main() -> Result<()> {
    let d = 4;
    // E[x_1^2 x_2^2] = 1/9 on the uniform cube
    let f = |x: &[f64]| x[0] * x[0] * x[1] * x[1];
    let exact = 1.0 / 9.0;

    let rules = [
        monte_carlo_rule(&Measure::uniform_cube(d), 256, 0)?,
        sobol_rule(d, 256)?,
        sparse_grid(d, 2)?,
        sparse_grid(d, 3)?,
        stroud(d, 2)?,
        stroud(d, 3)?,
    ];
    for r in &rules {
        let neg = r.weights.iter().filter(|w| **w < 0.0).count();
        println!(
            "{:<12} param {:>3}: {:>4} points, {neg:>3} negative weights, error {:.2e}",
            r.kind.name(),
            r.param,
            r.len(),
            (r.integrate(f) - exact).abs()
        );
    }

    for n in [16, 256, 4096] {
        let pts = sobol_points(d, n, 0, false)?;
        println!("sobol n = {n:>4}: L2-star discrepancy {:.3e}", l2_star_discrepancy(&pts));
    }
    Ok(())
}
