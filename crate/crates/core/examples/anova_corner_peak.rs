//! Low-order ANOVA rule for the modified corner peak in ten dimensions,
//! against Sobol points and the Smolyak sparse grid.
//!
//! Run with `cargo run --release --example anova_corner_peak`.

use quadgen::baselines::{sobol_rule, sparse_grid};
use quadgen::error::Result;
use quadgen::indexset::anova_set;
use quadgen::moments::MomentProblem;
use quadgen::reduce::{generate, GenerateOptions};
use quadgen::testmodels::{modified_corner_peak, random_coefficients, COEFFICIENT_SEED};

fn main() -> Result<()> {
    let d = 10;
    let f = modified_corner_peak(&random_coefficients(d, COEFFICIENT_SEED))?;
    let exact = f.reference_mean().expect("closed-form mean");

    let set = anova_set(d, 2, 3)?;
    let problem = MomentProblem::uniform_box(&set, &vec![(0.0, 1.0); d])?;
    let out = generate(&problem, &GenerateOptions::default())?;
    let q = out.rule.integrate(|x| f.eval(x));
    println!("reduced, N = {}: {:>5} points, error {:.2e}", set.len(), out.rule.len(), (q - exact).abs());

    // baselines live on [-1,1]^d
    let to_unit = |x: &[f64]| x.iter().map(|t| 0.5 * (t + 1.0)).collect::<Vec<_>>();
    for n in [64, 1024] {
        let r = sobol_rule(d, n)?;
        println!("sobol:           {:>5} points, error {:.2e}", r.len(), (r.integrate(|x| f.eval(&to_unit(x))) - exact).abs());
    }
    for level in [1, 2] {
        let r = sparse_grid(d, level)?;
        println!("sparse grid l={level}:  {:>5} points, error {:.2e}", r.len(), (r.integrate(|x| f.eval(&to_unit(x))) - exact).abs());
    }
    Ok(())
}
