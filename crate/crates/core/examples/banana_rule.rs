//! A reduced rule for the banana-shaped density, used to integrate the
//! surface-reaction model over parameter box II.
//!
//! Run with `cargo run --release --example banana_rule`.

use quadgen::domains::{banana_measure, Measure};
use quadgen::error::Result;
use quadgen::indexset::total_degree_set;
use quadgen::moments::{build_problem, ProblemOptions};
use quadgen::reduce::{generate, GenerateOptions};
use quadgen::testmodels::{banana_mean, chem_integrand, ChemProblem};

fn main() -> Result<()> {
    let f = chem_integrand(ChemProblem::Two);
    let reference = banana_mean(&f, 60)?;
    println!("reference (60 x 60 Gauss-Legendre): {reference:.12}");

    let measure = Measure::Density(banana_measure());
    for degree in [2, 4, 6, 8] {
        let set = total_degree_set(2, degree);
        let problem = build_problem(&set, &measure, &ProblemOptions::default())?;
        let out = generate(&problem, &GenerateOptions::default())?;
        let q = out.rule.integrate(|y| f.eval(y));
        println!(
            "degree {degree:>2}: {:>2} points (N = {:>2}), error {:.2e}",
            out.rule.len(),
            set.len(),
            (q - reference).abs()
        );
    }
    Ok(())
}
