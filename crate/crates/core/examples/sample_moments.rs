//! Rules from Monte Carlo moments: the rule error saturates at the sampling
//! error of the moments.
//!
//! Run with `cargo run --release --example sample_moments`.

use quadgen::domains::{banana_measure, Measure};
use quadgen::error::Result;
use quadgen::indexset::total_degree_set;
use quadgen::moments::{build_problem, MomentSource, ProblemOptions};
use quadgen::reduce::{generate, GenerateOptions};
use quadgen::testmodels::{banana_mean, chem_integrand, ChemProblem};

fn main() -> Result<()> {
    let f = chem_integrand(ChemProblem::Two);
    let reference = banana_mean(&f, 60)?;
    let measure = Measure::Density(banana_measure());
    let set = total_degree_set(2, 6);

    println!("{:>10} {:>7} {:>10}", "samples", "points", "error");
    for source in [MomentSource::Samples(1_000), MomentSource::Samples(100_000), MomentSource::Exact] {
        let opts = ProblemOptions { source, seed: 5, ..Default::default() };
        let problem = build_problem(&set, &measure, &opts)?;
        let out = generate(&problem, &GenerateOptions::default())?;
        let err = (out.rule.integrate(|y| f.eval(y)) - reference).abs();
        let label = match source {
            MomentSource::Samples(p) => p.to_string(),
            MomentSource::Exact => "exact".into(),
        };
        println!("{label:>10} {:>7} {err:>10.2e}", out.rule.len());
    }
    Ok(())
}
