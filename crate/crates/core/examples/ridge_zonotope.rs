//! A rule on the zonotope `{A y : y ∈ [-1,1]^6}` for a ridge function
//! `f(y) = g(A y)`, compared with plain Monte Carlo in six dimensions.
//!
//! Run with `cargo run --release --example ridge_zonotope`.

use quadgen::baselines::monte_carlo;
use quadgen::domains::{random_orthonormal_rows, Measure, RidgeMeasure};
use quadgen::error::Result;
use quadgen::indexset::total_degree_set;
use quadgen::moments::{build_problem, ProblemOptions};
use quadgen::reduce::{generate, GenerateOptions};
use quadgen::testmodels::{ridge_back_map, ridge_integrand, chem_on_zonotope};

fn main() -> Result<()> {
    let a = random_orthonormal_rows(2, 6, 3);
    let ridge = RidgeMeasure::uniform(&a, 3)?;
    println!("zonotope with {} vertices:", ridge.zonotope.vertices.len());
    for v in &ridge.zonotope.vertices {
        println!("  ({:>8.4}, {:>8.4})", v[0], v[1]);
    }

    let g = chem_on_zonotope(&a)?;
    let f = ridge_integrand(&g, &a)?;
    let cube = Measure::uniform_cube(6);
    let reference = monte_carlo(&cube, |y| f.eval(y), 100_000, 1)?;
    println!("reference (1e5 MC samples in 6-d): {reference:.6}");

    let measure = Measure::Ridge(ridge);
    for degree in [2, 4, 6] {
        let problem = build_problem(&total_degree_set(2, degree), &measure, &ProblemOptions::default())?;
        let out = generate(&problem, &GenerateOptions::default())?;
        // evaluate through y = Aᵀ x
        let q = out.rule.integrate(|x| f.eval(&ridge_back_map(&a, x).unwrap()));
        let direct = out.rule.integrate(|x| g.eval(x));
        println!(
            "degree {degree}: {:>2} points, g(x) {:.6}, f(Aᵀx) {:.6}, vs reference {:.1e}",
            out.rule.len(),
            direct,
            q,
            (direct - reference).abs()
        );
    }
    let mc = monte_carlo(&cube, |y| f.eval(y), 28, 2)?;
    println!("28-point MC: error {:.1e}", (mc - reference).abs());
    Ok(())
}
