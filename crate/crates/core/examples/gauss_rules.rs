//! Univariate Gauss and Gauss-Radau rules from three-term recurrences.
//!
//! Run with `cargo run --example gauss_rules`.

use quadgen::error::Result;
use quadgen::orthopoly::{gauss_rule, radau_constant, radau_family_rule, Measure1d};

fn show(label: &str, nodes: &[f64], weights: &[f64]) {
    println!("{label}");
    for (x, w) in nodes.iter().zip(weights) {
        println!("  {x:>22.16}  {w:>20.16}");
    }
}

fn main() -> Result<()> {
    let families = [
        ("Gauss-Legendre", Measure1d::uniform()),
        ("Gauss-Jacobi (1,1), weight 3/4 (1 - t^2)", Measure1d::parabolic()),
        ("Gauss-Hermite, standard normal", Measure1d::Gaussian { mean: 0.0, std: 1.0 }),
    ];
    for (label, m) in families {
        let rec = m.recurrence(6)?;
        let rule = gauss_rule(&rec, 5)?;
        show(label, &rule.nodes, &rule.weights);
        // degree 9 exactness: E[t^8]
        println!("  E[t^8] = {:.15}", rule.integrate(|t| t.powi(8)));
    }

    let rec = Measure1d::uniform().recurrence(6)?;
    let c = radau_constant(&rec, 4, -1.0)?;
    let radau = radau_family_rule(&rec, 4, c)?;
    show("Gauss-Radau, node fixed at -1", &radau.nodes, &radau.weights);
    Ok(())
}
