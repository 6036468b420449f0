//! Test integrands with reference means: the corner peak, a modified corner
//! peak with only pairwise interactions, a surface-reaction model and ridge
//! wrappers.

use std::fmt;
use std::sync::Arc;

use rand::Rng;
use serde::Serialize;

use crate::domains::{
    affine_map_box, banana_domain, banana_measure, problem_one_domain, problem_two_domain, rng_from_seed,
    zonotope_build, AffineMap, BoxDomain,
};
use crate::error::{Error, Result};
use crate::orthopoly::{gauss_legendre, gauss_rule, tensor_rule, Recurrence, ScalarFn};

/// Seed used for the random coefficient vectors of the named integrands.
pub const COEFFICIENT_SEED: u64 = 20_170_605;

/// Reference value of an integrand's mean with a note on how it was obtained.
#[derive(Debug, Clone, Serialize)]
pub struct Reference {
    pub value: f64,
    pub source: String,
}

/// A function on a box with an optional reference mean under the uniform
/// probability measure on that box, unless the description says otherwise.
#[derive(Clone)]
pub struct Integrand {
    pub name: String,
    pub description: String,
    pub domain: BoxDomain,
    f: ScalarFn,
    pub reference: Option<Reference>,
}

impl fmt::Debug for Integrand {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Integrand")
            .field("name", &self.name)
            .field("description", &self.description)
            .field("domain", &self.domain)
            .field("reference", &self.reference)
            .finish()
    }
}

impl Integrand {
    pub fn new(name: impl Into<String>, description: impl Into<String>, domain: BoxDomain, f: ScalarFn) -> Self {
        Integrand { name: name.into(), description: description.into(), domain, f, reference: None }
    }

    pub fn with_reference(mut self, value: f64, source: impl Into<String>) -> Self {
        self.reference = Some(Reference { value, source: source.into() });
        self
    }

    pub fn dim(&self) -> usize {
        self.domain.dim()
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        (self.f)(x)
    }

    pub fn function(&self) -> ScalarFn {
        self.f.clone()
    }

    pub fn reference_mean(&self) -> Option<f64> {
        self.reference.as_ref().map(|r| r.value)
    }

    /// The same function evaluated at points of `source`, mapped affinely
    /// onto this integrand's box.
    pub fn on_box(&self, source: &BoxDomain) -> Result<Integrand> {
        let map = affine_map_box(source, &self.domain)?;
        let f = self.f.clone();
        let mut out = Integrand::new(
            self.name.clone(),
            format!("{} (mapped from {:?}..{:?})", self.description, source.lower, source.upper),
            source.clone(),
            Arc::new(move |x: &[f64]| f(&map.apply(x))),
        );
        out.reference = self.reference.clone();
        Ok(out)
    }
}

/// `d` numbers drawn uniformly from `[0,1]` and scaled to sum to one.
pub fn random_coefficients(d: usize, seed: u64) -> Vec<f64> {
    let mut rng = rng_from_seed(seed);
    let c: Vec<f64> = (0..d).map(|_| rng.random::<f64>()).collect();
    let s: f64 = c.iter().sum();
    c.into_iter().map(|v| v / s).collect()
}

/// `f(x) = (1 + Σ c_i x_i)^{-(d+1)}` on `[0,1]^d`.
pub fn corner_peak(c: &[f64]) -> Result<Integrand> {
    check_coefficients(c, 1)?;
    let d = c.len();
    let cc = c.to_vec();
    let f: ScalarFn = Arc::new(move |x: &[f64]| {
        let s: f64 = cc.iter().zip(x).map(|(a, b)| a * b).sum();
        (1.0 + s).powi(-(cc.len() as i32 + 1))
    });
    let (value, source) = corner_peak_mean(c);
    Ok(Integrand::new("cp", format!("corner peak, d = {d}"), BoxDomain::cube(d, 0.0, 1.0), f)
        .with_reference(value, source))
}

fn check_coefficients(c: &[f64], min_dim: usize) -> Result<()> {
    if c.len() < min_dim {
        return Err(Error::InvalidArgument(format!("need at least {min_dim} coefficients")));
    }
    if let Some(v) = c.iter().find(|v| !(**v > 0.0) || !v.is_finite()) {
        return Err(Error::InvalidArgument(format!("coefficients must be positive, got {v}")));
    }
    Ok(())
}

/// Mean of the corner peak on `[0,1]^d`. Inclusion-exclusion
/// `(d! Π c_i)^{-1} Σ_S (-1)^{|S|} (1 + Σ_{i∈S} c_i)^{-1}` for `d ≤ 4`;
/// beyond that the cancellation is severe and the Laplace form
/// `E[Π_i (1 - e^{-T c_i})/(T c_i)]` with `T ~ Gamma(d+1)` is evaluated by
/// generalized Gauss-Laguerre quadrature.
pub fn corner_peak_mean(c: &[f64]) -> (f64, String) {
    let d = c.len();
    if d <= 4 {
        (corner_peak_inclusion_exclusion(c), "inclusion-exclusion".into())
    } else {
        (corner_peak_laplace(c, 120), "Gauss-Laguerre (120 nodes)".into())
    }
}

fn corner_peak_inclusion_exclusion(c: &[f64]) -> f64 {
    let d = c.len();
    let mut sum = 0.0;
    for mask in 0u32..(1 << d) {
        let s: f64 = (0..d).filter(|i| mask >> i & 1 == 1).map(|i| c[i]).sum();
        let sign = if mask.count_ones() % 2 == 0 { 1.0 } else { -1.0 };
        sum += sign / (1.0 + s);
    }
    let fact: f64 = (1..=d).map(|k| k as f64).product();
    sum / (fact * c.iter().product::<f64>())
}

/// Gauss rule for the Gamma(α+1) probability density `t^α e^{-t} / α!`.
fn gauss_laguerre(alpha: f64, n: usize) -> Result<(Vec<f64>, Vec<f64>)> {
    let a: Vec<f64> = (0..n).map(|k| 2.0 * k as f64 + alpha + 1.0).collect();
    let b: Vec<f64> =
        (0..=n).map(|k| if k == 0 { 1.0 } else { (k as f64 * (k as f64 + alpha)).sqrt() }).collect();
    let rule = gauss_rule(&Recurrence::new(a, b)?, n)?;
    Ok((rule.nodes, rule.weights))
}

fn corner_peak_laplace(c: &[f64], n: usize) -> f64 {
    let (t, w) = gauss_laguerre(c.len() as f64, n).expect("Laguerre recurrence is valid");
    t.iter()
        .zip(&w)
        .map(|(&t, &w)| {
            w * c
                .iter()
                .map(|&ci| {
                    let u = t * ci;
                    if u < 1e-8 {
                        1.0 - u / 2.0
                    } else {
                        -(-u).exp_m1() / u
                    }
                })
                .product::<f64>()
        })
        .sum()
}

/// `f(x) = Σ_{i<d} (1 + c_i x_i + c_{i+1} x_{i+1})^{-3}` on `[0,1]^d`.
pub fn modified_corner_peak(c: &[f64]) -> Result<Integrand> {
    check_coefficients(c, 2)?;
    let d = c.len();
    let cc = c.to_vec();
    let f: ScalarFn = Arc::new(move |x: &[f64]| {
        cc.windows(2).zip(x.windows(2)).map(|(a, y)| (1.0 + a[0] * y[0] + a[1] * y[1]).powi(-3)).sum()
    });
    let value: f64 = c.windows(2).map(|p| pair_mean(p[0], p[1])).sum();
    Ok(Integrand::new("mcp", format!("modified corner peak, d = {d}"), BoxDomain::cube(d, 0.0, 1.0), f)
        .with_reference(value, "sum of pairwise closed forms"))
}

/// `∫_{[0,1]²} (1 + a x + b y)^{-3}`; a 2-d Gauss-Legendre rule when the
/// closed form would cancel badly.
fn pair_mean(a: f64, b: f64) -> f64 {
    if a.min(b) > 1e-2 {
        corner_peak_inclusion_exclusion(&[a, b])
    } else {
        let g = gauss_legendre(30).expect("Gauss-Legendre rule");
        let mut s = 0.0;
        for (x, wx) in g.nodes.iter().zip(&g.weights) {
            for (y, wy) in g.nodes.iter().zip(&g.weights) {
                let (u, v) = (0.5 * (x + 1.0), 0.5 * (y + 1.0));
                s += wx * wy * (1.0 + a * u + b * v).powi(-3);
            }
        }
        s
    }
}

/// Rate constants of the surface-reaction model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ReactionConstants {
    pub c: f64,
    pub d: f64,
    pub e: f64,
    pub f: f64,
}

pub const NOMINAL_CONSTANTS: ReactionConstants = ReactionConstants { c: 0.04, d: 1.0, e: 0.36, f: 0.016 };

/// Tolerances of the adaptive integrator.
#[derive(Debug, Clone, Copy)]
pub struct OdeOptions {
    pub rtol: f64,
    pub atol: f64,
    pub max_steps: usize,
}

impl Default for OdeOptions {
    fn default() -> Self {
        OdeOptions { rtol: 1e-8, atol: 1e-10, max_steps: 200_000 }
    }
}

/// Right-hand side with vacancy fraction `z = 1 - u_1 - u_2 - u_3`:
/// `u_1' = x_1 z - c u_1 - 4d u_1 u_2`, `u_2' = 2 x_2 z² - 4d u_1 u_2`,
/// `u_3' = e z - f u_3`.
fn reaction_rhs(x: [f64; 2], k: &ReactionConstants, u: &[f64; 3]) -> [f64; 3] {
    let z = 1.0 - u[0] - u[1] - u[2];
    let r = 4.0 * k.d * u[0] * u[1];
    [x[0] * z - k.c * u[0] - r, 2.0 * x[1] * z * z - r, k.e * z - k.f * u[2]]
}

/// Dormand-Prince 5(4) integration of a three-component system.
fn dopri5<F: Fn(&[f64; 3]) -> [f64; 3]>(rhs: F, y0: [f64; 3], t_end: f64, opts: &OdeOptions) -> Result<[f64; 3]> {
    const A: [[f64; 6]; 6] = [
        [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0, 0.0],
        [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
        [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
        [19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0, 0.0, 0.0],
        [9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0, 0.0],
        [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0],
    ];
    const E: [f64; 7] =
        [71.0 / 57600.0, 0.0, -71.0 / 16695.0, 71.0 / 1920.0, -17253.0 / 339200.0, 22.0 / 525.0, -1.0 / 40.0];
    if t_end <= 0.0 {
        return Ok(y0);
    }
    let mut t = 0.0;
    let mut y = y0;
    let mut h = (1e-3f64).min(t_end);
    let mut k = [[0.0; 3]; 7];
    k[0] = rhs(&y);
    let mut steps = 0;
    while t < t_end {
        if steps >= opts.max_steps {
            return Err(Error::OdeFailure(format!("step limit reached at t = {t}")));
        }
        steps += 1;
        if t + h > t_end {
            h = t_end - t;
        }
        for s in 1..7 {
            let mut ys = y;
            for (j, kj) in k.iter().enumerate().take(s) {
                for i in 0..3 {
                    ys[i] += h * A[s - 1][j] * kj[i];
                }
            }
            k[s] = rhs(&ys);
        }
        let mut y_new = y;
        for i in 0..3 {
            y_new[i] += h * (0..6).map(|j| A[5][j] * k[j][i]).sum::<f64>();
        }
        let mut err = 0.0;
        for i in 0..3 {
            let e: f64 = h * (0..7).map(|j| E[j] * k[j][i]).sum::<f64>();
            let sc = opts.atol + opts.rtol * y[i].abs().max(y_new[i].abs());
            err += (e / sc).powi(2);
        }
        let err = (err / 3.0).sqrt();
        if !err.is_finite() {
            return Err(Error::OdeFailure(format!("non-finite error estimate at t = {t}")));
        }
        if err <= 1.0 {
            t += h;
            y = y_new;
            k[0] = k[6];
        }
        let fac = if err == 0.0 { 5.0 } else { (0.9 * err.powf(-0.2)).clamp(0.2, 5.0) };
        h *= if err <= 1.0 { fac } else { fac.min(1.0) };
        if h < 1e-14 * t_end.max(1.0) {
            return Err(Error::OdeFailure(format!("step size underflow at t = {t}")));
        }
    }
    Ok(y)
}

/// State `(u_1, u_2, u_3)` at `t_end`, starting from an empty surface.
pub fn reaction_state(x: &[f64], t_end: f64, k: &ReactionConstants, opts: &OdeOptions) -> Result<[f64; 3]> {
    if x.len() != 2 {
        return Err(Error::DimensionMismatch { expected: 2, found: x.len() });
    }
    let p = [x[0], x[1]];
    dopri5(|u| reaction_rhs(p, k, u), [0.0; 3], t_end, opts)
}

/// Mass fraction `u_3(t_end)` with nominal constants and default tolerances.
pub fn chemical_model(x: &[f64], t_end: f64) -> Result<f64> {
    Ok(reaction_state(x, t_end, &NOMINAL_CONSTANTS, &OdeOptions::default())?[2])
}

/// Which of the two parameter boxes the canonical banana domain is mapped to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum ChemProblem {
    One,
    Two,
}

impl ChemProblem {
    pub fn domain(self) -> BoxDomain {
        match self {
            ChemProblem::One => problem_one_domain(),
            ChemProblem::Two => problem_two_domain(),
        }
    }

    pub fn map(self) -> AffineMap {
        affine_map_box(&banana_domain(), &self.domain()).expect("non-degenerate boxes")
    }
}

/// `u_3(100)` as a function of the canonical banana coordinates, mapped to
/// the problem's parameter box. A failed solve evaluates to NaN.
pub fn chem_integrand(problem: ChemProblem) -> Integrand {
    let map = problem.map();
    let f: ScalarFn = Arc::new(move |y: &[f64]| chemical_model(&map.apply(y), 100.0).unwrap_or(f64::NAN));
    Integrand::new(
        "chem",
        format!("surface reaction u3(100) on {:?}, banana coordinates", problem),
        banana_domain(),
        f,
    )
}

/// Mean of `f` under the banana density by an `n × n` Gauss-Legendre rule
/// on the canonical box with the density folded into the weights.
pub fn banana_mean(f: &Integrand, n: usize) -> Result<f64> {
    let b = banana_domain();
    let g = gauss_legendre(n)?;
    let map = |j: usize, t: f64| b.lower[j] + 0.5 * (t + 1.0) * (b.upper[j] - b.lower[j]);
    let (pts, wts) = tensor_rule(&[&g, &g]);
    let vol = b.volume();
    let measure = banana_measure();
    use rayon::prelude::*;
    let terms: Vec<f64> = pts
        .par_iter()
        .zip(wts.par_iter())
        .map(|(p, w)| {
            let y = [map(0, p[0]), map(1, p[1])];
            w * vol * measure.pdf(&y) * f.eval(&y)
        })
        .collect();
    Ok(terms.iter().sum())
}

/// Mean under the banana density from the first `n` points of a 2-d Sobol
/// sequence over the canonical box, with the density folded in.
pub fn banana_mean_sobol(f: &Integrand, n: usize) -> Result<f64> {
    use rayon::prelude::*;
    let b = banana_domain();
    let pts = crate::baselines::sobol_points(2, n, 0, false)?;
    let measure = banana_measure();
    let vol = b.volume();
    let terms: Vec<f64> = pts
        .par_iter()
        .map(|u| {
            let y = [b.lower[0] + u[0] * (b.upper[0] - b.lower[0]), b.lower[1] + u[1] * (b.upper[1] - b.lower[1])];
            vol * measure.pdf(&y) * f.eval(&y)
        })
        .collect();
    Ok(terms.iter().sum::<f64>() / n as f64)
}

fn check_orthonormal_rows(a: &[Vec<f64>]) -> Result<()> {
    for (i, r) in a.iter().enumerate() {
        for (j, q) in a.iter().enumerate() {
            let dot: f64 = r.iter().zip(q).map(|(x, y)| x * y).sum();
            let target = if i == j { 1.0 } else { 0.0 };
            if (dot - target).abs() > 1e-12 {
                return Err(Error::InvalidArgument(format!("rows {i} and {j} of A are not orthonormal")));
            }
        }
    }
    Ok(())
}

/// `f(y) = g(A y)` on `[-1,1]^d` for an `s`-variate `g`.
pub fn ridge_integrand(g: &Integrand, a: &[Vec<f64>]) -> Result<Integrand> {
    let s = a.len();
    let d = a.first().map_or(0, Vec::len);
    if s != g.dim() || d == 0 || a.iter().any(|r| r.len() != d) {
        return Err(Error::DimensionMismatch { expected: g.dim(), found: s });
    }
    let rows = a.to_vec();
    let inner = g.function();
    let f: ScalarFn = Arc::new(move |y: &[f64]| {
        let x: Vec<f64> = rows.iter().map(|r| r.iter().zip(y).map(|(u, v)| u * v).sum()).collect();
        inner(&x)
    });
    let mut out = Integrand::new(
        format!("{}-ridge", g.name),
        format!("ridge of {} through a {s}x{d} matrix", g.name),
        BoxDomain::cube(d, -1.0, 1.0),
        f,
    );
    out.reference = None;
    Ok(out)
}

/// `y = Aᵀ x`, the preimage used to evaluate a ridge function at a node of a
/// rule built on the zonotope; requires orthonormal rows.
pub fn ridge_back_map(a: &[Vec<f64>], x: &[f64]) -> Result<Vec<f64>> {
    check_orthonormal_rows(a)?;
    if x.len() != a.len() {
        return Err(Error::DimensionMismatch { expected: a.len(), found: x.len() });
    }
    let d = a.first().map_or(0, Vec::len);
    Ok((0..d).map(|j| a.iter().zip(x).map(|(r, xi)| r[j] * xi).sum()).collect())
}

/// The reaction model as a function on the zonotope `{A y}`: its bounding
/// box is mapped affinely onto parameter box I.
pub fn chem_on_zonotope(a: &[Vec<f64>]) -> Result<Integrand> {
    let z = zonotope_build(a, Some(16), 0)?;
    let bbox = z.bounding_box();
    let map = affine_map_box(&bbox, &problem_one_domain())?;
    let f: ScalarFn = Arc::new(move |x: &[f64]| chemical_model(&map.apply(x), 100.0).unwrap_or(f64::NAN));
    Ok(Integrand::new("chem", "surface reaction u3(100) on the zonotope's bounding box", bbox, f))
}

/// Integrand names understood by [`named_integrand`].
pub const INTEGRAND_NAMES: [&str; 4] = ["cp", "mcp", "chem", "chem-ridge"];

/// Builds an integrand by name. `cp` and `mcp` use coefficients from
/// [`random_coefficients`] with `seed`; `chem` is problem I in banana
/// coordinates (`dim` must be 2); `chem-ridge` uses a random `2 × dim`
/// matrix with orthonormal rows.
pub fn named_integrand(name: &str, dim: usize, seed: u64) -> Result<Integrand> {
    match name {
        "cp" => corner_peak(&random_coefficients(dim, seed)),
        "mcp" => modified_corner_peak(&random_coefficients(dim, seed)),
        "chem" => {
            if dim != 2 {
                return Err(Error::DimensionMismatch { expected: 2, found: dim });
            }
            Ok(chem_integrand(ChemProblem::One))
        }
        "chem-ridge" => {
            let a = crate::domains::random_orthonormal_rows(2, dim, seed);
            ridge_integrand(&chem_on_zonotope(&a)?, &a)
        }
        _ => Err(Error::InvalidArgument(format!(
            "unknown integrand '{name}', expected one of {}",
            INTEGRAND_NAMES.join(", ")
        ))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn dense_mean(f: &Integrand, n: usize) -> f64 {
        let g = gauss_legendre(n).unwrap();
        let rules: Vec<_> = (0..f.dim()).map(|_| &g).collect();
        let (pts, wts) = tensor_rule(&rules);
        pts.iter()
            .zip(&wts)
            .map(|(p, w)| {
                let x: Vec<f64> = p.iter().map(|t| 0.5 * (t + 1.0)).collect();
                w * f.eval(&x)
            })
            .sum()
    }

    #[test]
    fn corner_peak_one_dim() {
        let f = corner_peak(&[1.0]).unwrap();
        assert_abs_diff_eq!(f.reference_mean().unwrap(), 0.5, epsilon = 1e-15);
        assert_eq!(f.eval(&[0.0]), 1.0);
    }

    #[test]
    fn corner_peak_matches_dense_quadrature() {
        let f = corner_peak(&[0.5, 0.5]).unwrap();
        assert_abs_diff_eq!(f.reference_mean().unwrap(), dense_mean(&f, 200), epsilon = 1e-12);
        for d in 1..=4 {
            let f = corner_peak(&random_coefficients(d, d as u64)).unwrap();
            assert_abs_diff_eq!(f.reference_mean().unwrap(), dense_mean(&f, 30), epsilon = 1e-10);
            assert_eq!(f.eval(&vec![0.0; d]), 1.0);
        }
    }

    #[test]
    fn laplace_form_agrees() {
        for d in 1..=4 {
            let c = random_coefficients(d, 40 + d as u64);
            assert_abs_diff_eq!(corner_peak_laplace(&c, 120), corner_peak_inclusion_exclusion(&c), epsilon = 1e-13);
        }
        let c = random_coefficients(6, 3);
        let f = corner_peak(&c).unwrap();
        assert_abs_diff_eq!(f.reference_mean().unwrap(), dense_mean(&f, 8), epsilon = 1e-10);
    }

    #[test]
    fn coefficients_normalized() {
        let c = random_coefficients(10, COEFFICIENT_SEED);
        assert_abs_diff_eq!(c.iter().sum::<f64>(), 1.0, epsilon = 1e-15);
        assert!(c.iter().all(|&v| v > 0.0));
        assert_eq!(c, random_coefficients(10, COEFFICIENT_SEED));
        assert!(corner_peak(&[0.5, -0.1]).is_err());
    }

    #[test]
    fn modified_corner_peak_pairs() {
        let f = modified_corner_peak(&[0.3, 0.7]).unwrap();
        let direct = corner_peak(&[0.3, 0.7]).unwrap();
        assert_abs_diff_eq!(f.eval(&[0.2, 0.9]), direct.eval(&[0.2, 0.9]), epsilon = 1e-15);
        assert_abs_diff_eq!(f.reference_mean().unwrap(), direct.reference_mean().unwrap(), epsilon = 1e-15);
        assert!(modified_corner_peak(&[1.0]).is_err());
    }

    #[test]
    fn modified_corner_peak_reference_in_twenty_dims() {
        let c = random_coefficients(20, COEFFICIENT_SEED);
        let f = modified_corner_peak(&c).unwrap();
        let mut oracle = 0.0;
        for p in c.windows(2) {
            oracle += dense_mean(&corner_peak(p).unwrap(), 40);
        }
        assert_abs_diff_eq!(f.reference_mean().unwrap(), oracle, epsilon = 1e-12);
        assert_abs_diff_eq!(pair_mean(0.005, 0.3), dense_mean(&corner_peak(&[0.005, 0.3]).unwrap(), 40), epsilon = 1e-14);
    }

    #[test]
    fn modified_corner_peak_has_no_third_order_terms() {
        // a mixed difference in three coordinates annihilates every term
        let f = modified_corner_peak(&random_coefficients(5, 2)).unwrap();
        let g = gauss_legendre(9).unwrap();
        let base = [0.3, 0.6, 0.2, 0.8, 0.5];
        let mut proj: f64 = 0.0;
        for (a, wa) in g.nodes.iter().zip(&g.weights) {
            for (b, wb) in g.nodes.iter().zip(&g.weights) {
                for (c, wc) in g.nodes.iter().zip(&g.weights) {
                    let mut x = base;
                    x[1] = 0.5 * (a + 1.0);
                    x[2] = 0.5 * (b + 1.0);
                    x[3] = 0.5 * (c + 1.0);
                    // orthonormal Legendre degree one in each active coordinate
                    let p = 3f64.sqrt().powi(3) * a * b * c;
                    proj += wa * wb * wc * p * f.eval(&x);
                }
            }
        }
        assert!(proj.abs() < 1e-12, "{proj}");
    }

    #[test]
    fn reaction_basics() {
        assert_eq!(chemical_model(&[2.0, 20.0], 0.0).unwrap(), 0.0);
        let k = NOMINAL_CONSTANTS;
        let coarse = reaction_state(&[2.0, 20.0], 100.0, &k, &OdeOptions::default()).unwrap();
        let fine = reaction_state(&[2.0, 20.0], 100.0, &k, &OdeOptions { rtol: 5e-9, atol: 5e-11, ..Default::default() })
            .unwrap();
        assert!((coarse[2] - fine[2]).abs() < 1e-6);
        for x in [[0.0, 5.0], [4.5, 35.0], [1.28, 16.6], [3.0, 10.0]] {
            let u = reaction_state(&x, 100.0, &k, &OdeOptions::default()).unwrap();
            assert!(u.iter().all(|v| (-1e-9..=1.0 + 1e-9).contains(v)), "{u:?}");
            assert!(u.iter().sum::<f64>() <= 1.0 + 1e-9);
        }
    }

    #[test]
    fn dopri_exponential() {
        let y = dopri5(|u| [-u[0], 2.0 * u[1], 0.0], [1.0, 1.0, 3.0], 2.0, &OdeOptions::default()).unwrap();
        assert_abs_diff_eq!(y[0], (-2.0f64).exp(), epsilon = 1e-8);
        assert_abs_diff_eq!(y[1], 4f64.exp(), epsilon = 1e-6);
        assert_eq!(y[2], 3.0);
    }

    #[test]
    fn ridge_wrappers() {
        let g = corner_peak(&[0.4, 0.6]).unwrap();
        let id = vec![vec![1.0, 0.0], vec![0.0, 1.0]];
        let r = ridge_integrand(&g, &id).unwrap();
        assert_eq!(r.eval(&[0.3, 0.2]), g.eval(&[0.3, 0.2]));

        let a = crate::domains::random_orthonormal_rows(2, 20, 4);
        check_orthonormal_rows(&a).unwrap();
        let y = ridge_back_map(&a, &[0.3, -0.1]).unwrap();
        let r = ridge_integrand(&g, &a).unwrap();
        assert_abs_diff_eq!(r.eval(&y), g.eval(&[0.3, -0.1]), epsilon = 1e-14);
        assert!(ridge_back_map(&[vec![1.0, 1.0]], &[0.2]).is_err());
    }

    #[test]
    fn named_lookup() {
        assert_eq!(named_integrand("cp", 3, 1).unwrap().dim(), 3);
        assert_eq!(named_integrand("mcp", 4, 1).unwrap().dim(), 4);
        assert_eq!(named_integrand("chem", 2, 0).unwrap().dim(), 2);
        assert!(named_integrand("chem", 3, 0).is_err());
        assert!(named_integrand("nope", 2, 0).is_err());
    }

    #[test]
    fn banana_means_agree() {
        let f = Integrand::new("x0", "first coordinate", banana_domain(), Arc::new(|y: &[f64]| y[0] * y[0]));
        let gl = banana_mean(&f, 120).unwrap();
        let sob = banana_mean_sobol(&f, 1 << 14).unwrap();
        assert!((gl - sob).abs() < 5e-3, "{gl} {sob}");
    }
}
