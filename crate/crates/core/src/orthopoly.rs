//! Univariate orthonormal polynomials, Gauss-type rules and tensor bases.
//!
//! Every family is stored as the coefficients of its three-term recurrence
//!
//! ```text
//! b_{k+1} q_{k+1}(t) = (t - a_k) q_k(t) - b_k q_{k-1}(t),   q_0 = 1/b_0,
//! ```
//!
//! with `b_0 = sqrt(μ(D))`, so `q_0 ≡ 1` for probability measures.

use std::f64::consts::PI;
use std::sync::{Arc, OnceLock};

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::indexset::{MultiIndex, MultiIndexSet};

/// Three-term recurrence of an orthonormal family.
///
/// `a` has `n` entries and `b` has `n + 1` (`b[0]` encodes the mass), which
/// determines `q_0, …, q_n` and Gauss-type rules with up to `n` points.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Recurrence {
    pub a: Vec<f64>,
    pub b: Vec<f64>,
}

impl Recurrence {
    pub fn new(a: Vec<f64>, b: Vec<f64>) -> Result<Self> {
        if b.len() != a.len() + 1 {
            return Err(Error::InvalidArgument(format!(
                "recurrence needs {} off-diagonal entries, got {}",
                a.len() + 1,
                b.len()
            )));
        }
        if let Some(k) = b.iter().position(|&x| !(x > 0.0) || !x.is_finite()) {
            return Err(Error::DegenerateMeasure(format!("b[{k}] = {} is not positive", b[k])));
        }
        Ok(Recurrence { a, b })
    }

    /// Highest degree that can be evaluated.
    pub fn max_degree(&self) -> usize {
        self.a.len()
    }

    /// Total mass `μ(D) = b_0²`.
    pub fn mass(&self) -> f64 {
        self.b[0] * self.b[0]
    }

    fn check_degree(&self, n: usize) -> Result<()> {
        if n > self.max_degree() {
            Err(Error::DegreeOverflow { requested: n, available: self.max_degree() })
        } else {
            Ok(())
        }
    }

    /// `q_0(t), …, q_n(t)` written into `out`.
    pub fn eval_into(&self, t: f64, out: &mut [f64]) {
        let n = out.len();
        if n == 0 {
            return;
        }
        out[0] = 1.0 / self.b[0];
        if n > 1 {
            out[1] = (t - self.a[0]) * out[0] / self.b[1];
        }
        for k in 1..n.saturating_sub(1) {
            out[k + 1] = ((t - self.a[k]) * out[k] - self.b[k] * out[k - 1]) / self.b[k + 1];
        }
    }

    /// `q_0(t), …, q_n(t)`.
    pub fn eval(&self, t: f64, n: usize) -> Result<Vec<f64>> {
        self.check_degree(n)?;
        let mut out = vec![0.0; n + 1];
        self.eval_into(t, &mut out);
        Ok(out)
    }

    /// Values and first derivatives of `q_0, …, q_{len-1}` at `t`.
    pub fn eval_with_derivative_into(&self, t: f64, val: &mut [f64], der: &mut [f64]) {
        let n = val.len();
        if n == 0 {
            return;
        }
        val[0] = 1.0 / self.b[0];
        der[0] = 0.0;
        if n > 1 {
            val[1] = (t - self.a[0]) * val[0] / self.b[1];
            der[1] = val[0] / self.b[1];
        }
        for k in 1..n.saturating_sub(1) {
            val[k + 1] = ((t - self.a[k]) * val[k] - self.b[k] * val[k - 1]) / self.b[k + 1];
            der[k + 1] =
                (val[k] + (t - self.a[k]) * der[k] - self.b[k] * der[k - 1]) / self.b[k + 1];
        }
    }

    /// Recurrence of the measure pushed forward by `t ↦ shift + scale·t`.
    pub fn affine(&self, shift: f64, scale: f64) -> Recurrence {
        let s = scale.abs();
        Recurrence {
            a: self.a.iter().map(|&a| shift + scale * a).collect(),
            b: std::iter::once(self.b[0]).chain(self.b[1..].iter().map(|&b| s * b)).collect(),
        }
    }

    /// Whether every diagonal coefficient vanishes (symmetric measure).
    pub fn is_symmetric(&self) -> bool {
        let scale = self.b.iter().skip(1).fold(0.0_f64, |m, &b| m.max(b)).max(1.0);
        self.a.iter().all(|a| a.abs() <= 1e-13 * scale)
    }
}

/// Named univariate probability measures.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "lowercase")]
pub enum Measure1d {
    /// Uniform on `[lower, upper]`.
    Uniform { lower: f64, upper: f64 },
    /// Density proportional to `(1-t)^α (1+t)^β` on `[-1,1]`, mapped to
    /// `[lower, upper]`. `α = β = 1` is the weight `(3/4)(1 - t²)`.
    Jacobi { alpha: f64, beta: f64, lower: f64, upper: f64 },
    /// Normal distribution.
    Gaussian { mean: f64, std: f64 },
}

impl Measure1d {
    pub fn uniform() -> Self {
        Measure1d::Uniform { lower: -1.0, upper: 1.0 }
    }

    /// `(3/4)(1 - t²)` on `[-1,1]`.
    pub fn parabolic() -> Self {
        Measure1d::Jacobi { alpha: 1.0, beta: 1.0, lower: -1.0, upper: 1.0 }
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            Measure1d::Uniform { lower, upper } | Measure1d::Jacobi { lower, upper, .. }
                if !(upper > lower) || !lower.is_finite() || !upper.is_finite() =>
            {
                Err(Error::DegenerateMeasure(format!("empty interval [{lower}, {upper}]")))
            }
            Measure1d::Jacobi { alpha, beta, .. } if !(alpha > -1.0) || !(beta > -1.0) => {
                Err(Error::DegenerateMeasure(format!("jacobi exponents ({alpha}, {beta}) must exceed -1")))
            }
            Measure1d::Gaussian { std, .. } if !(std > 0.0) => {
                Err(Error::DegenerateMeasure(format!("standard deviation {std} must be positive")))
            }
            _ => Ok(()),
        }
    }

    /// Support interval; `None` for unbounded support.
    pub fn support(&self) -> Option<(f64, f64)> {
        match *self {
            Measure1d::Uniform { lower, upper } | Measure1d::Jacobi { lower, upper, .. } => {
                Some((lower, upper))
            }
            Measure1d::Gaussian { .. } => None,
        }
    }

    pub fn is_symmetric(&self) -> bool {
        match *self {
            Measure1d::Jacobi { alpha, beta, .. } => alpha == beta,
            _ => true,
        }
    }

    /// Center of symmetry (midpoint for bounded families).
    pub fn center(&self) -> f64 {
        match *self {
            Measure1d::Uniform { lower, upper } | Measure1d::Jacobi { lower, upper, .. } => {
                0.5 * (lower + upper)
            }
            Measure1d::Gaussian { mean, .. } => mean,
        }
    }

    /// Probability density.
    pub fn pdf(&self, x: f64) -> f64 {
        match *self {
            Measure1d::Uniform { lower, upper } => {
                if (lower..=upper).contains(&x) {
                    1.0 / (upper - lower)
                } else {
                    0.0
                }
            }
            Measure1d::Jacobi { alpha, beta, lower, upper } => {
                if !(lower..=upper).contains(&x) {
                    return 0.0;
                }
                let h = 0.5 * (upper - lower);
                let t = (x - 0.5 * (upper + lower)) / h;
                let norm = 2f64.powf(alpha + beta + 1.0) * beta_fn(alpha + 1.0, beta + 1.0);
                (1.0 - t).powf(alpha) * (1.0 + t).powf(beta) / norm / h
            }
            Measure1d::Gaussian { mean, std } => {
                let z = (x - mean) / std;
                (-0.5 * z * z).exp() / (std * (2.0 * PI).sqrt())
            }
        }
    }

    /// Orthonormal recurrence with `n` diagonal coefficients.
    pub fn recurrence(&self, n: usize) -> Result<Recurrence> {
        self.validate()?;
        match *self {
            Measure1d::Uniform { lower, upper } => {
                jacobi_recurrence(0.0, 0.0, n).map(|r| r.affine(0.5 * (lower + upper), 0.5 * (upper - lower)))
            }
            Measure1d::Jacobi { alpha, beta, lower, upper } => {
                jacobi_recurrence(alpha, beta, n).map(|r| r.affine(0.5 * (lower + upper), 0.5 * (upper - lower)))
            }
            Measure1d::Gaussian { mean, std } => {
                let b = (0..=n).map(|k| if k == 0 { 1.0 } else { std * (k as f64).sqrt() }).collect();
                Recurrence::new(vec![mean; n], b)
            }
        }
    }

    /// Raw moments `E[t^k]`, `k = 0..=n`, exact up to rounding.
    pub fn raw_moments(&self, n: usize) -> Result<Vec<f64>> {
        let rule = gauss_rule(&self.recurrence(n / 2 + 1)?, n / 2 + 1)?;
        Ok((0..=n)
            .map(|k| rule.nodes.iter().zip(&rule.weights).map(|(x, w)| w * x.powi(k as i32)).sum())
            .collect())
    }
}

fn ln_gamma(x: f64) -> f64 {
    // Lanczos approximation, g = 7
    const C: [f64; 9] = [
        0.999_999_999_999_809_9,
        676.520_368_121_885_1,
        -1_259.139_216_722_402_8,
        771.323_428_777_653_1,
        -176.615_029_162_140_6,
        12.507_343_278_686_905,
        -0.138_571_095_265_720_12,
        9.984_369_578_019_572e-6,
        1.505_632_735_149_311_6e-7,
    ];
    if x < 0.5 {
        return (PI / (PI * x).sin()).ln() - ln_gamma(1.0 - x);
    }
    let x = x - 1.0;
    let mut s = C[0];
    for (i, &c) in C.iter().enumerate().skip(1) {
        s += c / (x + i as f64);
    }
    let t = x + 7.5;
    0.5 * (2.0 * PI).ln() + (x + 0.5) * t.ln() - t + s.ln()
}

fn beta_fn(a: f64, b: f64) -> f64 {
    (ln_gamma(a) + ln_gamma(b) - ln_gamma(a + b)).exp()
}

/// Orthonormal recurrence for the probability measure proportional to
/// `(1-t)^α (1+t)^β` on `[-1,1]`.
pub fn jacobi_recurrence(alpha: f64, beta: f64, n: usize) -> Result<Recurrence> {
    if !(alpha > -1.0) || !(beta > -1.0) {
        return Err(Error::DegenerateMeasure(format!(
            "jacobi exponents ({alpha}, {beta}) must exceed -1"
        )));
    }
    let ab = alpha + beta;
    let mut a = Vec::with_capacity(n);
    let mut b = Vec::with_capacity(n + 1);
    b.push(1.0);
    for k in 0..n {
        let kf = k as f64;
        let s = 2.0 * kf + ab;
        a.push(if k == 0 {
            (beta - alpha) / (ab + 2.0)
        } else {
            (beta * beta - alpha * alpha) / (s * (s + 2.0))
        });
    }
    for k in 1..=n {
        let kf = k as f64;
        let s = 2.0 * kf + ab;
        let b2 = if k == 1 {
            4.0 * (1.0 + alpha) * (1.0 + beta) / ((2.0 + ab).powi(2) * (3.0 + ab))
        } else {
            4.0 * kf * (kf + alpha) * (kf + beta) * (kf + ab) / (s * s * (s + 1.0) * (s - 1.0))
        };
        b.push(b2.sqrt());
    }
    Recurrence::new(a, b)
}

/// Orthonormal recurrence of a discrete measure `Σ w_i δ_{x_i}` by the
/// Stieltjes procedure with normalized vectors.
pub fn stieltjes(nodes: &[f64], weights: &[f64], n: usize) -> Result<Recurrence> {
    if nodes.len() != weights.len() {
        return Err(Error::DimensionMismatch { expected: nodes.len(), found: weights.len() });
    }
    if n >= nodes.len() {
        return Err(Error::DegenerateMeasure(format!(
            "{} support points cannot carry {n} orthogonal polynomials",
            nodes.len()
        )));
    }
    let mass: f64 = weights.iter().sum();
    if !(mass > 0.0) || weights.iter().any(|&w| w < 0.0) {
        return Err(Error::DegenerateMeasure("weights must be nonnegative with positive sum".into()));
    }
    let m = nodes.len();
    let b0 = mass.sqrt();
    let mut prev = vec![0.0; m];
    let mut cur = vec![1.0 / b0; m];
    let mut a = Vec::with_capacity(n);
    let mut b = vec![b0];
    let scale = nodes.iter().fold(0.0_f64, |s, x| s.max(x.abs())).max(1.0);
    for k in 0..n {
        let ak: f64 = (0..m).map(|i| weights[i] * nodes[i] * cur[i] * cur[i]).sum();
        let mut next: Vec<f64> =
            (0..m).map(|i| (nodes[i] - ak) * cur[i] - b[k] * prev[i]).collect();
        // one reorthogonalization pass against the two previous vectors
        let c1: f64 = (0..m).map(|i| weights[i] * next[i] * cur[i]).sum();
        let c0: f64 = (0..m).map(|i| weights[i] * next[i] * prev[i]).sum();
        for i in 0..m {
            next[i] -= c1 * cur[i] + c0 * prev[i];
        }
        let bk1 = (0..m).map(|i| weights[i] * next[i] * next[i]).sum::<f64>().sqrt();
        if !(bk1 > 1e-13 * scale) {
            return Err(Error::DegenerateMeasure(format!("b[{}] = {bk1:.3e} vanishes", k + 1)));
        }
        for v in next.iter_mut() {
            *v /= bk1;
        }
        a.push(ak);
        b.push(bk1);
        prev = std::mem::replace(&mut cur, next);
    }
    Recurrence::new(a, b)
}

/// Gauss-Legendre nodes and probability weights on `[-1,1]`.
pub fn gauss_legendre(m: usize) -> Result<UnivariateRule> {
    gauss_rule(&jacobi_recurrence(0.0, 0.0, m)?, m)
}

/// Cached 500-point Gauss-Legendre rule on `[-1,1]` (probability weights).
pub fn reference_gauss_legendre() -> &'static UnivariateRule {
    static RULE: OnceLock<UnivariateRule> = OnceLock::new();
    RULE.get_or_init(|| gauss_legendre(500).expect("gauss-legendre reference rule"))
}

/// Orthonormal recurrence of the probability measure with (unnormalized)
/// density `f` on `[lo, hi]`, discretized on the reference Gauss grid.
pub fn recurrence_from_density<F>(f: F, lo: f64, hi: f64, n: usize) -> Result<Recurrence>
where
    F: Fn(f64) -> f64,
{
    if !(hi > lo) {
        return Err(Error::DegenerateMeasure(format!("empty interval [{lo}, {hi}]")));
    }
    let grid = reference_gauss_legendre();
    let c = 0.5 * (lo + hi);
    let h = 0.5 * (hi - lo);
    let x: Vec<f64> = grid.nodes.iter().map(|t| c + h * t).collect();
    let mut w: Vec<f64> = x.iter().zip(&grid.weights).map(|(&x, &w)| w * f(x).max(0.0)).collect();
    let mass: f64 = w.iter().sum();
    if !(mass > 0.0) {
        return Err(Error::DegenerateMeasure("density integrates to zero".into()));
    }
    w.iter_mut().for_each(|v| *v /= mass);
    stieltjes(&x, &w, n)
}

/// A univariate quadrature rule with ascending nodes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UnivariateRule {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl UnivariateRule {
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn integrate<F: Fn(f64) -> f64>(&self, f: F) -> f64 {
        self.nodes.iter().zip(&self.weights).map(|(&x, &w)| w * f(x)).sum()
    }
}

/// Eigenvalues of the (possibly modified) `m × m` Jacobi matrix, then one
/// Newton polish on `q_m - c q_{m-1}` and Christoffel weights
/// `w = 1 / Σ_{k<m} q_k(x)²`.
fn jacobi_matrix_rule(rec: &Recurrence, m: usize, c: f64) -> Result<UnivariateRule> {
    if m == 0 {
        return Err(Error::InvalidArgument("rule needs at least one node".into()));
    }
    rec.check_degree(m)?;
    let mut j = DMatrix::<f64>::zeros(m, m);
    for k in 0..m {
        j[(k, k)] = rec.a[k];
        if k + 1 < m {
            j[(k, k + 1)] = rec.b[k + 1];
            j[(k + 1, k)] = rec.b[k + 1];
        }
    }
    j[(m - 1, m - 1)] += c * rec.b[m];
    let eig = SymmetricEigen::try_new(j, f64::EPSILON, 10_000).ok_or(Error::EigenFailure)?;
    let mut nodes: Vec<f64> = eig.eigenvalues.iter().copied().collect();
    if nodes.iter().any(|x| !x.is_finite()) {
        return Err(Error::EigenFailure);
    }
    nodes.sort_by(f64::total_cmp);
    let mut val = vec![0.0; m + 1];
    let mut der = vec![0.0; m + 1];
    let mut weights = Vec::with_capacity(m);
    for x in nodes.iter_mut() {
        rec.eval_with_derivative_into(*x, &mut val, &mut der);
        let g = val[m] - c * val[m - 1];
        let dg = der[m] - c * der[m - 1];
        if dg != 0.0 {
            let step = g / dg;
            if step.abs() < 1e-8 * (1.0 + x.abs()) {
                *x -= step;
                rec.eval_into(*x, &mut val);
            }
        }
        let s: f64 = val[..m].iter().map(|q| q * q).sum();
        weights.push(1.0 / s);
    }
    Ok(UnivariateRule { nodes, weights })
}

/// `m`-point Gauss rule, exact for polynomials of degree `≤ 2m - 1`.
pub fn gauss_rule(rec: &Recurrence, m: usize) -> Result<UnivariateRule> {
    jacobi_matrix_rule(rec, m, 0.0)
}

/// `m`-point rule at the roots of `q_m - c q_{m-1}`, exact to degree `2m - 2`.
/// `c = 0` gives the Gauss rule.
pub fn radau_family_rule(rec: &Recurrence, m: usize, c: f64) -> Result<UnivariateRule> {
    if !c.is_finite() {
        return Err(Error::InvalidArgument(format!("modification constant {c} is not finite")));
    }
    jacobi_matrix_rule(rec, m, c)
}

/// Constant `c` for which `x0` is a root of `q_m - c q_{m-1}`.
pub fn radau_constant(rec: &Recurrence, m: usize, x0: f64) -> Result<f64> {
    let q = rec.eval(x0, m)?;
    if q[m - 1] == 0.0 {
        return Err(Error::InvalidArgument(format!("q_{} vanishes at {x0}", m - 1)));
    }
    Ok(q[m] / q[m - 1])
}

/// A univariate factor of a tensor basis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Basis1d {
    Orthonormal(Recurrence),
    /// `((t - center)/scale)^k`.
    Monomial { center: f64, scale: f64 },
}

impl Basis1d {
    pub fn monomial() -> Self {
        Basis1d::Monomial { center: 0.0, scale: 1.0 }
    }

    pub fn max_degree(&self) -> Option<usize> {
        match self {
            Basis1d::Orthonormal(r) => Some(r.max_degree()),
            Basis1d::Monomial { .. } => None,
        }
    }

    fn check_degree(&self, n: usize) -> Result<()> {
        match self {
            Basis1d::Orthonormal(r) => r.check_degree(n),
            Basis1d::Monomial { .. } => Ok(()),
        }
    }

    pub fn eval_into(&self, t: f64, out: &mut [f64]) {
        match *self {
            Basis1d::Orthonormal(ref r) => r.eval_into(t, out),
            Basis1d::Monomial { center, scale } => {
                let u = (t - center) / scale;
                let mut p = 1.0;
                for v in out.iter_mut() {
                    *v = p;
                    p *= u;
                }
            }
        }
    }

    pub fn eval_with_derivative_into(&self, t: f64, val: &mut [f64], der: &mut [f64]) {
        match *self {
            Basis1d::Orthonormal(ref r) => r.eval_with_derivative_into(t, val, der),
            Basis1d::Monomial { center, scale } => {
                let u = (t - center) / scale;
                let mut p = 1.0;
                for k in 0..val.len() {
                    val[k] = p;
                    der[k] = if k == 0 { 0.0 } else { k as f64 * val[k - 1] / scale };
                    p *= u;
                }
            }
        }
    }
}

/// Square transform applied to the raw tensor columns, stored column-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Transform {
    pub n: usize,
    pub data: Vec<f64>,
}

impl Transform {
    pub fn from_matrix(m: &DMatrix<f64>) -> Self {
        assert_eq!(m.nrows(), m.ncols());
        Transform { n: m.nrows(), data: m.as_slice().to_vec() }
    }

    pub fn matrix(&self) -> DMatrix<f64> {
        DMatrix::from_column_slice(self.n, self.n, &self.data)
    }
}

/// Tensor-product basis `p_α(x) = ∏_j φ_{α_j, j}(x_j)`, optionally followed
/// by a linear change of basis `V ↦ V T`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TensorBasis {
    pub factors: Vec<Basis1d>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub transform: Option<Transform>,
}

/// Index layout shared by evaluations: nonzero coordinates of each `α`.
struct Layout {
    maxdeg: Vec<usize>,
    support: Vec<Vec<(usize, usize)>>,
}

impl Layout {
    fn new(set: &MultiIndexSet) -> Self {
        Layout {
            maxdeg: set.max_degrees().into_iter().map(|d| d as usize).collect(),
            support: set
                .iter()
                .map(|a| {
                    a.coords()
                        .iter()
                        .enumerate()
                        .filter(|(_, &k)| k > 0)
                        .map(|(j, &k)| (j, k as usize))
                        .collect()
                })
                .collect(),
        }
    }
}

impl TensorBasis {
    pub fn new(factors: Vec<Basis1d>) -> Self {
        TensorBasis { factors, transform: None }
    }

    pub fn orthonormal(recs: Vec<Recurrence>) -> Self {
        TensorBasis::new(recs.into_iter().map(Basis1d::Orthonormal).collect())
    }

    pub fn monomial(dim: usize) -> Self {
        TensorBasis::new(vec![Basis1d::monomial(); dim])
    }

    /// Orthonormal basis of the tensor product of `measures`.
    pub fn for_measures(measures: &[Measure1d], set: &MultiIndexSet) -> Result<Self> {
        let md = set.max_degrees();
        let recs = measures
            .iter()
            .zip(&md)
            .map(|(m, &k)| m.recurrence(k as usize + 1))
            .collect::<Result<Vec<_>>>()?;
        Ok(TensorBasis::orthonormal(recs))
    }

    pub fn with_transform(mut self, t: DMatrix<f64>) -> Self {
        self.transform = Some(Transform::from_matrix(&t));
        self
    }

    pub fn dim(&self) -> usize {
        self.factors.len()
    }

    fn check(&self, set: &MultiIndexSet) -> Result<()> {
        if set.dim() != self.dim() {
            return Err(Error::DimensionMismatch { expected: self.dim(), found: set.dim() });
        }
        for (f, k) in self.factors.iter().zip(set.max_degrees()) {
            f.check_degree(k as usize)?;
        }
        if let Some(t) = &self.transform {
            if t.n != set.len() {
                return Err(Error::DimensionMismatch { expected: set.len(), found: t.n });
            }
        }
        Ok(())
    }

    fn apply_transform(&self, v: DMatrix<f64>) -> DMatrix<f64> {
        match &self.transform {
            Some(t) => v * t.matrix(),
            None => v,
        }
    }

    fn eval_row(&self, layout: &Layout, tables: &mut [Vec<f64>], x: &[f64], row: &mut [f64]) {
        let mut base = 1.0;
        for (j, f) in self.factors.iter().enumerate() {
            f.eval_into(x[j], &mut tables[j]);
            base *= tables[j][0];
        }
        for (r, sup) in row.iter_mut().zip(&layout.support) {
            let mut v = base;
            for &(j, k) in sup {
                v *= tables[j][k] / tables[j][0];
            }
            *r = v;
        }
    }

    /// `S × N` matrix with entries `p_α(x_s)`.
    pub fn eval(&self, set: &MultiIndexSet, points: &[Vec<f64>]) -> Result<DMatrix<f64>> {
        self.check(set)?;
        let layout = Layout::new(set);
        let n = set.len();
        let mut tables: Vec<Vec<f64>> = layout.maxdeg.iter().map(|&k| vec![0.0; k + 1]).collect();
        let mut out = DMatrix::<f64>::zeros(points.len(), n);
        let mut row = vec![0.0; n];
        for (s, x) in points.iter().enumerate() {
            if x.len() != self.dim() {
                return Err(Error::DimensionMismatch { expected: self.dim(), found: x.len() });
            }
            self.eval_row(&layout, &mut tables, x, &mut row);
            for (i, &v) in row.iter().enumerate() {
                out[(s, i)] = v;
            }
        }
        Ok(self.apply_transform(out))
    }

    /// Transposed evaluation `N × S` (one column per point), the layout used
    /// by the sparse solver.
    pub fn eval_columns(&self, set: &MultiIndexSet, points: &[Vec<f64>]) -> Result<DMatrix<f64>> {
        use rayon::prelude::*;
        self.check(set)?;
        let layout = Layout::new(set);
        let n = set.len();
        if let Some(x) = points.iter().find(|x| x.len() != self.dim()) {
            return Err(Error::DimensionMismatch { expected: self.dim(), found: x.len() });
        }
        let mut data = vec![0.0; n * points.len()];
        data.par_chunks_mut(n).zip(points.par_iter()).for_each_init(
            || layout.maxdeg.iter().map(|&k| vec![0.0; k + 1]).collect::<Vec<_>>(),
            |tables, (col, x)| self.eval_row(&layout, tables, x, col),
        );
        let raw = DMatrix::from_vec(n, points.len(), data);
        Ok(match &self.transform {
            Some(t) => t.matrix().transpose() * raw,
            None => raw,
        })
    }

    /// Values `p_α(x)` and gradients `∂_j p_α(x)` at a single point, as an
    /// `N`-vector and a `d × N` matrix.
    pub fn eval_with_gradient(
        &self,
        set: &MultiIndexSet,
        x: &[f64],
    ) -> Result<(DVector<f64>, DMatrix<f64>)> {
        self.check(set)?;
        let layout = Layout::new(set);
        self.eval_with_gradient_layout(&layout, x)
    }

    fn eval_with_gradient_layout(
        &self,
        layout: &Layout,
        x: &[f64],
    ) -> Result<(DVector<f64>, DMatrix<f64>)> {
        let d = self.dim();
        if x.len() != d {
            return Err(Error::DimensionMismatch { expected: d, found: x.len() });
        }
        let n = layout.support.len();
        let mut val: Vec<Vec<f64>> = layout.maxdeg.iter().map(|&k| vec![0.0; k + 1]).collect();
        let mut der = val.clone();
        let mut base = 1.0;
        for j in 0..d {
            self.factors[j].eval_with_derivative_into(x[j], &mut val[j], &mut der[j]);
            base *= val[j][0];
        }
        let mut v = DVector::<f64>::zeros(n);
        let mut g = DMatrix::<f64>::zeros(d, n);
        for (i, sup) in layout.support.iter().enumerate() {
            let mut p = base;
            for &(j, k) in sup {
                p *= val[j][k] / val[j][0];
            }
            v[i] = p;
            for (a, &(j, k)) in sup.iter().enumerate() {
                let mut q = base / val[j][0] * der[j][k];
                for (b, &(jj, kk)) in sup.iter().enumerate() {
                    if a != b {
                        q *= val[jj][kk] / val[jj][0];
                    }
                }
                g[(j, i)] = q;
            }
        }
        if let Some(t) = &self.transform {
            let t = t.matrix();
            Ok(((t.transpose() * v), g * t))
        } else {
            Ok((v, g))
        }
    }

    /// Values and gradients at many points: returns `(V, [∂_0 V, …, ∂_{d-1} V])`
    /// with every matrix `S × N`.
    pub fn eval_with_gradients(
        &self,
        set: &MultiIndexSet,
        points: &[Vec<f64>],
    ) -> Result<(DMatrix<f64>, Vec<DMatrix<f64>>)> {
        self.check(set)?;
        let layout = Layout::new(set);
        let (n, d, s) = (set.len(), self.dim(), points.len());
        let mut v = DMatrix::zeros(s, n);
        let mut grads = vec![DMatrix::zeros(s, n); d];
        for (r, x) in points.iter().enumerate() {
            let (pv, pg) = self.eval_with_gradient_layout(&layout, x)?;
            for i in 0..n {
                v[(r, i)] = pv[i];
                for (j, gj) in grads.iter_mut().enumerate() {
                    gj[(r, i)] = pg[(j, i)];
                }
            }
        }
        Ok((v, grads))
    }
}

/// `S × N` matrix `(p_α(x_s))` for the tensor-orthonormal basis of `recs`.
pub fn evaluate_basis(
    set: &MultiIndexSet,
    recs: &[Recurrence],
    points: &[Vec<f64>],
) -> Result<DMatrix<f64>> {
    TensorBasis::orthonormal(recs.to_vec()).eval(set, points)
}

/// Entrywise `∂/∂x_coord` of [`evaluate_basis`].
pub fn basis_partial_derivative(
    set: &MultiIndexSet,
    recs: &[Recurrence],
    points: &[Vec<f64>],
    coord: usize,
) -> Result<DMatrix<f64>> {
    if coord >= set.dim() {
        return Err(Error::InvalidArgument(format!(
            "coordinate {coord} out of range for dimension {}",
            set.dim()
        )));
    }
    let (_, mut g) = TensorBasis::orthonormal(recs.to_vec()).eval_with_gradients(set, points)?;
    Ok(g.swap_remove(coord))
}

/// `λ_Θ(x) = 1 / Σ_{α∈Θ} q_α(x)²`.
pub fn christoffel_lambda(theta: &MultiIndexSet, recs: &[Recurrence], x: &[f64]) -> Result<f64> {
    christoffel_lambda_in(theta, &TensorBasis::orthonormal(recs.to_vec()), x)
}

/// Christoffel function for an arbitrary (orthonormal) tensor basis.
pub fn christoffel_lambda_in(theta: &MultiIndexSet, basis: &TensorBasis, x: &[f64]) -> Result<f64> {
    let v = basis.eval(theta, &[x.to_vec()])?;
    Ok(1.0 / v.iter().map(|q| q * q).sum::<f64>())
}

/// Tensor product of univariate rules as `(points, weights)`.
pub fn tensor_rule(rules: &[&UnivariateRule]) -> (Vec<Vec<f64>>, Vec<f64>) {
    let mut pts = vec![Vec::with_capacity(rules.len())];
    let mut wts = vec![1.0];
    for r in rules {
        let mut np = Vec::with_capacity(pts.len() * r.len());
        let mut nw = Vec::with_capacity(pts.len() * r.len());
        for (p, w) in pts.iter().zip(&wts) {
            for (x, v) in r.nodes.iter().zip(&r.weights) {
                let mut q = p.clone();
                q.push(*x);
                np.push(q);
                nw.push(w * v);
            }
        }
        pts = np;
        wts = nw;
    }
    (pts, wts)
}

/// Shared handle to a scalar function, used for densities and integrands.
pub type ScalarFn = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;

/// Index of the multi-index in `set`, by value.
pub fn column_of(set: &MultiIndexSet, a: &[u32]) -> Option<usize> {
    set.position(&MultiIndex::new(a.to_vec()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::indexset::total_degree_set;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn set1(n: u32) -> MultiIndexSet {
        total_degree_set(1, n)
    }

    #[test]
    fn first_polynomials() {
        let u = Measure1d::uniform().recurrence(4).unwrap();
        let q = u.eval(0.3, 1).unwrap();
        assert_relative_eq!(q[0], 1.0);
        assert_relative_eq!(q[1], 3f64.sqrt() * 0.3, epsilon = 1e-15);
        let p = Measure1d::parabolic().recurrence(4).unwrap();
        let q = p.eval(0.3, 1).unwrap();
        // ∫ t² (3/4)(1-t²) dt = 1/5, so q₁ = √5 t
        assert_relative_eq!(q[1], 5f64.sqrt() * 0.3, epsilon = 1e-15);
        assert!(u.is_symmetric() && p.is_symmetric());
        let h = Measure1d::Gaussian { mean: 0.0, std: 1.0 }.recurrence(5).unwrap();
        assert!(h.is_symmetric());
        let j = jacobi_recurrence(2.0, 0.5, 5).unwrap();
        assert!(!j.is_symmetric());
    }

    #[test]
    fn gauss_nodes() {
        let u = Measure1d::uniform().recurrence(4).unwrap();
        let r = gauss_rule(&u, 2).unwrap();
        assert_relative_eq!(r.nodes[0], -(3f64.sqrt()) / 3.0, epsilon = 1e-15);
        assert_relative_eq!(r.nodes[1], 3f64.sqrt() / 3.0, epsilon = 1e-15);
        assert_relative_eq!(r.weights[0], 0.5, epsilon = 1e-15);
        let p = Measure1d::parabolic().recurrence(4).unwrap();
        let r = gauss_rule(&p, 2).unwrap();
        assert_relative_eq!(r.nodes[1], 1.0 / 5f64.sqrt(), epsilon = 1e-15);
        let r = gauss_rule(&u, 1).unwrap();
        assert_eq!(r.nodes.len(), 1);
        assert!(r.nodes[0].abs() < 1e-16);
        assert_relative_eq!(r.weights[0], 1.0);
        assert!(matches!(gauss_rule(&u, 5), Err(Error::DegreeOverflow { .. })));
    }

    /// Raw moments of `(1-t)^α(1+t)^β/Z` from integrating
    /// `d/dt[(1-t)^{α+1}(1+t)^{β+1} t^k]` over `[-1,1]`:
    /// `(k+α+β+2) m_{k+1} = (β-α) m_k + k m_{k-1}`.
    fn jacobi_moment_oracle(alpha: f64, beta: f64, k: usize) -> f64 {
        let mut m = vec![1.0, (beta - alpha) / (alpha + beta + 2.0)];
        for j in 1..k {
            let jf = j as f64;
            m.push(((beta - alpha) * m[j] + jf * m[j - 1]) / (jf + alpha + beta + 2.0));
        }
        m[k]
    }

    #[test]
    fn gauss_exactness() {
        for &(al, be) in &[(0.0, 0.0), (1.0, 1.0), (2.0, 0.5), (-0.5, -0.5)] {
            let rec = jacobi_recurrence(al, be, 12).unwrap();
            for m in 1..=12 {
                let rule = gauss_rule(&rec, m).unwrap();
                assert!(rule.weights.iter().all(|&w| w > 0.0));
                assert!(rule.nodes.windows(2).all(|w| w[0] < w[1]));
                for k in 0..2 * m {
                    let got = rule.integrate(|x| x.powi(k as i32));
                    let want = jacobi_moment_oracle(al, be, k);
                    assert!((got - want).abs() < 1e-13, "({al},{be}) m={m} k={k}: {got} vs {want}");
                }
            }
        }
    }

    #[test]
    fn hermite_exactness() {
        let rec = Measure1d::Gaussian { mean: 0.0, std: 1.0 }.recurrence(8).unwrap();
        let rule = gauss_rule(&rec, 8).unwrap();
        // E[z^{2j}] = (2j-1)!!
        let mut df = 1.0;
        for j in 0..8 {
            if j > 0 {
                df *= (2 * j - 1) as f64;
            }
            let got = rule.integrate(|x| x.powi(2 * j as i32));
            assert!((got - df).abs() < 1e-10 * df, "j={j}: {got} vs {df}");
        }
    }

    #[test]
    fn stieltjes_matches_closed_form() {
        let rec = recurrence_from_density(|t| 0.75 * (1.0 - t * t), -1.0, 1.0, 10).unwrap();
        let exact = jacobi_recurrence(1.0, 1.0, 10).unwrap();
        for k in 0..10 {
            assert!((rec.a[k] - exact.a[k]).abs() < 1e-12);
            assert!((rec.b[k + 1] - exact.b[k + 1]).abs() < 1e-12);
        }
        assert!(stieltjes(&[0.0, 1.0], &[0.5, 0.5], 2).is_err());
    }

    #[test]
    fn radau_family() {
        let u = Measure1d::uniform().recurrence(6).unwrap();
        let g = gauss_rule(&u, 3).unwrap();
        let r0 = radau_family_rule(&u, 3, 0.0).unwrap();
        for (a, b) in g.nodes.iter().zip(&r0.nodes) {
            assert!((a - b).abs() < 1e-12);
        }
        let c = radau_constant(&u, 2, 1.0).unwrap();
        let r = radau_family_rule(&u, 2, c).unwrap();
        assert!((r.nodes[1] - 1.0).abs() < 1e-13);
        for k in 0..=2 {
            let want = if k % 2 == 1 { 0.0 } else { 1.0 / (k as f64 + 1.0) };
            assert!((r.integrate(|x| x.powi(k)) - want).abs() < 1e-13);
        }
        // classical Gauss-Radau: nodes -1/3 and 1, weights 1/4 and 3/4 (probability)
        let left = radau_family_rule(&u, 2, radau_constant(&u, 2, -1.0).unwrap()).unwrap();
        assert_relative_eq!(left.nodes[0], -1.0, epsilon = 1e-13);
        assert_relative_eq!(left.nodes[1], 1.0 / 3.0, epsilon = 1e-13);
        assert_relative_eq!(left.weights[0], 0.25, epsilon = 1e-13);
    }

    proptest! {
        #[test]
        fn radau_exact_and_positive(c in -5.0f64..5.0, m in 1usize..8) {
            let rec = jacobi_recurrence(1.0, 1.0, 8).unwrap();
            let r = radau_family_rule(&rec, m, c).unwrap();
            prop_assert!(r.weights.iter().all(|&w| w > 0.0));
            for k in 0..=(2 * m - 2) {
                let want = jacobi_moment_oracle(1.0, 1.0, k);
                prop_assert!((r.integrate(|x| x.powi(k as i32)) - want).abs() < 1e-12);
            }
        }

        #[test]
        fn gradient_matches_finite_differences(x in -0.95f64..0.95, y in -0.95f64..0.95) {
            let set = total_degree_set(2, 6);
            let basis = TensorBasis::for_measures(&[Measure1d::uniform(), Measure1d::parabolic()], &set).unwrap();
            let (_, g) = basis.eval_with_gradient(&set, &[x, y]).unwrap();
            let h = 1e-6;
            for j in 0..2 {
                let mut p = vec![x, y];
                let mut q = vec![x, y];
                p[j] += h;
                q[j] -= h;
                let vp = basis.eval(&set, &[p]).unwrap();
                let vq = basis.eval(&set, &[q]).unwrap();
                for i in 0..set.len() {
                    let fd = (vp[(0, i)] - vq[(0, i)]) / (2.0 * h);
                    prop_assert!((fd - g[(j, i)]).abs() <= 1e-6 * (1.0 + g[(j, i)].abs()));
                }
            }
        }
    }

    #[test]
    fn basis_orthonormality() {
        let set = set1(7);
        let rec = Measure1d::uniform().recurrence(8).unwrap();
        let rule = gauss_rule(&rec, 8).unwrap();
        let pts: Vec<Vec<f64>> = rule.nodes.iter().map(|&x| vec![x]).collect();
        let v = evaluate_basis(&set, &[rec], &pts).unwrap();
        let w = DMatrix::from_diagonal(&DVector::from_vec(rule.weights.clone()));
        let g = v.transpose() * w * &v;
        assert!((g - DMatrix::identity(8, 8)).amax() < 1e-12);
        assert!(v.column(0).iter().all(|&x| (x - 1.0).abs() < 1e-15));
    }

    #[test]
    fn basis_parity_and_derivative() {
        let set = total_degree_set(2, 5);
        let recs = vec![Measure1d::uniform().recurrence(6).unwrap(); 2];
        let v = evaluate_basis(&set, &recs, &[vec![0.0, 0.0]]).unwrap();
        for (i, a) in set.iter().enumerate() {
            if a.coords().iter().any(|c| c % 2 == 1) {
                assert_eq!(v[(0, i)], 0.0);
            }
        }
        let s1 = set1(3);
        let d = basis_partial_derivative(&s1, &[Measure1d::uniform().recurrence(3).unwrap()], &[vec![0.2], vec![-0.7]], 0).unwrap();
        assert!(d.column(0).iter().all(|&x| x == 0.0));
        assert!(d.column(1).iter().all(|&x| (x - 3f64.sqrt()).abs() < 1e-14));
        assert!(matches!(
            evaluate_basis(&set1(9), &[Measure1d::uniform().recurrence(3).unwrap()], &[vec![0.0]]),
            Err(Error::DegreeOverflow { .. })
        ));
    }

    #[test]
    fn christoffel_values() {
        let u = Measure1d::uniform().recurrence(2).unwrap();
        let p = Measure1d::parabolic().recurrence(2).unwrap();
        let zero = set1(0);
        assert_relative_eq!(christoffel_lambda(&zero, &[u.clone()], &[0.7]).unwrap(), 1.0);
        let t = 0.4;
        assert_relative_eq!(
            christoffel_lambda(&set1(1), &[u], &[t]).unwrap(),
            1.0 / (1.0 + 3.0 * t * t),
            epsilon = 1e-15
        );
        assert_relative_eq!(
            christoffel_lambda(&set1(1), &[p], &[t]).unwrap(),
            1.0 / (1.0 + 5.0 * t * t),
            epsilon = 1e-15
        );
    }

    #[test]
    fn christoffel_rotation_invariance() {
        use rand::{Rng, SeedableRng};
        let set = total_degree_set(2, 3);
        let basis = TensorBasis::for_measures(&[Measure1d::uniform(); 2], &set).unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        let raw = DMatrix::from_fn(set.len(), set.len(), |_, _| rng.random::<f64>() - 0.5);
        let q = raw.qr().q();
        let rotated = basis.clone().with_transform(q);
        for _ in 0..10 {
            let x = [rng.random::<f64>() * 2.0 - 1.0, rng.random::<f64>() * 2.0 - 1.0];
            let a = christoffel_lambda_in(&set, &basis, &x).unwrap();
            let b = christoffel_lambda_in(&set, &rotated, &x).unwrap();
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn column_layout_matches_rows() {
        let set = total_degree_set(3, 4);
        let basis = TensorBasis::for_measures(&[Measure1d::uniform(); 3], &set).unwrap();
        let pts = vec![vec![0.1, -0.3, 0.8], vec![-0.9, 0.2, 0.0]];
        let rows = basis.eval(&set, &pts).unwrap();
        let cols = basis.eval_columns(&set, &pts).unwrap();
        assert!((rows.transpose() - cols).amax() < 1e-15);
    }

    #[test]
    fn monomial_basis() {
        let b = Basis1d::Monomial { center: 1.0, scale: 2.0 };
        let mut v = [0.0; 4];
        let mut d = [0.0; 4];
        b.eval_with_derivative_into(3.0, &mut v, &mut d);
        assert_eq!(v, [1.0, 1.0, 1.0, 1.0]);
        assert_eq!(d, [0.0, 0.5, 1.0, 1.5]);
    }
}
