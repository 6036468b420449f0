//! Moment vectors `m_α = ∫ p_α dμ` and the [`MomentProblem`] consumed by the
//! rule generators.

use std::collections::HashMap;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::domains::{box_gauss_rule, BoxDomain, DensityMeasure, Domain, Measure, DENSITY_GRID};
use crate::error::{Error, Result};
use crate::indexset::{downward_closure, MultiIndex, MultiIndexSet};
use crate::orthopoly::{gauss_rule, Basis1d, Measure1d, TensorBasis};

/// Schema tag of serialized moment problems.
pub const MOMENTS_SCHEMA: &str = "quadgen.moments.v1";

/// Largest total degree accepted by [`ridge_moments`].
pub const RIDGE_DEGREE_LIMIT: u32 = 20;

/// Basis, target moments and domain of a moment-matching problem.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MomentProblem {
    #[serde(default = "default_schema")]
    pub schema: String,
    pub index_set: MultiIndexSet,
    pub basis: TensorBasis,
    pub moments: Vec<f64>,
    pub domain: Domain,
    /// Human-readable description of the measure.
    pub measure: String,
    /// Short note on the basis choice.
    #[serde(default)]
    pub basis_note: String,
}

fn default_schema() -> String {
    MOMENTS_SCHEMA.to_string()
}

impl MomentProblem {
    pub fn new(
        index_set: MultiIndexSet,
        basis: TensorBasis,
        moments: Vec<f64>,
        domain: Domain,
        measure: impl Into<String>,
    ) -> Result<Self> {
        if moments.len() != index_set.len() {
            return Err(Error::DimensionMismatch { expected: index_set.len(), found: moments.len() });
        }
        if basis.dim() != index_set.dim() || domain.dim() != index_set.dim() {
            return Err(Error::DimensionMismatch { expected: index_set.dim(), found: basis.dim().min(domain.dim()) });
        }
        Ok(MomentProblem {
            schema: MOMENTS_SCHEMA.to_string(),
            index_set,
            basis,
            moments,
            domain,
            measure: measure.into(),
            basis_note: String::new(),
        })
    }

    /// Tensor-product measure matched in its own orthonormal basis.
    pub fn tensor(set: &MultiIndexSet, factors: &[Measure1d]) -> Result<Self> {
        if factors.len() != set.dim() {
            return Err(Error::DimensionMismatch { expected: set.dim(), found: factors.len() });
        }
        let measure = Measure::Tensor(factors.to_vec());
        let basis = TensorBasis::for_measures(factors, set)?;
        let moments = tensor_moments(factors, set, &basis)?;
        let mut p = MomentProblem::new(set.clone(), basis, moments, measure.domain()?, measure.describe())?;
        p.basis_note = "tensor orthonormal".into();
        Ok(p)
    }

    /// Uniform probability measure on a box.
    pub fn uniform_box(set: &MultiIndexSet, bounds: &[(f64, f64)]) -> Result<Self> {
        let f: Vec<Measure1d> = bounds.iter().map(|&(l, u)| Measure1d::Uniform { lower: l, upper: u }).collect();
        MomentProblem::tensor(set, &f)
    }

    pub fn len(&self) -> usize {
        self.moments.len()
    }

    pub fn is_empty(&self) -> bool {
        self.moments.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.index_set.dim()
    }

    /// `S × N` basis evaluation at `points`.
    pub fn eval(&self, points: &[Vec<f64>]) -> Result<DMatrix<f64>> {
        self.basis.eval(&self.index_set, points)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let p: MomentProblem = serde_json::from_str(s)?;
        if p.moments.len() != p.index_set.len() {
            return Err(Error::DimensionMismatch { expected: p.index_set.len(), found: p.moments.len() });
        }
        Ok(p)
    }
}

/// `∫ φ_{k,j} dμ_j` for `k = 0..=n`.
fn univariate_integrals(factor: &Basis1d, measure: &Measure1d, n: usize) -> Result<Vec<f64>> {
    let m = n / 2 + 1;
    let rule = gauss_rule(&measure.recurrence(m)?, m)?;
    let mut acc = vec![0.0; n + 1];
    let mut buf = vec![0.0; n + 1];
    for (x, w) in rule.nodes.iter().zip(&rule.weights) {
        factor.eval_into(*x, &mut buf);
        for (a, b) in acc.iter_mut().zip(&buf) {
            *a += w * b;
        }
    }
    Ok(acc)
}

fn apply_transform_to_moments(basis: &TensorBasis, raw: Vec<f64>) -> Vec<f64> {
    match &basis.transform {
        Some(t) => (t.matrix().transpose() * DVector::from_vec(raw)).iter().copied().collect(),
        None => raw,
    }
}

/// Moments of a tensor-product measure, `m_α = ∏_j ∫ φ_{α_j, j} dμ_j`,
/// from univariate Gauss rules.
pub fn tensor_moments(factors: &[Measure1d], set: &MultiIndexSet, basis: &TensorBasis) -> Result<Vec<f64>> {
    if factors.len() != set.dim() || basis.dim() != set.dim() {
        return Err(Error::DimensionMismatch { expected: set.dim(), found: factors.len() });
    }
    let md = set.max_degrees();
    let tables = (0..set.dim())
        .map(|j| univariate_integrals(&basis.factors[j], &factors[j], md[j] as usize))
        .collect::<Result<Vec<_>>>()?;
    let raw = set
        .iter()
        .map(|a| a.coords().iter().enumerate().map(|(j, &k)| tables[j][k as usize]).product())
        .collect();
    Ok(apply_transform_to_moments(basis, raw))
}

/// Points per chunk in sample averages; fixed so sums are reproducible.
const SAMPLE_CHUNK: usize = 4096;

/// `m_α = (1/P) Σ_i p_α(x_i)`.
pub fn sample_moments(samples: &[Vec<f64>], set: &MultiIndexSet, basis: &TensorBasis) -> Result<Vec<f64>> {
    weighted_sum(samples, None, set, basis).map(|v| {
        let p = samples.len() as f64;
        v.into_iter().map(|x| x / p).collect()
    })
}

/// `Σ_i w_i p_α(x_i)` evaluated in fixed chunks.
fn weighted_sum(
    points: &[Vec<f64>],
    weights: Option<&[f64]>,
    set: &MultiIndexSet,
    basis: &TensorBasis,
) -> Result<Vec<f64>> {
    if points.is_empty() {
        return Err(Error::InvalidArgument("no sample points".into()));
    }
    let n = set.len();
    let partials: Vec<Result<DVector<f64>>> = points
        .par_chunks(SAMPLE_CHUNK)
        .enumerate()
        .map(|(c, chunk)| {
            let v = basis.eval_columns(set, chunk)?;
            Ok(match weights {
                Some(w) => {
                    let start = c * SAMPLE_CHUNK;
                    v * DVector::from_column_slice(&w[start..start + chunk.len()])
                }
                None => v.column_sum(),
            })
        })
        .collect();
    let mut total = DVector::zeros(n);
    for p in partials {
        total += p?;
    }
    Ok(total.iter().copied().collect())
}

/// Moments of a density measure by tensor Gauss-Legendre quadrature
/// (`200` points per axis in two dimensions).
pub fn density_moments(m: &DensityMeasure, set: &MultiIndexSet, basis: &TensorBasis) -> Result<Vec<f64>> {
    let n = if m.domain.dim() <= 2 { DENSITY_GRID } else { 40 };
    let (pts, wts) = box_gauss_rule(&m.domain, n)?;
    let w: Vec<f64> = pts.iter().zip(&wts).map(|(x, w)| w * m.pdf(x)).collect();
    weighted_sum(&pts, Some(&w), set, basis)
}

/// Monomial moments `∫ (A y)^α dν(y)` of the ridge push-forward of a tensor
/// measure, by multinomial expansion into univariate moments of `ν`.
pub fn ridge_moments(a: &[Vec<f64>], base: &[Measure1d], set: &MultiIndexSet) -> Result<Vec<f64>> {
    let s = a.len();
    if s != set.dim() {
        return Err(Error::DimensionMismatch { expected: s, found: set.dim() });
    }
    let d = base.len();
    if let Some(r) = a.iter().find(|r| r.len() != d) {
        return Err(Error::DimensionMismatch { expected: d, found: r.len() });
    }
    let deg = set.max_total_degree();
    if deg > RIDGE_DEGREE_LIMIT {
        return Err(Error::ExpansionTooLarge { degree: deg, limit: RIDGE_DEGREE_LIMIT });
    }
    let raw: Vec<Vec<f64>> = base.iter().map(|m| m.raw_moments(deg as usize)).collect::<Result<_>>()?;
    let binom = binomial_table(deg as usize);
    Ok(set.iter().map(|alpha| ridge_moment(a, &raw, &binom, alpha)).collect())
}

fn binomial_table(n: usize) -> Vec<Vec<f64>> {
    let mut t = vec![vec![0.0; n + 1]; n + 1];
    for i in 0..=n {
        t[i][0] = 1.0;
        for j in 1..=i {
            t[i][j] = t[i - 1][j - 1] + if j < i { t[i - 1][j] } else { 0.0 };
        }
    }
    t
}

/// Dynamic program over ambient coordinates `k`: the state is the exponent
/// vector still to be distributed, and coordinate `k` takes `γ ≤ r` with
/// weight `∏_i C(r_i, γ_i) A_ik^{γ_i} · E[y_k^{|γ|}]`.
fn ridge_moment(a: &[Vec<f64>], raw: &[Vec<f64>], binom: &[Vec<f64>], alpha: &MultiIndex) -> f64 {
    let s = a.len();
    let d = raw.len();
    let dims: Vec<usize> = alpha.coords().iter().map(|&x| x as usize + 1).collect();
    let size: usize = dims.iter().product();
    let decode = |mut idx: usize| -> Vec<usize> {
        let mut r = vec![0; s];
        for i in (0..s).rev() {
            r[i] = idx % dims[i];
            idx /= dims[i];
        }
        r
    };
    let encode = |r: &[usize]| -> usize { r.iter().zip(&dims).fold(0, |acc, (&v, &m)| acc * m + v) };
    let mut cur = vec![0.0; size];
    cur[encode(&alpha.coords().iter().map(|&x| x as usize).collect::<Vec<_>>())] = 1.0;
    for k in 0..d {
        let mut next = vec![0.0; size];
        for (idx, &val) in cur.iter().enumerate() {
            if val == 0.0 {
                continue;
            }
            let r = decode(idx);
            let mut gamma = vec![0usize; s];
            loop {
                let total: usize = gamma.iter().sum();
                let mom = raw[k][total];
                if mom != 0.0 {
                    let mut coef = val * mom;
                    for i in 0..s {
                        coef *= binom[r[i]][gamma[i]] * a[i][k].powi(gamma[i] as i32);
                    }
                    let rest: Vec<usize> = r.iter().zip(&gamma).map(|(x, g)| x - g).collect();
                    next[encode(&rest)] += coef;
                }
                // next γ ≤ r in odometer order
                let mut i = 0;
                while i < s {
                    if gamma[i] < r[i] {
                        gamma[i] += 1;
                        break;
                    }
                    gamma[i] = 0;
                    i += 1;
                }
                if i == s {
                    break;
                }
            }
        }
        cur = next;
    }
    cur[0]
}

/// Power-basis coefficients `φ_k(t) = Σ_i c[k][i] t^i` for `k ≤ n`.
fn power_coefficients(factor: &Basis1d, n: usize) -> Vec<Vec<f64>> {
    let mut c = vec![vec![0.0; n + 1]; n + 1];
    match factor {
        Basis1d::Orthonormal(rec) => {
            c[0][0] = 1.0 / rec.b[0];
            for k in 0..n {
                for i in 0..=k + 1 {
                    let shifted = if i > 0 { c[k][i - 1] } else { 0.0 };
                    let prev = if k > 0 { rec.b[k] * c[k - 1][i] } else { 0.0 };
                    c[k + 1][i] = (shifted - rec.a[k] * c[k][i] - prev) / rec.b[k + 1];
                }
            }
        }
        Basis1d::Monomial { center, scale } => {
            let binom = binomial_table(n);
            for k in 0..=n {
                for i in 0..=k {
                    c[k][i] = binom[k][i] * (-center).powi((k - i) as i32) / scale.powi(k as i32);
                }
            }
        }
    }
    c
}

/// Moments in `basis` from monomial moments `x^β` over the downward closure
/// of `set`.
pub fn convert_monomial_moments(
    set: &MultiIndexSet,
    basis: &TensorBasis,
    monomial: &HashMap<MultiIndex, f64>,
) -> Result<Vec<f64>> {
    let md = set.max_degrees();
    let coef: Vec<Vec<Vec<f64>>> =
        basis.factors.iter().zip(&md).map(|(f, &k)| power_coefficients(f, k as usize)).collect();
    let mut raw = Vec::with_capacity(set.len());
    for alpha in set.iter() {
        let below = downward_closure(&MultiIndexSet::new(set.dim(), [alpha.clone()])?);
        let mut acc = 0.0;
        for beta in below.iter() {
            let c: f64 = (0..set.dim())
                .map(|j| coef[j][alpha.coords()[j] as usize][beta.coords()[j] as usize])
                .product();
            if c != 0.0 {
                let m = monomial.get(beta).ok_or_else(|| {
                    Error::InvalidArgument(format!("missing monomial moment {beta:?}"))
                })?;
                acc += c * m;
            }
        }
        raw.push(acc);
    }
    Ok(apply_transform_to_moments(basis, raw))
}

/// Tensor Legendre basis, orthonormal for the uniform measure on `b`.
pub fn box_legendre_basis(b: &BoxDomain, set: &MultiIndexSet) -> Result<TensorBasis> {
    let f: Vec<Measure1d> =
        b.lower.iter().zip(&b.upper).map(|(&l, &u)| Measure1d::Uniform { lower: l, upper: u }).collect();
    TensorBasis::for_measures(&f, set)
}

/// Outcome of [`gram_conditioning_basis`].
#[derive(Debug, Clone)]
pub struct ConditionedBasis {
    pub basis: TensorBasis,
    /// True when the sample Gram matrix was singular and the bounding-box
    /// basis was kept.
    pub fallback: bool,
    /// Samples used for the Gram matrix.
    pub samples: usize,
}

/// Default sample count for Gram conditioning.
pub const GRAM_SAMPLES: usize = 100_000;

/// Basis for a general measure: tensor-orthonormal for tensor measures,
/// otherwise bounding-box Legendre re-orthogonalized against samples of
/// `μ` via Cholesky of the sample Gram matrix, `p̃ = p L^{-T}`.
pub fn gram_conditioning_basis(measure: &Measure, set: &MultiIndexSet, seed: u64) -> Result<ConditionedBasis> {
    if let Measure::Tensor(f) = measure {
        return Ok(ConditionedBasis { basis: TensorBasis::for_measures(f, set)?, fallback: false, samples: 0 });
    }
    let bbox = measure.domain()?.bounding_box();
    let basis = box_legendre_basis(&bbox, set)?;
    let samples = match measure {
        Measure::Empirical(e) => e.samples.clone(),
        _ => measure.sample_seeded(GRAM_SAMPLES, seed)?,
    };
    let p = samples.len();
    let fallback = ConditionedBasis { basis: basis.clone(), fallback: true, samples: p };
    if p < set.len() {
        return Ok(fallback);
    }
    let v = basis.eval_columns(set, &samples)?;
    let gram = (&v * v.transpose()) / p as f64;
    let Some(chol) = gram.cholesky() else {
        return Ok(fallback);
    };
    let l = chol.l();
    let diag = l.diagonal();
    if diag.min() <= 1e-7 * diag.max() {
        return Ok(fallback);
    }
    let linv_t = match l.try_inverse() {
        Some(inv) => inv.transpose(),
        None => return Ok(fallback),
    };
    Ok(ConditionedBasis { basis: basis.with_transform(linv_t), fallback: false, samples: p })
}

/// Where target moments come from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", tag = "kind", content = "count")]
pub enum MomentSource {
    /// Analytic or high-order quadrature moments.
    Exact,
    /// Monte Carlo moments from this many samples of the measure.
    Samples(usize),
}

/// Options for [`build_problem`].
#[derive(Debug, Clone, Copy)]
pub struct ProblemOptions {
    pub source: MomentSource,
    /// Re-orthogonalize the bounding-box basis against samples.
    pub condition: bool,
    pub seed: u64,
}

impl Default for ProblemOptions {
    fn default() -> Self {
        ProblemOptions { source: MomentSource::Exact, condition: false, seed: 0 }
    }
}

/// Assembles the moment problem for `measure` on `set`.
///
/// Tensor measures use their own orthonormal basis; other measures use the
/// Legendre basis of their bounding box, optionally Gram-conditioned.
pub fn build_problem(set: &MultiIndexSet, measure: &Measure, opts: &ProblemOptions) -> Result<MomentProblem> {
    if measure.dim() != set.dim() {
        return Err(Error::DimensionMismatch { expected: set.dim(), found: measure.dim() });
    }
    let domain = measure.domain()?;
    let (basis, note) = match measure {
        Measure::Tensor(f) => (TensorBasis::for_measures(f, set)?, "tensor orthonormal".to_string()),
        _ if opts.condition => {
            let c = gram_conditioning_basis(measure, set, opts.seed)?;
            let note = if c.fallback {
                "bounding-box legendre (gram conditioning fell back)".to_string()
            } else {
                format!("bounding-box legendre, gram-conditioned on {} samples", c.samples)
            };
            (c.basis, note)
        }
        _ => (box_legendre_basis(&domain.bounding_box(), set)?, "bounding-box legendre".to_string()),
    };
    let moments = match (opts.source, measure) {
        (MomentSource::Samples(p), _) if p > 0 => {
            let samples = match measure {
                Measure::Empirical(e) => e.samples.clone(),
                _ => measure.sample_seeded(p, opts.seed.wrapping_add(0x5eed))?,
            };
            sample_moments(&samples, set, &basis)?
        }
        (_, Measure::Tensor(f)) => tensor_moments(f, set, &basis)?,
        (_, Measure::Density(m)) => density_moments(m, set, &basis)?,
        (_, Measure::Empirical(e)) => sample_moments(&e.samples, set, &basis)?,
        (_, Measure::Ridge(r)) => {
            let closure = downward_closure(set);
            let mono = ridge_moments(r.matrix(), &r.base, &closure)?;
            let table: HashMap<MultiIndex, f64> = closure.iter().cloned().zip(mono).collect();
            convert_monomial_moments(set, &basis, &table)?
        }
    };
    let mut p = MomentProblem::new(set.clone(), basis, moments, domain, measure.describe())?;
    p.basis_note = note;
    if let MomentSource::Samples(n) = opts.source {
        p.measure = format!("{} [moments from {n} samples]", p.measure);
    }
    Ok(p)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domains::{banana_measure, rng_from_seed, EmpiricalMeasure, RidgeMeasure};
    use crate::indexset::{total_degree_set, MultiIndex};
    use rand::Rng;

    fn random_orthonormal(s: usize, d: usize, seed: u64) -> Vec<Vec<f64>> {
        let mut rng = rng_from_seed(seed);
        let m = DMatrix::from_fn(d, s, |_, _| rng.random::<f64>() - 0.5);
        let q = m.qr().q();
        (0..s).map(|i| (0..d).map(|j| q[(j, i)]).collect()).collect()
    }

    #[test]
    fn orthonormal_self_basis_gives_unit_vector() {
        let set = total_degree_set(3, 6);
        for f in [Measure1d::uniform(), Measure1d::parabolic(), Measure1d::Gaussian { mean: 1.0, std: 2.0 }] {
            let p = MomentProblem::tensor(&set, &[f; 3]).unwrap_or_else(|_| {
                // gaussian has no bounded domain; check moments directly
                let basis = TensorBasis::for_measures(&[f; 3], &set).unwrap();
                let m = tensor_moments(&[f; 3], &set, &basis).unwrap();
                MomentProblem {
                    schema: MOMENTS_SCHEMA.into(),
                    index_set: set.clone(),
                    basis,
                    moments: m,
                    domain: Domain::Box(BoxDomain::cube(3, -1.0, 1.0)),
                    measure: String::new(),
                    basis_note: String::new(),
                }
            });
            assert!((p.moments[0] - 1.0).abs() < 1e-14);
            assert!(p.moments[1..].iter().all(|m| m.abs() < 1e-14), "{f:?}");
        }
    }

    #[test]
    fn monomial_tensor_moments() {
        let set = total_degree_set(2, 4);
        let m = tensor_moments(&[Measure1d::uniform(); 2], &set, &TensorBasis::monomial(2)).unwrap();
        let i = set.position(&MultiIndex::new(vec![2, 0])).unwrap();
        assert!((m[i] - 1.0 / 3.0).abs() < 1e-15);
        for (a, v) in set.iter().zip(&m) {
            if a.coords().iter().any(|c| c % 2 == 1) {
                assert_eq!(*v, 0.0);
            }
        }
    }

    #[test]
    fn sample_moment_basics() {
        let set = total_degree_set(2, 3);
        let basis = TensorBasis::for_measures(&[Measure1d::uniform(); 2], &set).unwrap();
        let m = sample_moments(&[vec![0.0, 0.0]], &set, &basis).unwrap();
        assert_eq!(m[0], 1.0);
        for (a, v) in set.iter().zip(&m) {
            if a.total_degree() % 2 == 1 {
                assert_eq!(*v, 0.0);
            }
        }
    }

    #[test]
    fn sample_moments_converge() {
        let set = total_degree_set(2, 6);
        let basis = TensorBasis::monomial(2);
        let exact = tensor_moments(&[Measure1d::uniform(); 2], &set, &basis).unwrap();
        let samples = Measure::uniform_cube(2).sample_seeded(1_000_000, 4).unwrap();
        let est = sample_moments(&samples, &set, &basis).unwrap();
        let worst = exact.iter().zip(&est).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        assert!(worst < 5e-3, "{worst}");
        assert_eq!(est, sample_moments(&samples, &set, &basis).unwrap());
    }

    #[test]
    fn ridge_identity_and_cross_term() {
        let set = total_degree_set(2, 4);
        let id = vec![vec![1.0, 0.0], vec![0.0, 1.0]];
        let r = ridge_moments(&id, &[Measure1d::uniform(); 2], &set).unwrap();
        let t = tensor_moments(&[Measure1d::uniform(); 2], &set, &TensorBasis::monomial(2)).unwrap();
        for (a, b) in r.iter().zip(&t) {
            assert!((a - b).abs() < 1e-15);
        }
        let a = random_orthonormal(2, 20, 3);
        let set = total_degree_set(2, 2);
        let m = ridge_moments(&a, &[Measure1d::uniform(); 20], &set).unwrap();
        let i = set.position(&MultiIndex::new(vec![1, 1])).unwrap();
        let want: f64 = (0..20).map(|k| a[0][k] * a[1][k]).sum::<f64>() / 3.0;
        assert!((m[i] - want).abs() < 1e-15);
        assert_eq!(m[0], 1.0);
        assert!(matches!(
            ridge_moments(&a, &[Measure1d::uniform(); 20], &total_degree_set(2, 21)),
            Err(Error::ExpansionTooLarge { .. })
        ));
    }

    #[test]
    fn ridge_moments_against_brute_force_expansion() {
        // small case: expand (a·y)^p (b·y)^q over all monomials of y directly
        let a = random_orthonormal(2, 3, 8);
        let set = total_degree_set(2, 4);
        let m = ridge_moments(&a, &[Measure1d::parabolic(); 3], &set).unwrap();
        let rule = gauss_rule(&Measure1d::parabolic().recurrence(3).unwrap(), 3).unwrap();
        for (alpha, got) in set.iter().zip(&m) {
            let mut want = 0.0;
            for (x0, w0) in rule.nodes.iter().zip(&rule.weights) {
                for (x1, w1) in rule.nodes.iter().zip(&rule.weights) {
                    for (x2, w2) in rule.nodes.iter().zip(&rule.weights) {
                        let y = [*x0, *x1, *x2];
                        let u: f64 = (0..3).map(|k| a[0][k] * y[k]).sum();
                        let v: f64 = (0..3).map(|k| a[1][k] * y[k]).sum();
                        want += w0 * w1 * w2 * u.powi(alpha.coords()[0] as i32) * v.powi(alpha.coords()[1] as i32);
                    }
                }
            }
            assert!((got - want).abs() < 1e-14, "{alpha:?}");
        }
    }

    #[test]
    fn monomial_conversion_round_trip() {
        let set = total_degree_set(2, 5);
        let f = [Measure1d::parabolic(), Measure1d::Uniform { lower: 0.0, upper: 2.0 }];
        let mono = tensor_moments(&f, &set, &TensorBasis::monomial(2)).unwrap();
        let table: HashMap<MultiIndex, f64> = set.iter().cloned().zip(mono).collect();
        let basis = TensorBasis::for_measures(&f, &set).unwrap();
        let conv = convert_monomial_moments(&set, &basis, &table).unwrap();
        assert!((conv[0] - 1.0).abs() < 1e-13);
        assert!(conv[1..].iter().all(|m| m.abs() < 1e-12));
    }

    #[test]
    fn density_moments_are_normalized() {
        let set = total_degree_set(2, 2);
        let b = banana_measure();
        let basis = box_legendre_basis(&b.domain, &set).unwrap();
        let m = density_moments(&b, &set, &basis).unwrap();
        assert!((m[0] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn conditioning() {
        let set = total_degree_set(2, 2);
        let t = gram_conditioning_basis(&Measure::uniform_cube(2), &set, 0).unwrap();
        assert!(t.basis.transform.is_none() && !t.fallback);

        let banana = Measure::Density(banana_measure());
        let c = gram_conditioning_basis(&banana, &set, 1).unwrap();
        assert!(!c.fallback);
        let fresh = banana.sample_seeded(100_000, 77).unwrap();
        let v = c.basis.eval_columns(&set, &fresh).unwrap();
        let g = (&v * v.transpose()) / fresh.len() as f64 - DMatrix::identity(set.len(), set.len());
        let spec = g.symmetric_eigenvalues().amax();
        assert!(spec < 0.05, "{spec}");

        let few = EmpiricalMeasure::new(vec![vec![0.0, 0.0], vec![1.0, 0.5], vec![0.2, 0.9]], None).unwrap();
        let c = gram_conditioning_basis(&Measure::Empirical(few), &set, 0).unwrap();
        assert!(c.fallback);
    }

    #[test]
    fn ridge_problem_matches_samples() {
        let a = random_orthonormal(2, 6, 1);
        let r = RidgeMeasure::uniform(&a, 0).unwrap();
        let measure = Measure::Ridge(r);
        let set = total_degree_set(2, 3);
        let exact = build_problem(&set, &measure, &ProblemOptions::default()).unwrap();
        let mc = build_problem(
            &set,
            &measure,
            &ProblemOptions { source: MomentSource::Samples(400_000), ..Default::default() },
        )
        .unwrap();
        assert!((exact.moments[0] - 1.0).abs() < 1e-13);
        for (a, b) in exact.moments.iter().zip(&mc.moments) {
            assert!((a - b).abs() < 0.01);
        }
    }

    #[test]
    fn json_round_trip() {
        let set = total_degree_set(2, 2);
        let p = MomentProblem::uniform_box(&set, &[(-1.0, 1.0), (0.0, 3.0)]).unwrap();
        let q = MomentProblem::from_json(&p.to_json().unwrap()).unwrap();
        assert_eq!(q.moments, p.moments);
        assert_eq!(q.index_set, p.index_set);
        let mut rng = rng_from_seed(0);
        let x = vec![vec![rng.random::<f64>(), 1.0]];
        assert_eq!(p.eval(&x).unwrap(), q.eval(&x).unwrap());
    }
}
