//! Integration domains and probability measures.
//!
//! Domains are boxes or zonotopes `{A y : y ∈ [-1,1]^d}`. Measures are tensor
//! products of named univariate families, bounded densities on a box, sample
//! clouds, or the push-forward of a tensor measure through a ridge map `A`.

use std::fmt;
use std::sync::{Arc, OnceLock};

use nalgebra::DMatrix;
use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Beta, Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::orthopoly::{gauss_legendre, tensor_rule, Measure1d, ScalarFn};

/// Tolerance for halfspace membership.
pub const CONTAINS_TOL: f64 = 1e-12;

/// Deterministic generator used throughout the crate.
pub fn rng_from_seed(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Axis-aligned box `∏ [lower_j, upper_j]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoxDomain {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl BoxDomain {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        if lower.len() != upper.len() {
            return Err(Error::DimensionMismatch { expected: lower.len(), found: upper.len() });
        }
        if let Some(j) = (0..lower.len()).find(|&j| !(upper[j] > lower[j]) || !lower[j].is_finite() || !upper[j].is_finite()) {
            return Err(Error::DegenerateBox(j));
        }
        Ok(BoxDomain { lower, upper })
    }

    pub fn cube(dim: usize, lo: f64, hi: f64) -> Self {
        BoxDomain { lower: vec![lo; dim], upper: vec![hi; dim] }
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn volume(&self) -> f64 {
        self.lower.iter().zip(&self.upper).map(|(l, u)| u - l).product()
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        x.len() == self.dim()
            && x.iter().zip(self.lower.iter().zip(&self.upper)).all(|(v, (l, u))| *v >= *l && *v <= *u)
    }

    pub fn clamp(&self, x: &mut [f64]) {
        for (v, (l, u)) in x.iter_mut().zip(self.lower.iter().zip(&self.upper)) {
            *v = v.clamp(*l, *u);
        }
    }

    pub fn sample_uniform<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        self.lower.iter().zip(&self.upper).map(|(l, u)| l + (u - l) * rng.random::<f64>()).collect()
    }
}

/// Componentwise affine map `x ↦ shift + scale ∘ x`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AffineMap {
    pub scale: Vec<f64>,
    pub shift: Vec<f64>,
}

impl AffineMap {
    pub fn identity(dim: usize) -> Self {
        AffineMap { scale: vec![1.0; dim], shift: vec![0.0; dim] }
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        x.iter().zip(self.scale.iter().zip(&self.shift)).map(|(v, (a, b))| b + a * v).collect()
    }

    pub fn inverse(&self) -> AffineMap {
        AffineMap {
            scale: self.scale.iter().map(|a| 1.0 / a).collect(),
            shift: self.shift.iter().zip(&self.scale).map(|(b, a)| -b / a).collect(),
        }
    }

    /// Jacobian determinant.
    pub fn det(&self) -> f64 {
        self.scale.iter().product()
    }

    /// Density of the push-forward of a density `p` on the source.
    pub fn push_density(&self, p: f64) -> f64 {
        p / self.det().abs()
    }
}

/// Affine bijection carrying `source` onto `target`, corner to corner.
pub fn affine_map_box(source: &BoxDomain, target: &BoxDomain) -> Result<AffineMap> {
    if source.dim() != target.dim() {
        return Err(Error::DimensionMismatch { expected: source.dim(), found: target.dim() });
    }
    for b in [source, target] {
        if let Some(k) = (0..b.dim()).find(|&k| !(b.upper[k] > b.lower[k])) {
            return Err(Error::DegenerateBox(k));
        }
    }
    let scale: Vec<f64> = (0..source.dim())
        .map(|j| (target.upper[j] - target.lower[j]) / (source.upper[j] - source.lower[j]))
        .collect();
    let shift = (0..source.dim()).map(|j| target.lower[j] - scale[j] * source.lower[j]).collect();
    Ok(AffineMap { scale, shift })
}

/// `normal · x ≤ offset` with a unit normal.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Halfspace {
    pub normal: Vec<f64>,
    pub offset: f64,
}

impl Halfspace {
    pub fn violation(&self, x: &[f64]) -> f64 {
        dot(&self.normal, x) - self.offset
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Zonotope `Z = {A y : y ∈ [-1,1]^d}` for an `s × d` matrix `A` of rank `s`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Zonotope {
    /// Rows of `A` (`s` rows of length `d`).
    pub generators: Vec<Vec<f64>>,
    pub halfspaces: Vec<Halfspace>,
    /// Vertices; for `s = 2` in counter-clockwise order.
    pub vertices: Vec<Vec<f64>>,
}

/// Default number of random probe directions, `10·2^s·d`.
pub fn default_probe_count(s: usize, d: usize) -> usize {
    10 * (1usize << s.min(20)) * d
}

/// Zonotope with exact facets and randomly probed vertices.
///
/// A vertex maximizing `gᵀx` over `Z` is `A sign(Aᵀg)`; `n_probe` random
/// directions `g` give a centrally symmetric vertex subset. Facets are
/// computed exactly: every facet normal is orthogonal to `s - 1` linearly
/// independent generators (columns of `A`), and the offset in direction `n`
/// is the support function `Σ_k |n · a_k|`. For `s = 2` the vertex list is
/// completed with the endpoints of every edge, so it is exact as well.
pub fn zonotope_build(a: &[Vec<f64>], n_probe: Option<usize>, seed: u64) -> Result<Zonotope> {
    let s = a.len();
    if s == 0 {
        return Err(Error::InvalidArgument("projection matrix has no rows".into()));
    }
    let d = a[0].len();
    if let Some(r) = a.iter().find(|r| r.len() != d) {
        return Err(Error::DimensionMismatch { expected: d, found: r.len() });
    }
    if s > d {
        return Err(Error::RankDeficient { rank: d, expected: s });
    }
    let am = DMatrix::from_fn(s, d, |i, j| a[i][j]);
    let sv = am.clone().svd(false, false).singular_values;
    let smax = sv.max();
    let rank = sv.iter().filter(|&&x| x > 1e-12 * smax.max(1e-300)).count();
    if rank < s {
        return Err(Error::RankDeficient { rank, expected: s });
    }
    let col = |k: usize| -> Vec<f64> { (0..s).map(|i| a[i][k]).collect() };
    let support = |n: &[f64]| -> f64 { (0..d).map(|k| dot(n, &col(k)).abs()).sum() };
    let vertex_for = |g: &[f64], tie: f64| -> Vec<f64> {
        let y: Vec<f64> = (0..d)
            .map(|k| {
                let c = dot(g, &col(k));
                if c.abs() <= 1e-12 * smax { tie } else { c.signum() }
            })
            .collect();
        (0..s).map(|i| dot(&a[i], &y)).collect()
    };

    let mut normals: Vec<Vec<f64>> = Vec::new();
    if s == 1 {
        normals.push(vec![1.0]);
        normals.push(vec![-1.0]);
    } else {
        for subset in Combinations::new(d, s - 1) {
            // null vector of the chosen generators
            let m = DMatrix::from_fn(s, s, |i, j| if j < s - 1 { a[i][subset[j]] } else { 0.0 });
            let svd = m.transpose().svd(false, true);
            let vt = svd.v_t.ok_or(Error::EigenFailure)?;
            let sv = &svd.singular_values;
            let mut order: Vec<usize> = (0..s).collect();
            order.sort_by(|&x, &y| sv[y].total_cmp(&sv[x]));
            // the s-1 generators must be independent
            if sv[order[s - 2]] <= 1e-10 * smax {
                continue;
            }
            let n: Vec<f64> = vt.row(order[s - 1]).iter().copied().collect();
            let norm = n.iter().map(|x| x * x).sum::<f64>().sqrt();
            let n: Vec<f64> = n.iter().map(|x| x / norm).collect();
            for sign in [1.0, -1.0] {
                let cand: Vec<f64> = n.iter().map(|x| sign * x).collect();
                if !normals.iter().any(|m| m.iter().zip(&cand).all(|(p, q)| (p - q).abs() < 1e-10)) {
                    normals.push(cand);
                }
            }
        }
    }
    let halfspaces: Vec<Halfspace> =
        normals.into_iter().map(|n| { let offset = support(&n); Halfspace { normal: n, offset } }).collect();

    let mut rng = rng_from_seed(seed);
    let normal = Normal::new(0.0, 1.0).expect("standard normal");
    let mut vertices: Vec<Vec<f64>> = Vec::new();
    let push = |v: Vec<f64>, out: &mut Vec<Vec<f64>>| {
        let scale = 1e-10 * smax.max(1.0) * d as f64;
        if !out.iter().any(|w| w.iter().zip(&v).all(|(p, q)| (p - q).abs() <= scale)) {
            out.push(v);
        }
    };
    for _ in 0..n_probe.unwrap_or_else(|| default_probe_count(s, d)) {
        let g: Vec<f64> = (0..s).map(|_| normal.sample(&mut rng)).collect();
        let v = vertex_for(&g, 1.0);
        let w: Vec<f64> = v.iter().map(|x| -x).collect();
        push(v, &mut vertices);
        push(w, &mut vertices);
    }
    if s <= 2 {
        for h in &halfspaces {
            push(vertex_for(&h.normal, 1.0), &mut vertices);
            push(vertex_for(&h.normal, -1.0), &mut vertices);
        }
    }
    if s == 2 {
        vertices.sort_by(|p, q| p[1].atan2(p[0]).total_cmp(&q[1].atan2(q[0])));
    }
    Ok(Zonotope { generators: a.to_vec(), halfspaces, vertices })
}

/// `k`-subsets of `0..n` in lexicographic order.
struct Combinations {
    n: usize,
    cur: Option<Vec<usize>>,
}

impl Combinations {
    fn new(n: usize, k: usize) -> Self {
        Combinations { n, cur: if k <= n { Some((0..k).collect()) } else { None } }
    }
}

impl Iterator for Combinations {
    type Item = Vec<usize>;

    fn next(&mut self) -> Option<Vec<usize>> {
        let out = self.cur.clone()?;
        let k = out.len();
        let mut c = out.clone();
        let mut i = k;
        loop {
            if i == 0 {
                self.cur = None;
                break;
            }
            i -= 1;
            if c[i] < self.n - k + i {
                c[i] += 1;
                for j in i + 1..k {
                    c[j] = c[j - 1] + 1;
                }
                self.cur = Some(c);
                break;
            }
        }
        Some(out)
    }
}

impl Zonotope {
    pub fn dim(&self) -> usize {
        self.generators.len()
    }

    pub fn ambient_dim(&self) -> usize {
        self.generators[0].len()
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        x.len() == self.dim()
            && self.halfspaces.iter().all(|h| h.violation(x) <= CONTAINS_TOL * h.offset.max(1.0))
    }

    /// `x = A y`.
    pub fn map(&self, y: &[f64]) -> Vec<f64> {
        self.generators.iter().map(|r| dot(r, y)).collect()
    }

    pub fn bounding_box(&self) -> BoxDomain {
        let half: Vec<f64> = self.generators.iter().map(|r| r.iter().map(|v| v.abs()).sum()).collect();
        BoxDomain { lower: half.iter().map(|h| -h).collect(), upper: half }
    }

    /// Euclidean projection onto the zonotope. Exact for `s ≤ 2`; Dykstra's
    /// alternating projections onto the facets otherwise.
    pub fn project(&self, x: &mut [f64]) {
        if self.contains(x) {
            return;
        }
        match self.dim() {
            1 => {
                let h = self.halfspaces[0].offset;
                x[0] = x[0].clamp(-h, h);
            }
            2 => project_polygon(&self.vertices, x),
            _ => self.project_dykstra(x),
        }
    }

    fn project_dykstra(&self, x: &mut [f64]) {
        let s = self.dim();
        let mut incr = vec![vec![0.0; s]; self.halfspaces.len()];
        let mut y = x.to_vec();
        for _ in 0..10_000 {
            let prev = y.clone();
            for (h, p) in self.halfspaces.iter().zip(incr.iter_mut()) {
                let z: Vec<f64> = y.iter().zip(p.iter()).map(|(a, b)| a + b).collect();
                let v = h.violation(&z);
                let proj: Vec<f64> = if v > 0.0 {
                    z.iter().zip(&h.normal).map(|(a, n)| a - v * n).collect()
                } else {
                    z.clone()
                };
                for i in 0..s {
                    p[i] = z[i] - proj[i];
                }
                y = proj;
            }
            let change = y.iter().zip(&prev).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
            if change < 1e-15 && self.contains(&y) {
                break;
            }
        }
        // the last sweep may leave a residual violation of order 1e-15
        for h in &self.halfspaces {
            let v = h.violation(&y);
            if v > 0.0 {
                for (a, n) in y.iter_mut().zip(&h.normal) {
                    *a -= v * n;
                }
            }
        }
        x.copy_from_slice(&y);
    }
}

/// Closest point of a convex polygon (vertices in counter-clockwise order).
fn project_polygon(vertices: &[Vec<f64>], x: &mut [f64]) {
    let n = vertices.len();
    let mut best = f64::INFINITY;
    let mut out = [x[0], x[1]];
    for i in 0..n {
        let p = &vertices[i];
        let q = &vertices[(i + 1) % n];
        let (ex, ey) = (q[0] - p[0], q[1] - p[1]);
        let len2 = ex * ex + ey * ey;
        let t = if len2 > 0.0 { (((x[0] - p[0]) * ex + (x[1] - p[1]) * ey) / len2).clamp(0.0, 1.0) } else { 0.0 };
        let c = [p[0] + t * ex, p[1] + t * ey];
        let dist = (c[0] - x[0]).powi(2) + (c[1] - x[1]).powi(2);
        if dist < best {
            best = dist;
            out = c;
        }
    }
    x[0] = out[0];
    x[1] = out[1];
}

/// Geometric support of a measure.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum Domain {
    Box(BoxDomain),
    Zonotope(Zonotope),
}

impl Domain {
    pub fn dim(&self) -> usize {
        match self {
            Domain::Box(b) => b.dim(),
            Domain::Zonotope(z) => z.dim(),
        }
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        match self {
            Domain::Box(b) => b.contains(x),
            Domain::Zonotope(z) => z.contains(x),
        }
    }

    pub fn bounding_box(&self) -> BoxDomain {
        match self {
            Domain::Box(b) => b.clone(),
            Domain::Zonotope(z) => z.bounding_box(),
        }
    }

    /// Euclidean projection onto the domain.
    pub fn project(&self, x: &mut [f64]) {
        match self {
            Domain::Box(b) => b.clamp(x),
            Domain::Zonotope(z) => z.project(x),
        }
    }
}

/// Probability measure with an unnormalized density on a box.
#[derive(Clone)]
pub struct DensityMeasure {
    pub name: String,
    density: ScalarFn,
    pub domain: BoxDomain,
    /// `C` with `∫ C ρ = 1` over the domain.
    pub normalization: f64,
    sup: Arc<OnceLock<f64>>,
}

impl fmt::Debug for DensityMeasure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("DensityMeasure")
            .field("name", &self.name)
            .field("domain", &self.domain)
            .field("normalization", &self.normalization)
            .finish()
    }
}

/// Points per axis of the tensor Gauss-Legendre rule used for densities.
pub const DENSITY_GRID: usize = 200;

/// Tensor Gauss-Legendre rule on a box with `n` points per axis and weights
/// summing to the box volume.
pub fn box_gauss_rule(domain: &BoxDomain, n: usize) -> Result<(Vec<Vec<f64>>, Vec<f64>)> {
    let gl = gauss_legendre(n)?;
    let rules: Vec<_> = (0..domain.dim())
        .map(|j| {
            let (l, u) = (domain.lower[j], domain.upper[j]);
            crate::orthopoly::UnivariateRule {
                nodes: gl.nodes.iter().map(|t| 0.5 * (l + u) + 0.5 * (u - l) * t).collect(),
                weights: gl.weights.iter().map(|w| w * (u - l)).collect(),
            }
        })
        .collect();
    let refs: Vec<&_> = rules.iter().collect();
    Ok(tensor_rule(&refs))
}

impl DensityMeasure {
    /// Normalizes `density` by tensor Gauss-Legendre quadrature on `domain`.
    pub fn new(name: impl Into<String>, density: ScalarFn, domain: BoxDomain) -> Result<Self> {
        let n = if domain.dim() <= 2 { DENSITY_GRID } else { 40 };
        let (pts, wts) = box_gauss_rule(&domain, n)?;
        let mass: f64 = pts.iter().zip(&wts).map(|(x, w)| w * density(x)).sum();
        if !(mass > 0.0) || !mass.is_finite() {
            return Err(Error::DegenerateMeasure(format!("density integrates to {mass}")));
        }
        Ok(DensityMeasure {
            name: name.into(),
            density,
            domain,
            normalization: 1.0 / mass,
            sup: Arc::new(OnceLock::new()),
        })
    }

    /// Normalized probability density (zero outside the domain).
    pub fn pdf(&self, x: &[f64]) -> f64 {
        if self.domain.contains(x) {
            self.normalization * (self.density)(x)
        } else {
            0.0
        }
    }

    /// Unnormalized density.
    pub fn raw(&self, x: &[f64]) -> f64 {
        (self.density)(x)
    }

    /// Upper bound on the unnormalized density: coarse grid maximum × 1.5.
    pub fn sup_bound(&self) -> f64 {
        *self.sup.get_or_init(|| {
            let d = self.domain.dim();
            let per_axis = ((20_000f64).powf(1.0 / d as f64).floor() as usize).clamp(3, 201);
            let mut idx = vec![0usize; d];
            let mut best: f64 = 0.0;
            loop {
                let x: Vec<f64> = (0..d)
                    .map(|j| {
                        let t = idx[j] as f64 / (per_axis - 1) as f64;
                        self.domain.lower[j] + t * (self.domain.upper[j] - self.domain.lower[j])
                    })
                    .collect();
                best = best.max((self.density)(&x));
                let mut j = 0;
                while j < d {
                    idx[j] += 1;
                    if idx[j] < per_axis {
                        break;
                    }
                    idx[j] = 0;
                    j += 1;
                }
                if j == d {
                    break;
                }
            }
            1.5 * best
        })
    }
}

/// Unnormalized banana density `exp(-(x₁⁴/10 + (2x₂ - x₁²)²/2))`.
pub fn banana_density(x: &[f64]) -> f64 {
    let (a, b) = (x[0], x[1]);
    (-(a.powi(4) / 10.0 + 0.5 * (2.0 * b - a * a).powi(2))).exp()
}

/// Canonical domain `[-3,3] × [-2,6]` of the banana density.
pub fn banana_domain() -> BoxDomain {
    BoxDomain { lower: vec![-3.0, -2.0], upper: vec![3.0, 6.0] }
}

/// Problem I domain `[0,4.5] × [5,35]`.
pub fn problem_one_domain() -> BoxDomain {
    BoxDomain { lower: vec![0.0, 5.0], upper: vec![4.5, 35.0] }
}

/// Problem II domain `[1.28,1.92] × [16.6,24.9]`.
pub fn problem_two_domain() -> BoxDomain {
    BoxDomain { lower: vec![1.28, 16.6], upper: vec![1.92, 24.9] }
}

/// The banana probability measure on its canonical domain.
pub fn banana_measure() -> DensityMeasure {
    static BANANA: OnceLock<DensityMeasure> = OnceLock::new();
    BANANA
        .get_or_init(|| {
            DensityMeasure::new("banana", Arc::new(banana_density), banana_domain())
                .expect("banana density is normalizable")
        })
        .clone()
}

/// Equal-weight sample cloud.
#[derive(Debug, Clone, PartialEq)]
pub struct EmpiricalMeasure {
    pub samples: Vec<Vec<f64>>,
    pub domain: BoxDomain,
}

impl EmpiricalMeasure {
    /// Uses the bounding box of the samples when no domain is given.
    pub fn new(samples: Vec<Vec<f64>>, domain: Option<BoxDomain>) -> Result<Self> {
        let first = samples.first().ok_or_else(|| Error::InvalidArgument("no samples".into()))?;
        let d = first.len();
        if let Some(s) = samples.iter().find(|s| s.len() != d) {
            return Err(Error::DimensionMismatch { expected: d, found: s.len() });
        }
        let domain = match domain {
            Some(b) => {
                if let Some(i) = samples.iter().position(|s| !b.contains(s)) {
                    return Err(Error::OutsideDomain { index: i });
                }
                b
            }
            None => {
                let mut lo = first.clone();
                let mut hi = first.clone();
                for s in &samples {
                    for j in 0..d {
                        lo[j] = lo[j].min(s[j]);
                        hi[j] = hi[j].max(s[j]);
                    }
                }
                for j in 0..d {
                    if hi[j] <= lo[j] {
                        let pad = 0.5 * lo[j].abs().max(1.0);
                        lo[j] -= pad;
                        hi[j] += pad;
                    }
                }
                BoxDomain { lower: lo, upper: hi }
            }
        };
        Ok(EmpiricalMeasure { samples, domain })
    }

    /// Reads one sample per CSV row (no header).
    pub fn from_csv(path: &std::path::Path, domain: Option<BoxDomain>) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().has_headers(false).trim(csv::Trim::All).from_path(path)?;
        let mut samples = Vec::new();
        for rec in rdr.records() {
            let rec = rec?;
            let row = rec
                .iter()
                .map(|f| f.parse::<f64>().map_err(|e| Error::Config(format!("bad sample value {f:?}: {e}"))))
                .collect::<Result<Vec<_>>>()?;
            samples.push(row);
        }
        EmpiricalMeasure::new(samples, domain)
    }
}

/// Push-forward of a tensor measure on `[-1,1]^d` through `x = A y`.
#[derive(Debug, Clone, PartialEq)]
pub struct RidgeMeasure {
    pub base: Vec<Measure1d>,
    pub zonotope: Zonotope,
}

impl RidgeMeasure {
    pub fn new(base: Vec<Measure1d>, zonotope: Zonotope) -> Result<Self> {
        if base.len() != zonotope.ambient_dim() {
            return Err(Error::DimensionMismatch { expected: zonotope.ambient_dim(), found: base.len() });
        }
        for m in &base {
            match m.support() {
                Some((l, u)) if (l + 1.0).abs() < 1e-15 && (u - 1.0).abs() < 1e-15 => {}
                _ => {
                    return Err(Error::UnboundedDomain(
                        "ridge base factors must be supported on [-1,1]".into(),
                    ))
                }
            }
        }
        Ok(RidgeMeasure { base, zonotope })
    }

    /// Uniform base measure on `[-1,1]^d`.
    pub fn uniform(a: &[Vec<f64>], seed: u64) -> Result<Self> {
        let z = zonotope_build(a, None, seed)?;
        RidgeMeasure::new(vec![Measure1d::uniform(); z.ambient_dim()], z)
    }

    pub fn matrix(&self) -> &[Vec<f64>] {
        &self.zonotope.generators
    }
}

/// Integration measure.
#[derive(Debug, Clone)]
pub enum Measure {
    Tensor(Vec<Measure1d>),
    Density(DensityMeasure),
    Empirical(EmpiricalMeasure),
    Ridge(RidgeMeasure),
}

impl Measure {
    pub fn uniform_cube(dim: usize) -> Self {
        Measure::Tensor(vec![Measure1d::uniform(); dim])
    }

    pub fn dim(&self) -> usize {
        match self {
            Measure::Tensor(f) => f.len(),
            Measure::Density(m) => m.domain.dim(),
            Measure::Empirical(m) => m.domain.dim(),
            Measure::Ridge(m) => m.zonotope.dim(),
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            Measure::Tensor(_) => "tensor",
            Measure::Density(_) => "density",
            Measure::Empirical(_) => "empirical",
            Measure::Ridge(_) => "ridge",
        }
    }

    /// Short description recorded in rule metadata.
    pub fn describe(&self) -> String {
        match self {
            Measure::Tensor(f) => format!("tensor:{}", serde_json::to_string(f).unwrap_or_default()),
            Measure::Density(m) => format!("density:{}:{:?}:{:?}", m.name, m.domain.lower, m.domain.upper),
            Measure::Empirical(m) => format!("empirical:{}x{}", m.samples.len(), m.domain.dim()),
            Measure::Ridge(m) => format!(
                "ridge:{}:{}",
                serde_json::to_string(&m.base).unwrap_or_default(),
                serde_json::to_string(&m.zonotope.generators).unwrap_or_default()
            ),
        }
    }

    pub fn domain(&self) -> Result<Domain> {
        match self {
            Measure::Tensor(f) => {
                let mut lo = Vec::with_capacity(f.len());
                let mut hi = Vec::with_capacity(f.len());
                for m in f {
                    let (l, u) = m
                        .support()
                        .ok_or_else(|| Error::UnboundedDomain("gaussian factor has unbounded support".into()))?;
                    lo.push(l);
                    hi.push(u);
                }
                Ok(Domain::Box(BoxDomain::new(lo, hi)?))
            }
            Measure::Density(m) => Ok(Domain::Box(m.domain.clone())),
            Measure::Empirical(m) => Ok(Domain::Box(m.domain.clone())),
            Measure::Ridge(m) => Ok(Domain::Zonotope(m.zonotope.clone())),
        }
    }

    /// `n` i.i.d. draws.
    pub fn sample<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Result<Vec<Vec<f64>>> {
        match self {
            Measure::Tensor(f) => {
                let samplers = f.iter().map(Sampler1d::new).collect::<Result<Vec<_>>>()?;
                Ok((0..n).map(|_| samplers.iter().map(|s| s.draw(rng)).collect()).collect())
            }
            Measure::Density(m) => sample_density(m, n, rng),
            Measure::Empirical(m) => Ok((0..n)
                .map(|_| m.samples.choose(rng).expect("nonempty sample cloud").clone())
                .collect()),
            Measure::Ridge(m) => {
                let samplers = m.base.iter().map(Sampler1d::new).collect::<Result<Vec<_>>>()?;
                Ok((0..n)
                    .map(|_| {
                        let y: Vec<f64> = samplers.iter().map(|s| s.draw(rng)).collect();
                        m.zonotope.map(&y)
                    })
                    .collect())
            }
        }
    }

    /// Sampling with a fresh seeded generator.
    pub fn sample_seeded(&self, n: usize, seed: u64) -> Result<Vec<Vec<f64>>> {
        self.sample(n, &mut rng_from_seed(seed))
    }
}

enum Sampler1d {
    Uniform(f64, f64),
    Beta(Beta<f64>, f64, f64),
    Normal(Normal<f64>),
}

impl Sampler1d {
    fn new(m: &Measure1d) -> Result<Self> {
        m.validate()?;
        Ok(match *m {
            Measure1d::Uniform { lower, upper } => Sampler1d::Uniform(lower, upper),
            Measure1d::Jacobi { alpha, beta, lower, upper } => Sampler1d::Beta(
                Beta::new(beta + 1.0, alpha + 1.0).map_err(|e| Error::DegenerateMeasure(e.to_string()))?,
                lower,
                upper,
            ),
            Measure1d::Gaussian { mean, std } => {
                Sampler1d::Normal(Normal::new(mean, std).map_err(|e| Error::DegenerateMeasure(e.to_string()))?)
            }
        })
    }

    fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match self {
            Sampler1d::Uniform(l, u) => l + (u - l) * rng.random::<f64>(),
            // u = (1+t)/2 follows Beta(β+1, α+1)
            Sampler1d::Beta(b, l, u) => l + (u - l) * b.sample(rng),
            Sampler1d::Normal(n) => n.sample(rng),
        }
    }
}

/// Minimum number of proposals before the acceptance rate is judged.
const REJECTION_WARMUP: usize = 100_000;

/// Rejection sampling with uniform proposals on the density's box.
pub fn sample_density<R: Rng + ?Sized>(m: &DensityMeasure, n: usize, rng: &mut R) -> Result<Vec<Vec<f64>>> {
    let bound = m.sup_bound();
    if !(bound > 0.0) || !bound.is_finite() {
        return Err(Error::DegenerateMeasure(format!("density bound {bound} is not usable")));
    }
    let mut out = Vec::with_capacity(n);
    let mut attempts = 0usize;
    while out.len() < n {
        attempts += 1;
        let x = m.domain.sample_uniform(rng);
        if rng.random::<f64>() * bound <= m.raw(&x) {
            out.push(x);
        }
        if attempts >= REJECTION_WARMUP && attempts % REJECTION_WARMUP == 0 {
            let rate = out.len() as f64 / attempts as f64;
            if rate < 1e-4 {
                return Err(Error::RejectionSampling { rate, attempts });
            }
        }
    }
    Ok(out)
}

/// `s × d` matrix with orthonormal rows, from the QR factorization of a
/// Gaussian matrix.
pub fn random_orthonormal_rows(s: usize, d: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = rng_from_seed(seed);
    let n = Normal::new(0.0, 1.0).unwrap();
    let m = DMatrix::from_fn(d, s, |_, _| n.sample(&mut rng));
    let q = m.qr().q();
    (0..s).map(|i| (0..d).map(|j| q[(j, i)]).collect()).collect()
}
