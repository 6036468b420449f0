//! Comparison integrators: Monte Carlo, Sobol points, Clenshaw-Curtis
//! sparse grids and the equal-weight Stroud rules of degree 2 and 3.
//!
//! Sparse grids, Stroud rules and the Sobol rule integrate against the
//! uniform probability measure on `[-1,1]^d`. Other measures are handled by
//! folding the density into the integrand.

use std::collections::BTreeMap;
use std::path::Path;
use std::sync::OnceLock;

use serde::{Deserialize, Serialize};

use crate::domains::Measure;
use crate::error::{Error, Result};
use crate::indexset::{MultiIndex, MultiIndexSet};

/// Environment variable naming a Joe-Kuo direction-number file that replaces
/// the bundled table.
pub const SOBOL_ENV: &str = "QUADGEN_SOBOL_DIRECTIONS";

const JOE_KUO: &str = include_str!("../data/joe-kuo-1024.txt");

const SOBOL_BITS: usize = 32;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BaselineKind {
    Mc,
    Sobol,
    SparseGrid,
    Stroud2,
    Stroud3,
}

impl BaselineKind {
    pub fn name(self) -> &'static str {
        match self {
            BaselineKind::Mc => "mc",
            BaselineKind::Sobol => "sobol",
            BaselineKind::SparseGrid => "sparse-grid",
            BaselineKind::Stroud2 => "stroud2",
            BaselineKind::Stroud3 => "stroud3",
        }
    }
}

/// Nodes and weights of a comparison method. Weights sum to one; sparse-grid
/// weights can be negative.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BaselineRule {
    pub kind: BaselineKind,
    /// Level, size or degree, depending on the kind.
    pub param: usize,
    pub nodes: Vec<Vec<f64>>,
    pub weights: Vec<f64>,
}

impl BaselineRule {
    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn integrate<F: Fn(&[f64]) -> f64>(&self, f: F) -> f64 {
        self.nodes.iter().zip(&self.weights).map(|(x, w)| w * f(x)).sum()
    }
}

/// `(1/n) Σ f(X_m)` with `X_m` drawn from `measure`.
pub fn monte_carlo<F: Fn(&[f64]) -> f64>(measure: &Measure, f: F, n: usize, seed: u64) -> Result<f64> {
    if n == 0 {
        return Err(Error::InvalidArgument("Monte Carlo needs at least one sample".into()));
    }
    let pts = measure.sample_seeded(n, seed)?;
    Ok(pts.iter().map(|x| f(x)).sum::<f64>() / n as f64)
}

/// Equal-weight rule on `n` samples of `measure`.
pub fn monte_carlo_rule(measure: &Measure, n: usize, seed: u64) -> Result<BaselineRule> {
    let nodes = measure.sample_seeded(n, seed)?;
    Ok(BaselineRule { kind: BaselineKind::Mc, param: n, weights: vec![1.0 / n as f64; n], nodes })
}

/// Primitive polynomial and initial direction numbers of one dimension.
#[derive(Debug, Clone)]
struct SobolEntry {
    s: usize,
    a: u32,
    m: Vec<u32>,
}

/// Direction numbers in the Joe-Kuo file format.
#[derive(Debug, Clone)]
pub struct SobolTable {
    entries: Vec<SobolEntry>,
}

impl SobolTable {
    /// Parses a Joe-Kuo table: a header line, then `d s a m_1 … m_s` rows
    /// for dimensions `2, 3, …`.
    pub fn parse(text: &str) -> Result<Self> {
        let mut entries = Vec::new();
        for (ln, line) in text.lines().enumerate().skip(1) {
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            let nums: Vec<u64> = line
                .split_whitespace()
                .map(|t| t.parse::<u64>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|e| Error::SobolDirections(format!("line {}: {e}", ln + 1)))?;
            if nums.len() < 4 {
                return Err(Error::SobolDirections(format!("line {}: too few fields", ln + 1)));
            }
            let (d, s, a) = (nums[0] as usize, nums[1] as usize, nums[2] as u32);
            if d != entries.len() + 2 {
                return Err(Error::SobolDirections(format!("line {}: expected dimension {}", ln + 1, entries.len() + 2)));
            }
            if s == 0 || s >= SOBOL_BITS || nums.len() != 3 + s {
                return Err(Error::SobolDirections(format!("line {}: degree {s} does not match the row", ln + 1)));
            }
            let m: Vec<u32> = nums[3..].iter().map(|&v| v as u32).collect();
            if m.iter().enumerate().any(|(k, &v)| v % 2 == 0 || v >= 1 << (k + 1)) {
                return Err(Error::SobolDirections(format!("line {}: invalid direction numbers", ln + 1)));
            }
            entries.push(SobolEntry { s, a, m });
        }
        Ok(SobolTable { entries })
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::SobolDirections(format!("{}: {e}", path.display())))?;
        SobolTable::parse(&text)
    }

    /// Bundled table for up to 1024 dimensions.
    pub fn bundled() -> &'static SobolTable {
        static TABLE: OnceLock<SobolTable> = OnceLock::new();
        TABLE.get_or_init(|| SobolTable::parse(JOE_KUO).expect("bundled direction numbers parse"))
    }

    /// The file named by [`SOBOL_ENV`] if set, otherwise the bundled table.
    pub fn load() -> Result<SobolTable> {
        match std::env::var_os(SOBOL_ENV) {
            Some(p) => SobolTable::from_file(Path::new(&p)),
            None => Ok(SobolTable::bundled().clone()),
        }
    }

    pub fn max_dim(&self) -> usize {
        self.entries.len() + 1
    }

    /// `v_1 … v_32` for dimension `j` (0-based), scaled to 32 bits.
    fn directions(&self, j: usize) -> Vec<u32> {
        let mut v = vec![0u32; SOBOL_BITS];
        if j == 0 {
            for (k, vk) in v.iter_mut().enumerate() {
                *vk = 1 << (SOBOL_BITS - 1 - k);
            }
            return v;
        }
        let e = &self.entries[j - 1];
        for k in 0..SOBOL_BITS {
            v[k] = if k < e.s {
                e.m[k] << (SOBOL_BITS - 1 - k)
            } else {
                let mut x = v[k - e.s] ^ (v[k - e.s] >> e.s);
                for i in 1..e.s {
                    if (e.a >> (e.s - 1 - i)) & 1 == 1 {
                        x ^= v[k - i];
                    }
                }
                x
            };
        }
        v
    }

    /// Points `skip, …, skip + n - 1` of the unscrambled sequence in
    /// `[0,1)^d`, generated in Gray-code order.
    pub fn points(&self, d: usize, n: usize, skip: usize) -> Result<Vec<Vec<f64>>> {
        if d == 0 || d > self.max_dim() {
            return Err(Error::SobolDirections(format!(
                "dimension {d} outside the table's range 1..={}",
                self.max_dim()
            )));
        }
        let total = skip.checked_add(n).filter(|&t| (t as u64) <= 1 << SOBOL_BITS);
        if total.is_none() {
            return Err(Error::InvalidArgument("too many Sobol points requested".into()));
        }
        let dirs: Vec<Vec<u32>> = (0..d).map(|j| self.directions(j)).collect();
        let scale = 1.0 / (1u64 << SOBOL_BITS) as f64;
        let mut x = vec![0u32; d];
        let mut out = Vec::with_capacity(n);
        for i in 0..skip + n {
            if i >= skip {
                out.push(x.iter().map(|&v| v as f64 * scale).collect());
            }
            let c = (!i).trailing_zeros() as usize;
            if c < SOBOL_BITS {
                for (xj, dj) in x.iter_mut().zip(&dirs) {
                    *xj ^= dj[c];
                }
            }
        }
        Ok(out)
    }
}

/// Sobol points from the active direction table, in `[0,1]^d` or mapped
/// affinely to `[-1,1]^d`.
pub fn sobol_points(d: usize, n: usize, skip: usize, symmetric: bool) -> Result<Vec<Vec<f64>>> {
    let mut pts = SobolTable::load()?.points(d, n, skip)?;
    if symmetric {
        for x in pts.iter_mut() {
            x.iter_mut().for_each(|v| *v = 2.0 * *v - 1.0);
        }
    }
    Ok(pts)
}

/// Equal-weight rule on the first `n` Sobol points in `[-1,1]^d`.
pub fn sobol_rule(d: usize, n: usize) -> Result<BaselineRule> {
    let nodes = sobol_points(d, n, 0, true)?;
    Ok(BaselineRule { kind: BaselineKind::Sobol, param: n, weights: vec![1.0 / n as f64; n], nodes })
}

/// Warnock's formula for the L2 star discrepancy of points in `[0,1]^d`.
pub fn l2_star_discrepancy(points: &[Vec<f64>]) -> f64 {
    let n = points.len();
    if n == 0 {
        return f64::NAN;
    }
    let d = points[0].len() as i32;
    let nf = n as f64;
    let t1 = 3f64.powi(-d);
    let t2: f64 = points.iter().map(|x| x.iter().map(|v| 1.0 - v * v).product::<f64>()).sum::<f64>()
        * 2f64.powi(1 - d)
        / nf;
    let mut t3 = 0.0;
    for a in points {
        for b in points {
            t3 += a.iter().zip(b).map(|(u, v)| 1.0 - u.max(*v)).product::<f64>();
        }
    }
    (t1 - t2 + t3 / (nf * nf)).max(0.0).sqrt()
}

/// Number of Clenshaw-Curtis points at level `l`: `1, 3, 5, 9, …`.
pub fn cc_size(level: usize) -> usize {
    if level == 0 {
        1
    } else {
        (1 << level) + 1
    }
}

/// Clenshaw-Curtis probability weights for `n` points on `[-1,1]`, in the
/// order of the nodes `-cos(jπ/(n-1))`.
fn cc_weights(n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![1.0];
    }
    let big = n - 1;
    let nf = big as f64;
    (0..n)
        .map(|j| {
            let c = if j == 0 || j == big { 1.0 } else { 2.0 };
            let mut s = 0.0;
            for k in 1..=big / 2 {
                let b = if 2 * k == big { 1.0 } else { 2.0 };
                let kf = k as f64;
                s += b / (4.0 * kf * kf - 1.0) * (2.0 * kf * j as f64 * std::f64::consts::PI / nf).cos();
            }
            c / nf * (1.0 - s) / 2.0
        })
        .collect()
}

/// Node with index `k` on the finest grid of `2^top + 1` points. Written
/// with a sine so that the centre is exactly 0 and the grid is exactly
/// symmetric.
fn cc_node(k: usize, top: usize) -> f64 {
    if top == 0 {
        return 0.0;
    }
    let nf = (1usize << top) as f64;
    (std::f64::consts::PI * (2.0 * k as f64 - nf) / (2.0 * nf)).sin()
}

fn binomial(n: usize, k: usize) -> f64 {
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

/// Level multi-indices `l ∈ N₀^d` with `lo ≤ |l| ≤ hi`.
fn levels_between(d: usize, lo: usize, hi: usize) -> Vec<Vec<usize>> {
    fn rec(d: usize, left: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>, lo: usize) {
        if cur.len() == d {
            if cur.iter().sum::<usize>() >= lo {
                out.push(cur.clone());
            }
            return;
        }
        for v in 0..=left {
            cur.push(v);
            rec(d, left - v, cur, out, lo);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    rec(d, hi, &mut Vec::with_capacity(d), &mut out, lo);
    out
}

/// Smolyak combination of nested Clenshaw-Curtis rules on `[-1,1]^d`:
/// `Σ_{L-d+1 ≤ |l| ≤ L} (-1)^{L-|l|} C(d-1, L-|l|) U^{l_1} ⊗ … ⊗ U^{l_d}`,
/// with coincident nodes merged.
pub fn sparse_grid(d: usize, level: usize) -> Result<BaselineRule> {
    if d == 0 {
        return Err(Error::InvalidArgument("dimension must be positive".into()));
    }
    let top = level;
    let fine = 1usize << top;
    let weights1d: Vec<Vec<f64>> = (0..=level).map(|l| cc_weights(cc_size(l))).collect();
    // finest-grid index of node j at level l
    let key = |l: usize, j: usize| if l == 0 { fine / 2 } else { j << (top - l) };
    let mut acc: BTreeMap<Vec<usize>, f64> = BTreeMap::new();
    let lo = (level + 1).saturating_sub(d);
    for l in levels_between(d, lo, level) {
        let q = level - l.iter().sum::<usize>();
        let coef = if q % 2 == 0 { 1.0 } else { -1.0 } * binomial(d - 1, q);
        let sizes: Vec<usize> = l.iter().map(|&li| cc_size(li)).collect();
        let mut idx = vec![0usize; d];
        loop {
            let k: Vec<usize> = idx.iter().zip(&l).map(|(&j, &li)| key(li, j)).collect();
            let w: f64 = idx.iter().zip(&l).map(|(&j, &li)| weights1d[li][j]).product();
            *acc.entry(k).or_insert(0.0) += coef * w;
            let mut c = 0;
            while c < d {
                idx[c] += 1;
                if idx[c] < sizes[c] {
                    break;
                }
                idx[c] = 0;
                c += 1;
            }
            if c == d {
                break;
            }
        }
    }
    let (nodes, weights) = acc
        .into_iter()
        .filter(|(_, w)| *w != 0.0)
        .map(|(k, w)| (k.iter().map(|&ki| cc_node(ki, top)).collect::<Vec<f64>>(), w))
        .unzip();
    Ok(BaselineRule { kind: BaselineKind::SparseGrid, param: level, nodes, weights })
}

/// Multi-indices integrated exactly by the level-`L` sparse grid: those
/// dominated by `(m(l_1) - 1, …, m(l_d) - 1)` for some `|l| ≤ L`.
pub fn sparse_grid_exact_set(d: usize, level: usize) -> Result<MultiIndexSet> {
    let mut out = std::collections::BTreeSet::new();
    for l in levels_between(d, 0, level) {
        let caps: Vec<u32> = l.iter().map(|&li| cc_size(li) as u32 - 1).collect();
        let mut idx = vec![0u32; d];
        loop {
            out.insert(idx.clone());
            let mut c = 0;
            while c < d {
                idx[c] += 1;
                if idx[c] <= caps[c] {
                    break;
                }
                idx[c] = 0;
                c += 1;
            }
            if c == d {
                break;
            }
        }
    }
    MultiIndexSet::new(d, out.into_iter().map(MultiIndex::new))
}

/// Stroud's equal-weight rules for the uniform measure on `[-1,1]^d`:
/// `T_n 2-1` with `d + 1` points and `T_n 3-1` with `2d` points.
pub fn stroud(d: usize, degree: u32) -> Result<BaselineRule> {
    if d == 0 {
        return Err(Error::InvalidArgument("dimension must be positive".into()));
    }
    let (kind, count, freq): (BaselineKind, usize, Box<dyn Fn(usize) -> f64>) = match degree {
        2 => (BaselineKind::Stroud2, d + 1, Box::new(|r| 2.0 * r as f64 / (d + 1) as f64)),
        3 => (BaselineKind::Stroud3, 2 * d, Box::new(|r| (2.0 * r as f64 - 1.0) / d as f64)),
        _ => return Err(Error::UnsupportedDegree(degree)),
    };
    let radius = (2.0f64 / 3.0).sqrt();
    let first = if degree == 2 { 0 } else { 1 };
    let nodes: Vec<Vec<f64>> = (first..first + count)
        .map(|k| {
            let mut x = Vec::with_capacity(d);
            for r in 1..=d / 2 {
                let t = freq(r) * k as f64 * std::f64::consts::PI;
                x.push(radius * t.cos());
                x.push(radius * t.sin());
            }
            if d % 2 == 1 {
                x.push(if k % 2 == 0 { 1.0 } else { -1.0 } / 3f64.sqrt());
            }
            x
        })
        .collect();
    Ok(BaselineRule { kind, param: degree as usize, weights: vec![1.0 / count as f64; count], nodes })
}
