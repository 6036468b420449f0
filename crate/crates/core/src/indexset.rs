//! Multi-index sets and the half-set lower bound on rule size.
//!
//! A [`MultiIndexSet`] defines the polynomial space `P_Λ = span{x^α : α ∈ Λ}`
//! whose moments a quadrature rule has to reproduce. Sets are kept sorted in
//! lexicographic order so that basis columns and moment vectors line up
//! deterministically.
//!
//! The half-set machinery bounds the number of nodes of any exact rule from
//! below: if `Θ + Θ ⊆ Λ` then every rule exact on `P_Λ` has at least `|Θ|`
//! nodes.

use std::cmp::Ordering;
use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A multi-index `α ∈ N₀^d`.
#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct MultiIndex(Vec<u32>);

impl MultiIndex {
    pub fn new(coords: Vec<u32>) -> Self {
        MultiIndex(coords)
    }

    pub fn zero(dim: usize) -> Self {
        MultiIndex(vec![0; dim])
    }

    pub fn unit(dim: usize, j: usize, q: u32) -> Self {
        let mut c = vec![0; dim];
        c[j] = q;
        MultiIndex(c)
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn coords(&self) -> &[u32] {
        &self.0
    }

    /// `‖α‖₁`, the total degree.
    pub fn total_degree(&self) -> u32 {
        self.0.iter().sum()
    }

    /// `‖α‖₀`, the number of nonzero coordinates.
    pub fn support_size(&self) -> usize {
        self.0.iter().filter(|&&a| a != 0).count()
    }

    /// `‖α‖∞`.
    pub fn max_coord(&self) -> u32 {
        self.0.iter().copied().max().unwrap_or(0)
    }

    /// Componentwise partial order `α ≤ β`.
    pub fn is_dominated_by(&self, other: &MultiIndex) -> bool {
        self.0.iter().zip(&other.0).all(|(a, b)| a <= b)
    }

    pub fn add(&self, other: &MultiIndex) -> MultiIndex {
        MultiIndex(self.0.iter().zip(&other.0).map(|(a, b)| a + b).collect())
    }

    /// `⌊α/2⌋` componentwise.
    pub fn halve(&self) -> MultiIndex {
        MultiIndex(self.0.iter().map(|a| a / 2).collect())
    }

    pub fn double(&self) -> MultiIndex {
        MultiIndex(self.0.iter().map(|a| 2 * a).collect())
    }

    /// The immediate predecessors `α - e_j` for every nonzero coordinate.
    pub fn predecessors(&self) -> impl Iterator<Item = MultiIndex> + '_ {
        (0..self.dim()).filter(|&j| self.0[j] > 0).map(move |j| {
            let mut c = self.0.clone();
            c[j] -= 1;
            MultiIndex(c)
        })
    }
}

impl fmt::Debug for MultiIndex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "(")?;
        for (i, a) in self.0.iter().enumerate() {
            if i > 0 {
                write!(f, ",")?;
            }
            write!(f, "{a}")?;
        }
        write!(f, ")")
    }
}

impl From<Vec<u32>> for MultiIndex {
    fn from(v: Vec<u32>) -> Self {
        MultiIndex(v)
    }
}

/// A finite, nonempty set of multi-indices of a common dimension, kept sorted
/// lexicographically without duplicates.
#[derive(Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "Vec<Vec<u32>>", into = "Vec<Vec<u32>>")]
pub struct MultiIndexSet {
    dim: usize,
    indices: Vec<MultiIndex>,
}

impl MultiIndexSet {
    /// Builds a set from arbitrary indices, sorting and removing duplicates.
    pub fn new<I>(dim: usize, indices: I) -> Result<Self>
    where
        I: IntoIterator<Item = MultiIndex>,
    {
        if dim == 0 {
            return Err(Error::InvalidArgument("dimension must be positive".into()));
        }
        let mut v: Vec<MultiIndex> = Vec::new();
        for a in indices {
            if a.dim() != dim {
                return Err(Error::DimensionMismatch { expected: dim, found: a.dim() });
            }
            v.push(a);
        }
        if v.is_empty() {
            return Err(Error::EmptyIndexSet);
        }
        v.sort_unstable();
        v.dedup();
        Ok(MultiIndexSet { dim, indices: v })
    }

    fn from_sorted(dim: usize, indices: Vec<MultiIndex>) -> Self {
        debug_assert!(indices.windows(2).all(|w| w[0] < w[1]));
        MultiIndexSet { dim, indices }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn iter(&self) -> std::slice::Iter<'_, MultiIndex> {
        self.indices.iter()
    }

    pub fn indices(&self) -> &[MultiIndex] {
        &self.indices
    }

    pub fn get(&self, i: usize) -> &MultiIndex {
        &self.indices[i]
    }

    pub fn contains(&self, a: &MultiIndex) -> bool {
        self.indices.binary_search(a).is_ok()
    }

    /// Position of `a` in the canonical ordering.
    pub fn position(&self, a: &MultiIndex) -> Option<usize> {
        self.indices.binary_search(a).ok()
    }

    /// Largest exponent per coordinate.
    pub fn max_degrees(&self) -> Vec<u32> {
        let mut m = vec![0; self.dim];
        for a in &self.indices {
            for (mj, &aj) in m.iter_mut().zip(a.coords()) {
                *mj = (*mj).max(aj);
            }
        }
        m
    }

    pub fn max_total_degree(&self) -> u32 {
        self.indices.iter().map(MultiIndex::total_degree).max().unwrap_or(0)
    }

    pub fn is_downward_closed(&self) -> bool {
        self.indices.iter().all(|a| a.predecessors().all(|b| self.contains(&b)))
    }

    pub fn is_subset(&self, other: &MultiIndexSet) -> bool {
        self.dim == other.dim && self.indices.iter().all(|a| other.contains(a))
    }

    /// Elements not dominated by any other element of the set.
    pub fn maximal_elements(&self) -> Vec<&MultiIndex> {
        self.indices
            .iter()
            .filter(|&a| !self.indices.iter().any(|b| b != a && a.is_dominated_by(b)))
            .collect()
    }

    /// Index-set-wise `Θ + Θ ⊆ self`.
    pub fn admits_half_set(&self, theta: &MultiIndexSet) -> bool {
        let t = theta.indices();
        for i in 0..t.len() {
            for k in i..t.len() {
                if !self.contains(&t[i].add(&t[k])) {
                    return false;
                }
            }
        }
        true
    }
}

impl fmt::Debug for MultiIndexSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_set().entries(self.indices.iter()).finish()
    }
}

impl TryFrom<Vec<Vec<u32>>> for MultiIndexSet {
    type Error = Error;

    fn try_from(v: Vec<Vec<u32>>) -> Result<Self> {
        let dim = v.first().map(Vec::len).ok_or(Error::EmptyIndexSet)?;
        MultiIndexSet::new(dim, v.into_iter().map(MultiIndex))
    }
}

impl From<MultiIndexSet> for Vec<Vec<u32>> {
    fn from(s: MultiIndexSet) -> Self {
        s.indices.into_iter().map(|a| a.0).collect()
    }
}

impl<'a> IntoIterator for &'a MultiIndexSet {
    type Item = &'a MultiIndex;
    type IntoIter = std::slice::Iter<'a, MultiIndex>;

    fn into_iter(self) -> Self::IntoIter {
        self.indices.iter()
    }
}

/// The `ℓp` quasi-norm used to define a ball `B_p(r)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LpNorm {
    /// Number of nonzero coordinates.
    Zero,
    P(f64),
    Infinity,
}

/// Enumerates all `α` with `α_j ≤ bound` for which `keep` holds on every
/// prefix (prefix coordinates set, remaining coordinates zero). `keep` must be
/// monotone: if a prefix is rejected, every extension is too.
fn enumerate_monotone<F>(dim: usize, bound: u32, keep: F) -> Vec<MultiIndex>
where
    F: Fn(&[u32]) -> bool,
{
    fn rec<F: Fn(&[u32]) -> bool>(
        j: usize,
        cur: &mut Vec<u32>,
        bound: u32,
        keep: &F,
        out: &mut Vec<MultiIndex>,
    ) {
        if j == cur.len() {
            out.push(MultiIndex(cur.clone()));
            return;
        }
        for v in 0..=bound {
            cur[j] = v;
            if !keep(cur) {
                break;
            }
            rec(j + 1, cur, bound, keep, out);
        }
        cur[j] = 0;
    }
    let mut out = Vec::new();
    let mut cur = vec![0; dim];
    rec(0, &mut cur, bound, &keep, &mut out);
    // lexicographic by construction
    out
}

/// Total-degree set `B₁(k) = {α : ‖α‖₁ ≤ k}`.
pub fn total_degree_set(dim: usize, degree: u32) -> MultiIndexSet {
    assert!(dim > 0, "dimension must be positive");
    let idx = enumerate_monotone(dim, degree, |c| c.iter().sum::<u32>() <= degree);
    MultiIndexSet::from_sorted(dim, idx)
}

/// The ball `B_p(r)`, optionally intersected with `B₁(cap)`.
pub fn ball_set(dim: usize, norm: LpNorm, radius: f64, cap: Option<u32>) -> Result<MultiIndexSet> {
    if dim == 0 {
        return Err(Error::InvalidArgument("dimension must be positive".into()));
    }
    if !(radius >= 0.0) || !radius.is_finite() {
        return Err(Error::InvalidArgument(format!("invalid radius {radius}")));
    }
    let within_cap = |c: &[u32]| cap.is_none_or(|k| c.iter().sum::<u32>() <= k);
    let idx = match norm {
        LpNorm::Zero => {
            let max_nnz = radius.floor() as usize;
            match cap {
                None if max_nnz >= 1 => {
                    return Err(Error::UnboundedIndexSet { dim, radius });
                }
                None => vec![MultiIndex::zero(dim)],
                Some(k) => enumerate_monotone(dim, k, |c| {
                    c.iter().filter(|&&a| a != 0).count() <= max_nnz && within_cap(c)
                }),
            }
        }
        LpNorm::Infinity => {
            let r = radius.floor() as u32;
            let bound = cap.map_or(r, |k| k.min(r));
            enumerate_monotone(dim, bound, within_cap)
        }
        LpNorm::P(p) => {
            if !(p > 0.0) || !p.is_finite() {
                return Err(Error::InvalidArgument(format!("invalid exponent p = {p}")));
            }
            let rp = radius.powf(p) * (1.0 + 1e-12);
            let r = radius.floor() as u32;
            let bound = cap.map_or(r, |k| k.min(r));
            enumerate_monotone(dim, bound, |c| {
                c.iter().map(|&a| (a as f64).powf(p)).sum::<f64>() <= rp && within_cap(c)
            })
        }
    };
    Ok(MultiIndexSet::from_sorted(dim, idx))
}

/// ANOVA-type set `B₀(order) ∩ B₁(k)`: interactions of at most `order`
/// variables with total degree at most `k`.
pub fn anova_set(dim: usize, order: usize, degree: u32) -> Result<MultiIndexSet> {
    if order > dim {
        return Err(Error::InvalidArgument(format!(
            "interaction order {order} exceeds dimension {dim}"
        )));
    }
    let idx = enumerate_monotone(dim, degree, |c| {
        c.iter().filter(|&&a| a != 0).count() <= order && c.iter().sum::<u32>() <= degree
    });
    Ok(MultiIndexSet::from_sorted(dim, idx))
}

/// Smallest downward-closed set containing `set`.
pub fn downward_closure(set: &MultiIndexSet) -> MultiIndexSet {
    let mut out: BTreeSet<MultiIndex> = BTreeSet::new();
    for a in set.iter() {
        if out.contains(a) {
            continue;
        }
        let bounds = a.coords();
        // all β ≤ α
        let idx = enumerate_monotone(set.dim(), a.max_coord(), |c| {
            c.iter().zip(bounds).all(|(x, b)| x <= b)
        });
        out.extend(idx);
    }
    MultiIndexSet::from_sorted(set.dim(), out.into_iter().collect())
}

/// Minkowski sum `Λ + Θ = {α + β}`.
pub fn minkowski_sum(a: &MultiIndexSet, b: &MultiIndexSet) -> Result<MultiIndexSet> {
    if a.dim() != b.dim() {
        return Err(Error::DimensionMismatch { expected: a.dim(), found: b.dim() });
    }
    let mut out = BTreeSet::new();
    for x in a.iter() {
        for y in b.iter() {
            out.insert(x.add(y));
        }
    }
    Ok(MultiIndexSet::from_sorted(a.dim(), out.into_iter().collect()))
}

/// Rational `num/den` with `den > 0`.
#[derive(Clone, Copy, Debug)]
struct Ratio {
    num: u64,
    den: u64,
}

impl Ratio {
    fn cmp_value(&self, other: &Ratio) -> Ordering {
        (self.num as u128 * other.den as u128).cmp(&(other.num as u128 * self.den as u128))
    }
}

/// Whether `⌊pα + (1-p)β⌋ ∈ set` for every `p ∈ [0,1]`.
///
/// The floor is piecewise constant in `p` with breakpoints at `t/|α_j - β_j|`,
/// so it suffices to test every breakpoint and every midpoint between
/// consecutive breakpoints. Everything is evaluated in exact integer
/// arithmetic.
fn segment_is_contained(set: &MultiIndexSet, a: &MultiIndex, b: &MultiIndex) -> bool {
    let mut bps: Vec<Ratio> = vec![Ratio { num: 0, den: 1 }, Ratio { num: 1, den: 1 }];
    for (&x, &y) in a.coords().iter().zip(b.coords()) {
        let delta = x.abs_diff(y) as u64;
        for t in 1..delta {
            bps.push(Ratio { num: t, den: delta });
        }
    }
    bps.sort_by(|p, q| p.cmp_value(q));
    bps.dedup_by(|p, q| p.cmp_value(q) == Ordering::Equal);
    let mut probes = Vec::with_capacity(2 * bps.len());
    for w in bps.windows(2) {
        probes.push(w[0]);
        // midpoint (n1/d1 + n2/d2)/2
        probes.push(Ratio {
            num: w[0].num * w[1].den + w[1].num * w[0].den,
            den: 2 * w[0].den * w[1].den,
        });
    }
    probes.push(*bps.last().unwrap());
    let mut c = vec![0u32; set.dim()];
    for p in probes {
        for (j, cj) in c.iter_mut().enumerate() {
            let v = p.num as u128 * a.coords()[j] as u128
                + (p.den - p.num) as u128 * b.coords()[j] as u128;
            *cj = (v / p.den as u128) as u32;
        }
        if !set.contains(&MultiIndex(c.clone())) {
            return false;
        }
    }
    true
}

/// Floor-convexity: `⌊pα + (1-p)β⌋ ∈ Λ` for all `α, β ∈ Λ`, `p ∈ [0,1]`.
///
/// For downward-closed sets only pairs of maximal elements need checking,
/// since the floor map is monotone in both arguments.
pub fn is_convex(set: &MultiIndexSet) -> bool {
    let candidates: Vec<&MultiIndex> = if set.is_downward_closed() {
        set.maximal_elements()
    } else {
        set.iter().collect()
    };
    for i in 0..candidates.len() {
        for k in (i + 1)..candidates.len() {
            let (a, b) = (candidates[i], candidates[k]);
            if a.is_dominated_by(b) || b.is_dominated_by(a) {
                if set.is_downward_closed() {
                    continue;
                }
            }
            if !segment_is_contained(set, a, b) {
                return false;
            }
        }
    }
    true
}

/// Result of the maximal half-set computation.
#[derive(Debug, Clone)]
pub struct HalfSetInfo {
    /// `L(Λ)`, the maximal half-set size.
    pub size: usize,
    /// One maximal half-set.
    pub theta: MultiIndexSet,
    /// Whether the maximal half-set is unique.
    pub unique: bool,
    /// False when the exhaustive search hit its node budget; `size` is then
    /// the best half-set found, a lower bound for `L(Λ)`.
    pub exact: bool,
}

/// Node budget for the branch-and-bound half-set search.
pub const HALF_SET_SEARCH_BUDGET: usize = 5_000_000;

/// Candidates `{θ : 2θ ∈ Λ}`; every half-set is a subset of these.
fn half_candidates(set: &MultiIndexSet) -> Vec<MultiIndex> {
    set.iter()
        .filter(|a| a.coords().iter().all(|c| c % 2 == 0))
        .map(MultiIndex::halve)
        .collect()
}

struct HalfSetSearch<'a> {
    cand: &'a [MultiIndex],
    preds: Vec<Vec<usize>>,
    compat: Vec<Vec<bool>>,
    best: usize,
    found: Vec<Vec<usize>>,
    max_found: usize,
    nodes: usize,
    budget: usize,
    exhausted: bool,
}

impl HalfSetSearch<'_> {
    fn bound(&self, i: usize, included: &[bool], chosen: &[usize]) -> usize {
        // Elements ≥ i that could still join: compatible with everything
        // chosen and with every predecessor either chosen or still available.
        let n = self.cand.len();
        let mut avail = vec![false; n];
        let mut count = 0;
        for j in i..n {
            let ok = chosen.iter().all(|&c| self.compat[j][c])
                && self.preds[j].iter().all(|&p| included[p] || (p >= i && avail[p]));
            avail[j] = ok;
            if ok {
                count += 1;
            }
        }
        count
    }

    fn search(&mut self, i: usize, included: &mut Vec<bool>, chosen: &mut Vec<usize>) {
        self.nodes += 1;
        if self.nodes > self.budget {
            self.exhausted = true;
            return;
        }
        let n = self.cand.len();
        if i == n {
            let size = chosen.len();
            if size > self.best {
                self.best = size;
                self.found.clear();
            }
            if size == self.best && self.found.len() < self.max_found {
                self.found.push(chosen.clone());
            }
            return;
        }
        if chosen.len() + self.bound(i, included, chosen) < self.best {
            return;
        }
        let can_include = self.preds[i].iter().all(|&p| included[p])
            && chosen.iter().all(|&c| self.compat[i][c]);
        if can_include {
            included[i] = true;
            chosen.push(i);
            self.search(i + 1, included, chosen);
            chosen.pop();
            included[i] = false;
        }
        if self.exhausted {
            return;
        }
        self.search(i + 1, included, chosen);
    }
}

/// Exhaustive branch-and-bound over downward-closed subsets of the half-set
/// candidates. Returns `(L, maximal half-sets found (up to max_found), exact)`.
pub fn exhaustive_half_sets(
    set: &MultiIndexSet,
    max_found: usize,
    budget: usize,
) -> Result<(usize, Vec<MultiIndexSet>, bool)> {
    if !set.is_downward_closed() {
        return Err(Error::NotDownwardClosed);
    }
    let cand = half_candidates(set);
    let n = cand.len();
    let preds: Vec<Vec<usize>> = cand
        .iter()
        .map(|c| {
            c.predecessors()
                .map(|p| cand.binary_search(&p).expect("candidates are downward closed"))
                .collect()
        })
        .collect();
    let compat: Vec<Vec<bool>> = (0..n)
        .map(|i| (0..n).map(|k| set.contains(&cand[i].add(&cand[k]))).collect())
        .collect();
    let mut s = HalfSetSearch {
        cand: &cand,
        preds,
        compat,
        best: 0,
        found: Vec::new(),
        max_found: max_found.max(1),
        nodes: 0,
        budget,
        exhausted: false,
    };
    let mut included = vec![false; n];
    let mut chosen = Vec::new();
    s.search(0, &mut included, &mut chosen);
    let sets = s
        .found
        .iter()
        .map(|ix| MultiIndexSet::from_sorted(set.dim(), ix.iter().map(|&i| cand[i].clone()).collect()))
        .collect();
    Ok((s.best, sets, !s.exhausted))
}

/// Maximal half-set `Θ` of a downward-closed `Λ` and its size `L(Λ)`.
///
/// Every half-set lies inside `⌊½Λ⌋ = {θ : 2θ ∈ Λ}`. When that candidate set
/// is itself a half-set (always the case for convex `Λ`) it is the unique
/// maximum. Otherwise an exhaustive search over downward-closed candidate
/// subsets decides `L` and uniqueness.
pub fn maximal_half_set(set: &MultiIndexSet) -> Result<HalfSetInfo> {
    if !set.is_downward_closed() {
        return Err(Error::NotDownwardClosed);
    }
    let cand = MultiIndexSet::new(set.dim(), half_candidates(set))?;
    if set.admits_half_set(&cand) {
        return Ok(HalfSetInfo { size: cand.len(), theta: cand, unique: true, exact: true });
    }
    let (size, mut sets, exact) = exhaustive_half_sets(set, 2, HALF_SET_SEARCH_BUDGET)?;
    let unique = sets.len() == 1;
    let theta = sets.swap_remove(0);
    Ok(HalfSetInfo { size, theta, unique, exact })
}

/// All maximal half-sets (up to `limit`).
pub fn all_maximal_half_sets(set: &MultiIndexSet, limit: usize) -> Result<Vec<MultiIndexSet>> {
    let info = maximal_half_set(set)?;
    if info.unique {
        return Ok(vec![info.theta]);
    }
    let (_, sets, _) = exhaustive_half_sets(set, limit, HALF_SET_SEARCH_BUDGET)?;
    Ok(sets)
}

/// Starting rule size `⌈|Λ|/(d+1)⌉` from the degrees-of-freedom count,
/// optionally raised to the half-set bound `L(Λ)` for downward-closed sets.
pub fn heuristic_size(set: &MultiIndexSet, respect_lower_bound: bool) -> usize {
    let n = set.len();
    let d = set.dim();
    let h = n.div_ceil(d + 1);
    if respect_lower_bound && set.is_downward_closed() {
        if let Ok(info) = maximal_half_set(set) {
            return h.max(info.size);
        }
    }
    h
}

#[cfg(test)]
mod tests {
    use super::*;

    fn set(dim: usize, v: &[&[u32]]) -> MultiIndexSet {
        MultiIndexSet::new(dim, v.iter().map(|c| MultiIndex::new(c.to_vec()))).unwrap()
    }

    fn binomial(n: u64, k: u64) -> u64 {
        (0..k).fold(1, |acc, i| acc * (n - i) / (i + 1))
    }

    #[test]
    fn total_degree_sizes() {
        assert_eq!(total_degree_set(2, 1), set(2, &[&[0, 0], &[1, 0], &[0, 1]]));
        assert_eq!(total_degree_set(2, 20).len(), 231);
        assert_eq!(total_degree_set(10, 5).len(), 3003);
        for d in 1..=10 {
            for k in 0..=10 {
                assert_eq!(total_degree_set(d, k).len() as u64, binomial(k as u64 + d as u64, d as u64));
            }
        }
    }

    #[test]
    fn balls() {
        let inf = ball_set(2, LpNorm::Infinity, 2.0, None).unwrap();
        assert_eq!(inf.len(), 9);
        let zero = ball_set(2, LpNorm::Zero, 1.0, Some(2)).unwrap();
        assert_eq!(zero, set(2, &[&[0, 0], &[0, 1], &[0, 2], &[1, 0], &[2, 0]]));
        assert_eq!(ball_set(3, LpNorm::P(1.0), 0.0, None).unwrap(), set(3, &[&[0, 0, 0]]));
        assert!(matches!(
            ball_set(2, LpNorm::Zero, 1.0, None),
            Err(Error::UnboundedIndexSet { .. })
        ));
        assert_eq!(ball_set(2, LpNorm::Zero, 0.5, None).unwrap().len(), 1);
        let p2 = ball_set(2, LpNorm::P(2.0), 2.0, None).unwrap();
        // (0,0),(0,1),(0,2),(1,0),(1,1),(2,0)
        assert_eq!(p2.len(), 6);
        assert!(p2.is_downward_closed());
    }

    #[test]
    fn anova_sets() {
        assert_eq!(anova_set(3, 3, 5).unwrap(), total_degree_set(3, 5));
        assert_eq!(anova_set(20, 2, 2).unwrap().len(), 1 + 20 + 20 + 190);
        assert_eq!(
            anova_set(2, 1, 2).unwrap(),
            set(2, &[&[0, 0], &[0, 1], &[0, 2], &[1, 0], &[2, 0]])
        );
        assert!(anova_set(2, 3, 2).is_err());
    }

    #[test]
    fn closure() {
        let c = downward_closure(&set(2, &[&[2, 1]]));
        assert_eq!(c, set(2, &[&[0, 0], &[1, 0], &[2, 0], &[0, 1], &[1, 1], &[2, 1]]));
        let td = total_degree_set(3, 4);
        assert_eq!(downward_closure(&td), td);
        assert_eq!(downward_closure(&set(2, &[&[0, 3]])).len(), 4);
    }

    #[test]
    fn minkowski() {
        let theta = set(2, &[&[0, 0], &[1, 0], &[0, 1], &[1, 1]]);
        let s = minkowski_sum(&theta, &theta).unwrap();
        assert_eq!(s, ball_set(2, LpNorm::Infinity, 2.0, None).unwrap());
        let td = total_degree_set(2, 3);
        assert_eq!(minkowski_sum(&td, &set(2, &[&[0, 0]])).unwrap(), td);
        assert_eq!(minkowski_sum(&set(2, &[&[1, 0]]), &set(2, &[&[0, 1]])).unwrap(), set(2, &[&[1, 1]]));
        assert!(matches!(
            minkowski_sum(&td, &total_degree_set(3, 1)),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn convexity() {
        assert!(is_convex(&total_degree_set(3, 6)));
        assert!(is_convex(&ball_set(2, LpNorm::Infinity, 3.0, None).unwrap()));
        assert!(!is_convex(&ball_set(2, LpNorm::Zero, 1.0, Some(2)).unwrap()));
        assert!(is_convex(&set(2, &[&[0, 0]])));
        // not downward closed: (0,0) and (2,2) skip (1,1)
        assert!(!is_convex(&set(2, &[&[0, 0], &[2, 2]])));
        assert!(is_convex(&set(2, &[&[0, 0], &[1, 1], &[2, 2]])));
    }

    #[test]
    fn half_sets() {
        let inf = ball_set(2, LpNorm::Infinity, 2.0, None).unwrap();
        let h = maximal_half_set(&inf).unwrap();
        assert_eq!(h.size, 4);
        assert_eq!(h.theta, set(2, &[&[0, 0], &[1, 0], &[0, 1], &[1, 1]]));
        assert!(h.unique && h.exact);

        let cross = ball_set(2, LpNorm::Zero, 1.0, Some(2)).unwrap();
        let h = maximal_half_set(&cross).unwrap();
        assert_eq!(h.size, 2);
        assert!(!h.unique);
        let all = all_maximal_half_sets(&cross, 10).unwrap();
        assert_eq!(all.len(), 2);
        assert!(all.contains(&set(2, &[&[0, 0], &[1, 0]])));
        assert!(all.contains(&set(2, &[&[0, 0], &[0, 1]])));

        assert_eq!(maximal_half_set(&total_degree_set(10, 2)).unwrap().size, 11);
        assert!(matches!(
            maximal_half_set(&set(2, &[&[0, 0], &[2, 0]])),
            Err(Error::NotDownwardClosed)
        ));
    }

    #[test]
    fn half_set_of_diagonal_sets() {
        // B0(1) ∩ B1(n): one maximal half-set per axis
        let s = ball_set(4, LpNorm::Zero, 1.0, Some(6)).unwrap();
        let all = all_maximal_half_sets(&s, 100).unwrap();
        assert_eq!(all.len(), 4);
        assert!(all.iter().all(|t| t.len() == 4));
    }

    #[test]
    fn heuristics() {
        assert_eq!(heuristic_size(&total_degree_set(2, 20), false), 77);
        assert_eq!(heuristic_size(&total_degree_set(10, 5), false), 273);
        let td = total_degree_set(10, 2);
        assert_eq!(td.len(), 66);
        assert_eq!(heuristic_size(&td, false), 6);
        assert_eq!(heuristic_size(&td, true), 11);
    }

    #[test]
    fn json_round_trip() {
        let s = ball_set(2, LpNorm::Zero, 1.0, Some(2)).unwrap();
        let text = serde_json::to_string(&s).unwrap();
        assert_eq!(text, "[[0,0],[0,1],[0,2],[1,0],[2,0]]");
        let back: MultiIndexSet = serde_json::from_str(&text).unwrap();
        assert_eq!(back, s);
        assert!(serde_json::from_str::<MultiIndexSet>("[[0,0],[1]]").is_err());
    }

    /// Largest `Θ ⊆ {θ : 2θ ∈ Λ}` with `Θ + Θ ⊆ Λ`, by trying every subset.
    fn brute_force_half_set(set: &MultiIndexSet) -> (usize, usize) {
        let cand = half_candidates(set);
        assert!(cand.len() <= 16);
        let mut best = 0;
        let mut count = 0;
        for mask in 0u32..(1 << cand.len()) {
            let members: Vec<&MultiIndex> =
                (0..cand.len()).filter(|i| mask >> i & 1 == 1).map(|i| &cand[i]).collect();
            let ok = members.iter().all(|a| members.iter().all(|b| set.contains(&a.add(b))));
            if !ok {
                continue;
            }
            let sub = MultiIndexSet::new(set.dim(), members.into_iter().cloned()).ok();
            // count only downward-closed maximal sets, as the search does
            let closed = sub.as_ref().is_some_and(MultiIndexSet::is_downward_closed);
            let size = mask.count_ones() as usize;
            if size > best {
                best = size;
                count = 0;
            }
            if size == best && closed {
                count += 1;
            }
        }
        (best, count)
    }

    fn downward_closed_strategy() -> impl Strategy<Value = MultiIndexSet> {
        (1usize..=3)
            .prop_flat_map(|d| proptest::collection::vec(proptest::collection::vec(0u32..4, d), 1..5))
            .prop_map(|v| {
                let d = v[0].len();
                downward_closure(&MultiIndexSet::new(d, v.into_iter().map(MultiIndex::new)).unwrap())
            })
    }

    use proptest::prelude::*;

    proptest! {
        #[test]
        fn closure_is_idempotent_and_monotone(
            v in proptest::collection::vec(proptest::collection::vec(0u32..5, 3), 1..6),
            extra in proptest::collection::vec(0u32..5, 3),
        ) {
            let a = MultiIndexSet::new(3, v.iter().cloned().map(MultiIndex::new)).unwrap();
            let b = MultiIndexSet::new(3, v.into_iter().chain([extra]).map(MultiIndex::new)).unwrap();
            let ca = downward_closure(&a);
            prop_assert!(ca.is_downward_closed());
            prop_assert!(a.is_subset(&ca));
            prop_assert_eq!(downward_closure(&ca), ca.clone());
            prop_assert!(ca.is_subset(&downward_closure(&b)));
        }

        #[test]
        fn half_set_matches_brute_force(set in downward_closed_strategy()) {
            let info = maximal_half_set(&set).unwrap();
            prop_assert!(info.exact);
            prop_assert!(info.size >= 1 && info.size <= set.len());
            prop_assert!(set.admits_half_set(&info.theta));
            prop_assert_eq!(info.theta.len(), info.size);
            let (best, count) = brute_force_half_set(&set);
            prop_assert_eq!(info.size, best);
            prop_assert_eq!(info.unique, count == 1);
            if is_convex(&set) {
                prop_assert!(info.unique);
                prop_assert_eq!(info.size, half_candidates(&set).len());
            }
        }

        #[test]
        fn minkowski_contains_doubles(set in downward_closed_strategy()) {
            let s = minkowski_sum(&set, &set).unwrap();
            prop_assert!(set.iter().all(|a| s.contains(&a.double())));
        }
    }
}
