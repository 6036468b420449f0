//! Stage one: a random candidate mesh and a sparse nonnegative moment fit.
//!
//! The fit follows the homotopy path of the nonnegative LASSO
//!
//! ```text
//! min ½‖Φ v - m‖² + λ Σ v_k,   v ≥ 0,
//! ```
//!
//! from `λ = max_k φ_kᵀ m` down to `λ = 0` (least angle regression with the
//! LASSO drop rule and positivity). The nonzero coefficients define a positive
//! quadrature rule supported on mesh points.
//!
//! As usual for least angle regression the path is traced on unit-norm
//! columns, so the penalty is effectively `Σ ‖φ(x_k)‖ v_k`. Without this,
//! a basis whose first element is constant makes `Σ v_k` equal to the fitted
//! zeroth moment and every correlation ties along the whole path.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::domains::{rng_from_seed, Domain};
use crate::error::{Error, Result};

/// Random points in the integration domain.
#[derive(Debug, Clone)]
pub struct CandidateMesh {
    pub points: Vec<Vec<f64>>,
    pub seed: u64,
}

/// Default mesh size `max(10 N, 1000)`.
pub fn default_mesh_size(n: usize) -> usize {
    (10 * n).max(1000)
}

/// Proposals judged before giving up on rejection from the bounding box.
const MESH_WARMUP: usize = 100_000;

/// `s` points uniform in `domain`; zonotopes use rejection from their
/// bounding box.
pub fn candidate_mesh(domain: &Domain, s: usize, seed: u64) -> Result<CandidateMesh> {
    let mut rng = rng_from_seed(seed);
    let bbox = domain.bounding_box();
    let mut points = Vec::with_capacity(s);
    let mut attempts = 0usize;
    while points.len() < s {
        attempts += 1;
        let x: Vec<f64> =
            bbox.lower.iter().zip(&bbox.upper).map(|(l, u)| l + (u - l) * rng.random::<f64>()).collect();
        if domain.contains(&x) {
            points.push(x);
        }
        if attempts % MESH_WARMUP == 0 {
            let rate = points.len() as f64 / attempts as f64;
            if rate < 1e-4 {
                return Err(Error::RejectionSampling { rate, attempts });
            }
        }
    }
    Ok(CandidateMesh { points, seed })
}

/// How the homotopy ended.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LassoStatus {
    /// `‖Φv - m‖₂ ≤ ε`.
    Converged,
    /// Reached `λ = 0`: the nonnegative least-squares optimum, above `ε`.
    PathEnd,
    /// No admissible variable could enter the active set.
    Stalled,
    MaxIter,
}

/// Sparse nonnegative solution of the moment equations.
#[derive(Debug, Clone)]
pub struct SparseSolution {
    /// Mesh indices with positive weight.
    pub support: Vec<usize>,
    pub weights: Vec<f64>,
    /// `‖Φv - m‖∞`.
    pub residual: f64,
    /// `‖Φv - m‖₂`.
    pub residual_l2: f64,
    pub iterations: usize,
    pub status: LassoStatus,
    /// `‖r‖₂` at every breakpoint of the path.
    pub residual_path: Vec<f64>,
}

/// Solver settings.
#[derive(Debug, Clone, Copy)]
pub struct LassoOptions {
    pub epsilon: f64,
    /// Iteration cap; `None` means `60 N + 1000`.
    pub max_iter: Option<usize>,
}

impl Default for LassoOptions {
    fn default() -> Self {
        LassoOptions { epsilon: 1e-8, max_iter: None }
    }
}

/// Upper-triangular `R` with `Φ_Aᵀ Φ_A = RᵀR`, updated as columns enter and
/// leave the active set.
struct Cholesky {
    r: Vec<Vec<f64>>, // r[i][j], j ≥ i, stored by row with full length
}

impl Cholesky {
    fn new() -> Self {
        Cholesky { r: Vec::new() }
    }

    fn len(&self) -> usize {
        self.r.len()
    }

    /// Solve `Rᵀ y = b`.
    fn solve_lower(&self, b: &[f64]) -> Vec<f64> {
        let k = self.len();
        let mut y = vec![0.0; k];
        for i in 0..k {
            let mut s = b[i];
            for j in 0..i {
                s -= self.r[j][i] * y[j];
            }
            y[i] = s / self.r[i][i];
        }
        y
    }

    /// Solve `R x = y`.
    fn solve_upper(&self, y: &[f64]) -> Vec<f64> {
        let k = self.len();
        let mut x = vec![0.0; k];
        for i in (0..k).rev() {
            let mut s = y[i];
            for j in i + 1..k {
                s -= self.r[i][j] * x[j];
            }
            x[i] = s / self.r[i][i];
        }
        x
    }

    /// Append a column with cross products `g` against the active columns and
    /// squared norm `gg`. Returns false if it is numerically dependent.
    fn push(&mut self, g: &[f64], gg: f64) -> bool {
        let y = self.solve_lower(g);
        let rest = gg - y.iter().map(|v| v * v).sum::<f64>();
        if !(rest > 1e-11 * gg) {
            return false;
        }
        let k = self.len();
        for (i, row) in self.r.iter_mut().enumerate() {
            row.push(y[i]);
        }
        let mut row = vec![0.0; k + 1];
        row[k] = rest.sqrt();
        self.r.push(row);
        true
    }

    /// Remove active column `k`, restoring triangularity by Givens rotations.
    fn remove(&mut self, k: usize) {
        for row in self.r.iter_mut() {
            row.remove(k);
        }
        let n = self.r.len();
        // rows k+1.. now have one subdiagonal entry at column i-1
        for i in k..n - 1 {
            let a = self.r[i][i];
            let b = self.r[i + 1][i];
            let h = a.hypot(b);
            if h == 0.0 {
                continue;
            }
            let (c, s) = (a / h, b / h);
            for j in i..n - 1 {
                let x = self.r[i][j];
                let y = self.r[i + 1][j];
                self.r[i][j] = c * x + s * y;
                self.r[i + 1][j] = -s * x + c * y;
            }
            self.r[i + 1][i] = 0.0;
        }
        self.r.pop();
        for row in self.r.iter_mut() {
            row.truncate(n - 1);
        }
    }
}

fn column(phi: &DMatrix<f64>, j: usize) -> &[f64] {
    let n = phi.nrows();
    &phi.as_slice()[j * n..(j + 1) * n]
}

/// Dot product with four independent accumulators so the loop vectorizes.
fn dot(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len().min(b.len());
    let (a, b) = (&a[..n], &b[..n]);
    let mut acc = [0.0; 4];
    let (ca, cb) = (a.chunks_exact(4), b.chunks_exact(4));
    let tail: f64 = ca.remainder().iter().zip(cb.remainder()).map(|(x, y)| x * y).sum();
    for (x, y) in ca.zip(cb) {
        for i in 0..4 {
            acc[i] += x[i] * y[i];
        }
    }
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

/// `Φᵀ x` over all columns, in parallel.
fn correlations(phi: &DMatrix<f64>, x: &[f64]) -> Vec<f64> {
    let n = phi.nrows();
    phi.as_slice().par_chunks(n).map(|c| dot(c, x)).collect()
}

fn norm_inf(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

fn norm2(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Nonnegative LASSO homotopy for `Φ v ≈ m` with `Φ` of size `N × S`
/// (one column per mesh point).
pub fn nn_lasso(phi: &DMatrix<f64>, m: &[f64], opts: &LassoOptions) -> Result<SparseSolution> {
    let (n, s) = phi.shape();
    if m.len() != n {
        return Err(Error::DimensionMismatch { expected: n, found: m.len() });
    }
    if s == 0 {
        return Err(Error::InvalidArgument("empty candidate mesh".into()));
    }
    let max_iter = opts.max_iter.unwrap_or(60 * n + 1000);
    // LARS convention: the path runs on unit-norm columns
    let original = phi;
    let norms: Vec<f64> = phi.as_slice().par_chunks(n).map(|c| dot(c, c).sqrt()).collect();
    let mut scaled = phi.clone();
    scaled.as_mut_slice().par_chunks_mut(n).zip(&norms).for_each(|(c, &nk)| {
        if nk > 0.0 {
            c.iter_mut().for_each(|v| *v /= nk);
        }
    });
    let phi = &scaled;
    let col_norm2: Vec<f64> = norms.iter().map(|&nk| if nk > 0.0 { 1.0 } else { 0.0 }).collect();
    let scale = norm2(m).max(1e-300);

    let mut active: Vec<usize> = Vec::new();
    let mut is_active = vec![false; s];
    let mut excluded = vec![false; s];
    let mut banned = vec![false; s];
    let mut v: Vec<f64> = Vec::new();
    let mut chol = Cholesky::new();
    let mut r: Vec<f64> = m.to_vec();
    let mut c = correlations(phi, &r);
    let mut path = vec![norm2(&r)];
    let mut status = LassoStatus::MaxIter;
    let mut iterations = 0;

    // first variable
    let mut lambda = c.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut entering: Option<usize> = if lambda > 0.0 {
        (0..s).filter(|&j| col_norm2[j] > 0.0).max_by(|&a, &b| c[a].total_cmp(&c[b]))
    } else {
        None
    };

    if path[0] <= opts.epsilon {
        status = LassoStatus::Converged;
        entering = None;
    } else if entering.is_none() {
        status = LassoStatus::Stalled;
    }

    while let Some(j) = entering.take() {
        if iterations >= max_iter {
            status = LassoStatus::MaxIter;
            break;
        }
        iterations += 1;
        let g: Vec<f64> = active.iter().map(|&k| dot(column(phi, k), column(phi, j))).collect();
        if !chol.push(&g, col_norm2[j]) {
            excluded[j] = true;
        } else {
            active.push(j);
            is_active[j] = true;
            v.push(0.0);
        }

        // step along the equiangular direction, repeating after drops
        loop {
            if active.is_empty() {
                break;
            }
            let ones = vec![1.0; active.len()];
            let delta = chol.solve_upper(&chol.solve_lower(&ones));
            let mut u = vec![0.0; n];
            for (&k, &dk) in active.iter().zip(&delta) {
                for (ui, pi) in u.iter_mut().zip(column(phi, k)) {
                    *ui += dk * pi;
                }
            }
            let a = correlations(phi, &u);

            let mut gamma = lambda;
            let mut next_in: Option<usize> = None;
            let mut next_out: Option<usize> = None;
            let tie = 1e-12 * lambda.abs().max(1e-300);
            let mut best_a = f64::INFINITY;
            for k in 0..s {
                if is_active[k] || excluded[k] || banned[k] || col_norm2[k] == 0.0 {
                    continue;
                }
                if a[k] < 1.0 - 1e-12 {
                    // tied correlations enter with a zero step, most violating first
                    let gap = lambda - c[k];
                    let g = if gap <= tie { 0.0 } else { gap / (1.0 - a[k]) };
                    if g < gamma || (g == gamma && g == 0.0 && a[k] < best_a) {
                        gamma = g;
                        best_a = a[k];
                        next_in = Some(k);
                    }
                }
            }
            for (i, (&vi, &di)) in v.iter().zip(&delta).enumerate() {
                if di < 0.0 {
                    let g = -vi / di;
                    if g < gamma {
                        gamma = g.max(0.0);
                        next_in = None;
                        next_out = Some(i);
                    }
                }
            }

            // stop inside the segment once ‖r - γu‖ = ε
            let (uu, ur, rr) = (dot(&u, &u), dot(&u, &r), dot(&r, &r));
            let eps2 = opts.epsilon * opts.epsilon;
            let mut hit_eps = false;
            if uu > 0.0 {
                let disc = ur * ur - uu * (rr - eps2);
                if disc >= 0.0 {
                    let g0 = (ur - disc.sqrt()) / uu;
                    if g0 >= 0.0 && g0 <= gamma {
                        gamma = g0;
                        hit_eps = true;
                        next_in = None;
                        next_out = None;
                    }
                }
            }

            for (vi, di) in v.iter_mut().zip(&delta) {
                *vi += gamma * di;
            }
            for (ri, ui) in r.iter_mut().zip(&u) {
                *ri -= gamma * ui;
            }
            for (ck, ak) in c.iter_mut().zip(&a) {
                *ck -= gamma * ak;
            }
            lambda -= gamma;

            let refresh = iterations % 25 == 0;
            if refresh {
                // refresh residual and correlations against drift
                r = m.to_vec();
                for (&k, &vk) in active.iter().zip(&v) {
                    for (ri, pi) in r.iter_mut().zip(column(phi, k)) {
                        *ri -= vk * pi;
                    }
                }
                c = correlations(phi, &r);
            }
            let res = norm2(&r);
            let prev = *path.last().unwrap();
            debug_assert!(
                refresh || res <= prev * (1.0 + 1e-9) + 1e-14 * scale,
                "homotopy residual increased: {prev} -> {res}"
            );
            path.push(res);

            if hit_eps || res <= opts.epsilon {
                status = LassoStatus::Converged;
                break;
            }
            if gamma > 0.0 {
                banned.iter_mut().for_each(|b| *b = false);
            }
            if let Some(i) = next_out {
                let k = active.remove(i);
                is_active[k] = false;
                banned[k] = gamma == 0.0;
                v.remove(i);
                chol.remove(i);
                iterations += 1;
                if iterations >= max_iter {
                    break;
                }
                continue;
            }
            if next_in.is_none() {
                status = if lambda <= 1e-14 * scale { LassoStatus::PathEnd } else { LassoStatus::Stalled };
            }
            entering = next_in;
            break;
        }
        if status != LassoStatus::MaxIter || iterations >= max_iter {
            break;
        }
        if entering.is_none() && active.is_empty() {
            status = LassoStatus::Stalled;
            break;
        }
        if entering.is_none() {
            status = if lambda <= 1e-14 * scale { LassoStatus::PathEnd } else { LassoStatus::Stalled };
            break;
        }
    }

    for (vk, &k) in v.iter_mut().zip(&active) {
        *vk /= norms[k];
    }
    let (support, weights, residual_vec) = polish(original, m, &active, &v);
    let residual_l2 = norm2(&residual_vec);
    if status != LassoStatus::Converged && residual_l2 <= opts.epsilon {
        status = LassoStatus::Converged;
    }
    Ok(SparseSolution {
        support,
        weights,
        residual: norm_inf(&residual_vec),
        residual_l2,
        iterations,
        status,
        residual_path: path,
    })
}

/// Drops nonpositive weights, then tries a QR least-squares re-solve on the
/// support, keeping it when it is positive and reduces the residual.
fn polish(phi: &DMatrix<f64>, m: &[f64], active: &[usize], v: &[f64]) -> (Vec<usize>, Vec<f64>, Vec<f64>) {
    let n = phi.nrows();
    let mut pairs: Vec<(usize, f64)> =
        active.iter().copied().zip(v.iter().copied()).filter(|(_, w)| *w > 0.0).collect();
    pairs.sort_by_key(|p| p.0);
    let residual = |pairs: &[(usize, f64)]| -> Vec<f64> {
        let mut r = m.to_vec();
        for &(k, w) in pairs {
            for (ri, pi) in r.iter_mut().zip(column(phi, k)) {
                *ri -= w * pi;
            }
        }
        r
    };
    let r0 = residual(&pairs);
    if !pairs.is_empty() && pairs.len() <= n {
        let a = DMatrix::from_fn(n, pairs.len(), |i, j| phi[(i, pairs[j].0)]);
        let qr = a.clone().qr();
        let rhs = qr.q().transpose() * DVector::from_column_slice(m);
        if let Some(x) = qr.r().solve_upper_triangular(&rhs) {
            if x.iter().all(|&w| w > 0.0 && w.is_finite()) {
                let cand: Vec<(usize, f64)> = pairs.iter().map(|p| p.0).zip(x.iter().copied()).collect();
                let r1 = residual(&cand);
                if norm2(&r1) < norm2(&r0) {
                    let (s, w) = cand.into_iter().unzip();
                    return (s, w, r1);
                }
            }
        }
    }
    let (s, w) = pairs.into_iter().unzip();
    (s, w, r0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domains::{zonotope_build, BoxDomain};
    use crate::indexset::total_degree_set;
    use crate::orthopoly::{gauss_rule, Measure1d, TensorBasis};

    #[test]
    fn mesh_in_domain() {
        let d = Domain::Box(BoxDomain::cube(2, -1.0, 1.0));
        let m = candidate_mesh(&d, 4, 3).unwrap();
        assert_eq!(m.points.len(), 4);
        assert!(m.points.iter().all(|p| d.contains(p)));
        assert_eq!(candidate_mesh(&d, 4, 3).unwrap().points, m.points);
        assert_eq!(default_mesh_size(50), 1000);
        assert_eq!(default_mesh_size(3003), 30030);
    }

    #[test]
    fn zonotope_mesh_is_centered() {
        let z = zonotope_build(&[vec![1.0, 0.0], vec![0.0, 1.0]], None, 0).unwrap();
        let m = candidate_mesh(&Domain::Zonotope(z), 100_000, 1).unwrap();
        let sigma = (1.0f64 / 3.0 / 1e5).sqrt();
        for j in 0..2 {
            let mean = m.points.iter().map(|p| p[j]).sum::<f64>() / 1e5;
            assert!(mean.abs() < 4.0 * sigma);
        }
    }

    #[test]
    fn identity_system() {
        let phi = DMatrix::identity(4, 4);
        let m = [0.3, 0.0, 0.5, 0.2];
        let sol = nn_lasso(&phi, &m, &LassoOptions { epsilon: 0.0, max_iter: None }).unwrap();
        assert_eq!(sol.support, vec![0, 2, 3]);
        for (k, w) in sol.support.iter().zip(&sol.weights) {
            assert!((w - m[*k]).abs() < 1e-15);
        }
        assert!(sol.residual < 1e-15);
    }

    #[test]
    fn infeasible_sign_stalls() {
        let phi = DMatrix::from_row_slice(2, 3, &[1.0, 1.0, 1.0, 0.5, -0.5, 0.1]);
        let sol = nn_lasso(&phi, &[-1.0, 0.0], &LassoOptions::default()).unwrap();
        assert_eq!(sol.status, LassoStatus::Stalled);
        assert!(sol.residual > 0.5);
        assert!(sol.support.is_empty());
    }

    #[test]
    fn recovers_gauss_rule() {
        let set = total_degree_set(1, 5);
        let rec = Measure1d::uniform().recurrence(6).unwrap();
        let gauss = gauss_rule(&rec, 3).unwrap();
        let mut mesh = candidate_mesh(&Domain::Box(BoxDomain::cube(1, -1.0, 1.0)), 100, 5).unwrap().points;
        mesh.extend(gauss.nodes.iter().map(|&x| vec![x]));
        let basis = TensorBasis::orthonormal(vec![rec]);
        let phi = basis.eval_columns(&set, &mesh).unwrap();
        let mut m = vec![0.0; 6];
        m[0] = 1.0;
        let sol = nn_lasso(&phi, &m, &LassoOptions { epsilon: 1e-12, max_iter: None }).unwrap();
        assert_eq!(sol.status, LassoStatus::Converged);
        assert!(sol.residual <= 1e-12);
        assert!(sol.support.len() <= 6);
        assert!(sol.weights.iter().all(|&w| w > 0.0));
        let path = &sol.residual_path;
        assert!(path.windows(2).all(|w| w[1] <= w[0] * (1.0 + 1e-9)));
    }

    #[test]
    fn tchakaloff_support_bound() {
        let set = total_degree_set(2, 6);
        let basis = TensorBasis::for_measures(&[Measure1d::uniform(); 2], &set).unwrap();
        let mesh = candidate_mesh(&Domain::Box(BoxDomain::cube(2, -1.0, 1.0)), 2000, 9).unwrap();
        let phi = basis.eval_columns(&set, &mesh.points).unwrap();
        let mut m = vec![0.0; set.len()];
        m[0] = 1.0;
        let a = nn_lasso(&phi, &m, &LassoOptions::default()).unwrap();
        assert_eq!(a.status, LassoStatus::Converged);
        assert!(a.support.len() <= set.len());
        let b = nn_lasso(&phi, &m, &LassoOptions::default()).unwrap();
        assert_eq!(a.support, b.support);
        assert_eq!(a.weights, b.weights);
    }

    #[test]
    fn cholesky_updates() {
        let mut ch = Cholesky::new();
        let cols = [[1.0, 0.0, 1.0], [0.0, 2.0, 1.0], [1.0, 1.0, 0.0]];
        for (i, c) in cols.iter().enumerate() {
            let g: Vec<f64> = (0..i).map(|k| dot(&cols[k], c)).collect();
            assert!(ch.push(&g, dot(c, c)));
        }
        ch.remove(1);
        // remaining Gram of columns 0 and 2
        let keep = [cols[0], cols[2]];
        for i in 0..2 {
            for j in 0..2 {
                let rtr: f64 = (0..2).map(|k| ch.r[k][i] * ch.r[k][j]).sum();
                assert!((rtr - dot(&keep[i], &keep[j])).abs() < 1e-14);
            }
        }
        assert!(!ch.push(&[dot(&cols[0], &cols[0]), dot(&cols[2], &cols[0])], dot(&cols[0], &cols[0])));
    }
}
