//! Stage two of the pipeline: greedy clustering of the sparse initial rule,
//! bound-constrained Levenberg-Marquardt refinement of nodes and weights, and
//! the outer loop over rule sizes. Also independent verification, the
//! quasi-optimality diagnostics and the diagonal Gauss constructions.

use crate::domains::Domain;
use crate::error::{Error, Result};
use crate::indexset::{all_maximal_half_sets, anova_set, heuristic_size, maximal_half_set, MultiIndexSet};
use crate::l1init::{candidate_mesh, default_mesh_size, nn_lasso, LassoOptions, LassoStatus};
use crate::moments::{tensor_moments, MomentProblem};
use crate::orthopoly::{christoffel_lambda_in, gauss_rule, Measure1d, TensorBasis};
use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub const RULE_SCHEMA: &str = "quadgen.rule.v1";

/// Optimization tolerance for the stall and gradient exits.
pub const REFINE_TOL: f64 = 1e-10;

/// A rule counts as exact when the objective `f = ‖r‖²` drops below this.
pub const SUCCESS_TOL: f64 = 1e-8;

/// Objective below which no further step is attempted.
pub const OBJECTIVE_FLOOR: f64 = 1e-28;

/// Allowed domain violation of returned nodes.
pub const FEASIBILITY_TOL: f64 = 1e-10;

fn rule_schema() -> String {
    RULE_SCHEMA.to_string()
}

/// Basis, moments and domain stored next to a rule so that it can be
/// verified on its own.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ProblemRecord {
    pub basis: TensorBasis,
    pub moments: Vec<f64>,
    pub domain: Domain,
    pub measure: String,
    #[serde(default)]
    pub basis_note: String,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RuleMetadata {
    pub method: String,
    pub index_set_digest: String,
    pub measure_digest: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    pub m_requested: usize,
    pub increments_used: usize,
    pub iterations: usize,
    pub objective: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub exit: Option<ExitReason>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mesh_size: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lasso_status: Option<LassoStatus>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
}

/// Nodes and nonnegative weights with their moment residual.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct QuadratureRule {
    #[serde(default = "rule_schema")]
    pub schema: String,
    pub dim: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub index_set: Option<MultiIndexSet>,
    pub nodes: Vec<Vec<f64>>,
    pub weights: Vec<f64>,
    /// `‖m − Σ w_j p(x_j)‖₂` in the problem basis.
    pub residual_l2: f64,
    pub success: bool,
    #[serde(default)]
    pub metadata: RuleMetadata,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub problem: Option<ProblemRecord>,
}

impl QuadratureRule {
    /// Bare rule without problem information.
    pub fn new(nodes: Vec<Vec<f64>>, weights: Vec<f64>) -> Result<Self> {
        if nodes.len() != weights.len() {
            return Err(Error::DimensionMismatch { expected: nodes.len(), found: weights.len() });
        }
        let dim = nodes.first().map_or(0, Vec::len);
        if let Some(x) = nodes.iter().find(|x| x.len() != dim) {
            return Err(Error::DimensionMismatch { expected: dim, found: x.len() });
        }
        Ok(QuadratureRule {
            schema: RULE_SCHEMA.to_string(),
            dim,
            index_set: None,
            nodes,
            weights,
            residual_l2: f64::NAN,
            success: false,
            metadata: RuleMetadata::default(),
            problem: None,
        })
    }

    fn for_problem(problem: &MomentProblem, nodes: Vec<Vec<f64>>, weights: Vec<f64>, method: &str) -> Self {
        let residual_l2 = moment_residual(problem, &nodes, &weights).map_or(f64::NAN, |r| r.norm());
        let objective = residual_l2 * residual_l2;
        QuadratureRule {
            schema: RULE_SCHEMA.to_string(),
            dim: problem.dim(),
            index_set: Some(problem.index_set.clone()),
            nodes,
            weights,
            residual_l2,
            success: objective < SUCCESS_TOL,
            metadata: RuleMetadata {
                method: method.to_string(),
                index_set_digest: index_set_digest(&problem.index_set),
                measure_digest: measure_digest(problem),
                objective,
                ..RuleMetadata::default()
            },
            problem: Some(ProblemRecord {
                basis: problem.basis.clone(),
                moments: problem.moments.clone(),
                domain: problem.domain.clone(),
                measure: problem.measure.clone(),
                basis_note: problem.basis_note.clone(),
            }),
        }
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    /// `Σ w_j f(x_j)`.
    pub fn integrate<F: Fn(&[f64]) -> f64 + Sync>(&self, f: F) -> f64 {
        let vals: Vec<f64> = self.nodes.par_iter().map(|x| f(x)).collect();
        vals.iter().zip(&self.weights).map(|(v, w)| v * w).sum()
    }

    /// The moment problem stored with the rule, if any.
    pub fn problem(&self) -> Option<MomentProblem> {
        let rec = self.problem.as_ref()?;
        let set = self.index_set.clone()?;
        let mut p = MomentProblem::new(set, rec.basis.clone(), rec.moments.clone(), rec.domain.clone(), rec.measure.clone())
            .ok()?;
        p.basis_note = rec.basis_note.clone();
        Some(p)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let r: QuadratureRule = serde_json::from_str(s)?;
        if r.nodes.len() != r.weights.len() {
            return Err(Error::DimensionMismatch { expected: r.nodes.len(), found: r.weights.len() });
        }
        Ok(r)
    }
}

fn hex_digest(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

/// SHA-256 of the index set's JSON form.
pub fn index_set_digest(set: &MultiIndexSet) -> String {
    hex_digest(serde_json::to_string(set).unwrap_or_default().as_bytes())
}

/// SHA-256 over the measure description, basis and moments.
pub fn measure_digest(problem: &MomentProblem) -> String {
    let mut h = Sha256::new();
    h.update(problem.measure.as_bytes());
    h.update(serde_json::to_string(&problem.basis).unwrap_or_default().as_bytes());
    h.update(serde_json::to_string(&problem.domain).unwrap_or_default().as_bytes());
    for m in &problem.moments {
        h.update(m.to_le_bytes());
    }
    h.finalize().iter().map(|b| format!("{b:02x}")).collect()
}

/// Greedy reduction to `m` points: repeatedly merges the lightest point with
/// its nearest neighbour into their weighted centroid.
pub fn cluster(x: &[Vec<f64>], w: &[f64], m: usize) -> Result<(Vec<Vec<f64>>, Vec<f64>)> {
    if x.len() != w.len() {
        return Err(Error::DimensionMismatch { expected: x.len(), found: w.len() });
    }
    if m == 0 || m > x.len() {
        return Err(Error::InvalidArgument(format!("cannot cluster {} points into {m}", x.len())));
    }
    let mut pts = x.to_vec();
    let mut wts = w.to_vec();
    while pts.len() > m {
        let i = (0..wts.len()).min_by(|&a, &b| wts[a].total_cmp(&wts[b])).unwrap();
        let j = (0..pts.len())
            .filter(|&k| k != i)
            .map(|k| (k, dist2(&pts[i], &pts[k])))
            .min_by(|a, b| a.1.total_cmp(&b.1))
            .map(|(k, _)| k)
            .unwrap();
        let (wi, wj) = (wts[i], wts[j]);
        let ws = wi + wj;
        let merged: Vec<f64> = if ws > 0.0 {
            pts[i].iter().zip(&pts[j]).map(|(a, b)| (wi * a + wj * b) / ws).collect()
        } else {
            pts[i].iter().zip(&pts[j]).map(|(a, b)| 0.5 * (a + b)).collect()
        };
        pts[i] = merged;
        wts[i] = ws;
        pts.remove(j);
        wts.remove(j);
    }
    Ok((pts, wts))
}

fn dist2(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Why the refinement stopped.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExitReason {
    ObjectiveStall,
    GradientSmall,
    MaxIter,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RefineReport {
    /// Objective after the start and after every accepted step.
    pub objective: Vec<f64>,
    /// `‖g_s‖∞` of the projected gradient at the same iterates.
    pub gradient_norm: Vec<f64>,
    pub exit: ExitReason,
    pub success: bool,
    /// Linear solves performed, accepted or not.
    pub iterations: usize,
}

#[derive(Debug, Clone, Copy)]
pub struct RefineOptions {
    pub max_iter: usize,
    pub tol: f64,
    pub success_tol: f64,
}

impl Default for RefineOptions {
    fn default() -> Self {
        RefineOptions { max_iter: 2000, tol: REFINE_TOL, success_tol: SUCCESS_TOL }
    }
}

/// Moment residual `r = m − Σ_j w_j p(x_j)`.
pub fn moment_residual(problem: &MomentProblem, nodes: &[Vec<f64>], weights: &[f64]) -> Result<DVector<f64>> {
    if nodes.len() != weights.len() {
        return Err(Error::DimensionMismatch { expected: nodes.len(), found: weights.len() });
    }
    let mut r = DVector::from_column_slice(&problem.moments);
    if nodes.is_empty() {
        return Ok(r);
    }
    let phi = problem.basis.eval_columns(&problem.index_set, nodes)?;
    r.gemv(-1.0, &phi, &DVector::from_column_slice(weights), 1.0);
    Ok(r)
}

/// Residual and its Jacobian with respect to the parameters ordered
/// `[x_1, w_1, x_2, w_2, …]`: `∂r/∂w_m = −p(x_m)` and
/// `∂r/∂x_{m,k} = −w_m ∂_k p(x_m)`.
pub fn residual_jacobian(
    problem: &MomentProblem,
    nodes: &[Vec<f64>],
    weights: &[f64],
) -> Result<(DVector<f64>, DMatrix<f64>)> {
    if nodes.len() != weights.len() {
        return Err(Error::DimensionMismatch { expected: nodes.len(), found: weights.len() });
    }
    let (n, d) = (problem.len(), problem.dim());
    let block = d + 1;
    let mut jac = DMatrix::<f64>::zeros(n, nodes.len() * block);
    jac.as_mut_slice()
        .par_chunks_mut(n * block)
        .zip(nodes.par_iter().zip(weights.par_iter()))
        .try_for_each(|(cols, (x, &w))| -> Result<()> {
            let (v, g) = problem.basis.eval_with_gradient(&problem.index_set, x)?;
            for k in 0..d {
                for i in 0..n {
                    cols[k * n + i] = -w * g[(k, i)];
                }
            }
            for i in 0..n {
                cols[d * n + i] = -v[i];
            }
            Ok(())
        })?;
    let mut r = DVector::from_column_slice(&problem.moments);
    for (m, &w) in weights.iter().enumerate() {
        r.axpy(w, &jac.column(m * block + d), 1.0);
    }
    Ok((r, jac))
}

fn pack(nodes: &[Vec<f64>], weights: &[f64]) -> Vec<f64> {
    nodes
        .iter()
        .zip(weights)
        .flat_map(|(x, &w)| x.iter().copied().chain(std::iter::once(w)))
        .collect()
}

fn unpack(p: &[f64], d: usize) -> (Vec<Vec<f64>>, Vec<f64>) {
    p.chunks(d + 1).map(|c| (c[..d].to_vec(), c[d])).unzip()
}

fn project_params(domain: &Domain, d: usize, p: &mut [f64]) {
    for c in p.chunks_mut(d + 1) {
        domain.project(&mut c[..d]);
        c[d] = c[d].max(0.0);
    }
}

/// Largest constraint violation of `x`.
pub fn domain_violation(domain: &Domain, x: &[f64]) -> f64 {
    match domain {
        Domain::Box(b) => x
            .iter()
            .zip(b.lower.iter().zip(&b.upper))
            .map(|(v, (l, u))| (l - v).max(v - u).max(0.0))
            .fold(0.0, f64::max),
        Domain::Zonotope(z) => z.halfspaces.iter().map(|h| h.violation(x).max(0.0)).fold(0.0, f64::max),
    }
}

/// `Aᵀ A`, assembled column block by column block in parallel.
fn gram(a: &DMatrix<f64>) -> DMatrix<f64> {
    const BLOCK: usize = 64;
    let p = a.ncols();
    let blocks: Vec<(usize, DMatrix<f64>)> = (0..p)
        .step_by(BLOCK)
        .collect::<Vec<_>>()
        .into_par_iter()
        .map(|c0| {
            let w = BLOCK.min(p - c0);
            (c0, a.tr_mul(&a.columns(c0, w)))
        })
        .collect();
    let mut g = DMatrix::zeros(p, p);
    for (c0, b) in blocks {
        g.columns_mut(c0, b.ncols()).copy_from(&b);
    }
    g
}

/// Parameters held at a bound whose gradient points outward.
fn free_parameters(domain: &Domain, d: usize, p: &[f64], grad: &[f64]) -> Vec<usize> {
    let mut free = Vec::with_capacity(p.len());
    for (i, (&v, &g)) in p.iter().zip(grad).enumerate() {
        let k = i % (d + 1);
        let fixed = if k == d {
            v <= 0.0 && g > 0.0
        } else if let Domain::Box(b) = domain {
            (v <= b.lower[k] && g > 0.0) || (v >= b.upper[k] && g < 0.0)
        } else {
            false
        };
        if !fixed {
            free.push(i);
        }
    }
    free
}

/// `‖p − P(p − ∇f)‖∞`, the gradient with components blocked by active
/// constraints removed.
fn scaled_gradient_norm(domain: &Domain, d: usize, p: &[f64], grad: &[f64]) -> f64 {
    let mut q: Vec<f64> = p.iter().zip(grad).map(|(a, g)| a - g).collect();
    project_params(domain, d, &mut q);
    p.iter().zip(&q).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max)
}

/// Damped Gauss-Newton step restricted to the `free` columns, solving in
/// whichever of parameter or moment space is smaller.
struct StepSystem {
    jf: DMatrix<f64>,
    gram: DMatrix<f64>,
    scale: DVector<f64>,
    primal: bool,
}

impl StepSystem {
    /// Columns are scaled to unit norm (Marquardt scaling) before damping.
    fn new(jac: &DMatrix<f64>, free: &[usize]) -> Self {
        let mut jf = jac.select_columns(free);
        let norms: Vec<f64> = jf.column_iter().map(|c| c.norm()).collect();
        let floor = 1e-8 * norms.iter().copied().fold(0.0, f64::max).max(1e-300);
        let scale = DVector::from_iterator(norms.len(), norms.iter().map(|&n| 1.0 / n.max(floor)));
        for (mut c, s) in jf.column_iter_mut().zip(scale.iter()) {
            c *= *s;
        }
        let primal = free.len() <= jac.nrows();
        let gram = if primal { gram(&jf) } else { gram(&jf.transpose()) };
        StepSystem { jf, gram, scale, primal }
    }

    fn max_diag(&self) -> f64 {
        self.gram.diagonal().iter().fold(0.0, |m: f64, v| m.max(*v))
    }

    fn solve(&self, r: &DVector<f64>, mu: f64) -> Option<DVector<f64>> {
        let mut a = self.gram.clone();
        for i in 0..a.nrows() {
            a[(i, i)] += mu;
        }
        let chol = a.cholesky()?;
        let step = if self.primal {
            -chol.solve(&self.jf.tr_mul(r))
        } else {
            -self.jf.tr_mul(&chol.solve(r))
        };
        let step = step.component_mul(&self.scale);
        step.iter().all(|v| v.is_finite()).then_some(step)
    }
}

/// Minimizes `f = ‖m − Σ w_j p(x_j)‖²` over nodes in the domain and
/// nonnegative weights, starting from `(x0, w0)`, with a projected
/// Levenberg-Marquardt iteration.
pub fn refine(
    x0: &[Vec<f64>],
    w0: &[f64],
    problem: &MomentProblem,
    opts: &RefineOptions,
) -> Result<(QuadratureRule, RefineReport)> {
    let d = problem.dim();
    if x0.len() != w0.len() {
        return Err(Error::DimensionMismatch { expected: x0.len(), found: w0.len() });
    }
    if x0.is_empty() {
        return Err(Error::InvalidArgument("refinement needs at least one node".into()));
    }
    for (i, x) in x0.iter().enumerate() {
        if x.len() != d {
            return Err(Error::DimensionMismatch { expected: d, found: x.len() });
        }
        if !problem.domain.contains(x) {
            return Err(Error::OutsideDomain { index: i });
        }
    }
    if let Some(w) = w0.iter().find(|w| !(**w >= 0.0)) {
        return Err(Error::InvalidArgument(format!("negative initial weight {w}")));
    }

    let domain = &problem.domain;
    let mut p = pack(x0, w0);
    let (nodes, weights) = unpack(&p, d);
    let (mut r, mut jac) = residual_jacobian(problem, &nodes, &weights)?;
    let mut f = r.norm_squared();
    let mut grad: Vec<f64> = (jac.tr_mul(&r) * 2.0).iter().copied().collect();
    let mut objective = vec![f];
    let mut gradient_norm = vec![scaled_gradient_norm(domain, d, &p, &grad)];
    let mut mu: Option<f64> = None;
    let mut nu = 2.0;
    let mut iterations = 0;

    let exit = 'outer: loop {
        if f < OBJECTIVE_FLOOR || *gradient_norm.last().unwrap() < opts.tol {
            break ExitReason::GradientSmall;
        }
        if iterations >= opts.max_iter {
            break ExitReason::MaxIter;
        }
        let free = free_parameters(domain, d, &p, &grad);
        if free.is_empty() {
            break ExitReason::GradientSmall;
        }
        let system = StepSystem::new(&jac, &free);
        let mu = mu.get_or_insert_with(|| 1e-3 * system.max_diag().max(1e-300));
        loop {
            if iterations >= opts.max_iter {
                break 'outer ExitReason::MaxIter;
            }
            iterations += 1;
            let Some(step) = system.solve(&r, *mu) else {
                *mu *= nu;
                nu *= 2.0;
                continue;
            };
            let mut trial = p.clone();
            for (&i, s) in free.iter().zip(step.iter()) {
                trial[i] += s;
            }
            project_params(domain, d, &mut trial);
            let eff = DVector::from_iterator(p.len(), trial.iter().zip(&p).map(|(a, b)| a - b));
            let predicted = f - (&r + &jac * &eff).norm_squared();
            let (tn, tw) = unpack(&trial, d);
            let f_new = moment_residual(problem, &tn, &tw)?.norm_squared();
            if f_new < f && predicted > 0.0 {
                let rho = (f - f_new) / predicted;
                *mu *= (1.0 - (2.0 * rho - 1.0).powi(3)).max(1.0 / 3.0);
                nu = 2.0;
                let f_old = f;
                p = trial;
                (r, jac) = residual_jacobian(problem, &tn, &tw)?;
                f = r.norm_squared();
                grad = (jac.tr_mul(&r) * 2.0).iter().copied().collect();
                objective.push(f);
                gradient_norm.push(scaled_gradient_norm(domain, d, &p, &grad));
                if (f_old - f).abs() < opts.tol * f {
                    break 'outer ExitReason::ObjectiveStall;
                }
                break;
            }
            *mu *= nu;
            nu *= 2.0;
            if !mu.is_finite() || *mu > 1e300 {
                break 'outer ExitReason::ObjectiveStall;
            }
        }
    };

    let (nodes, weights) = unpack(&p, d);
    for (i, (x, w)) in nodes.iter().zip(&weights).enumerate() {
        assert!(*w >= 0.0, "negative weight at node {i}");
        assert!(domain_violation(domain, x) <= FEASIBILITY_TOL, "node {i} left the domain");
    }
    let success = f < opts.success_tol;
    let mut rule = QuadratureRule::for_problem(problem, nodes, weights, "refine");
    rule.metadata.iterations = iterations;
    rule.metadata.exit = Some(exit);
    rule.metadata.m_requested = x0.len();
    rule.success = rule.metadata.objective < opts.success_tol;
    let report = RefineReport { objective, gradient_norm, exit, success, iterations };
    Ok((rule, report))
}

#[derive(Debug, Clone)]
pub struct GenerateOptions {
    pub seed: u64,
    /// Candidate mesh size; `max(10 N, 1000)` when unset.
    pub mesh_size: Option<usize>,
    /// Residual target of the ℓ1 stage.
    pub epsilon: f64,
    pub max_increments: usize,
    /// Starting rule size; the heuristic (raised to `L(Λ)`) when unset.
    pub initial_size: Option<usize>,
    pub refine: RefineOptions,
}

impl Default for GenerateOptions {
    fn default() -> Self {
        GenerateOptions {
            seed: 0,
            mesh_size: None,
            epsilon: 1e-8,
            max_increments: 10,
            initial_size: None,
            refine: RefineOptions::default(),
        }
    }
}

/// One refinement attempt of the outer loop.
#[derive(Debug, Clone, Serialize)]
pub struct Attempt {
    pub m: usize,
    pub objective: f64,
    pub iterations: usize,
    pub exit: ExitReason,
    pub success: bool,
}

#[derive(Debug, Clone)]
pub struct Generated {
    /// First successful rule, or the best failure.
    pub rule: QuadratureRule,
    /// Sparse rule selected by the ℓ1 stage.
    pub initial: QuadratureRule,
    pub success: bool,
    pub attempts: Vec<Attempt>,
    pub reports: Vec<RefineReport>,
}

/// Starting size `max(⌈N/(d+1)⌉, L(Λ))`, the bound applied only to
/// downward-closed sets.
pub fn starting_size(set: &MultiIndexSet) -> usize {
    heuristic_size(set, true).max(1)
}

/// Full pipeline: ℓ1 selection on a random mesh, clustering to `M` points
/// and refinement, growing `M` by one after each failure.
pub fn generate(problem: &MomentProblem, opts: &GenerateOptions) -> Result<Generated> {
    let n = problem.len();
    let s = opts.mesh_size.unwrap_or_else(|| default_mesh_size(n));
    let mut warnings = Vec::new();
    if s < 10 * n {
        warnings.push(format!("candidate mesh of {s} points is smaller than 10N = {}", 10 * n));
    }
    let mesh = candidate_mesh(&problem.domain, s, opts.seed)?;
    let phi = problem.basis.eval_columns(&problem.index_set, &mesh.points)?;
    let sol = nn_lasso(&phi, &problem.moments, &LassoOptions { epsilon: opts.epsilon, max_iter: None })?;
    drop(phi);
    if sol.support.is_empty() {
        return Err(Error::DegenerateMeasure("the l1 stage selected no candidate points".into()));
    }
    let x1: Vec<Vec<f64>> = sol.support.iter().map(|&k| mesh.points[k].clone()).collect();
    let w1 = sol.weights.clone();
    let k = x1.len();

    let mut initial = QuadratureRule::for_problem(problem, x1.clone(), w1.clone(), "l1-initial");
    initial.metadata.seed = Some(opts.seed);
    initial.metadata.mesh_size = Some(s);
    initial.metadata.lasso_status = Some(sol.status);
    initial.metadata.iterations = sol.iterations;
    initial.metadata.m_requested = k;
    initial.metadata.warnings = warnings.clone();

    let m0 = opts.initial_size.unwrap_or_else(|| starting_size(&problem.index_set)).max(1);
    let mut attempts = Vec::new();
    let mut reports = Vec::new();
    let mut best: Option<QuadratureRule> = None;
    for inc in 0..=opts.max_increments {
        let m = m0 + inc;
        let (x0, w0) = if m >= k { (x1.clone(), w1.clone()) } else { cluster(&x1, &w1, m)? };
        let (mut rule, report) = refine(&x0, &w0, problem, &opts.refine)?;
        attempts.push(Attempt {
            m,
            objective: rule.metadata.objective,
            iterations: report.iterations,
            exit: report.exit,
            success: rule.success,
        });
        rule.metadata.increments_used = inc;
        rule.metadata.m_requested = m;
        let done = rule.success || m >= k;
        let better = best.as_ref().is_none_or(|b| rule.metadata.objective < b.metadata.objective);
        reports.push(report);
        if rule.success || better {
            best = Some(rule);
        }
        if done {
            break;
        }
    }
    let mut rule = best.expect("at least one attempt");
    prune_zero_weights(&mut rule);
    rule.metadata.method = "reduced".into();
    rule.metadata.seed = Some(opts.seed);
    rule.metadata.mesh_size = Some(s);
    rule.metadata.lasso_status = Some(sol.status);
    rule.metadata.warnings = warnings;
    let success = rule.success;
    Ok(Generated { rule, initial, success, attempts, reports })
}

/// Removes nodes whose weight is exactly zero; the residual is unchanged.
fn prune_zero_weights(rule: &mut QuadratureRule) {
    if rule.weights.iter().all(|&w| w > 0.0) {
        return;
    }
    let (nodes, weights) =
        rule.nodes.drain(..).zip(rule.weights.drain(..)).filter(|(_, w)| *w > 0.0).unzip();
    rule.nodes = nodes;
    rule.weights = weights;
}

/// One moment of the verification table.
#[derive(Debug, Clone, Serialize)]
pub struct MomentRow {
    pub index: Vec<u32>,
    pub target: f64,
    pub computed: f64,
    pub error: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct VerifyReport {
    pub residual_l2: f64,
    pub residual_linf: f64,
    pub min_weight: f64,
    pub max_domain_violation: f64,
    pub rows: Vec<MomentRow>,
}

/// Recomputes the moment residual of `rule` from scratch in the problem
/// basis.
pub fn verify(rule: &QuadratureRule, problem: &MomentProblem) -> Result<VerifyReport> {
    if rule.nodes.len() != rule.weights.len() {
        return Err(Error::DimensionMismatch { expected: rule.nodes.len(), found: rule.weights.len() });
    }
    let v = problem.eval(&rule.nodes)?;
    let mut rows = Vec::with_capacity(problem.len());
    for (i, a) in problem.index_set.iter().enumerate() {
        let computed: f64 = rule.weights.iter().enumerate().map(|(s, w)| w * v[(s, i)]).sum();
        let target = problem.moments[i];
        rows.push(MomentRow { index: a.coords().to_vec(), target, computed, error: computed - target });
    }
    Ok(VerifyReport {
        residual_l2: rows.iter().map(|r| r.error * r.error).sum::<f64>().sqrt(),
        residual_linf: rows.iter().fold(0.0, |m, r| m.max(r.error.abs())),
        min_weight: rule.weights.iter().copied().fold(f64::INFINITY, f64::min),
        max_domain_violation: rule.nodes.iter().map(|x| domain_violation(&problem.domain, x)).fold(0.0, f64::max),
        rows,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct QuasiOptimality {
    pub m: usize,
    pub l: usize,
    /// False when the half-set search hit its budget.
    pub l_exact: bool,
    pub is_quasi_optimal: bool,
    /// `max_j |w_j − λ_Θ(x_j)|` over all maximal half-sets found; present
    /// only when `M = L`.
    pub weight_check: Option<f64>,
    pub half_sets_checked: usize,
}

/// Maximal half-sets examined by [`quasi_optimality_report`].
pub const HALF_SET_LIMIT: usize = 256;

/// Compares the rule size with `L(Λ)` and, for rules of exactly that size,
/// the weights with the Christoffel function of every maximal half-set.
/// `basis` must be orthonormal for the rule's measure.
pub fn quasi_optimality_report(
    rule: &QuadratureRule,
    set: &MultiIndexSet,
    basis: &TensorBasis,
) -> Result<QuasiOptimality> {
    let info = maximal_half_set(set)?;
    let m = rule.len();
    let (l, l_exact) = (info.size, info.exact);
    let mut weight_check = None;
    let mut half_sets_checked = 0;
    if m == l {
        let thetas = if info.unique { vec![info.theta] } else { all_maximal_half_sets(set, HALF_SET_LIMIT)? };
        let mut worst: f64 = 0.0;
        for theta in &thetas {
            for (x, w) in rule.nodes.iter().zip(&rule.weights) {
                worst = worst.max((w - christoffel_lambda_in(theta, basis, x)?).abs());
            }
        }
        half_sets_checked = thetas.len();
        weight_check = Some(worst);
    }
    Ok(QuasiOptimality { m, l, l_exact, is_quasi_optimal: m == l && l_exact, weight_check, half_sets_checked })
}

/// Rule on the diagonal of a tensor measure with identical factors: the
/// `⌊n/2⌋+1`-point univariate Gauss nodes `t_m` placed at
/// `x_m = c + σ_j (t_m − c)` in every coordinate, with `c` the factor's
/// centre. Exact on `{0} ∪ {k e_j : 1 ≤ k ≤ n}`.
pub fn diagonal_gauss_rule(factors: &[Measure1d], n: u32, signs: Option<&[i8]>) -> Result<QuadratureRule> {
    let d = factors.len();
    let first = *factors.first().ok_or_else(|| Error::InvalidArgument("no factors".into()))?;
    if factors.iter().any(|f| *f != first) {
        return Err(Error::NonIdenticalFactors);
    }
    let sigma: Vec<f64> = match signs {
        Some(s) => {
            if s.len() != d {
                return Err(Error::DimensionMismatch { expected: d, found: s.len() });
            }
            if s.iter().any(|&v| v != 1 && v != -1) {
                return Err(Error::InvalidArgument("signs must be +1 or -1".into()));
            }
            s.iter().map(|&v| v as f64).collect()
        }
        None => vec![1.0; d],
    };
    if sigma.iter().any(|&v| v < 0.0) && !first.is_symmetric() {
        return Err(Error::AsymmetricMeasure);
    }
    let m = n as usize / 2 + 1;
    let g = gauss_rule(&first.recurrence(m)?, m)?;
    let c = first.center();
    let nodes: Vec<Vec<f64>> =
        g.nodes.iter().map(|&t| sigma.iter().map(|s| c + s * (t - c)).collect()).collect();
    let set = anova_set(d, 1, n)?;
    let basis = TensorBasis::for_measures(factors, &set)?;
    let moments = tensor_moments(factors, &set, &basis)?;
    let measure = crate::domains::Measure::Tensor(factors.to_vec());
    let mut problem = MomentProblem::new(set, basis, moments, measure.domain()?, measure.describe())?;
    problem.basis_note = "tensor orthonormal".into();
    let mut rule = QuadratureRule::for_problem(&problem, nodes, g.weights, "diagonal-gauss");
    rule.metadata.m_requested = m;
    Ok(rule)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::indexset::total_degree_set;
    use crate::orthopoly::gauss_legendre;
    use approx::assert_abs_diff_eq;

    fn legendre_problem(degree: u32) -> MomentProblem {
        MomentProblem::uniform_box(&total_degree_set(1, degree), &[(-1.0, 1.0)]).unwrap()
    }

    #[test]
    fn cluster_hand_example() {
        let x = vec![vec![0.0], vec![1.0], vec![10.0]];
        let (p, w) = cluster(&x, &[0.1, 0.2, 0.7], 2).unwrap();
        assert_abs_diff_eq!(p[0][0], 2.0 / 3.0, epsilon = 1e-15);
        assert_abs_diff_eq!(w[0], 0.3, epsilon = 1e-15);
        assert_eq!(p[1], vec![10.0]);
        assert_eq!(w[1], 0.7);
    }

    #[test]
    fn cluster_pairs() {
        let (p, w) = cluster(&[vec![0.0, 0.0], vec![2.0, 4.0]], &[0.5, 0.5], 1).unwrap();
        assert_eq!(p[0], vec![1.0, 2.0]);
        assert_eq!(w[0], 1.0);
        let (p, w) = cluster(&[vec![0.0], vec![3.0]], &[1.0, 2.0], 1).unwrap();
        assert_abs_diff_eq!(p[0][0], 2.0, epsilon = 1e-15);
        assert_eq!(w[0], 3.0);
        assert!(cluster(&[vec![0.0]], &[1.0], 2).is_err());
    }

    #[test]
    fn exact_start_does_not_move() {
        let problem = legendre_problem(3);
        let g = gauss_legendre(2).unwrap();
        let x0: Vec<Vec<f64>> = g.nodes.iter().map(|&t| vec![t]).collect();
        let (rule, rep) = refine(&x0, &g.weights, &problem, &RefineOptions::default()).unwrap();
        assert!(rep.objective[0] < 1e-20);
        assert_eq!(rule.nodes, x0);
        assert_eq!(rule.weights, g.weights);
        assert_eq!(rep.exit, ExitReason::GradientSmall);
    }

    #[test]
    fn perturbed_gauss_converges() {
        let problem = legendre_problem(3);
        let t = 3f64.sqrt() / 3.0;
        let x0 = vec![vec![-t + 0.05], vec![t + 0.05]];
        let (rule, rep) = refine(&x0, &[0.5, 0.5], &problem, &RefineOptions::default()).unwrap();
        assert!(rep.success);
        assert!(rule.metadata.objective < 1e-16);
        let mut xs: Vec<f64> = rule.nodes.iter().map(|x| x[0]).collect();
        xs.sort_by(f64::total_cmp);
        assert_abs_diff_eq!(xs[0], -t, epsilon = 1e-8);
        assert_abs_diff_eq!(xs[1], t, epsilon = 1e-8);
        for w in &rule.weights {
            assert_abs_diff_eq!(*w, 0.5, epsilon = 1e-8);
        }
        for pair in rep.objective.windows(2) {
            assert!(pair[1] <= pair[0]);
        }
    }

    #[test]
    fn rejects_outside_start() {
        let problem = legendre_problem(3);
        let err = refine(&[vec![0.0], vec![1.5]], &[0.5, 0.5], &problem, &RefineOptions::default());
        assert!(matches!(err, Err(Error::OutsideDomain { index: 1 })));
    }

    #[test]
    fn jacobian_matches_differences() {
        let set = total_degree_set(2, 4);
        let problem = MomentProblem::tensor(&set, &[Measure1d::uniform(), Measure1d::parabolic()]).unwrap();
        let nodes = vec![vec![0.3, -0.2], vec![-0.7, 0.5], vec![0.1, 0.9]];
        let weights = vec![0.2, 0.5, 0.3];
        let (_, jac) = residual_jacobian(&problem, &nodes, &weights).unwrap();
        let p = pack(&nodes, &weights);
        let h = 1e-6;
        for i in 0..p.len() {
            let mut a = p.clone();
            let mut b = p.clone();
            a[i] += h;
            b[i] -= h;
            let (na, wa) = unpack(&a, 2);
            let (nb, wb) = unpack(&b, 2);
            let fd = (moment_residual(&problem, &na, &wa).unwrap() - moment_residual(&problem, &nb, &wb).unwrap())
                / (2.0 * h);
            let err = (fd - jac.column(i)).norm() / jac.column(i).norm().max(1e-12);
            assert!(err < 1e-6, "column {i}: {err}");
        }
    }

    #[test]
    fn generates_gauss_legendre() {
        let problem = legendre_problem(9);
        let out = generate(&problem, &GenerateOptions::default()).unwrap();
        assert!(out.success);
        assert_eq!(out.rule.len(), 5);
        let g = gauss_legendre(5).unwrap();
        let mut pairs: Vec<(f64, f64)> = out.rule.nodes.iter().map(|x| x[0]).zip(out.rule.weights.clone()).collect();
        pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
        for ((x, w), (gx, gw)) in pairs.iter().zip(g.nodes.iter().zip(&g.weights)) {
            assert_abs_diff_eq!(x, gx, epsilon = 1e-8);
            assert_abs_diff_eq!(w, gw, epsilon = 1e-8);
        }
    }

    #[test]
    fn generate_is_deterministic() {
        let set = total_degree_set(2, 6);
        let problem = MomentProblem::uniform_box(&set, &[(-1.0, 1.0), (-1.0, 1.0)]).unwrap();
        let opts = GenerateOptions { seed: 7, ..GenerateOptions::default() };
        let a = generate(&problem, &opts).unwrap();
        let b = generate(&problem, &opts).unwrap();
        assert_eq!(a.rule.to_json().unwrap(), b.rule.to_json().unwrap());
        assert!(a.success);
    }

    #[test]
    fn verify_dropped_weight() {
        let problem = legendre_problem(9);
        let g = gauss_legendre(5).unwrap();
        let nodes: Vec<Vec<f64>> = g.nodes.iter().map(|&t| vec![t]).collect();
        let rule = QuadratureRule::new(nodes.clone(), g.weights.clone()).unwrap();
        assert!(verify(&rule, &problem).unwrap().residual_l2 < 1e-13);

        let mut w = g.weights.clone();
        w[2] = 0.0;
        let rep = verify(&QuadratureRule::new(nodes.clone(), w).unwrap(), &problem).unwrap();
        let v = problem.eval(&nodes[2..3]).unwrap();
        let expected = v.row(0).norm() * g.weights[2];
        assert_abs_diff_eq!(rep.residual_l2, expected, epsilon = 1e-13);
    }

    #[test]
    fn gauss_rule_is_quasi_optimal() {
        let problem = legendre_problem(9);
        let g = gauss_legendre(5).unwrap();
        let rule = QuadratureRule::new(g.nodes.iter().map(|&t| vec![t]).collect(), g.weights.clone()).unwrap();
        let q = quasi_optimality_report(&rule, &problem.index_set, &problem.basis).unwrap();
        assert_eq!((q.m, q.l), (5, 5));
        assert!(q.is_quasi_optimal);
        assert!(q.weight_check.unwrap() < 1e-10);
    }

    #[test]
    fn diagonal_rules_exact() {
        let rule = diagonal_gauss_rule(&[Measure1d::uniform(); 5], 6, None).unwrap();
        assert_eq!(rule.len(), 4);
        assert_eq!(rule.index_set.as_ref().unwrap().len(), 31);
        assert!(rule.residual_l2 < 1e-12);

        let flipped = diagonal_gauss_rule(&[Measure1d::uniform(); 3], 4, Some(&[1, -1, 1])).unwrap();
        let plain = diagonal_gauss_rule(&[Measure1d::uniform(); 3], 4, None).unwrap();
        assert!(flipped.residual_l2 < 1e-12);
        assert_ne!(flipped.nodes, plain.nodes);

        let one = diagonal_gauss_rule(&[Measure1d::uniform()], 9, None).unwrap();
        let g = gauss_legendre(5).unwrap();
        for (x, t) in one.nodes.iter().zip(&g.nodes) {
            assert_abs_diff_eq!(x[0], t, epsilon = 1e-14);
        }
    }

    #[test]
    fn diagonal_rule_errors() {
        let mixed = [Measure1d::uniform(), Measure1d::parabolic()];
        assert!(matches!(diagonal_gauss_rule(&mixed, 4, None), Err(Error::NonIdenticalFactors)));
        let skew = [Measure1d::Jacobi { alpha: 1.0, beta: 2.0, lower: -1.0, upper: 1.0 }; 2];
        assert!(diagonal_gauss_rule(&skew, 4, None).is_ok());
        assert!(matches!(diagonal_gauss_rule(&skew, 4, Some(&[1, -1])), Err(Error::AsymmetricMeasure)));
    }

    #[test]
    fn diagonal_rule_weights_are_christoffel() {
        let rule = diagonal_gauss_rule(&[Measure1d::uniform(); 3], 4, None).unwrap();
        let problem = rule.problem().unwrap();
        let q = quasi_optimality_report(&rule, &problem.index_set, &problem.basis).unwrap();
        assert_eq!(q.l, 3);
        assert_eq!(q.half_sets_checked, 3);
        assert!(q.weight_check.unwrap() < 1e-10);
    }

    #[test]
    fn rule_json_round_trip() {
        let rule = diagonal_gauss_rule(&[Measure1d::uniform(); 2], 4, None).unwrap();
        let back = QuadratureRule::from_json(&rule.to_json().unwrap()).unwrap();
        assert_eq!(back.nodes, rule.nodes);
        assert_eq!(back.weights, rule.weights);
        let rep = verify(&back, &back.problem().unwrap()).unwrap();
        assert!(rep.residual_l2 < 1e-12);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn clustering_keeps_mass_and_mean(
                pts in proptest::collection::vec((-1.0f64..1.0, -1.0f64..1.0, 0.01f64..1.0), 2..30),
                frac in 0.05f64..1.0,
            ) {
                let x: Vec<Vec<f64>> = pts.iter().map(|p| vec![p.0, p.1]).collect();
                let w: Vec<f64> = pts.iter().map(|p| p.2).collect();
                let m = ((x.len() as f64 * frac).ceil() as usize).clamp(1, x.len());
                let (cx, cw) = cluster(&x, &w, m).unwrap();
                prop_assert_eq!(cx.len(), m);
                prop_assert!(cw.iter().all(|w| *w > 0.0));
                let mass: f64 = w.iter().sum();
                prop_assert!((cw.iter().sum::<f64>() - mass).abs() < 1e-12);
                for j in 0..2 {
                    let before: f64 = x.iter().zip(&w).map(|(p, w)| w * p[j]).sum();
                    let after: f64 = cx.iter().zip(&cw).map(|(p, w)| w * p[j]).sum();
                    prop_assert!((before - after).abs() < 1e-12);
                }
            }
        }
    }
}
