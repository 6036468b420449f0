//! Command-line front end: rule generation, verification, baselines and
//! convergence benchmarks written as tidy CSV.

use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use clap::{Args, Parser, Subcommand, ValueEnum};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::baselines::{monte_carlo_rule, sobol_points, sparse_grid, stroud, BaselineRule};
use crate::domains::{banana_measure, random_orthonormal_rows, BoxDomain, EmpiricalMeasure, Measure, RidgeMeasure};
use crate::error::{Error, Result};
use crate::indexset::{anova_set, ball_set, heuristic_size, maximal_half_set, total_degree_set, LpNorm, MultiIndexSet};
use crate::moments::{build_problem, MomentProblem, MomentSource, ProblemOptions};
use crate::orthopoly::{gauss_rule, radau_family_rule, Measure1d, ScalarFn};
use crate::reduce::{generate, verify, GenerateOptions, QuadratureRule, FEASIBILITY_TOL, SUCCESS_TOL};
use crate::testmodels::{named_integrand, ridge_back_map, Integrand, COEFFICIENT_SEED};

/// Schema tag written as the first line of benchmark CSV files.
pub const BENCHMARK_SCHEMA: &str = "quadgen.benchmark.v1";
pub const SUMMARY_SCHEMA: &str = "quadgen.benchmark-summary.v1";

pub const EXIT_SUCCESS: i32 = 0;
pub const EXIT_FAILURE: i32 = 1;
pub const EXIT_USAGE: i32 = 2;

#[derive(Debug, Parser)]
#[command(name = "quadgen", version, about = "Generate and test positive quadrature rules for multivariate measures")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Size, half-set bound and starting heuristic of an index set.
    Indexset(IndexSetArgs),
    /// Build a moment problem and write it as JSON.
    Moments(MomentsArgs),
    /// Univariate Gauss or Gauss-Radau rule.
    Gauss(GaussArgs),
    /// Generate a reduced quadrature rule.
    Generate(GenerateArgs),
    /// Check a rule against its moment problem.
    Verify(VerifyArgs),
    /// Build a comparison rule.
    Baseline(BaselineArgs),
    /// Run a convergence study and write tidy CSV.
    Benchmark(BenchmarkArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum NormArg {
    L0,
    L1,
    Linf,
}

#[derive(Debug, Clone, Args)]
pub struct SetArgs {
    /// Total degree (or radius of the ball).
    #[arg(long)]
    pub degree: Option<u32>,
    /// Keep only indices with at most this many nonzero coordinates.
    #[arg(long)]
    pub anova_order: Option<usize>,
}

#[derive(Debug, Args)]
pub struct IndexSetArgs {
    #[arg(long)]
    pub dim: usize,
    #[arg(long)]
    pub degree: u32,
    #[arg(long)]
    pub anova_order: Option<usize>,
    /// Ball norm when no ANOVA order is given.
    #[arg(long, value_enum, default_value = "l1")]
    pub norm: NormArg,
    /// Print every multi-index.
    #[arg(long)]
    pub list: bool,
}

#[derive(Debug, Args)]
pub struct MomentsArgs {
    /// Configuration JSON with a `measure` entry.
    #[arg(long)]
    pub measure: PathBuf,
    #[command(flatten)]
    pub set: SetArgs,
    /// Estimate moments from this many samples instead of exactly.
    #[arg(long)]
    pub samples: Option<usize>,
    /// Gram-condition the bounding-box basis of non-tensor measures.
    #[arg(long)]
    pub condition: bool,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Family {
    Uniform,
    Jacobi,
    Gaussian,
}

#[derive(Debug, Args)]
pub struct GaussArgs {
    #[arg(long, value_enum, default_value = "uniform")]
    pub family: Family,
    /// Number of nodes.
    #[arg(long)]
    pub points: usize,
    #[arg(long, default_value_t = 0.0)]
    pub alpha: f64,
    #[arg(long, default_value_t = 0.0)]
    pub beta: f64,
    /// Prescribed node of a Gauss-Radau rule.
    #[arg(long)]
    pub radau: Option<f64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct GenerateArgs {
    /// Configuration JSON with a `measure` entry.
    #[arg(long, conflicts_with = "problem")]
    pub measure: Option<PathBuf>,
    /// Moment problem JSON written by `moments`.
    #[arg(long)]
    pub problem: Option<PathBuf>,
    #[command(flatten)]
    pub set: SetArgs,
    #[arg(long)]
    pub samples: Option<usize>,
    #[arg(long)]
    pub condition: bool,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Candidate mesh size.
    #[arg(long)]
    pub mesh_size: Option<usize>,
    #[arg(long)]
    pub max_increments: Option<usize>,
    #[arg(long)]
    pub out: PathBuf,
    /// Also write the rule selected by the l1 stage.
    #[arg(long)]
    pub dump_initial: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct VerifyArgs {
    #[arg(long)]
    pub rule: PathBuf,
    /// Moment problem to check against; defaults to the one stored in the rule.
    #[arg(long)]
    pub problem: Option<PathBuf>,
    /// Largest acceptable residual norm.
    #[arg(long, default_value_t = 1e-4)]
    pub tol: f64,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct BaselineArgs {
    #[arg(long, value_enum)]
    pub kind: BaselineArg,
    #[arg(long)]
    pub dim: usize,
    /// Points for mc and sobol, level for sparse-grid; ignored by stroud.
    #[arg(long, default_value_t = 1)]
    pub param: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum BaselineArg {
    Mc,
    Sobol,
    SparseGrid,
    Stroud2,
    Stroud3,
}

#[derive(Debug, Args)]
pub struct BenchmarkArgs {
    /// Benchmark specification JSON.
    #[arg(long)]
    pub spec: PathBuf,
    /// Per-repetition errors.
    #[arg(long)]
    pub out: PathBuf,
    /// Median, minimum and maximum per sweep point; `<out>.summary.csv` by default.
    #[arg(long)]
    pub summary: Option<PathBuf>,
}

/// Measure section of a configuration file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase", deny_unknown_fields)]
pub enum MeasureConfig {
    /// Uniform on `[lower, upper]^dim`.
    Uniform {
        dim: usize,
        #[serde(default = "neg_one")]
        lower: f64,
        #[serde(default = "one")]
        upper: f64,
    },
    /// Product of named univariate measures.
    Tensor { factors: Vec<Measure1d> },
    /// The banana density on its canonical box.
    Banana,
    /// Samples from a header-less CSV file, one point per row.
    Empirical {
        path: PathBuf,
        #[serde(default)]
        lower: Option<Vec<f64>>,
        #[serde(default)]
        upper: Option<Vec<f64>>,
    },
    /// Push-forward of the uniform measure on `[-1,1]^d` through `A`, given
    /// explicitly or drawn with orthonormal rows.
    Ridge {
        #[serde(default)]
        matrix: Option<Vec<Vec<f64>>>,
        #[serde(default)]
        rows: Option<usize>,
        #[serde(default)]
        cols: Option<usize>,
        #[serde(default)]
        seed: u64,
    },
}

fn neg_one() -> f64 {
    -1.0
}

fn one() -> f64 {
    1.0
}

/// Top-level configuration file.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    pub measure: MeasureConfig,
    #[serde(default)]
    pub degree: Option<u32>,
    #[serde(default)]
    pub anova_order: Option<usize>,
    #[serde(default)]
    pub samples: Option<usize>,
    #[serde(default)]
    pub seed: Option<u64>,
}

impl MeasureConfig {
    pub fn build(&self, base_dir: &Path) -> Result<Measure> {
        match self {
            MeasureConfig::Uniform { dim, lower, upper } => {
                if *dim == 0 {
                    return Err(Error::Config("dim must be positive".into()));
                }
                let m = Measure1d::Uniform { lower: *lower, upper: *upper };
                m.validate()?;
                Ok(Measure::Tensor(vec![m; *dim]))
            }
            MeasureConfig::Tensor { factors } => {
                if factors.is_empty() {
                    return Err(Error::Config("tensor measure needs at least one factor".into()));
                }
                for f in factors {
                    f.validate()?;
                }
                Ok(Measure::Tensor(factors.clone()))
            }
            MeasureConfig::Banana => Ok(Measure::Density(banana_measure())),
            MeasureConfig::Empirical { path, lower, upper } => {
                let domain = match (lower, upper) {
                    (Some(l), Some(u)) => Some(BoxDomain::new(l.clone(), u.clone())?),
                    (None, None) => None,
                    _ => return Err(Error::Config("give both lower and upper or neither".into())),
                };
                let p = if path.is_absolute() { path.clone() } else { base_dir.join(path) };
                Ok(Measure::Empirical(EmpiricalMeasure::from_csv(&p, domain)?))
            }
            MeasureConfig::Ridge { matrix, rows, cols, seed } => {
                let a = match (matrix, rows, cols) {
                    (Some(a), None, None) => a.clone(),
                    (None, Some(s), Some(d)) if *s >= 1 && s <= d => random_orthonormal_rows(*s, *d, *seed),
                    _ => return Err(Error::Config("ridge measure needs `matrix` or `rows` <= `cols`".into())),
                };
                Ok(Measure::Ridge(RidgeMeasure::uniform(&a, *seed)?))
            }
        }
    }
}

/// Reads a configuration file.
pub fn read_config(path: &Path) -> Result<Config> {
    let text = fs::read_to_string(path)?;
    serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
}

fn base_dir(path: &Path) -> PathBuf {
    path.parent().map(Path::to_path_buf).unwrap_or_default()
}

/// `B₁(k)`, or `B₀(r) ∩ B₁(k)` when an ANOVA order is given.
pub fn index_set(dim: usize, degree: u32, anova_order: Option<usize>) -> Result<MultiIndexSet> {
    match anova_order {
        Some(r) => anova_set(dim, r, degree),
        None => Ok(total_degree_set(dim, degree)),
    }
}

fn write_output(path: Option<&Path>, text: &str) -> Result<()> {
    match path {
        Some(p) => fs::write(p, text).map_err(Error::from),
        None => {
            let mut out = std::io::stdout().lock();
            out.write_all(text.as_bytes())?;
            out.write_all(b"\n")?;
            Ok(())
        }
    }
}

fn to_json<T: Serialize>(value: &T) -> Result<String> {
    serde_json::to_string_pretty(value).map_err(|e| Error::Config(e.to_string()))
}

/// Outcome of a subcommand before it is turned into an exit code.
#[derive(Debug)]
enum Failure {
    Usage(String),
    Run(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::Config(_) | Error::Io(_) | Error::Json(_) | Error::Csv(_) | Error::InvalidArgument(_) => {
                Failure::Usage(e.to_string())
            }
            other => Failure::Run(other.to_string()),
        }
    }
}

/// Parses `args` (including the program name) and runs the subcommand,
/// returning the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_SUCCESS };
            let _ = e.print();
            return code;
        }
    };
    match dispatch(cli.command) {
        Ok(code) => code,
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            EXIT_USAGE
        }
        Err(Failure::Run(msg)) => {
            eprintln!("error: {msg}");
            EXIT_FAILURE
        }
    }
}

fn dispatch(cmd: Command) -> std::result::Result<i32, Failure> {
    match cmd {
        Command::Indexset(a) => cmd_indexset(&a),
        Command::Moments(a) => cmd_moments(&a),
        Command::Gauss(a) => cmd_gauss(&a),
        Command::Generate(a) => cmd_generate(&a),
        Command::Verify(a) => cmd_verify(&a),
        Command::Baseline(a) => cmd_baseline(&a),
        Command::Benchmark(a) => cmd_benchmark(&a),
    }
}

#[derive(Serialize)]
struct IndexSetSummary {
    dim: usize,
    size: usize,
    max_total_degree: u32,
    downward_closed: bool,
    lower_bound: usize,
    lower_bound_exact: bool,
    heuristic: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    indices: Option<Vec<Vec<u32>>>,
}

fn cmd_indexset(a: &IndexSetArgs) -> std::result::Result<i32, Failure> {
    let set = match (a.anova_order, a.norm) {
        (Some(r), _) => anova_set(a.dim, r, a.degree)?,
        (None, NormArg::L1) => total_degree_set(a.dim, a.degree),
        (None, NormArg::Linf) => ball_set(a.dim, LpNorm::Infinity, a.degree as f64, None)?,
        (None, NormArg::L0) => ball_set(a.dim, LpNorm::Zero, a.degree as f64, Some(a.degree))?,
    };
    let half = maximal_half_set(&set)?;
    let summary = IndexSetSummary {
        dim: a.dim,
        size: set.len(),
        max_total_degree: set.max_total_degree(),
        downward_closed: set.is_downward_closed(),
        lower_bound: half.size,
        lower_bound_exact: half.exact,
        heuristic: heuristic_size(&set, true),
        indices: a.list.then(|| set.iter().map(|i| i.coords().to_vec()).collect()),
    };
    write_output(None, &to_json(&summary)?)?;
    Ok(EXIT_SUCCESS)
}

fn problem_from_config(
    path: &Path,
    set: &SetArgs,
    samples: Option<usize>,
    condition: bool,
    seed: Option<u64>,
) -> Result<MomentProblem> {
    let cfg = read_config(path)?;
    let measure = cfg.measure.build(&base_dir(path))?;
    let degree = set
        .degree
        .or(cfg.degree)
        .ok_or_else(|| Error::Config("no degree given on the command line or in the config".into()))?;
    let set = index_set(measure.dim(), degree, set.anova_order.or(cfg.anova_order))?;
    let source = match samples.or(cfg.samples) {
        Some(p) => MomentSource::Samples(p),
        None => MomentSource::Exact,
    };
    build_problem(&set, &measure, &ProblemOptions { source, condition, seed: seed.or(cfg.seed).unwrap_or(0) })
}

fn cmd_moments(a: &MomentsArgs) -> std::result::Result<i32, Failure> {
    let problem = problem_from_config(&a.measure, &a.set, a.samples, a.condition, Some(a.seed))?;
    write_output(a.out.as_deref(), &problem.to_json()?)?;
    Ok(EXIT_SUCCESS)
}

fn cmd_gauss(a: &GaussArgs) -> std::result::Result<i32, Failure> {
    let m = match a.family {
        Family::Uniform => Measure1d::uniform(),
        Family::Jacobi => Measure1d::Jacobi { alpha: a.alpha, beta: a.beta, lower: -1.0, upper: 1.0 },
        Family::Gaussian => Measure1d::Gaussian { mean: 0.0, std: 1.0 },
    };
    m.validate()?;
    if a.points == 0 {
        return Err(Failure::Usage("--points must be positive".into()));
    }
    let rec = m.recurrence(a.points + 1)?;
    let rule = match a.radau {
        Some(c) => radau_family_rule(&rec, a.points, c)?,
        None => gauss_rule(&rec, a.points)?,
    };
    write_output(a.out.as_deref(), &to_json(&rule)?)?;
    Ok(EXIT_SUCCESS)
}

fn cmd_generate(a: &GenerateArgs) -> std::result::Result<i32, Failure> {
    let problem = match (&a.measure, &a.problem) {
        (Some(cfg), None) => {
            let seed = a.seed.or(read_config(cfg)?.seed);
            problem_from_config(cfg, &a.set, a.samples, a.condition, seed)?
        }
        (None, Some(p)) => MomentProblem::from_json(&fs::read_to_string(p).map_err(Error::from)?)?,
        _ => return Err(Failure::Usage("give exactly one of --measure or --problem".into())),
    };
    let mut opts = GenerateOptions { seed: a.seed.unwrap_or(0), mesh_size: a.mesh_size, ..Default::default() };
    if let Some(k) = a.max_increments {
        opts.max_increments = k;
    }
    let out = generate(&problem, &opts)?;
    fs::write(&a.out, out.rule.to_json()?).map_err(Error::from)?;
    if let Some(p) = &a.dump_initial {
        fs::write(p, out.initial.to_json()?).map_err(Error::from)?;
    }
    eprintln!(
        "{} nodes, residual {:.3e}, {} attempt(s), {}",
        out.rule.len(),
        out.rule.residual_l2,
        out.attempts.len(),
        if out.success { "success" } else { "FAILED" }
    );
    Ok(if out.success { EXIT_SUCCESS } else { EXIT_FAILURE })
}

fn cmd_verify(a: &VerifyArgs) -> std::result::Result<i32, Failure> {
    let rule = QuadratureRule::from_json(&fs::read_to_string(&a.rule).map_err(Error::from)?)?;
    let problem = match &a.problem {
        Some(p) => MomentProblem::from_json(&fs::read_to_string(p).map_err(Error::from)?)?,
        None => rule
            .problem()
            .ok_or_else(|| Failure::Usage("rule carries no moment problem; pass --problem".into()))?,
    };
    let report = verify(&rule, &problem)?;
    write_output(a.out.as_deref(), &to_json(&report)?)?;
    let ok = report.residual_l2 <= a.tol
        && report.min_weight >= 0.0
        && report.max_domain_violation <= FEASIBILITY_TOL;
    Ok(if ok { EXIT_SUCCESS } else { EXIT_FAILURE })
}

fn cmd_baseline(a: &BaselineArgs) -> std::result::Result<i32, Failure> {
    let rule = match a.kind {
        BaselineArg::Mc => monte_carlo_rule(&Measure::uniform_cube(a.dim), a.param, a.seed)?,
        BaselineArg::Sobol => crate::baselines::sobol_rule(a.dim, a.param)?,
        BaselineArg::SparseGrid => sparse_grid(a.dim, a.param)?,
        BaselineArg::Stroud2 => stroud(a.dim, 2)?,
        BaselineArg::Stroud3 => stroud(a.dim, 3)?,
    };
    write_output(a.out.as_deref(), &to_json(&rule)?)?;
    Ok(EXIT_SUCCESS)
}

/// Methods a benchmark can sweep.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    Reduced,
    L1Initial,
    Mc,
    Sobol,
    SparseGrid,
    Stroud2,
    Stroud3,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::Reduced => "reduced",
            Method::L1Initial => "l1-initial",
            Method::Mc => "mc",
            Method::Sobol => "sobol",
            Method::SparseGrid => "sparse-grid",
            Method::Stroud2 => "stroud2",
            Method::Stroud3 => "stroud3",
        }
    }
}

fn default_reps() -> usize {
    1
}

fn default_coefficient_seed() -> u64 {
    COEFFICIENT_SEED
}

fn default_reference_points() -> usize {
    1_000_000
}

/// Integrand section of a benchmark specification.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IntegrandSpec {
    /// One of `cp`, `mcp`, `chem`, `chem-ridge`.
    pub name: String,
    pub dim: usize,
    /// Seed of the random coefficients or ridge matrix.
    #[serde(default = "default_coefficient_seed")]
    pub seed: u64,
    /// Overrides the built-in reference mean.
    #[serde(default)]
    pub reference: Option<f64>,
    /// Sobol points used when no reference mean is available.
    #[serde(default = "default_reference_points")]
    pub reference_points: usize,
}

/// A convergence study.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BenchmarkSpec {
    pub integrand: IntegrandSpec,
    pub methods: Vec<Method>,
    /// Total degrees swept by `reduced` and `l1-initial`.
    #[serde(default)]
    pub degrees: Vec<u32>,
    #[serde(default)]
    pub anova_order: Option<usize>,
    /// Moment sample counts; exact moments when empty.
    #[serde(default)]
    pub moment_samples: Vec<usize>,
    /// Point counts for `mc` and `sobol`.
    #[serde(default)]
    pub sizes: Vec<usize>,
    /// Levels for `sparse-grid`.
    #[serde(default)]
    pub levels: Vec<usize>,
    /// Repetitions of randomized methods.
    #[serde(default = "default_reps")]
    pub repetitions: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub mesh_size: Option<usize>,
}

impl BenchmarkSpec {
    pub fn validate(&self) -> Result<()> {
        if self.repetitions == 0 {
            return Err(Error::Config("repetitions must be at least 1".into()));
        }
        if self.methods.is_empty() {
            return Err(Error::Config("no methods given".into()));
        }
        for m in &self.methods {
            let empty = match m {
                Method::Reduced | Method::L1Initial => self.degrees.is_empty(),
                Method::Mc | Method::Sobol => self.sizes.is_empty(),
                Method::SparseGrid => self.levels.is_empty(),
                Method::Stroud2 | Method::Stroud3 => false,
            };
            if empty {
                return Err(Error::Config(format!("method {} has an empty sweep", m.name())));
            }
        }
        Ok(())
    }
}

/// One line of the per-repetition CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkRow {
    pub method: String,
    pub param: usize,
    /// Moment sample count, 0 for exact moments.
    pub samples: usize,
    pub n_points: usize,
    pub rep: usize,
    pub abs_error: f64,
    /// Whether a reduced rule met the residual target; true for baselines.
    pub success: bool,
}

/// Median, minimum and maximum error over repetitions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub method: String,
    pub param: usize,
    pub samples: usize,
    pub reps: usize,
    pub n_points_median: f64,
    pub median: f64,
    pub min: f64,
    pub max: f64,
}

/// The integrand together with the measure the reduced rules are built for
/// and the way baseline rules on `[-1,1]^d` are mapped to it.
pub struct Study {
    pub integrand: Integrand,
    pub reference: f64,
    /// Measure whose moments the reduced rules match.
    pub measure: Measure,
    /// Integrand in the coordinates of `measure`.
    reduced_f: ScalarFn,
    /// Factor `vol · density` folded into baseline evaluations on the
    /// integrand's box; `None` means the uniform measure on the box.
    density: Option<ScalarFn>,
    /// Measure sampled by Monte Carlo.
    mc_measure: Measure,
}

impl Study {
    pub fn new(spec: &IntegrandSpec) -> Result<Study> {
        let integrand = named_integrand(&spec.name, spec.dim, spec.seed)?;
        let b = integrand.domain.clone();
        let uniform_box = Measure::Tensor(
            b.lower.iter().zip(&b.upper).map(|(&lower, &upper)| Measure1d::Uniform { lower, upper }).collect(),
        );
        let (measure, reduced_f, density, mc_measure) = match spec.name.as_str() {
            "chem" => {
                let banana = banana_measure();
                let vol = b.volume();
                let pdf = banana.clone();
                let density: ScalarFn = Arc::new(move |x: &[f64]| vol * pdf.pdf(x));
                let m = Measure::Density(banana);
                (m.clone(), integrand.function(), Some(density), m)
            }
            "chem-ridge" => {
                let a = random_orthonormal_rows(2, spec.dim, spec.seed);
                let measure = Measure::Ridge(RidgeMeasure::uniform(&a, spec.seed)?);
                let f = integrand.function();
                let reduced: ScalarFn = Arc::new(move |x: &[f64]| match ridge_back_map(&a, x) {
                    Ok(y) => f(&y),
                    Err(_) => f64::NAN,
                });
                (measure, reduced, None, uniform_box)
            }
            _ => (uniform_box.clone(), integrand.function(), None, uniform_box),
        };
        let mut study =
            Study { reference: f64::NAN, integrand, measure, reduced_f, density, mc_measure };
        study.reference = match spec.reference.or(study.integrand.reference_mean()) {
            Some(v) => v,
            None => study.sobol_estimate(spec.reference_points)?,
        };
        if !study.reference.is_finite() {
            return Err(Error::Config(format!("no finite reference mean for {}", spec.name)));
        }
        Ok(study)
    }

    /// Value of the integrand at a point of `[-1,1]^d`, times the density
    /// factor.
    fn eval_cube(&self, u: &[f64]) -> f64 {
        let b = &self.integrand.domain;
        let x: Vec<f64> =
            u.iter().enumerate().map(|(j, t)| b.lower[j] + 0.5 * (t + 1.0) * (b.upper[j] - b.lower[j])).collect();
        let w = self.density.as_ref().map_or(1.0, |p| p(&x));
        if w == 0.0 {
            0.0
        } else {
            w * self.integrand.eval(&x)
        }
    }

    fn baseline_estimate(&self, rule: &BaselineRule) -> f64 {
        let vals: Vec<f64> = rule.nodes.par_iter().map(|u| self.eval_cube(u)).collect();
        vals.iter().zip(&rule.weights).map(|(v, w)| v * w).sum()
    }

    /// Mean by the first `n` Sobol points with density folding.
    pub fn sobol_estimate(&self, n: usize) -> Result<f64> {
        let pts = sobol_points(self.integrand.dim(), n, 0, true)?;
        let vals: Vec<f64> = pts.par_iter().map(|u| self.eval_cube(u)).collect();
        Ok(vals.iter().sum::<f64>() / n as f64)
    }

    pub fn reduced_estimate(&self, rule: &QuadratureRule) -> f64 {
        let f = &self.reduced_f;
        rule.integrate(|x| f(x))
    }
}

fn median(v: &mut [f64]) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Runs every sweep point of `spec` and returns rows ordered by method,
/// parameter, sample count and repetition.
pub fn run_benchmark(spec: &BenchmarkSpec) -> Result<Vec<BenchmarkRow>> {
    spec.validate()?;
    let study = Study::new(&spec.integrand)?;
    let reference = study.reference;
    let dim = study.measure.dim();

    #[derive(Clone, Copy)]
    enum Task {
        Reduced { degree: u32, samples: usize, rep: usize },
        Baseline { method: Method, param: usize, rep: usize },
    }
    let mut tasks = Vec::new();
    let samples: Vec<usize> =
        if spec.moment_samples.is_empty() { vec![0] } else { spec.moment_samples.clone() };
    if spec.methods.iter().any(|m| matches!(m, Method::Reduced | Method::L1Initial)) {
        for &degree in &spec.degrees {
            for &p in &samples {
                for rep in 0..spec.repetitions {
                    tasks.push(Task::Reduced { degree, samples: p, rep });
                }
            }
        }
    }
    for &method in &spec.methods {
        match method {
            Method::Mc => {
                for &n in &spec.sizes {
                    for rep in 0..spec.repetitions {
                        tasks.push(Task::Baseline { method, param: n, rep });
                    }
                }
            }
            Method::Sobol => tasks.extend(spec.sizes.iter().map(|&n| Task::Baseline { method, param: n, rep: 0 })),
            Method::SparseGrid => {
                tasks.extend(spec.levels.iter().map(|&l| Task::Baseline { method, param: l, rep: 0 }))
            }
            Method::Stroud2 => tasks.push(Task::Baseline { method, param: 2, rep: 0 }),
            Method::Stroud3 => tasks.push(Task::Baseline { method, param: 3, rep: 0 }),
            Method::Reduced | Method::L1Initial => {}
        }
    }
    let want_reduced = spec.methods.contains(&Method::Reduced);
    let want_initial = spec.methods.contains(&Method::L1Initial);

    let results: Vec<Result<Vec<BenchmarkRow>>> = tasks
        .par_iter()
        .map(|task| -> Result<Vec<BenchmarkRow>> {
            match *task {
                Task::Reduced { degree, samples, rep } => {
                    let set = index_set(dim, degree, spec.anova_order)?;
                    let seed = spec.seed.wrapping_add(rep as u64);
                    let source = if samples > 0 { MomentSource::Samples(samples) } else { MomentSource::Exact };
                    let problem =
                        build_problem(&set, &study.measure, &ProblemOptions { source, condition: false, seed })?;
                    let out = generate(&problem, &GenerateOptions { seed, mesh_size: spec.mesh_size, ..Default::default() })?;
                    let mut rows = Vec::new();
                    if want_reduced {
                        rows.push(BenchmarkRow {
                            method: Method::Reduced.name().into(),
                            param: degree as usize,
                            samples,
                            n_points: out.rule.len(),
                            rep,
                            abs_error: (study.reduced_estimate(&out.rule) - reference).abs(),
                            success: out.success,
                        });
                    }
                    if want_initial {
                        rows.push(BenchmarkRow {
                            method: Method::L1Initial.name().into(),
                            param: degree as usize,
                            samples,
                            n_points: out.initial.len(),
                            rep,
                            abs_error: (study.reduced_estimate(&out.initial) - reference).abs(),
                            success: out.initial.success,
                        });
                    }
                    Ok(rows)
                }
                Task::Baseline { method, param, rep } => {
                    let d = study.integrand.dim();
                    let (n, estimate) = match method {
                        Method::Mc => {
                            let seed = spec.seed.wrapping_add(rep as u64);
                            let rule = monte_carlo_rule(&study.mc_measure, param, seed)?;
                            let f = study.integrand.function();
                            let vals: Vec<f64> = rule.nodes.par_iter().map(|x| f(x)).collect();
                            (param, vals.iter().sum::<f64>() / param as f64)
                        }
                        Method::Sobol => (param, study.sobol_estimate(param)?),
                        _ => {
                            let rule = match method {
                                Method::SparseGrid => sparse_grid(d, param)?,
                                Method::Stroud2 => stroud(d, 2)?,
                                _ => stroud(d, 3)?,
                            };
                            (rule.len(), study.baseline_estimate(&rule))
                        }
                    };
                    Ok(vec![BenchmarkRow {
                        method: method.name().into(),
                        param,
                        samples: 0,
                        n_points: n,
                        rep,
                        abs_error: (estimate - reference).abs(),
                        success: true,
                    }])
                }
            }
        })
        .collect();
    let mut rows = Vec::new();
    for r in results {
        rows.extend(r?);
    }
    let order = |m: &str| spec.methods.iter().position(|x| x.name() == m).unwrap_or(usize::MAX);
    rows.sort_by(|a, b| {
        (order(&a.method), a.param, a.samples, a.rep).cmp(&(order(&b.method), b.param, b.samples, b.rep))
    });
    Ok(rows)
}

/// Groups rows by method, parameter and sample count.
pub fn summarize(rows: &[BenchmarkRow]) -> Vec<SummaryRow> {
    let mut out: Vec<SummaryRow> = Vec::new();
    let mut i = 0;
    while i < rows.len() {
        let key = (&rows[i].method, rows[i].param, rows[i].samples);
        let mut j = i;
        while j < rows.len() && (&rows[j].method, rows[j].param, rows[j].samples) == key {
            j += 1;
        }
        let group = &rows[i..j];
        let mut errs: Vec<f64> = group.iter().map(|r| r.abs_error).collect();
        let mut sizes: Vec<f64> = group.iter().map(|r| r.n_points as f64).collect();
        let med = median(&mut errs);
        out.push(SummaryRow {
            method: key.0.clone(),
            param: key.1,
            samples: key.2,
            reps: group.len(),
            n_points_median: median(&mut sizes),
            median: med,
            min: errs[0],
            max: errs[errs.len() - 1],
        });
        i = j;
    }
    out
}

/// Writes serializable rows as CSV preceded by a `# schema` comment line.
pub fn write_csv<T: Serialize>(path: &Path, schema: &str, rows: &[T]) -> Result<()> {
    let mut file = fs::File::create(path)?;
    writeln!(file, "# {schema}")?;
    let mut w = csv::Writer::from_writer(file);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

/// Reads a CSV written by [`write_csv`].
pub fn read_csv<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<T>> {
    let mut rdr = csv::ReaderBuilder::new().comment(Some(b'#')).from_path(path)?;
    rdr.deserialize().map(|r| r.map_err(Error::from)).collect()
}

fn cmd_benchmark(a: &BenchmarkArgs) -> std::result::Result<i32, Failure> {
    let text = fs::read_to_string(&a.spec).map_err(Error::from)?;
    let spec: BenchmarkSpec =
        serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", a.spec.display())))?;
    spec.validate()?;
    let rows = run_benchmark(&spec)?;
    write_csv(&a.out, BENCHMARK_SCHEMA, &rows)?;
    let summary_path = a.summary.clone().unwrap_or_else(|| a.out.with_extension("summary.csv"));
    write_csv(&summary_path, SUMMARY_SCHEMA, &summarize(&rows))?;
    let failed = rows.iter().filter(|r| !r.success && r.method == Method::Reduced.name()).count();
    if failed > 0 {
        eprintln!("{failed} reduced rule(s) missed the residual target {SUCCESS_TOL:e}");
    }
    Ok(EXIT_SUCCESS)
}
