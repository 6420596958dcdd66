//! Command-line harness: matvec benchmark, truncation-error curves, invariant
//! checks and an end-to-end solve, all writing CSV.

use std::f64::consts::{FRAC_PI_2, FRAC_PI_3, FRAC_PI_4, PI};
use std::fmt;
use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::PathBuf;
use std::str::FromStr;
use std::time::Instant;

use clap::{Parser, ValueEnum};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::expansion::{green_exact, green_truncated, truncation_error_bound, KernelParams};
use crate::fastmv::{auto_level, build_operator, Levels};
use crate::geometry::{Point2, SphericalCoord};
use crate::partition::{build_tree, BlockRef, Square};
use crate::reference::{
    assemble_dense, dense_matvec, dense_solve, halton2d, random_vector, read_points, rel_err_inf,
    DEFAULT_DENSE_CAP,
};
use crate::solver::{iterative_solve, Interpolant, DEFAULT_MAX_ITER};
use crate::specfun::{assoc_legendre, coeff_d, legendre};

pub const BENCH_HEADER: &str = "N,M,L,time_fast_s,time_dense_s,rel_err_inf";
pub const ERRTREND_HEADER: &str = "rho_x,M,case,E,bound";
pub const SOLVE_HEADER: &str = "N,M,L,t,iterations,rel_residual,converged,rel_dev_dense,max_interp_err";

const DEFAULT_SWEEP: [usize; 5] = [20_000, 40_000, 60_000, 80_000, 100_000];

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Mode {
    Bench,
    Verify,
    Errtrend,
    Solve,
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Mode::Bench => "bench",
            Mode::Verify => "verify",
            Mode::Errtrend => "errtrend",
            Mode::Solve => "solve",
        };
        f.write_str(s)
    }
}

/// `auto` or a level count of at least 1.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct LevelArg(pub Levels);

impl FromStr for LevelArg {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        if s.eq_ignore_ascii_case("auto") {
            return Ok(LevelArg(Levels::Auto));
        }
        match s.parse::<usize>() {
            Ok(l) if l >= 1 => Ok(LevelArg(Levels::Fixed(l))),
            _ => Err(format!("expected `auto` or an integer >= 1, got {s:?}")),
        }
    }
}

impl fmt::Display for LevelArg {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.0 {
            Levels::Auto => f.write_str("auto"),
            Levels::Fixed(l) => write!(f, "{l}"),
        }
    }
}

/// Point count; accepts plain integers and forms like `2e4`.
fn parse_count(s: &str) -> std::result::Result<usize, String> {
    if let Ok(n) = s.parse::<usize>() {
        return if n >= 1 { Ok(n) } else { Err("N must be at least 1".into()) };
    }
    match s.parse::<f64>() {
        Ok(v) if v >= 1.0 && v.fract() == 0.0 && v <= 1e12 => Ok(v as usize),
        _ => Err(format!("invalid point count {s:?}")),
    }
}

fn parse_shape(s: &str) -> std::result::Result<f64, String> {
    match s.parse::<f64>() {
        Ok(t) if t > 0.0 && t.is_finite() => Ok(t),
        _ => Err(format!("shape parameter must be a positive number, got {s:?}")),
    }
}

#[derive(Clone, Debug, Parser)]
#[command(name = "imq-fastmv", version, about = "Fast IMQ interpolation matrix products")]
pub struct Cli {
    /// What to run.
    #[arg(long, value_enum, default_value_t = Mode::Verify)]
    pub mode: Mode,

    /// Point counts (comma separated for a bench sweep).
    #[arg(long = "n", value_delimiter = ',', value_parser = parse_count)]
    pub n: Vec<usize>,

    /// Shape parameter t.
    #[arg(long = "t", default_value_t = 1.0, value_parser = parse_shape)]
    pub t: f64,

    /// Truncation degree M.
    #[arg(long = "m", default_value_t = 10)]
    pub m: usize,

    /// Partition levels: `auto` or an integer >= 1.
    #[arg(long, default_value = "auto")]
    pub levels: LevelArg,

    #[arg(long, default_value_t = 42)]
    pub seed: u64,

    /// Read data sites from a file instead of generating Halton points.
    #[arg(long)]
    pub points: Option<PathBuf>,

    /// CSV destination; stdout when omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,

    /// Worker threads for the operator (0 = rayon default).
    #[arg(long, default_value_t = 0)]
    pub threads: usize,

    /// Timing repetitions; the median is reported.
    #[arg(long, default_value_t = 3, value_parser = clap::value_parser!(u32).range(1..))]
    pub reps: u32,

    /// Relative residual target for the solve mode.
    #[arg(long, default_value_t = 1e-10)]
    pub tol: f64,

    /// Operator application budget for the solve mode.
    #[arg(long, default_value_t = DEFAULT_MAX_ITER)]
    pub max_iter: usize,
}

impl Cli {
    fn counts(&self, default: &[usize]) -> Vec<usize> {
        if self.n.is_empty() {
            default.to_vec()
        } else {
            self.n.clone()
        }
    }

    fn config_line(&self) -> String {
        let n = match self.mode {
            Mode::Bench => self.counts(&DEFAULT_SWEEP),
            Mode::Verify => self.counts(&[2000]),
            Mode::Solve => self.counts(&[500]),
            Mode::Errtrend => vec![],
        };
        let n = n.iter().map(|v| v.to_string()).collect::<Vec<_>>().join(";");
        format!(
            "# config mode={} n={} t={} m={} levels={} seed={} points={} threads={} reps={} tol={:e} max_iter={}",
            self.mode,
            if n.is_empty() { "-".into() } else { n },
            self.t,
            self.m,
            self.levels,
            self.seed,
            self.points.as_ref().map_or("halton".into(), |p| p.display().to_string()),
            if self.threads == 0 { rayon::current_num_threads() } else { self.threads },
            self.reps,
            self.tol,
            self.max_iter,
        )
    }
}

/// One timing row of the matvec benchmark.
#[derive(Clone, Debug, PartialEq)]
pub struct BenchRecord {
    pub n: usize,
    pub m: usize,
    pub l: usize,
    pub time_fast_seconds: f64,
    pub time_dense_seconds: f64,
    pub rel_err_inf: f64,
    pub selected_l: usize,
}

/// One sample of the truncation-error curves.
#[derive(Clone, Debug, PartialEq)]
pub struct ErrTrendRow {
    pub rho_x: f64,
    pub m: usize,
    pub case: char,
    pub error: f64,
    pub bound: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SolveRecord {
    pub n: usize,
    pub m: usize,
    pub l: usize,
    pub t: f64,
    pub iterations: usize,
    pub rel_residual: f64,
    pub converged: bool,
    pub rel_dev_dense: Option<f64>,
    pub max_interp_err: f64,
}

/// Pass/fail outcome of one invariant check.
#[derive(Clone, Debug, PartialEq)]
pub struct CheckResult {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

fn sig3(x: f64) -> String {
    format!("{x:.2e}")
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(|a, b| a.total_cmp(b));
    v[v.len() / 2]
}

/// Median wall time of `reps` runs, and the value of the last run.
pub fn time_median<T>(reps: u32, mut f: impl FnMut() -> Result<T>) -> Result<(f64, T)> {
    let mut times = Vec::with_capacity(reps as usize);
    let mut last = None;
    for _ in 0..reps.max(1) {
        let start = Instant::now();
        let v = f()?;
        times.push(start.elapsed().as_secs_f64());
        last = Some(v);
    }
    Ok((median(times), last.expect("at least one repetition")))
}

fn open_out(cli: &Cli) -> Result<Box<dyn Write>> {
    Ok(match &cli.out {
        Some(path) => Box::new(BufWriter::new(File::create(path)?)),
        None => Box::new(BufWriter::new(io::stdout())),
    })
}

fn sites(cli: &Cli, n: usize) -> Result<Vec<Point2>> {
    match &cli.points {
        Some(path) => {
            let pts = read_points(path)?;
            if pts.is_empty() {
                return Err(Error::EmptyInput);
            }
            Ok(pts)
        }
        None => Ok(halton2d(n)),
    }
}

/// Times dense and fast products over the requested sizes. With `auto`
/// levels every `L` in 1..=3 is timed and the fastest is reported as best.
pub fn run_bench(cli: &Cli, out: &mut dyn Write) -> Result<Vec<BenchRecord>> {
    let params = KernelParams::new(cli.t)?;
    let counts = if cli.points.is_some() { vec![0] } else { cli.counts(&DEFAULT_SWEEP) };
    writeln!(out, "{}", cli.config_line())?;
    writeln!(out, "{BENCH_HEADER}")?;
    let mut records = Vec::new();
    for n in counts {
        let pts = sites(cli, n)?;
        let n = pts.len();
        let u = random_vector(n, cli.seed);
        let (t_dense, dense) = time_median(cli.reps, || dense_matvec(&pts, &params, &u))?;
        let selected = auto_level(n, cli.m);
        let candidates: Vec<usize> = match cli.levels.0 {
            Levels::Auto => (1..=3).collect(),
            Levels::Fixed(l) => vec![l],
        };
        let mut rows = Vec::new();
        for l in candidates {
            let op = build_operator(&pts, params, cli.m, Levels::Fixed(l))?;
            let (t_fast, fast) = time_median(cli.reps, || op.fast_matvec(&u))?;
            let err = rel_err_inf(&fast, &dense)?;
            writeln!(out, "{n},{},{l},{},{},{err:.3e}", cli.m, sig3(t_fast), sig3(t_dense))?;
            rows.push(BenchRecord {
                n,
                m: cli.m,
                l,
                time_fast_seconds: t_fast,
                time_dense_seconds: t_dense,
                rel_err_inf: err,
                selected_l: selected,
            });
        }
        let best = rows
            .iter()
            .min_by(|a, b| a.time_fast_seconds.total_cmp(&b.time_fast_seconds))
            .expect("at least one level");
        let auto_row = rows.iter().find(|r| r.l == selected).unwrap_or(best);
        writeln!(
            out,
            "# N={n} best_L={} auto_L={selected} fast_T/N={} dense_T/N={}",
            best.l,
            sig3(auto_row.time_fast_seconds / n as f64),
            sig3(t_dense / n as f64),
        )?;
        records.extend(rows);
    }
    out.flush()?;
    Ok(records)
}

/// Truncation-error curves for the two angular configurations, `rho_y = 1`,
/// `rho_x` sampled on `[1.1, 21]`.
pub fn errtrend_rows(samples: usize) -> Result<Vec<ErrTrendRow>> {
    let cases = [
        ('a', (FRAC_PI_3, FRAC_PI_3), (FRAC_PI_3, FRAC_PI_3)),
        ('b', (PI, FRAC_PI_3), (FRAC_PI_4, FRAC_PI_2)),
    ];
    let mut rows = Vec::new();
    for (case, (tx, wx), (ty, wy)) in cases {
        let y = SphericalCoord { rho: 1.0, theta: ty, omega: wy }.to_cartesian();
        for m in [5usize, 10, 20] {
            for s in 0..samples {
                let rho_x = 1.1 + (21.0 - 1.1) * s as f64 / (samples.max(2) - 1) as f64;
                let x = SphericalCoord { rho: rho_x, theta: tx, omega: wx }.to_cartesian();
                let error = (green_exact(x, y)? - green_truncated(x, y, m)?).abs();
                let bound = truncation_error_bound(rho_x, 1.0 / rho_x, m)?;
                rows.push(ErrTrendRow { rho_x, m, case, error, bound });
            }
        }
    }
    Ok(rows)
}

pub fn run_errtrend(cli: &Cli, out: &mut dyn Write) -> Result<Vec<ErrTrendRow>> {
    let rows = errtrend_rows(200)?;
    writeln!(out, "{}", cli.config_line())?;
    writeln!(out, "{ERRTREND_HEADER}")?;
    for r in &rows {
        writeln!(out, "{:.6},{},{},{:.6e},{:.6e}", r.rho_x, r.m, r.case, r.error, r.bound)?;
    }
    out.flush()?;
    Ok(rows)
}

fn check(name: &str, passed: bool, detail: String) -> CheckResult {
    CheckResult { name: name.to_string(), passed, detail }
}

/// Runs the invariant suite and reports one result per check.
pub fn verify_checks(cli: &Cli) -> Result<Vec<CheckResult>> {
    let params = KernelParams::new(cli.t)?;
    let n = cli.counts(&[2000])[0];
    let mut results = Vec::new();

    // Separation ratio over the unit square for every depth up to 6.
    let tree = build_tree(&[Point2::new(0.5, 0.5)], Square::unit(), 6)?;
    let rep = tree.separation_report(cli.t);
    results.push(check(
        "separation ratio < 1/2",
        rep.is_valid(),
        format!("max ratio {:.6} (t={})", rep.max_ratio, cli.t),
    ));

    // Interaction and near list sizes.
    let tree = build_tree(&halton2d(64), Square::unit(), 4)?;
    let mut worst = (0, 0, 0);
    for level in 1..=4 {
        for b in 0..tree.num_blocks(level) {
            let len = tree.interaction_list(tree.block_ref(level, b)).len();
            if level == 1 {
                worst.0 = worst.0.max(len);
            } else {
                worst.1 = worst.1.max(len);
            }
        }
    }
    for b in 0..tree.num_blocks(4) {
        worst.2 = worst.2.max(tree.near_list(tree.block_ref(4, b))?.len());
    }
    results.push(check(
        "list sizes",
        worst.0 <= 12 && worst.1 <= 27 && worst.2 <= 9,
        format!("max |S_p| level 1 = {}, deeper = {}, max |NS_p| = {}", worst.0, worst.1, worst.2),
    ));

    // Exact cover by brute-force pair enumeration.
    let small = halton2d(n.min(200));
    let mut cover_ok = true;
    for levels in 1..=3 {
        cover_ok &= exact_cover_holds(&small, levels)?;
    }
    results.push(check("exact cover", cover_ok, format!("N={}, L=1..3", small.len())));

    // Fast against dense.
    let pts = sites(cli, n)?;
    let u = random_vector(pts.len(), cli.seed);
    let dense = dense_matvec(&pts, &params, &u)?;
    let level_set: Vec<usize> = match cli.levels.0 {
        Levels::Auto => vec![1, 2],
        Levels::Fixed(l) => vec![l],
    };
    for l in level_set {
        let op = build_operator(&pts, params, cli.m, Levels::Fixed(l))?;
        let fast = op.fast_matvec(&u)?;
        let err = rel_err_inf(&fast, &dense)?;
        results.push(check(
            &format!("oracle equivalence L={l}"),
            err <= 5e-8,
            format!("rel_err_inf {err:.3e} (N={}, M={})", pts.len(), cli.m),
        ));
    }

    // Truncation bound on random pairs.
    let mut rng = ChaCha8Rng::seed_from_u64(cli.seed);
    let mut violations = 0;
    for _ in 0..1000 {
        let rho = rng.gen_range(0.2..5.0);
        let r = rng.gen_range(0.4..0.9);
        let x = SphericalCoord { rho, theta: rng.gen_range(0.0..PI), omega: rng.gen_range(0.0..2.0 * PI) }.to_cartesian();
        let y = SphericalCoord { rho: r * rho, theta: rng.gen_range(0.0..PI), omega: rng.gen_range(0.0..2.0 * PI) }.to_cartesian();
        let exact = green_exact(x, y)?;
        for m in [5, 10, 20] {
            if (exact - green_truncated(x, y, m)?).abs() > truncation_error_bound(rho, r, m)? {
                violations += 1;
            }
        }
    }
    results.push(check("truncation bound", violations == 0, format!("{violations} violations in 3000 cases")));

    // Addition theorem.
    let mut worst_add: f64 = 0.0;
    for _ in 0..100 {
        let (ta, wa) = (rng.gen_range(0.0..PI), rng.gen_range(0.0..2.0 * PI));
        let (tb, wb) = (rng.gen_range(0.0..PI), rng.gen_range(0.0..2.0 * PI));
        let cos_alpha = (ta.cos() * tb.cos() + ta.sin() * tb.sin() * (wa - wb).cos()).clamp(-1.0, 1.0);
        for deg in 0..=20 {
            let mut sum = 0.0;
            for m in 0..=deg {
                sum += coeff_d(deg, m)?
                    * assoc_legendre(deg, m, tb.cos())?
                    * assoc_legendre(deg, m, ta.cos())?
                    * (m as f64 * (wa - wb)).cos();
            }
            let p = legendre(deg, cos_alpha)?;
            worst_add = worst_add.max((sum - p).abs() / p.abs().max(1e-3));
        }
    }
    results.push(check("addition theorem", worst_add <= 1e-10, format!("max rel dev {worst_add:.2e}")));

    // Linearity.
    let op = build_operator(&pts, params, cli.m, cli.levels.0)?;
    let v = random_vector(pts.len(), cli.seed.wrapping_add(1));
    let (a, b) = (0.75, -1.5);
    let combo: Vec<f64> = u.iter().zip(&v).map(|(x, y)| a * x + b * y).collect();
    let lhs = op.fast_matvec(&combo)?;
    let fu = op.fast_matvec(&u)?;
    let fv = op.fast_matvec(&v)?;
    let rhs: Vec<f64> = fu.iter().zip(&fv).map(|(x, y)| a * x + b * y).collect();
    let lin = rel_err_inf(&lhs, &rhs)?;
    results.push(check("linearity", lin <= 1e-12, format!("rel dev {lin:.2e}")));

    Ok(results)
}

/// Every ordered pair is covered exactly once by far interactions over all
/// levels plus the finest near lists.
pub fn exact_cover_holds(points: &[Point2], levels: usize) -> Result<bool> {
    let square = crate::partition::bounding_square(points)?;
    let tree = build_tree(points, square, levels)?;
    let n = points.len();
    let mut count = vec![0u32; n * n];
    let mut mark = |src: &[usize], dst: &[usize]| {
        for &i in dst {
            for &j in src {
                count[i * n + j] += 1;
            }
        }
    };
    for level in 1..=levels {
        for b in 0..tree.num_blocks(level) {
            let p = tree.block_ref(level, b);
            for q in tree.interaction_list(p) {
                mark(tree.bucket(p), tree.bucket(q));
            }
        }
    }
    for b in 0..tree.num_blocks(levels) {
        let p: BlockRef = tree.block_ref(levels, b);
        for q in tree.near_list(p)? {
            mark(tree.bucket(p), tree.bucket(q));
        }
    }
    Ok(count.iter().all(|&c| c == 1))
}

pub fn run_verify(cli: &Cli, out: &mut dyn Write) -> Result<bool> {
    writeln!(out, "{}", cli.config_line())?;
    let results = verify_checks(cli)?;
    for r in &results {
        writeln!(out, "[{}] {}: {}", if r.passed { "PASS" } else { "FAIL" }, r.name, r.detail)?;
    }
    out.flush()?;
    Ok(results.iter().all(|r| r.passed))
}

/// Smooth test data on the unit square.
pub fn franke(p: Point2) -> f64 {
    let (x, y) = (9.0 * p.x1, 9.0 * p.x2);
    0.75 * (-((x - 2.0).powi(2) + (y - 2.0).powi(2)) / 4.0).exp()
        + 0.75 * (-((x + 1.0).powi(2) / 49.0) - (y + 1.0) / 10.0).exp()
        + 0.5 * (-((x - 7.0).powi(2) + (y - 3.0).powi(2)) / 4.0).exp()
        - 0.2 * (-(x - 4.0).powi(2) - (y - 7.0).powi(2)).exp()
}

/// Solves for interpolation coefficients of `f` at the data sites with the
/// fast operator and compares with the dense direct solve when affordable.
pub fn solve_record(pts: &[Point2], f: &[f64], params: KernelParams, m: usize, levels: Levels, tol: f64, max_iter: usize) -> Result<(SolveRecord, Vec<f64>)> {
    let op = build_operator(pts, params, m, levels)?;
    let rep = iterative_solve(&op, f, tol, max_iter)?;
    let rel_dev_dense = if pts.len() <= DEFAULT_DENSE_CAP {
        let a = assemble_dense(pts, &params)?;
        let direct = dense_solve(&a, f)?;
        Some(rel_err_inf(&rep.c, &direct)?)
    } else {
        None
    };
    let interp = Interpolant::new(pts.to_vec(), rep.c.clone(), params)?;
    let f_scale = f.iter().fold(0.0f64, |acc, v| acc.max(v.abs())).max(f64::MIN_POSITIVE);
    let max_interp_err = pts
        .iter()
        .zip(f)
        .map(|(p, fi)| (interp.evaluate(*p) - fi).abs())
        .fold(0.0f64, f64::max)
        / f_scale;
    Ok((
        SolveRecord {
            n: pts.len(),
            m,
            l: op.num_levels(),
            t: params.shape(),
            iterations: rep.iterations,
            rel_residual: rep.final_relative_residual,
            converged: rep.converged,
            rel_dev_dense,
            max_interp_err,
        },
        rep.c,
    ))
}

pub fn run_solve(cli: &Cli, out: &mut dyn Write) -> Result<SolveRecord> {
    let params = KernelParams::new(cli.t)?;
    let pts = sites(cli, cli.counts(&[500])[0])?;
    let f: Vec<f64> = pts.iter().map(|p| franke(*p)).collect();
    let (rec, _) = solve_record(&pts, &f, params, cli.m, cli.levels.0, cli.tol, cli.max_iter)?;
    writeln!(out, "{}", cli.config_line())?;
    writeln!(out, "{SOLVE_HEADER}")?;
    writeln!(
        out,
        "{},{},{},{},{},{:.3e},{},{},{:.3e}",
        rec.n,
        rec.m,
        rec.l,
        rec.t,
        rec.iterations,
        rec.rel_residual,
        rec.converged,
        rec.rel_dev_dense.map_or("NA".into(), |d| format!("{d:.3e}")),
        rec.max_interp_err,
    )?;
    writeln!(out, "# status={}", if rec.converged { "converged" } else { "not-converged" })?;
    out.flush()?;
    Ok(rec)
}

/// Runs the selected mode; `Ok(false)` signals failed checks or a solve that
/// did not converge.
pub fn run(cli: &Cli) -> Result<bool> {
    let body = || -> Result<bool> {
        let mut out = open_out(cli)?;
        match cli.mode {
            Mode::Bench => run_bench(cli, &mut out).map(|_| true),
            Mode::Errtrend => run_errtrend(cli, &mut out).map(|_| true),
            Mode::Verify => run_verify(cli, &mut out),
            Mode::Solve => run_solve(cli, &mut out).map(|r| r.converged),
        }
    };
    if cli.threads > 0 {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(cli.threads)
            .build()
            .map_err(|e| Error::InvalidSolverSetting(e.to_string()))?;
        pool.install(body)
    } else {
        body()
    }
}
