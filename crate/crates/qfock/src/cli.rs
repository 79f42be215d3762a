//! Command-line front end. Every command validates its parameters before computing, writes
//! CSV or JSON to `--out` (stdout by default) and maps outcomes to exit codes:
//! 0 success, 1 failed checks, 2 usage error, 3 runtime error.

use std::collections::BTreeMap;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use nalgebra::DVector;
use serde::Serialize;

use crate::cap::SizeCap;
use crate::cocycle::{self, CocycleSpec, SimParams};
use crate::deformation::{self, LrAction, Side};
use crate::derivations::{self, NCPoly};
use crate::error::Error;
use crate::fock::{q_inner, Ctx, FockContext};
use crate::output::{fmt_f64, write_csv, write_json, F64};
use crate::symgroup;
use crate::verify::{self, Suite, VerifyParams};

/// The bundled `ℤ` splitting cocycle, used when `--spec` is omitted.
pub const BUNDLED_SPEC: &str = include_str!("../specs/z_splitting.json");

pub const EXIT_OK: i32 = 0;
pub const EXIT_FAILED: i32 = 1;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_RUNTIME: i32 = 3;

#[derive(Debug, Parser)]
#[command(name = "qfock", version, about = "q-deformed Fock spaces, their derivations and group-cocycle Markov chains")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Csv,
    Json,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SuiteArg {
    Gram,
    Operators,
    Bozejko,
    Derivations,
    Number,
    Conjugate,
    All,
}

impl From<SuiteArg> for Suite {
    fn from(s: SuiteArg) -> Suite {
        match s {
            SuiteArg::Gram => Suite::Gram,
            SuiteArg::Operators => Suite::Operators,
            SuiteArg::Bozejko => Suite::Bozejko,
            SuiteArg::Derivations => Suite::Derivations,
            SuiteArg::Number => Suite::Number,
            SuiteArg::Conjugate => Suite::Conjugate,
            SuiteArg::All => Suite::All,
        }
    }
}

#[derive(Debug, Clone, Args)]
pub struct SpaceArgs {
    /// Number of generators N.
    #[arg(long, default_value_t = 2)]
    pub n: usize,
    /// Deformation parameter, strictly between -1 and 1.
    #[arg(long, default_value_t = 0.1, allow_negative_numbers = true)]
    pub q: f64,
    /// Truncation level L (for `gram`, the word length).
    #[arg(long, default_value_t = 4)]
    pub level: usize,
}

#[derive(Debug, Clone, Args)]
pub struct OutputArgs {
    /// Output file; stdout when omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub format: Option<Format>,
    /// Comma-separated `key=value` limits: max_dim, max_perm_len, max_doubled, max_table_entries.
    #[arg(long)]
    pub cap_override: Option<String>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Table of C_q, nu(q,N) and rho(q,N).
    Constants {
        /// Comma-separated `q:N` pairs; defaults to the threshold rows for N = 2..10.
        #[arg(long, allow_hyphen_values = true)]
        grid: Option<String>,
        #[command(flatten)]
        output: OutputArgs,
    },
    /// Runs a verification suite and reports per-check residuals.
    Verify {
        #[arg(value_enum)]
        suite: SuiteArg,
        #[command(flatten)]
        space: SpaceArgs,
        #[arg(long, default_value_t = 20)]
        terms: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[command(flatten)]
        output: OutputArgs,
    },
    /// Gram matrix of the words of length `--level`.
    Gram {
        #[command(flatten)]
        space: SpaceArgs,
        #[command(flatten)]
        output: OutputArgs,
    },
    /// Spectral summary of the deformation operator on the doubled space.
    Xi {
        #[command(flatten)]
        space: SpaceArgs,
        /// Level at which the truncated operator is cut; defaults to `--level`.
        #[arg(long)]
        trunc_q: Option<usize>,
        #[command(flatten)]
        output: OutputArgs,
    },
    /// Convergence series of the conjugate-variable approximants.
    Conjugate {
        #[command(flatten)]
        space: SpaceArgs,
        #[arg(long, default_value_t = 20)]
        terms: usize,
        #[command(flatten)]
        output: OutputArgs,
    },
    /// Gillespie simulation of the cocycle Markov chain.
    CocycleSim {
        /// Cocycle spec JSON; the bundled integer splitting example when omitted.
        #[arg(long)]
        spec: Option<PathBuf>,
        /// Initial state, comma-separated non-identity elements, e.g. `5` or `ab,B`.
        #[arg(long, allow_hyphen_values = true)]
        init: String,
        #[arg(long, default_value_t = f64::INFINITY)]
        horizon: f64,
        #[arg(long, default_value_t = 10_000)]
        paths: usize,
        #[arg(long, default_value_t = 1000)]
        max_jumps: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[command(flatten)]
        output: OutputArgs,
    },
}

/// A failure with its exit code.
#[derive(Debug)]
pub struct CliError {
    pub code: i32,
    pub message: String,
}

impl CliError {
    fn usage(message: impl Into<String>) -> Self {
        CliError {
            code: EXIT_USAGE,
            message: message.into(),
        }
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        CliError {
            code: EXIT_RUNTIME,
            message: e.to_string(),
        }
    }
}

type CliResult<T> = std::result::Result<T, CliError>;

/// Applies `--cap-override` on top of the defaults and `QFOCK_SIZE_CAP`.
pub fn parse_cap(spec: Option<&str>) -> CliResult<SizeCap> {
    let mut cap = SizeCap::from_env().map_err(|e| CliError::usage(e.to_string()))?;
    let Some(spec) = spec else {
        return Ok(cap);
    };
    for item in spec.split(',').filter(|s| !s.trim().is_empty()) {
        let (key, value) = item
            .split_once('=')
            .ok_or_else(|| CliError::usage(format!("--cap-override: expected key=value, got `{item}`")))?;
        let value: usize = value
            .trim()
            .parse()
            .map_err(|_| CliError::usage(format!("--cap-override: `{value}` is not a non-negative integer")))?;
        let slot = match key.trim() {
            "max_dim" => &mut cap.max_dim,
            "max_perm_len" => &mut cap.max_perm_len,
            "max_doubled" => &mut cap.max_doubled,
            "max_table_entries" => &mut cap.max_table_entries,
            other => return Err(CliError::usage(format!("--cap-override: unknown key `{other}`"))),
        };
        *slot = value;
    }
    Ok(cap)
}

fn validate_space(s: &SpaceArgs) -> CliResult<()> {
    if !(s.q > -1.0 && s.q < 1.0) {
        return Err(CliError::usage(format!("--q must lie strictly between -1 and 1, got {}", s.q)));
    }
    if s.n == 0 {
        return Err(CliError::usage("--n must be at least 1"));
    }
    Ok(())
}

fn context(s: &SpaceArgs, cap: SizeCap) -> CliResult<Ctx> {
    validate_space(s)?;
    Ok(FockContext::with_cap(s.n, s.q, s.level, cap)?)
}

fn pick_format(requested: Option<Format>, default: Format, allowed: &[Format]) -> CliResult<Format> {
    let f = requested.unwrap_or(default);
    if !allowed.contains(&f) {
        return Err(CliError::usage(format!("format {f:?} is not available for this command")));
    }
    Ok(f)
}

/// Parses `q:N` pairs.
pub fn parse_grid(s: &str) -> CliResult<Vec<(f64, usize)>> {
    let mut out = Vec::new();
    for item in s.split(',').filter(|x| !x.trim().is_empty()) {
        let (q, n) = item
            .split_once(':')
            .ok_or_else(|| CliError::usage(format!("--grid: expected q:N, got `{item}`")))?;
        let q: f64 = q.trim().parse().map_err(|_| CliError::usage(format!("--grid: bad q `{q}`")))?;
        let n: usize = n.trim().parse().map_err(|_| CliError::usage(format!("--grid: bad N `{n}`")))?;
        if !(q > -1.0 && q < 1.0) || n == 0 {
            return Err(CliError::usage(format!("--grid: ({q}, {n}) outside -1 < q < 1, N >= 1")));
        }
        out.push((q, n));
    }
    if out.is_empty() {
        return Err(CliError::usage("--grid is empty"));
    }
    Ok(out)
}

/// Rows where `|q|N` or `|q|√N` equals 0.13, for N = 2..10, preceded by `q = 0`.
pub fn threshold_grid() -> Vec<(f64, usize)> {
    let mut g = vec![(0.0, 2)];
    for n in 2..=10usize {
        g.push((0.13 / n as f64, n));
        g.push((0.13 / (n as f64).sqrt(), n));
    }
    g
}

#[derive(Serialize)]
struct ConstantsRow {
    q: F64,
    n: usize,
    c_q: F64,
    nu: F64,
    rho: F64,
    nu_lt_1: bool,
    rho_lt_1: bool,
}

fn cmd_constants(grid: Option<String>, output: OutputArgs) -> CliResult<i32> {
    let format = pick_format(output.format, Format::Csv, &[Format::Csv, Format::Json])?;
    let grid = match grid {
        Some(g) => parse_grid(&g)?,
        None => threshold_grid(),
    };
    let mut rows = Vec::with_capacity(grid.len());
    for (q, n) in grid {
        let k = deformation::constants(q, n)?;
        rows.push(ConstantsRow {
            q: F64(q),
            n,
            c_q: F64(k.c_q),
            nu: F64(k.nu),
            rho: F64(k.rho),
            nu_lt_1: k.nu_lt_1,
            rho_lt_1: k.rho_lt_1,
        });
    }
    match format {
        Format::Json => write_json(&rows, output.out.as_deref())?,
        Format::Csv => {
            let header: Vec<String> = ["q", "N", "C_q", "nu", "rho", "nu_lt_1", "rho_lt_1"].map(String::from).to_vec();
            let body: Vec<Vec<String>> = rows
                .iter()
                .map(|r| {
                    vec![fmt_f64(r.q.0), r.n.to_string(), fmt_f64(r.c_q.0), fmt_f64(r.nu.0), fmt_f64(r.rho.0), r.nu_lt_1.to_string(), r.rho_lt_1.to_string()]
                })
                .collect();
            write_csv(&header, &body, output.out.as_deref())?;
        }
    }
    Ok(EXIT_OK)
}

fn cmd_verify(suite: SuiteArg, space: SpaceArgs, terms: usize, seed: u64, output: OutputArgs) -> CliResult<i32> {
    pick_format(output.format, Format::Json, &[Format::Json])?;
    validate_space(&space)?;
    let cap = parse_cap(output.cap_override.as_deref())?;
    let report = verify::run(
        suite.into(),
        VerifyParams {
            n: space.n,
            q: F64(space.q),
            level: space.level,
            terms,
            seed,
            cap,
        },
    );
    write_json(&report, output.out.as_deref())?;
    Ok(if report.pass { EXIT_OK } else { EXIT_FAILED })
}

#[derive(Serialize)]
struct GramReport {
    n: usize,
    q: F64,
    level: usize,
    dim: usize,
    min_eig: F64,
    orthonormality_residual: F64,
    /// `max |P_q^(n) recursive − direct|`; absent beyond the permutation-length cap.
    recursion_residual: Option<F64>,
    gamma: Vec<Vec<F64>>,
}

fn cmd_gram(space: SpaceArgs, output: OutputArgs) -> CliResult<i32> {
    let format = pick_format(output.format, Format::Json, &[Format::Json, Format::Csv])?;
    let cap = parse_cap(output.cap_override.as_deref())?;
    let ctx = context(&space, cap)?;
    let n = space.level;
    let g = ctx.gram(n)?;
    let ps = ctx.orthonormal_vectors(n)?;
    let mut ortho = 0.0f64;
    for (i, a) in ps.iter().enumerate() {
        for (j, b) in ps.iter().enumerate() {
            let want = if i == j { 1.0 } else { 0.0 };
            ortho = ortho.max((q_inner(a, b)? - want).norm());
        }
    }
    let recursion_residual = if n <= cap.max_perm_len {
        let d = symgroup::pq_direct(n, space.n, space.q, &cap)?;
        let r = symgroup::pq_recursive(n, space.n, space.q, &cap)?;
        Some(F64(d.max_abs_diff(&r)))
    } else {
        None
    };
    let m = &g.gamma.entries;
    match format {
        Format::Json => {
            let report = GramReport {
                n: space.n,
                q: F64(space.q),
                level: n,
                dim: m.nrows(),
                min_eig: F64(g.min_eig),
                orthonormality_residual: F64(ortho),
                recursion_residual,
                gamma: m.row_iter().map(|r| r.iter().map(|&x| F64(x)).collect()).collect(),
            };
            write_json(&report, output.out.as_deref())?;
        }
        Format::Csv => {
            let names: Vec<String> = (0..m.ncols()).map(|c| word_name(c, n, space.n)).collect();
            let mut header = vec!["word".to_string()];
            header.extend(names.iter().cloned());
            let body: Vec<Vec<String>> = (0..m.nrows())
                .map(|r| std::iter::once(names[r].clone()).chain(m.row(r).iter().map(|&x| fmt_f64(x))).collect())
                .collect();
            write_csv(&header, &body, output.out.as_deref())?;
        }
    }
    Ok(EXIT_OK)
}

/// Letters written 1-based and joined by `.`; the empty word is `e`.
fn word_name(idx: usize, n: usize, alphabet: usize) -> String {
    let w = crate::word::word_from_index(idx, n, alphabet);
    if w.is_empty() {
        return "e".into();
    }
    w.iter().map(|l| (l + 1).to_string()).collect::<Vec<_>>().join(".")
}

fn cmd_xi(space: SpaceArgs, trunc_q: Option<usize>, output: OutputArgs) -> CliResult<i32> {
    pick_format(output.format, Format::Json, &[Format::Json])?;
    let trunc = trunc_q.unwrap_or(space.level);
    if trunc > space.level {
        return Err(CliError::usage(format!("--trunc-q {trunc} exceeds --level {}", space.level)));
    }
    let cap = parse_cap(output.cap_override.as_deref())?;
    let ctx = context(&space, cap)?;
    write_json(&verify::xi_report(&ctx, trunc)?, output.out.as_deref())?;
    Ok(EXIT_OK)
}

#[derive(Serialize)]
struct ConjugateRow {
    n: usize,
    residual: F64,
    xi_norms: Vec<F64>,
    fisher: F64,
    /// `lipschitz[j][k]`: doubled-space norm of left multiplication by `∂_k ξ_j(n)`.
    lipschitz: Vec<Vec<F64>>,
}

#[derive(Serialize)]
struct ConjugateReport {
    n: usize,
    q: F64,
    level: usize,
    rho: F64,
    rho_lt_1: bool,
    diverging: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    warning: Option<String>,
    rows: Vec<ConjugateRow>,
}

fn cmd_conjugate(space: SpaceArgs, terms: usize, output: OutputArgs) -> CliResult<i32> {
    let format = pick_format(output.format, Format::Csv, &[Format::Csv, Format::Json])?;
    let cap = parse_cap(output.cap_override.as_deref())?;
    let ctx = context(&space, cap)?;
    let na = space.n;
    let series = derivations::conjugate_series(&ctx, terms)?;
    let k = deformation::constants(space.q, na)?;
    let warning = (!k.rho_lt_1).then(|| {
        format!(
            "rho(q, N) = {} >= 1: convergence of the Neumann series is not guaranteed at these parameters",
            fmt_f64(k.rho)
        )
    });
    if let Some(w) = &warning {
        eprintln!("warning: {w}");
    }
    let mut starts: Vec<Vec<Option<DVector<f64>>>> = vec![vec![None; na]; na];
    let mut rows = Vec::with_capacity(terms + 1);
    for n in 0..=terms {
        let mut lipschitz = vec![vec![F64(0.0); na]; na];
        for j in 0..na {
            let poly = NCPoly::from_vector(&series.vectors[n][j]);
            for kk in 0..na {
                let t = derivations::fdq(&poly, kk, &ctx)?;
                let (norm, v) = LrAction::new(&t, Side::Left)?.op_norm_from(starts[j][kk].as_ref());
                lipschitz[j][kk] = F64(norm);
                starts[j][kk] = Some(v);
            }
        }
        rows.push(ConjugateRow {
            n,
            residual: F64(series.residuals[n]),
            xi_norms: series.norms[n].iter().map(|&x| F64(x)).collect(),
            fisher: F64(series.fisher[n]),
            lipschitz,
        });
    }
    match format {
        Format::Json => {
            let report = ConjugateReport {
                n: na,
                q: F64(space.q),
                level: space.level,
                rho: F64(k.rho),
                rho_lt_1: k.rho_lt_1,
                diverging: series.diverging,
                warning,
                rows,
            };
            write_json(&report, output.out.as_deref())?;
        }
        Format::Csv => {
            let mut header = vec!["n".to_string(), "residual".to_string()];
            header.extend((1..=na).map(|j| format!("xi_norm_{j}")));
            header.push("fisher".into());
            for j in 1..=na {
                header.extend((1..=na).map(|k| format!("lipschitz_{j}_{k}")));
            }
            let body: Vec<Vec<String>> = rows
                .iter()
                .map(|r| {
                    let mut v = vec![r.n.to_string(), fmt_f64(r.residual.0)];
                    v.extend(r.xi_norms.iter().map(|x| fmt_f64(x.0)));
                    v.push(fmt_f64(r.fisher.0));
                    v.extend(r.lipschitz.iter().flatten().map(|x| fmt_f64(x.0)));
                    v
                })
                .collect();
            write_csv(&header, &body, output.out.as_deref())?;
        }
    }
    Ok(EXIT_OK)
}

#[derive(Serialize)]
struct SimReportJson {
    spec: String,
    init: String,
    horizon: F64,
    n_paths: usize,
    max_jumps: usize,
    seed: u64,
    absorbed: usize,
    censored: usize,
    active: usize,
    survival: F64,
    survival_half_width: F64,
    invariant_violations: usize,
    probability_residual: F64,
    jump_histogram: BTreeMap<usize, usize>,
    jump_counts: Vec<usize>,
}

#[allow(clippy::too_many_arguments)]
fn cmd_cocycle(spec: Option<PathBuf>, init: String, horizon: f64, paths: usize, max_jumps: usize, seed: u64, output: OutputArgs) -> CliResult<i32> {
    pick_format(output.format, Format::Json, &[Format::Json])?;
    if max_jumps == 0 {
        return Err(CliError::usage("--max-jumps must be at least 1"));
    }
    if horizon.is_nan() || horizon < 0.0 {
        return Err(CliError::usage("--horizon must be non-negative"));
    }
    let (label, text) = match &spec {
        Some(p) => (p.display().to_string(), std::fs::read_to_string(p).map_err(Error::from)?),
        None => ("bundled:z_splitting".to_string(), BUNDLED_SPEC.to_string()),
    };
    let spec = CocycleSpec::from_json(&text).map_err(|e| CliError {
        code: EXIT_RUNTIME,
        message: format!("{label}: {e}"),
    })?;
    let init = spec.parse_state(&init).map_err(|e| CliError::usage(format!("--init: {e}")))?;
    let params = SimParams {
        horizon,
        n_paths: paths,
        max_jumps,
        seed,
    };
    let r = cocycle::simulate(&spec, &init, &params)?;
    let mut jump_histogram = BTreeMap::new();
    for &j in &r.jump_counts {
        *jump_histogram.entry(j).or_insert(0) += 1;
    }
    let report = SimReportJson {
        spec: label,
        init: r.init.to_string(),
        horizon: F64(horizon),
        n_paths: paths,
        max_jumps,
        seed,
        absorbed: r.absorbed,
        censored: r.censored,
        active: r.active,
        survival: F64(r.survival),
        survival_half_width: F64(r.survival_half_width),
        invariant_violations: r.invariant_violations,
        probability_residual: F64(r.probability_residual),
        jump_histogram,
        jump_counts: r.jump_counts,
    };
    write_json(&report, output.out.as_deref())?;
    Ok(if report.invariant_violations == 0 { EXIT_OK } else { EXIT_FAILED })
}

/// Executes a parsed command line and returns the exit code.
pub fn run(cli: Cli) -> CliResult<i32> {
    match cli.command {
        Command::Constants { grid, output } => cmd_constants(grid, output),
        Command::Verify {
            suite,
            space,
            terms,
            seed,
            output,
        } => cmd_verify(suite, space, terms, seed, output),
        Command::Gram { space, output } => cmd_gram(space, output),
        Command::Xi { space, trunc_q, output } => cmd_xi(space, trunc_q, output),
        Command::Conjugate { space, terms, output } => cmd_conjugate(space, terms, output),
        Command::CocycleSim {
            spec,
            init,
            horizon,
            paths,
            max_jumps,
            seed,
            output,
        } => cmd_cocycle(spec, init, horizon, paths, max_jumps, seed, output),
    }
}

/// Parses `args`, runs the command and reports errors on stderr.
pub fn main_with<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {}", e.message);
            e.code
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cap_override_parsing() {
        let c = parse_cap(Some("max_dim=10, max_doubled=99")).unwrap();
        assert_eq!((c.max_dim, c.max_doubled), (10, 99));
        assert_eq!(parse_cap(Some("nope=1")).unwrap_err().code, EXIT_USAGE);
        assert_eq!(parse_cap(Some("max_dim")).unwrap_err().code, EXIT_USAGE);
    }

    #[test]
    fn grid_parsing() {
        assert_eq!(parse_grid("0.065:2, -0.5:3").unwrap(), vec![(0.065, 2), (-0.5, 3)]);
        for bad in ["", "0.1", "1.0:2", "0.1:0", "x:2"] {
            assert_eq!(parse_grid(bad).unwrap_err().code, EXIT_USAGE, "{bad}");
        }
        assert_eq!(threshold_grid().len(), 19);
    }

    #[test]
    fn bundled_spec_parses() {
        let s = CocycleSpec::from_json(BUNDLED_SPEC).unwrap();
        assert_eq!(s, cocycle::z_splitting());
    }

    #[test]
    fn word_names() {
        assert_eq!(word_name(0, 0, 2), "e");
        assert_eq!(word_name(crate::word::word_index(&[1, 0], 2), 2, 2), "2.1");
    }
}
