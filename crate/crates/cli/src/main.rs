//! `lsw`: profiles, fixed-point solves and δ-sweeps from the command line.

use std::fs::{self, File};
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use clap::{Args, Parser, Subcommand, ValueEnum};
use lsw_core::diagnostics::{write_sweep_csv, write_sweep_json};
use lsw_core::{
    phi_lsw, sweep_scaling, Error, Grid, NormSpec, ParamContext, ParamState, Profile, ResultSummary, Solver,
    SolverConfig,
};
use serde::{Deserialize, Serialize};

const EXIT_USAGE: u8 = 2;
const EXIT_BRACKET: u8 = 10;
const EXIT_NONCONTRACTION: u8 = 11;
const EXIT_MAXITER: u8 = 12;
const EXIT_TAIL: u8 = 13;
const EXIT_OVERFLOW: u8 = 14;
const EXIT_NUMERIC: u8 = 15;
const EXIT_IO: u8 = 20;

#[derive(Parser, Debug)]
#[command(name = "lsw", version, about = "Self-similar LSW profiles with encounters")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    common: Common,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Write the closed-form LSW profile on the grid.
    Lsw,
    /// Write the homogeneous profile at ε = ε̃ = 0.
    Psi,
    /// Run the fixed-point iteration.
    Solve,
    /// Solve for each δ in --deltas.
    Sweep,
    /// Re-check a stored profile against its result file.
    Residual {
        #[arg(long)]
        profile: PathBuf,
        #[arg(long)]
        result: PathBuf,
        /// Window for the differential residual.
        #[arg(long, default_value_t = 0.05)]
        lo: f64,
        #[arg(long, default_value_t = 0.95)]
        hi: f64,
    },
}

#[derive(Args, Debug)]
struct Common {
    #[arg(long, global = true, env = "LSW_DELTA")]
    delta: Option<f64>,
    #[arg(long, global = true, env = "LSW_DELTAS", value_delimiter = ',')]
    deltas: Option<Vec<f64>>,
    #[arg(long, global = true, env = "LSW_BETA1")]
    beta1: Option<f64>,
    #[arg(long, global = true, env = "LSW_BETA2")]
    beta2: Option<f64>,
    #[arg(long, global = true, env = "LSW_ZMAX")]
    zmax: Option<f64>,
    #[arg(long, global = true, env = "LSW_NBASE")]
    nbase: Option<usize>,
    #[arg(long, global = true, env = "LSW_TOL")]
    tol: Option<f64>,
    #[arg(long = "tol-params", global = true, env = "LSW_TOL_PARAMS")]
    tol_params: Option<f64>,
    #[arg(long = "max-iter", global = true, env = "LSW_MAX_ITER")]
    max_iter: Option<usize>,
    /// Output directory; stdout when absent.
    #[arg(long, global = true, env = "LSW_OUT")]
    out: Option<PathBuf>,
    #[arg(long, global = true, env = "LSW_FORMAT", value_enum)]
    format: Option<Format>,
    /// TOML file with the same keys as the flags (dashes become underscores).
    #[arg(long, global = true, env = "LSW_CONFIG")]
    config: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
enum Format {
    Csv,
    Json,
}

impl Format {
    fn ext(self) -> &'static str {
        match self {
            Format::Csv => "csv",
            Format::Json => "json",
        }
    }
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct FileConfig {
    delta: Option<f64>,
    deltas: Option<Vec<f64>>,
    beta1: Option<f64>,
    beta2: Option<f64>,
    zmax: Option<f64>,
    nbase: Option<usize>,
    tol: Option<f64>,
    tol_params: Option<f64>,
    max_iter: Option<usize>,
    out: Option<PathBuf>,
    format: Option<Format>,
}

#[derive(Debug)]
struct RunConfig {
    solver: SolverConfig,
    deltas: Vec<f64>,
    out: Option<PathBuf>,
    format: Format,
}

enum Failure {
    Usage(String),
    Core(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Core(e)
    }
}

impl From<io::Error> for Failure {
    fn from(e: io::Error) -> Self {
        Failure::Core(Error::Io(e))
    }
}

impl From<serde_json::Error> for Failure {
    fn from(e: serde_json::Error) -> Self {
        Failure::Core(Error::Json(e))
    }
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::BracketFailure { .. } => EXIT_BRACKET,
        Error::NonContraction { .. } => EXIT_NONCONTRACTION,
        Error::MaxIterExceeded { .. } => EXIT_MAXITER,
        Error::TailDominance { .. } => EXIT_TAIL,
        Error::Overflow { .. } => EXIT_OVERFLOW,
        Error::Io(_) | Error::Csv(_) | Error::Json(_) => EXIT_IO,
        Error::InvalidInput(_) => EXIT_USAGE,
        _ => EXIT_NUMERIC,
    }
}

/// Flags and environment (merged by clap) win over the file, the file over defaults.
fn resolve(common: &Common) -> Result<RunConfig, Failure> {
    let file = match &common.config {
        Some(path) => {
            let text = fs::read_to_string(path)
                .map_err(|e| Failure::Usage(format!("cannot read config {}: {e}", path.display())))?;
            toml::from_str::<FileConfig>(&text)
                .map_err(|e| Failure::Usage(format!("malformed config {}: {e}", path.display())))?
        }
        None => FileConfig::default(),
    };
    let d = SolverConfig::default();
    let beta1 = common.beta1.or(file.beta1).unwrap_or(d.norm.beta1());
    let beta2 = common.beta2.or(file.beta2).unwrap_or(d.norm.beta2());
    let norm = NormSpec::new(beta1, beta2).map_err(|e| Failure::Usage(e.to_string()))?;
    let solver = SolverConfig {
        delta: common.delta.or(file.delta).unwrap_or(d.delta),
        norm,
        z_max: common.zmax.or(file.zmax).unwrap_or(d.z_max),
        n_base: common.nbase.or(file.nbase).unwrap_or(d.n_base),
        tol_profile: common.tol.or(file.tol).unwrap_or(d.tol_profile),
        tol_params: common.tol_params.or(file.tol_params).unwrap_or(d.tol_params),
        max_iter: common.max_iter.or(file.max_iter).unwrap_or(d.max_iter),
        ..d
    };
    solver.validate().map_err(|e| Failure::Usage(e.to_string()))?;
    let deltas = common.deltas.clone().or(file.deltas).unwrap_or_default();
    for &delta in &deltas {
        SolverConfig { delta, ..solver }.validate().map_err(|e| Failure::Usage(e.to_string()))?;
    }
    Ok(RunConfig {
        solver,
        deltas,
        out: common.out.clone().or(file.out),
        format: common.format.or(file.format).unwrap_or(Format::Csv),
    })
}

fn sink(out: &Option<PathBuf>, name: &str) -> io::Result<Box<dyn Write>> {
    match out {
        Some(dir) => {
            fs::create_dir_all(dir)?;
            Ok(Box::new(BufWriter::new(File::create(dir.join(name))?)))
        }
        None => Ok(Box::new(io::stdout().lock())),
    }
}

fn emit_profile(p: &Profile, cfg: &RunConfig, stem: &str) -> Result<(), Failure> {
    let mut w = sink(&cfg.out, &format!("{stem}.{}", cfg.format.ext()))?;
    match cfg.format {
        Format::Csv => p.write_csv(&mut w)?,
        Format::Json => p.write_json(&mut w)?,
    }
    w.flush()?;
    Ok(())
}

fn emit_json<T: Serialize>(value: &T, out: &Option<PathBuf>, name: &str) -> Result<(), Failure> {
    let mut w = sink(out, name)?;
    serde_json::to_writer_pretty(&mut w, value)?;
    writeln!(w)?;
    w.flush()?;
    Ok(())
}

fn grid_for(cfg: &SolverConfig) -> Result<Arc<Grid>, Failure> {
    Ok(Arc::new(Grid::build(cfg.delta, cfg.z_max, cfg.n_base)?))
}

#[derive(Debug, Serialize)]
struct ResidualReport {
    integral: f64,
    differential: f64,
    window: (f64, f64),
    eps: f64,
    teps: f64,
}

fn residual(profile: &Path, result: &Path, lo: f64, hi: f64, cfg: &RunConfig) -> Result<(), Failure> {
    let summary: ResultSummary = serde_json::from_reader(io::BufReader::new(File::open(result)?))?;
    let meta = &summary.grid_meta;
    let solver_cfg = SolverConfig {
        delta: meta.delta,
        z_max: meta.z_max,
        n_base: meta.n_base,
        norm: NormSpec::new(meta.beta1, meta.beta2)?,
        ..cfg.solver
    };
    let solver = Solver::new(solver_cfg)?;
    if solver.grid().len() != meta.node_count {
        return Err(Error::GridMismatch.into());
    }
    let phi = Profile::read_csv(File::open(profile)?, solver.grid().clone(), solver_cfg.norm)?;
    let params = ParamState::new(meta.delta, summary.eps, summary.teps)?;
    let report = ResidualReport {
        integral: solver.integral_residual(&phi, params)?,
        differential: solver.differential_residual(&phi, params, lo, hi)?,
        window: (lo, hi),
        eps: params.eps,
        teps: params.teps,
    };
    emit_json(&report, &cfg.out, "residual.json")
}

fn run(cli: &Cli) -> Result<(), Failure> {
    let cfg = resolve(&cli.common)?;
    match &cli.command {
        Command::Lsw => {
            let p = Profile::from_fn(grid_for(&cfg.solver)?, cfg.solver.norm, phi_lsw)?;
            emit_profile(&p, &cfg, "lsw_profile")
        }
        Command::Psi => {
            let ctx = ParamContext::new(grid_for(&cfg.solver)?, cfg.solver.norm)?;
            let psi = ctx.psi_hat();
            let p = Profile::new(psi.grid().clone(), psi.values(), cfg.solver.norm)?;
            emit_profile(&p, &cfg, "psi_profile")
        }
        Command::Solve => {
            let r = Solver::new(cfg.solver)?.solve()?;
            emit_json(&r.summary(), &cfg.out, "result.json")?;
            if cfg.out.is_some() {
                emit_profile(&r.profile, &cfg, "profile")?;
            }
            Ok(())
        }
        Command::Sweep => {
            if cfg.deltas.is_empty() {
                return Err(Failure::Usage("sweep needs --deltas".into()));
            }
            let records = sweep_scaling(&cfg.deltas, cfg.solver);
            for rec in &records {
                if let Some(e) = &rec.error {
                    eprintln!("delta {:e}: {e}", rec.delta);
                }
            }
            let mut w = sink(&cfg.out, &format!("sweep.{}", cfg.format.ext()))?;
            match cfg.format {
                Format::Csv => write_sweep_csv(&records, &mut w)?,
                Format::Json => {
                    write_sweep_json(&records, &mut w)?;
                    writeln!(w)?;
                }
            }
            w.flush()?;
            Ok(())
        }
        Command::Residual { profile, result, lo, hi } => residual(profile, result, *lo, *hi, &cfg),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(msg)) => {
            eprintln!("lsw: {msg}");
            ExitCode::from(EXIT_USAGE)
        }
        Err(Failure::Core(e)) => {
            eprintln!("lsw: {e}");
            if let Error::NonContraction { ratios, .. } = &e {
                eprintln!("lsw: contraction ratios {ratios:?}");
            }
            ExitCode::from(exit_code(&e))
        }
    }
}
