use std::path::PathBuf;

use clap::{Args, Subcommand, ValueEnum};
use vqr_core::vqr::Backend;
use vqr_core::VqrError;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Subcommand)]
pub enum Command {
    /// Vector quantile of the outcomes, ignoring covariates.
    Vq,
    /// Vector quantile regression with a mean-independence constraint.
    Vqr,
    /// Level-by-level quantile regression for a scalar outcome.
    Qr1d,
    /// Compare the transport and monotone quantile regression values.
    Equiv,
    /// Re-validate a saved solution file.
    Check,
    /// Write a synthetic sample.
    Gen,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum BackendArg {
    Exact,
    Entropic,
}

#[derive(Clone, Debug, Default, Args)]
pub struct RunArgs {
    /// Input CSV (or solution JSON for `check`).
    #[arg(long)]
    pub input: Option<PathBuf>,
    /// Output directory.
    #[arg(long)]
    pub output: Option<PathBuf>,
    /// Points per axis of the uniform grid, or the number of levels for `qr1d`.
    #[arg(long)]
    pub grid_size: Option<usize>,
    #[arg(long, value_enum)]
    pub backend: Option<BackendArg>,
    /// Entropic regularization; defaults to 1% of the objective scale.
    #[arg(long)]
    pub epsilon: Option<f64>,
    #[arg(long)]
    pub tol: Option<f64>,
    /// Explicit quantile levels for `qr1d`, comma separated.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub levels: Option<Vec<f64>>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Covariate value at which curves are reported, comma separated. Repeatable.
    #[arg(long, allow_hyphen_values = true)]
    pub x_query: Vec<String>,
    /// Synthetic preset: specified, independent or misspecified.
    #[arg(long)]
    pub preset: Option<String>,
    /// Synthetic sample size.
    #[arg(long)]
    pub n: Option<usize>,
    /// Sweep limit for the entropic backend.
    #[arg(long)]
    pub max_iter: Option<usize>,
}

pub const DEFAULT_GRID_SIZE: usize = 16;
pub const DEFAULT_EQUIV_GRID_SIZE: usize = 8;
pub const DEFAULT_QR_LEVELS: usize = 19;
pub const DEFAULT_EXACT_TOL: f64 = 1e-9;
pub const DEFAULT_ENTROPIC_TOL: f64 = 1e-7;
pub const DEFAULT_EQUIV_TOL: f64 = 1e-6;
pub const DEFAULT_MAX_ITER: usize = 20_000;
pub const DEFAULT_GEN_N: usize = 200;

#[derive(Clone, Debug)]
pub struct RunConfig {
    pub command: Command,
    pub input: Option<PathBuf>,
    pub output: PathBuf,
    pub grid_size: usize,
    pub backend: Backend,
    pub epsilon: Option<f64>,
    /// `None` keeps a command's own default (for `check`, the stored tolerance).
    pub tol: Option<f64>,
    pub levels: Option<Vec<f64>>,
    pub seed: u64,
    pub x_query: Vec<Vec<f64>>,
    pub preset: String,
    pub n: usize,
    pub max_iter: usize,
}

fn allowed(command: Command) -> &'static [&'static str] {
    match command {
        Command::Vq => &["input", "output", "grid-size", "backend", "epsilon", "tol", "max-iter"],
        Command::Vqr => &["input", "output", "grid-size", "backend", "epsilon", "tol", "max-iter", "x-query"],
        Command::Qr1d => &["input", "output", "grid-size", "levels", "tol"],
        Command::Equiv => &["input", "output", "grid-size", "tol"],
        Command::Check => &["input", "tol"],
        Command::Gen => &["output", "preset", "n", "seed"],
    }
}

fn given(args: &RunArgs) -> Vec<&'static str> {
    let mut out = Vec::new();
    let mut mark = |on: bool, name: &'static str| {
        if on {
            out.push(name);
        }
    };
    mark(args.input.is_some(), "input");
    mark(args.output.is_some(), "output");
    mark(args.grid_size.is_some(), "grid-size");
    mark(args.backend.is_some(), "backend");
    mark(args.epsilon.is_some(), "epsilon");
    mark(args.tol.is_some(), "tol");
    mark(args.levels.is_some(), "levels");
    mark(args.seed.is_some(), "seed");
    mark(!args.x_query.is_empty(), "x-query");
    mark(args.preset.is_some(), "preset");
    mark(args.n.is_some(), "n");
    mark(args.max_iter.is_some(), "max-iter");
    out
}

fn parse_point(s: &str) -> Result<Vec<f64>, VqrError> {
    if s.trim().is_empty() {
        return Ok(Vec::new());
    }
    s.split(',')
        .map(|v| {
            v.trim()
                .parse::<f64>()
                .map_err(|_| VqrError::Validation(format!("bad --x-query value '{v}'")))
        })
        .collect()
}

impl RunConfig {
    pub fn from_args(command: Command, args: RunArgs) -> Result<Self, VqrError> {
        let allow = allowed(command);
        let cmd_name = format!("{command:?}").to_lowercase();
        if let Some(flag) = given(&args).into_iter().find(|f| !allow.contains(f)) {
            return Err(VqrError::Validation(format!("--{flag} is not accepted by {cmd_name}")));
        }
        let backend = match args.backend {
            Some(BackendArg::Entropic) => Backend::Entropic,
            _ => Backend::Exact,
        };
        if backend == Backend::Exact && args.epsilon.is_some() {
            return Err(VqrError::Validation("--epsilon requires --backend entropic".into()));
        }
        if args.levels.is_some() && args.grid_size.is_some() {
            return Err(VqrError::Validation("--levels and --grid-size are mutually exclusive".into()));
        }
        if backend == Backend::Exact && args.max_iter.is_some() {
            return Err(VqrError::Validation("--max-iter requires --backend entropic".into()));
        }
        if let Some(e) = args.epsilon {
            if !(e > 0.0 && e.is_finite()) {
                return Err(VqrError::Validation(format!("--epsilon must be positive, got {e}")));
            }
        }
        if let Some(t) = args.tol {
            if !(t > 0.0 && t.is_finite()) {
                return Err(VqrError::Validation(format!("--tol must be positive, got {t}")));
            }
        }
        let default_grid = match command {
            Command::Equiv => DEFAULT_EQUIV_GRID_SIZE,
            Command::Qr1d => DEFAULT_QR_LEVELS,
            _ => DEFAULT_GRID_SIZE,
        };
        let grid_size = args.grid_size.unwrap_or(default_grid);
        if grid_size == 0 {
            return Err(VqrError::Validation("--grid-size must be at least 1".into()));
        }
        if command != Command::Gen && args.input.is_none() {
            return Err(VqrError::Validation(format!("{cmd_name} requires --input")));
        }
        let n = args.n.unwrap_or(DEFAULT_GEN_N);
        if n == 0 {
            return Err(VqrError::Validation("--n must be at least 1".into()));
        }
        let x_query = args
            .x_query
            .iter()
            .map(|s| parse_point(s))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(Self {
            command,
            input: args.input,
            output: args.output.unwrap_or_else(|| PathBuf::from(".")),
            grid_size,
            backend,
            epsilon: args.epsilon,
            tol: args.tol,
            levels: args.levels,
            seed: args.seed.unwrap_or(0),
            x_query,
            preset: args.preset.unwrap_or_else(|| "specified".into()),
            n,
            max_iter: args.max_iter.unwrap_or(DEFAULT_MAX_ITER),
        })
    }

    pub fn solver_tol(&self) -> f64 {
        self.tol.unwrap_or(match (self.command, self.backend) {
            (Command::Equiv, _) => DEFAULT_EQUIV_TOL,
            (_, Backend::Entropic) => DEFAULT_ENTROPIC_TOL,
            _ => DEFAULT_EXACT_TOL,
        })
    }
}
