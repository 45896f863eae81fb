//! Command-line flags and `key = value` config files.
//!
//! A config file is spliced into the argument list as `--key value` pairs
//! placed before the real flags. Every subcommand lets a later occurrence of
//! a flag override an earlier one, so explicit flags win over the file.

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use hjb_core::OperatorMode;
use serde::Serialize;

use crate::Failure;

const CSV_HELP: &str = "\
Output files (all CSV files carry a header row):
  manifest.json   config echo, crate versions, seed and thread count
  chi.csv         x[,y],value        corrector chi on the grid (ergodic)
  ladder.csv      delta,c,residual,iterations,u_ref,closure_slack,bound_holds (ergodic)
  u.csv           x[,y],value        discounted solution (discounted)
  snapshots.csv   t,x[,y],value      stored time slices in long format (parabolic)
  margins.csv     condition,radius,slack   worst slack per sampled radius (check)
  plot.gp         gnuplot script for the CSV output (with --gnuplot)";

#[derive(Parser, Debug)]
#[command(name = "hjb", version, about = "Ergodic HJB and Pucci toolkit: condition checks, discounted, ergodic and parabolic runs")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Check structural conditions on sampled radii; exit 0 iff all hold.
    #[command(args_override_self = true, after_help = CSV_HELP)]
    Check(CheckArgs),
    /// Solve one discounted problem by policy iteration.
    #[command(args_override_self = true, after_help = CSV_HELP)]
    Discounted(DiscountedArgs),
    /// Vanishing-discount ladder: critical value c and corrector chi.
    #[command(args_override_self = true, after_help = CSV_HELP)]
    Ergodic(ErgodicArgs),
    /// March the Cauchy problem and report long-time tail statistics.
    #[command(args_override_self = true, after_help = CSV_HELP)]
    Parabolic(ParabolicArgs),
    /// Monte Carlo estimate of a discounted value at one point.
    #[command(args_override_self = true, after_help = CSV_HELP)]
    Oracle(OracleArgs),
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Check(_) => "check",
            Command::Discounted(_) => "discounted",
            Command::Ergodic(_) => "ergodic",
            Command::Parabolic(_) => "parabolic",
            Command::Oracle(_) => "oracle",
        }
    }

    pub fn common(&self) -> &CommonArgs {
        match self {
            Command::Check(a) => &a.common,
            Command::Discounted(a) => &a.common,
            Command::Ergodic(a) => &a.common,
            Command::Parabolic(a) => &a.common,
            Command::Oracle(a) => &a.common,
        }
    }

    pub fn to_json(&self) -> serde_json::Value {
        let v = match self {
            Command::Check(a) => serde_json::to_value(a),
            Command::Discounted(a) => serde_json::to_value(a),
            Command::Ergodic(a) => serde_json::to_value(a),
            Command::Parabolic(a) => serde_json::to_value(a),
            Command::Oracle(a) => serde_json::to_value(a),
        };
        v.expect("argument structs serialize")
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum ClosureKind {
    Barrier,
    Frozen,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Differencing {
    Hybrid,
    Upwind,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Inner {
    Direct,
    GaussSeidel,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum BoundaryKind {
    /// Boundary nodes keep the initial datum.
    Initial,
    /// Boundary nodes follow the closure.
    Closure,
}

/// Problem, grid, closure and output settings shared by every subcommand.
#[derive(Args, Clone, Debug, Serialize)]
pub struct CommonArgs {
    /// Problem preset: paper-example, ou-1d, ou-linear, pucci-ou, strong-drift, constant-cost.
    #[arg(long, default_value = "paper-example")]
    pub preset: String,
    /// Tabulated coefficients replacing the preset closures
    /// (CSV columns node_index,alpha_index,a_11[,a_12,a_22],b_1[,b_2],c0,l).
    #[arg(long)]
    pub coefficients: Option<PathBuf>,
    /// Number of controls in the coefficient CSV.
    #[arg(long, default_value_t = 1)]
    pub controls: usize,
    /// Box half-width L (default: preset value).
    #[arg(long = "grid-l")]
    pub grid_l: Option<f64>,
    /// Nodes per axis, odd (default: preset value).
    #[arg(long = "grid-n")]
    pub grid_n: Option<usize>,
    /// Space dimension, 1 or 2.
    #[arg(long, default_value_t = 1)]
    pub dim: usize,
    /// Operator mode: hjb-inf, hjb-sup, pucci-minus, pucci-plus (default: preset value).
    #[arg(long)]
    pub mode: Option<OperatorMode>,
    /// Ellipticity lower bound lambda.
    #[arg(long)]
    pub lambda: Option<f64>,
    /// Ellipticity upper bound Lambda.
    #[arg(long = "big-lambda")]
    pub big_lambda: Option<f64>,
    /// Boundary closure of the box (default: preset value).
    #[arg(long, value_enum)]
    pub closure: Option<ClosureKind>,
    /// Slope of the quadratic barrier closure.
    #[arg(long = "h-bar")]
    pub h_bar: Option<f64>,
    /// Closure anchor: `centre` or a number.
    #[arg(long)]
    pub anchor: Option<String>,
    /// Drift differencing of the scheme.
    #[arg(long, value_enum, default_value = "hybrid")]
    pub differencing: Differencing,
    /// Output directory (created if missing).
    #[arg(long, default_value = "hjb-out")]
    pub out: PathBuf,
    /// Master seed for randomized components.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Worker threads; 1 gives bit-for-bit reproducible runs.
    #[arg(long, default_value_t = 1)]
    pub threads: usize,
    /// Config file of `key = value` lines; explicit flags take precedence.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Also write a gnuplot script `plot.gp`.
    #[arg(long)]
    pub gnuplot: bool,
}

/// Policy-iteration settings.
#[derive(Args, Clone, Debug, Serialize)]
pub struct SolverArgs {
    /// Residual tolerance of each discounted solve.
    #[arg(long, default_value_t = 1e-9)]
    pub tol: f64,
    /// Policy-iteration cap per solve.
    #[arg(long = "max-iter", default_value_t = 200)]
    pub max_iter: usize,
    /// Inner linear solver.
    #[arg(long, value_enum, default_value = "direct")]
    pub inner: Inner,
    /// Relaxation factor of the Gauss-Seidel inner solver.
    #[arg(long, default_value_t = 1.0)]
    pub omega: f64,
}

#[derive(Args, Clone, Debug, Serialize)]
pub struct CheckArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    /// Comma-separated condition ids: C4, C4bis, OU-form, C5, C6.5, C4QL, C10,
    /// C10strong, C10ou, C10extrastrong, C10lessstrong.
    #[arg(long, value_delimiter = ',', default_value = "C4")]
    pub conditions: Vec<String>,
    /// M of C10strong / C10ou.
    #[arg(long)]
    pub m: Option<f64>,
    /// beta of C10ou.
    #[arg(long)]
    pub beta: Option<f64>,
    /// rho of C10extrastrong / C10lessstrong.
    #[arg(long)]
    pub rho: Option<f64>,
    /// gamma of the OU form.
    #[arg(long)]
    pub gamma: Option<f64>,
    /// Mean of the OU form, comma-separated coordinates.
    #[arg(long, value_delimiter = ',')]
    pub mean: Option<Vec<f64>>,
    /// |c| bound (default: the sampled sup of |l|).
    #[arg(long = "c-abs")]
    pub c_abs: Option<f64>,
    /// Sup norm of l (default: sampled on the grid).
    #[arg(long = "l-inf")]
    pub l_inf: Option<f64>,
    /// Tolerance of conditions stated as limits.
    #[arg(long = "cond-tol", default_value_t = 1e-9)]
    pub cond_tol: f64,
    /// Number of directions sampled per radius in 2D.
    #[arg(long, default_value_t = 64)]
    pub directions: usize,
    /// Number of sampled radii L·j/count (default: one per grid layer).
    #[arg(long)]
    pub radii: Option<usize>,
}

#[derive(Args, Clone, Debug, Serialize)]
pub struct DiscountedArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    #[command(flatten)]
    pub solver: SolverArgs,
    /// Discount factor.
    #[arg(long, default_value_t = 0.1)]
    pub delta: f64,
}

#[derive(Args, Clone, Debug, Serialize)]
pub struct ErgodicArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    #[command(flatten)]
    pub solver: SolverArgs,
    /// First discount of the ladder.
    #[arg(long, default_value_t = 0.2)]
    pub delta0: f64,
    /// Ratio between successive discounts, in (0, 1).
    #[arg(long = "ladder-factor", default_value_t = 0.5)]
    pub ladder_factor: f64,
    /// Number of ladder steps.
    #[arg(long = "ladder-len", default_value_t = 7)]
    pub ladder_len: usize,
    /// Reference point for chi, comma-separated coordinates (default: origin).
    #[arg(long = "x-ref", value_delimiter = ',', allow_negative_numbers = true)]
    pub x_ref: Option<Vec<f64>>,
    /// Growth exponents beta of the corrector diagnostics.
    #[arg(long = "beta-list", value_delimiter = ',', default_value = "0.5,1,1.5")]
    pub beta_list: Vec<f64>,
}

#[derive(Args, Clone, Debug, Serialize)]
pub struct ParabolicArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    /// Initial datum: inverse-quadratic, sin-gauss, tanh, cos-gauss, constant:<k> (default: preset value).
    #[arg(long)]
    pub h0: Option<String>,
    /// Time step (default: 0.9 of the monotonicity bound).
    #[arg(long)]
    pub dt: Option<f64>,
    /// Final time.
    #[arg(long = "t-final", default_value_t = 40.0)]
    pub t_final: f64,
    /// Tail window for the sup/inf statistics (default: T_final/4).
    #[arg(long = "tail-window")]
    pub tail_window: Option<f64>,
    /// Number of stored snapshots besides t = 0.
    #[arg(long, default_value_t = 8)]
    pub snapshots: usize,
    /// Boundary treatment (default: preset value).
    #[arg(long, value_enum)]
    pub boundary: Option<BoundaryKind>,
}

#[derive(Args, Clone, Debug, Serialize)]
pub struct OracleArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    /// Discount factor.
    #[arg(long, default_value_t = 0.2)]
    pub delta: f64,
    /// Starting point, comma-separated coordinates (default: origin).
    #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
    pub x: Option<Vec<f64>>,
    /// Number of sample paths.
    #[arg(long, default_value_t = 4096)]
    pub paths: usize,
    /// Euler-Maruyama step.
    #[arg(long = "mc-dt", default_value_t = 1e-2)]
    pub mc_dt: f64,
}

/// Parses `key = value` lines into `--key value` tokens. `#` starts a
/// comment; `true`/`false` values toggle switches.
pub fn config_tokens(text: &str, source: &Path) -> Result<Vec<String>, Failure> {
    let mut tokens = Vec::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line.split_once('=').ok_or_else(|| {
            Failure::Config(format!("{}:{}: expected `key = value`, got `{line}`", source.display(), lineno + 1))
        })?;
        let key = key.trim().trim_start_matches("--").replace('_', "-");
        let value = value.trim();
        if key.is_empty() || key == "config" {
            return Err(Failure::Config(format!("{}:{}: invalid key `{key}`", source.display(), lineno + 1)));
        }
        match value {
            "true" => tokens.push(format!("--{key}")),
            "false" => {}
            _ => tokens.push(format!("--{key}={value}")),
        }
    }
    Ok(tokens)
}

fn config_path(argv: &[String]) -> Option<PathBuf> {
    let mut it = argv.iter();
    while let Some(a) = it.next() {
        if a == "--config" {
            return it.next().map(PathBuf::from);
        }
        if let Some(p) = a.strip_prefix("--config=") {
            return Some(PathBuf::from(p));
        }
    }
    None
}

/// Splices the config file (if any) after the subcommand name.
pub fn expand_config(mut argv: Vec<String>) -> Result<Vec<String>, Failure> {
    if argv.len() < 2 || argv[1].starts_with('-') {
        return Ok(argv);
    }
    if let Some(path) = config_path(&argv[2..]) {
        let text = std::fs::read_to_string(&path)
            .map_err(|e| Failure::Config(format!("cannot read config file {}: {e}", path.display())))?;
        let tokens = config_tokens(&text, &path)?;
        argv.splice(2..2, tokens);
    }
    Ok(argv)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(args: &[&str]) -> Cli {
        Cli::try_parse_from(args).unwrap()
    }

    #[test]
    fn config_lines_become_flags() {
        let t = config_tokens("# comment\ngrid_n = 41\n\npreset = ou-1d  # trailing\ngnuplot = true\n", Path::new("x")).unwrap();
        assert_eq!(t, ["--grid-n=41", "--preset=ou-1d", "--gnuplot"]);
        assert!(config_tokens("nonsense", Path::new("x")).is_err());
        assert!(config_tokens("config = other", Path::new("x")).is_err());
    }

    #[test]
    fn later_flags_override_earlier_ones() {
        let cli = parse(&["hjb", "ergodic", "--grid-n=41", "--preset", "ou-1d", "--grid-n", "61"]);
        assert_eq!(cli.command.common().grid_n, Some(61));
        assert_eq!(cli.command.common().preset, "ou-1d");
    }

    #[test]
    fn config_file_is_overridden_by_flags() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.cfg");
        std::fs::write(&path, "grid-n = 41\ndelta0 = 0.4\n").unwrap();
        let argv: Vec<String> = ["hjb", "ergodic", "--config", path.to_str().unwrap(), "--grid-n", "81"]
            .iter()
            .map(|s| s.to_string())
            .collect();
        let cli = Cli::try_parse_from(expand_config(argv).unwrap()).unwrap();
        let Command::Ergodic(a) = cli.command else { panic!("wrong subcommand") };
        assert_eq!(a.common.grid_n, Some(81));
        assert_eq!(a.delta0, 0.4);
    }

    #[test]
    fn coordinates_accept_negative_numbers() {
        let cli = parse(&["hjb", "ergodic", "--x-ref", "-1.5"]);
        let Command::Ergodic(a) = cli.command else { panic!("wrong subcommand") };
        assert_eq!(a.x_ref, Some(vec![-1.5]));
    }
}
