//! Argument parsing and command dispatch.

use std::io::Read;
use std::net::{IpAddr, SocketAddr};
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use mogfit_core::pipeline::{FitMode, PipelineRequest, TransformMode};
use mogfit_core::transform::PowerSearchConfig;
use mogfit_core::{Bounds, EmConfig, InitStrategy, QuadratureConfig, SizeSearchConfig, TailPolicy};

use crate::handlers::{self, SplineRequest, ToolError};
use crate::service;

#[derive(Debug, Parser)]
#[command(name = "mogfit", version, about = "Transform univariate distributions and fit Gaussian mixtures")]
pub struct Cli {
    /// Indent the JSON output.
    #[arg(long, global = true)]
    pub pretty: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Fit a mixture, optionally after the optimal transform or with a size search.
    Fit(FitArgs),
    /// Find the optimal power transform.
    Transform(TransformArgs),
    /// Entropy, moments and quartiles of a distribution.
    Analyze(SpecArg),
    /// Build a spline CDF from assessed cumulative points.
    AssessSpline(SplineArgs),
    /// Run the HTTP service.
    Serve(ServeArgs),
}

#[derive(Debug, Args)]
pub struct SpecArg {
    /// Distribution spec JSON; `-` or omitted reads stdin.
    #[arg(long)]
    pub spec: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum TransformChoice {
    None,
    Auto,
}

#[derive(Debug, Args)]
pub struct FitArgs {
    #[command(flatten)]
    pub spec: SpecArg,
    /// A complete pipeline request; replaces every other fit option.
    #[arg(long, conflicts_with_all = ["spec", "m", "fast_two", "k", "kn", "bounds", "transform"])]
    pub request: Option<PathBuf>,
    /// Fit exactly this many components.
    #[arg(long, conflicts_with_all = ["fast_two", "k", "kn"])]
    pub m: Option<usize>,
    /// Two-component moment-matching fit.
    #[arg(long, conflicts_with_all = ["k", "kn"])]
    pub fast_two: bool,
    /// Cost exponent for the size search (with --n).
    #[arg(long, requires = "n", conflicts_with = "kn")]
    pub k: Option<f64>,
    /// Equivalent sample size for the size search.
    #[arg(long)]
    pub n: Option<f64>,
    /// Combined ratio k/n for the size search.
    #[arg(long)]
    pub kn: Option<f64>,
    #[arg(long, default_value_t = 10)]
    pub max_m: usize,
    #[arg(long, default_value_t = 1)]
    pub lookahead: usize,
    /// Geometric prior ratio r in (0, 1) on the mixture size.
    #[arg(long)]
    pub prior_ratio: Option<f64>,
    #[arg(long, value_enum, default_value_t = TransformChoice::None)]
    pub transform: TransformChoice,
    /// Practical bounds `lo,hi`; `hi` may be `inf`.
    #[arg(long, value_parser = parse_bounds)]
    pub bounds: Option<Bounds>,
    /// Round the power to a nearby simple value.
    #[arg(long)]
    pub round_power: bool,
    /// Seeded random initialization.
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub max_iterations: Option<usize>,
}

#[derive(Debug, Args)]
pub struct TransformArgs {
    #[command(flatten)]
    pub spec: SpecArg,
    /// Practical bounds `lo,hi`; `hi` may be `inf`.
    #[arg(long, value_parser = parse_bounds)]
    pub bounds: Option<Bounds>,
    #[arg(long)]
    pub round_power: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum TailChoice {
    Bounded,
    ExponentialTails,
}

#[derive(Debug, Args)]
pub struct SplineArgs {
    /// JSON: `[[x, F], ...]` or `{"points": [...], "n_equiv": .., "tail_policy": ..}`; `-` or omitted reads stdin.
    #[arg(long)]
    pub points: Option<PathBuf>,
    #[arg(long)]
    pub n_equiv: Option<u32>,
    #[arg(long, value_enum)]
    pub tail_policy: Option<TailChoice>,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    #[arg(long, default_value_t = service::DEFAULT_PORT)]
    pub port: u16,
    #[arg(long, default_value = service::DEFAULT_BIND)]
    pub bind: IpAddr,
}

pub fn parse_bounds(s: &str) -> Result<Bounds, String> {
    let (lo, hi) = s.split_once(',').ok_or("bounds take the form lo,hi")?;
    let lo: f64 = lo.trim().parse().map_err(|_| format!("bad lower bound {lo:?}"))?;
    let hi = match hi.trim() {
        "inf" | "+inf" | "infinity" => None,
        other => Some(other.parse::<f64>().map_err(|_| format!("bad upper bound {other:?}"))?),
    };
    Bounds::new(lo, hi).map_err(|e| e.to_string())
}

fn read_input(path: Option<&PathBuf>) -> Result<String, ToolError> {
    let mut text = String::new();
    match path {
        Some(p) if p.as_os_str() != "-" => {
            text = std::fs::read_to_string(p).map_err(|e| ToolError::validation(format!("{}: {e}", p.display())))?;
        }
        _ => {
            std::io::stdin()
                .read_to_string(&mut text)
                .map_err(|e| ToolError::validation(format!("stdin: {e}")))?;
        }
    }
    Ok(text)
}

fn quadrature() -> Result<QuadratureConfig, ToolError> {
    Ok(handlers::quadrature_from_env()?.unwrap_or_default())
}

fn fit_request(args: &FitArgs) -> Result<PipelineRequest, ToolError> {
    if let Some(path) = &args.request {
        return handlers::parse_pipeline(&read_input(Some(path))?, handlers::quadrature_from_env()?.as_ref());
    }
    let quadrature = quadrature()?;
    let spec = handlers::parse_spec(&read_input(args.spec.spec.as_ref())?)?;
    let fit = if let Some(m) = args.m {
        FitMode::Em { m }
    } else if args.fast_two {
        FitMode::FastTwo
    } else {
        let (k, n) = match (args.k, args.n, args.kn) {
            (Some(k), Some(n), None) => (k, n),
            (None, n, Some(kn)) => {
                let n = n.unwrap_or(1.0);
                (kn * n, n)
            }
            _ => {
                return Err(ToolError::validation(
                    "a size search needs --k with --n, or --kn (or choose --m / --fast-two)",
                ))
            }
        };
        let cfg = SizeSearchConfig {
            k,
            n,
            max_m: args.max_m,
            lookahead: args.lookahead,
            geometric_prior_ratio: args.prior_ratio,
        };
        cfg.validate()?;
        FitMode::SizeSearch(cfg)
    };
    let mut em_cfg = EmConfig {
        quadrature,
        ..EmConfig::default()
    };
    if let Some(seed) = args.seed {
        em_cfg.init_strategy = InitStrategy::Random { seed };
    }
    if let Some(it) = args.max_iterations {
        em_cfg.max_iterations = it;
    }
    Ok(PipelineRequest {
        spec,
        bounds: args.bounds,
        transform: match args.transform {
            TransformChoice::None => TransformMode::None,
            TransformChoice::Auto => TransformMode::Auto,
        },
        fit,
        em_cfg,
        round_power: args.round_power,
        power_search: PowerSearchConfig::default(),
    })
}

fn spline_request(args: &SplineArgs) -> Result<SplineRequest, ToolError> {
    let text = read_input(args.points.as_ref())?;
    let mut req = match serde_json::from_str::<Vec<(f64, f64)>>(&text) {
        Ok(points) => SplineRequest {
            points,
            n_equiv: None,
            tail_policy: TailPolicy::default(),
        },
        Err(_) => handlers::parse_spline(&text)?,
    };
    if args.n_equiv.is_some() {
        req.n_equiv = args.n_equiv;
    }
    match args.tail_policy {
        Some(TailChoice::Bounded) => req.tail_policy = TailPolicy::Bounded,
        Some(TailChoice::ExponentialTails) => req.tail_policy = TailPolicy::ExponentialTails,
        None => {}
    }
    Ok(req)
}

/// Output text for a one-shot command.
pub fn execute(cli: &Cli) -> Result<String, ToolError> {
    let pretty = cli.pretty;
    match &cli.command {
        Command::Fit(args) => handlers::pipeline(&fit_request(args)?, pretty),
        Command::Transform(args) => {
            let quad = quadrature()?;
            let spec = handlers::parse_spec(&read_input(args.spec.spec.as_ref())?)?;
            let report = handlers::transform(&spec, args.bounds, args.round_power, &PowerSearchConfig::default(), &quad)?;
            handlers::transform_json(&report, pretty)
        }
        Command::Analyze(args) => {
            let quad = quadrature()?;
            let spec = handlers::parse_spec(&read_input(args.spec.as_ref())?)?;
            handlers::analyze_json(&spec, &quad, pretty)
        }
        Command::AssessSpline(args) => handlers::spline(&spline_request(args)?, pretty),
        Command::Serve(_) => Err(ToolError::validation("serve is not a one-shot command")),
    }
}

/// Runs the command and returns the process exit code.
pub fn run(cli: Cli) -> i32 {
    if let Command::Serve(args) = &cli.command {
        let addr = SocketAddr::new(args.bind, args.port);
        let runtime = match tokio::runtime::Runtime::new() {
            Ok(rt) => rt,
            Err(e) => {
                eprintln!("error: cannot start runtime: {e}");
                return 1;
            }
        };
        return match runtime.block_on(service::serve(addr)) {
            Ok(()) => 0,
            Err(e) => {
                eprintln!("error: {e}");
                1
            }
        };
    }
    match execute(&cli) {
        Ok(out) => {
            print!("{out}");
            0
        }
        Err(e) => {
            eprintln!("{e}");
            e.exit_code()
        }
    }
}
