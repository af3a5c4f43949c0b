//! Command-line front end. Every subcommand except `transform` without `-o`
//! prints exactly one JSON object on stdout.

use std::ffi::OsString;
use std::io::Write;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use serde_json::json;
use thiserror::Error;

use crate::analysis::{ridge_point, roofline_bound, tight_bound, FaceAnalysis, IntensityEstimate};
use crate::autotune::{tune, Cost, SearchSpace, TuneResult};
use crate::cache_sim::{simulate, CacheConfig, TrafficReport, DEFAULT_LINE_ELEMS};
use crate::codegen::emit_c;
use crate::executor::{execute, init_grid, verify_bitwise, ExecOptions, ExecReport};
use crate::ir::{build_canonical_nest, Schedule};
use crate::model::{parse_spec, IterationSpace, MachineProfile, StencilSpec, TilePlan};
use crate::transforms::{build_variant, check_legality, Variant};

/// 20 MB of f32.
pub const DEFAULT_CACHE_ELEMS: usize = 5_242_880;

#[derive(Debug, Error)]
enum CliError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{path}: {0}", path = .1.display())]
    Parse(crate::model::ParseError, PathBuf),
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Other(Box<dyn std::error::Error + Send + Sync>),
}

fn other(e: impl std::error::Error + Send + Sync + 'static) -> CliError {
    CliError::Other(Box::new(e))
}

#[derive(Debug, Parser)]
#[command(
    name = "stencil-tiler",
    version,
    about = "Stencil loop-nest tiling, verification and analysis"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Emit C for a schedule.
    Transform {
        #[command(flatten)]
        plan: PlanArgs,
        /// Write the C source here and print a JSON summary instead.
        #[arg(short = 'o', long = "output")]
        output: Option<PathBuf>,
    },
    /// Execute a schedule with the interpreter.
    Run {
        #[command(flatten)]
        plan: PlanArgs,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Compare a schedule bit for bit against the canonical nest.
    Verify {
        #[command(flatten)]
        plan: PlanArgs,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Run parallel loops backwards in the transformed schedule.
        #[arg(long)]
        reverse_parallel: bool,
    },
    /// Estimate arithmetic intensity and the roofline bound for a plan.
    Analyze {
        #[command(flatten)]
        plan: PlanArgs,
        #[arg(long, default_value_t = DEFAULT_CACHE_ELEMS)]
        cache_elems: usize,
        /// Peak GFlop/s and bandwidth GB/s, e.g. `262.01,17.3`.
        #[arg(long, value_delimiter = ',')]
        profile: Option<Vec<f64>>,
    },
    /// Search tile sizes.
    Tune {
        spec: PathBuf,
        #[arg(long, value_enum, default_value_t = CostKind::Traffic)]
        cost: CostKind,
        #[arg(long, value_enum, default_value_t = Variant::Time)]
        mode: Variant,
        #[arg(long)]
        skew: Option<usize>,
        #[arg(long, default_value_t = DEFAULT_CACHE_ELEMS)]
        cache_elems: usize,
        #[arg(long, default_value_t = DEFAULT_LINE_ELEMS)]
        line_elems: usize,
        #[arg(long, default_value_t = 1)]
        trials: usize,
    },
    /// Replay a schedule through an LRU cache.
    Simulate {
        #[command(flatten)]
        plan: PlanArgs,
        #[arg(long, default_value_t = DEFAULT_CACHE_ELEMS)]
        cache_elems: usize,
        #[arg(long, default_value_t = DEFAULT_LINE_ELEMS)]
        line_elems: usize,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum CostKind {
    Traffic,
    Time,
}

#[derive(Debug, Args)]
struct PlanArgs {
    spec: PathBuf,
    #[arg(long, value_enum, default_value_t = Variant::None)]
    mode: Variant,
    /// Spatial tile sizes, outermost first. Defaults to the full extents.
    #[arg(long, value_delimiter = ',')]
    tiles: Option<Vec<usize>>,
    #[arg(long, default_value_t = 1)]
    time_tile: usize,
    /// Defaults to the smallest legal factor.
    #[arg(long)]
    skew: Option<usize>,
}

struct Loaded {
    spec: StencilSpec,
    space: IterationSpace,
    plan: TilePlan,
    mode: Variant,
}

fn load(path: &PathBuf) -> Result<(StencilSpec, IterationSpace), CliError> {
    let text = std::fs::read_to_string(path).map_err(|source| CliError::Io {
        path: path.clone(),
        source,
    })?;
    parse_spec(&text).map_err(|e| CliError::Parse(e, path.clone()))
}

impl PlanArgs {
    fn load(&self) -> Result<Loaded, CliError> {
        let (spec, space) = load(&self.spec)?;
        let tiles = self
            .tiles
            .clone()
            .unwrap_or_else(|| space.extents().to_vec());
        let plan = TilePlan::new(
            self.skew.unwrap_or(spec.min_skew_factor()),
            self.time_tile,
            tiles,
        );
        plan.check(spec.ndims())
            .map_err(|e| CliError::Usage(e.to_string()))?;
        if self.mode == Variant::Time {
            check_legality(&spec, &plan).map_err(|e| CliError::Usage(e.to_string()))?;
        }
        Ok(Loaded {
            spec,
            space,
            plan,
            mode: self.mode,
        })
    }
}

impl Loaded {
    fn schedule(&self) -> Result<Schedule, CliError> {
        build_variant(&self.spec, &self.space, self.mode, &self.plan)
            .map_err(|e| CliError::Usage(e.to_string()))
    }
}

#[derive(Serialize)]
struct RunOutput {
    mode: Variant,
    plan: TilePlan,
    #[serde(flatten)]
    report: ExecReport,
}

#[derive(Serialize)]
struct SimulateOutput {
    mode: Variant,
    plan: TilePlan,
    cache: CacheConfig,
    #[serde(flatten)]
    report: TrafficReport,
}

#[derive(Serialize)]
struct Roofline {
    peak_gflops: f64,
    bandwidth_gbs: f64,
    ridge_point: f64,
    ai: f64,
    bound_gflops: f64,
}

#[derive(Serialize)]
struct AnalyzeOutput {
    plan: TilePlan,
    cache_elems: usize,
    estimate: IntensityEstimate,
    faces: FaceAnalysis,
    #[serde(skip_serializing_if = "Option::is_none")]
    roofline: Option<Roofline>,
}

#[derive(Serialize)]
struct TuneOutput {
    mode: Variant,
    cost: &'static str,
    #[serde(flatten)]
    result: TuneResult,
}

enum Outcome {
    Json(serde_json::Value),
    Text(String),
    VerifyFailed(serde_json::Value),
}

fn to_json(v: impl Serialize) -> Result<serde_json::Value, CliError> {
    serde_json::to_value(v).map_err(other)
}

fn dispatch(command: Command) -> Result<Outcome, CliError> {
    match command {
        Command::Transform { plan, output } => {
            let l = plan.load()?;
            let src = emit_c(&l.schedule()?, &l.spec, &l.space).map_err(other)?;
            match output {
                None => Ok(Outcome::Text(src)),
                Some(path) => {
                    std::fs::write(&path, &src).map_err(|source| CliError::Io {
                        path: path.clone(),
                        source,
                    })?;
                    Ok(Outcome::Json(json!({
                        "mode": l.mode,
                        "plan": l.plan,
                        "output": path,
                        "bytes": src.len(),
                    })))
                }
            }
        }
        Command::Run { plan, seed } => {
            let l = plan.load()?;
            let schedule = l.schedule()?;
            let grid = init_grid(&l.spec, &l.space, seed, schedule.required_slots(&l.spec))
                .map_err(other)?;
            let (_, report) = execute(&schedule, &l.spec, &l.space, grid, ExecOptions::default())
                .map_err(other)?;
            Ok(Outcome::Json(to_json(RunOutput {
                mode: l.mode,
                plan: l.plan,
                report,
            })?))
        }
        Command::Verify {
            plan,
            seed,
            reverse_parallel,
        } => {
            let l = plan.load()?;
            let reference = Schedule::from(build_canonical_nest(&l.spec, &l.space));
            let candidate = l.schedule()?;
            let run = |s: &Schedule, reverse_parallel: bool| {
                let grid = init_grid(&l.spec, &l.space, seed, s.required_slots(&l.spec))?;
                execute(s, &l.spec, &l.space, grid, ExecOptions { reverse_parallel })
                    .map(|(g, _)| g)
            };
            let a = run(&reference, false).map_err(other)?;
            let b = run(&candidate, reverse_parallel).map_err(other)?;
            let equal = verify_bitwise(&a, &b, l.spec.time_depth()).map_err(other)?;
            let out = json!({ "bitwise_equal": equal, "mode": l.mode, "plan": l.plan });
            Ok(if equal {
                Outcome::Json(out)
            } else {
                Outcome::VerifyFailed(out)
            })
        }
        Command::Analyze {
            plan,
            cache_elems,
            profile,
        } => {
            let l = plan.load()?;
            if cache_elems == 0 {
                return Err(CliError::Usage("--cache-elems must be at least 1".into()));
            }
            let bound = tight_bound(&l.spec, &l.space, &l.plan, cache_elems).map_err(other)?;
            let roofline = match profile {
                None => None,
                Some(p) if p.len() != 2 => {
                    return Err(CliError::Usage(
                        "--profile takes two values: peak,bandwidth".into(),
                    ));
                }
                Some(p) => {
                    let profile = MachineProfile::new(p[0], p[1], cache_elems)
                        .map_err(|e| CliError::Usage(e.to_string()))?;
                    let ai = bound.estimate.ai_tight_tt;
                    Some(Roofline {
                        peak_gflops: profile.peak_gflops,
                        bandwidth_gbs: profile.bandwidth_gbs,
                        ridge_point: ridge_point(&profile),
                        ai,
                        bound_gflops: roofline_bound(&profile, ai),
                    })
                }
            };
            Ok(Outcome::Json(to_json(AnalyzeOutput {
                plan: l.plan,
                cache_elems,
                estimate: bound.estimate,
                faces: bound.faces,
                roofline,
            })?))
        }
        Command::Tune {
            spec,
            cost,
            mode,
            skew,
            cache_elems,
            line_elems,
            trials,
        } => {
            let (spec, space) = load(&spec)?;
            let mut search = SearchSpace::default_for(&spec, &space);
            search.variant = mode;
            search.trials = trials.max(1);
            if let Some(s) = skew {
                search.skew = s;
            }
            let (cost_fn, name) = match cost {
                CostKind::Traffic => {
                    let cache = CacheConfig::new(cache_elems, line_elems)
                        .map_err(|e| CliError::Usage(e.to_string()))?;
                    (Cost::SimTraffic(cache), "traffic")
                }
                CostKind::Time => (Cost::WallTime, "time"),
            };
            let result = tune(&spec, &space, &search, &cost_fn).map_err(|e| match e {
                crate::autotune::TuneError::Illegal(e) => CliError::Usage(e.to_string()),
                e => other(e),
            })?;
            Ok(Outcome::Json(to_json(TuneOutput {
                mode,
                cost: name,
                result,
            })?))
        }
        Command::Simulate {
            plan,
            cache_elems,
            line_elems,
        } => {
            let l = plan.load()?;
            let cache = CacheConfig::new(cache_elems, line_elems)
                .map_err(|e| CliError::Usage(e.to_string()))?;
            let report = simulate(&l.schedule()?, &l.spec, &l.space, &cache).map_err(other)?;
            Ok(Outcome::Json(to_json(SimulateOutput {
                mode: l.mode,
                plan: l.plan,
                cache,
                report,
            })?))
        }
    }
}

/// Runs the command line in `args` (program name first) and returns the
/// process exit code: 0 on success, 1 when verification finds a mismatch,
/// 2 on any usage, input or runtime error.
pub fn run<I, T>(args: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let text = e.render().to_string();
            return if e.use_stderr() {
                let _ = write!(stderr, "{text}");
                2
            } else {
                let _ = write!(stdout, "{text}");
                0
            };
        }
    };
    let print = |out: &mut dyn Write, v: &serde_json::Value| {
        let _ = writeln!(out, "{v}");
    };
    match dispatch(cli.command) {
        Ok(Outcome::Json(v)) => {
            print(stdout, &v);
            0
        }
        Ok(Outcome::Text(s)) => {
            let _ = write!(stdout, "{s}");
            0
        }
        Ok(Outcome::VerifyFailed(v)) => {
            print(stdout, &v);
            let _ = writeln!(
                stderr,
                "error: transformed schedule differs from the canonical nest"
            );
            1
        }
        Err(e) => {
            let _ = writeln!(stderr, "error: {e}");
            2
        }
    }
}
