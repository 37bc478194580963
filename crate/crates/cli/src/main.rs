//! `wcet`: run the incremental analyzer or the exhaustive oracle on a
//! program file.

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Duration;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use wcet_core::cache::CacheConfig;
use wcet_core::gen::{random_program, GenConfig};
use wcet_core::hset::{incremental_analysis, Mode, Report, RunOptions, Status};
use wcet_core::ir::{parse_program, print_program, unroll_loops, TransitionSystem};
use wcet_core::lattice::Wcet;
use wcet_core::oracle::{exhaustive_wcet, OracleError, OracleResult, DEFAULT_PATH_CAP};

const EXIT_INPUT: u8 = 1;
const EXIT_BUDGET: u8 = 2;
const EXIT_EXPLOSION: u8 = 3;
const EXIT_BRACKET: u8 = 4;

#[derive(Parser)]
#[command(name = "wcet", version, about = "Anytime incremental WCET analysis")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Refine bounds until exact, within epsilon, or out of budget.
    Analyze {
        program: PathBuf,
        #[command(flatten)]
        run: RunArgs,
        #[command(flatten)]
        cache: CacheArgs,
    },
    /// Enumerate every feasible path (small programs only).
    Oracle {
        program: PathBuf,
        #[command(flatten)]
        cache: CacheArgs,
        #[arg(long, default_value_t = DEFAULT_PATH_CAP)]
        path_cap: u128,
    },
    /// Abstract interpretation alone vs. incremental analysis vs. oracle.
    Compare {
        program: PathBuf,
        #[command(flatten)]
        run: RunArgs,
        #[command(flatten)]
        cache: CacheArgs,
        #[arg(long, default_value_t = DEFAULT_PATH_CAP)]
        path_cap: u128,
    },
    /// Print a random structured program.
    Generate {
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 12)]
        branches: usize,
        #[arg(long, default_value_t = 4)]
        vars: usize,
    },
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum ModeArg {
    Exact,
    Epsilon,
}

#[derive(Args)]
struct RunArgs {
    /// Defaults to epsilon when --epsilon is given, exact otherwise.
    #[arg(long, value_enum)]
    mode: Option<ModeArg>,
    #[arg(long)]
    epsilon: Option<f64>,
    #[arg(long)]
    budget_ms: Option<u64>,
    #[arg(long)]
    max_iterations: Option<usize>,
    /// Write the per-iteration bounds as CSV.
    #[arg(long)]
    log: Option<PathBuf>,
}

#[derive(Args)]
struct CacheArgs {
    #[arg(long, default_value_t = 128)]
    cache_sets: u64,
    #[arg(long, default_value_t = 0)]
    hit_cost: u64,
    #[arg(long, default_value_t = 128)]
    miss_penalty: u64,
}

impl CacheArgs {
    fn config(&self) -> Result<CacheConfig> {
        if self.cache_sets == 0 {
            bail!("--cache-sets must be positive");
        }
        Ok(CacheConfig::new(self.cache_sets, self.hit_cost, self.miss_penalty))
    }
}

impl RunArgs {
    fn options(&self) -> Result<RunOptions> {
        let mode = match (self.mode, self.epsilon) {
            (Some(ModeArg::Exact), Some(_)) => bail!("--epsilon needs --mode epsilon"),
            (Some(ModeArg::Exact), None) | (None, None) => Mode::Exact,
            (_, e) => {
                let e = e.unwrap_or(0.05);
                if !(0.0..=1.0).contains(&e) {
                    bail!("--epsilon must be within [0, 1]");
                }
                Mode::Epsilon(e)
            }
        };
        Ok(RunOptions {
            mode,
            budget: self.budget_ms.map(Duration::from_millis),
            max_iterations: self.max_iterations,
            ..RunOptions::default()
        })
    }
}

#[derive(Serialize)]
struct CsvRow {
    iteration: usize,
    elapsed_ms: f64,
    lower: String,
    upper: String,
    ai_leaves: usize,
    dominated: usize,
}

fn load(path: &Path) -> Result<TransitionSystem> {
    let text = std::fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))?;
    let ts = parse_program(&text).with_context(|| format!("{}", path.display()))?;
    let ts = unroll_loops(&ts).with_context(|| format!("{}", path.display()))?;
    let problems = ts.validate();
    if !problems.is_empty() {
        let list: Vec<String> = problems.iter().map(|d| d.to_string()).collect();
        bail!("{}: {}", path.display(), list.join("; "));
    }
    Ok(ts)
}

fn write_log(path: &Path, report: &Report) -> Result<()> {
    let mut w = csv::Writer::from_path(path).with_context(|| format!("cannot write {}", path.display()))?;
    for row in &report.trace {
        w.serialize(CsvRow {
            iteration: row.iteration,
            elapsed_ms: row.elapsed_ms,
            lower: row.lower.to_string(),
            upper: row.upper.to_string(),
            ai_leaves: row.ai_leaves,
            dominated: row.dominated,
        })?;
    }
    w.flush()?;
    Ok(())
}

fn analyze(ts: &TransitionSystem, run: &RunArgs, cfg: &CacheConfig) -> Result<Report> {
    let report = incremental_analysis(ts, cfg, &run.options()?)?;
    if let Some(path) = &run.log {
        write_log(path, &report)?;
    }
    Ok(report)
}

fn oracle(ts: &TransitionSystem, cfg: &CacheConfig, cap: u128) -> Result<Option<OracleResult>> {
    match exhaustive_wcet(ts, cfg, cap) {
        Ok(r) => Ok(Some(r)),
        Err(e @ OracleError::PathExplosion { .. }) => {
            eprintln!("oracle: {e}");
            Ok(None)
        }
        Err(e) => Err(e.into()),
    }
}

/// `(A - I) / I` as a percentage.
fn improvement(ai: Wcet, inc: Wcet) -> String {
    match (ai, inc) {
        (Wcet::Time(a), Wcet::Time(i)) if i > 0 => {
            let pct = (a as f64 - i as f64) / i as f64 * 100.0;
            if pct.fract() == 0.0 {
                format!("{pct}%")
            } else {
                format!("{pct:.1}%")
            }
        }
        _ => "n/a".into(),
    }
}

fn run(cli: Cli) -> Result<u8> {
    match cli.command {
        Command::Analyze { program, run, cache } => {
            let ts = load(&program)?;
            let r = analyze(&ts, &run, &cache.config()?)?;
            println!("lower={} upper={} exact={}", r.final_lower, r.final_upper, r.exact);
            println!("iterations={}", r.iterations);
            if let Some(p) = &r.worst_path {
                println!("path={}", ts.describe_path(p));
            }
            Ok(match r.status {
                Status::Converged => 0,
                Status::BudgetExhausted => {
                    println!("status=budget-exhausted");
                    EXIT_BUDGET
                }
            })
        }
        Command::Oracle {
            program,
            cache,
            path_cap,
        } => {
            let ts = load(&program)?;
            let Some(r) = oracle(&ts, &cache.config()?, path_cap)? else {
                return Ok(EXIT_EXPLOSION);
            };
            println!("wcet={}", r.wcet);
            if let Some(p) = &r.path {
                println!("path={}", ts.describe_path(p));
            }
            println!("paths={}", r.paths);
            Ok(0)
        }
        Command::Compare {
            program,
            run,
            cache,
            path_cap,
        } => {
            let ts = load(&program)?;
            let cfg = cache.config()?;
            let r = analyze(&ts, &run, &cfg)?;
            println!("ai_upper={}", r.ai_upper);
            println!("lower={} upper={} exact={}", r.final_lower, r.final_upper, r.exact);
            println!("improvement={}", improvement(r.ai_upper, r.final_upper));
            match oracle(&ts, &cfg, path_cap)? {
                None => println!("oracle=skipped"),
                Some(o) => {
                    println!("oracle={}", o.wcet);
                    if !(r.final_lower <= o.wcet && o.wcet <= r.final_upper) {
                        eprintln!(
                            "bounds [{}, {}] do not bracket the oracle",
                            r.final_lower, r.final_upper
                        );
                        return Ok(EXIT_BRACKET);
                    }
                }
            }
            Ok(0)
        }
        Command::Generate { seed, branches, vars } => {
            let cfg = GenConfig {
                max_branches: branches,
                max_vars: vars,
                ..GenConfig::default()
            };
            print!("{}", print_program(&random_program(seed, &cfg)));
            Ok(0)
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            // usage errors are input errors; --help and --version are not
            return ExitCode::from(if e.use_stderr() { EXIT_INPUT } else { 0 });
        }
    };
    match run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(EXIT_INPUT)
        }
    }
}
