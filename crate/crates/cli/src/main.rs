//! `sgpts`: run, verify and summarise batch Thompson-sampling experiments.

use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use anyhow::Context;
use clap::{Args, Parser, Subcommand};
use rayon::prelude::*;

use sgpts::benchmarks;
use sgpts::config::RunConfig;
use sgpts::engine::{self, RunLog, RunSetup};
use sgpts::verify::{self, Fault, Level, VerifyOptions};
use sgpts::Error;

/// Exit status for bad usage or an invalid config.
const EXIT_USAGE: u8 = 2;

#[derive(Parser)]
#[command(name = "sgpts", version, about = "Batch Thompson sampling with sparse GP posteriors")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    config: PathBuf,
    /// Comma-separated run seeds.
    #[arg(long, default_value = "0", value_delimiter = ',')]
    seeds: Vec<u64>,
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// `key=value`, applied after the config file. Repeatable.
    #[arg(long = "override")]
    overrides: Vec<String>,
}

#[derive(Subcommand)]
enum Command {
    /// One run log per seed plus a summary.
    Run(RunArgs),
    /// Run the self-check suites.
    Verify {
        #[arg(long, default_value = "quick")]
        level: Level,
        /// Deliberately break a component to confirm the suites notice.
        #[arg(long, value_parser = ["sigma-clamp"])]
        inject_fault: Option<String>,
    },
    /// Regret bound next to the empirical regret of completed runs in `--out`.
    Bound(RunArgs),
    /// The configured run against random search at the same budget.
    Bench(RunArgs),
    /// Re-derive a benchmark's optimum by probing and local refinement.
    Certify {
        #[arg(long)]
        objective: String,
        #[arg(long, default_value_t = 100_000)]
        probes: usize,
        #[arg(long, default_value_t = 1000)]
        restarts: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

/// A failure with its exit status.
struct Failure {
    code: u8,
    error: anyhow::Error,
}

impl From<anyhow::Error> for Failure {
    fn from(error: anyhow::Error) -> Self {
        Failure { code: 1, error }
    }
}

impl From<Error> for Failure {
    fn from(error: Error) -> Self {
        Failure { code: 1, error: error.into() }
    }
}

fn usage(error: impl Into<anyhow::Error>) -> Failure {
    Failure { code: EXIT_USAGE, error: error.into() }
}

fn load_setup(args: &RunArgs) -> Result<RunSetup, Failure> {
    let text = fs::read_to_string(&args.config)
        .with_context(|| format!("cannot read config {}", args.config.display()))
        .map_err(usage)?;
    let mut cfg = RunConfig::parse(&text)
        .map_err(|e| usage(anyhow::anyhow!("{}: {e}", args.config.display())))?;
    cfg.apply_overrides(&args.overrides).map_err(usage)?;
    RunSetup::from_config(cfg).map_err(usage)
}

fn thread_pool(setup: &RunSetup) -> anyhow::Result<rayon::ThreadPool> {
    let mut n = setup.config.threads.unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()));
    if let Ok(cap) = std::env::var("SGPTS_THREADS") {
        let cap: usize = cap.parse().context("SGPTS_THREADS must be a positive integer")?;
        n = n.min(cap.max(1));
    }
    Ok(rayon::ThreadPoolBuilder::new().num_threads(n).build()?)
}

fn write_log(dir: &Path, stem: &str, log: &RunLog) -> anyhow::Result<()> {
    let mut w = BufWriter::new(File::create(dir.join(format!("{stem}.csv")))?);
    log.write_csv(&mut w)?;
    w.flush()?;
    let mut w = BufWriter::new(File::create(dir.join(format!("{stem}_steps.csv")))?);
    log.write_steps_csv(&mut w)?;
    w.flush()?;
    Ok(())
}

struct SeedOutcome {
    seed: u64,
    log: Option<RunLog>,
    seconds: f64,
    error: Option<String>,
}

fn run_seeds(setup: &RunSetup, seeds: &[u64], dir: &Path) -> anyhow::Result<Vec<SeedOutcome>> {
    let pool = thread_pool(setup)?;
    let outcomes: Vec<SeedOutcome> = pool.install(|| {
        seeds
            .par_iter()
            .map(|&seed| {
                let start = Instant::now();
                let (log, error) = match engine::run_sgp_ts(setup, seed) {
                    Ok(log) => (Some(log), None),
                    Err(Error::RunAborted { step, source, partial }) => {
                        (Some(*partial), Some(format!("aborted at step {step}: {source}")))
                    }
                    Err(e) => (None, Some(e.to_string())),
                };
                SeedOutcome { seed, log, seconds: start.elapsed().as_secs_f64(), error }
            })
            .collect()
    });
    for o in &outcomes {
        if let Some(log) = &o.log {
            write_log(dir, &format!("run_{}", o.seed), log)?;
        }
    }
    Ok(outcomes)
}

fn report_failures(outcomes: &[SeedOutcome]) -> Result<(), Failure> {
    let failed: Vec<String> = outcomes
        .iter()
        .filter_map(|o| o.error.as_ref().map(|e| format!("seed {}: {e}", o.seed)))
        .collect();
    if failed.is_empty() {
        Ok(())
    } else {
        Err(anyhow::anyhow!("{} of {} seeds failed:\n  {}", failed.len(), outcomes.len(), failed.join("\n  ")).into())
    }
}

fn cmd_run(args: &RunArgs) -> Result<(), Failure> {
    let setup = load_setup(args)?;
    fs::create_dir_all(&args.out).with_context(|| format!("cannot create {}", args.out.display()))?;
    let outcomes = run_seeds(&setup, &args.seeds, &args.out)?;
    let mut summary = String::from("seed,status,cum_regret,simple_regret\n");
    let mut timing = String::from("seed,wall_seconds\n");
    for o in &outcomes {
        let (cum, simple) = o.log.as_ref().map_or((f64::NAN, f64::NAN), |l| {
            (engine::strict_regret(l, l.f_star), l.steps.last().map_or(f64::NAN, |s| s.simple_regret))
        });
        let status = if o.error.is_some() { "failed" } else { "ok" };
        summary.push_str(&format!("{},{status},{cum},{simple}\n", o.seed));
        timing.push_str(&format!("{},{:.3}\n", o.seed, o.seconds));
    }
    fs::write(args.out.join("summary.csv"), summary).context("cannot write summary")?;
    fs::write(args.out.join("timing.csv"), timing).context("cannot write timing")?;
    report_failures(&outcomes)
}

fn cmd_bench(args: &RunArgs) -> Result<(), Failure> {
    let setup = load_setup(args)?;
    fs::create_dir_all(&args.out).with_context(|| format!("cannot create {}", args.out.display()))?;
    let outcomes = run_seeds(&setup, &args.seeds, &args.out)?;
    let budget = setup.config.horizon * setup.config.batch;
    let mut table = String::from("seed,sgpts_simple_regret,random_simple_regret,sgpts_cum_regret,random_cum_regret\n");
    for o in &outcomes {
        let Some(log) = &o.log else { continue };
        let rs = benchmarks::random_search(&setup.objective, setup.noise, budget, o.seed)?;
        write_log(&args.out, &format!("random_{}", o.seed), &rs)?;
        let last = |l: &RunLog| l.steps.last().map_or(f64::NAN, |s| s.simple_regret);
        table.push_str(&format!(
            "{},{},{},{},{}\n",
            o.seed,
            last(log),
            last(&rs),
            engine::strict_regret(log, log.f_star),
            engine::strict_regret(&rs, rs.f_star)
        ));
    }
    fs::write(args.out.join("bench.csv"), &table).context("cannot write bench table")?;
    print!("{table}");
    report_failures(&outcomes)
}

fn cmd_bound(args: &RunArgs) -> Result<(), Failure> {
    let setup = load_setup(args)?;
    for &seed in &args.seeds {
        let run = args.out.join(format!("run_{seed}.csv"));
        let steps = args.out.join(format!("run_{seed}_steps.csv"));
        let open = |p: &Path| File::open(p).map(BufReader::new).with_context(|| format!("missing run log {}", p.display()));
        let log = RunLog::read_csv(open(&run)?, open(&steps)?).context("cannot read run log")?;
        let cum: Vec<(usize, f64)> = log.steps.iter().map(|s| s.t).zip(log.cumulative_by_step()).collect();
        let rows = engine::bound_rows(&log.steps, &cum, &log.dataset()?, &setup.kernel, setup.tau, setup.config.rkhs_norm)
            .with_context(|| format!("seed {seed}"))?;
        let mut out = String::from("t,cum_regret,bound\n");
        for (t, c, b) in rows {
            out.push_str(&format!("{t},{c},{b}\n"));
        }
        fs::write(args.out.join(format!("bound_{seed}.csv")), out).context("cannot write bound")?;
    }
    Ok(())
}

fn cmd_verify(level: Level, fault: Option<&str>) -> Result<(), Failure> {
    let fault = fault.map(|_| Fault::SigmaClamp);
    let results = verify::run_all(&VerifyOptions { level, fault });
    print!("{}", verify::format_table(&results));
    let failed: Vec<&str> = results.iter().filter(|r| !r.passed).map(|r| r.name).collect();
    if failed.is_empty() {
        Ok(())
    } else {
        Err(anyhow::anyhow!("failing suites: {}", failed.join(", ")).into())
    }
}

fn cmd_certify(objective: &str, probes: usize, restarts: usize, seed: u64) -> Result<(), Failure> {
    let bench = benchmarks::by_name(objective).map_err(usage)?;
    let c = benchmarks::certify(&bench, probes, restarts, seed)?;
    println!("objective,stored,best_probe,best_refined,dominates");
    println!("{},{},{},{},{}", bench.name, c.stored, c.best_probe, c.best_refined, c.dominates);
    println!("argmax: {:?}", c.argmax);
    if !c.dominates {
        return Err(anyhow::anyhow!("stored optimum {} is below the refined value {}", c.stored, c.best_refined).into());
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Run(a) => cmd_run(a),
        Command::Bench(a) => cmd_bench(a),
        Command::Bound(a) => cmd_bound(a),
        Command::Verify { level, inject_fault } => cmd_verify(*level, inject_fault.as_deref()),
        Command::Certify { objective, probes, restarts, seed } => cmd_certify(objective, *probes, *restarts, *seed),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {:#}", f.error);
            ExitCode::from(f.code)
        }
    }
}
