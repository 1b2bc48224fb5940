use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Parser, Subcommand};
use serde::Serialize;

use relaymatch::baselines::brute_force_optimum;
use relaymatch::harness::{self, Scenario};
use relaymatch::{global_satisfaction, solve, EngineConfig, Error, Market, MatchingClass};

#[derive(Parser)]
#[command(name = "relaymatch", version, about = "Matching-game relay selection experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args)]
struct Common {
    /// Output directory.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Overrides the scenario seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Overrides the matching class (class1, class2, class3).
    #[arg(long)]
    engine: Option<MatchingClass>,
}

#[derive(Subcommand)]
enum Command {
    /// Run one experiment and write its trace and summary.
    Run {
        scenario: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Compare Class II with fixed-quota Class I across network sizes.
    Sweep {
        template: PathBuf,
        #[arg(long, value_delimiter = ',', required = true)]
        sizes: Vec<usize>,
        #[arg(long, default_value_t = 30)]
        reps: usize,
        #[command(flatten)]
        common: Common,
    },
    /// Exhaustive optimum of the scenario's initial market.
    Oracle {
        scenario: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Check a scenario file and report every problem.
    Validate { scenario: PathBuf },
}

#[derive(Serialize)]
struct OracleReport {
    scenario: String,
    seed: u64,
    matching_class: MatchingClass,
    optimum: f64,
    enumerated: u64,
    engine_satisfaction: f64,
    ratio: f64,
    best: relaymatch::Matching,
}

fn load(path: &Path, common: Option<&Common>) -> relaymatch::Result<Scenario> {
    let mut s = harness::load_scenario(path)?;
    if let Some(c) = common {
        if let Some(seed) = c.seed {
            s.seed = seed;
        }
        if let Some(engine) = c.engine {
            s.matching_class = engine;
        }
        s.validate()?;
    }
    Ok(s)
}

fn execute(cli: Cli) -> relaymatch::Result<()> {
    let started = Instant::now();
    match cli.command {
        Command::Run { scenario, common } => {
            let s = load(&scenario, Some(&common))?;
            let output = harness::run_experiment(&s)?;
            for path in harness::write_run(&common.out, &output)? {
                println!("wrote {}", path.display());
            }
            println!(
                "{}: final satisfaction {:.6}, {} matched, {} records",
                s.name, output.summary.final_global_satisfaction, output.summary.final_matched_count, output.summary.records
            );
        }
        Command::Sweep {
            template,
            sizes,
            reps,
            common,
        } => {
            let s = load(&template, Some(&common))?;
            let table = harness::sweep(&s, &sizes, reps)?;
            for path in harness::write_sweep(&common.out, &s.name, &table)? {
                println!("wrote {}", path.display());
            }
            print!("{}", table.to_csv());
        }
        Command::Oracle { scenario, common } => {
            let s = load(&scenario, Some(&common))?;
            let market = Market::build(&s.market_spec()?)?;
            let class = s.matching_class;
            let oracle = brute_force_optimum(&market, class, u128::from(s.oracle_cap)).map_err(|e| e.in_scenario(&s.name))?;
            let config = EngineConfig {
                max_iterations: s.max_search_iterations,
            };
            let engine = global_satisfaction(&market, class, &solve(&market, class, config)?.matching)?.value();
            let report = OracleReport {
                scenario: s.name.clone(),
                seed: s.seed,
                matching_class: class,
                optimum: oracle.optimum,
                enumerated: oracle.enumerated,
                engine_satisfaction: engine,
                ratio: if oracle.optimum > 0.0 { engine / oracle.optimum } else { 1.0 },
                best: oracle.best,
            };
            let path = harness::write_oracle(&common.out, &s.name, &report)?;
            println!("wrote {}", path.display());
            println!(
                "{}: optimum {:.6}, engine {:.6}, {} assignments",
                s.name, report.optimum, report.engine_satisfaction, report.enumerated
            );
        }
        Command::Validate { scenario } => {
            let s = load(&scenario, None)?;
            println!("{}: ok", s.name);
        }
    }
    eprintln!("elapsed {:.3}s", started.elapsed().as_secs_f64());
    Ok(())
}

fn exit_code(err: &Error) -> u8 {
    match err.root() {
        Error::TerminationCap { .. } => 2,
        Error::InstanceTooLarge { .. } => 3,
        _ => 1,
    }
}

fn main() -> ExitCode {
    match execute(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(exit_code(&err))
        }
    }
}
