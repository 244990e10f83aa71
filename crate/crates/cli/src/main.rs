use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use clap::{Parser, Subcommand};
use impulsive_cli::commands::{self, CliError};
use impulsive_cli::montecarlo::{self, Init};
use impulsive_cli::report::{self, RunReport};
use impulsive_cli::{parse_scenario, sweep};

#[derive(Parser)]
#[command(name = "impulsive", version, about = "Fuel-optimal impulsive maneuver planning")]
struct Cli {
    /// Worker threads for parallel sections; all cores when unset.
    #[arg(long, global = true, env = "IMPULSIVE_THREADS")]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Plan the scenario and print the JSON run report.
    Solve {
        scenario: PathBuf,
        /// Write the report here instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Maneuver table CSV.
        #[arg(long)]
        maneuvers: Option<PathBuf>,
        /// Override the scenario's initial candidate scheme.
        #[arg(long, value_enum)]
        init: Option<Init>,
    },
    /// Lower bounds from random dual directions and the target direction.
    LowerBound {
        scenario: PathBuf,
        #[arg(long, default_value_t = 100)]
        samples: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Plan many random targets and summarize iteration counts.
    Montecarlo {
        scenario: PathBuf,
        #[arg(long, default_value_t = 1000)]
        count: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, value_enum, default_value_t = Init::Six)]
        init: Init,
        /// Per-case CSV.
        #[arg(long)]
        csv: Option<PathBuf>,
    },
    /// Planner run time against grid size.
    Sweep {
        scenario: PathBuf,
        #[arg(long, value_delimiter = ',', default_values_t = sweep::DEFAULT_SIZES)]
        sizes: Vec<usize>,
        /// Random targets per grid size; the slowest is reported.
        #[arg(long, default_value_t = 10)]
        cases: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        csv: Option<PathBuf>,
    },
    /// Time the planner against the naive indirect and direct solvers.
    Compare {
        scenario: PathBuf,
        #[arg(long, default_value_t = 20)]
        reps: usize,
        /// Directions used to approximate smooth unit sets in the direct LP.
        #[arg(long, default_value_t = 162)]
        facets: usize,
    },
    /// Support profile `p_j(t)` CSV on the full grid.
    Profile {
        scenario: PathBuf,
        /// Use the dual direction of an earlier run report instead of solving.
        #[arg(long)]
        report: Option<PathBuf>,
        #[arg(long)]
        csv: Option<PathBuf>,
    },
}

fn create(path: &Path) -> anyhow::Result<BufWriter<File>> {
    Ok(BufWriter::new(
        File::create(path).with_context(|| format!("cannot create {}", path.display()))?,
    ))
}

fn sink(path: Option<&Path>) -> anyhow::Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(create(p)?),
        None => Box::new(io::stdout().lock()),
    })
}

fn emit_json<T: serde::Serialize>(path: Option<&Path>, value: &T) -> anyhow::Result<()> {
    let mut out = sink(path)?;
    serde_json::to_writer_pretty(&mut out, value)?;
    writeln!(out)?;
    out.flush()?;
    Ok(())
}

fn run(cli: Cli) -> Result<(), CliError> {
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .context("cannot configure the thread pool")?;
    }
    match cli.command {
        Command::Solve {
            scenario,
            out,
            maneuvers,
            init,
        } => {
            let s = parse_scenario(&scenario)?;
            let r = commands::solve(&s, init)?;
            emit_json(out.as_deref(), &r)?;
            if let Some(path) = maneuvers {
                report::write_maneuvers_csv(create(&path)?, &r).context("cannot write maneuvers")?;
            }
            commands::check_certificate(&r)
        }
        Command::LowerBound {
            scenario,
            samples,
            seed,
        } => {
            let s = parse_scenario(&scenario)?;
            emit_json(None, &commands::bound(&s, samples, seed)?)?;
            Ok(())
        }
        Command::Montecarlo {
            scenario,
            count,
            seed,
            init,
            csv,
        } => {
            let s = parse_scenario(&scenario)?;
            let built = s.build()?;
            let config = init.apply(built.config.clone());
            let cases = montecarlo::run(&built.problem, &config, seed, count);
            if let Some(path) = csv {
                montecarlo::write_csv(create(&path)?, &cases).context("cannot write cases")?;
            }
            let summary = montecarlo::summarize(init, seed, &cases);
            emit_json(None, &summary)?;
            if summary.failures > 0 {
                return Err(CliError::Solver(format!(
                    "{} of {count} cases failed",
                    summary.failures
                )));
            }
            Ok(())
        }
        Command::Sweep {
            scenario,
            sizes,
            cases,
            seed,
            csv,
        } => {
            let s = parse_scenario(&scenario)?;
            let rows = sweep::run(&s, &sizes, cases, seed)?;
            sweep::write_csv(sink(csv.as_deref())?, &rows).context("cannot write sweep")?;
            Ok(())
        }
        Command::Compare { scenario, reps, facets } => {
            let s = parse_scenario(&scenario)?;
            emit_json(None, &commands::compare(&s, reps, facets)?)?;
            Ok(())
        }
        Command::Profile { scenario, report, csv } => {
            let s = parse_scenario(&scenario)?;
            let lambda = match report {
                Some(path) => {
                    let text =
                        std::fs::read_to_string(&path).with_context(|| format!("cannot read {}", path.display()))?;
                    let r: RunReport = serde_json::from_str(&text).context("invalid run report")?;
                    Some(r.lambda)
                }
                None => None,
            };
            let rows = commands::profile(&s, lambda)?;
            report::write_profile_csv(sink(csv.as_deref())?, &rows).context("cannot write profile")?;
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
