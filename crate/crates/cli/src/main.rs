use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use kpflow_cli::config::{split_pair, ExperimentConfig};
use kpflow_cli::experiment::{build_topology, dump_topology, run_experiment, table_from_dir};
use kpflow_cli::oracle::bpso_vs_optimum;
use kpflow_cli::table::{emit_table, TableFormat};
use kpflow_cli::{EXIT_CONFIG, EXIT_RUNTIME};
use kpflow_core::bpso::BpsoConfig;

#[derive(Parser)]
#[command(name = "kpflow", version, about = "Knapsack-based flow scheduling experiments on fat-tree networks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a scheduler x pattern x seed sweep.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Override one config key; repeatable.
        #[arg(long = "set", value_name = "KEY=VALUE")]
        set: Vec<String>,
        /// Concurrent sweep cells (defaults to available cores).
        #[arg(long)]
        jobs: Option<usize>,
        /// Also write the topology as JSON.
        #[arg(long)]
        dump_topology: bool,
        /// Output directory, overriding output_dir.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Aggregate persisted run reports into a comparison table.
    Table {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long, default_value = "text")]
        format: TableFormat,
    },
    /// Compare BPSO against the exact optimum on random instances.
    BenchBpso {
        #[arg(long, default_value_t = 50)]
        instances: usize,
        #[arg(long, default_value_t = 20)]
        n_items: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

fn fail(code: i32, msg: impl std::fmt::Display) -> ExitCode {
    eprintln!("kpflow: {msg}");
    ExitCode::from(code as u8)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match cli.command {
        Command::Run { config, set, jobs, dump_topology: dump, out } => {
            let mut overrides = Vec::with_capacity(set.len());
            for s in &set {
                match split_pair(s) {
                    Some(p) => overrides.push(p),
                    None => return fail(EXIT_CONFIG, format!("--set expects key=value, got {s:?}")),
                }
            }
            let mut cfg = match ExperimentConfig::load(&config, &overrides) {
                Ok(c) => c,
                Err(e) => return fail(EXIT_CONFIG, e),
            };
            if let Some(out) = out {
                cfg.output_dir = out;
            }
            let jobs = jobs.unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()));
            if jobs == 0 {
                return fail(EXIT_CONFIG, "--jobs must be at least 1");
            }
            if dump {
                let written = build_topology(&cfg).map_err(Into::into).and_then(|t| dump_topology(&t, &cfg.output_dir));
                if let Err(e) = written {
                    return fail(EXIT_RUNTIME, e);
                }
            }
            match run_experiment(&cfg, jobs, true) {
                Ok(outcome) => {
                    eprintln!(
                        "kpflow: {} runs written to {}",
                        outcome.cells.len(),
                        cfg.output_dir.join(kpflow_cli::experiment::RUNS_DIR).display()
                    );
                    ExitCode::SUCCESS
                }
                Err(e) => fail(EXIT_RUNTIME, e),
            }
        }
        Command::Table { input, format } => match table_from_dir(&input) {
            Ok(table) => match emit_table(&table, format, std::io::stdout().lock()) {
                Ok(()) => ExitCode::SUCCESS,
                Err(e) => fail(EXIT_RUNTIME, e),
            },
            Err(e) => fail(EXIT_RUNTIME, e),
        },
        Command::BenchBpso { instances, n_items, seed } => match bpso_vs_optimum(instances, n_items, seed, &BpsoConfig::default()) {
            Ok(r) => {
                println!(
                    "instances={} n_items={} mean_ratio={:.6} min_ratio={:.6} infeasible={} above_optimum={} elapsed_s={:.3}",
                    r.instances, r.n_items, r.mean_ratio, r.min_ratio, r.infeasible, r.above_optimum, r.elapsed_s
                );
                ExitCode::SUCCESS
            }
            Err(e) => fail(EXIT_RUNTIME, e),
        },
    }
}
