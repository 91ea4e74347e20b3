//! Scheduler × pattern × seed sweeps.

use std::fs;
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use kpflow_core::schedulers::{mix, schedule_workload, ScheduleDecision, SchedulerError, SchedulerKind};
use kpflow_core::sim::{self, RunReport, RunSummary, SimError};
use kpflow_core::topology::{build_fat_tree, Topology, TopologyError};
use kpflow_core::traffic::{generate, Flow, TrafficError, TrafficPattern};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::config::ExperimentConfig;
use crate::table::{aggregate, emit_table, ComparisonTable, RunMeta, TableFormat};

pub const RUNS_DIR: &str = "runs";
pub const TABLE_FILE: &str = "table.csv";
pub const TOPOLOGY_FILE: &str = "topology.json";

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error(transparent)]
    Topology(#[from] TopologyError),
    #[error("{cell}: {source}")]
    Traffic { cell: String, source: TrafficError },
    #[error("{cell}: {source}")]
    Scheduler { cell: String, source: SchedulerError },
    #[error("{cell}: {source}")]
    Sim { cell: String, source: SimError },
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path}: {reason}")]
    BadReport { path: PathBuf, reason: String },
    #[error("no run reports found in {0}")]
    NoReports(PathBuf),
    #[error("thread pool: {0}")]
    Pool(String),
}

/// Sidecar for each per-run CSV: sweep coordinates plus aggregates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunFile {
    #[serde(flatten)]
    pub meta: RunMeta,
    pub timeline_samples_s: Vec<f64>,
    pub summary: RunSummary,
}

/// Everything one sweep cell produced.
#[derive(Debug, Clone)]
pub struct CellResult {
    pub meta: RunMeta,
    pub flows: Vec<Flow>,
    pub decisions: Vec<ScheduleDecision>,
    pub report: RunReport,
}

#[derive(Debug, Clone)]
pub struct ExperimentOutcome {
    pub table: ComparisonTable,
    pub cells: Vec<CellResult>,
}

pub fn cell_name(kind: SchedulerKind, pattern: &TrafficPattern, seed: u64) -> String {
    format!("{}_{}_seed{}", kind, pattern.label(), seed)
}

pub fn build_topology(cfg: &ExperimentConfig) -> Result<Topology, TopologyError> {
    build_fat_tree(cfg.k, cfg.capacities, cfg.topo_loss_rate)
}

/// Runs one cell in memory. Both schedulers see the same workload and loss draws for a seed.
pub fn run_cell(
    cfg: &ExperimentConfig,
    topo: &Topology,
    kind: SchedulerKind,
    pattern: &TrafficPattern,
    seed: u64,
) -> Result<CellResult, ExperimentError> {
    let cell = cell_name(kind, pattern, seed);
    let spec =
        kpflow_core::traffic::WorkloadSpec { pattern: *pattern, rng_seed: mix(&[cfg.workload.rng_seed, seed]), ..cfg.workload.clone() };
    let flows = generate(&spec, topo).map_err(|source| ExperimentError::Traffic { cell: cell.clone(), source })?;

    let mut params = cfg.kp_pso.clone();
    params.bpso.rng_seed = mix(&[params.bpso.rng_seed, seed]);
    params.hash_seed = mix(&[params.hash_seed, seed]);
    let decisions =
        schedule_workload(kind, &flows, topo, &params).map_err(|source| ExperimentError::Scheduler { cell: cell.clone(), source })?;

    let sim_cfg = sim::SimConfig { rng_seed: mix(&[cfg.sim.rng_seed, seed]), ..cfg.sim.clone() };
    let report = sim::run(topo, &flows, &decisions, &sim_cfg).map_err(|source| ExperimentError::Sim { cell, source })?;
    let meta = RunMeta { scheduler: kind.to_string(), pattern: pattern.label(), seed };
    Ok(CellResult { meta, flows, decisions, report })
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> ExperimentError + '_ {
    move |source| ExperimentError::Io { path: path.to_owned(), source }
}

fn write_cell(dir: &Path, cfg: &ExperimentConfig, cell: &CellResult) -> Result<(), ExperimentError> {
    let stem = format!("{}_{}_seed{}", cell.meta.scheduler, cell.meta.pattern, cell.meta.seed);
    let csv_path = dir.join(format!("{stem}.csv"));
    let file = fs::File::create(&csv_path).map_err(io_err(&csv_path))?;
    cell.report
        .write_csv(BufWriter::new(file))
        .map_err(|e| ExperimentError::BadReport { path: csv_path.clone(), reason: e.to_string() })?;

    let json_path = dir.join(format!("{stem}.json"));
    let sidecar =
        RunFile { meta: cell.meta.clone(), timeline_samples_s: cfg.sim.timeline_samples_s.clone(), summary: cell.report.summary.clone() };
    let text = serde_json::to_string_pretty(&sidecar).expect("run file serializes");
    fs::write(&json_path, text + "\n").map_err(io_err(&json_path))
}

/// Runs the sweep on up to `jobs` threads, persisting each cell and the aggregate table.
pub fn run_experiment(cfg: &ExperimentConfig, jobs: usize, persist: bool) -> Result<ExperimentOutcome, ExperimentError> {
    let topo = build_topology(cfg)?;
    let grid: Vec<(SchedulerKind, TrafficPattern, u64)> =
        cfg.schedulers.iter().flat_map(|&k| cfg.patterns.iter().flat_map(move |p| cfg.seeds.iter().map(move |&s| (k, *p, s)))).collect();

    let runs_dir = cfg.output_dir.join(RUNS_DIR);
    if persist {
        fs::create_dir_all(&runs_dir).map_err(io_err(&runs_dir))?;
    }
    let pool = rayon::ThreadPoolBuilder::new().num_threads(jobs.max(1)).build().map_err(|e| ExperimentError::Pool(e.to_string()))?;
    let cells: Vec<CellResult> = pool.install(|| {
        grid.par_iter()
            .map(|(k, p, s)| {
                let cell = run_cell(cfg, &topo, *k, p, *s)?;
                if persist {
                    write_cell(&runs_dir, cfg, &cell)?;
                }
                Ok(cell)
            })
            .collect::<Result<Vec<_>, ExperimentError>>()
    })?;

    let runs: Vec<(RunMeta, RunSummary)> = cells.iter().map(|c| (c.meta.clone(), c.report.summary.clone())).collect();
    let table = aggregate(&runs);
    if persist {
        let path = cfg.output_dir.join(TABLE_FILE);
        let file = fs::File::create(&path).map_err(io_err(&path))?;
        emit_table(&table, TableFormat::Csv, BufWriter::new(file)).map_err(io_err(&path))?;
    }
    Ok(ExperimentOutcome { table, cells })
}

pub fn dump_topology(topo: &Topology, dir: &Path) -> Result<PathBuf, ExperimentError> {
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    let path = dir.join(TOPOLOGY_FILE);
    let text = serde_json::to_string_pretty(&topo.report()).expect("topology report serializes");
    fs::write(&path, text + "\n").map_err(io_err(&path))?;
    Ok(path)
}

/// Rebuilds the comparison table from persisted per-run CSVs, recomputing every aggregate
/// from the flow records rather than trusting the JSON sidecars.
pub fn table_from_dir(dir: &Path) -> Result<ComparisonTable, ExperimentError> {
    let runs_dir = if dir.join(RUNS_DIR).is_dir() { dir.join(RUNS_DIR) } else { dir.to_owned() };
    let mut sidecars: Vec<PathBuf> = fs::read_dir(&runs_dir)
        .map_err(io_err(&runs_dir))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "json"))
        .collect();
    sidecars.sort();
    if sidecars.is_empty() {
        return Err(ExperimentError::NoReports(runs_dir));
    }
    let mut runs = Vec::with_capacity(sidecars.len());
    for json_path in sidecars {
        let bad = |reason: String| ExperimentError::BadReport { path: json_path.clone(), reason };
        let text = fs::read_to_string(&json_path).map_err(io_err(&json_path))?;
        let run: RunFile = serde_json::from_str(&text).map_err(|e| bad(e.to_string()))?;
        let csv_path = json_path.with_extension("csv");
        let file = fs::File::open(&csv_path).map_err(io_err(&csv_path))?;
        let records =
            sim::read_records_csv(file).map_err(|e| ExperimentError::BadReport { path: csv_path.clone(), reason: e.to_string() })?;
        let summary = sim::summarize(&records, &run.timeline_samples_s)
            .map_err(|e| ExperimentError::BadReport { path: csv_path, reason: e.to_string() })?;
        runs.push((run.meta, summary));
    }
    // Sidecar file names sort by scheduler, pattern, then seed as text; restore numeric seed order.
    runs.sort_by(|(a, _), (b, _)| (&a.scheduler, &a.pattern, a.seed).cmp(&(&b.scheduler, &b.pattern, b.seed)));
    Ok(aggregate(&runs))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::{parse_pairs, ExperimentConfig};

    fn small(dir: &Path) -> ExperimentConfig {
        let text = format!(
            "traffic.flows=40\nseeds=0..2\npatterns=random,stride:1\nbpso.particles=40\nbpso.iterations=10\noutput_dir={}\n",
            dir.display()
        );
        ExperimentConfig::from_pairs(&parse_pairs(&text).unwrap()).unwrap()
    }

    fn temp_dir(tag: &str) -> PathBuf {
        let d = std::env::temp_dir().join(format!("kpflow-exp-{tag}-{}", std::process::id()));
        let _ = fs::remove_dir_all(&d);
        d
    }

    #[test]
    fn sweep_writes_one_report_per_cell() {
        let dir = temp_dir("cells");
        let cfg = small(&dir);
        let out = run_experiment(&cfg, 2, true).unwrap();
        assert_eq!(out.cells.len(), 2 * 2 * 2);
        let csvs = fs::read_dir(dir.join(RUNS_DIR)).unwrap().filter(|e| e.as_ref().unwrap().path().extension().unwrap() == "csv").count();
        assert_eq!(csvs, 8);
        assert!(dir.join(TABLE_FILE).is_file());
        fs::remove_dir_all(&dir).unwrap();
    }

    #[test]
    fn table_recomputed_from_raw_reports() {
        let dir = temp_dir("recompute");
        let out = run_experiment(&small(&dir), 3, true).unwrap();
        let again = table_from_dir(&dir).unwrap();
        assert_eq!(again.rows.len(), out.table.rows.len());
        for r in &out.table.rows {
            let g = again.get(&r.scheduler, &r.pattern, &r.metric).unwrap();
            assert_eq!(g.n, r.n);
            assert!((g.mean - r.mean).abs() <= 1e-9 * r.mean.abs().max(1.0), "{} {} {}", r.scheduler, r.pattern, r.metric);
            assert!((g.stddev - r.stddev).abs() <= 1e-9 * r.stddev.abs().max(1.0));
        }
        fs::remove_dir_all(&dir).unwrap();
    }

    #[test]
    fn workloads_shared_across_schedulers() {
        let dir = temp_dir("shared");
        let cfg = small(&dir);
        let topo = build_topology(&cfg).unwrap();
        let p = TrafficPattern::Random;
        let a = run_cell(&cfg, &topo, SchedulerKind::Ecmp, &p, 1).unwrap();
        let b = run_cell(&cfg, &topo, SchedulerKind::SizeKpPso, &p, 1).unwrap();
        assert_eq!(a.flows, b.flows);
        let sent = |c: &CellResult| c.report.records.iter().map(|r| r.bytes_sent).collect::<Vec<_>>();
        assert_eq!(sent(&a), sent(&b));
    }

    #[test]
    fn empty_dir_has_no_reports() {
        let dir = temp_dir("empty");
        fs::create_dir_all(&dir).unwrap();
        assert!(matches!(table_from_dir(&dir), Err(ExperimentError::NoReports(_))));
        fs::remove_dir_all(&dir).unwrap();
    }
}
