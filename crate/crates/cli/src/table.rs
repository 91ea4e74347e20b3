//! Per-(scheduler, pattern) aggregates over seeds.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::io::Write;

use kpflow_core::sim::RunSummary;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TableRow {
    pub scheduler: String,
    pub pattern: String,
    pub metric: String,
    pub mean: f64,
    pub stddev: f64,
    pub n: usize,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ComparisonTable {
    pub rows: Vec<TableRow>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TableFormat {
    Csv,
    Json,
    Text,
}

impl std::str::FromStr for TableFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "csv" => Ok(TableFormat::Csv),
            "json" => Ok(TableFormat::Json),
            "text" => Ok(TableFormat::Text),
            other => Err(format!("unknown table format {other:?} (expected csv, json or text)")),
        }
    }
}

/// One finished run, identified by its sweep coordinates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunMeta {
    pub scheduler: String,
    pub pattern: String,
    pub seed: u64,
}

/// Metric values of one run, in table order. `None` when the run has no such flows.
pub fn metrics(summary: &RunSummary) -> Vec<(String, Option<f64>)> {
    let mut m = vec![
        ("plr_percent".to_owned(), Some(summary.plr_percent)),
        ("mf_fct_s".to_owned(), summary.mean_mf_fct_s),
        ("ef_fct_s".to_owned(), summary.mean_ef_fct_s),
        ("goodput".to_owned(), Some(summary.goodput)),
        ("packet_size_bytes".to_owned(), Some(summary.mean_packet_bytes)),
    ];
    for p in &summary.mf_timeline {
        m.push((format!("mf_completed_at_{}s", p.time_s), Some(p.completed_mf as f64)));
    }
    m
}

/// Mean and sample (n - 1) standard deviation; a single value has zero spread.
pub fn mean_stddev(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

/// Groups runs by `(scheduler, pattern)` in first-seen order and aggregates each metric.
pub fn aggregate(runs: &[(RunMeta, RunSummary)]) -> ComparisonTable {
    let mut order: Vec<(String, String)> = Vec::new();
    let mut cells: BTreeMap<(String, String), Vec<&RunSummary>> = BTreeMap::new();
    for (meta, summary) in runs {
        let key = (meta.scheduler.clone(), meta.pattern.clone());
        if !cells.contains_key(&key) {
            order.push(key.clone());
        }
        cells.entry(key).or_default().push(summary);
    }
    let mut rows = Vec::new();
    for key in order {
        let summaries = &cells[&key];
        let mut names: Vec<String> = Vec::new();
        let mut values: BTreeMap<String, Vec<f64>> = BTreeMap::new();
        for s in summaries {
            for (name, v) in metrics(s) {
                if !names.contains(&name) {
                    names.push(name.clone());
                }
                if let Some(v) = v {
                    values.entry(name).or_default().push(v);
                }
            }
        }
        for name in names {
            let Some(xs) = values.get(&name) else { continue };
            let (mean, stddev) = mean_stddev(xs);
            rows.push(TableRow { scheduler: key.0.clone(), pattern: key.1.clone(), metric: name, mean, stddev, n: xs.len() });
        }
    }
    ComparisonTable { rows }
}

impl ComparisonTable {
    pub fn get(&self, scheduler: &str, pattern: &str, metric: &str) -> Option<&TableRow> {
        self.rows.iter().find(|r| r.scheduler == scheduler && r.pattern == pattern && r.metric == metric)
    }

    pub fn patterns(&self) -> Vec<String> {
        let mut out: Vec<String> = Vec::new();
        for r in &self.rows {
            if !out.contains(&r.pattern) {
                out.push(r.pattern.clone());
            }
        }
        out
    }

    /// Reads the CSV form back. Floats go through `str::parse`, which round-trips the
    /// shortest representation exactly; csv's serde path can be off by an ulp.
    pub fn from_csv<R: std::io::Read>(input: R) -> Result<Self, String> {
        let mut rows = Vec::new();
        for (i, rec) in csv::Reader::from_reader(input).records().enumerate() {
            let rec = rec.map_err(|e| e.to_string())?;
            let field = |j: usize| rec.get(j).ok_or_else(|| format!("row {}: missing column {j}", i + 1));
            let num = |j: usize| field(j)?.parse::<f64>().map_err(|e| format!("row {}: {e}", i + 1));
            rows.push(TableRow {
                scheduler: field(0)?.to_owned(),
                pattern: field(1)?.to_owned(),
                metric: field(2)?.to_owned(),
                mean: num(3)?,
                stddev: num(4)?,
                n: field(5)?.parse().map_err(|e| format!("row {}: {e}", i + 1))?,
            });
        }
        Ok(Self { rows })
    }
}

/// Serializes the table with columns `scheduler,pattern,metric,mean,stddev,n`.
pub fn emit_table<W: Write>(table: &ComparisonTable, format: TableFormat, mut out: W) -> std::io::Result<()> {
    match format {
        TableFormat::Csv => {
            let mut w = csv::Writer::from_writer(out);
            w.write_record(["scheduler", "pattern", "metric", "mean", "stddev", "n"])?;
            for r in &table.rows {
                w.write_record([&r.scheduler, &r.pattern, &r.metric, &r.mean.to_string(), &r.stddev.to_string(), &r.n.to_string()])?;
            }
            w.flush()
        }
        TableFormat::Json => {
            serde_json::to_writer_pretty(&mut out, table)?;
            writeln!(out)
        }
        TableFormat::Text => {
            let header = ["scheduler", "pattern", "metric", "mean", "stddev", "n"].map(str::to_owned);
            let body: Vec<[String; 6]> = table
                .rows
                .iter()
                .map(|r| {
                    [
                        r.scheduler.clone(),
                        r.pattern.clone(),
                        r.metric.clone(),
                        format!("{:.6}", r.mean),
                        format!("{:.6}", r.stddev),
                        r.n.to_string(),
                    ]
                })
                .collect();
            let mut widths = header.clone().map(|h| h.len());
            for row in &body {
                for (w, c) in widths.iter_mut().zip(row) {
                    *w = (*w).max(c.len());
                }
            }
            let mut text = String::new();
            for row in std::iter::once(&header).chain(&body) {
                let cols: Vec<String> = row
                    .iter()
                    .zip(widths)
                    .enumerate()
                    .map(|(i, (c, w))| if i < 3 { format!("{c:<w$}") } else { format!("{c:>w$}") })
                    .collect();
                writeln!(text, "{}", cols.join("  ").trim_end()).expect("write to string");
            }
            out.write_all(text.as_bytes())
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use kpflow_core::sim::TimelinePoint;

    fn summary(plr: f64, mf: Option<f64>) -> RunSummary {
        RunSummary {
            flows: 10,
            mf_flows: 9,
            ef_flows: 1,
            packets_sent: 100,
            packets_delivered: 99,
            plr_percent: plr,
            goodput: 0.99,
            mean_packet_bytes: 1400.0,
            mean_fct_s: Some(0.1),
            mean_mf_fct_s: mf,
            mean_ef_fct_s: Some(1.0),
            makespan_s: 1.0,
            mf_timeline: vec![TimelinePoint { time_s: 0.1, completed_mf: 4 }],
        }
    }

    fn meta(s: &str, p: &str, seed: u64) -> RunMeta {
        RunMeta { scheduler: s.into(), pattern: p.into(), seed }
    }

    #[test]
    fn sample_stddev() {
        let (m, s) = mean_stddev(&[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(m, 2.5);
        assert!((s - (5.0f64 / 3.0).sqrt()).abs() < 1e-15);
        assert_eq!(mean_stddev(&[7.0]), (7.0, 0.0));
    }

    #[test]
    fn single_cell_has_one_row_per_metric() {
        let t = aggregate(&[(meta("ecmp", "random", 0), summary(1.0, Some(0.2)))]);
        assert_eq!(t.rows.len(), 6);
        assert!(t.rows.iter().all(|r| r.n == 1 && r.stddev == 0.0));
        assert_eq!(t.get("ecmp", "random", "mf_completed_at_0.1s").unwrap().mean, 4.0);
    }

    #[test]
    fn missing_class_is_skipped() {
        let runs = [(meta("a", "p", 0), summary(1.0, None)), (meta("a", "p", 1), summary(3.0, Some(0.5)))];
        let t = aggregate(&runs);
        assert_eq!(t.get("a", "p", "mf_fct_s").unwrap().n, 1);
        let plr = t.get("a", "p", "plr_percent").unwrap();
        assert_eq!((plr.mean, plr.n), (2.0, 2));
    }

    #[test]
    fn csv_and_json_round_trip() {
        let runs: Vec<_> = (0..3)
            .flat_map(|s| {
                [
                    (meta("ecmp", "random", s), summary(s as f64 / 3.0, Some(0.1 * s as f64))),
                    (meta("kp", "stride-1", s), summary(0.7, None)),
                ]
            })
            .collect();
        let t = aggregate(&runs);
        let mut csv_out = Vec::new();
        emit_table(&t, TableFormat::Csv, &mut csv_out).unwrap();
        assert!(csv_out.starts_with(b"scheduler,pattern,metric,mean,stddev,n\n"));
        assert_eq!(ComparisonTable::from_csv(csv_out.as_slice()).unwrap(), t);
        let mut json_out = Vec::new();
        emit_table(&t, TableFormat::Json, &mut json_out).unwrap();
        assert_eq!(serde_json::from_slice::<ComparisonTable>(&json_out).unwrap(), t);
        let mut text = Vec::new();
        emit_table(&t, TableFormat::Text, &mut text).unwrap();
        assert_eq!(String::from_utf8(text).unwrap().lines().count(), t.rows.len() + 1);
    }
}
