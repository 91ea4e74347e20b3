use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn kpflow(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_kpflow")).args(args).output().expect("spawn kpflow")
}

fn scratch(tag: &str) -> PathBuf {
    let d = std::env::temp_dir().join(format!("kpflow-cli-{tag}-{}", std::process::id()));
    let _ = std::fs::remove_dir_all(&d);
    std::fs::create_dir_all(&d).unwrap();
    d
}

fn write_config(dir: &Path, body: &str) -> String {
    let p = dir.join("exp.conf");
    std::fs::write(&p, body).unwrap();
    p.to_string_lossy().into_owned()
}

const SMALL: &str = "traffic.flows=30\nseeds=0,1\npatterns=random\nbpso.particles=30\nbpso.iterations=5\n";

#[test]
fn run_then_table_in_every_format() {
    let dir = scratch("formats");
    let cfg = write_config(&dir, SMALL);
    let out = dir.join("out");
    let o = kpflow(&["run", "--config", &cfg, "--out", out.to_str().unwrap(), "--jobs", "2", "--dump-topology"]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(out.join("topology.json").is_file());
    assert!(out.join("table.csv").is_file());
    let runs = std::fs::read_dir(out.join("runs")).unwrap().count();
    assert_eq!(runs, 2 * 2 * 2, "csv and json per cell");

    let csv = kpflow(&["table", "--in", out.to_str().unwrap(), "--format", "csv"]);
    assert_eq!(csv.status.code(), Some(0));
    let text = String::from_utf8(csv.stdout).unwrap();
    assert!(text.starts_with("scheduler,pattern,metric,mean,stddev,n\n"));
    assert!(text.contains("ecmp,random,plr_percent,"));

    let json = kpflow(&["table", "--in", out.to_str().unwrap(), "--format", "json"]);
    let rows: serde_json::Value = serde_json::from_slice(&json.stdout).unwrap();
    assert_eq!(rows.as_array().unwrap().len(), text.lines().count() - 1);

    let plain = kpflow(&["table", "--in", out.to_str().unwrap(), "--format", "text"]);
    assert!(String::from_utf8(plain.stdout).unwrap().lines().next().unwrap().starts_with("scheduler"));
    std::fs::remove_dir_all(&dir).unwrap();
}

#[test]
fn overrides_apply_after_the_file() {
    let dir = scratch("set");
    let cfg = write_config(&dir, SMALL);
    let out = dir.join("out");
    let o = kpflow(&["run", "--config", &cfg, "--set", "seeds=5", "--set", "scheduler.kind=ecmp", "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(out.join("runs/ecmp_random_seed5.csv").is_file());
    assert_eq!(std::fs::read_dir(out.join("runs")).unwrap().count(), 2);
    std::fs::remove_dir_all(&dir).unwrap();
}

#[test]
fn config_errors_exit_with_one() {
    let dir = scratch("cfgerr");
    let cfg = write_config(&dir, "seeds=\n");
    let o = kpflow(&["run", "--config", &cfg]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("seeds"));

    let cfg = write_config(&dir, "topo.kk=4\n");
    assert_eq!(kpflow(&["run", "--config", &cfg]).status.code(), Some(1));
    let missing = dir.join("nope.conf");
    assert_eq!(kpflow(&["run", "--config", missing.to_str().unwrap()]).status.code(), Some(1));
    let cfg = write_config(&dir, SMALL);
    assert_eq!(kpflow(&["run", "--config", &cfg, "--set", "novalue"]).status.code(), Some(1));
    std::fs::remove_dir_all(&dir).unwrap();
}

#[test]
fn runtime_errors_exit_with_two() {
    let dir = scratch("rterr");
    // stride by the host count sends every flow to itself
    let cfg = write_config(&dir, &format!("{SMALL}patterns=stride:16\n"));
    let o = kpflow(&["run", "--config", &cfg, "--out", dir.join("out").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2), "{}", String::from_utf8_lossy(&o.stderr));
    let empty = dir.join("empty");
    std::fs::create_dir_all(&empty).unwrap();
    assert_eq!(kpflow(&["table", "--in", empty.to_str().unwrap(), "--format", "csv"]).status.code(), Some(2));
    std::fs::remove_dir_all(&dir).unwrap();
}

#[test]
fn bench_bpso_reports_ratios() {
    let o = kpflow(&["bench-bpso", "--instances", "5", "--n-items", "12"]);
    assert_eq!(o.status.code(), Some(0));
    let line = String::from_utf8(o.stdout).unwrap();
    assert!(line.contains("instances=5 n_items=12"));
    assert!(line.contains("infeasible=0 above_optimum=0"));
}
