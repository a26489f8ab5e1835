use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn unimpc(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_unimpc")).args(args).output().unwrap()
}

fn configs() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

fn write_config(dir: &Path, text: &str) -> String {
    let p = dir.join("scenario.toml");
    fs::write(&p, text).unwrap();
    p.display().to_string()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

const SHORT: &str = "name = \"short\"\nduration = 50\n";

#[test]
fn run_writes_log_metrics_and_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), SHORT);
    let out = dir.path().join("out");
    let o = unimpc(&["run", "--config", &cfg, "--out", s(&out), "--quiet"]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(o.stdout.is_empty());
    let log = fs::read_to_string(out.join("log.csv")).unwrap();
    assert_eq!(log.lines().count(), 51);
    assert!(log.starts_with("k,t,x,y,theta"));
    let metrics = fs::read_to_string(out.join("metrics.csv")).unwrap();
    assert!(metrics.starts_with("name,parameter,value,xy_error_sum"));
    let manifest = fs::read_to_string(out.join("manifest.toml")).unwrap();
    assert!(manifest.contains("command = \"run\""));
    assert!(manifest.contains("horizon = 10"), "defaults are materialized");
    for f in ["trajectory.csv", "errors.csv", "costs.csv", "inputs.csv"] {
        assert!(out.join("figures").join(f).exists(), "{f}");
    }
}

#[test]
fn unknown_subcommand_exits_2() {
    let o = unimpc(&["fly"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(!o.stderr.is_empty());
}

#[test]
fn missing_config_flag_exits_2() {
    assert_eq!(unimpc(&["run"]).status.code(), Some(2));
}

#[test]
fn invalid_config_exits_2_and_names_the_field() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "[mpc]\nhorizon = 0\n");
    let o = unimpc(&["run", "--config", &cfg, "--out", s(&dir.path().join("o"))]);
    assert_eq!(o.status.code(), Some(2));
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("mpc.horizon") && err.contains("horizon must be ≥ 1"), "{err}");
    assert!(!dir.path().join("o").exists());
}

#[test]
fn syntax_error_reports_line() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "duration = 5\n[mpc\n");
    let o = unimpc(&["run", "--config", &cfg]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("line 2"));
}

#[test]
fn help_and_version_exit_0() {
    assert_eq!(unimpc(&["--help"]).status.code(), Some(0));
    assert_eq!(unimpc(&["--version"]).status.code(), Some(0));
}

#[test]
fn manifest_rerun_is_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), &format!("{SHORT}seed = 3\n[initial]\njitter = 0.02\n"));
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    assert_eq!(unimpc(&["run", "--config", &cfg, "--out", s(&a), "--quiet"]).status.code(), Some(0));
    let m = a.join("manifest.toml");
    assert_eq!(unimpc(&["run", "--manifest", s(&m), "--out", s(&b), "--quiet"]).status.code(), Some(0));
    assert_eq!(fs::read(a.join("log.csv")).unwrap(), fs::read(b.join("log.csv")).unwrap());
    // a seed override changes the jittered start
    let c = dir.path().join("c");
    unimpc(&["run", "--manifest", s(&m), "--out", s(&c), "--seed", "4", "--quiet"]);
    assert_ne!(fs::read(a.join("log.csv")).unwrap(), fs::read(c.join("log.csv")).unwrap());
}

#[test]
fn sweep_writes_one_log_per_point() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), &format!("{SHORT}[sweep]\nhorizon = [3, 6]\n"));
    let out = dir.path().join("out");
    let o = unimpc(&["sweep", "--config", &cfg, "--out", s(&out), "--jobs", "2", "--quiet"]);
    assert_eq!(o.status.code(), Some(0));
    assert!(out.join("short_n3_log.csv").exists() && out.join("short_n6_log.csv").exists());
    let table = fs::read_to_string(out.join("sweep.csv")).unwrap();
    assert_eq!(table.lines().count(), 3);
}

#[test]
fn sweep_without_grid_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), SHORT);
    assert_eq!(unimpc(&["sweep", "--config", &cfg, "--out", s(&dir.path().join("o"))]).status.code(), Some(2));
}

#[test]
fn compare_lqr_writes_both_logs() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), SHORT);
    let out = dir.path().join("out");
    assert_eq!(unimpc(&["compare-lqr", "--config", &cfg, "--out", s(&out), "--quiet"]).status.code(), Some(0));
    for f in ["mpc_log.csv", "lqr_log.csv", "comparison.csv", "metrics.csv", "manifest.toml"] {
        assert!(out.join(f).exists(), "{f}");
    }
}

#[test]
fn terminal_set_table_has_a_row_per_step() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "duration = 40\n");
    let out = dir.path().join("out");
    let o = unimpc(&["terminal-set", "--config", &cfg, "--out", s(&out)]);
    assert_eq!(o.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&o.stdout).contains("vertex check failures 0"));
    let table = fs::read_to_string(out.join("terminal_set.csv")).unwrap();
    let mut lines = table.lines();
    assert_eq!(lines.next().unwrap().split(',').count(), 2 + 24 + 1);
    assert!(lines.all(|l| l.ends_with(",true")));
}

#[test]
fn dump_figures_rebuilds_from_a_log() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), SHORT);
    let out = dir.path().join("out");
    unimpc(&["run", "--config", &cfg, "--out", s(&out), "--quiet"]);
    let figs = dir.path().join("figs");
    let o = unimpc(&["dump-figures", "--log", s(&out.join("log.csv")), "--out", s(&figs), "--quiet"]);
    assert_eq!(o.status.code(), Some(0));
    for f in ["trajectory.csv", "errors.csv", "costs.csv", "inputs.csv"] {
        assert_eq!(
            fs::read(figs.join(f)).unwrap(),
            fs::read(out.join("figures").join(f)).unwrap(),
            "{f}"
        );
    }
    // a file that is not a log
    let bad = dir.path().join("bad.csv");
    fs::write(&bad, "nope\n1,2\n").unwrap();
    assert_eq!(unimpc(&["dump-figures", "--log", s(&bad), "--out", s(&figs)]).status.code(), Some(2));
}

#[test]
fn shipped_configs_are_accepted() {
    for entry in fs::read_dir(configs()).unwrap() {
        let p = entry.unwrap().path();
        let text = fs::read_to_string(&p).unwrap();
        unimpc::config::parse_config(&text).unwrap_or_else(|e| panic!("{}: {e}", p.display()));
    }
}

#[test]
fn library_entry_point_matches_binary() {
    assert_eq!(unimpc_cli::main_with_args(["unimpc", "bogus"]), unimpc_cli::EXIT_CONFIG);
}
