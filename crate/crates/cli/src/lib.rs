//! Command-line front end: reads scenario files, runs them, writes CSVs and a manifest.

use std::ffi::OsString;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use thiserror::Error;
use unimpc::config::{parse_file, ConfigError, Resolved, RunManifest};
use unimpc::sim::{
    compute_metrics, figure_bundle, log_to_csv, lqr_comparison, metrics_row, obstacle_tracks_csv, rows_from_csv,
    run_scenario, sweep, terminal_levels, vo_dump_csv, SimError, SimLog, METRICS_HEADER,
};
use unimpc::terminal_set::{vertices_feasible, ConstraintSet};

pub const EXIT_OK: i32 = 0;
pub const EXIT_HALTED: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;

#[derive(Debug, Parser)]
#[command(name = "unimpc", version, about = "LTV MPC for unicycle robots")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Simulate one scenario.
    Run(Common),
    /// Simulate every point of the `[sweep]` grid.
    Sweep(Common),
    /// Run the scenario under MPC and under the unconstrained LQR law.
    CompareLqr(Common),
    /// Offline terminal-level schedule with vertex checks.
    TerminalSet(Common),
    /// Rebuild plot CSVs from an existing log.
    DumpFigures {
        /// A `log.csv` written by `run`.
        #[arg(long)]
        log: PathBuf,
        #[arg(long, default_value = "out")]
        out: PathBuf,
        #[arg(long)]
        quiet: bool,
    },
}

#[derive(Debug, Args)]
pub struct Common {
    /// Scenario file (TOML).
    #[arg(long, conflicts_with = "manifest", required_unless_present = "manifest")]
    pub config: Option<PathBuf>,
    /// Re-run the configuration stored in a manifest.
    #[arg(long)]
    pub manifest: Option<PathBuf>,
    #[arg(long, default_value = "out")]
    pub out: PathBuf,
    /// Worker threads for sweeps, 0 = all cores.
    #[arg(long, default_value_t = 0)]
    pub jobs: usize,
    /// Overrides the seed in the file.
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub quiet: bool,
}

#[derive(Debug, Error)]
pub enum AppError {
    #[error("{path}: {source}")]
    Config { path: String, source: ConfigError },
    #[error("{0}")]
    Usage(String),
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error(transparent)]
    Sim(#[from] SimError),
}

impl AppError {
    pub fn exit_code(&self) -> i32 {
        match self {
            AppError::Config { .. } | AppError::Usage(_) => EXIT_CONFIG,
            AppError::Io { .. } | AppError::Sim(_) => EXIT_HALTED,
        }
    }
}

fn read(path: &Path) -> Result<String, AppError> {
    fs::read_to_string(path).map_err(|source| AppError::Io {
        path: path.display().to_string(),
        source,
    })
}

fn write(dir: &Path, name: &str, text: &str) -> Result<PathBuf, AppError> {
    fs::create_dir_all(dir).map_err(|source| AppError::Io {
        path: dir.display().to_string(),
        source,
    })?;
    let path = dir.join(name);
    fs::write(&path, text).map_err(|source| AppError::Io {
        path: path.display().to_string(),
        source,
    })?;
    Ok(path)
}

/// Config from `--config` or `--manifest`, with the seed override applied.
fn load(c: &Common) -> Result<(Resolved, String), AppError> {
    let (path, file) = match (&c.config, &c.manifest) {
        (Some(p), _) => {
            let path = p.display().to_string();
            let file = parse_file(&read(p)?);
            (path, file)
        }
        (None, Some(p)) => {
            let path = p.display().to_string();
            let file = RunManifest::from_toml(&read(p)?).map(|m| m.config);
            (path, file)
        }
        (None, None) => return Err(AppError::Usage("one of --config or --manifest is required".into())),
    };
    let resolved = file
        .and_then(|mut f| {
            if let Some(seed) = c.seed {
                f.seed = seed;
            }
            f.resolve()
        })
        .map_err(|source| AppError::Config {
            path: path.clone(),
            source,
        })?;
    Ok((resolved, path))
}

fn write_manifest(command: &str, c: &Common, resolved: &Resolved, source: &str) -> Result<PathBuf, AppError> {
    let m = RunManifest {
        tool_version: env!("CARGO_PKG_VERSION").to_string(),
        timestamp: chrono::Utc::now().to_rfc3339(),
        command: command.to_string(),
        config_path: source.to_string(),
        out_dir: c.out.display().to_string(),
        config: resolved.file.clone(),
    };
    write(&c.out, "manifest.toml", &m.to_toml())
}

fn write_log_files(dir: &Path, prefix: &str, log: &SimLog) -> Result<(), AppError> {
    write(dir, &format!("{prefix}log.csv"), &log_to_csv(log))?;
    if !log.obstacle_positions.is_empty() && !log.collision_radii.is_empty() {
        write(dir, &format!("{prefix}obstacles.csv"), &obstacle_tracks_csv(log))?;
    }
    if !log.vo_dump.is_empty() {
        write(dir, &format!("{prefix}velocity_space.csv"), &vo_dump_csv(&log.vo_dump))?;
    }
    Ok(())
}

fn halted(log: &SimLog, quiet: bool) -> bool {
    if let Some(h) = &log.halted {
        if !quiet {
            eprintln!("{}: halted at step {}: {}", log.name, h.k, h.reason);
        }
        true
    } else {
        false
    }
}

fn cmd_run(c: &Common) -> Result<i32, AppError> {
    let (resolved, source) = load(c)?;
    let log = run_scenario(&resolved.scenario)?;
    let m = compute_metrics(&log);
    write_log_files(&c.out, "", &log)?;
    let figures = c.out.join("figures");
    for (name, text) in figure_bundle(&log.rows) {
        write(&figures, &name, &text)?;
    }
    write(&c.out, "metrics.csv", &format!("{METRICS_HEADER}\n{}\n", metrics_row(&log.name, "", 0.0, &m)))?;
    write_manifest("run", c, &resolved, &source)?;
    if !c.quiet {
        println!(
            "{}: {} steps, xy_error_sum {:.6}, converged {}, min clearance {:.4}",
            log.name, m.steps, m.xy_error_sum, m.converged, m.min_clearance
        );
    }
    Ok(if halted(&log, c.quiet) { EXIT_HALTED } else { EXIT_OK })
}

fn cmd_sweep(c: &Common) -> Result<i32, AppError> {
    let (resolved, source) = load(c)?;
    let Some(grid) = &resolved.sweep else {
        return Err(AppError::Config {
            path: source,
            source: ConfigError::Invalid {
                field: "sweep".into(),
                msg: "the sweep command needs a [sweep] section".into(),
            },
        });
    };
    let rows = sweep(&resolved.scenario, grid, c.jobs)?;
    let mut table = format!("{METRICS_HEADER}\n");
    let mut any_halt = false;
    for r in &rows {
        let _ = writeln!(table, "{}", metrics_row(&r.log.name, grid.parameter(), r.value, &r.metrics));
        write_log_files(&c.out, &format!("{}_", r.log.name), &r.log)?;
        any_halt |= halted(&r.log, c.quiet);
        if !c.quiet {
            println!(
                "{} = {}: xy_error_sum {:.6}, converged {}",
                grid.parameter(),
                r.value,
                r.metrics.xy_error_sum,
                r.metrics.converged
            );
        }
    }
    write(&c.out, "sweep.csv", &table)?;
    write_manifest("sweep", c, &resolved, &source)?;
    Ok(if any_halt { EXIT_HALTED } else { EXIT_OK })
}

fn cmd_compare(c: &Common) -> Result<i32, AppError> {
    let (resolved, source) = load(c)?;
    let (mpc, lqr) = lqr_comparison(&resolved.scenario)?;
    write_log_files(&c.out, "mpc_", &mpc)?;
    write_log_files(&c.out, "lqr_", &lqr)?;
    let mut cmp = String::from("t,v_mpc,omega_mpc,v_lqr,omega_lqr,max_abs_diff\n");
    for (a, b) in mpc.rows.iter().zip(&lqr.rows) {
        let d = (a.u.v - b.u.v).abs().max((a.u.omega - b.u.omega).abs());
        let _ = writeln!(
            cmp,
            "{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e}",
            a.t, a.u.v, a.u.omega, b.u.v, b.u.omega, d
        );
    }
    write(&c.out, "comparison.csv", &cmp)?;
    let (mm, ml) = (compute_metrics(&mpc), compute_metrics(&lqr));
    write(
        &c.out,
        "metrics.csv",
        &format!(
            "{METRICS_HEADER}\n{}\n{}\n",
            metrics_row(&mpc.name, "controller", 0.0, &mm),
            metrics_row(&lqr.name, "controller", 1.0, &ml)
        ),
    )?;
    write_manifest("compare-lqr", c, &resolved, &source)?;
    if !c.quiet {
        println!(
            "max |omega|: mpc {:.4}, lqr {:.4} (bound {})",
            mm.max_abs_omega, ml.max_abs_omega, resolved.scenario.mpc.u_max.y
        );
    }
    let h = halted(&mpc, c.quiet) | halted(&lqr, c.quiet);
    Ok(if h { EXIT_HALTED } else { EXIT_OK })
}

fn cmd_terminal_set(c: &Common) -> Result<i32, AppError> {
    let (resolved, source) = load(c)?;
    let s = &resolved.scenario;
    let (sched, levels) = terminal_levels(s)?;
    let traj = s.reference()?;
    let bounds = ConstraintSet {
        state_max: s.terminal_set.state_max.into(),
        input_max: s.mpc.u_max,
    };
    let mut table = String::from("i,c");
    for v in 0..8 {
        let _ = write!(table, ",v{v}_e1,v{v}_e2,v{v}_e3");
    }
    table.push_str(",feasible\n");
    let mut failures = 0;
    for l in &levels {
        let u_ref = traj.get(l.step).u_ref.as_vector();
        let ok = vertices_feasible(&l.polyhedron, &bounds, sched.gain(l.step), &u_ref);
        failures += usize::from(!ok);
        let _ = write!(table, "{},{:.16e}", l.step, l.c);
        for v in &l.polyhedron.vertices {
            let _ = write!(table, ",{:.16e},{:.16e},{:.16e}", v[0], v[1], v[2]);
        }
        let _ = writeln!(table, ",{ok}");
    }
    write(&c.out, "terminal_set.csv", &table)?;
    write_manifest("terminal-set", c, &resolved, &source)?;
    if !c.quiet {
        let cmin = levels.iter().map(|l| l.c).fold(f64::INFINITY, f64::min);
        println!(
            "{} levels, min c {:.6}, vertex check failures {failures}",
            levels.len(),
            cmin
        );
    }
    Ok(if failures == 0 { EXIT_OK } else { EXIT_HALTED })
}

fn cmd_dump_figures(log: &Path, out: &Path, quiet: bool) -> Result<i32, AppError> {
    let text = read(log)?;
    let rows = rows_from_csv(&text).map_err(|e| match e {
        SimError::Parse { line, msg } => AppError::Config {
            path: log.display().to_string(),
            source: ConfigError::Parse { line, column: 1, msg },
        },
        other => AppError::Sim(other),
    })?;
    let bundle = figure_bundle(&rows);
    for (name, text) in &bundle {
        write(out, name, text)?;
    }
    if !quiet {
        println!("wrote {} files to {}", bundle.len(), out.display());
    }
    Ok(EXIT_OK)
}

pub fn execute(cli: &Cli) -> Result<i32, AppError> {
    match &cli.command {
        Command::Run(c) => cmd_run(c),
        Command::Sweep(c) => cmd_sweep(c),
        Command::CompareLqr(c) => cmd_compare(c),
        Command::TerminalSet(c) => cmd_terminal_set(c),
        Command::DumpFigures { log, out, quiet } => cmd_dump_figures(log, out, *quiet),
    }
}

/// Parses `args` (including the program name) and runs; returns the exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
        }
    };
    match execute(&cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
