//! Closed-loop scenarios, logs and metrics.

use std::fmt::Write as _;

use nalgebra::Vector2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use thiserror::Error;

use crate::avoidance::{Obstacle, TangentSide};
use crate::dynamics::{
    derive_reference, from_error_frame, step_discrete, to_error_frame, ControlInput, DynamicsError, ErrorState, PathSample,
    ReferenceTrajectory, RobotState,
};
use crate::mpc::{MpcConfig, MpcController, MpcError, MpcStep};
use crate::riccati::TerminalSchedule;
use crate::terminal_set::{compute_c_schedule, ConstraintSet, LevelSearch, TerminalLevel, TerminalSetError};

#[derive(Debug, Error)]
pub enum SimError {
    #[error(transparent)]
    Dynamics(#[from] DynamicsError),
    #[error(transparent)]
    Mpc(#[from] MpcError),
    #[error(transparent)]
    TerminalSet(#[from] TerminalSetError),
    #[error("invalid scenario: {0}")]
    Invalid(String),
    #[error("malformed log at line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("thread pool: {0}")]
    Pool(String),
}

/// Analytic reference paths, parametrized by time.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum TrajectorySpec {
    /// `x = x0 + vx t`, `y = y0 + amplitude sin(frequency t)`.
    Sinusoid {
        #[serde(default = "default_sin_vx")]
        vx: f64,
        #[serde(default = "one")]
        amplitude: f64,
        #[serde(default = "default_sin_freq")]
        frequency: f64,
        #[serde(default)]
        origin: [f64; 2],
    },
    Line {
        #[serde(default)]
        start: [f64; 2],
        /// Degrees.
        #[serde(default)]
        heading_deg: f64,
        #[serde(default = "default_line_speed")]
        speed: f64,
    },
    /// Counter-clockwise circle starting at angle `phase_deg`.
    Circle {
        #[serde(default)]
        center: [f64; 2],
        #[serde(default = "one")]
        radius: f64,
        #[serde(default = "default_line_speed")]
        speed: f64,
        #[serde(default)]
        phase_deg: f64,
    },
}

fn default_sin_vx() -> f64 {
    0.5
}
fn default_sin_freq() -> f64 {
    0.5
}
fn default_line_speed() -> f64 {
    0.5
}
fn one() -> f64 {
    1.0
}

impl Default for TrajectorySpec {
    fn default() -> Self {
        TrajectorySpec::Sinusoid {
            vx: default_sin_vx(),
            amplitude: 1.0,
            frequency: default_sin_freq(),
            origin: [0.0, 0.0],
        }
    }
}

impl TrajectorySpec {
    pub fn sample(&self, t: f64) -> PathSample {
        match *self {
            TrajectorySpec::Sinusoid {
                vx,
                amplitude,
                frequency,
                origin,
            } => {
                let (s, c) = (frequency * t).sin_cos();
                PathSample {
                    x: origin[0] + vx * t,
                    dx: vx,
                    ddx: 0.0,
                    y: origin[1] + amplitude * s,
                    dy: amplitude * frequency * c,
                    ddy: -amplitude * frequency * frequency * s,
                }
            }
            TrajectorySpec::Line {
                start,
                heading_deg,
                speed,
            } => {
                let (s, c) = heading_deg.to_radians().sin_cos();
                PathSample {
                    x: start[0] + speed * c * t,
                    dx: speed * c,
                    ddx: 0.0,
                    y: start[1] + speed * s * t,
                    dy: speed * s,
                    ddy: 0.0,
                }
            }
            TrajectorySpec::Circle {
                center,
                radius,
                speed,
                phase_deg,
            } => {
                let w = speed / radius;
                let (s, c) = (phase_deg.to_radians() + w * t).sin_cos();
                PathSample {
                    x: center[0] + radius * c,
                    dx: -radius * w * s,
                    ddx: -radius * w * w * c,
                    y: center[1] + radius * s,
                    dy: radius * w * c,
                    ddy: -radius * w * w * s,
                }
            }
        }
    }

    /// Dynamically feasible reference with `len` points.
    pub fn reference(&self, len: usize, dt: f64) -> Result<ReferenceTrajectory, DynamicsError> {
        let path: Vec<PathSample> = (0..len).map(|i| self.sample(dt * i as f64)).collect();
        Ok(derive_reference(&path, dt)?.rollout_feasible())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum ObstacleMotion {
    Static { p: Vector2<f64> },
    /// Another robot following its own reference open-loop.
    Agent { trajectory: TrajectorySpec },
}

#[derive(Debug, Clone, PartialEq)]
pub struct ObstacleSpec {
    pub motion: ObstacleMotion,
    pub r: f64,
}

/// Initial robot pose, absolute or as a world-frame offset from the reference start.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum InitialState {
    Pose(RobotState),
    Offset { dx: f64, dy: f64, dtheta: f64 },
    /// Robot-frame error relative to the reference start.
    Error(ErrorState),
}

/// Inputs to the offline terminal-set computation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TerminalSetSpec {
    pub state_max: [f64; 3],
    pub search: LevelSearch,
}

impl Default for TerminalSetSpec {
    fn default() -> Self {
        Self {
            state_max: [1.0, 1.0, std::f64::consts::FRAC_PI_2],
            search: LevelSearch::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub name: String,
    pub trajectory: TrajectorySpec,
    pub initial: InitialState,
    /// Half-width of a uniform perturbation of the initial pose, drawn from `seed`.
    pub initial_jitter: f64,
    pub mpc: MpcConfig,
    pub obstacles: Vec<ObstacleSpec>,
    pub duration: usize,
    pub seed: u64,
    pub terminal_set: TerminalSetSpec,
}

/// Position and velocity of one obstacle at each step.
type Track = Vec<(Vector2<f64>, Vector2<f64>)>;

impl Scenario {
    pub fn reference(&self) -> Result<ReferenceTrajectory, SimError> {
        Ok(self
            .trajectory
            .reference(self.duration + self.mpc.horizon + 1, self.mpc.dt)?)
    }

    pub fn initial_state(&self, traj: &ReferenceTrajectory) -> RobotState {
        let mut z = match self.initial {
            InitialState::Pose(z) => z,
            InitialState::Offset { dx, dy, dtheta } => {
                let r = traj.get(0).z_ref;
                RobotState::new(r.x + dx, r.y + dy, r.theta + dtheta)
            }
            InitialState::Error(e) => from_error_frame(&e, traj.get(0)),
        };
        if self.initial_jitter > 0.0 {
            let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
            let j = self.initial_jitter;
            z.x += rng.gen_range(-j..=j);
            z.y += rng.gen_range(-j..=j);
            z.theta += rng.gen_range(-j..=j);
        }
        z
    }

    /// Obstacle tracks, one list per obstacle, for `steps` steps.
    fn obstacle_tracks(&self, steps: usize) -> Result<Vec<Track>, SimError> {
        self.obstacles
            .iter()
            .map(|o| match &o.motion {
                ObstacleMotion::Static { p } => Ok(vec![(*p, Vector2::zeros()); steps]),
                ObstacleMotion::Agent { trajectory } => {
                    let traj = trajectory.reference(steps, self.mpc.dt)?;
                    // open loop from the reference start reproduces the reference
                    let mut z = traj.get(0).z_ref;
                    let mut out = Vec::with_capacity(steps);
                    for k in 0..steps {
                        let u = traj.get(k).u_ref;
                        out.push((z.position(), z.heading() * u.v));
                        z = step_discrete(&z, &u, self.mpc.dt);
                    }
                    Ok(out)
                }
            })
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ControllerKind {
    Mpc,
    Lqr,
}

/// One CSV row.
#[derive(Debug, Clone, PartialEq)]
pub struct SimRow {
    pub k: usize,
    pub t: f64,
    pub z: RobotState,
    pub z_ref: RobotState,
    pub e: ErrorState,
    pub u: ControlInput,
    pub u_ref: ControlInput,
    pub stage_cost: f64,
    pub terminal_cost: f64,
    pub qp_status: String,
    pub slack: f64,
    pub min_dist: f64,
}

/// Per-step solver details not written to the main CSV.
#[derive(Debug, Clone, PartialEq)]
pub struct StepDiagnostics {
    pub kkt_residual: f64,
    pub qp_iterations: usize,
    pub avoidance_rows: usize,
    pub active_avoidance_rows: usize,
    pub objective: f64,
}

/// Velocity-obstacle construction at one step, for velocity-space plots.
#[derive(Debug, Clone, PartialEq)]
pub struct VoDumpRow {
    pub k: usize,
    pub horizon_step: usize,
    pub obstacle: usize,
    pub apex: Vector2<f64>,
    pub axis: Vector2<f64>,
    pub half_angle: f64,
    pub tau: f64,
    pub side: TangentSide,
    pub n: Vector2<f64>,
    pub a: f64,
    pub coef_u: f64,
    pub coef_omega: f64,
    pub constant: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Halt {
    pub k: usize,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimLog {
    pub name: String,
    pub rows: Vec<SimRow>,
    pub diagnostics: Vec<StepDiagnostics>,
    pub vo_dump: Vec<VoDumpRow>,
    /// Obstacle centres per step.
    pub obstacle_positions: Vec<Vec<Vector2<f64>>>,
    /// Combined radii `r_robot + r_obstacle`.
    pub collision_radii: Vec<f64>,
    pub halted: Option<Halt>,
}

pub fn run_scenario(s: &Scenario) -> Result<SimLog, SimError> {
    run_with(s, ControllerKind::Mpc)
}

pub fn run_with(s: &Scenario, kind: ControllerKind) -> Result<SimLog, SimError> {
    s.mpc.validate()?;
    let traj = s.reference()?;
    let mut controller = MpcController::new(s.mpc.clone(), traj.clone())?;
    let tracks = s.obstacle_tracks(s.duration + 1)?;
    let r_robot = s.mpc.avoidance.r_robot;
    let mut log = SimLog {
        name: s.name.clone(),
        rows: Vec::with_capacity(s.duration),
        diagnostics: Vec::with_capacity(s.duration),
        vo_dump: vec![],
        obstacle_positions: Vec::with_capacity(s.duration),
        collision_radii: s.obstacles.iter().map(|o| r_robot + o.r).collect(),
        halted: None,
    };
    let mut z = s.initial_state(&traj);
    for k in 0..s.duration {
        let obstacles: Vec<Obstacle> = s
            .obstacles
            .iter()
            .zip(&tracks)
            .map(|(o, tr)| Obstacle {
                p: tr[k].0,
                r: o.r,
                v: tr[k].1,
            })
            .collect();
        let min_dist = obstacles
            .iter()
            .map(|o| (o.p - z.position()).norm())
            .fold(f64::INFINITY, f64::min);
        let step: MpcStep = match kind {
            ControllerKind::Mpc => match controller.step(&z, k, &obstacles) {
                Ok(st) => st,
                Err(e) => {
                    log.halted = Some(Halt {
                        k,
                        reason: e.to_string(),
                    });
                    break;
                }
            },
            ControllerKind::Lqr => controller.lqr_step(&z, k),
        };
        let r = traj.get(k);
        log.rows.push(SimRow {
            k,
            t: k as f64 * s.mpc.dt,
            z,
            z_ref: r.z_ref,
            e: to_error_frame(&z, r),
            u: step.u_applied,
            u_ref: r.u_ref,
            stage_cost: step.stage_cost,
            terminal_cost: step.terminal_cost,
            qp_status: match kind {
                ControllerKind::Mpc => step.qp_status.as_str().to_string(),
                ControllerKind::Lqr => "lqr".to_string(),
            },
            slack: step.slack_used,
            min_dist,
        });
        log.diagnostics.push(StepDiagnostics {
            kkt_residual: step.kkt_residual,
            qp_iterations: step.qp_iterations,
            avoidance_rows: step.avoidance_rows,
            active_avoidance_rows: step.active_avoidance_rows,
            objective: step.objective,
        });
        log.obstacle_positions.push(obstacles.iter().map(|o| o.p).collect());
        for c in &step.velocity_constraints {
            log.vo_dump.push(VoDumpRow {
                k,
                horizon_step: c.step,
                obstacle: c.obstacle,
                apex: c.cone.apex,
                axis: c.cone.axis,
                half_angle: c.cone.half_angle,
                tau: c.cone.tau,
                side: c.tangent.side,
                n: c.tangent.plane.n,
                a: c.tangent.plane.a,
                coef_u: c.row.coef_u,
                coef_omega: c.row.coef_omega,
                constant: c.row.constant,
            });
        }
        z = step_discrete(&z, &step.u_applied, s.mpc.dt);
    }
    Ok(log)
}

/// Paired MPC and unconstrained-LQR runs from the same start.
pub fn lqr_comparison(s: &Scenario) -> Result<(SimLog, SimLog), SimError> {
    Ok((run_with(s, ControllerKind::Mpc)?, run_with(s, ControllerKind::Lqr)?))
}

#[derive(Debug, Clone, PartialEq)]
pub struct Metrics {
    pub xy_error_sum: f64,
    pub input_effort: (f64, f64),
    /// Smallest centre-to-centre distance to any obstacle.
    pub min_clearance: f64,
    /// Smallest distance minus the combined radius.
    pub min_gap: f64,
    pub lyapunov_violations: usize,
    /// Steps after the audit start where `V(k+1) > V(k) + 1e-6`.
    pub terminal_cost_increases: usize,
    /// First step with `|e|_inf < 0.05`.
    pub audit_start: Option<usize>,
    pub converged: bool,
    pub max_error: f64,
    pub max_abs_v: f64,
    pub max_abs_omega: f64,
    pub slack_total: f64,
    pub steps: usize,
    pub halted: bool,
}

pub const LYAPUNOV_TOL: f64 = 1e-6;
pub const AUDIT_THRESHOLD: f64 = 0.05;
pub const CONVERGED_TOL: f64 = 0.01;

pub fn compute_metrics(log: &SimLog) -> Metrics {
    let rows = &log.rows;
    let xy_error_sum = rows.iter().map(|r| r.e.e1.abs() + r.e.e2.abs()).sum();
    let input_effort = rows
        .iter()
        .fold((0.0, 0.0), |(a, b), r| (a + r.u.v.abs(), b + r.u.omega.abs()));
    let min_clearance = rows.iter().map(|r| r.min_dist).fold(f64::INFINITY, f64::min);
    let min_gap = log
        .obstacle_positions
        .iter()
        .zip(rows)
        .flat_map(|(ps, r)| {
            ps.iter()
                .zip(&log.collision_radii)
                .map(move |(p, rad)| (p - r.z.position()).norm() - rad)
        })
        .fold(f64::INFINITY, f64::min);
    let audit_start = rows.iter().position(|r| r.e.norm_inf() < AUDIT_THRESHOLD);
    let (mut lyapunov_violations, mut terminal_cost_increases) = (0, 0);
    if let Some(k0) = audit_start {
        for w in rows[k0..].windows(2) {
            if w[0].terminal_cost - w[1].terminal_cost + LYAPUNOV_TOL < w[0].stage_cost {
                lyapunov_violations += 1;
            }
            if w[1].terminal_cost > w[0].terminal_cost + LYAPUNOV_TOL {
                terminal_cost_increases += 1;
            }
        }
    }
    let tail = rows.len().div_ceil(10);
    let converged = log.halted.is_none()
        && !rows.is_empty()
        && rows[rows.len() - tail..].iter().all(|r| r.e.norm_inf() < CONVERGED_TOL);
    Metrics {
        xy_error_sum,
        input_effort,
        min_clearance,
        min_gap,
        lyapunov_violations,
        terminal_cost_increases,
        audit_start,
        converged,
        max_error: rows.iter().map(|r| r.e.norm_inf()).fold(0.0, f64::max),
        max_abs_v: rows.iter().map(|r| r.u.v.abs()).fold(0.0, f64::max),
        max_abs_omega: rows.iter().map(|r| r.u.omega.abs()).fold(0.0, f64::max),
        slack_total: rows.iter().map(|r| r.slack).sum(),
        steps: rows.len(),
        halted: log.halted.is_some(),
    }
}

#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepGrid {
    Horizon(Vec<usize>),
    Beta(Vec<f64>),
}

impl SweepGrid {
    pub fn len(&self) -> usize {
        match self {
            SweepGrid::Horizon(v) => v.len(),
            SweepGrid::Beta(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn parameter(&self) -> &'static str {
        match self {
            SweepGrid::Horizon(_) => "horizon",
            SweepGrid::Beta(_) => "beta",
        }
    }

    /// One scenario per grid point, everything else shared.
    pub fn expand(&self, base: &Scenario) -> Vec<(f64, Scenario)> {
        match self {
            SweepGrid::Horizon(ns) => ns
                .iter()
                .map(|&n| {
                    let mut s = base.clone();
                    s.mpc.horizon = n;
                    s.name = format!("{}_n{n}", base.name);
                    (n as f64, s)
                })
                .collect(),
            SweepGrid::Beta(bs) => bs
                .iter()
                .map(|&b| {
                    let mut s = base.clone();
                    s.mpc.beta = b;
                    s.name = format!("{}_beta{b}", base.name);
                    (b, s)
                })
                .collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub value: f64,
    pub log: SimLog,
    pub metrics: Metrics,
}

/// Runs every grid point, in parallel on `jobs` threads (0 = all cores).
pub fn sweep(base: &Scenario, grid: &SweepGrid, jobs: usize) -> Result<Vec<SweepRow>, SimError> {
    if grid.is_empty() {
        return Err(SimError::Invalid("sweep grid is empty".into()));
    }
    let points = grid.expand(base);
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| SimError::Pool(e.to_string()))?;
    pool.install(|| {
        points
            .par_iter()
            .map(|(value, s)| {
                let log = run_scenario(s)?;
                let metrics = compute_metrics(&log);
                Ok(SweepRow {
                    value: *value,
                    log,
                    metrics,
                })
            })
            .collect()
    })
}

/// Offline level schedule for the scenario's reference and bounds.
pub fn terminal_levels(s: &Scenario) -> Result<(TerminalSchedule, Vec<TerminalLevel>), SimError> {
    let traj = s.reference()?;
    let controller = MpcController::new(s.mpc.clone(), traj.clone())?;
    let sched = controller.schedule().clone();
    let bounds = ConstraintSet {
        state_max: s.terminal_set.state_max.into(),
        input_max: s.mpc.u_max,
    };
    let u_refs: Vec<Vector2<f64>> = traj.points().iter().map(|p| p.u_ref.as_vector()).collect();
    let levels = compute_c_schedule(&sched, &bounds, &u_refs, s.terminal_set.search)?;
    Ok((sched, levels))
}

pub const CSV_HEADER: &str = "k,t,x,y,theta,x_ref,y_ref,theta_ref,e1,e2,e3,v,omega,v_ref,omega_ref,stage_cost,terminal_cost,qp_status,slack,min_dist";

fn num(v: f64) -> String {
    format!("{v:.16e}")
}

pub fn log_to_csv(log: &SimLog) -> String {
    let mut out = String::with_capacity(64 + log.rows.len() * 400);
    out.push_str(CSV_HEADER);
    out.push('\n');
    for r in &log.rows {
        let vals = [
            r.t, r.z.x, r.z.y, r.z.theta, r.z_ref.x, r.z_ref.y, r.z_ref.theta, r.e.e1, r.e.e2, r.e.e3, r.u.v, r.u.omega,
            r.u_ref.v, r.u_ref.omega, r.stage_cost, r.terminal_cost,
        ];
        let _ = write!(out, "{}", r.k);
        for v in vals {
            let _ = write!(out, ",{}", num(v));
        }
        let _ = writeln!(out, ",{},{},{}", r.qp_status, num(r.slack), num(r.min_dist));
    }
    out
}

/// Rows of a CSV written by [`log_to_csv`].
pub fn rows_from_csv(text: &str) -> Result<Vec<SimRow>, SimError> {
    let mut lines = text.lines();
    match lines.next() {
        Some(h) if h.trim() == CSV_HEADER => {}
        _ => {
            return Err(SimError::Parse {
                line: 1,
                msg: "unexpected header".into(),
            })
        }
    }
    lines
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            let err = |msg: &str| SimError::Parse {
                line: i + 2,
                msg: msg.into(),
            };
            let f: Vec<&str> = l.split(',').collect();
            if f.len() != 20 {
                return Err(err("expected 20 fields"));
            }
            let x = |j: usize| f[j].trim().parse::<f64>().map_err(|_| err(&format!("bad number in column {}", j + 1)));
            Ok(SimRow {
                k: f[0].trim().parse().map_err(|_| err("bad step index"))?,
                t: x(1)?,
                z: RobotState::new(x(2)?, x(3)?, x(4)?),
                z_ref: RobotState::new(x(5)?, x(6)?, x(7)?),
                e: ErrorState::new(x(8)?, x(9)?, x(10)?),
                u: ControlInput::new(x(11)?, x(12)?),
                u_ref: ControlInput::new(x(13)?, x(14)?),
                stage_cost: x(15)?,
                terminal_cost: x(16)?,
                qp_status: f[17].trim().to_string(),
                slack: x(18)?,
                min_dist: x(19)?,
            })
        })
        .collect()
}

pub fn vo_dump_csv(rows: &[VoDumpRow]) -> String {
    let mut out = String::from(
        "k,horizon_step,obstacle,apex_x,apex_y,axis_x,axis_y,half_angle,tau,side,n_x,n_y,a,coef_u,coef_omega,constant\n",
    );
    for r in rows {
        let side = match r.side {
            TangentSide::Left => "left",
            TangentSide::Right => "right",
        };
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{side},{},{},{},{},{},{}",
            r.k,
            r.horizon_step,
            r.obstacle,
            num(r.apex.x),
            num(r.apex.y),
            num(r.axis.x),
            num(r.axis.y),
            num(r.half_angle),
            num(r.tau),
            num(r.n.x),
            num(r.n.y),
            num(r.a),
            num(r.coef_u),
            num(r.coef_omega),
            num(r.constant),
        );
    }
    out
}

pub fn obstacle_tracks_csv(log: &SimLog) -> String {
    let mut out = String::from("k,obstacle,x,y,collision_radius\n");
    for (k, ps) in log.obstacle_positions.iter().enumerate() {
        for (i, p) in ps.iter().enumerate() {
            let _ = writeln!(out, "{k},{i},{},{},{}", num(p.x), num(p.y), num(log.collision_radii[i]));
        }
    }
    out
}

/// Plot-ready CSV files derived from log rows: `(file name, contents)`.
pub fn figure_bundle(rows: &[SimRow]) -> Vec<(String, String)> {
    let table = |header: &str, cols: &dyn Fn(&SimRow) -> Vec<f64>| {
        let mut out = format!("{header}\n");
        for r in rows {
            let vals: Vec<String> = cols(r).into_iter().map(num).collect();
            let _ = writeln!(out, "{}", vals.join(","));
        }
        out
    };
    vec![
        (
            "trajectory.csv".into(),
            table("t,x,y,x_ref,y_ref", &|r| vec![r.t, r.z.x, r.z.y, r.z_ref.x, r.z_ref.y]),
        ),
        (
            "errors.csv".into(),
            table("t,e1,e2,e3,e_inf", &|r| vec![r.t, r.e.e1, r.e.e2, r.e.e3, r.e.norm_inf()]),
        ),
        (
            "costs.csv".into(),
            table("t,stage_cost,terminal_cost", &|r| vec![r.t, r.stage_cost, r.terminal_cost]),
        ),
        (
            "inputs.csv".into(),
            table("t,v,omega,v_ref,omega_ref", &|r| vec![r.t, r.u.v, r.u.omega, r.u_ref.v, r.u_ref.omega]),
        ),
    ]
}

pub const METRICS_HEADER: &str = "name,parameter,value,xy_error_sum,effort_v,effort_omega,min_clearance,min_gap,lyapunov_violations,terminal_cost_increases,converged,max_error,max_abs_v,max_abs_omega,slack_total,steps,halted";

pub fn metrics_row(name: &str, parameter: &str, value: f64, m: &Metrics) -> String {
    format!(
        "{name},{parameter},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
        num(value),
        num(m.xy_error_sum),
        num(m.input_effort.0),
        num(m.input_effort.1),
        num(m.min_clearance),
        num(m.min_gap),
        m.lyapunov_violations,
        m.terminal_cost_increases,
        m.converged,
        num(m.max_error),
        num(m.max_abs_v),
        num(m.max_abs_omega),
        num(m.slack_total),
        m.steps,
        m.halted
    )
}
