//! TOML scenario files and run manifests.
//!
//! Every key has a default, so a file containing only `[trajectory]` is a
//! complete scenario. Unknown keys are rejected. [`ScenarioFile`] serializes
//! with every default written out, which is what manifests store.

use nalgebra::Vector2;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::avoidance::{AvoidanceConfig, AvoidanceMode};
use crate::dynamics::{ErrorState, RobotState};
use crate::mpc::{MpcConfig, TerminalMode};
use crate::qp::QpOptions;
use crate::riccati::CostMatrices;
use crate::sim::{InitialState, ObstacleMotion, ObstacleSpec, Scenario, SweepGrid, TerminalSetSpec, TrajectorySpec};
use crate::terminal_set::LevelSearch;

#[derive(Debug, Error, PartialEq)]
pub enum ConfigError {
    #[error("parse error at line {line}, column {column}: {msg}")]
    Parse { line: usize, column: usize, msg: String },
    #[error("{field}: {msg}")]
    Invalid { field: String, msg: String },
}

impl ConfigError {
    fn invalid(field: &str, msg: impl Into<String>) -> Self {
        ConfigError::Invalid {
            field: field.to_string(),
            msg: msg.into(),
        }
    }

    fn from_toml(text: &str, e: toml::de::Error) -> Self {
        let (line, column) = match e.span() {
            Some(span) => {
                let before = &text[..span.start.min(text.len())];
                let line = before.matches('\n').count() + 1;
                let column = before.rsplit('\n').next().map_or(0, |l| l.chars().count()) + 1;
                (line, column)
            }
            None => (0, 0),
        };
        ConfigError::Parse {
            line,
            column,
            msg: e.message().to_string(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioFile {
    #[serde(default = "default_name")]
    pub name: String,
    /// Closed-loop steps.
    #[serde(default = "default_duration")]
    pub duration: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub trajectory: TrajectorySpec,
    #[serde(default)]
    pub initial: InitialSection,
    #[serde(default)]
    pub mpc: MpcSection,
    #[serde(default)]
    pub avoidance: AvoidanceSection,
    #[serde(default)]
    pub obstacles: Vec<ObstacleSection>,
    #[serde(default)]
    pub terminal_set: TerminalSetSection,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sweep: Option<SweepSection>,
}

fn default_name() -> String {
    "scenario".into()
}
fn default_duration() -> usize {
    600
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitialKind {
    /// `value` = absolute `(x, y, theta)`.
    Pose,
    /// `value` = world-frame `(dx, dy, dtheta)` from the reference start.
    #[default]
    Offset,
    /// `value` = robot-frame error `(e1, e2, e3)`.
    Error,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitialSection {
    #[serde(default)]
    pub kind: InitialKind,
    #[serde(default = "default_offset")]
    pub value: [f64; 3],
    /// Uniform perturbation half-width, drawn from the seed.
    #[serde(default)]
    pub jitter: f64,
}

fn default_offset() -> [f64; 3] {
    [0.0, -0.5, 0.0]
}

impl Default for InitialSection {
    fn default() -> Self {
        Self {
            kind: InitialKind::Offset,
            value: default_offset(),
            jitter: 0.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MpcSection {
    #[serde(default = "d_horizon")]
    pub horizon: usize,
    #[serde(default = "d_dt")]
    pub dt: f64,
    /// Diagonal of the state weight.
    #[serde(default = "d_q")]
    pub q: [f64; 3],
    /// Diagonal of the input weight.
    #[serde(default = "d_r")]
    pub r: [f64; 2],
    #[serde(default = "d_beta")]
    pub beta: f64,
    #[serde(default = "d_v_max")]
    pub v_max: f64,
    #[serde(default = "d_omega_max")]
    pub omega_max: f64,
    #[serde(default)]
    pub terminal: TerminalMode,
    #[serde(default = "d_slack_weight")]
    pub slack_weight: f64,
    #[serde(default)]
    pub forbid_reverse: bool,
    #[serde(default = "d_qp_tol")]
    pub qp_tol: f64,
    #[serde(default = "d_qp_max_iter")]
    pub qp_max_iter: usize,
}

fn d_horizon() -> usize {
    10
}
fn d_dt() -> f64 {
    0.05
}
fn d_q() -> [f64; 3] {
    [1.0, 1.0, 0.5]
}
fn d_r() -> [f64; 2] {
    [0.1, 0.05]
}
fn d_beta() -> f64 {
    1.0
}
fn d_v_max() -> f64 {
    2.0
}
fn d_omega_max() -> f64 {
    10.0
}
fn d_slack_weight() -> f64 {
    1e4
}
fn d_qp_tol() -> f64 {
    QpOptions::default().tol
}
fn d_qp_max_iter() -> usize {
    QpOptions::default().max_iter
}

impl Default for MpcSection {
    fn default() -> Self {
        Self {
            horizon: d_horizon(),
            dt: d_dt(),
            q: d_q(),
            r: d_r(),
            beta: d_beta(),
            v_max: d_v_max(),
            omega_max: d_omega_max(),
            terminal: TerminalMode::default(),
            slack_weight: d_slack_weight(),
            forbid_reverse: false,
            qp_tol: d_qp_tol(),
            qp_max_iter: d_qp_max_iter(),
        }
    }
}

/// Angles in degrees.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AvoidanceSection {
    #[serde(default)]
    pub mode: AvoidanceMode,
    #[serde(default = "a_r_robot")]
    pub r_robot: f64,
    #[serde(default = "a_theta_s")]
    pub theta_s_deg: f64,
    #[serde(default = "a_hysteresis")]
    pub hysteresis_deg: f64,
    #[serde(default = "a_activation")]
    pub activation_distance: f64,
    #[serde(default = "a_margin")]
    pub margin: f64,
    /// Velocity-obstacle truncation in seconds; absent means `horizon * dt`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tau: Option<f64>,
}

fn a_r_robot() -> f64 {
    AvoidanceConfig::default().r_robot
}
fn a_theta_s() -> f64 {
    30.0
}
fn a_hysteresis() -> f64 {
    5.0
}
fn a_activation() -> f64 {
    AvoidanceConfig::default().activation_distance
}
fn a_margin() -> f64 {
    AvoidanceConfig::default().margin
}

impl Default for AvoidanceSection {
    fn default() -> Self {
        Self {
            mode: AvoidanceMode::Off,
            r_robot: a_r_robot(),
            theta_s_deg: a_theta_s(),
            hysteresis_deg: a_hysteresis(),
            activation_distance: a_activation(),
            margin: a_margin(),
            tau: None,
        }
    }
}

/// A static disc at `position`, or a second robot driving `trajectory`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ObstacleSection {
    pub r: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub position: Option<[f64; 2]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub trajectory: Option<TrajectorySpec>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TerminalSetSection {
    #[serde(default = "t_state_max")]
    pub state_max: [f64; 3],
    #[serde(default = "t_c0")]
    pub c0: f64,
    #[serde(default = "t_shrink")]
    pub shrink: f64,
}

fn t_state_max() -> [f64; 3] {
    TerminalSetSpec::default().state_max
}
fn t_c0() -> f64 {
    LevelSearch::default().c0
}
fn t_shrink() -> f64 {
    LevelSearch::default().shrink
}

impl Default for TerminalSetSection {
    fn default() -> Self {
        Self {
            state_max: t_state_max(),
            c0: t_c0(),
            shrink: t_shrink(),
        }
    }
}

/// Exactly one list.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSection {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub horizon: Option<Vec<usize>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub beta: Option<Vec<f64>>,
}

/// A validated scenario and its optional sweep grid.
#[derive(Debug, Clone, PartialEq)]
pub struct Resolved {
    pub file: ScenarioFile,
    pub scenario: Scenario,
    pub sweep: Option<SweepGrid>,
}

impl Resolved {
    /// The base scenario, or one per grid point, all sharing the seed.
    pub fn scenarios(&self) -> Vec<Scenario> {
        match &self.sweep {
            Some(grid) => grid.expand(&self.scenario).into_iter().map(|(_, s)| s).collect(),
            None => vec![self.scenario.clone()],
        }
    }
}

/// Syntax and unknown-key checks only.
pub fn parse_file(text: &str) -> Result<ScenarioFile, ConfigError> {
    toml::from_str(text).map_err(|e| ConfigError::from_toml(text, e))
}

pub fn parse_config(text: &str) -> Result<Resolved, ConfigError> {
    parse_file(text)?.resolve()
}

fn finite(field: &str, v: f64) -> Result<f64, ConfigError> {
    if v.is_finite() {
        Ok(v)
    } else {
        Err(ConfigError::invalid(field, "must be finite"))
    }
}

fn positive(field: &str, v: f64) -> Result<f64, ConfigError> {
    if v.is_finite() && v > 0.0 {
        Ok(v)
    } else {
        Err(ConfigError::invalid(field, "must be > 0"))
    }
}

fn non_negative(field: &str, v: f64) -> Result<f64, ConfigError> {
    if v.is_finite() && v >= 0.0 {
        Ok(v)
    } else {
        Err(ConfigError::invalid(field, "must be ≥ 0"))
    }
}

fn check_trajectory(field: &str, t: &TrajectorySpec) -> Result<(), ConfigError> {
    match *t {
        TrajectorySpec::Sinusoid {
            vx,
            amplitude,
            frequency,
            origin,
        } => {
            positive(&format!("{field}.vx"), vx)?;
            finite(&format!("{field}.amplitude"), amplitude)?;
            finite(&format!("{field}.frequency"), frequency)?;
            finite(&format!("{field}.origin"), origin[0] + origin[1])?;
        }
        TrajectorySpec::Line {
            start,
            heading_deg,
            speed,
        } => {
            finite(&format!("{field}.start"), start[0] + start[1])?;
            finite(&format!("{field}.heading_deg"), heading_deg)?;
            positive(&format!("{field}.speed"), speed)?;
        }
        TrajectorySpec::Circle {
            center,
            radius,
            speed,
            phase_deg,
        } => {
            finite(&format!("{field}.center"), center[0] + center[1])?;
            positive(&format!("{field}.radius"), radius)?;
            positive(&format!("{field}.speed"), speed)?;
            finite(&format!("{field}.phase_deg"), phase_deg)?;
        }
    }
    Ok(())
}

impl ScenarioFile {
    pub fn resolve(&self) -> Result<Resolved, ConfigError> {
        check_trajectory("trajectory", &self.trajectory)?;

        let m = &self.mpc;
        if m.horizon < 1 {
            return Err(ConfigError::invalid("mpc.horizon", "horizon must be ≥ 1"));
        }
        positive("mpc.dt", m.dt)?;
        non_negative("mpc.beta", m.beta)?;
        positive("mpc.v_max", m.v_max)?;
        positive("mpc.omega_max", m.omega_max)?;
        non_negative("mpc.slack_weight", m.slack_weight)?;
        positive("mpc.qp_tol", m.qp_tol)?;
        if m.qp_max_iter == 0 {
            return Err(ConfigError::invalid("mpc.qp_max_iter", "must be ≥ 1"));
        }
        for (i, q) in m.q.iter().enumerate() {
            positive(&format!("mpc.q[{i}]"), *q)?;
        }
        for (i, r) in m.r.iter().enumerate() {
            positive(&format!("mpc.r[{i}]"), *r)?;
        }
        let costs = CostMatrices::diagonal(m.q, m.r).map_err(|e| ConfigError::invalid("mpc.q", e.to_string()))?;

        let a = &self.avoidance;
        positive("avoidance.r_robot", a.r_robot)?;
        let theta_s = finite("avoidance.theta_s_deg", a.theta_s_deg)?;
        if !(0.0..=90.0).contains(&theta_s) {
            return Err(ConfigError::invalid("avoidance.theta_s_deg", "must be in [0, 90]"));
        }
        non_negative("avoidance.hysteresis_deg", a.hysteresis_deg)?;
        positive("avoidance.activation_distance", a.activation_distance)?;
        non_negative("avoidance.margin", a.margin)?;
        if let Some(tau) = a.tau {
            positive("avoidance.tau", tau)?;
        }

        let mut obstacles = Vec::with_capacity(self.obstacles.len());
        for (i, o) in self.obstacles.iter().enumerate() {
            let field = format!("obstacles[{i}]");
            positive(&format!("{field}.r"), o.r)?;
            let motion = match (&o.position, &o.trajectory) {
                (Some(p), None) => {
                    finite(&format!("{field}.position"), p[0] + p[1])?;
                    ObstacleMotion::Static {
                        p: Vector2::new(p[0], p[1]),
                    }
                }
                (None, Some(t)) => {
                    check_trajectory(&format!("{field}.trajectory"), t)?;
                    ObstacleMotion::Agent { trajectory: t.clone() }
                }
                _ => {
                    return Err(ConfigError::invalid(
                        &field,
                        "give exactly one of `position` or `trajectory`",
                    ))
                }
            };
            obstacles.push(ObstacleSpec { motion, r: o.r });
        }
        if !obstacles.is_empty() && a.mode == AvoidanceMode::Off {
            return Err(ConfigError::invalid(
                "avoidance.mode",
                "obstacles are listed but avoidance is off",
            ));
        }

        let i = &self.initial;
        for (j, v) in i.value.iter().enumerate() {
            finite(&format!("initial.value[{j}]"), *v)?;
        }
        non_negative("initial.jitter", i.jitter)?;
        let [a0, a1, a2] = i.value;
        let initial = match i.kind {
            InitialKind::Pose => InitialState::Pose(RobotState::new(a0, a1, a2)),
            InitialKind::Offset => InitialState::Offset {
                dx: a0,
                dy: a1,
                dtheta: a2,
            },
            InitialKind::Error => InitialState::Error(ErrorState::new(a0, a1, a2)),
        };

        let t = &self.terminal_set;
        for (j, v) in t.state_max.iter().enumerate() {
            positive(&format!("terminal_set.state_max[{j}]"), *v)?;
        }
        positive("terminal_set.c0", t.c0)?;
        if !(t.shrink.is_finite() && t.shrink > 1.0) {
            return Err(ConfigError::invalid("terminal_set.shrink", "must be > 1"));
        }

        let sweep = match &self.sweep {
            None => None,
            Some(SweepSection {
                horizon: Some(h),
                beta: None,
            }) => {
                if h.is_empty() {
                    return Err(ConfigError::invalid("sweep.horizon", "must not be empty"));
                }
                if h.contains(&0) {
                    return Err(ConfigError::invalid("sweep.horizon", "horizon must be ≥ 1"));
                }
                Some(SweepGrid::Horizon(h.clone()))
            }
            Some(SweepSection {
                horizon: None,
                beta: Some(b),
            }) => {
                if b.is_empty() {
                    return Err(ConfigError::invalid("sweep.beta", "must not be empty"));
                }
                for v in b {
                    non_negative("sweep.beta", *v)?;
                }
                Some(SweepGrid::Beta(b.clone()))
            }
            Some(_) => return Err(ConfigError::invalid("sweep", "give exactly one of `horizon` or `beta`")),
        };

        let mpc = MpcConfig {
            horizon: m.horizon,
            dt: m.dt,
            costs,
            beta: m.beta,
            u_max: Vector2::new(m.v_max, m.omega_max),
            terminal_mode: m.terminal,
            slack_weight: m.slack_weight,
            forbid_reverse: m.forbid_reverse,
            avoidance: AvoidanceConfig {
                mode: a.mode,
                r_robot: a.r_robot,
                theta_s: a.theta_s_deg.to_radians(),
                hysteresis: a.hysteresis_deg.to_radians(),
                activation_distance: a.activation_distance,
                margin: a.margin,
                tau: a.tau,
            },
            qp: QpOptions {
                tol: m.qp_tol,
                max_iter: m.qp_max_iter,
            },
        };
        let scenario = Scenario {
            name: self.name.clone(),
            trajectory: self.trajectory.clone(),
            initial,
            initial_jitter: i.jitter,
            mpc,
            obstacles,
            duration: self.duration,
            seed: self.seed,
            terminal_set: TerminalSetSpec {
                state_max: t.state_max,
                search: LevelSearch { c0: t.c0, shrink: t.shrink },
            },
        };
        Ok(Resolved {
            file: self.clone(),
            scenario,
            sweep,
        })
    }

    /// TOML with every default written out.
    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("scenario files always serialize")
    }
}

/// Written next to outputs; `config` alone reproduces them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunManifest {
    pub tool_version: String,
    pub timestamp: String,
    pub command: String,
    pub config_path: String,
    pub out_dir: String,
    pub config: ScenarioFile,
}

impl RunManifest {
    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("manifests always serialize")
    }

    pub fn from_toml(text: &str) -> Result<Self, ConfigError> {
        toml::from_str(text).map_err(|e| ConfigError::from_toml(text, e))
    }
}
