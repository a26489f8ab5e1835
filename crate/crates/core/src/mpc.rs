//! Per-step LTV MPC problem over the robot-frame tracking error.
//!
//! Decision vector `[e(1) .. e(N), u_b(0) .. u_b(N-1)]`; the objective is
//! `1/2 sum_j (e(j)'Q e(j) + u_b(j)'R u_b(j)) + 1/2 beta e(N)'P(k+N) e(N)`
//! and the applied input is `u_ref(k) + u_b(0)`.

use nalgebra::{DMatrix, DVector, Matrix3, Vector2, Vector3};
use thiserror::Error;

use crate::avoidance::{
    velocity_rows, AvoidanceConfig, AvoidanceMode, AvoidanceRow, HorizonPoint, InputRow, Obstacle, PositionRow,
    StateSpacePlane, StateSpacePlanner, VelocityConstraint,
};
use crate::dynamics::{linearize, to_error_frame, ControlInput, ErrorState, LinearModel, ReferenceTrajectory, RobotState};
use crate::qp::{QpError, QpOptions, QpProblem, QpSolver, QpStatus};
use crate::riccati::{backward_riccati, CostMatrices, RiccatiError, TerminalSchedule};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MpcError {
    #[error("invalid MPC configuration: {0}")]
    Config(String),
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error(transparent)]
    Riccati(#[from] RiccatiError),
    #[error(transparent)]
    Qp(#[from] QpError),
    #[error("QP infeasible at step {step}{}", if *.slacked { " even with slack" } else { "" })]
    Infeasible { step: usize, slacked: bool, detail: String },
    #[error("QP solver stopped at step {step}: {detail}")]
    SolverFailed { step: usize, detail: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TerminalMode {
    #[default]
    SoftBeta,
    None,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MpcConfig {
    pub horizon: usize,
    pub dt: f64,
    pub costs: CostMatrices,
    pub beta: f64,
    /// `(v_max, omega_max)`, symmetric bounds on the applied input.
    pub u_max: Vector2<f64>,
    pub terminal_mode: TerminalMode,
    pub slack_weight: f64,
    /// Keep the applied speed non-negative.
    pub forbid_reverse: bool,
    pub avoidance: AvoidanceConfig,
    pub qp: QpOptions,
}

impl MpcConfig {
    pub fn validate(&self) -> Result<(), MpcError> {
        let bad = |m: &str| Err(MpcError::Config(m.to_string()));
        if self.horizon < 1 {
            return bad("horizon must be ≥ 1");
        }
        if !(self.dt > 0.0) {
            return bad("sampling time must be > 0");
        }
        if !(self.u_max.x > 0.0 && self.u_max.y > 0.0) {
            return bad("input bounds must be > 0");
        }
        if !(self.beta >= 0.0) {
            return bad("beta must be ≥ 0");
        }
        if !(self.slack_weight >= 0.0) {
            return bad("slack weight must be ≥ 0");
        }
        Ok(())
    }

    /// Scale on `P(k+N)` in the objective.
    pub fn terminal_scale(&self) -> f64 {
        match self.terminal_mode {
            TerminalMode::SoftBeta => self.beta,
            TerminalMode::None => 0.0,
        }
    }
}

/// Index map of the stacked decision vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DecisionLayout {
    pub horizon: usize,
}

impl DecisionLayout {
    pub fn n_vars(&self) -> usize {
        5 * self.horizon
    }

    /// First index of `e(j)`, `1 <= j <= N`.
    pub fn e(&self, j: usize) -> usize {
        debug_assert!(j >= 1 && j <= self.horizon);
        3 * (j - 1)
    }

    /// First index of `u_b(j)`, `0 <= j < N`.
    pub fn u(&self, j: usize) -> usize {
        debug_assert!(j < self.horizon);
        3 * self.horizon + 2 * j
    }
}

/// Sparse inequality `sum coeffs <= bound` over the decision vector.
#[derive(Debug, Clone, PartialEq)]
pub struct DecisionRow {
    pub coeffs: Vec<(usize, f64)>,
    pub bound: f64,
}

impl DecisionRow {
    pub fn from_avoidance(row: &AvoidanceRow, layout: &DecisionLayout) -> Self {
        match row {
            AvoidanceRow::Position(PositionRow { step, coef, bound }) => {
                let i = layout.e(*step);
                Self {
                    coeffs: vec![(i, coef.x), (i + 1, coef.y)],
                    bound: *bound,
                }
            }
            AvoidanceRow::Input(InputRow { step, coef, bound }) => {
                let i = layout.u(*step);
                Self {
                    coeffs: vec![(i, coef.x), (i + 1, coef.y)],
                    bound: *bound,
                }
            }
        }
    }
}

/// `1/2 beta e'Pe`.
pub fn terminal_cost_value(e: &ErrorState, p: &Matrix3<f64>, beta: f64) -> f64 {
    let v = e.as_vector();
    0.5 * beta * v.dot(&(p * v))
}

/// `1/2 (e'Qe + u_b'R u_b)`.
pub fn stage_cost_value(e: &ErrorState, u_b: &Vector2<f64>, costs: &CostMatrices) -> f64 {
    let v = e.as_vector();
    0.5 * (v.dot(&(costs.q() * v)) + u_b.dot(&(costs.r() * u_b)))
}

/// Assembles the stacked QP at step `k`. Rows `0..4N` of the inequalities
/// are the input box (upper then lower per step), followed by `extra_rows`.
pub fn build_qp(
    e0: &ErrorState,
    k: usize,
    traj: &ReferenceTrajectory,
    models: &[LinearModel],
    schedule: &TerminalSchedule,
    cfg: &MpcConfig,
    extra_rows: &[DecisionRow],
) -> Result<QpProblem, MpcError> {
    cfg.validate()?;
    if models.is_empty() || schedule.is_empty() {
        return Err(MpcError::Dimension("models and terminal schedule must be non-empty".into()));
    }
    let n_h = cfg.horizon;
    let layout = DecisionLayout { horizon: n_h };
    let n = layout.n_vars();
    let model = |j: usize| &models[(k + j).min(models.len() - 1)];

    let mut h = DMatrix::zeros(n, n);
    for j in 1..n_h {
        h.view_mut((layout.e(j), layout.e(j)), (3, 3)).copy_from(cfg.costs.q());
    }
    let p_end = schedule.weight(k + n_h) * cfg.terminal_scale();
    h.view_mut((layout.e(n_h), layout.e(n_h)), (3, 3)).copy_from(&p_end);
    for j in 0..n_h {
        h.view_mut((layout.u(j), layout.u(j)), (2, 2)).copy_from(cfg.costs.r());
    }

    // e(j+1) - A e(j) - B u_b(j) = 0, with e(0) = e0 moved to the right
    let mut a_eq = DMatrix::zeros(3 * n_h, n);
    let mut b_eq = DVector::zeros(3 * n_h);
    for j in 0..n_h {
        let m = model(j);
        let r = 3 * j;
        a_eq.view_mut((r, layout.e(j + 1)), (3, 3)).copy_from(&Matrix3::identity());
        if j == 0 {
            b_eq.rows_mut(r, 3).copy_from(&(m.a * e0.as_vector()));
        } else {
            a_eq.view_mut((r, layout.e(j)), (3, 3)).copy_from(&(-m.a));
        }
        a_eq.view_mut((r, layout.u(j)), (3, 2)).copy_from(&(-m.b));
    }

    let m_in = 4 * n_h + extra_rows.len();
    let mut a_in = DMatrix::zeros(m_in, n);
    let mut b_in = DVector::zeros(m_in);
    for j in 0..n_h {
        let u_ref = traj.get(k + j).u_ref.as_vector();
        for c in 0..2 {
            let r = 4 * j + 2 * c;
            let col = layout.u(j) + c;
            let lower = if c == 0 && cfg.forbid_reverse { 0.0 } else { -cfg.u_max[c] };
            a_in[(r, col)] = 1.0;
            b_in[r] = cfg.u_max[c] - u_ref[c];
            a_in[(r + 1, col)] = -1.0;
            b_in[r + 1] = -(lower - u_ref[c]);
        }
    }
    for (i, row) in extra_rows.iter().enumerate() {
        let r = 4 * n_h + i;
        for &(col, v) in &row.coeffs {
            if col >= n {
                return Err(MpcError::Dimension(format!("extra row {i} references variable {col} of {n}")));
            }
            a_in[(r, col)] += v;
        }
        b_in[r] = row.bound;
    }
    Ok(QpProblem::new(h, DVector::zeros(n), a_eq, b_eq, a_in, b_in)?)
}

/// Appends one shared slack `s >= 0` relaxing rows `first..` with cost `1/2 w s^2`.
pub fn add_shared_slack(p: &QpProblem, first: usize, weight: f64) -> QpProblem {
    let n = p.n();
    let mut h = DMatrix::zeros(n + 1, n + 1);
    h.view_mut((0, 0), (n, n)).copy_from(&p.h);
    h[(n, n)] = weight;
    let mut g = DVector::zeros(n + 1);
    g.rows_mut(0, n).copy_from(&p.g);
    let a_eq = p.a_eq.clone().insert_column(n, 0.0);
    let mut a_in = p.a_in.clone().insert_column(n, 0.0).insert_row(p.m_in(), 0.0);
    for r in first..p.m_in() {
        a_in[(r, n)] = -1.0;
    }
    a_in[(p.m_in(), n)] = -1.0;
    let b_in = p.b_in.clone().insert_row(p.m_in(), 0.0);
    QpProblem {
        h,
        g,
        a_eq,
        b_eq: p.b_eq.clone(),
        a_in,
        b_in,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MpcStep {
    pub u_applied: ControlInput,
    /// `(e_u, e_omega)`, the solved `u_b(0)`.
    pub u_feedback: Vector2<f64>,
    /// `e(0) .. e(N)`.
    pub predicted_errors: Vec<ErrorState>,
    /// `1/2 (e0'Q e0 + u_b'R u_b)`.
    pub stage_cost: f64,
    /// `1/2 e0'P(k) e0`, without the beta scale.
    pub terminal_cost: f64,
    pub qp_status: QpStatus,
    pub objective: f64,
    pub kkt_residual: f64,
    pub qp_iterations: usize,
    pub avoidance_rows: usize,
    pub active_avoidance_rows: usize,
    pub slack_used: f64,
    pub velocity_constraints: Vec<VelocityConstraint>,
    pub position_planes: Vec<StateSpacePlane>,
}

/// Controller bound to one reference trajectory.
#[derive(Debug, Clone)]
pub struct MpcController {
    cfg: MpcConfig,
    traj: ReferenceTrajectory,
    models: Vec<LinearModel>,
    schedule: TerminalSchedule,
    solver: QpSolver,
    planner: StateSpacePlanner,
    last_prediction: Option<(usize, Vec<ErrorState>)>,
}

/// One linear model per reference point.
pub fn models_along(traj: &ReferenceTrajectory) -> Vec<LinearModel> {
    traj.points().iter().map(|p| linearize(p, traj.dt())).collect()
}

impl MpcController {
    pub fn new(cfg: MpcConfig, traj: ReferenceTrajectory) -> Result<Self, MpcError> {
        cfg.validate()?;
        let models = models_along(&traj);
        let schedule = backward_riccati(&models, &cfg.costs)?;
        Self::with_parts(cfg, traj, models, schedule)
    }

    pub fn with_parts(
        cfg: MpcConfig,
        traj: ReferenceTrajectory,
        models: Vec<LinearModel>,
        schedule: TerminalSchedule,
    ) -> Result<Self, MpcError> {
        cfg.validate()?;
        if models.is_empty() || schedule.is_empty() {
            return Err(MpcError::Dimension("models and terminal schedule must be non-empty".into()));
        }
        Ok(Self {
            solver: QpSolver::new(cfg.qp),
            planner: StateSpacePlanner::new(0, cfg.avoidance.hysteresis),
            cfg,
            traj,
            models,
            schedule,
            last_prediction: None,
        })
    }

    pub fn config(&self) -> &MpcConfig {
        &self.cfg
    }

    pub fn trajectory(&self) -> &ReferenceTrajectory {
        &self.traj
    }

    pub fn models(&self) -> &[LinearModel] {
        &self.models
    }

    pub fn schedule(&self) -> &TerminalSchedule {
        &self.schedule
    }

    /// Predicted errors `e(0..=N)`: the previous plan shifted by one step,
    /// or a zero-feedback rollout of the linear model.
    fn predicted_errors(&self, e0: &ErrorState, k: usize) -> Vec<ErrorState> {
        let n_h = self.cfg.horizon;
        let mut out = Vec::with_capacity(n_h + 1);
        out.push(*e0);
        if let Some((prev_k, prev)) = &self.last_prediction {
            if *prev_k + 1 == k {
                for j in 1..=n_h {
                    out.push(prev[(j + 1).min(n_h)]);
                }
                return out;
            }
        }
        let mut e = e0.as_vector();
        for j in 0..n_h {
            e = self.models[(k + j).min(self.models.len() - 1)].a * e;
            out.push(ErrorState::from_vector(&e));
        }
        out
    }

    fn horizon_points(&self, k: usize, predicted: &[ErrorState]) -> Vec<HorizonPoint> {
        predicted
            .iter()
            .enumerate()
            .map(|(j, e)| {
                let r = self.traj.get(k + j);
                let heading = r.z_ref.theta - e.e3;
                let (s, c) = heading.sin_cos();
                let p_ref = r.z_ref.position();
                HorizonPoint {
                    p_ref,
                    heading,
                    position: p_ref - Vector2::new(c * e.e1 - s * e.e2, s * e.e1 + c * e.e2),
                    u_ref: r.u_ref.as_vector(),
                }
            })
            .collect()
    }

    /// Solves the MPC problem from plant state `z` at step `k`.
    pub fn step(&mut self, z: &RobotState, k: usize, obstacles: &[Obstacle]) -> Result<MpcStep, MpcError> {
        let e0 = to_error_frame(z, self.traj.get(k));
        let layout = DecisionLayout {
            horizon: self.cfg.horizon,
        };
        let avoid = &self.cfg.avoidance;
        let mut rows = vec![];
        let mut velocity_constraints = vec![];
        let mut position_planes = vec![];
        if avoid.mode != AvoidanceMode::Off && !obstacles.is_empty() {
            let predicted = self.predicted_errors(&e0, k);
            let points = self.horizon_points(k, &predicted);
            match avoid.mode {
                AvoidanceMode::StateSpace => {
                    let out = self.planner.rows(
                        avoid,
                        &z.position(),
                        self.traj.get(k).z_ref.theta,
                        obstacles,
                        &points,
                        self.cfg.dt,
                    );
                    rows.extend(out.rows.iter().map(|r| DecisionRow::from_avoidance(&AvoidanceRow::Position(*r), &layout)));
                    position_planes = out.planes;
                }
                AvoidanceMode::VelocitySpace => {
                    velocity_constraints = velocity_rows(avoid, obstacles, &points, self.cfg.dt, self.cfg.u_max.x);
                    rows.extend(
                        velocity_constraints
                            .iter()
                            .map(|c| DecisionRow::from_avoidance(&AvoidanceRow::Input(c.input_row()), &layout)),
                    );
                }
                AvoidanceMode::Off => {}
            }
        }

        let qp = build_qp(&e0, k, &self.traj, &self.models, &self.schedule, &self.cfg, &rows)?;
        let first_avoid = 4 * self.cfg.horizon;
        let mut sol = self.solver.solve(&qp)?;
        let mut slack_used = 0.0;
        if sol.status == QpStatus::Infeasible && !rows.is_empty() {
            let slacked = add_shared_slack(&qp, first_avoid, self.cfg.slack_weight);
            self.solver.clear_warm_start();
            let s = self.solver.solve(&slacked)?;
            self.solver.clear_warm_start();
            if s.status == QpStatus::Infeasible {
                return Err(MpcError::Infeasible {
                    step: k,
                    slacked: true,
                    detail: s.diagnostic.unwrap_or_default(),
                });
            }
            slack_used = s.x[qp.n()].max(0.0);
            sol = s;
            sol.x = sol.x.rows(0, qp.n()).clone_owned();
            sol.active.retain(|&i| i < qp.m_in());
        }
        match sol.status {
            QpStatus::Optimal => {}
            QpStatus::Infeasible => {
                return Err(MpcError::Infeasible {
                    step: k,
                    slacked: false,
                    detail: sol.diagnostic.unwrap_or_default(),
                })
            }
            QpStatus::MaxIter => {
                return Err(MpcError::SolverFailed {
                    step: k,
                    detail: sol.diagnostic.unwrap_or_default(),
                })
            }
        }

        let x = &sol.x;
        let u_b = Vector2::new(x[layout.u(0)], x[layout.u(0) + 1]);
        let mut predicted_errors = vec![e0];
        for j in 1..=self.cfg.horizon {
            let i = layout.e(j);
            predicted_errors.push(ErrorState::from_vector(&Vector3::new(x[i], x[i + 1], x[i + 2])));
        }
        self.last_prediction = Some((k, predicted_errors.clone()));
        let u_ref = self.traj.get(k).u_ref;
        Ok(MpcStep {
            u_applied: ControlInput::new(u_ref.v + u_b.x, u_ref.omega + u_b.y),
            u_feedback: u_b,
            stage_cost: stage_cost_value(&e0, &u_b, &self.cfg.costs),
            terminal_cost: terminal_cost_value(&e0, self.schedule.weight(k), 1.0),
            qp_status: sol.status,
            objective: qp.objective(x),
            kkt_residual: sol.kkt_residual,
            qp_iterations: sol.iterations,
            avoidance_rows: rows.len(),
            active_avoidance_rows: sol.active.iter().filter(|&&i| i >= first_avoid).count(),
            slack_used,
            predicted_errors,
            velocity_constraints,
            position_planes,
        })
    }

    /// Unconstrained time-varying LQR: `u_b = K(k) e0`, no clipping.
    pub fn lqr_step(&self, z: &RobotState, k: usize) -> MpcStep {
        let e0 = to_error_frame(z, self.traj.get(k));
        let u_b = self.schedule.gain(k) * e0.as_vector();
        let u_ref = self.traj.get(k).u_ref;
        let mut predicted_errors = vec![e0];
        let mut e = e0.as_vector();
        for j in 0..self.cfg.horizon {
            let i = (k + j).min(self.models.len() - 1);
            let m = &self.models[i];
            e = (m.a + m.b * self.schedule.gain(k + j)) * e;
            predicted_errors.push(ErrorState::from_vector(&e));
        }
        MpcStep {
            u_applied: ControlInput::new(u_ref.v + u_b.x, u_ref.omega + u_b.y),
            u_feedback: u_b,
            predicted_errors,
            stage_cost: stage_cost_value(&e0, &u_b, &self.cfg.costs),
            terminal_cost: terminal_cost_value(&e0, self.schedule.weight(k), 1.0),
            qp_status: QpStatus::Optimal,
            objective: 0.0,
            kkt_residual: 0.0,
            qp_iterations: 0,
            avoidance_rows: 0,
            active_avoidance_rows: 0,
            slack_used: 0.0,
            velocity_constraints: vec![],
            position_planes: vec![],
        }
    }
}
