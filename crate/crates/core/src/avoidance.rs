//! Linear obstacle-avoidance rows.
//!
//! Two constructions: half-planes on planned positions (rotated by a safety
//! angle), and tangent half-planes to a truncated velocity obstacle,
//! linearized over the feedback inputs.

use nalgebra::{Rotation2, Vector2};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AvoidanceError {
    #[error("obstacle radius must be positive, got {0}")]
    BadRadius(f64),
    #[error("robot and obstacle centres coincide")]
    Coincident,
    #[error("already in collision: distance {distance} <= combined radius {radius}")]
    InCollision { distance: f64, radius: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Obstacle {
    pub p: Vector2<f64>,
    pub r: f64,
    pub v: Vector2<f64>,
}

impl Obstacle {
    pub fn new(p: Vector2<f64>, r: f64, v: Vector2<f64>) -> Result<Self, AvoidanceError> {
        if !(r > 0.0) {
            return Err(AvoidanceError::BadRadius(r));
        }
        Ok(Self { p, r, v })
    }

    pub fn fixed(x: f64, y: f64, r: f64) -> Result<Self, AvoidanceError> {
        Self::new(Vector2::new(x, y), r, Vector2::zeros())
    }

    /// Position after `t` seconds at constant velocity.
    pub fn predict(&self, t: f64) -> Vector2<f64> {
        self.p + self.v * t
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Sense {
    Le,
    Ge,
}

/// `n·x <= a` or `n·x >= a`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HalfPlane {
    pub n: Vector2<f64>,
    pub a: f64,
    pub sense: Sense,
}

impl HalfPlane {
    /// Signed distance to the boundary, positive inside the allowed side.
    pub fn margin(&self, x: &Vector2<f64>) -> f64 {
        match self.sense {
            Sense::Le => self.a - self.n.dot(x),
            Sense::Ge => self.n.dot(x) - self.a,
        }
    }

    pub fn contains(&self, x: &Vector2<f64>) -> bool {
        self.margin(x) >= 0.0
    }
}

fn rotate(v: &Vector2<f64>, angle: f64) -> Vector2<f64> {
    Rotation2::new(angle) * v
}

fn cross(a: &Vector2<f64>, b: &Vector2<f64>) -> f64 {
    a.x * b.y - a.y * b.x
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StateSpacePlane {
    pub plane: HalfPlane,
    /// +1 rotates the robot-to-obstacle direction counter-clockwise.
    pub side: f64,
    /// Robot already within `r_safe` of the obstacle centre.
    pub inside_safety: bool,
}

/// Which side of the reference direction the obstacle lies on: +1 left, -1 right, ties left.
pub fn obstacle_side(p_robot: &Vector2<f64>, obstacle: &Obstacle, ref_heading: f64) -> f64 {
    let d = obstacle.p - p_robot;
    let dir = Vector2::new(ref_heading.cos(), ref_heading.sin());
    if cross(&dir, &d) >= 0.0 {
        1.0
    } else {
        -1.0
    }
}

/// Plane tangent to the safety disc, facing the robot, rotated by `theta_s`
/// away from the side the obstacle lies on.
pub fn state_space_halfplane(
    p_robot: &Vector2<f64>,
    obstacle: &Obstacle,
    theta_s: f64,
    r_safe: f64,
    ref_heading: f64,
) -> Result<StateSpacePlane, AvoidanceError> {
    let side = obstacle_side(p_robot, obstacle, ref_heading);
    state_space_halfplane_on_side(p_robot, obstacle, theta_s, r_safe, side)
}

pub fn state_space_halfplane_on_side(
    p_robot: &Vector2<f64>,
    obstacle: &Obstacle,
    theta_s: f64,
    r_safe: f64,
    side: f64,
) -> Result<StateSpacePlane, AvoidanceError> {
    let d = obstacle.p - p_robot;
    let dist = d.norm();
    if dist <= 1e-9 {
        return Err(AvoidanceError::Coincident);
    }
    let n = rotate(&(d / dist), side * theta_s);
    Ok(StateSpacePlane {
        plane: HalfPlane {
            n,
            a: n.dot(&obstacle.p) - r_safe,
            sense: Sense::Le,
        },
        side,
        inside_safety: dist < r_safe,
    })
}

/// Keeps the side choice until the obstacle crosses the reference direction
/// by more than `band` radians.
#[derive(Debug, Clone, PartialEq)]
pub struct SideHysteresis {
    pub band: f64,
    side: Option<f64>,
}

impl SideHysteresis {
    pub fn new(band: f64) -> Self {
        Self { band, side: None }
    }

    pub fn update(&mut self, p_robot: &Vector2<f64>, obstacle: &Obstacle, ref_heading: f64) -> f64 {
        let d = obstacle.p - p_robot;
        let dir = Vector2::new(ref_heading.cos(), ref_heading.sin());
        let angle = cross(&dir, &d).atan2(dir.dot(&d));
        let side = match self.side {
            None => obstacle_side(p_robot, obstacle, ref_heading),
            Some(s) if s > 0.0 && angle < -self.band => -1.0,
            Some(s) if s < 0.0 && angle > self.band => 1.0,
            Some(s) => s,
        };
        self.side = Some(side);
        side
    }
}

/// Velocity obstacle of a disc seen from the robot, as a cone in velocity space.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VoCone {
    pub apex: Vector2<f64>,
    pub axis: Vector2<f64>,
    pub half_angle: f64,
    pub tau: f64,
    /// Relative position `p_j - p_i`.
    pub offset: Vector2<f64>,
    /// Combined radius `r_i + r_j`.
    pub radius: f64,
}

impl VoCone {
    /// True when some `t` in `(0, tau]` puts `u` inside the disc
    /// `D((p_j - p_i)/t + v_j, (r_i + r_j)/t)`.
    pub fn contains_truncated(&self, u: &Vector2<f64>) -> bool {
        let w = u - self.apex;
        let c = &self.offset;
        let a = w.norm_squared();
        let wc = w.dot(c);
        let cc = c.norm_squared() - self.radius * self.radius;
        if a == 0.0 || wc <= 0.0 {
            return false;
        }
        let disc = wc * wc - a * cc;
        if disc < 0.0 {
            return false;
        }
        let t_enter = (wc - disc.sqrt()) / a;
        t_enter <= self.tau
    }

    /// Membership in the untruncated cone (every `t > 0`).
    pub fn contains(&self, u: &Vector2<f64>) -> bool {
        let w = u - self.apex;
        w.norm() > 0.0 && w.dot(&self.axis) >= w.norm() * self.half_angle.cos()
    }
}

pub fn velocity_obstacle(
    p_i: &Vector2<f64>,
    r_i: f64,
    obstacle: &Obstacle,
    tau: f64,
) -> Result<VoCone, AvoidanceError> {
    let offset = obstacle.p - p_i;
    let distance = offset.norm();
    let radius = r_i + obstacle.r;
    if distance <= radius {
        return Err(AvoidanceError::InCollision { distance, radius });
    }
    Ok(VoCone {
        apex: obstacle.v,
        axis: offset / distance,
        half_angle: (radius / distance).asin(),
        tau,
        offset,
        radius,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TangentSide {
    Left,
    Right,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TangentPlane {
    pub plane: HalfPlane,
    pub side: TangentSide,
}

/// Outward normal of the cone edge on `side`.
pub fn tangent_normal(cone: &VoCone, side: TangentSide) -> Vector2<f64> {
    let quarter = std::f64::consts::FRAC_PI_2;
    match side {
        TangentSide::Left => rotate(&cone.axis, quarter + cone.half_angle),
        TangentSide::Right => rotate(&cone.axis, -quarter - cone.half_angle),
    }
}

/// Tangent line through the apex on the side that restricts `u_pref` least.
pub fn tangent_halfplane(cone: &VoCone, u_pref: &Vector2<f64>) -> TangentPlane {
    let left = tangent_normal(cone, TangentSide::Left);
    let right = tangent_normal(cone, TangentSide::Right);
    let w = u_pref - cone.apex;
    let (n, side) = if left.dot(&w) >= right.dot(&w) {
        (left, TangentSide::Left)
    } else {
        (right, TangentSide::Right)
    };
    TangentPlane {
        plane: HalfPlane {
            n,
            a: n.dot(&cone.apex),
            sense: Sense::Ge,
        },
        side,
    }
}

/// `n·u(θ + ω dt) - a` for a unicycle with speed `u_norm`.
pub fn nonlinear_velocity_margin(n: &Vector2<f64>, a: f64, theta: f64, u_norm: f64, omega: f64, dt: f64) -> f64 {
    let phi = theta + omega * dt;
    n.x * u_norm * phi.cos() + n.y * u_norm * phi.sin() - a
}

/// `coef_u·e_u + coef_omega·e_ω + constant <= 0`, the margin linearized at
/// `(u_r, ω_r)` with `e_u`, `e_ω` the input deviations from it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VelocityRow {
    pub coef_u: f64,
    pub coef_omega: f64,
    pub constant: f64,
}

impl VelocityRow {
    pub fn value(&self, e_u: f64, e_omega: f64) -> f64 {
        self.coef_u * e_u + self.coef_omega * e_omega + self.constant
    }
}

pub fn velocity_constraint_row(n: &Vector2<f64>, a: f64, theta: f64, u_r: f64, omega_r: f64, dt: f64) -> VelocityRow {
    let (s, c) = (theta + omega_r * dt).sin_cos();
    VelocityRow {
        coef_u: -n.x * c - n.y * s,
        coef_omega: (n.x * u_r * s - n.y * u_r * c) * dt,
        constant: -n.x * u_r * c - n.y * u_r * s + a,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AvoidanceMode {
    #[default]
    Off,
    StateSpace,
    VelocitySpace,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AvoidanceConfig {
    pub mode: AvoidanceMode,
    pub r_robot: f64,
    /// Safety rotation for position half-planes, radians.
    pub theta_s: f64,
    /// Side-switch hysteresis, radians.
    pub hysteresis: f64,
    /// Velocity rows only for obstacles closer than this.
    pub activation_distance: f64,
    /// Added to the combined radius when building constraints.
    pub margin: f64,
    /// Velocity-obstacle truncation; `None` means horizon length times `dt`.
    pub tau: Option<f64>,
}

impl Default for AvoidanceConfig {
    fn default() -> Self {
        Self {
            mode: AvoidanceMode::Off,
            r_robot: 0.2,
            theta_s: 30f64.to_radians(),
            hysteresis: 5f64.to_radians(),
            activation_distance: 3.0,
            margin: 0.05,
            tau: None,
        }
    }
}

/// Predicted robot situation at one horizon step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HorizonPoint {
    pub p_ref: Vector2<f64>,
    /// Predicted heading.
    pub heading: f64,
    /// Predicted position.
    pub position: Vector2<f64>,
    /// Reference inputs `(v_r, ω_r)`.
    pub u_ref: Vector2<f64>,
}

/// `coef·e_pos(step) <= bound`, with `e_pos` the robot-frame position error.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PositionRow {
    pub step: usize,
    pub coef: Vector2<f64>,
    pub bound: f64,
}

/// `coef·(e_u, e_ω)(step) <= bound`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InputRow {
    pub step: usize,
    pub coef: Vector2<f64>,
    pub bound: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum AvoidanceRow {
    Position(PositionRow),
    Input(InputRow),
}

/// Half-plane `n·p <= a` on the world position `p = p_ref - R(θ)'e_pos`,
/// written over `e_pos`.
pub fn position_row(plane: &HalfPlane, point: &HorizonPoint, step: usize) -> PositionRow {
    // (R(θ) n)·e_pos >= n·p_ref - a
    let (s, c) = point.heading.sin_cos();
    let rn = Vector2::new(c * plane.n.x + s * plane.n.y, -s * plane.n.x + c * plane.n.y);
    PositionRow {
        step,
        coef: -rn,
        bound: plane.a - plane.n.dot(&point.p_ref),
    }
}

/// Position half-planes for every obstacle, with per-obstacle side memory.
#[derive(Debug, Clone)]
pub struct StateSpacePlanner {
    sides: Vec<SideHysteresis>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StateSpaceRows {
    pub planes: Vec<StateSpacePlane>,
    pub rows: Vec<PositionRow>,
}

impl StateSpacePlanner {
    pub fn new(n_obstacles: usize, band: f64) -> Self {
        Self {
            sides: vec![SideHysteresis::new(band); n_obstacles],
        }
    }

    /// One plane per obstacle from the current robot position, applied at
    /// horizon steps `1..=horizon.len()-1` (`horizon[0]` is the current step).
    pub fn rows(
        &mut self,
        cfg: &AvoidanceConfig,
        p_robot: &Vector2<f64>,
        ref_heading: f64,
        obstacles: &[Obstacle],
        horizon: &[HorizonPoint],
        dt: f64,
    ) -> StateSpaceRows {
        if self.sides.len() < obstacles.len() {
            self.sides.resize(obstacles.len(), SideHysteresis::new(cfg.hysteresis));
        }
        let mut out = StateSpaceRows {
            planes: vec![],
            rows: vec![],
        };
        for (obs, hyst) in obstacles.iter().zip(self.sides.iter_mut()) {
            let side = hyst.update(p_robot, obs, ref_heading);
            let r_safe = cfg.r_robot + obs.r + cfg.margin;
            let Ok(sp) = state_space_halfplane_on_side(p_robot, obs, cfg.theta_s, r_safe, side) else {
                continue;
            };
            for (j, point) in horizon.iter().enumerate().skip(1) {
                // moving obstacles shift the plane with them
                let shifted = HalfPlane {
                    a: sp.plane.a + sp.plane.n.dot(&(obs.v * (j as f64 * dt))),
                    ..sp.plane
                };
                out.rows.push(position_row(&shifted, point, j));
            }
            out.planes.push(sp);
        }
        out
    }
}

/// Velocity-obstacle constraint built for one horizon step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VelocityConstraint {
    pub step: usize,
    pub obstacle: usize,
    pub cone: VoCone,
    pub tangent: TangentPlane,
    pub row: VelocityRow,
}

impl VelocityConstraint {
    pub fn input_row(&self) -> InputRow {
        InputRow {
            step: self.step,
            coef: Vector2::new(self.row.coef_u, self.row.coef_omega),
            bound: -self.row.constant,
        }
    }
}

/// Linearized velocity-obstacle rows for horizon steps `0..horizon.len()-1`.
///
/// A row is emitted for an obstacle when it is within the activation
/// distance and reachable within `tau` at speed `v_max` plus its own speed.
pub fn velocity_rows(
    cfg: &AvoidanceConfig,
    obstacles: &[Obstacle],
    horizon: &[HorizonPoint],
    dt: f64,
    v_max: f64,
) -> Vec<VelocityConstraint> {
    let steps = horizon.len().saturating_sub(1);
    let tau = cfg.tau.unwrap_or(steps as f64 * dt);
    let mut out = vec![];
    for (oi, obs) in obstacles.iter().enumerate() {
        for (j, point) in horizon.iter().enumerate().take(steps) {
            let t = j as f64 * dt;
            let moved = Obstacle {
                p: obs.predict(t),
                r: obs.r + cfg.margin,
                v: obs.v,
            };
            let dist = (moved.p - point.position).norm();
            let reach = tau * (v_max + obs.v.norm());
            if dist > cfg.activation_distance || dist - (cfg.r_robot + moved.r) > reach {
                continue;
            }
            let cone = match velocity_obstacle(&point.position, cfg.r_robot, &moved, tau) {
                Ok(c) => c,
                Err(_) => {
                    // inside the inflated disc: fall back to the bare radius
                    let bare = Obstacle { r: obs.r, ..moved };
                    match velocity_obstacle(&point.position, cfg.r_robot, &bare, tau) {
                        Ok(c) => c,
                        Err(_) => continue,
                    }
                }
            };
            let u_pref = Vector2::new(point.heading.cos(), point.heading.sin()) * point.u_ref.x;
            let tangent = tangent_halfplane(&cone, &u_pref);
            let row = velocity_constraint_row(
                &tangent.plane.n,
                tangent.plane.a,
                point.heading,
                point.u_ref.x,
                point.u_ref.y,
                dt,
            );
            out.push(VelocityConstraint {
                step: j,
                obstacle: oi,
                cone,
                tangent,
                row,
            });
        }
    }
    out
}
