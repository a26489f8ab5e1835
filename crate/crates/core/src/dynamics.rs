//! Unicycle kinematics, reference derivation, the robot-frame tracking error
//! and its linearization along a reference trajectory.

use std::f64::consts::PI;

use nalgebra::{Matrix3, Matrix3x2, Vector2, Vector3};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Below this angular rate the arc update switches to its series limit.
pub const OMEGA_EPS: f64 = 1e-6;

/// Minimum reference speed accepted by [`derive_reference`].
pub const V_MIN_REF: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DynamicsError {
    #[error("reference speed {speed:e} below minimum at sample {index}")]
    DegeneratePath { index: usize, speed: f64 },
    #[error("sampling time must be positive, got {0}")]
    BadSamplingTime(f64),
    #[error("reference trajectory is empty")]
    EmptyTrajectory,
}

/// Wraps an angle into (-pi, pi].
pub fn normalize_angle(a: f64) -> f64 {
    let mut r = a.rem_euclid(2.0 * PI);
    if r > PI {
        r -= 2.0 * PI;
    }
    // rem_euclid maps -pi to pi already; r == -pi cannot occur here
    r
}

/// Pose of the robot in the world frame.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RobotState {
    pub x: f64,
    pub y: f64,
    pub theta: f64,
}

impl RobotState {
    pub fn new(x: f64, y: f64, theta: f64) -> Self {
        Self {
            x,
            y,
            theta: normalize_angle(theta),
        }
    }

    pub fn position(&self) -> Vector2<f64> {
        Vector2::new(self.x, self.y)
    }

    pub fn heading(&self) -> Vector2<f64> {
        Vector2::new(self.theta.cos(), self.theta.sin())
    }
}

/// Linear speed `v` (m/s) and angular speed `omega` (rad/s).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ControlInput {
    pub v: f64,
    pub omega: f64,
}

impl ControlInput {
    pub fn new(v: f64, omega: f64) -> Self {
        Self { v, omega }
    }

    pub fn as_vector(&self) -> Vector2<f64> {
        Vector2::new(self.v, self.omega)
    }

    pub fn from_vector(u: &Vector2<f64>) -> Self {
        Self::new(u[0], u[1])
    }
}

/// Tracking error expressed in the robot frame: longitudinal, lateral, heading.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ErrorState {
    pub e1: f64,
    pub e2: f64,
    pub e3: f64,
}

impl ErrorState {
    pub fn new(e1: f64, e2: f64, e3: f64) -> Self {
        Self {
            e1,
            e2,
            e3: normalize_angle(e3),
        }
    }

    pub fn zero() -> Self {
        Self::new(0.0, 0.0, 0.0)
    }

    pub fn as_vector(&self) -> Vector3<f64> {
        Vector3::new(self.e1, self.e2, self.e3)
    }

    pub fn from_vector(e: &Vector3<f64>) -> Self {
        Self::new(e[0], e[1], e[2])
    }

    pub fn norm_inf(&self) -> f64 {
        self.e1.abs().max(self.e2.abs()).max(self.e3.abs())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReferencePoint {
    pub z_ref: RobotState,
    pub u_ref: ControlInput,
}

/// One sample of an analytic planar path: position and its first two time
/// derivatives.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PathSample {
    pub x: f64,
    pub dx: f64,
    pub ddx: f64,
    pub y: f64,
    pub dy: f64,
    pub ddy: f64,
}

/// Sampled reference, indexable by timestep. Indices past the end hold the
/// final point.
#[derive(Debug, Clone, PartialEq)]
pub struct ReferenceTrajectory {
    points: Vec<ReferencePoint>,
    dt: f64,
}

impl ReferenceTrajectory {
    pub fn new(points: Vec<ReferencePoint>, dt: f64) -> Result<Self, DynamicsError> {
        if points.is_empty() {
            return Err(DynamicsError::EmptyTrajectory);
        }
        if !(dt > 0.0) {
            return Err(DynamicsError::BadSamplingTime(dt));
        }
        Ok(Self { points, dt })
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn points(&self) -> &[ReferencePoint] {
        &self.points
    }

    pub fn get(&self, k: usize) -> &ReferencePoint {
        &self.points[k.min(self.points.len() - 1)]
    }

    /// Re-integrates the reference poses with the exact discrete dynamics
    /// under the stored reference inputs, starting from the first pose.
    ///
    /// The result is a dynamically feasible reference: applying `u_ref(k)`
    /// from `z_ref(k)` lands exactly on `z_ref(k+1)`.
    pub fn rollout_feasible(&self) -> Self {
        let mut points = Vec::with_capacity(self.points.len());
        let mut z = self.points[0].z_ref;
        for p in &self.points {
            points.push(ReferencePoint {
                z_ref: z,
                u_ref: p.u_ref,
            });
            z = step_discrete(&z, &p.u_ref, self.dt);
        }
        Self {
            points,
            dt: self.dt,
        }
    }
}

/// Continuous-time vector field `(v cos th, v sin th, omega)`.
pub fn step_continuous(z: &RobotState, u: &ControlInput) -> Vector3<f64> {
    Vector3::new(u.v * z.theta.cos(), u.v * z.theta.sin(), u.omega)
}

/// Exact discretization for piecewise-constant inputs held over `dt`.
pub fn step_discrete(z: &RobotState, u: &ControlInput, dt: f64) -> RobotState {
    debug_assert!(dt > 0.0);
    let dth = dt * u.omega;
    let (dx, dy) = if u.omega.abs() < OMEGA_EPS {
        let (s, c) = z.theta.sin_cos();
        let ds = dt * u.v;
        (
            ds * c - 0.5 * u.v * dt * dth * s,
            ds * s + 0.5 * u.v * dt * dth * c,
        )
    } else {
        // sin(a+h)-sin(a) = 2 cos(a+h/2) sin(h/2), and the cosine analogue;
        // avoids the cancellation of the textbook form for small omega.
        let half = 0.5 * dth;
        let chord = 2.0 * u.v / u.omega * half.sin();
        let mid = z.theta + half;
        (chord * mid.cos(), chord * mid.sin())
    };
    RobotState::new(z.x + dx, z.y + dy, z.theta + dth)
}

/// Reference inputs and heading from analytic path derivatives.
pub fn derive_reference(path: &[PathSample], dt: f64) -> Result<ReferenceTrajectory, DynamicsError> {
    if !(dt > 0.0) {
        return Err(DynamicsError::BadSamplingTime(dt));
    }
    let points = path
        .iter()
        .enumerate()
        .map(|(index, s)| {
            let speed_sq = s.dx * s.dx + s.dy * s.dy;
            let speed = speed_sq.sqrt();
            if !(speed >= V_MIN_REF) {
                return Err(DynamicsError::DegeneratePath { index, speed });
            }
            let theta = s.dy.atan2(s.dx);
            let omega = (s.dx * s.ddy - s.dy * s.ddx) / speed_sq;
            Ok(ReferencePoint {
                z_ref: RobotState::new(s.x, s.y, theta),
                u_ref: ControlInput::new(speed, omega),
            })
        })
        .collect::<Result<Vec<_>, _>>()?;
    ReferenceTrajectory::new(points, dt)
}

/// Fallback for paths known only by positions: central differences for the
/// derivatives (one-sided at the ends). Noisier than analytic derivatives.
pub fn path_from_positions(xy: &[(f64, f64)], dt: f64) -> Vec<PathSample> {
    let n = xy.len();
    let at = |i: isize| -> (f64, f64) { xy[i.clamp(0, n as isize - 1) as usize] };
    (0..n as isize)
        .map(|i| {
            let (x, y) = at(i);
            let (xp, yp) = at(i + 1);
            let (xm, ym) = at(i - 1);
            let span = if i == 0 || i == n as isize - 1 { dt } else { 2.0 * dt };
            PathSample {
                x,
                dx: (xp - xm) / span,
                ddx: (xp - 2.0 * x + xm) / (dt * dt),
                y,
                dy: (yp - ym) / span,
                ddy: (yp - 2.0 * y + ym) / (dt * dt),
            }
        })
        .collect()
}

/// Error of `z` relative to `reference`, rotated into the robot frame.
pub fn to_error_frame(z: &RobotState, reference: &ReferencePoint) -> ErrorState {
    let (s, c) = z.theta.sin_cos();
    let dx = reference.z_ref.x - z.x;
    let dy = reference.z_ref.y - z.y;
    ErrorState::new(c * dx + s * dy, -s * dx + c * dy, normalize_angle(reference.z_ref.theta - z.theta))
}

/// Inverse of [`to_error_frame`].
pub fn from_error_frame(e: &ErrorState, reference: &ReferencePoint) -> RobotState {
    let theta = normalize_angle(reference.z_ref.theta - e.e3);
    let (s, c) = theta.sin_cos();
    // world offset = R(theta)^T (e1, e2)
    let dx = c * e.e1 - s * e.e2;
    let dy = s * e.e1 + c * e.e2;
    RobotState::new(reference.z_ref.x - dx, reference.z_ref.y - dy, theta)
}

/// Discrete error dynamics `e(k+1) = A e(k) + B u_b(k)` at one reference point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinearModel {
    pub a: Matrix3<f64>,
    pub b: Matrix3x2<f64>,
    pub dt: f64,
}

/// Forward-Euler linearization of the error dynamics at the reference.
///
/// The feedback `u_b` is additive: the applied input is `u_ref + u_b`.
pub fn linearize(reference: &ReferencePoint, dt: f64) -> LinearModel {
    let wt = reference.u_ref.omega * dt;
    let vt = reference.u_ref.v * dt;
    #[rustfmt::skip]
    let a = Matrix3::new(
        1.0, wt,  0.0,
        -wt, 1.0, vt,
        0.0, 0.0, 1.0,
    );
    #[rustfmt::skip]
    let b = Matrix3x2::new(
        -dt, 0.0,
        0.0, 0.0,
        0.0, -dt,
    );
    LinearModel { a, b, dt }
}

/// Continuous error dynamics under feed-forward plus feedback, with the
/// small-heading-error simplification (`cos e3 ~ 1`) applied to the first row.
pub fn error_field_approx(e: &Vector3<f64>, u_b: &Vector2<f64>, u_ref: &ControlInput) -> Vector3<f64> {
    let omega = u_ref.omega + u_b[1];
    Vector3::new(
        -u_b[0] + e[1] * omega,
        u_ref.v * e[2].sin() - e[0] * omega,
        -u_b[1],
    )
}

/// Exact continuous error dynamics for applied input `u_ref + u_b`.
pub fn error_field_exact(e: &Vector3<f64>, u_b: &Vector2<f64>, u_ref: &ControlInput) -> Vector3<f64> {
    let v = u_ref.v + u_b[0];
    let omega = u_ref.omega + u_b[1];
    Vector3::new(
        u_ref.v * e[2].cos() - v + e[1] * omega,
        u_ref.v * e[2].sin() - e[0] * omega,
        u_ref.omega - omega,
    )
}
