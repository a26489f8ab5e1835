//! Sublevel-set terminal regions `{x : x'P(i)x <= c(i)}` and the level search
//! over their circumscribing boxes.

use nalgebra::{Matrix2x3, Matrix3, Vector2, Vector3};
use thiserror::Error;

use crate::riccati::TerminalSchedule;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TerminalSetError {
    #[error("terminal weight is not positive definite")]
    NotPositiveDefinite,
    #[error("level must be positive, got {0}")]
    BadLevel(f64),
    #[error("level search needs c0 > 0 and shrink > 1 (got c0 = {c0}, shrink = {shrink})")]
    BadSearch { c0: f64, shrink: f64 },
    #[error("no feasible level at step {step}: the origin itself violates the constraints")]
    OriginInfeasible { step: usize },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TerminalEllipsoid {
    pub p: Matrix3<f64>,
    pub c: f64,
}

impl TerminalEllipsoid {
    pub fn new(p: Matrix3<f64>, c: f64) -> Result<Self, TerminalSetError> {
        if !(c > 0.0) {
            return Err(TerminalSetError::BadLevel(c));
        }
        if p.cholesky().is_none() {
            return Err(TerminalSetError::NotPositiveDefinite);
        }
        Ok(Self { p, c })
    }

    pub fn contains(&self, x: &Vector3<f64>) -> bool {
        x.dot(&(self.p * x)) <= self.c
    }
}

/// Box aligned with the eigenvectors of `P`, circumscribing the ellipsoid.
#[derive(Debug, Clone, PartialEq)]
pub struct OuterPolyhedron {
    pub vertices: [Vector3<f64>; 8],
    /// Columns are the eigenvectors of `P`.
    pub axes: Matrix3<f64>,
    pub half_widths: Vector3<f64>,
}

impl OuterPolyhedron {
    /// Membership in the box, tested in its own eigenbasis.
    pub fn contains(&self, x: &Vector3<f64>, tol: f64) -> bool {
        let local = self.axes.transpose() * x;
        (0..3).all(|j| local[j].abs() <= self.half_widths[j] + tol)
    }
}

/// Eigen-decomposed weight of one step, reusable across levels.
#[derive(Debug, Clone)]
struct EigenFrame {
    axes: Matrix3<f64>,
    eigenvalues: Vector3<f64>,
}

impl EigenFrame {
    fn new(p: &Matrix3<f64>) -> Result<Self, TerminalSetError> {
        let eig = p.symmetric_eigen();
        if eig.eigenvalues.iter().any(|l| !(*l > 0.0)) {
            return Err(TerminalSetError::NotPositiveDefinite);
        }
        Ok(Self {
            axes: eig.eigenvectors,
            eigenvalues: eig.eigenvalues,
        })
    }

    fn polyhedron(&self, c: f64) -> OuterPolyhedron {
        let half_widths = self.eigenvalues.map(|l| (c / l).sqrt());
        let mut vertices = [Vector3::zeros(); 8];
        for (idx, v) in vertices.iter_mut().enumerate() {
            let corner = Vector3::from_fn(|j, _| {
                let sign = if idx >> j & 1 == 0 { 1.0 } else { -1.0 };
                sign * half_widths[j]
            });
            *v = self.axes * corner;
        }
        OuterPolyhedron {
            vertices,
            axes: self.axes,
            half_widths,
        }
    }
}

pub fn outer_polyhedron(ell: &TerminalEllipsoid) -> Result<OuterPolyhedron, TerminalSetError> {
    Ok(EigenFrame::new(&ell.p)?.polyhedron(ell.c))
}

/// Symmetric bounds on the error state and on the applied input.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConstraintSet {
    pub state_max: Vector3<f64>,
    pub input_max: Vector2<f64>,
}

/// True when every vertex respects the state bounds and the input the
/// terminal controller `u = K x + u_ref` would apply there.
pub fn vertices_feasible(
    poly: &OuterPolyhedron,
    bounds: &ConstraintSet,
    gain: &Matrix2x3<f64>,
    u_ref: &Vector2<f64>,
) -> bool {
    poly.vertices.iter().all(|x| {
        let u = gain * x + u_ref;
        (0..3).all(|j| x[j].abs() <= bounds.state_max[j])
            && (0..2).all(|j| u[j].abs() <= bounds.input_max[j])
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LevelSearch {
    pub c0: f64,
    pub shrink: f64,
}

impl Default for LevelSearch {
    fn default() -> Self {
        Self {
            c0: 10.0,
            shrink: 1.01,
        }
    }
}

/// Level and certified box for one step.
#[derive(Debug, Clone, PartialEq)]
pub struct TerminalLevel {
    pub step: usize,
    pub c: f64,
    pub polyhedron: OuterPolyhedron,
}

const MIN_LEVEL: f64 = 1e-12;

/// Largest `c0 / shrink^j` whose box passes [`vertices_feasible`], per step.
///
/// `u_refs` is indexed by step with clamping at its last entry.
pub fn compute_c_schedule(
    schedule: &TerminalSchedule,
    bounds: &ConstraintSet,
    u_refs: &[Vector2<f64>],
    search: LevelSearch,
) -> Result<Vec<TerminalLevel>, TerminalSetError> {
    if !(search.c0 > 0.0) || !(search.shrink > 1.0) {
        return Err(TerminalSetError::BadSearch {
            c0: search.c0,
            shrink: search.shrink,
        });
    }
    let zero = Vector2::zeros();
    (0..schedule.len())
        .map(|i| {
            let frame = EigenFrame::new(&schedule.p[i])?;
            let gain = schedule.gain(i);
            let u_ref = u_refs
                .get(i)
                .or(u_refs.last())
                .unwrap_or(&zero);
            let mut c = search.c0;
            loop {
                let poly = frame.polyhedron(c);
                if vertices_feasible(&poly, bounds, gain, u_ref) {
                    return Ok(TerminalLevel {
                        step: i,
                        c,
                        polyhedron: poly,
                    });
                }
                c /= search.shrink;
                if c < MIN_LEVEL {
                    return Err(TerminalSetError::OriginInfeasible { step: i });
                }
            }
        })
        .collect()
}
