//! Linear time-varying model predictive control for unicycle robots.
//!
//! The controller linearizes the robot-frame tracking error along a
//! reference trajectory, designs a time-varying terminal cost from the
//! discrete algebraic Riccati equation, and solves one convex QP per step.
//! Obstacles enter as linear rows, either as half-planes on planned
//! positions or as linearized velocity-obstacle constraints on the inputs.

// NaN must fail the `!(x > 0.0)` style checks.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod dynamics;
pub mod riccati;
pub mod terminal_set;
pub mod qp;
pub mod avoidance;
pub mod mpc;
pub mod sim;
pub mod config;
