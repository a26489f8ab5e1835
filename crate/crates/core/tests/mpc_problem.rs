use nalgebra::{DMatrix, DVector, Matrix2, Matrix2x3, Matrix3, Matrix3x2, Vector2, Vector3};
use unimpc::avoidance::AvoidanceConfig;
use unimpc::dynamics::*;
use unimpc::mpc::*;
use unimpc::qp::{solve_qp, QpOptions};
use unimpc::riccati::{backward_riccati, CostMatrices, TerminalSchedule};

fn sinusoid(len: usize, dt: f64) -> ReferenceTrajectory {
    let path: Vec<PathSample> = (0..len)
        .map(|i| {
            let t = dt * i as f64;
            PathSample {
                x: 0.5 * t,
                dx: 0.5,
                ddx: 0.0,
                y: (0.5 * t).sin(),
                dy: 0.5 * (0.5 * t).cos(),
                ddy: -0.25 * (0.5 * t).sin(),
            }
        })
        .collect();
    derive_reference(&path, dt).unwrap().rollout_feasible()
}

fn config(horizon: usize, beta: f64) -> MpcConfig {
    MpcConfig {
        horizon,
        dt: 0.05,
        costs: CostMatrices::diagonal([1.0, 1.0, 0.5], [0.1, 0.05]).unwrap(),
        beta,
        u_max: Vector2::new(2.0, 10.0),
        terminal_mode: TerminalMode::SoftBeta,
        slack_weight: 1e4,
        forbid_reverse: false,
        avoidance: AvoidanceConfig::default(),
        qp: QpOptions {
            tol: 1e-10,
            max_iter: 2000,
        },
    }
}

/// Dense finite-horizon Riccati pass over the same models and terminal weight.
fn batch_lqr(
    e0: &Vector3<f64>,
    k: usize,
    models: &[LinearModel],
    terminal: &Matrix3<f64>,
    q: &Matrix3<f64>,
    r: &Matrix2<f64>,
    horizon: usize,
) -> (Vec<Vector3<f64>>, Vec<Vector2<f64>>) {
    let m = |j: usize| &models[(k + j).min(models.len() - 1)];
    let mut p = *terminal;
    let mut gains = vec![Matrix2x3::zeros(); horizon];
    for j in (0..horizon).rev() {
        let (a, b) = (m(j).a, m(j).b);
        let s = r + b.transpose() * p * b;
        let gain = -s.try_inverse().unwrap() * b.transpose() * p * a;
        p = q + a.transpose() * p * a + a.transpose() * p * b * gain;
        gains[j] = gain;
    }
    let mut e = *e0;
    let mut es = vec![];
    let mut us = vec![];
    for (j, g) in gains.iter().enumerate() {
        let u = g * e;
        e = m(j).a * e + m(j).b * u;
        us.push(u);
        es.push(e);
    }
    (es, us)
}

#[test]
fn unconstrained_solution_matches_batch_riccati() {
    let traj = sinusoid(200, 0.05);
    for (horizon, beta) in [(1, 1.0), (5, 1.0), (10, 1.0), (20, 2.5)] {
        let cfg = config(horizon, beta);
        let models = models_along(&traj);
        let sched = backward_riccati(&models, &cfg.costs).unwrap();
        for k in [0, 37, 150] {
            let e0 = ErrorState::new(0.05, -0.03, 0.02);
            let qp = build_qp(&e0, k, &traj, &models, &sched, &cfg, &[]).unwrap();
            let sol = solve_qp(&qp, 1e-10, 1000).unwrap();
            assert!(sol.is_optimal());
            assert!(sol.active.is_empty());
            let terminal = sched.weight(k + horizon) * beta;
            let (es, us) = batch_lqr(&e0.as_vector(), k, &models, &terminal, cfg.costs.q(), cfg.costs.r(), horizon);
            let layout = DecisionLayout { horizon };
            for j in 0..horizon {
                let u = Vector2::new(sol.x[layout.u(j)], sol.x[layout.u(j) + 1]);
                assert!((u - us[j]).amax() <= 1e-6, "N={horizon} k={k} j={j}");
                let i = layout.e(j + 1);
                let e = Vector3::new(sol.x[i], sol.x[i + 1], sol.x[i + 2]);
                assert!((e - es[j]).amax() <= 1e-6);
            }
        }
    }
}

#[test]
fn one_step_problem_matches_hand_assembly() {
    // toy model, not a unicycle linearization
    let a = Matrix3::new(2.0, 0.0, 0.0, 0.0, 0.5, 0.0, 0.0, 0.0, 1.0);
    let b = Matrix3x2::new(1.0, 0.0, 0.0, 0.0, 0.0, 3.0);
    let model = LinearModel { a, b, dt: 0.1 };
    let traj = ReferenceTrajectory::new(
        vec![ReferencePoint {
            z_ref: RobotState::new(0.0, 0.0, 0.0),
            u_ref: ControlInput::new(0.5, 1.0),
        }],
        0.1,
    )
    .unwrap();
    let sched = TerminalSchedule {
        p: vec![Matrix3::identity() * 7.0],
        k: vec![],
        terminal_gain: Matrix2x3::zeros(),
    };
    let mut cfg = config(1, 0.0);
    cfg.dt = 0.1;
    let e0 = ErrorState::new(1.0, 2.0, 3.0);
    let qp = build_qp(&e0, 0, &traj, &[model], &sched, &cfg, &[]).unwrap();

    #[rustfmt::skip]
    let h = DMatrix::from_row_slice(5, 5, &[
        0.0, 0.0, 0.0, 0.0, 0.0,
        0.0, 0.0, 0.0, 0.0, 0.0,
        0.0, 0.0, 0.0, 0.0, 0.0,
        0.0, 0.0, 0.0, 0.1, 0.0,
        0.0, 0.0, 0.0, 0.0, 0.05,
    ]);
    #[rustfmt::skip]
    let a_eq = DMatrix::from_row_slice(3, 5, &[
        1.0, 0.0, 0.0, -1.0, 0.0,
        0.0, 1.0, 0.0, 0.0, 0.0,
        0.0, 0.0, 1.0, 0.0, -3.0,
    ]);
    let b_eq = DVector::from_column_slice(&[2.0, 1.0, 3.0]);
    #[rustfmt::skip]
    let a_in = DMatrix::from_row_slice(4, 5, &[
        0.0, 0.0, 0.0, 1.0, 0.0,
        0.0, 0.0, 0.0, -1.0, 0.0,
        0.0, 0.0, 0.0, 0.0, 1.0,
        0.0, 0.0, 0.0, 0.0, -1.0,
    ]);
    let b_in = DVector::from_column_slice(&[1.5, 2.5, 9.0, 11.0]);
    assert_eq!(qp.h, h);
    assert_eq!(qp.g, DVector::zeros(5));
    assert_eq!(qp.a_eq, a_eq);
    assert_eq!(qp.b_eq, b_eq);
    assert_eq!(qp.a_in, a_in);
    assert_eq!(qp.b_in, b_in);

    let sol = solve_qp(&qp, 1e-10, 100).unwrap();
    assert!(sol.is_optimal());
    let expected = DVector::from_column_slice(&[2.0, 1.0, 3.0, 0.0, 0.0]);
    assert!((&sol.x - expected).amax() <= 1e-12);
}

#[test]
fn applied_input_respects_bounds_under_large_error() {
    let traj = sinusoid(200, 0.05);
    let mut c = MpcController::new(config(10, 1.0), traj.clone()).unwrap();
    let z = from_error_frame(&ErrorState::new(0.0, 1.0, 2.0), traj.get(0));
    let step = c.step(&z, 0, &[]).unwrap();
    assert!(step.u_applied.v.abs() <= 2.0 + 1e-9);
    assert!(step.u_applied.omega.abs() <= 10.0 + 1e-9);
    let lqr = c.lqr_step(&z, 0);
    assert!(lqr.u_applied.omega.abs() > 10.0);
}

#[test]
fn reverse_motion_can_be_forbidden() {
    let traj = sinusoid(200, 0.05);
    let mut cfg = config(10, 1.0);
    cfg.forbid_reverse = true;
    let mut c = MpcController::new(cfg, traj.clone()).unwrap();
    // robot well ahead of the reference wants to back up
    let r = traj.get(0).z_ref;
    let z = RobotState::new(r.x + 0.8 * r.theta.cos(), r.y + 0.8 * r.theta.sin(), r.theta);
    let step = c.step(&z, 0, &[]).unwrap();
    assert!(step.u_applied.v >= -1e-9);
}
