use nalgebra::{Matrix1, Matrix3, SymmetricEigen, Vector2, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use unimpc::dynamics::LinearModel;
use unimpc::mpc::models_along;
use unimpc::riccati::*;
use unimpc::sim::TrajectorySpec;
use unimpc::terminal_set::*;

fn costs() -> CostMatrices {
    CostMatrices::diagonal([1.0, 1.0, 0.5], [0.1, 0.05]).unwrap()
}

fn sinusoid_models(len: usize) -> (Vec<LinearModel>, Vec<Vector2<f64>>) {
    let traj = TrajectorySpec::default().reference(len, 0.05).unwrap();
    let u_refs = traj.points().iter().map(|p| p.u_ref.as_vector()).collect();
    (models_along(&traj), u_refs)
}

#[test]
fn scalar_dare_is_golden_ratio() {
    let c = CostMatrices::<1, 1>::new(Matrix1::new(1.0), Matrix1::new(1.0)).unwrap();
    let p = solve_dare(&Matrix1::new(1.0), &Matrix1::new(1.0), &c, 1e-12, 10_000).unwrap();
    assert!((p[(0, 0)] - (1.0 + 5f64.sqrt()) / 2.0).abs() <= 1e-6);
}

#[test]
fn unicycle_dare_residual_is_small() {
    let (models, _) = sinusoid_models(120);
    for m in models.iter().step_by(17) {
        let p = solve_dare(&m.a, &m.b, &costs(), DARE_TOL, DARE_MAX_ITER).unwrap();
        assert!(dare_residual(&m.a, &m.b, &costs(), &p) <= 1e-9);
    }
}

#[test]
fn backward_recursion_holds_per_step() {
    let (models, _) = sinusoid_models(101);
    let sched = backward_riccati(&models, &costs()).unwrap();
    assert_eq!(sched.len(), 101);
    assert!(sched.recursion_residual(&models, &costs()) <= 1e-9);
}

#[test]
fn constant_model_schedule_is_stationary() {
    let line = TrajectorySpec::Line {
        start: [0.0, 0.0],
        heading_deg: 20.0,
        speed: 0.7,
    };
    let models = models_along(&line.reference(80, 0.05).unwrap());
    let sched = backward_riccati(&models, &costs()).unwrap();
    let last = sched.p[sched.len() - 1];
    for p in &sched.p {
        assert!((p - last).amax() <= 1e-8);
    }
}

#[test]
fn lyapunov_identity_on_random_states() {
    let (models, _) = sinusoid_models(60);
    let sched = backward_riccati(&models, &costs()).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let c = costs();
    for _ in 0..1000 {
        let x = Vector3::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
        for (i, m) in models.iter().enumerate().take(sched.k.len()) {
            let k = sched.gain(i);
            let ak = m.a + m.b * k;
            let qk = c.q() + k.transpose() * c.r() * k;
            let lhs = (x.transpose() * sched.p[i] * x)[0] - (x.transpose() * ak.transpose() * sched.p[i + 1] * ak * x)[0];
            let rhs = (x.transpose() * qk * x)[0];
            assert!((lhs - rhs).abs() <= 1e-9 * x.norm_squared().max(1e-300));
        }
    }
}

/// Point on the ellipsoid boundary `x'Px = c` in direction `d`.
fn boundary_point(p: &Matrix3<f64>, c: f64, d: &Vector3<f64>) -> Vector3<f64> {
    d * (c / (d.transpose() * p * d)[0]).sqrt()
}

#[test]
fn level_schedule_certifies_every_step() {
    let (models, u_refs) = sinusoid_models(601);
    let sched = backward_riccati(&models, &costs()).unwrap();
    let bounds = ConstraintSet {
        state_max: Vector3::new(1.0, 1.0, std::f64::consts::FRAC_PI_2),
        input_max: Vector2::new(2.0, 10.0),
    };
    let levels = compute_c_schedule(&sched, &bounds, &u_refs, LevelSearch::default()).unwrap();
    assert_eq!(levels.len(), sched.len());
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for l in &levels {
        let u_ref = u_refs[l.step.min(u_refs.len() - 1)];
        assert!(vertices_feasible(&l.polyhedron, &bounds, sched.gain(l.step), &u_ref));
        let p = sched.weight(l.step);
        let eig = SymmetricEigen::new(*p);
        assert!(eig.eigenvalues.min() > 0.0);
        for _ in 0..50 {
            let d = Vector3::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
            if d.norm() < 1e-6 {
                continue;
            }
            let x = boundary_point(p, l.c, &d);
            assert!(l.polyhedron.contains(&x, 1e-9), "step {}", l.step);
        }
    }
}

#[test]
fn ellipsoid_sits_inside_its_box() {
    let p = Matrix3::new(4.0, 1.0, 0.0, 1.0, 3.0, 0.5, 0.0, 0.5, 2.0);
    let ell = TerminalEllipsoid::new(p, 0.7).unwrap();
    let poly = outer_polyhedron(&ell).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    for _ in 0..1000 {
        let d = Vector3::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
        let x = boundary_point(&p, 0.7, &d);
        assert!(ell.contains(&(x * (1.0 - 1e-9))));
        assert!(poly.contains(&x, 1e-9));
    }
    // each box face touches the ellipsoid
    for j in 0..3 {
        let axis = poly.axes.column(j).into_owned();
        let x = boundary_point(&p, 0.7, &(p.try_inverse().unwrap() * axis));
        assert!((axis.dot(&x).abs() - poly.half_widths[j]).abs() <= 1e-9);
    }
}
