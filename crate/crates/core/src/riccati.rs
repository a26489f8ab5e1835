//! Terminal-cost design: discrete algebraic Riccati equation, LQR gains and
//! the backward recursion that produces one terminal weight per timestep.

use nalgebra::{Matrix2x3, Matrix3, SMatrix};
use thiserror::Error;

use crate::dynamics::LinearModel;

pub const DARE_TOL: f64 = 1e-10;
pub const DARE_MAX_ITER: usize = 100_000;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RiccatiError {
    #[error("cost matrix {which} is not symmetric")]
    NotSymmetric { which: &'static str },
    #[error("cost matrix Q must be positive semidefinite (smallest diagonal entry {0:e})")]
    QNotPsd(f64),
    #[error("cost matrix R must be positive definite (smallest diagonal entry {0:e})")]
    RNotPd(f64),
    #[error("Riccati iteration did not converge after {iterations} iterations (residual {residual:e})")]
    NoConvergence { iterations: usize, residual: f64 },
    #[error("R + B'PB is singular")]
    Singular,
    #[error("Riccati solution is not symmetric positive definite")]
    NotPositiveDefinite,
    #[error("DARE failed at timestep {step}: {source}")]
    AtStep {
        step: usize,
        #[source]
        source: Box<RiccatiError>,
    },
    #[error("empty model sequence")]
    EmptyModels,
}

/// Stage weights `Q` (state, PSD) and `R` (input, PD).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CostMatrices<const NX: usize = 3, const NU: usize = 2> {
    q: SMatrix<f64, NX, NX>,
    r: SMatrix<f64, NU, NU>,
}

impl<const NX: usize, const NU: usize> CostMatrices<NX, NU> {
    pub fn new(q: SMatrix<f64, NX, NX>, r: SMatrix<f64, NU, NU>) -> Result<Self, RiccatiError> {
        if (q - q.transpose()).amax() > 1e-12 * (1.0 + q.amax()) {
            return Err(RiccatiError::NotSymmetric { which: "Q" });
        }
        if (r - r.transpose()).amax() > 1e-12 * (1.0 + r.amax()) {
            return Err(RiccatiError::NotSymmetric { which: "R" });
        }
        // PSD test: Cholesky of a slightly lifted Q
        let lift = 1e-12 * (1.0 + q.amax());
        if (q + SMatrix::<f64, NX, NX>::identity() * lift).cholesky().is_none() {
            return Err(RiccatiError::QNotPsd(min_diagonal(&q)));
        }
        if r.cholesky().is_none() {
            return Err(RiccatiError::RNotPd(min_diagonal(&r)));
        }
        Ok(Self { q, r })
    }

    pub fn q(&self) -> &SMatrix<f64, NX, NX> {
        &self.q
    }

    pub fn r(&self) -> &SMatrix<f64, NU, NU> {
        &self.r
    }
}

impl CostMatrices<3, 2> {
    pub fn diagonal(q: [f64; 3], r: [f64; 2]) -> Result<Self, RiccatiError> {
        Self::new(
            Matrix3::from_diagonal(&q.into()),
            nalgebra::Matrix2::from_diagonal(&r.into()),
        )
    }
}

fn min_diagonal<const N: usize>(m: &SMatrix<f64, N, N>) -> f64 {
    m.diagonal().min()
}

fn symmetrize<const N: usize>(m: &SMatrix<f64, N, N>) -> SMatrix<f64, N, N> {
    (m + m.transpose()) * 0.5
}

/// One application of the Riccati map
/// `A'PA - A'PB (R + B'PB)^-1 B'PA + Q`.
pub fn riccati_map<const NX: usize, const NU: usize>(
    a: &SMatrix<f64, NX, NX>,
    b: &SMatrix<f64, NX, NU>,
    costs: &CostMatrices<NX, NU>,
    p: &SMatrix<f64, NX, NX>,
) -> Option<SMatrix<f64, NX, NX>> {
    let pa = p * a;
    let pb = p * b;
    let s = costs.r + b.transpose() * pb;
    let gain = s.cholesky()?.solve(&(b.transpose() * pa));
    Some(symmetrize(&(a.transpose() * pa - pa.transpose() * b * gain + costs.q)))
}

/// Frobenius norm of `P - riccati_map(P)`.
pub fn dare_residual<const NX: usize, const NU: usize>(
    a: &SMatrix<f64, NX, NX>,
    b: &SMatrix<f64, NX, NU>,
    costs: &CostMatrices<NX, NU>,
    p: &SMatrix<f64, NX, NX>,
) -> f64 {
    match riccati_map(a, b, costs, p) {
        Some(next) => (p - next).norm(),
        None => f64::INFINITY,
    }
}

/// Stabilizing solution of the DARE.
///
/// Uses the structure-preserving doubling iteration, then polishes with plain
/// Riccati steps until the fixed-point residual is below `tol`.
pub fn solve_dare<const NX: usize, const NU: usize>(
    a: &SMatrix<f64, NX, NX>,
    b: &SMatrix<f64, NX, NU>,
    costs: &CostMatrices<NX, NU>,
    tol: f64,
    max_iter: usize,
) -> Result<SMatrix<f64, NX, NX>, RiccatiError> {
    let r_inv = costs.r.try_inverse().ok_or(RiccatiError::Singular)?;
    let eye = SMatrix::<f64, NX, NX>::identity();
    let mut ak = *a;
    let mut gk = symmetrize(&(b * r_inv * b.transpose()));
    let mut hk = costs.q;

    let mut iterations = 0;
    let mut converged = false;
    // Doubling converges quadratically; a few dozen steps is already generous.
    while iterations < max_iter.min(200) {
        iterations += 1;
        let w = eye + gk * hk;
        let Some(w_inv) = w.try_inverse() else {
            break;
        };
        let a_next = ak * w_inv * ak;
        let g_next = symmetrize(&(gk + ak * w_inv * gk * ak.transpose()));
        let h_next = symmetrize(&(hk + ak.transpose() * hk * w_inv * ak));
        let delta = (h_next - hk).norm();
        let scale = h_next.norm().max(1.0);
        ak = a_next;
        gk = g_next;
        hk = h_next;
        if !hk.iter().all(|v| v.is_finite()) || scale > 1e14 {
            break;
        }
        if delta <= 1e-15 * scale {
            converged = true;
            break;
        }
    }

    let mut p = if converged && hk.iter().all(|v| v.is_finite()) {
        hk
    } else {
        costs.q
    };
    let mut residual = dare_residual(a, b, costs, &p);
    let mut k = 0;
    while residual > tol && iterations + k < max_iter {
        p = riccati_map(a, b, costs, &p).ok_or(RiccatiError::Singular)?;
        residual = dare_residual(a, b, costs, &p);
        if !residual.is_finite() || p.amax() > 1e14 {
            return Err(RiccatiError::NoConvergence {
                iterations: iterations + k,
                residual,
            });
        }
        k += 1;
    }
    if residual > tol {
        return Err(RiccatiError::NoConvergence {
            iterations: iterations + k,
            residual,
        });
    }
    if p.cholesky().is_none() {
        return Err(RiccatiError::NotPositiveDefinite);
    }
    Ok(p)
}

/// `K = -(R + B'PB)^-1 B'PA`, the optimal feedback `u = K x` for cost-to-go `P`.
pub fn lqr_gain<const NX: usize, const NU: usize>(
    a: &SMatrix<f64, NX, NX>,
    b: &SMatrix<f64, NX, NU>,
    p: &SMatrix<f64, NX, NX>,
    r: &SMatrix<f64, NU, NU>,
) -> Result<SMatrix<f64, NU, NX>, RiccatiError> {
    let s = r + b.transpose() * p * b;
    let k = s
        .cholesky()
        .ok_or(RiccatiError::Singular)?
        .solve(&(b.transpose() * p * a));
    if !k.iter().all(|v| v.is_finite()) {
        return Err(RiccatiError::Singular);
    }
    Ok(-k)
}

/// Numerical rank of `[B, AB, A^2 B]`.
pub fn controllability_rank(a: &Matrix3<f64>, b: &nalgebra::Matrix3x2<f64>) -> usize {
    let mut c = SMatrix::<f64, 3, 6>::zeros();
    let mut blk = *b;
    for j in 0..3 {
        c.fixed_view_mut::<3, 2>(0, 2 * j).copy_from(&blk);
        blk = a * blk;
    }
    let sv = c.singular_values();
    let smax = sv.max();
    if smax == 0.0 {
        return 0;
    }
    let thresh = smax * 3.0 * f64::EPSILON * 1e3;
    sv.iter().filter(|s| **s > thresh).count()
}

/// Terminal weights `P(0..=T)` and the per-step DARE gains `K(0..T)`.
#[derive(Debug, Clone, PartialEq)]
pub struct TerminalSchedule {
    pub p: Vec<Matrix3<f64>>,
    pub k: Vec<Matrix2x3<f64>>,
    /// Gain from the DARE at the final step; used past the end of `k`.
    pub terminal_gain: Matrix2x3<f64>,
}

impl TerminalSchedule {
    pub fn len(&self) -> usize {
        self.p.len()
    }

    pub fn is_empty(&self) -> bool {
        self.p.is_empty()
    }

    pub fn weight(&self, i: usize) -> &Matrix3<f64> {
        &self.p[i.min(self.p.len() - 1)]
    }

    pub fn gain(&self, i: usize) -> &Matrix2x3<f64> {
        self.k.get(i).unwrap_or(&self.terminal_gain)
    }

    /// Largest `|P(i) - (A_K' P(i+1) A_K + Q_K)|_F` over the schedule.
    pub fn recursion_residual(&self, models: &[LinearModel], costs: &CostMatrices) -> f64 {
        (0..self.k.len())
            .map(|i| {
                let m = &models[i];
                let k = &self.k[i];
                let ak = m.a + m.b * k;
                let qk = costs.q() + k.transpose() * costs.r() * k;
                (self.p[i] - (ak.transpose() * self.p[i + 1] * ak + qk)).norm()
            })
            .fold(0.0, f64::max)
    }
}

/// Backward recursion `P(i) = A_K(i)' P(i+1) A_K(i) + Q_K(i)` from the DARE
/// solution at the last step, with `K(i)` from the DARE of step `i`.
pub fn backward_riccati(models: &[LinearModel], costs: &CostMatrices) -> Result<TerminalSchedule, RiccatiError> {
    let last = models.len().checked_sub(1).ok_or(RiccatiError::EmptyModels)?;
    let dare = |i: usize| {
        let m = &models[i];
        solve_dare(&m.a, &m.b, costs, DARE_TOL, DARE_MAX_ITER)
            .and_then(|p| Ok((p, lqr_gain(&m.a, &m.b, &p, costs.r())?)))
            .map_err(|e| RiccatiError::AtStep {
                step: i,
                source: Box::new(e),
            })
    };

    let (p_end, terminal_gain) = dare(last)?;
    let mut p = vec![Matrix3::zeros(); last + 1];
    let mut k = vec![Matrix2x3::zeros(); last];
    p[last] = p_end;
    // Consecutive models are often identical; reuse the gain when they are.
    let mut cache: Option<(LinearModel, Matrix2x3<f64>)> = Some((models[last], terminal_gain));
    for i in (0..last).rev() {
        let m = &models[i];
        let gain = match &cache {
            Some((cm, g)) if cm == m => *g,
            _ => {
                let (_, g) = dare(i)?;
                cache = Some((*m, g));
                g
            }
        };
        let ak = m.a + m.b * gain;
        let qk = costs.q() + gain.transpose() * costs.r() * gain;
        p[i] = symmetrize(&(ak.transpose() * p[i + 1] * ak + qk));
        k[i] = gain;
    }
    if p.iter().any(|pi| pi.cholesky().is_none()) {
        return Err(RiccatiError::NotPositiveDefinite);
    }
    Ok(TerminalSchedule { p, k, terminal_gain })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::{linearize, ControlInput, ReferencePoint, RobotState};
    use approx::assert_abs_diff_eq;
    use nalgebra::{Matrix1, Matrix3x2};

    fn model(v: f64, w: f64, dt: f64) -> LinearModel {
        linearize(
            &ReferencePoint {
                z_ref: RobotState::new(0.0, 0.0, 0.0),
                u_ref: ControlInput::new(v, w),
            },
            dt,
        )
    }

    fn unit_costs() -> CostMatrices {
        CostMatrices::diagonal([1.0; 3], [1.0; 2]).unwrap()
    }

    /// Plain Riccati difference iteration, kept separate from the doubling
    /// route used by `solve_dare`.
    fn fixed_point<const NX: usize, const NU: usize>(
        a: &SMatrix<f64, NX, NX>,
        b: &SMatrix<f64, NX, NU>,
        c: &CostMatrices<NX, NU>,
        p0: SMatrix<f64, NX, NX>,
        tol: f64,
    ) -> SMatrix<f64, NX, NX> {
        let mut p = p0;
        for _ in 0..1_000_000 {
            let pa = p * a;
            let s = c.r() + b.transpose() * p * b;
            let next = a.transpose() * pa
                - pa.transpose() * b * s.try_inverse().unwrap() * b.transpose() * pa
                + c.q();
            let done = (next - p).norm() < tol;
            p = next;
            if done {
                break;
            }
        }
        p
    }

    #[test]
    fn cost_validation() {
        assert!(CostMatrices::diagonal([1.0, 1.0, 0.0], [1.0, 1.0]).is_ok());
        assert!(matches!(
            CostMatrices::diagonal([1.0, -1.0, 0.0], [1.0, 1.0]),
            Err(RiccatiError::QNotPsd(_))
        ));
        assert!(matches!(
            CostMatrices::diagonal([1.0; 3], [1.0, 0.0]),
            Err(RiccatiError::RNotPd(_))
        ));
        let mut q = Matrix3::identity();
        q[(0, 1)] = 0.5;
        assert!(matches!(
            CostMatrices::new(q, nalgebra::Matrix2::identity()),
            Err(RiccatiError::NotSymmetric { which: "Q" })
        ));
    }

    #[test]
    fn scalar_dare_is_golden_ratio() {
        let one = Matrix1::new(1.0);
        let c = CostMatrices::<1, 1>::new(one, one).unwrap();
        let p = solve_dare(&one, &one, &c, DARE_TOL, DARE_MAX_ITER).unwrap();
        let golden = (1.0 + 5f64.sqrt()) / 2.0;
        assert_abs_diff_eq!(p[(0, 0)], golden, epsilon = 1e-9);
        let k = lqr_gain(&one, &one, &p, &one).unwrap();
        assert_abs_diff_eq!(k[(0, 0)], -golden / (golden + 1.0), epsilon = 1e-9);
        assert_abs_diff_eq!(k[(0, 0)], -0.6180339, epsilon = 1e-7);
    }

    #[test]
    fn deadbeat_plant_gives_q() {
        let b = Matrix3x2::new(1.0, 0.0, 0.0, 2.0, 3.0, 1.0);
        let p = solve_dare(&Matrix3::zeros(), &b, &unit_costs(), DARE_TOL, DARE_MAX_ITER).unwrap();
        assert_abs_diff_eq!(p, Matrix3::identity(), epsilon = 1e-12);
        let k = lqr_gain(&Matrix3::zeros(), &b, &p, unit_costs().r()).unwrap();
        assert_eq!(k, Matrix2x3::zeros());
    }

    #[test]
    fn tracking_dare_matches_fixed_point_oracle() {
        let m = model(1.0, 0.5, 0.1);
        let c = unit_costs();
        let p = solve_dare(&m.a, &m.b, &c, DARE_TOL, DARE_MAX_ITER).unwrap();
        assert!(dare_residual(&m.a, &m.b, &c, &p) <= 1e-9);
        assert!(p.cholesky().is_some());
        let oracle = fixed_point(&m.a, &m.b, &c, *c.q(), 1e-12);
        assert_abs_diff_eq!(p, oracle, epsilon = 1e-6);

        let k = lqr_gain(&m.a, &m.b, &p, c.r()).unwrap();
        let rho = (m.a + m.b * k)
            .complex_eigenvalues()
            .iter()
            .map(|z| z.norm())
            .fold(0.0, f64::max);
        assert!(rho < 1.0, "spectral radius {rho}");
    }

    #[test]
    fn dare_is_insensitive_to_initialization() {
        let m = model(0.7, -1.2, 0.05);
        let c = CostMatrices::diagonal([1.0, 1.0, 0.5], [0.1, 0.05]).unwrap();
        let from_q = fixed_point(&m.a, &m.b, &c, *c.q(), 1e-12);
        let from_ten = fixed_point(&m.a, &m.b, &c, Matrix3::identity() * 10.0, 1e-12);
        assert_abs_diff_eq!(from_q, from_ten, epsilon = 1e-7);
        let p = solve_dare(&m.a, &m.b, &c, DARE_TOL, DARE_MAX_ITER).unwrap();
        assert_abs_diff_eq!(p, from_q, epsilon = 1e-7);
    }

    #[test]
    fn resting_reference_fails_loudly() {
        let m = model(0.0, 0.0, 0.1);
        let err = solve_dare(&m.a, &m.b, &unit_costs(), DARE_TOL, 10_000).unwrap_err();
        assert!(matches!(err, RiccatiError::NoConvergence { .. }), "{err:?}");

        let models = vec![model(1.0, 0.0, 0.1), model(0.0, 0.0, 0.1), model(1.0, 0.0, 0.1)];
        match backward_riccati(&models, &unit_costs()) {
            Err(RiccatiError::AtStep { step, .. }) => assert_eq!(step, 1),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn controllability_examples() {
        let m = model(1.0, 0.0, 0.1);
        assert_eq!(controllability_rank(&m.a, &m.b), 3);
        let m = model(0.0, 0.0, 0.1);
        assert_eq!(controllability_rank(&m.a, &m.b), 2);
        let m = model(0.0, 1.0, 0.1);
        assert_eq!(controllability_rank(&m.a, &m.b), 3);
    }

    #[test]
    fn constant_models_give_stationary_schedule() {
        let models = vec![model(1.0, 0.5, 0.1); 40];
        let c = unit_costs();
        let s = backward_riccati(&models, &c).unwrap();
        for p in &s.p {
            assert_abs_diff_eq!(*p, s.p[39], epsilon = 1e-8);
        }
        assert!(s.recursion_residual(&models, &c) <= 1e-9);
    }

    #[test]
    fn single_step_schedule() {
        let models = vec![model(1.0, 0.5, 0.1)];
        let s = backward_riccati(&models, &unit_costs()).unwrap();
        assert_eq!(s.p.len(), 1);
        assert!(s.k.is_empty());
        let p = solve_dare(&models[0].a, &models[0].b, &unit_costs(), DARE_TOL, DARE_MAX_ITER).unwrap();
        assert_eq!(s.p[0], p);
        assert!(backward_riccati(&[], &unit_costs()).is_err());
    }
}
