//! Dense convex QP solver.
//!
//! Solves
//!
//! ```text
//! min  1/2 x'Hx + g'x
//! s.t. A_eq x  = b_eq
//!      A_in x <= b_in
//! ```
//!
//! Equalities are eliminated with a column-pivoted QR of `A_eq`; the reduced
//! inequality-constrained problem is solved by a dual active-set method
//! (Goldfarb-Idnani), which also certifies infeasibility. A reduced Hessian
//! that is only semidefinite is handled with proximal-point outer iterations.
//!
//! Multipliers follow the convention `Hx + g + A_eq'λ + A_in'μ = 0`, `μ >= 0`.

use std::fmt::Write as _;

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum QpError {
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("Hessian is not symmetric (asymmetry {0:e})")]
    NotSymmetric(f64),
    #[error("objective is not convex on the equality null space (eigenvalue {0:e})")]
    NotConvex(f64),
    #[error("malformed QP text at line {line}: {msg}")]
    Parse { line: usize, msg: String },
}

#[derive(Debug, Clone, PartialEq)]
pub struct QpProblem {
    pub h: DMatrix<f64>,
    pub g: DVector<f64>,
    pub a_eq: DMatrix<f64>,
    pub b_eq: DVector<f64>,
    pub a_in: DMatrix<f64>,
    pub b_in: DVector<f64>,
}

impl QpProblem {
    pub fn new(
        h: DMatrix<f64>,
        g: DVector<f64>,
        a_eq: DMatrix<f64>,
        b_eq: DVector<f64>,
        a_in: DMatrix<f64>,
        b_in: DVector<f64>,
    ) -> Result<Self, QpError> {
        let n = g.len();
        if h.shape() != (n, n) {
            return Err(QpError::Dimension(format!("H is {:?}, expected ({n}, {n})", h.shape())));
        }
        if a_eq.ncols() != n || a_eq.nrows() != b_eq.len() {
            return Err(QpError::Dimension(format!(
                "A_eq is {:?} with {} right-hand sides, n = {n}",
                a_eq.shape(),
                b_eq.len()
            )));
        }
        if a_in.ncols() != n || a_in.nrows() != b_in.len() {
            return Err(QpError::Dimension(format!(
                "A_in is {:?} with {} right-hand sides, n = {n}",
                a_in.shape(),
                b_in.len()
            )));
        }
        if a_eq.nrows() > n {
            return Err(QpError::Dimension(format!("{} equalities for {n} variables", a_eq.nrows())));
        }
        let asym = (&h - h.transpose()).amax();
        if asym > 1e-10 * (1.0 + h.amax()) {
            return Err(QpError::NotSymmetric(asym));
        }
        Ok(Self {
            h,
            g,
            a_eq,
            b_eq,
            a_in,
            b_in,
        })
    }

    pub fn unconstrained(h: DMatrix<f64>, g: DVector<f64>) -> Result<Self, QpError> {
        let n = g.len();
        Self::new(h, g, DMatrix::zeros(0, n), DVector::zeros(0), DMatrix::zeros(0, n), DVector::zeros(0))
    }

    pub fn n(&self) -> usize {
        self.g.len()
    }

    pub fn m_eq(&self) -> usize {
        self.b_eq.len()
    }

    pub fn m_in(&self) -> usize {
        self.b_in.len()
    }

    pub fn objective(&self, x: &DVector<f64>) -> f64 {
        0.5 * x.dot(&(&self.h * x)) + self.g.dot(x)
    }

    /// Plain-text dump: a dimensions header followed by each block in
    /// row-major order, 17 significant digits per entry.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "qp {} {} {}", self.n(), self.m_eq(), self.m_in());
        let mut block = |name: &str, m: &DMatrix<f64>| {
            let _ = writeln!(out, "{name} {} {}", m.nrows(), m.ncols());
            for i in 0..m.nrows() {
                let row: Vec<String> = (0..m.ncols()).map(|j| format!("{:.16e}", m[(i, j)])).collect();
                let _ = writeln!(out, "{}", row.join(" "));
            }
        };
        block("H", &self.h);
        block("g", &DMatrix::from_row_slice(1, self.n(), self.g.as_slice()));
        block("A_eq", &self.a_eq);
        block("b_eq", &DMatrix::from_row_slice(1, self.m_eq(), self.b_eq.as_slice()));
        block("A_in", &self.a_in);
        block("b_in", &DMatrix::from_row_slice(1, self.m_in(), self.b_in.as_slice()));
        out
    }

    pub fn from_text(text: &str) -> Result<Self, QpError> {
        let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
        let err = |line: usize, msg: &str| QpError::Parse {
            line: line + 1,
            msg: msg.to_string(),
        };
        let (ln, header) = lines.next().ok_or_else(|| err(0, "empty input"))?;
        let dims: Vec<&str> = header.split_whitespace().collect();
        if dims.len() != 4 || dims[0] != "qp" {
            return Err(err(ln, "expected `qp n m_eq m_in`"));
        }
        let mut read_block = |name: &str| -> Result<DMatrix<f64>, QpError> {
            let (ln, head) = lines.next().ok_or_else(|| err(usize::MAX - 1, "unexpected end of input"))?;
            let parts: Vec<&str> = head.split_whitespace().collect();
            if parts.len() != 3 || parts[0] != name {
                return Err(err(ln, &format!("expected `{name} rows cols`")));
            }
            let rows: usize = parts[1].parse().map_err(|_| err(ln, "bad row count"))?;
            let cols: usize = parts[2].parse().map_err(|_| err(ln, "bad column count"))?;
            let mut data = Vec::with_capacity(rows * cols);
            for _ in 0..rows {
                if cols == 0 {
                    continue;
                }
                let (ln, row) = lines.next().ok_or_else(|| err(usize::MAX - 1, "unexpected end of input"))?;
                let vals = row
                    .split_whitespace()
                    .map(|t| t.parse::<f64>())
                    .collect::<Result<Vec<_>, _>>()
                    .map_err(|_| err(ln, "bad number"))?;
                if vals.len() != cols {
                    return Err(err(ln, &format!("expected {cols} entries")));
                }
                data.extend(vals);
            }
            Ok(DMatrix::from_row_slice(rows, cols, &data))
        };
        let h = read_block("H")?;
        let g = read_block("g")?;
        let a_eq = read_block("A_eq")?;
        let b_eq = read_block("b_eq")?;
        let a_in = read_block("A_in")?;
        let b_in = read_block("b_in")?;
        let row_vec = |m: DMatrix<f64>| DVector::from_column_slice(m.transpose().as_slice());
        Self::new(h, row_vec(g), a_eq, row_vec(b_eq), a_in, row_vec(b_in))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum QpStatus {
    Optimal,
    Infeasible,
    MaxIter,
}

impl QpStatus {
    pub fn as_str(&self) -> &'static str {
        match self {
            QpStatus::Optimal => "optimal",
            QpStatus::Infeasible => "infeasible",
            QpStatus::MaxIter => "max_iter",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct QpSolution {
    pub x: DVector<f64>,
    pub lambda_eq: DVector<f64>,
    pub mu_in: DVector<f64>,
    pub status: QpStatus,
    pub kkt_residual: f64,
    pub iterations: usize,
    /// Inequality rows active at the returned point.
    pub active: Vec<usize>,
    pub diagnostic: Option<String>,
}

impl QpSolution {
    pub fn is_optimal(&self) -> bool {
        self.status == QpStatus::Optimal
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KktResiduals {
    pub stationarity: f64,
    pub primal_eq: f64,
    pub primal_in: f64,
    pub complementarity: f64,
}

impl KktResiduals {
    pub fn max(&self) -> f64 {
        self.stationarity
            .max(self.primal_eq)
            .max(self.primal_in)
            .max(self.complementarity)
    }
}

fn norm_inf(v: &DVector<f64>) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

/// Max-norm KKT residuals of a candidate primal-dual point.
pub fn kkt_residuals(p: &QpProblem, s: &QpSolution) -> KktResiduals {
    let x = &s.x;
    let mut grad = &p.h * x + &p.g;
    if p.m_eq() > 0 {
        grad += p.a_eq.transpose() * &s.lambda_eq;
    }
    if p.m_in() > 0 {
        grad += p.a_in.transpose() * &s.mu_in;
    }
    let eq = if p.m_eq() > 0 {
        norm_inf(&(&p.a_eq * x - &p.b_eq))
    } else {
        0.0
    };
    let slack = if p.m_in() > 0 {
        &p.a_in * x - &p.b_in
    } else {
        DVector::zeros(0)
    };
    KktResiduals {
        stationarity: norm_inf(&grad),
        primal_eq: eq,
        primal_in: slack.iter().fold(0.0, |m, v| m.max(*v)),
        complementarity: slack
            .iter()
            .zip(s.mu_in.iter())
            .fold(0.0, |m, (r, mu)| m.max((r * mu).abs())),
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QpOptions {
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for QpOptions {
    fn default() -> Self {
        Self {
            tol: 1e-9,
            max_iter: 2000,
        }
    }
}

/// Column-pivoted Householder QR: `A[:, perm] = Q R`.
struct PivotedQr {
    q: DMatrix<f64>,
    r: DMatrix<f64>,
    perm: Vec<usize>,
    rank: usize,
}

fn pivoted_qr(a: &DMatrix<f64>) -> PivotedQr {
    let (m, n) = a.shape();
    let mut r = a.clone();
    let mut q = DMatrix::<f64>::identity(m, m);
    let mut perm: Vec<usize> = (0..n).collect();
    let steps = m.min(n);
    let mut first_diag = 0.0;
    let mut rank = 0;
    for k in 0..steps {
        let (best, best_norm) = (k..n)
            .map(|j| (j, r.column(j).rows(k, m - k).norm_squared()))
            .fold((k, -1.0), |acc, c| if c.1 > acc.1 { c } else { acc });
        if best != k {
            r.swap_columns(k, best);
            perm.swap(k, best);
        }
        let alpha_norm = best_norm.sqrt();
        if k == 0 {
            first_diag = alpha_norm;
        }
        if alpha_norm <= 1e-12 * first_diag.max(f64::MIN_POSITIVE) {
            break;
        }
        rank += 1;
        let x0 = r[(k, k)];
        let alpha = if x0 >= 0.0 { -alpha_norm } else { alpha_norm };
        let mut v: DVector<f64> = r.column(k).rows(k, m - k).clone_owned();
        v[0] -= alpha;
        let vnorm2 = v.norm_squared();
        if vnorm2 == 0.0 {
            continue;
        }
        let beta = 2.0 / vnorm2;
        for j in k..n {
            let s = beta * v.dot(&r.column(j).rows(k, m - k));
            r.column_mut(j).rows_mut(k, m - k).axpy(-s, &v, 1.0);
        }
        for i in 0..m {
            let s = beta * (0..m - k).map(|t| q[(i, k + t)] * v[t]).sum::<f64>();
            for t in 0..m - k {
                q[(i, k + t)] -= s * v[t];
            }
        }
        for i in k + 1..m {
            r[(i, k)] = 0.0;
        }
    }
    PivotedQr { q, r, perm, rank }
}

/// `x = x0 + Z z` parametrizes `{x : A_eq x = b_eq}`.
struct Elimination {
    x0: DVector<f64>,
    z: DMatrix<f64>,
    qr: Option<PivotedQr>,
}

enum EliminationOutcome {
    Ok(Elimination),
    Inconsistent(f64),
}

fn eliminate_equalities(p: &QpProblem, tol: f64) -> EliminationOutcome {
    let n = p.n();
    if p.m_eq() == 0 {
        return EliminationOutcome::Ok(Elimination {
            x0: DVector::zeros(n),
            z: DMatrix::identity(n, n),
            qr: None,
        });
    }
    let qr = pivoted_qr(&p.a_eq);
    let rk = qr.rank;
    let bt = qr.q.transpose() * &p.b_eq;
    let lost = bt.rows(rk, p.m_eq() - rk).amax();
    if lost > tol.max(1e-9) * (1.0 + p.b_eq.amax()) {
        return EliminationOutcome::Inconsistent(lost);
    }
    let r1 = qr.r.view((0, 0), (rk, rk)).clone_owned();
    let r2 = qr.r.view((0, rk), (rk, n - rk)).clone_owned();
    let top = r1
        .solve_upper_triangular(&r2)
        .unwrap_or_else(|| DMatrix::zeros(rk, n - rk));
    let y0_b = r1
        .solve_upper_triangular(&bt.rows(0, rk).clone_owned())
        .unwrap_or_else(|| DVector::zeros(rk));
    let mut x0 = DVector::zeros(n);
    let mut z = DMatrix::zeros(n, n - rk);
    for (j, &orig) in qr.perm.iter().enumerate() {
        if j < rk {
            x0[orig] = y0_b[j];
            for c in 0..n - rk {
                z[(orig, c)] = -top[(j, c)];
            }
        } else {
            z[(orig, j - rk)] = 1.0;
        }
    }
    EliminationOutcome::Ok(Elimination { x0, z, qr: Some(qr) })
}

/// Result of the reduced inequality-constrained solve.
struct Reduced {
    z: DVector<f64>,
    mu: DVector<f64>,
    active: Vec<usize>,
    status: QpStatus,
    iterations: usize,
    diagnostic: Option<String>,
}

/// Dual active-set method for `min 1/2 z'Gz + a'z s.t. C z <= d`, `G` PD.
struct DualActiveSet<'a> {
    l: nalgebra::Cholesky<f64, nalgebra::Dyn>,
    a: &'a DVector<f64>,
    c: &'a DMatrix<f64>,
    d: &'a DVector<f64>,
    tol: f64,
    max_iter: usize,
    warm: &'a [usize],
}

impl DualActiveSet<'_> {
    fn l_solve(&self, v: &DVector<f64>) -> DVector<f64> {
        self.l
            .l_dirty()
            .solve_lower_triangular(v)
            .expect("Cholesky factor is nonsingular")
    }

    fn lt_solve(&self, v: &DVector<f64>) -> DVector<f64> {
        self.l
            .l_dirty()
            .tr_solve_lower_triangular(v)
            .expect("Cholesky factor is nonsingular")
    }

    /// Exact solution of the equality-constrained problem on `active`.
    fn polish(&self, w: &[DVector<f64>], active: &[usize]) -> Option<(DVector<f64>, DVector<f64>)> {
        let la = self.l_solve(self.a);
        if active.is_empty() {
            return Some((-self.lt_solve(&la), DVector::zeros(0)));
        }
        let q = active.len();
        let wm = DMatrix::from_columns(w);
        let r = thin_r(&wm)?;
        let rhs = DVector::from_iterator(q, active.iter().map(|&i| self.d[i])) + wm.transpose() * &la;
        let y = r.tr_solve_upper_triangular(&rhs)?;
        let mu = -r.solve_upper_triangular(&y)?;
        let z = -self.lt_solve(&(la + &wm * &mu));
        Some((z, mu))
    }

    fn solve(&self) -> Reduced {
        let nr = self.a.len();
        let mi = self.d.len();
        let row = |i: usize| self.c.row(i).transpose();
        let mut z = -self.lt_solve(&self.l_solve(self.a));
        let mut active: Vec<usize> = Vec::new();
        let mut w: Vec<DVector<f64>> = Vec::new();
        let mut mu: Vec<f64> = Vec::new();
        let mut in_active = vec![false; mi];
        let row_norm: Vec<f64> = (0..mi).map(|i| row(i).norm()).collect();
        let mut iterations = 0;
        let mut in_warm = vec![false; mi];
        for &i in self.warm {
            if i < mi {
                in_warm[i] = true;
            }
        }

        loop {
            // most violated constraint, preferring the warm-start set
            let violation = |i: usize, z: &DVector<f64>| row(i).dot(z) - self.d[i];
            let pick = |prefer: bool, z: &DVector<f64>| {
                (0..mi)
                    .filter(|&i| !in_active[i] && (!prefer || in_warm[i]))
                    .map(|i| (i, violation(i, z) / (1.0 + row_norm[i])))
                    .filter(|&(_, v)| v > self.tol)
                    .fold(None, |best: Option<(usize, f64)>, c| match best {
                        Some(b) if b.1 >= c.1 => Some(b),
                        _ => Some(c),
                    })
            };
            let Some((p, _)) = pick(true, &z).or_else(|| pick(false, &z)) else {
                return Reduced {
                    z,
                    mu: scatter(mi, &active, &mu),
                    active,
                    status: QpStatus::Optimal,
                    iterations,
                    diagnostic: None,
                };
            };
            let cp = row(p);
            let wp = self.l_solve(&cp);
            let mut mu_p = 0.0;
            loop {
                iterations += 1;
                if iterations > self.max_iter {
                    return Reduced {
                        z,
                        mu: scatter(mi, &active, &mu),
                        active,
                        status: QpStatus::MaxIter,
                        iterations,
                        diagnostic: Some(format!("active-set iteration limit {} reached", self.max_iter)),
                    };
                }
                let q = active.len();
                // dmu = -(W'W)^-1 W' wp ; dz = -L^-T (wp + W dmu)
                let (dmu, proj) = if q == 0 {
                    (DVector::zeros(0), wp.clone())
                } else {
                    let wm = DMatrix::from_columns(&w);
                    let qr = wm.qr();
                    let (qm, r) = (qr.q(), qr.r());
                    let qtw = qm.transpose() * &wp;
                    let Some(coef) = r.solve_upper_triangular(&qtw) else {
                        return Reduced {
                            z,
                            mu: scatter(mi, &active, &mu),
                            active,
                            status: QpStatus::MaxIter,
                            iterations,
                            diagnostic: Some("active constraints became linearly dependent".into()),
                        };
                    };
                    let proj = &wp - &qm * &qtw;
                    (-coef, proj)
                };
                let dependent = proj.norm() <= 1e-9 * wp.norm().max(f64::MIN_POSITIVE);
                // partial step: first active multiplier to hit zero
                let mut t1 = f64::INFINITY;
                let mut block = None;
                for j in 0..q {
                    if dmu[j] < 0.0 {
                        let t = mu[j] / -dmu[j];
                        if t < t1 {
                            t1 = t;
                            block = Some(j);
                        }
                    }
                }
                let viol = cp.dot(&z) - self.d[p];
                let t2 = if dependent {
                    f64::INFINITY
                } else {
                    // c_p' dz = -|proj|^2
                    viol / proj.norm_squared()
                };
                if t1.is_infinite() && t2.is_infinite() {
                    return Reduced {
                        z,
                        mu: scatter(mi, &active, &mu),
                        active,
                        status: QpStatus::Infeasible,
                        iterations,
                        diagnostic: Some(format!("inequality row {p} cannot be satisfied together with the active set")),
                    };
                }
                let t = t1.min(t2);
                if !dependent {
                    let dz = -self.lt_solve(&proj);
                    z += t * dz;
                }
                for j in 0..q {
                    mu[j] += t * dmu[j];
                }
                mu_p += t;
                if t2 <= t1 {
                    active.push(p);
                    w.push(wp.clone());
                    mu.push(mu_p);
                    in_active[p] = true;
                    if let Some((zp, mp)) = self.polish(&w, &active) {
                        if mp.iter().all(|v| *v >= -1e-10 * (1.0 + mp.amax())) {
                            z = zp;
                            mu = mp.iter().map(|v| v.max(0.0)).collect();
                        }
                    }
                    break;
                }
                let k = block.expect("finite partial step has a blocking index");
                in_active[active[k]] = false;
                active.remove(k);
                w.remove(k);
                mu.remove(k);
            }
            let _ = nr;
        }
    }
}

/// Triangular factor of a thin QR, `None` when numerically rank deficient.
fn thin_r(w: &DMatrix<f64>) -> Option<DMatrix<f64>> {
    let r = w.clone().qr().r();
    let scale = r.diagonal().amax();
    if r.diagonal().iter().any(|d| d.abs() <= 1e-12 * scale) {
        return None;
    }
    Some(r)
}

fn scatter(m: usize, idx: &[usize], vals: &[f64]) -> DVector<f64> {
    let mut out = DVector::zeros(m);
    for (&i, &v) in idx.iter().zip(vals) {
        out[i] = v;
    }
    out
}

/// Reusable solver; remembers the last active set as a warm start.
#[derive(Debug, Clone, Default)]
pub struct QpSolver {
    pub options: QpOptions,
    warm_active: Vec<usize>,
}

impl QpSolver {
    pub fn new(options: QpOptions) -> Self {
        Self {
            options,
            warm_active: Vec::new(),
        }
    }

    pub fn set_warm_start(&mut self, active: Vec<usize>) {
        self.warm_active = active;
    }

    pub fn clear_warm_start(&mut self) {
        self.warm_active.clear();
    }

    pub fn solve(&mut self, p: &QpProblem) -> Result<QpSolution, QpError> {
        let sol = solve_with(p, self.options, &self.warm_active)?;
        if sol.is_optimal() {
            self.warm_active = sol.active.clone();
        }
        Ok(sol)
    }
}

pub fn solve_qp(p: &QpProblem, tol: f64, max_iter: usize) -> Result<QpSolution, QpError> {
    solve_with(p, QpOptions { tol, max_iter }, &[])
}

fn solve_with(p: &QpProblem, opts: QpOptions, warm: &[usize]) -> Result<QpSolution, QpError> {
    let n = p.n();
    let elim = match eliminate_equalities(p, opts.tol) {
        EliminationOutcome::Ok(e) => e,
        EliminationOutcome::Inconsistent(r) => {
            return Ok(QpSolution {
                x: DVector::zeros(n),
                lambda_eq: DVector::zeros(p.m_eq()),
                mu_in: DVector::zeros(p.m_in()),
                status: QpStatus::Infeasible,
                kkt_residual: f64::INFINITY,
                iterations: 0,
                active: vec![],
                diagnostic: Some(format!("equality constraints are inconsistent (residual {r:e})")),
            })
        }
    };
    let nr = elim.z.ncols();
    let hz = &p.h * &elim.z;
    let mut g_r = elim.z.transpose() * (&p.h * &elim.x0 + &p.g);
    let mut h_r = elim.z.transpose() * &hz;
    h_r = (&h_r + h_r.transpose()) * 0.5;
    let c = &p.a_in * &elim.z;
    let d = &p.b_in - &p.a_in * &elim.x0;

    let reduced = if nr == 0 {
        let violated = (0..p.m_in()).find(|&i| -d[i] > opts.tol * (1.0 + c.row(i).norm()));
        Reduced {
            z: DVector::zeros(0),
            mu: DVector::zeros(p.m_in()),
            active: vec![],
            status: if violated.is_some() {
                QpStatus::Infeasible
            } else {
                QpStatus::Optimal
            },
            iterations: 0,
            diagnostic: violated.map(|i| format!("inequality row {i} violated at the unique equality solution")),
        }
    } else if let Some(l) = h_r.clone().cholesky().filter(well_conditioned) {
        DualActiveSet {
            l,
            a: &g_r,
            c: &c,
            d: &d,
            tol: opts.tol,
            max_iter: opts.max_iter,
            warm,
        }
        .solve()
    } else {
        let min_eig = h_r.clone().symmetric_eigen().eigenvalues.min();
        let scale = 1.0 + h_r.amax();
        if min_eig < -1e-8 * scale {
            return Err(QpError::NotConvex(min_eig));
        }
        proximal_solve(&h_r, &mut g_r, &c, &d, opts, warm, scale)
    };

    let x = &elim.x0 + &elim.z * &reduced.z;
    let mu = reduced.mu;
    let lambda = recover_equality_multipliers(p, &elim, &x, &mu);
    let mut sol = QpSolution {
        x,
        lambda_eq: lambda,
        mu_in: mu,
        status: reduced.status,
        kkt_residual: 0.0,
        iterations: reduced.iterations,
        active: reduced.active,
        diagnostic: reduced.diagnostic,
    };
    sol.kkt_residual = kkt_residuals(p, &sol).max();
    Ok(sol)
}

fn well_conditioned(ch: &nalgebra::Cholesky<f64, nalgebra::Dyn>) -> bool {
    let d = ch.l_dirty().diagonal();
    let (lo, hi) = d.iter().fold((f64::INFINITY, 0.0f64), |(lo, hi), v| (lo.min(v.abs()), hi.max(v.abs())));
    lo > 1e-7 * hi
}

/// Proximal-point iterations for a semidefinite reduced Hessian.
fn proximal_solve(
    h: &DMatrix<f64>,
    g: &mut DVector<f64>,
    c: &DMatrix<f64>,
    d: &DVector<f64>,
    opts: QpOptions,
    warm: &[usize],
    scale: f64,
) -> Reduced {
    let nr = g.len();
    let rho = 1e-3 * scale;
    let shifted = h + DMatrix::identity(nr, nr) * rho;
    let l = shifted.cholesky().expect("shifted Hessian is positive definite");
    let mut z = DVector::zeros(nr);
    let mut total = 0;
    let base = g.clone();
    for _ in 0..opts.max_iter {
        let a = &base - &z * rho;
        let r = DualActiveSet {
            l: l.clone(),
            a: &a,
            c,
            d,
            tol: opts.tol,
            max_iter: opts.max_iter,
            warm,
        }
        .solve();
        total += r.iterations;
        if r.status != QpStatus::Optimal {
            return Reduced { iterations: total, ..r };
        }
        let step = (&r.z - &z).norm();
        z = r.z.clone();
        if step <= 1e-13 * (1.0 + z.norm()) {
            return Reduced { iterations: total, ..r };
        }
        if z.norm() > 1e12 {
            return Reduced {
                iterations: total,
                status: QpStatus::MaxIter,
                diagnostic: Some("objective appears unbounded below".into()),
                ..r
            };
        }
    }
    Reduced {
        z,
        mu: DVector::zeros(d.len()),
        active: vec![],
        status: QpStatus::MaxIter,
        iterations: total,
        diagnostic: Some("proximal iterations did not settle".into()),
    }
}

/// Least-squares `λ` from `A_eq'λ = -(Hx + g + A_in'μ)` via the pivoted QR.
fn recover_equality_multipliers(p: &QpProblem, elim: &Elimination, x: &DVector<f64>, mu: &DVector<f64>) -> DVector<f64> {
    let Some(qr) = &elim.qr else {
        return DVector::zeros(0);
    };
    let mut r = &p.h * x + &p.g;
    if p.m_in() > 0 {
        r += p.a_in.transpose() * mu;
    }
    let rk = qr.rank;
    // A_eq[:, perm] = Q R  =>  R' (Q'λ) = -r[perm]
    let rhs = DVector::from_iterator(rk, qr.perm[..rk].iter().map(|&j| -r[j]));
    let r1t = qr.r.view((0, 0), (rk, rk)).transpose();
    let xi = r1t.solve_lower_triangular(&rhs).unwrap_or_else(|| DVector::zeros(rk));
    let mut xi_full = DVector::zeros(p.m_eq());
    xi_full.rows_mut(0, rk).copy_from(&xi);
    &qr.q * xi_full
}
