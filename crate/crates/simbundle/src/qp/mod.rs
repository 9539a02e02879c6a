//! Convex subproblems of the bundle method.
//!
//! * [`solve_eq_box`]: `min gᵀd + ½dᵀαd` s.t. `A d = b`, `d_l <= d <= d_u`.
//! * [`solve_penalty`]: `min π(gᵀd + ½dᵀαd) + ‖A d - b‖₁` over the box.
//! * [`solve_feasibility_l1`]: `min ‖A d - b‖₁` over the box.
//!
//! All three go through one interior-point kernel, the ℓ1 problems in slack
//! form `A d - v + w = b`, `v, w >= 0`.

mod kernel;

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::model::{Curvature, Matrix, Vector};
use kernel::Kernel;

/// Regularization that selects the minimum-norm minimizer of the feasibility problem.
pub const FEASIBILITY_REG: f64 = 1e-10;

/// Phase-1 threshold factor: inconsistent when the ℓ1 residual exceeds `FEAS_TOL·(1+‖b‖₁)`.
pub const FEAS_TOL: f64 = 1e-8;

/// Equality- and box-constrained QP with diagonal Hessian.
#[derive(Debug, Clone)]
pub struct EqBoxQP {
    pub g: Vector,
    pub alpha: Curvature,
    /// `m × n`, rows are constraint gradients.
    pub a: Matrix,
    pub b: Vector,
    pub lower: Vector,
    pub upper: Vector,
}

/// ℓ1-penalty reformulation of an [`EqBoxQP`].
#[derive(Debug, Clone)]
pub struct PenaltyQP {
    pub base: EqBoxQP,
    pub pi: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum QpStatus {
    Optimal,
    Inconsistent,
}

#[derive(Debug, Clone)]
pub struct QPSolution {
    pub d: Vector,
    /// Equality multipliers. For [`solve_eq_box`] they satisfy
    /// `g + αd - Aᵀλ - ζ_l + ζ_u = 0`; for [`solve_penalty`]
    /// `π(g + αd) + Aᵀλ - ζ_l + ζ_u = 0`.
    pub lambda: Vector,
    pub zeta_l: Vector,
    pub zeta_u: Vector,
    pub v: Option<Vector>,
    pub w: Option<Vector>,
    pub status: QpStatus,
    /// KKT residual of the solved problem (phase-1 ℓ1 residual when inconsistent).
    pub residual: f64,
    /// Equality rows restricted to free variables are rank deficient.
    pub rank_deficient: bool,
    pub iterations: usize,
}

impl EqBoxQP {
    pub fn n(&self) -> usize {
        self.g.len()
    }

    pub fn m(&self) -> usize {
        self.b.len()
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.n();
        if self.a.nrows() != self.m()
            || (self.m() > 0 && self.a.ncols() != n)
            || self.lower.len() != n
            || self.upper.len() != n
        {
            return Err(Error::Shape(format!(
                "qp: n={n}, m={}, A is {}×{}, bounds {}/{}",
                self.m(),
                self.a.nrows(),
                self.a.ncols(),
                self.lower.len(),
                self.upper.len()
            )));
        }
        if let Curvature::Diagonal(v) = &self.alpha {
            if v.len() != n {
                return Err(Error::Shape(format!("alpha diagonal has length {}", v.len())));
            }
        }
        if !self.alpha.is_positive() {
            return Err(Error::InvalidConfig("alpha must be positive".into()));
        }
        for j in 0..n {
            if !(self.lower[j] <= self.upper[j]) || !self.lower[j].is_finite() || !self.upper[j].is_finite() {
                return Err(Error::InvalidBounds(format!(
                    "step box coordinate {j}: [{}, {}]",
                    self.lower[j], self.upper[j]
                )));
            }
        }
        let finite = self.g.iter().chain(self.a.iter()).chain(self.b.iter()).all(|v| v.is_finite());
        if !finite {
            return Err(Error::Shape("qp data contains non-finite entries".into()));
        }
        Ok(())
    }

    /// `gᵀd + ½dᵀαd`.
    pub fn objective(&self, d: &Vector) -> f64 {
        self.g.dot(d) + 0.5 * self.alpha.quad(d)
    }

    /// `‖A d - b‖₁`.
    pub fn violation(&self, d: &Vector) -> f64 {
        if self.m() == 0 {
            return 0.0;
        }
        (&self.a * d - &self.b).abs().sum()
    }

    /// KKT residual of a candidate in the subproblem sign convention.
    pub fn kkt_residual(&self, s: &QPSolution) -> f64 {
        let mut stat = &self.g + self.alpha.diag(self.n()).component_mul(&s.d) - &s.zeta_l + &s.zeta_u;
        if self.m() > 0 {
            stat -= self.a.tr_mul(&s.lambda);
        }
        let mut res = stat.amax();
        if self.m() > 0 {
            res = res.max((&self.a * &s.d - &self.b).amax());
        }
        box_residual(res, &s.d, &s.zeta_l, &s.zeta_u, &self.lower, &self.upper)
    }
}

impl PenaltyQP {
    /// `π(gᵀd + ½dᵀαd) + ‖A d - b‖₁`.
    pub fn objective(&self, d: &Vector) -> f64 {
        self.pi * self.base.objective(d) + self.base.violation(d)
    }

    /// Residual of the slack-form KKT conditions.
    pub fn kkt_residual(&self, s: &QPSolution) -> f64 {
        let q = &self.base;
        let n = q.n();
        let mut stat = self.pi * (&q.g + q.alpha.diag(n).component_mul(&s.d)) - &s.zeta_l + &s.zeta_u;
        if q.m() > 0 {
            stat += q.a.tr_mul(&s.lambda);
        }
        let mut res = stat.amax();
        if let (Some(v), Some(w)) = (&s.v, &s.w) {
            let r = &q.a * &s.d - v + w - &q.b;
            res = res.max(r.amax());
            for j in 0..q.m() {
                let p = 1.0 - s.lambda[j];
                let qm = 1.0 + s.lambda[j];
                res = res
                    .max(-v[j])
                    .max(-w[j])
                    .max(-p)
                    .max(-qm)
                    .max((p * v[j]).abs())
                    .max((qm * w[j]).abs());
            }
        }
        box_residual(res, &s.d, &s.zeta_l, &s.zeta_u, &q.lower, &q.upper)
    }
}

fn box_residual(mut res: f64, d: &Vector, zl: &Vector, zu: &Vector, lo: &Vector, hi: &Vector) -> f64 {
    for j in 0..d.len() {
        res = res
            .max((zl[j] * (d[j] - lo[j])).abs())
            .max((zu[j] * (hi[j] - d[j])).abs())
            .max(-zl[j])
            .max(-zu[j])
            .max(lo[j] - d[j])
            .max(d[j] - hi[j]);
    }
    res
}

/// Problem scale used to turn `tol` into an absolute residual threshold.
fn scale(q: &EqBoxQP) -> f64 {
    1.0_f64.max(q.g.amax()).max(q.b.amax())
}

/// Solves the equality- and box-constrained model subproblem.
pub fn solve_eq_box(qp: &EqBoxQP, tol: f64) -> Result<QPSolution> {
    qp.validate()?;
    let n = qp.n();
    let m = qp.m();
    if m > 0 {
        let (d_f, _) = solve_feasibility_l1(&qp.a, &qp.b, &qp.lower, &qp.upper, tol)?;
        let viol = qp.violation(&d_f);
        if viol > FEAS_TOL * (1.0 + qp.b.abs().sum()) {
            return Ok(QPSolution {
                d: d_f,
                lambda: Vector::zeros(m),
                zeta_l: Vector::zeros(n),
                zeta_u: Vector::zeros(n),
                v: None,
                w: None,
                status: QpStatus::Inconsistent,
                residual: viol,
                rank_deficient: false,
                iterations: 0,
            });
        }
    }
    let h = qp.alpha.diag(n);
    let kernel = Kernel {
        h: &h,
        c: &qp.g,
        a: &qp.a,
        b: &qp.b,
        l: &qp.lower,
        u: &qp.upper,
    };
    let ks = kernel.solve()?;
    let mut sol = QPSolution {
        d: ks.z,
        lambda: ks.y,
        zeta_l: ks.zl,
        zeta_u: ks.zu,
        v: None,
        w: None,
        status: QpStatus::Optimal,
        residual: 0.0,
        rank_deficient: m > 0 && ks.active_rank < m,
        iterations: ks.iterations,
    };
    sol.residual = qp.kkt_residual(&sol);
    if sol.residual > tol * scale(qp) {
        return Err(Error::SolverBreakdown(format!(
            "eq-box QP residual {:e} exceeds tolerance {:e}",
            sol.residual,
            tol * scale(qp)
        )));
    }
    Ok(sol)
}

/// Assembles `[A, -I, I]`.
fn slack_matrix(a: &Matrix, n: usize) -> Matrix {
    let m = a.nrows();
    let mut big = DMatrix::zeros(m, n + 2 * m);
    if m > 0 {
        big.view_mut((0, 0), (m, n)).copy_from(a);
    }
    for j in 0..m {
        big[(j, n + j)] = -1.0;
        big[(j, n + m + j)] = 1.0;
    }
    big
}

fn slack_bounds(lower: &Vector, upper: &Vector, m: usize) -> (Vector, Vector) {
    let n = lower.len();
    let l = Vector::from_fn(n + 2 * m, |i, _| if i < n { lower[i] } else { 0.0 });
    let u = Vector::from_fn(n + 2 * m, |i, _| if i < n { upper[i] } else { f64::INFINITY });
    (l, u)
}

/// Solves the ℓ1-penalty subproblem in slack form.
pub fn solve_penalty(qp: &PenaltyQP, tol: f64) -> Result<QPSolution> {
    let base = &qp.base;
    base.validate()?;
    if !(qp.pi > 0.0 && qp.pi.is_finite()) {
        return Err(Error::InvalidConfig(format!("penalty pi must be positive, got {}", qp.pi)));
    }
    let n = base.n();
    let m = base.m();
    let alpha = base.alpha.diag(n);
    let h = Vector::from_fn(n + 2 * m, |i, _| if i < n { qp.pi * alpha[i] } else { 0.0 });
    let c = Vector::from_fn(n + 2 * m, |i, _| if i < n { qp.pi * base.g[i] } else { 1.0 });
    let a = slack_matrix(&base.a, n);
    let (l, u) = slack_bounds(&base.lower, &base.upper, m);
    let kernel = Kernel {
        h: &h,
        c: &c,
        a: &a,
        b: &base.b,
        l: &l,
        u: &u,
    };
    let ks = kernel.solve()?;
    let d = ks.z.rows(0, n).into_owned();
    let mut v = ks.z.rows(n, m).into_owned();
    let mut w = ks.z.rows(n + m, m).into_owned();
    // v - w is fixed by A d - b; drop any common offset.
    for j in 0..m {
        let common = v[j].min(w[j]);
        if common > 0.0 {
            v[j] -= common;
            w[j] -= common;
        }
    }
    let mut sol = QPSolution {
        d,
        lambda: -ks.y,
        zeta_l: ks.zl.rows(0, n).into_owned(),
        zeta_u: ks.zu.rows(0, n).into_owned(),
        v: Some(v),
        w: Some(w),
        status: QpStatus::Optimal,
        residual: 0.0,
        rank_deficient: m > 0 && ks.active_rank < m,
        iterations: ks.iterations,
    };
    sol.residual = qp.kkt_residual(&sol);
    let thresh = tol * scale(base).max(qp.pi * base.g.amax());
    if sol.residual > thresh {
        return Err(Error::SolverBreakdown(format!(
            "penalty QP residual {:e} exceeds tolerance {thresh:e}",
            sol.residual
        )));
    }
    Ok(sol)
}

/// Minimizes `‖A d - b‖₁` over the box and returns `(d_f, ‖b‖₁ - ‖A d_f - b‖₁)`.
///
/// Ties are broken toward the minimum-norm minimizer.
pub fn solve_feasibility_l1(
    a: &Matrix,
    b: &Vector,
    lower: &Vector,
    upper: &Vector,
    _tol: f64,
) -> Result<(Vector, f64)> {
    let n = lower.len();
    let m = b.len();
    if upper.len() != n || a.nrows() != m || (m > 0 && a.ncols() != n) {
        return Err(Error::Shape(format!(
            "feasibility: A is {}×{}, b {}, bounds {}/{}",
            a.nrows(),
            a.ncols(),
            m,
            n,
            upper.len()
        )));
    }
    if (0..n).any(|j| !(lower[j] <= upper[j])) {
        return Err(Error::InvalidBounds("empty step box".into()));
    }
    if m == 0 {
        let d = Vector::from_fn(n, |j, _| 0.0_f64.clamp(lower[j], upper[j]));
        return Ok((d, 0.0));
    }
    let h = Vector::from_fn(n + 2 * m, |i, _| if i < n { FEASIBILITY_REG } else { 0.0 });
    let c = Vector::from_fn(n + 2 * m, |i, _| if i < n { 0.0 } else { 1.0 });
    let big = slack_matrix(a, n);
    let (l, u) = slack_bounds(lower, upper, m);
    let kernel = Kernel {
        h: &h,
        c: &c,
        a: &big,
        b,
        l: &l,
        u: &u,
    };
    let ks = kernel.solve()?;
    let d = ks.z.rows(0, n).into_owned();
    let d = Vector::from_fn(n, |j, _| d[j].clamp(lower[j], upper[j]));
    let after = (a * &d - b).abs().sum();
    let delta_f = (b.abs().sum() - after).max(0.0);
    Ok((d, delta_f))
}
