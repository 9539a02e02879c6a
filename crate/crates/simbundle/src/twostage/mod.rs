//! Two-stage problems with quadratic-penalty smoothing of the coupling
//! `W x = h(y)`:
//!
//! `r_μ(x) = min_y μ‖W x - h(y)‖² + p(y)` over an `x`-independent set,
//! with upper subgradient `g_μ = 2μ Wᵀ(W x - h(y*))`.

mod demos;
mod inner;
mod projection;

use std::sync::Arc;

use rayon::prelude::*;

pub use demos::{exact_demo, smoothing_demo, Demo};
pub use inner::{multistart_pg, InnerModel, InnerSolution, InnerStatus, MultistartConfig, SeparableQuadratic};
pub use projection::{project_onto_example_set, ParabolaSet, Projection, TieRule, CLUSTER_TOL, TIE_TOL};

use crate::model::{BoxBounds, Matrix, NonsmoothOracle, OracleSample, Vector, BOUND_TOL};
use crate::{Error, Result};

/// The second-stage feasible set and cost.
#[derive(Clone)]
pub enum InnerProblem {
    /// `h(y) = y`, `p ≡ 0`, `y` in a parabola set.
    Parabola(ParabolaSet),
    Separable(SeparableQuadratic),
    General(Arc<dyn InnerModel>),
}

impl std::fmt::Debug for InnerProblem {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            InnerProblem::Parabola(s) => f.debug_tuple("Parabola").field(s).finish(),
            InnerProblem::Separable(s) => f.debug_tuple("Separable").field(s).finish(),
            InnerProblem::General(m) => write!(f, "General(dim={})", m.dim()),
        }
    }
}

impl InnerProblem {
    fn out_dim(&self) -> usize {
        match self {
            InnerProblem::Parabola(_) => 3,
            InnerProblem::Separable(s) => s.bounds.dim(),
            InnerProblem::General(m) => m.out_dim(),
        }
    }

    fn h_range(&self) -> (Vector, Vector) {
        match self {
            InnerProblem::Parabola(s) => (
                Vector::from_column_slice(&s.lower),
                Vector::from_column_slice(&s.upper),
            ),
            InnerProblem::Separable(s) => s.h_range(),
            InnerProblem::General(m) => m.h_range(),
        }
    }
}

/// Routine used for the inner minimization.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum InnerSolver {
    /// Projection or closed form; not available for general models.
    Analytic,
    Multistart(MultistartConfig),
}

/// One second-stage scenario.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub w: Matrix,
    /// Spectral norm of `w`.
    pub w_norm: f64,
    pub inner: InnerProblem,
    pub solver: InnerSolver,
    /// Bound on `‖W x - h(y)‖` over both boxes.
    pub m_bound: f64,
    pub x_bounds: BoxBounds,
}

/// Interval bound on `‖W x - h(y)‖` for `x` and `y` in their boxes.
fn coupling_bound(w: &Matrix, x_bounds: &BoxBounds, h_lo: &Vector, h_hi: &Vector) -> f64 {
    let mut sq = 0.0;
    for i in 0..w.nrows() {
        let (mut lo, mut hi) = (0.0, 0.0);
        for j in 0..w.ncols() {
            let a = w[(i, j)] * x_bounds.lower[j];
            let b = w[(i, j)] * x_bounds.upper[j];
            if w[(i, j)] != 0.0 {
                lo += a.min(b);
                hi += a.max(b);
            }
        }
        let dl = lo - h_hi[i];
        let du = hi - h_lo[i];
        let m = dl.abs().max(du.abs());
        sq += m * m;
    }
    sq.sqrt()
}

impl Scenario {
    pub fn new(w: Matrix, inner: InnerProblem, x_bounds: BoxBounds) -> Result<Self> {
        if w.ncols() != x_bounds.dim() || w.nrows() != inner.out_dim() {
            return Err(Error::Shape(format!(
                "W is {}×{}, expected {}×{}",
                w.nrows(),
                w.ncols(),
                inner.out_dim(),
                x_bounds.dim()
            )));
        }
        if w.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidConfig("W has non-finite entries".into()));
        }
        match &inner {
            InnerProblem::Parabola(s) => s.validate()?,
            InnerProblem::General(m) => {
                if m.bounds().lower.iter().chain(m.bounds().upper.iter()).any(|v| !v.is_finite()) {
                    return Err(Error::InvalidBounds("inner bounds must be finite".into()));
                }
            }
            InnerProblem::Separable(_) => {}
        }
        let w_norm = w.clone().svd(false, false).singular_values.max();
        let (h_lo, h_hi) = inner.h_range();
        let m_bound = coupling_bound(&w, &x_bounds, &h_lo, &h_hi);
        let solver = match inner {
            InnerProblem::General(_) => InnerSolver::Multistart(MultistartConfig::default()),
            _ => InnerSolver::Analytic,
        };
        let s = Self {
            w,
            w_norm,
            inner,
            solver,
            m_bound,
            x_bounds,
        };
        s.validate()?;
        Ok(s)
    }

    pub fn with_solver(mut self, solver: InnerSolver) -> Result<Self> {
        match (&self.inner, solver) {
            (InnerProblem::General(_), InnerSolver::Analytic) => {
                return Err(Error::InvalidConfig("general inner models have no analytic solver".into()))
            }
            (InnerProblem::Parabola(_), InnerSolver::Multistart(_)) => {
                return Err(Error::InvalidConfig("the parabola set is not a box; use the analytic solver".into()))
            }
            _ => {}
        }
        self.solver = solver;
        Ok(self)
    }

    pub fn with_m_bound(mut self, m: f64) -> Result<Self> {
        self.m_bound = m;
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.w_norm.is_finite() && self.w_norm > 0.0) {
            return Err(Error::InvalidConfig(format!("‖W‖ must be finite and positive, got {}", self.w_norm)));
        }
        if !(self.m_bound.is_finite() && self.m_bound > 0.0) {
            return Err(Error::InvalidConfig(format!("M must be finite and positive, got {}", self.m_bound)));
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.w.ncols()
    }

    /// `μ‖W‖²`.
    pub fn upper_c2(&self, mu: f64) -> f64 {
        mu * self.w_norm * self.w_norm
    }

    /// `μ‖W‖(‖W‖ D + 2M)` with `D` the first-stage box diameter.
    pub fn lipschitz(&self, mu: f64) -> f64 {
        mu * self.w_norm * (self.w_norm * self.x_bounds.diameter() + 2.0 * self.m_bound)
    }

    /// Cost `p(y)` of a second-stage point.
    pub fn p(&self, y: &Vector) -> f64 {
        match &self.inner {
            InnerProblem::Parabola(_) => 0.0,
            InnerProblem::Separable(s) => s.p(y),
            InnerProblem::General(m) => m.p(y),
        }
    }

    fn solve_inner(&self, q: &Vector, mu: f64) -> Result<InnerSolution> {
        match (&self.inner, self.solver) {
            (InnerProblem::Parabola(set), _) => {
                let p = project_onto_example_set(q, set);
                Ok(InnerSolution {
                    h: p.y.clone(),
                    value: mu * p.distance_sq,
                    y: p.y,
                    status: InnerStatus {
                        solver: "parabola-projection".into(),
                        ambiguous: p.ambiguous,
                        candidates: p.candidates,
                        iterations: 0,
                    },
                })
            }
            (InnerProblem::Separable(s), InnerSolver::Analytic) => Ok(s.solve(q, mu)),
            (InnerProblem::Separable(s), InnerSolver::Multistart(cfg)) => multistart_pg(s, q, mu, &cfg),
            (InnerProblem::General(m), InnerSolver::Multistart(cfg)) => multistart_pg(m.as_ref(), q, mu, &cfg),
            (InnerProblem::General(_), InnerSolver::Analytic) => {
                Err(Error::InnerSolveFailure("no analytic solver for a general inner model".into()))
            }
        }
    }
}

/// One evaluation of a smoothed recourse function.
#[derive(Debug, Clone, PartialEq)]
pub struct RecourseSample {
    pub value: f64,
    pub y_star: Vector,
    /// `h(y_star)`.
    pub h_star: Vector,
    pub subgradient: Vector,
    pub inner_status: InnerStatus,
}

/// `r_μ(x)` and `2μ Wᵀ(W x - h(y*))`.
pub fn smooth_recourse(x: &Vector, s: &Scenario, mu: f64) -> Result<RecourseSample> {
    if !(mu > 0.0 && mu.is_finite()) {
        return Err(Error::InvalidConfig(format!("mu must be positive, got {mu}")));
    }
    if x.len() != s.dim() {
        return Err(Error::Shape(format!("x has length {}, scenario expects {}", x.len(), s.dim())));
    }
    s.x_bounds.check(x, BOUND_TOL)?;
    let q = &s.w * x;
    let sol = s.solve_inner(&q, mu)?;
    let resid = &q - &sol.h;
    let subgradient = 2.0 * mu * s.w.transpose() * &resid;
    if !sol.value.is_finite() || subgradient.iter().any(|v| !v.is_finite()) {
        return Err(Error::InnerSolveFailure("non-finite recourse value".into()));
    }
    Ok(RecourseSample {
        value: sol.value,
        y_star: sol.y,
        h_star: sol.h,
        subgradient,
        inner_status: sol.status,
    })
}

/// Per-scenario samples, evaluated concurrently and returned in index order.
pub fn recourse_samples(x: &Vector, scenarios: &[Scenario], mu: f64) -> Result<Vec<RecourseSample>> {
    if scenarios.is_empty() {
        return Err(Error::InvalidConfig("empty scenario list".into()));
    }
    let results: Vec<Result<RecourseSample>> = scenarios.par_iter().map(|s| smooth_recourse(x, s, mu)).collect();
    results.into_iter().collect()
}

/// `(1/K) Σ r_{μ,i}(x)` and `(1/K) Σ g_{μ,i}(x)`, summed in scenario order.
pub fn aggregate_recourse(x: &Vector, scenarios: &[Scenario], mu: f64) -> Result<(f64, Vector)> {
    let samples = recourse_samples(x, scenarios, mu)?;
    Ok(reduce(&samples, x.len()))
}

fn reduce(samples: &[RecourseSample], n: usize) -> (f64, Vector) {
    let k = samples.len() as f64;
    let mut value = 0.0;
    let mut g = Vector::zeros(n);
    for s in samples {
        value += s.value;
        g += &s.subgradient;
    }
    (value / k, g / k)
}

/// `Σ w_i (x_i - c_i)²`.
#[derive(Debug, Clone, PartialEq)]
pub struct DiagonalQuadratic {
    pub weights: Vector,
    pub centers: Vector,
}

impl DiagonalQuadratic {
    pub fn zero(n: usize) -> Self {
        Self {
            weights: Vector::zeros(n),
            centers: Vector::zeros(n),
        }
    }

    pub fn value(&self, x: &Vector) -> f64 {
        let d = x - &self.centers;
        self.weights.dot(&d.component_mul(&d))
    }

    pub fn gradient(&self, x: &Vector) -> Vector {
        2.0 * self.weights.component_mul(&(x - &self.centers))
    }
}

/// First-stage cost plus the averaged smoothed recourse.
#[derive(Debug, Clone)]
pub struct TwoStageObjective {
    pub first_stage: DiagonalQuadratic,
    pub scenarios: Vec<Scenario>,
    pub mu: f64,
}

impl TwoStageObjective {
    pub fn new(first_stage: DiagonalQuadratic, scenarios: Vec<Scenario>, mu: f64) -> Result<Self> {
        if scenarios.is_empty() {
            return Err(Error::InvalidConfig("empty scenario list".into()));
        }
        let n = first_stage.weights.len();
        if first_stage.centers.len() != n || scenarios.iter().any(|s| s.dim() != n) {
            return Err(Error::Shape("first stage and scenarios disagree on dimension".into()));
        }
        if !(mu > 0.0 && mu.is_finite()) {
            return Err(Error::InvalidConfig(format!("mu must be positive, got {mu}")));
        }
        Ok(Self {
            first_stage,
            scenarios,
            mu,
        })
    }

    /// Evaluate with per-scenario samples.
    pub fn evaluate(&self, x: &Vector) -> Result<(OracleSample, Vec<RecourseSample>)> {
        let samples = recourse_samples(x, &self.scenarios, self.mu)?;
        let (rv, rg) = reduce(&samples, x.len());
        let mut out = OracleSample::new(self.first_stage.value(x) + rv, self.first_stage.gradient(x) + rg);
        let ambiguous: Vec<String> = samples
            .iter()
            .enumerate()
            .filter(|(_, s)| s.inner_status.ambiguous)
            .map(|(i, _)| i.to_string())
            .collect();
        if !ambiguous.is_empty() {
            out.metadata = Some(format!("ambiguous minimizer in scenario {}", ambiguous.join(",")));
        }
        Ok((out, samples))
    }
}

impl NonsmoothOracle for TwoStageObjective {
    fn dim(&self) -> usize {
        self.first_stage.weights.len()
    }

    fn eval(&self, x: &Vector) -> Result<OracleSample> {
        self.evaluate(x).map(|(s, _)| s)
    }

    fn upper_c2_constant(&self) -> Option<f64> {
        let k = self.scenarios.len() as f64;
        let rec: f64 = self.scenarios.iter().map(|s| s.upper_c2(self.mu)).sum::<f64>() / k;
        Some(self.first_stage.weights.amax() + rec)
    }
}
