//! Problem definitions, oracle contracts, solver configuration and KKT
//! diagnostics shared by the rest of the crate.
//!
//! Problems have the form
//!
//! ```text
//! minimize r(x)  subject to  c(x) = 0,  l <= x <= u
//! ```
//!
//! where `r` is nonsmooth (sampled through [`NonsmoothOracle`]) and `c` is
//! smooth (sampled through [`SmoothConstraints`]).

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type Vector = DVector<f64>;
pub type Matrix = DMatrix<f64>;

/// Absolute tolerance used when checking that a point lies inside its box.
pub const BOUND_TOL: f64 = 1e-12;

/// Fails with [`Error::OracleFailure`] on the first non-finite entry.
pub fn ensure_finite(v: &Vector) -> Result<()> {
    match v.iter().position(|x| !x.is_finite()) {
        Some(index) => Err(Error::OracleFailure { index }),
        None => Ok(()),
    }
}

/// Componentwise bounds `lower <= x <= upper`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoxBounds {
    pub lower: Vector,
    pub upper: Vector,
}

impl BoxBounds {
    pub fn new(lower: Vector, upper: Vector) -> Result<Self> {
        if lower.len() != upper.len() {
            return Err(Error::Shape(format!(
                "bounds have lengths {} and {}",
                lower.len(),
                upper.len()
            )));
        }
        for j in 0..lower.len() {
            if !(lower[j] < upper[j]) || lower[j].is_nan() || upper[j].is_nan() {
                return Err(Error::InvalidBounds(format!(
                    "coordinate {j}: lower {} is not below upper {}",
                    lower[j], upper[j]
                )));
            }
        }
        Ok(Self { lower, upper })
    }

    pub fn from_slices(lower: &[f64], upper: &[f64]) -> Result<Self> {
        Self::new(
            Vector::from_column_slice(lower),
            Vector::from_column_slice(upper),
        )
    }

    /// Same interval `[lo, hi]` in every coordinate.
    pub fn uniform(n: usize, lo: f64, hi: f64) -> Result<Self> {
        Self::new(Vector::from_element(n, lo), Vector::from_element(n, hi))
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    /// Upper bound of the normalized box `[0, u - l]`.
    pub fn width(&self) -> Vector {
        &self.upper - &self.lower
    }

    /// Euclidean diameter `‖u - l‖`.
    pub fn diameter(&self) -> f64 {
        self.width().norm()
    }

    pub fn contains(&self, x: &Vector, tol: f64) -> bool {
        x.len() == self.dim()
            && (0..x.len()).all(|j| x[j] >= self.lower[j] - tol && x[j] <= self.upper[j] + tol)
    }

    pub fn check(&self, x: &Vector, tol: f64) -> Result<()> {
        if x.len() != self.dim() {
            return Err(Error::Shape(format!(
                "point has length {}, bounds have {}",
                x.len(),
                self.dim()
            )));
        }
        for j in 0..x.len() {
            if !(x[j] >= self.lower[j] - tol && x[j] <= self.upper[j] + tol) {
                return Err(Error::OutOfBounds {
                    index: j,
                    value: x[j],
                    lower: self.lower[j],
                    upper: self.upper[j],
                });
            }
        }
        Ok(())
    }

    pub fn project(&self, x: &Vector) -> Vector {
        Vector::from_fn(x.len(), |j, _| x[j].clamp(self.lower[j], self.upper[j]))
    }
}

/// Quadratic coefficient of the bundle model: a scalar or a positive diagonal.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Curvature {
    Scalar(f64),
    Diagonal(Vector),
}

impl Curvature {
    /// Diagonal entries for an `n`-dimensional step.
    pub fn diag(&self, n: usize) -> Vector {
        match self {
            Curvature::Scalar(a) => Vector::from_element(n, *a),
            Curvature::Diagonal(v) => v.clone(),
        }
    }

    /// `dᵀ diag(α) d`.
    pub fn quad(&self, d: &Vector) -> f64 {
        match self {
            Curvature::Scalar(a) => a * d.norm_squared(),
            Curvature::Diagonal(v) => d.iter().zip(v.iter()).map(|(di, ai)| ai * di * di).sum(),
        }
    }

    pub fn min(&self) -> f64 {
        match self {
            Curvature::Scalar(a) => *a,
            Curvature::Diagonal(v) => v.min(),
        }
    }

    pub fn max(&self) -> f64 {
        match self {
            Curvature::Scalar(a) => *a,
            Curvature::Diagonal(v) => v.max(),
        }
    }

    pub fn scaled(&self, f: f64) -> Curvature {
        match self {
            Curvature::Scalar(a) => Curvature::Scalar(a * f),
            Curvature::Diagonal(v) => Curvature::Diagonal(v * f),
        }
    }

    pub fn clamped(&self, lo: f64, hi: f64) -> Curvature {
        match self {
            Curvature::Scalar(a) => Curvature::Scalar(a.clamp(lo, hi)),
            Curvature::Diagonal(v) => Curvature::Diagonal(v.map(|a| a.clamp(lo, hi))),
        }
    }

    pub fn is_positive(&self) -> bool {
        match self {
            Curvature::Scalar(a) => *a > 0.0 && a.is_finite(),
            Curvature::Diagonal(v) => v.iter().all(|a| *a > 0.0 && a.is_finite()),
        }
    }
}

impl From<f64> for Curvature {
    fn from(a: f64) -> Self {
        Curvature::Scalar(a)
    }
}

/// One oracle sample: a value and one Clarke subgradient.
#[derive(Debug, Clone, PartialEq)]
pub struct OracleSample {
    pub value: f64,
    pub subgradient: Vector,
    /// Free-form diagnostics from the oracle (inner solver notes and the like).
    pub metadata: Option<String>,
}

impl OracleSample {
    pub fn new(value: f64, subgradient: Vector) -> Self {
        Self {
            value,
            subgradient,
            metadata: None,
        }
    }
}

/// Value and subgradient oracle for the nonsmooth objective `r`.
pub trait NonsmoothOracle: Send + Sync {
    fn dim(&self) -> usize;

    fn eval(&self, x: &Vector) -> Result<OracleSample>;

    /// A constant `C` with `r(x) - r(x̄) - gᵀ(x - x̄) <= C‖x - x̄‖²`, when known.
    fn upper_c2_constant(&self) -> Option<f64> {
        None
    }
}

/// Smooth equality constraints `c(x) = 0` with a dense `m × n` Jacobian.
pub trait SmoothConstraints: Send + Sync {
    fn dim(&self) -> usize;

    fn count(&self) -> usize;

    /// Returns `(c(x), J(x))` with `J` of shape `m × n`.
    fn eval(&self, x: &Vector) -> (Vector, Matrix);

    /// Bound `H` with `|½ dᵀ∇²c_j(x) d| <= H‖d‖²` for every row.
    fn hessian_bound(&self) -> f64;

    fn values(&self, x: &Vector) -> Vector {
        self.eval(x).0
    }
}

/// The empty constraint set.
#[derive(Debug, Clone, Copy)]
pub struct NoConstraints {
    pub n: usize,
}

impl SmoothConstraints for NoConstraints {
    fn dim(&self) -> usize {
        self.n
    }
    fn count(&self) -> usize {
        0
    }
    fn eval(&self, _x: &Vector) -> (Vector, Matrix) {
        (Vector::zeros(0), Matrix::zeros(0, self.n))
    }
    fn hessian_bound(&self) -> f64 {
        0.0
    }
}

/// Affine constraints `A x - b = 0`.
#[derive(Debug, Clone)]
pub struct LinearConstraints {
    pub a: Matrix,
    pub b: Vector,
}

impl SmoothConstraints for LinearConstraints {
    fn dim(&self) -> usize {
        self.a.ncols()
    }
    fn count(&self) -> usize {
        self.a.nrows()
    }
    fn eval(&self, x: &Vector) -> (Vector, Matrix) {
        (&self.a * x - &self.b, self.a.clone())
    }
    fn hessian_bound(&self) -> f64 {
        0.0
    }
}

type ConstraintFn = dyn Fn(&Vector) -> (Vector, Matrix) + Send + Sync;

/// Constraints given by a closure.
pub struct FnConstraints {
    pub n: usize,
    pub m: usize,
    pub hessian_bound: f64,
    pub f: Box<ConstraintFn>,
}

impl SmoothConstraints for FnConstraints {
    fn dim(&self) -> usize {
        self.n
    }
    fn count(&self) -> usize {
        self.m
    }
    fn eval(&self, x: &Vector) -> (Vector, Matrix) {
        (self.f)(x)
    }
    fn hessian_bound(&self) -> f64 {
        self.hessian_bound
    }
}

type OracleFn = dyn Fn(&Vector) -> (f64, Vector) + Send + Sync;

/// Objective oracle given by a closure.
pub struct FnOracle {
    pub n: usize,
    pub upper_c2: Option<f64>,
    pub f: Box<OracleFn>,
}

impl NonsmoothOracle for FnOracle {
    fn dim(&self) -> usize {
        self.n
    }
    fn eval(&self, x: &Vector) -> Result<OracleSample> {
        let (v, g) = (self.f)(x);
        Ok(OracleSample::new(v, g))
    }
    fn upper_c2_constant(&self) -> Option<f64> {
        self.upper_c2
    }
}

/// A complete problem instance.
#[derive(Clone)]
pub struct Problem {
    pub name: String,
    pub oracle: Arc<dyn NonsmoothOracle>,
    pub constraints: Arc<dyn SmoothConstraints>,
    pub bounds: BoxBounds,
    pub x0: Vector,
}

impl Problem {
    pub fn n(&self) -> usize {
        self.bounds.dim()
    }

    pub fn m(&self) -> usize {
        self.constraints.count()
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.n();
        if self.oracle.dim() != n || self.constraints.dim() != n || self.x0.len() != n {
            return Err(Error::Shape(format!(
                "problem '{}': oracle dim {}, constraint dim {}, x0 length {}, bounds dim {}",
                self.name,
                self.oracle.dim(),
                self.constraints.dim(),
                self.x0.len(),
                n
            )));
        }
        self.bounds.check(&self.x0, BOUND_TOL)
    }
}

impl std::fmt::Debug for Problem {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Problem")
            .field("name", &self.name)
            .field("n", &self.n())
            .field("m", &self.m())
            .finish()
    }
}

/// Counting wrapper around an oracle that enforces the bound and finiteness checks.
pub struct Evaluator<'a> {
    oracle: &'a dyn NonsmoothOracle,
    bounds: &'a BoxBounds,
    calls: usize,
}

impl<'a> Evaluator<'a> {
    pub fn new(oracle: &'a dyn NonsmoothOracle, bounds: &'a BoxBounds) -> Self {
        Self {
            oracle,
            bounds,
            calls: 0,
        }
    }

    pub fn calls(&self) -> usize {
        self.calls
    }

    pub fn evaluate(&mut self, x: &Vector) -> Result<OracleSample> {
        self.bounds.check(x, BOUND_TOL)?;
        let s = evaluate_objective(self.oracle, x)?;
        self.calls += 1;
        Ok(s)
    }
}

/// Evaluates `r` at `x` and checks the sample is finite with matching dimension.
pub fn evaluate_objective(oracle: &dyn NonsmoothOracle, x: &Vector) -> Result<OracleSample> {
    let s = oracle.eval(x)?;
    if s.subgradient.len() != x.len() {
        return Err(Error::Shape(format!(
            "subgradient has length {}, expected {}",
            s.subgradient.len(),
            x.len()
        )));
    }
    if !s.value.is_finite() {
        return Err(Error::OracleFailure { index: 0 });
    }
    ensure_finite(&s.subgradient)?;
    Ok(s)
}

/// How the model coefficient α is adapted between iterations.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum AlphaStrategy {
    #[default]
    FixedMultiplicative,
    Bb,
    Ratio,
    Diagonal,
}

impl std::str::FromStr for AlphaStrategy {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "fixed-multiplicative" | "fixed" => Ok(Self::FixedMultiplicative),
            "bb" => Ok(Self::Bb),
            "ratio" => Ok(Self::Ratio),
            "diagonal" => Ok(Self::Diagonal),
            other => Err(Error::Parse(format!("unknown alpha strategy '{other}'"))),
        }
    }
}

/// Solver parameters for the bundle driver and the restoration phase.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverConfig {
    /// Acceptance weight on positive predicted decrease.
    pub eta_l_plus: f64,
    /// Acceptance weight on negative predicted decrease.
    pub eta_l_minus: f64,
    /// Line-search sufficient-decrease weight.
    pub eta_beta: f64,
    /// Weight on positive predicted decrease after the line search.
    pub eta_gamma_plus: f64,
    /// Multiplier weight in the merit parameter and line search.
    pub eta_gamma_minus: f64,
    /// Growth factor for α on rejection.
    pub eta_alpha: f64,
    /// Additive margin in the merit parameter update.
    pub gamma: f64,
    /// Stopping tolerance on the subproblem step norm.
    pub eps: f64,
    pub alpha0: f64,
    pub alpha_min: f64,
    pub alpha_max: f64,
    /// Penalty reduction factor during restoration.
    pub eta_pi: f64,
    /// Required fraction of the feasibility decrease during restoration.
    pub eta_f: f64,
    /// Critical-point tolerance on the feasibility decrease.
    pub eps_f: f64,
    pub max_iters: usize,
    pub alpha_strategy: AlphaStrategy,
    /// Initial merit parameter; `None` means `gamma`.
    pub theta0: Option<f64>,
    /// Allow α to shrink after steps whose actual/predicted ratio is near one.
    pub alpha_decrease: bool,
    /// Closeness threshold for the α decrease.
    pub eta_u: f64,
    /// Starting level for the ratio strategy.
    pub ratio_eta0: f64,
    /// Half-width of the trust box used by the ratio strategy.
    pub ratio_radius: f64,
    /// Factor applied to α for coordinates sitting on an active bound.
    pub diagonal_boost: f64,
    /// QP solver tolerance.
    pub qp_tol: f64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            eta_l_plus: 0.5,
            eta_l_minus: 1.5,
            eta_beta: 0.1,
            eta_gamma_plus: 0.5,
            eta_gamma_minus: 1.5,
            eta_alpha: 2.0,
            gamma: 1e-3,
            eps: 1e-8,
            alpha0: 1.0,
            alpha_min: 1e-8,
            alpha_max: 1e12,
            eta_pi: 0.5,
            eta_f: 0.1,
            eps_f: 1e-10,
            max_iters: 1000,
            alpha_strategy: AlphaStrategy::FixedMultiplicative,
            theta0: None,
            alpha_decrease: true,
            eta_u: 0.9,
            ratio_eta0: 0.5,
            ratio_radius: f64::INFINITY,
            diagonal_boost: 10.0,
            qp_tol: 1e-9,
        }
    }
}

impl SolverConfig {
    pub fn theta_init(&self) -> f64 {
        self.theta0.unwrap_or(self.gamma)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::InvalidConfig(msg.to_string()));
        let all = [
            self.eta_l_plus,
            self.eta_l_minus,
            self.eta_beta,
            self.eta_gamma_plus,
            self.eta_gamma_minus,
            self.eta_alpha,
            self.gamma,
            self.eps,
            self.alpha0,
            self.alpha_min,
            self.alpha_max,
            self.eta_pi,
            self.eta_f,
            self.eps_f,
            self.eta_u,
            self.ratio_eta0,
            self.diagonal_boost,
            self.qp_tol,
        ];
        if all.iter().any(|v| v.is_nan()) {
            return bad("parameters must not be NaN");
        }
        if !(self.eta_l_plus > 0.0 && self.eta_l_plus <= 1.0) {
            return bad("need 0 < eta_l_plus <= 1");
        }
        if !(self.eta_l_minus >= 1.0) {
            return bad("need eta_l_minus >= 1");
        }
        if !(self.eta_beta > 0.0 && self.eta_beta < self.eta_gamma_plus && self.eta_gamma_plus <= 1.0)
        {
            return bad("need 0 < eta_beta < eta_gamma_plus <= 1");
        }
        if !(self.eta_gamma_minus >= 1.0) {
            return bad("need eta_gamma_minus >= 1");
        }
        if !(self.eta_alpha > 1.0) {
            return bad("need eta_alpha > 1");
        }
        if !(self.gamma > 0.0) {
            return bad("need gamma > 0");
        }
        if !(self.eta_pi > 0.0 && self.eta_pi < 1.0) {
            return bad("need 0 < eta_pi < 1");
        }
        if !(self.eta_f > 0.0 && self.eta_f < 1.0) {
            return bad("need 0 < eta_f < 1");
        }
        if !(self.eps_f >= 0.0) {
            return bad("need eps_f >= 0");
        }
        if !(self.eps >= 0.0) {
            return bad("need eps >= 0");
        }
        if !(self.alpha_min > 0.0 && self.alpha_min <= self.alpha_max) {
            return bad("need 0 < alpha_min <= alpha_max");
        }
        if !(self.alpha0 > 0.0 && self.alpha0.is_finite()) {
            return bad("need alpha0 > 0");
        }
        if let Some(t) = self.theta0 {
            if !(t > 0.0) {
                return bad("need theta0 > 0");
            }
        }
        if !(self.eta_u > 0.0 && self.eta_u < 1.0) {
            return bad("need 0 < eta_u < 1");
        }
        if !(self.ratio_eta0 > 0.0 && self.ratio_eta0 < 1.0) {
            return bad("need 0 < ratio_eta0 < 1");
        }
        if !(self.ratio_radius > 0.0) {
            return bad("need ratio_radius > 0");
        }
        if !(self.diagonal_boost >= 1.0) {
            return bad("need diagonal_boost >= 1");
        }
        if !(self.qp_tol > 0.0) {
            return bad("need qp_tol > 0");
        }
        Ok(())
    }
}

/// Classification of one driver iteration.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StepKind {
    Serious,
    Rejected,
    RestorationSerious,
    RestorationRejected,
    /// Final subproblem solve that triggered a stop.
    Terminal,
}

impl StepKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            StepKind::Serious => "serious",
            StepKind::Rejected => "rejected",
            StepKind::RestorationSerious => "restoration-serious",
            StepKind::RestorationRejected => "restoration-rejected",
            StepKind::Terminal => "terminal",
        }
    }

    pub fn is_restoration(&self) -> bool {
        matches!(self, StepKind::RestorationSerious | StepKind::RestorationRejected)
    }

    pub fn is_serious(&self) -> bool {
        matches!(self, StepKind::Serious | StepKind::RestorationSerious)
    }
}

impl std::str::FromStr for StepKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "serious" => Ok(StepKind::Serious),
            "rejected" => Ok(StepKind::Rejected),
            "restoration-serious" => Ok(StepKind::RestorationSerious),
            "restoration-rejected" => Ok(StepKind::RestorationRejected),
            "terminal" => Ok(StepKind::Terminal),
            other => Err(Error::Parse(format!("unknown step kind '{other}'"))),
        }
    }
}

/// One row of the solver trace.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub k: usize,
    pub step_kind: StepKind,
    /// `r(x_k)`.
    pub r_value: f64,
    /// Merit value at `x_k` under the parameter in force for this row.
    pub merit_value: f64,
    /// Norm of the full subproblem step.
    pub step_norm: f64,
    pub alpha: f64,
    pub beta: f64,
    pub theta: f64,
    pub pi: Option<f64>,
    pub kkt_residual: f64,
    pub oracle_calls: usize,
    /// Iterate at which the subproblem was built, in original coordinates.
    #[serde(skip)]
    pub x: Vector,
    /// Accepted next iterate, in original coordinates.
    #[serde(skip)]
    pub x_next: Option<Vector>,
    /// `dᵀ diag(α) d` for the full step.
    #[serde(skip)]
    pub alpha_dd: f64,
}

/// Maximum violation of the first-order conditions at `x`.
///
/// Uses the diagnostic sign convention `g + J(x)ᵀλ - ζ_l + ζ_u = 0`.
pub fn kkt_residual(
    x: &Vector,
    g: &Vector,
    lambda: &Vector,
    zeta_l: &Vector,
    zeta_u: &Vector,
    cons: &dyn SmoothConstraints,
    bounds: &BoxBounds,
) -> Result<f64> {
    let n = x.len();
    let m = cons.count();
    if g.len() != n
        || zeta_l.len() != n
        || zeta_u.len() != n
        || bounds.dim() != n
        || cons.dim() != n
        || lambda.len() != m
    {
        return Err(Error::Shape(format!(
            "kkt_residual: n={n}, m={m}, |g|={}, |λ|={}, |ζ_l|={}, |ζ_u|={}, bounds {}",
            g.len(),
            lambda.len(),
            zeta_l.len(),
            zeta_u.len(),
            bounds.dim()
        )));
    }
    let (c, jac) = cons.eval(x);
    let stat = g + jac.transpose() * lambda - zeta_l + zeta_u;
    let mut res = stat.amax();
    if m > 0 {
        res = res.max(c.amax());
    }
    for j in 0..n {
        let lo = x[j] - bounds.lower[j];
        let hi = bounds.upper[j] - x[j];
        res = res
            .max((zeta_l[j] * lo).abs())
            .max((zeta_u[j] * hi).abs())
            .max(-zeta_l[j])
            .max(-zeta_u[j])
            .max(-lo)
            .max(-hi);
    }
    Ok(res.max(0.0))
}

/// Largest central-difference error of the Jacobian at `x`.
pub fn jacobian_fd_error(cons: &dyn SmoothConstraints, x: &Vector, h: f64) -> f64 {
    let (_, jac) = cons.eval(x);
    let mut err: f64 = 0.0;
    for j in 0..x.len() {
        let mut xp = x.clone();
        let mut xm = x.clone();
        xp[j] += h;
        xm[j] -= h;
        let fd = (cons.values(&xp) - cons.values(&xm)) / (2.0 * h);
        err = err.max((jac.column(j) - fd).norm());
    }
    err
}

#[cfg(test)]
mod tests {
    use super::*;

    struct L1;
    impl NonsmoothOracle for L1 {
        fn dim(&self) -> usize {
            2
        }
        fn eval(&self, x: &Vector) -> Result<OracleSample> {
            let g = x.map(|v| if v > 0.0 { 1.0 } else if v < 0.0 { -1.0 } else { 0.0 });
            Ok(OracleSample::new(x.abs().sum(), g))
        }
    }

    struct Bad;
    impl NonsmoothOracle for Bad {
        fn dim(&self) -> usize {
            2
        }
        fn eval(&self, _x: &Vector) -> Result<OracleSample> {
            Ok(OracleSample::new(0.0, Vector::from_vec(vec![0.0, f64::NAN])))
        }
    }

    #[test]
    fn l1_oracle_samples() {
        let b = BoxBounds::uniform(2, -5.0, 5.0).unwrap();
        let mut ev = Evaluator::new(&L1, &b);
        let s = ev.evaluate(&Vector::from_vec(vec![1.0, -2.0])).unwrap();
        assert_eq!(s.value, 3.0);
        assert_eq!(s.subgradient, Vector::from_vec(vec![1.0, -1.0]));
        let s = ev.evaluate(&Vector::zeros(2)).unwrap();
        assert_eq!(s.value, 0.0);
        assert_eq!(s.subgradient, Vector::zeros(2));
        assert_eq!(ev.calls(), 2);
    }

    #[test]
    fn non_finite_subgradient_reports_index() {
        let b = BoxBounds::uniform(2, -1.0, 1.0).unwrap();
        let mut ev = Evaluator::new(&Bad, &b);
        assert_eq!(
            ev.evaluate(&Vector::zeros(2)),
            Err(Error::OracleFailure { index: 1 })
        );
        assert_eq!(ev.calls(), 0);
    }

    #[test]
    fn out_of_bounds_rejected() {
        let b = BoxBounds::uniform(2, -1.0, 1.0).unwrap();
        let mut ev = Evaluator::new(&L1, &b);
        let err = ev.evaluate(&Vector::from_vec(vec![0.0, 1.0 + 1e-9])).unwrap_err();
        assert!(matches!(err, Error::OutOfBounds { index: 1, .. }));
        assert!(ev.evaluate(&Vector::from_vec(vec![0.0, 1.0 + 1e-13])).is_ok());
    }

    #[test]
    fn kkt_examples() {
        let none = NoConstraints { n: 1 };
        let b = BoxBounds::uniform(1, 0.0, 2.0).unwrap();
        let z = Vector::zeros(1);
        let e = Vector::zeros(0);
        let r = kkt_residual(&Vector::from_vec(vec![1.0]), &z, &e, &z, &z, &none, &b).unwrap();
        assert_eq!(r, 0.0);
        let one = Vector::from_vec(vec![1.0]);
        let r = kkt_residual(&Vector::zeros(1), &one, &e, &one, &z, &none, &b).unwrap();
        assert_eq!(r, 0.0);
        let lin = LinearConstraints {
            a: Matrix::from_element(1, 1, 1.0),
            b: Vector::from_vec(vec![1.0]),
        };
        let r = kkt_residual(&Vector::from_vec(vec![0.5]), &z, &z, &z, &z, &lin, &b).unwrap();
        assert!((r - 0.5).abs() < 1e-15);
    }

    #[test]
    fn kkt_shape_mismatch() {
        let none = NoConstraints { n: 2 };
        let b = BoxBounds::uniform(2, 0.0, 1.0).unwrap();
        let z = Vector::zeros(2);
        let r = kkt_residual(&z, &Vector::zeros(3), &Vector::zeros(0), &z, &z, &none, &b);
        assert!(matches!(r, Err(Error::Shape(_))));
    }

    #[test]
    fn default_config_is_valid() {
        SolverConfig::default().validate().unwrap();
    }

    #[test]
    fn config_orderings_enforced() {
        let base = SolverConfig::default();
        let cases: Vec<Box<dyn Fn(&mut SolverConfig)>> = vec![
            Box::new(|c| c.eta_l_plus = 0.0),
            Box::new(|c| c.eta_l_plus = 1.1),
            Box::new(|c| c.eta_l_minus = 0.9),
            Box::new(|c| c.eta_beta = 0.6),
            Box::new(|c| c.eta_gamma_plus = 1.2),
            Box::new(|c| c.eta_gamma_minus = 0.5),
            Box::new(|c| c.eta_alpha = 1.0),
            Box::new(|c| c.gamma = 0.0),
            Box::new(|c| c.eta_pi = 1.0),
            Box::new(|c| c.eta_f = 0.0),
            Box::new(|c| c.eps_f = -1.0),
        ];
        for f in cases {
            let mut c = base.clone();
            f(&mut c);
            assert!(c.validate().is_err(), "{c:?}");
        }
    }

    #[test]
    fn bounds_require_strict_order() {
        assert!(BoxBounds::from_slices(&[0.0], &[0.0]).is_err());
        assert!(BoxBounds::from_slices(&[0.0, 1.0], &[1.0]).is_err());
    }

    #[test]
    fn curvature_quad() {
        let d = Vector::from_vec(vec![1.0, 2.0]);
        assert_eq!(Curvature::Scalar(2.0).quad(&d), 10.0);
        let diag = Curvature::Diagonal(Vector::from_vec(vec![1.0, 3.0]));
        assert_eq!(diag.quad(&d), 13.0);
    }
}
