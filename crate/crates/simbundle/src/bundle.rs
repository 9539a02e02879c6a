//! The bundle driver: model subproblem, trial acceptance, merit parameter,
//! ℓ1-merit backtracking and α adaptation.
//!
//! Each iteration builds `Φ_k(d) = r_k + g_kᵀd + ½dᵀα_k d`, solves the
//! linearized subproblem, and either takes a serious step `x_k + β_k d_k` or
//! rejects the trial and stiffens the model. Inconsistent linearizations are
//! handed to [`crate::restoration`].

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{
    kkt_residual, AlphaStrategy, Curvature, Evaluator, IterationRecord, OracleSample, Problem,
    SmoothConstraints, SolverConfig, StepKind, Vector,
};
use crate::qp::{solve_eq_box, EqBoxQP, QPSolution, QpStatus};
use crate::restoration::{self, RestorationKind};

/// Smallest step length tried before giving up.
pub const BETA_MIN: f64 = 1e-16;

/// `Φ(d) = r + gᵀd + ½dᵀαd`.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadraticModel {
    pub r: f64,
    pub g: Vector,
    pub alpha: Curvature,
}

impl QuadraticModel {
    pub fn value(&self, d: &Vector) -> f64 {
        self.r + self.g.dot(d) + 0.5 * self.alpha.quad(d)
    }
}

/// `-β gᵀd - ½β² dᵀαd`.
pub fn predicted_decrease(model: &QuadraticModel, d: &Vector, beta: f64) -> f64 {
    -beta * model.g.dot(d) - 0.5 * beta * beta * model.alpha.quad(d)
}

/// Actual decrease minus the weighted predicted decrease; a trial is accepted
/// when this is strictly positive.
pub fn acceptance_ratio(r_current: f64, r_trial: f64, delta: f64, eta_plus: f64, eta_minus: f64) -> f64 {
    let actual = r_current - r_trial;
    if delta >= 0.0 {
        actual - eta_plus * delta
    } else {
        actual - eta_minus * delta
    }
}

pub fn update_theta(
    theta_prev: f64,
    lambda: &Vector,
    cfg: &SolverConfig,
    after_restoration: bool,
    pi_prev: Option<f64>,
) -> f64 {
    let lam = if lambda.is_empty() { 0.0 } else { lambda.amax() };
    let target = cfg.eta_gamma_minus * lam + cfg.gamma;
    match (after_restoration, pi_prev) {
        (true, Some(pi)) => (1.0 / pi).max(target),
        _ => theta_prev.max(target),
    }
}

/// `r + θ‖c‖₁`.
pub fn merit(r_value: f64, c_values: &Vector, theta: f64) -> f64 {
    r_value + theta * c_values.abs().sum()
}

/// Step length that the curvature bound on `c` guarantees to pass.
pub fn line_search_floor(alpha: f64, theta: f64, m: usize, hessian_bound: f64, eta_beta: f64) -> f64 {
    let denom = 2.0 * hessian_bound * theta * m as f64;
    if denom <= 0.0 {
        return 1.0;
    }
    halving_floor(eta_beta * alpha / denom)
}

pub(crate) fn halving_floor(t: f64) -> f64 {
    if t >= 1.0 {
        return 1.0;
    }
    let p = (t.ln() / 0.5_f64.ln()).ceil();
    0.5_f64.powf(p).min(1.0)
}

/// Left and right sides of the merit line-search condition at `beta`.
pub fn line_search_sides(
    x_k: &Vector,
    d_k: &Vector,
    lambda: &Vector,
    theta: f64,
    alpha: &Curvature,
    cons: &dyn SmoothConstraints,
    cfg: &SolverConfig,
    beta: f64,
) -> (f64, f64) {
    let c0 = cons.values(x_k);
    let lam_c = if c0.is_empty() { 0.0 } else { lambda.dot(&c0) };
    let lhs = theta * c0.abs().sum() - cfg.eta_gamma_minus * beta * lam_c.abs();
    let c1 = cons.values(&(x_k + beta * d_k));
    let rhs = theta * c1.abs().sum() - cfg.eta_beta * 0.5 * beta * alpha.quad(d_k);
    (lhs, rhs)
}

/// Backtracks `β ∈ {1, ½, ¼, …}` until the merit condition holds.
pub fn line_search(
    x_k: &Vector,
    d_k: &Vector,
    lambda: &Vector,
    theta: f64,
    alpha: &Curvature,
    cons: &dyn SmoothConstraints,
    cfg: &SolverConfig,
) -> Result<f64> {
    let mut beta = 1.0;
    loop {
        let (lhs, rhs) = line_search_sides(x_k, d_k, lambda, theta, alpha, cons, cfg, beta);
        if lhs >= rhs {
            return Ok(beta);
        }
        beta *= 0.5;
        if beta < BETA_MIN {
            let floor = line_search_floor(
                alpha.min(),
                theta,
                cons.count(),
                cons.hessian_bound(),
                cfg.eta_beta,
            );
            return Err(Error::BacktrackExhausted {
                beta,
                floor,
                detail: format!(
                    "merit condition still fails (lhs {lhs:e}, rhs {rhs:e}); hessian bound {} may be too small",
                    cons.hessian_bound()
                ),
            });
        }
    }
}

/// Strategy-specific state carried between α updates.
#[derive(Debug, Clone, PartialEq)]
pub struct AlphaState {
    /// Scalar base level (used directly by all but the diagonal rule).
    pub base: f64,
    /// Current level `η_k` of the ratio rule.
    pub ratio_eta: f64,
}

/// Inputs to [`update_alpha`]. The point fields describe where the next model is built.
pub struct AlphaUpdate<'a> {
    pub accepted: bool,
    /// Actual over predicted decrease of the accepted step, when the prediction is positive.
    pub gain: Option<f64>,
    /// `(s, y)` = differences of the last two serious iterates and subgradients.
    pub history: Option<(&'a Vector, &'a Vector)>,
    pub r: f64,
    pub g: &'a Vector,
    /// Iterate in normalized coordinates (`0 <= x <= width`).
    pub x: &'a Vector,
    pub width: &'a Vector,
    /// Bound multipliers of the last subproblem.
    pub zeta_l: Option<&'a Vector>,
    pub zeta_u: Option<&'a Vector>,
}

/// Returns the next α.
pub fn update_alpha(alpha: &Curvature, state: &mut AlphaState, u: &AlphaUpdate<'_>, cfg: &SolverConfig) -> Curvature {
    let clamp = |a: f64| a.clamp(cfg.alpha_min, cfg.alpha_max);
    if !u.accepted {
        state.base = clamp(state.base * cfg.eta_alpha);
        return match cfg.alpha_strategy {
            AlphaStrategy::Ratio => {
                state.ratio_eta = (1.0 - (1.0 - state.ratio_eta) / cfg.eta_alpha).min(1.0 - 1e-6);
                let next = clamp(alpha.max() * cfg.eta_alpha);
                let fitted = ratio_alpha(u, state.ratio_eta, cfg).unwrap_or(next);
                state.base = next.max(fitted);
                Curvature::Scalar(state.base)
            }
            AlphaStrategy::Diagonal => diagonal_alpha(state.base, u, cfg),
            _ => alpha.scaled(cfg.eta_alpha).clamped(cfg.alpha_min, cfg.alpha_max),
        };
    }
    let near_one = |q: f64| (q - 1.0).abs() <= 1.0 - cfg.eta_u;
    match cfg.alpha_strategy {
        AlphaStrategy::FixedMultiplicative => {
            if cfg.alpha_decrease && u.gain.map_or(false, near_one) {
                state.base = clamp(state.base / cfg.eta_alpha);
                alpha.scaled(1.0 / cfg.eta_alpha).clamped(cfg.alpha_min, cfg.alpha_max)
            } else {
                alpha.clone()
            }
        }
        AlphaStrategy::Bb => {
            if let Some((s, y)) = u.history {
                if let Some(a) = bb_alpha(s, y) {
                    state.base = clamp(a);
                    return Curvature::Scalar(state.base);
                }
            }
            alpha.clone()
        }
        AlphaStrategy::Ratio => {
            if cfg.alpha_decrease && u.gain.map_or(false, |q| q >= cfg.eta_u) {
                state.ratio_eta = (1.0 - (1.0 - state.ratio_eta) * cfg.eta_alpha).max(cfg.ratio_eta0);
            }
            if let Some(a) = ratio_alpha(u, state.ratio_eta, cfg) {
                state.base = a;
                Curvature::Scalar(a)
            } else {
                alpha.clone()
            }
        }
        AlphaStrategy::Diagonal => {
            if cfg.alpha_decrease && u.gain.map_or(false, near_one) {
                state.base = clamp(state.base / cfg.eta_alpha);
            }
            diagonal_alpha(state.base, u, cfg)
        }
    }
}

/// `sᵀy / yᵀy`, or `None` when undefined or non-positive.
pub fn bb_alpha(s: &Vector, y: &Vector) -> Option<f64> {
    let yy = y.dot(y);
    let sy = s.dot(y);
    if yy == 0.0 || sy <= 0.0 {
        None
    } else {
        Some(sy / yy)
    }
}

/// Minimum of `gᵀd + ½αd²` over the trust box at the given iterate.
fn box_model_min(u: &AlphaUpdate<'_>, radius: f64, a: f64) -> f64 {
    let mut total = 0.0;
    for i in 0..u.g.len() {
        let lo = (-u.x[i]).max(-radius);
        let hi = (u.width[i] - u.x[i]).min(radius);
        let d = (-u.g[i] / a).clamp(lo, hi);
        total += u.g[i] * d + 0.5 * a * d * d;
    }
    total
}

/// Smallest α with `min Φ >= η r` over the trust box, by bisection in log α.
fn ratio_alpha(u: &AlphaUpdate<'_>, eta: f64, cfg: &SolverConfig) -> Option<f64> {
    let need = -(1.0 - eta) * u.r;
    if !(need < 0.0) {
        return None;
    }
    let ok = |a: f64| box_model_min(u, cfg.ratio_radius, a) >= need;
    if ok(cfg.alpha_min) {
        return Some(cfg.alpha_min);
    }
    if !ok(cfg.alpha_max) {
        return Some(cfg.alpha_max);
    }
    let (mut lo, mut hi) = (cfg.alpha_min.ln(), cfg.alpha_max.ln());
    for _ in 0..100 {
        let mid = 0.5 * (lo + hi);
        if ok(mid.exp()) {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Some(hi.exp())
}

fn diagonal_alpha(base: f64, u: &AlphaUpdate<'_>, cfg: &SolverConfig) -> Curvature {
    let n = u.x.len();
    let at_bound = |i: usize| {
        let tol = 1e-10 * (1.0 + u.width[i]);
        let lo = u.x[i] <= tol && u.zeta_l.map_or(false, |z| z[i] > 0.0);
        let hi = u.width[i] - u.x[i] <= tol && u.zeta_u.map_or(false, |z| z[i] > 0.0);
        lo || hi
    };
    Curvature::Diagonal(Vector::from_fn(n, |i, _| {
        let a = if at_bound(i) { base * cfg.diagonal_boost } else { base };
        a.clamp(cfg.alpha_min, cfg.alpha_max)
    }))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolveStatus {
    Converged,
    MaxIters,
    RestorationCriticalPoint,
    OracleFailure,
}

impl SolveStatus {
    pub fn as_str(&self) -> &'static str {
        match self {
            SolveStatus::Converged => "converged",
            SolveStatus::MaxIters => "max_iters",
            SolveStatus::RestorationCriticalPoint => "restoration_critical_point",
            SolveStatus::OracleFailure => "oracle_failure",
        }
    }
}

#[derive(Debug, Clone)]
pub struct SolveReport {
    pub final_x: Vector,
    pub status: SolveStatus,
    pub iterations: usize,
    pub serious_steps: usize,
    pub rejected_steps: usize,
    pub trace: Vec<IterationRecord>,
    pub objective: f64,
    pub constraint_violation: f64,
    pub kkt_residual: f64,
    pub final_alpha: f64,
    pub oracle_calls: usize,
    pub qp_solves: usize,
    pub restoration_calls: usize,
    /// Last feasibility decrease on a restoration critical-point exit.
    pub delta_f: Option<f64>,
    pub message: Option<String>,
}

/// Mutable driver state shared with the restoration phase.
#[derive(Debug, Clone)]
pub struct SolverState {
    /// Current iterate in original coordinates.
    pub x: Vector,
    pub sample: OracleSample,
    pub alpha: Curvature,
    pub alpha_state: AlphaState,
    pub theta: f64,
    pub pi: Option<f64>,
    pub after_restoration: bool,
    pub k: usize,
    pub serious: usize,
    pub rejected: usize,
    pub qp_solves: usize,
    pub trace: Vec<IterationRecord>,
    /// Previous serious iterate and subgradient, for the BB rule.
    pub previous: Option<(Vector, Vector)>,
    pub last_kkt: f64,
}

impl SolverState {
    pub fn new(x: Vector, sample: OracleSample, cfg: &SolverConfig) -> Self {
        let alpha = cfg.alpha0.clamp(cfg.alpha_min, cfg.alpha_max);
        Self {
            x,
            sample,
            alpha: Curvature::Scalar(alpha),
            alpha_state: AlphaState {
                base: alpha,
                ratio_eta: cfg.ratio_eta0,
            },
            theta: cfg.theta_init(),
            pi: None,
            after_restoration: false,
            k: 0,
            serious: 0,
            rejected: 0,
            qp_solves: 0,
            trace: Vec::new(),
            previous: None,
            last_kkt: f64::INFINITY,
        }
    }

    pub fn model(&self) -> QuadraticModel {
        QuadraticModel {
            r: self.sample.value,
            g: self.sample.subgradient.clone(),
            alpha: self.alpha.clone(),
        }
    }

    /// Records an accepted move to `x_new`.
    pub(crate) fn accept(&mut self, x_new: Vector, sample: OracleSample) {
        self.previous = Some((self.x.clone(), self.sample.subgradient.clone()));
        self.x = x_new;
        self.sample = sample;
    }
}

/// Step box `l - x <= d <= u - x`.
pub(crate) fn step_box(problem: &Problem, x: &Vector) -> (Vector, Vector) {
    let lo = Vector::from_fn(x.len(), |j, _| (problem.bounds.lower[j] - x[j]).min(0.0));
    let hi = Vector::from_fn(x.len(), |j, _| (problem.bounds.upper[j] - x[j]).max(0.0));
    (lo, hi)
}

/// `x + βd` clipped into the box against rounding.
pub(crate) fn advance(problem: &Problem, x: &Vector, d: &Vector, beta: f64) -> Vector {
    problem.bounds.project(&(x + beta * d))
}

/// KKT residual at `x` from subproblem multipliers in the internal convention.
pub(crate) fn kkt_from_subproblem(problem: &Problem, x: &Vector, g: &Vector, sol: &QPSolution, scale: f64) -> f64 {
    let lam = -&sol.lambda / scale;
    let zl = &sol.zeta_l / scale;
    let zu = &sol.zeta_u / scale;
    kkt_residual(x, g, &lam, &zl, &zu, problem.constraints.as_ref(), &problem.bounds).unwrap_or(f64::INFINITY)
}

/// Runs the bundle method from `problem.x0`.
pub fn solve(problem: &Problem, cfg: &SolverConfig) -> Result<SolveReport> {
    cfg.validate()?;
    problem.validate()?;
    let mut ev = Evaluator::new(problem.oracle.as_ref(), &problem.bounds);
    let s0 = match ev.evaluate(&problem.x0) {
        Ok(s) => s,
        Err(e @ Error::OracleFailure { .. }) => {
            return Ok(failure_report(problem, problem.x0.clone(), e, 0));
        }
        Err(e) => return Err(e),
    };
    let mut state = SolverState::new(problem.x0.clone(), s0, cfg);
    match drive(problem, cfg, &mut state, &mut ev) {
        Ok((status, delta_f, restoration_calls)) => Ok(finish(problem, state, &ev, status, delta_f, restoration_calls, None)),
        Err(e @ Error::OracleFailure { .. }) => {
            let msg = e.to_string();
            Ok(finish(problem, state, &ev, SolveStatus::OracleFailure, None, 0, Some(msg)))
        }
        Err(e) => Err(e),
    }
}

fn failure_report(problem: &Problem, x: Vector, e: Error, calls: usize) -> SolveReport {
    SolveReport {
        constraint_violation: problem.constraints.values(&x).amax_or_zero(),
        final_x: x,
        status: SolveStatus::OracleFailure,
        iterations: 0,
        serious_steps: 0,
        rejected_steps: 0,
        trace: Vec::new(),
        objective: f64::NAN,
        kkt_residual: f64::INFINITY,
        final_alpha: f64::NAN,
        oracle_calls: calls,
        qp_solves: 0,
        restoration_calls: 0,
        delta_f: None,
        message: Some(e.to_string()),
    }
}

trait AmaxOrZero {
    fn amax_or_zero(&self) -> f64;
}

impl AmaxOrZero for Vector {
    fn amax_or_zero(&self) -> f64 {
        if self.is_empty() {
            0.0
        } else {
            self.amax()
        }
    }
}

fn finish(
    problem: &Problem,
    state: SolverState,
    ev: &Evaluator<'_>,
    status: SolveStatus,
    delta_f: Option<f64>,
    restoration_calls: usize,
    message: Option<String>,
) -> SolveReport {
    SolveReport {
        constraint_violation: problem.constraints.values(&state.x).amax_or_zero(),
        objective: state.sample.value,
        final_alpha: state.alpha.max(),
        kkt_residual: state.last_kkt,
        final_x: state.x,
        status,
        iterations: state.k,
        serious_steps: state.serious,
        rejected_steps: state.rejected,
        trace: state.trace,
        oracle_calls: ev.calls(),
        qp_solves: state.qp_solves,
        restoration_calls,
        delta_f,
        message,
    }
}

fn drive(
    problem: &Problem,
    cfg: &SolverConfig,
    state: &mut SolverState,
    ev: &mut Evaluator<'_>,
) -> Result<(SolveStatus, Option<f64>, usize)> {
    let cons = problem.constraints.as_ref();
    let width = problem.bounds.width();
    let mut restoration_calls = 0;
    loop {
        if state.k >= cfg.max_iters {
            return Ok((SolveStatus::MaxIters, None, restoration_calls));
        }
        let x = state.x.clone();
        let (c, jac) = cons.eval(&x);
        let (lo, hi) = step_box(problem, &x);
        let qp = EqBoxQP {
            g: state.sample.subgradient.clone(),
            alpha: state.alpha.clone(),
            a: jac,
            b: -&c,
            lower: lo,
            upper: hi,
        };
        let sol = solve_eq_box(&qp, cfg.qp_tol)?;
        state.qp_solves += 1;

        if sol.status == QpStatus::Inconsistent {
            restoration_calls += 1;
            let out = restoration::restore(state, problem, ev, cfg)?;
            match out.kind {
                RestorationKind::SeriousStep => continue,
                RestorationKind::CriticalPointExit => {
                    return Ok((SolveStatus::RestorationCriticalPoint, Some(out.delta_f), restoration_calls))
                }
                RestorationKind::IterationLimit => return Ok((SolveStatus::MaxIters, None, restoration_calls)),
            }
        }

        let model = state.model();
        let d = sol.d.clone();
        let dnorm = d.norm();
        let kkt = kkt_from_subproblem(problem, &x, &model.g, &sol, 1.0);
        state.last_kkt = kkt;
        let mut record = IterationRecord {
            k: state.k,
            step_kind: StepKind::Terminal,
            r_value: model.r,
            merit_value: merit(model.r, &c, state.theta),
            step_norm: dnorm,
            alpha: state.alpha.max(),
            beta: 0.0,
            theta: state.theta,
            pi: state.pi,
            kkt_residual: kkt,
            oracle_calls: ev.calls(),
            x: x.clone(),
            x_next: None,
            alpha_dd: model.alpha.quad(&d),
        };
        if dnorm <= cfg.eps {
            state.trace.push(record);
            state.k += 1;
            return Ok((SolveStatus::Converged, None, restoration_calls));
        }

        let trial = advance(problem, &x, &d, 1.0);
        let trial_sample = ev.evaluate(&trial)?;
        let delta = predicted_decrease(&model, &d, 1.0);
        let rho = acceptance_ratio(model.r, trial_sample.value, delta, cfg.eta_l_plus, cfg.eta_l_minus);
        state.theta = update_theta(state.theta, &sol.lambda, cfg, state.after_restoration, state.pi);
        state.after_restoration = false;
        record.theta = state.theta;
        record.merit_value = merit(model.r, &c, state.theta);

        let mut accepted = None;
        if rho > 0.0 {
            let beta = line_search(&x, &d, &sol.lambda, state.theta, &model.alpha, cons, cfg)?;
            let (x_new, s_new) = if beta == 1.0 {
                (trial, trial_sample)
            } else {
                let xn = advance(problem, &x, &d, beta);
                let sn = ev.evaluate(&xn)?;
                (xn, sn)
            };
            let delta_b = predicted_decrease(&model, &d, beta);
            let rho_b = acceptance_ratio(model.r, s_new.value, delta_b, cfg.eta_gamma_plus, cfg.eta_gamma_minus);
            record.beta = beta;
            if rho_b >= 0.0 {
                let gain = if delta_b > 0.0 { Some((model.r - s_new.value) / delta_b) } else { None };
                accepted = Some((x_new, s_new, gain));
            }
        }

        record.oracle_calls = ev.calls();
        match accepted {
            Some((x_new, s_new, gain)) => {
                record.step_kind = StepKind::Serious;
                record.x_next = Some(x_new.clone());
                state.trace.push(record);
                state.accept(x_new, s_new);
                state.serious += 1;
                let xt = &state.x - &problem.bounds.lower;
                let hist = state.previous.as_ref().map(|(xp, gp)| (&state.x - xp, &state.sample.subgradient - gp));
                let u = AlphaUpdate {
                    accepted: true,
                    gain,
                    history: hist.as_ref().map(|(s, y)| (s, y)),
                    r: state.sample.value,
                    g: &state.sample.subgradient,
                    x: &xt,
                    width: &width,
                    zeta_l: Some(&sol.zeta_l),
                    zeta_u: Some(&sol.zeta_u),
                };
                state.alpha = update_alpha(&state.alpha, &mut state.alpha_state, &u, cfg);
            }
            None => {
                record.step_kind = StepKind::Rejected;
                state.trace.push(record);
                state.rejected += 1;
                let xt = &state.x - &problem.bounds.lower;
                let u = AlphaUpdate {
                    accepted: false,
                    gain: None,
                    history: None,
                    r: state.sample.value,
                    g: &state.sample.subgradient,
                    x: &xt,
                    width: &width,
                    zeta_l: Some(&sol.zeta_l),
                    zeta_u: Some(&sol.zeta_u),
                };
                state.alpha = update_alpha(&state.alpha, &mut state.alpha_state, &u, cfg);
            }
        }
        state.k += 1;
    }
}
