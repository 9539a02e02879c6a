//! Consistency restoration.
//!
//! Entered when the linearized constraints admit no step inside the box.
//! Solves the ℓ1-penalty subproblem, lowering `π` until its predicted
//! decrease captures a fixed share of what the feasibility problem could
//! achieve, then line-searches on `r + ‖c‖₁/π`.

use crate::bundle::{
    acceptance_ratio, advance, halving_floor, predicted_decrease, step_box, QuadraticModel,
    SolverState, BETA_MIN,
};
use crate::error::{Error, Result};
use crate::model::{
    kkt_residual, Curvature, Evaluator, IterationRecord, Matrix, Problem, SmoothConstraints,
    SolverConfig, StepKind, Vector,
};
use crate::qp::{solve_feasibility_l1, solve_penalty, EqBoxQP, PenaltyQP, QPSolution};

/// Maximum number of π reductions in one call of [`update_pi`].
pub const PI_LOOP_GUARD: usize = 200;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RestorationKind {
    SeriousStep,
    CriticalPointExit,
    /// The driver's iteration budget ran out inside restoration.
    IterationLimit,
}

#[derive(Debug, Clone)]
pub struct RestorationOutcome {
    pub kind: RestorationKind,
    pub x_next: Option<Vector>,
    pub pi_final: f64,
    pub iterations_used: usize,
    /// Feasibility decrease at the last restoration pass.
    pub delta_f: f64,
}

/// `π(-gᵀd - ½dᵀαd) + ‖c‖₁ - ‖c + J d‖₁` with `J` of shape `m × n`.
pub fn penalty_predicted_decrease(model: &QuadraticModel, d: &Vector, pi: f64, c: &Vector, jac: &Matrix) -> f64 {
    let lin = if c.is_empty() { 0.0 } else { c.abs().sum() - (c + jac * d).abs().sum() };
    pi * predicted_decrease(model, d, 1.0) + lin
}

/// Largest `π` the existence argument guarantees to pass:
/// `(1 - η_f)δ^f / (‖g‖D + ½αD²)` with `D` the box diameter.
pub fn pi_bound(model: &QuadraticModel, delta_f: f64, diameter: f64, eta_f: f64) -> f64 {
    let denom = model.g.norm() * diameter + 0.5 * model.alpha.max() * diameter * diameter;
    if denom <= 0.0 {
        f64::INFINITY
    } else {
        (1.0 - eta_f) * delta_f / denom
    }
}

#[derive(Debug, Clone)]
pub struct PiUpdate {
    pub pi: f64,
    pub solution: QPSolution,
    pub delta_pi: f64,
    pub solves: usize,
}

/// Shrinks `π` by `eta_pi` until `δ^π >= eta_f·δ^f`.
#[allow(clippy::too_many_arguments)]
pub fn update_pi(
    pi_in: f64,
    model: &QuadraticModel,
    c: &Vector,
    jac: &Matrix,
    lower: &Vector,
    upper: &Vector,
    delta_f: f64,
    cfg: &SolverConfig,
) -> Result<PiUpdate> {
    let mut pi = pi_in;
    for solves in 1..=PI_LOOP_GUARD {
        let qp = PenaltyQP {
            base: EqBoxQP {
                g: model.g.clone(),
                alpha: model.alpha.clone(),
                a: jac.clone(),
                b: -c,
                lower: lower.clone(),
                upper: upper.clone(),
            },
            pi,
        };
        let solution = solve_penalty(&qp, cfg.qp_tol)?;
        let delta_pi = penalty_predicted_decrease(model, &solution.d, pi, c, jac);
        if delta_pi >= cfg.eta_f * delta_f {
            return Ok(PiUpdate {
                pi,
                solution,
                delta_pi,
                solves,
            });
        }
        pi *= cfg.eta_pi;
    }
    Err(Error::LoopGuard {
        iterations: PI_LOOP_GUARD,
        pi,
        delta_f,
    })
}

/// Both sides of the restoration line-search condition at `beta`.
#[allow(clippy::too_many_arguments)]
pub fn restoration_line_search_sides(
    x_k: &Vector,
    d_k: &Vector,
    lambda: &Vector,
    pi: f64,
    alpha: &Curvature,
    cons: &dyn SmoothConstraints,
    cfg: &SolverConfig,
    beta: f64,
) -> (f64, f64) {
    let (c0, jac) = cons.eval(x_k);
    let lam_jd = if c0.is_empty() { 0.0 } else { lambda.dot(&(&jac * d_k)) };
    let lhs = c0.abs().sum() / pi + beta / pi * lam_jd;
    let c1 = cons.values(&(x_k + beta * d_k));
    let rhs = c1.abs().sum() / pi - cfg.eta_beta * 0.5 * beta * alpha.quad(d_k);
    (lhs, rhs)
}

/// Guaranteed step length `½^⌈log_½(η_β α π / (2 m H))⌉`.
pub fn restoration_line_search_floor(alpha: f64, pi: f64, m: usize, hessian_bound: f64, eta_beta: f64) -> f64 {
    let denom = 2.0 * m as f64 * hessian_bound;
    if denom <= 0.0 {
        return 1.0;
    }
    halving_floor(eta_beta * alpha * pi / denom)
}

/// Backtracks on the restoration merit `r + ‖c‖₁/π`.
pub fn restoration_line_search(
    x_k: &Vector,
    d_k: &Vector,
    lambda: &Vector,
    pi: f64,
    alpha: &Curvature,
    cons: &dyn SmoothConstraints,
    cfg: &SolverConfig,
) -> Result<f64> {
    let mut beta = 1.0;
    loop {
        let (lhs, rhs) = restoration_line_search_sides(x_k, d_k, lambda, pi, alpha, cons, cfg, beta);
        if lhs >= rhs {
            return Ok(beta);
        }
        beta *= 0.5;
        if beta < BETA_MIN {
            return Err(Error::BacktrackExhausted {
                beta,
                floor: restoration_line_search_floor(alpha.min(), pi, cons.count(), cons.hessian_bound(), cfg.eta_beta),
                detail: format!("restoration condition still fails (lhs {lhs:e}, rhs {rhs:e})"),
            });
        }
    }
}

/// Runs restoration from `state.x` until a serious step, a critical point of
/// the linearized violation, or the iteration budget.
pub fn restore(
    state: &mut SolverState,
    problem: &Problem,
    ev: &mut Evaluator<'_>,
    cfg: &SolverConfig,
) -> Result<RestorationOutcome> {
    let cons = problem.constraints.as_ref();
    let mut used = 0;
    loop {
        if state.k >= cfg.max_iters {
            return Ok(RestorationOutcome {
                kind: RestorationKind::IterationLimit,
                x_next: None,
                pi_final: state.pi.unwrap_or(1.0 / state.theta),
                iterations_used: used,
                delta_f: f64::NAN,
            });
        }
        let pi_entry = match state.pi {
            None => 1.0 / state.theta,
            Some(p) => p.min(1.0 / state.theta),
        };
        let x = state.x.clone();
        let (c, jac) = cons.eval(&x);
        let (lo, hi) = step_box(problem, &x);
        let (_, delta_f) = solve_feasibility_l1(&jac, &(-&c), &lo, &hi, cfg.qp_tol)?;
        state.qp_solves += 1;
        let model = state.model();
        if delta_f <= cfg.eps_f {
            state.pi = Some(pi_entry);
            state.trace.push(IterationRecord {
                k: state.k,
                step_kind: StepKind::Terminal,
                r_value: model.r,
                merit_value: model.r + c.abs().sum() / pi_entry,
                step_norm: 0.0,
                alpha: state.alpha.max(),
                beta: 0.0,
                theta: state.theta,
                pi: Some(pi_entry),
                kkt_residual: f64::INFINITY,
                oracle_calls: ev.calls(),
                x: x.clone(),
                x_next: None,
                alpha_dd: 0.0,
            });
            state.k += 1;
            return Ok(RestorationOutcome {
                kind: RestorationKind::CriticalPointExit,
                x_next: None,
                pi_final: pi_entry,
                iterations_used: used + 1,
                delta_f,
            });
        }

        let upd = update_pi(pi_entry, &model, &c, &jac, &lo, &hi, delta_f, cfg)?;
        state.qp_solves += upd.solves;
        let pi = upd.pi;
        state.pi = Some(pi);
        let sol = upd.solution;
        let d = sol.d.clone();

        let lam = &sol.lambda / pi;
        let zl = &sol.zeta_l / pi;
        let zu = &sol.zeta_u / pi;
        let kkt = kkt_residual(&x, &model.g, &lam, &zl, &zu, cons, &problem.bounds).unwrap_or(f64::INFINITY);
        state.last_kkt = kkt;

        let trial = advance(problem, &x, &d, 1.0);
        let trial_sample = ev.evaluate(&trial)?;
        let delta = predicted_decrease(&model, &d, 1.0);
        let rho = acceptance_ratio(model.r, trial_sample.value, delta, 1.0, 1.0);

        let mut record = IterationRecord {
            k: state.k,
            step_kind: StepKind::RestorationRejected,
            r_value: model.r,
            merit_value: model.r + c.abs().sum() / pi,
            step_norm: d.norm(),
            alpha: state.alpha.max(),
            beta: 0.0,
            theta: state.theta,
            pi: Some(pi),
            kkt_residual: kkt,
            oracle_calls: ev.calls(),
            x: x.clone(),
            x_next: None,
            alpha_dd: model.alpha.quad(&d),
        };

        if rho > 0.0 {
            let beta = restoration_line_search(&x, &d, &sol.lambda, pi, &model.alpha, cons, cfg)?;
            let (x_new, s_new) = if beta == 1.0 {
                (trial, trial_sample)
            } else {
                let xn = advance(problem, &x, &d, beta);
                let sn = ev.evaluate(&xn)?;
                (xn, sn)
            };
            let delta_b = predicted_decrease(&model, &d, beta);
            let rho_b = acceptance_ratio(model.r, s_new.value, delta_b, 1.0, 1.0);
            record.beta = beta;
            record.oracle_calls = ev.calls();
            if rho_b >= 0.0 {
                record.step_kind = StepKind::RestorationSerious;
                record.x_next = Some(x_new.clone());
                state.trace.push(record);
                state.k += 1;
                state.serious += 1;
                state.accept(x_new.clone(), s_new);
                state.after_restoration = true;
                return Ok(RestorationOutcome {
                    kind: RestorationKind::SeriousStep,
                    x_next: Some(x_new),
                    pi_final: pi,
                    iterations_used: used + 1,
                    delta_f,
                });
            }
        }
        record.oracle_calls = ev.calls();
        state.trace.push(record);
        state.k += 1;
        state.rejected += 1;
        used += 1;
        state.alpha = state
            .alpha
            .scaled(cfg.eta_alpha)
            .clamped(cfg.alpha_min, cfg.alpha_max);
        state.alpha_state.base = (state.alpha_state.base * cfg.eta_alpha).clamp(cfg.alpha_min, cfg.alpha_max);
    }
}
