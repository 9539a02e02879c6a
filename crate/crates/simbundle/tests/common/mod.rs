#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use simbundle::model::Curvature;
use simbundle::qp::EqBoxQP;

pub type Vector = DVector<f64>;
pub type Matrix = DMatrix<f64>;

/// Random instance with entries in [-2, 2], n <= 4, m <= 2.
pub fn random_qp(rng: &mut ChaCha8Rng, consistent: bool) -> EqBoxQP {
    let n = rng.gen_range(1..=4);
    let m = rng.gen_range(0..=2.min(n));
    let g = Vector::from_fn(n, |_, _| rng.gen_range(-2.0..2.0));
    let alpha = if rng.gen_bool(0.5) {
        Curvature::Scalar(rng.gen_range(0.1..2.0))
    } else {
        Curvature::Diagonal(Vector::from_fn(n, |_, _| rng.gen_range(0.1..2.0)))
    };
    let a = Matrix::from_fn(m, n, |_, _| rng.gen_range(-2.0..2.0));
    let lower = Vector::from_fn(n, |_, _| rng.gen_range(-2.0..0.0));
    let upper = Vector::from_fn(n, |_, _| rng.gen_range(0.0..2.0));
    let b = if consistent {
        let p = Vector::from_fn(n, |j, _| rng.gen_range(lower[j]..upper[j]));
        &a * p
    } else {
        Vector::from_fn(m, |_, _| rng.gen_range(-2.0..2.0))
    };
    EqBoxQP {
        g,
        alpha,
        a,
        b,
        lower,
        upper,
    }
}

/// Optimal objective by enumerating every free/lower/upper pattern and
/// solving the equality-constrained KKT system of each.
pub fn brute_force_eq_box(q: &EqBoxQP) -> Option<(f64, Vector)> {
    let n = q.g.len();
    let m = q.b.len();
    let alpha = q.alpha.diag(n);
    let mut best: Option<(f64, Vector)> = None;
    let total = 3usize.pow(n as u32);
    for code in 0..total {
        let mut pattern = vec![0u8; n];
        let mut c = code;
        for p in pattern.iter_mut() {
            *p = (c % 3) as u8;
            c /= 3;
        }
        let free: Vec<usize> = (0..n).filter(|&i| pattern[i] == 0).collect();
        let mut d = Vector::from_fn(n, |i, _| match pattern[i] {
            1 => q.lower[i],
            2 => q.upper[i],
            _ => 0.0,
        });
        let nf = free.len();
        if nf + m > 0 {
            let mut k = Matrix::zeros(nf + m, nf + m);
            let mut rhs = Vector::zeros(nf + m);
            let rb = &q.b - &q.a * &d;
            for (p, &i) in free.iter().enumerate() {
                k[(p, p)] = alpha[i];
                rhs[p] = -q.g[i];
                for r in 0..m {
                    k[(p, nf + r)] = -q.a[(r, i)];
                    k[(nf + r, p)] = q.a[(r, i)];
                }
            }
            for r in 0..m {
                rhs[nf + r] = rb[r];
            }
            let svd = k.clone().svd(true, true);
            let Ok(sol) = svd.solve(&rhs, 1e-12) else { continue };
            if (&k * &sol - &rhs).amax() > 1e-9 {
                continue;
            }
            for (p, &i) in free.iter().enumerate() {
                d[i] = sol[p];
            }
        }
        let feasible = (0..n).all(|i| d[i] >= q.lower[i] - 1e-9 && d[i] <= q.upper[i] + 1e-9)
            && (m == 0 || (&q.a * &d - &q.b).amax() <= 1e-9);
        if !feasible {
            continue;
        }
        let obj = q.objective(&d);
        if best.as_ref().map_or(true, |(b, _)| obj < *b) {
            best = Some((obj, d));
        }
    }
    best
}

pub mod oracles {
    use super::{Matrix, Vector};
    use rand::Rng;
    use rand_chacha::ChaCha8Rng;
    use simbundle::bundle::SolveReport;
    use simbundle::model::{BoxBounds, Problem, SolverConfig, StepKind};
    use simbundle::twostage::{smooth_recourse, Scenario};

    pub fn sample_box(rng: &mut ChaCha8Rng, b: &BoxBounds, shrink: f64) -> Vector {
        Vector::from_fn(b.dim(), |i, _| rng.gen_range(b.lower[i] + shrink..=b.upper[i] - shrink))
    }

    /// Outcome of one central-difference check.
    #[derive(Debug, Clone, Copy, PartialEq)]
    pub enum FdOutcome {
        Pass,
        Fail { ambiguous: bool, error: f64 },
    }

    /// Central differences of `r_μ` against the reported subgradient, with a
    /// relative tolerance on the max-norm.
    pub fn fd_check(s: &Scenario, mu: f64, x: &Vector, tol: f64) -> FdOutcome {
        let base = smooth_recourse(x, s, mu).unwrap();
        let mut ambiguous = base.inner_status.ambiguous;
        let mut fd = Vector::zeros(x.len());
        for i in 0..x.len() {
            let h = 1e-6 * (1.0 + x[i].abs());
            let mut xp = x.clone();
            let mut xm = x.clone();
            xp[i] += h;
            xm[i] -= h;
            let sp = smooth_recourse(&xp, s, mu).unwrap();
            let sm = smooth_recourse(&xm, s, mu).unwrap();
            ambiguous |= sp.inner_status.ambiguous || sm.inner_status.ambiguous;
            fd[i] = (sp.value - sm.value) / (2.0 * h);
        }
        let error = (&fd - &base.subgradient).amax() / (1.0 + base.subgradient.amax());
        if error <= tol {
            FdOutcome::Pass
        } else {
            FdOutcome::Fail { ambiguous, error }
        }
    }

    /// `r(x) - r(x̄) - gᵀ(x - x̄) - μw²‖x - x̄‖²`; nonpositive when the bound holds.
    pub fn upper_c2_excess(s: &Scenario, mu: f64, x: &Vector, xb: &Vector) -> f64 {
        let a = smooth_recourse(x, s, mu).unwrap();
        let b = smooth_recourse(xb, s, mu).unwrap();
        a.value - b.value - b.subgradient.dot(&(x - xb)) - s.upper_c2(mu) * (x - xb).norm_squared()
    }

    /// `|r(x₁) - r(x₂)| - L‖x₁ - x₂‖`.
    pub fn lipschitz_excess(s: &Scenario, mu: f64, x1: &Vector, x2: &Vector) -> f64 {
        let a = smooth_recourse(x1, s, mu).unwrap().value;
        let b = smooth_recourse(x2, s, mu).unwrap().value;
        (a - b).abs() - s.lipschitz(mu) * (x1 - x2).norm()
    }

    /// Grid scan of the joint example problem over `(x₂, x₃, y₂, y₃)`;
    /// `x₁ = y₁` is optimal and drops out. The first level covers the whole
    /// box, each later level a window around the previous best, down to a
    /// spacing of 1e-3.
    pub fn example_grid_minimum(first: bool, mu_first: f64) -> f64 {
        let lo = [0.0, if first { -1.0 } else { -5.0 }, -5.0, if first { 0.0 } else { -5.0 }];
        let hi = [50.0, if first { 10.0 } else { 5.0 }, 5.0, if first { 10.0 } else { 5.0 }];
        let f = |p: &[f64; 4]| mu_first * ((p[0] - 0.5).powi(2) + p[1] * p[1]) + (p[0] - p[2]).powi(2) + (p[1] - p[3]).powi(2);
        let axis = |a: f64, b: f64, h: f64| -> Vec<f64> {
            let n = ((b - a) / h).round() as usize;
            (0..=n).map(|i| a + i as f64 * h).collect()
        };
        let levels = [(0.25, f64::INFINITY), (0.05, 0.5), (0.01, 0.1), (0.002, 0.02), (0.001, 0.004)];
        let mut best = (f64::INFINITY, [0.0; 4]);
        for (h, half) in levels {
            let c = best.1;
            let ax: Vec<Vec<f64>> = (0..4)
                .map(|i| {
                    let (a, b) = if half.is_finite() {
                        ((c[i] - half).max(lo[i]), (c[i] + half).min(hi[i]))
                    } else {
                        (lo[i], hi[i])
                    };
                    // stay on the lattice anchored at the lower bound
                    let a = lo[i] + ((a - lo[i]) / h).floor() * h;
                    axis(a, b, h)
                })
                .collect();
            for &x2 in &ax[0] {
                for &x3 in &ax[1] {
                    for &y2 in &ax[2] {
                        for &y3 in &ax[3] {
                            if y2 <= y3 * y3 {
                                let p = [x2, x3, y2, y3];
                                let v = f(&p);
                                if v < best.0 {
                                    best = (v, p);
                                }
                            }
                        }
                    }
                }
            }
        }
        best.0
    }

    /// Serious steps whose merit decrease misses
    /// `(η_γ⁺ - η_β)·½·β·dᵀαd - 1e-10`, as `(k, shortfall)`.
    pub fn merit_descent_violations(problem: &Problem, cfg: &SolverConfig, report: &SolveReport) -> Vec<(usize, f64)> {
        let mut out = Vec::new();
        for rec in &report.trace {
            if rec.step_kind != StepKind::Serious {
                continue;
            }
            let xn = rec.x_next.as_ref().expect("serious rows carry the next iterate");
            let rn = problem.oracle.eval(xn).unwrap().value;
            let cn = problem.constraints.values(xn);
            let phi_next = rn + rec.theta * cn.abs().sum();
            let decrease = rec.merit_value - phi_next;
            let bound = (cfg.eta_gamma_plus - cfg.eta_beta) * 0.5 * rec.beta * rec.alpha_dd - 1e-10;
            if decrease < bound {
                out.push((rec.k, bound - decrease));
            }
        }
        out
    }

    pub fn identity(n: usize) -> Matrix {
        Matrix::identity(n, n)
    }
}
