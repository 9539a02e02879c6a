use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::projection::{CLUSTER_TOL, TIE_TOL};
use crate::model::{BoxBounds, Matrix, Vector};
use crate::{Error, Result};

/// A user-defined second-stage model: coupling map `h`, cost `p`, box on `y`.
pub trait InnerModel: Send + Sync {
    fn bounds(&self) -> &BoxBounds;

    /// Number of coupling rows (length of `h(y)`).
    fn out_dim(&self) -> usize;

    fn h(&self, y: &Vector) -> Vector;

    /// Jacobian of `h`, `out_dim × dim`.
    fn h_jacobian(&self, y: &Vector) -> Matrix;

    fn p(&self, y: &Vector) -> f64;

    fn p_gradient(&self, y: &Vector) -> Vector;

    /// Componentwise enclosure of `h` over the box.
    fn h_range(&self) -> (Vector, Vector);

    fn dim(&self) -> usize {
        self.bounds().dim()
    }
}

/// Diagnostics from an inner solve.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InnerStatus {
    pub solver: String,
    /// Another minimizer came within the cluster tolerance of the chosen one.
    pub ambiguous: bool,
    pub candidates: usize,
    pub iterations: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct InnerSolution {
    pub y: Vector,
    pub h: Vector,
    /// `μ‖q - h(y)‖² + p(y)`.
    pub value: f64,
    pub status: InnerStatus,
}

/// `h(y) = scale ⊙ y + shift`, `p(y) = Σ a_i y_i² + b_i y_i`, box on `y`.
#[derive(Debug, Clone, PartialEq)]
pub struct SeparableQuadratic {
    pub scale: Vector,
    pub shift: Vector,
    pub a: Vector,
    pub b: Vector,
    pub bounds: BoxBounds,
}

impl SeparableQuadratic {
    pub fn new(scale: Vector, shift: Vector, a: Vector, b: Vector, bounds: BoxBounds) -> Result<Self> {
        let n = bounds.dim();
        if [scale.len(), shift.len(), a.len(), b.len()].iter().any(|&l| l != n) {
            return Err(Error::Shape(format!("separable inner problem of dimension {n}")));
        }
        if bounds.lower.iter().chain(bounds.upper.iter()).any(|v| !v.is_finite()) {
            return Err(Error::InvalidBounds("inner bounds must be finite".into()));
        }
        for v in [&scale, &shift, &a, &b] {
            crate::model::ensure_finite(v)?;
        }
        Ok(Self {
            scale,
            shift,
            a,
            b,
            bounds,
        })
    }

    /// Exact minimizer, one coordinate at a time.
    pub fn solve(&self, q: &Vector, mu: f64) -> InnerSolution {
        let n = self.bounds.dim();
        let mut y = Vector::zeros(n);
        let mut ambiguous = false;
        let mut candidates = 0;
        for i in 0..n {
            let (lo, hi) = (self.bounds.lower[i], self.bounds.upper[i]);
            let s = self.scale[i];
            let r = q[i] - self.shift[i];
            let quad = mu * s * s + self.a[i];
            let lin = -2.0 * mu * s * r + self.b[i];
            let phi = |t: f64| mu * (r - s * t).powi(2) + self.a[i] * t * t + self.b[i] * t;
            let mut pts = vec![lo, hi];
            if quad > 0.0 {
                let t = -lin / (2.0 * quad);
                if t > lo && t < hi {
                    pts.push(t);
                }
            }
            candidates += pts.len();
            let vals: Vec<f64> = pts.iter().map(|&t| phi(t)).collect();
            let fmin = vals.iter().cloned().fold(f64::INFINITY, f64::min);
            let mut best = f64::INFINITY;
            for (k, &t) in pts.iter().enumerate() {
                if vals[k] <= fmin + TIE_TOL * (1.0 + fmin.abs()) && t < best {
                    best = t;
                }
            }
            for (k, &t) in pts.iter().enumerate() {
                if vals[k] <= fmin + CLUSTER_TOL * (1.0 + fmin.abs()) && (t - best).abs() > 1e-6 {
                    ambiguous = true;
                }
            }
            y[i] = best;
        }
        let h = self.h(&y);
        let value = mu * (q - &h).norm_squared() + self.p(&y);
        InnerSolution {
            y,
            h,
            value,
            status: InnerStatus {
                solver: "separable-closed-form".into(),
                ambiguous,
                candidates,
                iterations: 0,
            },
        }
    }
}

impl InnerModel for SeparableQuadratic {
    fn bounds(&self) -> &BoxBounds {
        &self.bounds
    }
    fn out_dim(&self) -> usize {
        self.bounds.dim()
    }
    fn h(&self, y: &Vector) -> Vector {
        self.scale.component_mul(y) + &self.shift
    }
    fn h_jacobian(&self, _y: &Vector) -> Matrix {
        Matrix::from_diagonal(&self.scale)
    }
    fn p(&self, y: &Vector) -> f64 {
        self.a.dot(&y.component_mul(y)) + self.b.dot(y)
    }
    fn p_gradient(&self, y: &Vector) -> Vector {
        2.0 * self.a.component_mul(y) + &self.b
    }
    fn h_range(&self) -> (Vector, Vector) {
        let n = self.bounds.dim();
        let lo = Vector::from_fn(n, |i, _| {
            (self.scale[i] * self.bounds.lower[i]).min(self.scale[i] * self.bounds.upper[i]) + self.shift[i]
        });
        let hi = Vector::from_fn(n, |i, _| {
            (self.scale[i] * self.bounds.lower[i]).max(self.scale[i] * self.bounds.upper[i]) + self.shift[i]
        });
        (lo, hi)
    }
}

/// Settings for the projected-gradient multistart.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MultistartConfig {
    pub starts: usize,
    pub seed: u64,
    pub max_iters: usize,
    pub tol: f64,
}

impl Default for MultistartConfig {
    fn default() -> Self {
        Self {
            starts: 32,
            seed: 0x5eed,
            max_iters: 5000,
            tol: 1e-10,
        }
    }
}

struct Run {
    y: Vector,
    value: f64,
    converged: bool,
    iterations: usize,
}

fn inner_value(model: &dyn InnerModel, q: &Vector, mu: f64, y: &Vector) -> f64 {
    mu * (q - model.h(y)).norm_squared() + model.p(y)
}

fn inner_gradient(model: &dyn InnerModel, q: &Vector, mu: f64, y: &Vector) -> Vector {
    let resid = q - model.h(y);
    model.p_gradient(y) - 2.0 * mu * model.h_jacobian(y).transpose() * resid
}

fn projected_gradient(model: &dyn InnerModel, q: &Vector, mu: f64, start: Vector, cfg: &MultistartConfig) -> Result<Run> {
    let bounds = model.bounds();
    let mut y = start;
    let mut f = inner_value(model, q, mu, &y);
    let mut step = 1.0;
    let mut g = inner_gradient(model, q, mu, &y);
    for it in 0..cfg.max_iters {
        if !f.is_finite() || g.iter().any(|v| !v.is_finite()) {
            return Err(Error::InnerSolveFailure(format!("non-finite inner value at iteration {it}")));
        }
        let pg = bounds.project(&(&y - &g)) - &y;
        if pg.amax() <= cfg.tol * (1.0 + g.amax()) {
            return Ok(Run {
                y,
                value: f,
                converged: true,
                iterations: it,
            });
        }
        loop {
            let trial = bounds.project(&(&y - step * &g));
            let d = &trial - &y;
            let ft = inner_value(model, q, mu, &trial);
            let gt = inner_gradient(model, q, mu, &trial);
            let dd = d.norm_squared();
            // value test up to rounding, plus a local curvature test from gradients
            let decrease = ft <= f + g.dot(&d) + dd / (2.0 * step) + 4.0 * f64::EPSILON * (1.0 + f.abs());
            let curvature = (&gt - &g).dot(&d) <= dd / step;
            if decrease && curvature {
                y = trial;
                f = ft;
                g = gt;
                step = (step * 2.0).min(1e8);
                break;
            }
            step *= 0.5;
            if step < 1e-20 {
                return Ok(Run {
                    y,
                    value: f,
                    converged: false,
                    iterations: it,
                });
            }
        }
    }
    Ok(Run {
        y,
        value: f,
        converged: false,
        iterations: cfg.max_iters,
    })
}

fn lex_less(a: &Vector, b: &Vector) -> bool {
    for i in 0..a.len() {
        if a[i] != b[i] {
            return a[i] < b[i];
        }
    }
    false
}

/// Projected gradient from the box midpoint and `starts - 1` seeded random points.
pub fn multistart_pg(model: &dyn InnerModel, q: &Vector, mu: f64, cfg: &MultistartConfig) -> Result<InnerSolution> {
    let bounds = model.bounds();
    if bounds.lower.iter().chain(bounds.upper.iter()).any(|v| !v.is_finite()) {
        return Err(Error::InvalidBounds("multistart needs a finite inner box".into()));
    }
    let n = bounds.dim();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut starts = vec![(&bounds.lower + &bounds.upper) * 0.5];
    for _ in 1..cfg.starts.max(1) {
        starts.push(Vector::from_fn(n, |i, _| {
            let (lo, hi) = (bounds.lower[i], bounds.upper[i]);
            if lo < hi {
                rng.gen_range(lo..=hi)
            } else {
                lo
            }
        }));
    }
    let mut runs = Vec::with_capacity(starts.len());
    for s in starts {
        runs.push(projected_gradient(model, q, mu, s, cfg)?);
    }
    let iterations = runs.iter().map(|r| r.iterations).sum();
    let done: Vec<&Run> = runs.iter().filter(|r| r.converged).collect();
    if done.is_empty() {
        return Err(Error::InnerSolveFailure(format!(
            "no projected-gradient start converged in {} iterations",
            cfg.max_iters
        )));
    }
    let fmin = done.iter().map(|r| r.value).fold(f64::INFINITY, f64::min);
    let mut best: Option<&Run> = None;
    for r in &done {
        if r.value <= fmin + TIE_TOL * (1.0 + fmin.abs()) && best.map_or(true, |b| lex_less(&r.y, &b.y)) {
            best = Some(r);
        }
    }
    let best = best.expect("nonempty");
    let ambiguous = done
        .iter()
        .any(|r| r.value <= fmin + CLUSTER_TOL * (1.0 + fmin.abs()) && (&r.y - &best.y).norm() > 1e-6);
    let h = model.h(&best.y);
    Ok(InnerSolution {
        y: best.y.clone(),
        h,
        value: best.value,
        status: InnerStatus {
            solver: "projected-gradient".into(),
            ambiguous,
            candidates: done.len(),
            iterations,
        },
    })
}
