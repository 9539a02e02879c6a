//! Brute-force references from the joint first/second-stage problem.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::model::{BoxBounds, Vector};
use crate::twostage::{project_onto_example_set, ParabolaSet};
use crate::{Error, Result};

/// A smooth objective over a set with a cheap projection.
pub trait ExtensiveForm: Send + Sync {
    fn dim(&self) -> usize;

    /// Leading coordinates that belong to the first stage.
    fn first_stage_dim(&self) -> usize;

    fn value(&self, z: &Vector) -> f64;

    fn gradient(&self, z: &Vector) -> Vector;

    fn project(&self, z: &Vector) -> Vector;

    /// Box from which starting points are drawn.
    fn sampling_box(&self) -> (Vector, Vector);
}

/// `μ₁[(x₂ - ½)² + x₃²] + μ‖x - y‖²` with `y` in a parabola set.
#[derive(Debug, Clone)]
pub struct ExampleExtensive {
    pub mu_first: f64,
    pub mu_recourse: f64,
    pub x_bounds: BoxBounds,
    pub set: ParabolaSet,
}

impl ExtensiveForm for ExampleExtensive {
    fn dim(&self) -> usize {
        6
    }
    fn first_stage_dim(&self) -> usize {
        3
    }
    fn value(&self, z: &Vector) -> f64 {
        let (x, y) = (z.rows(0, 3), z.rows(3, 3));
        self.mu_first * ((x[1] - 0.5).powi(2) + x[2] * x[2]) + self.mu_recourse * (x - y).norm_squared()
    }
    fn gradient(&self, z: &Vector) -> Vector {
        let (x, y) = (z.rows(0, 3), z.rows(3, 3));
        let d = 2.0 * self.mu_recourse * (x - y);
        let mut g = Vector::zeros(6);
        g.rows_mut(0, 3).copy_from(&d);
        g.rows_mut(3, 3).copy_from(&(-&d));
        g[1] += 2.0 * self.mu_first * (x[1] - 0.5);
        g[2] += 2.0 * self.mu_first * x[2];
        g
    }
    fn project(&self, z: &Vector) -> Vector {
        let x = self.x_bounds.project(&z.rows(0, 3).into_owned());
        let y = project_onto_example_set(&z.rows(3, 3).into_owned(), &self.set).y;
        let mut out = Vector::zeros(6);
        out.rows_mut(0, 3).copy_from(&x);
        out.rows_mut(3, 3).copy_from(&y);
        out
    }
    fn sampling_box(&self) -> (Vector, Vector) {
        let mut lo = Vector::zeros(6);
        let mut hi = Vector::zeros(6);
        lo.rows_mut(0, 3).copy_from(&self.x_bounds.lower);
        hi.rows_mut(0, 3).copy_from(&self.x_bounds.upper);
        for i in 0..3 {
            lo[3 + i] = self.set.lower[i];
            hi[3 + i] = self.set.upper[i];
        }
        (lo, hi)
    }
}

/// `Σ w_i (x_i - t_i)²` over a box; single stage.
#[derive(Debug, Clone)]
pub struct QuadraticExtensive {
    pub weights: Vector,
    pub target: Vector,
    pub bounds: BoxBounds,
}

impl ExtensiveForm for QuadraticExtensive {
    fn dim(&self) -> usize {
        self.bounds.dim()
    }
    fn first_stage_dim(&self) -> usize {
        self.bounds.dim()
    }
    fn value(&self, z: &Vector) -> f64 {
        let d = z - &self.target;
        self.weights.dot(&d.component_mul(&d))
    }
    fn gradient(&self, z: &Vector) -> Vector {
        2.0 * self.weights.component_mul(&(z - &self.target))
    }
    fn project(&self, z: &Vector) -> Vector {
        self.bounds.project(z)
    }
    fn sampling_box(&self) -> (Vector, Vector) {
        (self.bounds.lower.clone(), self.bounds.upper.clone())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReferenceConfig {
    pub starts: usize,
    pub seed: u64,
    pub max_steps: usize,
    pub tol: f64,
}

impl Default for ReferenceConfig {
    fn default() -> Self {
        Self {
            starts: 256,
            seed: 0x0123_4567,
            max_steps: 100_000,
            tol: 1e-10,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReferenceSolution {
    pub objective: f64,
    /// Joint minimizer.
    pub z: Vec<f64>,
    /// First-stage part of `z`.
    pub x: Vec<f64>,
    pub converged_starts: usize,
    pub starts: usize,
}

struct Descent {
    z: Vector,
    f: f64,
    converged: bool,
}

/// Nonmonotone spectral projected gradient: Barzilai-Borwein trial steps,
/// backtracking against the largest of the last ten values. A start whose
/// best value gains less than a relative 1e-12 over a window is abandoned.
fn descend(form: &dyn ExtensiveForm, start: Vector, cfg: &ReferenceConfig) -> Descent {
    const MEMORY: usize = 10;
    const WINDOW: usize = 1000;
    let mut z = form.project(&start);
    let mut f = form.value(&z);
    let mut g = form.gradient(&z);
    let mut step = 1.0 / (1.0 + g.amax());
    let mut history = std::collections::VecDeque::from([f]);
    let mut best = (z.clone(), f);
    let mut mark = f;
    for it in 0..cfg.max_steps {
        if it > 0 && it % WINDOW == 0 {
            if mark - best.1 < 1e-12 * (1.0 + best.1.abs()) {
                break;
            }
            mark = best.1;
        }
        // short-step stationarity measure
        let tau = 1.0 / (1.0 + g.amax());
        let pg = (form.project(&(&z - tau * &g)) - &z) / tau;
        if pg.amax() <= cfg.tol * (1.0 + g.amax()) {
            return Descent { z, f, converged: true };
        }
        let reference = history.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let d = form.project(&(&z - step * &g)) - &z;
        let slope = g.dot(&d);
        let mut t = 1.0;
        let (zn, fn_) = loop {
            // the segment may leave a nonconvex set
            let trial = form.project(&(&z + t * &d));
            let ft = form.value(&trial);
            if ft <= reference + 1e-4 * t * slope {
                break (trial, ft);
            }
            t *= 0.5;
            if t < 1e-20 {
                return Descent {
                    z: best.0,
                    f: best.1,
                    converged: false,
                };
            }
        };
        let gn = form.gradient(&zn);
        let s = &zn - &z;
        let y = &gn - &g;
        let sy = s.dot(&y);
        step = if sy > 0.0 { (s.norm_squared() / sy).clamp(1e-12, 1e12) } else { 1e12f64.min(step * 2.0) };
        if s.amax() == 0.0 {
            return Descent {
                z: best.0,
                f: best.1,
                converged: false,
            };
        }
        z = zn;
        f = fn_;
        g = gn;
        if f < best.1 {
            best = (z.clone(), f);
        }
        history.push_back(f);
        if history.len() > MEMORY {
            history.pop_front();
        }
    }
    Descent {
        z: best.0,
        f: best.1,
        converged: false,
    }
}

/// Coordinate pattern search with shrinking steps.
fn polish(form: &dyn ExtensiveForm, mut z: Vector) -> (Vector, f64) {
    let mut f = form.value(&z);
    let mut h = 1e-2;
    while h >= 1e-13 {
        for _ in 0..50 {
            let mut improved = false;
            for i in 0..z.len() {
                for sign in [1.0, -1.0] {
                    let mut trial = z.clone();
                    trial[i] += sign * h;
                    let trial = form.project(&trial);
                    let ft = form.value(&trial);
                    if ft < f {
                        z = trial;
                        f = ft;
                        improved = true;
                    }
                }
            }
            if !improved {
                break;
            }
        }
        h *= 0.1;
    }
    (z, f)
}

fn lex_less(a: &Vector, b: &Vector) -> bool {
    for i in 0..a.len() {
        if a[i] != b[i] {
            return a[i] < b[i];
        }
    }
    false
}

/// Multistart projected gradient plus a coordinate polish of the best point.
pub fn solve_reference(form: &dyn ExtensiveForm, cfg: &ReferenceConfig) -> Result<ReferenceSolution> {
    if cfg.starts == 0 {
        return Err(Error::InvalidConfig("reference needs at least one start".into()));
    }
    let (lo, hi) = form.sampling_box();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let starts: Vec<Vector> = (0..cfg.starts)
        .map(|_| {
            Vector::from_fn(form.dim(), |i, _| {
                if lo[i] < hi[i] {
                    rng.gen_range(lo[i]..=hi[i])
                } else {
                    lo[i]
                }
            })
        })
        .collect();
    let runs: Vec<Descent> = starts.into_par_iter().map(|s| descend(form, s, cfg)).collect();
    let converged_starts = runs.iter().filter(|r| r.converged).count();
    let mut best: Option<&Descent> = None;
    for r in &runs {
        if !r.f.is_finite() {
            continue;
        }
        let better = match best {
            None => true,
            Some(b) => r.f < b.f || (r.f == b.f && lex_less(&r.z, &b.z)),
        };
        if better {
            best = Some(r);
        }
    }
    let best = best.ok_or_else(|| Error::SolverBreakdown("every reference start diverged".into()))?;
    let (z, objective) = polish(form, best.z.clone());
    let p = form.first_stage_dim();
    Ok(ReferenceSolution {
        objective,
        x: z.rows(0, p).iter().cloned().collect(),
        z: z.iter().cloned().collect(),
        converged_starts,
        starts: cfg.starts,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quadratic_reference_is_projection() {
        let form = QuadraticExtensive {
            weights: Vector::from_element(2, 1.0),
            target: Vector::from_column_slice(&[0.3, -0.7]),
            bounds: BoxBounds::from_slices(&[-1.0, 0.0], &[1.0, 1.0]).unwrap(),
        };
        let r = solve_reference(
            &form,
            &ReferenceConfig {
                starts: 8,
                ..Default::default()
            },
        )
        .unwrap();
        assert!((r.x[0] - 0.3).abs() < 1e-12 && r.x[1].abs() < 1e-12);
        assert!((r.objective - 0.49).abs() < 1e-12);
    }
}
