//! Primal-dual interior-point kernel for
//!
//! ```text
//! minimize ½ zᵀ diag(h) z + cᵀz  subject to  A z = b,  l <= z <= u
//! ```
//!
//! with optimality conditions `h∘z + c - Aᵀy - zl + zu = 0`. Bounds may be
//! infinite. The interior-point iterate is finished by an active-set polish
//! that solves the reduced KKT system exactly.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

type Vector = DVector<f64>;
type Matrix = DMatrix<f64>;

const MAX_ITERS: usize = 50;
const STEP_FRACTION: f64 = 0.995;
const D_FLOOR: f64 = 1e-14;
const FIXED_WIDTH: f64 = 1e-14;
const POLISH_ROUNDS: usize = 8;

pub(crate) struct Kernel<'a> {
    pub h: &'a Vector,
    pub c: &'a Vector,
    pub a: &'a Matrix,
    pub b: &'a Vector,
    pub l: &'a Vector,
    pub u: &'a Vector,
}

#[derive(Debug, Clone)]
pub(crate) struct KernelSolution {
    pub z: Vector,
    pub y: Vector,
    pub zl: Vector,
    pub zu: Vector,
    pub iterations: usize,
    pub residual: f64,
    /// Numerical rank of the equality rows restricted to the free variables.
    pub active_rank: usize,
}

impl Kernel<'_> {
    fn n(&self) -> usize {
        self.c.len()
    }

    fn m(&self) -> usize {
        self.b.len()
    }

    /// Stationarity vector `h∘z + c - Aᵀy`.
    fn reduced_gradient(&self, z: &Vector, y: &Vector) -> Vector {
        self.h.component_mul(z) + self.c - self.a.tr_mul(y)
    }

    pub fn residual(&self, z: &Vector, y: &Vector, zl: &Vector, zu: &Vector) -> f64 {
        let rg = self.reduced_gradient(z, y);
        let mut res: f64 = (&rg - zl + zu).amax();
        if self.m() > 0 {
            res = res.max((self.a * z - self.b).amax());
        }
        for i in 0..self.n() {
            if self.l[i].is_finite() {
                res = res.max((zl[i] * (z[i] - self.l[i])).abs()).max(self.l[i] - z[i]);
            }
            if self.u[i].is_finite() {
                res = res.max((zu[i] * (self.u[i] - z[i])).abs()).max(z[i] - self.u[i]);
            }
            res = res.max(-zl[i]).max(-zu[i]);
        }
        res
    }

    pub fn solve(&self) -> Result<KernelSolution> {
        let n = self.n();
        let fixed: Vec<bool> = (0..n)
            .map(|i| self.u[i] - self.l[i] <= FIXED_WIDTH)
            .collect();
        if fixed.iter().any(|&f| f) {
            return self.solve_with_fixed(&fixed);
        }
        if self.m() == 0 {
            return self.solve_separable();
        }
        let ipm = self.interior_point()?;
        let mut best = ipm;
        if let Some(p) = self.polish(&best) {
            if p.residual <= best.residual {
                best = p;
            }
        }
        best.active_rank = self.active_rank(&best);
        Ok(best)
    }

    /// Eliminates variables whose bounds coincide and solves the rest.
    fn solve_with_fixed(&self, fixed: &[bool]) -> Result<KernelSolution> {
        let n = self.n();
        let free: Vec<usize> = (0..n).filter(|&i| !fixed[i]).collect();
        let zfix = Vector::from_fn(n, |i, _| if fixed[i] { self.l[i] } else { 0.0 });
        let h = Vector::from_fn(free.len(), |k, _| self.h[free[k]]);
        let c = Vector::from_fn(free.len(), |k, _| self.c[free[k]]);
        let l = Vector::from_fn(free.len(), |k, _| self.l[free[k]]);
        let u = Vector::from_fn(free.len(), |k, _| self.u[free[k]]);
        let a = Matrix::from_fn(self.m(), free.len(), |r, k| self.a[(r, free[k])]);
        let b = self.b - self.a * &zfix;
        let sub = Kernel {
            h: &h,
            c: &c,
            a: &a,
            b: &b,
            l: &l,
            u: &u,
        };
        let s = if free.is_empty() {
            let y = if self.m() > 0 {
                Vector::zeros(self.m())
            } else {
                Vector::zeros(0)
            };
            KernelSolution {
                z: Vector::zeros(0),
                y,
                zl: Vector::zeros(0),
                zu: Vector::zeros(0),
                iterations: 0,
                residual: 0.0,
                active_rank: 0,
            }
        } else {
            sub.solve()?
        };
        let mut z = zfix;
        let mut zl = Vector::zeros(n);
        let mut zu = Vector::zeros(n);
        for (k, &i) in free.iter().enumerate() {
            z[i] = s.z[k];
            zl[i] = s.zl[k];
            zu[i] = s.zu[k];
        }
        let rg = self.reduced_gradient(&z, &s.y);
        for i in 0..n {
            if fixed[i] {
                zl[i] = rg[i].max(0.0);
                zu[i] = (-rg[i]).max(0.0);
            }
        }
        let residual = self.residual(&z, &s.y, &zl, &zu);
        Ok(KernelSolution {
            z,
            y: s.y,
            zl,
            zu,
            iterations: s.iterations,
            residual,
            active_rank: s.active_rank,
        })
    }

    /// Closed form when there are no equality rows.
    fn solve_separable(&self) -> Result<KernelSolution> {
        let n = self.n();
        let mut z = Vector::zeros(n);
        let mut zl = Vector::zeros(n);
        let mut zu = Vector::zeros(n);
        for i in 0..n {
            let zi = if self.h[i] > 0.0 {
                (-self.c[i] / self.h[i]).clamp(self.l[i], self.u[i])
            } else if self.c[i] > 0.0 {
                self.l[i]
            } else if self.c[i] < 0.0 {
                self.u[i]
            } else if self.l[i] <= 0.0 && self.u[i] >= 0.0 {
                0.0
            } else if self.l[i] > 0.0 {
                self.l[i]
            } else {
                self.u[i]
            };
            if !zi.is_finite() {
                return Err(Error::SolverBreakdown(format!(
                    "unbounded separable term at index {i}"
                )));
            }
            z[i] = zi;
            let gi = self.h[i] * zi + self.c[i];
            if gi > 0.0 {
                zl[i] = gi;
            } else {
                zu[i] = -gi;
            }
        }
        let y = Vector::zeros(0);
        let residual = self.residual(&z, &y, &zl, &zu);
        Ok(KernelSolution {
            z,
            y,
            zl,
            zu,
            iterations: 0,
            residual,
            active_rank: 0,
        })
    }

    fn initial_point(&self) -> (Vector, Vector, Vector, Vector) {
        let n = self.n();
        let z = Vector::from_fn(n, |i, _| {
            let (l, u) = (self.l[i], self.u[i]);
            match (l.is_finite(), u.is_finite()) {
                (true, true) => 0.5 * (l + u),
                (true, false) => l + 1.0,
                (false, true) => u - 1.0,
                (false, false) => 0.0,
            }
        });
        let y = Vector::zeros(self.m());
        let r = self.reduced_gradient(&z, &y);
        let shift = 1e-2 * r.amax().max(1.0);
        let zl = Vector::from_fn(n, |i, _| {
            if self.l[i].is_finite() {
                r[i].max(0.0) + shift
            } else {
                0.0
            }
        });
        let zu = Vector::from_fn(n, |i, _| {
            if self.u[i].is_finite() {
                (-r[i]).max(0.0) + shift
            } else {
                0.0
            }
        });
        (z, y, zl, zu)
    }

    fn interior_point(&self) -> Result<KernelSolution> {
        let n = self.n();
        let m = self.m();
        let has_l: Vec<bool> = (0..n).map(|i| self.l[i].is_finite()).collect();
        let has_u: Vec<bool> = (0..n).map(|i| self.u[i].is_finite()).collect();
        let nb = has_l.iter().filter(|&&f| f).count() + has_u.iter().filter(|&&f| f).count();
        let scale_c = 1.0 + self.c.amax() + self.h.amax();
        let scale_b = 1.0 + self.b.amax();
        let tol = 1e-12;

        let (mut z, mut y, mut zl, mut zu) = self.initial_point();
        let mut iterations = 0;

        for it in 0..MAX_ITERS {
            iterations = it;
            let sl = Vector::from_fn(n, |i, _| if has_l[i] { z[i] - self.l[i] } else { 1.0 });
            let su = Vector::from_fn(n, |i, _| if has_u[i] { self.u[i] - z[i] } else { 1.0 });
            let rd = self.reduced_gradient(&z, &y) - &zl + &zu;
            let rp = self.a * &z - self.b;
            let mu = if nb > 0 {
                (sl.dot(&zl) + su.dot(&zu)) / nb as f64
            } else {
                0.0
            };
            if rd.amax() <= tol * scale_c && rp.amax() <= tol * scale_b && mu <= tol * scale_c {
                break;
            }

            let dvec = Vector::from_fn(n, |i, _| {
                let mut d = self.h[i];
                if has_l[i] {
                    d += zl[i] / sl[i];
                }
                if has_u[i] {
                    d += zu[i] / su[i];
                }
                d.max(D_FLOOR)
            });
            let dinv = dvec.map(|v| 1.0 / v);
            let schur = self.schur(&dinv)?;

            let solve_dir = |rcl: &Vector, rcu: &Vector| -> (Vector, Vector, Vector, Vector) {
                let rhs1 = Vector::from_fn(n, |i, _| {
                    let mut v = -rd[i];
                    if has_l[i] {
                        v += rcl[i] / sl[i];
                    }
                    if has_u[i] {
                        v -= rcu[i] / su[i];
                    }
                    v
                });
                let dy = if m > 0 {
                    let rhs = -&rp - self.a * dinv.component_mul(&rhs1);
                    schur.solve(&rhs)
                } else {
                    Vector::zeros(0)
                };
                let dz = dinv.component_mul(&(&rhs1 + self.a.tr_mul(&dy)));
                let dzl = Vector::from_fn(n, |i, _| {
                    if has_l[i] {
                        (rcl[i] - zl[i] * dz[i]) / sl[i]
                    } else {
                        0.0
                    }
                });
                let dzu = Vector::from_fn(n, |i, _| {
                    if has_u[i] {
                        (rcu[i] + zu[i] * dz[i]) / su[i]
                    } else {
                        0.0
                    }
                });
                (dz, dy, dzl, dzu)
            };

            let max_step = |dz: &Vector, dzl: &Vector, dzu: &Vector| -> f64 {
                let mut a: f64 = 1.0;
                for i in 0..n {
                    if has_l[i] {
                        if dz[i] < 0.0 {
                            a = a.min(-sl[i] / dz[i]);
                        }
                        if dzl[i] < 0.0 {
                            a = a.min(-zl[i] / dzl[i]);
                        }
                    }
                    if has_u[i] {
                        if dz[i] > 0.0 {
                            a = a.min(su[i] / dz[i]);
                        }
                        if dzu[i] < 0.0 {
                            a = a.min(-zu[i] / dzu[i]);
                        }
                    }
                }
                a
            };

            // predictor
            let rcl = Vector::from_fn(n, |i, _| if has_l[i] { -sl[i] * zl[i] } else { 0.0 });
            let rcu = Vector::from_fn(n, |i, _| if has_u[i] { -su[i] * zu[i] } else { 0.0 });
            let (dz_a, _, dzl_a, dzu_a) = solve_dir(&rcl, &rcu);
            let a_aff = max_step(&dz_a, &dzl_a, &dzu_a);
            let sigma = if nb > 0 && mu > 0.0 {
                let mut gap = 0.0;
                for i in 0..n {
                    if has_l[i] {
                        gap += (sl[i] + a_aff * dz_a[i]) * (zl[i] + a_aff * dzl_a[i]);
                    }
                    if has_u[i] {
                        gap += (su[i] - a_aff * dz_a[i]) * (zu[i] + a_aff * dzu_a[i]);
                    }
                }
                let mu_aff = gap / nb as f64;
                (mu_aff / mu).clamp(0.0, 1.0).powi(3)
            } else {
                0.0
            };

            // corrector
            let rcl = Vector::from_fn(n, |i, _| {
                if has_l[i] {
                    sigma * mu - sl[i] * zl[i] - dz_a[i] * dzl_a[i]
                } else {
                    0.0
                }
            });
            let rcu = Vector::from_fn(n, |i, _| {
                if has_u[i] {
                    sigma * mu - su[i] * zu[i] + dz_a[i] * dzu_a[i]
                } else {
                    0.0
                }
            });
            let (dz, dy, dzl, dzu) = solve_dir(&rcl, &rcu);
            let step = (STEP_FRACTION * max_step(&dz, &dzl, &dzu)).min(1.0);
            if !(step.is_finite()) || dz.iter().any(|v| !v.is_finite()) {
                return Err(Error::SolverBreakdown("non-finite search direction".into()));
            }
            z += step * dz;
            y += step * dy;
            zl += step * dzl;
            zu += step * dzu;
            iterations = it + 1;
        }
        let residual = self.residual(&z, &y, &zl, &zu);
        Ok(KernelSolution {
            z,
            y,
            zl,
            zu,
            iterations,
            residual,
            active_rank: 0,
        })
    }

    fn schur(&self, dinv: &Vector) -> Result<Schur> {
        let m = self.m();
        if m == 0 {
            return Ok(Schur::Empty);
        }
        let ad = Matrix::from_fn(m, self.n(), |r, i| self.a[(r, i)] * dinv[i]);
        let s = &ad * self.a.transpose();
        let diag_max = s.diagonal().amax().max(1e-300);
        for reg in [0.0, 1e-14, 1e-11, 1e-8] {
            let mut sr = s.clone();
            for r in 0..m {
                sr[(r, r)] += reg * diag_max;
            }
            if let Some(ch) = sr.clone().cholesky() {
                return Ok(Schur::Chol(ch));
            }
        }
        let lu = s.lu();
        if lu.is_invertible() {
            return Ok(Schur::Lu(lu));
        }
        Err(Error::SolverBreakdown(
            "normal equations singular after regularization".into(),
        ))
    }

    /// Fixes the active set suggested by `s` and solves the reduced KKT system.
    fn polish(&self, s: &KernelSolution) -> Option<KernelSolution> {
        let n = self.n();
        // 0 free, 1 at lower, 2 at upper
        let mut state: Vec<u8> = (0..n)
            .map(|i| {
                let dl = if self.l[i].is_finite() {
                    s.z[i] - self.l[i]
                } else {
                    f64::INFINITY
                };
                let du = if self.u[i].is_finite() {
                    self.u[i] - s.z[i]
                } else {
                    f64::INFINITY
                };
                if dl < s.zl[i] && dl <= du {
                    1
                } else if du < s.zu[i] {
                    2
                } else {
                    0
                }
            })
            .collect();
        let scale = 1.0 + self.c.amax() + self.b.amax() + self.h.amax();
        let vtol = 1e-10 * scale;
        let mut best: Option<KernelSolution> = None;
        for _ in 0..POLISH_ROUNDS {
            let (z, y) = self.reduced_solve(&state)?;
            let rg = self.reduced_gradient(&z, &y);
            let mut zl = Vector::zeros(n);
            let mut zu = Vector::zeros(n);
            let mut changed = false;
            let mut worst = (0.0, usize::MAX, 0u8);
            for i in 0..n {
                match state[i] {
                    1 => {
                        zl[i] = rg[i];
                        if rg[i] < -worst.0 {
                            worst = (-rg[i], i, 0);
                        }
                    }
                    2 => {
                        zu[i] = -rg[i];
                        if -rg[i] < -worst.0 {
                            worst = (rg[i], i, 0);
                        }
                    }
                    _ => {
                        if z[i] < self.l[i] && self.l[i] - z[i] > worst.0 {
                            worst = (self.l[i] - z[i], i, 1);
                        }
                        if z[i] > self.u[i] && z[i] - self.u[i] > worst.0 {
                            worst = (z[i] - self.u[i], i, 2);
                        }
                    }
                }
            }
            if worst.0 > vtol && worst.1 != usize::MAX {
                state[worst.1] = worst.2;
                changed = true;
            }
            let zc = Vector::from_fn(n, |i, _| z[i].clamp(self.l[i], self.u[i]));
            let zl = zl.map(|v| v.max(0.0));
            let zu = zu.map(|v| v.max(0.0));
            let residual = self.residual(&zc, &y, &zl, &zu);
            let cand = KernelSolution {
                z: zc,
                y,
                zl,
                zu,
                iterations: s.iterations,
                residual,
                active_rank: 0,
            };
            if best.as_ref().map_or(true, |b| cand.residual < b.residual) {
                best = Some(cand);
            }
            if !changed {
                break;
            }
        }
        best
    }

    /// Solves the equality-constrained problem with variables in `state`
    /// pinned to their bounds.
    fn reduced_solve(&self, state: &[u8]) -> Option<(Vector, Vector)> {
        let n = self.n();
        let m = self.m();
        let free: Vec<usize> = (0..n).filter(|&i| state[i] == 0).collect();
        let mut z = Vector::from_fn(n, |i, _| match state[i] {
            1 => self.l[i],
            2 => self.u[i],
            _ => 0.0,
        });
        let nf = free.len();
        let dim = nf + m;
        if dim == 0 {
            return Some((z, Vector::zeros(0)));
        }
        let rhs_b = self.b - self.a * &z;
        let mut k = Matrix::zeros(dim, dim);
        let mut rhs = Vector::zeros(dim);
        for (p, &i) in free.iter().enumerate() {
            k[(p, p)] = self.h[i];
            rhs[p] = -self.c[i];
            for r in 0..m {
                k[(p, nf + r)] = -self.a[(r, i)];
                k[(nf + r, p)] = self.a[(r, i)];
            }
        }
        for r in 0..m {
            rhs[nf + r] = rhs_b[r];
        }
        let sol = match k.clone().lu().solve(&rhs) {
            Some(s) if s.iter().all(|v| v.is_finite()) && (&k * &s - &rhs).amax() < 1e-9 * (1.0 + rhs.amax()) => s,
            _ => {
                let svd = k.svd(true, true);
                let eps = 1e-12 * svd.singular_values.max().max(1e-300);
                svd.solve(&rhs, eps).ok()?
            }
        };
        if sol.iter().any(|v| !v.is_finite()) {
            return None;
        }
        for (p, &i) in free.iter().enumerate() {
            z[i] = sol[p];
        }
        let y = Vector::from_fn(m, |r, _| sol[nf + r]);
        Some((z, y))
    }

    fn active_rank(&self, s: &KernelSolution) -> usize {
        let m = self.m();
        if m == 0 {
            return 0;
        }
        let free: Vec<usize> = (0..self.n())
            .filter(|&i| s.z[i] > self.l[i] && s.z[i] < self.u[i])
            .collect();
        if free.is_empty() {
            return 0;
        }
        let af = Matrix::from_fn(m, free.len(), |r, k| self.a[(r, free[k])]);
        let sv = af.singular_values();
        let top = sv.max();
        sv.iter().filter(|&&v| v > 1e-10 * top.max(1e-300)).count()
    }
}

enum Schur {
    Empty,
    Chol(nalgebra::Cholesky<f64, nalgebra::Dyn>),
    Lu(nalgebra::LU<f64, nalgebra::Dyn, nalgebra::Dyn>),
}

impl Schur {
    fn solve(&self, rhs: &Vector) -> Vector {
        match self {
            Schur::Empty => Vector::zeros(0),
            Schur::Chol(c) => c.solve(rhs),
            Schur::Lu(l) => l.solve(rhs).unwrap_or_else(|| Vector::zeros(rhs.len())),
        }
    }
}
