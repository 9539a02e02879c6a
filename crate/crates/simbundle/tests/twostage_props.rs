mod common;

use std::sync::Arc;

use common::oracles::{fd_check, lipschitz_excess, sample_box, upper_c2_excess, FdOutcome};
use common::{Matrix, Vector};
use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use simbundle::model::BoxBounds;
use simbundle::registry::{example_scenario, toy_parts, TOY_MU, TOY_SEED};
use simbundle::twostage::{
    aggregate_recourse, exact_demo, project_onto_example_set, smooth_recourse, smoothing_demo, Demo, InnerModel,
    InnerProblem, InnerSolver, MultistartConfig, ParabolaSet, Scenario, SeparableQuadratic, TieRule,
};

fn v(x: &[f64]) -> Vector {
    Vector::from_column_slice(x)
}

/// Every scenario family with an exact inner solver, with its μ.
fn exact_scenarios() -> Vec<(String, Scenario, f64)> {
    let mut out = vec![
        ("example1".to_string(), example_scenario(true, TieRule::LargestY3), 1.0),
        ("example2".to_string(), example_scenario(false, TieRule::LargestY3), 1.0),
        ("example2-mu".to_string(), example_scenario(false, TieRule::SmallestY3), 3.5),
    ];
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let w = Matrix::from_fn(3, 3, |_, _| rng.gen_range(-1.0..1.0));
    let xb = BoxBounds::uniform(3, -2.0, 2.0).unwrap();
    out.push((
        "parabola-mixed".to_string(),
        Scenario::new(w, InnerProblem::Parabola(ParabolaSet::example2()), xb).unwrap(),
        0.7,
    ));
    let (_, toys, _) = toy_parts(TOY_SEED, 4).unwrap();
    for (i, s) in toys.into_iter().enumerate() {
        out.push((format!("toy-{i}"), s, TOY_MU));
    }
    out
}

#[test]
fn upper_c2_inequality_on_sampled_pairs() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for (name, s, mu) in exact_scenarios() {
        for _ in 0..500 {
            let x = sample_box(&mut rng, &s.x_bounds, 0.0);
            // half the pairs are close, where the quadratic term is small
            let xb = if rng.gen_bool(0.5) {
                sample_box(&mut rng, &s.x_bounds, 0.0)
            } else {
                s.x_bounds.project(&(&x + Vector::from_fn(x.len(), |_, _| rng.gen_range(-0.01..0.01))))
            };
            let e = upper_c2_excess(&s, mu, &x, &xb);
            assert!(e <= 1e-8, "{name}: excess {e} at x={x:?}, x̄={xb:?}");
        }
    }
}

#[test]
fn lipschitz_bound_on_sampled_pairs() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for (name, s, mu) in exact_scenarios() {
        for _ in 0..500 {
            let a = sample_box(&mut rng, &s.x_bounds, 0.0);
            let b = sample_box(&mut rng, &s.x_bounds, 0.0);
            let e = lipschitz_excess(&s, mu, &a, &b);
            assert!(e <= 1e-8, "{name}: excess {e}");
        }
    }
}

#[test]
fn subgradient_matches_central_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for (name, s, mu) in exact_scenarios() {
        let mut fails = 0;
        for _ in 0..100 {
            let x = sample_box(&mut rng, &s.x_bounds, 1e-4);
            match fd_check(&s, mu, &x, 1e-4) {
                FdOutcome::Pass => {}
                FdOutcome::Fail { ambiguous, error } => {
                    assert!(ambiguous, "{name}: FD error {error} at unique minimizer {x:?}");
                    fails += 1;
                }
            }
        }
        assert!(fails <= 5, "{name}: {fails} failures");
    }
}

#[test]
fn subgradient_identity_recomputed() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for (_, s, mu) in exact_scenarios() {
        for _ in 0..50 {
            let x = sample_box(&mut rng, &s.x_bounds, 0.0);
            let r = smooth_recourse(&x, &s, mu).unwrap();
            let g = 2.0 * mu * s.w.transpose() * (&s.w * &x - &r.h_star);
            assert_eq!(g, r.subgradient);
            let value = mu * (&s.w * &x - &r.h_star).norm_squared() + s.p(&r.y_star);
            assert!((value - r.value).abs() <= 1e-12 * (1.0 + value.abs()));
        }
    }
}

/// Samples of the parabola set: box points filtered by the constraint.
fn feasible_samples(set: &ParabolaSet, rng: &mut ChaCha8Rng, n: usize) -> Vec<Vector> {
    let mut out = Vec::with_capacity(n);
    while out.len() < n {
        let y = Vector::from_fn(3, |i, _| rng.gen_range(set.lower[i]..=set.upper[i]));
        if set.contains(&y, 0.0) {
            out.push(y);
        } else {
            // also sample the boundary, where projections land
            let mut b = y.clone();
            b[1] = b[2] * b[2];
            if set.contains(&b, 0.0) {
                out.push(b);
            }
        }
    }
    out
}

#[test]
fn projection_beats_random_feasible_points() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for set in [ParabolaSet::example1(), ParabolaSet::example2()] {
        let pts = feasible_samples(&set, &mut rng, 10_000);
        for _ in 0..40 {
            let q = Vector::from_fn(3, |_, _| rng.gen_range(-7.0..7.0));
            let p = project_onto_example_set(&q, &set);
            assert!(set.contains(&p.y, 1e-12), "{:?} not in set", p.y);
            for y in &pts {
                assert!(p.distance_sq <= (&q - y).norm_squared() + 1e-12);
            }
        }
    }
}

#[test]
fn projection_on_a_fine_boundary_scan() {
    // independent 1-D scan over y₃ on the parabola (x₂ bounded) and over the box faces
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let set = ParabolaSet::example2();
    for _ in 0..200 {
        let q = Vector::from_fn(3, |_, _| rng.gen_range(-6.0..6.0));
        let p = project_onto_example_set(&q, &set);
        let y1 = q[0].clamp(-5.0, 5.0);
        let mut best = f64::INFINITY;
        let n = 200_000;
        let kink = q[1].clamp(0.0, 5.0).sqrt();
        let ts = (0..=n).map(|i| -5.0 + 10.0 * i as f64 / n as f64).chain([kink, -kink]);
        for t in ts {
            let y2 = (t * t).min(5.0).min(q[1].clamp(-5.0, 5.0)).max(-5.0);
            let y = v(&[y1, y2, t]);
            best = best.min((&q - &y).norm_squared());
        }
        assert!(p.distance_sq <= best + 1e-12);
        assert!(p.distance_sq >= best - 1e-6 * (1.0 + best), "{} vs {best}", p.distance_sq);
    }
}

#[test]
fn aggregation_identities() {
    let s = example_scenario(false, TieRule::LargestY3);
    let x = v(&[0.3, 2.0, 0.1]);
    let single = smooth_recourse(&x, &s, 1.0).unwrap();
    let (v1, g1) = aggregate_recourse(&x, std::slice::from_ref(&s), 1.0).unwrap();
    assert_eq!(v1, single.value);
    assert_eq!(g1, single.subgradient);
    let (v2, g2) = aggregate_recourse(&x, &[s.clone(), s.clone()], 1.0).unwrap();
    assert!((v2 - v1).abs() <= 1e-12);
    assert!((&g2 - &g1).amax() <= 1e-12);
    let many = vec![s; 7];
    let (v7, g7) = aggregate_recourse(&x, &many, 1.0).unwrap();
    assert!((v7 - v1).abs() <= 1e-12);
    assert!((&g7 - &g1).amax() <= 1e-12);
}

#[test]
fn toy_aggregate_matches_shuffled_recomputation() {
    let (_, scenarios, xb) = toy_parts(TOY_SEED, 4).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for _ in 0..20 {
        let x = sample_box(&mut rng, &xb, 0.0);
        let (value, g) = aggregate_recourse(&x, &scenarios, TOY_MU).unwrap();
        let mut order: Vec<usize> = (0..scenarios.len()).collect();
        order.shuffle(&mut rng);
        let mut sv = 0.0;
        let mut sg = Vector::zeros(6);
        for &i in &order {
            let r = smooth_recourse(&x, &scenarios[i], TOY_MU).unwrap();
            sv += r.value;
            sg += r.subgradient;
        }
        assert!((value - sv / 4.0).abs() <= 1e-12 * (1.0 + value.abs()));
        assert!((&g - sg / 4.0).amax() <= 1e-12 * (1.0 + g.amax()));
    }
}

#[test]
fn aggregation_is_bitwise_repeatable() {
    let (_, scenarios, _) = toy_parts(TOY_SEED, 4).unwrap();
    let x = Vector::from_element(6, 0.25);
    let first = aggregate_recourse(&x, &scenarios, TOY_MU).unwrap();
    for _ in 0..20 {
        assert_eq!(aggregate_recourse(&x, &scenarios, TOY_MU).unwrap(), first);
    }
}

#[test]
fn multistart_agrees_with_closed_form_on_toy() {
    let (_, scenarios, xb) = toy_parts(TOY_SEED, 2).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    for s in scenarios {
        let pg = s.clone().with_solver(InnerSolver::Multistart(MultistartConfig::default())).unwrap();
        for _ in 0..5 {
            let x = sample_box(&mut rng, &xb, 0.0);
            let a = smooth_recourse(&x, &s, TOY_MU).unwrap();
            let b = smooth_recourse(&x, &pg, TOY_MU).unwrap();
            assert!((a.value - b.value).abs() <= 1e-8 * (1.0 + a.value.abs()));
            assert!((&a.subgradient - &b.subgradient).amax() <= 1e-5 * (1.0 + a.subgradient.amax()));
        }
    }
}

/// `h(y) = y²`, `p(y) = y` on `y ∈ [0, 3]`: the first smoothing demo as a general model.
struct Eg1Model(BoxBounds);

impl InnerModel for Eg1Model {
    fn bounds(&self) -> &BoxBounds {
        &self.0
    }
    fn out_dim(&self) -> usize {
        1
    }
    fn h(&self, y: &Vector) -> Vector {
        v(&[y[0] * y[0]])
    }
    fn h_jacobian(&self, y: &Vector) -> Matrix {
        Matrix::from_element(1, 1, 2.0 * y[0])
    }
    fn p(&self, y: &Vector) -> f64 {
        y[0]
    }
    fn p_gradient(&self, _y: &Vector) -> Vector {
        v(&[1.0])
    }
    fn h_range(&self) -> (Vector, Vector) {
        (v(&[0.0]), v(&[9.0]))
    }
}

/// `h(y, s) = y - s`, `p = a y² + b y` on `[0, 5]²`: the second demo.
struct Eg2Model(BoxBounds, f64, f64);

impl InnerModel for Eg2Model {
    fn bounds(&self) -> &BoxBounds {
        &self.0
    }
    fn out_dim(&self) -> usize {
        1
    }
    fn h(&self, y: &Vector) -> Vector {
        v(&[y[0] - y[1]])
    }
    fn h_jacobian(&self, _y: &Vector) -> Matrix {
        Matrix::from_row_slice(1, 2, &[1.0, -1.0])
    }
    fn p(&self, y: &Vector) -> f64 {
        self.1 * y[0] * y[0] + self.2 * y[0]
    }
    fn p_gradient(&self, y: &Vector) -> Vector {
        v(&[2.0 * self.1 * y[0] + self.2, 0.0])
    }
    fn h_range(&self) -> (Vector, Vector) {
        (v(&[-5.0]), v(&[5.0]))
    }
}

#[test]
fn demos_agree_with_general_multistart() {
    let eg1 = Scenario::new(
        Matrix::identity(1, 1),
        InnerProblem::General(Arc::new(Eg1Model(BoxBounds::uniform(1, 0.0, 3.0).unwrap()))),
        BoxBounds::uniform(1, 0.0, 1.5).unwrap(),
    )
    .unwrap();
    let eg2 = Scenario::new(
        Matrix::identity(1, 1),
        InnerProblem::General(Arc::new(Eg2Model(BoxBounds::uniform(2, 0.0, 5.0).unwrap(), 1.0, -1.0))),
        BoxBounds::uniform(1, -2.0, 2.0).unwrap(),
    )
    .unwrap();
    for mu in [1.0, 10.0, 100.0] {
        for i in 0..=15 {
            let x = 0.1 * i as f64;
            let a = smooth_recourse(&v(&[x]), &eg1, mu).unwrap().value;
            assert!((a - smoothing_demo(Demo::Eg1, x, mu).unwrap()).abs() <= 1e-8, "eg1 mu={mu} x={x}");
        }
        for i in 0..=20 {
            let x = -2.0 + 0.2 * i as f64;
            let a = smooth_recourse(&v(&[x]), &eg2, mu).unwrap().value;
            let b = smoothing_demo(Demo::Eg2 { a: 1.0, b: -1.0 }, x, mu).unwrap();
            assert!((a - b).abs() <= 1e-8, "eg2 mu={mu} x={x}: {a} vs {b}");
        }
    }
}

#[test]
fn eg2_closed_form_against_grid() {
    for &(a, b) in &[(1.0, -1.0), (1.0, 1.0), (2.0, 0.5)] {
        let demo = Demo::Eg2 { a, b };
        for mu in [0.5, 4.0, 30.0] {
            for i in 0..=12 {
                let x = -1.5 + 0.25 * i as f64;
                let closed = smoothing_demo(demo, x, mu).unwrap();
                let mut grid = f64::INFINITY;
                let n = 1200;
                for iy in 0..=n {
                    let y = 3.0 * iy as f64 / n as f64;
                    for is in 0..=n / 4 {
                        let s = 4.0 * is as f64 / (n / 4) as f64;
                        grid = grid.min(a * y * y + b * y + mu * (x + s - y).powi(2));
                    }
                }
                assert!(closed <= grid + 1e-12, "a={a} b={b} mu={mu} x={x}");
                assert!(grid - closed <= 5e-3 * (1.0 + mu), "a={a} b={b} mu={mu} x={x}: {closed} vs {grid}");
            }
        }
    }
}

#[test]
fn eg2_shapes() {
    let d = Demo::Eg2 { a: 1.0, b: -1.0 };
    for x in [-4.0, -1.0, 0.0, 0.3] {
        assert!((smoothing_demo(d, x, 10.0).unwrap() + 0.25).abs() < 1e-14);
        assert_eq!(exact_demo(d, x), -0.25);
    }
    // far right the smoothed curve tracks a x² + b x from below, within O(1/μ)
    for x in [2.0, 5.0, 10.0] {
        let r = smoothing_demo(d, x, 100.0).unwrap();
        let exact = x * x - x;
        assert!(r <= exact && exact - r <= (2.0 * x - 1.0).powi(2) / (4.0 * 100.0) + 1e-9);
    }
    // the kink of r at the smaller root of the slope jump has a bounded second difference once smoothed
    let dk = Demo::Eg2 { a: 1.0, b: 1.0 };
    let h = 1e-4;
    let sd = |mu: f64| {
        (smoothing_demo(dk, h, mu).unwrap() - 2.0 * smoothing_demo(dk, 0.0, mu).unwrap()
            + smoothing_demo(dk, -h, mu).unwrap())
            / (h * h)
    };
    let exact_sd = (exact_demo(dk, h) - 2.0 * exact_demo(dk, 0.0) + exact_demo(dk, -h)) / (h * h);
    assert!(exact_sd > 1e3);
    for mu in [1.0, 10.0, 100.0] {
        assert!(sd(mu).is_finite() && sd(mu) <= 2.0 * (1.0 + mu));
    }
}

#[test]
fn eg1_against_dense_scan() {
    for mu in [1.0, 10.0, 100.0] {
        for i in 0..=30 {
            let x = -0.5 + 0.1 * i as f64;
            let r = smoothing_demo(Demo::Eg1, x, mu).unwrap();
            let mut scan = f64::INFINITY;
            let n = 400_000;
            for k in 0..=n {
                let y = 2.0 * k as f64 / n as f64;
                scan = scan.min(y + mu * (y * y - x).powi(2));
            }
            assert!(r <= scan + 1e-12 && scan - r <= 1e-6, "mu={mu} x={x}: {r} vs {scan}");
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn projection_is_idempotent_and_feasible(q in prop::array::uniform3(-8.0f64..8.0), first in any::<bool>()) {
        let set = if first { ParabolaSet::example1() } else { ParabolaSet::example2() };
        let p = project_onto_example_set(&v(&q), &set);
        prop_assert!(set.contains(&p.y, 1e-12));
        let again = project_onto_example_set(&p.y, &set);
        prop_assert!((&again.y - &p.y).amax() <= 1e-12);
    }

    #[test]
    fn upper_c2_holds_for_example2(x in prop::array::uniform3(0.0f64..1.0), xb in prop::array::uniform3(0.0f64..1.0)) {
        let s = example_scenario(false, TieRule::LargestY3);
        let scale = |a: [f64; 3]| v(&[-5.0 + 10.0 * a[0], 50.0 * a[1] * a[1], -5.0 + 10.0 * a[2]]);
        prop_assert!(upper_c2_excess(&s, 1.0, &scale(x), &scale(xb)) <= 1e-8);
    }

    #[test]
    fn separable_solution_beats_perturbations(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = 3;
        let inner = SeparableQuadratic::new(
            Vector::from_fn(n, |_, _| rng.gen_range(-2.0..2.0)),
            Vector::from_fn(n, |_, _| rng.gen_range(-1.0..1.0)),
            Vector::from_fn(n, |_, _| rng.gen_range(-1.0..2.0)),
            Vector::from_fn(n, |_, _| rng.gen_range(-1.0..1.0)),
            BoxBounds::uniform(n, -1.0, 1.0).unwrap(),
        ).unwrap();
        let q = Vector::from_fn(n, |_, _| rng.gen_range(-3.0..3.0));
        let mu = rng.gen_range(0.1..10.0);
        let sol = inner.solve(&q, mu);
        let f = |y: &Vector| mu * (&q - inner.h(y)).norm_squared() + inner.p(y);
        for _ in 0..200 {
            let y = Vector::from_fn(n, |_, _| rng.gen_range(-1.0..=1.0));
            prop_assert!(sol.value <= f(&y) + 1e-12);
        }
    }
}
