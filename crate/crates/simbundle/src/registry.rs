//! Built-in benchmark problems.

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::model::{
    AlphaStrategy, BoxBounds, FnConstraints, FnOracle, LinearConstraints, Matrix, NoConstraints, Problem, SolverConfig,
    Vector,
};
use crate::reference::{ExampleExtensive, ExtensiveForm, QuadraticExtensive};
use crate::twostage::{
    DiagonalQuadratic, Demo, InnerProblem, ParabolaSet, Scenario, SeparableQuadratic, TieRule, TwoStageObjective,
};
use crate::{Error, Result};

pub const PROBLEMS: [&str; 8] = [
    "example1",
    "example2",
    "eg1-demo",
    "eg2-demo",
    "toy-linear-coupled",
    "circle-restoration",
    "circle-fixed-point",
    "qp-sanity",
];

/// First-stage penalty weight of the two examples.
pub const EXAMPLE_MU: f64 = 1e5;

pub const TOY_SEED: u64 = 2024;

/// Default smoothing parameter of the toy problem.
pub const TOY_MU: f64 = 10.0;

/// Parameter overrides accepted by every problem; unused ones are ignored.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Overrides {
    /// Smoothing parameter of the recourse terms.
    pub mu: Option<f64>,
    pub alpha0: Option<f64>,
    pub eps: Option<f64>,
    pub max_iters: Option<usize>,
    pub alpha_strategy: Option<AlphaStrategy>,
    pub seed: Option<u64>,
    #[serde(rename = "K")]
    pub k: Option<usize>,
    pub tie: Option<TieRule>,
    /// eg2 coefficients.
    pub a: Option<f64>,
    pub b: Option<f64>,
}

/// A solvable instance.
#[derive(Clone)]
pub struct Instance {
    pub problem: Problem,
    pub config: SolverConfig,
    pub extensive: Option<Arc<dyn ExtensiveForm>>,
}

pub enum Entry {
    Solve(Instance),
    Demo(Demo),
}

pub fn is_known(name: &str) -> bool {
    PROBLEMS.contains(&name)
}

fn config(o: &Overrides) -> Result<SolverConfig> {
    let mut c = SolverConfig::default();
    if let Some(v) = o.alpha0 {
        c.alpha0 = v;
    }
    if let Some(v) = o.eps {
        c.eps = v;
    }
    if let Some(v) = o.max_iters {
        c.max_iters = v;
    }
    if let Some(v) = o.alpha_strategy {
        c.alpha_strategy = v;
    }
    c.validate()?;
    Ok(c)
}

fn positive(name: &str, v: f64) -> Result<f64> {
    if v > 0.0 && v.is_finite() {
        Ok(v)
    } else {
        Err(Error::InvalidConfig(format!("{name} must be positive and finite, got {v}")))
    }
}

pub fn build(name: &str, o: &Overrides) -> Result<Entry> {
    match name {
        "example1" | "example2" => two_stage_example(name == "example1", o).map(Entry::Solve),
        "eg1-demo" => {
            o.mu.map(|m| positive("mu", m)).transpose()?;
            Ok(Entry::Demo(Demo::Eg1))
        }
        "eg2-demo" => {
            let a = positive("a", o.a.unwrap_or(1.0))?;
            let b = o.b.unwrap_or(-1.0);
            if !b.is_finite() {
                return Err(Error::InvalidConfig("b must be finite".into()));
            }
            Ok(Entry::Demo(Demo::Eg2 { a, b }))
        }
        "toy-linear-coupled" => toy_linear_coupled(o).map(Entry::Solve),
        "circle-restoration" => circle(o, Vector::from_column_slice(&[0.2, 0.0]), name).map(Entry::Solve),
        "circle-fixed-point" => circle(o, Vector::from_column_slice(&[0.0, 0.0]), name).map(Entry::Solve),
        "qp-sanity" => qp_sanity(o).map(Entry::Solve),
        other => Err(Error::UnknownProblem(other.to_string())),
    }
}

/// Shorthand for problems that can be solved.
pub fn instance(name: &str, o: &Overrides) -> Result<Instance> {
    match build(name, o)? {
        Entry::Solve(i) => Ok(i),
        Entry::Demo(_) => Err(Error::InvalidConfig(format!("'{name}' is a smoothing demo; use sweep"))),
    }
}

/// First-stage box of an example.
pub fn example_bounds(first: bool) -> BoxBounds {
    let x3 = if first { (-1.0, 10.0) } else { (-5.0, 5.0) };
    BoxBounds::from_slices(&[-5.0, 0.0, x3.0], &[5.0, 50.0, x3.1]).expect("static bounds")
}

/// The single recourse scenario of an example: `W = I`, `h(y) = y`, `p ≡ 0`.
pub fn example_scenario(first: bool, tie: TieRule) -> Scenario {
    let set = if first { ParabolaSet::example1() } else { ParabolaSet::example2() }.with_tie(tie);
    Scenario::new(Matrix::identity(3, 3), InnerProblem::Parabola(set), example_bounds(first)).expect("static scenario")
}

fn two_stage_example(first: bool, o: &Overrides) -> Result<Instance> {
    let mu = positive("mu", o.mu.unwrap_or(1.0))?;
    let name = if first { "example1" } else { "example2" };
    let x_bounds = example_bounds(first);
    let scenario = example_scenario(first, o.tie.unwrap_or_default());
    let set = match &scenario.inner {
        InnerProblem::Parabola(s) => s.clone(),
        _ => unreachable!(),
    };
    let first_stage = DiagonalQuadratic {
        weights: Vector::from_column_slice(&[0.0, EXAMPLE_MU, EXAMPLE_MU]),
        centers: Vector::from_column_slice(&[0.0, 0.5, 0.0]),
    };
    let objective = TwoStageObjective::new(first_stage, vec![scenario], mu)?;
    let extensive = ExampleExtensive {
        mu_first: EXAMPLE_MU,
        mu_recourse: mu,
        x_bounds: x_bounds.clone(),
        set,
    };
    Ok(Instance {
        problem: Problem {
            name: name.into(),
            oracle: Arc::new(objective),
            constraints: Arc::new(NoConstraints { n: 3 }),
            bounds: x_bounds,
            x0: Vector::from_column_slice(&[1.0, 50.0, 5.0]),
        },
        config: config(o)?,
        extensive: Some(Arc::new(extensive)),
    })
}

/// First-stage cost and `k` scenarios of the toy problem: sparse random
/// coupling, separable quadratic second stages.
pub fn toy_parts(seed: u64, k: usize) -> Result<(DiagonalQuadratic, Vec<Scenario>, BoxBounds)> {
    let n = 6;
    if k == 0 {
        return Err(Error::InvalidConfig("K must be at least 1".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let x_bounds = BoxBounds::uniform(n, -2.0, 2.0)?;
    let first_stage = DiagonalQuadratic {
        weights: Vector::from_fn(n, |_, _| rng.gen_range(0.5..2.0)),
        centers: Vector::from_fn(n, |_, _| rng.gen_range(-1.0..1.0)),
    };
    let mut scenarios = Vec::with_capacity(k);
    for _ in 0..k {
        let mut w = Matrix::from_diagonal(&Vector::from_fn(n, |_, _| rng.gen_range(0.5..1.5)));
        for _ in 0..3 {
            let (i, j) = (rng.gen_range(0..n), rng.gen_range(0..n));
            if i != j {
                w[(i, j)] = rng.gen_range(-0.5..0.5);
            }
        }
        let inner = SeparableQuadratic::new(
            Vector::from_fn(n, |_, _| rng.gen_range(0.5..1.5)),
            Vector::from_fn(n, |_, _| rng.gen_range(-1.0..1.0)),
            Vector::from_fn(n, |_, _| rng.gen_range(0.5..2.0)),
            Vector::from_fn(n, |_, _| rng.gen_range(-1.0..1.0)),
            BoxBounds::uniform(n, -3.0, 3.0)?,
        )?;
        scenarios.push(Scenario::new(w, InnerProblem::Separable(inner), x_bounds.clone())?);
    }
    Ok((first_stage, scenarios, x_bounds))
}

/// Six first-stage variables, `K` scenarios, one linear equality `Σ x = 1`.
pub fn toy_linear_coupled(o: &Overrides) -> Result<Instance> {
    let mu = positive("mu", o.mu.unwrap_or(TOY_MU))?;
    let (first_stage, scenarios, x_bounds) = toy_parts(o.seed.unwrap_or(TOY_SEED), o.k.unwrap_or(4))?;
    let n = x_bounds.dim();
    let objective = TwoStageObjective::new(first_stage, scenarios, mu)?;
    let a = Matrix::from_row_slice(1, n, &vec![1.0; n]);
    let b = Vector::from_column_slice(&[1.0]);
    Ok(Instance {
        problem: Problem {
            name: "toy-linear-coupled".into(),
            oracle: Arc::new(objective),
            constraints: Arc::new(LinearConstraints { a, b }),
            bounds: x_bounds,
            x0: Vector::zeros(n),
        },
        config: config(o)?,
        extensive: None,
    })
}

/// `‖x - (0.9, 0)‖²` on the unit circle inside `[-1.5, 1.5]²`.
fn circle(o: &Overrides, x0: Vector, name: &str) -> Result<Instance> {
    let center = Vector::from_column_slice(&[0.9, 0.0]);
    let oracle = FnOracle {
        n: 2,
        upper_c2: Some(1.0),
        f: Box::new(move |x: &Vector| {
            let d = x - &center;
            (d.norm_squared(), 2.0 * d)
        }),
    };
    let cons = FnConstraints {
        n: 2,
        m: 1,
        hessian_bound: 1.0,
        f: Box::new(|x: &Vector| {
            let c = Vector::from_column_slice(&[x[0] * x[0] + x[1] * x[1] - 1.0]);
            let j = Matrix::from_row_slice(1, 2, &[2.0 * x[0], 2.0 * x[1]]);
            (c, j)
        }),
    };
    Ok(Instance {
        problem: Problem {
            name: name.into(),
            oracle: Arc::new(oracle),
            constraints: Arc::new(cons),
            bounds: BoxBounds::uniform(2, -1.5, 1.5)?,
            x0,
        },
        config: config(o)?,
        extensive: None,
    })
}

/// `‖x‖²` subject to `x₁ = 0.3` on `[0, 1]²`; the minimizer is `(0.3, 0)`.
fn qp_sanity(o: &Overrides) -> Result<Instance> {
    let bounds = BoxBounds::from_slices(&[0.0, 0.0], &[1.0, 1.0])?;
    let oracle = FnOracle {
        n: 2,
        upper_c2: Some(1.0),
        f: Box::new(|x: &Vector| (x.norm_squared(), 2.0 * x)),
    };
    Ok(Instance {
        problem: Problem {
            name: "qp-sanity".into(),
            oracle: Arc::new(oracle),
            constraints: Arc::new(LinearConstraints {
                a: Matrix::from_row_slice(1, 2, &[1.0, 0.0]),
                b: Vector::from_element(1, 0.3),
            }),
            bounds,
            x0: Vector::from_column_slice(&[0.8, 0.6]),
        },
        config: config(o)?,
        // x₁ = 0.3 enters the joint form as a fixed coordinate
        extensive: Some(Arc::new(QuadraticExtensive {
            weights: Vector::from_element(2, 1.0),
            target: Vector::zeros(2),
            bounds: BoxBounds {
                lower: Vector::from_column_slice(&[0.3, 0.0]),
                upper: Vector::from_column_slice(&[0.3, 1.0]),
            },
        })),
    })
}
