use serde::{Deserialize, Serialize};

use super::projection::depressed_cubic_roots;
use crate::{Error, Result};

/// The two one-dimensional smoothing demos.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Demo {
    /// `r(x) = min { y : y² = x, y >= 0 }`.
    Eg1,
    /// `r(x) = min { a y² + b y : y >= x, y >= 0 }`.
    Eg2 { a: f64, b: f64 },
}

impl Demo {
    pub fn name(&self) -> &'static str {
        match self {
            Demo::Eg1 => "eg1",
            Demo::Eg2 { .. } => "eg2",
        }
    }

    fn validate(&self) -> Result<()> {
        if let Demo::Eg2 { a, b } = *self {
            if !(a > 0.0 && a.is_finite() && b.is_finite()) {
                return Err(Error::InvalidConfig(format!("eg2 needs a > 0 and finite b, got a={a}, b={b}")));
            }
        }
        Ok(())
    }
}

/// Smoothed value `r_μ(x)`.
///
/// eg1: `min_{y>=0} y + μ(y² - x)²`, by enumerating `y = 0` and the positive
/// roots of `y³ - x y + 1/(4μ) = 0`.
///
/// eg2: `min_{y,s>=0} a y² + b y + μ(x + s - y)²`. With `s = max(0, y - x)` the
/// inner function of `y` is convex and C¹, so its minimizer is found on one of
/// the two pieces and clamped at zero.
pub fn smoothing_demo(which: Demo, x: f64, mu: f64) -> Result<f64> {
    if !(mu > 0.0 && mu.is_finite()) {
        return Err(Error::InvalidConfig(format!("mu must be positive, got {mu}")));
    }
    if !x.is_finite() {
        return Err(Error::InvalidConfig(format!("x must be finite, got {x}")));
    }
    which.validate()?;
    Ok(match which {
        Demo::Eg1 => {
            let f = |y: f64| y + mu * (y * y - x).powi(2);
            let mut best = f(0.0);
            for y in depressed_cubic_roots(-x, 0.25 / mu) {
                if y > 0.0 {
                    best = best.min(f(y));
                }
            }
            best
        }
        Demo::Eg2 { a, b } => {
            let free = -b / (2.0 * a);
            let y = if free >= x {
                free
            } else {
                (2.0 * mu * x - b) / (2.0 * (a + mu))
            }
            .max(0.0);
            let s = (y - x).max(0.0);
            a * y * y + b * y + mu * (x + s - y).powi(2)
        }
    })
}

/// The unsmoothed value `r(x)`; `+∞` where the inner problem is infeasible.
pub fn exact_demo(which: Demo, x: f64) -> f64 {
    match which {
        Demo::Eg1 => {
            if x >= 0.0 {
                x.sqrt()
            } else {
                f64::INFINITY
            }
        }
        Demo::Eg2 { a, b } => {
            let y = x.max(0.0).max(-b / (2.0 * a));
            a * y * y + b * y
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn eg1_tends_to_sqrt() {
        let v = smoothing_demo(Demo::Eg1, 1.0, 1e6).unwrap();
        assert!((v - 1.0).abs() < 1e-2);
        assert!(v <= 1.0);
    }

    #[test]
    fn eg1_flat_at_origin() {
        let mu = 10.0;
        let h = 1e-6;
        let slope = (smoothing_demo(Demo::Eg1, h, mu).unwrap() - smoothing_demo(Demo::Eg1, 0.0, mu).unwrap()) / h;
        assert!(slope.is_finite() && slope.abs() < 1.0);
    }

    #[test]
    fn eg2_constant_left_branch() {
        let d = Demo::Eg2 { a: 1.0, b: -1.0 };
        for x in [-3.0, -1.0, 0.0, 0.25] {
            assert!((smoothing_demo(d, x, 5.0).unwrap() + 0.25).abs() < 1e-14);
        }
    }

    #[test]
    fn rejects_bad_parameters() {
        assert!(smoothing_demo(Demo::Eg1, 1.0, 0.0).is_err());
        assert!(smoothing_demo(Demo::Eg2 { a: 0.0, b: 1.0 }, 1.0, 1.0).is_err());
    }
}
