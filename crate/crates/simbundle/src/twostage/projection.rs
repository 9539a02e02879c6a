use serde::{Deserialize, Serialize};

use crate::model::Vector;

/// Rule for choosing between minimizers of equal value.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum TieRule {
    /// Largest `y₃`, then lexicographically smallest `y`.
    #[default]
    LargestY3,
    /// Smallest `y₃`, then lexicographically smallest `y`.
    SmallestY3,
}

impl std::str::FromStr for TieRule {
    type Err = crate::Error;
    fn from_str(s: &str) -> crate::Result<Self> {
        match s {
            "largest-y3" => Ok(TieRule::LargestY3),
            "smallest-y3" => Ok(TieRule::SmallestY3),
            other => Err(crate::Error::Parse(format!("unknown tie rule '{other}'"))),
        }
    }
}

/// The set `{y ∈ ℝ³ : y₂ <= y₃², lower <= y <= upper}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParabolaSet {
    pub lower: [f64; 3],
    pub upper: [f64; 3],
    pub tie: TieRule,
}

impl ParabolaSet {
    /// `y₁, y₂ ∈ [-5, 5]`, `y₃ ∈ [0, 10]`.
    pub fn example1() -> Self {
        Self {
            lower: [-5.0, -5.0, 0.0],
            upper: [5.0, 5.0, 10.0],
            tie: TieRule::default(),
        }
    }

    /// All coordinates in `[-5, 5]`.
    pub fn example2() -> Self {
        Self {
            lower: [-5.0; 3],
            upper: [5.0; 3],
            tie: TieRule::default(),
        }
    }

    pub fn with_tie(mut self, tie: TieRule) -> Self {
        self.tie = tie;
        self
    }

    pub fn contains(&self, y: &Vector, tol: f64) -> bool {
        y.len() == 3
            && (0..3).all(|i| y[i] >= self.lower[i] - tol && y[i] <= self.upper[i] + tol)
            && y[1] <= y[2] * y[2] + tol
    }

    pub fn validate(&self) -> crate::Result<()> {
        for i in 0..3 {
            if !(self.lower[i].is_finite() && self.upper[i].is_finite() && self.lower[i] <= self.upper[i]) {
                return Err(crate::Error::InvalidBounds(format!(
                    "parabola set coordinate {i}: [{}, {}]",
                    self.lower[i], self.upper[i]
                )));
            }
        }
        // nonempty: some t in [l3, u3] has t² >= l2
        let reach = self.lower[2].abs().max(self.upper[2].abs());
        if reach * reach < self.lower[1] {
            return Err(crate::Error::InvalidBounds("parabola set is empty".into()));
        }
        Ok(())
    }
}

/// Result of a projection.
#[derive(Debug, Clone, PartialEq)]
pub struct Projection {
    pub y: Vector,
    /// Squared distance `‖q - y‖²`.
    pub distance_sq: f64,
    /// A distinct candidate came within the cluster tolerance of the optimum.
    pub ambiguous: bool,
    pub candidates: usize,
}

/// Relative tolerance under which two candidate values count as tied.
pub const TIE_TOL: f64 = 1e-12;

/// Relative value gap under which a distinct candidate marks the projection ambiguous.
pub const CLUSTER_TOL: f64 = 1e-6;

/// Real roots of `t³ + p t + q = 0`, polished by Newton's method.
pub(crate) fn depressed_cubic_roots(p: f64, q: f64) -> Vec<f64> {
    let mut roots = Vec::with_capacity(3);
    let disc = 4.0 * p * p * p + 27.0 * q * q;
    if p == 0.0 && q == 0.0 {
        roots.push(0.0);
    } else if disc > 0.0 {
        let d = (q * q / 4.0 + p * p * p / 27.0).sqrt();
        roots.push((-q / 2.0 + d).cbrt() + (-q / 2.0 - d).cbrt());
    } else {
        let m = 2.0 * (-p / 3.0).sqrt();
        let arg = ((3.0 * q) / (2.0 * p) * (-3.0 / p).sqrt()).clamp(-1.0, 1.0);
        let phi = arg.acos() / 3.0;
        for k in 0..3 {
            roots.push(m * (phi - 2.0 * std::f64::consts::PI * k as f64 / 3.0).cos());
        }
    }
    for t in roots.iter_mut() {
        for _ in 0..4 {
            let f = *t * *t * *t + p * *t + q;
            let df = 3.0 * *t * *t + p;
            if df == 0.0 {
                break;
            }
            let next = *t - f / df;
            if !next.is_finite() || (next - *t).abs() <= 1e-16 * (1.0 + t.abs()) {
                if next.is_finite() {
                    *t = next;
                }
                break;
            }
            *t = next;
        }
    }
    roots
}

fn clamp(v: f64, lo: f64, hi: f64) -> f64 {
    v.max(lo).min(hi)
}

/// The admissible `y₃` intervals on the parabola `y₂ = y₃²`.
fn parabola_intervals(set: &ParabolaSet) -> Vec<(f64, f64)> {
    let (l3, u3) = (set.lower[2], set.upper[2]);
    let (l2, u2) = (set.lower[1], set.upper[1]);
    if u2 < 0.0 {
        return Vec::new();
    }
    let outer = u2.sqrt();
    let inner = if l2 > 0.0 { l2.sqrt() } else { 0.0 };
    let mut out = Vec::new();
    // t ∈ [-outer, -inner] ∪ [inner, outer], intersected with [l3, u3]
    for (a, b) in [(-outer, -inner), (inner, outer)] {
        let lo = a.max(l3);
        let hi = b.min(u3);
        if lo <= hi {
            out.push((lo, hi));
        }
    }
    if out.len() == 2 && out[0].1 >= out[1].0 {
        let merged = (out[0].0, out[1].1);
        out = vec![merged];
    }
    out
}

fn prefer(a: &Vector, b: &Vector, tie: TieRule) -> bool {
    let ka = match tie {
        TieRule::LargestY3 => -a[2],
        TieRule::SmallestY3 => a[2],
    };
    let kb = match tie {
        TieRule::LargestY3 => -b[2],
        TieRule::SmallestY3 => b[2],
    };
    if ka != kb {
        return ka < kb;
    }
    for i in 0..a.len() {
        if a[i] != b[i] {
            return a[i] < b[i];
        }
    }
    false
}

/// Select the best candidate under the value order and the tie rule.
fn select(q: &Vector, cands: Vec<Vector>, tie: TieRule) -> Projection {
    let vals: Vec<f64> = cands.iter().map(|y| (q - y).norm_squared()).collect();
    let fmin = vals.iter().cloned().fold(f64::INFINITY, f64::min);
    let tie_band = TIE_TOL * (1.0 + fmin.abs());
    let mut best: Option<usize> = None;
    for (i, y) in cands.iter().enumerate() {
        if vals[i] > fmin + tie_band {
            continue;
        }
        if best.map_or(true, |b| prefer(y, &cands[b], tie)) {
            best = Some(i);
        }
    }
    let b = best.expect("at least one candidate");
    let cluster = CLUSTER_TOL * (1.0 + fmin.abs());
    let ambiguous = cands
        .iter()
        .enumerate()
        .any(|(i, y)| i != b && vals[i] <= fmin + cluster && (y - &cands[b]).norm() > 1e-6);
    Projection {
        y: cands[b].clone(),
        distance_sq: vals[b],
        ambiguous,
        candidates: cands.len(),
    }
}

/// Euclidean projection of `q` onto the parabola set.
pub fn project_onto_example_set(q: &Vector, set: &ParabolaSet) -> Projection {
    assert_eq!(q.len(), 3, "projection is defined in three dimensions");
    let y1 = clamp(q[0], set.lower[0], set.upper[0]);
    let y2 = clamp(q[1], set.lower[1], set.upper[1]);
    let y3 = clamp(q[2], set.lower[2], set.upper[2]);
    if y2 <= y3 * y3 {
        let y = Vector::from_column_slice(&[y1, y2, y3]);
        return Projection {
            distance_sq: (q - &y).norm_squared(),
            y,
            ambiguous: false,
            candidates: 1,
        };
    }
    // the parabola is active: minimize (t² - q₂)² + (t - q₃)² over admissible t
    let intervals = parabola_intervals(set);
    let mut ts: Vec<f64> = Vec::new();
    for &(lo, hi) in &intervals {
        ts.push(lo);
        ts.push(hi);
    }
    // stationarity 2t³ + (1 - 2q₂)t - q₃ = 0
    for t in depressed_cubic_roots((1.0 - 2.0 * q[1]) / 2.0, -q[2] / 2.0) {
        if intervals.iter().any(|&(lo, hi)| t >= lo && t <= hi) {
            ts.push(t);
        }
    }
    let cands: Vec<Vector> = ts
        .into_iter()
        .map(|t| {
            let y2 = clamp(t * t, set.lower[1], set.upper[1]);
            Vector::from_column_slice(&[y1, y2, t])
        })
        .collect();
    if cands.is_empty() {
        return Projection {
            distance_sq: (q - Vector::from_column_slice(&[y1, y2, y3])).norm_squared(),
            y: Vector::from_column_slice(&[y1, y2, y3]),
            ambiguous: false,
            candidates: 0,
        };
    }
    select(q, cands, set.tie)
}
