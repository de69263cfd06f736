//! Convex feasible sets with linear minimization oracles and Euclidean projections.
//!
//! The solvers touch a set only through `lmo` / `lmo_approx`; `project` exists for
//! diagnostics (gradient mapping, exact subproblem solutions) and is never called
//! inside a solver update.

use crate::error::{Error, Result};
use nalgebra::DVector;
use serde::{Deserialize, Serialize};

pub type Vector = DVector<f64>;

/// A closed convex constraint set with a known diameter bound.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum FeasibleSet {
    /// `{ x : ||x||_1 <= radius }`
    L1Ball { dim: usize, radius: f64 },
    /// `{ x : ||x||_2 <= radius }`
    L2Ball { dim: usize, radius: f64 },
    /// `{ x : x >= 0, sum x = radius }`
    Simplex { dim: usize, radius: f64 },
    /// `{ x : lo <= x_i <= hi }` with scalar bounds applied per coordinate.
    Box { dim: usize, lo: f64, hi: f64 },
}

impl FeasibleSet {
    pub fn l1_ball(dim: usize, radius: f64) -> Self {
        FeasibleSet::L1Ball { dim, radius }
    }

    pub fn l2_ball(dim: usize, radius: f64) -> Self {
        FeasibleSet::L2Ball { dim, radius }
    }

    pub fn simplex(dim: usize, radius: f64) -> Self {
        FeasibleSet::Simplex { dim, radius }
    }

    pub fn boxed(dim: usize, lo: f64, hi: f64) -> Self {
        FeasibleSet::Box { dim, lo, hi }
    }

    /// Parse the CLI mini-grammar: `l1:1.0`, `l2:2.0`, `simplex:1.0`, `box:0:1`.
    pub fn parse(spec: &str, dim: usize) -> Result<Self> {
        let parts: Vec<&str> = spec.split(':').collect();
        let bad = || Error::config(format!("unrecognized set spec `{spec}`"));
        let num = |s: &str| s.parse::<f64>().map_err(|_| bad());
        match parts.as_slice() {
            ["l1", r] => Ok(FeasibleSet::l1_ball(dim, num(r)?)),
            ["l2", r] => Ok(FeasibleSet::l2_ball(dim, num(r)?)),
            ["simplex", r] => Ok(FeasibleSet::simplex(dim, num(r)?)),
            ["box", lo, hi] => {
                let (lo, hi) = (num(lo)?, num(hi)?);
                if lo >= hi {
                    return Err(Error::config(format!("box bounds must satisfy lo < hi, got {lo}:{hi}")));
                }
                Ok(FeasibleSet::boxed(dim, lo, hi))
            }
            _ => Err(bad()),
        }
    }

    pub fn dim(&self) -> usize {
        match *self {
            FeasibleSet::L1Ball { dim, .. }
            | FeasibleSet::L2Ball { dim, .. }
            | FeasibleSet::Simplex { dim, .. }
            | FeasibleSet::Box { dim, .. } => dim,
        }
    }

    /// Diameter bound `D_X = max ||x - y||` over the set.
    pub fn diameter(&self) -> f64 {
        match *self {
            FeasibleSet::L1Ball { radius, .. } | FeasibleSet::L2Ball { radius, .. } => 2.0 * radius,
            FeasibleSet::Simplex { radius, .. } => radius * std::f64::consts::SQRT_2,
            FeasibleSet::Box { dim, lo, hi } => (hi - lo) * (dim as f64).sqrt(),
        }
    }

    /// A feasible reference point: center of balls and boxes, first vertex of the simplex.
    pub fn canonical_point(&self) -> Vector {
        match *self {
            FeasibleSet::L1Ball { dim, .. } | FeasibleSet::L2Ball { dim, .. } => Vector::zeros(dim),
            FeasibleSet::Simplex { dim, radius } => {
                let mut v = Vector::zeros(dim);
                v[0] = radius;
                v
            }
            FeasibleSet::Box { dim, lo, hi } => Vector::from_element(dim, 0.5 * (lo + hi)),
        }
    }

    fn check_input(&self, g: &Vector) -> Result<()> {
        if g.len() != self.dim() {
            return Err(Error::contract(format!(
                "set has dimension {}, input has dimension {}",
                self.dim(),
                g.len()
            )));
        }
        if !g.iter().all(|x| x.is_finite()) {
            return Err(Error::contract("non-finite input to set operation".to_string()));
        }
        Ok(())
    }

    /// Exact linear minimization oracle: argmin over the set of `<g, v>`.
    ///
    /// Ties break to the lowest index; `g = 0` returns the canonical point.
    pub fn lmo(&self, g: &Vector) -> Result<Vector> {
        self.check_input(g)?;
        Ok(match *self {
            FeasibleSet::L1Ball { dim, radius } => {
                // vertex -sign(g_j) * r * e_j at j = argmax |g_j|
                let mut best = 0usize;
                for j in 1..dim {
                    if g[j].abs() > g[best].abs() {
                        best = j;
                    }
                }
                if g[best] == 0.0 {
                    self.canonical_point()
                } else {
                    let mut v = Vector::zeros(dim);
                    v[best] = -g[best].signum() * radius;
                    v
                }
            }
            FeasibleSet::L2Ball { dim, radius } => {
                let norm = g.norm();
                if norm == 0.0 {
                    Vector::zeros(dim)
                } else {
                    g * (-radius / norm)
                }
            }
            FeasibleSet::Simplex { dim, radius } => {
                let mut best = 0usize;
                for j in 1..dim {
                    if g[j] < g[best] {
                        best = j;
                    }
                }
                let mut v = Vector::zeros(dim);
                v[best] = radius;
                v
            }
            FeasibleSet::Box { dim, lo, hi } => {
                let mid = 0.5 * (lo + hi);
                Vector::from_fn(dim, |i, _| {
                    if g[i] > 0.0 {
                        lo
                    } else if g[i] < 0.0 {
                        hi
                    } else {
                        mid
                    }
                })
            }
        })
    }

    /// Approximate LMO admitting an additive objective slack.
    ///
    /// The default implementation is the exact oracle, which trivially satisfies
    /// any slack >= 0. Adversarial slack consumption lives in [`AdversarialLmo`].
    pub fn lmo_approx(&self, g: &Vector, slack: f64) -> Result<Vector> {
        if slack < 0.0 {
            return Err(Error::contract("lmo_approx slack must be nonnegative"));
        }
        self.lmo(g)
    }

    /// Euclidean projection onto the set.
    pub fn project(&self, y: &Vector) -> Result<Vector> {
        self.check_input(y)?;
        Ok(match *self {
            FeasibleSet::L1Ball { radius, .. } => {
                if y.iter().map(|v| v.abs()).sum::<f64>() <= radius {
                    y.clone()
                } else {
                    // sort-and-threshold reduction to the simplex on |y|
                    let theta = simplex_threshold(&y.iter().map(|v| v.abs()).collect::<Vec<_>>(), radius);
                    Vector::from_fn(y.len(), |i, _| y[i].signum() * (y[i].abs() - theta).max(0.0))
                }
            }
            FeasibleSet::L2Ball { radius, .. } => {
                let norm = y.norm();
                if norm <= radius {
                    y.clone()
                } else {
                    y * (radius / norm)
                }
            }
            FeasibleSet::Simplex { radius, .. } => {
                let theta = simplex_threshold(y.as_slice(), radius);
                Vector::from_fn(y.len(), |i, _| (y[i] - theta).max(0.0))
            }
            FeasibleSet::Box { lo, hi, .. } => Vector::from_fn(y.len(), |i, _| y[i].clamp(lo, hi)),
        })
    }

    /// Membership test with additive tolerance on the defining inequalities.
    pub fn contains(&self, v: &Vector, tol: f64) -> bool {
        if v.len() != self.dim() || !v.iter().all(|x| x.is_finite()) {
            return false;
        }
        match *self {
            FeasibleSet::L1Ball { radius, .. } => v.iter().map(|x| x.abs()).sum::<f64>() <= radius + tol,
            FeasibleSet::L2Ball { radius, .. } => v.norm() <= radius + tol,
            FeasibleSet::Simplex { radius, .. } => {
                v.iter().all(|&x| x >= -tol) && (v.sum() - radius).abs() <= tol
            }
            FeasibleSet::Box { lo, hi, .. } => v.iter().all(|&x| x >= lo - tol && x <= hi + tol),
        }
    }

    /// Uniform-ish random feasible point, for tests and experiment starts.
    pub fn sample_point(&self, rng: &mut impl rand::Rng) -> Vector {
        let dim = self.dim();
        let raw = Vector::from_fn(dim, |_, _| rng.random_range(-1.0..1.0));
        match *self {
            FeasibleSet::L1Ball { radius, .. } => {
                let scaled = &raw * (radius * rng.random_range(0.0..1.0));
                self.project(&scaled).expect("finite input")
            }
            FeasibleSet::L2Ball { radius, .. } => {
                let norm = raw.norm().max(1e-12);
                &raw * (radius * rng.random_range(0.0..1.0f64).powf(1.0 / dim as f64) / norm)
            }
            FeasibleSet::Simplex { .. } => {
                let positive = raw.map(|v| v.abs() + 1e-12);
                self.project(&positive).expect("finite input")
            }
            FeasibleSet::Box { lo, hi, .. } => Vector::from_fn(dim, |_, _| rng.random_range(lo..hi)),
        }
    }
}

/// Threshold for projecting `y` onto `{x >= 0, sum x = radius}` by the
/// O(d log d) sort-and-scan rule.
fn simplex_threshold(y: &[f64], radius: f64) -> f64 {
    let mut sorted: Vec<f64> = y.to_vec();
    sorted.sort_by(|a, b| b.partial_cmp(a).expect("finite entries"));
    let mut cumsum = 0.0;
    let mut theta = 0.0;
    for (j, &v) in sorted.iter().enumerate() {
        cumsum += v;
        let candidate = (cumsum - radius) / (j as f64 + 1.0);
        if v - candidate > 0.0 {
            theta = candidate;
        } else {
            break;
        }
    }
    theta
}

/// Pluggable linear minimization used by the inexact conditional gradient loop.
pub trait Lmo {
    /// Return a feasible point whose objective `<g, v>` exceeds the exact
    /// minimum by at most `slack`.
    fn minimize(&self, set: &FeasibleSet, g: &Vector, slack: f64) -> Result<Vector>;
}

/// The exact oracle (`slack` is accepted and ignored).
#[derive(Debug, Clone, Copy, Default)]
pub struct ExactLmo;

impl Lmo for ExactLmo {
    fn minimize(&self, set: &FeasibleSet, g: &Vector, slack: f64) -> Result<Vector> {
        set.lmo_approx(g, slack)
    }
}

/// Deterministic adversarial oracle that consumes as much of the admissible
/// slack as it can by sliding from the exact vertex toward a second feasible
/// point. Used to exercise delta-robustness of the inexact CG bound.
#[derive(Debug, Clone, Copy, Default)]
pub struct AdversarialLmo;

impl Lmo for AdversarialLmo {
    fn minimize(&self, set: &FeasibleSet, g: &Vector, slack: f64) -> Result<Vector> {
        let exact = set.lmo(g)?;
        if slack <= 0.0 {
            return Ok(exact);
        }
        // worst feasible direction: the maximizer of <g, .>
        let worst = set.lmo(&(-g))?;
        let spread = g.dot(&(&worst - &exact));
        if spread <= 0.0 {
            return Ok(exact);
        }
        let t = (slack / spread).min(1.0);
        Ok(&exact + (&worst - &exact) * t)
    }
}
