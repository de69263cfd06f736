//! Inexact conditional gradient subroutine for the quadratic subproblem
//! `H(y; x, z, beta) = <z, y - x> + (beta/2) ||y - x||^2` over a feasible set,
//! with exact line search and a per-step LMO slack schedule.

use crate::error::{Error, Result};
use crate::sets::{ExactLmo, FeasibleSet, Lmo, Vector};

/// Early-termination threshold on `||v - w||^2`; at that event the current
/// iterate already minimizes over the face the LMO can reach.
const DEGENERATE_STEP_SQ: f64 = 1e-14;

#[derive(Debug, Clone)]
pub struct IcgRequest {
    /// Center point; must be feasible.
    pub x: Vector,
    /// Gradient estimate defining the linear term.
    pub z: Vector,
    pub beta: f64,
    /// Number of LMO calls allowed (`t_k` in the outer schedule).
    pub budget: usize,
    /// LMO slack quality `delta >= 0`; scaled per step as `beta D^2 delta / (t+2)`.
    pub slack: f64,
}

impl IcgRequest {
    pub fn validate(&self, set: &FeasibleSet) -> Result<()> {
        if self.x.len() != set.dim() || self.z.len() != set.dim() {
            return Err(Error::contract("icg request dimensions do not match the set"));
        }
        if !(self.beta > 0.0 && self.beta.is_finite()) {
            return Err(Error::contract("icg beta must be positive and finite"));
        }
        if self.slack < 0.0 {
            return Err(Error::contract("icg slack must be nonnegative"));
        }
        if !set.contains(&self.x, 1e-9) {
            return Err(Error::contract("icg center must be feasible"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct IcgResult {
    /// Approximate subproblem minimizer, feasible by construction.
    pub w: Vector,
    /// LMO calls actually performed (== budget unless terminated early).
    pub lmo_calls: usize,
    /// Last inner dual gap `<grad H(w^t), w^t - v^t>`, if any call was made.
    pub final_dual_gap_estimate: Option<f64>,
}

/// Value of the quadratic model `H(y; x, z, beta)`.
pub fn subproblem_value(req: &IcgRequest, y: &Vector) -> f64 {
    let diff = y - &req.x;
    req.z.dot(&diff) + 0.5 * req.beta * diff.norm_squared()
}

/// Exact minimizer of `H` via the projection formula `proj(x - z / beta)`.
/// Test oracle and diagnostics only; solvers call [`run_icg`] instead.
pub fn exact_subproblem_solution(
    set: &FeasibleSet,
    x: &Vector,
    z: &Vector,
    beta: f64,
) -> Result<Vector> {
    if beta <= 0.0 {
        return Err(Error::contract("beta must be positive"));
    }
    set.project(&(x - z / beta))
}

/// Run the conditional gradient loop with the exact LMO.
pub fn run_icg(set: &FeasibleSet, req: &IcgRequest) -> Result<IcgResult> {
    run_icg_with(set, req, &ExactLmo)
}

/// Run the conditional gradient loop with a pluggable LMO (`t = 0..budget-1`,
/// so `budget` counts LMO calls).
pub fn run_icg_with(set: &FeasibleSet, req: &IcgRequest, lmo: &impl Lmo) -> Result<IcgResult> {
    req.validate(set)?;
    let mut w = req.x.clone();
    let mut lmo_calls = 0;
    let mut final_gap = None;
    let d_sq = set.diameter() * set.diameter();

    for t in 0..req.budget {
        // grad H(w) = z + beta (w - x)
        let grad = &req.z + (&w - &req.x) * req.beta;
        if !grad.iter().all(|v| v.is_finite()) {
            return Err(Error::non_finite(0, "icg gradient became non-finite"));
        }
        let step_slack = req.beta * d_sq * req.slack / (t as f64 + 2.0);
        let v = lmo.minimize(set, &grad, step_slack)?;
        lmo_calls += 1;

        let dir = &v - &w;
        let dir_sq = dir.norm_squared();
        final_gap = Some(-grad.dot(&dir));
        if dir_sq <= DEGENERATE_STEP_SQ {
            break;
        }
        // exact line search on the quadratic, clamped to [0, 1]
        let mu = (-grad.dot(&dir) / (req.beta * dir_sq)).clamp(0.0, 1.0);
        w += dir * mu;
    }

    Ok(IcgResult {
        w,
        lmo_calls,
        final_dual_gap_estimate: final_gap,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sets::AdversarialLmo;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn req(x: Vec<f64>, z: Vec<f64>, beta: f64, budget: usize, slack: f64) -> IcgRequest {
        IcgRequest {
            x: Vector::from_vec(x),
            z: Vector::from_vec(z),
            beta,
            budget,
            slack,
        }
    }

    #[test]
    fn subproblem_value_basics() {
        let r = req(vec![0.0, 0.0], vec![1.0, 0.0], 2.0, 0, 0.0);
        assert_eq!(subproblem_value(&r, &r.x), 0.0);
        // x=0, z=(1,0), beta=2, y=(1,1): <z,y> + (beta/2)||y||^2 = 1 + 2 = 3
        assert_eq!(subproblem_value(&r, &Vector::from_vec(vec![1.0, 1.0])), 3.0);
        let r0 = req(vec![0.5, 0.5], vec![0.0, 0.0], 3.0, 0, 0.0);
        let y = Vector::from_vec(vec![1.0, 1.0]);
        let d = (&y - &r0.x).norm_squared();
        assert_eq!(subproblem_value(&r0, &y), 1.5 * d);
    }

    #[test]
    fn zero_budget_returns_center() {
        let set = FeasibleSet::boxed(2, -1.0, 1.0);
        let r = req(vec![0.2, -0.3], vec![1.0, 1.0], 1.0, 0, 0.0);
        let out = run_icg(&set, &r).unwrap();
        assert_eq!(out.w, r.x);
        assert_eq!(out.lmo_calls, 0);
        assert!(out.final_dual_gap_estimate.is_none());
    }

    #[test]
    fn zero_gradient_keeps_center() {
        let set = FeasibleSet::l2_ball(3, 1.0);
        let r = req(vec![0.1, 0.0, -0.2], vec![0.0; 3], 1.0, 25, 0.0);
        let out = run_icg(&set, &r).unwrap();
        assert!((&out.w - &r.x).norm() < 1e-12, "H is minimized at the center");
    }

    #[test]
    fn exact_solution_cases() {
        let set = FeasibleSet::boxed(2, -100.0, 100.0);
        let x = Vector::from_vec(vec![1.0, 2.0]);
        let z = Vector::from_vec(vec![0.5, -0.5]);
        // interior optimum of a huge box: x - z / beta
        let sol = exact_subproblem_solution(&set, &x, &z, 2.0).unwrap();
        assert!((&sol - (&x - &z / 2.0)).norm() < 1e-12);
        // z = 0 keeps x
        let sol0 = exact_subproblem_solution(&set, &x, &Vector::zeros(2), 2.0).unwrap();
        assert_eq!(sol0, x);
        // l1 ball: project((3, 0)) = (1, 0)
        let l1 = FeasibleSet::l1_ball(2, 1.0);
        let sol1 = exact_subproblem_solution(
            &l1,
            &Vector::zeros(2),
            &Vector::from_vec(vec![-3.0, 0.0]),
            1.0,
        )
        .unwrap();
        assert!((&sol1 - Vector::from_vec(vec![1.0, 0.0])).norm() < 1e-12);
    }

    #[test]
    fn icg_gap_obeys_curvature_bound_on_l1_ball() {
        let set = FeasibleSet::l1_ball(2, 1.0);
        let r = req(vec![0.0, 0.0], vec![-1.0, 0.0], 1.0, 50, 0.0);
        let out = run_icg(&set, &r).unwrap();
        let star = exact_subproblem_solution(&set, &r.x, &r.z, r.beta).unwrap();
        let gap = subproblem_value(&r, &out.w) - subproblem_value(&r, &star);
        let d = set.diameter();
        assert!(gap >= -1e-12);
        assert!(gap <= 2.0 * r.beta * d * d / (out.lmo_calls as f64 + 2.0) + 1e-10);
    }

    #[test]
    fn icg_monotone_descent_and_feasible_iterates() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for set in [
            FeasibleSet::l1_ball(4, 1.0),
            FeasibleSet::l2_ball(4, 1.5),
            FeasibleSet::simplex(4, 1.0),
            FeasibleSet::boxed(4, -1.0, 0.5),
        ] {
            let x = set.sample_point(&mut rng);
            let z = Vector::from_fn(4, |_, _| rng.random_range(-2.0..2.0));
            let r = IcgRequest {
                x,
                z,
                beta: rng.random_range(0.3..3.0),
                budget: 1,
                slack: 0.0,
            };
            // re-run with growing budget, checking per-step monotonicity
            let mut last = subproblem_value(&r, &r.x);
            for budget in 1..=24 {
                let mut r_b = r.clone();
                r_b.budget = budget;
                let out = run_icg(&set, &r_b).unwrap();
                assert!(set.contains(&out.w, 1e-9));
                let h = subproblem_value(&r, &out.w);
                assert!(h <= last + 1e-12, "descent violated at budget {budget}");
                last = h;
            }
        }
    }

    #[test]
    fn adversarial_slack_still_meets_inflated_bound() {
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        let delta = 0.5;
        for _ in 0..20 {
            let set = FeasibleSet::simplex(5, 1.0);
            let x = set.sample_point(&mut rng);
            let z = Vector::from_fn(5, |_, _| rng.random_range(-1.0..1.0));
            let r = IcgRequest {
                x,
                z,
                beta: 1.0,
                budget: 32,
                slack: delta,
            };
            let out = run_icg_with(&set, &r, &AdversarialLmo).unwrap();
            let star = exact_subproblem_solution(&set, &r.x, &r.z, r.beta).unwrap();
            let gap = subproblem_value(&r, &out.w) - subproblem_value(&r, &star);
            let d = set.diameter();
            let bound = 2.0 * r.beta * d * d * (1.0 + delta) / (out.lmo_calls as f64 + 2.0);
            assert!(gap >= -1e-12 && gap <= bound + 1e-10, "gap {gap} bound {bound}");
        }
    }

    #[test]
    fn infeasible_center_is_rejected() {
        let set = FeasibleSet::l2_ball(2, 1.0);
        let r = req(vec![2.0, 0.0], vec![0.0, 0.0], 1.0, 3, 0.0);
        assert!(run_icg(&set, &r).is_err());
    }
}
