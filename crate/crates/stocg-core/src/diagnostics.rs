//! Exact-information stationarity measures and convergence diagnostics.
//!
//! Everything here consumes exact evaluators and projections; the solvers never
//! read these quantities back into their update rules.

use crate::composition::CompositionProblem;
use crate::error::{Error, Result};
use crate::sets::{FeasibleSet, Vector};
use serde::{Deserialize, Serialize};

/// Gradient mapping `beta * (x - proj(x - g / beta))`.
pub fn gradient_mapping(set: &FeasibleSet, x: &Vector, g: &Vector, beta: f64) -> Result<Vector> {
    if beta <= 0.0 {
        return Err(Error::contract("gradient mapping needs beta > 0"));
    }
    let p = set.project(&(x - g / beta))?;
    Ok((x - p) * beta)
}

/// Frank-Wolfe gap `max_y <g, x - y> = <g, x - lmo(g)>`; nonnegative for feasible `x`.
pub fn fw_gap(set: &FeasibleSet, x: &Vector, g: &Vector) -> Result<f64> {
    let v = set.lmo(g)?;
    Ok(g.dot(&(x - v)))
}

/// Optimal value `eta(x, z) = min_y <z, y - x> + (beta/2)||y - x||^2 <= 0`,
/// computed exactly via the projection formula.
pub fn eta(set: &FeasibleSet, x: &Vector, z: &Vector, beta: f64) -> Result<f64> {
    if beta <= 0.0 {
        return Err(Error::contract("eta needs beta > 0"));
    }
    let y_star = set.project(&(x - z / beta))?;
    let diff = &y_star - x;
    Ok(z.dot(&diff) + 0.5 * beta * diff.norm_squared())
}

/// Lipschitz constant of the gradient of `eta` in `(x, z)` jointly,
/// `2 sqrt((1 + beta)^2 + (1 + 1/(2 beta))^2)`.
pub fn eta_grad_lipschitz(beta: f64) -> f64 {
    2.0 * ((1.0 + beta).powi(2) + (1.0 + 0.5 / beta).powi(2)).sqrt()
}

/// Smoothness constants of the composition chain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChainConstants {
    /// `L_{grad F_i}` for each tail composition `F_i = f_i ∘ ... ∘ f_T`;
    /// index 0 is the full objective.
    pub lip_grad_tail: Vec<f64>,
    /// Chain-mismatch constants `C_2..C_T` (empty for T = 1).
    pub c: Vec<f64>,
}

impl ChainConstants {
    pub fn lip_grad_objective(&self) -> f64 {
        self.lip_grad_tail[0]
    }

    /// `C_j` for `2 <= j <= T`.
    pub fn c_j(&self, j: usize) -> f64 {
        self.c[j - 2]
    }
}

/// Compute `L_{grad F_i}` and the `C_j` chain from per-level Lipschitz metadata.
pub fn chain_constants(problem: &CompositionProblem) -> Result<ChainConstants> {
    let depth = problem.depth();
    let lf: Vec<f64> = problem.levels.iter().map(|l| l.lip_value).collect();
    let lg: Vec<f64> = problem.levels.iter().map(|l| l.lip_grad).collect();
    if lf.iter().chain(&lg).any(|v| !v.is_finite()) {
        return Err(Error::config(
            "chain constants need finite per-level Lipschitz metadata",
        ));
    }

    // L_{grad F_i} = sum_{j=i}^T [ L_{grad f_j} prod_{l=i}^{j-1} L_{f_l} prod_{l=j+1}^T L_{f_l}^2 ]
    // with 1-based level indices.
    let mut lip_grad_tail = Vec::with_capacity(depth);
    for i in 1..=depth {
        let mut total = 0.0;
        for j in i..=depth {
            let mut term = lg[j - 1];
            for l in i..j {
                term *= lf[l - 1];
            }
            for l in (j + 1)..=depth {
                term *= lf[l - 1] * lf[l - 1];
            }
            total += term;
        }
        lip_grad_tail.push(total);
    }

    // R_1 = L_{grad f_1} L_{f_2} ... L_{f_T};
    // R_j = (prod_{l<j} L_{f_l}) L_{grad f_j} (prod_{l>j} L_{f_l}) / L_{f_j}, 2 <= j <= T-1.
    let r = |j: usize| -> f64 {
        if j == 1 {
            let mut v = lg[0];
            for l in 2..=depth {
                v *= lf[l - 1];
            }
            v
        } else {
            let mut v = lg[j - 1];
            for l in 1..j {
                v *= lf[l - 1];
            }
            for l in (j + 1)..=depth {
                v *= lf[l - 1];
            }
            v / lf[j - 1]
        }
    };

    // C_2 = R_1; C_j = sum_{i=1}^{j-2} R_i prod_{l=i+1}^{j-1} L_{f_l}, 3 <= j <= T.
    let mut c = Vec::new();
    for j in 2..=depth {
        if j == 2 {
            c.push(r(1));
        } else {
            let mut total = 0.0;
            for i in 1..=(j - 2) {
                let mut term = r(i);
                for l in (i + 1)..j {
                    term *= lf[l - 1];
                }
                total += term;
            }
            c.push(total);
        }
    }

    Ok(ChainConstants { lip_grad_tail, c })
}

/// Weights of the merit function
/// `W(x, z, u) = F(x) - F* - eta(x, z) + alpha ||grad F(x) - z||^2 + sum_i gamma_i ||f_i(u_{i+1}) - u_i||^2`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeritConfig {
    pub beta: f64,
    pub alpha: f64,
    pub gamma: Vec<f64>,
    pub lip_grad_objective: f64,
}

impl MeritConfig {
    /// Default weights: `alpha = beta / (20 L^2)`, `gamma_1 = beta/2`,
    /// `gamma_j = (2 alpha + 1/(4 alpha L^2)) (T-1) C_j^2 + beta/2` for `j >= 2`.
    pub fn standard(beta: f64, constants: &ChainConstants, depth: usize) -> Result<Self> {
        if beta <= 0.0 {
            return Err(Error::config("merit beta must be positive"));
        }
        let l = constants.lip_grad_objective();
        if l.is_nan() || l <= 0.0 {
            return Err(Error::config("merit weights need a positive L_grad_F"));
        }
        let alpha = beta / (20.0 * l * l);
        let mut gamma = vec![beta / 2.0];
        for j in 2..=depth {
            let cj = constants.c_j(j);
            gamma.push((2.0 * alpha + 1.0 / (4.0 * alpha * l * l)) * (depth as f64 - 1.0) * cj * cj + beta / 2.0);
        }
        Ok(MeritConfig {
            beta,
            alpha,
            gamma,
            lip_grad_objective: l,
        })
    }
}

/// Evaluate the merit function at a solver state `(x, z, u)`.
///
/// `u` holds the inner-value estimates outermost first (`u[i-1]` estimates
/// `f_i(u_{i+1})`, with `u_{T+1} = x`); pass an empty slice for variants that
/// carry no inner state, in which case the tracking sum is empty.
pub fn merit_value(
    cfg: &MeritConfig,
    problem: &CompositionProblem,
    set: &FeasibleSet,
    x: &Vector,
    z: &Vector,
    u: &[Vector],
) -> Result<f64> {
    let f_star = problem
        .f_star_lower_bound
        .ok_or_else(|| Error::config("merit value needs a known lower bound F*"))?;
    if !u.is_empty() && u.len() != problem.depth() {
        return Err(Error::contract(format!(
            "expected {} inner estimates (or none), got {}",
            problem.depth(),
            u.len()
        )));
    }
    let f = problem.exact_value(x)?;
    let grad = problem.exact_gradient(x)?;
    let eta_val = eta(set, x, z, cfg.beta)?;
    let mut w = f - f_star - eta_val + cfg.alpha * (&grad - z).norm_squared();
    if !u.is_empty() {
        for i in 1..=problem.depth() {
            let input = if i == problem.depth() {
                x.clone()
            } else {
                u[i].clone()
            };
            let fi = problem.levels[i - 1].value(&input);
            w += cfg.gamma[i - 1] * (&fi - &u[i - 1]).norm_squared();
        }
    }
    Ok(w)
}

/// Ordinary least squares fit of `log(mean)` against `log(N)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RateFit {
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
}

/// Fit a log-log rate through `(N, mean)` points. Requires three or more
/// distinct `N` and strictly positive means.
pub fn rate_fit(points: &[(f64, f64)]) -> Result<RateFit> {
    let mut distinct: Vec<f64> = points.iter().map(|p| p.0).collect();
    distinct.sort_by(|a, b| a.partial_cmp(b).expect("finite n"));
    distinct.dedup();
    if distinct.len() < 3 {
        return Err(Error::Data(format!(
            "rate fit needs >= 3 distinct N values, got {}",
            distinct.len()
        )));
    }
    if points.iter().any(|&(n, m)| n <= 0.0 || m <= 0.0 || !m.is_finite()) {
        return Err(Error::Data("rate fit needs positive finite means".into()));
    }
    let xs: Vec<f64> = points.iter().map(|p| p.0.ln()).collect();
    let ys: Vec<f64> = points.iter().map(|p| p.1.ln()).collect();
    Ok(ols(&xs, &ys))
}

/// Plain OLS helper (also used for quantile scaling checks).
pub fn ols(xs: &[f64], ys: &[f64]) -> RateFit {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let syy: f64 = ys.iter().map(|y| (y - my) * (y - my)).sum();
    let slope = if sxx == 0.0 { 0.0 } else { sxy / sxx };
    let intercept = my - slope * mx;
    let r_squared = if syy == 0.0 { 1.0 } else { (sxy * sxy) / (sxx * syy) };
    RateFit {
        slope,
        intercept,
        r_squared,
    }
}

/// Per-iteration diagnostics. Fields are `None` when the corresponding exact
/// quantity was not computed at that iteration; serialization keeps them
/// empty (CSV) or null (JSON), never zero.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub k: usize,
    pub tau: Option<f64>,
    pub t_icg: Option<usize>,
    pub grad_map_sq: Option<f64>,
    pub fw_gap: Option<f64>,
    pub z_err_sq: Option<f64>,
    /// `||f_i(u_{i+1}) - u_i||^2` per tracked level, outermost first.
    pub inner_err_sq: Vec<Option<f64>>,
    pub h_gap: Option<f64>,
    pub sfo: u64,
    pub lmo: u64,
}

impl TraceRecord {
    /// Column header for a `depth`-level problem:
    /// `k,tau,t_icg,grad_map_sq,fw_gap,z_err_sq,inner_err_1..inner_err_T,H_gap,sfo,lmo`.
    pub fn csv_header(depth: usize) -> String {
        let mut cols = vec![
            "k".to_string(),
            "tau".to_string(),
            "t_icg".to_string(),
            "grad_map_sq".to_string(),
            "fw_gap".to_string(),
            "z_err_sq".to_string(),
        ];
        for i in 1..=depth {
            cols.push(format!("inner_err_{i}"));
        }
        cols.push("H_gap".to_string());
        cols.push("sfo".to_string());
        cols.push("lmo".to_string());
        cols.join(",")
    }

    pub fn csv_row(&self, depth: usize) -> String {
        fn opt_f(v: Option<f64>) -> String {
            v.map(|x| x.to_string()).unwrap_or_default()
        }
        let mut cols = vec![
            self.k.to_string(),
            opt_f(self.tau),
            self.t_icg.map(|t| t.to_string()).unwrap_or_default(),
            opt_f(self.grad_map_sq),
            opt_f(self.fw_gap),
            opt_f(self.z_err_sq),
        ];
        for i in 0..depth {
            cols.push(opt_f(self.inner_err_sq.get(i).copied().flatten()));
        }
        cols.push(opt_f(self.h_gap));
        cols.push(self.sfo.to_string());
        cols.push(self.lmo.to_string());
        cols.join(",")
    }
}
