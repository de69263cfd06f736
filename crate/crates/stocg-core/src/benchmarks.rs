//! Concrete problem instances with known structure: constrained quadratics,
//! a two-level synthetic with a linear inner map, and the three-level
//! mean-deviation risk objective over sparse phase-retrieval data.

use crate::composition::{
    CompositionProblem, LevelSampler, Matrix, NoiseModel, SmoothMap, StochasticOracle, Vector,
};
use crate::error::{Error, Result};
use crate::sets::FeasibleSet;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use std::sync::Arc;

/// Registry names understood by [`build`].
pub const REGISTRY: [&str; 4] = ["quadbox", "quadball", "twolevel", "meandev"];

/// Benchmark parameters. Unknown fields error out so config files stay honest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BenchParams {
    pub dim: usize,
    /// Additive-Gaussian oracle noise (ignored by `meandev`, whose noise is
    /// data resampling).
    pub sigma_value: f64,
    pub sigma_jacobian: f64,
    pub zero_noise: bool,
    /// `twolevel`: spectral spread of the linear inner map.
    pub conditioning: f64,
    /// `twolevel`: weight of the quartic term in the outer scalar.
    pub quartic_weight: f64,
    /// `meandev`: risk-aversion weight.
    pub rho: f64,
    /// `meandev`: smoothing added under the square root.
    pub smoothing: f64,
    /// `meandev`: std of the observation noise in the planted model.
    pub data_noise_std: f64,
    /// `meandev`: L1 radius as a multiple of `||x*||_1`.
    pub l1_radius_factor: f64,
    /// `meandev`: size of the frozen empirical measure used as ground truth.
    pub frozen_samples: usize,
    /// `meandev`: seed of the frozen measure (distinct from run seeds).
    pub data_seed: u64,
}

impl Default for BenchParams {
    fn default() -> Self {
        BenchParams {
            dim: 5,
            sigma_value: 1.0,
            sigma_jacobian: 1.0,
            zero_noise: false,
            conditioning: 4.0,
            quartic_weight: 0.1,
            rho: 1.0,
            smoothing: 1e-2,
            data_noise_std: 0.1,
            l1_radius_factor: 1.5,
            frozen_samples: 10_000,
            data_seed: 7_345_991,
        }
    }
}

impl BenchParams {
    fn noise_model(&self, depth: usize) -> Result<NoiseModel> {
        if self.zero_noise {
            Ok(NoiseModel::none())
        } else {
            NoiseModel::gaussian_uniform(depth, self.sigma_value, self.sigma_jacobian)
        }
    }
}

/// A fully wired benchmark: problem, oracle, and the default set and start.
pub struct BuiltBenchmark {
    pub problem: Arc<CompositionProblem>,
    pub oracle: StochasticOracle,
    pub set: FeasibleSet,
    pub x0: Vector,
}

/// Build a registry benchmark. `set_override` replaces the default constraint
/// set (same dimension required); `seed` seeds the oracle streams.
pub fn build(
    name: &str,
    params: &BenchParams,
    set_override: Option<&str>,
    seed: u64,
) -> Result<BuiltBenchmark> {
    let mut built = match name {
        "quadbox" => {
            let spec = QuadraticSpec::identity_box(params.dim)?;
            build_quadratic(&spec, params, seed)?
        }
        "quadball" => {
            let spec = QuadraticSpec::indefinite_ball(params.dim)?;
            build_quadratic(&spec, params, seed)?
        }
        "twolevel" => build_two_level(params.dim, params.conditioning, params, seed)?,
        "meandev" => {
            let spec = MeanDeviationSpec::from_params(params)?;
            build_mean_deviation(&spec, seed)?
        }
        _ => {
            return Err(Error::config(format!(
                "unknown benchmark `{name}`; expected one of {REGISTRY:?}"
            )))
        }
    };
    if let Some(spec) = set_override {
        let set = FeasibleSet::parse(spec, built.problem.ambient_dim())?;
        built.x0 = set.project(&built.x0)?;
        built.set = set;
    }
    Ok(built)
}

// ---------------------------------------------------------------------------
// quadratics

/// One-level quadratic `F(x) = 0.5 x' Q x + c' x` over a chosen set.
#[derive(Debug, Clone)]
pub struct QuadraticSpec {
    pub q: Matrix,
    pub c: Vector,
    pub set: FeasibleSet,
    pub x0: Vector,
    pub f_star_lower_bound: f64,
}

/// Largest point norm over a set, for Lipschitz metadata.
fn max_point_norm(set: &FeasibleSet) -> f64 {
    match *set {
        FeasibleSet::L1Ball { radius, .. }
        | FeasibleSet::L2Ball { radius, .. }
        | FeasibleSet::Simplex { radius, .. } => radius,
        FeasibleSet::Box { dim, lo, hi } => lo.abs().max(hi.abs()) * (dim as f64).sqrt(),
    }
}

fn spectral_norm_symmetric(q: &Matrix) -> f64 {
    q.clone()
        .symmetric_eigen()
        .eigenvalues
        .iter()
        .fold(0.0f64, |acc, e| acc.max(e.abs()))
}

impl QuadraticSpec {
    pub fn new(q: Matrix, c: Vector, set: FeasibleSet, x0: Vector) -> Result<Self> {
        let dim = set.dim();
        if q.nrows() != dim || q.ncols() != dim || c.len() != dim || x0.len() != dim {
            return Err(Error::config("quadratic spec dimensions disagree"));
        }
        if (&q - q.transpose()).norm() > 1e-12 * q.norm().max(1.0) {
            return Err(Error::config("quadratic matrix must be symmetric"));
        }
        let r = max_point_norm(&set);
        let qn = spectral_norm_symmetric(&q);
        let f_star_lower_bound = -(0.5 * qn * r * r + c.norm() * r);
        let x0 = set.project(&x0)?;
        Ok(QuadraticSpec {
            q,
            c,
            set,
            x0,
            f_star_lower_bound,
        })
    }

    /// `Q = I`, `c = 0` on the unit box: unique stationary point at the origin.
    pub fn identity_box(dim: usize) -> Result<Self> {
        let set = FeasibleSet::boxed(dim, -1.0, 1.0);
        let mut spec = Self::new(
            Matrix::identity(dim, dim),
            Vector::zeros(dim),
            set,
            Vector::from_element(dim, 1.0),
        )?;
        spec.f_star_lower_bound = 0.0;
        Ok(spec)
    }

    /// Indefinite `Q = diag(1, -1, 1, ...)` on the unit ball.
    pub fn indefinite_ball(dim: usize) -> Result<Self> {
        if dim < 2 {
            return Err(Error::config("indefinite quadratic needs dim >= 2"));
        }
        let q = Matrix::from_fn(dim, dim, |i, j| {
            if i == j {
                if i.is_multiple_of(2) {
                    1.0
                } else {
                    -1.0
                }
            } else {
                0.0
            }
        });
        let set = FeasibleSet::l2_ball(dim, 1.0);
        let mut spec = Self::new(q, Vector::zeros(dim), set, Vector::from_element(dim, 0.5))?;
        // min of 0.5 x' Q x over the unit ball is -0.5 (pure negative mode)
        spec.f_star_lower_bound = -0.5;
        Ok(spec)
    }
}

pub fn build_quadratic(spec: &QuadraticSpec, params: &BenchParams, seed: u64) -> Result<BuiltBenchmark> {
    let dim = spec.set.dim();
    let r = max_point_norm(&spec.set);
    let lip_grad = spectral_norm_symmetric(&spec.q);
    let lip_value = lip_grad * r + spec.c.norm();

    let (qv, cv) = (spec.q.clone(), spec.c.clone());
    let value = Arc::new(move |x: &Vector| {
        Vector::from_vec(vec![0.5 * x.dot(&(&qv * x)) + cv.dot(x)])
    });
    let (qj, cj) = (spec.q.clone(), spec.c.clone());
    let jacobian_t = Arc::new(move |x: &Vector| {
        let g = &qj * x + &cj;
        Matrix::from_fn(g.len(), 1, |i, _| g[i])
    });
    let level = SmoothMap::new(dim, 1, value, jacobian_t, lip_value, lip_grad);
    let problem = Arc::new(CompositionProblem::new(
        vec![level],
        Some(spec.f_star_lower_bound),
    )?);
    let oracle = StochasticOracle::new(problem.clone(), params.noise_model(1)?, seed)?;
    Ok(BuiltBenchmark {
        problem,
        oracle,
        set: spec.set.clone(),
        x0: spec.x0.clone(),
    })
}

// ---------------------------------------------------------------------------
// two-level synthetic

/// `F = f_1(A x + b)` with `f_1(y) = 0.5 y' S y + (lambda/4) ||y||^4`,
/// `S = diag(+1, -1, ...)`: the linear inner map isolates linearization
/// effects, the outer scalar is smooth and nonconvex with known constants.
pub fn build_two_level(
    dim: usize,
    conditioning: f64,
    params: &BenchParams,
    seed: u64,
) -> Result<BuiltBenchmark> {
    if dim < 2 {
        return Err(Error::config("twolevel needs dim >= 2"));
    }
    if conditioning < 1.0 {
        return Err(Error::config("conditioning must be >= 1"));
    }
    let lambda = params.quartic_weight;
    if lambda <= 0.0 {
        return Err(Error::config("quartic weight must be positive"));
    }

    // A = diag(geometric from 1 to conditioning), b alternating
    let diag: Vec<f64> = (0..dim)
        .map(|i| conditioning.powf(i as f64 / (dim - 1) as f64))
        .collect();
    let b = Vector::from_fn(dim, |i, _| if i % 2 == 0 { 0.1 } else { -0.1 });
    let set = FeasibleSet::l2_ball(dim, 1.0);

    let lip_f2 = conditioning;
    // image bound of the set under the inner map
    let image_bound = lip_f2 * 1.0 + b.norm();

    let (dv, bv) = (diag.clone(), b.clone());
    let inner_value = Arc::new(move |x: &Vector| {
        Vector::from_fn(x.len(), |i, _| dv[i] * x[i] + bv[i])
    });
    let dj = diag.clone();
    let inner_jac = Arc::new(move |x: &Vector| {
        Matrix::from_fn(x.len(), x.len(), |i, j| if i == j { dj[i] } else { 0.0 })
    });
    let inner = SmoothMap::new(dim, dim, inner_value, inner_jac, lip_f2, 0.0);

    let sign = |i: usize| if i.is_multiple_of(2) { 1.0 } else { -1.0 };
    let outer_value = Arc::new(move |y: &Vector| {
        let quad: f64 = y.iter().enumerate().map(|(i, v)| 0.5 * sign(i) * v * v).sum();
        let nsq = y.norm_squared();
        Vector::from_vec(vec![quad + 0.25 * lambda * nsq * nsq])
    });
    let outer_jac = Arc::new(move |y: &Vector| {
        let nsq = y.norm_squared();
        Matrix::from_fn(y.len(), 1, |i, _| sign(i) * y[i] + lambda * nsq * y[i])
    });
    let lip_grad_f1 = 1.0 + 3.0 * lambda * image_bound * image_bound;
    let lip_f1 = image_bound + lambda * image_bound.powi(3);
    let outer = SmoothMap::new(dim, 1, outer_value, outer_jac, lip_f1, lip_grad_f1);

    // f_1(y) >= -0.5 ||y||^2 + (lambda/4) ||y||^4 >= -1/(4 lambda)
    let f_star = -1.0 / (4.0 * lambda);
    let problem = Arc::new(CompositionProblem::new(vec![outer, inner], Some(f_star))?);
    let oracle = StochasticOracle::new(problem.clone(), params.noise_model(2)?, seed)?;
    let x0 = set.project(&Vector::from_element(dim, 1.0))?;
    Ok(BuiltBenchmark {
        problem,
        oracle,
        set,
        x0,
    })
}

// ---------------------------------------------------------------------------
// mean-deviation risk objective

/// Specification of the three-level mean-deviation instance.
///
/// Data follows the planted single-index model `b = <a, x*>^2 + zeta` with
/// standard Gaussian inputs `a`. Population expectations are replaced by a
/// frozen empirical measure (the ground truth for exact evaluators); the
/// stochastic oracle resamples one data point from that measure per draw, so
/// oracle unbiasedness holds exactly with respect to the frozen objective.
///
/// The classical form of this objective maximizes `mean - deviation`; the levels here carry
/// the negated (minimization) form, so the outer level computes
/// `rho * sqrt(y_2 + smoothing) - y_1`.
#[derive(Debug, Clone)]
pub struct MeanDeviationSpec {
    pub dim: usize,
    pub rho: f64,
    pub smoothing: f64,
    pub noise_std: f64,
    pub x_star: Vector,
    pub l1_radius: f64,
    pub frozen_samples: usize,
    pub data_seed: u64,
}

impl MeanDeviationSpec {
    pub fn from_params(params: &BenchParams) -> Result<Self> {
        let dim = params.dim;
        if dim < 2 {
            return Err(Error::config("meandev needs dim >= 2"));
        }
        // planted sparse vector: ceil(dim/4) alternating entries of 0.3; the
        // modest magnitude keeps the quartic loss tails desk-scale
        let nnz = dim.div_ceil(4).max(1);
        let x_star = Vector::from_fn(dim, |i, _| {
            if i < nnz {
                if i.is_multiple_of(2) {
                    0.3
                } else {
                    -0.3
                }
            } else {
                0.0
            }
        });
        let l1_norm: f64 = x_star.iter().map(|v| v.abs()).sum();
        let spec = MeanDeviationSpec {
            dim,
            rho: params.rho,
            smoothing: params.smoothing,
            noise_std: params.data_noise_std,
            x_star,
            l1_radius: params.l1_radius_factor * l1_norm,
            frozen_samples: params.frozen_samples,
            data_seed: params.data_seed,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.rho <= 0.0 || self.smoothing <= 0.0 {
            return Err(Error::config("meandev needs rho > 0 and smoothing > 0"));
        }
        if self.frozen_samples == 0 {
            return Err(Error::config("meandev needs a nonempty frozen measure"));
        }
        let l1: f64 = self.x_star.iter().map(|v| v.abs()).sum();
        if l1 > self.l1_radius {
            return Err(Error::config(
                "planted vector must lie inside the L1 constraint",
            ));
        }
        Ok(())
    }
}

/// Frozen data set, shared immutably between evaluators and samplers.
struct MeanDevData {
    /// Row s holds input a_s.
    a: Matrix,
    b: Vector,
    rho: f64,
    smoothing: f64,
}

impl MeanDevData {
    fn generate(spec: &MeanDeviationSpec) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(spec.data_seed);
        let n = spec.frozen_samples;
        // unit-variance bounded inputs; the quartic per-sample loss keeps all
        // moments desk-scale only when the inputs have bounded support
        let half_width = 3.0f64.sqrt();
        let a = Matrix::from_fn(n, spec.dim, |_, _| rng.random_range(-half_width..half_width));
        let b = Vector::from_fn(n, |s, _| {
            let q: f64 = a.row(s).transpose().dot(&spec.x_star);
            q * q + spec.noise_std * rng.sample::<f64, _>(StandardNormal)
        });
        MeanDevData {
            a,
            b,
            rho: spec.rho,
            smoothing: spec.smoothing,
        }
    }

    fn len(&self) -> usize {
        self.b.len()
    }

    /// Per-sample loss `U_s(x) = (b_s - <a_s, x>^2)^2` and its gradient.
    fn loss(&self, s: usize, x: &Vector) -> f64 {
        let q = self.a.row(s).transpose().dot(x);
        let e = self.b[s] - q * q;
        e * e
    }

    fn loss_grad(&self, s: usize, x: &Vector) -> Vector {
        let a_s = self.a.row(s).transpose();
        let q = a_s.dot(x);
        let e = self.b[s] - q * q;
        a_s * (-4.0 * e * q)
    }

    fn mean_loss(&self, x: &Vector) -> f64 {
        let q = &self.a * x;
        let n = self.len() as f64;
        (0..self.len())
            .map(|s| {
                let e = self.b[s] - q[s] * q[s];
                e * e
            })
            .sum::<f64>()
            / n
    }

    fn mean_loss_grad(&self, x: &Vector) -> Vector {
        let q = &self.a * x;
        // sum_s -4 e_s q_s a_s / n  ==  A' w with w_s = -4 e_s q_s / n
        let n = self.len() as f64;
        let w = Vector::from_fn(self.len(), |s, _| {
            let e = self.b[s] - q[s] * q[s];
            -4.0 * e * q[s] / n
        });
        self.a.tr_mul(&w)
    }

    /// Second-moment level: value `E[(z - U_s(x))^2]` and its partials.
    fn mean_sq_dev(&self, z: f64, x: &Vector) -> f64 {
        let q = &self.a * x;
        let n = self.len() as f64;
        (0..self.len())
            .map(|s| {
                let e = self.b[s] - q[s] * q[s];
                let d = z - e * e;
                d * d
            })
            .sum::<f64>()
            / n
    }

    fn mean_sq_dev_partials(&self, z: f64, x: &Vector) -> (f64, Vector) {
        let q = &self.a * x;
        let n = self.len() as f64;
        let mut dz = 0.0;
        let w = Vector::from_fn(self.len(), |s, _| {
            let e = self.b[s] - q[s] * q[s];
            let d = z - e * e;
            dz += 2.0 * d;
            // d/dx of (z - U_s)^2 = -2 (z - U_s) grad U_s, with grad U_s = -4 e q a_s
            8.0 * d * e * q[s] / n
        });
        (dz / n, self.a.tr_mul(&w))
    }

    /// Smoothed square root with a linear extension below zero, keeping the
    /// outer level defined and gradient-Lipschitz when inner estimates drift
    /// negative.
    fn smooth_sqrt(&self, t: f64) -> f64 {
        if t >= 0.0 {
            (t + self.smoothing).sqrt()
        } else {
            self.smoothing.sqrt() + t / (2.0 * self.smoothing.sqrt())
        }
    }

    fn smooth_sqrt_deriv(&self, t: f64) -> f64 {
        if t >= 0.0 {
            0.5 / (t + self.smoothing).sqrt()
        } else {
            0.5 / self.smoothing.sqrt()
        }
    }

    fn outer_value(&self, y1: f64, y2: f64) -> f64 {
        self.rho * self.smooth_sqrt(y2) - y1
    }
}

pub fn build_mean_deviation(spec: &MeanDeviationSpec, seed: u64) -> Result<BuiltBenchmark> {
    spec.validate()?;
    let data = Arc::new(MeanDevData::generate(spec));
    let d = spec.dim;

    // coarse Lipschitz bounds on the region reachable from the L1 ball
    let r = spec.l1_radius;
    let (mut m_q, mut g_bound, mut h_bound, mut u_bound) = (0.0f64, 0.0f64, 0.0f64, 0.0f64);
    for s in 0..data.len() {
        let a_s = data.a.row(s).transpose();
        let a_inf = a_s.iter().fold(0.0f64, |acc, v| acc.max(v.abs()));
        let a_two = a_s.norm();
        let m = a_inf * r;
        let u = (data.b[s].abs() + m * m).powi(2);
        m_q = m_q.max(m);
        u_bound = u_bound.max(u);
        g_bound = g_bound.max(4.0 * (data.b[s].abs() + m * m) * m * a_two);
        h_bound = h_bound.max((4.0 * data.b[s].abs() + 12.0 * m * m) * a_two * a_two);
    }
    let z_bound = 2.0 * u_bound;
    let dev_scale = 2.0 * (z_bound + u_bound);

    // level 3: x -> (mean loss, x), dims d -> 1 + d
    let data3 = data.clone();
    let l3_value = Arc::new(move |x: &Vector| {
        let mut out = Vector::zeros(x.len() + 1);
        out[0] = data3.mean_loss(x);
        out.rows_mut(1, x.len()).copy_from(x);
        out
    });
    let data3j = data.clone();
    let l3_jac = Arc::new(move |x: &Vector| {
        let g = data3j.mean_loss_grad(x);
        let mut jac = Matrix::zeros(x.len(), x.len() + 1);
        jac.column_mut(0).copy_from(&g);
        for i in 0..x.len() {
            jac[(i, i + 1)] = 1.0;
        }
        jac
    });
    let level3 = SmoothMap::new(
        d,
        1 + d,
        l3_value,
        l3_jac,
        (g_bound * g_bound + 1.0).sqrt(),
        h_bound,
    );

    // level 2: (z, x) -> (z, mean (z - U)^2), dims 1 + d -> 2
    let data2 = data.clone();
    let l2_value = Arc::new(move |input: &Vector| {
        let z = input[0];
        let x = input.rows(1, input.len() - 1).into_owned();
        Vector::from_vec(vec![z, data2.mean_sq_dev(z, &x)])
    });
    let data2j = data.clone();
    let l2_jac = Arc::new(move |input: &Vector| {
        let z = input[0];
        let x = input.rows(1, input.len() - 1).into_owned();
        let (dz, dx) = data2j.mean_sq_dev_partials(z, &x);
        let mut jac = Matrix::zeros(input.len(), 2);
        jac[(0, 0)] = 1.0;
        jac[(0, 1)] = dz;
        jac.view_mut((1, 1), (x.len(), 1)).copy_from(&dx);
        jac
    });
    let lip_f2 = (1.0 + dev_scale * dev_scale * (1.0 + g_bound * g_bound)).sqrt();
    let lip_grad_f2 = 2.0 + 4.0 * g_bound + 2.0 * g_bound * g_bound + dev_scale * h_bound;
    let level2 = SmoothMap::new(1 + d, 2, l2_value, l2_jac, lip_f2, lip_grad_f2);

    // level 1: (y1, y2) -> rho * smooth_sqrt(y2) - y1  (negated for minimization)
    let data1 = data.clone();
    let l1_value = Arc::new(move |y: &Vector| Vector::from_vec(vec![data1.outer_value(y[0], y[1])]));
    let data1j = data.clone();
    let l1_jac = Arc::new(move |y: &Vector| {
        Matrix::from_vec(2, 1, vec![-1.0, data1j.rho * data1j.smooth_sqrt_deriv(y[1])])
    });
    let lip_f1 = (1.0 + spec.rho * spec.rho / (4.0 * spec.smoothing)).sqrt();
    let lip_grad_f1 = spec.rho / (4.0 * spec.smoothing.powf(1.5));
    let level1 = SmoothMap::new(2, 1, l1_value, l1_jac, lip_f1, lip_grad_f1);

    // F = rho sqrt(.) - mean loss >= -u_bound over the ball
    let problem = Arc::new(CompositionProblem::new(
        vec![level1, level2, level3],
        Some(-u_bound),
    )?);

    let mut oracle = StochasticOracle::new(problem.clone(), NoiseModel::none(), seed)?;

    // bootstrap samplers: one fresh index from the frozen measure per draw
    let ds = data.clone();
    let l3_sample_value = Arc::new(move |x: &Vector, rng: &mut ChaCha8Rng| {
        let s = rng.random_range(0..ds.len());
        let mut out = Vector::zeros(x.len() + 1);
        out[0] = ds.loss(s, x);
        out.rows_mut(1, x.len()).copy_from(x);
        out
    });
    let ds = data.clone();
    let l3_sample_jac = Arc::new(move |x: &Vector, rng: &mut ChaCha8Rng| {
        let s = rng.random_range(0..ds.len());
        let g = ds.loss_grad(s, x);
        let mut jac = Matrix::zeros(x.len(), x.len() + 1);
        jac.column_mut(0).copy_from(&g);
        for i in 0..x.len() {
            jac[(i, i + 1)] = 1.0;
        }
        jac
    });
    oracle.set_level_sampler(
        3,
        LevelSampler {
            value: l3_sample_value,
            jacobian_t: l3_sample_jac,
        },
    );

    let ds = data.clone();
    let l2_sample_value = Arc::new(move |input: &Vector, rng: &mut ChaCha8Rng| {
        let s = rng.random_range(0..ds.len());
        let z = input[0];
        let x = input.rows(1, input.len() - 1).into_owned();
        let dd = z - ds.loss(s, &x);
        Vector::from_vec(vec![z, dd * dd])
    });
    let ds = data.clone();
    let l2_sample_jac = Arc::new(move |input: &Vector, rng: &mut ChaCha8Rng| {
        let s = rng.random_range(0..ds.len());
        let z = input[0];
        let x = input.rows(1, input.len() - 1).into_owned();
        let dd = z - ds.loss(s, &x);
        let gu = ds.loss_grad(s, &x);
        let mut jac = Matrix::zeros(input.len(), 2);
        jac[(0, 0)] = 1.0;
        jac[(0, 1)] = 2.0 * dd;
        let dx = gu * (-2.0 * dd);
        jac.view_mut((1, 1), (x.len(), 1)).copy_from(&dx);
        jac
    });
    oracle.set_level_sampler(
        2,
        LevelSampler {
            value: l2_sample_value,
            jacobian_t: l2_sample_jac,
        },
    );

    let set = FeasibleSet::l1_ball(d, spec.l1_radius);
    // start on a vertex: the central region is nearly flat (per-sample
    // gradients carry a factor <a, x>), so a boundary start gives the run a
    // genuine descent phase; the origin itself is a fixed point of the
    // sampled dynamics
    let mut x0 = Vector::zeros(d);
    x0[0] = spec.l1_radius;
    Ok(BuiltBenchmark {
        problem,
        oracle,
        set,
        x0,
    })
}
