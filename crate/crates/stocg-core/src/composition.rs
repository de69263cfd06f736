//! Nested composition objectives `F = f_1 ∘ ... ∘ f_T` and their stochastic
//! first-order oracles.
//!
//! Derivatives are stored in the transposed-Jacobian orientation throughout:
//! for `f_i: R^{d_i} -> R^{d_{i-1}}` the matrix returned by [`SmoothMap::jacobian_t`]
//! has shape `d_i x d_{i-1}` (input dim by output dim), so the chain product
//! `J_T J_{T-1} ... J_1` collapses right-to-left into an ambient-dimension vector.

use crate::error::{Error, Result};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use std::sync::Arc;

pub type Vector = DVector<f64>;
pub type Matrix = DMatrix<f64>;

pub type ValueFn = Arc<dyn Fn(&Vector) -> Vector + Send + Sync>;
pub type JacobianTFn = Arc<dyn Fn(&Vector) -> Matrix + Send + Sync>;
/// Custom stochastic value sampler: (input point, stream) -> unbiased value draw.
pub type ValueSampler = Arc<dyn Fn(&Vector, &mut ChaCha8Rng) -> Vector + Send + Sync>;
/// Custom stochastic transposed-Jacobian sampler.
pub type JacobianSampler = Arc<dyn Fn(&Vector, &mut ChaCha8Rng) -> Matrix + Send + Sync>;

/// One level of the composition: a smooth map with exact evaluators and
/// Lipschitz metadata (`lip_value` for the map, `lip_grad` for its derivative,
/// both valid on the region the benchmarks state).
#[derive(Clone)]
pub struct SmoothMap {
    pub in_dim: usize,
    pub out_dim: usize,
    value: ValueFn,
    jacobian_t: JacobianTFn,
    pub lip_value: f64,
    pub lip_grad: f64,
}

impl SmoothMap {
    pub fn new(
        in_dim: usize,
        out_dim: usize,
        value: ValueFn,
        jacobian_t: JacobianTFn,
        lip_value: f64,
        lip_grad: f64,
    ) -> Self {
        SmoothMap {
            in_dim,
            out_dim,
            value,
            jacobian_t,
            lip_value,
            lip_grad,
        }
    }

    pub fn value(&self, y: &Vector) -> Vector {
        (self.value)(y)
    }

    /// Transposed Jacobian at `y`, shape `in_dim x out_dim`.
    pub fn jacobian_t(&self, y: &Vector) -> Matrix {
        (self.jacobian_t)(y)
    }
}

impl std::fmt::Debug for SmoothMap {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("SmoothMap")
            .field("in_dim", &self.in_dim)
            .field("out_dim", &self.out_dim)
            .field("lip_value", &self.lip_value)
            .field("lip_grad", &self.lip_grad)
            .finish()
    }
}

/// The full nested objective. `levels[0]` is the outermost map `f_1` (scalar
/// valued); `levels[T-1]` is the innermost map `f_T` acting on the ambient space.
#[derive(Clone, Debug)]
pub struct CompositionProblem {
    pub levels: Vec<SmoothMap>,
    /// Known lower bound on `F` over the feasible set, when available.
    pub f_star_lower_bound: Option<f64>,
}

impl CompositionProblem {
    pub fn new(levels: Vec<SmoothMap>, f_star_lower_bound: Option<f64>) -> Result<Self> {
        if levels.is_empty() {
            return Err(Error::config("a composition needs at least one level"));
        }
        if levels[0].out_dim != 1 {
            return Err(Error::config("the outermost level must be scalar valued"));
        }
        for i in 0..levels.len() - 1 {
            if levels[i].in_dim != levels[i + 1].out_dim {
                return Err(Error::config(format!(
                    "dimension chain broken between levels {} and {}: {} vs {}",
                    i + 1,
                    i + 2,
                    levels[i].in_dim,
                    levels[i + 1].out_dim
                )));
            }
        }
        Ok(CompositionProblem {
            levels,
            f_star_lower_bound,
        })
    }

    /// Number of levels `T`.
    pub fn depth(&self) -> usize {
        self.levels.len()
    }

    /// Ambient dimension `d` (input of the innermost level).
    pub fn ambient_dim(&self) -> usize {
        self.levels.last().expect("nonempty").in_dim
    }

    /// The dimension chain `d_0 = 1, d_1, ..., d_T = d`.
    pub fn dims(&self) -> Vec<usize> {
        let mut dims = vec![1];
        for level in &self.levels {
            dims.push(level.in_dim);
        }
        dims
    }

    fn check_ambient(&self, x: &Vector) -> Result<()> {
        if x.len() != self.ambient_dim() {
            return Err(Error::contract(format!(
                "expected ambient dimension {}, got {}",
                self.ambient_dim(),
                x.len()
            )));
        }
        Ok(())
    }

    /// Exact nested evaluation `F(x)`, innermost level first.
    pub fn exact_value(&self, x: &Vector) -> Result<f64> {
        self.check_ambient(x)?;
        let mut y = x.clone();
        for (idx, level) in self.levels.iter().enumerate().rev() {
            y = level.value(&y);
            ensure_finite_vec(&y, idx + 1, "exact value")?;
        }
        Ok(y[0])
    }

    /// Inputs seen by each level during exact evaluation: entry `i` (0-based)
    /// is the argument of `f_{i+1}`, so entry `T-1` is `x` itself.
    pub fn inner_inputs(&self, x: &Vector) -> Result<Vec<Vector>> {
        self.check_ambient(x)?;
        let depth = self.depth();
        let mut inputs = vec![Vector::zeros(0); depth];
        let mut y = x.clone();
        for idx in (0..depth).rev() {
            inputs[idx] = y.clone();
            if idx > 0 {
                y = self.levels[idx].value(&y);
                ensure_finite_vec(&y, idx + 1, "inner evaluation")?;
            }
        }
        Ok(inputs)
    }

    /// Exact gradient by the transposed-Jacobian chain, right-to-left.
    pub fn exact_gradient(&self, x: &Vector) -> Result<Vector> {
        let inputs = self.inner_inputs(x)?;
        let mut jacobians = Vec::with_capacity(self.depth());
        for (idx, level) in self.levels.iter().enumerate() {
            let jac = level.jacobian_t(&inputs[idx]);
            ensure_finite_mat(&jac, idx + 1, "exact jacobian")?;
            jacobians.push(jac);
        }
        Ok(chain_product(&jacobians))
    }
}

/// Collapse transposed Jacobians `[J_1, ..., J_T]` into `J_T ... J_1 e` where the
/// innermost factor is the `d_1 x 1` column of the outermost level. Every step is
/// a matrix-vector product; no intermediate matrix-matrix product is formed.
pub fn chain_product(jacobians_outer_first: &[Matrix]) -> Vector {
    let mut acc: Vector = jacobians_outer_first[0].column(0).into_owned();
    for jac in &jacobians_outer_first[1..] {
        acc = jac * acc;
    }
    acc
}

/// Additive noise attached to the default (exact-map) oracle path.
#[derive(Clone, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub enum NoiseModel {
    None,
    /// i.i.d. Gaussian noise, per coordinate on values and per entry on
    /// Jacobians; one std-dev pair per level.
    GaussianAdditive {
        sigma_value: Vec<f64>,
        sigma_jacobian: Vec<f64>,
    },
}

impl NoiseModel {
    pub fn none() -> Self {
        NoiseModel::None
    }

    pub fn gaussian(sigma_value: Vec<f64>, sigma_jacobian: Vec<f64>) -> Result<Self> {
        if sigma_value.len() != sigma_jacobian.len() {
            return Err(Error::config("noise sigma lists must have equal length"));
        }
        if sigma_value.iter().chain(&sigma_jacobian).any(|s| !s.is_finite() || *s < 0.0) {
            return Err(Error::config("noise sigmas must be finite and nonnegative"));
        }
        Ok(NoiseModel::GaussianAdditive {
            sigma_value,
            sigma_jacobian,
        })
    }

    /// Uniform sigma across all `depth` levels.
    pub fn gaussian_uniform(depth: usize, sigma_value: f64, sigma_jacobian: f64) -> Result<Self> {
        Self::gaussian(vec![sigma_value; depth], vec![sigma_jacobian; depth])
    }

    pub fn sigma_value(&self, level: usize) -> f64 {
        match self {
            NoiseModel::None => 0.0,
            NoiseModel::GaussianAdditive { sigma_value, .. } => sigma_value[level - 1],
        }
    }

    pub fn sigma_jacobian(&self, level: usize) -> f64 {
        match self {
            NoiseModel::None => 0.0,
            NoiseModel::GaussianAdditive { sigma_jacobian, .. } => sigma_jacobian[level - 1],
        }
    }
}

/// Optional per-level custom sampler pair replacing the exact-plus-Gaussian path.
#[derive(Clone)]
pub struct LevelSampler {
    pub value: ValueSampler,
    pub jacobian_t: JacobianSampler,
}

/// Per-level stochastic first-order oracle.
///
/// Value and Jacobian draws at each level consume structurally distinct
/// counter-based streams derived from `(master_seed, level, kind)`, so
/// independence holds by construction rather than by convention. An oracle is
/// stateful and must be confined to a single worker; replications clone it
/// with a derived seed via [`StochasticOracle::reseeded`].
#[derive(Clone)]
pub struct StochasticOracle {
    pub problem: Arc<CompositionProblem>,
    pub noise: NoiseModel,
    custom: Vec<Option<LevelSampler>>,
    value_streams: Vec<ChaCha8Rng>,
    jacobian_streams: Vec<ChaCha8Rng>,
    master_seed: u64,
}

/// Stream ids 0 and 1 are reserved (solver output index and spare); oracle
/// streams start at 2, value before Jacobian within a level.
fn stream_id(level: usize, jacobian: bool) -> u64 {
    2 + 2 * (level as u64 - 1) + jacobian as u64
}

pub const OUTPUT_INDEX_STREAM: u64 = 0;

impl StochasticOracle {
    pub fn new(problem: Arc<CompositionProblem>, noise: NoiseModel, master_seed: u64) -> Result<Self> {
        if let NoiseModel::GaussianAdditive { sigma_value, .. } = &noise {
            if sigma_value.len() != problem.depth() {
                return Err(Error::config(format!(
                    "noise model covers {} levels, problem has {}",
                    sigma_value.len(),
                    problem.depth()
                )));
            }
        }
        let custom = vec![None; problem.depth()];
        let mut oracle = StochasticOracle {
            problem,
            noise,
            custom,
            value_streams: Vec::new(),
            jacobian_streams: Vec::new(),
            master_seed,
        };
        oracle.seed_streams(master_seed);
        Ok(oracle)
    }

    fn seed_streams(&mut self, seed: u64) {
        let depth = self.problem.depth();
        self.master_seed = seed;
        self.value_streams = (1..=depth)
            .map(|level| {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                rng.set_stream(stream_id(level, false));
                rng
            })
            .collect();
        self.jacobian_streams = (1..=depth)
            .map(|level| {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                rng.set_stream(stream_id(level, true));
                rng
            })
            .collect();
    }

    /// Replace the sampler pair of one level (1-based) with a custom one.
    pub fn set_level_sampler(&mut self, level: usize, sampler: LevelSampler) {
        self.custom[level - 1] = Some(sampler);
    }

    /// Fresh oracle with identical structure and a new master seed.
    pub fn reseeded(&self, seed: u64) -> Self {
        let mut clone = self.clone();
        clone.seed_streams(seed);
        clone
    }

    pub fn master_seed(&self) -> u64 {
        self.master_seed
    }

    pub fn depth(&self) -> usize {
        self.problem.depth()
    }

    fn level_map(&self, level: usize) -> Result<&SmoothMap> {
        self.problem
            .levels
            .get(level - 1)
            .ok_or_else(|| Error::contract(format!("level {level} out of range")))
    }

    /// Draw an unbiased value sample `G` at `point` for the given level.
    pub fn sample_value(&mut self, level: usize, point: &Vector) -> Result<Vector> {
        let map = self.level_map(level)?;
        if point.len() != map.in_dim {
            return Err(Error::contract(format!(
                "level {level} expects input dimension {}, got {}",
                map.in_dim,
                point.len()
            )));
        }
        let g = if let Some(sampler) = &self.custom[level - 1] {
            (sampler.value)(point, &mut self.value_streams[level - 1])
        } else {
            let mut g = map.value(point);
            let sigma = self.noise.sigma_value(level);
            if sigma > 0.0 {
                let rng = &mut self.value_streams[level - 1];
                for v in g.iter_mut() {
                    *v += sigma * rng.sample::<f64, _>(StandardNormal);
                }
            }
            g
        };
        ensure_finite_vec(&g, level, "value sample")?;
        Ok(g)
    }

    /// Draw an unbiased transposed-Jacobian sample `J` at `point`.
    pub fn sample_jacobian(&mut self, level: usize, point: &Vector) -> Result<Matrix> {
        let map = self.level_map(level)?;
        if point.len() != map.in_dim {
            return Err(Error::contract(format!(
                "level {level} expects input dimension {}, got {}",
                map.in_dim,
                point.len()
            )));
        }
        let j = if let Some(sampler) = &self.custom[level - 1] {
            (sampler.jacobian_t)(point, &mut self.jacobian_streams[level - 1])
        } else {
            let mut j = map.jacobian_t(point);
            let sigma = self.noise.sigma_jacobian(level);
            if sigma > 0.0 {
                let rng = &mut self.jacobian_streams[level - 1];
                for v in j.iter_mut() {
                    *v += sigma * rng.sample::<f64, _>(StandardNormal);
                }
            }
            j
        };
        ensure_finite_mat(&j, level, "jacobian sample")?;
        Ok(j)
    }

    /// One `(G, J)` pair for a level; the two draws come from distinct streams.
    pub fn sample_level(&mut self, level: usize, point: &Vector) -> Result<(Vector, Matrix)> {
        let g = self.sample_value(level, point)?;
        let j = self.sample_jacobian(level, point)?;
        Ok((g, j))
    }

    /// Fresh samples at all levels plus the collapsed gradient estimate
    /// `J_T J_{T-1} ... J_1` as an ambient-dimension vector.
    ///
    /// `points[i]` is the evaluation point of level `i+1`, so `points[T-1]`
    /// plays the role of the ambient iterate.
    pub fn chain_sample(&mut self, points: &[Vector]) -> Result<(Vec<(Vector, Matrix)>, Vector)> {
        let depth = self.depth();
        if points.len() != depth {
            return Err(Error::contract(format!(
                "chain_sample needs {depth} evaluation points, got {}",
                points.len()
            )));
        }
        let mut samples = Vec::with_capacity(depth);
        for level in 1..=depth {
            samples.push(self.sample_level(level, &points[level - 1])?);
        }
        let jacobians: Vec<Matrix> = samples.iter().map(|(_, j)| j.clone()).collect();
        let product = chain_product(&jacobians);
        Ok((samples, product))
    }
}

fn ensure_finite_vec(v: &Vector, level: usize, what: &str) -> Result<()> {
    if v.iter().all(|x| x.is_finite()) {
        Ok(())
    } else {
        Err(Error::non_finite(level, format!("{what} produced a non-finite entry")))
    }
}

fn ensure_finite_mat(m: &Matrix, level: usize, what: &str) -> Result<()> {
    if m.iter().all(|x| x.is_finite()) {
        Ok(())
    } else {
        Err(Error::non_finite(level, format!("{what} produced a non-finite entry")))
    }
}

/// Central finite differences of `F` for gradient checks.
pub fn central_difference_gradient(
    problem: &CompositionProblem,
    x: &Vector,
    step: f64,
) -> Result<Vector> {
    let mut grad = Vector::zeros(x.len());
    let mut probe = x.clone();
    for i in 0..x.len() {
        probe[i] = x[i] + step;
        let plus = problem.exact_value(&probe)?;
        probe[i] = x[i] - step;
        let minus = problem.exact_value(&probe)?;
        probe[i] = x[i];
        grad[i] = (plus - minus) / (2.0 * step);
    }
    Ok(grad)
}

/// Central finite differences of a single level, in transposed orientation.
pub fn central_difference_jacobian_t(map: &SmoothMap, y: &Vector, step: f64) -> Matrix {
    let mut jac = Matrix::zeros(map.in_dim, map.out_dim);
    let mut probe = y.clone();
    for i in 0..map.in_dim {
        probe[i] = y[i] + step;
        let plus = map.value(&probe);
        probe[i] = y[i] - step;
        let minus = map.value(&probe);
        probe[i] = y[i];
        for o in 0..map.out_dim {
            jac[(i, o)] = (plus[o] - minus[o]) / (2.0 * step);
        }
    }
    jac
}
