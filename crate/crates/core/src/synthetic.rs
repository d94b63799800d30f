//! Ground-truth experiments: seeded standard-normal inputs and additive
//! functions with closed-form derivatives and exact Shapley values.

use ndarray::{Array1, Array2};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::data::{Dataset, JacobianTensor};
use crate::error::{Error, Result};
use crate::predictor::Predictor;

/// Below this magnitude the cube-root derivative is treated as singular.
pub const CBRT_SINGULAR_EPS: f64 = 1e-300;

/// `n_samples × n_features` i.i.d. N(0, 1) draws, row by row, named `X1..Xn`.
pub fn gen_normal_inputs(n_samples: usize, n_features: usize, seed: u64) -> Result<Dataset> {
    if n_samples == 0 || n_features == 0 {
        return Err(Error::EmptyInput);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let features = Array2::from_shape_simple_fn((n_samples, n_features), || StandardNormal.sample(&mut rng));
    Dataset::with_default_names(features)
}

/// One univariate term `f_j(x_j)` of an additive function.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Component {
    Zero,
    /// `coef * x`
    Linear {
        coef: f64,
    },
    /// `coef * x^2`
    Quadratic {
        coef: f64,
    },
    /// `coef * cbrt(x)`, real (sign-preserving) cube root.
    CubeRoot {
        coef: f64,
    },
}

impl Component {
    pub fn value(self, x: f64) -> f64 {
        match self {
            Component::Zero => 0.0,
            Component::Linear { coef } => coef * x,
            Component::Quadratic { coef } => coef * x * x,
            Component::CubeRoot { coef } => coef * x.cbrt(),
        }
    }

    /// `None` where the derivative is unbounded.
    pub fn derivative(self, x: f64) -> Option<f64> {
        match self {
            Component::Zero => Some(0.0),
            Component::Linear { coef } => Some(coef),
            Component::Quadratic { coef } => Some(2.0 * coef * x),
            Component::CubeRoot { coef } => {
                if x.abs() < CBRT_SINGULAR_EPS {
                    None
                } else {
                    Some(coef / (3.0 * x.abs().powf(2.0 / 3.0)))
                }
            }
        }
    }
}

/// `f(x) = sum_j f_j(x_j)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdditiveFunction {
    components: Vec<Component>,
}

impl AdditiveFunction {
    pub fn new(components: Vec<Component>) -> Result<Self> {
        if components.is_empty() {
            return Err(Error::EmptyInput);
        }
        Ok(AdditiveFunction { components })
    }

    pub fn zero(n_features: usize) -> Self {
        AdditiveFunction { components: vec![Component::Zero; n_features] }
    }

    pub fn components(&self) -> &[Component] {
        &self.components
    }

    pub fn n_features(&self) -> usize {
        self.components.len()
    }

    fn check_len(&self, len: usize) -> Result<()> {
        if len != self.n_features() {
            return Err(Error::DimensionMismatch { expected: self.n_features(), got: len });
        }
        Ok(())
    }

    pub fn eval(&self, x: &[f64]) -> Result<f64> {
        self.check_len(x.len())?;
        Ok(self.eval_unchecked(x))
    }

    fn eval_unchecked(&self, x: &[f64]) -> f64 {
        self.components.iter().zip(x).map(|(c, &v)| c.value(v)).sum()
    }

    /// Evaluates on every row and attaches the result as target `name`.
    pub fn label(&self, dataset: &Dataset, name: &str) -> Result<Dataset> {
        self.check_len(dataset.n_features())?;
        let y: Array1<f64> = self.predict(dataset.features()).into();
        dataset.clone().with_target(y, name)
    }
}

impl Predictor for AdditiveFunction {
    fn n_features(&self) -> usize {
        self.components.len()
    }

    fn predict_row(&self, x: &[f64]) -> f64 {
        self.eval_unchecked(x)
    }
}

/// `Y = X1^2 + 2 X2 + cbrt(X3) / 10` over eight inputs; `X4..X8` unused.
pub fn cubic_root_function() -> AdditiveFunction {
    let mut components = vec![Component::Zero; 8];
    components[0] = Component::Quadratic { coef: 1.0 };
    components[1] = Component::Linear { coef: 2.0 };
    components[2] = Component::CubeRoot { coef: 0.1 };
    AdditiveFunction { components }
}

/// Resolves a function by its CLI name.
pub fn named_function(name: &str) -> Result<AdditiveFunction> {
    match name {
        "cubic-root" => Ok(cubic_root_function()),
        other => Err(Error::InvalidArgument(format!("unknown function `{other}` (known: cubic-root)"))),
    }
}

/// Exact scalar-output derivative tensor of `fun` at every sample.
pub fn analytic_jacobian(fun: &AdditiveFunction, dataset: &Dataset) -> Result<JacobianTensor> {
    fun.check_len(dataset.n_features())?;
    let x = dataset.features();
    let mut d = Array2::<f64>::zeros(x.dim());
    for ((i, j), v) in x.indexed_iter() {
        d[[i, j]] = fun.components[j].derivative(*v).ok_or(Error::SingularPoint { sample: i, feature: j })?;
    }
    JacobianTensor::from_scalar_output(d)
}

/// Exact Shapley values of `fun` at `x` with the empirical distribution of
/// `dataset` as background: `phi_j = f_j(x_j) - mean_i f_j(x_ij)`.
pub fn additive_shapley(fun: &AdditiveFunction, dataset: &Dataset, x: &[f64]) -> Result<Vec<f64>> {
    fun.check_len(x.len())?;
    let baselines = component_means(fun, dataset)?;
    Ok(shapley_with_baselines(fun, &baselines, x))
}

/// `mean_i f_j(x_ij)` for every component.
pub fn component_means(fun: &AdditiveFunction, dataset: &Dataset) -> Result<Vec<f64>> {
    fun.check_len(dataset.n_features())?;
    let n = dataset.n_samples() as f64;
    Ok(dataset
        .features()
        .columns()
        .into_iter()
        .zip(&fun.components)
        .map(|(col, c)| col.iter().map(|&v| c.value(v)).sum::<f64>() / n)
        .collect())
}

/// Exact Shapley values at every sample of `dataset`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShapleyTable {
    pub function: String,
    pub feature_names: Vec<String>,
    /// Mean prediction over the background data.
    pub base_value: f64,
    /// `mean_i |phi_ij|` per feature.
    pub mean_abs: Vec<f64>,
    /// `values[i][j]`: contribution of feature `j` at sample `i`.
    pub values: Vec<Vec<f64>>,
}

pub fn shapley_table(fun: &AdditiveFunction, dataset: &Dataset, function_name: &str) -> Result<ShapleyTable> {
    let baselines = component_means(fun, dataset)?;
    let values: Vec<Vec<f64>> =
        dataset.features().rows().into_iter().map(|r| shapley_with_baselines(fun, &baselines, &r.to_vec())).collect();
    let n = values.len() as f64;
    let mean_abs = (0..fun.n_features()).map(|j| values.iter().map(|v| v[j].abs()).sum::<f64>() / n).collect();
    Ok(ShapleyTable {
        function: function_name.to_string(),
        feature_names: dataset.feature_names().to_vec(),
        base_value: baselines.iter().sum(),
        mean_abs,
        values,
    })
}

pub(crate) fn shapley_with_baselines(fun: &AdditiveFunction, baselines: &[f64], x: &[f64]) -> Vec<f64> {
    fun.components.iter().zip(x).zip(baselines).map(|((c, &v), b)| c.value(v) - b).collect()
}
