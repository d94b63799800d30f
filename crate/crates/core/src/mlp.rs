//! A small fully-connected regression network with smooth hidden
//! activations, analytic input Jacobians and minibatch training.

use std::fmt;
use std::str::FromStr;

use ndarray::{Array2, Array3, ArrayView2};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::data::{Dataset, JacobianTensor, StandardizationParams};
use crate::error::{Error, Result};
use crate::predictor::Predictor;

pub const MODEL_FORMAT_VERSION: u64 = 1;

/// Hidden-layer nonlinearity. All variants are C-infinity.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Tanh,
    Sigmoid,
    Softplus,
}

impl Activation {
    #[inline]
    pub fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Tanh => z.tanh(),
            Activation::Sigmoid => sigmoid(z),
            Activation::Softplus => z.max(0.0) + (-z.abs()).exp().ln_1p(),
        }
    }

    #[inline]
    pub fn derivative(self, z: f64) -> f64 {
        match self {
            Activation::Tanh => {
                let t = z.tanh();
                1.0 - t * t
            }
            Activation::Sigmoid => {
                let s = sigmoid(z);
                s * (1.0 - s)
            }
            Activation::Softplus => sigmoid(z),
        }
    }
}

#[inline]
fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

impl fmt::Display for Activation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Activation::Tanh => "tanh",
            Activation::Sigmoid => "sigmoid",
            Activation::Softplus => "softplus",
        })
    }
}

impl FromStr for Activation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "tanh" => Ok(Activation::Tanh),
            "sigmoid" => Ok(Activation::Sigmoid),
            "softplus" => Ok(Activation::Softplus),
            other => Err(Error::InvalidArgument(format!(
                "unsupported activation `{other}` (expected tanh, sigmoid or softplus)"
            ))),
        }
    }
}

/// Affine layer; `weights` is `n_out × n_in`, row-major.
#[derive(Debug, Clone, PartialEq)]
struct Layer {
    n_in: usize,
    n_out: usize,
    weights: Vec<f64>,
    biases: Vec<f64>,
}

impl Layer {
    #[inline]
    fn affine(&self, x: &[f64], out: &mut Vec<f64>) {
        out.clear();
        for (o, b) in self.biases.iter().enumerate() {
            let row = &self.weights[o * self.n_in..(o + 1) * self.n_in];
            out.push(b + row.iter().zip(x).map(|(w, v)| w * v).sum::<f64>());
        }
    }
}

/// Feedforward network `n -> h_1 -> ... -> h_L -> m`. Hidden layers share
/// one activation; the output layer is linear.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpModel {
    activation: Activation,
    layers: Vec<Layer>,
    preprocessing: Option<StandardizationParams>,
}

impl MlpModel {
    /// Weights and biases drawn uniformly from `±1/sqrt(fan_in)`.
    pub fn new_random(sizes: &[usize], activation: Activation, seed: u64) -> Result<Self> {
        check_sizes(sizes)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let layers = sizes
            .windows(2)
            .map(|w| {
                let (n_in, n_out) = (w[0], w[1]);
                let bound = 1.0 / (n_in as f64).sqrt();
                let weights = (0..n_in * n_out).map(|_| rng.gen_range(-bound..=bound)).collect();
                let biases = (0..n_out).map(|_| rng.gen_range(-bound..=bound)).collect();
                Layer { n_in, n_out, weights, biases }
            })
            .collect();
        Ok(MlpModel { activation, layers, preprocessing: None })
    }

    /// Builds a model from explicit row-major weight matrices and biases.
    pub fn from_parts(
        sizes: &[usize],
        activation: Activation,
        weights: Vec<Vec<f64>>,
        biases: Vec<Vec<f64>>,
    ) -> Result<Self> {
        check_sizes(sizes)?;
        let n_layers = sizes.len() - 1;
        if weights.len() != n_layers || biases.len() != n_layers {
            return Err(Error::DimensionMismatch { expected: n_layers, got: weights.len().min(biases.len()) });
        }
        let mut layers = Vec::with_capacity(n_layers);
        for (l, (w, b)) in weights.into_iter().zip(biases).enumerate() {
            let (n_in, n_out) = (sizes[l], sizes[l + 1]);
            if w.len() != n_in * n_out {
                return Err(Error::DimensionMismatch { expected: n_in * n_out, got: w.len() });
            }
            if b.len() != n_out {
                return Err(Error::DimensionMismatch { expected: n_out, got: b.len() });
            }
            if w.iter().chain(&b).any(|v| !v.is_finite()) {
                return Err(Error::NonFinite(format!("parameters of layer {l}")));
            }
            layers.push(Layer { n_in, n_out, weights: w, biases: b });
        }
        Ok(MlpModel { activation, layers, preprocessing: None })
    }

    pub fn with_preprocessing(mut self, params: StandardizationParams) -> Self {
        self.preprocessing = Some(params);
        self
    }

    /// Standardization that maps raw data into the model's input space.
    pub fn preprocessing(&self) -> Option<&StandardizationParams> {
        self.preprocessing.as_ref()
    }

    pub fn activation(&self) -> Activation {
        self.activation
    }

    pub fn sizes(&self) -> Vec<usize> {
        let mut sizes = vec![self.layers[0].n_in];
        sizes.extend(self.layers.iter().map(|l| l.n_out));
        sizes
    }

    pub fn n_inputs(&self) -> usize {
        self.layers[0].n_in
    }

    pub fn n_outputs(&self) -> usize {
        self.layers.last().expect("at least one layer").n_out
    }

    pub fn n_parameters(&self) -> usize {
        self.layers.iter().map(|l| l.weights.len() + l.biases.len()).sum()
    }

    /// All parameters, layer by layer, weights before biases.
    pub fn parameters(&self) -> Vec<f64> {
        self.layers.iter().flat_map(|l| l.weights.iter().chain(&l.biases).copied()).collect()
    }

    pub fn set_parameters(&mut self, params: &[f64]) -> Result<()> {
        if params.len() != self.n_parameters() {
            return Err(Error::DimensionMismatch { expected: self.n_parameters(), got: params.len() });
        }
        let mut it = params.iter().copied();
        for l in &mut self.layers {
            for w in l.weights.iter_mut().chain(l.biases.iter_mut()) {
                *w = it.next().expect("length checked");
            }
        }
        Ok(())
    }

    fn check_input(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.n_inputs() {
            return Err(Error::DimensionMismatch { expected: self.n_inputs(), got: x.len() });
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("model input".into()));
        }
        Ok(())
    }

    pub fn forward(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check_input(x)?;
        Ok(self.forward_unchecked(x))
    }

    fn forward_unchecked(&self, x: &[f64]) -> Vec<f64> {
        let mut a = x.to_vec();
        let mut z = Vec::new();
        let last = self.layers.len() - 1;
        for (l, layer) in self.layers.iter().enumerate() {
            layer.affine(&a, &mut z);
            if l < last {
                for v in &mut z {
                    *v = self.activation.apply(*v);
                }
            }
            std::mem::swap(&mut a, &mut z);
        }
        a
    }

    /// Exact `m × n` Jacobian `d f_k / d x_j` by forward-mode chain rule.
    pub fn input_jacobian(&self, x: &[f64]) -> Result<Array2<f64>> {
        self.check_input(x)?;
        Ok(self.input_jacobian_unchecked(x))
    }

    fn input_jacobian_unchecked(&self, x: &[f64]) -> Array2<f64> {
        let n = self.n_inputs();
        // jac: rows = units of the current layer, cols = inputs
        let mut jac = Array2::<f64>::eye(n);
        let mut a = x.to_vec();
        let mut z = Vec::new();
        let last = self.layers.len() - 1;
        for (l, layer) in self.layers.iter().enumerate() {
            layer.affine(&a, &mut z);
            let mut next = Array2::<f64>::zeros((layer.n_out, n));
            for o in 0..layer.n_out {
                let w_row = &layer.weights[o * layer.n_in..(o + 1) * layer.n_in];
                let scale = if l < last { self.activation.derivative(z[o]) } else { 1.0 };
                let mut out_row = next.row_mut(o);
                for (i, w) in w_row.iter().enumerate() {
                    if *w == 0.0 {
                        continue;
                    }
                    for (dst, src) in out_row.iter_mut().zip(jac.row(i)) {
                        *dst += w * src;
                    }
                }
                if scale != 1.0 {
                    out_row.mapv_inplace(|v| v * scale);
                }
            }
            if l < last {
                for v in &mut z {
                    *v = self.activation.apply(*v);
                }
            }
            std::mem::swap(&mut a, &mut z);
            jac = next;
        }
        jac
    }

    /// Mean squared error over all samples and outputs, and its gradient
    /// with respect to [`parameters`](Self::parameters).
    pub fn loss_and_gradient(
        &self,
        features: ArrayView2<'_, f64>,
        targets: ArrayView2<'_, f64>,
    ) -> Result<(f64, Vec<f64>)> {
        if features.ncols() != self.n_inputs() {
            return Err(Error::DimensionMismatch { expected: self.n_inputs(), got: features.ncols() });
        }
        if targets.ncols() != self.n_outputs() || targets.nrows() != features.nrows() {
            return Err(Error::DimensionMismatch { expected: self.n_outputs(), got: targets.ncols() });
        }
        let mut grad = vec![0.0; self.n_parameters()];
        let rows: Vec<usize> = (0..features.nrows()).collect();
        let loss = self.accumulate_gradient(features, targets, &rows, &mut grad);
        Ok((loss, grad))
    }

    /// Adds the gradient of the batch-mean squared error over `rows` into
    /// `grad` and returns that mean loss.
    fn accumulate_gradient(
        &self,
        features: ArrayView2<'_, f64>,
        targets: ArrayView2<'_, f64>,
        rows: &[usize],
        grad: &mut [f64],
    ) -> f64 {
        let n_layers = self.layers.len();
        let norm = 1.0 / (rows.len() * self.n_outputs()) as f64;
        let mut loss = 0.0;
        // activations[l] is the input to layer l; pre[l] its pre-activation output
        let mut activations: Vec<Vec<f64>> = vec![Vec::new(); n_layers + 1];
        let mut pre: Vec<Vec<f64>> = vec![Vec::new(); n_layers];
        let mut delta = Vec::new();
        let mut prev_delta = Vec::new();
        let offsets = self.layer_offsets();
        for &r in rows {
            activations[0].clear();
            activations[0].extend(features.row(r).iter());
            for (l, layer) in self.layers.iter().enumerate() {
                let (head, tail) = activations.split_at_mut(l + 1);
                layer.affine(&head[l], &mut pre[l]);
                tail[0].clear();
                if l + 1 < n_layers {
                    tail[0].extend(pre[l].iter().map(|&z| self.activation.apply(z)));
                } else {
                    tail[0].extend(pre[l].iter());
                }
            }
            delta.clear();
            for (o, y) in activations[n_layers].iter().zip(targets.row(r)) {
                let e = o - y;
                loss += e * e;
                delta.push(2.0 * e * norm);
            }
            for l in (0..n_layers).rev() {
                let layer = &self.layers[l];
                let (w_off, b_off) = offsets[l];
                let input = &activations[l];
                for (o, d) in delta.iter().enumerate() {
                    let g_row = &mut grad[w_off + o * layer.n_in..w_off + (o + 1) * layer.n_in];
                    for (g, a) in g_row.iter_mut().zip(input) {
                        *g += d * a;
                    }
                    grad[b_off + o] += d;
                }
                if l == 0 {
                    break;
                }
                prev_delta.clear();
                prev_delta.resize(layer.n_in, 0.0);
                for (o, d) in delta.iter().enumerate() {
                    let w_row = &layer.weights[o * layer.n_in..(o + 1) * layer.n_in];
                    for (pd, w) in prev_delta.iter_mut().zip(w_row) {
                        *pd += d * w;
                    }
                }
                for (pd, z) in prev_delta.iter_mut().zip(&pre[l - 1]) {
                    *pd *= self.activation.derivative(*z);
                }
                std::mem::swap(&mut delta, &mut prev_delta);
            }
        }
        loss * norm
    }

    fn layer_offsets(&self) -> Vec<(usize, usize)> {
        let mut off = 0;
        self.layers
            .iter()
            .map(|l| {
                let w = off;
                let b = off + l.weights.len();
                off = b + l.biases.len();
                (w, b)
            })
            .collect()
    }

    /// Mean squared error over a full feature/target set (scalar output).
    pub fn mse(&self, features: ArrayView2<'_, f64>, targets: &[f64]) -> f64 {
        let n = features.nrows() as f64;
        features
            .rows()
            .into_iter()
            .zip(targets)
            .map(|(row, y)| {
                let out = match row.as_slice() {
                    Some(x) => self.forward_unchecked(x),
                    None => self.forward_unchecked(&row.to_vec()),
                };
                let e = out[0] - y;
                e * e
            })
            .sum::<f64>()
            / n
    }

    pub fn to_json(&self) -> String {
        let doc = ModelDoc {
            version: MODEL_FORMAT_VERSION,
            sizes: self.sizes(),
            activation: self.activation,
            weights: self.layers.iter().map(|l| l.weights.clone()).collect(),
            biases: self.layers.iter().map(|l| l.biases.clone()).collect(),
            preprocessing: self.preprocessing.clone(),
        };
        let mut s = serde_json::to_string(&doc).expect("model document serializes");
        s.push('\n');
        s
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let value: Value = serde_json::from_str(text).map_err(|e| Error::schema("$", e.to_string()))?;
        parse_model(&value)
    }
}

fn check_sizes(sizes: &[usize]) -> Result<()> {
    if sizes.len() < 2 {
        return Err(Error::InvalidArgument("a model needs at least input and output sizes".into()));
    }
    if sizes.contains(&0) {
        return Err(Error::InvalidArgument("layer sizes must be positive".into()));
    }
    Ok(())
}

#[derive(Serialize)]
struct ModelDoc {
    version: u64,
    sizes: Vec<usize>,
    activation: Activation,
    weights: Vec<Vec<f64>>,
    biases: Vec<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    preprocessing: Option<StandardizationParams>,
}

fn number_array(value: &Value, path: &str) -> Result<Vec<f64>> {
    let arr = value.as_array().ok_or_else(|| Error::schema(path, "expected an array"))?;
    arr.iter()
        .enumerate()
        .map(|(i, v)| v.as_f64().ok_or_else(|| Error::schema(format!("{path}[{i}]"), "expected a number")))
        .collect()
}

fn nested_arrays(value: Option<&Value>, path: &str, expected: usize) -> Result<Vec<Vec<f64>>> {
    let arr = value
        .ok_or_else(|| Error::schema(path, "missing field"))?
        .as_array()
        .ok_or_else(|| Error::schema(path, "expected an array of arrays"))?;
    if arr.len() != expected {
        return Err(Error::schema(path, format!("expected {expected} layers, found {}", arr.len())));
    }
    arr.iter().enumerate().map(|(l, v)| number_array(v, &format!("{path}[{l}]"))).collect()
}

fn parse_model(value: &Value) -> Result<MlpModel> {
    let obj = value.as_object().ok_or_else(|| Error::schema("$", "expected an object"))?;
    match obj.get("version").and_then(Value::as_u64) {
        Some(MODEL_FORMAT_VERSION) => {}
        Some(v) => return Err(Error::schema("version", format!("unsupported version {v}"))),
        None => return Err(Error::schema("version", "missing or not an integer")),
    }
    let sizes: Vec<usize> = obj
        .get("sizes")
        .and_then(Value::as_array)
        .ok_or_else(|| Error::schema("sizes", "missing or not an array"))?
        .iter()
        .enumerate()
        .map(|(i, v)| {
            v.as_u64()
                .filter(|&s| s > 0)
                .map(|s| s as usize)
                .ok_or_else(|| Error::schema(format!("sizes[{i}]"), "expected a positive integer"))
        })
        .collect::<Result<_>>()?;
    if sizes.len() < 2 {
        return Err(Error::schema("sizes", "need at least two layer sizes"));
    }
    let activation: Activation = obj
        .get("activation")
        .and_then(Value::as_str)
        .ok_or_else(|| Error::schema("activation", "missing or not a string"))?
        .parse()
        .map_err(|e: Error| Error::schema("activation", e.to_string()))?;
    let n_layers = sizes.len() - 1;
    let weights = nested_arrays(obj.get("weights"), "weights", n_layers)?;
    let biases = nested_arrays(obj.get("biases"), "biases", n_layers)?;
    for l in 0..n_layers {
        if weights[l].len() != sizes[l] * sizes[l + 1] {
            return Err(Error::schema(
                format!("weights[{l}]"),
                format!("expected {} values, found {}", sizes[l] * sizes[l + 1], weights[l].len()),
            ));
        }
        if biases[l].len() != sizes[l + 1] {
            return Err(Error::schema(
                format!("biases[{l}]"),
                format!("expected {} values, found {}", sizes[l + 1], biases[l].len()),
            ));
        }
    }
    let mut model = MlpModel::from_parts(&sizes, activation, weights, biases)?;
    if let Some(pre) = obj.get("preprocessing") {
        let params: StandardizationParams =
            serde_json::from_value(pre.clone()).map_err(|e| Error::schema("preprocessing", e.to_string()))?;
        if params.means.len() != sizes[0] || params.stds.len() != sizes[0] {
            return Err(Error::schema("preprocessing", "length differs from the input size"));
        }
        model.preprocessing = Some(params);
    }
    Ok(model)
}

impl Predictor for MlpModel {
    fn n_features(&self) -> usize {
        self.n_inputs()
    }

    fn predict_row(&self, x: &[f64]) -> f64 {
        self.forward_unchecked(x)[0]
    }
}

/// Applies [`MlpModel::input_jacobian`] to every row (in parallel; rows are
/// independent so the result does not depend on scheduling).
pub fn dataset_jacobian(model: &MlpModel, dataset: &Dataset) -> Result<JacobianTensor> {
    if dataset.n_features() != model.n_inputs() {
        return Err(Error::DimensionMismatch { expected: model.n_inputs(), got: dataset.n_features() });
    }
    let (n, m, p) = (dataset.n_samples(), model.n_outputs(), model.n_inputs());
    let features = dataset.features();
    let slices: Vec<Array2<f64>> = (0..n)
        .into_par_iter()
        .map(|i| {
            let row = features.row(i).to_vec();
            model.input_jacobian_unchecked(&row)
        })
        .collect();
    let mut values = Array3::<f64>::zeros((n, m, p));
    for (i, s) in slices.into_iter().enumerate() {
        values.index_axis_mut(ndarray::Axis(0), i).assign(&s);
    }
    JacobianTensor::new(values)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Optimizer {
    Sgd,
    Adam,
}

impl FromStr for Optimizer {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sgd" => Ok(Optimizer::Sgd),
            "adam" => Ok(Optimizer::Adam),
            other => Err(Error::InvalidArgument(format!("unknown optimizer `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub optimizer: Optimizer,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig { epochs: 60, batch_size: 64, learning_rate: 3e-3, optimizer: Optimizer::Adam, seed: 0 }
    }
}

impl TrainConfig {
    fn validate(&self) -> Result<()> {
        if self.epochs == 0 || self.batch_size == 0 {
            return Err(Error::InvalidArgument("epochs and batch size must be at least 1".into()));
        }
        if !(self.learning_rate >= 0.0) || !self.learning_rate.is_finite() {
            return Err(Error::InvalidArgument(format!("bad learning rate {}", self.learning_rate)));
        }
        Ok(())
    }
}

struct Adam {
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

impl Adam {
    const BETA1: f64 = 0.9;
    const BETA2: f64 = 0.999;
    const EPS: f64 = 1e-8;

    fn step(&mut self, params: &mut [f64], grad: &[f64], lr: f64) {
        self.t += 1;
        let c1 = 1.0 - Self::BETA1.powi(self.t);
        let c2 = 1.0 - Self::BETA2.powi(self.t);
        for i in 0..params.len() {
            self.m[i] = Self::BETA1 * self.m[i] + (1.0 - Self::BETA1) * grad[i];
            self.v[i] = Self::BETA2 * self.v[i] + (1.0 - Self::BETA2) * grad[i] * grad[i];
            let m_hat = self.m[i] / c1;
            let v_hat = self.v[i] / c2;
            params[i] -= lr * m_hat / (v_hat.sqrt() + Self::EPS);
        }
    }
}

/// Minibatch MSE training on a copy of `model`. Returns the trained model
/// and the full-data training loss before training and after each epoch.
///
/// Single-threaded: identical inputs and seed give bitwise-identical output.
pub fn train(model: &MlpModel, dataset: &Dataset, config: &TrainConfig) -> Result<(MlpModel, Vec<f64>)> {
    config.validate()?;
    let target = dataset.target().ok_or(Error::MissingTarget)?;
    if model.n_outputs() != 1 {
        return Err(Error::InvalidArgument("training supports scalar-output models only".into()));
    }
    if dataset.n_features() != model.n_inputs() {
        return Err(Error::DimensionMismatch { expected: model.n_inputs(), got: dataset.n_features() });
    }
    let features = dataset.features();
    let targets = target.to_owned().insert_axis(ndarray::Axis(1));
    let target_vec = target.to_vec();
    let mut model = model.clone();
    let mut params = model.parameters();
    let mut grad = vec![0.0; params.len()];
    let mut adam = Adam { m: vec![0.0; params.len()], v: vec![0.0; params.len()], t: 0 };
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut order: Vec<usize> = (0..dataset.n_samples()).collect();

    let mut trace = vec![model.mse(features, &target_vec)];
    for epoch in 1..=config.epochs {
        order.shuffle(&mut rng);
        for batch in order.chunks(config.batch_size) {
            grad.iter_mut().for_each(|g| *g = 0.0);
            model.accumulate_gradient(features, targets.view(), batch, &mut grad);
            match config.optimizer {
                Optimizer::Sgd => {
                    for (p, g) in params.iter_mut().zip(&grad) {
                        *p -= config.learning_rate * g;
                    }
                }
                Optimizer::Adam => adam.step(&mut params, &grad, config.learning_rate),
            }
            if params.iter().any(|p| !p.is_finite()) {
                return Err(Error::DivergedTraining { epoch, loss: f64::NAN });
            }
            model.set_parameters(&params)?;
        }
        let loss = model.mse(features, &target_vec);
        if !loss.is_finite() {
            return Err(Error::DivergedTraining { epoch, loss });
        }
        trace.push(loss);
    }
    Ok((model, trace))
}

/// Coefficient of determination of `predictions` against `targets`.
pub fn r_squared(predictions: &[f64], targets: &[f64]) -> f64 {
    let n = targets.len() as f64;
    let mean = targets.iter().sum::<f64>() / n;
    let ss_res: f64 = predictions.iter().zip(targets).map(|(p, y)| (y - p) * (y - p)).sum();
    let ss_tot: f64 = targets.iter().map(|y| (y - mean) * (y - mean)).sum();
    1.0 - ss_res / ss_tot
}
