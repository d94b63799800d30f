//! Shared domain types: datasets, Jacobian tensors, norm pairs and the
//! feature/target preprocessing used before fitting a model.

use std::collections::HashSet;
use std::fmt;
use std::str::FromStr;

use ndarray::{Array1, Array2, Array3, ArrayView1, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// N samples of n named features, plus an optional regression target.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    features: Array2<f64>,
    target: Option<Array1<f64>>,
    feature_names: Vec<String>,
    target_name: Option<String>,
}

impl Dataset {
    pub fn new(features: Array2<f64>, feature_names: Vec<String>) -> Result<Self> {
        let (n_samples, n_features) = features.dim();
        if n_samples == 0 || n_features == 0 {
            return Err(Error::EmptyInput);
        }
        if feature_names.len() != n_features {
            return Err(Error::DimensionMismatch { expected: n_features, got: feature_names.len() });
        }
        let mut seen = HashSet::new();
        for name in &feature_names {
            if name.is_empty() {
                return Err(Error::InvalidArgument("empty feature name".into()));
            }
            if !seen.insert(name.as_str()) {
                return Err(Error::InvalidArgument(format!("duplicate feature name `{name}`")));
            }
        }
        if let Some(((i, j), v)) = features.indexed_iter().find(|(_, v)| !v.is_finite()) {
            return Err(Error::NonFinite(format!("feature value {v} at row {i}, column {j}")));
        }
        Ok(Dataset { features, target: None, feature_names, target_name: None })
    }

    /// Features named `X1..Xn`.
    pub fn with_default_names(features: Array2<f64>) -> Result<Self> {
        let names = (1..=features.ncols()).map(|j| format!("X{j}")).collect();
        Self::new(features, names)
    }

    pub fn with_target(mut self, target: Array1<f64>, name: impl Into<String>) -> Result<Self> {
        if target.len() != self.n_samples() {
            return Err(Error::DimensionMismatch { expected: self.n_samples(), got: target.len() });
        }
        if let Some((i, v)) = target.iter().enumerate().find(|(_, v)| !v.is_finite()) {
            return Err(Error::NonFinite(format!("target value {v} at row {i}")));
        }
        let name = name.into();
        if self.feature_names.contains(&name) {
            return Err(Error::InvalidArgument(format!("target name `{name}` collides with a feature name")));
        }
        self.target = Some(target);
        self.target_name = Some(name);
        Ok(self)
    }

    pub fn features(&self) -> ArrayView2<'_, f64> {
        self.features.view()
    }

    pub fn target(&self) -> Option<ArrayView1<'_, f64>> {
        self.target.as_ref().map(|t| t.view())
    }

    pub fn target_name(&self) -> Option<&str> {
        self.target_name.as_deref()
    }

    pub fn feature_names(&self) -> &[String] {
        &self.feature_names
    }

    pub fn n_samples(&self) -> usize {
        self.features.nrows()
    }

    pub fn n_features(&self) -> usize {
        self.features.ncols()
    }

    pub fn row(&self, i: usize) -> ArrayView1<'_, f64> {
        self.features.row(i)
    }

    /// Rows selected by `indices`, in that order.
    pub fn select_rows(&self, indices: &[usize]) -> Dataset {
        Dataset {
            features: self.features.select(Axis(0), indices),
            target: self.target.as_ref().map(|t| t.select(Axis(0), indices)),
            feature_names: self.feature_names.clone(),
            target_name: self.target_name.clone(),
        }
    }

    /// Feature columns named in `names`, in that order; the target is kept.
    pub fn select_features(&self, names: &[String]) -> Result<Dataset> {
        let idx = names
            .iter()
            .map(|n| {
                self.feature_names
                    .iter()
                    .position(|f| f == n)
                    .ok_or_else(|| Error::InvalidArgument(format!("column `{n}` not found")))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Dataset {
            features: self.features.select(Axis(1), &idx),
            target: self.target.clone(),
            feature_names: names.to_vec(),
            target_name: self.target_name.clone(),
        })
    }

    pub(crate) fn replace_features(&self, features: Array2<f64>) -> Dataset {
        debug_assert_eq!(features.dim(), self.features.dim());
        Dataset { features, ..self.clone() }
    }

    pub(crate) fn replace_target(&self, target: Array1<f64>) -> Dataset {
        Dataset { target: Some(target), ..self.clone() }
    }
}

/// Partial derivatives `values[[i, k, j]] = d f_k / d X_j` at sample `i`.
#[derive(Debug, Clone, PartialEq)]
pub struct JacobianTensor {
    values: Array3<f64>,
}

impl JacobianTensor {
    pub fn new(values: Array3<f64>) -> Result<Self> {
        let (n, m, p) = values.dim();
        if n == 0 || m == 0 || p == 0 {
            return Err(Error::EmptyInput);
        }
        if let Some(((i, k, j), v)) = values.indexed_iter().find(|(_, v)| !v.is_finite()) {
            return Err(Error::NonFinite(format!("jacobian entry {v} at sample {i}, output {k}, feature {j}")));
        }
        Ok(JacobianTensor { values })
    }

    /// Scalar-output tensor from an N×n matrix of derivatives.
    pub fn from_scalar_output(derivatives: Array2<f64>) -> Result<Self> {
        let (n, p) = derivatives.dim();
        let values = derivatives.into_shape_with_order((n, 1, p)).expect("contiguous N×n reshapes to N×1×n");
        Self::new(values)
    }

    pub fn values(&self) -> &Array3<f64> {
        &self.values
    }

    pub fn n_samples(&self) -> usize {
        self.values.dim().0
    }

    pub fn n_outputs(&self) -> usize {
        self.values.dim().1
    }

    pub fn n_features(&self) -> usize {
        self.values.dim().2
    }

    pub(crate) fn check_feature(&self, j: usize) -> Result<()> {
        if j >= self.n_features() {
            return Err(Error::IndexOutOfRange { what: "feature", index: j, len: self.n_features() });
        }
        Ok(())
    }

    pub(crate) fn check_output(&self, k: usize) -> Result<()> {
        if k >= self.n_outputs() {
            return Err(Error::IndexOutOfRange { what: "output", index: k, len: self.n_outputs() });
        }
        Ok(())
    }

    /// `d f_k / d X_j` over all samples.
    pub fn partials(&self, j: usize, k: usize) -> Result<ArrayView1<'_, f64>> {
        self.check_feature(j)?;
        self.check_output(k)?;
        Ok(self.values.slice(ndarray::s![.., k, j]))
    }

    /// The N×m block of derivatives with respect to feature `j`.
    pub fn feature_block(&self, j: usize) -> Result<ArrayView2<'_, f64>> {
        self.check_feature(j)?;
        Ok(self.values.index_axis(Axis(2), j))
    }
}

/// Exponent of an Lp norm, in `[1, inf]`.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub struct Exponent(f64);

impl Exponent {
    pub const ONE: Exponent = Exponent(1.0);
    pub const TWO: Exponent = Exponent(2.0);
    pub const INFINITY: Exponent = Exponent(f64::INFINITY);

    pub fn new(value: f64) -> Result<Self> {
        if value.is_nan() || value < 1.0 {
            return Err(Error::InvalidArgument(format!("norm exponent must lie in [1, inf], got {value}")));
        }
        Ok(Exponent(value))
    }

    pub fn get(self) -> f64 {
        self.0
    }

    pub fn is_infinite(self) -> bool {
        self.0.is_infinite()
    }
}

impl fmt::Display for Exponent {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_infinite() {
            f.write_str("inf")
        } else {
            write!(f, "{}", self.0)
        }
    }
}

impl FromStr for Exponent {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "inf" | "Inf" | "infinity" | "∞" => Ok(Exponent::INFINITY),
            other => other
                .parse::<f64>()
                .map_err(|_| Error::InvalidArgument(format!("bad norm exponent `{s}`")))
                .and_then(Exponent::new),
        }
    }
}

/// Perturbation norm `p` and target norm `q`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NormPair {
    pub p: Exponent,
    pub q: Exponent,
}

impl NormPair {
    pub fn new(p: f64, q: f64) -> Result<Self> {
        Ok(NormPair { p: Exponent::new(p)?, q: Exponent::new(q)? })
    }
}

impl fmt::Display for NormPair {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "(p={}, q={})", self.p, self.q)
    }
}

/// Everything needed to map raw data into the space the model was fit in,
/// and back.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StandardizationParams {
    pub feature_names: Vec<String>,
    pub means: Vec<f64>,
    pub stds: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target_min: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target_max: Option<f64>,
}

impl StandardizationParams {
    /// Standardizes `dataset` with these (already fitted) parameters.
    /// A target, when present and a range is stored, is rescaled as well.
    pub fn apply(&self, dataset: &Dataset) -> Result<Dataset> {
        if dataset.n_features() != self.means.len() {
            return Err(Error::DimensionMismatch { expected: self.means.len(), got: dataset.n_features() });
        }
        let mut features = dataset.features().to_owned();
        for (j, mut col) in features.axis_iter_mut(Axis(1)).enumerate() {
            let (mu, sd) = (self.means[j], self.stds[j]);
            col.mapv_inplace(|x| (x - mu) / sd);
        }
        let mut out = dataset.replace_features(features);
        if let (Some(t), Some(lo), Some(hi)) = (dataset.target(), self.target_min, self.target_max) {
            out = out.replace_target(t.mapv(|y| (y - lo) / (hi - lo)));
        }
        Ok(out)
    }

    pub fn inverse(&self, dataset: &Dataset) -> Result<Dataset> {
        if dataset.n_features() != self.means.len() {
            return Err(Error::DimensionMismatch { expected: self.means.len(), got: dataset.n_features() });
        }
        let mut features = dataset.features().to_owned();
        for (j, mut col) in features.axis_iter_mut(Axis(1)).enumerate() {
            let (mu, sd) = (self.means[j], self.stds[j]);
            col.mapv_inplace(|z| z * sd + mu);
        }
        let mut out = dataset.replace_features(features);
        if let (Some(t), Some(lo), Some(hi)) = (dataset.target(), self.target_min, self.target_max) {
            out = out.replace_target(t.mapv(|w| w * (hi - lo) + lo));
        }
        Ok(out)
    }

    /// Maps a prediction made in rescaled target units back to raw units.
    pub fn unscale_target(&self, w: f64) -> f64 {
        match (self.target_min, self.target_max) {
            (Some(lo), Some(hi)) => w * (hi - lo) + lo,
            _ => w,
        }
    }
}

/// Sample mean and sample standard deviation (ddof = 1).
fn mean_std(col: ArrayView1<'_, f64>) -> (f64, f64) {
    let n = col.len() as f64;
    let mean = col.sum() / n;
    if col.len() < 2 {
        return (mean, 0.0);
    }
    let ss: f64 = col.iter().map(|x| (x - mean) * (x - mean)).sum();
    (mean, (ss / (n - 1.0)).sqrt())
}

/// Standardizes every feature column to sample mean 0 and sample standard
/// deviation 1. If the dataset carries a target it is rescaled to `[0, 1]`.
pub fn standardize(dataset: &Dataset) -> Result<(Dataset, StandardizationParams)> {
    let mut means = Vec::with_capacity(dataset.n_features());
    let mut stds = Vec::with_capacity(dataset.n_features());
    for (j, col) in dataset.features().axis_iter(Axis(1)).enumerate() {
        let (mu, sd) = mean_std(col);
        if !(sd > 0.0) || !sd.is_finite() {
            return Err(Error::ConstantColumn(j));
        }
        means.push(mu);
        stds.push(sd);
    }
    let (target_min, target_max) = match dataset.target() {
        Some(t) => {
            let (_, lo, hi) = rescale_target(t.as_slice().expect("owned target is contiguous"))?;
            (Some(lo), Some(hi))
        }
        None => (None, None),
    };
    let params =
        StandardizationParams { feature_names: dataset.feature_names().to_vec(), means, stds, target_min, target_max };
    let out = params.apply(dataset)?;
    Ok((out, params))
}

/// Affine map of `target` onto `[0, 1]`; returns the rescaled vector and the
/// original min and max.
pub fn rescale_target(target: &[f64]) -> Result<(Vec<f64>, f64, f64)> {
    if target.is_empty() {
        return Err(Error::EmptyInput);
    }
    if let Some(v) = target.iter().find(|v| !v.is_finite()) {
        return Err(Error::NonFinite(format!("target value {v}")));
    }
    let lo = target.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = target.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if hi == lo {
        return Err(Error::DegenerateTarget);
    }
    let span = hi - lo;
    Ok((target.iter().map(|y| (y - lo) / span).collect(), lo, hi))
}
