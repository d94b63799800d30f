//! Input-permutation importance.

use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::predictor::Predictor;

pub const DEFAULT_REPEATS: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ErrorMetric {
    Mse,
    Mae,
}

impl ErrorMetric {
    fn eval(self, predictions: impl Iterator<Item = f64>, targets: &[f64]) -> f64 {
        let n = targets.len() as f64;
        let total: f64 = match self {
            ErrorMetric::Mse => predictions.zip(targets).map(|(p, y)| (p - y) * (p - y)).sum(),
            ErrorMetric::Mae => predictions.zip(targets).map(|(p, y)| (p - y).abs()).sum(),
        };
        total / n
    }
}

impl fmt::Display for ErrorMetric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ErrorMetric::Mse => "mse",
            ErrorMetric::Mae => "mae",
        })
    }
}

impl FromStr for ErrorMetric {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "mse" => Ok(ErrorMetric::Mse),
            "mae" => Ok(ErrorMetric::Mae),
            other => Err(Error::InvalidArgument(format!("unknown error metric `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PermutationResult {
    pub metric: ErrorMetric,
    pub seed: u64,
    pub baseline_error: f64,
    pub feature_names: Vec<String>,
    /// Mean error increase per feature.
    pub importances: Vec<f64>,
    /// Standard deviation of the increase across repeats.
    pub std_devs: Vec<f64>,
    /// `per_repeat[j][r]`: error increase of repeat `r` for feature `j`.
    pub per_repeat: Vec<Vec<f64>>,
}

impl PermutationResult {
    pub fn to_csv(&self) -> Result<String> {
        let mut wtr = csv::Writer::from_writer(Vec::new());
        let repeats = self.per_repeat.first().map_or(0, Vec::len);
        let mut header = vec!["feature".to_string(), "importance".into(), "std".into()];
        header.extend((0..repeats).map(|r| format!("repeat_{r}")));
        wtr.write_record(&header)?;
        for (j, name) in self.feature_names.iter().enumerate() {
            let mut rec = vec![name.clone(), self.importances[j].to_string(), self.std_devs[j].to_string()];
            rec.extend(self.per_repeat[j].iter().map(|v| v.to_string()));
            wtr.write_record(&rec)?;
        }
        let bytes = wtr.into_inner().map_err(|e| Error::io("<csv>", e.into_error()))?;
        Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
    }
}

/// Seeded stream for one `(feature, repeat)` pair; independent of how the
/// pairs are scheduled.
fn pair_rng(seed: u64, feature: usize, repeat: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(((feature as u64) << 32) | repeat as u64);
    rng
}

/// Error increase when each feature column is shuffled, averaged over
/// `repeats` independent permutations. Negative importances are kept.
pub fn permutation_importance<P: Predictor + ?Sized>(
    predictor: &P,
    dataset: &Dataset,
    metric: ErrorMetric,
    repeats: usize,
    seed: u64,
) -> Result<PermutationResult> {
    if repeats == 0 {
        return Err(Error::InvalidArgument("repeats must be at least 1".into()));
    }
    let target = dataset.target().ok_or(Error::MissingTarget)?.to_vec();
    if predictor.n_features() != dataset.n_features() {
        return Err(Error::DimensionMismatch { expected: predictor.n_features(), got: dataset.n_features() });
    }
    let features = dataset.features();
    let base_pred = predictor.predict(features);
    if let Some(p) = base_pred.iter().find(|p| !p.is_finite()) {
        return Err(Error::NonFinite(format!("prediction {p}")));
    }
    let baseline_error = metric.eval(base_pred.iter().copied(), &target);

    let n = dataset.n_samples();
    let n_features = dataset.n_features();
    let pairs: Vec<(usize, usize)> = (0..n_features).flat_map(|j| (0..repeats).map(move |r| (j, r))).collect();
    let increases: Vec<Result<f64>> = pairs
        .par_iter()
        .map(|&(j, r)| {
            let mut perm: Vec<usize> = (0..n).collect();
            perm.shuffle(&mut pair_rng(seed, j, r));
            let column = features.column(j);
            let mut row = vec![0.0; n_features];
            let mut preds = Vec::with_capacity(n);
            for (i, &src) in perm.iter().enumerate() {
                row.iter_mut().zip(features.row(i)).for_each(|(d, s)| *d = *s);
                row[j] = column[src];
                let p = predictor.predict_row(&row);
                if !p.is_finite() {
                    return Err(Error::NonFinite(format!("prediction {p} with feature {j} permuted")));
                }
                preds.push(p);
            }
            Ok(metric.eval(preds.into_iter(), &target) - baseline_error)
        })
        .collect();

    let mut per_repeat = vec![Vec::with_capacity(repeats); n_features];
    for (&(j, _), inc) in pairs.iter().zip(increases) {
        per_repeat[j].push(inc?);
    }
    let importances: Vec<f64> = per_repeat.iter().map(|v| v.iter().sum::<f64>() / repeats as f64).collect();
    let std_devs = per_repeat
        .iter()
        .zip(&importances)
        .map(|(v, m)| (v.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / repeats as f64).sqrt())
        .collect();
    Ok(PermutationResult {
        metric,
        seed,
        baseline_error,
        feature_names: dataset.feature_names().to_vec(),
        importances,
        std_devs,
        per_repeat,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::predictor::FnPredictor;
    use crate::synthetic::gen_normal_inputs;
    use ndarray::Array1;

    fn with_target(ds: Dataset, f: impl Fn(&[f64]) -> f64) -> Dataset {
        let y: Array1<f64> = ds.features().rows().into_iter().map(|r| f(&r.to_vec())).collect();
        ds.with_target(y, "y").unwrap()
    }

    #[test]
    fn constant_predictor_has_zero_importance() {
        let ds = with_target(gen_normal_inputs(200, 3, 2).unwrap(), |x| x[0] + x[1]);
        let res = permutation_importance(&FnPredictor::new(3, |_| 0.5), &ds, ErrorMetric::Mse, 4, 1).unwrap();
        assert!(res.per_repeat.iter().flatten().all(|&v| v == 0.0));
    }

    #[test]
    fn ignored_columns_are_exactly_zero_and_repeat_counts_match() {
        let ds = with_target(gen_normal_inputs(300, 4, 3).unwrap(), |x| x[0] * 2.0);
        let res =
            permutation_importance(&FnPredictor::new(4, |x| 2.0 * x[0] + 0.1 * x[1]), &ds, ErrorMetric::Mae, 5, 9)
                .unwrap();
        assert!(res.per_repeat.iter().all(|v| v.len() == 5));
        for j in 2..4 {
            assert!(res.per_repeat[j].iter().all(|&v| v == 0.0));
        }
        assert!(res.importances[0] > res.importances[1]);
    }

    #[test]
    fn deterministic_for_a_seed() {
        let ds = with_target(gen_normal_inputs(100, 2, 4).unwrap(), |x| x[0] - x[1]);
        let p = FnPredictor::new(2, |x: &[f64]| x[0] - x[1]);
        let a = permutation_importance(&p, &ds, ErrorMetric::Mse, 3, 11).unwrap();
        let b = permutation_importance(&p, &ds, ErrorMetric::Mse, 3, 11).unwrap();
        assert_eq!(a, b);
        let c = permutation_importance(&p, &ds, ErrorMetric::Mse, 3, 12).unwrap();
        assert_ne!(a.per_repeat, c.per_repeat);
    }

    #[test]
    fn missing_target_is_an_error() {
        let ds = gen_normal_inputs(10, 2, 0).unwrap();
        let p = FnPredictor::new(2, |x: &[f64]| x[0]);
        assert!(matches!(permutation_importance(&p, &ds, ErrorMetric::Mse, 1, 0), Err(Error::MissingTarget)));
    }

    #[test]
    fn non_finite_predictions_are_an_error() {
        let ds = with_target(gen_normal_inputs(10, 1, 0).unwrap(), |x| x[0]);
        let p = FnPredictor::new(1, |_: &[f64]| f64::NAN);
        assert!(matches!(permutation_importance(&p, &ds, ErrorMetric::Mse, 1, 0), Err(Error::NonFinite(_))));
    }

    #[test]
    fn passthrough_feature_importance_is_twice_its_variance() {
        let ds = with_target(gen_normal_inputs(20_000, 1, 5).unwrap(), |x| x[0]);
        let col = ds.features().column(0).to_owned();
        let mean = col.mean().unwrap();
        let var = col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / col.len() as f64;
        let res = permutation_importance(&FnPredictor::new(1, |x: &[f64]| x[0]), &ds, ErrorMetric::Mse, 10, 3).unwrap();
        assert!((res.importances[0] - 2.0 * var).abs() < 0.05 * 2.0 * var, "{} vs {}", res.importances[0], 2.0 * var);
    }
}
