use ndarray::ArrayView2;

/// Anything that maps a feature row to a scalar prediction.
pub trait Predictor: Sync {
    fn n_features(&self) -> usize;

    fn predict_row(&self, x: &[f64]) -> f64;

    fn predict(&self, features: ArrayView2<'_, f64>) -> Vec<f64> {
        let mut buf = Vec::with_capacity(features.ncols());
        features
            .rows()
            .into_iter()
            .map(|row| {
                buf.clear();
                buf.extend(row.iter());
                self.predict_row(&buf)
            })
            .collect()
    }
}

/// Adapts a closure to [`Predictor`].
pub struct FnPredictor<F> {
    n_features: usize,
    f: F,
}

impl<F: Fn(&[f64]) -> f64 + Sync> FnPredictor<F> {
    pub fn new(n_features: usize, f: F) -> Self {
        FnPredictor { n_features, f }
    }
}

impl<F: Fn(&[f64]) -> f64 + Sync> Predictor for FnPredictor<F> {
    fn n_features(&self) -> usize {
        self.n_features
    }

    fn predict_row(&self, x: &[f64]) -> f64 {
        (self.f)(x)
    }
}
