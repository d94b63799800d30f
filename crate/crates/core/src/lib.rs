//! Metric sensitivities for differentiable models: `(p, q)` operator-norm
//! sensitivities, alpha-mean sensitivities and alpha-curves, with an MLP
//! surrogate pipeline, synthetic ground truth, baselines and a numerical
//! oracle.

pub mod baselines;
pub mod classic;
pub mod cli;
pub mod data;
pub mod error;
pub mod io;
pub mod mlp;
pub mod oracle;
pub mod predictor;
pub mod report;
pub mod sensitivity;
pub mod synthetic;

pub use data::{Dataset, Exponent, JacobianTensor, NormPair, StandardizationParams};
pub use error::{Error, Result};
pub use sensitivity::{alpha_curve, alpha_curves, alpha_mean_sensitivity, sensitivity_pq, AlphaCurve, AlphaGrid};
