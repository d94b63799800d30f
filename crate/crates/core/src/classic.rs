//! Mean / standard deviation / root-mean-square summaries of signed partial
//! derivatives and the linear / nonlinear / irrelevant rule built on them.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::data::JacobianTensor;
use crate::error::{Error, Result};
use crate::sensitivity::{power_mean_unchecked, scaled_power_sum};

pub const DEFAULT_EPS_REL: f64 = 1e-2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Relationship {
    Linear,
    Nonlinear,
    Irrelevant,
}

impl fmt::Display for Relationship {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Relationship::Linear => "linear",
            Relationship::Nonlinear => "nonlinear",
            Relationship::Irrelevant => "irrelevant",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SensitivitySummary {
    pub variable: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    pub s_avg: f64,
    /// Population standard deviation (ddof = 0).
    pub s_sd: f64,
    pub s_sq: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<Relationship>,
}

impl SensitivitySummary {
    pub fn label_name(&self) -> String {
        self.name.clone().unwrap_or_else(|| format!("X{}", self.variable + 1))
    }
}

pub fn classic_summary(jac: &JacobianTensor, j: usize, k: usize) -> Result<SensitivitySummary> {
    let d = jac.partials(j, k)?;
    let n = d.len() as f64;
    let s_avg = d.sum() / n;
    let var = d.iter().map(|x| (x - s_avg) * (x - s_avg)).sum::<f64>() / n;
    let mags: Vec<f64> = d.iter().map(|x| x.abs()).collect();
    Ok(SensitivitySummary {
        variable: j,
        name: None,
        s_avg,
        s_sd: var.sqrt(),
        s_sq: power_mean_unchecked(&mags, 2.0),
        label: None,
    })
}

/// `irrelevant` when both the spread and the mean are below
/// `eps_rel * scale`, `linear` when only the spread is, `nonlinear` otherwise.
pub fn classify_variable(summary: &SensitivitySummary, scale: f64, eps_rel: f64) -> Result<Relationship> {
    if !(scale > 0.0) || !scale.is_finite() {
        return Err(Error::NonPositiveScale(scale));
    }
    if !(eps_rel > 0.0 && eps_rel < 1.0) {
        return Err(Error::InvalidArgument(format!("eps_rel must lie in (0, 1), got {eps_rel}")));
    }
    let threshold = eps_rel * scale;
    Ok(if summary.s_sd >= threshold {
        Relationship::Nonlinear
    } else if summary.s_avg.abs() >= threshold {
        Relationship::Linear
    } else {
        Relationship::Irrelevant
    })
}

/// Labeled summaries for every feature of output `k`, scaled against the
/// largest `s_sq`. An all-zero Jacobian labels everything irrelevant.
pub fn summarize(jac: &JacobianTensor, k: usize, eps_rel: f64) -> Result<Vec<SensitivitySummary>> {
    let mut out = (0..jac.n_features()).map(|j| classic_summary(jac, j, k)).collect::<Result<Vec<_>>>()?;
    let scale = out.iter().map(|s| s.s_sq).fold(0.0, f64::max);
    let scale = if scale > 0.0 { scale } else { 1.0 };
    for s in &mut out {
        s.label = Some(classify_variable(s, scale, eps_rel)?);
    }
    Ok(out)
}

/// `E[|d f_k / d X_j|^alpha]` under the empirical distribution.
pub fn moment(jac: &JacobianTensor, j: usize, k: usize, alpha: f64) -> Result<f64> {
    if !alpha.is_finite() || alpha < 1.0 {
        return Err(Error::InvalidArgument(format!("moment order must be finite and >= 1, got {alpha}")));
    }
    let mags: Vec<f64> = jac.partials(j, k)?.iter().map(|x| x.abs()).collect();
    let (t_max, sum) = scaled_power_sum(&mags, alpha);
    if t_max == 0.0 {
        return Ok(0.0);
    }
    // exp(alpha * ln t_max + ln(sum / N))
    let value = (alpha * t_max.ln() + (sum / mags.len() as f64).ln()).exp();
    if !value.is_finite() {
        return Err(Error::NonFinite(format!("moment of order {alpha} overflows")));
    }
    Ok(value)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sensitivity::alpha_mean_sensitivity;
    use ndarray::Array3;

    fn scalar_jac(derivs: &[f64]) -> JacobianTensor {
        let n = derivs.len();
        JacobianTensor::new(Array3::from_shape_vec((n, 1, 1), derivs.to_vec()).unwrap()).unwrap()
    }

    fn summary(s_avg: f64, s_sd: f64, s_sq: f64) -> SensitivitySummary {
        SensitivitySummary { variable: 0, name: None, s_avg, s_sd, s_sq, label: None }
    }

    #[test]
    fn constant_and_zero_derivatives() {
        let s = classic_summary(&scalar_jac(&[2.0; 5]), 0, 0).unwrap();
        assert_eq!((s.s_avg, s.s_sd, s.s_sq), (2.0, 0.0, 2.0));
        let s = classic_summary(&scalar_jac(&[0.0; 5]), 0, 0).unwrap();
        assert_eq!((s.s_avg, s.s_sd, s.s_sq), (0.0, 0.0, 0.0));
    }

    #[test]
    fn classification_rules() {
        assert_eq!(classify_variable(&summary(2.0, 0.0, 2.0), 2.0, 1e-3).unwrap(), Relationship::Linear);
        assert_eq!(classify_variable(&summary(0.0, 0.0, 0.0), 2.0, 1e-2).unwrap(), Relationship::Irrelevant);
        assert_eq!(classify_variable(&summary(0.0, 2.0, 2.0), 2.0, 1e-2).unwrap(), Relationship::Nonlinear);
        assert!(matches!(classify_variable(&summary(1.0, 1.0, 1.0), 0.0, 1e-2), Err(Error::NonPositiveScale(_))));
    }

    #[test]
    fn classification_is_scale_free() {
        let cases = [summary(0.3, 0.001, 0.3), summary(0.0, 0.5, 0.5), summary(1e-4, 1e-4, 1e-4)];
        for s in cases {
            let base = classify_variable(&s, 1.0, 1e-2).unwrap();
            for c in [1e-6, 3.0, 1e5] {
                let scaled = summary(s.s_avg * c, s.s_sd * c, s.s_sq * c);
                assert_eq!(classify_variable(&scaled, c, 1e-2).unwrap(), base);
            }
        }
    }

    #[test]
    fn moment_examples() {
        assert!((moment(&scalar_jac(&[1.5; 4]), 0, 0, 3.0).unwrap() - 3.375).abs() < 1e-14);
        assert!((moment(&scalar_jac(&[1.0, -2.0]), 0, 0, 2.0).unwrap() - 2.5).abs() < 1e-14);
        assert!(moment(&scalar_jac(&[1.0]), 0, 0, f64::INFINITY).is_err());
    }

    #[test]
    fn moment_matches_power_of_alpha_mean() {
        let jac = scalar_jac(&[0.3, -1.7, 4.2, 0.0, 2.2, -0.01]);
        for alpha in [1.0, 1.5, 2.0, 3.0, 8.0, 16.0] {
            let m = moment(&jac, 0, 0, alpha).unwrap();
            let ms = alpha_mean_sensitivity(&jac, 0, 0, alpha).unwrap();
            assert!((m - ms.powf(alpha)).abs() <= 1e-12 * m);
        }
    }

    #[test]
    fn pythagorean_identity() {
        let d = [0.3, -1.7, 4.2, 0.0, 2.2, -0.01, 7.5];
        let s = classic_summary(&scalar_jac(&d), 0, 0).unwrap();
        let lhs = s.s_sq * s.s_sq;
        assert!((lhs - (s.s_avg * s.s_avg + s.s_sd * s.s_sd)).abs() <= 1e-10 * lhs);
    }
}
