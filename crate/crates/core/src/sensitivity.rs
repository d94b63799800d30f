//! Generalized power means, alpha-mean sensitivities, alpha-curves and the
//! closed-form Lp -> Lq sensitivity of a variable over a dataset.
//!
//! All power sums are evaluated relative to the largest magnitude
//! (`t_max * (sum (t_i / t_max)^a / N)^(1/a)`), i.e. a max-shifted
//! log-sum-exp, so nothing overflows for large exponents or magnitudes and
//! a constant input comes back bit-exact.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::data::{JacobianTensor, NormPair};
use crate::error::{Error, Result};

fn check_alpha(alpha: f64) -> Result<()> {
    if alpha.is_nan() || alpha < 1.0 {
        return Err(Error::InvalidArgument(format!("alpha must lie in [1, inf], got {alpha}")));
    }
    Ok(())
}

fn check_magnitudes(values: &[f64]) -> Result<()> {
    if values.is_empty() {
        return Err(Error::EmptyInput);
    }
    for &v in values {
        if !v.is_finite() {
            return Err(Error::NonFinite(format!("value {v}")));
        }
        if v < 0.0 {
            return Err(Error::NegativeValue(v));
        }
    }
    Ok(())
}

/// `(t_max, sum_i (t_i / t_max)^alpha)`, with `(0, 0)` for all-zero input.
/// Summation runs in index order.
pub(crate) fn scaled_power_sum(values: &[f64], alpha: f64) -> (f64, f64) {
    let t_max = values.iter().copied().fold(0.0, f64::max);
    if t_max == 0.0 {
        return (0.0, 0.0);
    }
    let sum = values.iter().filter(|&&t| t > 0.0).map(|&t| (t / t_max).powf(alpha)).sum();
    (t_max, sum)
}

/// Generalized alpha-mean `((sum t_i^alpha) / N)^(1/alpha)`; `alpha = inf`
/// gives the maximum.
pub fn generalized_mean(values: &[f64], alpha: f64) -> Result<f64> {
    check_alpha(alpha)?;
    check_magnitudes(values)?;
    Ok(power_mean_unchecked(values, alpha))
}

pub(crate) fn power_mean_unchecked(values: &[f64], alpha: f64) -> f64 {
    let (t_max, sum) = scaled_power_sum(values, if alpha.is_infinite() { 1.0 } else { alpha });
    if t_max == 0.0 || alpha.is_infinite() {
        return t_max;
    }
    let n = values.len() as f64;
    t_max * (sum / n).powf(1.0 / alpha)
}

/// Ordered alpha values at which curves are sampled.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlphaGrid {
    alphas: Vec<f64>,
    include_infinity: bool,
}

impl AlphaGrid {
    pub fn new(alphas: Vec<f64>, include_infinity: bool) -> Result<Self> {
        if alphas.is_empty() {
            return Err(Error::EmptyInput);
        }
        for &a in &alphas {
            if !a.is_finite() || a < 1.0 {
                return Err(Error::InvalidArgument(format!("grid values must be finite and >= 1, got {a}")));
            }
        }
        if alphas.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::InvalidArgument("grid must be strictly increasing".into()));
        }
        Ok(AlphaGrid { alphas, include_infinity })
    }

    /// `k` geometrically spaced points from `lo` to `hi` inclusive.
    pub fn geometric(lo: f64, hi: f64, k: usize, include_infinity: bool) -> Result<Self> {
        if k == 0 {
            return Err(Error::EmptyInput);
        }
        if k == 1 || lo == hi {
            return Self::new(vec![lo], include_infinity);
        }
        if !(hi > lo) {
            return Err(Error::InvalidArgument(format!("need lo < hi, got {lo}:{hi}")));
        }
        let ratio = (hi / lo).ln() / (k - 1) as f64;
        let mut alphas: Vec<f64> = (0..k).map(|i| lo * (ratio * i as f64).exp()).collect();
        alphas[0] = lo;
        alphas[k - 1] = hi;
        Self::new(alphas, include_infinity)
    }

    pub fn alphas(&self) -> &[f64] {
        &self.alphas
    }

    pub fn include_infinity(&self) -> bool {
        self.include_infinity
    }
}

impl Default for AlphaGrid {
    fn default() -> Self {
        AlphaGrid {
            alphas: vec![1.0, 1.25, 1.5, 2.0, 2.5, 3.0, 4.0, 5.0, 6.0, 8.0, 10.0, 12.0, 16.0],
            include_infinity: true,
        }
    }
}

/// Parses `lo:hi:geomK` or a comma-separated list; infinity is implicit.
impl FromStr for AlphaGrid {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::InvalidArgument(format!("bad alpha grid `{s}`"));
        let s = s.trim();
        if s == "default" {
            return Ok(AlphaGrid::default());
        }
        let parts: Vec<&str> = s.split(':').collect();
        match parts.as_slice() {
            [lo, hi, shape] => {
                let lo: f64 = lo.trim().parse().map_err(|_| bad())?;
                let hi: f64 = hi.trim().parse().map_err(|_| bad())?;
                let k: usize = shape.trim().strip_prefix("geom").ok_or_else(bad)?.parse().map_err(|_| bad())?;
                AlphaGrid::geometric(lo, hi, k, true)
            }
            [list] => {
                let alphas =
                    list.split(',').map(|a| a.trim().parse::<f64>().map_err(|_| bad())).collect::<Result<Vec<_>>>()?;
                AlphaGrid::new(alphas, true)
            }
            _ => Err(bad()),
        }
    }
}

impl fmt::Display for AlphaGrid {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let list: Vec<String> = self.alphas.iter().map(|a| a.to_string()).collect();
        write!(f, "{}", list.join(","))
    }
}

/// `alpha -> ms^alpha` sampled on a grid, plus the `ms^inf` limit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlphaCurve {
    pub variable: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    pub output: usize,
    /// `(alpha, ms^alpha)` pairs in grid order.
    pub points: Vec<(f64, f64)>,
    pub asymptote: f64,
}

impl AlphaCurve {
    pub fn alphas(&self) -> impl Iterator<Item = f64> + '_ {
        self.points.iter().map(|p| p.0)
    }

    pub fn values(&self) -> impl Iterator<Item = f64> + '_ {
        self.points.iter().map(|p| p.1)
    }

    /// Display name, `X{j+1}` when unnamed.
    pub fn label(&self) -> String {
        self.name.clone().unwrap_or_else(|| format!("X{}", self.variable + 1))
    }

    /// `ms^alpha` at the first grid point (alpha = 1 on the default grid).
    pub fn first(&self) -> f64 {
        self.points.first().map_or(self.asymptote, |p| p.1)
    }
}

fn abs_partials(jac: &JacobianTensor, j: usize, k: usize) -> Result<Vec<f64>> {
    Ok(jac.partials(j, k)?.iter().map(|d| d.abs()).collect())
}

/// Generalized alpha-mean of `|d f_k / d X_j|` over the dataset.
pub fn alpha_mean_sensitivity(jac: &JacobianTensor, j: usize, k: usize, alpha: f64) -> Result<f64> {
    check_alpha(alpha)?;
    let mags = abs_partials(jac, j, k)?;
    Ok(power_mean_unchecked(&mags, alpha))
}

pub fn alpha_curve(jac: &JacobianTensor, j: usize, k: usize, grid: &AlphaGrid) -> Result<AlphaCurve> {
    let mags = abs_partials(jac, j, k)?;
    let points = grid.alphas().iter().map(|&a| (a, power_mean_unchecked(&mags, a))).collect();
    Ok(AlphaCurve { variable: j, name: None, output: k, points, asymptote: power_mean_unchecked(&mags, f64::INFINITY) })
}

/// Curves for every feature of output `k`.
pub fn alpha_curves(jac: &JacobianTensor, k: usize, grid: &AlphaGrid) -> Result<Vec<AlphaCurve>> {
    (0..jac.n_features()).map(|j| alpha_curve(jac, j, k, grid)).collect()
}

/// Attaches feature names to curves, by variable index.
pub fn name_curves(curves: &mut [AlphaCurve], names: &[String]) {
    for c in curves {
        c.name = names.get(c.variable).cloned();
    }
}

/// The alpha for which the `(p, q)` sensitivity of a scalar function is
/// `N^(1/alpha) * ms^alpha`: `pq / (p - q)` when `p > q`, infinity otherwise.
pub fn alpha_from_pq(norms: NormPair) -> f64 {
    let (p, q) = (norms.p.get(), norms.q.get());
    if p <= q {
        f64::INFINITY
    } else if p.is_infinite() {
        q
    } else {
        p * q / (p - q)
    }
}

/// Closed-form sensitivity of feature `j` for perturbations measured in
/// `L^p` and output variation measured in `L^q`.
///
/// With `g_i = d_j f(x_i)` in `R^m`:
/// * `p <= q`: `max_i ||g_i||_q`;
/// * `p > q`:  `(sum_i (sum_k |g_ik|^q)^(p/(p-q)))^((p-q)/(pq))`, and for
///   `p = inf` its limit `(sum_i sum_k |g_ik|^q)^(1/q)`.
pub fn sensitivity_pq(jac: &JacobianTensor, j: usize, norms: NormPair) -> Result<f64> {
    let block = jac.feature_block(j)?;
    let (p, q) = (norms.p.get(), norms.q.get());
    let g_max = block.iter().fold(0.0_f64, |acc, v| acc.max(v.abs()));
    if g_max == 0.0 {
        return Ok(0.0);
    }
    if q.is_infinite() {
        // p <= q necessarily
        return Ok(g_max);
    }
    // s_i = sum_k (|g_ik| / g_max)^q
    let s: Vec<f64> = block.outer_iter().map(|row| row.iter().map(|v| (v.abs() / g_max).powf(q)).sum()).collect();
    let s_max = s.iter().copied().fold(0.0, f64::max);
    let value = if p <= q {
        g_max * s_max.powf(1.0 / q)
    } else if p.is_infinite() {
        g_max * s.iter().sum::<f64>().powf(1.0 / q)
    } else {
        let inner_exp = p / (p - q);
        let outer_exp = (p - q) / (p * q);
        let total: f64 = s.iter().map(|&si| (si / s_max).powf(inner_exp)).sum();
        g_max * s_max.powf(1.0 / q) * total.powf(outer_exp)
    };
    if !value.is_finite() {
        return Err(Error::NonFinite(format!("sensitivity for feature {j} with {norms}")));
    }
    Ok(value)
}
