//! Curve-shape diagnostics: flatness, relevance and crossings.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sensitivity::AlphaCurve;

pub const DEFAULT_FLAT_TOL: f64 = 0.05;
pub const DEFAULT_IRREL_TOL: f64 = 0.01;
/// Curve differences below this fraction of the larger value count as ties.
const TIE_REL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CurveFlag {
    LinearLike,
    Irrelevant,
    LocalizedHighSensitivity,
}

impl fmt::Display for CurveFlag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            CurveFlag::LinearLike => "linear-like",
            CurveFlag::Irrelevant => "irrelevant",
            CurveFlag::LocalizedHighSensitivity => "localized-high-sensitivity",
        })
    }
}

/// This curve rises above `other`'s at `alpha`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Crossing {
    pub other: usize,
    pub alpha: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurveDiagnostics {
    pub variable: usize,
    /// `ms^inf / ms^1`, with `0 / 0` taken as 1.
    pub flatness_ratio: f64,
    /// `ms^inf` relative to the largest `ms^inf` of all variables.
    pub relevance: f64,
    pub flags: Vec<CurveFlag>,
    pub crossings: Vec<Crossing>,
}

impl CurveDiagnostics {
    pub fn has(&self, flag: CurveFlag) -> bool {
        self.flags.contains(&flag)
    }
}

fn check_grid(curves: &[AlphaCurve]) -> Result<()> {
    let first = curves.first().ok_or(Error::EmptyInput)?;
    if first.points.is_empty() {
        return Err(Error::EmptyInput);
    }
    for c in &curves[1..] {
        if c.points.len() != first.points.len() || c.alphas().zip(first.alphas()).any(|(a, b)| a != b) {
            return Err(Error::GridMismatch);
        }
    }
    Ok(())
}

fn median(values: &mut [f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    values.sort_by(f64::total_cmp);
    let n = values.len();
    Some(if n % 2 == 1 { values[n / 2] } else { 0.5 * (values[n / 2 - 1] + values[n / 2]) })
}

/// Upward crossings of `a` over `b`, located by linear interpolation of the
/// difference in `log alpha`.
pub fn upward_crossings(a: &AlphaCurve, b: &AlphaCurve) -> Vec<f64> {
    let mut out = Vec::new();
    // last strictly negative difference: (log alpha, diff)
    let mut below: Option<(f64, f64)> = None;
    for ((alpha, va), vb) in a.points.iter().map(|p| (p.0, p.1)).zip(b.values()) {
        let diff = va - vb;
        let tie = diff.abs() <= TIE_REL * va.abs().max(vb.abs());
        let la = alpha.ln();
        if tie {
            continue;
        }
        if diff < 0.0 {
            below = Some((la, diff));
        } else if let Some((l0, d0)) = below.take() {
            let t = -d0 / (diff - d0);
            out.push((l0 + t * (la - l0)).exp());
        }
    }
    out
}

/// Flags every curve: `linear-like` when `ms^inf <= (1 + flat_tol) ms^1`,
/// `irrelevant` when `ms^inf <= irrel_tol * max ms^inf`, and
/// `localized-high-sensitivity` when a relevant curve starts below the
/// median `ms^1` of the relevant variables yet overtakes a curve that
/// started higher.
pub fn diagnose(curves: &[AlphaCurve], flat_tol: f64, irrel_tol: f64) -> Result<Vec<CurveDiagnostics>> {
    check_grid(curves)?;
    if !(flat_tol >= 0.0) || !(irrel_tol >= 0.0) {
        return Err(Error::InvalidArgument("tolerances must be non-negative".into()));
    }
    let max_inf = curves.iter().map(|c| c.asymptote).fold(0.0, f64::max);
    let irrelevant: Vec<bool> = curves.iter().map(|c| c.asymptote <= irrel_tol * max_inf).collect();
    let mut relevant_firsts: Vec<f64> =
        curves.iter().zip(&irrelevant).filter(|(_, irr)| !**irr).map(|(c, _)| c.first()).collect();
    let median_first = median(&mut relevant_firsts);

    let mut out = Vec::with_capacity(curves.len());
    for (idx, c) in curves.iter().enumerate() {
        let ms1 = c.first();
        let flatness_ratio = if ms1 == 0.0 && c.asymptote == 0.0 { 1.0 } else { c.asymptote / ms1 };
        let relevance = if max_inf > 0.0 { c.asymptote / max_inf } else { 0.0 };
        let mut crossings = Vec::new();
        for (other_idx, o) in curves.iter().enumerate() {
            if other_idx == idx {
                continue;
            }
            for alpha in upward_crossings(c, o) {
                crossings.push(Crossing { other: o.variable, alpha });
            }
        }
        crossings.sort_by(|a, b| a.alpha.total_cmp(&b.alpha).then(a.other.cmp(&b.other)));

        let mut flags = Vec::new();
        if flatness_ratio <= 1.0 + flat_tol {
            flags.push(CurveFlag::LinearLike);
        }
        if irrelevant[idx] {
            flags.push(CurveFlag::Irrelevant);
        } else if let Some(med) = median_first {
            let overtakes_higher =
                crossings.iter().any(|x| curves.iter().any(|o| o.variable == x.other && o.first() > ms1));
            if ms1 < med && overtakes_higher {
                flags.push(CurveFlag::LocalizedHighSensitivity);
            }
        }
        out.push(CurveDiagnostics { variable: c.variable, flatness_ratio, relevance, flags, crossings });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn curve(variable: usize, values: &[f64], asymptote: f64) -> AlphaCurve {
        let alphas = [1.0, 2.0, 4.0, 8.0, 16.0];
        AlphaCurve {
            variable,
            name: None,
            output: 0,
            points: alphas.iter().copied().zip(values.iter().copied()).collect(),
            asymptote,
        }
    }

    fn sample() -> Vec<AlphaCurve> {
        vec![
            curve(0, &[1.6, 2.0, 2.6, 3.3, 4.1], 8.8),
            curve(1, &[2.0; 5], 2.0),
            curve(2, &[0.08, 0.15, 0.5, 1.5, 4.0], 39.0),
            curve(3, &[0.0; 5], 0.0),
        ]
    }

    #[test]
    fn flags_on_a_typical_picture() {
        let d = diagnose(&sample(), DEFAULT_FLAT_TOL, DEFAULT_IRREL_TOL).unwrap();
        assert_eq!(d[1].flags, vec![CurveFlag::LinearLike]);
        assert_eq!(d[1].flatness_ratio, 1.0);
        assert!(d[0].flags.is_empty());
        assert_eq!(d[2].flags, vec![CurveFlag::LocalizedHighSensitivity]);
        assert_eq!(d[3].flags, vec![CurveFlag::LinearLike, CurveFlag::Irrelevant]);
        assert_eq!(d[3].flatness_ratio, 1.0);
        assert_eq!(d[2].relevance, 1.0);
        let over_x2 = d[2].crossings.iter().find(|c| c.other == 1).unwrap();
        assert!(over_x2.alpha > 8.0 && over_x2.alpha < 16.0);
    }

    #[test]
    fn crossing_is_interpolated_in_log_alpha() {
        let a = curve(0, &[0.0, 0.0, 1.0, 3.0, 3.0], 3.0);
        let b = curve(1, &[2.0; 5], 2.0);
        // diff -1 at alpha 4, +1 at alpha 8: midpoint in log scale
        let x = upward_crossings(&a, &b);
        assert_eq!(x.len(), 1);
        assert!((x[0] - (32.0_f64).sqrt()).abs() < 1e-12);
        assert!(upward_crossings(&b, &a).is_empty());
    }

    #[test]
    fn rescaling_keeps_flags() {
        let base = diagnose(&sample(), DEFAULT_FLAT_TOL, DEFAULT_IRREL_TOL).unwrap();
        for c in [1e-8, 0.37, 1e6] {
            let scaled: Vec<AlphaCurve> = sample()
                .into_iter()
                .map(|mut cv| {
                    cv.points.iter_mut().for_each(|p| p.1 *= c);
                    cv.asymptote *= c;
                    cv
                })
                .collect();
            let d = diagnose(&scaled, DEFAULT_FLAT_TOL, DEFAULT_IRREL_TOL).unwrap();
            for (x, y) in d.iter().zip(&base) {
                assert_eq!(x.flags, y.flags);
                assert_eq!(x.crossings.len(), y.crossings.len());
            }
        }
    }

    #[test]
    fn grid_mismatch_and_empty() {
        let mut curves = sample();
        curves[1].points[2].0 = 3.0;
        assert!(matches!(diagnose(&curves, 0.05, 0.01), Err(Error::GridMismatch)));
        assert!(matches!(diagnose(&[], 0.05, 0.01), Err(Error::EmptyInput)));
    }
}
