//! Curve diagnostics, SVG charts and the analysis report.

pub mod diagnose;
pub mod emit;
pub mod svg;

use serde::{Deserialize, Serialize};

use crate::classic::SensitivitySummary;
use crate::sensitivity::AlphaCurve;

pub use diagnose::{diagnose, Crossing, CurveDiagnostics, CurveFlag, DEFAULT_FLAT_TOL, DEFAULT_IRREL_TOL};
pub use emit::{emit_report, parse_report, validate_report, Report, ReportPair, Verdict, REPORT_SCHEMA};
pub use svg::{render_alpha_curves, render_sensitivity_plots};

/// On-disk form of a set of alpha-curves.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurvesDocument {
    pub output: usize,
    pub grid: Vec<f64>,
    pub include_infinity: bool,
    pub curves: Vec<AlphaCurve>,
    pub diagnostics: Vec<CurveDiagnostics>,
}

/// On-disk form of the derivative summaries.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassicDocument {
    pub output: usize,
    pub eps_rel: f64,
    pub summaries: Vec<SensitivitySummary>,
}
