//! Versioned JSON report and its Markdown rendering.

use std::fmt::Write;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::baselines::PermutationResult;
use crate::classic::{Relationship, SensitivitySummary};
use crate::error::{Error, Result};
use crate::report::diagnose::{CurveDiagnostics, CurveFlag};
use crate::sensitivity::AlphaCurve;
use crate::synthetic::ShapleyTable;

pub const REPORT_SCHEMA: &str = "alpha-sens/1";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Verdict {
    Linear,
    Nonlinear,
    Localized,
    Irrelevant,
}

impl Verdict {
    pub fn from_flags(d: &CurveDiagnostics) -> Verdict {
        if d.has(CurveFlag::Irrelevant) {
            Verdict::Irrelevant
        } else if d.has(CurveFlag::LinearLike) {
            Verdict::Linear
        } else if d.has(CurveFlag::LocalizedHighSensitivity) {
            Verdict::Localized
        } else {
            Verdict::Nonlinear
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Verdict::Linear => "linear",
            Verdict::Nonlinear => "nonlinear",
            Verdict::Localized => "localized",
            Verdict::Irrelevant => "irrelevant",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VariableVerdict {
    pub variable: usize,
    pub name: String,
    pub verdict: Verdict,
    pub ms_first: f64,
    pub ms_inf: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub classic_label: Option<Relationship>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShapleySummary {
    pub function: String,
    pub feature_names: Vec<String>,
    pub base_value: f64,
    pub mean_abs: Vec<f64>,
}

impl From<&ShapleyTable> for ShapleySummary {
    fn from(t: &ShapleyTable) -> Self {
        ShapleySummary {
            function: t.function.clone(),
            feature_names: t.feature_names.clone(),
            base_value: t.base_value,
            mean_abs: t.mean_abs.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub schema: String,
    pub variables: Vec<VariableVerdict>,
    pub curves: Vec<AlphaCurve>,
    pub diagnostics: Vec<CurveDiagnostics>,
    pub classic: Vec<SensitivitySummary>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub permutation: Option<PermutationResult>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub shapley: Option<ShapleySummary>,
}

/// Serialized report and its Markdown rendering.
#[derive(Debug, Clone, PartialEq)]
pub struct ReportPair {
    pub json: String,
    pub markdown: String,
    pub report: Report,
}

pub fn build_report(
    curves: &[AlphaCurve],
    diagnostics: &[CurveDiagnostics],
    summaries: &[SensitivitySummary],
    permutation: Option<&PermutationResult>,
    shapley: Option<&ShapleyTable>,
) -> Result<Report> {
    if curves.len() != diagnostics.len() {
        return Err(Error::DimensionMismatch { expected: curves.len(), got: diagnostics.len() });
    }
    let variables = curves
        .iter()
        .zip(diagnostics)
        .map(|(c, d)| VariableVerdict {
            variable: c.variable,
            name: c.label(),
            verdict: Verdict::from_flags(d),
            ms_first: c.first(),
            ms_inf: c.asymptote,
            classic_label: summaries.iter().find(|s| s.variable == c.variable).and_then(|s| s.label),
        })
        .collect();
    Ok(Report {
        schema: REPORT_SCHEMA.to_string(),
        variables,
        curves: curves.to_vec(),
        diagnostics: diagnostics.to_vec(),
        classic: summaries.to_vec(),
        permutation: permutation.cloned(),
        shapley: shapley.map(ShapleySummary::from),
    })
}

/// JSON and Markdown for one analysis run.
pub fn emit_report(
    curves: &[AlphaCurve],
    diagnostics: &[CurveDiagnostics],
    summaries: &[SensitivitySummary],
    permutation: Option<&PermutationResult>,
    shapley: Option<&ShapleyTable>,
) -> Result<ReportPair> {
    let report = build_report(curves, diagnostics, summaries, permutation, shapley)?;
    let mut json = serde_json::to_string_pretty(&report)?;
    json.push('\n');
    let markdown = render_markdown(&report);
    Ok(ReportPair { json, markdown, report })
}

fn require<'a>(obj: &'a serde_json::Map<String, Value>, key: &str, path: &str) -> Result<&'a Value> {
    obj.get(key).ok_or_else(|| Error::schema(format!("{path}.{key}"), "missing"))
}

fn require_array<'a>(obj: &'a serde_json::Map<String, Value>, key: &str) -> Result<&'a Vec<Value>> {
    require(obj, key, "$")?.as_array().ok_or_else(|| Error::schema(format!("$.{key}"), "expected an array"))
}

/// Structural check of a parsed report document.
pub fn validate_report(doc: &Value) -> Result<()> {
    let obj = doc.as_object().ok_or_else(|| Error::schema("$", "expected an object"))?;
    match require(obj, "schema", "$")?.as_str() {
        Some(REPORT_SCHEMA) => {}
        _ => return Err(Error::schema("$.schema", format!("expected \"{REPORT_SCHEMA}\""))),
    }
    let n = require_array(obj, "variables")?.len();
    for key in ["curves", "diagnostics"] {
        if require_array(obj, key)?.len() != n {
            return Err(Error::schema(format!("$.{key}"), format!("expected {n} entries")));
        }
    }
    require_array(obj, "classic")?;
    for (i, v) in require_array(obj, "variables")?.iter().enumerate() {
        let path = format!("$.variables[{i}]");
        let v = v.as_object().ok_or_else(|| Error::schema(&path, "expected an object"))?;
        for key in ["variable", "ms_first", "ms_inf"] {
            if !require(v, key, &path)?.is_number() {
                return Err(Error::schema(format!("{path}.{key}"), "expected a number"));
            }
        }
        let verdict = require(v, "verdict", &path)?.as_str();
        if !matches!(verdict, Some("linear" | "nonlinear" | "localized" | "irrelevant")) {
            return Err(Error::schema(format!("{path}.verdict"), "unknown verdict"));
        }
    }
    for key in ["permutation", "shapley"] {
        if let Some(v) = obj.get(key) {
            if !v.is_object() {
                return Err(Error::schema(format!("$.{key}"), "expected an object when present"));
            }
        }
    }
    serde_json::from_value::<Report>(doc.clone()).map_err(|e| Error::schema("$", e.to_string()))?;
    Ok(())
}

/// Parses and validates a report document.
pub fn parse_report(text: &str) -> Result<Report> {
    let doc: Value = serde_json::from_str(text)?;
    validate_report(&doc)?;
    Ok(serde_json::from_value(doc)?)
}

fn num(v: f64) -> String {
    if v == 0.0 {
        "0".into()
    } else if v.abs() < 1e-3 || v.abs() >= 1e5 {
        format!("{v:.3e}")
    } else {
        format!("{v:.4}")
    }
}

fn name_of(report: &Report, variable: usize) -> String {
    report
        .variables
        .iter()
        .find(|v| v.variable == variable)
        .map_or_else(|| format!("X{}", variable + 1), |v| v.name.clone())
}

fn interpretation(report: &Report, v: &VariableVerdict, d: &CurveDiagnostics) -> String {
    let name = &v.name;
    match v.verdict {
        Verdict::Irrelevant => format!(
            "{name}: the curve stays near zero (ms^inf is {} of the largest), so the output barely depends on {name} over this data.",
            num(d.relevance)
        ),
        Verdict::Linear => format!(
            "{name}: the curve is flat (ms^inf / ms^1 = {}), so the derivative has nearly constant magnitude and the dependence looks linear.",
            num(d.flatness_ratio)
        ),
        Verdict::Localized => {
            let higher = d.crossings.iter().find(|x| {
                report.variables.iter().any(|o| o.variable == x.other && o.ms_first > v.ms_first)
            });
            let detail = higher.map_or(String::new(), |x| {
                format!(" and overtakes {} near alpha = {}", name_of(report, x.other), num(x.alpha))
            });
            format!(
                "{name}: low sensitivity at small alpha (ms^1 = {}) but the curve climbs to ms^inf = {}{detail}; a small region of the inputs has an outsized effect.",
                num(v.ms_first),
                num(v.ms_inf)
            )
        }
        Verdict::Nonlinear => format!(
            "{name}: the curve grows with alpha (ms^inf / ms^1 = {}), so the derivative magnitude varies across the data and the dependence is nonlinear.",
            num(d.flatness_ratio)
        ),
    }
}

pub fn render_markdown(report: &Report) -> String {
    let mut md = String::new();
    let _ = writeln!(md, "# Sensitivity report\n");
    let _ = writeln!(md, "Schema `{}`.\n", report.schema);
    let _ = writeln!(md, "## Verdicts\n");
    let _ = writeln!(md, "| Variable | Verdict | ms^1 | ms^inf | ms^inf / ms^1 | Relevance | Classic |");
    let _ = writeln!(md, "|---|---|---|---|---|---|---|");
    for (v, d) in report.variables.iter().zip(&report.diagnostics) {
        let _ = writeln!(
            md,
            "| {} | {} | {} | {} | {} | {} | {} |",
            v.name,
            v.verdict.as_str(),
            num(v.ms_first),
            num(v.ms_inf),
            num(d.flatness_ratio),
            num(d.relevance),
            v.classic_label.map_or("-".to_string(), |l| l.to_string())
        );
    }
    let _ = writeln!(md, "\n## Interpretation\n");
    for (v, d) in report.variables.iter().zip(&report.diagnostics) {
        let _ = writeln!(md, "- {}", interpretation(report, v, d));
    }
    let crossings: Vec<String> = report
        .diagnostics
        .iter()
        .flat_map(|d| {
            d.crossings.iter().map(move |x| {
                format!(
                    "- {} rises above {} at alpha = {}",
                    name_of(report, d.variable),
                    name_of(report, x.other),
                    num(x.alpha)
                )
            })
        })
        .collect();
    if !crossings.is_empty() {
        let _ = writeln!(md, "\n## Curve crossings\n");
        for c in crossings {
            let _ = writeln!(md, "{c}");
        }
    }
    if !report.classic.is_empty() {
        let _ = writeln!(md, "\n## Derivative summaries\n");
        let _ = writeln!(md, "| Variable | S avg | S sd | S sq | Label |");
        let _ = writeln!(md, "|---|---|---|---|---|");
        for s in &report.classic {
            let _ = writeln!(
                md,
                "| {} | {} | {} | {} | {} |",
                s.label_name(),
                num(s.s_avg),
                num(s.s_sd),
                num(s.s_sq),
                s.label.map_or("-".to_string(), |l| l.to_string())
            );
        }
    }
    if let Some(p) = &report.permutation {
        let repeats = p.per_repeat.first().map_or(0, Vec::len);
        let _ = writeln!(md, "\n## Permutation importance ({}, {repeats} repeats, seed {})\n", p.metric, p.seed);
        let _ = writeln!(md, "Baseline error {}.\n", num(p.baseline_error));
        let _ = writeln!(md, "| Variable | Importance | Std |");
        let _ = writeln!(md, "|---|---|---|");
        for (j, name) in p.feature_names.iter().enumerate() {
            let _ = writeln!(md, "| {name} | {} | {} |", num(p.importances[j]), num(p.std_devs[j]));
        }
    }
    if let Some(s) = &report.shapley {
        let _ = writeln!(md, "\n## Shapley values ({})\n", s.function);
        let _ = writeln!(md, "Base value {}.\n", num(s.base_value));
        let _ = writeln!(md, "| Variable | Mean abs |");
        let _ = writeln!(md, "|---|---|");
        for (name, v) in s.feature_names.iter().zip(&s.mean_abs) {
            let _ = writeln!(md, "| {name} | {} |", num(*v));
        }
    }
    md
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::report::diagnose::{diagnose, DEFAULT_FLAT_TOL, DEFAULT_IRREL_TOL};

    fn curves() -> Vec<AlphaCurve> {
        let alphas = [1.0, 2.0, 4.0, 8.0, 16.0];
        let rows: [(&[f64; 5], f64); 4] =
            [(&[1.6, 2.0, 2.6, 3.3, 4.1], 8.8), (&[2.0; 5], 2.0), (&[0.0; 5], 0.0), (&[0.5, 0.55, 0.6, 0.7, 0.8], 1.2)];
        rows.iter()
            .enumerate()
            .map(|(j, (vals, inf))| AlphaCurve {
                variable: j,
                name: None,
                output: 0,
                points: alphas.iter().copied().zip(vals.iter().copied()).collect(),
                asymptote: *inf,
            })
            .collect()
    }

    #[test]
    fn optional_sections_are_omitted_and_valid() {
        let c = curves();
        let d = diagnose(&c, DEFAULT_FLAT_TOL, DEFAULT_IRREL_TOL).unwrap();
        let pair = emit_report(&c, &d, &[], None, None).unwrap();
        let doc: Value = serde_json::from_str(&pair.json).unwrap();
        assert!(doc.get("permutation").is_none() && doc.get("shapley").is_none());
        validate_report(&doc).unwrap();
        assert_eq!(parse_report(&pair.json).unwrap(), pair.report);
        assert!(pair.markdown.contains("| X2 | linear |"));
        assert!(pair.markdown.contains("| X1 | nonlinear |"));
        assert!(pair.markdown.contains("| X3 | irrelevant |"));
    }

    #[test]
    fn validation_reports_paths() {
        let c = curves();
        let d = diagnose(&c, DEFAULT_FLAT_TOL, DEFAULT_IRREL_TOL).unwrap();
        let pair = emit_report(&c, &d, &[], None, None).unwrap();
        let mut doc: Value = serde_json::from_str(&pair.json).unwrap();
        doc["variables"][1]["verdict"] = Value::from("sideways");
        match validate_report(&doc) {
            Err(Error::SchemaError { path, .. }) => assert_eq!(path, "$.variables[1].verdict"),
            other => panic!("{other:?}"),
        }
        doc["schema"] = Value::from("alpha-sens/0");
        assert!(validate_report(&doc).is_err());
    }
}
