//! File formats: dataset CSV, Jacobian CSV (scalar output) and Jacobian JSON
//! (any number of outputs).

use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use ndarray::{Array2, Array3};
use serde::{Deserialize, Serialize};

use crate::data::{Dataset, JacobianTensor};
use crate::error::{Error, Result};

fn open(path: &Path) -> Result<File> {
    File::open(path).map_err(|e| Error::io(path, e))
}

fn parse_cell(raw: &str, row: usize, col: &str) -> Result<f64> {
    let v: f64 = raw
        .trim()
        .parse()
        .map_err(|_| Error::InvalidArgument(format!("row {row}, column `{col}`: cannot parse `{raw}` as a number")))?;
    if !v.is_finite() {
        return Err(Error::NonFinite(format!("row {row}, column `{col}`: `{raw}`")));
    }
    Ok(v)
}

/// Reads a headered CSV. When `target` names a column it becomes the
/// dataset target; every other column is a feature.
pub fn read_dataset_csv<R: Read>(reader: R, target: Option<&str>) -> Result<Dataset> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
    let header: Vec<String> = rdr.headers()?.iter().map(|h| h.trim().to_string()).collect();
    let target_col = match target {
        Some(name) => Some(
            header
                .iter()
                .position(|h| h == name)
                .ok_or_else(|| Error::InvalidArgument(format!("target column `{name}` not found in header")))?,
        ),
        None => None,
    };
    let feature_cols: Vec<usize> = (0..header.len()).filter(|c| Some(*c) != target_col).collect();
    let mut values = Vec::new();
    let mut targets = Vec::new();
    let mut n_rows = 0;
    for (r, record) in rdr.records().enumerate() {
        let record = record?;
        if record.len() != header.len() {
            return Err(Error::InvalidArgument(format!(
                "row {} has {} fields, header has {}",
                r + 1,
                record.len(),
                header.len()
            )));
        }
        for &c in &feature_cols {
            values.push(parse_cell(&record[c], r + 1, &header[c])?);
        }
        if let Some(tc) = target_col {
            targets.push(parse_cell(&record[tc], r + 1, &header[tc])?);
        }
        n_rows += 1;
    }
    let features = Array2::from_shape_vec((n_rows, feature_cols.len()), values)
        .map_err(|e| Error::InvalidArgument(e.to_string()))?;
    let names = feature_cols.iter().map(|&c| header[c].clone()).collect();
    let ds = Dataset::new(features, names)?;
    match target_col {
        Some(tc) => ds.with_target(targets.into(), header[tc].clone()),
        None => Ok(ds),
    }
}

pub fn load_dataset(path: &Path, target: Option<&str>) -> Result<Dataset> {
    read_dataset_csv(open(path)?, target)
}

pub fn write_dataset_csv<W: Write>(writer: W, dataset: &Dataset) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(writer);
    let mut header: Vec<&str> = dataset.feature_names().iter().map(String::as_str).collect();
    if let Some(name) = dataset.target_name() {
        header.push(name);
    }
    wtr.write_record(&header)?;
    let target = dataset.target();
    for (i, row) in dataset.features().rows().into_iter().enumerate() {
        let mut rec: Vec<String> = row.iter().map(|v| v.to_string()).collect();
        if let Some(t) = &target {
            rec.push(t[i].to_string());
        }
        wtr.write_record(&rec)?;
    }
    wtr.flush().map_err(|e| Error::io("<csv>", e))?;
    Ok(())
}

/// JSON layout for a Jacobian tensor, nested `[sample][output][feature]`.
#[derive(Debug, Serialize, Deserialize)]
struct JacobianDoc {
    n_samples: usize,
    n_outputs: usize,
    n_features: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    feature_names: Option<Vec<String>>,
    values: Vec<Vec<Vec<f64>>>,
}

/// Scalar-output Jacobian as CSV: one row per sample, one column per feature.
/// Returns the tensor and the header names.
pub fn read_jacobian_csv<R: Read>(reader: R) -> Result<(JacobianTensor, Vec<String>)> {
    let ds = read_dataset_csv(reader, None)?;
    let names = ds.feature_names().to_vec();
    let jac = JacobianTensor::from_scalar_output(ds.features().to_owned())?;
    Ok((jac, names))
}

pub fn read_jacobian_json<R: Read>(reader: R) -> Result<(JacobianTensor, Option<Vec<String>>)> {
    let doc: JacobianDoc = serde_json::from_reader(reader)?;
    if doc.values.len() != doc.n_samples {
        return Err(Error::schema("values", format!("expected {} samples, found {}", doc.n_samples, doc.values.len())));
    }
    let mut flat = Vec::with_capacity(doc.n_samples * doc.n_outputs * doc.n_features);
    for (i, sample) in doc.values.iter().enumerate() {
        if sample.len() != doc.n_outputs {
            return Err(Error::schema(
                format!("values[{i}]"),
                format!("expected {} outputs, found {}", doc.n_outputs, sample.len()),
            ));
        }
        for (k, row) in sample.iter().enumerate() {
            if row.len() != doc.n_features {
                return Err(Error::schema(
                    format!("values[{i}][{k}]"),
                    format!("expected {} features, found {}", doc.n_features, row.len()),
                ));
            }
            flat.extend_from_slice(row);
        }
    }
    if let Some(names) = &doc.feature_names {
        if names.len() != doc.n_features {
            return Err(Error::schema("feature_names", "length differs from n_features"));
        }
    }
    let values = Array3::from_shape_vec((doc.n_samples, doc.n_outputs, doc.n_features), flat)
        .map_err(|e| Error::schema("values", e.to_string()))?;
    Ok((JacobianTensor::new(values)?, doc.feature_names))
}

/// Loads a Jacobian by extension: `.json` for the nested document, anything
/// else as scalar-output CSV. Names default to `X1..Xn` when absent.
pub fn load_jacobian(path: &Path) -> Result<(JacobianTensor, Vec<String>)> {
    let is_json = path.extension().is_some_and(|e| e.eq_ignore_ascii_case("json"));
    if is_json {
        let (jac, names) = read_jacobian_json(open(path)?)?;
        let names = names.unwrap_or_else(|| (1..=jac.n_features()).map(|j| format!("X{j}")).collect());
        Ok((jac, names))
    } else {
        read_jacobian_csv(open(path)?)
    }
}

pub fn write_jacobian_csv<W: Write>(writer: W, jac: &JacobianTensor, names: &[String]) -> Result<()> {
    if jac.n_outputs() != 1 {
        return Err(Error::InvalidArgument("CSV Jacobians are scalar-output only; use JSON for m > 1".into()));
    }
    let derivs = jac.values().index_axis(ndarray::Axis(1), 0).to_owned();
    let ds = Dataset::new(derivs, names.to_vec())?;
    write_dataset_csv(writer, &ds)
}

pub fn write_jacobian_json<W: Write>(writer: W, jac: &JacobianTensor, names: Option<&[String]>) -> Result<()> {
    let values = jac.values().outer_iter().map(|s| s.outer_iter().map(|r| r.to_vec()).collect()).collect();
    let doc = JacobianDoc {
        n_samples: jac.n_samples(),
        n_outputs: jac.n_outputs(),
        n_features: jac.n_features(),
        feature_names: names.map(<[String]>::to_vec),
        values,
    };
    serde_json::to_writer(writer, &doc)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_with_quotes_and_scientific_notation() {
        let text = "\"a\",b,\"y, target\"\n1e-3,\"2.5\",3\n-4.0E2,5,6\n";
        let ds = read_dataset_csv(text.as_bytes(), Some("y, target")).unwrap();
        assert_eq!(ds.feature_names(), ["a", "b"]);
        assert_eq!(ds.features()[[0, 0]], 1e-3);
        assert_eq!(ds.features()[[1, 0]], -400.0);
        assert_eq!(ds.target().unwrap().to_vec(), vec![3.0, 6.0]);
    }

    #[test]
    fn nan_cells_are_rejected() {
        let err = read_dataset_csv("a\nNaN\n".as_bytes(), None).unwrap_err();
        assert!(matches!(err, Error::NonFinite(_)));
    }

    #[test]
    fn missing_target_column_is_reported() {
        assert!(read_dataset_csv("a,b\n1,2\n".as_bytes(), Some("y")).is_err());
    }

    #[test]
    fn jacobian_json_round_trip() {
        let values = Array3::from_shape_fn((3, 2, 4), |(i, k, j)| (i * 100 + k * 10 + j) as f64 * 0.1);
        let jac = JacobianTensor::new(values).unwrap();
        let mut buf = Vec::new();
        write_jacobian_json(&mut buf, &jac, None).unwrap();
        let (back, names) = read_jacobian_json(buf.as_slice()).unwrap();
        assert_eq!(back, jac);
        assert!(names.is_none());
    }

    #[test]
    fn jacobian_json_shape_errors_name_the_field() {
        let doc = r#"{"n_samples":1,"n_outputs":2,"n_features":2,"values":[[[1,2],[3]]]}"#;
        match read_jacobian_json(doc.as_bytes()) {
            Err(Error::SchemaError { path, .. }) => assert_eq!(path, "values[0][1]"),
            other => panic!("unexpected {other:?}"),
        }
    }
}
