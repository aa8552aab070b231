//! Dataset CSV: header `f1,…,fd,label`, labels 1..n.

use std::path::Path;

use nondecomp::LabeledSample;

use crate::error::{io_error, CliError, CliResult};

/// Reads a dataset. `n` is the largest label unless `classes` is given, in
/// which case every label must be at most `classes`.
pub fn read_dataset(path: &Path, classes: Option<usize>) -> CliResult<LabeledSample> {
    let mut rdr = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| io_error(path, e))?;
    let header = rdr.headers().map_err(|e| io_error(path, e))?.clone();
    let width = header.len();
    if width < 2 || &header[width - 1] != "label" {
        return Err(io_error(path, "header must be f1,…,fd,label"));
    }
    let d = width - 1;
    let mut features = Vec::new();
    let mut labels = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let row = i + 1;
        let rec = rec.map_err(|e| io_error(path, e))?;
        if rec.len() != width {
            return Err(io_error(
                path,
                format!("row {row}: expected {width} fields, found {}", rec.len()),
            ));
        }
        let x = (0..d)
            .map(|j| match rec[j].parse::<f64>() {
                Ok(v) if v.is_finite() => Ok(v),
                _ => Err(io_error(
                    path,
                    format!("row {row}, column {}: bad feature '{}'", j + 1, &rec[j]),
                )),
            })
            .collect::<CliResult<Vec<f64>>>()?;
        let y = match rec[d].parse::<usize>() {
            Ok(y) if y >= 1 => y,
            _ => {
                return Err(io_error(
                    path,
                    format!("row {row}: bad label '{}'", &rec[d]),
                ))
            }
        };
        features.push(x);
        labels.push(y - 1);
    }
    if labels.is_empty() {
        return Err(io_error(path, "no data rows"));
    }
    let max_label = labels.iter().max().copied().unwrap_or(0) + 1;
    let n = match classes {
        Some(c) if c < max_label => {
            return Err(CliError::Usage(format!(
                "{}: label {max_label} exceeds the {c} classes expected",
                path.display()
            )))
        }
        Some(c) => c,
        None => max_label,
    };
    if n < 2 {
        return Err(io_error(path, "need at least 2 classes"));
    }
    LabeledSample::new(n, features, labels).map_err(|e| io_error(path, e))
}

pub fn write_dataset(path: &Path, sample: &LabeledSample) -> CliResult<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| io_error(dir, e))?;
    }
    let mut w = csv::Writer::from_path(path).map_err(|e| io_error(path, e))?;
    let mut header: Vec<String> = (1..=sample.d()).map(|j| format!("f{j}")).collect();
    header.push("label".into());
    w.write_record(&header).map_err(|e| io_error(path, e))?;
    for (x, y) in sample.rows() {
        let mut rec: Vec<String> = x.iter().map(|v| v.to_string()).collect();
        rec.push((y + 1).to_string());
        w.write_record(&rec).map_err(|e| io_error(path, e))?;
    }
    w.flush().map_err(|e| io_error(path, e))
}
