//! Binary-classification dataset loading (LIBSVM text and dense CSV).

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use ndarray::{Array1, Array2, Axis};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DataFormat {
    Libsvm,
    Csv,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Provenance {
    pub source: String,
    pub format: DataFormat,
    pub standardized: bool,
    /// How raw labels were mapped onto {0, 1}.
    pub label_mapping: String,
}

/// Dense features (one row per sample) with labels in {0, 1}.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub features: Array2<f64>,
    pub labels: Array1<f64>,
    pub provenance: Provenance,
}

impl Dataset {
    pub fn n_samples(&self) -> usize {
        self.features.nrows()
    }

    pub fn n_features(&self) -> usize {
        self.features.ncols()
    }

    fn validate(&self) -> Result<()> {
        if self.features.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                what: "dataset features",
            });
        }
        let positives = self.labels.iter().filter(|u| **u == 1.0).count();
        if self.n_samples() < 2 || positives == 0 || positives == self.n_samples() {
            log::warn!(
                "{}: {} samples with {} positives; both classes should be present",
                self.provenance.source,
                self.n_samples(),
                positives
            );
        }
        Ok(())
    }
}

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::Io {
        path: path.display().to_string(),
        reason: e.to_string(),
    })
}

fn parse_err(path: &Path, line: usize, reason: impl Into<String>) -> Error {
    Error::Parse {
        path: path.display().to_string(),
        line,
        reason: reason.into(),
    }
}

fn numeric_label(raw: f64) -> Option<f64> {
    if raw == 1.0 {
        Some(1.0)
    } else if raw == 0.0 || raw == -1.0 {
        Some(0.0)
    } else {
        None
    }
}

/// Parses `label idx:val ...` lines with 1-based indices. Missing entries are
/// zero and the width is the largest index seen. Labels `-1`/`+1` map to 0/1.
pub fn load_libsvm(path: impl AsRef<Path>) -> Result<Dataset> {
    let path = path.as_ref();
    let text = read(path)?;
    let mut rows: Vec<Vec<(usize, f64)>> = Vec::new();
    let mut labels = Vec::new();
    let mut width = 0usize;
    for (lineno, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let mut tokens = line.split_whitespace();
        let raw_label = tokens.next().unwrap_or("");
        let label = raw_label
            .parse::<f64>()
            .ok()
            .and_then(numeric_label)
            .ok_or_else(|| parse_err(path, lineno + 1, format!("invalid label `{raw_label}`")))?;
        let mut entries = Vec::new();
        for tok in tokens {
            let (idx, val) = tok.split_once(':').ok_or_else(|| {
                parse_err(path, lineno + 1, format!("expected idx:val, got `{tok}`"))
            })?;
            let idx: usize = idx
                .parse()
                .ok()
                .filter(|i| *i >= 1)
                .ok_or_else(|| parse_err(path, lineno + 1, format!("invalid index `{idx}`")))?;
            let val: f64 = val
                .parse()
                .ok()
                .filter(|v: &f64| v.is_finite())
                .ok_or_else(|| parse_err(path, lineno + 1, format!("invalid value `{val}`")))?;
            width = width.max(idx);
            entries.push((idx - 1, val));
        }
        rows.push(entries);
        labels.push(label);
    }
    let mut features = Array2::zeros((rows.len(), width));
    for (r, entries) in rows.iter().enumerate() {
        for (c, v) in entries {
            features[[r, *c]] = *v;
        }
    }
    let ds = Dataset {
        features,
        labels: Array1::from(labels),
        provenance: Provenance {
            source: path.display().to_string(),
            format: DataFormat::Libsvm,
            standardized: false,
            label_mapping: "-1 -> 0, +1 -> 1".into(),
        },
    };
    ds.validate()?;
    Ok(ds)
}

/// Dense comma-separated rows. `label_column` defaults to the last column.
/// A first row whose feature fields are not all numeric is taken as a header.
/// Numeric labels follow the LIBSVM rule; two distinct non-numeric labels are
/// mapped in lexicographic order to 0 and 1.
pub fn load_csv(path: impl AsRef<Path>, label_column: Option<usize>) -> Result<Dataset> {
    let path = path.as_ref();
    let text = read(path)?;
    let mut raw_rows: Vec<(usize, Vec<f64>, String)> = Vec::new();
    let mut width: Option<usize> = None;
    let mut first = true;
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        let label_at = label_column.unwrap_or(fields.len().saturating_sub(1));
        if label_at >= fields.len() {
            return Err(parse_err(
                path,
                lineno + 1,
                format!("label column {label_at} out of range"),
            ));
        }
        let parsed: Vec<Option<f64>> = fields
            .iter()
            .enumerate()
            .filter(|(j, _)| *j != label_at)
            .map(|(_, f)| f.parse::<f64>().ok())
            .collect();
        if first {
            first = false;
            if parsed.iter().any(Option::is_none) {
                continue;
            }
        }
        let values: Vec<f64> = parsed
            .into_iter()
            .map(|v| v.filter(|x| x.is_finite()))
            .collect::<Option<_>>()
            .ok_or_else(|| parse_err(path, lineno + 1, "non-numeric feature"))?;
        match width {
            None => width = Some(values.len()),
            Some(w) if w != values.len() => {
                return Err(parse_err(
                    path,
                    lineno + 1,
                    format!("expected {w} features, got {}", values.len()),
                ))
            }
            _ => {}
        }
        raw_rows.push((lineno + 1, values, fields[label_at].to_string()));
    }
    let width = width.unwrap_or(0);

    let numeric: Option<Vec<f64>> = raw_rows
        .iter()
        .map(|(_, _, l)| l.parse::<f64>().ok())
        .collect();
    let (labels, mapping) = match numeric {
        Some(values) => {
            let mut labels = Vec::with_capacity(values.len());
            for ((line, _, raw), v) in raw_rows.iter().zip(values) {
                labels.push(
                    numeric_label(v)
                        .ok_or_else(|| parse_err(path, *line, format!("invalid label `{raw}`")))?,
                );
            }
            (labels, "-1 -> 0, +1 -> 1".to_string())
        }
        None => {
            let classes: BTreeSet<&str> = raw_rows.iter().map(|(_, _, l)| l.as_str()).collect();
            if classes.len() > 2 {
                return Err(parse_err(
                    path,
                    0,
                    format!("expected two classes, found {}", classes.len()),
                ));
            }
            let classes: Vec<&str> = classes.into_iter().collect();
            let labels = raw_rows
                .iter()
                .map(|(_, _, l)| {
                    if classes.len() == 2 && l == classes[1] {
                        1.0
                    } else {
                        0.0
                    }
                })
                .collect();
            let mapping = match classes.as_slice() {
                [a, b] => format!("{a} -> 0, {b} -> 1"),
                [a] => format!("{a} -> 0"),
                _ => String::new(),
            };
            (labels, mapping)
        }
    };

    let mut features = Array2::zeros((raw_rows.len(), width));
    for (r, (_, values, _)) in raw_rows.iter().enumerate() {
        for (c, v) in values.iter().enumerate() {
            features[[r, c]] = *v;
        }
    }
    let ds = Dataset {
        features,
        labels: Array1::from(labels),
        provenance: Provenance {
            source: path.display().to_string(),
            format: DataFormat::Csv,
            standardized: false,
            label_mapping: mapping,
        },
    };
    ds.validate()?;
    Ok(ds)
}

pub fn load(
    path: impl AsRef<Path>,
    format: DataFormat,
    label_column: Option<usize>,
) -> Result<Dataset> {
    match format {
        DataFormat::Libsvm => load_libsvm(path),
        DataFormat::Csv => load_csv(path, label_column),
    }
}

/// Centers every column and scales it to unit sample standard deviation.
/// Zero-variance columns become zero.
pub fn standardize(data: &Dataset) -> Dataset {
    let n = data.n_samples();
    let mut features = data.features.clone();
    if n >= 2 {
        for mut col in features.axis_iter_mut(Axis(1)) {
            let mean = col.sum() / n as f64;
            col.mapv_inplace(|v| v - mean);
            let var = col.iter().map(|v| v * v).sum::<f64>() / (n - 1) as f64;
            let std = var.sqrt();
            if std > 0.0 {
                col.mapv_inplace(|v| v / std);
            } else {
                col.fill(0.0);
            }
        }
    }
    let mut provenance = data.provenance.clone();
    provenance.standardized = true;
    Dataset {
        features,
        labels: data.labels.clone(),
        provenance,
    }
}

/// Writes LIBSVM text with shortest round-trip float formatting.
pub fn write_libsvm(data: &Dataset, path: impl AsRef<Path>) -> Result<()> {
    let mut out = String::new();
    for (row, label) in data.features.rows().into_iter().zip(&data.labels) {
        out.push_str(if *label == 1.0 { "+1" } else { "-1" });
        for (j, v) in row.iter().enumerate() {
            if *v != 0.0 {
                let _ = write!(out, " {}:{:e}", j + 1, v);
            }
        }
        out.push('\n');
    }
    write_file(path.as_ref(), &out)
}

/// Writes dense CSV with the label in the last column and no header.
pub fn write_csv(data: &Dataset, path: impl AsRef<Path>) -> Result<()> {
    let mut out = String::new();
    for (row, label) in data.features.rows().into_iter().zip(&data.labels) {
        for v in row {
            let _ = write!(out, "{v:e},");
        }
        let _ = writeln!(out, "{}", *label as i64);
    }
    write_file(path.as_ref(), &out)
}

fn write_file(path: &Path, contents: &str) -> Result<()> {
    fs::write(path, contents).map_err(|e| Error::Io {
        path: path.display().to_string(),
        reason: e.to_string(),
    })
}
