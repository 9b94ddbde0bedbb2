//! Feature CSV: header `identity,image,f0,...,f{d-1}`, one record per
//! image. Values are written with Rust's shortest round-trip float
//! formatting, so a load/save cycle reproduces the same bytes and the
//! same bit-exact values.

use std::path::Path;

use shallowface_core::dataset::{FeatureDataset, FeatureRecord};

use crate::error::{io_err, parse_err, CliError};

/// Loads and validates a feature CSV.
pub fn load_features(path: &Path) -> Result<FeatureDataset, CliError> {
    // Open separately so a missing file reports as io, not parse.
    let file = std::fs::File::open(path).map_err(io_err(path))?;
    let mut reader = csv::ReaderBuilder::new().has_headers(true).from_reader(file);

    let headers = reader.headers().map_err(|e| parse_err(path, e))?.clone();
    if headers.len() < 3 || &headers[0] != "identity" || &headers[1] != "image" {
        return Err(parse_err(
            path,
            "header must be identity,image,f0,...,f{d-1}",
        ));
    }
    for (i, name) in headers.iter().skip(2).enumerate() {
        if name != format!("f{i}") {
            return Err(parse_err(
                path,
                format!("feature column {} is named {name:?}, expected \"f{i}\"", i + 2),
            ));
        }
    }
    let dim = headers.len() - 2;

    let mut records = Vec::new();
    for (line, row) in reader.records().enumerate() {
        let row = row.map_err(|e| parse_err(path, e))?;
        if row.len() != dim + 2 {
            return Err(parse_err(
                path,
                format!("record {line}: expected {} fields, got {}", dim + 2, row.len()),
            ));
        }
        let mut features = Vec::with_capacity(dim);
        for (col, raw) in row.iter().skip(2).enumerate() {
            let value: f64 = raw.parse().map_err(|_| {
                parse_err(
                    path,
                    format!("record {line}: column f{col}: {raw:?} is not a number"),
                )
            })?;
            features.push(value);
        }
        records.push(FeatureRecord {
            identity: row[0].to_string(),
            image: row[1].to_string(),
            features,
        });
    }
    Ok(FeatureDataset::new(records)?)
}

/// Writes a feature CSV in the documented format.
pub fn save_features(path: &Path, dataset: &FeatureDataset) -> Result<(), CliError> {
    save_feature_rows(path, dataset.dim(), dataset.records())
}

/// Writes rows that are not necessarily a validated dataset yet (the
/// extract command produces rows in archive order).
pub fn save_feature_rows(
    path: &Path,
    dim: usize,
    records: &[FeatureRecord],
) -> Result<(), CliError> {
    let mut out = String::new();
    out.push_str("identity,image");
    for i in 0..dim {
        out.push_str(&format!(",f{i}"));
    }
    out.push('\n');
    for rec in records {
        out.push_str(&escape(&rec.identity));
        out.push(',');
        out.push_str(&escape(&rec.image));
        for v in &rec.features {
            out.push(',');
            out.push_str(&format!("{v}"));
        }
        out.push('\n');
    }
    std::fs::write(path, out).map_err(io_err(path))
}

/// Quotes a CSV field only when it needs it, keeping output canonical.
fn escape(field: &str) -> String {
    if field.contains([',', '"', '\n', '\r']) {
        format!("\"{}\"", field.replace('"', "\"\""))
    } else {
        field.to_string()
    }
}
