use std::io::Read;
use std::path::Path;

use super::{Dataset, Metadata, Targets};
use crate::error::{Error, Result};

/// Reads a numeric table with a header row, using `target_columns` as regression targets
/// and every other column as a feature.
pub fn parse_csv_regression<R: Read>(reader: R, target_columns: &[&str]) -> Result<Dataset> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).trim(csv::Trim::All).from_reader(reader);
    let header: Vec<String> =
        rdr.headers().map_err(|e| Error::parse("header", e.to_string()))?.iter().map(str::to_owned).collect();
    if target_columns.is_empty() {
        return Err(Error::Contract("at least one target column is required".into()));
    }
    let mut target_idx = Vec::new();
    for name in target_columns {
        let idx = header
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::parse("header", format!("target column {name:?} not found")))?;
        target_idx.push(idx);
    }
    let feature_idx: Vec<usize> = (0..header.len()).filter(|i| !target_idx.contains(i)).collect();
    if feature_idx.is_empty() {
        return Err(Error::parse("header", "no feature columns left after removing targets"));
    }

    let mut inputs = Vec::new();
    let mut values = Vec::new();
    for (row, record) in rdr.records().enumerate() {
        // Row numbers count data rows from 1, the header excluded.
        let row = row + 1;
        let record = record.map_err(|e| Error::parse(format!("row {row}"), e.to_string()))?;
        if record.len() != header.len() {
            return Err(Error::parse(
                format!("row {row}"),
                format!("{} fields, header has {}", record.len(), header.len()),
            ));
        }
        let cell = |i: usize| -> Result<f64> {
            let raw = &record[i];
            let v: f64 = raw.parse().map_err(|_| {
                Error::parse(format!("row {row}"), format!("column {:?}: {raw:?} is not a number", header[i]))
            })?;
            if !v.is_finite() {
                return Err(Error::parse(
                    format!("row {row}"),
                    format!("column {:?} is not finite", header[i]),
                ));
            }
            Ok(v)
        };
        for &i in &feature_idx {
            inputs.push(cell(i)?);
        }
        for &i in &target_idx {
            values.push(cell(i)?);
        }
    }
    if values.is_empty() {
        return Err(Error::parse("rows", "table has no data rows"));
    }
    let mut ds = Dataset::new(inputs, feature_idx.len(), Targets::Values { values, dim: target_idx.len() })?;
    ds.meta = Metadata {
        feature_names: feature_idx.iter().map(|&i| header[i].clone()).collect(),
        target_names: target_idx.iter().map(|&i| header[i].clone()).collect(),
        ..Metadata::default()
    };
    Ok(ds)
}

pub fn load_csv_regression(path: impl AsRef<Path>, target_columns: &[&str]) -> Result<Dataset> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    parse_csv_regression(std::io::BufReader::new(file), target_columns).map_err(|e| e.context(path.display()))
}
