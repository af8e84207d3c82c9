use std::fs::File;
use std::io::Read;
use std::path::Path;

use super::{known_dataset, Dataset, SeriesTensor};
use crate::error::{HadlError, Result};
use crate::tensor::Matrix;

/// What the loader expects of a file.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct CsvSchema {
    pub name: String,
    pub expected_channels: Option<usize>,
    pub granularity: Option<String>,
}

impl CsvSchema {
    /// Fills channel count and granularity from the benchmark table when
    /// `name` is a known dataset.
    pub fn for_name(name: &str) -> Self {
        let known = known_dataset(name);
        Self {
            name: name.to_string(),
            expected_channels: known.map(|k| k.features),
            granularity: known.map(|k| k.granularity.to_string()),
        }
    }
}

pub fn load_csv(path: &Path, schema: &CsvSchema) -> Result<Dataset> {
    read_csv(File::open(path)?, schema)
}

/// Header row, then one row per timestep: a timestamp (ignored) followed by
/// numeric channel values.
pub fn read_csv<R: Read>(reader: R, schema: &CsvSchema) -> Result<Dataset> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let headers = rdr.headers()?.clone();
    if headers.len() < 2 {
        return Err(HadlError::Parse {
            row: 1,
            column: headers.get(0).unwrap_or("").to_string(),
            message: "expected a timestamp column and at least one value column".into(),
        });
    }
    let names: Vec<String> = headers.iter().skip(1).map(str::to_string).collect();
    let n_ch = names.len();
    let mut columns: Vec<Vec<f64>> = vec![Vec::new(); n_ch];

    for (i, record) in rdr.records().enumerate() {
        // 1-based file line, counting the header.
        let row = i + 2;
        let record = record?;
        if record.len() != n_ch + 1 {
            return Err(HadlError::Parse {
                row,
                column: String::new(),
                message: format!("expected {} fields, found {}", n_ch + 1, record.len()),
            });
        }
        for (c, cell) in record.iter().skip(1).enumerate() {
            let missing = || HadlError::MissingValue {
                row,
                column: names[c].clone(),
            };
            if cell.is_empty() || cell.eq_ignore_ascii_case("nan") || cell.eq_ignore_ascii_case("na") {
                return Err(missing());
            }
            let v: f64 = cell.parse().map_err(|_| HadlError::Parse {
                row,
                column: names[c].clone(),
                message: format!("'{cell}' is not a number"),
            })?;
            if !v.is_finite() {
                return Err(missing());
            }
            columns[c].push(v);
        }
    }
    let steps = columns.first().map_or(0, Vec::len);
    if steps == 0 {
        return Err(HadlError::EmptyFile);
    }
    if let Some(expected) = schema.expected_channels {
        if expected != n_ch {
            return Err(HadlError::ChannelCount {
                name: schema.name.clone(),
                expected,
                found: n_ch,
            });
        }
    }
    let values = Matrix::from_vec(n_ch, steps, columns.concat())?;
    Ok(Dataset {
        name: schema.name.clone(),
        series: SeriesTensor::new(names, values)?,
        granularity: schema.granularity.clone().unwrap_or_default(),
    })
}
