//! CSV ingestion and JSON emission.

use std::fs;
use std::io::Write;
use std::path::Path;

use ndarray::{Array1, Array2};
use serde::Serialize;
use structinf_core::Dataset;

#[derive(Debug, thiserror::Error)]
pub enum DataError {
    #[error("cannot read {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("{path}: {source}")]
    Csv { path: String, source: csv::Error },
    #[error("{path}: no response column named `{column}`")]
    MissingResponse { path: String, column: String },
    #[error("{path}: row {row} has {found} cells, header has {expected}")]
    Ragged { path: String, row: usize, expected: usize, found: usize },
    #[error("{path}: row {row}, column `{column}`: `{value}` is not a finite number")]
    NonNumeric { path: String, row: usize, column: String, value: String },
    #[error("{path}: {message}")]
    Invalid { path: String, message: String },
}

/// A dataset together with the names of its predictor columns.
#[derive(Debug, Clone)]
pub struct LoadedData {
    pub dataset: Dataset,
    /// Predictor names in design order, intercept excluded.
    pub predictors: Vec<String>,
}

/// Reads a headed numeric CSV. `response` names the y column; the other
/// columns, in header order, form the design. With `intercept` a column of
/// ones is prepended.
pub fn ingest_csv(path: &Path, response: &str, intercept: bool) -> Result<LoadedData, DataError> {
    let shown = path.display().to_string();
    let file = fs::File::open(path).map_err(|source| DataError::Io { path: shown.clone(), source })?;
    let mut reader = csv::ReaderBuilder::new().flexible(true).trim(csv::Trim::All).from_reader(file);
    let header: Vec<String> = reader
        .headers()
        .map_err(|source| DataError::Csv { path: shown.clone(), source })?
        .iter()
        .map(str::to_owned)
        .collect();
    let y_col = header
        .iter()
        .position(|h| h == response)
        .ok_or_else(|| DataError::MissingResponse { path: shown.clone(), column: response.to_owned() })?;

    let mut y = Vec::new();
    let mut cells = Vec::new();
    for (r, record) in reader.records().enumerate() {
        let row = r + 1;
        let record = record.map_err(|source| DataError::Csv { path: shown.clone(), source })?;
        if record.len() != header.len() {
            return Err(DataError::Ragged { path: shown, row, expected: header.len(), found: record.len() });
        }
        for (c, cell) in record.iter().enumerate() {
            let value = cell.parse::<f64>().ok().filter(|v| v.is_finite()).ok_or_else(|| DataError::NonNumeric {
                path: shown.clone(),
                row,
                column: header[c].clone(),
                value: cell.to_owned(),
            })?;
            if c == y_col {
                y.push(value);
            } else {
                cells.push(value);
            }
        }
    }
    let n = y.len();
    let p = header.len() - 1;
    let x = Array2::from_shape_vec((n, p), cells).expect("rectangular by construction");
    let y = Array1::from(y);
    let dataset = if intercept { Dataset::with_intercept(y, x.view()) } else { Dataset::new(y, x) }
        .map_err(|e| DataError::Invalid { path: shown, message: e.to_string() })?;
    let predictors = header.into_iter().enumerate().filter(|(c, _)| *c != y_col).map(|(_, h)| h).collect();
    Ok(LoadedData { dataset, predictors })
}

/// Writes every float with 17 significant digits in scientific notation.
#[derive(Debug, Clone, Copy, Default)]
pub struct FixedDigits;

impl serde_json::ser::Formatter for FixedDigits {
    fn write_f64<W: ?Sized + Write>(&mut self, writer: &mut W, value: f64) -> std::io::Result<()> {
        if value.is_finite() {
            write!(writer, "{value:.16e}")
        } else {
            writer.write_all(b"null")
        }
    }

    fn write_f32<W: ?Sized + Write>(&mut self, writer: &mut W, value: f32) -> std::io::Result<()> {
        write!(writer, "{:.16e}", f64::from(value))
    }
}

/// Serializes to JSON with [`FixedDigits`] and two-space indentation.
pub fn to_json<T: Serialize>(value: &T) -> serde_json::Result<String> {
    let mut out = Vec::new();
    let mut ser = serde_json::Serializer::with_formatter(&mut out, Pretty::default());
    value.serialize(&mut ser)?;
    out.push(b'\n');
    Ok(String::from_utf8(out).expect("serde_json emits UTF-8"))
}

/// Pretty printing with [`FixedDigits`] floats.
#[derive(Debug, Default)]
struct Pretty {
    inner: serde_json::ser::PrettyFormatter<'static>,
}

macro_rules! delegate {
    ($($name:ident($($arg:ident: $ty:ty),*)),* $(,)?) => {
        $(fn $name<W: ?Sized + Write>(&mut self, writer: &mut W $(, $arg: $ty)*) -> std::io::Result<()> {
            self.inner.$name(writer $(, $arg)*)
        })*
    };
}

impl serde_json::ser::Formatter for Pretty {
    fn write_f64<W: ?Sized + Write>(&mut self, writer: &mut W, value: f64) -> std::io::Result<()> {
        FixedDigits.write_f64(writer, value)
    }

    delegate!(
        begin_array(),
        end_array(),
        begin_array_value(first: bool),
        end_array_value(),
        begin_object(),
        end_object(),
        begin_object_key(first: bool),
        begin_object_value(),
        end_object_value(),
    );
}

/// Writes all files or none: each goes to a sibling temporary first and is
/// renamed into place once every write succeeded.
pub fn write_all_or_nothing(files: &[(&Path, &str)]) -> std::io::Result<()> {
    let mut staged = Vec::with_capacity(files.len());
    for (path, contents) in files {
        let tmp = path.with_extension("partial");
        if let Err(e) = fs::write(&tmp, contents) {
            for (t, _) in &staged {
                let _ = fs::remove_file(t);
            }
            return Err(e);
        }
        staged.push((tmp, *path));
    }
    for (tmp, path) in staged {
        fs::rename(tmp, path)?;
    }
    Ok(())
}
