//! Matrix files: CSV with a `d0,...,d{D-1}` header, or a mixture checkpoint
//! (whose means are used as the rows).

use std::fs;
use std::path::Path;

use ndarray::Array2;

use crate::error::{Error, Result};
use crate::mixture::{decode_checkpoint, CHECKPOINT_MAGIC};

/// CSV with a `d0..d{D-1}` header; values use the shortest round-trip form.
pub fn matrix_to_csv(m: &Array2<f64>) -> String {
    let header: Vec<String> = (0..m.ncols()).map(|j| format!("d{j}")).collect();
    let mut out = header.join(",");
    out.push('\n');
    for row in m.rows() {
        let fields: Vec<String> = row.iter().map(|v| format!("{v:?}")).collect();
        out.push_str(&fields.join(","));
        out.push('\n');
    }
    out
}

pub fn write_matrix_csv(path: impl AsRef<Path>, m: &Array2<f64>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, matrix_to_csv(m)).map_err(|e| Error::io(path, e))
}

fn parse_error(path: &Path, offset: u64, message: impl Into<String>) -> Error {
    Error::Parse {
        path: path.to_path_buf(),
        offset,
        message: message.into(),
    }
}

/// Parses a CSV matrix. Ragged rows and non-numeric fields are reported with
/// the byte offset of the offending record and its 1-based data row number.
pub fn parse_matrix_csv(bytes: &[u8], path: &Path) -> Result<Array2<f64>> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(bytes);
    let header = rdr
        .headers()
        .map_err(|e| parse_error(path, 0, e.to_string()))?
        .clone();
    if header.is_empty() || (header.len() == 1 && header[0].is_empty()) {
        return Err(parse_error(path, 0, "empty file"));
    }
    for (j, name) in header.iter().enumerate() {
        if name != format!("d{j}") {
            return Err(parse_error(
                path,
                0,
                format!("header field {j} is {name:?}, expected \"d{j}\""),
            ));
        }
    }
    let d = header.len();
    let mut values = Vec::new();
    let mut rows = 0usize;
    for rec in rdr.records() {
        let rec = rec.map_err(|e| {
            let off = e.position().map_or(0, |p| p.byte());
            parse_error(path, off, e.to_string())
        })?;
        let off = rec.position().map_or(0, |p| p.byte());
        if rec.len() == 1 && rec[0].is_empty() {
            continue;
        }
        rows += 1;
        if rec.len() != d {
            return Err(parse_error(
                path,
                off,
                format!("row {rows} has {} fields, expected {d}", rec.len()),
            ));
        }
        for (j, field) in rec.iter().enumerate() {
            let v: f64 = field.parse().map_err(|_| {
                parse_error(
                    path,
                    off,
                    format!("row {rows} field {j}: {field:?} is not a number"),
                )
            })?;
            if !v.is_finite() {
                return Err(parse_error(
                    path,
                    off,
                    format!("row {rows} field {j} is not finite"),
                ));
            }
            values.push(v);
        }
    }
    if rows == 0 {
        return Err(parse_error(path, bytes.len() as u64, "no data rows"));
    }
    Ok(Array2::from_shape_vec((rows, d), values).expect("sized"))
}

pub fn read_matrix_csv(path: impl AsRef<Path>) -> Result<Array2<f64>> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    parse_matrix_csv(&bytes, path)
}

/// Reads a matrix from either format, sniffing the checkpoint magic.
///
/// Files that carry the magic, or are not UTF-8 text, are decoded as
/// checkpoints and never retried as CSV.
pub fn read_matrix(path: impl AsRef<Path>) -> Result<Array2<f64>> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    if bytes.starts_with(CHECKPOINT_MAGIC) || std::str::from_utf8(&bytes).is_err() {
        return Ok(decode_checkpoint(&bytes, path)?.means);
    }
    parse_matrix_csv(&bytes, path)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn csv_round_trip() {
        let m = array![[0.1, -2.0], [1e-17, 3.0]];
        let text = matrix_to_csv(&m);
        assert!(text.starts_with("d0,d1\n"));
        let back = parse_matrix_csv(text.as_bytes(), Path::new("m.csv")).unwrap();
        assert_eq!(back, m);
    }

    #[test]
    fn ragged_row_reports_row_and_offset() {
        let text = "d0,d1\n1,2\n3\n";
        match parse_matrix_csv(text.as_bytes(), Path::new("m.csv")) {
            Err(Error::Parse {
                offset, message, ..
            }) => {
                assert_eq!(offset, 10);
                assert!(message.contains("row 2"), "{message}");
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn empty_and_garbage() {
        assert!(parse_matrix_csv(b"", Path::new("e")).is_err());
        assert!(parse_matrix_csv(b"d0\n", Path::new("e")).is_err());
        assert!(parse_matrix_csv(b"x,y\n1,2\n", Path::new("e")).is_err());
        assert!(parse_matrix_csv(b"d0\nabc\n", Path::new("e")).is_err());
    }
}
