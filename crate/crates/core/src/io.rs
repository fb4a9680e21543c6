//! CSV and JSON helpers. Floats are written with 17 significant digits so
//! every value survives a write/read cycle bit-for-bit.

use std::fs;
use std::io::Write;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::error::{DuioError, Result};
use crate::linalg::Mat;

pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

/// Writes `m` with one line per column (sample) and a header naming the rows.
pub fn write_samples_csv(path: &Path, prefix: &str, m: &Mat) -> Result<()> {
    let mut out = std::io::BufWriter::new(fs::File::create(path)?);
    let header: Vec<String> = (1..=m.nrows()).map(|k| format!("{prefix}_{k}")).collect();
    writeln!(out, "{}", header.join(","))?;
    for col in m.column_iter() {
        let row: Vec<String> = col.iter().map(|&v| fmt_f64(v)).collect();
        writeln!(out, "{}", row.join(","))?;
    }
    out.flush()?;
    Ok(())
}

/// Inverse of [`write_samples_csv`]; `rows` is the expected channel count.
pub fn read_samples_csv(path: &Path, rows: usize) -> Result<Mat> {
    let text = fs::read_to_string(path)?;
    let parse_err = |reason: String| DuioError::Parse {
        path: path.display().to_string(),
        reason,
    };
    let mut lines = text.lines();
    let header = lines.next().ok_or_else(|| parse_err("empty file".into()))?;
    let header_cols = if header.is_empty() { 0 } else { header.split(',').count() };
    if header_cols != rows {
        return Err(parse_err(format!("expected {rows} columns, header has {header_cols}")));
    }
    let mut columns: Vec<Vec<f64>> = Vec::new();
    for (ln, line) in lines.enumerate() {
        let values: Vec<f64> = if line.is_empty() {
            Vec::new()
        } else {
            line.split(',')
                .map(|s| s.trim().parse::<f64>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|e| parse_err(format!("line {}: {e}", ln + 2)))?
        };
        if values.len() != rows {
            return Err(parse_err(format!(
                "line {}: expected {rows} values, found {}",
                ln + 2,
                values.len()
            )));
        }
        columns.push(values);
    }
    Ok(Mat::from_fn(rows, columns.len(), |r, c| columns[c][r]))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value)
        .map_err(|e| DuioError::Config(format!("serialize {}: {e}", path.display())))?;
    fs::write(path, text + "\n")?;
    Ok(())
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path)?;
    serde_json::from_str(&text).map_err(|e| DuioError::Parse {
        path: path.display().to_string(),
        reason: e.to_string(),
    })
}

/// Serde adapter storing a matrix as row-major nested arrays.
pub mod mat_rows {
    use serde::{de::Error, Deserialize, Deserializer, Serializer};

    use crate::linalg::Mat;

    pub fn to_rows(m: &Mat) -> Vec<Vec<f64>> {
        m.row_iter().map(|r| r.iter().copied().collect()).collect()
    }

    pub fn from_rows(rows: &[Vec<f64>], cols_hint: Option<usize>) -> Result<Mat, String> {
        let ncols = rows.first().map(|r| r.len()).or(cols_hint).unwrap_or(0);
        if rows.iter().any(|r| r.len() != ncols) {
            return Err("ragged matrix rows".into());
        }
        Ok(Mat::from_fn(rows.len(), ncols, |i, j| rows[i][j]))
    }

    pub fn serialize<S: Serializer>(m: &Mat, s: S) -> Result<S::Ok, S::Error> {
        s.collect_seq(to_rows(m))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Mat, D::Error> {
        let rows = Vec::<Vec<f64>>::deserialize(d)?;
        from_rows(&rows, None).map_err(D::Error::custom)
    }
}

pub mod mat_rows_vec {
    use serde::{de::Error, Deserialize, Deserializer, Serializer};

    use super::mat_rows::{from_rows, to_rows};
    use crate::linalg::Mat;

    pub fn serialize<S: Serializer>(ms: &[Mat], s: S) -> Result<S::Ok, S::Error> {
        s.collect_seq(ms.iter().map(to_rows))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<Mat>, D::Error> {
        let all = Vec::<Vec<Vec<f64>>>::deserialize(d)?;
        all.iter()
            .map(|rows| from_rows(rows, None).map_err(D::Error::custom))
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_round_trip_is_bit_exact() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m.csv");
        let m = Mat::from_fn(3, 7, |i, j| ((i * 7 + j) as f64).sin() * 1e-3 + 1.0 / 3.0);
        write_samples_csv(&p, "x", &m).unwrap();
        let back = read_samples_csv(&p, 3).unwrap();
        assert_eq!(back, m);
        assert!(read_samples_csv(&p, 2).is_err());
    }

    #[test]
    fn zero_channel_matrix_keeps_sample_count() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("e.csv");
        write_samples_csv(&p, "u", &Mat::zeros(0, 4)).unwrap();
        assert_eq!(read_samples_csv(&p, 0).unwrap().shape(), (0, 4));
    }
}
