//! Comma-separated numeric matrices, mainly for hand-written fixtures.

use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::linalg::Matrix;

/// Parses CSV text into a matrix. Rows are numbered from 1 as they appear in
/// the file (the header, when present, is row 1).
pub fn parse_csv(text: &str, has_header: bool, source: &str) -> Result<Matrix<f64>> {
    let mut reader = ::csv::ReaderBuilder::new()
        .has_headers(has_header)
        .flexible(true)
        .trim(::csv::Trim::All)
        .from_reader(text.as_bytes());
    let mut data = Vec::new();
    let mut width = None;
    let mut rows = 0;
    for (i, record) in reader.records().enumerate() {
        let row_no = i + 1 + usize::from(has_header);
        let record = record.map_err(|e| Error::Format(format!("{source}: row {row_no}: {e}")))?;
        if record.len() == 1 && record[0].is_empty() {
            continue;
        }
        match width {
            None => width = Some(record.len()),
            Some(w) if w != record.len() => {
                return Err(Error::Format(format!(
                    "{source}: row {row_no} has {} fields, expected {w}",
                    record.len()
                )))
            }
            Some(_) => {}
        }
        for (col, cell) in record.iter().enumerate() {
            let v: f64 = cell.parse().map_err(|_| {
                Error::Format(format!(
                    "{source}: row {row_no}, column {}: `{cell}` is not a number",
                    col + 1
                ))
            })?;
            if !v.is_finite() {
                return Err(Error::Validation(format!(
                    "{source}: row {row_no}, column {}: non-finite value",
                    col + 1
                )));
            }
            data.push(v);
        }
        rows += 1;
    }
    let cols = width.ok_or_else(|| Error::Validation(format!("{source}: empty input")))?;
    Matrix::new(rows, cols, data)
}

pub fn load_csv(path: &Path, has_header: bool) -> Result<Matrix<f64>> {
    let bytes = super::read_file(path)?;
    let text = String::from_utf8(bytes)
        .map_err(|_| Error::Format(format!("{}: not valid UTF-8", path.display())))?;
    parse_csv(&text, has_header, &path.display().to_string())
}

/// One integer label per row, no header.
pub fn load_csv_labels(path: &Path) -> Result<Vec<usize>> {
    let m = load_csv(path, false)?;
    if m.cols() != 1 {
        return Err(Error::Format(format!(
            "{}: labels need one column, found {}",
            path.display(),
            m.cols()
        )));
    }
    m.as_slice()
        .iter()
        .enumerate()
        .map(|(i, &v)| {
            if v >= 0.0 && v.fract() == 0.0 && v < u32::MAX as f64 {
                Ok(v as usize)
            } else {
                Err(Error::Validation(format!(
                    "{}: row {}: `{v}` is not a class index",
                    path.display(),
                    i + 1
                )))
            }
        })
        .collect()
}

fn render<I: IntoIterator<Item = String>>(rows: I) -> String {
    let mut s = String::new();
    for r in rows {
        let _ = writeln!(s, "{r}");
    }
    s
}

/// Writes shortest round-trip decimal text, so CSV output is also lossless.
pub fn save_csv(matrix: &Matrix<f64>, path: &Path) -> Result<()> {
    let text = render(matrix.row_iter().map(|r| {
        r.iter()
            .map(|v| format!("{v:?}"))
            .collect::<Vec<_>>()
            .join(",")
    }));
    super::atomic_write(path, text.as_bytes())
}

pub fn save_csv_vector(values: &[f64], path: &Path) -> Result<()> {
    super::atomic_write(
        path,
        render(values.iter().map(|v| format!("{v:?}"))).as_bytes(),
    )
}

pub fn save_csv_labels(labels: &[usize], path: &Path) -> Result<()> {
    super::atomic_write(path, render(labels.iter().map(usize::to_string)).as_bytes())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn header_and_two_rows() {
        let m = parse_csv("a,b,c\n1,2,3\n4.5,-6,7e-1\n", true, "t").unwrap();
        assert_eq!((m.rows(), m.cols()), (2, 3));
        assert_eq!(m.as_slice(), &[1.0, 2.0, 3.0, 4.5, -6.0, 0.7]);
    }

    #[test]
    fn empty_input() {
        assert!(
            matches!(parse_csv("", false, "t"), Err(Error::Validation(m)) if m.contains("empty"))
        );
        assert!(matches!(
            parse_csv("x,y\n", true, "t"),
            Err(Error::Validation(_))
        ));
    }

    #[test]
    fn ragged_row_named() {
        let err = parse_csv("1,2\n3,4\n5\n", false, "t").unwrap_err();
        assert!(
            matches!(&err, Error::Format(m) if m.contains("row 3")),
            "{err}"
        );
        let err = parse_csv("h1,h2\n1,2\n3\n", true, "t").unwrap_err();
        assert!(
            matches!(&err, Error::Format(m) if m.contains("row 3")),
            "{err}"
        );
    }

    #[test]
    fn non_numeric_cell() {
        let err = parse_csv("1,2\n3,abc\n", false, "t").unwrap_err();
        assert!(
            matches!(&err, Error::Format(m) if m.contains("row 2, column 2")),
            "{err}"
        );
    }

    #[test]
    fn matches_line_split_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(100);
        let mut text = String::from("c0,c1,c2,c3\n");
        for _ in 0..100 {
            let cells: Vec<String> = (0..4)
                .map(|_| format!("{}", rng.random_range(-1e3..1e3f64)))
                .collect();
            text.push_str(&cells.join(","));
            text.push('\n');
        }
        let got = parse_csv(&text, true, "t").unwrap();

        let oracle: Vec<f64> = text
            .lines()
            .skip(1)
            .flat_map(|l| l.split(',').map(|c| c.parse::<f64>().unwrap()))
            .collect();
        assert_eq!(got.rows(), 100);
        assert_eq!(got.as_slice(), oracle.as_slice());
    }

    #[test]
    fn save_load_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m.csv");
        let m = Matrix::from_rows(&[[0.1, 1.0 / 3.0], [-2.0, 1e-300]]).unwrap();
        save_csv(&m, &p).unwrap();
        assert_eq!(load_csv(&p, false).unwrap(), m);
    }

    #[test]
    fn labels() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("y.csv");
        save_csv_labels(&[2, 0, 1], &p).unwrap();
        assert_eq!(load_csv_labels(&p).unwrap(), vec![2, 0, 1]);
        std::fs::write(&p, "1\n0.5\n").unwrap();
        assert!(matches!(load_csv_labels(&p), Err(Error::Validation(_))));
    }
}
