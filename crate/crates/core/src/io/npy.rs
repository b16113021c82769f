//! NPY v1.0 reader/writer for little-endian numeric arrays of rank 1 or 2.
//!
//! Reads `<f4`, `<f8`, `<i4` and `<i8`; 4-byte floats are widened to `f64`.
//! Writes `<f8` matrices/vectors and `<i8` label vectors.

use std::path::Path;

use thiserror::Error;

use crate::error::{Error, Result};
use crate::linalg::Matrix;

const MAGIC: &[u8; 6] = b"\x93NUMPY";
const PREAMBLE: usize = 10;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum NpyError {
    #[error("magic string mismatch at byte offset {offset}")]
    BadMagic { offset: usize },
    #[error("unsupported format version {major}.{minor} (only 1.0 is read)")]
    UnsupportedVersion { major: u8, minor: u8 },
    #[error("unsupported dtype `{0}`")]
    UnsupportedDtype(String),
    #[error("Fortran-ordered arrays are not supported")]
    FortranOrder,
    #[error("truncated: expected {expected} bytes, found {found}")]
    Truncated { expected: usize, found: usize },
    #[error("malformed header: {0}")]
    BadHeader(String),
    #[error("unsupported shape {0:?}; only 1-D and 2-D arrays are read")]
    BadShape(Vec<usize>),
}

impl NpyError {
    /// Stable short code per failure kind.
    pub fn code(&self) -> &'static str {
        match self {
            NpyError::BadMagic { .. } => "npy-magic",
            NpyError::UnsupportedVersion { .. } => "npy-version",
            NpyError::UnsupportedDtype(_) => "npy-dtype",
            NpyError::FortranOrder => "npy-fortran-order",
            NpyError::Truncated { .. } => "npy-truncated",
            NpyError::BadHeader(_) => "npy-header",
            NpyError::BadShape(_) => "npy-shape",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Dtype {
    F4,
    F8,
    I4,
    I8,
}

impl Dtype {
    fn parse(descr: &str) -> Result<Self, NpyError> {
        match descr {
            "<f4" => Ok(Dtype::F4),
            "<f8" => Ok(Dtype::F8),
            "<i4" => Ok(Dtype::I4),
            "<i8" => Ok(Dtype::I8),
            other => Err(NpyError::UnsupportedDtype(other.to_string())),
        }
    }

    fn descr(self) -> &'static str {
        match self {
            Dtype::F4 => "<f4",
            Dtype::F8 => "<f8",
            Dtype::I4 => "<i4",
            Dtype::I8 => "<i8",
        }
    }

    fn size(self) -> usize {
        match self {
            Dtype::F4 | Dtype::I4 => 4,
            Dtype::F8 | Dtype::I8 => 8,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum NpyValues {
    Float(Vec<f64>),
    Int(Vec<i64>),
}

/// A decoded array: its on-disk dtype, shape and widened values.
#[derive(Debug, Clone, PartialEq)]
pub struct NpyArray {
    pub dtype: Dtype,
    pub shape: Vec<usize>,
    pub values: NpyValues,
}

impl NpyArray {
    /// Rows and columns; a 1-D array is a single column.
    pub fn matrix_shape(&self) -> (usize, usize) {
        match self.shape.as_slice() {
            [n] => (*n, 1),
            [n, d] => (*n, *d),
            _ => unreachable!("rank checked on parse"),
        }
    }
}

struct Header {
    descr: String,
    fortran_order: bool,
    shape: Vec<usize>,
}

fn value_after<'a>(dict: &'a str, key: &str) -> Result<&'a str, NpyError> {
    let quoted = [format!("'{key}'"), format!("\"{key}\"")];
    let at = quoted
        .iter()
        .find_map(|k| dict.find(k.as_str()).map(|i| i + k.len()))
        .ok_or_else(|| NpyError::BadHeader(format!("missing key `{key}`")))?;
    let rest = dict[at..].trim_start();
    rest.strip_prefix(':')
        .map(str::trim_start)
        .ok_or_else(|| NpyError::BadHeader(format!("expected `:` after `{key}`")))
}

fn parse_header(text: &str) -> Result<Header, NpyError> {
    let dict = text.trim();
    if !dict.starts_with('{') || !dict.ends_with('}') {
        return Err(NpyError::BadHeader("header is not a dict literal".into()));
    }

    let d = value_after(dict, "descr")?;
    let quote = d
        .chars()
        .next()
        .filter(|c| *c == '\'' || *c == '"')
        .ok_or_else(|| NpyError::BadHeader("descr is not a string".into()))?;
    let end = d[1..]
        .find(quote)
        .ok_or_else(|| NpyError::BadHeader("unterminated descr".into()))?;
    let descr = d[1..1 + end].to_string();

    let f = value_after(dict, "fortran_order")?;
    let fortran_order = if f.starts_with("True") {
        true
    } else if f.starts_with("False") {
        false
    } else {
        return Err(NpyError::BadHeader("fortran_order is not a boolean".into()));
    };

    let s = value_after(dict, "shape")?;
    let s = s
        .strip_prefix('(')
        .ok_or_else(|| NpyError::BadHeader("shape is not a tuple".into()))?;
    let close = s
        .find(')')
        .ok_or_else(|| NpyError::BadHeader("unterminated shape".into()))?;
    let shape = s[..close]
        .split(',')
        .map(str::trim)
        .filter(|t| !t.is_empty())
        .map(|t| t.trim_end_matches('L').parse::<usize>())
        .collect::<Result<Vec<_>, _>>()
        .map_err(|_| NpyError::BadHeader(format!("bad shape entry in `({}`", &s[..=close])))?;

    Ok(Header {
        descr,
        fortran_order,
        shape,
    })
}

/// Decodes an in-memory NPY file.
pub fn parse_npy(bytes: &[u8]) -> Result<NpyArray, NpyError> {
    for (offset, &expected) in MAGIC.iter().enumerate() {
        match bytes.get(offset) {
            Some(&b) if b == expected => {}
            Some(_) => return Err(NpyError::BadMagic { offset }),
            None => {
                return Err(NpyError::Truncated {
                    expected: PREAMBLE,
                    found: bytes.len(),
                })
            }
        }
    }
    if bytes.len() < PREAMBLE {
        return Err(NpyError::Truncated {
            expected: PREAMBLE,
            found: bytes.len(),
        });
    }
    let (major, minor) = (bytes[6], bytes[7]);
    if (major, minor) != (1, 0) {
        return Err(NpyError::UnsupportedVersion { major, minor });
    }
    let header_len = u16::from_le_bytes([bytes[8], bytes[9]]) as usize;
    let data_start = PREAMBLE + header_len;
    if bytes.len() < data_start {
        return Err(NpyError::Truncated {
            expected: data_start,
            found: bytes.len(),
        });
    }
    let text = std::str::from_utf8(&bytes[PREAMBLE..data_start])
        .map_err(|_| NpyError::BadHeader("header is not ASCII".into()))?;
    let header = parse_header(text)?;

    let dtype = Dtype::parse(&header.descr)?;
    if header.fortran_order {
        return Err(NpyError::FortranOrder);
    }
    if header.shape.is_empty() || header.shape.len() > 2 {
        return Err(NpyError::BadShape(header.shape));
    }
    let count = header
        .shape
        .iter()
        .try_fold(1usize, |acc, &s| acc.checked_mul(s))
        .ok_or_else(|| NpyError::BadShape(header.shape.clone()))?;
    let payload_len = count
        .checked_mul(dtype.size())
        .ok_or_else(|| NpyError::BadShape(header.shape.clone()))?;
    let payload = &bytes[data_start..];
    if payload.len() < payload_len {
        return Err(NpyError::Truncated {
            expected: data_start + payload_len,
            found: bytes.len(),
        });
    }
    let payload = &payload[..payload_len];

    let values = match dtype {
        Dtype::F4 => NpyValues::Float(
            payload
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64)
                .collect(),
        ),
        Dtype::F8 => NpyValues::Float(
            payload
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
                .collect(),
        ),
        Dtype::I4 => NpyValues::Int(
            payload
                .chunks_exact(4)
                .map(|c| i32::from_le_bytes(c.try_into().unwrap()) as i64)
                .collect(),
        ),
        Dtype::I8 => NpyValues::Int(
            payload
                .chunks_exact(8)
                .map(|c| i64::from_le_bytes(c.try_into().unwrap()))
                .collect(),
        ),
    };
    Ok(NpyArray {
        dtype,
        shape: header.shape,
        values,
    })
}

/// Encodes raw little-endian `payload` under a v1.0 header.
fn encode(dtype: Dtype, shape: &[usize], payload: &[u8]) -> Vec<u8> {
    let shape_str = match shape {
        [n] => format!("({n},)"),
        _ => format!(
            "({})",
            shape
                .iter()
                .map(usize::to_string)
                .collect::<Vec<_>>()
                .join(", ")
        ),
    };
    let mut header = format!(
        "{{'descr': '{}', 'fortran_order': False, 'shape': {}, }}",
        dtype.descr(),
        shape_str
    );
    // pad so the payload starts on a 64-byte boundary, newline-terminated
    let unpadded = PREAMBLE + header.len() + 1;
    header.push_str(&" ".repeat((64 - unpadded % 64) % 64));
    header.push('\n');

    let mut out = Vec::with_capacity(PREAMBLE + header.len() + payload.len());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&[1, 0]);
    out.extend_from_slice(&(header.len() as u16).to_le_bytes());
    out.extend_from_slice(header.as_bytes());
    out.extend_from_slice(payload);
    out
}

pub fn encode_f64(shape: &[usize], values: &[f64]) -> Vec<u8> {
    let payload: Vec<u8> = values.iter().flat_map(|v| v.to_le_bytes()).collect();
    encode(Dtype::F8, shape, &payload)
}

pub fn encode_f32(shape: &[usize], values: &[f32]) -> Vec<u8> {
    let payload: Vec<u8> = values.iter().flat_map(|v| v.to_le_bytes()).collect();
    encode(Dtype::F4, shape, &payload)
}

pub fn encode_i64(shape: &[usize], values: &[i64]) -> Vec<u8> {
    let payload: Vec<u8> = values.iter().flat_map(|v| v.to_le_bytes()).collect();
    encode(Dtype::I8, shape, &payload)
}

pub fn read_npy(path: &Path) -> Result<NpyArray> {
    let bytes = super::read_file(path)?;
    parse_npy(&bytes).map_err(|source| Error::Npy {
        path: path.to_path_buf(),
        source,
    })
}

/// Loads a float array as a matrix; a 1-D array becomes one column.
/// Integer arrays are refused so labels cannot be mistaken for features.
pub fn load_npy(path: &Path) -> Result<Matrix<f64>> {
    let arr = read_npy(path)?;
    let (rows, cols) = arr.matrix_shape();
    match arr.values {
        NpyValues::Float(v) => {
            if let Some(i) = v.iter().position(|x| !x.is_finite()) {
                return Err(Error::Validation(format!(
                    "{}: non-finite value at flat index {i}",
                    path.display()
                )));
            }
            Matrix::new(rows, cols, v)
        }
        NpyValues::Int(_) => Err(Error::Npy {
            path: path.to_path_buf(),
            source: NpyError::UnsupportedDtype(format!(
                "{} (expected a float array)",
                arr.dtype.descr()
            )),
        }),
    }
}

/// Loads a label vector: integer dtype, shape `(n,)` or `(n, 1)`.
pub fn load_npy_labels(path: &Path) -> Result<Vec<usize>> {
    let arr = read_npy(path)?;
    if arr.matrix_shape().1 != 1 {
        return Err(Error::Npy {
            path: path.to_path_buf(),
            source: NpyError::BadShape(arr.shape),
        });
    }
    match arr.values {
        NpyValues::Int(v) => v
            .into_iter()
            .enumerate()
            .map(|(i, x)| {
                usize::try_from(x).map_err(|_| {
                    Error::Validation(format!("{}: negative label {x} at row {i}", path.display()))
                })
            })
            .collect(),
        NpyValues::Float(_) => Err(Error::Npy {
            path: path.to_path_buf(),
            source: NpyError::UnsupportedDtype(format!(
                "{} (expected an integer array)",
                arr.dtype.descr()
            )),
        }),
    }
}

pub fn save_npy(matrix: &Matrix<f64>, path: &Path) -> Result<()> {
    super::atomic_write(
        path,
        &encode_f64(&[matrix.rows(), matrix.cols()], matrix.as_slice()),
    )
}

pub fn save_npy_vector(values: &[f64], path: &Path) -> Result<()> {
    super::atomic_write(path, &encode_f64(&[values.len()], values))
}

pub fn save_npy_labels(labels: &[usize], path: &Path) -> Result<()> {
    let v: Vec<i64> = labels.iter().map(|&l| l as i64).collect();
    super::atomic_write(path, &encode_i64(&[v.len()], &v))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_is_bit_exact() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m.npy");
        let m = Matrix::from_rows(&[[0.1, -0.0], [f64::MIN_POSITIVE, 1e300], [3.0, 1.0 / 3.0]])
            .unwrap();
        save_npy(&m, &p).unwrap();
        let back = load_npy(&p).unwrap();
        assert_eq!((back.rows(), back.cols()), (3, 2));
        for (a, b) in m.as_slice().iter().zip(back.as_slice()) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
    }

    #[test]
    fn header_is_aligned_and_terminated() {
        let bytes = encode_f64(&[3, 2], &[0.0; 6]);
        let hlen = u16::from_le_bytes([bytes[8], bytes[9]]) as usize;
        assert_eq!((PREAMBLE + hlen) % 64, 0);
        assert_eq!(bytes[PREAMBLE + hlen - 1], b'\n');
        assert_eq!(bytes.len(), PREAMBLE + hlen + 48);
    }

    #[test]
    fn wrong_magic_names_offset() {
        let mut bytes = encode_f64(&[1], &[1.0]);
        bytes[3] = b'X';
        assert_eq!(parse_npy(&bytes), Err(NpyError::BadMagic { offset: 3 }));
        assert_eq!(
            parse_npy(b"PK\x03\x04"),
            Err(NpyError::BadMagic { offset: 0 })
        );
    }

    #[test]
    fn distinct_failures_have_distinct_codes() {
        let good = encode_f64(&[2, 2], &[1.0; 4]);

        let mut version = good.clone();
        version[6] = 2;
        let mut fortran = good.clone();
        let pos = fortran.windows(5).position(|w| w == b"False").unwrap();
        fortran[pos..pos + 5].copy_from_slice(b"True ");
        let mut big_endian = good.clone();
        let pos = big_endian.windows(3).position(|w| w == b"<f8").unwrap();
        big_endian[pos] = b'>';
        let truncated = &good[..good.len() - 3];

        let errs = [
            parse_npy(b"\x93NUMPX\x01\x00").unwrap_err(),
            parse_npy(&version).unwrap_err(),
            parse_npy(&big_endian).unwrap_err(),
            parse_npy(&fortran).unwrap_err(),
            parse_npy(truncated).unwrap_err(),
        ];
        let codes: Vec<&str> = errs.iter().map(NpyError::code).collect();
        assert_eq!(
            codes,
            [
                "npy-magic",
                "npy-version",
                "npy-dtype",
                "npy-fortran-order",
                "npy-truncated"
            ]
        );
    }

    #[test]
    fn f4_widens() {
        let bytes = encode_f32(&[2, 1], &[0.1f32, -2.5]);
        let arr = parse_npy(&bytes).unwrap();
        assert_eq!(arr.dtype, Dtype::F4);
        assert_eq!(arr.values, NpyValues::Float(vec![0.1f32 as f64, -2.5]));
    }

    #[test]
    fn one_dimensional_is_a_column() {
        let arr = parse_npy(&encode_f64(&[3], &[1.0, 2.0, 3.0])).unwrap();
        assert_eq!(arr.matrix_shape(), (3, 1));
    }

    #[test]
    fn rank_three_rejected() {
        let bytes = encode_f64(&[1, 1, 1], &[1.0]);
        assert_eq!(parse_npy(&bytes), Err(NpyError::BadShape(vec![1, 1, 1])));
    }

    #[test]
    fn empty_shape_entries() {
        let arr = parse_npy(&encode_f64(&[0, 4], &[])).unwrap();
        assert_eq!(arr.matrix_shape(), (0, 4));
    }

    #[test]
    fn labels_round_trip_and_reject_floats() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("y.npy");
        save_npy_labels(&[0, 2, 1], &p).unwrap();
        assert_eq!(load_npy_labels(&p).unwrap(), vec![0, 2, 1]);
        assert!(matches!(load_npy(&p), Err(Error::Npy { .. })));

        let f = dir.path().join("f.npy");
        save_npy_vector(&[0.0, 1.0], &f).unwrap();
        assert!(matches!(load_npy_labels(&f), Err(Error::Npy { .. })));
    }

    #[test]
    fn negative_label_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("y.npy");
        std::fs::write(&p, encode_i64(&[2], &[0, -1])).unwrap();
        assert!(matches!(load_npy_labels(&p), Err(Error::Validation(_))));
    }

    #[test]
    fn double_quoted_header_keys_parse() {
        let header = "{\"descr\": \"<f8\", \"fortran_order\": False, \"shape\": (1, 1)}";
        let h = parse_header(header).unwrap();
        assert_eq!(h.shape, vec![1, 1]);
        assert_eq!(h.descr, "<f8");
    }
}
