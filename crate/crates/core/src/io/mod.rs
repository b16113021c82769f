//! Files in and out: NPY and CSV matrices, dataset manifests, the fitted
//! model container and the synthetic benchmark generator.

pub mod container;
pub mod csv;
pub mod manifest;
pub mod npy;
pub mod synth;

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};

/// Writes `bytes` to a sibling temp file, then renames over `path`.
pub fn atomic_write(path: &Path, bytes: &[u8]) -> Result<()> {
    let file_name = path
        .file_name()
        .ok_or_else(|| Error::Validation(format!("{} is not a file path", path.display())))?;
    let mut tmp_name = std::ffi::OsString::from(".");
    tmp_name.push(file_name);
    tmp_name.push(format!(".tmp{}", std::process::id()));
    let tmp = path.with_file_name(tmp_name);
    let write = || -> std::io::Result<()> {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
        fs::rename(&tmp, path)
    };
    write().map_err(|e| {
        let _ = fs::remove_file(&tmp);
        Error::io(path, e)
    })
}

pub(crate) fn read_file(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| Error::io(path, e))
}

/// On-disk matrix format chosen by file extension or `--format`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum FileFormat {
    #[default]
    Npy,
    Csv,
}

impl FileFormat {
    pub fn extension(self) -> &'static str {
        match self {
            FileFormat::Npy => "npy",
            FileFormat::Csv => "csv",
        }
    }

    /// `.csv` means CSV, anything else is read as NPY.
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some(e) if e.eq_ignore_ascii_case("csv") => FileFormat::Csv,
            _ => FileFormat::Npy,
        }
    }
}

/// Loads a float matrix in whichever format the extension names.
/// CSV matrices referenced this way carry no header row.
pub fn load_matrix(path: &Path) -> Result<crate::linalg::Matrix<f64>> {
    match FileFormat::from_path(path) {
        FileFormat::Npy => npy::load_npy(path),
        FileFormat::Csv => csv::load_csv(path, false),
    }
}

pub fn load_labels(path: &Path) -> Result<Vec<usize>> {
    match FileFormat::from_path(path) {
        FileFormat::Npy => npy::load_npy_labels(path),
        FileFormat::Csv => csv::load_csv_labels(path),
    }
}

pub fn save_matrix(matrix: &crate::linalg::Matrix<f64>, path: &Path) -> Result<()> {
    match FileFormat::from_path(path) {
        FileFormat::Npy => npy::save_npy(matrix, path),
        FileFormat::Csv => csv::save_csv(matrix, path),
    }
}

pub fn save_vector(values: &[f64], path: &Path) -> Result<()> {
    match FileFormat::from_path(path) {
        FileFormat::Npy => npy::save_npy_vector(values, path),
        FileFormat::Csv => csv::save_csv_vector(values, path),
    }
}

pub fn save_labels(labels: &[usize], path: &Path) -> Result<()> {
    match FileFormat::from_path(path) {
        FileFormat::Npy => npy::save_npy_labels(labels, path),
        FileFormat::Csv => csv::save_csv_labels(labels, path),
    }
}

pub(crate) fn resolve(base: &Path, p: &Path) -> PathBuf {
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        base.join(p)
    }
}
