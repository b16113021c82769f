//! Dataset manifests: a versioned JSON document naming the feature, logit,
//! label and row-index files of each split.
//!
//! ```json
//! {
//!   "version": 1,
//!   "class_count": 4,
//!   "splits": [
//!     {"name": "train_id", "features": "train_features.npy",
//!      "logits": "train_logits.npy", "labels": "train_labels.npy"}
//!   ],
//!   "metadata": {}
//! }
//! ```
//!
//! Relative paths resolve against the manifest's directory. Loading reads
//! and cross-checks every split before returning anything.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::data::FeatureSet;
use crate::error::{Error, Result};

pub const MANIFEST_VERSION: u32 = 1;

pub const TRAIN_ID: &str = "train_id";
pub const VAL_ID: &str = "val_id";
pub const TEST_ID: &str = "test_id";
pub const NEAR_OOD: &str = "near_ood";
pub const FAR_OOD: &str = "far_ood";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SplitEntry {
    pub name: String,
    pub features: PathBuf,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub logits: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub labels: Option<PathBuf>,
    /// Text file with one row identifier per line, in row order.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub index: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub version: u32,
    pub class_count: usize,
    pub splits: Vec<SplitEntry>,
    #[serde(default)]
    pub metadata: serde_json::Map<String, serde_json::Value>,
}

impl Manifest {
    pub fn from_json(text: &str) -> Result<Self> {
        let m: Manifest = serde_json::from_str(text)
            .map_err(|e| Error::Manifest(format!("invalid manifest JSON: {e}")))?;
        m.check_schema()?;
        Ok(m)
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("manifest serializes");
        s.push('\n');
        s
    }

    /// Checks that need no file access.
    pub fn check_schema(&self) -> Result<()> {
        if self.version != MANIFEST_VERSION {
            return Err(Error::Manifest(format!(
                "unsupported manifest version {} (expected {MANIFEST_VERSION})",
                self.version
            )));
        }
        if self.class_count < 1 {
            return Err(Error::Manifest("class_count must be at least 1".into()));
        }
        if self.splits.is_empty() {
            return Err(Error::Manifest("manifest lists no splits".into()));
        }
        let mut seen = BTreeSet::new();
        for s in &self.splits {
            if s.name.is_empty() {
                return Err(Error::Manifest("split with an empty name".into()));
            }
            if !seen.insert(s.name.as_str()) {
                return Err(Error::Manifest(format!("split `{}` listed twice", s.name)));
            }
        }
        Ok(())
    }

    pub fn split_entry(&self, name: &str) -> Option<&SplitEntry> {
        self.splits.iter().find(|s| s.name == name)
    }
}

/// A manifest with every split loaded and validated.
#[derive(Debug, Clone)]
pub struct Dataset {
    manifest: Manifest,
    root: PathBuf,
    splits: Vec<(String, FeatureSet<f64>)>,
}

impl Dataset {
    pub fn load(manifest_path: &Path) -> Result<Self> {
        let bytes = super::read_file(manifest_path)?;
        let text = String::from_utf8(bytes)
            .map_err(|_| Error::Manifest(format!("{} is not UTF-8", manifest_path.display())))?;
        let manifest = Manifest::from_json(&text)?;
        let root = manifest_path
            .parent()
            .map(Path::to_path_buf)
            .unwrap_or_default();
        Self::from_manifest(manifest, root)
    }

    pub fn from_manifest(manifest: Manifest, root: PathBuf) -> Result<Self> {
        manifest.check_schema()?;
        let n_classes = manifest.class_count;

        // existence first, so a typo fails before any large read
        for s in &manifest.splits {
            for p in [
                Some(&s.features),
                s.logits.as_ref(),
                s.labels.as_ref(),
                s.index.as_ref(),
            ]
            .into_iter()
            .flatten()
            {
                let full = super::resolve(&root, p);
                if !full.is_file() {
                    return Err(Error::Manifest(format!(
                        "split `{}` references missing file {}",
                        s.name,
                        full.display()
                    )));
                }
            }
        }

        let mut splits = Vec::with_capacity(manifest.splits.len());
        let mut dim = None;
        for s in &manifest.splits {
            let ctx = |e: Error| match e {
                Error::Validation(m) | Error::Dimension(m) => {
                    Error::Manifest(format!("split `{}`: {m}", s.name))
                }
                other => other,
            };
            let features = super::load_matrix(&super::resolve(&root, &s.features))?;
            let logits = s
                .logits
                .as_ref()
                .map(|p| super::load_matrix(&super::resolve(&root, p)))
                .transpose()?;
            let labels = s
                .labels
                .as_ref()
                .map(|p| super::load_labels(&super::resolve(&root, p)))
                .transpose()?;
            if features.rows() == 0 {
                return Err(Error::Manifest(format!("split `{}` has no rows", s.name)));
            }
            match dim {
                None => dim = Some(features.cols()),
                Some(d) if d != features.cols() => {
                    return Err(Error::Manifest(format!(
                        "split `{}` has feature width {}, earlier splits have {d}",
                        s.name,
                        features.cols()
                    )))
                }
                Some(_) => {}
            }
            if let Some(p) = &s.index {
                check_index(&super::resolve(&root, p), features.rows(), &s.name)?;
            }
            let set = FeatureSet::new(features, logits, labels, n_classes).map_err(ctx)?;
            splits.push((s.name.clone(), set));
        }
        Ok(Self {
            manifest,
            root,
            splits,
        })
    }

    pub fn manifest(&self) -> &Manifest {
        &self.manifest
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn class_count(&self) -> usize {
        self.manifest.class_count
    }

    pub fn split_names(&self) -> impl Iterator<Item = &str> {
        self.splits.iter().map(|(n, _)| n.as_str())
    }

    pub fn get(&self, name: &str) -> Option<&FeatureSet<f64>> {
        self.splits.iter().find(|(n, _)| n == name).map(|(_, s)| s)
    }

    pub fn split(&self, name: &str) -> Result<&FeatureSet<f64>> {
        self.get(name)
            .ok_or_else(|| Error::Manifest(format!("manifest has no `{name}` split")))
    }

    /// Files behind split `name`, resolved, in features/logits/labels/index order.
    pub fn split_files(&self, name: &str) -> Vec<PathBuf> {
        self.manifest
            .split_entry(name)
            .map(|s| {
                [
                    Some(&s.features),
                    s.logits.as_ref(),
                    s.labels.as_ref(),
                    s.index.as_ref(),
                ]
                .into_iter()
                .flatten()
                .map(|p| super::resolve(&self.root, p))
                .collect()
            })
            .unwrap_or_default()
    }
}

fn check_index(path: &Path, rows: usize, split: &str) -> Result<()> {
    let text = String::from_utf8(super::read_file(path)?)
        .map_err(|_| Error::Manifest(format!("index file {} is not UTF-8", path.display())))?;
    let ids: Vec<&str> = text.lines().filter(|l| !l.trim().is_empty()).collect();
    if ids.len() != rows {
        return Err(Error::Manifest(format!(
            "split `{split}`: index lists {} rows, features have {rows}",
            ids.len()
        )));
    }
    let mut seen = BTreeSet::new();
    for (i, id) in ids.iter().enumerate() {
        if !seen.insert(*id) {
            return Err(Error::Manifest(format!(
                "split `{split}`: index entry `{id}` repeated at line {}",
                i + 1
            )));
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::io::npy::{save_npy, save_npy_labels};
    use crate::linalg::Matrix;
    use std::fs;

    fn write_split(dir: &Path, name: &str, rows: usize) -> SplitEntry {
        let f: Vec<[f64; 3]> = (0..rows).map(|i| [i as f64, 1.0, -1.0]).collect();
        let z: Vec<[f64; 2]> = (0..rows).map(|i| [i as f64, 0.0]).collect();
        let y: Vec<usize> = (0..rows).map(|i| i % 2).collect();
        save_npy(
            &Matrix::from_rows(&f).unwrap(),
            &dir.join(format!("{name}_f.npy")),
        )
        .unwrap();
        save_npy(
            &Matrix::from_rows(&z).unwrap(),
            &dir.join(format!("{name}_z.npy")),
        )
        .unwrap();
        save_npy_labels(&y, &dir.join(format!("{name}_y.npy"))).unwrap();
        SplitEntry {
            name: name.into(),
            features: format!("{name}_f.npy").into(),
            logits: Some(format!("{name}_z.npy").into()),
            labels: Some(format!("{name}_y.npy").into()),
            index: None,
        }
    }

    fn manifest(splits: Vec<SplitEntry>) -> Manifest {
        Manifest {
            version: 1,
            class_count: 2,
            splits,
            metadata: Default::default(),
        }
    }

    #[test]
    fn loads_and_resolves_relative_paths() {
        let dir = tempfile::tempdir().unwrap();
        let m = manifest(vec![
            write_split(dir.path(), "train_id", 4),
            write_split(dir.path(), "test_id", 3),
        ]);
        let p = dir.path().join("manifest.json");
        fs::write(&p, m.to_json()).unwrap();
        let ds = Dataset::load(&p).unwrap();
        assert_eq!(ds.split("train_id").unwrap().len(), 4);
        assert_eq!(ds.split("test_id").unwrap().labels().unwrap(), &[0, 1, 0]);
        assert!(matches!(ds.split("far_ood"), Err(Error::Manifest(_))));
        assert_eq!(Manifest::from_json(&m.to_json()).unwrap(), m);
    }

    #[test]
    fn duplicate_split_names_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let a = write_split(dir.path(), "train_id", 2);
        let m = manifest(vec![a.clone(), a]);
        assert!(matches!(m.check_schema(), Err(Error::Manifest(msg)) if msg.contains("twice")));
    }

    #[test]
    fn version_checked() {
        let text = r#"{"version": 2, "class_count": 2, "splits": []}"#;
        assert!(
            matches!(Manifest::from_json(text), Err(Error::Manifest(m)) if m.contains("version"))
        );
        let text = r#"{"class_count": 2, "splits": []}"#;
        assert!(matches!(Manifest::from_json(text), Err(Error::Manifest(_))));
    }

    #[test]
    fn row_mismatch_fails_fast() {
        let dir = tempfile::tempdir().unwrap();
        let mut s = write_split(dir.path(), "train_id", 4);
        write_split(dir.path(), "short", 3);
        s.labels = Some("short_y.npy".into());
        let err = Dataset::from_manifest(manifest(vec![s]), dir.path().into()).unwrap_err();
        assert!(
            matches!(&err, Error::Manifest(m) if m.contains("train_id")),
            "{err}"
        );
    }

    #[test]
    fn missing_file_reported_before_reading() {
        let dir = tempfile::tempdir().unwrap();
        let good = write_split(dir.path(), "train_id", 2);
        let mut bad = write_split(dir.path(), "test_id", 2);
        bad.logits = Some("nope.npy".into());
        let err = Dataset::from_manifest(manifest(vec![good, bad]), dir.path().into()).unwrap_err();
        assert!(
            matches!(&err, Error::Manifest(m) if m.contains("nope.npy")),
            "{err}"
        );
    }

    #[test]
    fn width_mismatch_between_splits() {
        let dir = tempfile::tempdir().unwrap();
        let a = write_split(dir.path(), "train_id", 2);
        save_npy(
            &Matrix::from_rows(&[[1.0], [2.0]]).unwrap(),
            &dir.path().join("narrow.npy"),
        )
        .unwrap();
        let b = SplitEntry {
            name: "far_ood".into(),
            features: "narrow.npy".into(),
            logits: None,
            labels: None,
            index: None,
        };
        let err = Dataset::from_manifest(manifest(vec![a, b]), dir.path().into()).unwrap_err();
        assert!(
            matches!(&err, Error::Manifest(m) if m.contains("width")),
            "{err}"
        );
    }

    #[test]
    fn index_sidecar_checked() {
        let dir = tempfile::tempdir().unwrap();
        let mut s = write_split(dir.path(), "train_id", 3);
        s.index = Some("idx.txt".into());
        fs::write(dir.path().join("idx.txt"), "a/1.png\na/2.png\nb/1.png\n").unwrap();
        Dataset::from_manifest(manifest(vec![s.clone()]), dir.path().into()).unwrap();

        fs::write(dir.path().join("idx.txt"), "a/1.png\na/2.png\n").unwrap();
        assert!(Dataset::from_manifest(manifest(vec![s.clone()]), dir.path().into()).is_err());
        fs::write(dir.path().join("idx.txt"), "a/1.png\na/1.png\nb\n").unwrap();
        assert!(Dataset::from_manifest(manifest(vec![s]), dir.path().into()).is_err());
    }

    #[test]
    fn label_out_of_range() {
        let dir = tempfile::tempdir().unwrap();
        let s = write_split(dir.path(), "train_id", 3);
        let mut m = manifest(vec![s]);
        m.class_count = 1;
        assert!(Dataset::from_manifest(m, dir.path().into()).is_err());
    }
}
