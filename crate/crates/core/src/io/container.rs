//! Fitted-model container.
//!
//! Layout (all integers little-endian):
//!
//! | bytes        | content                                        |
//! |--------------|------------------------------------------------|
//! | 4            | magic `OODK`                                   |
//! | 2            | format version (`u16`)                         |
//! | 1            | model kind tag                                 |
//! | 8 + n        | model payload, length-prefixed                 |
//! | 8 + n        | calibration block (UTF-8 text, may be empty)   |
//! | 8 + n        | provenance (JSON)                              |
//! | 32           | SHA-256 of every preceding byte                |

use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::calibration::CalibrationParams;
use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::mixup::{Dense, MlpModel};
use crate::scorers::{FittedScorer, KnnModel, MdsModel, VimModel};

pub const MAGIC: &[u8; 4] = b"OODK";
pub const FORMAT_VERSION: u16 = 1;
const DIGEST_LEN: usize = 32;

#[derive(Debug, Clone, PartialEq)]
pub enum StoredModel {
    Scorer(FittedScorer<f64>),
    /// Reference MLP; scored with MSP over its logits.
    Mlp(MlpModel<f64>),
}

impl StoredModel {
    fn tag(&self) -> u8 {
        match self {
            StoredModel::Scorer(FittedScorer::Vim(_)) => 1,
            StoredModel::Scorer(FittedScorer::Mds(_)) => 2,
            StoredModel::Scorer(FittedScorer::Knn(_)) => 3,
            StoredModel::Scorer(FittedScorer::Msp) => 4,
            StoredModel::Mlp(_) => 5,
        }
    }

    pub fn kind_name(&self) -> &'static str {
        match self {
            StoredModel::Scorer(s) => s.kind().name(),
            StoredModel::Mlp(_) => "mlp",
        }
    }
}

/// Digest of one input file used for fitting.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InputDigest {
    pub path: String,
    pub sha256: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Provenance {
    pub seed: u64,
    pub command: String,
    pub inputs: Vec<InputDigest>,
}

impl Provenance {
    pub fn digest_file(path: &Path) -> Result<InputDigest> {
        let bytes = super::read_file(path)?;
        Ok(InputDigest {
            path: path.display().to_string(),
            sha256: hex::encode(Sha256::digest(&bytes)),
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelContainer {
    pub model: StoredModel,
    pub calibration: Option<CalibrationParams>,
    pub provenance: Provenance,
}

struct Writer(Vec<u8>);

impl Writer {
    fn u8(&mut self, v: u8) {
        self.0.push(v);
    }
    fn u64(&mut self, v: u64) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn f64(&mut self, v: f64) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn vec(&mut self, v: &[f64]) {
        self.u64(v.len() as u64);
        v.iter().for_each(|&x| self.f64(x));
    }
    fn matrix(&mut self, m: &Matrix<f64>) {
        self.u64(m.rows() as u64);
        self.u64(m.cols() as u64);
        m.as_slice().iter().for_each(|&x| self.f64(x));
    }
    fn block(&mut self, bytes: &[u8]) {
        self.u64(bytes.len() as u64);
        self.0.extend_from_slice(bytes);
    }
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.buf.len())
            .ok_or_else(|| Error::Format(format!("container truncated at byte {}", self.pos)))?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }
    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }
    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
    fn usize(&mut self) -> Result<usize> {
        usize::try_from(self.u64()?)
            .map_err(|_| Error::Format("length does not fit in memory".into()))
    }
    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
    fn f64s(&mut self, n: usize) -> Result<Vec<f64>> {
        let bytes = self.take(
            n.checked_mul(8)
                .ok_or_else(|| Error::Format("length overflow".into()))?,
        )?;
        Ok(bytes
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect())
    }
    fn vec(&mut self) -> Result<Vec<f64>> {
        let n = self.usize()?;
        self.f64s(n)
    }
    fn matrix(&mut self) -> Result<Matrix<f64>> {
        let rows = self.usize()?;
        let cols = self.usize()?;
        let n = rows
            .checked_mul(cols)
            .ok_or_else(|| Error::Format("matrix shape overflow".into()))?;
        Matrix::new(rows, cols, self.f64s(n)?)
    }
    fn block(&mut self) -> Result<&'a [u8]> {
        let n = self.usize()?;
        self.take(n)
    }
    fn done(&self) -> bool {
        self.pos == self.buf.len()
    }
}

fn encode_model(model: &StoredModel) -> Vec<u8> {
    let mut w = Writer(Vec::new());
    match model {
        StoredModel::Scorer(FittedScorer::Vim(m)) => {
            w.u64(m.class_count() as u64);
            w.f64(m.alpha());
            w.vec(m.mean());
            w.matrix(m.principal_basis());
            w.matrix(m.residual_basis());
        }
        StoredModel::Scorer(FittedScorer::Mds(m)) => {
            w.f64(m.ridge());
            w.matrix(m.class_means());
            w.matrix(m.precision());
        }
        StoredModel::Scorer(FittedScorer::Knn(m)) => {
            w.u64(m.k() as u64);
            w.u8(u8::from(m.normalize()));
            w.matrix(m.bank());
        }
        StoredModel::Scorer(FittedScorer::Msp) => {}
        StoredModel::Mlp(m) => {
            w.u64(m.layers().len() as u64);
            for layer in m.layers() {
                w.matrix(&layer.weights);
                w.vec(&layer.bias);
            }
        }
    }
    w.0
}

fn decode_model(tag: u8, payload: &[u8]) -> Result<StoredModel> {
    let mut r = Reader {
        buf: payload,
        pos: 0,
    };
    let model = match tag {
        1 => {
            let classes = r.usize()?;
            let alpha = r.f64()?;
            let mean = r.vec()?;
            let principal = r.matrix()?;
            let residual = r.matrix()?;
            StoredModel::Scorer(FittedScorer::Vim(VimModel::from_parts(
                mean, principal, residual, alpha, classes,
            )?))
        }
        2 => {
            let ridge = r.f64()?;
            let means = r.matrix()?;
            let precision = r.matrix()?;
            StoredModel::Scorer(FittedScorer::Mds(MdsModel::from_parts(
                means, precision, ridge,
            )?))
        }
        3 => {
            let k = r.usize()?;
            let normalize = match r.u8()? {
                0 => false,
                1 => true,
                b => return Err(Error::Format(format!("invalid normalize flag {b}"))),
            };
            StoredModel::Scorer(FittedScorer::Knn(KnnModel::from_parts(
                r.matrix()?,
                k,
                normalize,
            )?))
        }
        4 => StoredModel::Scorer(FittedScorer::Msp),
        5 => {
            let n = r.usize()?;
            let mut layers = Vec::new();
            for _ in 0..n {
                let w = r.matrix()?;
                let b = r.vec()?;
                layers.push(Dense::new(w, b)?);
            }
            StoredModel::Mlp(MlpModel::from_layers(layers)?)
        }
        other => return Err(Error::Format(format!("unknown model kind tag {other}"))),
    };
    if !r.done() {
        return Err(Error::Format("trailing bytes after model payload".into()));
    }
    Ok(model)
}

impl ModelContainer {
    pub fn new(model: StoredModel, provenance: Provenance) -> Self {
        Self {
            model,
            calibration: None,
            provenance,
        }
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = Writer(Vec::new());
        w.0.extend_from_slice(MAGIC);
        w.0.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
        w.u8(self.model.tag());
        w.block(&encode_model(&self.model));
        let calib = self
            .calibration
            .as_ref()
            .map(CalibrationParams::to_text)
            .unwrap_or_default();
        w.block(calib.as_bytes());
        w.block(&serde_json::to_vec(&self.provenance).expect("provenance serializes"));
        let digest = Sha256::digest(&w.0);
        w.0.extend_from_slice(&digest);
        w.0
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < MAGIC.len() || &bytes[..4] != MAGIC {
            return Err(Error::Format("not a model container (bad magic)".into()));
        }
        if bytes.len() < 7 + DIGEST_LEN {
            return Err(Error::Format("model container truncated".into()));
        }
        let version = u16::from_le_bytes([bytes[4], bytes[5]]);
        if version != FORMAT_VERSION {
            return Err(Error::Format(format!(
                "unsupported container version {version} (expected {FORMAT_VERSION})"
            )));
        }
        let (body, stored) = bytes.split_at(bytes.len() - DIGEST_LEN);
        if Sha256::digest(body).as_slice() != stored {
            return Err(Error::Integrity(
                "model container digest does not match its contents".into(),
            ));
        }

        let mut r = Reader { buf: body, pos: 6 };
        let tag = r.u8()?;
        let model = decode_model(tag, r.block()?)?;
        let calib = std::str::from_utf8(r.block()?)
            .map_err(|_| Error::Format("calibration block is not UTF-8".into()))?;
        let calibration = if calib.trim().is_empty() {
            None
        } else {
            Some(CalibrationParams::from_text(calib)?)
        };
        let provenance = serde_json::from_slice(r.block()?)
            .map_err(|e| Error::Format(format!("bad provenance block: {e}")))?;
        if !r.done() {
            return Err(Error::Format("trailing bytes before digest".into()));
        }
        Ok(Self {
            model,
            calibration,
            provenance,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        super::atomic_write(path, &self.to_bytes())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_bytes(&super::read_file(path)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{ClassQuantity, FeatureSet};
    use crate::rng::{stream_rng, Stream};
    use crate::scorers::{fit_knn, fit_mds, fit_vim};

    fn train() -> FeatureSet<f64> {
        let f = Matrix::from_rows(&[
            [0.0, 0.1, 1.0],
            [1.0, 0.3, -1.0],
            [2.0, -0.2, 0.5],
            [3.0, 0.0, 0.0],
            [0.5, 1.0, 2.0],
            [1.5, -1.0, 0.2],
        ])
        .unwrap();
        let z = Matrix::from_rows(&[
            [2.0, 0.0],
            [1.5, 0.1],
            [0.0, 2.0],
            [0.3, 1.0],
            [1.0, 0.0],
            [0.0, 1.0],
        ])
        .unwrap();
        FeatureSet::new(f, Some(z), Some(vec![0, 0, 1, 1, 0, 1]), 2).unwrap()
    }

    fn all_models() -> Vec<StoredModel> {
        let t = train();
        vec![
            StoredModel::Scorer(FittedScorer::Vim(fit_vim(&t, 1).unwrap())),
            StoredModel::Scorer(FittedScorer::Mds(fit_mds(&t, None).unwrap())),
            StoredModel::Scorer(FittedScorer::Knn(fit_knn(&t, 2, true).unwrap())),
            StoredModel::Scorer(FittedScorer::Msp),
            StoredModel::Mlp(
                MlpModel::init(3, &[4], 2, &mut stream_rng(1, Stream::MlpInit)).unwrap(),
            ),
        ]
    }

    #[test]
    fn every_kind_round_trips() {
        for model in all_models() {
            let mut c = ModelContainer::new(
                model,
                Provenance {
                    seed: 9,
                    command: "fit".into(),
                    inputs: vec![InputDigest {
                        path: "a.npy".into(),
                        sha256: "00".into(),
                    }],
                },
            );
            let bytes = c.to_bytes();
            assert_eq!(&bytes[..4], b"OODK");
            assert_eq!(ModelContainer::from_bytes(&bytes).unwrap(), c);

            c.calibration = Some(
                CalibrationParams::new(
                    1.3,
                    0.1,
                    0.0,
                    0.01,
                    ClassQuantity::from_counts(vec![10, 4]).unwrap(),
                )
                .unwrap(),
            );
            assert_eq!(ModelContainer::from_bytes(&c.to_bytes()).unwrap(), c);
        }
    }

    #[test]
    fn any_flipped_byte_is_detected() {
        let c = ModelContainer::new(all_models().remove(0), Provenance::default());
        let bytes = c.to_bytes();
        for i in (4..bytes.len()).step_by(7) {
            let mut bad = bytes.clone();
            bad[i] ^= 0x01;
            let err = ModelContainer::from_bytes(&bad).unwrap_err();
            assert!(
                matches!(err, Error::Integrity(_) | Error::Format(_)),
                "byte {i}: {err}"
            );
            if i >= 7 {
                assert!(matches!(err, Error::Integrity(_)), "byte {i}: {err}");
            }
        }
    }

    #[test]
    fn bad_magic_and_version() {
        let bytes = ModelContainer::new(
            StoredModel::Scorer(FittedScorer::Msp),
            Provenance::default(),
        )
        .to_bytes();
        let mut m = bytes.clone();
        m[0] = b'X';
        assert!(matches!(
            ModelContainer::from_bytes(&m),
            Err(Error::Format(_))
        ));
        let mut v = bytes;
        v[4] = 9;
        assert!(
            matches!(ModelContainer::from_bytes(&v), Err(Error::Format(e)) if e.contains("version"))
        );
    }

    #[test]
    fn truncated() {
        assert!(ModelContainer::from_bytes(b"OODK\x01\x00").is_err());
    }
}
