//! Detection back-ends and their on-disk container.

pub mod gmm;
pub mod mlp;

use std::path::Path;

use thiserror::Error;

use crate::corpus::Label;
use crate::features::{pool_stats, FeatureKind, FeatureMatrix};

pub use gmm::{gmm_fit, gmm_score, ClassGmm, FrameSet, GmmConfig, GmmModel};
pub use mlp::{cross_entropy, mlp_score, mlp_train, Adam, EarlyStopper, Mlp, MlpModel, TrainConfig, TrainLog};

#[derive(Debug, Error)]
pub enum DetectorError {
    #[error("need at least {need} frames, have {have}")]
    TooFewFrames { have: usize, need: usize },
    #[error("model expects {model:?} features, got {input:?}")]
    KindMismatch { model: FeatureKind, input: FeatureKind },
    #[error("label and prediction lengths differ: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },
    #[error("class {0:?} is missing or has fewer than 2 samples")]
    ClassMissing(Label),
    #[error("model expects {model}-dim input, got {input}")]
    DimMismatch { model: usize, input: usize },
}

/// Either back-end behind one scoring interface.
#[derive(Debug, Clone, PartialEq)]
pub enum DetectorModel {
    Gmm(GmmModel),
    Mlp(MlpModel),
}

impl DetectorModel {
    pub fn feature_kind(&self) -> FeatureKind {
        match self {
            DetectorModel::Gmm(m) => m.feature_kind,
            DetectorModel::Mlp(m) => m.feature_kind,
        }
    }

    /// Score one utterance's features; higher means more bonafide.
    pub fn score(&self, f: &FeatureMatrix) -> Result<f64, DetectorError> {
        match self {
            DetectorModel::Gmm(m) => gmm_score(m, f),
            DetectorModel::Mlp(m) => {
                if f.kind != m.feature_kind {
                    return Err(DetectorError::KindMismatch {
                        model: m.feature_kind,
                        input: f.kind,
                    });
                }
                mlp_score(m, &pool_stats(f))
            }
        }
    }
}

// --- model container ------------------------------------------------------

const MODEL_MAGIC: [u8; 4] = *b"ADMD";
const MODEL_VERSION: u32 = 1;
const KIND_GMM: u32 = 0;
const KIND_MLP: u32 = 1;
/// Decode-side cap on parameter counts.
const MODEL_MAX_FLOATS: u64 = 1 << 24;

#[derive(Debug, Error)]
pub enum ModelIoError {
    #[error("bad model magic")]
    BadMagic,
    #[error("unsupported model version {0}")]
    BadVersion(u32),
    #[error("unknown model kind {0}")]
    BadModelKind(u32),
    #[error("unknown feature kind {0}")]
    BadFeatureKind(u32),
    #[error("model payload is {got} bytes, expected {expected}")]
    SizeMismatch { expected: u64, got: u64 },
    #[error("declared model too large")]
    TooLarge,
    #[error("model parameter not finite or out of range")]
    BadValue,
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

struct Writer {
    bytes: Vec<u8>,
}

impl Writer {
    fn u32(&mut self, v: u32) {
        self.bytes.extend_from_slice(&v.to_le_bytes());
    }
    fn f64s(&mut self, vs: &[f64]) {
        for v in vs {
            self.bytes.extend_from_slice(&v.to_le_bytes());
        }
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn u32(&mut self) -> Result<u32, ModelIoError> {
        let end = self.pos + 4;
        let slice = self
            .bytes
            .get(self.pos..end)
            .ok_or(ModelIoError::SizeMismatch {
                expected: end as u64,
                got: self.bytes.len() as u64,
            })?;
        self.pos = end;
        Ok(u32::from_le_bytes(slice.try_into().unwrap()))
    }

    fn f64s(&mut self, n: u64) -> Result<Vec<f64>, ModelIoError> {
        if n > MODEL_MAX_FLOATS {
            return Err(ModelIoError::TooLarge);
        }
        let end = self.pos + (n as usize) * 8;
        let slice = self
            .bytes
            .get(self.pos..end)
            .ok_or(ModelIoError::SizeMismatch {
                expected: end as u64,
                got: self.bytes.len() as u64,
            })?;
        self.pos = end;
        let mut out = Vec::with_capacity(n as usize);
        for chunk in slice.chunks_exact(8) {
            let v = f64::from_le_bytes(chunk.try_into().unwrap());
            if !v.is_finite() {
                return Err(ModelIoError::BadValue);
            }
            out.push(v);
        }
        Ok(out)
    }

    fn finish(&self) -> Result<(), ModelIoError> {
        if self.pos != self.bytes.len() {
            return Err(ModelIoError::SizeMismatch {
                expected: self.pos as u64,
                got: self.bytes.len() as u64,
            });
        }
        Ok(())
    }
}

fn feature_code(kind: FeatureKind) -> u32 {
    match kind {
        FeatureKind::Lfcc => 0,
        FeatureKind::Cqcc => 1,
        FeatureKind::Raw => 2,
    }
}

fn feature_from_code(c: u32) -> Result<FeatureKind, ModelIoError> {
    match c {
        0 => Ok(FeatureKind::Lfcc),
        1 => Ok(FeatureKind::Cqcc),
        2 => Ok(FeatureKind::Raw),
        other => Err(ModelIoError::BadFeatureKind(other)),
    }
}

/// Versioned binary container: magic, version, model kind, feature kind,
/// dims, then little-endian f64 parameters.
pub fn encode_model(model: &DetectorModel) -> Vec<u8> {
    let mut w = Writer {
        bytes: MODEL_MAGIC.to_vec(),
    };
    w.u32(MODEL_VERSION);
    match model {
        DetectorModel::Gmm(m) => {
            w.u32(KIND_GMM);
            w.u32(feature_code(m.feature_kind));
            w.u32(m.bonafide.components() as u32);
            w.u32(m.bonafide.dim as u32);
            for class in [&m.bonafide, &m.fake] {
                w.f64s(&class.weights);
                w.f64s(&class.means);
                w.f64s(&class.variances);
            }
        }
        DetectorModel::Mlp(m) => {
            w.u32(KIND_MLP);
            w.u32(feature_code(m.feature_kind));
            w.u32(m.net.in_dim as u32);
            w.u32(m.net.hidden as u32);
            w.f64s(&m.input_mean);
            w.f64s(&m.input_std);
            w.f64s(&m.net.params);
        }
    }
    w.bytes
}

pub fn decode_model(bytes: &[u8]) -> Result<DetectorModel, ModelIoError> {
    if bytes.len() < 4 || bytes[..4] != MODEL_MAGIC {
        return Err(ModelIoError::BadMagic);
    }
    let mut r = Reader { bytes, pos: 4 };
    let version = r.u32()?;
    if version != MODEL_VERSION {
        return Err(ModelIoError::BadVersion(version));
    }
    let model_kind = r.u32()?;
    let feature_kind = feature_from_code(r.u32()?)?;
    match model_kind {
        KIND_GMM => {
            let k = u64::from(r.u32()?);
            let d = u64::from(r.u32()?);
            let kd = k.checked_mul(d).ok_or(ModelIoError::TooLarge)?;
            if k == 0 || d == 0 || kd > MODEL_MAX_FLOATS {
                return Err(ModelIoError::TooLarge);
            }
            let mut classes = Vec::with_capacity(2);
            for _ in 0..2 {
                let weights = r.f64s(k)?;
                let means = r.f64s(kd)?;
                let variances = r.f64s(kd)?;
                if weights.iter().any(|&w| w < 0.0) || variances.iter().any(|&v| v <= 0.0) {
                    return Err(ModelIoError::BadValue);
                }
                classes.push(ClassGmm {
                    dim: d as usize,
                    weights,
                    means,
                    variances,
                });
            }
            r.finish()?;
            let fake = classes.pop().unwrap();
            let bonafide = classes.pop().unwrap();
            Ok(DetectorModel::Gmm(GmmModel {
                feature_kind,
                bonafide,
                fake,
            }))
        }
        KIND_MLP => {
            let in_dim = u64::from(r.u32()?);
            let hidden = u64::from(r.u32()?);
            if in_dim == 0
                || hidden == 0
                || in_dim > MODEL_MAX_FLOATS
                || hidden > MODEL_MAX_FLOATS
                || in_dim * hidden > MODEL_MAX_FLOATS
            {
                return Err(ModelIoError::TooLarge);
            }
            let input_mean = r.f64s(in_dim)?;
            let input_std = r.f64s(in_dim)?;
            if input_std.iter().any(|&s| s <= 0.0) {
                return Err(ModelIoError::BadValue);
            }
            let n_params = Mlp::n_params(in_dim as usize, hidden as usize);
            let params = r.f64s(n_params as u64)?;
            r.finish()?;
            Ok(DetectorModel::Mlp(MlpModel {
                feature_kind,
                net: Mlp {
                    in_dim: in_dim as usize,
                    hidden: hidden as usize,
                    params,
                },
                input_mean,
                input_std,
            }))
        }
        other => Err(ModelIoError::BadModelKind(other)),
    }
}

pub fn write_model(path: &Path, model: &DetectorModel) -> Result<(), ModelIoError> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent)?;
    }
    std::fs::write(path, encode_model(model))?;
    Ok(())
}

pub fn read_model(path: &Path) -> Result<DetectorModel, ModelIoError> {
    let bytes = std::fs::read(path)?;
    decode_model(&bytes)
}
