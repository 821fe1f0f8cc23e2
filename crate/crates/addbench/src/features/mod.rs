//! Acoustic front-ends: LFCC, CQCC and raw waveform views, plus the
//! on-disk feature cache format.

pub mod cqcc;
pub mod dsp;
pub mod lfcc;

use std::path::Path;

use thiserror::Error;

use crate::audio::{AudioBuffer, FIXED_SAMPLES};

pub use cqcc::cqcc;
pub use lfcc::lfcc;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum FeatureError {
    #[error("expected {expected} samples, got {got}")]
    BadLength { expected: usize, got: usize },
    #[error("bad frame grid: {0}")]
    BadGrid(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FeatureKind {
    Lfcc,
    Cqcc,
    Raw,
}

impl FeatureKind {
    pub fn as_str(self) -> &'static str {
        match self {
            FeatureKind::Lfcc => "lfcc",
            FeatureKind::Cqcc => "cqcc",
            FeatureKind::Raw => "raw",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "lfcc" => Some(FeatureKind::Lfcc),
            "cqcc" => Some(FeatureKind::Cqcc),
            "raw" => Some(FeatureKind::Raw),
            _ => None,
        }
    }

    fn code(self) -> u32 {
        match self {
            FeatureKind::Lfcc => 0,
            FeatureKind::Cqcc => 1,
            FeatureKind::Raw => 2,
        }
    }

    fn from_code(c: u32) -> Option<Self> {
        match c {
            0 => Some(FeatureKind::Lfcc),
            1 => Some(FeatureKind::Cqcc),
            2 => Some(FeatureKind::Raw),
            _ => None,
        }
    }
}

/// D x T matrix of per-utterance features, row-major, row = coefficient.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    pub kind: FeatureKind,
    pub d: usize,
    pub t: usize,
    data: Vec<f64>,
}

impl FeatureMatrix {
    pub fn new(kind: FeatureKind, d: usize, t: usize, data: Vec<f64>) -> Self {
        assert_eq!(data.len(), d * t);
        Self { kind, d, t, data }
    }

    pub fn at(&self, row: usize, col: usize) -> f64 {
        self.data[row * self.t + col]
    }

    pub fn row(&self, row: usize) -> &[f64] {
        &self.data[row * self.t..(row + 1) * self.t]
    }

    /// Frame `col` as a D-vector.
    pub fn column(&self, col: usize) -> Vec<f64> {
        (0..self.d).map(|r| self.at(r, col)).collect()
    }

    pub fn columns(&self) -> impl Iterator<Item = Vec<f64>> + '_ {
        (0..self.t).map(|c| self.column(c))
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}

/// Centered framing with reflected edges.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FrameGrid {
    pub window_len: usize,
    pub hop: usize,
}

impl FrameGrid {
    pub fn n_frames(&self, signal_len: usize) -> usize {
        1 + signal_len / self.hop
    }
}

/// Cut Hamming-windowed frames centered at t*hop.
pub fn frame_signal(a: &AudioBuffer, grid: &FrameGrid) -> Result<Vec<Vec<f64>>, FeatureError> {
    if grid.hop == 0 || grid.window_len == 0 {
        return Err(FeatureError::BadGrid(format!(
            "window_len {}, hop {}",
            grid.window_len, grid.hop
        )));
    }
    let x = a.to_f64();
    if x.is_empty() {
        return Err(FeatureError::BadLength {
            expected: grid.hop,
            got: 0,
        });
    }
    let window = dsp::hamming(grid.window_len);
    let half = grid.window_len / 2;
    let pad = half + 1;
    let padded = dsp::reflect_pad(&x, pad);
    let n_frames = grid.n_frames(x.len());
    let mut frames = Vec::with_capacity(n_frames);
    for t in 0..n_frames {
        let center = t * grid.hop;
        let start = center + pad - half;
        let frame: Vec<f64> = (0..grid.window_len)
            .map(|i| padded[start + i] * window[i])
            .collect();
        frames.push(frame);
    }
    Ok(frames)
}

/// Append first and second order regression coefficients: [static; d1; d2].
///
/// Uses the two-frame regression window with edge replication, so a single
/// frame yields all-zero deltas.
pub fn deltas(static_rows: &FeatureMatrix) -> FeatureMatrix {
    let d = static_rows.d;
    let t = static_rows.t;
    let d1 = delta_of(static_rows.data(), d, t);
    let d2 = delta_of(&d1, d, t);
    let mut data = Vec::with_capacity(3 * d * t);
    data.extend_from_slice(static_rows.data());
    data.extend_from_slice(&d1);
    data.extend_from_slice(&d2);
    FeatureMatrix::new(static_rows.kind, 3 * d, t, data)
}

fn delta_of(rows: &[f64], d: usize, t: usize) -> Vec<f64> {
    // sum_{k=1..2} k*(s[t+k]-s[t-k]) / (2*sum k^2)
    let denom = 2.0 * (1.0 + 4.0);
    let mut out = vec![0.0; d * t];
    let clamp = |idx: i64| idx.clamp(0, t as i64 - 1) as usize;
    for r in 0..d {
        let row = &rows[r * t..(r + 1) * t];
        for c in 0..t {
            let mut acc = 0.0;
            for k in 1..=2i64 {
                acc += k as f64 * (row[clamp(c as i64 + k)] - row[clamp(c as i64 - k)]);
            }
            out[r * t + c] = acc / denom;
        }
    }
    out
}

/// The waveform itself as a 1 x L matrix scaled to [-1, 1).
pub fn raw_view(a: &AudioBuffer) -> Result<FeatureMatrix, FeatureError> {
    if a.len() != FIXED_SAMPLES {
        return Err(FeatureError::BadLength {
            expected: FIXED_SAMPLES,
            got: a.len(),
        });
    }
    Ok(FeatureMatrix::new(
        FeatureKind::Raw,
        1,
        FIXED_SAMPLES,
        a.to_f64(),
    ))
}

/// Temporal pooling: per-row mean followed by per-row population standard
/// deviation, a 2*D vector.
pub fn pool_stats(f: &FeatureMatrix) -> Vec<f64> {
    let t = f.t as f64;
    let mut out = Vec::with_capacity(2 * f.d);
    let mut stds = Vec::with_capacity(f.d);
    for r in 0..f.d {
        let row = f.row(r);
        let mean = row.iter().sum::<f64>() / t;
        let var = row.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / t;
        out.push(mean);
        stds.push(var.sqrt());
    }
    out.extend(stds);
    out
}

/// Dispatch on feature kind.
pub fn extract(a: &AudioBuffer, kind: FeatureKind) -> Result<FeatureMatrix, FeatureError> {
    match kind {
        FeatureKind::Lfcc => lfcc(a),
        FeatureKind::Cqcc => cqcc(a),
        FeatureKind::Raw => raw_view(a),
    }
}

// --- feature cache files ------------------------------------------------

const CACHE_MAGIC: [u8; 4] = *b"ADFC";
/// Refuse to allocate matrices beyond this many entries when decoding.
const CACHE_MAX_ELEMS: u64 = 1 << 24;

#[derive(Debug, Error)]
pub enum CacheError {
    #[error("bad cache magic")]
    BadMagic,
    #[error("unknown feature kind code {0}")]
    BadKind(u32),
    #[error("cache payload is {got} bytes, expected {expected}")]
    SizeMismatch { expected: u64, got: u64 },
    #[error("declared matrix too large")]
    TooLarge,
    #[error("cache value not finite")]
    NotFinite,
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// 16-byte header (magic, kind, D, T) followed by little-endian f32 data,
/// row-major.
pub fn encode_cache(f: &FeatureMatrix) -> Vec<u8> {
    let mut out = Vec::with_capacity(16 + 4 * f.data.len());
    out.extend_from_slice(&CACHE_MAGIC);
    out.extend_from_slice(&f.kind.code().to_le_bytes());
    out.extend_from_slice(&(f.d as u32).to_le_bytes());
    out.extend_from_slice(&(f.t as u32).to_le_bytes());
    for v in &f.data {
        out.extend_from_slice(&(*v as f32).to_le_bytes());
    }
    out
}

pub fn decode_cache(bytes: &[u8]) -> Result<FeatureMatrix, CacheError> {
    if bytes.len() < 16 || bytes[..4] != CACHE_MAGIC {
        return Err(CacheError::BadMagic);
    }
    let kind_code = u32::from_le_bytes(bytes[4..8].try_into().unwrap());
    let kind = FeatureKind::from_code(kind_code).ok_or(CacheError::BadKind(kind_code))?;
    let d = u64::from(u32::from_le_bytes(bytes[8..12].try_into().unwrap()));
    let t = u64::from(u32::from_le_bytes(bytes[12..16].try_into().unwrap()));
    let elems = d
        .checked_mul(t)
        .filter(|&e| e <= CACHE_MAX_ELEMS)
        .ok_or(CacheError::TooLarge)?;
    let expected = 16 + elems * 4;
    if bytes.len() as u64 != expected {
        return Err(CacheError::SizeMismatch {
            expected,
            got: bytes.len() as u64,
        });
    }
    let mut data = Vec::with_capacity(elems as usize);
    for chunk in bytes[16..].chunks_exact(4) {
        let v = f32::from_le_bytes(chunk.try_into().unwrap());
        if !v.is_finite() {
            return Err(CacheError::NotFinite);
        }
        data.push(f64::from(v));
    }
    Ok(FeatureMatrix::new(kind, d as usize, t as usize, data))
}

pub fn write_cache(path: &Path, f: &FeatureMatrix) -> Result<(), CacheError> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent)?;
    }
    std::fs::write(path, encode_cache(f))?;
    Ok(())
}

pub fn read_cache(path: &Path) -> Result<FeatureMatrix, CacheError> {
    let bytes = std::fs::read(path)?;
    decode_cache(&bytes)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::audio::PIPELINE_RATE;

    fn silence() -> AudioBuffer {
        AudioBuffer::new(vec![0; FIXED_SAMPLES], PIPELINE_RATE)
    }

    pub(crate) fn tone(freq: f64, amp: f64) -> AudioBuffer {
        let samples = (0..FIXED_SAMPLES)
            .map(|i| {
                crate::audio::clamp_i16(
                    amp * (2.0 * std::f64::consts::PI * freq * i as f64 / 16000.0).sin(),
                )
            })
            .collect();
        AudioBuffer::new(samples, PIPELINE_RATE)
    }

    #[test]
    fn frame_counts_match_hops() {
        let grid512 = FrameGrid {
            window_len: 1024,
            hop: 512,
        };
        let grid128 = FrameGrid {
            window_len: 512,
            hop: 128,
        };
        assert_eq!(grid512.n_frames(FIXED_SAMPLES), 126);
        assert_eq!(grid128.n_frames(FIXED_SAMPLES), 501);
        let frames = frame_signal(&tone(440.0, 0.5), &grid512).unwrap();
        assert_eq!(frames.len(), 126);
        assert!(frames.iter().all(|f| f.len() == 1024));
    }

    #[test]
    fn zero_input_gives_zero_frames() {
        let grid = FrameGrid {
            window_len: 1024,
            hop: 512,
        };
        let frames = frame_signal(&silence(), &grid).unwrap();
        assert!(frames.iter().flatten().all(|&v| v == 0.0));
    }

    #[test]
    fn bad_grid_rejected() {
        let grid = FrameGrid {
            window_len: 0,
            hop: 512,
        };
        assert!(matches!(
            frame_signal(&silence(), &grid),
            Err(FeatureError::BadGrid(_))
        ));
    }

    #[test]
    fn deltas_of_constant_are_zero() {
        let d = 3;
        let t = 10;
        let data: Vec<f64> = (0..d).flat_map(|r| vec![r as f64 + 1.0; t]).collect();
        let m = FeatureMatrix::new(FeatureKind::Lfcc, d, t, data);
        let out = deltas(&m);
        assert_eq!(out.d, 9);
        assert_eq!(out.t, 10);
        for r in d..3 * d {
            assert!(out.row(r).iter().all(|&v| v == 0.0));
        }
    }

    #[test]
    fn deltas_of_ramp_are_one_inside() {
        let t = 12;
        let data: Vec<f64> = (0..t).map(|c| c as f64).collect();
        let m = FeatureMatrix::new(FeatureKind::Lfcc, 1, t, data);
        let out = deltas(&m);
        for c in 2..t - 2 {
            assert!((out.at(1, c) - 1.0).abs() < 1e-12, "col {c}");
        }
    }

    #[test]
    fn deltas_single_frame_are_zero() {
        let m = FeatureMatrix::new(FeatureKind::Lfcc, 4, 1, vec![3.0, -1.0, 2.5, 0.0]);
        let out = deltas(&m);
        assert_eq!(out.d, 12);
        for r in 4..12 {
            assert_eq!(out.at(r, 0), 0.0);
        }
    }

    #[test]
    fn raw_view_scales_to_unit_range() {
        let mut samples = vec![0i16; FIXED_SAMPLES];
        samples[0] = 16384;
        samples[1] = -32768;
        let a = AudioBuffer::new(samples, PIPELINE_RATE);
        let f = raw_view(&a).unwrap();
        assert_eq!((f.d, f.t), (1, FIXED_SAMPLES));
        assert_eq!(f.at(0, 0), 0.5);
        assert_eq!(f.at(0, 1), -1.0);
        assert_eq!(f.at(0, 2), 0.0);

        let short = AudioBuffer::new(vec![0; 100], PIPELINE_RATE);
        assert!(matches!(
            raw_view(&short),
            Err(FeatureError::BadLength { got: 100, .. })
        ));
    }

    #[test]
    fn pool_stats_mean_and_population_std() {
        let m = FeatureMatrix::new(FeatureKind::Lfcc, 2, 2, vec![1.0, 3.0, 5.0, 5.0]);
        let v = pool_stats(&m);
        assert_eq!(v.len(), 4);
        assert_eq!(v[0], 2.0); // mean of [1,3]
        assert_eq!(v[1], 5.0);
        assert_eq!(v[2], 1.0); // population std of [1,3]
        assert_eq!(v[3], 0.0);
    }

    #[test]
    fn cache_roundtrip() {
        let m = FeatureMatrix::new(FeatureKind::Cqcc, 3, 4, (0..12).map(f64::from).collect());
        let bytes = encode_cache(&m);
        assert_eq!(bytes.len(), 16 + 48);
        let back = decode_cache(&bytes).unwrap();
        assert_eq!(back.kind, FeatureKind::Cqcc);
        assert_eq!((back.d, back.t), (3, 4));
        assert_eq!(back.data(), m.data());
    }

    #[test]
    fn cache_rejects_corruption() {
        let m = FeatureMatrix::new(FeatureKind::Raw, 1, 4, vec![0.0; 4]);
        let good = encode_cache(&m);

        let mut bad_magic = good.clone();
        bad_magic[0] = b'X';
        assert!(matches!(decode_cache(&bad_magic), Err(CacheError::BadMagic)));

        let mut bad_kind = good.clone();
        bad_kind[4] = 9;
        assert!(matches!(decode_cache(&bad_kind), Err(CacheError::BadKind(9))));

        let mut short = good.clone();
        short.pop();
        assert!(matches!(
            decode_cache(&short),
            Err(CacheError::SizeMismatch { .. })
        ));

        let mut huge = good;
        huge[8..12].copy_from_slice(&u32::MAX.to_le_bytes());
        huge[12..16].copy_from_slice(&u32::MAX.to_le_bytes());
        assert!(matches!(decode_cache(&huge), Err(CacheError::TooLarge)));
    }
}
