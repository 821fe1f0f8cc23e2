//! Constant-Q cepstral coefficients: geometrically spaced complex
//! filterbank, log power, uniform resampling of the frequency axis, DCT.
//! 60 x 501 for a 4-second utterance.

use std::sync::OnceLock;

use crate::audio::{AudioBuffer, FIXED_SAMPLES, PIPELINE_RATE};

use super::dsp::{hamming, reflect_pad, Dct2};
use super::{deltas, FeatureError, FeatureKind, FeatureMatrix};

pub const CQCC_HOP: usize = 128;
pub const BINS_PER_OCTAVE: usize = 12;
pub const N_OCTAVES: usize = 9;
pub const N_BINS: usize = BINS_PER_OCTAVE * N_OCTAVES;
pub const N_STATIC: usize = 20;
/// 8000 / 2^9: nine octaves below the pipeline Nyquist.
pub const F_MIN_HZ: f64 = 15.625;
pub const F_MAX_HZ: f64 = 8000.0;
const RESAMPLE_POINTS: usize = 128;
const LOG_FLOOR: f64 = 1e-10;

struct BinKernel {
    len: usize,
    re: Vec<f64>,
    im: Vec<f64>,
}

fn bin_frequency(k: usize) -> f64 {
    F_MIN_HZ * (k as f64 / BINS_PER_OCTAVE as f64).exp2()
}

/// Windowed complex exponentials, one per bin, length ceil(sr*Q/f_k).
fn kernels() -> &'static Vec<BinKernel> {
    static TABLE: OnceLock<Vec<BinKernel>> = OnceLock::new();
    TABLE.get_or_init(|| {
        let q = 1.0 / ((1.0 / BINS_PER_OCTAVE as f64).exp2() - 1.0);
        (0..N_BINS)
            .map(|k| {
                let f = bin_frequency(k);
                let len = (f64::from(PIPELINE_RATE) * q / f).ceil() as usize;
                let window = hamming(len);
                let norm: f64 = window.iter().sum();
                let mid = (len - 1) as f64 / 2.0;
                let mut re = Vec::with_capacity(len);
                let mut im = Vec::with_capacity(len);
                for (i, w) in window.iter().enumerate() {
                    let phase = -2.0 * std::f64::consts::PI * f * (i as f64 - mid)
                        / f64::from(PIPELINE_RATE);
                    re.push(w * phase.cos() / norm);
                    im.push(w * phase.sin() / norm);
                }
                BinKernel { len, re, im }
            })
            .collect()
    })
}

fn dct() -> &'static Dct2 {
    static TABLE: OnceLock<Dct2> = OnceLock::new();
    TABLE.get_or_init(|| Dct2::new(RESAMPLE_POINTS, N_STATIC))
}

/// Constant-Q power per frame, T x N_BINS.
pub(crate) fn cqt_power(a: &AudioBuffer) -> Result<Vec<Vec<f64>>, FeatureError> {
    if a.len() != FIXED_SAMPLES {
        return Err(FeatureError::BadLength {
            expected: FIXED_SAMPLES,
            got: a.len(),
        });
    }
    let kernels = kernels();
    let max_len = kernels.iter().map(|k| k.len).max().unwrap();
    let pad = max_len / 2 + 1;
    let x = reflect_pad(&a.to_f64(), pad);
    let n_frames = 1 + FIXED_SAMPLES / CQCC_HOP;

    let mut out = Vec::with_capacity(n_frames);
    for t in 0..n_frames {
        let center = t * CQCC_HOP + pad;
        let mut row = Vec::with_capacity(N_BINS);
        for kern in kernels {
            let start = center - kern.len / 2;
            let slice = &x[start..start + kern.len];
            let mut acc_re = 0.0f64;
            let mut acc_im = 0.0f64;
            for i in 0..kern.len {
                acc_re += slice[i] * kern.re[i];
                acc_im += slice[i] * kern.im[i];
            }
            row.push(acc_re * acc_re + acc_im * acc_im);
        }
        out.push(row);
    }
    Ok(out)
}

/// Interpolate the log-power values, known at geometrically spaced centers,
/// onto uniformly spaced frequencies between F_MIN_HZ and F_MAX_HZ.
fn resample_uniform(log_power: &[f64]) -> Vec<f64> {
    let mut out = Vec::with_capacity(RESAMPLE_POINTS);
    for j in 0..RESAMPLE_POINTS {
        let f = F_MIN_HZ + j as f64 * (F_MAX_HZ - F_MIN_HZ) / (RESAMPLE_POINTS - 1) as f64;
        let pos = BINS_PER_OCTAVE as f64 * (f / F_MIN_HZ).log2();
        let k = pos.floor() as usize;
        if k + 1 >= N_BINS {
            out.push(log_power[N_BINS - 1]);
        } else {
            let frac = pos - k as f64;
            out.push(log_power[k] * (1.0 - frac) + log_power[k + 1] * frac);
        }
    }
    out
}

pub fn cqcc(a: &AudioBuffer) -> Result<FeatureMatrix, FeatureError> {
    let power = cqt_power(a)?;
    let t = power.len();
    let dct = dct();
    let mut data = vec![0.0; N_STATIC * t];
    for (col, row) in power.iter().enumerate() {
        let logs: Vec<f64> = row.iter().map(|&p| p.max(LOG_FLOOR).ln()).collect();
        let uniform = resample_uniform(&logs);
        for (r, c) in dct.apply(&uniform).into_iter().enumerate() {
            data[r * t + col] = c;
        }
    }
    let static_m = FeatureMatrix::new(FeatureKind::Cqcc, N_STATIC, t, data);
    Ok(deltas(&static_m))
}
