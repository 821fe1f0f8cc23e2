//! Linear-frequency cepstral coefficients: 20 static + delta + delta-delta,
//! 60 x 126 for a 4-second utterance.

use std::sync::OnceLock;

use crate::audio::{AudioBuffer, FIXED_SAMPLES, PIPELINE_RATE};

use super::dsp::{power_spectrum, Dct2};
use super::{deltas, frame_signal, FeatureError, FeatureKind, FeatureMatrix, FrameGrid};

pub const LFCC_WINDOW: usize = 1024;
pub const LFCC_HOP: usize = 512;
pub const N_FILTERS: usize = 40;
pub const N_STATIC: usize = 20;
const LOG_FLOOR: f64 = 1e-10;
const BAND_HI_HZ: f64 = 8000.0;

/// Triangular filters spaced linearly over 0-8000 Hz, evaluated on the
/// one-sided FFT bin grid. Dense N_FILTERS x (window/2 + 1) matrix.
fn filterbank() -> &'static Vec<Vec<f64>> {
    static TABLE: OnceLock<Vec<Vec<f64>>> = OnceLock::new();
    TABLE.get_or_init(|| {
        let n_bins = LFCC_WINDOW / 2 + 1;
        let hz_per_bin = f64::from(PIPELINE_RATE) / LFCC_WINDOW as f64;
        let edge = |m: usize| m as f64 * BAND_HI_HZ / (N_FILTERS + 1) as f64;
        (0..N_FILTERS)
            .map(|i| {
                let (lo, mid, hi) = (edge(i), edge(i + 1), edge(i + 2));
                (0..n_bins)
                    .map(|k| {
                        let f = k as f64 * hz_per_bin;
                        if f >= lo && f <= mid {
                            (f - lo) / (mid - lo)
                        } else if f > mid && f <= hi {
                            (hi - f) / (hi - mid)
                        } else {
                            0.0
                        }
                    })
                    .collect()
            })
            .collect()
    })
}

fn dct() -> &'static Dct2 {
    static TABLE: OnceLock<Dct2> = OnceLock::new();
    TABLE.get_or_init(|| Dct2::new(N_FILTERS, N_STATIC))
}

/// Per-frame filterbank energies before the log, T x N_FILTERS.
pub(crate) fn filterbank_energies(a: &AudioBuffer) -> Result<Vec<Vec<f64>>, FeatureError> {
    let grid = FrameGrid {
        window_len: LFCC_WINDOW,
        hop: LFCC_HOP,
    };
    let frames = frame_signal(a, &grid)?;
    let fb = filterbank();
    Ok(frames
        .iter()
        .map(|frame| {
            let power = power_spectrum(frame);
            fb.iter()
                .map(|filter| filter.iter().zip(&power).map(|(w, p)| w * p).sum())
                .collect()
        })
        .collect())
}

pub fn lfcc(a: &AudioBuffer) -> Result<FeatureMatrix, FeatureError> {
    if a.len() != FIXED_SAMPLES {
        return Err(FeatureError::BadLength {
            expected: FIXED_SAMPLES,
            got: a.len(),
        });
    }
    let energies = filterbank_energies(a)?;
    let t = energies.len();
    let dct = dct();
    let mut data = vec![0.0; N_STATIC * t];
    for (col, frame_energy) in energies.iter().enumerate() {
        let logs: Vec<f64> = frame_energy.iter().map(|&e| e.max(LOG_FLOOR).ln()).collect();
        for (row, c) in dct.apply(&logs).into_iter().enumerate() {
            data[row * t + col] = c;
        }
    }
    let static_m = FeatureMatrix::new(FeatureKind::Lfcc, N_STATIC, t, data);
    Ok(deltas(&static_m))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::audio::clamp_i16;

    fn tone(freq: f64, amp: f64) -> AudioBuffer {
        let samples = (0..FIXED_SAMPLES)
            .map(|i| {
                clamp_i16(amp * (2.0 * std::f64::consts::PI * freq * i as f64 / 16000.0).sin())
            })
            .collect();
        AudioBuffer::new(samples, PIPELINE_RATE)
    }

    #[test]
    fn shape_is_60_by_126() {
        let f = lfcc(&tone(440.0, 0.5)).unwrap();
        assert_eq!((f.d, f.t), (60, 126));
        assert!(f.all_finite());
    }

    #[test]
    fn wrong_length_rejected() {
        let a = AudioBuffer::new(vec![0; 1000], PIPELINE_RATE);
        assert!(matches!(lfcc(&a), Err(FeatureError::BadLength { .. })));
    }

    #[test]
    fn silence_gives_constant_columns_and_zero_deltas() {
        let a = AudioBuffer::new(vec![0; FIXED_SAMPLES], PIPELINE_RATE);
        let f = lfcc(&a).unwrap();
        assert!(f.all_finite());
        for r in 0..20 {
            let row = f.row(r);
            assert!(row.iter().all(|&v| (v - row[0]).abs() < 1e-9), "row {r}");
        }
        for r in 20..60 {
            assert!(f.row(r).iter().all(|&v| v == 0.0), "row {r}");
        }
    }

    /// Independent oracle: naive DFT plus triangle weights written from the
    /// filter definitions, no shared code with the implementation path.
    fn oracle_energies(frame: &[f64]) -> Vec<f64> {
        let n = frame.len();
        let n_bins = n / 2 + 1;
        let mut power = vec![0.0f64; n_bins];
        for (k, p) in power.iter_mut().enumerate() {
            let (mut re, mut im) = (0.0f64, 0.0f64);
            for (i, &x) in frame.iter().enumerate() {
                let ang = -2.0 * std::f64::consts::PI * k as f64 * i as f64 / n as f64;
                re += x * ang.cos();
                im += x * ang.sin();
            }
            *p = re * re + im * im;
        }
        let edge = |m: usize| m as f64 * 8000.0 / 41.0;
        (0..40)
            .map(|f_idx| {
                let (lo, mid, hi) = (edge(f_idx), edge(f_idx + 1), edge(f_idx + 2));
                power
                    .iter()
                    .enumerate()
                    .map(|(k, &p)| {
                        let f = k as f64 * 16000.0 / n as f64;
                        let w = if f >= lo && f <= mid && mid > lo {
                            (f - lo) / (mid - lo)
                        } else if f > mid && f <= hi {
                            (hi - f) / (hi - mid)
                        } else {
                            0.0
                        };
                        w * p
                    })
                    .sum()
            })
            .collect()
    }

    #[test]
    fn one_khz_tone_peaks_in_nearest_filter() {
        let a = tone(1000.0, 0.8);
        let energies = filterbank_energies(&a).unwrap();
        // Centers sit at (i+1)*8000/41; index 4 is nearest to 1000 Hz.
        let expect_peak = (0..40)
            .min_by(|&a, &b| {
                let ca = ((a + 1) as f64 * 8000.0 / 41.0 - 1000.0).abs();
                let cb = ((b + 1) as f64 * 8000.0 / 41.0 - 1000.0).abs();
                ca.partial_cmp(&cb).unwrap()
            })
            .unwrap();
        assert_eq!(expect_peak, 4);
        for (t, e) in energies.iter().enumerate().take(124).skip(2) {
            let peak = e
                .iter()
                .enumerate()
                .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
                .unwrap()
                .0;
            assert_eq!(peak, expect_peak, "frame {t}");
        }

        // Cross-check a few implementation frames against the oracle.
        let grid = FrameGrid {
            window_len: LFCC_WINDOW,
            hop: LFCC_HOP,
        };
        let frames = frame_signal(&a, &grid).unwrap();
        for t in [10usize, 60, 110] {
            let want = oracle_energies(&frames[t]);
            for (i, (w, g)) in want.iter().zip(&energies[t]).enumerate() {
                let denom = w.abs().max(1e-6);
                assert!(
                    (w - g).abs() / denom < 1e-6,
                    "frame {t} filter {i}: {w} vs {g}"
                );
            }
        }
    }

    #[test]
    fn hop_delay_shifts_columns() {
        let a = tone(700.0, 0.6);
        let mut delayed = vec![0i16; LFCC_HOP];
        delayed.extend_from_slice(&a.samples[..FIXED_SAMPLES - LFCC_HOP]);
        let b = AudioBuffer::new(delayed, PIPELINE_RATE);
        let fa = lfcc(&a).unwrap();
        let fb = lfcc(&b).unwrap();
        for col in 3..123 {
            for row in 0..20 {
                assert!(
                    (fb.at(row, col) - fa.at(row, col - 1)).abs() < 1e-6,
                    "row {row} col {col}"
                );
            }
        }
    }
}
