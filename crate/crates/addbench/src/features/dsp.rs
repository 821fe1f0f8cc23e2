//! Shared DSP primitives for the feature front-ends.

use std::collections::HashMap;
use std::sync::{Arc, Mutex, OnceLock};

use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};

pub fn hamming(n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![1.0];
    }
    (0..n)
        .map(|i| {
            0.54 - 0.46 * (2.0 * std::f64::consts::PI * i as f64 / (n - 1) as f64).cos()
        })
        .collect()
}

/// Mirror an out-of-range index back into [0, n) without repeating the edge
/// sample.
pub fn reflect_index(idx: i64, n: i64) -> usize {
    debug_assert!(n > 0);
    let mut i = idx;
    loop {
        if i < 0 {
            i = -i;
        } else if i >= n {
            i = 2 * n - 2 - i;
        } else {
            return i as usize;
        }
    }
}

/// Signal extended by `pad` reflected samples on each side, so kernel loops
/// can index contiguously.
pub fn reflect_pad(x: &[f64], pad: usize) -> Vec<f64> {
    let n = x.len() as i64;
    let mut out = Vec::with_capacity(x.len() + 2 * pad);
    for i in -(pad as i64)..(n + pad as i64) {
        out.push(x[reflect_index(i, n)]);
    }
    out
}

fn fft_plan(n: usize) -> Arc<dyn Fft<f64>> {
    static PLANS: OnceLock<Mutex<HashMap<usize, Arc<dyn Fft<f64>>>>> = OnceLock::new();
    let plans = PLANS.get_or_init(|| Mutex::new(HashMap::new()));
    let mut guard = plans.lock().unwrap();
    guard
        .entry(n)
        .or_insert_with(|| FftPlanner::new().plan_fft_forward(n))
        .clone()
}

/// One-sided power spectrum of a real frame: n/2 + 1 bins.
pub fn power_spectrum(frame: &[f64]) -> Vec<f64> {
    let n = frame.len();
    let mut buf: Vec<Complex<f64>> = frame.iter().map(|&v| Complex::new(v, 0.0)).collect();
    fft_plan(n).process(&mut buf);
    buf[..n / 2 + 1].iter().map(|c| c.norm_sqr()).collect()
}

/// First `rows` basis rows of the orthonormal type-II DCT on `m` points.
#[derive(Debug, Clone)]
pub struct Dct2 {
    pub m: usize,
    rows: Vec<Vec<f64>>,
}

impl Dct2 {
    pub fn new(m: usize, rows: usize) -> Self {
        assert!(rows <= m && m > 0);
        let table = (0..rows)
            .map(|j| {
                let scale = if j == 0 {
                    (1.0 / m as f64).sqrt()
                } else {
                    (2.0 / m as f64).sqrt()
                };
                (0..m)
                    .map(|i| {
                        scale
                            * (std::f64::consts::PI * j as f64 * (2 * i + 1) as f64
                                / (2 * m) as f64)
                                .cos()
                    })
                    .collect()
            })
            .collect();
        Self { m, rows: table }
    }

    pub fn apply(&self, input: &[f64]) -> Vec<f64> {
        debug_assert_eq!(input.len(), self.m);
        self.rows
            .iter()
            .map(|row| row.iter().zip(input).map(|(r, x)| r * x).sum())
            .collect()
    }

    /// Transpose application; with `rows == m` this is the exact inverse.
    pub fn apply_transpose(&self, coeffs: &[f64]) -> Vec<f64> {
        debug_assert_eq!(coeffs.len(), self.rows.len());
        (0..self.m)
            .map(|i| self.rows.iter().zip(coeffs).map(|(row, c)| row[i] * c).sum())
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seed::SplitMix;

    #[test]
    fn reflect_matches_mirror_rule() {
        assert_eq!(reflect_index(-1, 10), 1);
        assert_eq!(reflect_index(-3, 10), 3);
        assert_eq!(reflect_index(10, 10), 8);
        assert_eq!(reflect_index(12, 10), 6);
        assert_eq!(reflect_index(4, 10), 4);
    }

    #[test]
    fn dct_is_orthonormal() {
        let dct = Dct2::new(40, 40);
        let mut rng = SplitMix::new(4);
        let x: Vec<f64> = (0..40).map(|_| rng.next_unit() * 2.0 - 1.0).collect();
        let back = dct.apply_transpose(&dct.apply(&x));
        let num: f64 = x.iter().zip(&back).map(|(a, b)| (a - b).powi(2)).sum();
        let den: f64 = x.iter().map(|a| a * a).sum();
        assert!((num / den).sqrt() < 1e-9);
    }

    #[test]
    fn power_spectrum_localizes_a_tone() {
        // Bin-aligned tone: 125 Hz at 16 kHz with n=1024 lands on bin 8.
        let n = 1024;
        let frame: Vec<f64> = (0..n)
            .map(|i| (2.0 * std::f64::consts::PI * 8.0 * i as f64 / n as f64).sin())
            .collect();
        let p = power_spectrum(&frame);
        assert_eq!(p.len(), 513);
        let peak = p
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
            .unwrap()
            .0;
        assert_eq!(peak, 8);
    }
}
