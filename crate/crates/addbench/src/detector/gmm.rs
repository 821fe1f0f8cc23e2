//! Two-class diagonal-covariance GMM scorer.
//!
//! Each class gets its own mixture fitted by seeded k-means++ initialization
//! followed by EM. The detection score is the per-frame average
//! log-likelihood ratio, higher meaning more bonafide.

use rayon::prelude::*;

use crate::features::{FeatureKind, FeatureMatrix};
use crate::seed::SplitMix;

use super::DetectorError;

pub const VARIANCE_FLOOR: f64 = 1e-4;
pub const DEFAULT_COMPONENTS: usize = 64;
const WEIGHT_FLOOR: f64 = 1e-10;
/// Frames per deterministic reduction chunk in the parallel E-step.
const EM_CHUNK: usize = 8192;

/// Row-major frame storage, one D-vector per row.
#[derive(Debug, Clone, Default)]
pub struct FrameSet {
    pub dim: usize,
    data: Vec<f64>,
}

impl FrameSet {
    pub fn new(dim: usize) -> Self {
        Self { dim, data: Vec::new() }
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Self {
        let dim = rows.first().map_or(0, Vec::len);
        let mut set = Self::new(dim);
        for r in rows {
            set.push(r);
        }
        set
    }

    pub fn push(&mut self, frame: &[f64]) {
        assert_eq!(frame.len(), self.dim);
        self.data.extend_from_slice(frame);
    }

    /// Columns of a feature matrix, optionally strided over time.
    pub fn push_matrix(&mut self, m: &FeatureMatrix, stride: usize) {
        assert_eq!(self.dim, m.d);
        let stride = stride.max(1);
        let mut col = 0;
        while col < m.t {
            for r in 0..m.d {
                self.data.push(m.at(r, col));
            }
            col += stride;
        }
    }

    /// Append all frames of another set; dimensions must match.
    pub fn extend_from(&mut self, other: &FrameSet) {
        assert_eq!(self.dim, other.dim);
        self.data.extend_from_slice(&other.data);
    }

    pub fn len(&self) -> usize {
        if self.dim == 0 {
            0
        } else {
            self.data.len() / self.dim
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn frame(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }
}

#[derive(Debug, Clone, Copy)]
pub struct GmmConfig {
    pub components: usize,
    pub max_iter: usize,
    pub tol: f64,
    pub seed: u64,
}

impl Default for GmmConfig {
    fn default() -> Self {
        Self {
            components: DEFAULT_COMPONENTS,
            max_iter: 100,
            tol: 1e-4,
            seed: 0,
        }
    }
}

/// One class-conditional mixture.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassGmm {
    pub dim: usize,
    pub weights: Vec<f64>,
    /// K x D, row-major.
    pub means: Vec<f64>,
    /// K x D diagonal variances, floored.
    pub variances: Vec<f64>,
}

impl ClassGmm {
    pub fn components(&self) -> usize {
        self.weights.len()
    }

    /// Mixture log-density of one frame.
    pub fn log_density(&self, x: &[f64]) -> f64 {
        debug_assert_eq!(x.len(), self.dim);
        let k = self.components();
        let mut best = f64::NEG_INFINITY;
        let mut terms = Vec::with_capacity(k);
        for c in 0..k {
            let t = self.weights[c].max(WEIGHT_FLOOR).ln() + self.component_log_density(c, x);
            best = best.max(t);
            terms.push(t);
        }
        // log-sum-exp
        let sum: f64 = terms.iter().map(|t| (t - best).exp()).sum();
        best + sum.ln()
    }

    fn component_log_density(&self, c: usize, x: &[f64]) -> f64 {
        let d = self.dim;
        let mean = &self.means[c * d..(c + 1) * d];
        let var = &self.variances[c * d..(c + 1) * d];
        let mut acc = -0.5 * d as f64 * (2.0 * std::f64::consts::PI).ln();
        for i in 0..d {
            let diff = x[i] - mean[i];
            acc -= 0.5 * (var[i].ln() + diff * diff / var[i]);
        }
        acc
    }
}

/// Fit a single-class mixture. Returns the model and the per-iteration
/// average log-likelihood trace (non-decreasing while the variance floor
/// stays inactive).
pub fn gmm_fit(frames: &FrameSet, cfg: &GmmConfig) -> Result<(ClassGmm, Vec<f64>), DetectorError> {
    let n = frames.len();
    let k = cfg.components;
    if n < k || k == 0 {
        return Err(DetectorError::TooFewFrames { have: n, need: k });
    }
    let d = frames.dim;

    let mut model = init_kmeanspp(frames, k, cfg.seed);
    let mut trace = Vec::new();
    let mut prev_ll = f64::NEG_INFINITY;

    for _ in 0..cfg.max_iter {
        let stats = e_step(frames, &model);
        let avg_ll = stats.log_likelihood / n as f64;
        trace.push(avg_ll);

        // M-step
        for c in 0..k {
            let nk = stats.resp_sum[c];
            if nk > 0.0 {
                model.weights[c] = nk / n as f64;
                for i in 0..d {
                    let mean = stats.weighted_sum[c * d + i] / nk;
                    let var = (stats.weighted_sq_sum[c * d + i] / nk - mean * mean)
                        .max(VARIANCE_FLOOR);
                    model.means[c * d + i] = mean;
                    model.variances[c * d + i] = var;
                }
            } else {
                // Degenerate component: keep location, flatten its variance.
                model.weights[c] = WEIGHT_FLOOR;
                for i in 0..d {
                    model.variances[c * d + i] = VARIANCE_FLOOR;
                }
            }
        }
        let wsum: f64 = model.weights.iter().sum();
        model.weights.iter_mut().for_each(|w| *w /= wsum);

        if (avg_ll - prev_ll).abs() < cfg.tol && trace.len() > 1 {
            break;
        }
        prev_ll = avg_ll;
    }
    Ok((model, trace))
}

struct EStats {
    log_likelihood: f64,
    resp_sum: Vec<f64>,
    weighted_sum: Vec<f64>,
    weighted_sq_sum: Vec<f64>,
}

/// Responsibilities and sufficient statistics. Chunked with a fixed chunk
/// size and folded in chunk order, so the result is bit-stable no matter
/// how rayon schedules the chunks.
fn e_step(frames: &FrameSet, model: &ClassGmm) -> EStats {
    let d = frames.dim;
    let k = model.components();
    let n = frames.len();
    let chunk_ranges: Vec<(usize, usize)> = (0..n)
        .step_by(EM_CHUNK)
        .map(|s| (s, (s + EM_CHUNK).min(n)))
        .collect();

    let log_weights: Vec<f64> = model
        .weights
        .iter()
        .map(|w| w.max(WEIGHT_FLOOR).ln())
        .collect();

    let partials: Vec<EStats> = chunk_ranges
        .par_iter()
        .map(|&(lo, hi)| {
            let mut stats = EStats {
                log_likelihood: 0.0,
                resp_sum: vec![0.0; k],
                weighted_sum: vec![0.0; k * d],
                weighted_sq_sum: vec![0.0; k * d],
            };
            let mut terms = vec![0.0f64; k];
            for f in lo..hi {
                let x = frames.frame(f);
                let mut best = f64::NEG_INFINITY;
                for c in 0..k {
                    let t = log_weights[c] + model.component_log_density(c, x);
                    terms[c] = t;
                    best = best.max(t);
                }
                let denom: f64 = terms.iter().map(|t| (t - best).exp()).sum();
                stats.log_likelihood += best + denom.ln();
                for c in 0..k {
                    let r = (terms[c] - best).exp() / denom;
                    stats.resp_sum[c] += r;
                    for i in 0..d {
                        stats.weighted_sum[c * d + i] += r * x[i];
                        stats.weighted_sq_sum[c * d + i] += r * x[i] * x[i];
                    }
                }
            }
            stats
        })
        .collect();

    let mut total = EStats {
        log_likelihood: 0.0,
        resp_sum: vec![0.0; k],
        weighted_sum: vec![0.0; k * d],
        weighted_sq_sum: vec![0.0; k * d],
    };
    for p in partials {
        total.log_likelihood += p.log_likelihood;
        for (a, b) in total.resp_sum.iter_mut().zip(&p.resp_sum) {
            *a += b;
        }
        for (a, b) in total.weighted_sum.iter_mut().zip(&p.weighted_sum) {
            *a += b;
        }
        for (a, b) in total.weighted_sq_sum.iter_mut().zip(&p.weighted_sq_sum) {
            *a += b;
        }
    }
    total
}

/// Seeded k-means++ center selection; variances start at the global
/// per-dimension variance, weights uniform.
fn init_kmeanspp(frames: &FrameSet, k: usize, seed: u64) -> ClassGmm {
    let n = frames.len();
    let d = frames.dim;
    let mut rng = SplitMix::new(seed);

    let mut global_mean = vec![0.0; d];
    for f in 0..n {
        for (m, x) in global_mean.iter_mut().zip(frames.frame(f)) {
            *m += x;
        }
    }
    global_mean.iter_mut().for_each(|m| *m /= n as f64);
    let mut global_var = vec![0.0; d];
    for f in 0..n {
        for (i, x) in frames.frame(f).iter().enumerate() {
            let diff = x - global_mean[i];
            global_var[i] += diff * diff;
        }
    }
    global_var
        .iter_mut()
        .for_each(|v| *v = (*v / n as f64).max(VARIANCE_FLOOR));

    let mut centers: Vec<usize> = vec![rng.next_below(n)];
    let mut dist2: Vec<f64> = (0..n)
        .map(|f| sq_dist(frames.frame(f), frames.frame(centers[0])))
        .collect();
    while centers.len() < k {
        let total: f64 = dist2.iter().sum();
        let next = if total <= 0.0 {
            rng.next_below(n)
        } else {
            let mut target = rng.next_unit() * total;
            let mut chosen = n - 1;
            for (f, &d2) in dist2.iter().enumerate() {
                target -= d2;
                if target <= 0.0 {
                    chosen = f;
                    break;
                }
            }
            chosen
        };
        centers.push(next);
        for f in 0..n {
            let d2 = sq_dist(frames.frame(f), frames.frame(next));
            if d2 < dist2[f] {
                dist2[f] = d2;
            }
        }
    }

    let mut means = Vec::with_capacity(k * d);
    let mut variances = Vec::with_capacity(k * d);
    for &c in &centers {
        means.extend_from_slice(frames.frame(c));
        variances.extend_from_slice(&global_var);
    }
    ClassGmm {
        dim: d,
        weights: vec![1.0 / k as f64; k],
        means,
        variances,
    }
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum()
}

/// The full two-class detector.
#[derive(Debug, Clone, PartialEq)]
pub struct GmmModel {
    pub feature_kind: FeatureKind,
    pub bonafide: ClassGmm,
    pub fake: ClassGmm,
}

impl GmmModel {
    /// Class tags exchanged; every score negates exactly.
    pub fn swapped(&self) -> Self {
        Self {
            feature_kind: self.feature_kind,
            bonafide: self.fake.clone(),
            fake: self.bonafide.clone(),
        }
    }
}

/// Average per-frame log-likelihood ratio; positive means bonafide-like.
pub fn gmm_score(model: &GmmModel, f: &FeatureMatrix) -> Result<f64, DetectorError> {
    if f.kind != model.feature_kind {
        return Err(DetectorError::KindMismatch {
            model: model.feature_kind,
            input: f.kind,
        });
    }
    let mut acc = 0.0;
    let mut x = vec![0.0; f.d];
    for col in 0..f.t {
        for (i, v) in x.iter_mut().enumerate() {
            *v = f.at(i, col);
        }
        acc += model.bonafide.log_density(&x) - model.fake.log_density(&x);
    }
    Ok(acc / f.t as f64)
}
