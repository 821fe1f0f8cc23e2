//! Lightweight gradient-trained classifier over pooled feature vectors:
//! one tanh hidden layer, two-way softmax, Adam, early stopping.

use crate::corpus::Label;
use crate::features::FeatureKind;
use crate::seed::SplitMix;

use super::DetectorError;

pub const DEFAULT_HIDDEN: usize = 64;
const PROB_CLAMP: f64 = 1e-7;

/// Output unit order: index 0 bonafide, index 1 fake. The training target
/// y = 1 means fake.
const FAKE_UNIT: usize = 1;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub epochs: usize,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub early_stopping_patience: usize,
    pub val_fraction: f64,
    pub hidden: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            batch_size: 256,
            epochs: 5,
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            early_stopping_patience: 3,
            val_fraction: 0.2,
            hidden: DEFAULT_HIDDEN,
            seed: 0,
        }
    }
}

/// Binary cross-entropy over predicted fake-probabilities, with the
/// predictions clamped away from 0 and 1.
pub fn cross_entropy(y: &[u8], y_hat: &[f64]) -> Result<f64, DetectorError> {
    if y.len() != y_hat.len() {
        return Err(DetectorError::LengthMismatch {
            left: y.len(),
            right: y_hat.len(),
        });
    }
    let j = y.len() as f64;
    let mut acc = 0.0;
    for (&yi, &pi) in y.iter().zip(y_hat) {
        let p = pi.clamp(PROB_CLAMP, 1.0 - PROB_CLAMP);
        acc += if yi == 1 { p.ln() } else { (1.0 - p).ln() };
    }
    Ok(-acc / j)
}

/// The bare network: parameters flattened into one vector so gradient
/// checks can perturb them uniformly.
///
/// Layout: W1 (hidden x in), b1 (hidden), W2 (2 x hidden), b2 (2).
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    pub in_dim: usize,
    pub hidden: usize,
    pub params: Vec<f64>,
}

impl Mlp {
    pub fn n_params(in_dim: usize, hidden: usize) -> usize {
        hidden * in_dim + hidden + 2 * hidden + 2
    }

    pub fn zeroed(in_dim: usize, hidden: usize) -> Self {
        Self {
            in_dim,
            hidden,
            params: vec![0.0; Self::n_params(in_dim, hidden)],
        }
    }

    pub fn seeded(in_dim: usize, hidden: usize, seed: u64) -> Self {
        let mut rng = SplitMix::new(seed);
        let mut net = Self::zeroed(in_dim, hidden);
        let w1_scale = (1.0 / in_dim as f64).sqrt();
        let w2_scale = (1.0 / hidden as f64).sqrt();
        let n_w1 = hidden * in_dim;
        let n_b1 = hidden;
        for (i, p) in net.params.iter_mut().enumerate() {
            let scale = if i < n_w1 {
                w1_scale
            } else if i < n_w1 + n_b1 {
                0.0
            } else {
                w2_scale
            };
            *p = (2.0 * rng.next_unit() - 1.0) * scale;
        }
        net
    }

    fn split(&self) -> (&[f64], &[f64], &[f64], &[f64]) {
        let (h, d) = (self.hidden, self.in_dim);
        let w1 = &self.params[..h * d];
        let b1 = &self.params[h * d..h * d + h];
        let w2 = &self.params[h * d + h..h * d + h + 2 * h];
        let b2 = &self.params[h * d + h + 2 * h..];
        (w1, b1, w2, b2)
    }

    /// Softmax class probabilities [p_bonafide, p_fake].
    pub fn probabilities(&self, x: &[f64]) -> [f64; 2] {
        let (w1, b1, w2, b2) = self.split();
        let (h, d) = (self.hidden, self.in_dim);
        debug_assert_eq!(x.len(), d);
        let mut hid = vec![0.0; h];
        for j in 0..h {
            let mut z = b1[j];
            for i in 0..d {
                z += w1[j * d + i] * x[i];
            }
            hid[j] = z.tanh();
        }
        let mut logits = [b2[0], b2[1]];
        for (c, logit) in logits.iter_mut().enumerate() {
            for j in 0..h {
                *logit += w2[c * h + j] * hid[j];
            }
        }
        let m = logits[0].max(logits[1]);
        let e0 = (logits[0] - m).exp();
        let e1 = (logits[1] - m).exp();
        [e0 / (e0 + e1), e1 / (e0 + e1)]
    }

    /// Mean cross-entropy over a batch and its exact gradient with respect
    /// to every parameter, in layout order.
    pub fn loss_and_gradient(&self, xs: &[Vec<f64>], ys: &[u8]) -> (f64, Vec<f64>) {
        let (w1, b1, w2, b2) = self.split();
        let (h, d) = (self.hidden, self.in_dim);
        let n = xs.len() as f64;
        let mut grad = vec![0.0; self.params.len()];
        let (g_w1, rest) = grad.split_at_mut(h * d);
        let (g_b1, rest) = rest.split_at_mut(h);
        let (g_w2, g_b2) = rest.split_at_mut(2 * h);

        let mut loss = 0.0;
        let mut hid = vec![0.0; h];
        for (x, &y) in xs.iter().zip(ys) {
            for j in 0..h {
                let mut z = b1[j];
                for i in 0..d {
                    z += w1[j * d + i] * x[i];
                }
                hid[j] = z.tanh();
            }
            let mut logits = [b2[0], b2[1]];
            for (c, logit) in logits.iter_mut().enumerate() {
                for j in 0..h {
                    *logit += w2[c * h + j] * hid[j];
                }
            }
            let m = logits[0].max(logits[1]);
            let e = [(logits[0] - m).exp(), (logits[1] - m).exp()];
            let z = e[0] + e[1];
            let p = [e[0] / z, e[1] / z];

            let p_fake = p[FAKE_UNIT].clamp(PROB_CLAMP, 1.0 - PROB_CLAMP);
            loss -= if y == 1 { p_fake.ln() } else { (1.0 - p_fake).ln() };

            // Softmax cross-entropy: dL/dlogit_c = p_c - [c == class(y)].
            let mut dlogit = [p[0], p[1]];
            dlogit[if y == 1 { FAKE_UNIT } else { 1 - FAKE_UNIT }] -= 1.0;

            let mut dhid = vec![0.0; h];
            for c in 0..2 {
                g_b2[c] += dlogit[c] / n;
                for j in 0..h {
                    g_w2[c * h + j] += dlogit[c] * hid[j] / n;
                    dhid[j] += w2[c * h + j] * dlogit[c];
                }
            }
            for j in 0..h {
                let dz = dhid[j] * (1.0 - hid[j] * hid[j]) / n;
                g_b1[j] += dz;
                for i in 0..d {
                    g_w1[j * d + i] += dz * x[i];
                }
            }
        }
        (loss / n, grad)
    }
}

/// First-moment/second-moment optimizer state with bias correction.
#[derive(Debug, Clone)]
pub struct Adam {
    m: Vec<f64>,
    v: Vec<f64>,
    t: u64,
}

impl Adam {
    pub fn new(n_params: usize) -> Self {
        Self {
            m: vec![0.0; n_params],
            v: vec![0.0; n_params],
            t: 0,
        }
    }

    pub fn step(&mut self, params: &mut [f64], grad: &[f64], cfg: &TrainConfig) {
        self.t += 1;
        let b1t = 1.0 - cfg.beta1.powi(self.t as i32);
        let b2t = 1.0 - cfg.beta2.powi(self.t as i32);
        for i in 0..params.len() {
            self.m[i] = cfg.beta1 * self.m[i] + (1.0 - cfg.beta1) * grad[i];
            self.v[i] = cfg.beta2 * self.v[i] + (1.0 - cfg.beta2) * grad[i] * grad[i];
            let m_hat = self.m[i] / b1t;
            let v_hat = self.v[i] / b2t;
            params[i] -= cfg.learning_rate * m_hat / (v_hat.sqrt() + cfg.epsilon);
        }
    }
}

/// Tracks the best validation loss; signals a stop after `patience`
/// consecutive epochs without improvement.
#[derive(Debug, Clone)]
pub struct EarlyStopper {
    patience: usize,
    best: f64,
    pub best_epoch: usize,
    misses: usize,
    epoch: usize,
}

impl EarlyStopper {
    pub fn new(patience: usize) -> Self {
        Self {
            patience,
            best: f64::INFINITY,
            best_epoch: 0,
            misses: 0,
            epoch: 0,
        }
    }

    /// Returns true when training should stop after this epoch.
    pub fn observe(&mut self, val_loss: f64) -> bool {
        self.epoch += 1;
        if val_loss < self.best {
            self.best = val_loss;
            self.best_epoch = self.epoch;
            self.misses = 0;
        } else {
            self.misses += 1;
        }
        self.misses >= self.patience
    }
}

/// The trained classifier: standardization statistics live inside the
/// model so evaluation never touches test-set statistics.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpModel {
    pub feature_kind: FeatureKind,
    pub net: Mlp,
    pub input_mean: Vec<f64>,
    pub input_std: Vec<f64>,
}

#[derive(Debug, Clone, Default)]
pub struct TrainLog {
    /// (train loss, validation loss) per completed epoch.
    pub epochs: Vec<(f64, f64)>,
    pub best_epoch: usize,
    pub stopped_early: bool,
}

impl MlpModel {
    fn standardize(&self, x: &[f64]) -> Vec<f64> {
        x.iter()
            .enumerate()
            .map(|(i, v)| (v - self.input_mean[i]) / self.input_std[i])
            .collect()
    }

    pub fn swapped(&self) -> Self {
        let mut net = self.net.clone();
        let (h, d) = (net.hidden, net.in_dim);
        let w2_at = h * d + h;
        for j in 0..h {
            net.params.swap(w2_at + j, w2_at + h + j);
        }
        net.params.swap(w2_at + 2 * h, w2_at + 2 * h + 1);
        Self {
            feature_kind: self.feature_kind,
            net,
            input_mean: self.input_mean.clone(),
            input_std: self.input_std.clone(),
        }
    }
}

/// Deterministic mini-batch training with seeded shuffles.
pub fn mlp_train(
    samples: &[(Vec<f64>, Label)],
    feature_kind: FeatureKind,
    cfg: &TrainConfig,
) -> Result<(MlpModel, TrainLog), DetectorError> {
    for label in [Label::Bonafide, Label::Fake] {
        let count = samples.iter().filter(|(_, l)| *l == label).count();
        if count < 2 {
            return Err(DetectorError::ClassMissing(label));
        }
    }
    let in_dim = samples[0].0.len();

    // Stratified train/validation split.
    let mut by_class: [Vec<usize>; 2] = [Vec::new(), Vec::new()];
    for (i, (_, l)) in samples.iter().enumerate() {
        by_class[usize::from(*l == Label::Fake)].push(i);
    }
    let mut rng = SplitMix::new(cfg.seed);
    let mut train_idx = Vec::new();
    let mut val_idx = Vec::new();
    for class in &mut by_class {
        rng.shuffle(class);
        let n_val = ((class.len() as f64) * cfg.val_fraction).floor() as usize;
        let n_val = n_val.max(1).min(class.len() - 1);
        val_idx.extend_from_slice(&class[..n_val]);
        train_idx.extend_from_slice(&class[n_val..]);
    }
    train_idx.sort_unstable();
    val_idx.sort_unstable();

    // Standardization from the training split only.
    let mut mean = vec![0.0; in_dim];
    for &i in &train_idx {
        for (m, v) in mean.iter_mut().zip(&samples[i].0) {
            *m += v;
        }
    }
    mean.iter_mut().for_each(|m| *m /= train_idx.len() as f64);
    let mut std = vec![0.0; in_dim];
    for &i in &train_idx {
        for (s, (v, m)) in std.iter_mut().zip(samples[i].0.iter().zip(&mean)) {
            *s += (v - m) * (v - m);
        }
    }
    std.iter_mut()
        .for_each(|s| *s = (*s / train_idx.len() as f64).sqrt().max(1e-8));

    let prep = |i: usize| -> (Vec<f64>, u8) {
        let (x, l) = &samples[i];
        let xs = x
            .iter()
            .enumerate()
            .map(|(d, v)| (v - mean[d]) / std[d])
            .collect();
        (xs, u8::from(*l == Label::Fake))
    };
    let val: Vec<(Vec<f64>, u8)> = val_idx.iter().map(|&i| prep(i)).collect();

    let mut net = Mlp::seeded(in_dim, cfg.hidden, cfg.seed ^ 0x6d6c_70);
    let mut adam = Adam::new(net.params.len());
    let mut stopper = EarlyStopper::new(cfg.early_stopping_patience);
    let mut log = TrainLog::default();
    let mut best_params = net.params.clone();
    let mut order = train_idx.clone();

    for _epoch in 0..cfg.epochs {
        rng.shuffle(&mut order);
        let mut train_loss = 0.0f64;
        let mut batches = 0.0f64;
        for batch in order.chunks(cfg.batch_size.max(1)) {
            let mut xs = Vec::with_capacity(batch.len());
            let mut ys = Vec::with_capacity(batch.len());
            for &i in batch {
                let (x, y) = prep(i);
                xs.push(x);
                ys.push(y);
            }
            let (loss, grad) = net.loss_and_gradient(&xs, &ys);
            adam.step(&mut net.params, &grad, cfg);
            train_loss += loss;
            batches += 1.0;
        }

        let val_hat: Vec<f64> = val.iter().map(|(x, _)| net.probabilities(x)[FAKE_UNIT]).collect();
        let val_y: Vec<u8> = val.iter().map(|(_, y)| *y).collect();
        let val_loss = cross_entropy(&val_y, &val_hat).expect("val lengths match");
        log.epochs.push((train_loss / batches.max(1.0), val_loss));

        let stop = stopper.observe(val_loss);
        if stopper.best_epoch == log.epochs.len() {
            best_params = net.params.clone();
        }
        if stop {
            log.stopped_early = true;
            break;
        }
    }
    log.best_epoch = stopper.best_epoch;
    net.params = best_params;

    Ok((
        MlpModel {
            feature_kind,
            net,
            input_mean: mean,
            input_std: std,
        },
        log,
    ))
}

/// P(bonafide) - P(fake), in [-1, 1]; higher means more bonafide.
pub fn mlp_score(model: &MlpModel, pooled: &[f64]) -> Result<f64, DetectorError> {
    if pooled.len() != model.net.in_dim {
        return Err(DetectorError::DimMismatch {
            model: model.net.in_dim,
            input: pooled.len(),
        });
    }
    let p = model.net.probabilities(&model.standardize(pooled));
    Ok(p[0] - p[1])
}
