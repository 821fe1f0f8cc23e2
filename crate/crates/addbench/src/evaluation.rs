//! Detection metrics per evaluation condition: EER, AUC, F1, and the
//! degradation summary relative to the clean condition.

use std::collections::{BTreeMap, BTreeSet};

use thiserror::Error;

use crate::channel::ConditionTag;
use crate::codec::CodecSpec;
use crate::corpus::{split_csv_row, Label};

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("need both classes, found only {0:?}")]
    OneClassOnly(Label),
    #[error("no scores")]
    Empty,
    #[error("score is not finite")]
    NonFiniteScore,
    #[error("missing scores for {0} (utterance, condition) pairs; first: {1:?}")]
    MissingScores(usize, Vec<String>),
    #[error("no C0 scores to compare against")]
    MissingClean,
    #[error("score file: bad header {0:?}")]
    BadHeader(String),
    #[error("score file row {row}: {reason}")]
    BadRow { row: usize, reason: String },
    #[error("score file is not valid UTF-8")]
    NotUtf8,
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// One scored trial.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreEntry {
    pub utterance_id: String,
    pub condition: ConditionTag,
    pub score: f64,
    pub label: Label,
}

/// Flat collection of scored trials across conditions.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ScoreSet {
    pub entries: Vec<ScoreEntry>,
}

pub const SCORE_HEADER: &str = "utterance_id,condition,score,label";

impl ScoreSet {
    pub fn push(&mut self, entry: ScoreEntry) {
        self.entries.push(entry);
    }

    pub fn by_condition(&self) -> BTreeMap<ConditionTag, Vec<&ScoreEntry>> {
        let mut map: BTreeMap<ConditionTag, Vec<&ScoreEntry>> = BTreeMap::new();
        for e in &self.entries {
            map.entry(e.condition).or_default().push(e);
        }
        map
    }

    pub fn parse_csv(text: &str) -> Result<Self, EvalError> {
        let mut lines = text.lines().enumerate();
        let (_, header) = lines.next().ok_or_else(|| EvalError::BadHeader(String::new()))?;
        if header.trim_end() != SCORE_HEADER {
            return Err(EvalError::BadHeader(header.trim_end().to_string()));
        }
        let mut entries = Vec::new();
        for (idx, line) in lines {
            if line.trim().is_empty() {
                continue;
            }
            let row = idx + 1;
            let fields = split_csv_row(line, row).map_err(|e| EvalError::BadRow {
                row,
                reason: e.to_string(),
            })?;
            if fields.len() != 4 {
                return Err(EvalError::BadRow {
                    row,
                    reason: format!("expected 4 fields, got {}", fields.len()),
                });
            }
            let condition = ConditionTag::parse(&fields[1]).ok_or_else(|| EvalError::BadRow {
                row,
                reason: format!("unknown condition {:?}", fields[1]),
            })?;
            let score: f64 = fields[2].parse().map_err(|_| EvalError::BadRow {
                row,
                reason: format!("bad score {:?}", fields[2]),
            })?;
            if !score.is_finite() {
                return Err(EvalError::BadRow {
                    row,
                    reason: "score not finite".into(),
                });
            }
            let label = Label::parse(&fields[3]).ok_or_else(|| EvalError::BadRow {
                row,
                reason: format!("bad label {:?}", fields[3]),
            })?;
            entries.push(ScoreEntry {
                utterance_id: fields[0].clone(),
                condition,
                score,
                label,
            });
        }
        Ok(Self { entries })
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from(SCORE_HEADER);
        out.push('\n');
        for e in &self.entries {
            out.push_str(&format!(
                "{},{},{},{}\n",
                e.utterance_id,
                e.condition,
                e.score,
                e.label.as_str()
            ));
        }
        out
    }

    pub fn load(path: &std::path::Path) -> Result<Self, EvalError> {
        let bytes = std::fs::read(path)?;
        let text = String::from_utf8(bytes).map_err(|_| EvalError::NotUtf8)?;
        Self::parse_csv(&text)
    }

    pub fn save(&self, path: &std::path::Path) -> Result<(), EvalError> {
        if let Some(parent) = path.parent() {
            std::fs::create_dir_all(parent)?;
        }
        std::fs::write(path, self.to_csv())?;
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EerResult {
    pub eer: f64,
    pub threshold: f64,
    /// Set when the sweep lands above 0.5, i.e. scores separate the classes
    /// in the wrong direction.
    pub polarity_warning: bool,
}

fn split_classes(scores: &[f64], labels: &[Label]) -> Result<(Vec<f64>, Vec<f64>), EvalError> {
    assert_eq!(scores.len(), labels.len());
    if scores.is_empty() {
        return Err(EvalError::Empty);
    }
    if scores.iter().any(|s| !s.is_finite()) {
        return Err(EvalError::NonFiniteScore);
    }
    let mut bona = Vec::new();
    let mut fake = Vec::new();
    for (s, l) in scores.iter().zip(labels) {
        match l {
            Label::Bonafide => bona.push(*s),
            Label::Fake => fake.push(*s),
        }
    }
    if bona.is_empty() {
        return Err(EvalError::OneClassOnly(Label::Fake));
    }
    if fake.is_empty() {
        return Err(EvalError::OneClassOnly(Label::Bonafide));
    }
    Ok((bona, fake))
}

/// Equal error rate by sweeping every distinct score as a threshold.
///
/// At threshold t: FNR = fraction of bonafide with score < t, FPR =
/// fraction of fake with score >= t. The operating point minimizes
/// |FNR - FPR|, ties broken by smaller FNR + FPR, then smaller t; the
/// reported rate is the midpoint (FNR + FPR) / 2.
pub fn eer(scores: &[f64], labels: &[Label]) -> Result<EerResult, EvalError> {
    let (mut bona, mut fake) = split_classes(scores, labels)?;
    bona.sort_by(|a, b| a.partial_cmp(b).unwrap());
    fake.sort_by(|a, b| a.partial_cmp(b).unwrap());

    let mut candidates: Vec<f64> = bona.iter().chain(fake.iter()).copied().collect();
    candidates.sort_by(|a, b| a.partial_cmp(b).unwrap());
    candidates.dedup();

    let below = |sorted: &[f64], t: f64| sorted.partition_point(|&s| s < t);

    let mut best: Option<(f64, f64, f64)> = None; // |diff|, sum, t
    let mut best_rates = (0.0, 0.0);
    for &t in &candidates {
        let fnr = below(&bona, t) as f64 / bona.len() as f64;
        let fpr = (fake.len() - below(&fake, t)) as f64 / fake.len() as f64;
        let key = ((fnr - fpr).abs(), fnr + fpr, t);
        let better = match best {
            None => true,
            Some(b) => key < b,
        };
        if better {
            best = Some(key);
            best_rates = (fnr, fpr);
        }
    }
    let (_, _, threshold) = best.unwrap();
    let value = (best_rates.0 + best_rates.1) / 2.0;
    Ok(EerResult {
        eer: value,
        threshold,
        polarity_warning: value > 0.5,
    })
}

/// Rank-based AUC: P(bonafide score > fake score) with ties counted half.
pub fn auc(scores: &[f64], labels: &[Label]) -> Result<f64, EvalError> {
    let (bona, fake) = split_classes(scores, labels)?;
    // Midranks over the pooled sample.
    let mut pooled: Vec<(f64, bool)> = bona
        .iter()
        .map(|&s| (s, true))
        .chain(fake.iter().map(|&s| (s, false)))
        .collect();
    pooled.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
    let n = pooled.len();
    let mut rank_sum_bona = 0.0f64;
    let mut i = 0;
    while i < n {
        let mut j = i;
        while j + 1 < n && pooled[j + 1].0 == pooled[i].0 {
            j += 1;
        }
        let midrank = (i + j + 2) as f64 / 2.0; // 1-based ranks
        for item in &pooled[i..=j] {
            if item.1 {
                rank_sum_bona += midrank;
            }
        }
        i = j + 1;
    }
    let nb = bona.len() as f64;
    let nf = fake.len() as f64;
    Ok((rank_sum_bona - nb * (nb + 1.0) / 2.0) / (nb * nf))
}

/// F1 for the fake class: a trial is called fake when its score falls
/// below the threshold. Returns 0 when fakes exist but none are predicted.
pub fn f1(scores: &[f64], labels: &[Label], threshold: f64) -> f64 {
    let mut tp = 0usize;
    let mut fp = 0usize;
    let mut fn_ = 0usize;
    for (s, l) in scores.iter().zip(labels) {
        let predicted_fake = *s < threshold;
        match (l, predicted_fake) {
            (Label::Fake, true) => tp += 1,
            (Label::Bonafide, true) => fp += 1,
            (Label::Fake, false) => fn_ += 1,
            (Label::Bonafide, false) => {}
        }
    }
    if tp == 0 {
        return 0.0;
    }
    let precision = tp as f64 / (tp + fp) as f64;
    let recall = tp as f64 / (tp + fn_) as f64;
    2.0 * precision * recall / (precision + recall)
}

/// Metrics for one condition.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct ConditionMetrics {
    pub condition: String,
    pub plr: Option<f64>,
    pub n_bonafide: usize,
    pub n_fake: usize,
    pub eer: f64,
    pub auc: f64,
    pub f1: f64,
    pub threshold: f64,
    pub polarity_warning: bool,
}

#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct MetricDeltas {
    pub condition: String,
    pub eer: f64,
    pub auc: f64,
    pub f1: f64,
}

/// Run provenance recorded alongside the numbers.
#[derive(Debug, Clone, Default, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct ReportMetadata {
    pub master_seed: u64,
    pub detector: String,
    pub feature_kind: String,
    pub loss_model: String,
    pub concealment: String,
    pub codec_operating_points: Vec<CodecSpec>,
    /// Completions the published protocol leaves open.
    pub assumptions: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct CodecBreakdown {
    pub codec: String,
    pub conditions: Vec<ConditionMetrics>,
}

#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct EvalReport {
    pub conditions: Vec<ConditionMetrics>,
    /// Per metric, value(Cn) - value(C0), n = 1..5.
    pub deltas_vs_c0: Vec<MetricDeltas>,
    /// The headline clean-to-first-condition degradation.
    pub c0_to_c1: Option<MetricDeltas>,
    pub per_codec: Vec<CodecBreakdown>,
    pub metadata: ReportMetadata,
}

fn metrics_for(
    tag: ConditionTag,
    entries: &[&ScoreEntry],
) -> Result<ConditionMetrics, EvalError> {
    let scores: Vec<f64> = entries.iter().map(|e| e.score).collect();
    let labels: Vec<Label> = entries.iter().map(|e| e.label).collect();
    let e = eer(&scores, &labels)?;
    let a = auc(&scores, &labels)?;
    let f = f1(&scores, &labels, e.threshold);
    Ok(ConditionMetrics {
        condition: tag.as_str().to_string(),
        plr: tag.plr(),
        n_bonafide: labels.iter().filter(|l| **l == Label::Bonafide).count(),
        n_fake: labels.iter().filter(|l| **l == Label::Fake).count(),
        eer: e.eer,
        auc: a,
        f1: f,
        threshold: e.threshold,
        polarity_warning: e.polarity_warning,
    })
}

/// Degraded utterance ids are formed as `orig__codec__Cn`; recover the
/// codec tag for the per-codec breakdown.
pub fn codec_of_id(id: &str) -> Option<&str> {
    let mut parts = id.split("__");
    let _orig = parts.next()?;
    let codec = parts.next()?;
    let cond = parts.next()?;
    (parts.next().is_none() && ConditionTag::parse(cond).is_some()).then_some(codec)
}

/// Compute all metrics per condition (F1 at each condition's own EER
/// operating point) plus degradation deltas against C0.
///
/// `expected` lists the (utterance, condition) roster that must be covered;
/// pass None to evaluate whatever scores are present.
pub fn evaluate_conditions(
    scores: &ScoreSet,
    expected: Option<&BTreeMap<ConditionTag, BTreeSet<String>>>,
    metadata: ReportMetadata,
) -> Result<EvalReport, EvalError> {
    if let Some(expected) = expected {
        let mut have: BTreeMap<ConditionTag, BTreeSet<&str>> = BTreeMap::new();
        for e in &scores.entries {
            have.entry(e.condition)
                .or_default()
                .insert(e.utterance_id.as_str());
        }
        let mut missing = Vec::new();
        for (cond, ids) in expected {
            for id in ids {
                let present = have
                    .get(cond)
                    .is_some_and(|set| set.contains(id.as_str()));
                if !present {
                    missing.push(format!("{id}@{cond}"));
                }
            }
        }
        if !missing.is_empty() {
            missing.sort();
            let total = missing.len();
            missing.truncate(8);
            return Err(EvalError::MissingScores(total, missing));
        }
    }

    let grouped = scores.by_condition();
    let mut conditions = Vec::new();
    for (&tag, entries) in &grouped {
        conditions.push(metrics_for(tag, entries)?);
    }

    let clean = conditions
        .iter()
        .find(|m| m.condition == "C0")
        .cloned()
        .ok_or(EvalError::MissingClean)?;
    let mut deltas = Vec::new();
    for m in &conditions {
        if m.condition == "C0" {
            continue;
        }
        deltas.push(MetricDeltas {
            condition: m.condition.clone(),
            eer: m.eer - clean.eer,
            auc: m.auc - clean.auc,
            f1: m.f1 - clean.f1,
        });
    }
    let c0_to_c1 = deltas.iter().find(|d| d.condition == "C1").cloned();

    // Per-codec breakdown over ids that carry a codec tag.
    let mut by_codec: BTreeMap<String, Vec<&ScoreEntry>> = BTreeMap::new();
    for e in &scores.entries {
        if let Some(codec) = codec_of_id(&e.utterance_id) {
            by_codec.entry(codec.to_string()).or_default().push(e);
        }
    }
    let mut per_codec = Vec::new();
    for (codec, entries) in by_codec {
        let mut grouped: BTreeMap<ConditionTag, Vec<&ScoreEntry>> = BTreeMap::new();
        for e in entries {
            grouped.entry(e.condition).or_default().push(e);
        }
        let mut conds = Vec::new();
        for (&tag, entries) in &grouped {
            conds.push(metrics_for(tag, entries)?);
        }
        per_codec.push(CodecBreakdown {
            codec,
            conditions: conds,
        });
    }

    Ok(EvalReport {
        conditions,
        deltas_vs_c0: deltas,
        c0_to_c1,
        per_codec,
        metadata,
    })
}

impl EvalReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }

    /// Human-oriented table; rates shown as percentages.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!(
            "{:<6} {:>7} {:>10} {:>8} {:>8} {:>8} {:>12}\n",
            "cond", "plr%", "trials", "eer%", "auc%", "f1%", "threshold"
        ));
        for m in &self.conditions {
            out.push_str(&format!(
                "{:<6} {:>7} {:>10} {:>8.2} {:>8.2} {:>8.2} {:>12.4}{}\n",
                m.condition,
                m.plr.map_or("-".to_string(), |p| format!("{}", p * 100.0)),
                m.n_bonafide + m.n_fake,
                m.eer * 100.0,
                m.auc * 100.0,
                m.f1 * 100.0,
                m.threshold,
                if m.polarity_warning { "  [polarity?]" } else { "" }
            ));
        }
        if let Some(d) = &self.c0_to_c1 {
            out.push_str(&format!(
                "C0->C1 degradation: eer {:+.2}%, auc {:+.2}%, f1 {:+.2}%\n",
                d.eer * 100.0,
                d.auc * 100.0,
                d.f1 * 100.0
            ));
        }
        out
    }

    /// Machine-oriented per-condition rows, rates as fractions.
    pub fn to_metrics_csv(&self) -> String {
        let mut out =
            String::from("condition,plr,n_bonafide,n_fake,eer,auc,f1,threshold\n");
        for m in &self.conditions {
            out.push_str(&format!(
                "{},{},{},{},{},{},{},{}\n",
                m.condition,
                m.plr.map_or(String::new(), |p| p.to_string()),
                m.n_bonafide,
                m.n_fake,
                m.eer,
                m.auc,
                m.f1,
                m.threshold
            ));
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seed::SplitMix;

    fn labels(bona: usize, fake: usize) -> Vec<Label> {
        let mut l = vec![Label::Bonafide; bona];
        l.extend(vec![Label::Fake; fake]);
        l
    }

    #[test]
    fn eer_perfect_separation() {
        let scores = [0.9, 0.8, 0.2, 0.1];
        let r = eer(&scores, &labels(2, 2)).unwrap();
        assert_eq!(r.eer, 0.0);
        assert!(!r.polarity_warning);
    }

    #[test]
    fn eer_fully_inverted_warns() {
        let scores = [0.2, 0.1, 0.9, 0.8];
        let r = eer(&scores, &labels(2, 2)).unwrap();
        assert_eq!(r.eer, 1.0);
        assert!(r.polarity_warning);
    }

    #[test]
    fn eer_interleaved_half() {
        // Exhaustive sweep by hand: FNR = FPR = 0.5 at t in (0.2, 0.8].
        let scores = [0.9, 0.2, 0.8, 0.1];
        let r = eer(&scores, &labels(2, 2)).unwrap();
        assert_eq!(r.eer, 0.5);
        assert!(r.threshold > 0.2 && r.threshold <= 0.8);
    }

    #[test]
    fn eer_one_class_only() {
        assert!(matches!(
            eer(&[0.5, 0.3], &[Label::Fake, Label::Fake]),
            Err(EvalError::OneClassOnly(Label::Fake))
        ));
    }

    /// O(n^2) reference: recount both rates at every distinct threshold.
    fn eer_brute(scores: &[f64], labels: &[Label]) -> (f64, f64) {
        let mut cands: Vec<f64> = scores.to_vec();
        cands.sort_by(|a, b| a.partial_cmp(b).unwrap());
        cands.dedup();
        let mut best: Option<(f64, f64, f64)> = None;
        let mut out = (0.0, 0.0);
        for &t in &cands {
            let mut miss = 0usize;
            let mut nb = 0usize;
            let mut hit = 0usize;
            let mut nf = 0usize;
            for (s, l) in scores.iter().zip(labels) {
                match l {
                    Label::Bonafide => {
                        nb += 1;
                        if *s < t {
                            miss += 1;
                        }
                    }
                    Label::Fake => {
                        nf += 1;
                        if *s >= t {
                            hit += 1;
                        }
                    }
                }
            }
            let fnr = miss as f64 / nb as f64;
            let fpr = hit as f64 / nf as f64;
            let key = ((fnr - fpr).abs(), fnr + fpr, t);
            if best.is_none() || key < best.unwrap() {
                best = Some(key);
                out = ((fnr + fpr) / 2.0, t);
            }
        }
        out
    }

    fn auc_pairwise(scores: &[f64], labels: &[Label]) -> f64 {
        let bona: Vec<f64> = scores
            .iter()
            .zip(labels)
            .filter(|(_, l)| **l == Label::Bonafide)
            .map(|(s, _)| *s)
            .collect();
        let fake: Vec<f64> = scores
            .iter()
            .zip(labels)
            .filter(|(_, l)| **l == Label::Fake)
            .map(|(s, _)| *s)
            .collect();
        let mut acc = 0.0;
        for b in &bona {
            for f in &fake {
                acc += if b > f {
                    1.0
                } else if b == f {
                    0.5
                } else {
                    0.0
                };
            }
        }
        acc / (bona.len() * fake.len()) as f64
    }

    fn random_instance(seed: u64, n_max: usize, quantized: bool) -> (Vec<f64>, Vec<Label>) {
        let mut rng = SplitMix::new(seed);
        let nb = 1 + rng.next_below(n_max / 2);
        let nf = 1 + rng.next_below(n_max / 2);
        let draw = |rng: &mut SplitMix, shift: f64| {
            let v = rng.next_unit() * 2.0 - 1.0 + shift;
            if quantized {
                (v * 8.0).round() / 8.0
            } else {
                v
            }
        };
        let mut scores = Vec::new();
        let mut lab = Vec::new();
        for _ in 0..nb {
            scores.push(draw(&mut rng, 0.3));
            lab.push(Label::Bonafide);
        }
        for _ in 0..nf {
            scores.push(draw(&mut rng, -0.3));
            lab.push(Label::Fake);
        }
        (scores, lab)
    }

    #[test]
    fn eer_matches_brute_force_on_random_instances() {
        for seed in 0..200 {
            let quantized = seed % 2 == 0; // force ties half the time
            let (scores, lab) = random_instance(seed, 60, quantized);
            let fast = eer(&scores, &lab).unwrap();
            let (brute_eer, brute_t) = eer_brute(&scores, &lab);
            assert_eq!(fast.eer, brute_eer, "seed {seed}");
            assert_eq!(fast.threshold, brute_t, "seed {seed}");
        }
    }

    #[test]
    fn auc_matches_pairwise_counting() {
        for seed in 0..100 {
            let (scores, lab) = random_instance(seed + 1000, 40, seed % 2 == 0);
            let fast = auc(&scores, &lab).unwrap();
            let slow = auc_pairwise(&scores, &lab);
            assert!((fast - slow).abs() < 1e-12, "seed {seed}: {fast} vs {slow}");
        }
    }

    #[test]
    fn auc_worked_examples() {
        assert_eq!(auc(&[0.9, 0.8, 0.2, 0.1], &labels(2, 2)).unwrap(), 1.0);
        assert_eq!(auc(&[0.5; 6], &labels(3, 3)).unwrap(), 0.5);
        assert_eq!(auc(&[0.9, 0.2, 0.8, 0.1], &labels(2, 2)).unwrap(), 0.75);
    }

    #[test]
    fn metric_invariance_under_monotone_transforms() {
        for seed in 0..30 {
            let (scores, lab) = random_instance(seed + 7, 50, seed % 3 == 0);
            let base_eer = eer(&scores, &lab).unwrap().eer;
            let base_auc = auc(&scores, &lab).unwrap();
            let base_f1 = {
                let t = eer(&scores, &lab).unwrap().threshold;
                f1(&scores, &lab, t)
            };
            for transform in [|x: f64| 2.0 * x + 1.0, |x: f64| x.exp(), |x: f64| x.powi(3)] {
                let mapped: Vec<f64> = scores.iter().map(|&s| transform(s)).collect();
                let e = eer(&mapped, &lab).unwrap();
                assert_eq!(e.eer, base_eer, "seed {seed}");
                assert_eq!(auc(&mapped, &lab).unwrap(), base_auc, "seed {seed}");
                assert_eq!(f1(&mapped, &lab, e.threshold), base_f1, "seed {seed}");
            }
        }
    }

    #[test]
    fn complement_identity() {
        for seed in 0..50 {
            let (scores, lab) = random_instance(seed + 99, 40, true);
            let negated: Vec<f64> = scores.iter().map(|s| -s).collect();
            let swapped: Vec<Label> = lab
                .iter()
                .map(|l| match l {
                    Label::Bonafide => Label::Fake,
                    Label::Fake => Label::Bonafide,
                })
                .collect();
            assert_eq!(
                eer(&scores, &lab).unwrap().eer,
                eer(&negated, &swapped).unwrap().eer,
                "seed {seed}"
            );
            let a = auc(&scores, &lab).unwrap();
            let b = auc(&negated, &swapped).unwrap();
            assert!((a - b).abs() < 1e-12, "seed {seed}");
        }
    }

    #[test]
    fn f1_worked_examples() {
        // Perfect separation at the EER threshold.
        let scores = [0.9, 0.8, 0.2, 0.1];
        let lab = labels(2, 2);
        let t = eer(&scores, &lab).unwrap().threshold;
        assert_eq!(f1(&scores, &lab, t), 1.0);

        // Everything called bonafide while fakes exist.
        assert_eq!(f1(&scores, &lab, -10.0), 0.0);

        // TP=2, FP=1, FN=1.
        let scores = [0.15, 0.7, 0.1, 0.2, 0.9];
        let lab = [
            Label::Bonafide,
            Label::Bonafide,
            Label::Fake,
            Label::Fake,
            Label::Fake,
        ];
        let v = f1(&scores, &lab, 0.5);
        assert!((v - 2.0 / 3.0).abs() < 1e-12);
    }

    fn entry(id: &str, cond: ConditionTag, score: f64, label: Label) -> ScoreEntry {
        ScoreEntry {
            utterance_id: id.to_string(),
            condition: cond,
            score,
            label,
        }
    }

    fn perfect_set() -> ScoreSet {
        let mut s = ScoreSet::default();
        for cond in ConditionTag::ALL {
            for i in 0..3 {
                s.push(entry(&format!("b{i}"), cond, 1.0 + i as f64, Label::Bonafide));
                s.push(entry(&format!("f{i}"), cond, -1.0 - i as f64, Label::Fake));
            }
        }
        s
    }

    #[test]
    fn perfect_scores_give_perfect_report() {
        let report = evaluate_conditions(&perfect_set(), None, ReportMetadata::default()).unwrap();
        assert_eq!(report.conditions.len(), 6);
        for m in &report.conditions {
            assert_eq!(m.eer, 0.0);
            assert_eq!(m.auc, 1.0);
            assert_eq!(m.f1, 1.0);
        }
        for d in &report.deltas_vs_c0 {
            assert_eq!((d.eer, d.auc, d.f1), (0.0, 0.0, 0.0));
        }
        assert!(report.c0_to_c1.is_some());
    }

    #[test]
    fn missing_scores_detected() {
        let mut expected: BTreeMap<ConditionTag, BTreeSet<String>> = BTreeMap::new();
        expected
            .entry(ConditionTag::C3)
            .or_default()
            .insert("ghost".to_string());
        let err = evaluate_conditions(&perfect_set(), Some(&expected), ReportMetadata::default());
        match err {
            Err(EvalError::MissingScores(1, names)) => {
                assert_eq!(names, vec!["ghost@C3".to_string()]);
            }
            other => panic!("expected MissingScores, got {other:?}"),
        }
    }

    #[test]
    fn random_scores_hover_near_half_auc() {
        // U-statistic 3-sigma bound at 1000 per class is ~0.023; the spec
        // budget allows 0.05.
        let mut rng = SplitMix::new(5);
        let mut s = ScoreSet::default();
        for cond in ConditionTag::ALL {
            for i in 0..1000 {
                s.push(entry(
                    &format!("b{i}"),
                    cond,
                    rng.next_unit(),
                    Label::Bonafide,
                ));
                s.push(entry(&format!("f{i}"), cond, rng.next_unit(), Label::Fake));
            }
        }
        let report = evaluate_conditions(&s, None, ReportMetadata::default()).unwrap();
        for m in &report.conditions {
            assert!((m.auc - 0.5).abs() < 0.05, "{}: {}", m.condition, m.auc);
        }
    }

    #[test]
    fn score_csv_roundtrip_and_errors() {
        let set = perfect_set();
        let text = set.to_csv();
        let back = ScoreSet::parse_csv(&text).unwrap();
        assert_eq!(back, set);

        assert!(matches!(
            ScoreSet::parse_csv("id,cond\n"),
            Err(EvalError::BadHeader(_))
        ));
        let bad = format!("{SCORE_HEADER}\nu1,C9,0.5,fake\n");
        assert!(matches!(
            ScoreSet::parse_csv(&bad),
            Err(EvalError::BadRow { row: 2, .. })
        ));
        let bad = format!("{SCORE_HEADER}\nu1,C1,abc,fake\n");
        assert!(ScoreSet::parse_csv(&bad).is_err());
        let bad = format!("{SCORE_HEADER}\nu1,C1,0.5,spoof\n");
        assert!(ScoreSet::parse_csv(&bad).is_err());
    }

    #[test]
    fn codec_ids_are_recovered() {
        assert_eq!(codec_of_id("utt1__AMR-WB__C3"), Some("AMR-WB"));
        assert_eq!(codec_of_id("utt_one__OPUS__C1"), Some("OPUS"));
        assert_eq!(codec_of_id("plain_id"), None);
        assert_eq!(codec_of_id("a__b__notcond"), None);
    }

    #[test]
    fn report_json_roundtrip() {
        let report = evaluate_conditions(&perfect_set(), None, ReportMetadata::default()).unwrap();
        let json = report.to_json();
        let back = EvalReport::from_json(&json).unwrap();
        assert_eq!(back, report);
        assert!(!report.to_text().is_empty());
        assert!(report.to_metrics_csv().lines().count() == 7);
    }
}
