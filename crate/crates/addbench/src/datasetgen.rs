//! Builders for the six-condition evaluation set and the augmented
//! training set.
//!
//! Both builders separate planning (pure, seeded selection and assignment)
//! from materialization (audio rendering and file output), so cardinality
//! and balance can be checked without touching audio.

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use thiserror::Error;

use crate::audio::AudioBuffer;
use crate::channel::{transmit, ChannelCondition, ChannelError, Concealment, ConditionTag, LossKind, LossModel, FAITHFUL_PLRS};
use crate::codec::CodecSpec;
use crate::corpus::{load_utterance_audio, CorpusError, Label, Manifest, Utterance};
use crate::seed::{derive_seed, splitmix64, SplitMix};
use crate::wav;

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("source {tag:?} has {have} {label:?} utterances, need {need}")]
    InsufficientData {
        tag: String,
        label: Label,
        have: usize,
        need: usize,
    },
    #[error("corpus is empty")]
    EmptyCorpus,
    #[error("need at least 2 items per class, class {0:?} has {1}")]
    TooSmall(Label, usize),
    #[error("plan references codec index {0} but no such codec was given")]
    UnknownCodec(u8),
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error(transparent)]
    Channel(#[from] ChannelError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// How degraded audio is rendered from a plan.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelSettings {
    pub loss_kind: LossKind,
    pub ge_params: Option<(f64, f64)>,
    pub concealment: Concealment,
}

impl Default for ChannelSettings {
    fn default() -> Self {
        Self {
            loss_kind: LossKind::Bernoulli,
            ge_params: None,
            concealment: Concealment::ZeroFill,
        }
    }
}

impl ChannelSettings {
    pub fn loss_model(&self, plr: f64, seed: u64) -> LossModel {
        LossModel {
            kind: self.loss_kind,
            plr,
            ge_params: self.ge_params,
            seed,
        }
    }
}

fn plr_permille(plr: f64) -> u32 {
    (plr * 1000.0).round() as u32
}

/// One degraded rendering of a source utterance.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct DegradedItem {
    pub degraded_id: String,
    pub source_id: String,
    pub label: Label,
    pub source_dataset: String,
    pub algorithm: Option<String>,
    pub codec_index: u8,
    pub codec_name: String,
    pub condition: ConditionTag,
    pub plr: f64,
    pub sub_seed: u64,
}

/// Selection and degradation plan for the six-condition evaluation set.
#[derive(Debug, Clone)]
pub struct AddcPlan {
    pub master_seed: u64,
    pub per_dataset: usize,
    pub codecs: Vec<CodecSpec>,
    /// Clean condition members, balanced per (source tag, label).
    pub c0: Vec<Utterance>,
    /// Ids removed from the training pool.
    pub consumed: BTreeSet<String>,
    /// All degraded renderings: |codecs| x 5 x |c0|.
    pub items: Vec<DegradedItem>,
}

impl AddcPlan {
    pub fn codec_for(&self, item: &DegradedItem) -> Result<&CodecSpec, DatasetError> {
        self.codecs
            .iter()
            .find(|c| c.index == item.codec_index)
            .ok_or(DatasetError::UnknownCodec(item.codec_index))
    }

    pub fn items_for(&self, cond: ConditionTag) -> impl Iterator<Item = &DegradedItem> {
        self.items.iter().filter(move |i| i.condition == cond)
    }

    /// Expected (condition -> utterance ids) roster for evaluation.
    pub fn roster(&self) -> BTreeMap<ConditionTag, BTreeSet<String>> {
        let mut out: BTreeMap<ConditionTag, BTreeSet<String>> = BTreeMap::new();
        for u in &self.c0 {
            out.entry(ConditionTag::C0).or_default().insert(u.id.clone());
        }
        for i in &self.items {
            out.entry(i.condition)
                .or_default()
                .insert(i.degraded_id.clone());
        }
        out
    }
}

/// Seeded, balanced selection of the clean condition plus the full grid of
/// degraded renderings (every codec at every loss rate).
pub fn plan_addc(
    manifest: &Manifest,
    per_dataset: usize,
    codecs: &[CodecSpec],
    master_seed: u64,
) -> Result<AddcPlan, DatasetError> {
    let tags = manifest.source_tags();
    if tags.is_empty() {
        return Err(DatasetError::EmptyCorpus);
    }

    let mut c0 = Vec::new();
    for tag in &tags {
        for label in [Label::Bonafide, Label::Fake] {
            let pool: Vec<&Utterance> = manifest
                .entries
                .iter()
                .filter(|u| u.source_dataset == *tag && u.label == label)
                .collect();
            if pool.len() < per_dataset {
                return Err(DatasetError::InsufficientData {
                    tag: tag.clone(),
                    label,
                    have: pool.len(),
                    need: per_dataset,
                });
            }
            let mut order: Vec<usize> = (0..pool.len()).collect();
            let stratum_seed = splitmix64(
                master_seed
                    ^ crate::seed::derive_seed(master_seed, tag, u8::from(label == Label::Fake), 0),
            );
            SplitMix::new(stratum_seed).shuffle(&mut order);
            for &i in order.iter().take(per_dataset) {
                c0.push(pool[i].clone());
            }
        }
    }

    let consumed: BTreeSet<String> = c0.iter().map(|u| u.id.clone()).collect();

    let mut items = Vec::with_capacity(codecs.len() * 5 * c0.len());
    for cond in ConditionTag::DEGRADED {
        let plr = cond.plr().expect("degraded condition has a PLR");
        for codec in codecs {
            for u in &c0 {
                items.push(DegradedItem {
                    degraded_id: format!("{}__{}__{}", u.id, codec.name, cond),
                    source_id: u.id.clone(),
                    label: u.label,
                    source_dataset: u.source_dataset.clone(),
                    algorithm: u.algorithm.clone(),
                    codec_index: codec.index,
                    codec_name: codec.name.clone(),
                    condition: cond,
                    plr,
                    sub_seed: derive_seed(master_seed, &u.id, codec.index, plr_permille(plr)),
                });
            }
        }
    }

    Ok(AddcPlan {
        master_seed,
        per_dataset,
        codecs: codecs.to_vec(),
        c0,
        consumed,
        items,
    })
}

/// Run one plan item through the transmission chain.
pub fn render_degraded(
    clean: &AudioBuffer,
    codec: &CodecSpec,
    plr: f64,
    sub_seed: u64,
    settings: &ChannelSettings,
) -> Result<AudioBuffer, ChannelError> {
    let cond = ChannelCondition {
        codec: codec.clone(),
        loss: settings.loss_model(plr, sub_seed),
        concealment: settings.concealment,
    };
    transmit(clean, &cond, None, "render")
}

/// Materialized evaluation set: audio on disk plus per-condition manifests.
#[derive(Debug, Clone)]
pub struct ConditionSet {
    pub root: PathBuf,
    pub plan: AddcPlan,
    /// degraded_id -> written file
    pub paths: BTreeMap<String, PathBuf>,
}

impl ConditionSet {
    pub fn condition_manifest_path(root: &Path, cond: ConditionTag) -> PathBuf {
        root.join(cond.as_str()).join("manifest.csv")
    }
}

/// Render and write the full ADD-C tree:
/// `root/C0/*.wav`, `root/Cn/<codec>/*.wav`, one manifest per condition.
pub fn materialize_addc(
    plan: &AddcPlan,
    root: &Path,
    settings: &ChannelSettings,
) -> Result<ConditionSet, DatasetError> {
    std::fs::create_dir_all(root)?;

    // Clean copies first; also reused as render sources.
    let c0_audio: Vec<AudioBuffer> = plan
        .c0
        .par_iter()
        .map(|u| load_utterance_audio(&u.path))
        .collect::<Result<_, _>>()?;
    let mut paths: BTreeMap<String, PathBuf> = BTreeMap::new();
    let mut c0_entries = Vec::new();
    for (u, audio) in plan.c0.iter().zip(&c0_audio) {
        let path = root.join("C0").join(format!("{}.wav", u.id));
        wav::write_wav_mono16(&path, &audio.samples, audio.sample_rate)?;
        paths.insert(u.id.clone(), path.clone());
        c0_entries.push(Utterance {
            id: u.id.clone(),
            label: u.label,
            source_dataset: u.source_dataset.clone(),
            algorithm: u.algorithm.clone(),
            path,
        });
    }
    Manifest::from_entries(c0_entries)?
        .save(&ConditionSet::condition_manifest_path(root, ConditionTag::C0))?;

    let index_of: BTreeMap<&str, usize> = plan
        .c0
        .iter()
        .enumerate()
        .map(|(i, u)| (u.id.as_str(), i))
        .collect();

    let rendered: Vec<(String, PathBuf, Utterance)> = plan
        .items
        .par_iter()
        .map(|item| -> Result<(String, PathBuf, Utterance), DatasetError> {
            let clean = &c0_audio[index_of[item.source_id.as_str()]];
            let codec = plan.codec_for(item)?;
            let audio = render_degraded(clean, codec, item.plr, item.sub_seed, settings)?;
            let path = root
                .join(item.condition.as_str())
                .join(&item.codec_name)
                .join(format!("{}.wav", item.degraded_id));
            wav::write_wav_mono16(&path, &audio.samples, audio.sample_rate)?;
            let entry = Utterance {
                id: item.degraded_id.clone(),
                label: item.label,
                source_dataset: item.source_dataset.clone(),
                algorithm: item.algorithm.clone(),
                path: path.clone(),
            };
            Ok((item.degraded_id.clone(), path, entry))
        })
        .collect::<Result<_, _>>()?;

    let mut per_condition: BTreeMap<ConditionTag, Vec<Utterance>> = BTreeMap::new();
    for (item, (id, path, entry)) in plan.items.iter().zip(rendered) {
        paths.insert(id, path);
        per_condition.entry(item.condition).or_default().push(entry);
    }
    for (cond, entries) in per_condition {
        Manifest::from_entries(entries)?
            .save(&ConditionSet::condition_manifest_path(root, cond))?;
    }

    let consumed_path = root.join("consumed.txt");
    let consumed: Vec<&str> = plan.consumed.iter().map(String::as_str).collect();
    std::fs::write(&consumed_path, consumed.join("\n") + "\n")?;

    Ok(ConditionSet {
        root: root.to_path_buf(),
        plan: plan.clone(),
        paths,
    })
}

/// One augmented rendering of a training utterance.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct AugmentItem {
    pub augmented_id: String,
    pub source_id: String,
    pub source_path: PathBuf,
    pub label: Label,
    pub source_dataset: String,
    pub algorithm: Option<String>,
    pub subset: usize,
    pub codec_index: u8,
    pub codec_name: String,
    pub plr: f64,
    pub sub_seed: u64,
}

/// Six-subset augmentation plan: each subset is tied to one codec and
/// rendered at all five loss rates, so the output is exactly 5x the input.
#[derive(Debug, Clone)]
pub struct AugmentPlan {
    pub master_seed: u64,
    pub codecs: Vec<CodecSpec>,
    /// Source ids per subset, stratified by (label, algorithm).
    pub subsets: Vec<Vec<String>>,
    pub items: Vec<AugmentItem>,
}

impl AugmentPlan {
    pub fn codec_for(&self, item: &AugmentItem) -> Result<&CodecSpec, DatasetError> {
        self.codecs
            .iter()
            .find(|c| c.index == item.codec_index)
            .ok_or(DatasetError::UnknownCodec(item.codec_index))
    }
}

/// Partition the remaining corpus into |codecs| subsets balanced within
/// each (label, algorithm) stratum, then expand every subset over the five
/// loss rates under its codec.
pub fn plan_augmented(
    manifest: &Manifest,
    consumed: &BTreeSet<String>,
    codecs: &[CodecSpec],
    master_seed: u64,
) -> Result<AugmentPlan, DatasetError> {
    let remaining: Vec<&Utterance> = manifest
        .entries
        .iter()
        .filter(|u| !consumed.contains(&u.id))
        .collect();
    if remaining.is_empty() {
        return Err(DatasetError::EmptyCorpus);
    }
    let n_subsets = codecs.len();

    // Stratify; untagged entries share one stratum per label.
    let mut strata: BTreeMap<(Label, String), Vec<&Utterance>> = BTreeMap::new();
    for u in &remaining {
        let key = (u.label, u.algorithm.clone().unwrap_or_default());
        strata.entry(key).or_default().push(u);
    }

    let mut subsets: Vec<Vec<String>> = vec![Vec::new(); n_subsets];
    let mut subset_of: BTreeMap<String, usize> = BTreeMap::new();
    for ((label, algorithm), members) in &strata {
        let mut order: Vec<usize> = (0..members.len()).collect();
        let stratum_seed = derive_seed(
            master_seed,
            &format!("{}|{algorithm}", label.as_str()),
            0,
            1,
        );
        SplitMix::new(stratum_seed).shuffle(&mut order);
        for (j, &i) in order.iter().enumerate() {
            let subset = j % n_subsets;
            subsets[subset].push(members[i].id.clone());
            subset_of.insert(members[i].id.clone(), subset);
        }
    }

    // Deterministic item order: manifest order x loss rates.
    let mut items = Vec::with_capacity(remaining.len() * FAITHFUL_PLRS.len());
    for u in &remaining {
        let subset = subset_of[&u.id];
        let codec = &codecs[subset];
        for &plr in &FAITHFUL_PLRS {
            items.push(AugmentItem {
                augmented_id: format!("{}__{}__P{}", u.id, codec.name, plr_permille(plr)),
                source_id: u.id.clone(),
                source_path: u.path.clone(),
                label: u.label,
                source_dataset: u.source_dataset.clone(),
                algorithm: u.algorithm.clone(),
                subset,
                codec_index: codec.index,
                codec_name: codec.name.clone(),
                plr,
                sub_seed: derive_seed(master_seed, &u.id, codec.index, plr_permille(plr)),
            });
        }
    }

    Ok(AugmentPlan {
        master_seed,
        codecs: codecs.to_vec(),
        subsets,
        items,
    })
}

/// Render and write the augmented set: `root/<codec>/*.wav` plus one
/// manifest covering every item.
pub fn materialize_augmented(plan: &AugmentPlan, root: &Path) -> Result<Manifest, DatasetError> {
    materialize_augmented_with(plan, root, &ChannelSettings::default())
}

pub fn materialize_augmented_with(
    plan: &AugmentPlan,
    root: &Path,
    settings: &ChannelSettings,
) -> Result<Manifest, DatasetError> {
    std::fs::create_dir_all(root)?;

    // Group by source so each utterance is loaded once.
    let mut by_source: BTreeMap<&str, Vec<&AugmentItem>> = BTreeMap::new();
    for item in &plan.items {
        by_source.entry(item.source_id.as_str()).or_default().push(item);
    }
    let groups: Vec<(&str, Vec<&AugmentItem>)> = by_source.into_iter().collect();

    let rendered: Vec<Vec<Utterance>> = groups
        .par_iter()
        .map(|(_, items)| -> Result<Vec<Utterance>, DatasetError> {
            let clean = load_utterance_audio(&items[0].source_path)?;
            let mut out = Vec::with_capacity(items.len());
            for item in items {
                let codec = plan.codec_for(item)?;
                let audio = render_degraded(&clean, codec, item.plr, item.sub_seed, settings)?;
                let path = root
                    .join(&item.codec_name)
                    .join(format!("{}.wav", item.augmented_id));
                wav::write_wav_mono16(&path, &audio.samples, audio.sample_rate)?;
                out.push(Utterance {
                    id: item.augmented_id.clone(),
                    label: item.label,
                    source_dataset: item.source_dataset.clone(),
                    algorithm: item.algorithm.clone(),
                    path,
                });
            }
            Ok(out)
        })
        .collect::<Result<_, _>>()?;

    // Manifest rows in plan order.
    let mut by_id: BTreeMap<&str, &Utterance> = BTreeMap::new();
    for group in &rendered {
        for u in group {
            by_id.insert(u.id.as_str(), u);
        }
    }
    let entries: Vec<Utterance> = plan
        .items
        .iter()
        .map(|i| (*by_id[i.augmented_id.as_str()]).clone())
        .collect();
    let manifest = Manifest::from_entries(entries)?;
    manifest.save(&root.join("manifest.csv"))?;
    Ok(manifest)
}

/// Seeded stratified split: both sides contain both classes, validation
/// takes floor((1 - fraction) * n) per class (at least one).
pub fn split_train_val<T: Clone>(
    items: &[T],
    label_of: impl Fn(&T) -> Label,
    fraction: f64,
    seed: u64,
) -> Result<(Vec<T>, Vec<T>), DatasetError> {
    let mut by_class: BTreeMap<Label, Vec<usize>> = BTreeMap::new();
    for (i, item) in items.iter().enumerate() {
        by_class.entry(label_of(item)).or_default().push(i);
    }
    for label in [Label::Bonafide, Label::Fake] {
        let n = by_class.get(&label).map_or(0, Vec::len);
        if n < 2 {
            return Err(DatasetError::TooSmall(label, n));
        }
    }
    let mut train_idx = Vec::new();
    let mut val_idx = Vec::new();
    for (label, mut idx) in by_class {
        let class_seed = derive_seed(seed, label.as_str(), 0, 2);
        SplitMix::new(class_seed).shuffle(&mut idx);
        // Epsilon absorbs binary-fraction slop (0.2 * 50 = 9.999...).
        let n_val = (((idx.len() as f64) * (1.0 - fraction) + 1e-9).floor() as usize)
            .clamp(1, idx.len() - 1);
        val_idx.extend_from_slice(&idx[..n_val]);
        train_idx.extend_from_slice(&idx[n_val..]);
    }
    train_idx.sort_unstable();
    val_idx.sort_unstable();
    Ok((
        train_idx.iter().map(|&i| items[i].clone()).collect(),
        val_idx.iter().map(|&i| items[i].clone()).collect(),
    ))
}
