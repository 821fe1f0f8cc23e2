//! Stage orchestration for the CLI: each stage validates its inputs,
//! skips work that is already done, and leaves deterministic artifacts.

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::audio::{fix_length, normalize_audio, FIXED_SAMPLES};
use crate::channel::{conceal, draw_loss_mask, packetize, ConditionTag, CHANNEL_FRAME_MS};
use crate::codec::apply_codec;
use crate::config::{DetectorKind, RunConfig, TrainOn};
use crate::corpus::{load_utterance_audio, Label, Manifest, Utterance};
use crate::datasetgen::{
    materialize_addc, materialize_augmented_with, plan_addc, plan_augmented, split_train_val,
};
use crate::detector::{
    gmm_fit, mlp_train, read_model, write_model, DetectorModel, FrameSet, GmmModel,
};
use crate::evaluation::{
    evaluate_conditions, EvalReport, ReportMetadata, ScoreEntry, ScoreSet,
};
use crate::features::{extract, read_cache, write_cache, FeatureKind};
use crate::seed::derive_seed;
use crate::wav;

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("stage input missing: {0}")]
    StageInputMissing(String),
    #[error("stale cache: {0} (use --force to rebuild)")]
    StaleCache(String),
    #[error("{0}")]
    Runtime(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl PipelineError {
    fn runtime(e: impl std::fmt::Display) -> Self {
        PipelineError::Runtime(e.to_string())
    }
}

/// The protocol completions this toolkit makes explicit; recorded in plans
/// and reports.
pub fn assumption_flags() -> Vec<String> {
    [
        "codec operating points are midband conversational defaults within published ranges",
        "builtin codec backend is a parametric surrogate: band limiting plus companded quantization",
        "packet loss drops 20 ms decoded frames; concealment as configured",
        "cepstral window/filterbank completions chosen to reproduce the published output shapes",
        "utterances front-truncated to 4 s, tail zero-padded",
    ]
    .iter()
    .map(ToString::to_string)
    .collect()
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    let mut h = Sha256::new();
    h.update(bytes);
    hex_string(&h.finalize())
}

fn hex_string(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

fn file_digest(path: &Path) -> Result<String, PipelineError> {
    Ok(sha256_hex(&std::fs::read(path)?))
}

fn addc_dir(cfg: &RunConfig) -> PathBuf {
    cfg.paths.out_dir.join("addc")
}

fn augmented_dir(cfg: &RunConfig) -> PathBuf {
    cfg.paths.out_dir.join("augmented")
}

fn model_path(cfg: &RunConfig) -> PathBuf {
    cfg.paths.out_dir.join("model").join("detector.bin")
}

fn scores_path(cfg: &RunConfig) -> PathBuf {
    cfg.paths.out_dir.join("scores").join("scores.csv")
}

fn report_dir(cfg: &RunConfig) -> PathBuf {
    cfg.paths.out_dir.join("report")
}

#[derive(Debug, serde::Serialize, serde::Deserialize, PartialEq)]
struct AddcPlanFile {
    master_seed: u64,
    per_dataset: usize,
    manifest_sha256: String,
    n_c0: usize,
    n_per_condition: usize,
    loss_model: String,
    concealment: String,
    codecs: Vec<crate::codec::CodecSpec>,
    assumptions: Vec<String>,
}

/// Build and materialize the six-condition evaluation tree.
pub fn stage_build_addc(cfg: &RunConfig, force: bool) -> Result<String, PipelineError> {
    let manifest_path = &cfg.paths.manifest;
    if !manifest_path.exists() {
        return Err(PipelineError::StageInputMissing(format!(
            "corpus manifest {}",
            manifest_path.display()
        )));
    }
    let manifest = Manifest::load(manifest_path).map_err(PipelineError::runtime)?;
    let registry = cfg.registry().map_err(PipelineError::runtime)?;
    let settings = cfg.channel_settings().map_err(PipelineError::runtime)?;
    let plan = plan_addc(&manifest, cfg.addc.per_dataset, &registry, cfg.master_seed)
        .map_err(PipelineError::runtime)?;

    let plan_file = AddcPlanFile {
        master_seed: cfg.master_seed,
        per_dataset: cfg.addc.per_dataset,
        manifest_sha256: file_digest(manifest_path)?,
        n_c0: plan.c0.len(),
        n_per_condition: plan.items.len() / 5,
        loss_model: cfg.channel.loss_model.clone(),
        concealment: cfg.channel.concealment.clone(),
        codecs: registry.clone(),
        assumptions: assumption_flags(),
    };
    let root = addc_dir(cfg);
    let plan_path = root.join("plan.json");
    if plan_path.exists() && !force {
        let existing: Option<AddcPlanFile> = std::fs::read_to_string(&plan_path)
            .ok()
            .and_then(|t| serde_json::from_str(&t).ok());
        match existing {
            Some(e) if e == plan_file => {
                return Ok(format!(
                    "addc: up to date ({} clean, {} per condition)",
                    e.n_c0, e.n_per_condition
                ));
            }
            Some(_) => {
                return Err(PipelineError::StaleCache(format!(
                    "{} was built from different inputs",
                    plan_path.display()
                )))
            }
            None => {}
        }
    }

    materialize_addc(&plan, &root, &settings).map_err(PipelineError::runtime)?;
    std::fs::write(
        &plan_path,
        serde_json::to_string_pretty(&plan_file).expect("plan serializes"),
    )?;
    Ok(format!(
        "addc: built {} clean + 5 x {} degraded utterances under {}",
        plan.c0.len(),
        plan.items.len() / 5,
        root.display()
    ))
}

#[derive(Debug, serde::Serialize, serde::Deserialize, PartialEq)]
struct AugmentPlanFile {
    master_seed: u64,
    manifest_sha256: String,
    consumed_sha256: String,
    subset_sizes: Vec<usize>,
    n_source: usize,
    predicted_five_n: usize,
    n_items: usize,
    loss_model: String,
    concealment: String,
    codecs: Vec<crate::codec::CodecSpec>,
    assumptions: Vec<String>,
}

fn load_consumed(cfg: &RunConfig) -> Result<BTreeSet<String>, PipelineError> {
    let path = addc_dir(cfg).join("consumed.txt");
    if !path.exists() {
        return Err(PipelineError::StageInputMissing(format!(
            "{} (run build-addc first)",
            path.display()
        )));
    }
    Ok(std::fs::read_to_string(&path)?
        .lines()
        .filter(|l| !l.trim().is_empty())
        .map(ToString::to_string)
        .collect())
}

/// Expand the remaining corpus into the augmented training set.
pub fn stage_augment(cfg: &RunConfig, force: bool) -> Result<String, PipelineError> {
    let manifest = Manifest::load(&cfg.paths.manifest).map_err(PipelineError::runtime)?;
    let consumed = load_consumed(cfg)?;
    let registry = cfg.registry().map_err(PipelineError::runtime)?;
    let settings = cfg.channel_settings().map_err(PipelineError::runtime)?;
    let plan = plan_augmented(&manifest, &consumed, &registry, cfg.master_seed)
        .map_err(PipelineError::runtime)?;

    let n_source = manifest.len() - consumed.len();
    let plan_file = AugmentPlanFile {
        master_seed: cfg.master_seed,
        manifest_sha256: file_digest(&cfg.paths.manifest)?,
        consumed_sha256: file_digest(&addc_dir(cfg).join("consumed.txt"))?,
        subset_sizes: plan.subsets.iter().map(Vec::len).collect(),
        n_source,
        predicted_five_n: 5 * n_source,
        n_items: plan.items.len(),
        loss_model: cfg.channel.loss_model.clone(),
        concealment: cfg.channel.concealment.clone(),
        codecs: registry,
        assumptions: assumption_flags(),
    };
    let root = augmented_dir(cfg);
    let plan_path = root.join("plan.json");
    if plan_path.exists() && !force {
        let existing: Option<AugmentPlanFile> = std::fs::read_to_string(&plan_path)
            .ok()
            .and_then(|t| serde_json::from_str(&t).ok());
        match existing {
            Some(e) if e == plan_file => {
                return Ok(format!("augmented: up to date ({} items)", e.n_items));
            }
            Some(_) => {
                return Err(PipelineError::StaleCache(format!(
                    "{} was built from different inputs",
                    plan_path.display()
                )))
            }
            None => {}
        }
    }

    materialize_augmented_with(&plan, &root, &settings).map_err(PipelineError::runtime)?;
    std::fs::write(
        &plan_path,
        serde_json::to_string_pretty(&plan_file).expect("plan serializes"),
    )?;
    Ok(format!(
        "augmented: built {} utterances (5 x {}) under {}",
        plan.items.len(),
        n_source,
        root.display()
    ))
}

fn cache_file(cfg: &RunConfig, kind: FeatureKind, id: &str) -> PathBuf {
    let safe: String = id
        .chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() || c == '-' || c == '_' || c == '.' {
                c
            } else {
                '_'
            }
        })
        .collect();
    let tag = sha256_hex(id.as_bytes());
    cfg.cache_dir()
        .join(kind.as_str())
        .join(format!("{safe}.{}.fc", &tag[..8]))
}

/// Clean training entries: the corpus minus the ids consumed by ADD-C.
fn original_train_entries(cfg: &RunConfig) -> Result<Vec<Utterance>, PipelineError> {
    let manifest = Manifest::load(&cfg.paths.manifest).map_err(PipelineError::runtime)?;
    let consumed = load_consumed(cfg)?;
    Ok(manifest
        .entries
        .into_iter()
        .filter(|u| !consumed.contains(&u.id))
        .collect())
}

fn train_entries(cfg: &RunConfig) -> Result<Vec<Utterance>, PipelineError> {
    match cfg.train_on().map_err(PipelineError::runtime)? {
        TrainOn::Original => original_train_entries(cfg),
        TrainOn::Augmented => {
            let path = augmented_dir(cfg).join("manifest.csv");
            if !path.exists() {
                return Err(PipelineError::StageInputMissing(format!(
                    "{} (run augment first)",
                    path.display()
                )));
            }
            Ok(Manifest::load(&path).map_err(PipelineError::runtime)?.entries)
        }
    }
}

fn condition_manifests(cfg: &RunConfig) -> Result<Vec<(ConditionTag, Manifest)>, PipelineError> {
    let root = addc_dir(cfg);
    let mut out = Vec::new();
    for cond in ConditionTag::ALL {
        let path = root.join(cond.as_str()).join("manifest.csv");
        if !path.exists() {
            return Err(PipelineError::StageInputMissing(format!(
                "{} (run build-addc first)",
                path.display()
            )));
        }
        out.push((cond, Manifest::load(&path).map_err(PipelineError::runtime)?));
    }
    Ok(out)
}

#[derive(Debug, serde::Serialize, serde::Deserialize, PartialEq)]
struct FeatureMeta {
    kind: String,
    train_on: String,
    sources: BTreeMap<String, String>,
}

fn feature_meta(cfg: &RunConfig) -> Result<FeatureMeta, PipelineError> {
    let mut sources = BTreeMap::new();
    sources.insert(
        cfg.paths.manifest.display().to_string(),
        file_digest(&cfg.paths.manifest)?,
    );
    let consumed = addc_dir(cfg).join("consumed.txt");
    if consumed.exists() {
        sources.insert(consumed.display().to_string(), file_digest(&consumed)?);
    }
    for cond in ConditionTag::ALL {
        let p = addc_dir(cfg).join(cond.as_str()).join("manifest.csv");
        if p.exists() {
            sources.insert(p.display().to_string(), file_digest(&p)?);
        }
    }
    if cfg.train_on().map_err(PipelineError::runtime)? == TrainOn::Augmented {
        let p = augmented_dir(cfg).join("manifest.csv");
        if p.exists() {
            sources.insert(p.display().to_string(), file_digest(&p)?);
        }
    }
    Ok(FeatureMeta {
        kind: cfg.features.kind.clone(),
        train_on: cfg.detector.train_on.clone(),
        sources,
    })
}

fn cache_entry_is_valid(path: &Path, kind: FeatureKind) -> bool {
    read_cache(path).map(|m| m.kind == kind).unwrap_or(false)
}

/// Extract and cache features for the training set and every condition.
/// Existing valid cache files are skipped; returns (hits, written).
pub fn stage_features(cfg: &RunConfig, force: bool) -> Result<(usize, usize), PipelineError> {
    let kind = cfg.feature_kind().map_err(PipelineError::runtime)?;
    let conditions = condition_manifests(cfg)?;
    let train = train_entries(cfg)?;

    let meta = feature_meta(cfg)?;
    let meta_path = cfg.cache_dir().join("meta.json");
    if meta_path.exists() && !force {
        let existing: Option<FeatureMeta> = std::fs::read_to_string(&meta_path)
            .ok()
            .and_then(|t| serde_json::from_str(&t).ok());
        if let Some(e) = existing {
            if e != meta {
                return Err(PipelineError::StaleCache(format!(
                    "{} no longer matches the configured inputs",
                    meta_path.display()
                )));
            }
        }
    }

    let mut jobs: Vec<Utterance> = train;
    for (_, m) in &conditions {
        jobs.extend(m.entries.iter().cloned());
    }

    use rayon::prelude::*;
    let results: Vec<(bool, bool)> = jobs
        .par_iter()
        .map(|u| -> Result<(bool, bool), PipelineError> {
            let path = cache_file(cfg, kind, &u.id);
            if !force && cache_entry_is_valid(&path, kind) {
                return Ok((true, false));
            }
            let audio = load_utterance_audio(&u.path).map_err(PipelineError::runtime)?;
            let feats = extract(&audio, kind).map_err(PipelineError::runtime)?;
            write_cache(&path, &feats).map_err(PipelineError::runtime)?;
            Ok((false, true))
        })
        .collect::<Result<_, _>>()?;

    std::fs::create_dir_all(cfg.cache_dir())?;
    std::fs::write(
        &meta_path,
        serde_json::to_string_pretty(&meta).expect("meta serializes"),
    )?;

    let hits = results.iter().filter(|(h, _)| *h).count();
    let written = results.iter().filter(|(_, w)| *w).count();
    Ok((hits, written))
}

fn require_features(cfg: &RunConfig) -> Result<(), PipelineError> {
    let meta_path = cfg.cache_dir().join("meta.json");
    if !meta_path.exists() {
        return Err(PipelineError::StageInputMissing(format!(
            "{} (run features first)",
            meta_path.display()
        )));
    }
    let existing: Option<FeatureMeta> = std::fs::read_to_string(&meta_path)
        .ok()
        .and_then(|t| serde_json::from_str(&t).ok());
    match existing {
        Some(e) if e == feature_meta(cfg)? => Ok(()),
        Some(_) => Err(PipelineError::StaleCache(format!(
            "{} does not match the configured inputs",
            meta_path.display()
        ))),
        None => Err(PipelineError::StaleCache(format!(
            "{} is unreadable",
            meta_path.display()
        ))),
    }
}

fn load_cached(cfg: &RunConfig, kind: FeatureKind, id: &str) -> Result<crate::features::FeatureMatrix, PipelineError> {
    let path = cache_file(cfg, kind, id);
    read_cache(&path).map_err(|e| {
        PipelineError::StageInputMissing(format!("feature cache for {id:?}: {e}"))
    })
}

/// Train the configured detector on cached features and write the model.
pub fn stage_train(cfg: &RunConfig, force: bool) -> Result<String, PipelineError> {
    require_features(cfg)?;
    let kind = cfg.feature_kind().map_err(PipelineError::runtime)?;
    let out = model_path(cfg);
    if out.exists() && !force {
        return Ok(format!("train: model already at {}", out.display()));
    }

    let entries = train_entries(cfg)?;
    let (train, val) = split_train_val(&entries, |u| u.label, 0.8, cfg.master_seed)
        .map_err(PipelineError::runtime)?;

    let model = match cfg.detector_kind().map_err(PipelineError::runtime)? {
        DetectorKind::Gmm => {
            let mut frames: BTreeMap<Label, FrameSet> = BTreeMap::new();
            for u in &train {
                let feats = load_cached(cfg, kind, &u.id)?;
                frames
                    .entry(u.label)
                    .or_insert_with(|| FrameSet::new(feats.d))
                    .push_matrix(&feats, 1);
            }
            let mut cfg_gmm = cfg.gmm_config();
            cfg_gmm.seed = derive_seed(cfg.master_seed, "gmm/bonafide", 0, 0);
            let (bonafide, _) = gmm_fit(
                frames.get(&Label::Bonafide).ok_or_else(|| {
                    PipelineError::Runtime("no bonafide training utterances".into())
                })?,
                &cfg_gmm,
            )
            .map_err(PipelineError::runtime)?;
            cfg_gmm.seed = derive_seed(cfg.master_seed, "gmm/fake", 0, 0);
            let (fake, _) = gmm_fit(
                frames.get(&Label::Fake).ok_or_else(|| {
                    PipelineError::Runtime("no fake training utterances".into())
                })?,
                &cfg_gmm,
            )
            .map_err(PipelineError::runtime)?;
            DetectorModel::Gmm(GmmModel {
                feature_kind: kind,
                bonafide,
                fake,
            })
        }
        DetectorKind::Mlp => {
            let mut samples = Vec::with_capacity(train.len());
            for u in &train {
                let feats = load_cached(cfg, kind, &u.id)?;
                samples.push((crate::features::pool_stats(&feats), u.label));
            }
            let (model, log) = mlp_train(&samples, kind, &cfg.train_config())
                .map_err(PipelineError::runtime)?;
            log::info!(
                "mlp: best epoch {} of {}, stopped_early={}",
                log.best_epoch,
                log.epochs.len(),
                log.stopped_early
            );
            DetectorModel::Mlp(model)
        }
    };

    // Held-out sanity number for the log.
    let mut scores = Vec::new();
    let mut labels = Vec::new();
    for u in &val {
        let feats = load_cached(cfg, kind, &u.id)?;
        scores.push(model.score(&feats).map_err(PipelineError::runtime)?);
        labels.push(u.label);
    }
    let val_eer = crate::evaluation::eer(&scores, &labels)
        .map(|r| r.eer)
        .unwrap_or(f64::NAN);

    write_model(&out, &model).map_err(PipelineError::runtime)?;
    Ok(format!(
        "train: {} on {} utterances, validation EER {:.2}% -> {}",
        cfg.detector.kind,
        train.len(),
        val_eer * 100.0,
        out.display()
    ))
}

/// Score every utterance of every condition with the trained model.
pub fn stage_eval(cfg: &RunConfig, force: bool) -> Result<String, PipelineError> {
    let model_file = model_path(cfg);
    if !model_file.exists() {
        return Err(PipelineError::StageInputMissing(format!(
            "{} (run train first)",
            model_file.display()
        )));
    }
    require_features(cfg)?;
    let out = scores_path(cfg);
    if out.exists() && !force {
        return Ok(format!("eval: scores already at {}", out.display()));
    }
    let model = read_model(&model_file).map_err(PipelineError::runtime)?;
    let kind = cfg.feature_kind().map_err(PipelineError::runtime)?;

    let mut set = ScoreSet::default();
    for (cond, manifest) in condition_manifests(cfg)? {
        use rayon::prelude::*;
        let mut rows: Vec<ScoreEntry> = manifest
            .entries
            .par_iter()
            .map(|u| -> Result<ScoreEntry, PipelineError> {
                let feats = load_cached(cfg, kind, &u.id)?;
                let score = model.score(&feats).map_err(PipelineError::runtime)?;
                Ok(ScoreEntry {
                    utterance_id: u.id.clone(),
                    condition: cond,
                    score,
                    label: u.label,
                })
            })
            .collect::<Result<_, _>>()?;
        rows.sort_by(|a, b| a.utterance_id.cmp(&b.utterance_id));
        set.entries.extend(rows);
    }
    set.save(&out).map_err(PipelineError::runtime)?;
    Ok(format!(
        "eval: wrote {} scores to {}",
        set.entries.len(),
        out.display()
    ))
}

pub fn report_metadata(cfg: &RunConfig) -> Result<ReportMetadata, PipelineError> {
    Ok(ReportMetadata {
        master_seed: cfg.master_seed,
        detector: cfg.detector.kind.clone(),
        feature_kind: cfg.features.kind.clone(),
        loss_model: cfg.channel.loss_model.clone(),
        concealment: cfg.channel.concealment.clone(),
        codec_operating_points: cfg.registry().map_err(PipelineError::runtime)?,
        assumptions: assumption_flags(),
    })
}

/// Compute metrics and write the report files. `scores_override` lets
/// externally produced score files be benchmarked directly.
pub fn stage_report(
    cfg: &RunConfig,
    scores_override: Option<&Path>,
) -> Result<(EvalReport, PathBuf), PipelineError> {
    let scores_file = match scores_override {
        Some(p) => p.to_path_buf(),
        None => scores_path(cfg),
    };
    if !scores_file.exists() {
        return Err(PipelineError::StageInputMissing(format!(
            "{} (run eval first)",
            scores_file.display()
        )));
    }
    let scores = ScoreSet::load(&scores_file).map_err(PipelineError::runtime)?;

    // Roster check only when the evaluation tree is present.
    let roster: Option<BTreeMap<ConditionTag, BTreeSet<String>>> =
        match condition_manifests(cfg) {
            Ok(conds) => Some(
                conds
                    .into_iter()
                    .map(|(cond, m)| {
                        (cond, m.entries.into_iter().map(|u| u.id).collect())
                    })
                    .collect(),
            ),
            Err(_) => None,
        };

    let report = evaluate_conditions(&scores, roster.as_ref(), report_metadata(cfg)?)
        .map_err(PipelineError::runtime)?;

    let dir = report_dir(cfg);
    std::fs::create_dir_all(&dir)?;
    std::fs::write(dir.join("report.json"), report.to_json())?;
    std::fs::write(dir.join("report.txt"), report.to_text())?;
    std::fs::write(dir.join("metrics.csv"), report.to_metrics_csv())?;
    Ok((report, dir))
}

/// One-shot degradation of a single file; returns a loss summary line.
pub fn run_simulate(
    input: &Path,
    output: &Path,
    codec: &crate::codec::CodecSpec,
    plr: f64,
    seed: u64,
    concealment: crate::channel::Concealment,
) -> Result<String, PipelineError> {
    let raw = wav::read_wav(input)
        .map_err(PipelineError::Io)?
        .map_err(PipelineError::runtime)?;
    let normalized = normalize_audio(&raw).map_err(PipelineError::runtime)?;
    let fixed = fix_length(&normalized, FIXED_SAMPLES);

    let stem = input
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    let sub_seed = derive_seed(seed, &stem, codec.index, (plr * 1000.0).round() as u32);

    let coded = apply_codec(&fixed, codec, None, &stem).map_err(PipelineError::runtime)?;
    let mut stream = packetize(&coded, CHANNEL_FRAME_MS).map_err(PipelineError::runtime)?;
    let mask = draw_loss_mask(
        stream.packets.len(),
        &crate::channel::LossModel::bernoulli(plr, sub_seed),
    )
    .map_err(PipelineError::runtime)?;
    let lost = mask.iter().filter(|&&l| l).count();
    let total = mask.len();
    stream.loss_mask = Some(mask);
    let out_audio = conceal(&stream, concealment).map_err(PipelineError::runtime)?;

    wav::write_wav_mono16(output, &out_audio.samples, out_audio.sample_rate)?;
    Ok(format!(
        "packets: {total}, lost: {lost} ({:.2}%), codec: {}, wrote {}",
        100.0 * lost as f64 / total as f64,
        codec.name,
        output.display()
    ))
}
