//! Run configuration: one TOML file drives every pipeline stage.
//!
//! The master seed is mandatory; no stage may fall back to wall-clock
//! entropy. Flags on the CLI override individual fields.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::channel::{Concealment, LossKind};
use crate::codec::{lookup_preset, CodecBackend, CodecSpec, ExternalCodecTemplate};
use crate::detector::{GmmConfig, TrainConfig};
use crate::features::FeatureKind;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {err}")]
    Unreadable { path: PathBuf, err: String },
    #[error("config parse error: {0}")]
    Parse(String),
    #[error("config: {0}")]
    Invalid(String),
}

fn default_parallelism() -> usize {
    0
}
fn default_frame_ms() -> f64 {
    20.0
}
fn default_concealment() -> String {
    "zero_fill".into()
}
fn default_loss_model() -> String {
    "bernoulli".into()
}
fn default_feature_kind() -> String {
    "lfcc".into()
}
fn default_detector_kind() -> String {
    "gmm".into()
}
fn default_train_on() -> String {
    "original".into()
}
fn default_gmm_k() -> usize {
    64
}
fn default_batch() -> usize {
    256
}
fn default_epochs() -> usize {
    5
}
fn default_lr() -> f64 {
    1e-3
}
fn default_patience() -> usize {
    3
}
fn default_val_fraction() -> f64 {
    0.2
}
fn default_hidden() -> usize {
    64
}
fn default_per_dataset() -> usize {
    500
}

#[derive(Debug, Clone, Deserialize, Serialize)]
pub struct PathsSection {
    pub manifest: PathBuf,
    pub out_dir: PathBuf,
    pub cache_dir: Option<PathBuf>,
}

#[derive(Debug, Clone, Deserialize, Serialize)]
pub struct ChannelSection {
    #[serde(default = "default_loss_model")]
    pub loss_model: String,
    #[serde(default = "default_concealment")]
    pub concealment: String,
    #[serde(default = "default_frame_ms")]
    pub frame_ms: f64,
    pub ge_p: Option<f64>,
    pub ge_r: Option<f64>,
}

impl Default for ChannelSection {
    fn default() -> Self {
        Self {
            loss_model: default_loss_model(),
            concealment: default_concealment(),
            frame_ms: default_frame_ms(),
            ge_p: None,
            ge_r: None,
        }
    }
}

#[derive(Debug, Clone, Deserialize, Serialize)]
pub struct FeaturesSection {
    #[serde(default = "default_feature_kind")]
    pub kind: String,
}

impl Default for FeaturesSection {
    fn default() -> Self {
        Self {
            kind: default_feature_kind(),
        }
    }
}

#[derive(Debug, Clone, Deserialize, Serialize)]
pub struct DetectorSection {
    #[serde(default = "default_detector_kind")]
    pub kind: String,
    #[serde(default = "default_gmm_k")]
    pub gmm_k: usize,
    #[serde(default = "default_batch")]
    pub batch_size: usize,
    #[serde(default = "default_epochs")]
    pub epochs: usize,
    #[serde(default = "default_lr")]
    pub learning_rate: f64,
    #[serde(default = "default_patience")]
    pub patience: usize,
    #[serde(default = "default_val_fraction")]
    pub val_fraction: f64,
    #[serde(default = "default_hidden")]
    pub hidden: usize,
    /// Which corpus the detector trains on: original or augmented.
    #[serde(default = "default_train_on")]
    pub train_on: String,
}

impl Default for DetectorSection {
    fn default() -> Self {
        Self {
            kind: default_detector_kind(),
            gmm_k: default_gmm_k(),
            batch_size: default_batch(),
            epochs: default_epochs(),
            learning_rate: default_lr(),
            patience: default_patience(),
            val_fraction: default_val_fraction(),
            hidden: default_hidden(),
            train_on: default_train_on(),
        }
    }
}

#[derive(Debug, Clone, Deserialize, Serialize)]
pub struct AddcSection {
    #[serde(default = "default_per_dataset")]
    pub per_dataset: usize,
}

impl Default for AddcSection {
    fn default() -> Self {
        Self {
            per_dataset: default_per_dataset(),
        }
    }
}

/// Per-codec override or external definition.
#[derive(Debug, Clone, Deserialize, Serialize)]
pub struct CodecSection {
    pub name: String,
    pub backend: Option<String>,
    pub bandwidth_hz: Option<f64>,
    pub bitrate_kbps: Option<f64>,
    pub frame_ms: Option<f64>,
    pub encode_cmd: Option<String>,
    pub decode_cmd: Option<String>,
}

#[derive(Debug, Clone, Deserialize, Serialize)]
pub struct RunConfig {
    pub master_seed: u64,
    #[serde(default = "default_parallelism")]
    pub parallelism: usize,
    pub paths: PathsSection,
    #[serde(default)]
    pub channel: ChannelSection,
    #[serde(default)]
    pub features: FeaturesSection,
    #[serde(default)]
    pub detector: DetectorSection,
    #[serde(default)]
    pub addc: AddcSection,
    #[serde(default)]
    pub codec: Vec<CodecSection>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DetectorKind {
    Gmm,
    Mlp,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TrainOn {
    Original,
    Augmented,
}

impl RunConfig {
    pub fn from_toml_str(text: &str) -> Result<Self, ConfigError> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|e| ConfigError::Unreadable {
            path: path.to_path_buf(),
            err: e.to_string(),
        })?;
        Self::from_toml_str(&text)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        self.feature_kind()?;
        self.detector_kind()?;
        self.train_on()?;
        self.loss_kind()?;
        self.concealment()?;
        if self.channel.frame_ms <= 0.0 {
            return Err(ConfigError::Invalid("channel.frame_ms must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.detector.val_fraction) || self.detector.val_fraction <= 0.0 {
            return Err(ConfigError::Invalid(
                "detector.val_fraction must be in (0, 1)".into(),
            ));
        }
        if self.detector.patience == 0 {
            return Err(ConfigError::Invalid("detector.patience must be >= 1".into()));
        }
        if self.addc.per_dataset == 0 {
            return Err(ConfigError::Invalid("addc.per_dataset must be >= 1".into()));
        }
        for spec in self.registry()? {
            spec.validate()
                .map_err(|e| ConfigError::Invalid(e.to_string()))?;
        }
        Ok(())
    }

    pub fn feature_kind(&self) -> Result<FeatureKind, ConfigError> {
        FeatureKind::parse(&self.features.kind).ok_or_else(|| {
            ConfigError::Invalid(format!(
                "features.kind {:?} not one of lfcc|cqcc|raw",
                self.features.kind
            ))
        })
    }

    pub fn detector_kind(&self) -> Result<DetectorKind, ConfigError> {
        match self.detector.kind.as_str() {
            "gmm" => Ok(DetectorKind::Gmm),
            "mlp" => Ok(DetectorKind::Mlp),
            other => Err(ConfigError::Invalid(format!(
                "detector.kind {other:?} not one of gmm|mlp"
            ))),
        }
    }

    pub fn train_on(&self) -> Result<TrainOn, ConfigError> {
        match self.detector.train_on.as_str() {
            "original" => Ok(TrainOn::Original),
            "augmented" => Ok(TrainOn::Augmented),
            other => Err(ConfigError::Invalid(format!(
                "detector.train_on {other:?} not one of original|augmented"
            ))),
        }
    }

    pub fn loss_kind(&self) -> Result<LossKind, ConfigError> {
        match self.channel.loss_model.as_str() {
            "bernoulli" => Ok(LossKind::Bernoulli),
            "gilbert_elliott" => {
                if self.channel.ge_p.is_none() || self.channel.ge_r.is_none() {
                    return Err(ConfigError::Invalid(
                        "gilbert_elliott requires channel.ge_p and channel.ge_r".into(),
                    ));
                }
                Ok(LossKind::GilbertElliott)
            }
            other => Err(ConfigError::Invalid(format!(
                "channel.loss_model {other:?} not one of bernoulli|gilbert_elliott"
            ))),
        }
    }

    pub fn concealment(&self) -> Result<Concealment, ConfigError> {
        match self.channel.concealment.as_str() {
            "zero_fill" => Ok(Concealment::ZeroFill),
            "repeat_previous" => Ok(Concealment::RepeatPrevious),
            "linear_interp" => Ok(Concealment::LinearInterp),
            other => Err(ConfigError::Invalid(format!(
                "channel.concealment {other:?} not one of zero_fill|repeat_previous|linear_interp"
            ))),
        }
    }

    pub fn channel_settings(&self) -> Result<crate::datasetgen::ChannelSettings, ConfigError> {
        Ok(crate::datasetgen::ChannelSettings {
            loss_kind: self.loss_kind()?,
            ge_params: self.channel.ge_p.zip(self.channel.ge_r),
            concealment: self.concealment()?,
        })
    }

    /// The six-codec registry with config overrides applied by name.
    pub fn registry(&self) -> Result<Vec<CodecSpec>, ConfigError> {
        let mut registry = crate::codec::default_registry();
        for section in &self.codec {
            let existing = registry
                .iter_mut()
                .find(|s| s.name.eq_ignore_ascii_case(&section.name));
            let spec = match existing {
                Some(spec) => spec,
                None => {
                    return Err(ConfigError::Invalid(format!(
                        "codec override {:?} does not match a preset; presets: AMR-WB, EVS, IVAS, OPUS, SpeexWB, SILK",
                        section.name
                    )))
                }
            };
            if let Some(bw) = section.bandwidth_hz {
                spec.bandwidth_hz = bw;
            }
            if let Some(rate) = section.bitrate_kbps {
                spec.bitrate_kbps = rate;
            }
            if let Some(frame) = section.frame_ms {
                spec.frame_ms = frame;
            }
            if let Some(backend) = &section.backend {
                spec.backend = match backend.as_str() {
                    "builtin" => CodecBackend::Builtin,
                    "external" => CodecBackend::External,
                    other => {
                        return Err(ConfigError::Invalid(format!(
                            "codec.backend {other:?} not one of builtin|external"
                        )))
                    }
                };
            }
        }
        Ok(registry)
    }

    /// Command templates for external codecs, keyed by codec name.
    pub fn external_template(&self, name: &str, work_dir: &Path) -> Option<ExternalCodecTemplate> {
        self.codec
            .iter()
            .find(|c| c.name.eq_ignore_ascii_case(name))
            .and_then(|c| {
                Some(ExternalCodecTemplate {
                    encode_cmd: c.encode_cmd.clone()?,
                    decode_cmd: c.decode_cmd.clone()?,
                    work_dir: work_dir.to_path_buf(),
                })
            })
    }

    pub fn cache_dir(&self) -> PathBuf {
        self.paths
            .cache_dir
            .clone()
            .unwrap_or_else(|| self.paths.out_dir.join("cache"))
    }

    pub fn gmm_config(&self) -> GmmConfig {
        GmmConfig {
            components: self.detector.gmm_k,
            seed: self.master_seed,
            ..GmmConfig::default()
        }
    }

    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            batch_size: self.detector.batch_size,
            epochs: self.detector.epochs,
            learning_rate: self.detector.learning_rate,
            early_stopping_patience: self.detector.patience,
            val_fraction: self.detector.val_fraction,
            hidden: self.detector.hidden,
            seed: self.master_seed,
            ..TrainConfig::default()
        }
    }

    /// Stand-in codec spec usable by `simulate` without a config file.
    pub fn resolve_codec(name: &str) -> Option<CodecSpec> {
        if name.eq_ignore_ascii_case("identity") {
            Some(crate::codec::identity_spec())
        } else {
            lookup_preset(name)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
master_seed = 42

[paths]
manifest = "demo/manifest.csv"
out_dir = "out"
"#;

    #[test]
    fn minimal_config_parses_with_defaults() {
        let cfg = RunConfig::from_toml_str(MINIMAL).unwrap();
        assert_eq!(cfg.master_seed, 42);
        assert_eq!(cfg.feature_kind().unwrap(), FeatureKind::Lfcc);
        assert_eq!(cfg.detector_kind().unwrap(), DetectorKind::Gmm);
        assert_eq!(cfg.addc.per_dataset, 500);
        assert_eq!(cfg.cache_dir(), PathBuf::from("out/cache"));
        assert_eq!(cfg.registry().unwrap().len(), 6);
    }

    #[test]
    fn missing_seed_is_rejected() {
        let text = "[paths]\nmanifest = \"m.csv\"\nout_dir = \"out\"\n";
        assert!(matches!(
            RunConfig::from_toml_str(text),
            Err(ConfigError::Parse(_))
        ));
    }

    #[test]
    fn bad_enums_are_rejected() {
        let text = format!("{MINIMAL}\n[features]\nkind = \"mfcc\"\n");
        assert!(matches!(
            RunConfig::from_toml_str(&text),
            Err(ConfigError::Invalid(_))
        ));
        let text = format!("{MINIMAL}\n[channel]\nconcealment = \"extrapolate\"\n");
        assert!(RunConfig::from_toml_str(&text).is_err());
        let text = format!("{MINIMAL}\n[detector]\nkind = \"cnn\"\n");
        assert!(RunConfig::from_toml_str(&text).is_err());
    }

    #[test]
    fn codec_overrides_apply() {
        let text = format!(
            "{MINIMAL}\n[[codec]]\nname = \"OPUS\"\nbitrate_kbps = 24.0\nbandwidth_hz = 6000.0\n"
        );
        let cfg = RunConfig::from_toml_str(&text).unwrap();
        let reg = cfg.registry().unwrap();
        let opus = reg.iter().find(|c| c.name == "OPUS").unwrap();
        assert_eq!(opus.bitrate_kbps, 24.0);
        assert_eq!(opus.bandwidth_hz, 6000.0);
    }

    #[test]
    fn out_of_range_override_fails_validation() {
        let text = format!("{MINIMAL}\n[[codec]]\nname = \"SILK\"\nbitrate_kbps = 500.0\n");
        assert!(matches!(
            RunConfig::from_toml_str(&text),
            Err(ConfigError::Invalid(_))
        ));
    }

    #[test]
    fn gilbert_elliott_needs_params() {
        let text = format!("{MINIMAL}\n[channel]\nloss_model = \"gilbert_elliott\"\n");
        assert!(RunConfig::from_toml_str(&text).is_err());
        let text = format!(
            "{MINIMAL}\n[channel]\nloss_model = \"gilbert_elliott\"\nge_p = 0.05\nge_r = 0.4\n"
        );
        let cfg = RunConfig::from_toml_str(&text).unwrap();
        assert_eq!(cfg.loss_kind().unwrap(), LossKind::GilbertElliott);
    }

    #[test]
    fn identity_codec_resolves() {
        let c = RunConfig::resolve_codec("identity").unwrap();
        assert_eq!(c.index, 0);
        let c = RunConfig::resolve_codec("amr-wb").unwrap();
        assert_eq!(c.index, 1);
        assert!(RunConfig::resolve_codec("g729").is_none());
    }
}
