//! Codec compression round-trips.
//!
//! Two backends: a built-in parametric surrogate (band limiting plus
//! companded quantization, deterministic) and an adapter that shells out to
//! real encoder/decoder executables. Both preserve input length.

use std::path::PathBuf;
use std::process::Command;

use thiserror::Error;

use crate::audio::{clamp_i16, fix_length, normalize_audio, AudioBuffer, PIPELINE_RATE};
use crate::wav;

#[derive(Debug, Error)]
pub enum CodecError {
    #[error("bad codec spec: {0}")]
    BadSpec(String),
    #[error("codec tool not found: {0}")]
    ToolNotFound(String),
    #[error("codec tool failed with {status}: {output}")]
    ToolFailed { status: i32, output: String },
    #[error("codec output unreadable: {0}")]
    OutputUnreadable(String),
    #[error("external backend requires a command template")]
    MissingTemplate,
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CodecBackend {
    Builtin,
    External,
}

/// One codec operating point.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct CodecSpec {
    pub name: String,
    /// 1-6 for the preset registry; 0 for identity/user-defined specs.
    pub index: u8,
    /// Passband edge in Hz; at 8000 Hz (pipeline Nyquist) no filtering occurs.
    pub bandwidth_hz: f64,
    pub bitrate_kbps: f64,
    pub frame_ms: f64,
    pub backend: CodecBackend,
}

/// Published bitrate range per preset, kbps.
const PRESETS: [(&str, u8, f64, f64, (f64, f64)); 6] = [
    ("AMR-WB", 1, 7000.0, 12.65, (6.60, 23.85)),
    ("EVS", 2, 8000.0, 13.2, (5.90, 128.0)),
    ("IVAS", 3, 8000.0, 13.2, (13.20, 512.0)),
    ("OPUS", 4, 8000.0, 16.0, (6.0, 510.0)),
    ("SpeexWB", 5, 7000.0, 11.0, (2.0, 44.0)),
    ("SILK", 6, 8000.0, 12.0, (6.0, 40.0)),
];

/// The six preset codecs at their default operating points, ordered by index.
pub fn default_registry() -> Vec<CodecSpec> {
    PRESETS
        .iter()
        .map(|&(name, index, bw, rate, _)| CodecSpec {
            name: name.to_string(),
            index,
            bandwidth_hz: bw,
            bitrate_kbps: rate,
            frame_ms: 20.0,
            backend: CodecBackend::Builtin,
        })
        .collect()
}

/// Bitrate range for a preset name, if it is one of the six.
pub fn preset_bitrate_range(name: &str) -> Option<(f64, f64)> {
    let key = normalize_name(name);
    PRESETS
        .iter()
        .find(|(n, ..)| normalize_name(n) == key)
        .map(|&(.., range)| range)
}

/// Case/punctuation-insensitive preset lookup ("amr-wb", "speex_wb", ...).
pub fn lookup_preset(name: &str) -> Option<CodecSpec> {
    let key = normalize_name(name);
    default_registry()
        .into_iter()
        .find(|s| normalize_name(&s.name) == key)
}

/// Transparent pass-through spec (bandwidth at Nyquist, bitrate at the
/// quantizer cap).
pub fn identity_spec() -> CodecSpec {
    CodecSpec {
        name: "identity".to_string(),
        index: 0,
        bandwidth_hz: 8000.0,
        bitrate_kbps: 240.0,
        frame_ms: 20.0,
        backend: CodecBackend::Builtin,
    }
}

fn normalize_name(name: &str) -> String {
    name.chars()
        .filter(|c| c.is_ascii_alphanumeric())
        .map(|c| c.to_ascii_lowercase())
        .collect()
}

impl CodecSpec {
    pub fn validate(&self) -> Result<(), CodecError> {
        if self.bandwidth_hz > 8000.0 {
            return Err(CodecError::BadSpec(format!(
                "bandwidth {} Hz exceeds the 8000 Hz pipeline Nyquist",
                self.bandwidth_hz
            )));
        }
        if self.bandwidth_hz <= 0.0 {
            return Err(CodecError::BadSpec("bandwidth must be positive".into()));
        }
        if self.frame_ms <= 0.0 {
            return Err(CodecError::BadSpec("frame_ms must be positive".into()));
        }
        if self.bitrate_kbps <= 0.0 {
            return Err(CodecError::BadSpec("bitrate must be positive".into()));
        }
        if let Some((lo, hi)) = preset_bitrate_range(&self.name) {
            if self.bitrate_kbps < lo || self.bitrate_kbps > hi {
                return Err(CodecError::BadSpec(format!(
                    "{} bitrate {} kbps outside published range {lo}-{hi}",
                    self.name, self.bitrate_kbps
                )));
            }
        }
        Ok(())
    }

    /// Effective bits per sample of the surrogate quantizer.
    pub fn effective_bits(&self) -> f64 {
        let frame_s = self.frame_ms / 1000.0;
        let samples_per_frame = (f64::from(PIPELINE_RATE) * frame_s).round();
        let b = self.bitrate_kbps * 1000.0 * frame_s / samples_per_frame;
        b.clamp(QUANT_BITS_MIN, QUANT_BITS_MAX)
    }
}

const QUANT_BITS_MIN: f64 = 2.0;
/// At the cap the quantizer resolution exceeds what the rest of the 16-bit
/// pipeline can represent, so it is skipped entirely.
const QUANT_BITS_MAX: f64 = 15.0;
const MU: f64 = 255.0;
const LOWPASS_TAPS: usize = 129;

/// Deterministic parametric codec surrogate: linear-phase FIR band limiting
/// (delay compensated) followed by companded quantization.
pub fn simulate_codec(a: &AudioBuffer, spec: &CodecSpec) -> Result<AudioBuffer, CodecError> {
    spec.validate()?;
    let x = a.to_f64();

    let filtered = if spec.bandwidth_hz >= 8000.0 {
        x
    } else {
        fir_lowpass(&x, spec.bandwidth_hz)
    };

    let b = spec.effective_bits();
    let out: Vec<i16> = if b >= QUANT_BITS_MAX {
        filtered.iter().map(|&v| clamp_i16(v)).collect()
    } else {
        let step = (1.0 - b).exp2();
        filtered
            .iter()
            .map(|&v| clamp_i16(mu_law_quantize(v, step)))
            .collect()
    };

    Ok(AudioBuffer::new(out, a.sample_rate))
}

/// Compress toward zero through the mu-law curve. Truncating (rather than
/// rounding) the companded magnitude keeps |output| <= |input| per sample.
fn mu_law_quantize(x: f64, step: f64) -> f64 {
    let mag = x.abs().min(1.0);
    let companded = (1.0 + MU * mag).ln() / (1.0 + MU).ln();
    let quantized = (companded / step).floor() * step;
    let expanded = ((1.0 + MU).powf(quantized) - 1.0) / MU;
    expanded.copysign(x)
}

/// Zero-phase band limiting: odd-length Hamming-windowed sinc, output
/// aligned with input by centering the kernel.
fn fir_lowpass(x: &[f64], cutoff_hz: f64) -> Vec<f64> {
    let taps = design_lowpass(cutoff_hz, LOWPASS_TAPS);
    let half = LOWPASS_TAPS as i64 / 2;
    let n = x.len() as i64;
    let mut out = Vec::with_capacity(x.len());
    for i in 0..n {
        let mut acc = 0.0;
        for (j, &h) in taps.iter().enumerate() {
            let k = i + j as i64 - half;
            if (0..n).contains(&k) {
                acc += h * x[k as usize];
            }
        }
        out.push(acc);
    }
    out
}

fn design_lowpass(cutoff_hz: f64, n_taps: usize) -> Vec<f64> {
    let fc = cutoff_hz / f64::from(PIPELINE_RATE); // cycles per sample
    let mid = (n_taps - 1) as f64 / 2.0;
    let mut taps: Vec<f64> = (0..n_taps)
        .map(|i| {
            let t = i as f64 - mid;
            let sinc = if t.abs() < 1e-12 {
                2.0 * fc
            } else {
                (2.0 * std::f64::consts::PI * fc * t).sin() / (std::f64::consts::PI * t)
            };
            let w = 0.54
                - 0.46 * (2.0 * std::f64::consts::PI * i as f64 / (n_taps - 1) as f64).cos();
            sinc * w
        })
        .collect();
    let sum: f64 = taps.iter().sum();
    for t in &mut taps {
        *t /= sum;
    }
    taps
}

/// Command templates for an out-of-process codec. `{in}` and `{out}` must
/// appear exactly once each; `{bitrate}` is optional.
#[derive(Debug, Clone, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct ExternalCodecTemplate {
    pub encode_cmd: String,
    pub decode_cmd: String,
    pub work_dir: PathBuf,
}

impl ExternalCodecTemplate {
    pub fn validate(&self) -> Result<(), CodecError> {
        for (tag, cmd) in [("encode_cmd", &self.encode_cmd), ("decode_cmd", &self.decode_cmd)] {
            for ph in ["{in}", "{out}"] {
                if cmd.matches(ph).count() != 1 {
                    return Err(CodecError::BadSpec(format!(
                        "{tag} must contain {ph} exactly once"
                    )));
                }
            }
        }
        Ok(())
    }
}

/// Encode-then-decode through external executables, then re-normalize and
/// length-align to the input. Scratch file names carry `item_tag`, so
/// concurrent invocations with distinct tags never collide.
pub fn external_codec_roundtrip(
    a: &AudioBuffer,
    spec: &CodecSpec,
    tmpl: &ExternalCodecTemplate,
    item_tag: &str,
) -> Result<AudioBuffer, CodecError> {
    tmpl.validate()?;
    std::fs::create_dir_all(&tmpl.work_dir)?;
    let safe_tag: String = item_tag
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() { c } else { '_' })
        .collect();
    let in_path = tmpl.work_dir.join(format!("addbench_{safe_tag}_in.wav"));
    let coded_path = tmpl.work_dir.join(format!("addbench_{safe_tag}_coded.bin"));
    let out_path = tmpl.work_dir.join(format!("addbench_{safe_tag}_out.wav"));

    wav::write_wav_mono16(&in_path, &a.samples, a.sample_rate)?;
    let result = (|| {
        run_tool(&tmpl.encode_cmd, &in_path, &coded_path, spec.bitrate_kbps)?;
        run_tool(&tmpl.decode_cmd, &coded_path, &out_path, spec.bitrate_kbps)?;
        let raw = wav::read_wav(&out_path)
            .map_err(|e| CodecError::OutputUnreadable(e.to_string()))?
            .map_err(|e| CodecError::OutputUnreadable(e.to_string()))?;
        let normalized =
            normalize_audio(&raw).map_err(|e| CodecError::OutputUnreadable(e.to_string()))?;
        Ok(fix_length(&normalized, a.len()))
    })();
    for p in [&in_path, &coded_path, &out_path] {
        let _ = std::fs::remove_file(p);
    }
    result
}

/// Search-path override for external codec executables.
pub const CODEC_PATH_ENV: &str = "ADDBENCH_CODEC_PATH";

fn run_tool(
    template: &str,
    input: &std::path::Path,
    output: &std::path::Path,
    bitrate_kbps: f64,
) -> Result<(), CodecError> {
    let tokens: Vec<String> = template
        .split_whitespace()
        .map(|t| {
            t.replace("{in}", &input.to_string_lossy())
                .replace("{out}", &output.to_string_lossy())
                .replace("{bitrate}", &format!("{bitrate_kbps}"))
        })
        .collect();
    let (program, args) = tokens
        .split_first()
        .ok_or_else(|| CodecError::BadSpec("empty command template".into()))?;

    let mut cmd = Command::new(program);
    cmd.args(args);
    if let Ok(extra) = std::env::var(CODEC_PATH_ENV) {
        let path = std::env::var("PATH").unwrap_or_default();
        cmd.env("PATH", format!("{extra}:{path}"));
    }
    let out = cmd.output().map_err(|e| {
        if e.kind() == std::io::ErrorKind::NotFound {
            CodecError::ToolNotFound(program.clone())
        } else {
            CodecError::Io(e)
        }
    })?;
    if !out.status.success() {
        let mut text = String::from_utf8_lossy(&out.stderr).into_owned();
        text.push_str(&String::from_utf8_lossy(&out.stdout));
        return Err(CodecError::ToolFailed {
            status: out.status.code().unwrap_or(-1),
            output: text.chars().take(500).collect(),
        });
    }
    Ok(())
}

/// Backend dispatch. Output always has the input's length.
pub fn apply_codec(
    a: &AudioBuffer,
    spec: &CodecSpec,
    tmpl: Option<&ExternalCodecTemplate>,
    item_tag: &str,
) -> Result<AudioBuffer, CodecError> {
    match spec.backend {
        CodecBackend::Builtin => simulate_codec(a, spec),
        CodecBackend::External => {
            let tmpl = tmpl.ok_or(CodecError::MissingTemplate)?;
            external_codec_roundtrip(a, spec, tmpl, item_tag)
        }
    }
}
