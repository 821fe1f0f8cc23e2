//! Synthetic demo corpus: two acoustically distinct signal families stand
//! in for bonafide and fake speech so the full pipeline runs with zero
//! external data.
//!
//! Bonafide utterances are harmonic stacks with a steep spectral tilt and a
//! faint noise floor. Fake utterances share the harmonic body but carry
//! synthesis-artifact stand-ins: a flatter tilt, a high-band noise patch
//! and low-rate amplitude modulation. The artifact cues live in fine
//! spectral detail, so codec compression and packet loss erode them.

use std::path::Path;

use rayon::prelude::*;

use crate::audio::{clamp_i16, AudioBuffer, FIXED_SAMPLES, PIPELINE_RATE};
use crate::corpus::{Label, Manifest, Utterance};
use crate::datasetgen::DatasetError;
use crate::seed::{derive_seed, SplitMix};
use crate::wav;

pub const FAKE_ALGORITHMS: [&str; 3] = ["tts_a", "tts_b", "vc_c"];

#[derive(Debug, Clone)]
pub struct DemoSpec {
    /// Total utterances; split evenly between the classes.
    pub count: usize,
    pub seed: u64,
    /// Source dataset tags; utterances are dealt round-robin across them.
    pub tags: Vec<String>,
}

impl Default for DemoSpec {
    fn default() -> Self {
        Self {
            count: 40,
            seed: 1,
            tags: vec!["demo".to_string()],
        }
    }
}

struct FamilyParams {
    /// Fundamental range; the class ranges overlap, so pitch alone never
    /// fully separates them.
    f0_lo: f64,
    f0_hi: f64,
    tilt: f64,
    high_band_level: f64,
    am_depth: f64,
    noise_floor: f64,
}

fn family(label: Label, algorithm: usize) -> FamilyParams {
    match label {
        Label::Bonafide => FamilyParams {
            f0_lo: 115.0,
            f0_hi: 185.0,
            tilt: 1.1,
            high_band_level: 0.0,
            am_depth: 0.0,
            noise_floor: 0.004,
        },
        Label::Fake => {
            let base = FamilyParams {
                f0_lo: 150.0,
                f0_hi: 235.0,
                tilt: 0.8,
                high_band_level: 0.0,
                am_depth: 0.0,
                noise_floor: 0.004,
            };
            match algorithm % FAKE_ALGORITHMS.len() {
                0 => FamilyParams {
                    high_band_level: 0.09,
                    ..base
                },
                1 => FamilyParams {
                    tilt: 0.75,
                    am_depth: 0.35,
                    noise_floor: 0.010,
                    ..base
                },
                _ => FamilyParams {
                    tilt: 0.85,
                    high_band_level: 0.06,
                    am_depth: 0.25,
                    noise_floor: 0.007,
                    ..base
                },
            }
        }
    }
}

/// Deterministically synthesize one 4-second utterance.
pub fn synth_utterance(label: Label, algorithm: usize, seed: u64) -> AudioBuffer {
    let mut rng = SplitMix::new(seed);
    let p = family(label, algorithm);

    let f0 = p.f0_lo + rng.next_unit() * (p.f0_hi - p.f0_lo);
    let n_harm = ((6500.0 / f0) as usize).max(3);
    let harmonics: Vec<(f64, f64, f64)> = (1..=n_harm)
        .map(|h| {
            let freq = f0 * h as f64;
            let amp = 1.0 / (h as f64).powf(p.tilt);
            let phase = rng.next_unit() * 2.0 * std::f64::consts::PI;
            (freq, amp, phase)
        })
        .collect();
    let norm: f64 = harmonics.iter().map(|(_, a, _)| a).sum();

    // Slow vibrato keeps frames from being identical.
    let vib_rate = 4.0 + rng.next_unit() * 2.0;
    let vib_depth = 0.002 + rng.next_unit() * 0.002;
    let am_rate = 55.0 + rng.next_unit() * 15.0;
    let am_phase = rng.next_unit() * 2.0 * std::f64::consts::PI;

    // High-band artifact: narrowband noise around a per-utterance center.
    let hb_center = 6600.0 + rng.next_unit() * 800.0;
    let hb_width = 250.0;
    let hb_tones: Vec<(f64, f64)> = (0..12)
        .map(|_| {
            let f = hb_center + (rng.next_unit() - 0.5) * 2.0 * hb_width;
            let phase = rng.next_unit() * 2.0 * std::f64::consts::PI;
            (f, phase)
        })
        .collect();

    let noise_seed = rng.next_u64();
    let mut noise_rng = SplitMix::new(noise_seed);

    let sr = f64::from(PIPELINE_RATE);
    let two_pi = 2.0 * std::f64::consts::PI;
    let samples: Vec<i16> = (0..FIXED_SAMPLES)
        .map(|i| {
            let t = i as f64 / sr;
            let vibrato = 1.0 + vib_depth * (two_pi * vib_rate * t).sin();
            let mut v = 0.0;
            for &(freq, amp, phase) in &harmonics {
                v += amp * (two_pi * freq * vibrato * t + phase).sin();
            }
            v /= norm;
            if p.am_depth > 0.0 {
                v *= 1.0 + p.am_depth * (two_pi * am_rate * t + am_phase).sin();
            }
            if p.high_band_level > 0.0 {
                let mut hb = 0.0;
                for &(f, phase) in &hb_tones {
                    hb += (two_pi * f * t + phase).sin();
                }
                v += p.high_band_level * hb / hb_tones.len() as f64;
            }
            v += p.noise_floor * (2.0 * noise_rng.next_unit() - 1.0);
            // Gentle fade at both ends.
            let edge = 400.0;
            let fade_in = (i as f64 / edge).min(1.0);
            let fade_out = ((FIXED_SAMPLES - 1 - i) as f64 / edge).min(1.0);
            clamp_i16(0.45 * v * fade_in * fade_out)
        })
        .collect();
    AudioBuffer::new(samples, PIPELINE_RATE)
}

/// The manifest rows of a demo corpus, without audio.
pub fn demo_entries(spec: &DemoSpec, dir: &Path) -> Vec<Utterance> {
    let half = spec.count / 2;
    let mut entries = Vec::with_capacity(spec.count);
    for (label, prefix, n) in [
        (Label::Bonafide, "bona", half),
        (Label::Fake, "fake", spec.count - half),
    ] {
        for i in 0..n {
            let id = format!("demo_{prefix}_{i:05}");
            let tag = spec.tags[i % spec.tags.len()].clone();
            let algorithm = match label {
                Label::Bonafide => None,
                Label::Fake => Some(FAKE_ALGORITHMS[i % FAKE_ALGORITHMS.len()].to_string()),
            };
            entries.push(Utterance {
                id: id.clone(),
                label,
                source_dataset: tag,
                algorithm,
                path: dir.join(format!("{id}.wav")),
            });
        }
    }
    entries
}

pub fn algorithm_index(algorithm: Option<&str>) -> usize {
    algorithm
        .and_then(|a| FAKE_ALGORITHMS.iter().position(|x| *x == a))
        .unwrap_or(0)
}

/// Audio for one demo entry, derived purely from the corpus seed and id.
pub fn demo_audio(spec_seed: u64, u: &Utterance) -> AudioBuffer {
    let item_seed = derive_seed(spec_seed, &u.id, 0, 0);
    synth_utterance(u.label, algorithm_index(u.algorithm.as_deref()), item_seed)
}

/// Write WAV files plus `manifest.csv` under `dir`.
pub fn generate_demo_corpus(dir: &Path, spec: &DemoSpec) -> Result<Manifest, DatasetError> {
    std::fs::create_dir_all(dir)?;
    let entries = demo_entries(spec, dir);
    entries
        .par_iter()
        .try_for_each(|u| -> Result<(), DatasetError> {
            let audio = demo_audio(spec.seed, u);
            wav::write_wav_mono16(&u.path, &audio.samples, audio.sample_rate)?;
            Ok(())
        })?;
    let manifest = Manifest::from_entries(entries)?;
    manifest.save(&dir.join("manifest.csv"))?;
    Ok(manifest)
}
