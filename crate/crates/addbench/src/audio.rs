//! Mono 16 kHz PCM buffers and format normalization.

use thiserror::Error;

use crate::wav::RawAudio;

/// Pipeline-internal sample rate.
pub const PIPELINE_RATE: u32 = 16_000;
/// Fixed utterance length: 4 seconds at the pipeline rate.
pub const FIXED_SAMPLES: usize = 64_000;

/// Half-width of the band-limited resampling kernel, in input samples.
const RESAMPLE_HALF_WIDTH: usize = 32;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum AudioError {
    #[error("audio has no samples")]
    EmptyAudio,
    #[error("unsupported sample rate {0}")]
    UnsupportedRate(u32),
}

/// Mono PCM at a known rate. Samples are 16-bit integers, interpreted as
/// amplitudes in [-1, 1) wherever the pipeline does arithmetic on them.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AudioBuffer {
    pub samples: Vec<i16>,
    pub sample_rate: u32,
}

impl AudioBuffer {
    pub fn new(samples: Vec<i16>, sample_rate: u32) -> Self {
        Self {
            samples,
            sample_rate,
        }
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Amplitudes as f64 in [-1, 1).
    pub fn to_f64(&self) -> Vec<f64> {
        self.samples.iter().map(|&s| f64::from(s) / 32768.0).collect()
    }

    /// Quantize amplitudes back to 16-bit, clamping to range.
    pub fn from_f64(amplitudes: &[f64], sample_rate: u32) -> Self {
        let samples = amplitudes.iter().map(|&x| clamp_i16(x)).collect();
        Self {
            samples,
            sample_rate,
        }
    }
}

pub fn clamp_i16(amplitude: f64) -> i16 {
    let v = (amplitude * 32768.0).round();
    v.clamp(-32768.0, 32767.0) as i16
}

/// Collapse to mono, resample to 16 kHz and clamp to 16-bit range.
///
/// The identity path (mono 16 kHz input) is bit-exact, which also makes the
/// operation idempotent.
pub fn normalize_audio(raw: &RawAudio) -> Result<AudioBuffer, AudioError> {
    if raw.sample_rate == 0 {
        return Err(AudioError::UnsupportedRate(raw.sample_rate));
    }
    if raw.samples.is_empty() || raw.channels == 0 {
        return Err(AudioError::EmptyAudio);
    }

    let ch = raw.channels as usize;
    let frames = raw.frame_count();
    let mut mono = Vec::with_capacity(frames);
    for f in 0..frames {
        let mut acc = 0.0f64;
        for c in 0..ch {
            acc += f64::from(raw.samples[f * ch + c]);
        }
        mono.push(acc / ch as f64);
    }

    let resampled = if raw.sample_rate == PIPELINE_RATE {
        mono
    } else {
        resample(&mono, raw.sample_rate, PIPELINE_RATE)
    };

    Ok(AudioBuffer {
        samples: resampled.iter().map(|&x| clamp_i16(x)).collect(),
        sample_rate: PIPELINE_RATE,
    })
}

/// Windowed-sinc band-limited interpolation with a fixed half-width kernel.
fn resample(input: &[f64], rate_in: u32, rate_out: u32) -> Vec<f64> {
    let n_out = (input.len() as f64 * f64::from(rate_out) / f64::from(rate_in)).round() as usize;
    let step = f64::from(rate_in) / f64::from(rate_out);
    // Cutoff at the lower of the two Nyquist frequencies.
    let scale = (f64::from(rate_out) / f64::from(rate_in)).min(1.0);
    let hw = RESAMPLE_HALF_WIDTH as f64;

    let mut out = Vec::with_capacity(n_out);
    for n in 0..n_out {
        let pos = n as f64 * step;
        let k_lo = (pos - hw).ceil() as i64;
        let k_hi = (pos + hw).floor() as i64;
        let mut acc = 0.0;
        let mut norm = 0.0;
        for k in k_lo..=k_hi {
            let t = pos - k as f64;
            let w = 0.5 * (1.0 + (std::f64::consts::PI * t / hw).cos());
            let h = scale * sinc(scale * t) * w;
            norm += h;
            if (0..input.len() as i64).contains(&k) {
                acc += h * input[k as usize];
            }
        }
        out.push(if norm.abs() > 1e-12 { acc / norm } else { 0.0 });
    }
    out
}

fn sinc(t: f64) -> f64 {
    if t.abs() < 1e-12 {
        1.0
    } else {
        let x = std::f64::consts::PI * t;
        x.sin() / x
    }
}

/// Force a buffer to exactly `target` samples: truncate the tail of longer
/// inputs, zero-pad the tail of shorter ones. Empty input yields silence.
pub fn fix_length(a: &AudioBuffer, target: usize) -> AudioBuffer {
    let mut samples = a.samples.clone();
    samples.resize(target, 0);
    AudioBuffer {
        samples,
        sample_rate: a.sample_rate,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn raw_mono(samples: Vec<i16>, rate: u32) -> RawAudio {
        RawAudio {
            channels: 1,
            sample_rate: rate,
            samples: samples.iter().map(|&v| f32::from(v) / 32768.0).collect(),
        }
    }

    #[test]
    fn identity_path_is_bit_exact() {
        let samples: Vec<i16> = (0..64_000).map(|i| ((i * 37) % 4001) as i16 - 2000).collect();
        let out = normalize_audio(&raw_mono(samples.clone(), 16_000)).unwrap();
        assert_eq!(out.samples, samples);
        assert_eq!(out.sample_rate, 16_000);
    }

    #[test]
    fn opposite_stereo_channels_cancel() {
        let mut interleaved = Vec::new();
        for i in 0..1000i32 {
            let v = ((i * 13) % 3000 - 1500) as f32 / 32768.0;
            interleaved.push(v);
            interleaved.push(-v);
        }
        let raw = RawAudio {
            channels: 2,
            sample_rate: 16_000,
            samples: interleaved,
        };
        let out = normalize_audio(&raw).unwrap();
        assert!(out.samples.iter().all(|&s| s == 0));
    }

    #[test]
    fn downsample_48k_length() {
        // Independent length oracle: round(n_in * 16000 / 48000).
        let n_in = 48_000usize;
        let expected = (n_in as f64 * 16_000.0 / 48_000.0).round() as i64;
        let samples: Vec<i16> = (0..n_in).map(|i| (i % 700) as i16).collect();
        let out = normalize_audio(&raw_mono(samples, 48_000)).unwrap();
        let got = out.samples.len() as i64;
        assert!((got - expected).abs() <= 1, "len {got} vs {expected}");
    }

    #[test]
    fn upsample_length() {
        let samples: Vec<i16> = vec![100; 8000];
        let out = normalize_audio(&raw_mono(samples, 8_000)).unwrap();
        let got = out.samples.len() as i64;
        assert!((got - 16_000).abs() <= 1);
    }

    #[test]
    fn downsampled_sine_tracks_ideal() {
        // 1 kHz tone at 48 kHz should come out close to a 1 kHz tone at 16 kHz.
        let n_in = 48_000;
        let raw = RawAudio {
            channels: 1,
            sample_rate: 48_000,
            samples: (0..n_in)
                .map(|i| {
                    (0.5 * (2.0 * std::f64::consts::PI * 1000.0 * i as f64 / 48_000.0).sin())
                        as f32
                })
                .collect(),
        };
        let out = normalize_audio(&raw).unwrap();
        let amps = out.to_f64();
        let mut err = 0.0f64;
        let mut pow = 0.0f64;
        // Skip edges where the kernel is truncated.
        for n in 100..amps.len() - 100 {
            let ideal = 0.5 * (2.0 * std::f64::consts::PI * 1000.0 * n as f64 / 16_000.0).sin();
            err += (amps[n] - ideal).powi(2);
            pow += ideal.powi(2);
        }
        assert!(err / pow < 1e-3, "relative error {}", err / pow);
    }

    #[test]
    fn normalize_is_idempotent() {
        let samples: Vec<i16> = (0..5000).map(|i| ((i * 91) % 9001) as i16 - 4500).collect();
        let once = normalize_audio(&raw_mono(samples, 22_050)).unwrap();
        let again = normalize_audio(&RawAudio {
            channels: 1,
            sample_rate: once.sample_rate,
            samples: once.samples.iter().map(|&v| f32::from(v) / 32768.0).collect(),
        })
        .unwrap();
        assert_eq!(once, again);
    }

    #[test]
    fn empty_and_zero_rate_are_rejected() {
        let empty = RawAudio {
            channels: 1,
            sample_rate: 16_000,
            samples: vec![],
        };
        assert_eq!(normalize_audio(&empty), Err(AudioError::EmptyAudio));
        let zero_rate = RawAudio {
            channels: 1,
            sample_rate: 0,
            samples: vec![0.1],
        };
        assert_eq!(normalize_audio(&zero_rate), Err(AudioError::UnsupportedRate(0)));
    }

    #[test]
    fn fix_length_exact_pad_truncate() {
        let a = AudioBuffer::new((0..64_000).map(|i| i as i16).collect(), 16_000);
        assert_eq!(fix_length(&a, 64_000), a);

        let short = AudioBuffer::new((0..48_000).map(|i| (i % 99) as i16 + 1).collect(), 16_000);
        let padded = fix_length(&short, 64_000);
        assert_eq!(padded.len(), 64_000);
        assert_eq!(&padded.samples[..48_000], &short.samples[..]);
        assert!(padded.samples[48_000..].iter().all(|&s| s == 0));

        let long = AudioBuffer::new((0..80_000).map(|i| (i % 99) as i16).collect(), 16_000);
        let cut = fix_length(&long, 64_000);
        assert_eq!(cut.len(), 64_000);
        assert_eq!(&cut.samples[..], &long.samples[..64_000]);

        let empty = AudioBuffer::new(vec![], 16_000);
        let silent = fix_length(&empty, 64_000);
        assert!(silent.samples.iter().all(|&s| s == 0));
        assert_eq!(silent.len(), 64_000);
    }
}
