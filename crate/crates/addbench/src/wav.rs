//! RIFF/WAVE PCM reading and writing.
//!
//! The reader accepts integer PCM at 8, 16 or 24 bits, one or two channels,
//! any sample rate. Unknown chunks are skipped. The writer always emits
//! 16-bit mono; pipeline-internal files are 16 kHz.

use std::io::{Read, Write};
use std::path::Path;

use thiserror::Error;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum WavError {
    #[error("file too small for a RIFF header")]
    TooSmall,
    #[error("missing RIFF magic")]
    MissingRiff,
    #[error("missing WAVE marker")]
    MissingWave,
    #[error("truncated chunk {0}")]
    TruncatedChunk(String),
    #[error("unsupported format code {0}, only integer PCM is accepted")]
    UnsupportedFormat(u16),
    #[error("unsupported bit depth {0}, expected 8, 16 or 24")]
    UnsupportedBits(u16),
    #[error("unsupported channel count {0}, expected 1 or 2")]
    UnsupportedChannels(u16),
    #[error("sample rate must be positive")]
    ZeroRate,
    #[error("no fmt chunk before data")]
    NoFmtChunk,
    #[error("no data chunk")]
    NoDataChunk,
}

/// Decoded PCM prior to normalization: amplitudes in [-1, 1), one Vec per
/// channel position in interleaved order.
#[derive(Debug, Clone, PartialEq)]
pub struct RawAudio {
    pub channels: u16,
    pub sample_rate: u32,
    /// Interleaved frames, `channels * frame_count` values.
    pub samples: Vec<f32>,
}

impl RawAudio {
    pub fn frame_count(&self) -> usize {
        if self.channels == 0 {
            0
        } else {
            self.samples.len() / self.channels as usize
        }
    }
}

const FORMAT_PCM: u16 = 1;

fn read_u16(b: &[u8], at: usize) -> Option<u16> {
    Some(u16::from_le_bytes(b.get(at..at + 2)?.try_into().ok()?))
}

fn read_u32(b: &[u8], at: usize) -> Option<u32> {
    Some(u32::from_le_bytes(b.get(at..at + 4)?.try_into().ok()?))
}

/// Parse a RIFF/WAVE byte buffer.
pub fn decode_wav(bytes: &[u8]) -> Result<RawAudio, WavError> {
    if bytes.len() < 12 {
        return Err(WavError::TooSmall);
    }
    if &bytes[0..4] != b"RIFF" {
        return Err(WavError::MissingRiff);
    }
    if &bytes[8..12] != b"WAVE" {
        return Err(WavError::MissingWave);
    }

    let mut pos = 12usize;
    let mut fmt: Option<(u16, u16, u32, u16)> = None; // format, channels, rate, bits
    let mut data: Option<&[u8]> = None;

    while pos + 8 <= bytes.len() {
        let id = &bytes[pos..pos + 4];
        let size = read_u32(bytes, pos + 4).ok_or(WavError::TooSmall)? as usize;
        let body_start = pos + 8;
        let body_end = body_start.checked_add(size).ok_or(WavError::TooSmall)?;
        if body_end > bytes.len() {
            let name = String::from_utf8_lossy(id).into_owned();
            return Err(WavError::TruncatedChunk(name));
        }
        let body = &bytes[body_start..body_end];
        match id {
            b"fmt " => {
                if size < 16 {
                    return Err(WavError::TruncatedChunk("fmt ".into()));
                }
                let format = read_u16(body, 0).unwrap();
                let channels = read_u16(body, 2).unwrap();
                let rate = read_u32(body, 4).unwrap();
                let bits = read_u16(body, 14).unwrap();
                fmt = Some((format, channels, rate, bits));
            }
            b"data" => {
                data = Some(body);
                break;
            }
            _ => {}
        }
        // Chunks are word-aligned; odd sizes carry a pad byte.
        pos = body_end + (size & 1);
    }

    let (format, channels, rate, bits) = fmt.ok_or(WavError::NoFmtChunk)?;
    if format != FORMAT_PCM {
        return Err(WavError::UnsupportedFormat(format));
    }
    if !(1..=2).contains(&channels) {
        return Err(WavError::UnsupportedChannels(channels));
    }
    if rate == 0 {
        return Err(WavError::ZeroRate);
    }
    let data = data.ok_or(WavError::NoDataChunk)?;

    let bytes_per = match bits {
        8 => 1,
        16 => 2,
        24 => 3,
        other => return Err(WavError::UnsupportedBits(other)),
    };
    let frame_bytes = bytes_per * channels as usize;
    let n_frames = data.len() / frame_bytes;
    let mut samples = Vec::with_capacity(n_frames * channels as usize);
    for f in 0..n_frames {
        for c in 0..channels as usize {
            let at = f * frame_bytes + c * bytes_per;
            let v = match bits {
                8 => (f32::from(data[at]) - 128.0) / 128.0,
                16 => f32::from(i16::from_le_bytes([data[at], data[at + 1]])) / 32768.0,
                24 => {
                    let raw =
                        i32::from_le_bytes([0, data[at], data[at + 1], data[at + 2]]) >> 8;
                    raw as f32 / 8_388_608.0
                }
                _ => unreachable!(),
            };
            samples.push(v);
        }
    }
    Ok(RawAudio {
        channels,
        sample_rate: rate,
        samples,
    })
}

pub fn read_wav(path: &Path) -> std::io::Result<Result<RawAudio, WavError>> {
    let mut bytes = Vec::new();
    std::fs::File::open(path)?.read_to_end(&mut bytes)?;
    Ok(decode_wav(&bytes))
}

/// Serialize 16-bit mono PCM.
pub fn encode_wav_mono16(samples: &[i16], sample_rate: u32) -> Vec<u8> {
    let data_len = samples.len() * 2;
    let mut out = Vec::with_capacity(44 + data_len);
    out.extend_from_slice(b"RIFF");
    out.extend_from_slice(&(36 + data_len as u32).to_le_bytes());
    out.extend_from_slice(b"WAVE");
    out.extend_from_slice(b"fmt ");
    out.extend_from_slice(&16u32.to_le_bytes());
    out.extend_from_slice(&FORMAT_PCM.to_le_bytes());
    out.extend_from_slice(&1u16.to_le_bytes()); // mono
    out.extend_from_slice(&sample_rate.to_le_bytes());
    out.extend_from_slice(&(sample_rate * 2).to_le_bytes()); // byte rate
    out.extend_from_slice(&2u16.to_le_bytes()); // block align
    out.extend_from_slice(&16u16.to_le_bytes()); // bits
    out.extend_from_slice(b"data");
    out.extend_from_slice(&(data_len as u32).to_le_bytes());
    for s in samples {
        out.extend_from_slice(&s.to_le_bytes());
    }
    out
}

pub fn write_wav_mono16(path: &Path, samples: &[i16], sample_rate: u32) -> std::io::Result<()> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent)?;
    }
    let bytes = encode_wav_mono16(samples, sample_rate);
    let mut f = std::fs::File::create(path)?;
    f.write_all(&bytes)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn roundtrip_mono16() {
        let samples: Vec<i16> = vec![0, 1, -1, 32767, -32768, 100];
        let bytes = encode_wav_mono16(&samples, 16000);
        let raw = decode_wav(&bytes).unwrap();
        assert_eq!(raw.channels, 1);
        assert_eq!(raw.sample_rate, 16000);
        let back: Vec<i16> = raw
            .samples
            .iter()
            .map(|&v| (v * 32768.0).round() as i16)
            .collect();
        assert_eq!(back, samples);
    }

    #[test]
    fn rejects_garbage() {
        assert_eq!(decode_wav(b"xx"), Err(WavError::TooSmall));
        assert_eq!(
            decode_wav(b"RIFX\x00\x00\x00\x00WAVE"),
            Err(WavError::MissingRiff)
        );
        assert_eq!(
            decode_wav(b"RIFF\x00\x00\x00\x00WAVX"),
            Err(WavError::MissingWave)
        );
    }

    #[test]
    fn rejects_truncated_data_chunk() {
        let samples: Vec<i16> = vec![1, 2, 3, 4];
        let mut bytes = encode_wav_mono16(&samples, 8000);
        bytes.truncate(bytes.len() - 3);
        assert_eq!(
            decode_wav(&bytes),
            Err(WavError::TruncatedChunk("data".into()))
        );
    }

    #[test]
    fn skips_unknown_chunks() {
        let samples: Vec<i16> = vec![5, -5];
        let body = encode_wav_mono16(&samples, 44100);
        // Splice a LIST chunk between fmt and data.
        let mut bytes = body[..36].to_vec();
        bytes.extend_from_slice(b"LIST");
        bytes.extend_from_slice(&3u32.to_le_bytes());
        bytes.extend_from_slice(b"abc\x00"); // odd size plus pad byte
        bytes.extend_from_slice(&body[36..]);
        let total = bytes.len() as u32 - 8;
        bytes[4..8].copy_from_slice(&total.to_le_bytes());
        let raw = decode_wav(&bytes).unwrap();
        assert_eq!(raw.samples.len(), 2);
    }

    #[test]
    fn decodes_stereo_8bit() {
        let mut bytes = Vec::new();
        bytes.extend_from_slice(b"RIFF");
        bytes.extend_from_slice(&(36u32 + 4).to_le_bytes());
        bytes.extend_from_slice(b"WAVE");
        bytes.extend_from_slice(b"fmt ");
        bytes.extend_from_slice(&16u32.to_le_bytes());
        bytes.extend_from_slice(&1u16.to_le_bytes());
        bytes.extend_from_slice(&2u16.to_le_bytes());
        bytes.extend_from_slice(&8000u32.to_le_bytes());
        bytes.extend_from_slice(&16000u32.to_le_bytes());
        bytes.extend_from_slice(&2u16.to_le_bytes());
        bytes.extend_from_slice(&8u16.to_le_bytes());
        bytes.extend_from_slice(b"data");
        bytes.extend_from_slice(&4u32.to_le_bytes());
        bytes.extend_from_slice(&[128, 128, 255, 0]);
        let raw = decode_wav(&bytes).unwrap();
        assert_eq!(raw.channels, 2);
        assert_eq!(raw.frame_count(), 2);
        assert_eq!(raw.samples[0], 0.0);
        assert_eq!(raw.samples[1], 0.0);
        assert!((raw.samples[2] - 127.0 / 128.0).abs() < 1e-6);
        assert_eq!(raw.samples[3], -1.0);
    }
}
