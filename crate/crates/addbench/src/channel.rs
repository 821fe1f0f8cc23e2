//! Packet-based transmission simulation: framing, loss and concealment.

use thiserror::Error;

use crate::audio::AudioBuffer;
use crate::codec::{apply_codec, CodecError, CodecSpec, ExternalCodecTemplate};
use crate::seed::{unit_draw, SplitMix};

#[derive(Debug, Error)]
pub enum ChannelError {
    #[error("frame duration must be positive, got {0} ms")]
    BadFrame(f64),
    #[error("bad loss parameters: {0}")]
    BadParams(String),
    #[error("packet stream carries no loss mask")]
    NoMask,
    #[error(transparent)]
    Codec(#[from] CodecError),
}

/// Audio split into fixed-size packets. The last packet is zero-padded;
/// `tail_pad` records how many padding samples to strip on reassembly.
#[derive(Debug, Clone, PartialEq)]
pub struct PacketStream {
    pub packets: Vec<Vec<i16>>,
    pub packet_samples: usize,
    pub tail_pad: usize,
    pub loss_mask: Option<Vec<bool>>,
}

impl PacketStream {
    /// Length of the original, pre-padding signal.
    pub fn original_len(&self) -> usize {
        self.packets.len() * self.packet_samples - self.tail_pad
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossKind {
    Bernoulli,
    GilbertElliott,
}

/// Paper-faithful packet loss rates, one per condition C1..C5.
pub const FAITHFUL_PLRS: [f64; 5] = [0.0, 0.01, 0.05, 0.10, 0.20];

#[derive(Debug, Clone, PartialEq)]
pub struct LossModel {
    pub kind: LossKind,
    pub plr: f64,
    /// (p_good_to_bad, p_bad_to_good), used by the Gilbert-Elliott chain.
    pub ge_params: Option<(f64, f64)>,
    pub seed: u64,
}

impl LossModel {
    pub fn bernoulli(plr: f64, seed: u64) -> Self {
        Self {
            kind: LossKind::Bernoulli,
            plr,
            ge_params: None,
            seed,
        }
    }

    pub fn gilbert_elliott(plr: f64, p: f64, r: f64, seed: u64) -> Self {
        Self {
            kind: LossKind::GilbertElliott,
            plr,
            ge_params: Some((p, r)),
            seed,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Concealment {
    ZeroFill,
    RepeatPrevious,
    LinearInterp,
}

/// The degradation applied to one utterance: which codec and which loss.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelCondition {
    pub codec: CodecSpec,
    pub loss: LossModel,
    pub concealment: Concealment,
}

/// PLR for condition index n in 1..=5.
pub fn plr_for_condition(n: usize) -> Option<f64> {
    (1..=5).contains(&n).then(|| FAITHFUL_PLRS[n - 1])
}

/// Evaluation condition: clean (C0) or one of the five communication
/// conditions C1..C5.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, serde::Serialize, serde::Deserialize)]
pub enum ConditionTag {
    C0,
    C1,
    C2,
    C3,
    C4,
    C5,
}

impl ConditionTag {
    pub const ALL: [ConditionTag; 6] = [
        ConditionTag::C0,
        ConditionTag::C1,
        ConditionTag::C2,
        ConditionTag::C3,
        ConditionTag::C4,
        ConditionTag::C5,
    ];

    pub const DEGRADED: [ConditionTag; 5] = [
        ConditionTag::C1,
        ConditionTag::C2,
        ConditionTag::C3,
        ConditionTag::C4,
        ConditionTag::C5,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn as_str(self) -> &'static str {
        ["C0", "C1", "C2", "C3", "C4", "C5"][self.index()]
    }

    pub fn parse(s: &str) -> Option<Self> {
        let trimmed = s.trim();
        Self::ALL
            .into_iter()
            .find(|c| c.as_str().eq_ignore_ascii_case(trimmed))
    }

    /// The condition's packet loss rate; none for the clean condition.
    pub fn plr(self) -> Option<f64> {
        plr_for_condition(self.index())
    }
}

impl std::fmt::Display for ConditionTag {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Split into packets of `frame_ms` duration, zero-padding the tail.
pub fn packetize(a: &AudioBuffer, frame_ms: f64) -> Result<PacketStream, ChannelError> {
    if frame_ms <= 0.0 {
        return Err(ChannelError::BadFrame(frame_ms));
    }
    let packet_samples = (f64::from(a.sample_rate) * frame_ms / 1000.0).round() as usize;
    if packet_samples == 0 {
        return Err(ChannelError::BadFrame(frame_ms));
    }
    let n_packets = a.len().div_ceil(packet_samples).max(1);
    let padded = n_packets * packet_samples;
    let tail_pad = padded - a.len();
    let mut packets = Vec::with_capacity(n_packets);
    for p in 0..n_packets {
        let start = p * packet_samples;
        let mut packet = vec![0i16; packet_samples];
        let end = ((p + 1) * packet_samples).min(a.len());
        if start < a.len() {
            packet[..end - start].copy_from_slice(&a.samples[start..end]);
        }
        packets.push(packet);
    }
    Ok(PacketStream {
        packets,
        packet_samples,
        tail_pad,
        loss_mask: None,
    })
}

/// Reassemble, dropping the tail padding.
pub fn depacketize(s: &PacketStream, sample_rate: u32) -> AudioBuffer {
    let mut samples = Vec::with_capacity(s.original_len());
    for p in &s.packets {
        samples.extend_from_slice(p);
    }
    samples.truncate(s.original_len());
    AudioBuffer::new(samples, sample_rate)
}

/// Draw which packets are lost.
///
/// Bernoulli losses use a counter-based draw keyed by (seed, packet index),
/// so the mask does not depend on evaluation order. The Gilbert-Elliott
/// chain drops packets in its bad state with a probability chosen so the
/// stationary loss rate equals `plr`.
pub fn draw_loss_mask(n_packets: usize, model: &LossModel) -> Result<Vec<bool>, ChannelError> {
    if !(0.0..=1.0).contains(&model.plr) {
        return Err(ChannelError::BadParams(format!(
            "plr {} outside [0, 1]",
            model.plr
        )));
    }
    match model.kind {
        LossKind::Bernoulli => Ok((0..n_packets)
            .map(|i| unit_draw(model.seed, i as u64) < model.plr)
            .collect()),
        LossKind::GilbertElliott => {
            let (p, r) = model.ge_params.ok_or_else(|| {
                ChannelError::BadParams("gilbert_elliott requires ge_params".into())
            })?;
            if !(0.0..=1.0).contains(&p) || !(0.0..=1.0).contains(&r) {
                return Err(ChannelError::BadParams(
                    "transition probabilities outside [0, 1]".into(),
                ));
            }
            if model.plr == 0.0 {
                return Ok(vec![false; n_packets]);
            }
            if p == 0.0 {
                return Err(ChannelError::BadParams(
                    "p_good_to_bad must be positive when plr > 0".into(),
                ));
            }
            // Stationary P(bad) = p / (p + r); loss rate = P(bad) * h.
            let h = model.plr * (p + r) / p;
            if h > 1.0 + 1e-12 {
                return Err(ChannelError::BadParams(format!(
                    "plr {} unreachable with ge_params ({p}, {r})",
                    model.plr
                )));
            }
            let h = h.min(1.0);
            let mut rng = SplitMix::new(model.seed);
            let mut bad = rng.next_unit() < p / (p + r); // start from stationarity
            let mut mask = Vec::with_capacity(n_packets);
            for _ in 0..n_packets {
                mask.push(bad && rng.next_unit() < h);
                bad = if bad {
                    !(rng.next_unit() < r)
                } else {
                    rng.next_unit() < p
                };
            }
            Ok(mask)
        }
    }
}

/// Replace lost packets according to `strategy` and reassemble.
pub fn conceal(s: &PacketStream, strategy: Concealment) -> Result<AudioBuffer, ChannelError> {
    let mask = s.loss_mask.as_ref().ok_or(ChannelError::NoMask)?;
    let ps = s.packet_samples;
    let n = s.packets.len();
    let mut packets: Vec<Vec<i16>> = Vec::with_capacity(n);

    match strategy {
        Concealment::ZeroFill => {
            for (i, p) in s.packets.iter().enumerate() {
                packets.push(if mask[i] { vec![0; ps] } else { p.clone() });
            }
        }
        Concealment::RepeatPrevious => {
            let mut last_good: Option<&Vec<i16>> = None;
            for (i, p) in s.packets.iter().enumerate() {
                if mask[i] {
                    packets.push(last_good.cloned().unwrap_or_else(|| vec![0; ps]));
                } else {
                    packets.push(p.clone());
                    last_good = Some(p);
                }
            }
        }
        Concealment::LinearInterp => {
            packets = s.packets.clone();
            let mut i = 0;
            while i < n {
                if !mask[i] {
                    i += 1;
                    continue;
                }
                let gap_start = i;
                let mut gap_end = i;
                while gap_end + 1 < n && mask[gap_end + 1] {
                    gap_end += 1;
                }
                let touches_edge = gap_start == 0 || gap_end == n - 1;
                if touches_edge {
                    for packet in packets.iter_mut().take(gap_end + 1).skip(gap_start) {
                        packet.iter_mut().for_each(|v| *v = 0);
                    }
                } else {
                    let a = f64::from(*s.packets[gap_start - 1].last().unwrap());
                    let b = f64::from(s.packets[gap_end + 1][0]);
                    let gap_len = (gap_end - gap_start + 1) * ps;
                    for j in 0..gap_len {
                        let frac = (j + 1) as f64 / (gap_len + 1) as f64;
                        let v = (a + (b - a) * frac).round().clamp(-32768.0, 32767.0) as i16;
                        packets[gap_start + j / ps][j % ps] = v;
                    }
                }
                i = gap_end + 1;
            }
        }
    }

    let healed = PacketStream {
        packets,
        packet_samples: ps,
        tail_pad: s.tail_pad,
        loss_mask: None,
    };
    Ok(depacketize(&healed, 16_000))
}

/// Packet duration used for loss simulation regardless of codec framing.
pub const CHANNEL_FRAME_MS: f64 = 20.0;

/// Full transmission chain: codec round-trip, then packet loss with
/// concealment. Output length equals input length.
pub fn transmit(
    a: &AudioBuffer,
    cond: &ChannelCondition,
    tmpl: Option<&ExternalCodecTemplate>,
    item_tag: &str,
) -> Result<AudioBuffer, ChannelError> {
    let coded = apply_codec(a, &cond.codec, tmpl, item_tag)?;
    let mut stream = packetize(&coded, CHANNEL_FRAME_MS)?;
    let mask = draw_loss_mask(stream.packets.len(), &cond.loss)?;
    stream.loss_mask = Some(mask);
    let mut out = conceal(&stream, cond.concealment)?;
    out.sample_rate = a.sample_rate;
    Ok(out)
}
