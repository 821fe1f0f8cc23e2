//! Benchmark toolkit for audio deepfake detection robustness under
//! real-world communication conditions.
//!
//! The pipeline degrades clean speech through codec round-trips and packet
//! loss, builds six-condition evaluation sets and augmented training sets,
//! extracts cepstral or raw-waveform features, trains desk-scale detectors
//! and reports EER/AUC/F1 per condition.

pub mod audio;
pub mod channel;
pub mod codec;
pub mod corpus;
pub mod config;
pub mod datasetgen;
pub mod demo;
pub mod detector;
pub mod evaluation;
pub mod features;
pub mod pipeline;
pub mod seed;
pub mod wav;

pub use audio::{fix_length, normalize_audio, AudioBuffer, FIXED_SAMPLES, PIPELINE_RATE};
pub use channel::{
    conceal, depacketize, draw_loss_mask, packetize, transmit, ChannelCondition, Concealment,
    LossKind, LossModel, PacketStream,
};
pub use codec::{
    apply_codec, default_registry, identity_spec, lookup_preset, simulate_codec, CodecBackend,
    CodecSpec, ExternalCodecTemplate,
};
pub use corpus::{Label, Manifest, Utterance};
pub use features::{
    cqcc, extract, lfcc, pool_stats, raw_view, FeatureKind, FeatureMatrix, FrameGrid,
};
