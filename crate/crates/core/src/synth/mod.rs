//! Synthetic audio-visual corpus: world construction, utterance sampling,
//! noise mixing, video corruption and exact per-stream posteriors.

pub mod audio;
pub mod config;
pub mod model;
pub mod utterance;
pub mod video;
pub mod world;

pub use audio::{generate_noise, AudioStateSpec, BandAnalyzer, NoiseKind};
pub use config::{AudioConfig, DistortionConfig, VideoConfig, WorldConfig};
pub use model::{posteriors_from_log_likelihoods, DiagGaussian};
pub use utterance::{
    compute_stream_posteriors, early_integration_posteriors, mix_noise, sample_utterance, sample_utterance_with_id,
    stream_features, video_frame_count, SnrCondition, Utterance,
};
pub use video::{corrupt_video, FrameDistortion, GlyphSpec};
pub use world::{build_world, World};

/// Derives an independent child seed from `base` and a label (FNV-1a over
/// the label, mixed with SplitMix64).
pub fn derive_seed(base: u64, label: &str) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in label.bytes() {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    let mut z = base ^ h.rotate_left(17);
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}
