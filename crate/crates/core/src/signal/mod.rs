//! Signal-based reliability indicators from waveforms and video frames.

pub mod audio;
pub mod video;

pub use audio::{
    delta, frame_snr_oracle, mfcc_frames, pitch_nccf, AudioAnalyzer, PitchTrack, PitchTracker, SnrEstimator,
};
pub use video::{idct_features, image_distortion, GrayFrame, ImageDistortion};
