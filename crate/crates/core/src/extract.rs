//! Per-utterance feature extraction: stream posteriors, early-integration
//! scores and the reliability sequence at the audio frame rate.

use serde::{Deserialize, Serialize};

use crate::align::{align_stream, bresenham_map};
use crate::decode::{forced_align, DecodingGraph};
use crate::error::{Error, Result};
use crate::reliability::layout::{AUDIO_SIGNAL_NAMES, VIDEO_SIGNAL_NAMES};
use crate::reliability::model::{stream_measures, DEFAULT_TOP_K};
use crate::reliability::{ReliabilityGroups, ReliabilityLayout, ReliabilityParts};
use crate::signal::audio::{delta, AudioAnalyzer, PitchTracker, SnrEstimator};
use crate::signal::video::{idct_features, image_distortion};
use crate::synth::{compute_stream_posteriors, early_integration_posteriors, SnrCondition, Utterance, World};
use crate::types::{AlignmentTarget, FusedLogPosterior, Matrix, PosteriorSequence, StreamId};

/// Regression half-width used for the delta columns.
pub const DELTA_WINDOW: usize = 2;

/// Where the per-frame SNR column comes from.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SnrSource {
    /// Exact track from the stored clean and noise components.
    #[default]
    Oracle,
    /// Decision-directed estimate from the noisy waveform alone.
    Estimator,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExtractOptions {
    pub groups: ReliabilityGroups,
    pub snr_source: SnrSource,
    pub top_k: usize,
}

impl Default for ExtractOptions {
    fn default() -> Self {
        Self {
            groups: ReliabilityGroups::default(),
            snr_source: SnrSource::Oracle,
            top_k: DEFAULT_TOP_K,
        }
    }
}

/// Everything the fusion strategies consume for one utterance in one
/// acoustic condition.
#[derive(Clone, Debug, PartialEq)]
pub struct UtteranceFeatures {
    pub id: String,
    pub words: Vec<String>,
    pub condition: SnrCondition,
    /// True state sequence from synthesis.
    pub truth: AlignmentTarget,
    /// Stream posteriors in A, VA, VS order.
    pub posteriors: Vec<PosteriorSequence>,
    pub early: FusedLogPosterior,
    /// `T x R` reliability indicators.
    pub reliability: Matrix,
}

impl UtteranceFeatures {
    pub fn num_frames(&self) -> usize {
        self.truth.len()
    }

    pub fn num_states(&self) -> usize {
        self.posteriors[0].num_states()
    }

    pub fn log_posteriors(&self) -> Vec<Matrix> {
        self.posteriors.iter().map(PosteriorSequence::log).collect()
    }
}

/// `T x 14` audio indicators, columns as in `AUDIO_SIGNAL_NAMES`.
pub fn audio_signal_features(utt: &Utterance, source: SnrSource) -> Result<Matrix> {
    let x = utt.audio();
    let t_len = utt.num_frames();
    let analyzer = AudioAnalyzer::new();
    let mfcc = analyzer.mfcc(&x)?;
    if mfcc.rows() != t_len {
        return Err(Error::Shape(format!(
            "{} cepstral frames for {t_len} aligned frames",
            mfcc.rows()
        )));
    }
    let dmfcc = delta(&mfcc, DELTA_WINDOW);
    let snr = match source {
        SnrSource::Oracle => utt.snr_track.clone(),
        SnrSource::Estimator => SnrEstimator::default().estimate(&analyzer, &x)?,
    };
    let pitch = PitchTracker::new().track(&x);
    if snr.len() != t_len || pitch.f0.len() != t_len {
        return Err(Error::Shape(format!(
            "snr ({}) and pitch ({}) tracks must have {t_len} frames",
            snr.len(),
            pitch.f0.len()
        )));
    }
    let f0 = Matrix::from_fn(t_len, 1, |t, _| pitch.f0[t]);
    let df0 = delta(&f0, DELTA_WINDOW);
    let mut out = Matrix::zeros(t_len, AUDIO_SIGNAL_NAMES.len());
    for t in 0..t_len {
        let row = out.row_mut(t);
        row[..5].copy_from_slice(mfcc.row(t));
        row[5..10].copy_from_slice(dmfcc.row(t));
        row[10] = snr[t];
        row[11] = pitch.f0[t];
        row[12] = df0.get(t, 0);
        row[13] = pitch.voicing[t];
    }
    Ok(out)
}

/// `T x 9` video indicators, columns as in `VIDEO_SIGNAL_NAMES`, computed per
/// video frame and mapped onto the audio frames.
pub fn video_signal_features(utt: &Utterance) -> Result<Matrix> {
    let v_len = utt.num_video_frames();
    if utt.confidence.len() != v_len {
        return Err(Error::Shape(format!(
            "{} confidences for {v_len} video frames",
            utt.confidence.len()
        )));
    }
    let mut m = Matrix::zeros(v_len, VIDEO_SIGNAL_NAMES.len());
    for (v, frame) in utt.frames.iter().enumerate() {
        let idct = idct_features(frame)?;
        let d = image_distortion(frame);
        let row = m.row_mut(v);
        row[0] = utt.confidence[v];
        row[1..6].copy_from_slice(&idct);
        row[6] = d.brightness;
        row[7] = d.blur;
        row[8] = d.rotation;
    }
    align_stream(&m, &bresenham_map(utt.num_frames(), v_len)?)
}

/// Computes the stream posteriors, early-integration scores and the
/// reliability sequence of an (optionally noisy) utterance.
pub fn extract(world: &World, utt: &Utterance, opts: &ExtractOptions) -> Result<UtteranceFeatures> {
    let posteriors: Vec<PosteriorSequence> = StreamId::ALL
        .iter()
        .map(|&s| compute_stream_posteriors(world, utt, s))
        .collect::<Result<_>>()?;
    let early = early_integration_posteriors(world, utt)?;
    let layout = ReliabilityLayout::new(opts.groups);
    let t_len = utt.num_frames();
    let model = if opts.groups.model {
        stream_measures(&posteriors, opts.top_k)?
    } else {
        Vec::new()
    };
    let audio = if opts.groups.audio {
        audio_signal_features(utt, opts.snr_source)?
    } else {
        Matrix::zeros(t_len, AUDIO_SIGNAL_NAMES.len())
    };
    let video = if opts.groups.video {
        video_signal_features(utt)?
    } else {
        Matrix::zeros(t_len, VIDEO_SIGNAL_NAMES.len())
    };
    let reliability = layout.assemble(&ReliabilityParts {
        model: &model,
        audio: &audio,
        video: &video,
    })?;
    Ok(UtteranceFeatures {
        id: utt.id.clone(),
        words: utt.words.clone(),
        condition: utt.condition,
        truth: utt.alignment.clone(),
        posteriors,
        early,
        reliability,
    })
}

/// Training target: forced alignment of the clean audio-stream posteriors to
/// the transcript.
pub fn clean_alignment(world: &World, graph: &DecodingGraph, clean: &Utterance) -> Result<AlignmentTarget> {
    if clean.condition != SnrCondition::Clean {
        return Err(Error::InvalidInput(format!("utterance {} is not clean", clean.id)));
    }
    let audio = compute_stream_posteriors(world, clean, StreamId::A)?;
    forced_align(&clean.words, &audio, graph)
}
