//! Utterance sampling, noise mixing and per-stream Bayes posteriors.

use std::fmt;

use rand::distributions::WeightedIndex;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::audio::{generate_noise, signal_power, synthesize, BandAnalyzer, NoiseKind};
use super::derive_seed;
use super::video::{
    add_pixel_noise, appearance_features, corrupt_frame, render_glyph, shape_features, FrameDistortion, SHAPE_DIMS,
};
use super::world::World;
use crate::align::{align_stream, bresenham_map};
use crate::error::{Error, Result};
use crate::fusion::early_integration;
use crate::signal::audio::{frame_snr_oracle, FRAME_SHIFT, SNR_CAP_DB};
use crate::signal::video::GrayFrame;
use crate::synth::model::{posteriors_from_log_likelihoods, stream_posteriors, DiagGaussian};
use crate::types::{AlignmentTarget, FusedLogPosterior, Matrix, PosteriorSequence, StreamId, AUDIO_FRAME_SHIFT};

/// Audio frames per video frame.
pub const FRAMES_PER_VIDEO_FRAME: usize = 4;

/// Acoustic condition of an utterance.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ConditionRepr", into = "ConditionRepr")]
pub enum SnrCondition {
    Clean,
    Db(f64),
}

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum ConditionRepr {
    Db(f64),
    Label(String),
}

impl TryFrom<ConditionRepr> for SnrCondition {
    type Error = String;

    fn try_from(r: ConditionRepr) -> std::result::Result<Self, String> {
        match r {
            ConditionRepr::Db(d) if d.is_finite() => Ok(SnrCondition::Db(d)),
            ConditionRepr::Db(d) => Err(format!("SNR must be finite, got {d}")),
            ConditionRepr::Label(s) => s.parse(),
        }
    }
}

impl From<SnrCondition> for ConditionRepr {
    fn from(c: SnrCondition) -> Self {
        match c {
            SnrCondition::Clean => ConditionRepr::Label("clean".into()),
            SnrCondition::Db(d) => ConditionRepr::Db(d),
        }
    }
}

impl std::str::FromStr for SnrCondition {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        let t = s.trim();
        if t.eq_ignore_ascii_case("clean") {
            return Ok(SnrCondition::Clean);
        }
        match t.trim_end_matches("dB").trim_end_matches("db").trim().parse::<f64>() {
            Ok(d) if d.is_finite() => Ok(SnrCondition::Db(d)),
            _ => Err(format!("expected an SNR in dB or \"clean\", got {s:?}")),
        }
    }
}

impl fmt::Display for SnrCondition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SnrCondition::Clean => f.write_str("clean"),
            SnrCondition::Db(d) => write!(f, "{d}"),
        }
    }
}

impl SnrCondition {
    /// The evaluation grid: -9 to 9 dB in 3 dB steps, then clean.
    pub fn grid() -> Vec<SnrCondition> {
        (-3..=3)
            .map(|k| SnrCondition::Db(3.0 * k as f64))
            .chain([SnrCondition::Clean])
            .collect()
    }

    /// Sort key placing clean above every finite SNR.
    pub fn order_key(&self) -> f64 {
        match self {
            SnrCondition::Clean => f64::INFINITY,
            SnrCondition::Db(d) => *d,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Utterance {
    pub id: String,
    pub seed: u64,
    pub words: Vec<String>,
    /// True state of every 10 ms audio frame.
    pub alignment: AlignmentTarget,
    pub clean: Vec<f64>,
    /// Additive noise component; all zeros for a clean utterance.
    pub noise: Vec<f64>,
    pub condition: SnrCondition,
    pub noise_kind: Option<NoiseKind>,
    /// Mean power of `noise`.
    pub noise_power: f64,
    /// True per-frame SNR in dB from the stored components.
    pub snr_track: Vec<f64>,
    /// Final 25 fps video: rendered, corrupted and noisy.
    pub frames: Vec<GrayFrame>,
    pub distortion: Vec<FrameDistortion>,
    /// Simulated face-detector confidence per video frame.
    pub confidence: Vec<f64>,
}

impl Utterance {
    pub fn num_frames(&self) -> usize {
        self.alignment.len()
    }

    pub fn num_video_frames(&self) -> usize {
        self.frames.len()
    }

    /// The observed waveform, `clean + noise`.
    pub fn audio(&self) -> Vec<f64> {
        self.clean.iter().zip(&self.noise).map(|(s, n)| s + n).collect()
    }
}

/// Video frames for `t` audio frames at 10 ms: `ceil(t * 0.01 * 25)`.
pub fn video_frame_count(audio_frames: usize) -> usize {
    audio_frames.div_ceil(FRAMES_PER_VIDEO_FRAME)
}

fn geometric<R: Rng>(mean: f64, rng: &mut R) -> usize {
    if mean <= 1.0 {
        return 1;
    }
    let stay = 1.0 - 1.0 / mean;
    let u: f64 = 1.0 - rng.gen::<f64>();
    1 + (u.ln() / stay.ln()).floor() as usize
}

/// Samples a state duration from the world's geometric duration model.
pub fn sample_duration<R: Rng>(world: &World, rng: &mut R) -> usize {
    geometric(world.config.mean_duration, rng)
}

/// Samples a clean utterance of `length_words` words.
pub fn sample_utterance(world: &World, length_words: usize, seed: u64) -> Result<Utterance> {
    sample_utterance_with_id(world, length_words, seed, format!("utt-{seed}"))
}

pub fn sample_utterance_with_id(world: &World, length_words: usize, seed: u64, id: String) -> Result<Utterance> {
    if length_words == 0 {
        return Err(Error::InvalidInput("an utterance needs at least one word".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, "text"));
    let lm = &world.lm;
    let mut word_ids = Vec::with_capacity(length_words);
    let start = WeightedIndex::new(lm.start()).map_err(|e| Error::InvalidInput(e.to_string()))?;
    word_ids.push(start.sample(&mut rng));
    while word_ids.len() < length_words {
        let prev = *word_ids.last().unwrap();
        let row = WeightedIndex::new(lm.row(prev)).map_err(|e| Error::InvalidInput(e.to_string()))?;
        word_ids.push(row.sample(&mut rng));
    }
    render_words(world, &word_ids, seed, id)
}

/// Renders a clean utterance for a fixed word sequence, sampling state
/// durations, audio and video from `seed`.
pub fn render_words(world: &World, word_ids: &[usize], seed: u64, id: String) -> Result<Utterance> {
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, "durations"));
    let mut states = Vec::new();
    for &w in word_ids {
        for &s in world.lexicon.chain(w) {
            let d = sample_duration(world, &mut rng);
            states.extend(std::iter::repeat(s).take(d));
        }
    }
    let t_len = states.len();

    let mut audio_rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, "audio"));
    let clean = synthesize(&world.audio, &states, &world.config.audio, &mut audio_rng);

    let mut video_rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, "video"));
    let v_len = video_frame_count(t_len);
    let map = bresenham_map(t_len, v_len)?;
    let distortion = sample_distortion_track(world, v_len, &mut video_rng);
    let glyph_frames: Vec<GrayFrame> = world.glyphs.iter().map(render_glyph).collect();
    let mut frames = Vec::with_capacity(v_len);
    let mut confidence = Vec::with_capacity(v_len);
    for (v, d) in distortion.iter().enumerate() {
        let members: Vec<usize> = (0..t_len)
            .filter(|&t| map.as_slice()[t] == v)
            .map(|t| states[t])
            .collect();
        let mut px = vec![0.0; glyph_frames[0].pixels().len()];
        for &s in &members {
            for (p, g) in px.iter_mut().zip(glyph_frames[s].pixels()) {
                *p += g / members.len() as f64;
            }
        }
        let blended = GrayFrame::new(glyph_frames[0].width(), glyph_frames[0].height(), px)?;
        let mut f = corrupt_frame(&blended, d);
        add_pixel_noise(&mut f, world.config.video.pixel_noise, &mut video_rng);
        frames.push(f);
        let e: f64 = video_rng.sample(StandardNormal);
        let dc = &world.config.distortion;
        confidence.push((1.0 - 0.6 * d.severity(dc) + dc.confidence_noise * e).clamp(0.0, 1.0));
    }

    let n = clean.len();
    Ok(Utterance {
        id,
        seed,
        words: word_ids.iter().map(|&w| world.lexicon.word(w).to_string()).collect(),
        alignment: AlignmentTarget::new(states, world.num_states())?,
        clean,
        noise: vec![0.0; n],
        condition: SnrCondition::Clean,
        noise_kind: None,
        noise_power: 0.0,
        snr_track: vec![SNR_CAP_DB; t_len],
        frames,
        distortion,
        confidence,
    })
}

fn sample_distortion_track<R: Rng>(world: &World, v_len: usize, rng: &mut R) -> Vec<FrameDistortion> {
    let cfg = &world.config.distortion;
    let mut track = vec![FrameDistortion::default(); v_len];
    if cfg.max_segments == 0 || !rng.gen_bool(cfg.probability) {
        return track;
    }
    let segments = rng.gen_range(1..=cfg.max_segments);
    for _ in 0..segments {
        let frac = rng.gen_range(cfg.segment_fraction.0..=cfg.segment_fraction.1);
        let len = ((frac * v_len as f64).round() as usize).clamp(1, v_len);
        let start = rng.gen_range(0..=v_len - len);
        let d = FrameDistortion::sample(cfg, rng);
        track[start..start + len].iter_mut().for_each(|slot| *slot = d);
    }
    track
}

/// Adds noise of `kind` at the requested global SNR. The noise is scaled so
/// the mixture's global SNR equals `condition` up to rounding; `Clean`
/// returns the clean utterance.
pub fn mix_noise(utt: &Utterance, kind: NoiseKind, condition: SnrCondition, seed: u64) -> Result<Utterance> {
    let ps = signal_power(&utt.clean)?;
    let mut out = utt.clone();
    out.condition = condition;
    let snr = match condition {
        SnrCondition::Clean => {
            out.noise = vec![0.0; utt.clean.len()];
            out.noise_kind = None;
            out.noise_power = 0.0;
            out.snr_track = vec![SNR_CAP_DB; utt.num_frames()];
            return Ok(out);
        }
        SnrCondition::Db(d) => d,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, &format!("noise-{}-{snr}", kind.name())));
    let unit = generate_noise(kind, utt.clean.len(), &mut rng);
    let target = ps / 10f64.powf(snr / 10.0);
    let scale = target.sqrt();
    out.noise = unit.into_iter().map(|v| v * scale).collect();
    out.noise_kind = Some(kind);
    out.noise_power = target;
    out.snr_track = frame_snr_oracle(&out.clean, &out.noise)?;
    Ok(out)
}

/// Per-frame observation features of one stream at the audio frame rate.
pub fn stream_features(world: &World, utt: &Utterance, stream: StreamId) -> Result<Matrix> {
    let t_len = utt.num_frames();
    match stream {
        StreamId::A => {
            let f = BandAnalyzer::new(&world.config.audio).log_bands(&utt.audio());
            if f.rows() != t_len {
                return Err(Error::Shape(format!(
                    "{} audio frames for an alignment of {t_len}",
                    f.rows()
                )));
            }
            Ok(f)
        }
        StreamId::VA | StreamId::VS => {
            let v_len = utt.num_video_frames();
            let dims = if stream == StreamId::VA {
                world.config.video.appearance_dims
            } else {
                SHAPE_DIMS
            };
            let mut m = Matrix::zeros(v_len, dims);
            for (v, f) in utt.frames.iter().enumerate() {
                if stream == StreamId::VA {
                    m.row_mut(v).copy_from_slice(&appearance_features(f, dims)?);
                } else {
                    m.row_mut(v).copy_from_slice(&shape_features(f));
                }
            }
            align_stream(&m, &bresenham_map(t_len, v_len)?)
        }
    }
}

fn stream_model(world: &World, utt: &Utterance, stream: StreamId) -> Result<DiagGaussian> {
    match stream {
        StreamId::A => world.audio_model.at_noise(utt.noise_kind, utt.noise_power),
        StreamId::VA => Ok(world.appearance_model.clone()),
        StreamId::VS => Ok(world.shape_model.clone()),
    }
}

/// Untempered per-state log-likelihoods of one stream, `T x S`.
pub fn stream_log_likelihoods(world: &World, utt: &Utterance, stream: StreamId) -> Result<Matrix> {
    let feats = stream_features(world, utt, stream)?;
    stream_model(world, utt, stream)?.log_likelihoods(&feats)
}

/// Untempered log-likelihoods of the joint model over `[audio; shape; appearance]`.
pub fn early_log_likelihoods(world: &World, utt: &Utterance) -> Result<Matrix> {
    let a = stream_features(world, utt, StreamId::A)?;
    let va = stream_features(world, utt, StreamId::VA)?;
    let vs = stream_features(world, utt, StreamId::VS)?;
    let (joint, _) = early_integration(&a, &va, &vs)?;
    let model = DiagGaussian::concat(&[
        &stream_model(world, utt, StreamId::A)?,
        &world.shape_model.with_variance_scale(world.early_video_scale),
        &world.appearance_model.with_variance_scale(world.early_video_scale),
    ])?;
    model.log_likelihoods(&joint)
}

/// Bayes state posteriors of one stream under a uniform prior.
pub fn compute_stream_posteriors(world: &World, utt: &Utterance, stream: StreamId) -> Result<PosteriorSequence> {
    stream_posteriors(stream, &stream_log_likelihoods(world, utt, stream)?, AUDIO_FRAME_SHIFT)
}

/// Early integration: Bayes posteriors of one joint model over the
/// concatenated audio-rate features.
pub fn early_integration_posteriors(world: &World, utt: &Utterance) -> Result<FusedLogPosterior> {
    let p = posteriors_from_log_likelihoods(&early_log_likelihoods(world, utt)?)?;
    FusedLogPosterior::new(p.map(f64::ln))
}

/// Checks the stored components against the audio frame grid.
pub fn check_lengths(utt: &Utterance) -> Result<()> {
    let t = utt.num_frames();
    if utt.clean.len() != t * FRAME_SHIFT || utt.noise.len() != utt.clean.len() {
        return Err(Error::Shape(format!(
            "utterance {} has inconsistent audio length",
            utt.id
        )));
    }
    if utt.frames.len() != video_frame_count(t) {
        return Err(Error::Shape(format!(
            "utterance {} has {} video frames",
            utt.id,
            utt.frames.len()
        )));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::config::WorldConfig;
    use crate::synth::world::build_world;

    fn world(v: usize) -> World {
        let mut c = WorldConfig {
            vocab_size: v,
            ..WorldConfig::default()
        };
        c.calibration_utterances = 10;
        build_world(&c, 5).unwrap()
    }

    #[test]
    fn single_word_vocabulary() {
        let w = world(1);
        let u = sample_utterance(&w, 1, 3).unwrap();
        assert_eq!(u.words, vec![w.lexicon.word(0).to_string()]);
        check_lengths(&u).unwrap();
    }

    #[test]
    fn deterministic_samples() {
        let w = world(3);
        let a = sample_utterance(&w, 3, 11).unwrap();
        let b = sample_utterance(&w, 3, 11).unwrap();
        assert_eq!(a.clean, b.clean);
        assert_eq!(a.frames, b.frames);
        assert!(sample_utterance(&w, 0, 1).is_err());
    }

    #[test]
    fn durations_match_geometric_mean() {
        let w = world(2);
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let total: usize = (0..1000).map(|_| sample_duration(&w, &mut rng)).sum();
        assert!((total as f64 / 1000.0 - 5.0).abs() < 0.5);
    }

    #[test]
    fn global_snr_is_exact() {
        let w = world(3);
        let u = sample_utterance(&w, 3, 2).unwrap();
        for kind in NoiseKind::ALL {
            let n = mix_noise(&u, kind, SnrCondition::Db(-9.0), 4).unwrap();
            let ps: f64 = n.clean.iter().map(|v| v * v).sum();
            let pn: f64 = n.noise.iter().map(|v| v * v).sum();
            assert!((10.0 * (ps / pn).log10() + 9.0).abs() < 0.1);
        }
    }

    #[test]
    fn silent_signal_is_rejected() {
        let w = world(2);
        let mut u = sample_utterance(&w, 1, 2).unwrap();
        u.clean.iter_mut().for_each(|v| *v = 0.0);
        assert!(mix_noise(&u, NoiseKind::White, SnrCondition::Db(0.0), 1).is_err());
    }

    #[test]
    fn condition_parsing() {
        assert_eq!("clean".parse::<SnrCondition>().unwrap(), SnrCondition::Clean);
        assert_eq!("-6".parse::<SnrCondition>().unwrap(), SnrCondition::Db(-6.0));
        assert!("loud".parse::<SnrCondition>().is_err());
        let json = serde_json::to_string(&SnrCondition::grid()).unwrap();
        assert_eq!(json, r#"[-9.0,-6.0,-3.0,0.0,3.0,6.0,9.0,"clean"]"#);
        let back: Vec<SnrCondition> = serde_json::from_str(&json).unwrap();
        assert_eq!(back, SnrCondition::grid());
    }

    #[test]
    fn posteriors_have_audio_rate() {
        let w = world(3);
        let u = mix_noise(
            &sample_utterance(&w, 2, 6).unwrap(),
            NoiseKind::White,
            SnrCondition::Db(3.0),
            1,
        )
        .unwrap();
        for s in StreamId::ALL {
            let p = compute_stream_posteriors(&w, &u, s).unwrap();
            assert_eq!(p.num_frames(), u.num_frames());
            assert_eq!(p.stream(), s);
        }
        let e = early_integration_posteriors(&w, &u).unwrap();
        assert_eq!(e.num_frames(), u.num_frames());
    }
}
