//! The synthetic world: vocabulary, state sources, LM and calibrated
//! observation models.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma, StandardNormal};
use serde::{Deserialize, Serialize};

use super::audio::{generate_noise, AudioStateSpec, BandAnalyzer, Formant, NoiseKind};
use super::config::WorldConfig;
use super::derive_seed;
use super::model::{fit_variance_scale, golden_section, mean_cross_entropy, DiagGaussian, MIN_VARIANCE};
use super::utterance::{mix_noise, render_words, stream_features, SnrCondition, Utterance};
use super::video::GlyphSpec;
use crate::error::{Error, Result};
use crate::lexicon::{BigramLm, Lexicon};
use crate::signal::audio::FRAME_SHIFT;
use crate::types::{Matrix, StateSpace, StreamId};

/// Smallest bigram probability after flooring the Dirichlet draw.
const LM_FLOOR: f64 = 1e-6;

/// Band-power statistics of unit-power noise of one kind.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NoiseProfile {
    pub kind: NoiseKind,
    /// Mean band power per unit noise power.
    pub band_mean: Vec<f64>,
    /// Variance of the band power divided by its squared mean.
    pub band_relative_variance: Vec<f64>,
}

/// Matched-condition audio observation model in the log band-energy domain.
///
/// Clean linear band-power moments per state are combined with the noise
/// moments at the mixture's noise power and mapped to a log-normal by
/// moment matching.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AudioModel {
    pub clean_mean: Matrix,
    pub clean_variance: Matrix,
    pub noise: Vec<NoiseProfile>,
    /// Calibrated inflation of the log-domain variances.
    pub variance_scale: f64,
}

impl AudioModel {
    pub fn at_noise(&self, kind: Option<NoiseKind>, noise_power: f64) -> Result<DiagGaussian> {
        let profile = match kind {
            Some(k) if noise_power > 0.0 => Some(
                self.noise
                    .iter()
                    .find(|p| p.kind == k)
                    .ok_or_else(|| Error::InvalidInput(format!("no calibration for {} noise", k.name())))?,
            ),
            _ => None,
        };
        let (s, b) = self.clean_mean.shape();
        let mut means = Matrix::zeros(s, b);
        let mut vars = Matrix::zeros(s, b);
        for i in 0..s {
            for j in 0..b {
                let (p, v) = (self.clean_mean.get(i, j), self.clean_variance.get(i, j));
                let (mean, var) = match profile {
                    Some(n) => {
                        let w = noise_power * n.band_mean[j];
                        let r = n.band_relative_variance[j];
                        (p + w, v + r * w * w + 2.0 * r * p * w)
                    }
                    None => (p, v),
                };
                let lv = (1.0 + var / (mean * mean)).ln().max(MIN_VARIANCE);
                means.set(i, j, mean.ln() - lv / 2.0);
                vars.set(i, j, lv * self.variance_scale);
            }
        }
        DiagGaussian::new(means, vars)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct World {
    pub config: WorldConfig,
    pub seed: u64,
    pub states: StateSpace,
    pub lexicon: Lexicon,
    pub lm: BigramLm,
    pub audio: Vec<AudioStateSpec>,
    pub glyphs: Vec<GlyphSpec>,
    pub audio_model: AudioModel,
    pub appearance_model: DiagGaussian,
    pub shape_model: DiagGaussian,
    /// Extra variance inflation of the visual blocks inside the joint
    /// early-integration model.
    pub early_video_scale: f64,
}

fn dirichlet<R: Rng>(k: usize, alpha: f64, rng: &mut R) -> Vec<f64> {
    let gamma = Gamma::new(alpha, 1.0).expect("positive concentration");
    let mut v: Vec<f64> = (0..k).map(|_| gamma.sample(rng)).collect();
    let sum: f64 = v.iter().sum();
    if sum > 0.0 {
        v.iter_mut().for_each(|x| *x /= sum);
    } else {
        v = vec![1.0 / k as f64; k];
    }
    v.iter_mut().for_each(|x| *x = x.max(LM_FLOOR));
    let sum: f64 = v.iter().sum();
    v.into_iter().map(|x| x / sum).collect()
}

fn word_name(i: usize) -> String {
    const SYLLABLES: [&str; 12] = ["ka", "lo", "mi", "su", "te", "ra", "no", "vi", "pe", "du", "ho", "ze"];
    let a = SYLLABLES[i % SYLLABLES.len()];
    let b = SYLLABLES[(i / SYLLABLES.len() + 7 * i) % SYLLABLES.len()];
    format!("{a}{b}{i}")
}

/// Builds a world deterministically from `config` and `seed`.
pub fn build_world(config: &WorldConfig, seed: u64) -> Result<World> {
    config.validate()?;
    let (v, n) = (config.vocab_size, config.states_per_word);
    let s = config.num_states();
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, "world"));

    let words: Vec<String> = (0..v).map(word_name).collect();
    let labels: Vec<String> = (0..s).map(|i| format!("{}.{}", words[i / n], i % n)).collect();
    let chains: Vec<Vec<usize>> = (0..v).map(|w| (w * n..(w + 1) * n).collect()).collect();
    let lexicon = Lexicon::new(words, chains)?;
    let states = StateSpace::new(labels)?;
    let lm = BigramLm::new(
        dirichlet(v, config.lm_concentration, &mut rng),
        (0..v)
            .map(|_| dirichlet(v, config.lm_concentration, &mut rng))
            .collect(),
    )?;

    let a = &config.audio;
    let audio: Vec<AudioStateSpec> = (0..s)
        .map(|_| {
            let f0 = rng.gen_range(a.f0.0..=a.f0.1);
            let rms = a.base_rms * rng.gen_range(a.amplitude.0..=a.amplitude.1);
            let formants = (0..a.formants_per_state)
                .map(|_| Formant {
                    center: rng.gen_range(a.formant_hz.0..=a.formant_hz.1),
                    bandwidth: rng.gen_range(a.formant_bw.0..=a.formant_bw.1),
                })
                .collect();
            AudioStateSpec::new(f0, rms, formants, a.max_harmonic_hz)
        })
        .collect();

    let vc = &config.video;
    let classes: Vec<GlyphSpec> = (0..vc.visemes)
        .map(|c| GlyphSpec {
            viseme: c,
            width: rng.gen_range(0.35..0.8),
            height: rng.gen_range(0.15..0.45),
            opening: rng.gen_range(0.0..0.85),
            teeth: rng.gen_bool(0.5),
            offset: 0.0,
        })
        .collect();
    let mut assignment: Vec<usize> = (0..s).map(|i| i % vc.visemes).collect();
    assignment.shuffle(&mut rng);
    let glyphs: Vec<GlyphSpec> = assignment
        .iter()
        .map(|&c| {
            let base = &classes[c];
            let mut jit = || vc.state_jitter * rng.sample::<f64, _>(StandardNormal);
            GlyphSpec {
                viseme: c,
                width: (base.width * (1.0 + jit())).clamp(0.2, 0.95),
                height: (base.height * (1.0 + jit())).clamp(0.1, 0.6),
                opening: (base.opening + jit()).clamp(0.0, 0.9),
                teeth: base.teeth,
                offset: 3.0 * jit(),
            }
        })
        .collect();

    let placeholder = DiagGaussian::new(Matrix::zeros(s, 1), Matrix::filled(s, 1, 1.0))?;
    let mut world = World {
        config: config.clone(),
        seed,
        states,
        lexicon,
        lm,
        audio,
        glyphs,
        audio_model: AudioModel {
            clean_mean: Matrix::zeros(s, 1),
            clean_variance: Matrix::zeros(s, 1),
            noise: Vec::new(),
            variance_scale: 1.0,
        },
        appearance_model: placeholder.clone(),
        shape_model: placeholder,
        early_video_scale: 1.0,
    };
    calibrate(&mut world)?;
    Ok(world)
}

/// Fits all observation models on clean labelled utterances whose word
/// sequences cycle through the vocabulary, so that every state is seen.
fn calibrate(world: &mut World) -> Result<()> {
    let config = world.config.clone();
    let v = config.vocab_size;
    let count = config.calibration_utterances.max((2 * v).div_ceil(3));
    let utts: Vec<Utterance> = (0..count)
        .map(|i| {
            let words: Vec<usize> = (0..3).map(|k| (3 * i + k) % v).collect();
            render_words(
                world,
                &words,
                derive_seed(world.seed, &format!("calibrate-{i}")),
                format!("calibrate-{i}"),
            )
        })
        .collect::<Result<_>>()?;
    let s = world.num_states();
    let bands = BandAnalyzer::new(&config.audio);
    let mut audio_rows: Vec<Vec<Vec<f64>>> = vec![Vec::new(); s];
    let mut app_rows: Vec<Vec<Vec<f64>>> = vec![Vec::new(); s];
    let mut shape_rows: Vec<Vec<Vec<f64>>> = vec![Vec::new(); s];
    for u in &utts {
        let p = bands.band_powers(&u.clean);
        let app = stream_features(world, u, StreamId::VA)?;
        let shp = stream_features(world, u, StreamId::VS)?;
        for (t, &st) in u.alignment.states().iter().enumerate() {
            audio_rows[st].push(p.row(t).to_vec());
            app_rows[st].push(app.row(t).to_vec());
            shape_rows[st].push(shp.row(t).to_vec());
        }
    }
    let to_mats =
        |rows: Vec<Vec<Vec<f64>>>| -> Result<Vec<Matrix>> { rows.iter().map(|r| Ok(Matrix::from_rows(r)?)).collect() };
    let audio_fit = DiagGaussian::fit(&to_mats(audio_rows)?)?;
    world.appearance_model = DiagGaussian::fit(&to_mats(app_rows)?)?;
    world.shape_model = DiagGaussian::fit(&to_mats(shape_rows)?)?;

    let frames = 400;
    let noise = NoiseKind::ALL
        .iter()
        .map(|&kind| {
            let mut rng =
                ChaCha8Rng::seed_from_u64(derive_seed(world.seed, &format!("calibrate-noise-{}", kind.name())));
            let x = generate_noise(kind, frames * FRAME_SHIFT, &mut rng);
            let p = bands.band_powers(&x).select_rows(&(2..frames - 2).collect::<Vec<_>>());
            let moments = column_moments(&p);
            NoiseProfile {
                kind,
                band_mean: moments.iter().map(|m| m.0.max(1e-12)).collect(),
                band_relative_variance: moments.iter().map(|m| m.1 / m.0.max(1e-12).powi(2)).collect(),
            }
        })
        .collect();
    world.audio_model = AudioModel {
        clean_mean: audio_fit.means().map(|m| m.max(1e-12)),
        clean_variance: audio_fit.variances().clone(),
        noise,
        variance_scale: 1.0,
    };

    // Variance calibration: audio over the whole SNR grid, video on the
    // (SNR-independent) clean renders.
    let grid = SnrCondition::grid();
    let mut audio_data = Vec::with_capacity(utts.len());
    let mut app_data = Vec::with_capacity(utts.len());
    let mut shape_data = Vec::with_capacity(utts.len());
    for (i, u) in utts.iter().enumerate() {
        let kind = NoiseKind::ALL[(i / grid.len()) % NoiseKind::ALL.len()];
        let noisy = mix_noise(
            u,
            kind,
            grid[i % grid.len()],
            derive_seed(world.seed, &format!("calibrate-mix-{i}")),
        )?;
        let states = u.alignment.states().to_vec();
        let model = world.audio_model.at_noise(noisy.noise_kind, noisy.noise_power)?;
        audio_data.push((model, stream_features(world, &noisy, StreamId::A)?, states.clone()));
        app_data.push((stream_features(world, u, StreamId::VA)?, states.clone()));
        shape_data.push((stream_features(world, u, StreamId::VS)?, states));
    }
    world.appearance_model = world
        .appearance_model
        .with_variance_scale(fit_variance_scale(&world.appearance_model, &app_data)?);
    world.shape_model = world
        .shape_model
        .with_variance_scale(fit_variance_scale(&world.shape_model, &shape_data)?);
    let ln_c = golden_section(
        |ln_c| {
            let lls: Vec<(Matrix, Vec<usize>)> = audio_data
                .iter()
                .map(|(m, x, s)| {
                    (
                        m.with_variance_scale(ln_c.exp())
                            .log_likelihoods(x)
                            .expect("matching dims"),
                        s.clone(),
                    )
                })
                .collect();
            mean_cross_entropy(&lls)
        },
        0.25f64.ln(),
        1e4f64.ln(),
        1e-4,
    );
    world.audio_model.variance_scale = ln_c.exp();

    // The joint model sees both streams at once; its visual blocks get their
    // own inflation fitted on the noisy joint data.
    let mut joint_parts = Vec::with_capacity(audio_data.len());
    for ((model, a, states), ((va, _), (vs, _))) in audio_data.iter().zip(app_data.iter().zip(&shape_data)) {
        let la = model
            .with_variance_scale(world.audio_model.variance_scale)
            .log_likelihoods(a)?;
        joint_parts.push((la, va, vs, states));
    }
    let (app_model, shape_model) = (world.appearance_model.clone(), world.shape_model.clone());
    let ln_k = golden_section(
        |ln_k| {
            let (app, shp) = (
                app_model.with_variance_scale(ln_k.exp()),
                shape_model.with_variance_scale(ln_k.exp()),
            );
            let lls: Vec<(Matrix, Vec<usize>)> = joint_parts
                .iter()
                .map(|(la, va, vs, s)| {
                    let lv = app.log_likelihoods(va).expect("matching dims");
                    let ls = shp.log_likelihoods(vs).expect("matching dims");
                    (
                        Matrix::from_fn(la.rows(), la.cols(), |t, j| la.get(t, j) + lv.get(t, j) + ls.get(t, j)),
                        (*s).clone(),
                    )
                })
                .collect();
            mean_cross_entropy(&lls)
        },
        0.25f64.ln(),
        1e4f64.ln(),
        1e-3,
    );
    world.early_video_scale = ln_k.exp();
    Ok(())
}

fn column_moments(m: &Matrix) -> Vec<(f64, f64)> {
    let n = m.rows() as f64;
    (0..m.cols())
        .map(|c| {
            let mean = m.iter_rows().map(|r| r[c]).sum::<f64>() / n;
            let var = m.iter_rows().map(|r| (r[c] - mean).powi(2)).sum::<f64>() / n;
            (mean, var)
        })
        .collect()
}

impl World {
    pub fn num_states(&self) -> usize {
        self.states.num_states()
    }

    /// Pretty JSON description of the whole world.
    pub fn manifest(&self) -> Result<String> {
        serde_json::to_string_pretty(self).map_err(|e| Error::InvalidInput(format!("world serialisation failed: {e}")))
    }
}
