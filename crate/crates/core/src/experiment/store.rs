//! On-disk artifacts of the staged pipeline. Each stage reads what the
//! previous one wrote under a shared output directory:
//!
//! ```text
//! synth/manifest.json, synth/world.json, synth/<id>/...   synth
//! features/manifest.json, features/<id>/...                extract
//! models/<model>.json, models/training.json                train
//! fused/<strategy>/<id>/<condition>.avpf                   fuse
//! decoded/<strategy>.json                                  decode
//! results.csv, results.json                                evaluate, sweep
//! report.txt, wer_vs_snr.csv                               report
//! ```
//!
//! Every file is a deterministic function of the configuration and seed.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use super::config::{ExperimentConfig, Strategy};
use super::pipeline::{
    condition_variant, decode_scores, fuse_item, plan_corpus, render_entry, train_models, FeatureItem, Split,
    TrainSummary, TrainedModel, TrainedModels,
};
use super::results::{SeedResult, SweepResults, UtteranceResult};
use crate::avpf;
use crate::decode::{wer, DecodingGraph};
use crate::error::{Error, Result};
use crate::extract::{clean_alignment, extract, ExtractOptions, UtteranceFeatures};
use crate::fusion::{Checkpoint, Dfn, ModelKind, WeightEstimator};
use crate::io::{write_raw_frames, write_wav};
use crate::signal::audio::{frame_snr_oracle, SNR_CAP_DB};
use crate::signal::video::{GrayFrame, FRAME_SIZE};
use crate::synth::{build_world, FrameDistortion, SnrCondition, Utterance, World};
use crate::types::{AlignmentTarget, FusedLogPosterior, Matrix, PosteriorSequence, StreamId, AUDIO_FRAME_SHIFT};

pub const SYNTH_FORMAT: &str = "avfusion-synth";
pub const FEATURES_FORMAT: &str = "avfusion-features";
pub const MANIFEST_VERSION: u32 = 1;

/// File-name form of a condition: `clean`, `snr0`, `snr3`, `snrm9`.
pub fn condition_tag(c: SnrCondition) -> String {
    match c {
        SnrCondition::Clean => "clean".into(),
        SnrCondition::Db(d) => format!("snr{d}").replace('-', "m").replace('.', "p"),
    }
}

/// One rendered condition of an utterance.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConditionRecord {
    pub condition: SnrCondition,
    /// Mean power of the added noise (0 when clean).
    pub noise_power: f64,
    /// Noise component, `N x 1`; absent when clean.
    pub noise: Option<String>,
    /// Mixture as 16-bit PCM.
    pub wav: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthRecord {
    pub id: String,
    pub split: Split,
    pub seed: u64,
    pub words: Vec<String>,
    pub num_frames: usize,
    pub num_video_frames: usize,
    /// Directory of the per-utterance files, relative to `synth/`.
    pub dir: String,
    pub conditions: Vec<ConditionRecord>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthManifest {
    pub format: String,
    pub version: u32,
    pub seed: u64,
    pub config: ExperimentConfig,
    pub world: String,
    pub utterances: Vec<SynthRecord>,
}

/// Features of one utterance in one condition.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FeatureRecord {
    pub id: String,
    pub split: Split,
    pub condition: SnrCondition,
    pub words: Vec<String>,
    pub num_frames: usize,
    /// Directory relative to `features/`.
    pub dir: String,
    /// Clean forced alignment relative to `features/`, shared by conditions.
    pub target: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FeaturesManifest {
    pub format: String,
    pub version: u32,
    pub seed: u64,
    pub options: ExtractOptions,
    pub items: Vec<FeatureRecord>,
}

/// Training outcome stored next to the checkpoints.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainingRecord {
    pub seed: u64,
    pub priors: Vec<f64>,
    pub summaries: BTreeMap<ModelKind, TrainSummary>,
}

/// Decoder output for one utterance in one condition.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Hypothesis {
    pub id: String,
    pub condition: SnrCondition,
    pub words: Vec<String>,
}

fn read_json<T: DeserializeOwned>(path: &Path, producer: &'static str) -> Result<T> {
    if !path.exists() {
        return Err(Error::MissingArtifact {
            path: path.to_path_buf(),
            producer,
        });
    }
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::Json {
        path: path.to_path_buf(),
        source: e,
    })
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value).map_err(|e| Error::Json {
        path: path.to_path_buf(),
        source: e,
    })?;
    write_text(path, &text)
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn read_matrix(path: &Path, producer: &'static str) -> Result<Matrix> {
    if !path.exists() {
        return Err(Error::MissingArtifact {
            path: path.to_path_buf(),
            producer,
        });
    }
    avpf::read(path)
}

fn column(v: &[f64]) -> Result<Matrix> {
    Ok(Matrix::from_vec(v.len(), 1, v.to_vec())?)
}

fn distortion_matrix(d: &[FrameDistortion]) -> Matrix {
    Matrix::from_fn(d.len(), 3, |r, c| match c {
        0 => d[r].brightness,
        1 => d[r].blur as f64,
        _ => d[r].rotation_deg,
    })
}

fn distortion_from_matrix(m: &Matrix) -> Result<Vec<FrameDistortion>> {
    if m.cols() != 3 {
        return Err(Error::Shape(format!(
            "distortion track needs 3 columns, got {}",
            m.cols()
        )));
    }
    m.iter_rows()
        .map(|r| {
            if !(r[1] >= 1.0 && r[1].fract() == 0.0) {
                return Err(Error::InvalidInput(format!(
                    "blur width {} is not a positive integer",
                    r[1]
                )));
            }
            Ok(FrameDistortion {
                brightness: r[0],
                blur: r[1] as usize,
                rotation_deg: r[2],
            })
        })
        .collect()
}

fn conditions_filter(grid: &[SnrCondition], only: Option<SnrCondition>) -> Result<Vec<SnrCondition>> {
    match only {
        None => Ok(grid.to_vec()),
        Some(c) if grid.contains(&c) => Ok(vec![c]),
        Some(c) => Err(Error::config(
            "snr",
            format!("condition {c} is not in the synthesised grid"),
        )),
    }
}

/// Root of one staged run.
#[derive(Clone, Debug)]
pub struct Store {
    root: PathBuf,
}

impl Store {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Self { root: root.into() }
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn synth_dir(&self) -> PathBuf {
        self.root.join("synth")
    }

    pub fn features_dir(&self) -> PathBuf {
        self.root.join("features")
    }

    pub fn models_dir(&self) -> PathBuf {
        self.root.join("models")
    }

    pub fn fused_path(&self, strategy: Strategy, id: &str, c: SnrCondition) -> PathBuf {
        self.root
            .join("fused")
            .join(strategy.name())
            .join(id)
            .join(format!("{}.avpf", condition_tag(c)))
    }

    pub fn decoded_path(&self, strategy: Strategy) -> PathBuf {
        self.root.join("decoded").join(format!("{}.json", strategy.name()))
    }

    pub fn results_path(&self) -> PathBuf {
        self.root.join("results.json")
    }

    /// Renders the corpus of `seed` in every condition of the grid.
    pub fn synth(&self, cfg: &ExperimentConfig, seed: u64) -> Result<SynthManifest> {
        cfg.validate()?;
        let world = build_world(&cfg.world, seed)?;
        let dir = self.synth_dir();
        write_text(&dir.join("world.json"), &world.manifest()?)?;
        let entries = plan_corpus(cfg, seed);
        let utterances = entries
            .par_iter()
            .map(|e| {
                let clean = render_entry(&world, e)?;
                let udir = dir.join(&e.id);
                fs::create_dir_all(&udir).map_err(|err| Error::io(&udir, err))?;
                avpf::write(udir.join("clean.avpf"), &column(&clean.clean)?)?;
                avpf::write(udir.join("alignment.avpf"), &clean.alignment.to_matrix())?;
                let video = Matrix::from_fn(clean.frames.len(), FRAME_SIZE * FRAME_SIZE, |r, c| {
                    clean.frames[r].pixels()[c]
                });
                avpf::write(udir.join("video.avpf"), &video)?;
                write_raw_frames(&udir.join("frames.raw"), &clean.frames)?;
                avpf::write(udir.join("distortion.avpf"), &distortion_matrix(&clean.distortion))?;
                avpf::write(udir.join("confidence.avpf"), &column(&clean.confidence)?)?;
                let mut conditions = Vec::with_capacity(cfg.snr_grid.len());
                for &c in &cfg.snr_grid {
                    let u = condition_variant(cfg, &clean, c)?;
                    let tag = condition_tag(c);
                    let noise = match c {
                        SnrCondition::Clean => None,
                        SnrCondition::Db(_) => {
                            let name = format!("noise_{tag}.avpf");
                            avpf::write(udir.join(&name), &column(&u.noise)?)?;
                            Some(name)
                        }
                    };
                    let wav = format!("{tag}.wav");
                    let clipped = write_wav(&udir.join(&wav), &u.audio())?;
                    if clipped > 0 {
                        log::warn!("{}: {clipped} samples clipped in {wav}", e.id);
                    }
                    conditions.push(ConditionRecord {
                        condition: c,
                        noise_power: u.noise_power,
                        noise,
                        wav,
                    });
                }
                Ok(SynthRecord {
                    id: e.id.clone(),
                    split: e.split,
                    seed: e.seed,
                    words: clean.words.clone(),
                    num_frames: clean.num_frames(),
                    num_video_frames: clean.num_video_frames(),
                    dir: e.id.clone(),
                    conditions,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let manifest = SynthManifest {
            format: SYNTH_FORMAT.into(),
            version: MANIFEST_VERSION,
            seed,
            config: cfg.clone(),
            world: "world.json".into(),
            utterances,
        };
        write_json(&dir.join("manifest.json"), &manifest)?;
        Ok(manifest)
    }

    pub fn load_synth(&self) -> Result<SynthManifest> {
        let m: SynthManifest = read_json(&self.synth_dir().join("manifest.json"), "synth")?;
        if m.format != SYNTH_FORMAT || m.version != MANIFEST_VERSION {
            return Err(Error::InvalidInput(format!(
                "{} is not a version {MANIFEST_VERSION} synth manifest",
                self.synth_dir().join("manifest.json").display()
            )));
        }
        Ok(m)
    }

    pub fn load_world(&self, manifest: &SynthManifest) -> Result<World> {
        read_json(&self.synth_dir().join(&manifest.world), "synth")
    }

    /// Merges a user configuration with the data-defining settings of the
    /// synthesised corpus, which later stages cannot change.
    pub fn stage_config(&self, user: Option<ExperimentConfig>) -> Result<(SynthManifest, ExperimentConfig)> {
        let manifest = self.load_synth()?;
        let mut cfg = user.unwrap_or_else(|| manifest.config.clone());
        cfg.world = manifest.config.world.clone();
        cfg.noise = manifest.config.noise;
        cfg.corpus = manifest.config.corpus.clone();
        cfg.snr_grid = manifest.config.snr_grid.clone();
        cfg.seeds = vec![manifest.seed];
        cfg.validate()?;
        Ok((manifest, cfg))
    }

    /// Rebuilds an utterance in one condition from the synth files.
    pub fn load_utterance(
        &self,
        cfg: &ExperimentConfig,
        world: &World,
        rec: &SynthRecord,
        cond: &ConditionRecord,
    ) -> Result<Utterance> {
        let dir = self.synth_dir().join(&rec.dir);
        let clean = read_matrix(&dir.join("clean.avpf"), "synth")?.into_vec();
        let alignment =
            AlignmentTarget::from_matrix(&read_matrix(&dir.join("alignment.avpf"), "synth")?, world.num_states())?;
        let video = read_matrix(&dir.join("video.avpf"), "synth")?;
        let frames = video
            .iter_rows()
            .map(|r| GrayFrame::new(FRAME_SIZE, FRAME_SIZE, r.to_vec()))
            .collect::<Result<Vec<_>>>()?;
        let distortion = distortion_from_matrix(&read_matrix(&dir.join("distortion.avpf"), "synth")?)?;
        let confidence = read_matrix(&dir.join("confidence.avpf"), "synth")?.into_vec();
        let (noise, snr_track, noise_kind) = match &cond.noise {
            None => (vec![0.0; clean.len()], vec![SNR_CAP_DB; alignment.len()], None),
            Some(name) => {
                let noise = read_matrix(&dir.join(name), "synth")?.into_vec();
                if noise.len() != clean.len() {
                    return Err(Error::Shape(format!("{}: noise and clean lengths differ", rec.id)));
                }
                let track = frame_snr_oracle(&clean, &noise)?;
                (noise, track, Some(cfg.noise))
            }
        };
        let utt = Utterance {
            id: rec.id.clone(),
            seed: rec.seed,
            words: rec.words.clone(),
            alignment,
            clean,
            noise,
            condition: cond.condition,
            noise_kind,
            noise_power: cond.noise_power,
            snr_track,
            frames,
            distortion,
            confidence,
        };
        crate::synth::utterance::check_lengths(&utt)?;
        Ok(utt)
    }

    /// Computes stream posteriors, early-integration scores, reliability
    /// indicators and the clean forced alignment for every utterance.
    pub fn extract(&self, cfg: &ExperimentConfig, opts: &ExtractOptions) -> Result<FeaturesManifest> {
        let manifest = self.load_synth()?;
        let world = self.load_world(&manifest)?;
        let graph = DecodingGraph::new(&world.lexicon, &world.lm, &cfg.decode.graph)?;
        let fdir = self.features_dir();
        let per_utt: Vec<Vec<FeatureRecord>> = manifest
            .utterances
            .par_iter()
            .map(|rec| {
                let clean_cond = ConditionRecord {
                    condition: SnrCondition::Clean,
                    noise_power: 0.0,
                    noise: None,
                    wav: String::new(),
                };
                let clean = self.load_utterance(cfg, &world, rec, &clean_cond)?;
                let target = clean_alignment(&world, &graph, &clean)?;
                let target_name = format!("{}/target.avpf", rec.dir);
                fs::create_dir_all(fdir.join(&rec.dir)).map_err(|e| Error::io(fdir.join(&rec.dir), e))?;
                avpf::write(fdir.join(&target_name), &target.to_matrix())?;
                rec.conditions
                    .iter()
                    .map(|cond| {
                        let u = self.load_utterance(cfg, &world, rec, cond)?;
                        let f = extract(&world, &u, opts)?;
                        let dir = format!("{}/{}", rec.dir, condition_tag(cond.condition));
                        write_features(&fdir.join(&dir), &f)?;
                        Ok(FeatureRecord {
                            id: rec.id.clone(),
                            split: rec.split,
                            condition: cond.condition,
                            words: rec.words.clone(),
                            num_frames: f.num_frames(),
                            dir,
                            target: target_name.clone(),
                        })
                    })
                    .collect()
            })
            .collect::<Result<_>>()?;
        let out = FeaturesManifest {
            format: FEATURES_FORMAT.into(),
            version: MANIFEST_VERSION,
            seed: manifest.seed,
            options: opts.clone(),
            items: per_utt.into_iter().flatten().collect(),
        };
        write_json(&fdir.join("manifest.json"), &out)?;
        Ok(out)
    }

    pub fn load_features_manifest(&self) -> Result<FeaturesManifest> {
        let path = self.features_dir().join("manifest.json");
        let m: FeaturesManifest = read_json(&path, "extract")?;
        if m.format != FEATURES_FORMAT || m.version != MANIFEST_VERSION {
            return Err(Error::InvalidInput(format!(
                "{} is not a version {MANIFEST_VERSION} features manifest",
                path.display()
            )));
        }
        Ok(m)
    }

    /// Loads the feature items of the given splits and conditions, in
    /// manifest order.
    pub fn load_features(&self, splits: &[Split], conditions: &[SnrCondition]) -> Result<Vec<FeatureItem>> {
        let m = self.load_features_manifest()?;
        let fdir = self.features_dir();
        m.items
            .par_iter()
            .filter(|r| splits.contains(&r.split) && conditions.contains(&r.condition))
            .map(|r| {
                let features = read_features(&fdir.join(&r.dir), r)?;
                let target = AlignmentTarget::from_matrix(
                    &read_matrix(&fdir.join(&r.target), "extract")?,
                    features.num_states(),
                )?;
                let item = FeatureItem {
                    split: r.split,
                    features,
                    target,
                };
                super::pipeline::check_item(&item)?;
                Ok(item)
            })
            .collect()
    }

    /// Trains `kinds` on the extracted train and validation splits and
    /// writes their checkpoints.
    pub fn train(&self, cfg: &ExperimentConfig, kinds: &[ModelKind]) -> Result<TrainedModels> {
        let seed = self.load_features_manifest()?.seed;
        let items = self.load_features(&[Split::Train, Split::Val], &cfg.snr_grid)?;
        let models = train_models(cfg, &items, kinds)?;
        let dir = self.models_dir();
        let num_states = models.priors.len();
        for (kind, m) in &models.models {
            let ck = match m {
                TrainedModel::Estimator(e) => e.to_checkpoint(num_states),
                TrainedModel::Dfn(d) => d.to_checkpoint(),
            };
            debug_assert_eq!(ck.model, *kind);
            ck.save(&dir)?;
        }
        let mut record = self.load_training().unwrap_or(TrainingRecord {
            seed,
            priors: models.priors.clone(),
            summaries: BTreeMap::new(),
        });
        if record.seed != seed {
            record.summaries.clear();
        }
        record.seed = seed;
        record.priors = models.priors.clone();
        record
            .summaries
            .extend(models.summaries.iter().map(|(k, s)| (*k, s.clone())));
        write_json(&dir.join("training.json"), &record)?;
        Ok(models)
    }

    pub fn load_training(&self) -> Result<TrainingRecord> {
        read_json(&self.models_dir().join("training.json"), "train")
    }

    /// Loads the checkpoints needed by `strategies`.
    pub fn load_models(&self, strategies: &[Strategy]) -> Result<TrainedModels> {
        let record = self.load_training()?;
        let mut out = TrainedModels {
            priors: record.priors,
            summaries: record.summaries,
            ..TrainedModels::default()
        };
        for kind in ModelKind::ALL {
            if !strategies.iter().any(|s| s.model() == Some(kind)) {
                continue;
            }
            let path = Checkpoint::json_path(&self.models_dir(), kind);
            if !path.exists() {
                return Err(Error::MissingArtifact {
                    path,
                    producer: "train",
                });
            }
            let ck = Checkpoint::load(&path)?;
            if ck.model != kind {
                return Err(Error::InvalidInput(format!(
                    "{} holds a {} model",
                    path.display(),
                    ck.model.name()
                )));
            }
            let model = match kind {
                ModelKind::DswMse | ModelKind::DswCe => TrainedModel::Estimator(WeightEstimator::from_checkpoint(ck)?),
                ModelKind::DfnLstm | ModelKind::DfnBlstm => TrainedModel::Dfn(Dfn::from_checkpoint(ck)?),
            };
            out.models.insert(kind, model);
        }
        Ok(out)
    }

    /// Writes fused log-posteriors of each strategy for the test split.
    pub fn fuse(&self, cfg: &ExperimentConfig, strategies: &[Strategy], only: Option<SnrCondition>) -> Result<usize> {
        let conditions = conditions_filter(&cfg.snr_grid, only)?;
        let items = self.load_features(&[Split::Test], &conditions)?;
        let models = self.load_models(strategies)?;
        let jobs: Vec<(Strategy, &FeatureItem)> = strategies
            .iter()
            .flat_map(|&s| items.iter().map(move |i| (s, i)))
            .collect();
        jobs.par_iter()
            .map(|&(s, item)| {
                let scores = fuse_item(cfg, s, item, &models.models)?;
                let path = self.fused_path(s, &item.features.id, item.features.condition);
                if let Some(dir) = path.parent() {
                    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
                }
                avpf::write(&path, scores.frames())
            })
            .collect::<Result<Vec<()>>>()?;
        Ok(jobs.len())
    }

    /// Viterbi-decodes the fused scores written by `fuse`.
    pub fn decode(&self, cfg: &ExperimentConfig, strategies: &[Strategy], only: Option<SnrCondition>) -> Result<()> {
        let conditions = conditions_filter(&cfg.snr_grid, only)?;
        let manifest = self.load_synth()?;
        let world = self.load_world(&manifest)?;
        let graph = DecodingGraph::new(&world.lexicon, &world.lm, &cfg.decode.graph)?;
        let priors = if cfg.decode.prior_scale > 0.0 {
            self.load_training()?.priors
        } else {
            Vec::new()
        };
        let records: Vec<FeatureRecord> = self
            .load_features_manifest()?
            .items
            .into_iter()
            .filter(|r| r.split == Split::Test && conditions.contains(&r.condition))
            .collect();
        for &s in strategies {
            let hyps = records
                .par_iter()
                .map(|r| {
                    let scores = FusedLogPosterior::new(read_matrix(&self.fused_path(s, &r.id, r.condition), "fuse")?)?;
                    let d = decode_scores(cfg, &graph, &scores, &priors)?;
                    Ok(Hypothesis {
                        id: r.id.clone(),
                        condition: r.condition,
                        words: d.word_labels(&graph),
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            write_json(&self.decoded_path(s), &hyps)?;
        }
        Ok(())
    }

    /// Scores decoded hypotheses against the references and writes
    /// `results.csv` and `results.json`.
    pub fn evaluate(
        &self,
        cfg: &ExperimentConfig,
        strategies: &[Strategy],
        only: Option<SnrCondition>,
    ) -> Result<SweepResults> {
        let conditions = conditions_filter(&cfg.snr_grid, only)?;
        let m = self.load_features_manifest()?;
        let refs: BTreeMap<(String, String), &FeatureRecord> = m
            .items
            .iter()
            .filter(|r| r.split == Split::Test)
            .map(|r| ((r.id.clone(), r.condition.to_string()), r))
            .collect();
        let mut utterances = Vec::new();
        for &s in strategies {
            let hyps: Vec<Hypothesis> = read_json(&self.decoded_path(s), "decode")?;
            for c in &conditions {
                let expected = refs.keys().filter(|(_, k)| *k == c.to_string()).count();
                let found = hyps.iter().filter(|h| h.condition == *c).count();
                if found != expected {
                    return Err(Error::MissingArtifact {
                        path: self.decoded_path(s),
                        producer: "decode",
                    });
                }
            }
            for h in hyps.into_iter().filter(|h| conditions.contains(&h.condition)) {
                let r = refs.get(&(h.id.clone(), h.condition.to_string())).ok_or_else(|| {
                    Error::InvalidInput(format!("hypothesis for unknown test item {} at {}", h.id, h.condition))
                })?;
                utterances.push(UtteranceResult {
                    id: h.id,
                    strategy: s,
                    condition: h.condition,
                    report: wer(&r.words, &h.words),
                    reference: r.words.clone(),
                    hypothesis: h.words,
                });
            }
        }
        let training = self.load_training().map(|t| t.summaries).unwrap_or_default();
        let seed = SeedResult::from_utterances(m.seed, strategies, &conditions, utterances, training);
        let results = SweepResults::new(strategies.to_vec(), conditions, vec![seed])?;
        results.write(&self.root)?;
        Ok(results)
    }

    /// Renders `results.json` as a text table and WER-vs-SNR plot data.
    pub fn report(&self) -> Result<String> {
        let path = self.results_path();
        if !path.exists() {
            return Err(Error::MissingArtifact {
                path,
                producer: "evaluate` or `sweep",
            });
        }
        let results = SweepResults::load(&path)?;
        let table = results.render_table();
        write_text(&self.root.join("report.txt"), &table)?;
        write_text(&self.root.join("wer_vs_snr.csv"), &results.plot_csv()?)?;
        Ok(table)
    }
}

const STREAM_FILES: [&str; 3] = ["a.avpf", "va.avpf", "vs.avpf"];

fn write_features(dir: &Path, f: &UtteranceFeatures) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    for (p, name) in f.posteriors.iter().zip(STREAM_FILES) {
        avpf::write(dir.join(name), p.frames())?;
    }
    avpf::write(dir.join("early.avpf"), f.early.frames())?;
    avpf::write(dir.join("reliability.avpf"), &f.reliability)?;
    avpf::write(dir.join("truth.avpf"), &f.truth.to_matrix())
}

fn read_features(dir: &Path, r: &FeatureRecord) -> Result<UtteranceFeatures> {
    let posteriors = StreamId::ALL
        .iter()
        .zip(STREAM_FILES)
        .map(|(&s, name)| {
            let m = read_matrix(&dir.join(name), "extract")?;
            PosteriorSequence::from_raw(s, &m, AUDIO_FRAME_SHIFT)
        })
        .collect::<Result<Vec<_>>>()?;
    let early = FusedLogPosterior::new(read_matrix(&dir.join("early.avpf"), "extract")?)?;
    let reliability = read_matrix(&dir.join("reliability.avpf"), "extract")?;
    let truth = AlignmentTarget::from_matrix(
        &read_matrix(&dir.join("truth.avpf"), "extract")?,
        posteriors[0].num_states(),
    )?;
    if truth.len() != r.num_frames {
        return Err(Error::Shape(format!(
            "{}: manifest says {} frames, files hold {}",
            r.id,
            r.num_frames,
            truth.len()
        )));
    }
    Ok(UtteranceFeatures {
        id: r.id.clone(),
        words: r.words.clone(),
        condition: r.condition,
        truth,
        posteriors,
        early,
        reliability,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn condition_tags_are_file_safe() {
        assert_eq!(condition_tag(SnrCondition::Db(-9.0)), "snrm9");
        assert_eq!(condition_tag(SnrCondition::Db(3.0)), "snr3");
        assert_eq!(condition_tag(SnrCondition::Db(1.5)), "snr1p5");
        assert_eq!(condition_tag(SnrCondition::Clean), "clean");
    }

    #[test]
    fn distortion_track_round_trip() {
        let d = vec![
            FrameDistortion::default(),
            FrameDistortion {
                brightness: 0.25,
                blur: 3,
                rotation_deg: -10.0,
            },
        ];
        assert_eq!(distortion_from_matrix(&distortion_matrix(&d)).unwrap(), d);
        let bad = Matrix::from_rows(&[[0.0, 1.5, 0.0]]).unwrap();
        assert!(distortion_from_matrix(&bad).is_err());
    }

    #[test]
    fn missing_stage_names_its_producer() {
        let dir = tempfile::tempdir().unwrap();
        let store = Store::new(dir.path());
        match store.load_synth() {
            Err(Error::MissingArtifact { producer, .. }) => assert_eq!(producer, "synth"),
            other => panic!("unexpected {other:?}"),
        }
        match store.report() {
            Err(Error::MissingArtifact { producer, .. }) => assert!(producer.contains("evaluate")),
            other => panic!("unexpected {other:?}"),
        }
    }
}
