//! In-memory experiment pipeline shared by the sweep and the staged
//! commands: corpus planning, feature preparation, training, fusion and
//! decoding.

use std::collections::BTreeMap;

use avfusion_nn::TrainHistory;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::{ExperimentConfig, Strategy};
use crate::decode::{divide_by_priors, viterbi_decode, DecodeOptions, Decoding, DecodingGraph};
use crate::error::{Error, Result};
use crate::extract::{clean_alignment, extract, UtteranceFeatures};
use crate::fusion::dfn::dfn_cross_entropy;
use crate::fusion::{
    dynamic_fuse, oracle_weights, static_fuse, train_dfn, train_weight_estimator, Criterion, Dfn, DfnExample,
    DfnVariant, EstimatorExample, ModelKind, OracleMode, WeightEstimator,
};
use crate::synth::{derive_seed, mix_noise, sample_utterance_with_id, SnrCondition, Utterance, World};
use crate::types::{AlignmentTarget, FusedLogPosterior};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    Train,
    Val,
    Test,
}

impl Split {
    pub fn name(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        }
    }
}

/// One planned utterance of the corpus.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CorpusEntry {
    pub id: String,
    pub split: Split,
    pub seed: u64,
    pub length_words: usize,
}

/// Deterministic split plan for one experiment seed.
pub fn plan_corpus(cfg: &ExperimentConfig, seed: u64) -> Vec<CorpusEntry> {
    let c = &cfg.corpus;
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, "corpus-lengths"));
    let mut out = Vec::with_capacity(c.train + c.val + c.test);
    for (split, n) in [(Split::Train, c.train), (Split::Val, c.val), (Split::Test, c.test)] {
        for i in 0..n {
            let id = format!("{}-{i:04}", split.name());
            out.push(CorpusEntry {
                seed: derive_seed(seed, &id),
                length_words: rng.gen_range(c.words.0..=c.words.1),
                id,
                split,
            });
        }
    }
    out
}

pub fn render_entry(world: &World, entry: &CorpusEntry) -> Result<Utterance> {
    sample_utterance_with_id(world, entry.length_words, entry.seed, entry.id.clone())
}

/// Features of one utterance in one condition, with its training target.
#[derive(Clone, Debug)]
pub struct FeatureItem {
    pub split: Split,
    pub features: UtteranceFeatures,
    /// Forced alignment of the clean audio, shared by all conditions.
    pub target: AlignmentTarget,
}

/// Noisy variant of a clean utterance in `condition`.
pub fn condition_variant(cfg: &ExperimentConfig, clean: &Utterance, condition: SnrCondition) -> Result<Utterance> {
    mix_noise(clean, cfg.noise, condition, clean.seed)
}

/// Extracts every (utterance, condition) pair in parallel; output order is
/// corpus order, then grid order.
pub fn prepare_features(
    cfg: &ExperimentConfig,
    world: &World,
    graph: &DecodingGraph,
    entries: &[CorpusEntry],
) -> Result<Vec<FeatureItem>> {
    let per_entry: Vec<Vec<FeatureItem>> = entries
        .par_iter()
        .map(|e| {
            let clean = render_entry(world, e)?;
            let target = clean_alignment(world, graph, &clean)?;
            cfg.snr_grid
                .iter()
                .map(|&c| {
                    let u = condition_variant(cfg, &clean, c)?;
                    Ok(FeatureItem {
                        split: e.split,
                        features: extract(world, &u, &cfg.extract)?,
                        target: target.clone(),
                    })
                })
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<_>>()?;
    Ok(per_entry.into_iter().flatten().collect())
}

/// A trained fusion model.
#[derive(Clone, Debug)]
pub enum TrainedModel {
    Estimator(WeightEstimator),
    Dfn(Dfn),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainSummary {
    pub initial_val_loss: f64,
    pub best_val_loss: f64,
    pub best_step: usize,
    pub steps: usize,
    /// Mean frame cross-entropy of the fused output on the validation split.
    pub val_cross_entropy: f64,
}

#[derive(Clone, Debug, Default)]
pub struct TrainedModels {
    pub models: BTreeMap<ModelKind, TrainedModel>,
    pub summaries: BTreeMap<ModelKind, TrainSummary>,
    /// Relative state frequencies of the training targets.
    pub priors: Vec<f64>,
}

/// Relative frequency of each state in the targets, floored so every prior
/// stays positive.
pub fn state_priors<'a>(targets: impl IntoIterator<Item = &'a AlignmentTarget>, num_states: usize) -> Vec<f64> {
    let mut counts = vec![1.0; num_states];
    for t in targets {
        for &s in t.states() {
            counts[s] += 1.0;
        }
    }
    let total: f64 = counts.iter().sum();
    counts.iter().map(|c| c / total).collect()
}

fn estimator_examples(items: &[&FeatureItem], oracle: Option<OracleMode>) -> Result<Vec<EstimatorExample>> {
    items
        .par_iter()
        .map(|it| {
            let logs = it.features.log_posteriors();
            let oracle = match oracle {
                Some(mode) => Some(oracle_weights(&logs, &it.target, mode)?.matrix().clone()),
                None => None,
            };
            Ok(EstimatorExample {
                reliability: it.features.reliability.clone(),
                logs,
                targets: it.target.states().to_vec(),
                oracle,
            })
        })
        .collect()
}

fn dfn_examples(items: &[&FeatureItem]) -> Vec<DfnExample> {
    items
        .iter()
        .map(|it| DfnExample {
            posteriors: it.features.posteriors.clone(),
            reliability: it.features.reliability.clone(),
            targets: it.target.states().to_vec(),
        })
        .collect()
}

fn summary(h: &TrainHistory, val_ce: f64) -> TrainSummary {
    TrainSummary {
        initial_val_loss: h.initial_val_loss,
        best_val_loss: h.best_val_loss,
        best_step: h.best_step,
        steps: h.steps,
        val_cross_entropy: val_ce,
    }
}

fn estimator_val_ce(est: &WeightEstimator, val: &[EstimatorExample]) -> Result<f64> {
    let mut sum = 0.0;
    let mut n = 0usize;
    for ex in val {
        let w = est.weights(&ex.reliability)?;
        for (t, &s) in ex.targets.iter().enumerate() {
            sum += crate::fusion::estimator::fused_ce_and_weight_grad(&ex.logs, w.frame(t), t, s).0;
            n += 1;
        }
    }
    Ok(sum / n.max(1) as f64)
}

fn train_one(
    kind: ModelKind,
    cfg: &ExperimentConfig,
    train: &[&FeatureItem],
    val: &[&FeatureItem],
) -> Result<(TrainedModel, TrainSummary)> {
    match kind {
        ModelKind::DswMse | ModelKind::DswCe => {
            let criterion = if kind == ModelKind::DswMse {
                Criterion::Mse
            } else {
                Criterion::Ce
            };
            let oracle = (criterion == Criterion::Mse).then_some(cfg.oracle_mode);
            let tr = estimator_examples(train, oracle)?;
            let va = estimator_examples(val, oracle)?;
            let (est, h) = train_weight_estimator(&tr, &va, criterion, &cfg.estimator)?;
            let ce = estimator_val_ce(&est, &va)?;
            Ok((TrainedModel::Estimator(est), summary(&h, ce)))
        }
        ModelKind::DfnLstm | ModelKind::DfnBlstm => {
            let variant = if kind == ModelKind::DfnLstm {
                DfnVariant::Lstm
            } else {
                DfnVariant::Blstm
            };
            let tr = dfn_examples(train);
            let va = dfn_examples(val);
            let (dfn, h) = train_dfn(&tr, &va, variant, &cfg.dfn)?;
            let ce = dfn_cross_entropy(&dfn, &va)?;
            Ok((TrainedModel::Dfn(dfn), summary(&h, ce)))
        }
    }
}

/// Trains the requested models on the train split with early stopping on the
/// validation split. Models train concurrently; each run is deterministic.
pub fn train_models(cfg: &ExperimentConfig, items: &[FeatureItem], kinds: &[ModelKind]) -> Result<TrainedModels> {
    let train: Vec<&FeatureItem> = items.iter().filter(|i| i.split == Split::Train).collect();
    let val: Vec<&FeatureItem> = items.iter().filter(|i| i.split == Split::Val).collect();
    let num_states = items
        .first()
        .map(|i| i.features.num_states())
        .ok_or_else(|| Error::InvalidInput("no features to train on".into()))?;
    let priors = state_priors(train.iter().map(|i| &i.target), num_states);
    if kinds.is_empty() {
        return Ok(TrainedModels {
            priors,
            ..TrainedModels::default()
        });
    }
    if train.is_empty() || val.is_empty() {
        return Err(Error::InvalidInput(
            "training needs non-empty train and val splits".into(),
        ));
    }
    let trained: Vec<(ModelKind, TrainedModel, TrainSummary)> = kinds
        .par_iter()
        .map(|&k| train_one(k, cfg, &train, &val).map(|(m, s)| (k, m, s)))
        .collect::<Result<_>>()?;
    let mut out = TrainedModels {
        priors,
        ..TrainedModels::default()
    };
    for (k, m, s) in trained {
        out.models.insert(k, m);
        out.summaries.insert(k, s);
    }
    Ok(out)
}

/// Decodable scores of `strategy` for one item.
pub fn fuse_item(
    cfg: &ExperimentConfig,
    strategy: Strategy,
    item: &FeatureItem,
    models: &BTreeMap<ModelKind, TrainedModel>,
) -> Result<FusedLogPosterior> {
    let f = &item.features;
    let logs = f.log_posteriors();
    if let Some(kind) = strategy.model() {
        let model = models.get(&kind).ok_or_else(|| Error::MissingArtifact {
            path: format!("models/{}.json", kind.name()).into(),
            producer: "train",
        })?;
        return match model {
            TrainedModel::Estimator(e) => e.fuse(&logs, &f.reliability),
            TrainedModel::Dfn(d) => d.fuse(&f.posteriors, &f.reliability),
        };
    }
    match strategy {
        Strategy::Ao | Strategy::Va | Strategy::Vs => {
            let i = [Strategy::Ao, Strategy::Va, Strategy::Vs]
                .iter()
                .position(|s| *s == strategy)
                .unwrap_or(0);
            FusedLogPosterior::new(logs[i].clone())
        }
        Strategy::Early => Ok(f.early.clone()),
        Strategy::Static => static_fuse(&logs, &cfg.static_weights),
        Strategy::Oracle => dynamic_fuse(&logs, &oracle_weights(&logs, &item.target, cfg.oracle_mode)?),
        Strategy::OracleLinear => dynamic_fuse(&logs, &oracle_weights(&logs, &item.target, OracleMode::Linear)?),
        _ => unreachable!("trained strategies handled above"),
    }
}

pub fn decode_scores(
    cfg: &ExperimentConfig,
    graph: &DecodingGraph,
    scores: &FusedLogPosterior,
    priors: &[f64],
) -> Result<Decoding> {
    let opts = DecodeOptions { beam: cfg.decode.beam };
    if cfg.decode.prior_scale > 0.0 {
        viterbi_decode(&divide_by_priors(scores, priors, cfg.decode.prior_scale)?, graph, opts)
    } else {
        viterbi_decode(scores, graph, opts)
    }
}

/// Mean of `values` and the half-width `1.96 * sd / sqrt(n)` of its normal
/// 95% interval (0 for a single value).
pub fn mean_ci(values: &[f64]) -> (f64, f64) {
    let n = values.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    if n == 1 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    (mean, 1.96 * var.sqrt() / (n as f64).sqrt())
}

/// Checks that every component of an item covers the same frames.
pub fn check_item(item: &FeatureItem) -> Result<()> {
    let t = item.features.num_frames();
    let shapes_ok = item.target.len() == t
        && item.features.reliability.rows() == t
        && item.features.early.num_frames() == t
        && item.features.posteriors.iter().all(|p| p.num_frames() == t);
    if shapes_ok {
        Ok(())
    } else {
        Err(Error::Shape(format!(
            "feature item {} has inconsistent lengths",
            item.features.id
        )))
    }
}
