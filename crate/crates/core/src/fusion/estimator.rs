//! Dynamic stream weighting: a feed-forward network maps the reliability
//! vector of each frame to stream weights on the simplex.

use avfusion_nn::{train, FrameLoss, LayerSpec, Network, NnError, Objective, TrainConfig, TrainHistory};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::combine::dynamic_fuse;
use super::learned::{quantize_parameters, Checkpoint, ModelKind, Standardizer};
use crate::error::{Error, Result};
use crate::types::{FusedLogPosterior, Matrix, StreamWeights};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Criterion {
    /// Regress the oracle weights.
    Mse,
    /// Cross-entropy of the renormalised fused posterior against the targets.
    Ce,
}

impl Criterion {
    pub fn model_kind(self) -> ModelKind {
        match self {
            Criterion::Mse => ModelKind::DswMse,
            Criterion::Ce => ModelKind::DswCe,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EstimatorConfig {
    /// Widths of the hidden ReLU layers.
    pub hidden: Vec<usize>,
    pub train: TrainConfig,
}

impl Default for EstimatorConfig {
    fn default() -> Self {
        Self {
            hidden: vec![32],
            train: TrainConfig {
                lr0: 2e-3,
                ..TrainConfig::default()
            },
        }
    }
}

/// One training utterance for the estimator.
#[derive(Clone, Debug)]
pub struct EstimatorExample {
    /// Raw (unstandardised) `T x R` reliability sequence.
    pub reliability: Matrix,
    /// Stream log-posteriors, each `T x S`.
    pub logs: Vec<Matrix>,
    pub targets: Vec<usize>,
    /// `T x M` oracle weights; required for the MSE criterion.
    pub oracle: Option<Matrix>,
}

struct Prepared {
    input: Matrix,
    logs: Vec<Matrix>,
    targets: Vec<usize>,
    oracle: Option<Matrix>,
}

struct MseObjective;
struct CeObjective;

impl Objective for MseObjective {
    type Example = Prepared;

    fn input<'a>(&self, ex: &'a Prepared) -> &'a Matrix {
        &ex.input
    }

    fn loss_and_grad(&self, ex: &Prepared, out: &Matrix) -> avfusion_nn::Result<FrameLoss> {
        let target = ex
            .oracle
            .as_ref()
            .ok_or_else(|| NnError::Config("MSE training needs oracle weights".into()))?;
        if target.shape() != out.shape() {
            return Err(NnError::Shape(format!(
                "oracle {:?} vs output {:?}",
                target.shape(),
                out.shape()
            )));
        }
        let m = out.cols() as f64;
        let mut grad = Matrix::zeros(out.rows(), out.cols());
        let mut sum = 0.0;
        for t in 0..out.rows() {
            for i in 0..out.cols() {
                let w = out.get(t, i).exp();
                let d = w - target.get(t, i);
                sum += d * d / m;
                grad.set(t, i, 2.0 * d / m * w);
            }
        }
        Ok(FrameLoss {
            sum,
            frames: out.rows(),
            grad,
        })
    }
}

/// Per-frame cross-entropy of the renormalised weighted log-linear fusion and
/// its gradient with respect to the stream weights.
pub fn fused_ce_and_weight_grad(logs: &[Matrix], weights: &[f64], t: usize, target: usize) -> (f64, Vec<f64>) {
    let s_len = logs[0].cols();
    let fused: Vec<f64> = (0..s_len)
        .map(|s| logs.iter().zip(weights).map(|(l, w)| w * l.get(t, s)).sum())
        .collect();
    let mx = fused.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let z: f64 = fused.iter().map(|f| (f - mx).exp()).sum();
    let lse = mx + z.ln();
    let q: Vec<f64> = fused.iter().map(|f| (f - lse).exp()).collect();
    let grad = logs
        .iter()
        .map(|l| {
            let expected: f64 = q.iter().zip(l.row(t)).map(|(q, v)| q * v).sum();
            expected - l.get(t, target)
        })
        .collect();
    (lse - fused[target], grad)
}

impl Objective for CeObjective {
    type Example = Prepared;

    fn input<'a>(&self, ex: &'a Prepared) -> &'a Matrix {
        &ex.input
    }

    fn loss_and_grad(&self, ex: &Prepared, out: &Matrix) -> avfusion_nn::Result<FrameLoss> {
        let mut grad = Matrix::zeros(out.rows(), out.cols());
        let mut sum = 0.0;
        for t in 0..out.rows() {
            let w: Vec<f64> = out.row(t).iter().map(|z| z.exp()).collect();
            let (l, gw) = fused_ce_and_weight_grad(&ex.logs, &w, t, ex.targets[t]);
            sum += l;
            for i in 0..out.cols() {
                grad.set(t, i, gw[i] * w[i]);
            }
        }
        Ok(FrameLoss {
            sum,
            frames: out.rows(),
            grad,
        })
    }
}

/// Reliability-driven stream weight estimator.
#[derive(Clone, Debug)]
pub struct WeightEstimator {
    pub criterion: Criterion,
    pub net: Network,
    pub standardizer: Standardizer,
}

fn layer_specs(hidden: &[usize], streams: usize) -> Vec<LayerSpec> {
    let mut specs = Vec::new();
    for &h in hidden {
        specs.push(LayerSpec::Dense { units: h });
        specs.push(LayerSpec::Relu);
    }
    specs.push(LayerSpec::Dense { units: streams });
    specs.push(LayerSpec::LogSoftmax);
    specs
}

impl WeightEstimator {
    pub fn new(
        criterion: Criterion,
        reliability_dim: usize,
        streams: usize,
        hidden: &[usize],
        seed: u64,
    ) -> Result<Self> {
        let net = Network::new(
            reliability_dim,
            &layer_specs(hidden, streams),
            &mut ChaCha8Rng::seed_from_u64(seed),
        )?;
        Ok(Self {
            criterion,
            net,
            standardizer: Standardizer::identity(reliability_dim),
        })
    }

    /// Per-frame weights on the simplex.
    pub fn weights(&self, reliability: &Matrix) -> Result<StreamWeights> {
        let out = self.net.forward(&self.standardizer.apply(reliability)?)?;
        StreamWeights::on_simplex(out.map(f64::exp))
    }

    pub fn fuse(&self, logs: &[Matrix], reliability: &Matrix) -> Result<FusedLogPosterior> {
        dynamic_fuse(logs, &self.weights(reliability)?)
    }

    pub fn to_checkpoint(&self, num_states: usize) -> Checkpoint {
        Checkpoint {
            model: self.criterion.model_kind(),
            num_states,
            net: self.net.clone(),
            standardizer: self.standardizer.clone(),
        }
    }

    pub fn from_checkpoint(ck: Checkpoint) -> Result<Self> {
        let criterion = match ck.model {
            ModelKind::DswMse => Criterion::Mse,
            ModelKind::DswCe => Criterion::Ce,
            other => {
                return Err(Error::InvalidInput(format!(
                    "checkpoint holds {}, not a weight estimator",
                    other.name()
                )))
            }
        };
        Ok(Self {
            criterion,
            net: ck.net,
            standardizer: ck.standardizer,
        })
    }
}

fn prepare(examples: &[EstimatorExample], st: &Standardizer, criterion: Criterion) -> Result<Vec<Prepared>> {
    examples
        .iter()
        .map(|ex| {
            let t_len = ex.reliability.rows();
            if ex.targets.len() != t_len || ex.logs.iter().any(|l| l.rows() != t_len) {
                return Err(Error::Shape("estimator example components differ in length".into()));
            }
            if criterion == Criterion::Mse && ex.oracle.is_none() {
                return Err(Error::InvalidInput("MSE criterion requires oracle weights".into()));
            }
            Ok(Prepared {
                input: st.apply(&ex.reliability)?,
                logs: ex.logs.clone(),
                targets: ex.targets.clone(),
                oracle: ex.oracle.clone(),
            })
        })
        .collect()
}

/// Trains an estimator with early stopping on `val`.
pub fn train_weight_estimator(
    train_set: &[EstimatorExample],
    val_set: &[EstimatorExample],
    criterion: Criterion,
    config: &EstimatorConfig,
) -> Result<(WeightEstimator, TrainHistory)> {
    let first = train_set
        .first()
        .ok_or_else(|| Error::InvalidInput("estimator training split is empty".into()))?;
    let streams = first.logs.len();
    let mut est = WeightEstimator::new(
        criterion,
        first.reliability.cols(),
        streams,
        &config.hidden,
        config.train.seed,
    )?;
    est.standardizer = Standardizer::fit(train_set.iter().map(|e| &e.reliability))?;
    let tr = prepare(train_set, &est.standardizer, criterion)?;
    let va = prepare(val_set, &est.standardizer, criterion)?;
    let history = match criterion {
        Criterion::Mse => train(&mut est.net, &MseObjective, &tr, &va, &config.train)?,
        Criterion::Ce => train(&mut est.net, &CeObjective, &tr, &va, &config.train)?,
    };
    quantize_parameters(&mut est.net);
    Ok((est, history))
}
