//! Decision fusion network: a recurrent network mapping the linear stream
//! posteriors and the reliability sequence to fused log-posteriors.

use avfusion_nn::{train, FrameLoss, LayerSpec, Network, Objective, TrainConfig, TrainHistory};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::learned::{quantize_parameters, Checkpoint, ModelKind, Standardizer};
use crate::error::{Error, Result};
use crate::types::{FusedLogPosterior, Matrix, PosteriorSequence, StreamId};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DfnVariant {
    Lstm,
    Blstm,
}

impl DfnVariant {
    pub fn model_kind(self) -> ModelKind {
        match self {
            DfnVariant::Lstm => ModelKind::DfnLstm,
            DfnVariant::Blstm => ModelKind::DfnBlstm,
        }
    }
}

/// Topology and training schedule. The three dense widths keep an 8:4:1
/// ratio by default.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DfnConfig {
    pub dense: Vec<usize>,
    /// Cells per direction in each recurrent layer.
    pub hidden: usize,
    pub recurrent_layers: usize,
    pub dropout: f64,
    pub train: TrainConfig,
}

impl Default for DfnConfig {
    fn default() -> Self {
        Self {
            dense: vec![256, 128, 64],
            hidden: 64,
            recurrent_layers: 3,
            dropout: 0.15,
            train: TrainConfig::default(),
        }
    }
}

impl DfnConfig {
    pub fn layer_specs(&self, variant: DfnVariant, num_states: usize) -> Vec<LayerSpec> {
        let mut specs = Vec::new();
        for &units in &self.dense {
            specs.extend([
                LayerSpec::Dense { units },
                LayerSpec::Relu,
                LayerSpec::LayerNorm,
                LayerSpec::Dropout { p: self.dropout },
            ]);
        }
        for _ in 0..self.recurrent_layers {
            specs.push(match variant {
                DfnVariant::Lstm => LayerSpec::Lstm { hidden: self.hidden },
                DfnVariant::Blstm => LayerSpec::Blstm { hidden: self.hidden },
            });
        }
        specs.push(LayerSpec::Dense { units: num_states });
        specs.push(LayerSpec::LogSoftmax);
        specs
    }
}

/// Input width `M * S + R` for `M` streams.
pub fn dfn_input_dim(num_states: usize, reliability_dim: usize) -> usize {
    StreamId::COUNT * num_states + reliability_dim
}

/// Frame-wise concatenation `[p_A; p_VA; p_VS; r]` of linear posteriors and
/// (already standardised) reliability values.
pub fn dfn_input(posteriors: &[PosteriorSequence], reliability: &Matrix) -> Result<Matrix> {
    if posteriors.len() != StreamId::COUNT {
        return Err(Error::Shape(format!(
            "{} posterior streams, expected 3",
            posteriors.len()
        )));
    }
    for (p, s) in posteriors.iter().zip(StreamId::ALL) {
        if p.stream() != s {
            return Err(Error::InvalidInput(format!("stream {} out of order", p.stream())));
        }
    }
    let mut blocks: Vec<&Matrix> = posteriors.iter().map(PosteriorSequence::frames).collect();
    blocks.push(reliability);
    if blocks.iter().any(|b| b.rows() != reliability.rows()) {
        return Err(Error::Shape(
            "posterior and reliability sequences differ in length".into(),
        ));
    }
    Ok(Matrix::hstack(&blocks)?)
}

#[derive(Clone, Debug)]
pub struct Dfn {
    pub variant: DfnVariant,
    pub num_states: usize,
    pub net: Network,
    pub standardizer: Standardizer,
}

impl Dfn {
    pub fn new(
        variant: DfnVariant,
        num_states: usize,
        reliability_dim: usize,
        config: &DfnConfig,
        seed: u64,
    ) -> Result<Self> {
        let net = Network::new(
            dfn_input_dim(num_states, reliability_dim),
            &config.layer_specs(variant, num_states),
            &mut ChaCha8Rng::seed_from_u64(seed),
        )?;
        Ok(Self {
            variant,
            num_states,
            net,
            standardizer: Standardizer::identity(reliability_dim),
        })
    }

    pub fn input(&self, posteriors: &[PosteriorSequence], reliability: &Matrix) -> Result<Matrix> {
        let x = dfn_input(posteriors, &self.standardizer.apply(reliability)?)?;
        if x.cols() != self.net.input_dim() {
            return Err(Error::Shape(format!(
                "input has {} columns, network expects {}",
                x.cols(),
                self.net.input_dim()
            )));
        }
        Ok(x)
    }

    pub fn fuse(&self, posteriors: &[PosteriorSequence], reliability: &Matrix) -> Result<FusedLogPosterior> {
        FusedLogPosterior::new(self.net.forward(&self.input(posteriors, reliability)?)?)
    }

    pub fn to_checkpoint(&self) -> Checkpoint {
        Checkpoint {
            model: self.variant.model_kind(),
            num_states: self.num_states,
            net: self.net.clone(),
            standardizer: self.standardizer.clone(),
        }
    }

    pub fn from_checkpoint(ck: Checkpoint) -> Result<Self> {
        let variant = match ck.model {
            ModelKind::DfnLstm => DfnVariant::Lstm,
            ModelKind::DfnBlstm => DfnVariant::Blstm,
            other => {
                return Err(Error::InvalidInput(format!(
                    "checkpoint holds {}, not a DFN",
                    other.name()
                )))
            }
        };
        if ck.net.input_dim() != dfn_input_dim(ck.num_states, ck.standardizer.dim())
            || ck.net.output_dim() != ck.num_states
        {
            return Err(Error::Shape(
                "checkpoint dimensions do not match its state count".into(),
            ));
        }
        Ok(Self {
            variant,
            num_states: ck.num_states,
            net: ck.net,
            standardizer: ck.standardizer,
        })
    }
}

/// One training utterance for the DFN.
#[derive(Clone, Debug)]
pub struct DfnExample {
    pub posteriors: Vec<PosteriorSequence>,
    /// Raw `T x R` reliability sequence.
    pub reliability: Matrix,
    pub targets: Vec<usize>,
}

struct Prepared {
    input: Matrix,
    targets: Vec<usize>,
}

struct CeObjective;

impl Objective for CeObjective {
    type Example = Prepared;

    fn input<'a>(&self, ex: &'a Prepared) -> &'a Matrix {
        &ex.input
    }

    fn loss_and_grad(&self, ex: &Prepared, out: &Matrix) -> avfusion_nn::Result<FrameLoss> {
        let (sum, grad) = avfusion_nn::loss::ce_loss_sum(out, &ex.targets)?;
        Ok(FrameLoss {
            sum,
            frames: out.rows(),
            grad,
        })
    }
}

fn prepare(dfn: &Dfn, data: &[DfnExample]) -> Result<Vec<Prepared>> {
    data.iter()
        .map(|ex| {
            if ex.targets.len() != ex.reliability.rows() {
                return Err(Error::Shape("DFN targets and inputs differ in length".into()));
            }
            Ok(Prepared {
                input: dfn.input(&ex.posteriors, &ex.reliability)?,
                targets: ex.targets.clone(),
            })
        })
        .collect()
}

/// Trains a DFN on the frame cross-entropy against `targets`.
pub fn train_dfn(
    train_set: &[DfnExample],
    val_set: &[DfnExample],
    variant: DfnVariant,
    config: &DfnConfig,
) -> Result<(Dfn, TrainHistory)> {
    let first = train_set
        .first()
        .ok_or_else(|| Error::InvalidInput("DFN training split is empty".into()))?;
    if val_set.is_empty() {
        return Err(Error::InvalidInput("DFN validation split is empty".into()));
    }
    let s = first.posteriors[0].num_states();
    let mut dfn = Dfn::new(variant, s, first.reliability.cols(), config, config.train.seed)?;
    dfn.standardizer = Standardizer::fit(train_set.iter().map(|e| &e.reliability))?;
    let tr = prepare(&dfn, train_set)?;
    let va = prepare(&dfn, val_set)?;
    let history = train(&mut dfn.net, &CeObjective, &tr, &va, &config.train)?;
    quantize_parameters(&mut dfn.net);
    Ok((dfn, history))
}

/// Mean validation cross-entropy of a trained DFN.
pub fn dfn_cross_entropy(dfn: &Dfn, data: &[DfnExample]) -> Result<f64> {
    Ok(avfusion_nn::evaluate(&dfn.net, &CeObjective, &prepare(dfn, data)?)?)
}
