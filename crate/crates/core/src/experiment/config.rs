//! Strict JSON experiment configuration.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::decode::GraphConfig;
use crate::error::{Error, Result};
use crate::extract::ExtractOptions;
use crate::fusion::{DfnConfig, EstimatorConfig, ModelKind, OracleMode};
use crate::synth::{NoiseKind, SnrCondition, WorldConfig};
use crate::types::is_on_simplex;

/// A fusion strategy (or single stream) that produces decodable scores.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Strategy {
    #[serde(rename = "ao")]
    Ao,
    #[serde(rename = "va")]
    Va,
    #[serde(rename = "vs")]
    Vs,
    #[serde(rename = "early")]
    Early,
    #[serde(rename = "static")]
    Static,
    #[serde(rename = "dsw-mse")]
    DswMse,
    #[serde(rename = "dsw-ce")]
    DswCe,
    #[serde(rename = "oracle")]
    Oracle,
    #[serde(rename = "oracle-linear")]
    OracleLinear,
    #[serde(rename = "dfn-lstm")]
    DfnLstm,
    #[serde(rename = "dfn-blstm")]
    DfnBlstm,
}

impl Strategy {
    pub const ALL: [Strategy; 11] = [
        Strategy::Ao,
        Strategy::Va,
        Strategy::Vs,
        Strategy::Early,
        Strategy::Static,
        Strategy::DswMse,
        Strategy::DswCe,
        Strategy::Oracle,
        Strategy::OracleLinear,
        Strategy::DfnLstm,
        Strategy::DfnBlstm,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Strategy::Ao => "ao",
            Strategy::Va => "va",
            Strategy::Vs => "vs",
            Strategy::Early => "early",
            Strategy::Static => "static",
            Strategy::DswMse => "dsw-mse",
            Strategy::DswCe => "dsw-ce",
            Strategy::Oracle => "oracle",
            Strategy::OracleLinear => "oracle-linear",
            Strategy::DfnLstm => "dfn-lstm",
            Strategy::DfnBlstm => "dfn-blstm",
        }
    }

    /// The trained model this strategy needs, if any.
    pub fn model(self) -> Option<ModelKind> {
        match self {
            Strategy::DswMse => Some(ModelKind::DswMse),
            Strategy::DswCe => Some(ModelKind::DswCe),
            Strategy::DfnLstm => Some(ModelKind::DfnLstm),
            Strategy::DfnBlstm => Some(ModelKind::DfnBlstm),
            _ => None,
        }
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Strategy {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        Strategy::ALL.into_iter().find(|k| k.name() == s).ok_or_else(|| {
            let names: Vec<&str> = Strategy::ALL.iter().map(|k| k.name()).collect();
            format!("unknown strategy `{s}`; expected one of {}", names.join(", "))
        })
    }
}

/// Sizes of the per-seed corpus splits.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CorpusConfig {
    pub train: usize,
    pub val: usize,
    pub test: usize,
    /// Inclusive range of words per utterance.
    pub words: (usize, usize),
}

impl Default for CorpusConfig {
    fn default() -> Self {
        Self {
            train: 60,
            val: 15,
            test: 30,
            words: (3, 5),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DecodeConfig {
    pub graph: GraphConfig,
    /// Pruning beam in log units; `None` decodes exactly.
    pub beam: Option<f64>,
    /// Weight of the state-prior division; 0 uses the scores as they are.
    pub prior_scale: f64,
}

impl Default for DecodeConfig {
    fn default() -> Self {
        Self {
            graph: GraphConfig::default(),
            beam: None,
            prior_scale: 0.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub world: WorldConfig,
    pub snr_grid: Vec<SnrCondition>,
    pub noise: NoiseKind,
    pub strategies: Vec<Strategy>,
    pub seeds: Vec<u64>,
    pub corpus: CorpusConfig,
    pub extract: ExtractOptions,
    /// Objective of the `oracle` strategy; `oracle-linear` always uses the
    /// linear one.
    pub oracle_mode: OracleMode,
    /// Stream weights (A, VA, VS) of the `static` strategy.
    pub static_weights: Vec<f64>,
    pub estimator: EstimatorConfig,
    pub dfn: DfnConfig,
    pub decode: DecodeConfig,
    /// Output directory; the command line and environment take precedence.
    pub out: Option<String>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            world: WorldConfig::default(),
            snr_grid: SnrCondition::grid(),
            noise: NoiseKind::Babble,
            strategies: Strategy::ALL.to_vec(),
            seeds: vec![1],
            corpus: CorpusConfig::default(),
            extract: ExtractOptions::default(),
            oracle_mode: OracleMode::Renormalized,
            static_weights: vec![1.0 / 3.0; 3],
            estimator: EstimatorConfig::default(),
            dfn: DfnConfig::default(),
            decode: DecodeConfig::default(),
            out: None,
        }
    }
}

fn allowed_condition(c: SnrCondition) -> bool {
    match c {
        SnrCondition::Clean => true,
        SnrCondition::Db(d) => SnrCondition::grid().contains(&SnrCondition::Db(d)),
    }
}

impl ExperimentConfig {
    /// Parses and validates; errors carry the offending field path.
    pub fn from_json(text: &str) -> Result<Self> {
        let de = &mut serde_json::Deserializer::from_str(text);
        let cfg: Self = serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            Error::config(
                if path == "." { String::from("<root>") } else { path },
                e.inner().to_string(),
            )
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }

    pub fn validate(&self) -> Result<()> {
        self.world.validate()?;
        if self.snr_grid.is_empty() {
            return Err(Error::config("snr_grid", "at least one condition is required"));
        }
        for (i, c) in self.snr_grid.iter().enumerate() {
            if !allowed_condition(*c) {
                return Err(Error::config(
                    format!("snr_grid[{i}]"),
                    format!("{c} is not one of -9, -6, -3, 0, 3, 6, 9, clean"),
                ));
            }
            if self.snr_grid[..i].contains(c) {
                return Err(Error::config(format!("snr_grid[{i}]"), format!("{c} listed twice")));
            }
        }
        if self.strategies.is_empty() {
            return Err(Error::config("strategies", "at least one strategy is required"));
        }
        if self.seeds.is_empty() {
            return Err(Error::config("seeds", "at least one seed is required"));
        }
        let c = &self.corpus;
        for (name, n) in [("train", c.train), ("val", c.val), ("test", c.test)] {
            if n == 0 {
                return Err(Error::config(format!("corpus.{name}"), "split must not be empty"));
            }
        }
        if c.words.0 == 0 || c.words.0 > c.words.1 {
            return Err(Error::config("corpus.words", "need 1 <= min <= max words"));
        }
        if self.static_weights.len() != 3 || !is_on_simplex(&self.static_weights, 1e-9) {
            return Err(Error::config(
                "static_weights",
                "need three non-negative weights summing to 1",
            ));
        }
        if self.estimator.hidden.iter().any(|&h| h == 0) {
            return Err(Error::config("estimator.hidden", "layer widths must be positive"));
        }
        self.estimator
            .train
            .validate()
            .map_err(|e| Error::config("estimator.train", e.to_string()))?;
        let d = &self.dfn;
        if d.dense.iter().any(|&h| h == 0) {
            return Err(Error::config("dfn.dense", "layer widths must be positive"));
        }
        if d.hidden == 0 || d.recurrent_layers == 0 {
            return Err(Error::config(
                "dfn.hidden",
                "need at least one recurrent layer with cells",
            ));
        }
        if !(0.0..1.0).contains(&d.dropout) {
            return Err(Error::config("dfn.dropout", "must lie in [0, 1)"));
        }
        d.train
            .validate()
            .map_err(|e| Error::config("dfn.train", e.to_string()))?;
        let g = &self.decode.graph;
        if !(g.self_loop > 0.0 && g.self_loop < 1.0) {
            return Err(Error::config("decode.graph.self_loop", "must lie in (0, 1)"));
        }
        if !(g.lm_scale >= 0.0) {
            return Err(Error::config("decode.graph.lm_scale", "must be non-negative"));
        }
        if !(self.decode.prior_scale >= 0.0) {
            return Err(Error::config("decode.prior_scale", "must be non-negative"));
        }
        if self.decode.beam.is_some_and(|b| !(b > 0.0)) {
            return Err(Error::config("decode.beam", "must be positive"));
        }
        if self.extract.top_k == 0 {
            return Err(Error::config("extract.top_k", "must be positive"));
        }
        Ok(())
    }

    /// Models that must be trained for the configured strategies.
    pub fn required_models(&self) -> Vec<ModelKind> {
        ModelKind::ALL
            .into_iter()
            .filter(|m| self.strategies.iter().any(|s| s.model() == Some(*m)))
            .collect()
    }
}
