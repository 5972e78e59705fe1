//! Experiment configuration, the in-memory pipeline, the SNR sweep and its
//! result tables.

pub mod config;
pub mod pipeline;
pub mod results;
pub mod store;
pub mod sweep;

pub use config::{CorpusConfig, DecodeConfig, ExperimentConfig, Strategy};
pub use pipeline::{
    plan_corpus, prepare_features, train_models, CorpusEntry, FeatureItem, Split, TrainedModel, TrainedModels,
};
pub use results::{SeedResult, SweepResults, UtteranceResult};
pub use store::{condition_tag, Store};
pub use sweep::{evaluate_items, run_seed, run_sweep, with_threads, SeedRun};
