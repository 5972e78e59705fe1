//! Stream integration strategies.

pub mod combine;
pub mod dfn;
pub mod estimator;
pub mod learned;
pub mod oracle;

pub use combine::{dynamic_fuse, early_integration, static_fuse, EarlyLayout};
pub use dfn::{dfn_input, dfn_input_dim, train_dfn, Dfn, DfnConfig, DfnExample, DfnVariant};
pub use estimator::{train_weight_estimator, Criterion, EstimatorConfig, EstimatorExample, WeightEstimator};
pub use learned::{Checkpoint, CheckpointHeader, ModelKind, Standardizer};
pub use oracle::{fused_cross_entropy, oracle_weights, oracle_weights_with, OracleMode, SolverOptions};
