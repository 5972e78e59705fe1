//! Per-frame stream reliability indicators.

pub mod layout;
pub mod model;

pub use layout::{ReliabilityGroups, ReliabilityLayout, ReliabilityParts};
pub use model::{
    dispersion, dispersion_ratio, entropy, entropy_ratio, kl_divergence, posterior_difference, stream_measures,
    temporal_divergence, Divergence, StreamMeasures,
};
