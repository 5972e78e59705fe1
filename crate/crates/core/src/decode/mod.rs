//! Viterbi decoding against a shared state graph, forced alignment and WER.

pub mod graph;
pub mod viterbi;
pub mod wer;

pub use graph::{Arc, DecodingGraph, GraphConfig};
pub use viterbi::{
    divide_by_priors, forced_align, forced_align_scores, path_score, viterbi_decode, DecodeOptions, Decoding,
};
pub use wer::{wer, WerReport};
