pub mod align;
pub mod avpf;
pub mod decode;
pub mod error;
pub mod experiment;
pub mod extract;
pub mod fusion;
#[doc(hidden)]
pub mod fuzzing;
pub mod io;
pub mod lexicon;
pub mod reliability;
pub mod signal;
pub mod synth;
pub mod types;

pub use error::{Error, Result};
pub use types::{
    normalize_posteriors, AlignmentTarget, FusedLogPosterior, Matrix, PosteriorSequence, StateSpace, StreamId,
    StreamWeights, POSTERIOR_FLOOR,
};
