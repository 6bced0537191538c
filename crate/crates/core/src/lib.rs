//! Label-set optimization for zero-shot in-context classification.
//!
//! Candidate label wordings are ranked by the kurtosis of the last decoder
//! layer's gated feed-forward activations at the first generated token; the
//! set with the lowest mean kurtosis over a small unlabeled sample wins.
//!
//! The crate is organised around the pipeline:
//!
//! - [`data`]: schemas, datasets and reproducible sample draws
//! - [`labelpool`]: lexicon expansion, order permutations, elaborations
//! - [`prompting`]: prompt rendering
//! - [`backend`]: the model interface (greedy decoding with activation taps)
//!   plus replay and synthetic implementations
//! - [`nanoformer`]: a small instrumented decoder-only transformer
//! - [`stats`]: kurtosis and Spearman correlation
//! - [`selector`]: kurtosis-based selection and the baseline strategies
//! - [`evalharness`]: metrics, sweeps, correlation and interpretability probes

pub mod backend;
pub mod data;
pub mod evalharness;
pub mod labelpool;
pub mod nanoformer;
pub mod parallel;
pub mod prompting;
pub mod rng;
pub mod selector;
pub mod stats;

mod error;

pub use error::{Error, ErrorKind, Result};
