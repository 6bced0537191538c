//! A small decoder-only transformer with full instrumentation.
//!
//! Architecture: token embedding plus sinusoidal absolute positions, `n_layers`
//! pre-RMS-norm blocks (causal multi-head attention, then the gated FFN
//! `h = (act_fn(h̃ W1) ⊗ h̃ W3) W2` with SiLU or exact-erf GELU), a final RMS
//! norm and an untied output head. Weights are stored as f32 and widened to
//! f64; all arithmetic runs in f64 with reductions in fixed index order, so
//! results do not depend on thread count.

mod config;
mod container;
mod model;
mod tokenizer;

pub use config::{Activation, ModelConfig, Positions};
pub use container::{expected_layout, init_random, Tensor, WeightContainer};
pub use model::{gelu, silu, FfnOutput, ForwardTaps, LayerTap, Nanoformer};
pub use tokenizer::{TokenId, Tokenizer};
