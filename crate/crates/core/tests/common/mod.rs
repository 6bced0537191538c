#![allow(dead_code)]

pub mod reference;

use std::path::PathBuf;

use loads_core::nanoformer::{init_random, Activation, ModelConfig, Nanoformer, Positions, Tokenizer, WeightContainer};

pub fn fixtures() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fixtures")
}

pub fn fixture_tokenizer() -> Tokenizer {
    Tokenizer::load(fixtures().join("vocab.txt")).unwrap()
}

pub struct Shape {
    pub d_model: usize,
    pub n_layers: usize,
    pub n_heads: usize,
    pub d_ff: usize,
    pub act_fn: Activation,
    pub positions: Positions,
}

impl Default for Shape {
    fn default() -> Self {
        Shape {
            d_model: 8,
            n_layers: 2,
            n_heads: 2,
            d_ff: 16,
            act_fn: Activation::Silu,
            positions: Positions::Sinusoidal,
        }
    }
}

pub fn seeded_model(shape: Shape, seed: u64) -> (WeightContainer, Nanoformer) {
    let tok = fixture_tokenizer();
    let cfg = ModelConfig {
        vocab_size: tok.vocab_size(),
        d_model: shape.d_model,
        n_layers: shape.n_layers,
        n_heads: shape.n_heads,
        d_ff: shape.d_ff,
        act_fn: shape.act_fn,
        max_context: 512,
        positions: shape.positions,
        norm_eps: 1e-6,
    };
    let c = init_random(&cfg, seed).unwrap();
    let m = Nanoformer::new(&c, tok).unwrap();
    (c, m)
}

/// Short prompt strings built from fixture words.
pub fn random_prompts(n: usize, seed: u64) -> Vec<String> {
    use rand::{Rng, SeedableRng};
    let words = [
        "topic", "post", "claim", "for", "against", "stance", "the", "towards", "support", "deny", "options",
        "Given", "a", "and", "There", "are", "detect", "zebra", "qu!x", "é",
    ];
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| {
            let len = rng.random_range(1..24);
            (0..len)
                .map(|_| words[rng.random_range(0..words.len())])
                .collect::<Vec<_>>()
                .join(" ")
        })
        .collect()
}
