//! The model interface every analysis runs against.
//!
//! A [`Backend`] decodes greedily and can expose internal activations
//! ("taps") at each generated position. Three implementations ship here:
//! [`crate::nanoformer::Nanoformer`], a [`ReplayBackend`] that serves
//! recorded traces, and a [`SyntheticBackend`] whose activation tails and
//! answers follow a configured profile.

mod replay;
mod synthetic;
mod trace;

pub use replay::ReplayBackend;
pub use synthetic::{SyntheticBackend, SyntheticProfile, SyntheticSet};
pub use trace::{read_traces, write_traces, GenerationTrace, StepRecord, TapFlags};

use crate::nanoformer::{TokenId, Tokenizer};
use crate::{Error, Result};

pub trait Backend: Send + Sync {
    fn name(&self) -> &str;

    fn tokenizer(&self) -> &Tokenizer;

    fn vocab_size(&self) -> usize {
        self.tokenizer().vocab_size()
    }

    /// Taps this backend can populate.
    fn supported_taps(&self) -> TapFlags;

    /// Greedy decoding from `prompt`.
    ///
    /// Stops after `max_tokens` steps or once the end-of-sequence token is
    /// chosen. Each step's choice is the argmax of its log-probabilities with
    /// ties going to the lowest token id.
    fn generate_greedy(&self, prompt: &str, max_tokens: usize, taps: TapFlags)
        -> Result<GenerationTrace>;

    /// Full next-token log distribution at the first generation step.
    fn first_token_logprobs(&self, prompt: &str) -> Result<Vec<f64>> {
        let trace = self.generate_greedy(prompt, 1, TapFlags::NONE)?;
        trace
            .steps
            .into_iter()
            .next()
            .map(|s| s.logprobs)
            .ok_or_else(|| Error::Backend("generation produced no steps".into()))
    }

    fn first_token_logprob(&self, prompt: &str, token: TokenId) -> Result<f64> {
        if !self.tokenizer().contains(token) {
            return Err(Error::UnknownToken(token));
        }
        Ok(self.first_token_logprobs(prompt)?[token as usize])
    }

    /// `exp` of the mean negative log-likelihood of tokens 2..T of `text`.
    fn sequence_perplexity(&self, _text: &str) -> Result<f64> {
        Err(Error::Unsupported("perplexity"))
    }

    /// Log-probabilities obtained by sending a residual-stream state through
    /// the final norm and output head.
    fn lens_logprobs(&self, _hidden: &[f64]) -> Result<Vec<f64>> {
        Err(Error::Unsupported("logit lens projection"))
    }

    /// Rank (1 = top) of `token` when layer `layer`'s hidden state at `step`
    /// is projected onto the vocabulary.
    fn logit_lens_rank(&self, step: &StepRecord, layer: usize, token: TokenId) -> Result<usize> {
        let hidden = step
            .per_layer_hidden
            .as_ref()
            .ok_or(Error::Unsupported("per-layer hidden taps (not captured)"))?;
        let h = hidden
            .get(layer)
            .ok_or_else(|| Error::Backend(format!("no hidden state for layer {layer}")))?;
        let lp = self.lens_logprobs(h)?;
        if token as usize >= lp.len() {
            return Err(Error::UnknownToken(token));
        }
        Ok(rank_of(&lp, token))
    }
}

/// Index of the largest value; ties resolve to the lowest index.
pub fn argmax_lowest(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}

/// 1-based rank in descending order; equal values rank lower ids first.
pub fn rank_of(values: &[f64], token: TokenId) -> usize {
    let t = token as usize;
    let target = values[t];
    1 + values
        .iter()
        .enumerate()
        .filter(|&(j, &v)| v > target || (v == target && j < t))
        .count()
}

/// Numerically stable log-softmax, accumulated in index order.
pub fn log_softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for &x in logits {
        sum += (x - max).exp();
    }
    let lse = max + sum.ln();
    logits.iter().map(|&x| x - lse).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ties_go_to_lowest_id() {
        assert_eq!(argmax_lowest(&[0.1, 0.5, 0.5, 0.2]), 1);
        assert_eq!(rank_of(&[0.1, 0.5, 0.5, 0.2], 1), 1);
        assert_eq!(rank_of(&[0.1, 0.5, 0.5, 0.2], 2), 2);
        assert_eq!(rank_of(&[0.1, 0.5, 0.5, 0.2], 0), 4);
    }

    #[test]
    fn log_softmax_normalizes() {
        let lp = log_softmax(&[1000.0, 999.0, -5.0, 0.0]);
        let total: f64 = lp.iter().map(|x| x.exp()).sum();
        assert!((total - 1.0).abs() < 1e-12);
        assert!(lp.iter().all(|x| x.is_finite()));
    }
}
