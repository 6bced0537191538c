use std::collections::HashMap;
use std::path::Path;

use super::{read_traces, Backend, GenerationTrace, TapFlags};
use crate::nanoformer::{TokenId, Tokenizer};
use crate::{Error, Result};

/// Serves recorded traces, keyed by the tokenized prompt.
///
/// A lookup returns the stored trace verbatim; if more steps are stored than
/// `max_tokens` allows, the trace is cut and its text re-decoded.
#[derive(Debug, Clone)]
pub struct ReplayBackend {
    tokenizer: Tokenizer,
    traces: HashMap<Vec<TokenId>, GenerationTrace>,
}

impl ReplayBackend {
    pub fn new(tokenizer: Tokenizer, traces: impl IntoIterator<Item = GenerationTrace>) -> Result<Self> {
        let mut map = HashMap::new();
        for t in traces {
            if t.steps.is_empty() {
                return Err(Error::Backend("recorded trace has no steps".into()));
            }
            let v = tokenizer.vocab_size();
            for s in &t.steps {
                if s.logprobs.len() != v {
                    return Err(Error::Backend(format!(
                        "recorded distribution has {} entries, vocabulary has {v}",
                        s.logprobs.len()
                    )));
                }
            }
            match map.get(&t.prompt_token_ids) {
                Some(prev) if *prev != t => {
                    return Err(Error::Backend("two different recordings for the same prompt".into()));
                }
                Some(_) => {}
                None => {
                    map.insert(t.prompt_token_ids.clone(), t);
                }
            }
        }
        Ok(Self {
            tokenizer,
            traces: map,
        })
    }

    pub fn load(vocab: impl AsRef<Path>, traces: impl AsRef<Path>) -> Result<Self> {
        Self::new(Tokenizer::load(vocab)?, read_traces(traces)?)
    }

    pub fn len(&self) -> usize {
        self.traces.len()
    }

    pub fn is_empty(&self) -> bool {
        self.traces.is_empty()
    }
}

impl Backend for ReplayBackend {
    fn name(&self) -> &str {
        "replay"
    }

    fn tokenizer(&self) -> &Tokenizer {
        &self.tokenizer
    }

    fn supported_taps(&self) -> TapFlags {
        TapFlags::ALL
    }

    fn generate_greedy(&self, prompt: &str, max_tokens: usize, taps: TapFlags) -> Result<GenerationTrace> {
        if max_tokens == 0 {
            return Err(Error::Backend("max_tokens must be at least 1".into()));
        }
        let key = self.tokenizer.encode(prompt);
        let stored = self
            .traces
            .get(&key)
            .ok_or_else(|| Error::Backend("no recorded trace for this prompt".into()))?;
        let first = &stored.steps[0];
        if taps.ffn && first.ffn_activation.is_none() {
            return Err(Error::Unsupported("FFN activation taps (not recorded)"));
        }
        if taps.hidden && first.per_layer_hidden.is_none() {
            return Err(Error::Unsupported("per-layer hidden taps (not recorded)"));
        }
        if taps.keys && stored.prompt_keys.is_none() {
            return Err(Error::Unsupported("attention key taps (not recorded)"));
        }
        let mut trace = stored.clone();
        if trace.steps.len() > max_tokens {
            trace.steps.truncate(max_tokens);
            let ids: Vec<TokenId> = trace.steps.iter().map(|s| s.chosen_token_id).collect();
            trace.generated_text = self.tokenizer.decode(&ids);
        }
        Ok(trace)
    }
}
