use std::collections::HashMap;
use std::path::Path;

use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::{log_softmax, Backend, GenerationTrace, StepRecord, TapFlags};
use crate::data::{read_json, ClassSchema, Example};
use crate::nanoformer::{TokenId, Tokenizer};
use crate::rng::{stable_hash, SeededRng};
use crate::{Error, Result};

/// Behaviour of one candidate set under the synthetic backend.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSet {
    /// Label words in the schema's role order.
    pub words: Vec<String>,
    /// Magnitude of the planted outlier activations.
    pub tail: f64,
    /// Probability of answering with the gold label.
    pub accuracy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticProfile {
    pub seed: u64,
    pub d_ff: usize,
    /// Number of planted outliers per activation vector.
    pub outliers: usize,
    pub sets: Vec<SyntheticSet>,
}

impl SyntheticProfile {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        read_json(path)
    }
}

/// A stand-in model with a controllable activation tail per label set.
///
/// The set is recognised from the quoted option words in the prompt, and
/// the example from the prompt's trailing text field. Each call draws a
/// Gaussian activation vector seeded by the prompt and overwrites
/// `outliers` random coordinates with `±tail`. The answer is the gold word
/// when the example's fixed uniform score falls below the set's accuracy,
/// otherwise the next role's word; the same score is used for every set,
/// so realised accuracy is monotone in the configured accuracy.
#[derive(Debug, Clone)]
pub struct SyntheticBackend {
    tokenizer: Tokenizer,
    profile: SyntheticProfile,
    gold_by_text: HashMap<String, usize>,
}

impl SyntheticBackend {
    pub fn new(
        tokenizer: Tokenizer,
        profile: SyntheticProfile,
        schema: &ClassSchema,
        examples: &[Example],
    ) -> Result<Self> {
        if profile.d_ff < 2 || profile.outliers > profile.d_ff {
            return Err(Error::Backend("synthetic profile: bad d_ff/outliers".into()));
        }
        for s in &profile.sets {
            if s.words.len() != schema.n_classes() {
                return Err(Error::SetMismatch(format!(
                    "synthetic set [{}] does not have {} words",
                    s.words.join("|"),
                    schema.n_classes()
                )));
            }
        }
        let mut gold_by_text = HashMap::new();
        for ex in examples {
            if let Some(role) = &ex.gold_role {
                let idx = schema
                    .role_index(role)
                    .ok_or_else(|| Error::Schema(format!("unknown role `{role}`")))?;
                gold_by_text.insert(ex.text2.clone(), idx);
            }
        }
        Ok(Self {
            tokenizer,
            profile,
            gold_by_text,
        })
    }

    pub fn profile(&self) -> &SyntheticProfile {
        &self.profile
    }

    fn find_set(&self, prompt: &str) -> Option<&SyntheticSet> {
        self.profile.sets.iter().find(|s| {
            s.words
                .iter()
                .all(|w| prompt.contains(&format!("\"{w}\"")))
        })
    }

    fn find_gold(&self, prompt: &str) -> Option<(&str, usize)> {
        // the example text follows the last ": " that yields a known text
        let mut search = prompt.len();
        while let Some(pos) = prompt[..search].rfind(": ") {
            let tail = &prompt[pos + 2..];
            if let Some((k, &g)) = self.gold_by_text.get_key_value(tail) {
                return Some((k.as_str(), g));
            }
            search = pos;
        }
        None
    }

    fn activation(&self, prompt: &str, tail: f64) -> Vec<f64> {
        let mut rng = SeededRng::new(self.profile.seed ^ stable_hash(prompt.as_bytes()));
        let d = self.profile.d_ff;
        let mut v: Vec<f64> = (0..d)
            .map(|_| StandardNormal.sample(rng.inner_mut()))
            .collect();
        let mut idx: Vec<usize> = (0..d).collect();
        for i in 0..self.profile.outliers {
            let j = i + rng.below((d - i) as u64) as usize;
            idx.swap(i, j);
            let sign = if rng.next_u64() & 1 == 0 { 1.0 } else { -1.0 };
            v[idx[i]] = sign * tail;
        }
        v
    }

    fn one_hot_logprobs(&self, token: TokenId) -> Vec<f64> {
        let mut logits = vec![0.0; self.tokenizer.vocab_size()];
        logits[token as usize] = 8.0;
        log_softmax(&logits)
    }
}

impl Backend for SyntheticBackend {
    fn name(&self) -> &str {
        "synthetic"
    }

    fn tokenizer(&self) -> &Tokenizer {
        &self.tokenizer
    }

    fn supported_taps(&self) -> TapFlags {
        TapFlags::FFN
    }

    fn generate_greedy(&self, prompt: &str, max_tokens: usize, taps: TapFlags) -> Result<GenerationTrace> {
        if max_tokens == 0 {
            return Err(Error::Backend("max_tokens must be at least 1".into()));
        }
        if let Some(what) = taps.missing_from(self.supported_taps()) {
            return Err(Error::Unsupported(what));
        }
        let set = self
            .find_set(prompt)
            .ok_or_else(|| Error::Backend("synthetic backend: prompt matches no profiled set".into()))?;
        let (text, gold) = self
            .find_gold(prompt)
            .ok_or_else(|| Error::Backend("synthetic backend: prompt matches no known example".into()))?;
        let score = SeededRng::new(self.profile.seed ^ stable_hash(text.as_bytes())).unit();
        let n = set.words.len();
        let answer = if score < set.accuracy {
            &set.words[gold]
        } else {
            &set.words[(gold + 1) % n]
        };
        let mut ids = self.tokenizer.encode(answer);
        ids.push(self.tokenizer.eos_id());
        ids.truncate(max_tokens);
        let activation = taps.ffn.then(|| self.activation(prompt, set.tail));
        let steps: Vec<StepRecord> = ids
            .iter()
            .enumerate()
            .map(|(i, &id)| StepRecord {
                chosen_token_id: id,
                logprobs: self.one_hot_logprobs(id),
                ffn_activation: if i == 0 { activation.clone() } else { None },
                per_layer_hidden: None,
                key_vectors: None,
            })
            .collect();
        Ok(GenerationTrace {
            prompt_token_ids: self.tokenizer.encode(prompt),
            generated_text: self.tokenizer.decode(&ids),
            steps,
            prompt_keys: None,
        })
    }
}
