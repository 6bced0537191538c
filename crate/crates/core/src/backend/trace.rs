use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::nanoformer::TokenId;
use crate::{Error, Result};

/// Which internal activations a generation call should record.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TapFlags {
    /// Last-layer gated FFN activation `act_fn(h̃ W1)`.
    pub ffn: bool,
    /// Residual stream after every layer.
    pub hidden: bool,
    /// Attention key vectors, per layer and head.
    pub keys: bool,
}

impl TapFlags {
    pub const NONE: TapFlags = TapFlags {
        ffn: false,
        hidden: false,
        keys: false,
    };
    pub const FFN: TapFlags = TapFlags {
        ffn: true,
        hidden: false,
        keys: false,
    };
    pub const HIDDEN: TapFlags = TapFlags {
        ffn: false,
        hidden: true,
        keys: false,
    };
    pub const KEYS: TapFlags = TapFlags {
        ffn: false,
        hidden: false,
        keys: true,
    };
    pub const ALL: TapFlags = TapFlags {
        ffn: true,
        hidden: true,
        keys: true,
    };

    /// Flags requested here but absent from `supported`.
    pub fn missing_from(self, supported: TapFlags) -> Option<&'static str> {
        if self.ffn && !supported.ffn {
            Some("FFN activation taps")
        } else if self.hidden && !supported.hidden {
            Some("per-layer hidden taps")
        } else if self.keys && !supported.keys {
            Some("attention key taps")
        } else {
            None
        }
    }
}

/// One greedy decoding step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub chosen_token_id: TokenId,
    /// Full next-token log distribution.
    pub logprobs: Vec<f64>,
    /// Last-layer `act_fn(h̃ W1)` at the position that emitted this token.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ffn_activation: Option<Vec<f64>>,
    /// Residual stream after each layer at that position.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub per_layer_hidden: Option<Vec<Vec<f64>>>,
    /// `[layer][head]` key vectors at that position.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub key_vectors: Option<Vec<Vec<Vec<f64>>>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationTrace {
    pub prompt_token_ids: Vec<TokenId>,
    pub steps: Vec<StepRecord>,
    pub generated_text: String,
    /// `[position][layer][head]` key vectors over the prompt, when key taps
    /// were requested.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub prompt_keys: Option<Vec<Vec<Vec<Vec<f64>>>>>,
}

impl GenerationTrace {
    pub fn first_step(&self) -> Result<&StepRecord> {
        self.steps
            .first()
            .ok_or_else(|| Error::Backend("trace has no steps".into()))
    }

    pub fn first_ffn_activation(&self) -> Result<&[f64]> {
        self.first_step()?
            .ffn_activation
            .as_deref()
            .ok_or(Error::Unsupported("FFN activation taps (not captured)"))
    }
}

/// One trace per line. Floats use shortest round-trip formatting, so a
/// write/read cycle reproduces every value bit for bit.
pub fn write_traces(path: impl AsRef<Path>, traces: &[GenerationTrace]) -> Result<()> {
    let path = path.as_ref();
    let mut buf = String::new();
    for t in traces {
        buf.push_str(&serde_json::to_string(t).expect("traces serialize"));
        buf.push('\n');
    }
    fs::write(path, buf).map_err(|e| Error::io(path, e))
}

pub fn read_traces(path: impl AsRef<Path>) -> Result<Vec<GenerationTrace>> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            serde_json::from_str(l).map_err(|e| Error::Json {
                path: path.to_owned(),
                line: i + 1,
                message: e.to_string(),
            })
        })
        .collect()
}
