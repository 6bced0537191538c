use serde::{Deserialize, Serialize};

use crate::backend::{Backend, TapFlags};
use crate::data::{ClassSchema, Example, LabelSet};
use crate::nanoformer::Tokenizer;
use crate::parallel::Workers;
use crate::prompting::{render, render_with_spans, PromptTemplate, RenderedPrompt};
use crate::{Error, Result};

fn cosine(a: &[f64], b: &[f64]) -> Result<f64> {
    let (mut ab, mut aa, mut bb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        ab += x * y;
        aa += x * x;
        bb += y * y;
    }
    if aa == 0.0 || bb == 0.0 {
        return Err(Error::Undefined("cosine similarity of a zero vector".into()));
    }
    Ok(ab / (aa.sqrt() * bb.sqrt()))
}

/// Prompt token index holding the first byte of each option word.
pub fn label_token_positions(tokenizer: &Tokenizer, rendered: &RenderedPrompt) -> Result<Vec<usize>> {
    let offsets = tokenizer.encode_with_offsets(&rendered.text);
    rendered
        .option_spans
        .iter()
        .map(|span| {
            offsets
                .iter()
                .position(|(_, r)| r.contains(&span.start))
                .ok_or_else(|| Error::Backend(format!("no token covers byte {}", span.start)))
        })
        .collect()
}

/// Head-averaged cosine similarity between the keys at two prompt positions,
/// one value per layer. `prompt_keys` is indexed `[position][layer][head]`.
pub fn key_similarity_by_layer(prompt_keys: &[Vec<Vec<Vec<f64>>>], a: usize, b: usize) -> Result<Vec<f64>> {
    let (ka, kb) = match (prompt_keys.get(a), prompt_keys.get(b)) {
        (Some(x), Some(y)) => (x, y),
        _ => return Err(Error::Backend("label position outside the prompt".into())),
    };
    ka.iter()
        .zip(kb)
        .map(|(la, lb)| {
            let mut total = 0.0;
            for (ha, hb) in la.iter().zip(lb) {
                total += cosine(ha, hb)?;
            }
            Ok(total / la.len() as f64)
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KeySimReport {
    pub words: Vec<String>,
    /// Mean over heads, then over examples.
    pub per_layer: Vec<f64>,
    pub n_examples: usize,
}

/// Similarity of the attention keys at the two label words of a binary set.
pub fn analyze_keysim(
    backend: &dyn Backend,
    schema: &ClassSchema,
    set: &LabelSet,
    template: &PromptTemplate,
    sample: &[&Example],
    workers: &Workers,
) -> Result<KeySimReport> {
    if schema.n_classes() != 2 {
        return Err(Error::Schema(format!(
            "key similarity needs a binary task, `{}` has {} classes",
            schema.task_name,
            schema.n_classes()
        )));
    }
    if let Some(what) = TapFlags::KEYS.missing_from(backend.supported_taps()) {
        return Err(Error::Unsupported(what));
    }
    if sample.is_empty() {
        return Err(Error::SampleSize { size: 0, available: 0 });
    }
    let rows = workers.try_map(sample, |ex| {
        let run = || -> Result<Vec<f64>> {
            let rendered = render_with_spans(template, schema, set, ex)?;
            let pos = label_token_positions(backend.tokenizer(), &rendered)?;
            let trace = backend.generate_greedy(&rendered.text, 1, TapFlags::KEYS)?;
            let keys = trace
                .prompt_keys
                .as_ref()
                .ok_or(Error::Unsupported("prompt key taps (not captured)"))?;
            key_similarity_by_layer(keys, pos[0], pos[1])
        };
        run().map_err(|e| Error::at_example(&ex.id, e))
    })?;
    let layers = rows[0].len();
    let per_layer = (0..layers)
        .map(|l| rows.iter().map(|r| r[l]).sum::<f64>() / rows.len() as f64)
        .collect();
    Ok(KeySimReport {
        words: set.words.clone(),
        per_layer,
        n_examples: rows.len(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LensTrace {
    pub id: String,
    pub token: u32,
    pub token_text: String,
    /// Rank of `token` after projecting each layer's output, 1 = top.
    pub ranks: Vec<usize>,
}

/// Layer-by-layer vocabulary rank of the first generated token.
pub fn analyze_logitlens(
    backend: &dyn Backend,
    example: &Example,
    schema: &ClassSchema,
    set: &LabelSet,
    template: &PromptTemplate,
) -> Result<LensTrace> {
    if let Some(what) = TapFlags::HIDDEN.missing_from(backend.supported_taps()) {
        return Err(Error::Unsupported(what));
    }
    let run = || -> Result<LensTrace> {
        let prompt = render(template, schema, set, example)?;
        let trace = backend.generate_greedy(&prompt, 1, TapFlags::HIDDEN)?;
        let step = trace.first_step()?;
        let token = step.chosen_token_id;
        let layers = step
            .per_layer_hidden
            .as_ref()
            .ok_or(Error::Unsupported("per-layer hidden taps (not captured)"))?
            .len();
        let ranks = (0..layers)
            .map(|l| backend.logit_lens_rank(step, l, token))
            .collect::<Result<Vec<_>>>()?;
        Ok(LensTrace {
            id: example.id.clone(),
            token,
            token_text: backend.tokenizer().token_str(token).unwrap_or_default(),
            ranks,
        })
    };
    run().map_err(|e| Error::at_example(&example.id, e))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExamplePerplexity {
    pub id: String,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerplexityReport {
    pub words: Vec<String>,
    pub mean: f64,
    pub per_example: Vec<ExamplePerplexity>,
}

/// Mean perplexity of the rendered prompts.
pub fn analyze_perplexity(
    backend: &dyn Backend,
    examples: &[Example],
    schema: &ClassSchema,
    set: &LabelSet,
    template: &PromptTemplate,
    workers: &Workers,
) -> Result<PerplexityReport> {
    if examples.is_empty() {
        return Err(Error::Eval("no examples".into()));
    }
    let values = workers.try_map(examples, |ex| {
        render(template, schema, set, ex)
            .and_then(|p| backend.sequence_perplexity(&p))
            .map_err(|e| Error::at_example(&ex.id, e))
    })?;
    let mut total = 0.0;
    for &v in &values {
        total += v;
    }
    Ok(PerplexityReport {
        words: set.words.clone(),
        mean: total / values.len() as f64,
        per_example: examples
            .iter()
            .zip(values)
            .map(|(ex, value)| ExamplePerplexity {
                id: ex.id.clone(),
                value,
            })
            .collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn orthogonal_keys_have_zero_similarity() {
        let keys = vec![
            vec![vec![vec![1.0, 0.0], vec![0.0, 2.0]]],
            vec![vec![vec![0.0, 3.0], vec![5.0, 0.0]]],
        ];
        assert_eq!(key_similarity_by_layer(&keys, 0, 1).unwrap(), vec![0.0]);
        assert_eq!(key_similarity_by_layer(&keys, 0, 0).unwrap(), vec![1.0]);
        assert!(key_similarity_by_layer(&keys, 0, 2).is_err());
    }
}
