//! Label-set selection: kurtosis ranking and the comparison strategies.

use std::collections::{BTreeMap, HashSet};

use serde::{Deserialize, Serialize};

use crate::backend::{Backend, TapFlags};
use crate::data::{ClassSchema, Example, LabelSet, LabelSource, RoleId};
use crate::parallel::Workers;
use crate::prompting::{render, render_open, PromptTemplate};
use crate::stats::{kurtosis, KurtosisReport, SampleKurtosis};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Method {
    Loads,
    Original,
    Verbalizer,
    Selfgen,
}

/// Average first-token probability of one candidate word.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WordScore {
    pub role: RoleId,
    pub word: String,
    pub token: u32,
    pub mean_probability: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionResult {
    pub method: Method,
    pub chosen: LabelSet,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub report: Option<KurtosisReport>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub diagnostics: Vec<WordScore>,
}

/// Ranks `pool` by the mean kurtosis of the last-layer FFN activation at the
/// first generated token over `sample`, and picks the lowest.
///
/// Gold labels are never read.
pub fn loads_select(
    backend: &dyn Backend,
    schema: &ClassSchema,
    sample: &[&Example],
    pool: &[LabelSet],
    template: &PromptTemplate,
    workers: &Workers,
) -> Result<SelectionResult> {
    if pool.is_empty() {
        return Err(Error::Pool("empty candidate pool".into()));
    }
    if sample.is_empty() {
        return Err(Error::SampleSize { size: 0, available: 0 });
    }
    if let Some(what) = TapFlags::FFN.missing_from(backend.supported_taps()) {
        return Err(Error::Unsupported(what));
    }
    for set in pool {
        set.validate(schema)?;
        if set.order_index != 0 || set.role_of != schema.class_roles {
            return Err(Error::Pool(format!(
                "set [{}] is not in the default role order",
                set.key()
            )));
        }
    }
    let units: Vec<(usize, usize)> = (0..pool.len())
        .flat_map(|s| (0..sample.len()).map(move |e| (s, e)))
        .collect();
    let values = workers.try_map(&units, |&(s, e)| {
        let ex = sample[e];
        let at = |source: Error| Error::AtUnit {
            set: pool[s].key(),
            id: ex.id.clone(),
            source: Box::new(source),
        };
        let prompt = render(template, schema, &pool[s], ex).map_err(at)?;
        let trace = backend.generate_greedy(&prompt, 1, TapFlags::FFN).map_err(at)?;
        trace.first_ffn_activation().and_then(kurtosis).map_err(at)
    })?;
    let entries = pool
        .iter()
        .zip(values.chunks(sample.len()))
        .map(|(set, vals)| {
            let per_sample = sample
                .iter()
                .zip(vals)
                .map(|(ex, &value)| SampleKurtosis {
                    id: ex.id.clone(),
                    value,
                })
                .collect();
            (set.words.clone(), per_sample)
        })
        .collect();
    let report = KurtosisReport::new(entries)?;
    Ok(SelectionResult {
        method: Method::Loads,
        chosen: pool[report.ranking[0]].clone(),
        report: Some(report),
        diagnostics: Vec::new(),
    })
}

/// The schema's own label words.
pub fn original_select(schema: &ClassSchema) -> SelectionResult {
    SelectionResult {
        method: Method::Original,
        chosen: schema.original_set(),
        report: None,
        diagnostics: Vec::new(),
    }
}

/// How candidate probabilities combine into a class score.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Aggregation {
    /// Sum over the class's distinct first tokens.
    #[default]
    Sum,
    Max,
}

impl std::str::FromStr for Aggregation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sum" => Ok(Aggregation::Sum),
            "max" => Ok(Aggregation::Max),
            other => Err(Error::Pool(format!("unknown aggregation `{other}`"))),
        }
    }
}

/// Distinct first tokens of each role's candidate words, in schema order.
pub fn class_tokens(
    backend: &dyn Backend,
    schema: &ClassSchema,
    candidates: &BTreeMap<RoleId, Vec<String>>,
) -> Result<Vec<Vec<u32>>> {
    schema
        .class_roles
        .iter()
        .map(|role| {
            let words = candidates.get(role).map(Vec::as_slice).unwrap_or_default();
            let mut seen = HashSet::new();
            let tokens: Vec<u32> = words
                .iter()
                .filter_map(|w| backend.tokenizer().first_token(w))
                .filter(|t| seen.insert(*t))
                .collect();
            if tokens.is_empty() {
                return Err(Error::Pool(format!("role `{role}` has no candidate words")));
            }
            Ok(tokens)
        })
        .collect()
}

/// Per-class scores from first-step log-probabilities.
pub fn verbalizer_scores(logprobs: &[f64], tokens: &[Vec<u32>], agg: Aggregation) -> Vec<f64> {
    tokens
        .iter()
        .map(|ts| {
            let probs = ts.iter().map(|&t| logprobs[t as usize].exp());
            match agg {
                Aggregation::Sum => probs.fold(0.0, |a, p| a + p),
                Aggregation::Max => probs.fold(0.0, f64::max),
            }
        })
        .collect()
}

/// Predicts a role by pooling the first-token probabilities of each class's
/// candidate words under a prompt that lists the original labels.
pub fn verbalizer_predict(
    backend: &dyn Backend,
    example: &Example,
    schema: &ClassSchema,
    candidates: &BTreeMap<RoleId, Vec<String>>,
    template: &PromptTemplate,
    agg: Aggregation,
) -> Result<RoleId> {
    let tokens = class_tokens(backend, schema, candidates)?;
    let prompt = render(template, schema, &schema.original_set(), example)?;
    let logprobs = backend.first_token_logprobs(&prompt)?;
    let scores = verbalizer_scores(&logprobs, &tokens, agg);
    let mut best = 0;
    for (i, &s) in scores.iter().enumerate().skip(1) {
        if s > scores[best] {
            best = i;
        }
    }
    Ok(schema.class_roles[best].clone())
}

/// Picks, per role, the candidate whose first token is most probable on
/// average when the model is prompted without any options.
pub fn selfgen_select(
    backend: &dyn Backend,
    schema: &ClassSchema,
    sample: &[&Example],
    candidates: &BTreeMap<RoleId, Vec<String>>,
    open_template: &PromptTemplate,
    workers: &Workers,
) -> Result<SelectionResult> {
    if sample.is_empty() {
        return Err(Error::SampleSize { size: 0, available: 0 });
    }
    let logprobs = workers.try_map(sample, |ex| {
        render_open(open_template, schema, ex)
            .and_then(|p| backend.first_token_logprobs(&p))
            .map_err(|e| Error::at_example(&ex.id, e))
    })?;
    let n = sample.len() as f64;
    let mut words = Vec::new();
    let mut diagnostics = Vec::new();
    for role in &schema.class_roles {
        let mut best: Option<(f64, &str)> = None;
        for word in candidates.get(role).into_iter().flatten() {
            let Some(token) = backend.tokenizer().first_token(word) else {
                continue;
            };
            let mut total = 0.0;
            for lp in &logprobs {
                total += lp[token as usize].exp();
            }
            let mean_probability = total / n;
            diagnostics.push(WordScore {
                role: role.clone(),
                word: word.clone(),
                token,
                mean_probability,
            });
            if best.is_none_or(|(b, _)| mean_probability > b) {
                best = Some((mean_probability, word));
            }
        }
        let (_, word) = best.ok_or_else(|| {
            Error::Pool(format!("role `{role}` has no scorable candidate"))
        })?;
        words.push(word.to_owned());
    }
    let original = schema.original_set();
    let source = if words == original.words {
        LabelSource::Original
    } else {
        LabelSource::Lexicon
    };
    Ok(SelectionResult {
        method: Method::Selfgen,
        chosen: LabelSet::in_default_order(schema, words, source)?,
        report: None,
        diagnostics,
    })
}
