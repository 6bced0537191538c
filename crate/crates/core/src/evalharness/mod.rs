//! Classification runs, metrics, label-variant sweeps, correlation with
//! kurtosis, and interpretability probes.

pub mod metrics;
mod probes;
mod sweep;

pub use probes::{
    analyze_keysim, analyze_logitlens, analyze_perplexity, key_similarity_by_layer, label_token_positions,
    ExamplePerplexity, KeySimReport, LensTrace, PerplexityReport,
};
pub use sweep::{
    aggregate, correlate, format_rho, sweep, sweep_csv, correlation_csv, Aggregate, OrderEffect, SweepKind,
    SweepTable, CorrelationRow, VariantScore,
};

use std::collections::BTreeMap;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::backend::{Backend, TapFlags};
use crate::data::{ClassSchema, Example, LabelSet, RoleId};
use crate::parallel::Workers;
use crate::prompting::{render, PromptTemplate};
use crate::{Error, Result};

pub const INVALID: &str = "INVALID";

/// A predicted class, or INVALID when the generation names no label.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Label {
    Role(RoleId),
    Invalid,
}

impl Serialize for Label {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            Label::Role(r) => s.serialize_str(r.as_str()),
            Label::Invalid => s.serialize_str(INVALID),
        }
    }
}

impl<'de> Deserialize<'de> for Label {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        Ok(if s == INVALID { Label::Invalid } else { Label::Role(RoleId(s)) })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub id: String,
    pub generated: String,
    pub predicted: Label,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gold: Option<RoleId>,
}

/// Role of the longest label word that prefixes the generation,
/// ignoring case and leading whitespace.
pub fn map_generation(text: &str, set: &LabelSet) -> Label {
    let t = text.trim_start().to_lowercase();
    let mut best: Option<(usize, usize)> = None;
    for (i, w) in set.words.iter().enumerate() {
        let lw = w.to_lowercase();
        if t.starts_with(&lw) && best.is_none_or(|(len, _)| lw.len() > len) {
            best = Some((lw.len(), i));
        }
    }
    match best {
        Some((_, i)) => Label::Role(set.role_of[i].clone()),
        None => Label::Invalid,
    }
}

/// Decoding budget for one answer: the longest label word's token count plus two.
pub fn answer_budget(backend: &dyn Backend, set: &LabelSet) -> usize {
    set.words
        .iter()
        .map(|w| backend.tokenizer().encode(w).len())
        .max()
        .unwrap_or(0)
        + 2
}

/// Greedy-decodes one answer for `ex` under `set`.
pub fn classify_one(
    backend: &dyn Backend,
    ex: &Example,
    schema: &ClassSchema,
    set: &LabelSet,
    template: &PromptTemplate,
) -> Result<Prediction> {
    let run = || -> Result<Prediction> {
        let prompt = render(template, schema, set, ex)?;
        let trace = backend.generate_greedy(&prompt, answer_budget(backend, set), TapFlags::NONE)?;
        Ok(Prediction {
            id: ex.id.clone(),
            predicted: map_generation(&trace.generated_text, set),
            generated: trace.generated_text,
            gold: ex.gold_role.clone(),
        })
    };
    run().map_err(|e| Error::at_example(&ex.id, e))
}

pub fn classify(
    backend: &dyn Backend,
    examples: &[Example],
    schema: &ClassSchema,
    set: &LabelSet,
    template: &PromptTemplate,
    workers: &Workers,
) -> Result<Vec<Prediction>> {
    set.validate(schema)?;
    workers.try_map(examples, |ex| classify_one(backend, ex, schema, set, template))
}

/// What every classification run shares.
#[derive(Clone, Copy)]
pub struct EvalContext<'a> {
    pub backend: &'a dyn Backend,
    pub schema: &'a ClassSchema,
    pub template: &'a PromptTemplate,
    /// Class weights for wF2; `None` scores by macro-F1.
    pub weights: Option<&'a BTreeMap<RoleId, f64>>,
    pub workers: &'a Workers,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub roles: Vec<RoleId>,
    pub predictions: Vec<Prediction>,
    /// Gold rows by predicted columns, the last column counting INVALID.
    pub confusion: Vec<Vec<usize>>,
    pub macro_f1: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub wf2: Option<f64>,
    pub accuracy: f64,
    pub invalid_rate: f64,
}

impl EvalReport {
    /// Scores predictions whose examples all carry gold labels.
    pub fn new(
        schema: &ClassSchema,
        predictions: Vec<Prediction>,
        weights: Option<&BTreeMap<RoleId, f64>>,
    ) -> Result<Self> {
        let gold = predictions
            .iter()
            .map(|p| {
                p.gold
                    .clone()
                    .ok_or_else(|| Error::Eval(format!("example `{}` has no gold label", p.id)))
            })
            .collect::<Result<Vec<_>>>()?;
        let predicted: Vec<Label> = predictions.iter().map(|p| p.predicted.clone()).collect();
        let roles = schema.class_roles.clone();
        let confusion = metrics::confusion(&predicted, &gold, &roles)?;
        let wf2 = weights
            .map(|w| metrics::wf2_from_matrix(&confusion, &roles, w))
            .transpose()?;
        Ok(EvalReport {
            macro_f1: metrics::macro_f1_from_matrix(&confusion),
            accuracy: metrics::accuracy_from_matrix(&confusion),
            invalid_rate: metrics::invalid_rate_from_matrix(&confusion),
            wf2,
            confusion,
            roles,
            predictions,
        })
    }

    /// wF2 when class weights were given, macro-F1 otherwise.
    pub fn headline(&self) -> f64 {
        self.wf2.unwrap_or(self.macro_f1)
    }
}
