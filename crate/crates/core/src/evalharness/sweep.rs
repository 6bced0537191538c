use serde::{Deserialize, Serialize};

use super::{classify_one, EvalContext, EvalReport};
use crate::data::{Elaboration, Example, LabelSet};
use crate::labelpool::{elaborate, permute_orders, ElaborationTemplates};
use crate::stats::{spearman, Correlation};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum SweepKind {
    /// Every set as given.
    Lexical,
    /// Every ordering of each set.
    Order,
    /// Each set at elaboration levels E1 to E3.
    Elaboration,
}

impl std::str::FromStr for SweepKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "lexical" => Ok(SweepKind::Lexical),
            "order" => Ok(SweepKind::Order),
            "elaboration" => Ok(SweepKind::Elaboration),
            other => Err(Error::Eval(format!("unknown sweep kind `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VariantScore {
    /// Index of the input set this variant derives from.
    pub base: usize,
    pub variant: String,
    pub set: LabelSet,
    /// wF2 when class weights are configured, macro-F1 otherwise.
    pub score: f64,
    pub macro_f1: f64,
    pub accuracy: f64,
    pub invalid_rate: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub max: f64,
    pub min: f64,
    pub avg: f64,
    /// Population variance.
    pub var: f64,
}

/// Best and worst reordering of one set relative to its default order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OrderEffect {
    pub base: usize,
    pub default_variant: String,
    pub default_score: f64,
    pub max_gain: f64,
    pub max_drop: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepTable {
    pub kind: SweepKind,
    pub metric: String,
    pub variants: Vec<VariantScore>,
    pub aggregate: Aggregate,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub order_effects: Vec<OrderEffect>,
}

pub fn aggregate(scores: &[f64]) -> Result<Aggregate> {
    if scores.is_empty() {
        return Err(Error::Eval("no variants to aggregate".into()));
    }
    let n = scores.len() as f64;
    let avg = scores.iter().sum::<f64>() / n;
    let var = scores.iter().map(|s| (s - avg) * (s - avg)).sum::<f64>() / n;
    Ok(Aggregate {
        max: scores.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        min: scores.iter().copied().fold(f64::INFINITY, f64::min),
        avg,
        var,
    })
}

fn variants(
    kind: SweepKind,
    bases: &[LabelSet],
    elaborations: Option<&ElaborationTemplates>,
) -> Result<Vec<(usize, LabelSet)>> {
    let mut out = Vec::new();
    for (i, base) in bases.iter().enumerate() {
        match kind {
            SweepKind::Lexical => out.push((i, base.clone())),
            SweepKind::Order => out.extend(permute_orders(base)?.into_iter().map(|s| (i, s))),
            SweepKind::Elaboration => {
                let templates = elaborations
                    .ok_or_else(|| Error::Template("elaboration sweep needs elaboration templates".into()))?;
                for level in Elaboration::LEVELS {
                    out.push((i, elaborate(base, level, templates)?));
                }
            }
        }
    }
    if out.is_empty() {
        return Err(Error::Eval("empty variant list".into()));
    }
    Ok(out)
}

/// Classifies `examples` under every variant of `bases` and summarises the
/// spread of scores.
pub fn sweep(
    kind: SweepKind,
    ctx: &EvalContext,
    examples: &[Example],
    bases: &[LabelSet],
    elaborations: Option<&ElaborationTemplates>,
) -> Result<SweepTable> {
    if examples.is_empty() {
        return Err(Error::Eval("no examples to evaluate".into()));
    }
    let vars = variants(kind, bases, elaborations)?;
    for (_, set) in &vars {
        set.validate(ctx.schema)?;
    }
    let units: Vec<(usize, usize)> = (0..vars.len())
        .flat_map(|v| (0..examples.len()).map(move |e| (v, e)))
        .collect();
    let preds = ctx.workers.try_map(&units, |&(v, e)| {
        classify_one(ctx.backend, &examples[e], ctx.schema, &vars[v].1, ctx.template).map_err(|err| {
            match err {
                Error::AtExample { id, source } => Error::AtUnit {
                    set: vars[v].1.key(),
                    id,
                    source,
                },
                other => other,
            }
        })
    })?;
    let mut scored = Vec::with_capacity(vars.len());
    for ((base, set), chunk) in vars.into_iter().zip(preds.chunks(examples.len())) {
        let report = EvalReport::new(ctx.schema, chunk.to_vec(), ctx.weights)?;
        scored.push(VariantScore {
            base,
            variant: set.key(),
            score: report.headline(),
            macro_f1: report.macro_f1,
            accuracy: report.accuracy,
            invalid_rate: report.invalid_rate,
            set,
        });
    }
    let scores: Vec<f64> = scored.iter().map(|v| v.score).collect();
    let order_effects = if kind == SweepKind::Order {
        order_effects(&scored)
    } else {
        Vec::new()
    };
    Ok(SweepTable {
        kind,
        metric: if ctx.weights.is_some() { "wf2" } else { "macro_f1" }.into(),
        aggregate: aggregate(&scores)?,
        variants: scored,
        order_effects,
    })
}

fn order_effects(scored: &[VariantScore]) -> Vec<OrderEffect> {
    let mut out: Vec<OrderEffect> = Vec::new();
    for v in scored {
        if v.set.order_index == 0 {
            out.push(OrderEffect {
                base: v.base,
                default_variant: v.variant.clone(),
                default_score: v.score,
                max_gain: 0.0,
                max_drop: 0.0,
            });
        }
    }
    for v in scored {
        if let Some(e) = out.iter_mut().find(|e| e.base == v.base) {
            e.max_gain = e.max_gain.max(v.score - e.default_score);
            e.max_drop = e.max_drop.max(e.default_score - v.score);
        }
    }
    out
}

/// Spearman correlation between per-set scores and per-set mean kurtosis,
/// matched by set key.
pub fn correlate(scores: &[(String, f64)], kurtosis: &[(String, f64)]) -> Result<Correlation> {
    let lookup: std::collections::BTreeMap<&str, f64> =
        kurtosis.iter().map(|(k, v)| (k.as_str(), *v)).collect();
    let keys: std::collections::BTreeSet<&str> = scores.iter().map(|(k, _)| k.as_str()).collect();
    if keys.len() != scores.len() || lookup.len() != kurtosis.len() {
        return Err(Error::SetMismatch("duplicate set in correlation input".into()));
    }
    if keys.len() != lookup.len() || keys.iter().any(|k| !lookup.contains_key(k)) {
        return Err(Error::SetMismatch(
            "scores and kurtosis cover different label sets".into(),
        ));
    }
    let xs: Vec<f64> = scores.iter().map(|(_, s)| *s).collect();
    let ys: Vec<f64> = scores.iter().map(|(k, _)| lookup[k.as_str()]).collect();
    spearman(&xs, &ys)
}

/// `-0.4921*`: four decimals, starred when `p < 0.05`.
pub fn format_rho(rho: f64, p: f64) -> String {
    format!("{rho:.4}{}", if p < 0.05 { "*" } else { "" })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrelationRow {
    pub dataset: String,
    pub rho: f64,
    pub p: f64,
    pub n: usize,
    pub display: String,
}

impl CorrelationRow {
    pub fn new(dataset: impl Into<String>, c: Correlation) -> Self {
        CorrelationRow {
            dataset: dataset.into(),
            rho: c.rho,
            p: c.p,
            n: c.n,
            display: format_rho(c.rho, c.p),
        }
    }
}

fn into_string(w: csv::Writer<Vec<u8>>) -> String {
    String::from_utf8(w.into_inner().expect("in-memory writer")).expect("utf-8 input")
}

/// One `variant,score` row per variant, then `max`, `min`, `avg`, `var` rows.
pub fn sweep_csv(table: &SweepTable) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut row = |a: &str, b: String| w.write_record([a, b.as_str()]).expect("in-memory writer");
    row("variant", "score".into());
    for v in &table.variants {
        row(&v.variant, v.score.to_string());
    }
    let a = table.aggregate;
    row("max", a.max.to_string());
    row("min", a.min.to_string());
    row("avg", a.avg.to_string());
    row("var", a.var.to_string());
    into_string(w)
}

/// `dataset,rho,p,star` rows.
pub fn correlation_csv(rows: &[CorrelationRow]) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["dataset", "rho", "p", "star"]).expect("in-memory writer");
    for r in rows {
        let star = if r.p < 0.05 { "*" } else { "" };
        w.write_record([r.dataset.clone(), format!("{:.4}", r.rho), format!("{:e}", r.p), star.into()])
            .expect("in-memory writer");
    }
    into_string(w)
}
