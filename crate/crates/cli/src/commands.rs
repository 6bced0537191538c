use std::collections::BTreeMap;
use std::path::Path;

use anyhow::{Context, Result};
use serde::{Deserialize, Serialize};

use loads_core::backend::{Backend, ReplayBackend, SyntheticBackend, SyntheticProfile};
use loads_core::data::{
    draw_sample, draw_stratified, load_dataset, read_json, ClassSchema, Elaboration, Example, LabelSet, LabelSource,
    RoleId, SampleDraw,
};
use loads_core::evalharness::{
    analyze_keysim, analyze_logitlens, analyze_perplexity, classify, correlate, sweep, sweep_csv, correlation_csv,
    EvalContext, EvalReport, Label, LensTrace, Prediction, SweepKind, SweepTable, CorrelationRow,
};
use loads_core::labelpool::{elaborate, expand_pool, load_pool, permute_orders, ElaborationTemplates, Lexicon};
use loads_core::nanoformer::{init_random, Activation, ModelConfig, Nanoformer, Positions, Tokenizer};
use loads_core::parallel::Workers;
use loads_core::prompting::PromptTemplate;
use loads_core::selector::{
    loads_select, original_select, selfgen_select, verbalizer_predict, Aggregation, Method, SelectionResult,
};
use loads_core::stats::KurtosisReport;

use crate::args::*;
use crate::run::{Output, RunConfig};
use crate::UsageError;

pub fn dispatch(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Pool(PoolCommand::Build(a)) => pool_build(a),
        Command::Select(SelectCommand::Loads(a)) => select_loads(a),
        Command::Select(SelectCommand::Baseline(a)) => select_baseline(a),
        Command::Eval(EvalCommand::Run(a)) => eval_run(a),
        Command::Sweep(a) => sweep_cmd(a),
        Command::Analyze(AnalyzeCommand::Correlate(a)) => analyze_correlate(a),
        Command::Analyze(AnalyzeCommand::Perplexity(a)) => analyze_perplexity_cmd(a),
        Command::Analyze(AnalyzeCommand::Keysim(a)) => analyze_keysim_cmd(a),
        Command::Analyze(AnalyzeCommand::Logitlens(a)) => analyze_logitlens_cmd(a),
        Command::Model(ModelCommand::InitRandom(a)) => init_random_cmd(a),
    }
}

fn usage(msg: impl Into<String>) -> anyhow::Error {
    UsageError(msg.into()).into()
}

fn workers(o: &OutputArgs) -> Workers {
    Workers::new(o.workers as usize)
}

struct Task {
    schema: ClassSchema,
    examples: Vec<Example>,
    template: PromptTemplate,
}

fn load_task(a: &TaskArgs, cfg: &mut RunConfig) -> Result<Task> {
    cfg.input("schema", &a.schema)?;
    cfg.input("dataset", &a.dataset)?;
    cfg.optional_input("template", a.template.as_deref())?;
    let schema = ClassSchema::load(&a.schema)?;
    let examples = load_dataset(&a.dataset, &schema)?;
    let template = match &a.template {
        Some(p) => PromptTemplate::load(p)?,
        None => PromptTemplate::default_stance(),
    };
    Ok(Task {
        schema,
        examples,
        template,
    })
}

fn required<'a>(p: &'a Option<std::path::PathBuf>, flag: &str, backend: &str) -> Result<&'a Path> {
    p.as_deref()
        .ok_or_else(|| usage(format!("--backend {backend} needs {flag}")))
}

fn load_backend(
    a: &BackendArgs,
    schema: &ClassSchema,
    examples: &[Example],
    cfg: &mut RunConfig,
) -> Result<Box<dyn Backend>> {
    let vocab = a.vocab.as_deref().ok_or_else(|| usage("a backend needs --vocab"))?;
    cfg.input("vocab", vocab)?;
    Ok(match a.backend {
        BackendKind::Nanoformer => {
            let w = required(&a.weights, "--weights", "nanoformer")?;
            cfg.param("backend", "nanoformer");
            cfg.input("weights", w)?;
            Box::new(Nanoformer::load(w, vocab)?)
        }
        BackendKind::Replay => {
            let t = required(&a.traces, "--traces", "replay")?;
            cfg.param("backend", "replay");
            cfg.input("traces", t)?;
            Box::new(ReplayBackend::load(vocab, t)?)
        }
        BackendKind::Synthetic => {
            let p = required(&a.profile, "--profile", "synthetic")?;
            cfg.param("backend", "synthetic");
            cfg.input("profile", p)?;
            Box::new(SyntheticBackend::new(
                Tokenizer::load(vocab)?,
                SyntheticProfile::load(p)?,
                schema,
                examples,
            )?)
        }
    })
}

fn draw(a: &SampleArgs, task: &Task, cfg: &mut RunConfig) -> Result<SampleDraw> {
    cfg.param("seed", a.seed);
    cfg.param("sample_size", a.sample_size);
    cfg.param("stratified", a.stratified);
    let size = a.sample_size as usize;
    Ok(if a.stratified {
        draw_stratified(&task.examples, &task.schema, size, a.seed)?
    } else {
        draw_sample(&task.examples, size, a.seed)?
    })
}

#[derive(Deserialize)]
struct SelectionFile {
    result: SelectionResult,
}

fn resolve_set(a: &SetArgs, schema: &ClassSchema, cfg: &mut RunConfig) -> Result<LabelSet> {
    if let Some(p) = &a.selection {
        cfg.input("selection", p)?;
        let f: SelectionFile = read_json(p)?;
        f.result.chosen.validate(schema)?;
        return Ok(f.result.chosen);
    }
    if let Some(words) = &a.words {
        cfg.param("words", words);
        let set = LabelSet::in_default_order(schema, words.clone(), LabelSource::Manual).map_err(|e| match e {
            loads_core::Error::LabelSet(m) => loads_core::Error::SetMismatch(m),
            other => other,
        })?;
        return Ok(set);
    }
    Ok(schema.original_set())
}

fn load_weights(path: Option<&Path>, cfg: &mut RunConfig) -> Result<Option<BTreeMap<RoleId, f64>>> {
    cfg.optional_input("class_weights", path)?;
    Ok(match path {
        Some(p) => Some(read_json(p)?),
        None => None,
    })
}

#[derive(Serialize)]
struct PoolOut<'a> {
    count: usize,
    sets: &'a [LabelSet],
}

fn pool_build(a: PoolBuildArgs) -> Result<()> {
    let mut cfg = RunConfig::new("pool build");
    cfg.input("schema", &a.schema)?;
    cfg.input("lexicon", &a.lexicon)?;
    cfg.optional_input("elaborations", a.elaborations.as_deref())?;
    cfg.param("orders", a.orders);
    cfg.param("elaborate", &a.elaborate);
    let schema = ClassSchema::load(&a.schema)?;
    let lexicon = Lexicon::load(&a.lexicon)?;
    let mut sets = expand_pool(&schema, &lexicon)?;
    if a.orders {
        sets = sets
            .iter()
            .map(permute_orders)
            .collect::<loads_core::Result<Vec<_>>>()?
            .concat();
    }
    if let Some(level) = &a.elaborate {
        let level: Elaboration = level.parse()?;
        let path = a.elaborations.as_deref().expect("clap requires --elaborations");
        let templates = ElaborationTemplates::load(path)?;
        sets = sets
            .iter()
            .map(|s| elaborate(s, level, &templates))
            .collect::<loads_core::Result<_>>()?;
    }
    let out = Output::create(&a.output.out_dir, &cfg)?;
    out.json(
        "pool.json",
        &PoolOut {
            count: sets.len(),
            sets: &sets,
        },
    )?;
    println!("{} label sets -> {}", sets.len(), out.path("pool.json").display());
    Ok(())
}

#[derive(Serialize)]
struct SelectionOut<'a> {
    #[serde(skip_serializing_if = "Option::is_none")]
    sample: Option<&'a SampleDraw>,
    result: &'a SelectionResult,
}

fn select_loads(a: SelectLoadsArgs) -> Result<()> {
    let mut cfg = RunConfig::new("select loads");
    let task = load_task(&a.task, &mut cfg)?;
    cfg.input("pool", &a.pool)?;
    let pool = load_pool(&a.pool, &task.schema)?;
    let backend = load_backend(&a.backend, &task.schema, &task.examples, &mut cfg)?;
    let sample = draw(&a.sample, &task, &mut cfg)?;
    let chosen = sample.select(&task.examples)?;
    let mut result = loads_select(
        backend.as_ref(),
        &task.schema,
        &chosen,
        &pool,
        &task.template,
        &workers(&a.output),
    )?;
    let report = result.report.take().expect("kurtosis selection carries a report");
    let out = Output::create(&a.output.out_dir, &cfg)?;
    out.json(
        "selection.json",
        &SelectionOut {
            sample: Some(&sample),
            result: &result,
        },
    )?;
    out.json("kurtosis.json", &report)?;
    println!(
        "chosen [{}] (mean kurtosis {:.6})",
        result.chosen.words.join(", "),
        report.best().expect("nonempty pool").mean_kurtosis
    );
    Ok(())
}

#[derive(Serialize)]
struct PredictionsOut<'a> {
    predictions: &'a [Prediction],
}

fn select_baseline(a: BaselineArgs) -> Result<()> {
    let mut cfg = RunConfig::new("select baseline");
    cfg.input("schema", &a.schema)?;
    let schema = ClassSchema::load(&a.schema)?;
    let workers = workers(&a.output);
    match a.method {
        BaselineMethod::Original => {
            cfg.param("method", "original");
            let result = original_select(&schema);
            let out = Output::create(&a.output.out_dir, &cfg)?;
            out.json("selection.json", &SelectionOut { sample: None, result: &result })?;
            println!("chosen [{}]", result.chosen.words.join(", "));
            Ok(())
        }
        BaselineMethod::Verbalizer => {
            cfg.param("method", "verbalizer");
            let task = baseline_task(&a, &schema, &mut cfg, a.template.as_deref())?;
            let backend = baseline_backend(&a, &task, &mut cfg)?;
            let candidates = baseline_candidates(&a, &schema, &mut cfg)?;
            let weights = load_weights(a.class_weights.as_deref(), &mut cfg)?;
            let agg = match a.aggregation {
                AggregationArg::Sum => Aggregation::Sum,
                AggregationArg::Max => Aggregation::Max,
            };
            cfg.param("aggregation", agg);
            let original = schema.original_set();
            let predictions = workers.try_map(&task.examples, |ex| -> loads_core::Result<Prediction> {
                let role = verbalizer_predict(backend.as_ref(), ex, &schema, &candidates, &task.template, agg)?;
                Ok(Prediction {
                    id: ex.id.clone(),
                    generated: original.word_for(&role).unwrap_or_default().to_owned(),
                    predicted: Label::Role(role),
                    gold: ex.gold_role.clone(),
                })
            })?;
            let result = SelectionResult {
                method: Method::Verbalizer,
                chosen: original,
                report: None,
                diagnostics: Vec::new(),
            };
            let out = Output::create(&a.output.out_dir, &cfg)?;
            out.json("selection.json", &SelectionOut { sample: None, result: &result })?;
            out.json("predictions.json", &PredictionsOut { predictions: &predictions })?;
            if predictions.iter().all(|p| p.gold.is_some()) && !predictions.is_empty() {
                let report = EvalReport::new(&schema, predictions, weights.as_ref())?;
                out.json("eval.json", &report)?;
                println!("verbalizer macro-F1 {:.6}", report.macro_f1);
            }
            Ok(())
        }
        BaselineMethod::Selfgen => {
            cfg.param("method", "selfgen");
            let task = baseline_task(&a, &schema, &mut cfg, None)?;
            let open = match &a.open_template {
                Some(p) => {
                    cfg.input("open_template", p)?;
                    PromptTemplate::load(p)?
                }
                None => PromptTemplate::open_stance(),
            };
            let backend = baseline_backend(&a, &task, &mut cfg)?;
            let candidates = baseline_candidates(&a, &schema, &mut cfg)?;
            let sample = draw(&a.sample, &task, &mut cfg)?;
            let chosen = sample.select(&task.examples)?;
            let result = selfgen_select(backend.as_ref(), &schema, &chosen, &candidates, &open, &workers)?;
            let out = Output::create(&a.output.out_dir, &cfg)?;
            out.json(
                "selection.json",
                &SelectionOut {
                    sample: Some(&sample),
                    result: &result,
                },
            )?;
            println!("chosen [{}]", result.chosen.words.join(", "));
            Ok(())
        }
    }
}

fn baseline_task(a: &BaselineArgs, schema: &ClassSchema, cfg: &mut RunConfig, template: Option<&Path>) -> Result<Task> {
    let dataset = a
        .dataset
        .as_deref()
        .ok_or_else(|| usage("this method needs --dataset"))?;
    cfg.input("dataset", dataset)?;
    cfg.optional_input("template", template)?;
    Ok(Task {
        schema: schema.clone(),
        examples: load_dataset(dataset, schema)?,
        template: match template {
            Some(p) => PromptTemplate::load(p)?,
            None => PromptTemplate::default_stance(),
        },
    })
}

fn baseline_backend(a: &BaselineArgs, task: &Task, cfg: &mut RunConfig) -> Result<Box<dyn Backend>> {
    load_backend(&a.backend, &task.schema, &task.examples, cfg)
}

fn baseline_candidates(
    a: &BaselineArgs,
    schema: &ClassSchema,
    cfg: &mut RunConfig,
) -> Result<BTreeMap<RoleId, Vec<String>>> {
    cfg.param("original_only", a.original_only);
    if a.original_only {
        return Ok(schema
            .class_roles
            .iter()
            .map(|r| (r.clone(), vec![schema.original_labels[r].clone()]))
            .collect());
    }
    let path = a
        .lexicon
        .as_deref()
        .ok_or_else(|| usage("this method needs --lexicon or --original-only"))?;
    cfg.input("lexicon", path)?;
    Ok(Lexicon::load(path)?.candidates(schema)?)
}

fn predictions_csv(predictions: &[Prediction]) -> String {
    let mut w = csv_writer();
    w.write_record(["id", "gold", "predicted", "generated"]).expect("in-memory writer");
    for p in predictions {
        let gold = p.gold.as_ref().map(|g| g.as_str()).unwrap_or_default();
        let predicted = match &p.predicted {
            Label::Role(r) => r.as_str(),
            Label::Invalid => loads_core::evalharness::INVALID,
        };
        w.write_record([p.id.as_str(), gold, predicted, p.generated.as_str()])
            .expect("in-memory writer");
    }
    String::from_utf8(w.into_inner().expect("in-memory writer")).expect("utf-8")
}

fn csv_writer() -> csv::Writer<Vec<u8>> {
    csv::Writer::from_writer(Vec::new())
}

fn eval_run(a: EvalRunArgs) -> Result<()> {
    let mut cfg = RunConfig::new("eval run");
    let task = load_task(&a.task, &mut cfg)?;
    let backend = load_backend(&a.backend, &task.schema, &task.examples, &mut cfg)?;
    let set = resolve_set(&a.set, &task.schema, &mut cfg)?;
    let weights = load_weights(a.class_weights.as_deref(), &mut cfg)?;
    let predictions = classify(
        backend.as_ref(),
        &task.examples,
        &task.schema,
        &set,
        &task.template,
        &workers(&a.output),
    )?;
    let csv = predictions_csv(&predictions);
    let report = EvalReport::new(&task.schema, predictions, weights.as_ref())?;
    let out = Output::create(&a.output.out_dir, &cfg)?;
    out.json("eval.json", &report)?;
    out.csv("predictions.csv", &csv)?;
    println!(
        "macro-F1 {:.6}  accuracy {:.6}  invalid {:.6}",
        report.macro_f1, report.accuracy, report.invalid_rate
    );
    Ok(())
}

fn sweep_cmd(a: SweepArgs) -> Result<()> {
    let kind = match a.kind {
        SweepKindArg::Lexical => SweepKind::Lexical,
        SweepKindArg::Order => SweepKind::Order,
        SweepKindArg::Elaboration => SweepKind::Elaboration,
    };
    let mut cfg = RunConfig::new("sweep");
    cfg.param("kind", kind);
    let task = load_task(&a.task, &mut cfg)?;
    let backend = load_backend(&a.backend, &task.schema, &task.examples, &mut cfg)?;
    let bases = match &a.pool {
        Some(p) => {
            cfg.input("pool", p)?;
            load_pool(p, &task.schema)?
        }
        None => vec![task.schema.original_set()],
    };
    let elaborations = match &a.elaborations {
        Some(p) => {
            cfg.input("elaborations", p)?;
            Some(ElaborationTemplates::load(p)?)
        }
        None if kind == SweepKind::Elaboration => return Err(usage("elaboration sweeps need --elaborations")),
        None => None,
    };
    let weights = load_weights(a.class_weights.as_deref(), &mut cfg)?;
    let workers = workers(&a.output);
    let ctx = EvalContext {
        backend: backend.as_ref(),
        schema: &task.schema,
        template: &task.template,
        weights: weights.as_ref(),
        workers: &workers,
    };
    let table = sweep(kind, &ctx, &task.examples, &bases, elaborations.as_ref())?;
    let out = Output::create(&a.output.out_dir, &cfg)?;
    out.json("sweep.json", &table)?;
    out.csv("sweep.csv", &sweep_csv(&table))?;
    let g = table.aggregate;
    println!(
        "{} variants: max {:.4} min {:.4} avg {:.4} var {:.6}",
        table.variants.len(),
        g.max,
        g.min,
        g.avg,
        g.var
    );
    Ok(())
}

#[derive(Serialize)]
struct CorrelationOut<'a> {
    row: &'a CorrelationRow,
}

fn analyze_correlate(a: CorrelateArgs) -> Result<()> {
    let mut cfg = RunConfig::new("analyze correlate");
    cfg.input("sweep", &a.sweep)?;
    cfg.input("kurtosis", &a.kurtosis)?;
    cfg.param("name", &a.name);
    let table: SweepTable = read_json(&a.sweep)?;
    let report: KurtosisReport = read_json(&a.kurtosis)?;
    let scores: Vec<(String, f64)> = table.variants.iter().map(|v| (v.variant.clone(), v.score)).collect();
    let kurt: Vec<(String, f64)> = report
        .sets
        .iter()
        .map(|s| (s.words.join("|"), s.mean_kurtosis))
        .collect();
    let c = correlate(&scores, &kurt).context("correlating sweep scores with kurtosis")?;
    let row = CorrelationRow::new(a.name, c);
    let out = Output::create(&a.output.out_dir, &cfg)?;
    out.json("correlation.json", &CorrelationOut { row: &row })?;
    out.csv("correlation.csv", &correlation_csv(std::slice::from_ref(&row)))?;
    println!("rho {} (p = {:.3e}, n = {})", row.display, row.p, row.n);
    Ok(())
}

#[derive(Serialize)]
struct PerplexityOut {
    reports: Vec<loads_core::evalharness::PerplexityReport>,
}

fn analyze_perplexity_cmd(a: PerplexityArgs) -> Result<()> {
    let mut cfg = RunConfig::new("analyze perplexity");
    let task = load_task(&a.task, &mut cfg)?;
    let backend = load_backend(&a.backend, &task.schema, &task.examples, &mut cfg)?;
    let sets = match &a.pool {
        Some(p) => {
            cfg.input("pool", p)?;
            load_pool(p, &task.schema)?
        }
        None => vec![resolve_set(&a.set, &task.schema, &mut cfg)?],
    };
    let workers = workers(&a.output);
    let reports = sets
        .iter()
        .map(|s| analyze_perplexity(backend.as_ref(), &task.examples, &task.schema, s, &task.template, &workers))
        .collect::<loads_core::Result<Vec<_>>>()?;
    let out = Output::create(&a.output.out_dir, &cfg)?;
    for r in &reports {
        println!("[{}] mean perplexity {:.6}", r.words.join(", "), r.mean);
    }
    out.json("perplexity.json", &PerplexityOut { reports })?;
    Ok(())
}

fn analyze_keysim_cmd(a: ProbeArgs) -> Result<()> {
    let mut cfg = RunConfig::new("analyze keysim");
    let task = load_task(&a.task, &mut cfg)?;
    let backend = load_backend(&a.backend, &task.schema, &task.examples, &mut cfg)?;
    let set = resolve_set(&a.set, &task.schema, &mut cfg)?;
    let sample = draw(&a.sample, &task, &mut cfg)?;
    let chosen = sample.select(&task.examples)?;
    let report = analyze_keysim(
        backend.as_ref(),
        &task.schema,
        &set,
        &task.template,
        &chosen,
        &workers(&a.output),
    )?;
    let out = Output::create(&a.output.out_dir, &cfg)?;
    out.json("keysim.json", &report)?;
    let layers: Vec<String> = report.per_layer.iter().map(|v| format!("{v:.4}")).collect();
    println!("key similarity by layer: {}", layers.join(" "));
    Ok(())
}

#[derive(Serialize)]
struct LensOut {
    words: Vec<String>,
    mean_rank_by_layer: Vec<f64>,
    traces: Vec<LensTrace>,
}

fn analyze_logitlens_cmd(a: ProbeArgs) -> Result<()> {
    let mut cfg = RunConfig::new("analyze logitlens");
    let task = load_task(&a.task, &mut cfg)?;
    let backend = load_backend(&a.backend, &task.schema, &task.examples, &mut cfg)?;
    let set = resolve_set(&a.set, &task.schema, &mut cfg)?;
    let sample = draw(&a.sample, &task, &mut cfg)?;
    let chosen = sample.select(&task.examples)?;
    let traces = workers(&a.output).try_map(&chosen, |ex| {
        analyze_logitlens(backend.as_ref(), ex, &task.schema, &set, &task.template)
    })?;
    let layers = traces.first().map_or(0, |t| t.ranks.len());
    let mean_rank_by_layer: Vec<f64> = (0..layers)
        .map(|l| traces.iter().map(|t| t.ranks[l] as f64).sum::<f64>() / traces.len() as f64)
        .collect();
    let out = Output::create(&a.output.out_dir, &cfg)?;
    let ranks: Vec<String> = mean_rank_by_layer.iter().map(|v| format!("{v:.1}")).collect();
    println!("mean rank by layer: {}", ranks.join(" "));
    out.json(
        "logitlens.json",
        &LensOut {
            words: set.words,
            mean_rank_by_layer,
            traces,
        },
    )?;
    Ok(())
}

#[derive(Serialize)]
struct ModelOut<'a> {
    config: &'a ModelConfig,
    seed: u64,
    weights_file: &'a str,
}

fn init_random_cmd(a: InitRandomArgs) -> Result<()> {
    let mut cfg = RunConfig::new("model init-random");
    cfg.input("vocab", &a.vocab)?;
    let tokenizer = Tokenizer::load(&a.vocab)?;
    let config = ModelConfig {
        vocab_size: tokenizer.vocab_size(),
        d_model: a.d_model,
        n_layers: a.layers,
        n_heads: a.heads,
        d_ff: a.d_ff,
        act_fn: match a.act {
            ActivationArg::Silu => Activation::Silu,
            ActivationArg::Gelu => Activation::Gelu,
        },
        max_context: a.max_context,
        positions: if a.no_positions {
            Positions::None
        } else {
            Positions::Sinusoidal
        },
        norm_eps: ModelConfig::small(1).norm_eps,
    };
    cfg.param("seed", a.seed);
    cfg.param("model", &config);
    let mut container = init_random(&config, a.seed)?;
    let out = Output::create(&a.output.out_dir, &cfg)?;
    let p = out.provenance();
    container.metadata.insert("tool_version".into(), p.tool_version.into());
    container.metadata.insert("config_hash".into(), p.config_hash.clone());
    out.write("model.nfw", &container.to_bytes())?;
    out.json(
        "model.json",
        &ModelOut {
            config: &config,
            seed: a.seed,
            weights_file: "model.nfw",
        },
    )?;
    println!("wrote {}", out.path("model.nfw").display());
    Ok(())
}
