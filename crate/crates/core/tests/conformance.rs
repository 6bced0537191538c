mod common;

use common::{fixture_tokenizer, fixtures, seeded_model, Shape};
use loads_core::backend::{read_traces, write_traces, Backend, ReplayBackend, TapFlags};
use loads_core::data::{load_dataset, ClassSchema, Example, LabelSet};
use loads_core::evalharness::{analyze_keysim, answer_budget, classify, sweep, EvalContext, SweepKind};
use loads_core::labelpool::{expand_pool, permute_orders, Lexicon};
use loads_core::nanoformer::Nanoformer;
use loads_core::parallel::Workers;
use loads_core::prompting::{render, PromptTemplate};
use loads_core::selector::loads_select;

struct Setup {
    schema: ClassSchema,
    examples: Vec<Example>,
    sets: Vec<LabelSet>,
    model: Nanoformer,
    replay: ReplayBackend,
}

/// Records the model on every prompt the checks below issue, then reloads
/// the recording from disk.
fn setup() -> Setup {
    let schema = ClassSchema::load(fixtures().join("scd/schema.json")).unwrap();
    let examples = load_dataset(fixtures().join("scd/validation.jsonl"), &schema).unwrap()[..8].to_vec();
    let lexicon = Lexicon::load(fixtures().join("scd/lexicon.json")).unwrap();
    let sets = expand_pool(&schema, &lexicon).unwrap()[..4].to_vec();
    let (_, model) = seeded_model(Shape::default(), 41);
    let t = PromptTemplate::default_stance();
    let mut prompts = Vec::new();
    for set in &sets {
        for v in permute_orders(set).unwrap() {
            for ex in &examples {
                prompts.push((render(&t, &schema, &v, ex).unwrap(), answer_budget(&model, &v)));
            }
        }
    }
    let traces: Vec<_> = prompts
        .iter()
        .map(|(p, budget)| model.generate_greedy(p, *budget, TapFlags::ALL).unwrap())
        .collect();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("traces.jsonl");
    write_traces(&path, &traces).unwrap();
    assert_eq!(read_traces(&path).unwrap(), traces);
    let replay = ReplayBackend::new(fixture_tokenizer(), read_traces(&path).unwrap()).unwrap();
    Setup {
        schema,
        examples,
        sets,
        model,
        replay,
    }
}

#[test]
fn replay_reproduces_live_model_results() {
    let s = setup();
    let t = PromptTemplate::default_stance();
    let workers = Workers::new(3);
    let sample: Vec<&Example> = s.examples.iter().collect();
    let live = loads_select(&s.model, &s.schema, &sample, &s.sets, &t, &workers).unwrap();
    let replayed = loads_select(&s.replay, &s.schema, &sample, &s.sets, &t, &workers).unwrap();
    assert_eq!(live, replayed);

    for set in &s.sets {
        let a = classify(&s.model, &s.examples, &s.schema, set, &t, &workers).unwrap();
        let b = classify(&s.replay, &s.examples, &s.schema, set, &t, &workers).unwrap();
        assert_eq!(a, b);
    }

    let ka = analyze_keysim(&s.model, &s.schema, &s.sets[0], &t, &sample, &workers).unwrap();
    let kb = analyze_keysim(&s.replay, &s.schema, &s.sets[0], &t, &sample, &workers).unwrap();
    assert_eq!(ka, kb);

    let ctx_live = EvalContext {
        backend: &s.model,
        schema: &s.schema,
        template: &t,
        weights: None,
        workers: &workers,
    };
    let ctx_replay = EvalContext {
        backend: &s.replay,
        ..ctx_live
    };
    let a = sweep(SweepKind::Order, &ctx_live, &s.examples, &s.sets, None).unwrap();
    let b = sweep(SweepKind::Order, &ctx_replay, &s.examples, &s.sets, None).unwrap();
    assert_eq!(a, b);
}

#[test]
fn replay_refuses_unrecorded_prompts() {
    let s = setup();
    assert!(s.replay.generate_greedy("never recorded", 1, TapFlags::NONE).is_err());
}
