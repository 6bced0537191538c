mod common;

use std::collections::BTreeMap;

use common::reference::{log_softmax, naive_kurtosis, RefModel};
use common::{fixture_tokenizer, fixtures, seeded_model, Shape};
use loads_core::backend::{GenerationTrace, ReplayBackend, StepRecord, SyntheticBackend, SyntheticProfile};
use loads_core::data::{draw_sample, load_dataset, ClassSchema, Example, LabelSet, LabelSource, RoleId};
use loads_core::labelpool::{expand_pool, Lexicon};
use loads_core::nanoformer::Tokenizer;
use loads_core::parallel::Workers;
use loads_core::prompting::{render, render_open, PromptTemplate};
use loads_core::selector::{
    loads_select, original_select, selfgen_select, verbalizer_predict, Aggregation, Method,
};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StudentT};

fn scd() -> (ClassSchema, Vec<Example>) {
    let schema = ClassSchema::load(fixtures().join("scd/schema.json")).unwrap();
    let ex = load_dataset(fixtures().join("scd/validation.jsonl"), &schema).unwrap();
    (schema, ex)
}

fn scd_pool(schema: &ClassSchema) -> Vec<LabelSet> {
    let lexicon = Lexicon::load(fixtures().join("scd/lexicon.json")).unwrap();
    expand_pool(schema, &lexicon).unwrap()
}

/// Records one heavy-tailed activation per (set, example) prompt.
fn replay_fixture(
    schema: &ClassSchema,
    sets: &[LabelSet],
    examples: &[Example],
    seed: u64,
) -> (ReplayBackend, Vec<Vec<Vec<f64>>>) {
    let tok = fixture_tokenizer();
    let template = PromptTemplate::default_stance();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let uniform = vec![-(tok.vocab_size() as f64).ln(); tok.vocab_size()];
    let mut acts = Vec::new();
    let mut traces = Vec::new();
    for (s, set) in sets.iter().enumerate() {
        let dist = StudentT::new(3.0 + s as f64).unwrap();
        let mut per_set = Vec::new();
        for ex in examples {
            let a: Vec<f64> = (0..64).map(|_| dist.sample(&mut rng)).collect();
            let prompt = render(&template, schema, set, ex).unwrap();
            traces.push(GenerationTrace {
                prompt_token_ids: tok.encode(&prompt),
                steps: vec![StepRecord {
                    chosen_token_id: tok.eos_id(),
                    logprobs: uniform.clone(),
                    ffn_activation: Some(a.clone()),
                    per_layer_hidden: None,
                    key_vectors: None,
                }],
                generated_text: String::new(),
                prompt_keys: None,
            });
            per_set.push(a);
        }
        acts.push(per_set);
    }
    (ReplayBackend::new(tok, traces).unwrap(), acts)
}

fn argmin_first(values: &[f64]) -> usize {
    let mut best = 0;
    for i in 1..values.len() {
        if values[i] < values[best] {
            best = i;
        }
    }
    best
}

#[test]
fn replayed_selection_matches_direct_loop() {
    let (schema, ex) = scd();
    let pool = scd_pool(&schema);
    let sets = &pool[..6];
    let sample: Vec<Example> = ex[..15].to_vec();
    let (backend, acts) = replay_fixture(&schema, sets, &sample, 11);
    let refs: Vec<&Example> = sample.iter().collect();
    let res = loads_select(&backend, &schema, &refs, sets, &PromptTemplate::default_stance(), &Workers::new(3)).unwrap();
    let means: Vec<f64> = acts
        .iter()
        .map(|per| per.iter().map(|a| naive_kurtosis(a)).sum::<f64>() / per.len() as f64)
        .collect();
    let best = argmin_first(&means);
    assert_eq!(res.method, Method::Loads);
    assert_eq!(res.chosen, sets[best]);
    let report = res.report.unwrap();
    for (i, entry) in report.sets.iter().enumerate() {
        assert_eq!(entry.words, sets[i].words);
        approx::assert_relative_eq!(entry.mean_kurtosis, means[i], max_relative = 1e-12);
        for (j, ps) in entry.per_sample.iter().enumerate() {
            assert_eq!(ps.id, sample[j].id);
            approx::assert_relative_eq!(ps.value, naive_kurtosis(&acts[i][j]), max_relative = 1e-12);
        }
    }
    let mut order: Vec<usize> = (0..means.len()).collect();
    order.sort_by(|&a, &b| means[a].total_cmp(&means[b]));
    assert_eq!(report.ranking, order);
}

#[test]
fn selection_ignores_gold_labels() {
    let (schema, ex) = scd();
    let pool = scd_pool(&schema);
    let sets = &pool[..5];
    let sample: Vec<Example> = ex[20..32].to_vec();
    let (backend, _) = replay_fixture(&schema, sets, &sample, 3);
    let t = PromptTemplate::default_stance();
    let with: Vec<&Example> = sample.iter().collect();
    let stripped: Vec<Example> = sample.iter().cloned().map(|mut e| {
        e.gold_role = None;
        e
    }).collect();
    let flipped: Vec<Example> = sample.iter().cloned().map(|mut e| {
        e.gold_role = Some(RoleId::new(if e.gold_role.as_ref().unwrap().as_str() == "for" { "against" } else { "for" }));
        e
    }).collect();
    let a = loads_select(&backend, &schema, &with, sets, &t, &Workers::single()).unwrap();
    for other in [&stripped, &flipped] {
        let refs: Vec<&Example> = other.iter().collect();
        assert_eq!(a, loads_select(&backend, &schema, &refs, sets, &t, &Workers::single()).unwrap());
    }
}

#[test]
fn selection_is_invariant_to_sample_order() {
    let (schema, ex) = scd();
    let pool = scd_pool(&schema);
    let sets = &pool[..4];
    let sample: Vec<Example> = ex[40..60].to_vec();
    let (backend, _) = replay_fixture(&schema, sets, &sample, 5);
    let t = PromptTemplate::default_stance();
    let refs: Vec<&Example> = sample.iter().collect();
    let a = loads_select(&backend, &schema, &refs, sets, &t, &Workers::new(2)).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    for _ in 0..5 {
        let mut shuffled = refs.clone();
        shuffled.shuffle(&mut rng);
        let b = loads_select(&backend, &schema, &shuffled, sets, &t, &Workers::new(4)).unwrap();
        assert_eq!(a.chosen, b.chosen);
        let ra = a.report.as_ref().unwrap();
        let rb = b.report.as_ref().unwrap();
        assert_eq!(ra.ranking, rb.ranking);
        for (x, y) in ra.sets.iter().zip(&rb.sets) {
            assert_eq!(x.mean_kurtosis.to_bits(), y.mean_kurtosis.to_bits());
        }
    }
}

#[test]
fn singleton_pool_returns_its_only_set() {
    let (schema, ex) = scd();
    let pool = vec![schema.original_set()];
    let sample: Vec<Example> = ex[..3].to_vec();
    let (backend, _) = replay_fixture(&schema, &pool, &sample, 1);
    let refs: Vec<&Example> = sample.iter().collect();
    let res = loads_select(&backend, &schema, &refs, &pool, &PromptTemplate::default_stance(), &Workers::single()).unwrap();
    assert_eq!(res.chosen, pool[0]);
    assert_eq!(res.report.unwrap().ranking, vec![0]);
    assert!(loads_select(&backend, &schema, &refs, &[], &PromptTemplate::default_stance(), &Workers::single()).is_err());
}

#[test]
fn missing_recording_names_the_failing_unit() {
    let (schema, ex) = scd();
    let pool = scd_pool(&schema);
    let sample: Vec<Example> = ex[..3].to_vec();
    let (backend, _) = replay_fixture(&schema, &pool[..1], &sample, 1);
    let refs: Vec<&Example> = sample.iter().collect();
    let err = loads_select(&backend, &schema, &refs, &pool[..2], &PromptTemplate::default_stance(), &Workers::single())
        .unwrap_err()
        .to_string();
    assert!(err.contains(&pool[1].key()), "{err}");
    assert!(err.contains(&sample[0].id), "{err}");
}

#[test]
fn original_method_returns_schema_labels() {
    let (schema, _) = scd();
    let r = original_select(&schema);
    assert_eq!(r.method, Method::Original);
    assert_eq!(r.chosen.words, vec!["for", "against"]);
}

#[test]
fn nanoformer_selection_matches_recomputed_kurtosis() {
    let (schema, ex) = scd();
    let pool = scd_pool(&schema);
    let sets = &pool[..5];
    let (c, model) = seeded_model(Shape::default(), 17);
    let oracle = RefModel::new(&c);
    let tok = fixture_tokenizer();
    let t = PromptTemplate::default_stance();
    let draw = draw_sample(&ex, 6, 4).unwrap();
    let sample = draw.select(&ex).unwrap();
    let res = loads_select(&model, &schema, &sample, sets, &t, &Workers::new(2)).unwrap();
    let means: Vec<f64> = sets
        .iter()
        .map(|set| {
            sample
                .iter()
                .map(|e| {
                    let run = oracle.run(&tok.encode(&render(&t, &schema, set, e).unwrap()));
                    naive_kurtosis(&run.layers.last().unwrap().activation)
                })
                .sum::<f64>()
                / sample.len() as f64
        })
        .collect();
    assert_eq!(res.chosen, sets[argmin_first(&means)]);
    for (entry, m) in res.report.unwrap().sets.iter().zip(&means) {
        approx::assert_relative_eq!(entry.mean_kurtosis, *m, max_relative = 1e-9);
    }
}

fn first_token_probs(oracle: &RefModel, tok: &Tokenizer, prompt: &str) -> Vec<f64> {
    let run = oracle.run(&tok.encode(prompt));
    log_softmax(run.logits.last().unwrap()).iter().map(|l| l.exp()).collect()
}

#[test]
fn verbalizer_matches_brute_force() {
    let (schema, ex) = scd();
    let lexicon = Lexicon::load(fixtures().join("scd/lexicon.json")).unwrap();
    let candidates = lexicon.candidates(&schema).unwrap();
    let (c, model) = seeded_model(Shape::default(), 23);
    let oracle = RefModel::new(&c);
    let tok = fixture_tokenizer();
    let t = PromptTemplate::default_stance();
    for e in &ex[..12] {
        let probs = first_token_probs(&oracle, &tok, &render(&t, &schema, &schema.original_set(), e).unwrap());
        for agg in [Aggregation::Sum, Aggregation::Max] {
            let mut scores = Vec::new();
            for role in &schema.class_roles {
                let mut seen = Vec::new();
                for w in &candidates[role] {
                    let id = tok.encode(w)[0];
                    if !seen.contains(&id) {
                        seen.push(id);
                    }
                }
                let ps = seen.iter().map(|&i| probs[i as usize]);
                scores.push(match agg {
                    Aggregation::Sum => ps.sum::<f64>(),
                    Aggregation::Max => ps.fold(0.0, f64::max),
                });
            }
            let expect = if scores[1] > scores[0] { 1 } else { 0 };
            let got = verbalizer_predict(&model, e, &schema, &candidates, &t, agg).unwrap();
            assert_eq!(got, schema.class_roles[expect]);
        }
    }
}

#[test]
fn verbalizer_with_only_original_words_is_a_two_word_argmax() {
    let (schema, ex) = scd();
    let mut candidates = BTreeMap::new();
    for role in &schema.class_roles {
        candidates.insert(role.clone(), vec![schema.original_labels[role].clone()]);
    }
    let (c, model) = seeded_model(Shape::default(), 29);
    let oracle = RefModel::new(&c);
    let tok = fixture_tokenizer();
    let t = PromptTemplate::default_stance();
    for e in &ex[..8] {
        let probs = first_token_probs(&oracle, &tok, &render(&t, &schema, &schema.original_set(), e).unwrap());
        let p_for = probs[tok.encode("for")[0] as usize];
        let p_against = probs[tok.encode("against")[0] as usize];
        let expect = if p_against > p_for { "against" } else { "for" };
        let got = verbalizer_predict(&model, e, &schema, &candidates, &t, Aggregation::Sum).unwrap();
        assert_eq!(got.as_str(), expect);
    }
}

#[test]
fn selfgen_matches_brute_force() {
    let (schema, ex) = scd();
    let mut candidates = BTreeMap::new();
    candidates.insert(
        RoleId::new("for"),
        ["for", "support", "favor", "agree", "endorse"].map(String::from).to_vec(),
    );
    candidates.insert(
        RoleId::new("against"),
        ["against", "oppose", "deny", "reject", "refute"].map(String::from).to_vec(),
    );
    let (c, model) = seeded_model(Shape::default(), 31);
    let oracle = RefModel::new(&c);
    let tok = fixture_tokenizer();
    let open = PromptTemplate::open_stance();
    let sample: Vec<&Example> = ex[..20].iter().collect();
    let res = selfgen_select(&model, &schema, &sample, &candidates, &open, &Workers::new(4)).unwrap();
    let probs: Vec<Vec<f64>> = sample
        .iter()
        .map(|e| first_token_probs(&oracle, &tok, &render_open(&open, &schema, e).unwrap()))
        .collect();
    let mut expect = Vec::new();
    for role in &schema.class_roles {
        let mut best = (f64::NEG_INFINITY, String::new());
        for w in &candidates[role] {
            let id = tok.encode(w)[0] as usize;
            let m = probs.iter().map(|p| p[id]).sum::<f64>() / probs.len() as f64;
            if m > best.0 {
                best = (m, w.clone());
            }
        }
        expect.push(best.1);
    }
    assert_eq!(res.method, Method::Selfgen);
    assert_eq!(res.chosen.words, expect);
    assert_eq!(res.diagnostics.len(), 10);
    let source = if expect == ["for", "against"] { LabelSource::Original } else { LabelSource::Lexicon };
    assert_eq!(res.chosen.source, source);
}

fn synthetic() -> (ClassSchema, Vec<Example>, SyntheticBackend) {
    let schema = ClassSchema::load(fixtures().join("synthetic/schema.json")).unwrap();
    let ex = load_dataset(fixtures().join("synthetic/validation.jsonl"), &schema).unwrap();
    let profile = SyntheticProfile::load(fixtures().join("synthetic/profile.json")).unwrap();
    let backend = SyntheticBackend::new(fixture_tokenizer(), profile, &schema, &ex).unwrap();
    (schema, ex, backend)
}

#[test]
fn synthetic_ranking_is_stable_across_sample_sizes() {
    let (schema, ex, backend) = synthetic();
    let pool: Vec<LabelSet> = backend
        .profile()
        .sets
        .iter()
        .map(|s| LabelSet::in_default_order(&schema, s.words.clone(), LabelSource::Lexicon).unwrap())
        .collect();
    let t = PromptTemplate::default_stance();
    let mut tops = Vec::new();
    for size in [50, 100, 300, 500, 1000] {
        let draw = draw_sample(&ex, size, 7).unwrap();
        let sample = draw.select(&ex).unwrap();
        let res = loads_select(&backend, &schema, &sample, &pool, &t, &Workers::new(4)).unwrap();
        let report = res.report.unwrap();
        tops.push(report.ranking[..5].to_vec());
    }
    assert!(tops.windows(2).all(|w| w[0] == w[1]), "{tops:?}");
    assert_eq!(tops[0][0], 0);
}
