use std::collections::HashSet;

use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use rps_core::dialogue::*;
use rps_core::gmm::Category;
use rps_core::textsim::{Embedder, EmbeddingSource};
use rps_core::{Error, Result};

fn fact(id: &str, text: &str, category: Category, keywords: &[&str]) -> FactRecord {
    FactRecord {
        id: id.into(),
        text: text.into(),
        category,
        keywords: keywords.iter().map(|k| k.to_string()).collect(),
    }
}

fn three_fact_case() -> CaseFile {
    let facts = vec![
        fact("p", "the defendant repaid the loan", Category::Positive, &["repaid"]),
        fact("n", "the meeting happened at noon", Category::Neutral, &["noon"]),
        fact("x", "the suspect hid a knife", Category::Negative, &["knife"]),
    ];
    let keys = facts.iter().map(|f| f.text.clone()).collect();
    CaseFile {
        case_id: "toy".into(),
        facts,
        reference_keys: keys,
    }
}

fn certain_table() -> DisclosureTable {
    DisclosureTable {
        normal: [1.0; 3],
        exploratory: [1.0, 1.0, 0.0],
        precise: [1.0; 3],
        confrontational: [1.0; 3],
        initial_fraction: [1.0; 5],
        paraphrase_drop_prob: 0.0,
        ..DisclosureTable::default()
    }
}

#[test]
fn strategy_indices() {
    for (i, s) in PromptStrategy::ALL.iter().enumerate() {
        assert_eq!(s.index(), i);
        assert_eq!(PromptStrategy::from_index(i).unwrap(), *s);
        assert_eq!(s.as_str().parse::<PromptStrategy>().unwrap(), *s);
    }
    assert!(PromptStrategy::from_index(5).is_err());
}

#[test]
fn corpus_empty_and_single_case() {
    assert!(parse_corpus("").unwrap().cases.is_empty());
    assert!(parse_corpus("[]").unwrap().cases.is_empty());
    let text = serde_json::to_string(&vec![three_fact_case()]).unwrap();
    let c = parse_corpus(&text).unwrap();
    assert_eq!(c.cases.len(), 1);
    assert_eq!(c.cases[0].facts.len(), 3);
    assert_eq!(c.category_counts, [1, 1, 1]);
    assert!(c.warnings.is_empty());
}

#[test]
fn corpus_parse_errors_name_case_and_field() {
    let bad_cat = r#"[{"case_id":"c1","facts":[{"id":"a","text":"x y","category":"bad","keywords":[]}]}]"#;
    match parse_corpus(bad_cat) {
        Err(Error::Parse { case_id, field, .. }) => {
            assert_eq!(case_id, "c1");
            assert_eq!(field, "facts[0].category");
        }
        other => panic!("{other:?}"),
    }
    let bad_kw = r#"[{"case_id":"c2","facts":[{"id":"a","text":"x y","category":"neutral","keywords":["z"]}]}]"#;
    assert!(matches!(parse_corpus(bad_kw), Err(Error::Parse { field, .. }) if field == "facts[0].keywords"));
    let no_id = r#"[{"facts":[]}]"#;
    assert!(matches!(parse_corpus(no_id), Err(Error::Parse { field, .. }) if field == "case_id"));
    assert!(matches!(parse_corpus("{}"), Err(Error::Schema(_))));
}

#[test]
fn reference_keys_default_to_fact_texts() {
    let text = r#"[{"case_id":"c","facts":[{"id":"a","text":"one two","category":"positive","keywords":["one"]}]}]"#;
    let c = parse_corpus(text).unwrap();
    assert_eq!(c.cases[0].reference_keys, vec!["one two".to_string()]);
    assert_eq!(c.warnings.len(), 2, "missing neutral and negative facts");
}

#[test]
fn generated_corpus_round_trips() {
    let cases = generate_cases(60, &mut ChaCha8Rng::seed_from_u64(9));
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("corpus.json");
    save_corpus(&cases, &path).unwrap();
    let loaded = load_corpus(&path).unwrap();
    assert_eq!(loaded.cases, cases);
    assert!(loaded.warnings.is_empty(), "{:?}", loaded.warnings);
    for c in &cases {
        assert!((6..=12).contains(&c.facts.len()));
        assert!(c.category_counts().iter().all(|n| *n >= 1));
    }
    let total: usize = loaded.category_counts.iter().sum();
    let share = |i: usize| loaded.category_counts[i] as f64 / total as f64;
    assert!((share(0) - 0.4).abs() < 0.06 && (share(1) - 0.35).abs() < 0.06 && (share(2) - 0.25).abs() < 0.06);
}

#[test]
fn fresh_state() {
    let st = reset(three_fact_case(), DEFAULT_HORIZON);
    assert_eq!(st.score(), 0.0);
    assert!(st.transcript.is_empty());
    assert_eq!(st.prev_distance, 1.0);
    assert_eq!(encode_state(&st), vec![0.0; STATE_DIM]);
}

#[test]
fn fully_disclosed_case_gives_nothing_new() {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let mut st = reset(three_fact_case(), 10);
    st.disclosed = vec![1.0; 3];
    for s in PromptStrategy::ALL {
        assert!(user_respond(&mut st, s, &DisclosureTable::default(), &mut rng).is_empty());
    }
}

#[test]
fn forced_confrontation_reveals_the_negative_fact() {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let mut st = reset(three_fact_case(), 10);
    let r = user_respond(&mut st, PromptStrategy::Confrontational, &certain_table(), &mut rng);
    assert_eq!(r.len(), 1);
    assert_eq!(r[0].fact_id, "x");
    assert_eq!(r[0].text, "the suspect hid a knife");
}

#[test]
fn corroboration_deepens_disclosed_facts() {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let mut st = reset(three_fact_case(), 10);
    st.disclosed[0] = 0.4;
    let table = DisclosureTable {
        paraphrase_drop_prob: 0.0,
        ..DisclosureTable::default()
    };
    let r = user_respond(&mut st, PromptStrategy::Corroborative, &table, &mut rng);
    assert_eq!(r.len(), 1);
    assert!((st.disclosed[0] - 0.55).abs() < 1e-12);
    // ceil(0.55 · 5) = 3 leading words
    assert_eq!(r[0].text, "the defendant repaid");
}

#[test]
fn extract_semantics() {
    assert!(extract(&[], &[]).is_empty());
    let already = vec!["a b".to_string()];
    assert!(extract(&["a  b".into()], &already).is_empty());
    assert_eq!(
        extract(&["c".into(), " d ".into(), "c".into()], &already),
        vec!["c", "d"]
    );
}

#[test]
fn score_examples() {
    let e = Embedder::builtin();
    let keys = vec!["the defendant fled".to_string(), "a knife was found".to_string()];
    assert_eq!(score(&[], &keys, &e).unwrap(), 0.0);
    assert!((score(&keys[..1], &keys, &e).unwrap() - 1.0).abs() < 1e-12);
    assert!(matches!(score(&keys, &[], &e), Err(Error::Config(_))));
}

/// Bag-of-words counts over the vocabulary {a, b, c}.
struct ToyVocab;

impl rps_core::textsim::EmbeddingProvider for ToyVocab {
    fn embed_batch(&self, texts: &[String]) -> Result<Vec<rps_core::textsim::EmbeddingVector>> {
        Ok(texts
            .iter()
            .map(|t| {
                let mut v = vec![0.0; 3];
                for w in t.split_whitespace() {
                    v[["a", "b", "c"].iter().position(|x| *x == w).unwrap()] += 1.0;
                }
                rps_core::textsim::EmbeddingVector {
                    values: v,
                    source: EmbeddingSource::Builtin,
                }
            })
            .collect())
    }
}

#[test]
fn score_averages_best_matches() {
    let e = Embedder::with_provider(Box::new(ToyVocab));
    let keys = vec!["a".to_string(), "b".to_string()];
    // (4, 3, 0)/5 has cosine 0.8 with a and 0.6 with b; (3, 0, 4)/5 has 0.6 with a
    let items = vec!["a a a a b b b".to_string(), "a a a c c c c".to_string()];
    assert!((item_score(&items[0], &keys, &e).unwrap() - 0.8).abs() < 1e-12);
    assert!((item_score(&items[1], &keys, &e).unwrap() - 0.6).abs() < 1e-12);
    assert!((score(&items, &keys, &e).unwrap() - 0.7).abs() < 1e-12);
}

#[test]
fn step_reward_and_done() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let e = Embedder::builtin();
    let mut st = reset(three_fact_case(), 10);
    let table = certain_table();
    st.disclosed = vec![1.0; 3];
    let out = step(&mut st, PromptStrategy::Normal, &table, &e, &mut rng).unwrap();
    assert!(out.response.is_empty());
    assert_eq!(out.reward, 0.0);
    for _ in 1..10 {
        step(&mut st, PromptStrategy::Normal, &table, &e, &mut rng).unwrap();
    }
    assert!(st.is_done());
    assert!(matches!(
        step(&mut st, PromptStrategy::Normal, &table, &e, &mut rng),
        Err(Error::Usage(_))
    ));
}

#[test]
fn full_disclosure_script_matches_offline_score() {
    let e = Embedder::builtin();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for case in generate_cases(5, &mut ChaCha8Rng::seed_from_u64(2)) {
        let mut st = reset(case.clone(), 12);
        let table = certain_table();
        for _ in 0..12 {
            step(&mut st, PromptStrategy::Precise, &table, &e, &mut rng).unwrap();
        }
        let texts: Vec<String> = case.facts.iter().map(|f| f.text.clone()).collect();
        let offline = score(&texts, &case.reference_keys, &e).unwrap();
        assert!((st.score() - offline).abs() < 1e-12);
        assert!((offline - 1.0).abs() < 1e-12);
    }
}

#[test]
fn encode_state_bookkeeping() {
    let e = Embedder::builtin();
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let mut st = reset(three_fact_case(), 10);
    st.disclosed = vec![0.0, 0.5, 0.0];
    let table = DisclosureTable {
        exploratory: [1.0, 1.0, 0.0],
        ..DisclosureTable::default()
    };
    step(&mut st, PromptStrategy::Exploratory, &table, &e, &mut rng).unwrap();
    let v = encode_state(&st);
    assert_eq!(v.len(), STATE_DIM);
    assert_eq!(v[0], 0.1);
    assert_eq!(v[1], st.score());
    // the only undisclosed non-negative fact is the positive one, revealed at 0.5
    assert_eq!(&v[2..5], &[0.5, 0.5, 0.0]);
    assert_eq!(&v[5..], &[0.0, 1.0, 0.0, 0.0, 0.0]);
}

#[test]
fn transcript_lines() {
    let e = Embedder::builtin();
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let mut st = reset(three_fact_case(), 3);
    for _ in 0..3 {
        step(&mut st, PromptStrategy::Precise, &certain_table(), &e, &mut rng).unwrap();
    }
    let mut buf = Vec::new();
    write_transcript(&st, &mut buf).unwrap();
    let lines: Vec<serde_json::Value> = String::from_utf8(buf)
        .unwrap()
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect();
    assert_eq!(lines.len(), 3);
    assert_eq!(lines[2]["strategy"], "precise");
}

/// Tokens that belong to `fact` and to no other fact of the case.
fn distinctive_tokens(case: &CaseFile, idx: usize) -> HashSet<String> {
    let others: HashSet<String> = case
        .facts
        .iter()
        .enumerate()
        .filter(|(i, _)| *i != idx)
        .flat_map(|(_, f)| tokens(&f.text))
        .collect();
    tokens(&case.facts[idx].text)
        .into_iter()
        .filter(|t| !others.contains(t))
        .collect()
}

#[test]
fn soft_strategies_never_leak_negative_facts() {
    let cases = generate_cases(20, &mut ChaCha8Rng::seed_from_u64(3));
    let table = DisclosureTable::default();
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut rounds = 0;
    'outer: for round_robin in 0.. {
        for case in &cases {
            let mut st = reset(case.clone(), 10);
            for t in 0..10 {
                let s = PromptStrategy::from_index((t + round_robin) % 5).unwrap();
                let hidden: Vec<usize> = (0..case.facts.len())
                    .filter(|&i| case.facts[i].category == Category::Negative && st.disclosed[i] == 0.0)
                    .collect();
                let r = user_respond(&mut st, s, &table, &mut rng);
                st.round += 1;
                if matches!(s, PromptStrategy::Normal | PromptStrategy::Exploratory) {
                    for i in &hidden {
                        let secret = distinctive_tokens(case, *i);
                        for item in &r {
                            assert_ne!(item.fact_id, case.facts[*i].id);
                            assert!(tokens(&item.text).iter().all(|t| !secret.contains(t)));
                        }
                    }
                    rounds += 1;
                    if rounds >= 2_000 {
                        break 'outer;
                    }
                }
            }
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn episodes_are_well_formed(seed in 0u64..10_000, actions in proptest::collection::vec(0usize..5, 10)) {
        let e = Embedder::builtin();
        let case = generate_cases(1, &mut ChaCha8Rng::seed_from_u64(seed)).remove(0);
        let table = DisclosureTable::default();
        let run = |rng_seed: u64| {
            let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
            let mut st = reset(case.clone(), 10);
            let mut outs = Vec::new();
            for a in &actions {
                let before = st.disclosed.clone();
                let before_scores = st.item_scores.clone();
                let o = step(&mut st, PromptStrategy::from_index(*a).unwrap(), &table, &e, &mut rng).unwrap();
                assert!(st.disclosed.iter().zip(&before).all(|(a, b)| a >= b));
                assert_eq!(&st.item_scores[..before_scores.len()], &before_scores[..]);
                assert!((-1.0..=1.0).contains(&o.reward));
                assert!((0.0..=1.0).contains(&st.distance()));
                outs.push(o);
            }
            assert!(st.is_done());
            outs
        };
        prop_assert_eq!(run(seed), run(seed));
    }
}
