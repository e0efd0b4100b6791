//! Helpers shared by the integration test targets: fixture loading and the
//! property suites, written against an explicit case count so that they can
//! be run both as ordinary tests and from the acceptance report.

#![allow(dead_code)]

use std::collections::BTreeMap;
use std::path::PathBuf;
use std::sync::OnceLock;

use chrono::{Days, NaiveDate};
use proptest::prelude::*;
use proptest::test_runner::{Config, TestCaseError, TestRunner};

use framecnl::akr::{CanonicalFiller, IngestRecord, Provenance, TemporalStore, TimeValue};
use framecnl::c60::{laplace, learn_ruleset, parse_ruleset, serialize_ruleset, LearnerConfig, Pattern, Rule, RuleSet, SlotConstraint};
use framecnl::corpus::{decode_bio, encode_bio, load_corpus, parse_corpus, write_corpus, FrameAnnotation, Sentence, Span, Token};
use framecnl::eval::f1;
use framecnl::nel::Filler;
use framecnl::parser::{parse_all, parse_sentence, ParserModel};
use framecnl::registry::{EntityKind, FillerKind, FrameKind, FrameRegistry};
use framecnl::training::train_model;

pub const CASES: u32 = 1000;

pub fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(name)
}

fn runner(cases: u32) -> TestRunner {
    TestRunner::new(Config { cases, failure_persistence: None, ..Config::default() })
}

fn check<S: Strategy>(cases: u32, strategy: S, test: impl Fn(S::Value) -> Result<(), TestCaseError>) -> Result<(), String>
where
    S::Value: std::fmt::Debug,
{
    runner(cases).run(&strategy, test).map_err(|e| e.to_string())
}

// ---------------------------------------------------------------------------
// Laplace
// ---------------------------------------------------------------------------

fn counts() -> impl Strategy<Value = (u64, u64)> {
    (1u64..100_000).prop_flat_map(|n| (Just(n), 0..=n))
}

pub fn laplace_monotone_and_bounded(cases: u32) -> Result<(), String> {
    check(cases, counts(), |(n, m)| {
        let l = laplace(n, m).unwrap();
        prop_assert!(l.value() > 0.0 && l.value() < 1.0);
        prop_assert!(l.percent() <= 100);
        // another true positive never hurts, another false positive never helps
        prop_assert!(laplace(n + 1, m).unwrap() > l);
        prop_assert!(laplace(n + 1, m + 1).unwrap() < l);
        prop_assert_eq!(l.numerator(), n - m + 1);
        prop_assert_eq!(l.denominator(), n + 2);
        Ok(())
    })
}

// ---------------------------------------------------------------------------
// Patterns
// ---------------------------------------------------------------------------

const VALUES: [&str; 4] = ["a", "b", "c", "d"];

fn slot() -> impl Strategy<Value = SlotConstraint> {
    prop_oneof![
        Just(SlotConstraint::Wildcard),
        (0..VALUES.len()).prop_map(|i| SlotConstraint::Literal(VALUES[i].into())),
        proptest::sample::subsequence(VALUES.to_vec(), 2..=3)
            .prop_map(|vs| SlotConstraint::value_set(vs).unwrap()),
    ]
}

fn row(width: usize) -> impl Strategy<Value = Vec<String>> {
    proptest::collection::vec((0..VALUES.len()).prop_map(|i| VALUES[i].to_string()), width)
}

/// Narrows one slot: a wildcard becomes a literal, a set loses a value.
fn specialize(p: &Pattern, slot: usize, pick: usize) -> Option<Pattern> {
    let mut q = p.clone();
    q.slots[slot] = match &p.slots[slot] {
        SlotConstraint::Wildcard => SlotConstraint::Literal(VALUES[pick % VALUES.len()].into()),
        SlotConstraint::ValueSet(vs) => {
            let mut vs = vs.clone();
            vs.remove(pick % vs.len());
            SlotConstraint::value_set(vs).unwrap()
        }
        SlotConstraint::Literal(_) => return None,
    };
    Some(q)
}

pub fn pattern_specialization(cases: u32) -> Result<(), String> {
    let width = 5;
    let strategy = (
        proptest::collection::vec(slot(), width),
        0..width,
        0usize..8,
        proptest::collection::vec(row(width), 1..30),
    );
    check(cases, strategy, |(slots, at, pick, rows)| {
        let p = Pattern::new(slots);
        let Some(q) = specialize(&p, at, pick) else { return Ok(()) };
        prop_assert!(q.literal_count() >= p.literal_count());
        for r in &rows {
            if q.matches(r).unwrap() {
                prop_assert!(p.matches(r).unwrap(), "{} matches {:?} but {} does not", q, r, p);
            }
        }
        prop_assert!(Pattern::wildcard(width).matches(&rows[0]).unwrap());
        Ok(())
    })
}

// ---------------------------------------------------------------------------
// Sequential covering
// ---------------------------------------------------------------------------

fn training_set() -> impl Strategy<Value = (Vec<(Vec<String>, bool)>, LearnerConfig)> {
    let width = 4;
    (
        proptest::collection::vec((row(width), any::<bool>()), 1..40),
        1usize..=3,
        1u64..=3,
        any::<bool>(),
    )
        .prop_map(|(examples, max_literals, min_coverage, set_merge)| {
            (examples, LearnerConfig { max_literals, min_coverage, set_merge, ..LearnerConfig::default() })
        })
}

const SCHEMA4: [&str; 4] = ["s0", "s1", "s2", "s3"];

pub fn covering_progress(cases: u32) -> Result<(), String> {
    check(cases, training_set(), |(examples, config)| {
        let positives: Vec<&Vec<String>> = examples.iter().filter(|e| e.1).map(|e| &e.0).collect();
        let learned = match learn_ruleset(&examples, "L", &SCHEMA4, &config) {
            Ok(l) => l,
            Err(_) => {
                prop_assert!(positives.is_empty());
                return Ok(());
            }
        };
        prop_assert_eq!(learned.positives, positives.len());
        let mut covered = vec![false; positives.len()];
        for rule in &learned.ruleset.rules {
            let n = examples.iter().filter(|(r, _)| rule.pattern.matches(r).unwrap()).count() as u64;
            let m = examples.iter().filter(|(r, p)| !p && rule.pattern.matches(r).unwrap()).count() as u64;
            prop_assert_eq!((rule.n, rule.m), (n, m), "stated counts of {}", rule.pattern);
            prop_assert!(rule.n >= config.min_coverage);
            prop_assert!(rule.laplace().at_least(config.min_laplace));
            prop_assert!(rule.pattern.literal_count() <= config.max_literals);
            let mut progress = false;
            for (c, p) in covered.iter_mut().zip(&positives) {
                if !*c && rule.pattern.matches(p).unwrap() {
                    *c = true;
                    progress = true;
                }
            }
            prop_assert!(progress, "rule {} covers no new positive", rule.pattern);
        }
        prop_assert_eq!(learned.uncovered, covered.iter().filter(|c| !**c).count());
        Ok(())
    })
}

/// Best Laplace ratio over every pattern of at most `k` literals built from
/// values seen in the data, by plain enumeration.
pub fn brute_force_best(examples: &[(Vec<String>, bool)], config: &LearnerConfig) -> Option<(u64, u64)> {
    let width = examples[0].0.len();
    let mut domains: Vec<Vec<&str>> = vec![Vec::new(); width];
    for (r, _) in examples {
        for (s, v) in r.iter().enumerate() {
            if !domains[s].contains(&v.as_str()) {
                domains[s].push(v);
            }
        }
    }
    let mut best: Option<(u64, u64)> = None;
    let mut slots: Vec<Option<&str>> = vec![None; width];
    fn go<'a>(
        s: usize,
        left: usize,
        slots: &mut Vec<Option<&'a str>>,
        domains: &[Vec<&'a str>],
        examples: &[(Vec<String>, bool)],
        config: &LearnerConfig,
        best: &mut Option<(u64, u64)>,
    ) {
        if s == slots.len() {
            let hits = examples.iter().filter(|(r, _)| r.iter().zip(slots.iter()).all(|(v, c)| c.is_none_or(|c| c == v)));
            let (mut n, mut m) = (0, 0);
            for (_, p) in hits {
                n += 1;
                m += u64::from(!*p);
            }
            if n == 0 || n < config.min_coverage {
                return;
            }
            let l = laplace(n, m).unwrap();
            if l.at_least(config.min_laplace) && best.is_none_or(|(bn, bm)| l > laplace(bn, bm).unwrap()) {
                *best = Some((n, m));
            }
            return;
        }
        go(s + 1, left, slots, domains, examples, config, best);
        if left > 0 {
            for &v in &domains[s] {
                slots[s] = Some(v);
                go(s + 1, left - 1, slots, domains, examples, config, best);
            }
            slots[s] = None;
        }
    }
    go(0, config.max_literals, &mut slots, &domains, examples, config, &mut best);
    best
}

/// Random training sets for the oracle comparison: at most 60 windows and
/// at most 6 values per feature. Deterministic across runs.
pub fn oracle_sets(count: usize) -> Vec<Vec<(Vec<String>, bool)>> {
    use proptest::strategy::ValueTree;
    let set = (8usize..=60, 3usize..=5, 2usize..=6).prop_flat_map(|(rows, width, values)| {
        let row = proptest::collection::vec((0..values).prop_map(|v| format!("v{v}")), width);
        // positives lean on the first slot so that good rules exist
        proptest::collection::vec((row, 0u8..100), rows).prop_map(|rows| {
            rows.into_iter().map(|(r, roll)| {
                let p = if r[0] == "v0" { roll < 85 } else { roll < 20 };
                (r, p)
            }).collect::<Vec<_>>()
        })
    });
    let mut runner = TestRunner::deterministic();
    (0..count).map(|_| set.new_tree(&mut runner).unwrap().current()).collect()
}

// ---------------------------------------------------------------------------
// Temporal store
// ---------------------------------------------------------------------------

const STORE_FRAMES: [&str; 6] = ["People_by_vocation", "Being_employed", "Employment_end", "Residence", "Attack", "Membership"];

pub fn day0() -> NaiveDate {
    NaiveDate::from_ymd_opt(2000, 1, 1).unwrap()
}

fn entity(kind: EntityKind, i: u8) -> Filler {
    let (prefix, name) = match kind {
        EntityKind::Person => ("p", "Person"),
        EntityKind::Organization => ("o", "Org"),
    };
    Filler::EntityRef { id: format!("{prefix}{i}"), kind, canonical: format!("{name} {i}") }
}

const STRINGS: [&str; 4] = ["soloist", "Soloist ", "Riga", "editor"];

fn record(registry: &FrameRegistry, frame: usize, picks: &[u8], time: (u8, u8), doc: usize) -> IngestRecord {
    let def = registry.get(STORE_FRAMES[frame % STORE_FRAMES.len()]).unwrap();
    let mut fillers = BTreeMap::new();
    for (el, &pick) in def.elements.iter().filter(|e| e.name != "Time").zip(picks.iter().cycle()) {
        if pick % 5 == 0 {
            continue;
        }
        let filler = match el.filler_kind {
            FillerKind::String => Filler::string(STRINGS[pick as usize % STRINGS.len()]),
            k => {
                let kind = if k.accepts(EntityKind::Person) && (pick % 2 == 0 || !k.accepts(EntityKind::Organization)) {
                    EntityKind::Person
                } else {
                    EntityKind::Organization
                };
                entity(kind, pick % 3)
            }
        };
        fillers.insert(el.name.clone(), filler);
    }
    let day = day0().checked_add_days(Days::new(u64::from(time.1 % 90))).unwrap();
    let time = match time.0 % 4 {
        0 => TimeValue::Unknown,
        1 => TimeValue::Approx(day),
        _ => TimeValue::Date(day),
    };
    IngestRecord { frame: def.name.clone(), fillers, time, provenance: Provenance { doc_id: format!("d{doc}"), sentence: 0 } }
}

fn records() -> impl Strategy<Value = Vec<(usize, Vec<u8>, (u8, u8))>> {
    proptest::collection::vec((0..STORE_FRAMES.len(), proptest::collection::vec(any::<u8>(), 4), any::<(u8, u8)>()), 1..40)
}

pub fn build_store(registry: &FrameRegistry, input: &[(usize, Vec<u8>, (u8, u8))]) -> TemporalStore {
    let mut store = TemporalStore::new(registry.clone());
    for (i, (frame, picks, time)) in input.iter().enumerate() {
        store.apply(record(registry, *frame, picks, *time, i)).unwrap();
    }
    store
}

/// No day holds two states of one frame with equal anchors; events hold
/// only on their own day; states only from their start.
pub fn check_supersession(store: &TemporalStore, from: NaiveDate, days: u64) -> Result<(), String> {
    let reg = store.registry();
    for d in 0..days {
        let day = from.checked_add_days(Days::new(d)).unwrap();
        let mut seen = std::collections::BTreeSet::new();
        for inst in store.facts_at(day) {
            let def = reg.get(&inst.frame).unwrap();
            let start = inst.time.day().ok_or_else(|| format!("undated instance {} indexed", inst.id))?;
            match def.kind {
                FrameKind::Event if start != day => return Err(format!("event {} on {day}", inst.id)),
                FrameKind::State if start > day => return Err(format!("state {} before its start on {day}", inst.id)),
                FrameKind::State => {
                    let anchors: Vec<Option<CanonicalFiller>> =
                        def.anchor_fes.iter().map(|fe| inst.fillers.get(fe).map(CanonicalFiller::from)).collect();
                    if !seen.insert((inst.frame.clone(), anchors)) {
                        return Err(format!("two {} states with equal anchors on {day}", inst.frame));
                    }
                }
                FrameKind::Event => {}
            }
        }
    }
    Ok(())
}

pub fn day_index_rebuild(cases: u32) -> Result<(), String> {
    let registry = FrameRegistry::default_registry();
    check(cases, records(), |input| {
        let store = build_store(&registry, &input);
        prop_assert!(store.index() == &store.rebuild_index());
        let mut replayed = TemporalStore::new(registry.clone());
        for r in store.log() {
            replayed.apply(r.clone()).unwrap();
        }
        prop_assert_eq!(replayed.instances(), store.instances());
        prop_assert!(replayed.index() == store.index());
        let total: u64 = store.instances().iter().map(|i| i.count).sum();
        prop_assert_eq!(total as usize, input.len());
        check_supersession(&store, day0(), 100).map_err(TestCaseError::fail)?;
        Ok(())
    })
}

// ---------------------------------------------------------------------------
// BIO and corpus files
// ---------------------------------------------------------------------------

/// Consecutive segments, each optionally labeled; yields (len, spans).
fn labeled_spans() -> impl Strategy<Value = (usize, Vec<(String, Span)>)> {
    proptest::collection::vec((1usize..4, proptest::option::of(0..3usize)), 1..10).prop_map(|segs| {
        let mut at = 0;
        let mut spans = Vec::new();
        for (len, label) in segs {
            if let Some(l) = label {
                spans.push((["Agent", "Place", "Time"][l].to_string(), Span::new(at, at + len)));
            }
            at += len;
        }
        (at, spans)
    })
}

pub fn bio_roundtrip(cases: u32) -> Result<(), String> {
    check(cases, labeled_spans(), |(len, spans)| {
        let tags = encode_bio(len, &spans).unwrap();
        prop_assert_eq!(tags.len(), len);
        prop_assert_eq!(&decode_bio(&tags).unwrap(), &spans);
        prop_assert_eq!(encode_bio(len, &decode_bio(&tags).unwrap()).unwrap(), tags);
        Ok(())
    })
}

const WORDS: [&str; 6] = ["Rīga", "stint", "as", "one-year", "O", "ģērbs"];

fn token() -> impl Strategy<Value = Token> {
    (0..WORDS.len(), 0..WORDS.len(), 0..3usize, 0..3usize, 0..3usize).prop_map(|(s, l, p, n, h)| {
        Token::new(WORDS[s], WORDS[l].to_lowercase(), ["NN", "IN", "NNP"][p], ["O", "PERSON", "LOCATION"][n], ["#NONE#", "person.n.01", "time_period.n.01"][h])
    })
}

fn annotation(len: usize) -> impl Strategy<Value = FrameAnnotation> {
    (0..len, 0..2usize, labeled_spans()).prop_map(move |(target, frame, (_, spans))| {
        let elements = spans
            .into_iter()
            .filter(|(_, s)| s.end <= len && !s.contains(target))
            .collect();
        FrameAnnotation::gold(["Attack", "Being_employed"][frame], Span::single(target), elements)
    })
}

fn sentence() -> impl Strategy<Value = Sentence> {
    (proptest::collection::vec(token(), 1..12), 0u32..1000, proptest::option::of(0u64..5000))
        .prop_flat_map(|(tokens, doc, date)| {
            let len = tokens.len();
            (Just(tokens), Just(doc), Just(date), proptest::collection::vec(annotation(len), 0..3))
        })
        .prop_map(|(tokens, doc, date, annotations)| {
            let mut s = Sentence::new(format!("doc-{doc}"), tokens);
            s.pub_date = date.map(|d| day0().checked_add_days(Days::new(d)).unwrap());
            s.annotations = annotations;
            s
        })
}

pub fn corpus_roundtrip(cases: u32) -> Result<(), String> {
    check(cases, proptest::collection::vec(sentence(), 0..5), |sentences| {
        let text = write_corpus(&sentences);
        let back = parse_corpus(&text).map_err(|e| TestCaseError::fail(format!("{e}\n{text}")))?;
        prop_assert_eq!(&back, &sentences);
        prop_assert_eq!(write_corpus(&back), text);
        Ok(())
    })
}

// ---------------------------------------------------------------------------
// Parser
// ---------------------------------------------------------------------------

/// Model trained once on the stint fixture.
pub fn stint_model() -> &'static (ParserModel, Vec<Sentence>) {
    static MODEL: OnceLock<(ParserModel, Vec<Sentence>)> = OnceLock::new();
    MODEL.get_or_init(|| {
        let corpus = load_corpus(fixture("stint.tsv")).unwrap();
        let (model, _) = train_model(&corpus, &FrameRegistry::default_registry(), &LearnerConfig::default(), 0).unwrap();
        (model, corpus)
    })
}

pub fn parser_determinism(cases: u32) -> Result<(), String> {
    let (model, corpus) = stint_model();
    let vocab: Vec<Token> = corpus.iter().flat_map(|s| s.tokens.iter().cloned()).collect();
    let picks = proptest::collection::vec(proptest::collection::vec(0..vocab.len(), 1..15), 1..6);
    check(cases, (picks, 2usize..6), |(picks, jobs)| {
        let sentences: Vec<Sentence> = picks
            .iter()
            .enumerate()
            .map(|(i, p)| Sentence::new(format!("r{i}"), p.iter().map(|&k| vocab[k].clone()).collect()))
            .collect();
        let sequential: Vec<Vec<FrameAnnotation>> = sentences.iter().map(|s| parse_sentence(s, model)).collect();
        prop_assert_eq!(&parse_all(&sentences, model, 1), &sequential);
        prop_assert_eq!(&parse_all(&sentences, model, jobs), &sequential);
        Ok(())
    })
}

// ---------------------------------------------------------------------------
// Rule files and F1
// ---------------------------------------------------------------------------

const AWKWARD: [&str; 7] = ["get", "a b", "{x}", "_", "", "say \"hi\"", "ā,ē"];

fn rule(width: usize) -> impl Strategy<Value = Rule> {
    let slot = prop_oneof![
        Just(SlotConstraint::Wildcard),
        (0..AWKWARD.len()).prop_map(|i| SlotConstraint::Literal(AWKWARD[i].into())),
        proptest::sample::subsequence(AWKWARD.to_vec(), 2..=4).prop_map(|v| SlotConstraint::value_set(v).unwrap()),
    ];
    (proptest::collection::vec(slot, width), (1u64..300).prop_flat_map(|n| (Just(n), 0..=n / 4)))
        .prop_map(|(slots, (n, m))| Rule::new(Pattern::new(slots), n, m).unwrap())
}

pub fn rulefile_roundtrip(cases: u32) -> Result<(), String> {
    let strategy = (proptest::collection::vec(rule(3), 0..6), prop_oneof![Just(0.0), Just(0.5), Just(0.66)]);
    check(cases, strategy, |(rules, threshold)| {
        let rules: Vec<Rule> = rules.into_iter().filter(|r| r.laplace().at_least(threshold)).collect();
        let rs = RuleSet::new("Frame.Fe", vec!["a".into(), "b".into(), "c".into()], rules, threshold).unwrap();
        let text = serialize_ruleset(&rs);
        prop_assert_eq!(&parse_ruleset(&text).map_err(|e| TestCaseError::fail(format!("{e}\n{text}")))?, &rs);
        Ok(())
    })
}

pub fn f1_properties(cases: u32) -> Result<(), String> {
    check(cases, (0.0f64..=1.0, 0.0f64..=1.0), |(p, r)| {
        let f = f1(p, r).unwrap();
        prop_assert!(f >= p.min(r) - 1e-12 && f <= p.max(r) + 1e-12);
        prop_assert!((f - f1(r, p).unwrap()).abs() < 1e-12);
        prop_assert!((f1(p, p).unwrap() - p).abs() < 1e-12);
        Ok(())
    })
}

/// Every suite, in report order.
pub type Suite = fn(u32) -> Result<(), String>;

pub const SUITES: [(&str, Suite); 9] = [
    ("laplace monotonicity and bounds", laplace_monotone_and_bounded),
    ("pattern specialization", pattern_specialization),
    ("covering progress", covering_progress),
    ("day-index rebuild consistency", day_index_rebuild),
    ("BIO round-trip", bio_roundtrip),
    ("corpus round-trip", corpus_roundtrip),
    ("parser determinism under worker counts", parser_determinism),
    ("rule-file round-trip", rulefile_roundtrip),
    ("f1 bounds and symmetry", f1_properties),
];
