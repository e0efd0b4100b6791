//! Acceptance report: one line per criterion. Run with
//! `cargo test -p framecnl --test acceptance` (add `--release` for the
//! timing-sensitive criteria to reflect production speed).

mod common;

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::process::ExitCode;
use std::time::{Duration, Instant};

use chrono::NaiveDate;

use framecnl::akr::{TemporalStore, TimeValue};
use framecnl::c60::{laplace, learn_ruleset, parse_ruleset, serialize_ruleset, LearnerConfig, RuleFileErrorKind};
use framecnl::corpus::{load_corpus, FrameAnnotation, Sentence, Span, Token};
use framecnl::eval::{evaluate, f1, from_sentences, Annotated};
use framecnl::nel::{parse_gazetteer, LinkConfig};
use framecnl::parser::parse_sentence;
use framecnl::registry::{parse_registry, FrameRegistry};
use framecnl::training::{train_model, train_targets};
use framecnl::verbalizer::{generate_instances, render_profile, roundtrip_gazetteer, roundtrip_model, verbalize, RoundtripConfig};

/// A criterion's verdict with a one-line explanation.
struct Verdict {
    pass: bool,
    detail: String,
}

fn pass(detail: impl Into<String>) -> Verdict {
    Verdict { pass: true, detail: detail.into() }
}

fn fail(detail: impl Into<String>) -> Verdict {
    Verdict { pass: false, detail: detail.into() }
}

fn d(s: &str) -> NaiveDate {
    s.parse().unwrap()
}

fn laplace_exactness() -> Verdict {
    let rows = [(193, 9, 95), (49, 0, 98), (23, 3, 84), (4, 0, 83), (5, 1, 71), (2, 0, 75)];
    let wrong: Vec<String> = rows
        .iter()
        .filter(|(n, m, p)| laplace(*n, *m).unwrap().percent() != *p)
        .map(|(n, m, p)| format!("({n},{m}) gives {}% not {p}%", laplace(*n, *m).unwrap().percent()))
        .collect();
    if wrong.is_empty() { pass("6/6 rows") } else { fail(wrong.join("; ")) }
}

/// Printed table cells: system, stage, precision, recall, F1 (percent).
const TABLE: [(&str, &str, f64, f64, f64); 8] = [
    ("LTH", "target", 66.2, 50.6, 57.3),
    ("LTH", "FE", 51.6, 35.4, 42.0),
    ("SEMAFOR", "target", 69.7, 54.9, 61.4),
    ("SEMAFOR", "FE", 58.1, 38.8, 46.5),
    ("C6.0 English", "target", 77.1, 53.7, 63.3),
    ("C6.0 English", "FE", 47.3, 47.0, 47.1),
    ("C6.0 Latvian", "target", 63.5, 62.7, 63.1),
    ("C6.0 Latvian", "FE", 65.9, 76.8, 70.9),
];

fn f1_recomputation() -> Verdict {
    let mut off = Vec::new();
    for (system, stage, p, r, printed) in TABLE {
        let computed = 100.0 * f1(p / 100.0, r / 100.0).unwrap();
        if (computed - printed).abs() > 0.05 {
            off.push(format!("{system} {stage}: f1({p}, {r}) = {computed:.3}, printed {printed}"));
        }
    }
    if off.is_empty() {
        pass("8/8 cells within ±0.05")
    } else {
        fail(format!("{}/8 cells within ±0.05; {}", 8 - off.len(), off.join("; ")))
    }
}

const REVENGE_RULES: &str = "\
label=Revenge
schema=prev.lemma,prev.pos,prev.ner,curr.lemma,curr.hypernym,curr.pos,curr.ner,next.lemma,next.pos,next.ner
threshold=0.66
[_, _, _, _, {retaliation.n.1, punish.v.1, revengeful.s.1}, _, _, _, _, _]\t193\t9\t95%
[_, _, _, {avenger, retaliated, retaliate, avenged}, _, _, _, _, _, _]\t49\t0\t98%
[_, MD, _, get, _, _, _, _, RB, _]\t23\t3\t84%
[_, JJ, _, sanction, _, _, _, _, _, _]\t4\t0\t83%
[_, _, _, sanction, _, NNS, _, _, IN, _]\t5\t1\t71%
[_, _, #NONE#, sanction, _, _, _, \"'\", _, _]\t2\t0\t75%
";

fn rule_file_fidelity() -> Verdict {
    let rs = match parse_ruleset(REVENGE_RULES) {
        Ok(rs) => rs,
        Err(e) => return fail(format!("transcription rejected: {e}")),
    };
    let again = match parse_ruleset(&serialize_ruleset(&rs)) {
        Ok(r) => r,
        Err(e) => return fail(format!("serialized form rejected: {e}")),
    };
    if again != rs || rs.rules.len() != 6 {
        return fail("parse → serialize → parse changed the rule set");
    }
    let bad = REVENGE_RULES.replace("\t193\t9\t95%", "\t193\t9\t90%");
    match parse_ruleset(&bad) {
        Err(e) if matches!(e.kind, RuleFileErrorKind::Inconsistent { .. }) => pass("6 rows round-trip; 193/9 at 90% rejected"),
        other => fail(format!("inconsistent row not rejected: {other:?}")),
    }
}

fn roundtrip() -> Verdict {
    let registry = FrameRegistry::default_registry();
    let config = RoundtripConfig { instances_per_frame: 5, ..RoundtripConfig::default() };
    let mut parts = Vec::new();
    let mut ok = true;
    for lang in ["en", "lv"] {
        let started = Instant::now();
        let report = match roundtrip_model(&registry, lang, &config) {
            Ok((_, r)) => r,
            Err(e) => return fail(format!("{lang}: {e}")),
        };
        let took = started.elapsed();
        ok &= report.is_exact() && report.frames.len() == 26 && took < Duration::from_secs(60);
        parts.push(format!("{}/{} exact ({lang}, {:.1}s)", report.exact_frames(), report.frames.len(), took.as_secs_f64()));
    }
    Verdict { pass: ok, detail: parts.join(", ") }
}

fn learner_oracle() -> Verdict {
    let config = LearnerConfig { set_merge: false, ..LearnerConfig::default() };
    let schema = ["s0", "s1", "s2", "s3", "s4"];
    let mut compared = 0;
    for (i, set) in common::oracle_sets(40).iter().enumerate() {
        let width = set[0].0.len();
        let oracle = common::brute_force_best(set, &config).map(|(n, m)| laplace(n, m).unwrap());
        let learned = match learn_ruleset(set, "L", &schema[..width], &config) {
            Ok(l) => l.ruleset.rules.first().map(|r| r.laplace()),
            Err(_) => continue,
        };
        if learned != oracle {
            return fail(format!("set {i}: learner {learned:?}, brute force {oracle:?}"));
        }
        compared += 1;
    }
    if compared >= 20 { pass(format!("{compared} random sets agree")) } else { fail(format!("only {compared} sets compared")) }
}

fn stint_end_to_end() -> Verdict {
    let corpus = load_corpus(common::fixture("stint.tsv")).unwrap();
    let registry = FrameRegistry::default_registry();
    let (model, _) = train_model(&corpus, &registry, &LearnerConfig::default(), 0).unwrap();
    let sentence = corpus.iter().find(|s| s.doc_id == "fig").unwrap();
    let parsed = parse_sentence(sentence, &model);
    let shape = |a: &FrameAnnotation| {
        let mut els: Vec<(String, Span)> = a.elements.iter().map(|e| (e.fe.clone(), e.span)).collect();
        els.sort();
        (a.frame.clone(), a.target, els)
    };
    if parsed.len() != 1 || shape(&parsed[0]) != shape(&sentence.annotations[0]) {
        return fail(format!("parsed {parsed:?}"));
    }
    let text = |fe: &str| {
        let span = parsed[0].elements.iter().find(|e| e.fe == fe).unwrap().span;
        sentence.span_text(span)
    };
    let gold = from_sentences(&corpus);
    let pred: Vec<Annotated> = corpus
        .iter()
        .map(|s| Annotated { doc_id: Some(s.doc_id.clone()), annotations: parse_sentence(s, &model) })
        .collect();
    let report = evaluate(&gold, &pred, false).unwrap();
    if report.targets.f1 != 1.0 || report.frame_elements.f1 != 1.0 {
        return fail(format!("F1 target {} FE {}", report.targets.f1, report.frame_elements.f1));
    }
    pass(format!(
        "Duration=`{}` Position=`{}` Employer=`{}`; F1 1.0 on {} sentences",
        text("Duration"),
        text("Position"),
        text("Employer"),
        corpus.len()
    ))
}

fn presidency() -> Verdict {
    let registry = parse_registry(
        r#"{"frames": {"Leadership": {"kind": "state", "anchor_fes": ["Governed", "Role"], "elements": [
            {"name": "Leader", "filler_kind": "entity(Person)"}, {"name": "Governed", "filler_kind": "string"},
            {"name": "Role", "filler_kind": "string"}, {"name": "Time", "filler_kind": "string"}]}}}"#,
    )
    .unwrap();
    let gaz = parse_gazetteer(
        "fr1\tPerson\tNicolas Sarkozy\tSarkozy|N. Sarkozy\nfr2\tPerson\tFrançois Hollande\tHollande|F. Hollande\n",
        LinkConfig::default(),
    )
    .unwrap();
    let mut store = TemporalStore::new(registry);
    let mut ids = Vec::new();
    for (i, (who, when)) in [("N. Sarkozy", "2007-05-16"), ("F. Hollande", "2012-05-15")].into_iter().enumerate() {
        // "<who> is the president of France ( <when> )"
        let mut words: Vec<&str> = who.split(' ').collect();
        let leader = Span::new(0, words.len());
        words.extend(["is", "the", "president", "of", "France", "(", when, ")"]);
        let at = |w: &str| words.iter().position(|x| *x == w).unwrap();
        let tokens = words.iter().map(|w| Token::new(*w, *w, "NN", "O", "#NONE#")).collect();
        let s = Sentence::new(format!("news-{i}"), tokens);
        let a = FrameAnnotation::gold(
            "Leadership",
            Span::single(at("president")),
            vec![
                ("Leader".into(), leader),
                ("Role".into(), Span::single(at("president"))),
                ("Governed".into(), Span::single(at("France"))),
                ("Time".into(), Span::single(at(when))),
            ],
        );
        ids.push(store.ingest(&a, &s, 0, &gaz).unwrap().id);
    }
    let (sarkozy, hollande) = (ids[0], ids[1]);
    if store.get(sarkozy).unwrap().time != TimeValue::Date(d("2007-05-16")) {
        return fail("time not resolved from the sentence");
    }
    let at = |day: &str| store.facts_at(d(day)).iter().map(|i| i.id).collect::<Vec<_>>();
    if at("2010-06-01") != [sarkozy] || at("2013-06-01") != [hollande] {
        return fail(format!("2010: {:?}, 2013: {:?}", at("2010-06-01"), at("2013-06-01")));
    }
    let from = d("2007-01-01");
    let days = (d("2015-01-01") - from).num_days() as u64;
    if let Err(e) = common::check_supersession(&store, from, days) {
        return fail(e);
    }
    pass(format!("Sarkozy only in 2010, Hollande only in 2013; {days} days scanned"))
}

fn dedup_counting() -> Verdict {
    let registry = FrameRegistry::default_registry();
    let gaz = parse_gazetteer("e1\tPerson\tIeva Akuratere\tAkuratere\n", LinkConfig::default()).unwrap();
    let paraphrases = ["Ieva Akuratere bija solista amatā", "Akuratere bija Solista amatā", "IEVA  AKURATERE bija solista amatā"];
    let mut lines = Vec::new();
    for k in [1usize, 3, 23] {
        let mut store = TemporalStore::new(registry.clone());
        for j in 0..k {
            let words: Vec<&str> = paraphrases[j % paraphrases.len()].split_whitespace().collect();
            let n = words.len();
            let tokens = words.iter().map(|w| Token::new(*w, w.to_lowercase(), "NN", "O", "#NONE#")).collect();
            let s = Sentence::new(format!("lv-{j}"), tokens);
            let a = FrameAnnotation::gold(
                "Being_employed",
                Span::single(n - 1),
                vec![("Employee".into(), Span::new(0, n - 3)), ("Position".into(), Span::single(n - 2))],
            );
            store.ingest(&a, &s, j, &gaz).unwrap();
        }
        if store.len() != 1 || store.instances()[0].count != k as u64 {
            return fail(format!("k={k}: {} instances", store.len()));
        }
        let profile = render_profile(&store.entity_profile("e1", Some(&gaz)).unwrap(), "lv", &registry);
        let line = profile.trim_end();
        if profile.lines().count() != 1 || !line.ends_with(&format!(" [{k}]")) {
            return fail(format!("k={k}: profile {profile:?}"));
        }
        lines.push(line.to_string());
    }
    pass(lines.join(" | "))
}

fn property_suites() -> Verdict {
    let started = Instant::now();
    let mut failed = Vec::new();
    for (name, suite) in common::SUITES {
        if let Err(e) = suite(common::CASES) {
            failed.push(format!("{name}: {e}"));
        }
    }
    let took = started.elapsed();
    if !failed.is_empty() {
        return fail(failed.join("; "));
    }
    let detail = format!("{} suites × {} cases in {:.1}s", common::SUITES.len(), common::CASES, took.as_secs_f64());
    if took < Duration::from_secs(120) { pass(detail) } else { fail(detail) }
}

fn scale_check() -> Verdict {
    let registry = FrameRegistry::default_registry();
    let gaz = roundtrip_gazetteer();
    let per_frame = 4000usize.div_ceil(registry.len());
    let mut corpus: Vec<Sentence> = Vec::new();
    for f in registry.frames() {
        for i in generate_instances(f, "en", per_frame, &gaz) {
            corpus.push(verbalize(&i, "en", &registry).unwrap());
        }
    }
    corpus.truncate(4000);
    let started = Instant::now();
    let outcomes = train_targets(&corpus, None, &LearnerConfig::default(), 0);
    let took = started.elapsed();
    let learned = outcomes.iter().filter(|o| o.result.is_ok()).count();
    let tokens: usize = corpus.iter().map(Sentence::len).sum();
    let detail = format!("{learned}/26 target rule sets from {} sentences ({tokens} tokens) in {:.1}s", corpus.len(), took.as_secs_f64());
    if learned == 26 && took < Duration::from_secs(300) { pass(detail) } else { fail(detail) }
}

/// Criteria that cannot hold for reasons outside the implementation, with
/// the explanation printed alongside the verdict. They are reported as
/// failures but do not fail the run, provided they fail exactly as
/// described.
const KNOWN: [(usize, &str); 1] = [(
    2,
    "LTH target: f1(66.2, 50.6) = 57.358, printed 57.3; the printed cell is only reachable from unrounded P/R",
)];

fn main() -> ExitCode {
    type Criterion = fn() -> Verdict;
    let criteria: [(&str, Criterion); 10] = [
        ("laplace exactness", laplace_exactness),
        ("F1 recomputation", f1_recomputation),
        ("rule-file fidelity", rule_file_fidelity),
        ("round-trip exactness", roundtrip),
        ("learner vs brute-force oracle", learner_oracle),
        ("stint sentence end to end", stint_end_to_end),
        ("presidency supersession", presidency),
        ("dedup counting", dedup_counting),
        ("property suites", property_suites),
        ("scale check", scale_check),
    ];
    let mut unexpected = 0;
    for (i, (name, run)) in criteria.iter().enumerate() {
        let number = i + 1;
        let verdict = catch_unwind(AssertUnwindSafe(run)).unwrap_or_else(|e| {
            let msg = e.downcast_ref::<String>().cloned().or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()));
            fail(format!("panicked: {}", msg.unwrap_or_default()))
        });
        let known = KNOWN.iter().find(|(n, _)| *n == number);
        let status = if verdict.pass { "PASS" } else { "FAIL" };
        println!("criterion {number:>2} [{status}] {name}: {}", verdict.detail);
        match (verdict.pass, known) {
            (true, _) => {}
            (false, Some((_, why))) if verdict.detail.contains("7/8") && verdict.detail.contains("LTH target") => {
                println!("             known deviation: {why}");
            }
            (false, _) => unexpected += 1,
        }
    }
    if unexpected == 0 { ExitCode::SUCCESS } else { ExitCode::FAILURE }
}
