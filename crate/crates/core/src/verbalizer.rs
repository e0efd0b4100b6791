//! Controlled-language generation from stored frame instances, profile
//! reports, and the generate → parse → re-ingest loop.
//!
//! A verbalized sentence is born featurized: literal tokens carry their
//! template features, entity names get proper-noun features, and string
//! fillers take the slot's features. It also carries the gold annotation, so
//! verbalizations double as training data.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use chrono::NaiveDate;
use serde::Serialize;
use thiserror::Error;

use crate::akr::{DedupKey, FrameInstance, Profile, Provenance, TemporalStore, TimeValue};
use crate::c60::LearnerConfig;
use crate::corpus::{FrameAnnotation, Sentence, Span, Token, NONE};
use crate::nel::{Entity, Filler, Gazetteer, LinkConfig};
use crate::parser::{parse_sentence, ParserModel};
use crate::registry::{EntityKind, FillerKind, FrameDef, FrameKind, FrameRegistry, Segment, TIME_FE};
use crate::training::train_model;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum VerbalizeError {
    #[error("unknown frame `{0}`")]
    UnknownFrame(String),
    #[error("frame `{frame}` has no `{lang}` template")]
    MissingTemplate { frame: String, lang: String },
    #[error("frame `{frame}`: element `{fe}` is filled but the `{lang}` template has no slot for it")]
    NoSlot { frame: String, lang: String, fe: String },
    #[error("filler `{0}` cannot be written as tokens")]
    BadFiller(String),
    #[error("training the round-trip model failed: {0}")]
    Training(String),
}

fn entity_token(word: &str, kind: EntityKind) -> Token {
    let (ner, hyp) = match kind {
        EntityKind::Person => ("PERSON", "person.n.01"),
        EntityKind::Organization => ("ORGANIZATION", "organization.n.01"),
    };
    Token::new(word, word, "NNP", ner, hyp)
}

fn filler_tokens(filler: &Filler, features: &crate::registry::SlotFeatures) -> Result<Vec<Token>, VerbalizeError> {
    let words: Vec<&str> = filler.text().split_whitespace().collect();
    if words.is_empty() || words.contains(&NONE) {
        return Err(VerbalizeError::BadFiller(filler.text().to_string()));
    }
    Ok(words
        .into_iter()
        .map(|w| match filler {
            Filler::EntityRef { kind, .. } => entity_token(w, *kind),
            Filler::UnidentifiedString { .. } => Token::new(w, w, &features.pos, &features.ner, &features.hypernym),
        })
        .collect())
}

/// Renders one instance as a featurized, gold-annotated sentence.
///
/// An exact date becomes a trailing `( YYYY-MM-DD )` Time phrase (placed
/// before a final full stop); an approximate date becomes the sentence's
/// publication date, so either way the time resolves back unchanged.
pub fn verbalize(instance: &FrameInstance, lang: &str, registry: &FrameRegistry) -> Result<Sentence, VerbalizeError> {
    let frame = registry.get(&instance.frame).ok_or_else(|| VerbalizeError::UnknownFrame(instance.frame.clone()))?;
    let template = frame
        .templates
        .get(lang)
        .ok_or_else(|| VerbalizeError::MissingTemplate { frame: frame.name.clone(), lang: lang.to_string() })?;
    for fe in instance.fillers.keys() {
        if template.slot(fe).is_none() {
            return Err(VerbalizeError::NoSlot { frame: frame.name.clone(), lang: lang.into(), fe: fe.clone() });
        }
    }
    let mut tokens: Vec<Token> = Vec::new();
    let mut target = 0;
    let mut elements: Vec<(String, Span)> = Vec::new();
    for seg in &template.segments {
        match seg {
            Segment::Literal { tokens: lit, target: t } => {
                if let Some(t) = t {
                    target = tokens.len() + t;
                }
                tokens.extend(lit.iter().cloned());
            }
            Segment::Slot { fe, pre, post, features } => {
                let Some(filler) = instance.fillers.get(fe) else { continue };
                tokens.extend(pre.iter().cloned());
                let start = tokens.len();
                tokens.extend(filler_tokens(filler, features)?);
                elements.push((fe.clone(), Span::new(start, tokens.len())));
                tokens.extend(post.iter().cloned());
            }
        }
    }
    let mut pub_date = None;
    match instance.time {
        TimeValue::Date(d) => {
            let at = if tokens.last().is_some_and(|t| t.surface == ".") { tokens.len() - 1 } else { tokens.len() };
            let date = d.format("%Y-%m-%d").to_string();
            let phrase = [
                Token::new("(", "(", "-LRB-", "O", NONE),
                Token::new(&date, &date, "CD", "DATE", NONE),
                Token::new(")", ")", "-RRB-", "O", NONE),
            ];
            tokens.splice(at..at, phrase);
            elements.push((TIME_FE.to_string(), Span::single(at + 1)));
        }
        TimeValue::Approx(d) => pub_date = Some(d),
        TimeValue::Unknown => {}
    }
    elements.sort_by_key(|e| e.1.start);
    let mut s = Sentence::new(format!("akr-{}", instance.id), tokens);
    s.pub_date = pub_date;
    s.annotations.push(FrameAnnotation::gold(frame.name.clone(), Span::single(target), elements));
    Ok(s)
}

/// Surface text with conventional spacing around punctuation.
pub fn render_text(sentence: &Sentence) -> String {
    render_with(sentence, |_| None)
}

fn render_with(sentence: &Sentence, replace: impl Fn(usize) -> Option<(String, usize)>) -> String {
    let mut out = String::new();
    let mut i = 0;
    let mut glue = true;
    while i < sentence.len() {
        let (text, next) = replace(i).unwrap_or_else(|| (sentence.tokens[i].surface.clone(), i + 1));
        let closing = matches!(text.as_str(), "." | "," | ")" | ";" | ":" | "!" | "?");
        if !glue && !closing {
            out.push(' ');
        }
        glue = text == "(";
        out.push_str(&text);
        i = next;
    }
    out
}

/// One profile line: linked entities as `[[id|canonical]]`, count in brackets.
pub fn render_instance_line(instance: &FrameInstance, lang: &str, registry: &FrameRegistry) -> String {
    let body = match verbalize(instance, lang, registry) {
        Ok(s) => {
            let a = &s.annotations[0];
            render_with(&s, |i| {
                let el = a.elements.iter().find(|e| e.span.start == i)?;
                match instance.fillers.get(&el.fe)? {
                    f @ Filler::EntityRef { .. } => Some((f.to_string(), el.span.end)),
                    Filler::UnidentifiedString { .. } => None,
                }
            })
        }
        // No usable template: fall back to a flat listing.
        Err(_) => {
            let mut line = format!("{}(", instance.frame);
            for (i, (fe, f)) in instance.fillers.iter().enumerate() {
                let _ = write!(line, "{}{fe}: {f}", if i > 0 { ", " } else { "" });
            }
            line.push(')');
            line
        }
    };
    format!("{body} [{}]", instance.count)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ProfileLine {
    pub id: u64,
    pub frame: String,
    pub count: u64,
    pub text: String,
}

pub fn profile_lines(profile: &Profile, lang: &str, registry: &FrameRegistry) -> Vec<ProfileLine> {
    profile
        .instances()
        .map(|i| ProfileLine {
            id: i.id,
            frame: i.frame.clone(),
            count: i.count,
            text: render_instance_line(i, lang, registry),
        })
        .collect()
}

/// The text report: one line per instance; empty profile, empty text.
pub fn render_profile(profile: &Profile, lang: &str, registry: &FrameRegistry) -> String {
    profile_lines(profile, lang, registry).into_iter().map(|l| l.text + "\n").collect()
}

// ---------------------------------------------------------------------------
// Round trip
// ---------------------------------------------------------------------------

const PERSONS: [&str; 8] = [
    "Ieva Akuratere",
    "Jānis Bērziņš",
    "Anna Marija Kalniņa",
    "Māris Ozols",
    "Laura Liepa",
    "Vasks",
    "Marta Zariņa",
    "Edgars Krūmiņš",
];

const ORGANIZATIONS: [&str; 7] = [
    "Rīgas dome",
    "Latvijas Radio",
    "Saeima",
    "Latvijas Universitāte",
    "Latvenergo",
    "Valsts kanceleja",
    "Nacionālā opera",
];

/// The synthetic gazetteer behind generated instances: ids `p<i>`, `o<i>`.
pub fn roundtrip_gazetteer() -> Gazetteer {
    let mut g = Gazetteer::new(LinkConfig::default());
    let all = PERSONS
        .iter()
        .enumerate()
        .map(|(i, n)| (format!("p{i}"), EntityKind::Person, *n))
        .chain(ORGANIZATIONS.iter().enumerate().map(|(i, n)| (format!("o{i}"), EntityKind::Organization, *n)));
    for (id, kind, name) in all {
        g.insert(Entity { id, kind, canonical: name.to_string(), aliases: Default::default() })
            .expect("pool entries are distinct");
    }
    g
}

fn pick_entity(g: &Gazetteer, kind: EntityKind, n: usize) -> Filler {
    let of_kind: Vec<&Entity> = g.entities().iter().filter(|e| e.kind == kind).collect();
    Filler::entity(of_kind[n % of_kind.len()])
}

/// Elements filled in the `j`-th generated instance: all of them, only the
/// anchors (or the first element of an event), or all but one.
fn filled_elements(frame: &FrameDef, lang: &str, j: usize) -> Vec<String> {
    let slots: Vec<String> = match frame.templates.get(lang) {
        Some(t) => t
            .segments
            .iter()
            .filter_map(|s| match s {
                Segment::Slot { fe, .. } => Some(fe.clone()),
                Segment::Literal { .. } => None,
            })
            .collect(),
        None => return Vec::new(),
    };
    match j % 4 {
        1 => match frame.kind {
            FrameKind::State => slots.into_iter().filter(|s| frame.anchor_fes.contains(s)).collect(),
            FrameKind::Event => slots.into_iter().take(1).collect(),
        },
        2 if slots.len() > 1 => {
            let drop = (j / 4) % slots.len();
            slots.into_iter().enumerate().filter(|(i, _)| *i != drop).map(|(_, s)| s).collect()
        }
        _ => slots,
    }
}

/// Deterministic coverage instances for one frame.
pub fn generate_instances(frame: &FrameDef, lang: &str, count: usize, gazetteer: &Gazetteer) -> Vec<FrameInstance> {
    (0..count)
        .map(|j| {
            let mut fillers = BTreeMap::new();
            for (k, fe) in filled_elements(frame, lang, j).into_iter().enumerate() {
                let def = frame.element(&fe).expect("template slots name elements");
                let n = j * 3 + k;
                let filler = match def.filler_kind {
                    FillerKind::Entity(Some(kind)) => pick_entity(gazetteer, kind, n),
                    FillerKind::Entity(None) => {
                        let kind = if (j + k) % 2 == 0 { EntityKind::Person } else { EntityKind::Organization };
                        pick_entity(gazetteer, kind, n)
                    }
                    FillerKind::String if def.examples.is_empty() => Filler::string(format!("{}{}", fe.to_lowercase(), j % 5)),
                    FillerKind::String => Filler::string(def.examples[(j + k) % def.examples.len()].clone()),
                };
                fillers.insert(fe, filler);
            }
            let day = NaiveDate::from_ymd_opt(1990 + (j % 30) as i32, 1 + (j % 12) as u32, 1 + (j % 28) as u32)
                .expect("valid day");
            let time = match j % 3 {
                0 => TimeValue::Date(day),
                1 => TimeValue::Approx(day),
                _ => TimeValue::Unknown,
            };
            FrameInstance {
                id: j as u64,
                frame: frame.name.clone(),
                fillers,
                time,
                count: 1,
                provenance: vec![Provenance { doc_id: format!("gen-{}", frame.name), sentence: j }],
                time_conflict: false,
            }
        })
        .collect()
}

#[derive(Debug, Clone)]
pub struct RoundtripConfig {
    /// Instances checked per frame.
    pub instances_per_frame: usize,
    /// Instances per frame the model is trained on (at least the above).
    pub training_per_frame: usize,
    pub learner: LearnerConfig,
    pub jobs: usize,
}

impl Default for RoundtripConfig {
    fn default() -> Self {
        RoundtripConfig { instances_per_frame: 8, training_per_frame: 24, learner: LearnerConfig::default(), jobs: 0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FrameRoundtrip {
    pub frame: String,
    pub instances: usize,
    pub exact: usize,
    pub failures: Vec<String>,
}

impl FrameRoundtrip {
    pub fn is_exact(&self) -> bool {
        self.failures.is_empty() && self.exact == self.instances
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RoundtripReport {
    pub lang: String,
    pub frames: Vec<FrameRoundtrip>,
    /// Target lemmas evoking more than one frame.
    pub conflicts: Vec<(String, Vec<String>)>,
}

impl RoundtripReport {
    pub fn exact_frames(&self) -> usize {
        self.frames.iter().filter(|f| f.is_exact()).count()
    }

    pub fn is_exact(&self) -> bool {
        self.exact_frames() == self.frames.len()
    }

    pub fn render(&self) -> String {
        let mut out = String::new();
        for f in &self.frames {
            let mark = if f.is_exact() { "exact" } else { "INEXACT" };
            let _ = writeln!(out, "{:<24} {:>3}/{:<3} {mark}", f.frame, f.exact, f.instances);
            for why in &f.failures {
                let _ = writeln!(out, "    {why}");
            }
        }
        let _ = writeln!(out, "{}/{} frames exact ({})", self.exact_frames(), self.frames.len(), self.lang);
        out
    }
}

/// Why a parsed verbalization does not re-ingest to its source, if it doesn't.
fn check_one(
    instance: &FrameInstance,
    sentence: &Sentence,
    model: &ParserModel,
    store: &TemporalStore,
    gazetteer: &Gazetteer,
) -> Option<String> {
    let text = render_text(sentence);
    let parsed = parse_sentence(sentence, model);
    let [a] = parsed.as_slice() else {
        let frames: Vec<&str> = parsed.iter().map(|a| a.frame.as_str()).collect();
        return Some(format!("`{text}`: expected one annotation, got {frames:?}"));
    };
    let record = match store.record_for(a, sentence, 0, gazetteer) {
        Ok(r) => r,
        Err(e) => return Some(format!("`{text}`: {e}")),
    };
    if record.frame != instance.frame
        || record.fillers != instance.fillers
        || DedupKey::new(&record.frame, &record.fillers) != instance.key()
    {
        let got: Vec<String> = record.fillers.iter().map(|(k, v)| format!("{k}={}", v.text())).collect();
        return Some(format!("`{text}`: re-ingested as {} {{{}}}", record.frame, got.join(", ")));
    }
    None
}

/// Builds the round-trip model for `lang` and reports, per frame, whether
/// every generated instance survives verbalize → parse → ingest.
pub fn roundtrip_model(
    registry: &FrameRegistry,
    lang: &str,
    config: &RoundtripConfig,
) -> Result<(ParserModel, RoundtripReport), VerbalizeError> {
    let gazetteer = roundtrip_gazetteer();
    let mut lemmas: BTreeMap<String, Vec<String>> = BTreeMap::new();
    for f in registry.frames() {
        let t = f
            .templates
            .get(lang)
            .ok_or_else(|| VerbalizeError::MissingTemplate { frame: f.name.clone(), lang: lang.into() })?;
        let lemma = t.target_token().expect("validated templates have a target").lemma.clone();
        lemmas.entry(lemma).or_default().push(f.name.clone());
    }
    let conflicts: Vec<(String, Vec<String>)> = lemmas.into_iter().filter(|(_, fs)| fs.len() > 1).collect();

    let train_n = config.training_per_frame.max(config.instances_per_frame);
    let mut generated: Vec<(String, Vec<FrameInstance>)> = Vec::new();
    let mut training: Vec<Sentence> = Vec::new();
    for f in registry.frames() {
        let instances = generate_instances(f, lang, train_n, &gazetteer);
        for i in &instances {
            training.push(verbalize(i, lang, registry)?);
        }
        generated.push((f.name.clone(), instances));
    }
    let (model, _) = train_model(&training, registry, &config.learner, config.jobs).map_err(VerbalizeError::Training)?;

    let store = TemporalStore::new(registry.clone());
    let mut frames = Vec::new();
    for (name, instances) in generated {
        let mut failures = Vec::new();
        let checked = &instances[..config.instances_per_frame];
        for i in checked {
            let s = verbalize(i, lang, registry)?;
            if let Some(why) = check_one(i, &s, &model, &store, &gazetteer) {
                failures.push(why);
            }
        }
        let exact = checked.len() - failures.len();
        for (lemma, fs) in &conflicts {
            if fs.contains(&name) {
                failures.push(format!("target lemma `{lemma}` is shared by {}", fs.join(", ")));
            }
        }
        frames.push(FrameRoundtrip { frame: name, instances: checked.len(), exact, failures });
    }
    Ok((model, RoundtripReport { lang: lang.to_string(), frames, conflicts }))
}
