//! Two-stage frame-semantic parsing with learned rule sets: find the
//! frame-evoking tokens, then label frame-element spans around each.
//!
//! A model directory holds `target/<Frame>.rules` (10-slot windows) and
//! `fe/<Frame>.<Element>.rules` (12-slot windows); each file's label is its
//! file stem.

use std::collections::BTreeMap;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::c60::{load_ruleset, save_ruleset, Laplace, RuleSet};
use crate::corpus::{extract_fe_window, extract_window, FeSpan, FrameAnnotation, Sentence, Span, FE_SCHEMA, TARGET_SCHEMA};
use crate::error::Error;
use crate::registry::FrameRegistry;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ModelError {
    #[error("rule set `{0}` names a frame missing from the registry")]
    UnknownFrame(String),
    #[error("rule set `{label}`: frame `{frame}` has no element `{fe}`")]
    UnknownElement { label: String, frame: String, fe: String },
    #[error("rule set `{label}` should have the {stage} schema")]
    Schema { label: String, stage: &'static str },
    #[error("frame-element rule set label `{0}` is not `Frame.Element`")]
    BadLabel(String),
}

pub fn fe_label(frame: &str, fe: &str) -> String {
    format!("{frame}.{fe}")
}

#[derive(Debug, Clone)]
pub struct ParserModel {
    registry: FrameRegistry,
    targets: BTreeMap<String, RuleSet>,
    elements: BTreeMap<String, BTreeMap<String, RuleSet>>,
}

fn schema_is(rs: &RuleSet, schema: &[&str]) -> bool {
    rs.schema.len() == schema.len() && rs.schema.iter().zip(schema).all(|(a, b)| a == b)
}

impl ParserModel {
    pub fn new(registry: FrameRegistry) -> Self {
        ParserModel { registry, targets: BTreeMap::new(), elements: BTreeMap::new() }
    }

    pub fn registry(&self) -> &FrameRegistry {
        &self.registry
    }

    /// Adds a target rule set; its label is the frame name.
    pub fn insert_target(&mut self, rs: RuleSet) -> Result<(), ModelError> {
        if !self.registry.contains(&rs.label) {
            return Err(ModelError::UnknownFrame(rs.label));
        }
        if !schema_is(&rs, &TARGET_SCHEMA) {
            return Err(ModelError::Schema { label: rs.label, stage: "target" });
        }
        self.targets.insert(rs.label.clone(), rs);
        Ok(())
    }

    /// Adds a frame-element rule set labeled `Frame.Element`.
    pub fn insert_element(&mut self, rs: RuleSet) -> Result<(), ModelError> {
        let (frame, fe) = rs.label.split_once('.').ok_or_else(|| ModelError::BadLabel(rs.label.clone()))?;
        let def = self.registry.get(frame).ok_or_else(|| ModelError::UnknownFrame(rs.label.clone()))?;
        if def.element(fe).is_none() {
            return Err(ModelError::UnknownElement { label: rs.label.clone(), frame: frame.into(), fe: fe.into() });
        }
        if !schema_is(&rs, &FE_SCHEMA) {
            return Err(ModelError::Schema { label: rs.label, stage: "frame-element" });
        }
        let (frame, fe) = (frame.to_string(), fe.to_string());
        self.elements.entry(frame).or_default().insert(fe, rs);
        Ok(())
    }

    pub fn target_rulesets(&self) -> &BTreeMap<String, RuleSet> {
        &self.targets
    }

    /// Frame-element rule sets of one frame, keyed by element.
    pub fn element_rulesets(&self, frame: &str) -> Option<&BTreeMap<String, RuleSet>> {
        self.elements.get(frame)
    }

    pub fn is_empty(&self) -> bool {
        self.targets.is_empty() && self.elements.is_empty()
    }

    pub fn load(dir: impl AsRef<Path>, registry: FrameRegistry) -> Result<Self, Error> {
        let dir = dir.as_ref();
        let mut model = ParserModel::new(registry);
        for (sub, is_target) in [("target", true), ("fe", false)] {
            for path in rule_files(&dir.join(sub))? {
                let rs = load_ruleset(&path)?;
                let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or_default();
                if rs.label != stem {
                    return Err(Error::format(&path, 1, format!("label `{}` does not match file name", rs.label)));
                }
                let res = if is_target { model.insert_target(rs) } else { model.insert_element(rs) };
                res.map_err(|e| Error::integrity(format!("{}: {e}", path.display())))?;
            }
        }
        Ok(model)
    }

    pub fn save(&self, dir: impl AsRef<Path>) -> Result<(), Error> {
        let dir = dir.as_ref();
        for (sub, sets) in [
            ("target", self.targets.values().collect::<Vec<_>>()),
            ("fe", self.elements.values().flat_map(|m| m.values()).collect()),
        ] {
            let d = dir.join(sub);
            std::fs::create_dir_all(&d).map_err(|e| Error::io(&d, e))?;
            for rs in sets {
                save_ruleset(d.join(format!("{}.rules", rs.label)), rs)?;
            }
        }
        Ok(())
    }
}

fn rule_files(dir: &Path) -> Result<Vec<std::path::PathBuf>, Error> {
    let entries = match std::fs::read_dir(dir) {
        Ok(e) => e,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(Vec::new()),
        Err(e) => return Err(Error::io(dir, e)),
    };
    let mut out = Vec::new();
    for entry in entries {
        let path = entry.map_err(|e| Error::io(dir, e))?.path();
        if path.extension().is_some_and(|x| x == "rules") {
            out.push(path);
        }
    }
    out.sort();
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TargetHit<'m> {
    pub index: usize,
    pub frame: &'m str,
    pub confidence: Laplace,
}

/// Best-scoring entry; ties keep the earlier key, i.e. the
/// lexicographically first name.
fn best_of<'a, S: AsRef<str>>(
    sets: impl Iterator<Item = (&'a String, &'a RuleSet)>,
    fv: &[S],
) -> Option<(&'a str, Laplace)> {
    let mut best: Option<(&str, Laplace)> = None;
    for (name, rs) in sets {
        let Ok(Some(l)) = rs.classify(fv) else { continue };
        if !l.at_least(rs.threshold) {
            continue;
        }
        if best.is_none_or(|(_, b)| l > b) {
            best = Some((name, l));
        }
    }
    best
}

/// At most one frame per token: the highest-confidence one.
pub fn identify_targets<'m>(sentence: &Sentence, model: &'m ParserModel) -> Vec<TargetHit<'m>> {
    (0..sentence.len())
        .filter_map(|index| {
            let fv = extract_window(sentence, index).expect("index in range");
            best_of(model.targets.iter(), &fv.0).map(|(frame, confidence)| TargetHit { index, frame, confidence })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ParseError {
    #[error("frame `{0}` is not in the model's registry")]
    UnknownFrame(String),
    #[error("target index {index} outside sentence of {len} tokens")]
    TargetOutOfRange { index: usize, len: usize },
}

/// Labels tokens around a target and merges equal-label runs into spans.
pub fn identify_frame_elements(
    sentence: &Sentence,
    target: usize,
    frame: &str,
    model: &ParserModel,
) -> Result<Vec<FeSpan>, ParseError> {
    if !model.registry.contains(frame) {
        return Err(ParseError::UnknownFrame(frame.to_string()));
    }
    if target >= sentence.len() {
        return Err(ParseError::TargetOutOfRange { index: target, len: sentence.len() });
    }
    let Some(sets) = model.elements.get(frame) else { return Ok(Vec::new()) };
    let labels: Vec<Option<(&str, Laplace)>> = (0..sentence.len())
        .map(|i| {
            if i == target {
                return None;
            }
            let fv = extract_fe_window(sentence, i, target).expect("indices in range");
            best_of(sets.iter(), &fv.0)
        })
        .collect();
    let mut spans: Vec<FeSpan> = Vec::new();
    let mut run: Option<(&str, usize, Laplace)> = None;
    for (i, label) in labels.iter().chain(std::iter::once(&None)).enumerate() {
        match (run, label) {
            (Some((fe, start, conf)), Some((l, c))) if fe == *l => run = Some((fe, start, conf.max(*c))),
            _ => {
                if let Some((fe, start, conf)) = run.take() {
                    spans.push(FeSpan { fe: fe.to_string(), span: Span::new(start, i), confidence: conf.value() });
                }
                run = label.map(|(l, c)| (l, i, c));
            }
        }
    }
    Ok(spans)
}

pub fn parse_sentence(sentence: &Sentence, model: &ParserModel) -> Vec<FrameAnnotation> {
    identify_targets(sentence, model)
        .into_iter()
        .map(|hit| FrameAnnotation {
            frame: hit.frame.to_string(),
            target: Span::single(hit.index),
            elements: identify_frame_elements(sentence, hit.index, hit.frame, model)
                .expect("target frames come from the model"),
            confidence: hit.confidence.value(),
        })
        .collect()
}

/// Parses every sentence on `jobs` workers (0 = all cores). The output is
/// in input order and identical for any worker count.
pub fn parse_all(sentences: &[Sentence], model: &ParserModel, jobs: usize) -> Vec<Vec<FrameAnnotation>> {
    let run = || sentences.par_iter().map(|s| parse_sentence(s, model)).collect();
    match rayon::ThreadPoolBuilder::new().num_threads(jobs).build() {
        Ok(pool) => pool.install(run),
        Err(_) => sentences.iter().map(|s| parse_sentence(s, model)).collect(),
    }
}

/// One annotation as a JSON line.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnnotationRecord {
    pub doc_id: String,
    pub sentence: usize,
    pub frame: String,
    pub target: Span,
    pub elements: Vec<FeSpan>,
    pub confidence: f64,
}

impl AnnotationRecord {
    pub fn new(doc_id: &str, sentence: usize, a: &FrameAnnotation) -> Self {
        AnnotationRecord {
            doc_id: doc_id.to_string(),
            sentence,
            frame: a.frame.clone(),
            target: a.target,
            elements: a.elements.clone(),
            confidence: a.confidence,
        }
    }

    pub fn annotation(&self) -> FrameAnnotation {
        FrameAnnotation {
            frame: self.frame.clone(),
            target: self.target,
            elements: self.elements.clone(),
            confidence: self.confidence,
        }
    }
}

/// Records for every annotation carried by `sentences`, in order.
pub fn to_records(sentences: &[Sentence]) -> Vec<AnnotationRecord> {
    sentences
        .iter()
        .enumerate()
        .flat_map(|(i, s)| s.annotations.iter().map(move |a| AnnotationRecord::new(&s.doc_id, i, a)))
        .collect()
}

pub fn write_records(records: &[AnnotationRecord]) -> String {
    let mut out = String::new();
    for r in records {
        out.push_str(&serde_json::to_string(r).expect("records serialize"));
        out.push('\n');
    }
    out
}

/// Parses annotation JSON lines; blank lines are skipped. Errors carry the
/// 1-based line number.
pub fn parse_records(text: &str) -> Result<Vec<AnnotationRecord>, (usize, String)> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| serde_json::from_str(l).map_err(|e| (i + 1, e.to_string())))
        .collect()
}

pub fn load_records(path: impl AsRef<Path>) -> Result<Vec<AnnotationRecord>, Error> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_records(&text).map_err(|(line, m)| Error::format(path, line, m))
}

/// Replaces each sentence's annotations with those of the records. Records
/// must point at existing sentences with matching document ids and spans.
pub fn attach_records(sentences: &mut [Sentence], records: &[AnnotationRecord]) -> Result<(), String> {
    for s in sentences.iter_mut() {
        s.annotations.clear();
    }
    for (n, r) in records.iter().enumerate() {
        let s = sentences
            .get_mut(r.sentence)
            .ok_or_else(|| format!("record {}: sentence {} does not exist", n + 1, r.sentence))?;
        if s.doc_id != r.doc_id {
            return Err(format!("record {}: sentence {} belongs to `{}`, not `{}`", n + 1, r.sentence, s.doc_id, r.doc_id));
        }
        let a = r.annotation();
        a.check_spans(s.len()).map_err(|m| format!("record {}: {m}", n + 1))?;
        s.annotations.push(a);
    }
    Ok(())
}
