//! Precision / recall / F1 for both parsing stages, with exact-match
//! counting. Frame-element scores only look at predicted targets that match
//! a gold target (same range and frame).

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use serde::Serialize;
use thiserror::Error;

use crate::corpus::{parse_corpus, FrameAnnotation, Sentence, Span};
use crate::parser::{parse_records, AnnotationRecord};
use crate::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EvalError {
    #[error("ratio {0} outside [0, 1]")]
    OutOfRange(f64),
    #[error("gold has {gold} sentences, prediction has {predicted}")]
    SentenceCount { gold: usize, predicted: usize },
    #[error("sentence {index}: gold document `{gold}`, predicted `{predicted}`")]
    DocMismatch { index: usize, gold: String, predicted: String },
}

/// Harmonic mean; 0 when both inputs are 0.
pub fn f1(p: f64, r: f64) -> Result<f64, EvalError> {
    for x in [p, r] {
        if !(0.0..=1.0).contains(&x) {
            return Err(EvalError::OutOfRange(x));
        }
    }
    Ok(if p + r == 0.0 { 0.0 } else { 2.0 * p * r / (p + r) })
}

fn ratio(a: u64, b: u64) -> f64 {
    if b == 0 { 0.0 } else { a as f64 / b as f64 }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MetricsReport {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub tp: u64,
    pub fp: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
}

impl MetricsReport {
    pub fn from_counts(tp: u64, fp: u64, fn_: u64) -> Self {
        let precision = ratio(tp, tp + fp);
        let recall = ratio(tp, tp + fn_);
        let f1 = f1(precision, recall).expect("ratios of counts are in range");
        MetricsReport { precision, recall, f1, tp, fp, fn_ }
    }
}

/// One sentence's annotations, with its document id when known.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Annotated {
    pub doc_id: Option<String>,
    pub annotations: Vec<FrameAnnotation>,
}

impl From<&Sentence> for Annotated {
    fn from(s: &Sentence) -> Self {
        Annotated { doc_id: Some(s.doc_id.clone()), annotations: s.annotations.clone() }
    }
}

pub fn from_sentences(sentences: &[Sentence]) -> Vec<Annotated> {
    sentences.iter().map(Annotated::from).collect()
}

fn aligned<'a>(gold: &'a [Annotated], pred: &'a [Annotated]) -> Result<impl Iterator<Item = (&'a Annotated, &'a Annotated)>, EvalError> {
    if gold.len() != pred.len() {
        return Err(EvalError::SentenceCount { gold: gold.len(), predicted: pred.len() });
    }
    for (index, (g, p)) in gold.iter().zip(pred).enumerate() {
        if let (Some(a), Some(b)) = (&g.doc_id, &p.doc_id) {
            if a != b {
                return Err(EvalError::DocMismatch { index, gold: a.clone(), predicted: b.clone() });
            }
        }
    }
    Ok(gold.iter().zip(pred))
}

/// Pairs each predicted annotation with an unused gold one of the same
/// target range and frame.
fn match_targets<'a>(gold: &'a [FrameAnnotation], pred: &'a [FrameAnnotation]) -> Vec<(&'a FrameAnnotation, Option<&'a FrameAnnotation>)> {
    let mut used = vec![false; gold.len()];
    pred.iter()
        .map(|p| {
            let hit = gold
                .iter()
                .enumerate()
                .find(|(i, g)| !used[*i] && g.target == p.target && g.frame == p.frame)
                .map(|(i, g)| {
                    used[i] = true;
                    g
                });
            (p, hit)
        })
        .collect()
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
struct Counts {
    tp: u64,
    fp: u64,
    fn_: u64,
}

impl Counts {
    fn report(self) -> MetricsReport {
        MetricsReport::from_counts(self.tp, self.fp, self.fn_)
    }
}

fn target_counts(gold: &[FrameAnnotation], pred: &[FrameAnnotation], frame: Option<&str>) -> Counts {
    let keep = |a: &&FrameAnnotation| frame.is_none_or(|f| a.frame == f);
    let g: Vec<FrameAnnotation> = gold.iter().filter(keep).cloned().collect();
    let p: Vec<FrameAnnotation> = pred.iter().filter(keep).cloned().collect();
    let tp = match_targets(&g, &p).iter().filter(|(_, h)| h.is_some()).count() as u64;
    Counts { tp, fp: p.len() as u64 - tp, fn_: g.len() as u64 - tp }
}

pub fn score_targets(gold: &[Annotated], pred: &[Annotated]) -> Result<MetricsReport, EvalError> {
    let mut c = Counts::default();
    for (g, p) in aligned(gold, pred)? {
        let s = target_counts(&g.annotations, &p.annotations, None);
        c.tp += s.tp;
        c.fp += s.fp;
        c.fn_ += s.fn_;
    }
    Ok(c.report())
}

pub fn score_frame_elements(gold: &[Annotated], pred: &[Annotated]) -> Result<MetricsReport, EvalError> {
    let mut c = Counts::default();
    for (g, p) in aligned(gold, pred)? {
        for (pa, ga) in match_targets(&g.annotations, &p.annotations) {
            let Some(ga) = ga else { continue };
            let mut gold_fes: Vec<(&str, Span)> = ga.elements.iter().map(|e| (e.fe.as_str(), e.span)).collect();
            for e in &pa.elements {
                if let Some(i) = gold_fes.iter().position(|(fe, span)| *fe == e.fe && *span == e.span) {
                    gold_fes.swap_remove(i);
                    c.tp += 1;
                } else {
                    c.fp += 1;
                }
            }
            c.fn_ += gold_fes.len() as u64;
        }
    }
    Ok(c.report())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FrameScore {
    pub frame: String,
    #[serde(flatten)]
    pub metrics: MetricsReport,
}

/// Target scores per frame, best F1 first (ties by name).
pub fn per_frame_report(gold: &[Annotated], pred: &[Annotated]) -> Result<Vec<FrameScore>, EvalError> {
    let pairs: Vec<_> = aligned(gold, pred)?.collect();
    let mut frames: BTreeMap<&str, Counts> = BTreeMap::new();
    for (g, p) in &pairs {
        for a in g.annotations.iter().chain(&p.annotations) {
            frames.entry(a.frame.as_str()).or_default();
        }
    }
    for (frame, c) in frames.iter_mut() {
        for (g, p) in &pairs {
            let s = target_counts(&g.annotations, &p.annotations, Some(frame));
            c.tp += s.tp;
            c.fp += s.fp;
            c.fn_ += s.fn_;
        }
    }
    let mut out: Vec<FrameScore> =
        frames.into_iter().map(|(f, c)| FrameScore { frame: f.to_string(), metrics: c.report() }).collect();
    out.sort_by(|a, b| b.metrics.f1.total_cmp(&a.metrics.f1).then_with(|| a.frame.cmp(&b.frame)));
    Ok(out)
}

/// Annotations read from disk: a featurized corpus or annotation records.
#[derive(Debug, Clone, PartialEq)]
pub enum AnnotationFile {
    Corpus(Vec<Sentence>),
    Records(Vec<AnnotationRecord>),
}

impl AnnotationFile {
    /// Record files start with `{`; anything else is read as a corpus.
    pub fn parse(text: &str) -> Result<Self, (usize, String)> {
        if text.trim_start().starts_with('{') {
            parse_records(text).map(AnnotationFile::Records)
        } else {
            parse_corpus(text).map(AnnotationFile::Corpus).map_err(|e| (e.line, e.to_string()))
        }
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, Error> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text).map_err(|(line, m)| Error::format(path, line, m))
    }

    fn sentence_count(&self) -> usize {
        match self {
            AnnotationFile::Corpus(s) => s.len(),
            AnnotationFile::Records(r) => r.iter().map(|r| r.sentence + 1).max().unwrap_or(0),
        }
    }

    fn annotated(&self, len: usize) -> Vec<Annotated> {
        match self {
            AnnotationFile::Corpus(s) => from_sentences(s),
            AnnotationFile::Records(records) => {
                let mut out = vec![Annotated::default(); len];
                for r in records {
                    let a = &mut out[r.sentence];
                    a.doc_id = Some(r.doc_id.clone());
                    a.annotations.push(r.annotation());
                }
                out
            }
        }
    }
}

/// Aligns two annotation files sentence by sentence. Record files are
/// padded to the other side's length, since sentences without annotations
/// leave no records.
pub fn align_files(gold: &AnnotationFile, pred: &AnnotationFile) -> (Vec<Annotated>, Vec<Annotated>) {
    let len = gold.sentence_count().max(pred.sentence_count());
    (gold.annotated(len), pred.annotated(len))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvalReport {
    pub targets: MetricsReport,
    pub frame_elements: MetricsReport,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub per_frame: Option<Vec<FrameScore>>,
}

pub fn evaluate(gold: &[Annotated], pred: &[Annotated], per_frame: bool) -> Result<EvalReport, EvalError> {
    Ok(EvalReport {
        targets: score_targets(gold, pred)?,
        frame_elements: score_frame_elements(gold, pred)?,
        per_frame: if per_frame { Some(per_frame_report(gold, pred)?) } else { None },
    })
}

impl EvalReport {
    /// Plain-text tables: one row per stage, then one row per frame.
    pub fn render(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "{:<24} {:>9} {:>7} {:>7} {:>6} {:>6} {:>6}", "stage", "precision", "recall", "f1", "tp", "fp", "fn");
        for (name, m) in [("target identification", &self.targets), ("FE identification", &self.frame_elements)] {
            let _ = writeln!(
                out,
                "{name:<24} {:>9.3} {:>7.3} {:>7.3} {:>6} {:>6} {:>6}",
                m.precision, m.recall, m.f1, m.tp, m.fp, m.fn_
            );
        }
        if let Some(rows) = &self.per_frame {
            let _ = writeln!(out);
            let _ = writeln!(out, "{:<24} {:>7}", "frame", "f1");
            for r in rows {
                let _ = writeln!(out, "{:<24} {:>7.3}", r.frame, r.metrics.f1);
            }
        }
        out
    }
}
