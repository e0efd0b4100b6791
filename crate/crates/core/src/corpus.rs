//! Featurized, frame-annotated corpora.
//!
//! A corpus file is UTF-8 TSV. Sentences are blocks separated by blank lines,
//! each block opened by `# doc_id=<id>` and optionally `# date=YYYY-MM-DD`.
//! Every token line carries seven tab-separated columns:
//!
//! ```text
//! SURFACE  LEMMA  POS  NER  HYPERNYM  FRAME  ROLE
//! ```
//!
//! `FRAME` is `T:<Frame>` on target tokens and `O` elsewhere. `ROLE` holds
//! BIO tags for the frame elements of that block's target. A sentence with
//! several targets repeats its block once per annotation layer, with the
//! repeats marked `# layer=<k>`.
//!
//! Feature windows for the rule learner are extracted here too: see
//! [`extract_window`] and [`extract_fe_window`].

use std::fmt;
use std::path::Path;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::error::Error;

/// Boundary and missing-feature marker.
pub const NONE: &str = "#NONE#";

/// Slot names of a target-identification window, in fixed order.
pub const TARGET_SCHEMA: [&str; 10] = [
    "prev.lemma",
    "prev.pos",
    "prev.ner",
    "curr.lemma",
    "curr.hypernym",
    "curr.pos",
    "curr.ner",
    "next.lemma",
    "next.pos",
    "next.ner",
];

/// Slot names of a frame-element window: the target window plus two
/// relational slots.
pub const FE_SCHEMA: [&str; 12] = [
    "prev.lemma",
    "prev.pos",
    "prev.ner",
    "curr.lemma",
    "curr.hypernym",
    "curr.pos",
    "curr.ner",
    "next.lemma",
    "next.pos",
    "next.ner",
    "rel_pos",
    "target.lemma",
];

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Token {
    pub surface: String,
    pub lemma: String,
    pub pos: String,
    pub ner: String,
    pub hypernym: String,
}

impl Token {
    pub fn new(
        surface: impl Into<String>,
        lemma: impl Into<String>,
        pos: impl Into<String>,
        ner: impl Into<String>,
        hypernym: impl Into<String>,
    ) -> Self {
        Token {
            surface: surface.into(),
            lemma: lemma.into(),
            pos: pos.into(),
            ner: ner.into(),
            hypernym: hypernym.into(),
        }
    }

    /// Checks that every field is a single non-empty, whitespace-free value.
    pub fn validate(&self) -> Result<(), String> {
        for (name, value) in self.fields() {
            if value.is_empty() {
                return Err(format!("empty {name}"));
            }
            if value.chars().any(char::is_whitespace) {
                return Err(format!("{name} `{value}` contains whitespace"));
            }
        }
        Ok(())
    }

    fn fields(&self) -> [(&'static str, &str); 5] {
        [
            ("surface", &self.surface),
            ("lemma", &self.lemma),
            ("pos", &self.pos),
            ("ner", &self.ner),
            ("hypernym", &self.hypernym),
        ]
    }
}

/// Half-open token range `[start, end)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(from = "(usize, usize)", into = "(usize, usize)")]
pub struct Span {
    pub start: usize,
    pub end: usize,
}

impl Span {
    pub fn new(start: usize, end: usize) -> Self {
        Span { start, end }
    }

    pub fn single(index: usize) -> Self {
        Span { start: index, end: index + 1 }
    }

    pub fn len(&self) -> usize {
        self.end.saturating_sub(self.start)
    }

    pub fn is_empty(&self) -> bool {
        self.end <= self.start
    }

    pub fn contains(&self, index: usize) -> bool {
        self.start <= index && index < self.end
    }

    pub fn overlaps(&self, other: &Span) -> bool {
        self.start < other.end && other.start < self.end
    }
}

impl From<(usize, usize)> for Span {
    fn from((start, end): (usize, usize)) -> Self {
        Span { start, end }
    }
}

impl From<Span> for (usize, usize) {
    fn from(span: Span) -> Self {
        (span.start, span.end)
    }
}

impl fmt::Display for Span {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[{}, {})", self.start, self.end)
    }
}

/// One labeled frame-element span.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeSpan {
    pub fe: String,
    pub span: Span,
    pub confidence: f64,
}

/// A frame target with its labeled frame elements, within one sentence.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameAnnotation {
    pub frame: String,
    pub target: Span,
    pub elements: Vec<FeSpan>,
    pub confidence: f64,
}

impl FrameAnnotation {
    /// A gold annotation; all confidences are 1.
    pub fn gold(frame: impl Into<String>, target: Span, elements: Vec<(String, Span)>) -> Self {
        FrameAnnotation {
            frame: frame.into(),
            target,
            elements: elements
                .into_iter()
                .map(|(fe, span)| FeSpan { fe, span, confidence: 1.0 })
                .collect(),
            confidence: 1.0,
        }
    }

    /// Checks span sanity against a sentence of `len` tokens.
    pub fn check_spans(&self, len: usize) -> Result<(), String> {
        if self.target.is_empty() || self.target.end > len {
            return Err(format!("target {} outside sentence of {len} tokens", self.target));
        }
        for (i, el) in self.elements.iter().enumerate() {
            if el.span.is_empty() || el.span.end > len {
                return Err(format!("{} span {} outside sentence of {len} tokens", el.fe, el.span));
            }
            if let Some(other) = self.elements[..i].iter().find(|o| o.span.overlaps(&el.span)) {
                return Err(format!("{} span {} overlaps {} span {}", el.fe, el.span, other.fe, other.span));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sentence {
    pub doc_id: String,
    pub pub_date: Option<NaiveDate>,
    pub tokens: Vec<Token>,
    pub annotations: Vec<FrameAnnotation>,
}

impl Sentence {
    pub fn new(doc_id: impl Into<String>, tokens: Vec<Token>) -> Self {
        Sentence { doc_id: doc_id.into(), pub_date: None, tokens, annotations: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    /// Surface text of a span, tokens joined by single spaces.
    pub fn span_text(&self, span: Span) -> String {
        let end = span.end.min(self.tokens.len());
        let start = span.start.min(end);
        self.tokens[start..end]
            .iter()
            .map(|t| t.surface.as_str())
            .collect::<Vec<_>>()
            .join(" ")
    }
}

// ---------------------------------------------------------------------------
// BIO
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum BioError {
    #[error("tag {index}: `I-{label}` without a preceding `B-{label}`")]
    DanglingInside { index: usize, label: String },
    #[error("tag {index}: malformed tag `{tag}`")]
    Malformed { index: usize, tag: String },
    #[error("span {span} lies outside a sequence of {len}")]
    OutOfRange { span: Span, len: usize },
    #[error("spans {0} and {1} overlap")]
    Overlap(Span, Span),
}

/// Decodes a BIO tag sequence into labeled spans, in order of appearance.
pub fn decode_bio<S: AsRef<str>>(tags: &[S]) -> Result<Vec<(String, Span)>, BioError> {
    let mut spans: Vec<(String, Span)> = Vec::new();
    let mut open: Option<(String, usize)> = None;
    for (index, tag) in tags.iter().enumerate() {
        let tag = tag.as_ref();
        if tag == "O" {
            if let Some((label, start)) = open.take() {
                spans.push((label, Span::new(start, index)));
            }
        } else if let Some(label) = tag.strip_prefix("B-").filter(|l| !l.is_empty()) {
            if let Some((prev, start)) = open.take() {
                spans.push((prev, Span::new(start, index)));
            }
            open = Some((label.to_string(), index));
        } else if let Some(label) = tag.strip_prefix("I-").filter(|l| !l.is_empty()) {
            match &open {
                Some((prev, _)) if prev == label => {}
                _ => return Err(BioError::DanglingInside { index, label: label.to_string() }),
            }
        } else {
            return Err(BioError::Malformed { index, tag: tag.to_string() });
        }
    }
    if let Some((label, start)) = open {
        spans.push((label, Span::new(start, tags.len())));
    }
    Ok(spans)
}

/// Encodes labeled spans as a BIO sequence of length `len`.
pub fn encode_bio<S: AsRef<str>>(len: usize, spans: &[(S, Span)]) -> Result<Vec<String>, BioError> {
    let mut tags = vec![String::from("O"); len];
    let mut taken: Vec<Span> = Vec::with_capacity(spans.len());
    for (label, span) in spans {
        if span.is_empty() || span.end > len {
            return Err(BioError::OutOfRange { span: *span, len });
        }
        if let Some(other) = taken.iter().find(|o| o.overlaps(span)) {
            return Err(BioError::Overlap(*other, *span));
        }
        taken.push(*span);
        let label = label.as_ref();
        tags[span.start] = format!("B-{label}");
        for tag in &mut tags[span.start + 1..span.end] {
            *tag = format!("I-{label}");
        }
    }
    Ok(tags)
}

// ---------------------------------------------------------------------------
// Corpus file format
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("line {line}: {kind}")]
pub struct CorpusError {
    pub line: usize,
    pub kind: CorpusErrorKind,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum CorpusErrorKind {
    #[error("expected 7 tab-separated columns, found {0}")]
    ColumnCount(usize),
    #[error("bad token: {0}")]
    BadToken(String),
    #[error("bad FRAME column `{0}`")]
    BadFrame(String),
    #[error(transparent)]
    Bio(#[from] BioError),
    #[error("unparseable date `{0}`")]
    BadDate(String),
    #[error("bad layer header `{0}`")]
    BadLayer(String),
    #[error("block has no `# doc_id=` header")]
    MissingDocId,
    #[error("header line inside a token block")]
    HeaderInBlock,
    #[error("block has headers but no tokens")]
    EmptyBlock,
    #[error("target tokens must be one contiguous run of a single frame")]
    BadTarget,
    #[error("frame-element tags without a target")]
    RolesWithoutTarget,
    #[error("layer {found} does not continue the previous sentence (expected layer {expected})")]
    LayerMismatch { expected: usize, found: usize },
    #[error("layer block differs from its sentence in tokens or metadata")]
    LayerTokens,
}

#[derive(Default)]
struct Block {
    first_line: usize,
    doc_id: Option<String>,
    date: Option<NaiveDate>,
    layer: usize,
    tokens: Vec<Token>,
    frames: Vec<(usize, String)>,
    roles: Vec<String>,
}

/// Parses corpus text.
pub fn parse_corpus(text: &str) -> Result<Vec<Sentence>, CorpusError> {
    let mut sentences: Vec<Sentence> = Vec::new();
    let mut block: Option<Block> = None;

    for (i, raw) in text.lines().enumerate() {
        let line_no = i + 1;
        let line = raw.strip_suffix('\r').unwrap_or(raw);
        if line.trim().is_empty() {
            if let Some(b) = block.take() {
                finish_block(b, &mut sentences)?;
            }
            continue;
        }
        let b = block.get_or_insert_with(|| Block { first_line: line_no, ..Block::default() });
        let err = |kind| CorpusError { line: line_no, kind };

        if let Some(header) = line.strip_prefix("# ") {
            if !b.tokens.is_empty() {
                return Err(err(CorpusErrorKind::HeaderInBlock));
            }
            if let Some(v) = header.strip_prefix("doc_id=") {
                b.doc_id = Some(v.to_string());
            } else if let Some(v) = header.strip_prefix("date=") {
                let date = NaiveDate::parse_from_str(v, "%Y-%m-%d")
                    .map_err(|_| err(CorpusErrorKind::BadDate(v.to_string())))?;
                b.date = Some(date);
            } else if let Some(v) = header.strip_prefix("layer=") {
                b.layer = v.parse().map_err(|_| err(CorpusErrorKind::BadLayer(v.to_string())))?;
            }
            continue;
        }

        let cols: Vec<&str> = line.split('\t').collect();
        if cols.len() != 7 {
            return Err(err(CorpusErrorKind::ColumnCount(cols.len())));
        }
        let token = Token::new(cols[0], cols[1], cols[2], cols[3], cols[4]);
        token.validate().map_err(|m| err(CorpusErrorKind::BadToken(m)))?;
        let index = b.tokens.len();
        match cols[5] {
            "O" => {}
            f => match f.strip_prefix("T:") {
                Some(name) if !name.is_empty() && !name.chars().any(char::is_whitespace) => {
                    b.frames.push((index, name.to_string()))
                }
                _ => return Err(err(CorpusErrorKind::BadFrame(f.to_string()))),
            },
        }
        let role = cols[6];
        if role != "O" && !role.starts_with("B-") && !role.starts_with("I-") {
            return Err(err(CorpusErrorKind::Bio(BioError::Malformed { index, tag: role.into() })));
        }
        // Dangling I- tags are reported at the offending line.
        if let Some(label) = role.strip_prefix("I-") {
            let continues = b
                .roles
                .last()
                .is_some_and(|p| p.strip_prefix("B-").or_else(|| p.strip_prefix("I-")) == Some(label));
            if !continues {
                return Err(err(CorpusErrorKind::Bio(BioError::DanglingInside {
                    index,
                    label: label.to_string(),
                })));
            }
        }
        b.roles.push(role.to_string());
        b.tokens.push(token);
    }
    if let Some(b) = block.take() {
        finish_block(b, &mut sentences)?;
    }
    Ok(sentences)
}

fn finish_block(b: Block, sentences: &mut Vec<Sentence>) -> Result<(), CorpusError> {
    let err = |kind| CorpusError { line: b.first_line, kind };
    if b.tokens.is_empty() {
        return Err(err(CorpusErrorKind::EmptyBlock));
    }
    let doc_id = b.doc_id.clone().ok_or_else(|| err(CorpusErrorKind::MissingDocId))?;
    let elements = decode_bio(&b.roles).map_err(|e| err(e.into()))?;

    let annotation = match b.frames.first() {
        None => {
            if !elements.is_empty() {
                return Err(err(CorpusErrorKind::RolesWithoutTarget));
            }
            None
        }
        Some((start, frame)) => {
            let contiguous = b
                .frames
                .iter()
                .enumerate()
                .all(|(k, (idx, name))| *idx == start + k && name == frame);
            if !contiguous {
                return Err(err(CorpusErrorKind::BadTarget));
            }
            let target = Span::new(*start, start + b.frames.len());
            Some(FrameAnnotation::gold(frame.clone(), target, elements))
        }
    };

    if b.layer == 0 {
        sentences.push(Sentence {
            doc_id,
            pub_date: b.date,
            tokens: b.tokens,
            annotations: annotation.into_iter().collect(),
        });
        return Ok(());
    }

    let Some(prev) = sentences.last_mut() else {
        return Err(err(CorpusErrorKind::LayerMismatch { expected: 0, found: b.layer }));
    };
    if prev.annotations.len() != b.layer {
        return Err(err(CorpusErrorKind::LayerMismatch {
            expected: prev.annotations.len(),
            found: b.layer,
        }));
    }
    if prev.doc_id != doc_id || prev.pub_date != b.date || prev.tokens != b.tokens {
        return Err(err(CorpusErrorKind::LayerTokens));
    }
    match annotation {
        Some(a) => prev.annotations.push(a),
        None => return Err(err(CorpusErrorKind::BadTarget)),
    }
    Ok(())
}

/// Formats sentences canonically. `parse_corpus` of the result gives back the
/// input for any sentence whose tokens and spans are valid.
pub fn write_corpus(sentences: &[Sentence]) -> String {
    let mut blocks: Vec<String> = Vec::new();
    for sentence in sentences {
        if sentence.annotations.is_empty() {
            blocks.push(write_block(sentence, 0, None));
        }
        for (layer, annotation) in sentence.annotations.iter().enumerate() {
            blocks.push(write_block(sentence, layer, Some(annotation)));
        }
    }
    blocks.join("\n")
}

fn write_block(sentence: &Sentence, layer: usize, annotation: Option<&FrameAnnotation>) -> String {
    let mut out = format!("# doc_id={}\n", sentence.doc_id);
    if let Some(date) = sentence.pub_date {
        out.push_str(&format!("# date={}\n", date.format("%Y-%m-%d")));
    }
    if layer > 0 {
        out.push_str(&format!("# layer={layer}\n"));
    }
    let len = sentence.tokens.len();
    let roles = annotation
        .map(|a| {
            let spans: Vec<(&str, Span)> = a.elements.iter().map(|e| (e.fe.as_str(), e.span)).collect();
            encode_bio(len, &spans).unwrap_or_else(|_| vec!["O".into(); len])
        })
        .unwrap_or_else(|| vec!["O".into(); len]);
    for (i, t) in sentence.tokens.iter().enumerate() {
        let frame = match annotation {
            Some(a) if a.target.contains(i) => format!("T:{}", a.frame),
            _ => "O".to_string(),
        };
        out.push_str(&format!(
            "{}\t{}\t{}\t{}\t{}\t{}\t{}\n",
            t.surface, t.lemma, t.pos, t.ner, t.hypernym, frame, roles[i]
        ));
    }
    out
}

pub fn load_corpus(path: impl AsRef<Path>) -> Result<Vec<Sentence>, Error> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_corpus(&text).map_err(|e| Error::format(path, e.line, e.kind))
}

pub fn save_corpus(path: impl AsRef<Path>, sentences: &[Sentence]) -> Result<(), Error> {
    let path = path.as_ref();
    std::fs::write(path, write_corpus(sentences)).map_err(|e| Error::io(path, e))
}

// ---------------------------------------------------------------------------
// Feature windows
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
#[error("token index {index} out of range for sentence of {len} tokens")]
pub struct IndexError {
    pub index: usize,
    pub len: usize,
}

/// The ten window slots, ordered as [`TARGET_SCHEMA`].
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct FeatureVector(pub [String; 10]);

impl FeatureVector {
    pub fn get(&self, slot: &str) -> Option<&str> {
        TARGET_SCHEMA.iter().position(|s| *s == slot).map(|i| self.0[i].as_str())
    }
}

impl AsRef<[String]> for FeatureVector {
    fn as_ref(&self) -> &[String] {
        &self.0
    }
}

/// Signed distance from a candidate token to the frame target, bucketed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum RelPos {
    BeforeFar,
    Before2,
    Before1,
    At,
    After1,
    After2,
    AfterFar,
}

impl RelPos {
    pub fn from_offset(offset: isize) -> Self {
        match offset {
            isize::MIN..=-3 => RelPos::BeforeFar,
            -2 => RelPos::Before2,
            -1 => RelPos::Before1,
            0 => RelPos::At,
            1 => RelPos::After1,
            2 => RelPos::After2,
            _ => RelPos::AfterFar,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            RelPos::BeforeFar => "-3+",
            RelPos::Before2 => "-2",
            RelPos::Before1 => "-1",
            RelPos::At => "0",
            RelPos::After1 => "+1",
            RelPos::After2 => "+2",
            RelPos::AfterFar => "+3+",
        }
    }
}

impl fmt::Display for RelPos {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// The twelve slots of a frame-element window, ordered as [`FE_SCHEMA`].
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct FeFeatureVector(pub [String; 12]);

impl FeFeatureVector {
    pub fn window(&self) -> &[String] {
        &self.0[..10]
    }

    pub fn rel_pos(&self) -> &str {
        &self.0[10]
    }

    pub fn target_lemma(&self) -> &str {
        &self.0[11]
    }
}

impl AsRef<[String]> for FeFeatureVector {
    fn as_ref(&self) -> &[String] {
        &self.0
    }
}

pub fn extract_window(sentence: &Sentence, index: usize) -> Result<FeatureVector, IndexError> {
    let tokens = &sentence.tokens;
    if index >= tokens.len() {
        return Err(IndexError { index, len: tokens.len() });
    }
    let prev = index.checked_sub(1).map(|i| &tokens[i]);
    let curr = &tokens[index];
    let next = tokens.get(index + 1);
    let or_none = |t: Option<&Token>, f: fn(&Token) -> &String| {
        t.map(|t| non_empty(f(t))).unwrap_or_else(|| NONE.to_string())
    };
    Ok(FeatureVector([
        or_none(prev, |t| &t.lemma),
        or_none(prev, |t| &t.pos),
        or_none(prev, |t| &t.ner),
        non_empty(&curr.lemma),
        non_empty(&curr.hypernym),
        non_empty(&curr.pos),
        non_empty(&curr.ner),
        or_none(next, |t| &t.lemma),
        or_none(next, |t| &t.pos),
        or_none(next, |t| &t.ner),
    ]))
}

fn non_empty(value: &str) -> String {
    if value.is_empty() { NONE.to_string() } else { value.to_string() }
}

pub fn extract_fe_window(
    sentence: &Sentence,
    index: usize,
    target_index: usize,
) -> Result<FeFeatureVector, IndexError> {
    let window = extract_window(sentence, index)?;
    let target = sentence
        .tokens
        .get(target_index)
        .ok_or(IndexError { index: target_index, len: sentence.len() })?;
    let offset = index as isize - target_index as isize;
    let [a, b, c, d, e, f, g, h, i, j] = window.0;
    Ok(FeFeatureVector([
        a,
        b,
        c,
        d,
        e,
        f,
        g,
        h,
        i,
        j,
        RelPos::from_offset(offset).as_str().to_string(),
        non_empty(&target.lemma),
    ]))
}
