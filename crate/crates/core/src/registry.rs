//! Frame inventory: frame elements, filler typing, temporal kind, terminator
//! links and verbalization templates.
//!
//! The registry file is JSON:
//!
//! ```json
//! { "frames": {
//!     "Being_employed": {
//!       "kind": "state",
//!       "elements": [{"name": "Employee", "filler_kind": "entity(Person)"}, ...],
//!       "anchor_fes": ["Employee", "Employer"],
//!       "terminator": "Employment_end",
//!       "templates": { "lv": [ {"slot": "Employee"}, {"tokens": ["bija|būt|VBD"]}, ... ] }
//!     } } }
//! ```
//!
//! Template tokens are written `surface|lemma|POS[|NER[|HYPERNYM]]`. A
//! literal segment marks its frame-evoking token with `"target": <index>`.
//! Slot segments may carry `pre`/`post` literal tokens, dropped together with
//! the slot when the element is unfilled, and `features` (`POS|NER|HYPERNYM`)
//! used to featurize string fillers.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::Path;

use serde::de::{MapAccess, Visitor};
use serde::{Deserialize, Deserializer, Serialize};
use thiserror::Error;

use crate::corpus::{FrameAnnotation, Token, NONE};
use crate::error::Error;

/// Name of the frame element every frame carries.
pub const TIME_FE: &str = "Time";

const DEFAULT_REGISTRY: &str = include_str!("../data/registry.json");

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FrameKind {
    Event,
    State,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum EntityKind {
    Person,
    Organization,
}

impl fmt::Display for EntityKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            EntityKind::Person => "Person",
            EntityKind::Organization => "Organization",
        })
    }
}

impl std::str::FromStr for EntityKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "Person" => Ok(EntityKind::Person),
            "Organization" => Ok(EntityKind::Organization),
            other => Err(format!("unknown entity kind `{other}`")),
        }
    }
}

/// What may fill a frame element.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum FillerKind {
    Entity(Option<EntityKind>),
    String,
}

impl FillerKind {
    pub fn accepts(&self, kind: EntityKind) -> bool {
        match self {
            FillerKind::Entity(None) => true,
            FillerKind::Entity(Some(k)) => *k == kind,
            FillerKind::String => false,
        }
    }

    pub fn is_entity(&self) -> bool {
        matches!(self, FillerKind::Entity(_))
    }
}

impl TryFrom<String> for FillerKind {
    type Error = String;

    fn try_from(s: String) -> Result<Self, Self::Error> {
        match s.as_str() {
            "string" => Ok(FillerKind::String),
            "entity(any)" => Ok(FillerKind::Entity(None)),
            "entity(Person)" => Ok(FillerKind::Entity(Some(EntityKind::Person))),
            "entity(Organization)" => Ok(FillerKind::Entity(Some(EntityKind::Organization))),
            other => Err(format!("unknown filler kind `{other}`")),
        }
    }
}

impl From<FillerKind> for String {
    fn from(k: FillerKind) -> String {
        match k {
            FillerKind::String => "string".into(),
            FillerKind::Entity(None) => "entity(any)".into(),
            FillerKind::Entity(Some(k)) => format!("entity({k})"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeDef {
    pub name: String,
    pub filler_kind: FillerKind,
    /// Sample string fillers, used when generating verbalizations.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub examples: Vec<String>,
}

/// Features given to filler tokens that come from a string.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SlotFeatures {
    pub pos: String,
    pub ner: String,
    pub hypernym: String,
}

impl Default for SlotFeatures {
    fn default() -> Self {
        SlotFeatures { pos: "NN".into(), ner: "O".into(), hypernym: NONE.into() }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Segment {
    Literal { tokens: Vec<Token>, target: Option<usize> },
    Slot { fe: String, pre: Vec<Token>, post: Vec<Token>, features: SlotFeatures },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Template {
    pub segments: Vec<Segment>,
}

impl Template {
    /// The (segment, token) position of the target token.
    pub fn target(&self) -> Option<(usize, usize)> {
        self.segments.iter().enumerate().find_map(|(i, s)| match s {
            Segment::Literal { target: Some(t), .. } => Some((i, *t)),
            _ => None,
        })
    }

    pub fn target_token(&self) -> Option<&Token> {
        let (seg, tok) = self.target()?;
        match &self.segments[seg] {
            Segment::Literal { tokens, .. } => tokens.get(tok),
            Segment::Slot { .. } => None,
        }
    }

    pub fn slot(&self, fe: &str) -> Option<&Segment> {
        self.segments.iter().find(|s| matches!(s, Segment::Slot { fe: f, .. } if f == fe))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FrameDef {
    pub name: String,
    pub kind: FrameKind,
    pub elements: Vec<FeDef>,
    pub anchor_fes: Vec<String>,
    pub terminator: Option<String>,
    pub templates: BTreeMap<String, Template>,
}

impl FrameDef {
    pub fn element(&self, name: &str) -> Option<&FeDef> {
        self.elements.iter().find(|e| e.name == name)
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum RegistryError {
    #[error("invalid registry JSON at line {line}: {message}")]
    Json { line: usize, message: String },
    #[error("duplicate frame `{0}`")]
    DuplicateFrame(String),
    #[error("frame `{frame}`: duplicate element `{fe}`")]
    DuplicateElement { frame: String, fe: String },
    #[error("frame `{0}` has no `Time` element")]
    MissingTime(String),
    #[error("state frame `{0}` declares no anchor elements")]
    StateWithoutAnchors(String),
    #[error("event frame `{0}` declares anchor elements")]
    EventWithAnchors(String),
    #[error("frame `{frame}`: anchor `{fe}` is not one of its elements")]
    UnknownAnchor { frame: String, fe: String },
    #[error("frame `{frame}`: unknown terminator `{terminator}`")]
    UnknownTerminator { frame: String, terminator: String },
    #[error("frame `{frame}`: terminator `{terminator}` lacks anchor element `{fe}`")]
    TerminatorMissingAnchor { frame: String, terminator: String, fe: String },
    #[error("frame `{frame}` template `{lang}`: {message}")]
    Template { frame: String, lang: String, message: String },
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct FrameRegistry {
    frames: BTreeMap<String, FrameDef>,
}

impl FrameRegistry {
    /// The shipped 26-frame inventory.
    pub fn default_registry() -> Self {
        parse_registry(DEFAULT_REGISTRY).expect("shipped registry is valid")
    }

    pub fn from_frames(frames: Vec<FrameDef>) -> Result<Self, RegistryError> {
        let mut map = BTreeMap::new();
        for f in frames {
            if map.contains_key(&f.name) {
                return Err(RegistryError::DuplicateFrame(f.name));
            }
            map.insert(f.name.clone(), f);
        }
        let reg = FrameRegistry { frames: map };
        reg.validate()?;
        Ok(reg)
    }

    /// Adds the frames of `other`; a frame defined in both is an error.
    pub fn extend(&mut self, other: FrameRegistry) -> Result<(), RegistryError> {
        let mut frames: Vec<FrameDef> = std::mem::take(&mut self.frames).into_values().collect();
        frames.extend(other.frames.into_values());
        *self = FrameRegistry::from_frames(frames)?;
        Ok(())
    }

    pub fn get(&self, name: &str) -> Option<&FrameDef> {
        self.frames.get(name)
    }

    pub fn contains(&self, name: &str) -> bool {
        self.frames.contains_key(name)
    }

    /// Frames in name order.
    pub fn frames(&self) -> impl Iterator<Item = &FrameDef> {
        self.frames.values()
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.frames.keys().map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    /// Keeps only the named frames (and nothing they would dangle on).
    pub fn restrict(&self, names: &[&str]) -> Result<Self, RegistryError> {
        let frames = self
            .frames
            .values()
            .filter(|f| names.contains(&f.name.as_str()))
            .cloned()
            .map(|mut f| {
                if f.terminator.as_deref().is_some_and(|t| !names.contains(&t)) {
                    f.terminator = None;
                }
                f
            })
            .collect();
        FrameRegistry::from_frames(frames)
    }

    /// Referential integrity of an annotation.
    pub fn check_annotation(&self, annotation: &FrameAnnotation) -> Result<(), String> {
        let frame = self.get(&annotation.frame).ok_or_else(|| format!("unknown frame `{}`", annotation.frame))?;
        for el in &annotation.elements {
            if frame.element(&el.fe).is_none() {
                return Err(format!("frame `{}` has no element `{}`", frame.name, el.fe));
            }
        }
        Ok(())
    }

    fn validate(&self) -> Result<(), RegistryError> {
        for f in self.frames.values() {
            let mut names = BTreeSet::new();
            for e in &f.elements {
                if !names.insert(e.name.as_str()) {
                    return Err(RegistryError::DuplicateElement { frame: f.name.clone(), fe: e.name.clone() });
                }
            }
            if !names.contains(TIME_FE) {
                return Err(RegistryError::MissingTime(f.name.clone()));
            }
            match (f.kind, f.anchor_fes.is_empty()) {
                (FrameKind::State, true) => return Err(RegistryError::StateWithoutAnchors(f.name.clone())),
                (FrameKind::Event, false) => return Err(RegistryError::EventWithAnchors(f.name.clone())),
                _ => {}
            }
            for a in &f.anchor_fes {
                if !names.contains(a.as_str()) {
                    return Err(RegistryError::UnknownAnchor { frame: f.name.clone(), fe: a.clone() });
                }
            }
            if let Some(t) = &f.terminator {
                let term = self.frames.get(t).ok_or_else(|| RegistryError::UnknownTerminator {
                    frame: f.name.clone(),
                    terminator: t.clone(),
                })?;
                for a in &f.anchor_fes {
                    if term.element(a).is_none() {
                        return Err(RegistryError::TerminatorMissingAnchor {
                            frame: f.name.clone(),
                            terminator: t.clone(),
                            fe: a.clone(),
                        });
                    }
                }
            }
            for (lang, template) in &f.templates {
                validate_template(f, lang, template)?;
            }
        }
        Ok(())
    }
}

fn validate_template(f: &FrameDef, lang: &str, template: &Template) -> Result<(), RegistryError> {
    let err = |message: String| RegistryError::Template { frame: f.name.clone(), lang: lang.to_string(), message };
    let mut targets = 0;
    let mut slots = BTreeSet::new();
    for seg in &template.segments {
        let tokens: Vec<&Token> = match seg {
            Segment::Literal { tokens, target } => {
                if tokens.is_empty() {
                    return Err(err("empty literal segment".into()));
                }
                if let Some(t) = target {
                    if *t >= tokens.len() {
                        return Err(err(format!("target index {t} outside its segment")));
                    }
                    targets += 1;
                }
                tokens.iter().collect()
            }
            Segment::Slot { fe, pre, post, features } => {
                if fe == TIME_FE {
                    return Err(err("Time is rendered by the trailing time phrase, not a slot".into()));
                }
                if f.element(fe).is_none() {
                    return Err(err(format!("slot for unknown element `{fe}`")));
                }
                if !slots.insert(fe.as_str()) {
                    return Err(err(format!("element `{fe}` has two slots")));
                }
                for v in [&features.pos, &features.ner, &features.hypernym] {
                    if v.is_empty() || v.chars().any(char::is_whitespace) {
                        return Err(err(format!("bad slot feature `{v}`")));
                    }
                }
                pre.iter().chain(post).collect()
            }
        };
        for t in tokens {
            t.validate().map_err(|m| err(format!("token: {m}")))?;
        }
    }
    if targets != 1 {
        return Err(err(format!("expected exactly one target token, found {targets}")));
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// File format
// ---------------------------------------------------------------------------

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RegistryFile {
    #[serde(default, rename = "note")]
    _note: Option<String>,
    frames: FrameEntries,
}

/// Frame entries in file order, duplicates preserved for reporting.
struct FrameEntries(Vec<(String, FrameSpec)>);

impl<'de> Deserialize<'de> for FrameEntries {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        struct V;
        impl<'de> Visitor<'de> for V {
            type Value = FrameEntries;
            fn expecting(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str("a map of frame names to frame definitions")
            }
            fn visit_map<A: MapAccess<'de>>(self, mut map: A) -> Result<FrameEntries, A::Error> {
                let mut out = Vec::new();
                while let Some(entry) = map.next_entry()? {
                    out.push(entry);
                }
                Ok(FrameEntries(out))
            }
        }
        d.deserialize_map(V)
    }
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct FrameSpec {
    kind: FrameKind,
    elements: Vec<FeDef>,
    #[serde(default)]
    anchor_fes: Vec<String>,
    #[serde(default)]
    terminator: Option<String>,
    #[serde(default)]
    templates: BTreeMap<String, Vec<SegmentSpec>>,
    #[serde(default, rename = "note")]
    _note: Option<String>,
}

#[derive(Deserialize)]
#[serde(untagged, deny_unknown_fields)]
enum SegmentSpec {
    Slot {
        slot: String,
        #[serde(default)]
        pre: Vec<String>,
        #[serde(default)]
        post: Vec<String>,
        #[serde(default)]
        features: Option<String>,
    },
    Literal {
        tokens: Vec<String>,
        #[serde(default)]
        target: Option<usize>,
    },
}

/// Parses `surface|lemma|POS[|NER[|HYPERNYM]]`.
pub fn parse_token_spec(spec: &str) -> Result<Token, String> {
    let parts: Vec<&str> = spec.split('|').collect();
    if !(3..=5).contains(&parts.len()) {
        return Err(format!("token spec `{spec}` needs 3 to 5 `|`-separated fields"));
    }
    let token = Token::new(
        parts[0],
        parts[1],
        parts[2],
        parts.get(3).copied().unwrap_or("O"),
        parts.get(4).copied().unwrap_or(NONE),
    );
    token.validate().map_err(|m| format!("token spec `{spec}`: {m}"))?;
    Ok(token)
}

fn convert_segment(spec: SegmentSpec) -> Result<Segment, String> {
    let tokens = |specs: Vec<String>| specs.iter().map(|s| parse_token_spec(s)).collect::<Result<Vec<_>, _>>();
    Ok(match spec {
        SegmentSpec::Literal { tokens: t, target } => Segment::Literal { tokens: tokens(t)?, target },
        SegmentSpec::Slot { slot, pre, post, features } => {
            let features = match features {
                None => SlotFeatures::default(),
                Some(f) => {
                    let parts: Vec<&str> = f.split('|').collect();
                    if parts.len() != 3 {
                        return Err(format!("slot features `{f}` must be POS|NER|HYPERNYM"));
                    }
                    SlotFeatures { pos: parts[0].into(), ner: parts[1].into(), hypernym: parts[2].into() }
                }
            };
            Segment::Slot { fe: slot, pre: tokens(pre)?, post: tokens(post)?, features }
        }
    })
}

pub fn parse_registry(text: &str) -> Result<FrameRegistry, RegistryError> {
    let file: RegistryFile =
        serde_json::from_str(text).map_err(|e| RegistryError::Json { line: e.line(), message: e.to_string() })?;
    let mut frames = Vec::new();
    for (name, spec) in file.frames.0 {
        let mut templates = BTreeMap::new();
        for (lang, segs) in spec.templates {
            let segments = segs
                .into_iter()
                .map(convert_segment)
                .collect::<Result<Vec<_>, _>>()
                .map_err(|message| RegistryError::Template { frame: name.clone(), lang: lang.clone(), message })?;
            templates.insert(lang, Template { segments });
        }
        frames.push(FrameDef {
            name,
            kind: spec.kind,
            elements: spec.elements,
            anchor_fes: spec.anchor_fes,
            terminator: spec.terminator,
            templates,
        });
    }
    FrameRegistry::from_frames(frames)
}

pub fn load_registry(path: impl AsRef<Path>) -> Result<FrameRegistry, Error> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_registry(&text).map_err(|e| match e {
        RegistryError::Json { line, message } => Error::format(path, line, message),
        other => Error::format(path, 0, other),
    })
}
