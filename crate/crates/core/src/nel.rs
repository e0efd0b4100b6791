//! Gazetteer-based entity linking with an "unidentified" string fallback.
//!
//! Gazetteer TSV columns: `ID  KIND  CANONICAL  ALIASES` where KIND is
//! `Person` or `Organization` and ALIASES is `|`-separated (may be empty).
//! Blank lines and lines starting with `#` are skipped.

use std::collections::BTreeSet;
use std::fmt;
use std::path::Path;

use rustc_hash::FxHashMap;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::error::Error;
use crate::registry::{EntityKind, FillerKind};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Entity {
    pub id: String,
    pub kind: EntityKind,
    pub canonical: String,
    /// Always contains `canonical`.
    pub aliases: BTreeSet<String>,
}

/// A frame-element value: a linked entity or raw text.
///
/// Entity references carry the kind and canonical name so stored instances
/// can be rendered without the gazetteer at hand.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Filler {
    EntityRef { id: String, kind: EntityKind, canonical: String },
    UnidentifiedString { text: String },
}

impl Filler {
    pub fn entity(e: &Entity) -> Filler {
        Filler::EntityRef { id: e.id.clone(), kind: e.kind, canonical: e.canonical.clone() }
    }

    pub fn string(text: impl Into<String>) -> Filler {
        Filler::UnidentifiedString { text: text.into() }
    }

    pub fn entity_id(&self) -> Option<&str> {
        match self {
            Filler::EntityRef { id, .. } => Some(id),
            Filler::UnidentifiedString { .. } => None,
        }
    }

    /// Surface text: the canonical name or the raw string.
    pub fn text(&self) -> &str {
        match self {
            Filler::EntityRef { canonical, .. } => canonical,
            Filler::UnidentifiedString { text } => text,
        }
    }
}

impl fmt::Display for Filler {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Filler::EntityRef { id, canonical, .. } => write!(f, "[[{id}|{canonical}]]"),
            Filler::UnidentifiedString { text } => f.write_str(text),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LinkConfig {
    pub fold_case: bool,
}

impl Default for LinkConfig {
    fn default() -> Self {
        LinkConfig { fold_case: true }
    }
}

/// Trims, collapses internal whitespace and optionally lowercases.
pub fn normalize_mention(text: &str, fold_case: bool) -> String {
    let joined = text.split_whitespace().collect::<Vec<_>>().join(" ");
    if fold_case {
        joined.to_lowercase()
    } else {
        joined
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum GazetteerErrorKind {
    #[error("expected 4 tab-separated columns, found {0}")]
    ColumnCount(usize),
    #[error("empty id")]
    EmptyId,
    #[error("duplicate id `{0}`")]
    DuplicateId(String),
    #[error("empty canonical name")]
    EmptyCanonical,
    #[error("empty alias")]
    EmptyAlias,
    #[error("{0}")]
    BadKind(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("line {line}: {kind}")]
pub struct GazetteerError {
    pub line: usize,
    pub kind: GazetteerErrorKind,
}

#[derive(Debug, Clone, Default)]
pub struct Gazetteer {
    entities: Vec<Entity>,
    by_id: FxHashMap<String, usize>,
    /// Normalized alias → entity indices (ambiguity set when > 1).
    by_alias: FxHashMap<String, Vec<usize>>,
    config: LinkConfig,
}

impl Gazetteer {
    pub fn new(config: LinkConfig) -> Self {
        Gazetteer { config, ..Default::default() }
    }

    pub fn config(&self) -> LinkConfig {
        self.config
    }

    pub fn insert(&mut self, mut entity: Entity) -> Result<(), GazetteerErrorKind> {
        if entity.id.trim().is_empty() {
            return Err(GazetteerErrorKind::EmptyId);
        }
        if entity.canonical.trim().is_empty() {
            return Err(GazetteerErrorKind::EmptyCanonical);
        }
        if entity.aliases.iter().any(|a| a.trim().is_empty()) {
            return Err(GazetteerErrorKind::EmptyAlias);
        }
        if self.by_id.contains_key(&entity.id) {
            return Err(GazetteerErrorKind::DuplicateId(entity.id));
        }
        entity.aliases.insert(entity.canonical.clone());
        let idx = self.entities.len();
        let mut keys: Vec<String> =
            entity.aliases.iter().map(|a| normalize_mention(a, self.config.fold_case)).collect();
        keys.sort();
        keys.dedup();
        for k in keys {
            self.by_alias.entry(k).or_default().push(idx);
        }
        self.by_id.insert(entity.id.clone(), idx);
        self.entities.push(entity);
        Ok(())
    }

    pub fn get(&self, id: &str) -> Option<&Entity> {
        self.by_id.get(id).map(|&i| &self.entities[i])
    }

    pub fn len(&self) -> usize {
        self.entities.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entities.is_empty()
    }

    pub fn entities(&self) -> &[Entity] {
        &self.entities
    }

    /// Entities whose aliases match `mention` after normalization.
    pub fn lookup(&self, mention: &str) -> Vec<&Entity> {
        let key = normalize_mention(mention, self.config.fold_case);
        self.by_alias.get(&key).map(|v| v.iter().map(|&i| &self.entities[i]).collect()).unwrap_or_default()
    }
}

pub fn parse_gazetteer(text: &str, config: LinkConfig) -> Result<Gazetteer, GazetteerError> {
    let mut gaz = Gazetteer::new(config);
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let err = |kind| GazetteerError { line, kind };
        let l = raw.strip_suffix('\r').unwrap_or(raw);
        if l.trim().is_empty() || l.starts_with('#') {
            continue;
        }
        let cols: Vec<&str> = l.split('\t').collect();
        if cols.len() != 4 {
            return Err(err(GazetteerErrorKind::ColumnCount(cols.len())));
        }
        let kind: EntityKind = cols[1].trim().parse().map_err(|m| err(GazetteerErrorKind::BadKind(m)))?;
        let mut aliases = BTreeSet::new();
        if !cols[3].is_empty() {
            for a in cols[3].split('|') {
                if a.trim().is_empty() {
                    return Err(err(GazetteerErrorKind::EmptyAlias));
                }
                aliases.insert(a.trim().to_string());
            }
        }
        gaz.insert(Entity { id: cols[0].trim().into(), kind, canonical: cols[2].trim().into(), aliases })
            .map_err(err)?;
    }
    Ok(gaz)
}

pub fn load_gazetteer(path: impl AsRef<Path>) -> Result<Gazetteer, Error> {
    load_gazetteer_with(path, LinkConfig::default())
}

pub fn load_gazetteer_with(path: impl AsRef<Path>, config: LinkConfig) -> Result<Gazetteer, Error> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_gazetteer(&text, config).map_err(|e| Error::format(path, e.line, e.kind))
}

/// How many stored frame instances mention an entity; drives disambiguation.
pub trait EntityStats {
    fn instance_count(&self, entity_id: &str) -> u64;
}

/// An empty store.
impl EntityStats for () {
    fn instance_count(&self, _: &str) -> u64 {
        0
    }
}

impl<S: std::hash::BuildHasher> EntityStats for std::collections::HashMap<String, u64, S> {
    fn instance_count(&self, entity_id: &str) -> u64 {
        self.get(entity_id).copied().unwrap_or(0)
    }
}

/// Links a filler mention. Never fails: anything that cannot be resolved to
/// exactly one entity of an acceptable kind stays an unidentified string.
pub fn link_mention(text: &str, expected: FillerKind, gazetteer: &Gazetteer, stats: &impl EntityStats) -> Filler {
    let fallback = || Filler::string(text);
    if !expected.is_entity() {
        return fallback();
    }
    let candidates: Vec<&Entity> = gazetteer.lookup(text).into_iter().filter(|e| expected.accepts(e.kind)).collect();
    match candidates.as_slice() {
        [] => fallback(),
        [only] => Filler::entity(only),
        many => {
            let counts: Vec<u64> = many.iter().map(|e| stats.instance_count(&e.id)).collect();
            let best = *counts.iter().max().expect("non-empty");
            let mut winners = many.iter().zip(&counts).filter(|(_, &c)| c == best);
            match (winners.next(), winners.next()) {
                (Some((e, _)), None) => Filler::entity(e),
                _ => fallback(),
            }
        }
    }
}
