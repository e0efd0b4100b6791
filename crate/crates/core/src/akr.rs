//! The knowledge store: frame instances as n-ary facts over linked entities
//! and strings, deduplicated with counts, with a derived day index giving the
//! set of facts true on any calendar day.
//!
//! Persistence is an append-only JSON-lines log with one record per ingest.
//! Instances, counts and the day index are all derived by replaying it.

use std::collections::{BTreeMap, BTreeSet};
use std::io::Write;
use std::path::Path;
use std::sync::{RwLock, RwLockReadGuard, RwLockWriteGuard};

use chrono::NaiveDate;
use rustc_hash::FxHashMap;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{FrameAnnotation, Sentence};
use crate::error::Error;
use crate::nel::{link_mention, normalize_mention, EntityStats, Filler, Gazetteer};
use crate::registry::{FrameKind, FrameRegistry, TIME_FE};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TimeValue {
    Date(NaiveDate),
    Approx(NaiveDate),
    Unknown,
}

impl TimeValue {
    pub fn day(&self) -> Option<NaiveDate> {
        match self {
            TimeValue::Date(d) | TimeValue::Approx(d) => Some(*d),
            TimeValue::Unknown => None,
        }
    }

    /// date > approx > unknown.
    pub fn precision(&self) -> u8 {
        match self {
            TimeValue::Date(_) => 2,
            TimeValue::Approx(_) => 1,
            TimeValue::Unknown => 0,
        }
    }

    /// Whether `self` should replace `current` when merging duplicates:
    /// more precise wins, then earlier.
    fn preferred_over(&self, current: &TimeValue) -> bool {
        match self.precision().cmp(&current.precision()) {
            std::cmp::Ordering::Greater => true,
            std::cmp::Ordering::Less => false,
            std::cmp::Ordering::Equal => matches!((self.day(), current.day()), (Some(a), Some(b)) if a < b),
        }
    }
}

const DATE_FORMATS: [&str; 4] = ["%Y-%m-%d", "%d.%m.%Y", "%Y.%m.%d", "%Y/%m/%d"];

/// Interprets Time element text: the first token that is a full date, else
/// the first four-digit year (as July 1 of that year).
pub fn parse_time_text(text: &str) -> Option<TimeValue> {
    let tokens: Vec<&str> = text.split_whitespace().collect();
    for t in &tokens {
        for f in DATE_FORMATS {
            if let Ok(d) = NaiveDate::parse_from_str(t, f) {
                return Some(TimeValue::Date(d));
            }
        }
    }
    tokens.iter().find_map(|t| {
        let t = t.trim_end_matches(['.', ',']);
        if t.len() == 4 && t.bytes().all(|b| b.is_ascii_digit()) {
            NaiveDate::from_ymd_opt(t.parse().ok()?, 7, 1).map(TimeValue::Approx)
        } else {
            None
        }
    })
}

/// Picks the span used for an element that occurs more than once in an
/// annotation: highest confidence, earliest on a tie.
fn best_span<'a>(annotation: &'a FrameAnnotation, fe: &str) -> Option<&'a crate::corpus::FeSpan> {
    annotation
        .elements
        .iter()
        .filter(|e| e.fe == fe)
        .fold(None, |best: Option<&crate::corpus::FeSpan>, e| match best {
            Some(b) if b.confidence > e.confidence || (b.confidence == e.confidence && b.span.start <= e.span.start) => {
                Some(b)
            }
            _ => Some(e),
        })
}

pub fn resolve_time(annotation: &FrameAnnotation, sentence: &Sentence) -> TimeValue {
    best_span(annotation, TIME_FE)
        .filter(|e| e.span.end <= sentence.len())
        .and_then(|e| parse_time_text(&sentence.span_text(e.span)))
        .or_else(|| sentence.pub_date.map(TimeValue::Approx))
        .unwrap_or(TimeValue::Unknown)
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Provenance {
    pub doc_id: String,
    pub sentence: usize,
}

/// One ingest event, as persisted. Fillers are already linked.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct IngestRecord {
    pub frame: String,
    pub fillers: BTreeMap<String, Filler>,
    pub time: TimeValue,
    pub provenance: Provenance,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FrameInstance {
    pub id: u64,
    pub frame: String,
    pub fillers: BTreeMap<String, Filler>,
    pub time: TimeValue,
    pub count: u64,
    pub provenance: Vec<Provenance>,
    /// Set when merged duplicates reported different times.
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub time_conflict: bool,
}

impl FrameInstance {
    pub fn key(&self) -> DedupKey {
        DedupKey::new(&self.frame, &self.fillers)
    }

    pub fn mentions(&self, entity_id: &str) -> bool {
        self.fillers.values().any(|f| f.entity_id() == Some(entity_id))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub enum CanonicalFiller {
    Entity(String),
    Text(String),
}

impl From<&Filler> for CanonicalFiller {
    fn from(f: &Filler) -> Self {
        match f {
            Filler::EntityRef { id, .. } => CanonicalFiller::Entity(id.clone()),
            Filler::UnidentifiedString { text } => CanonicalFiller::Text(normalize_mention(text, true)),
        }
    }
}

/// Frame plus canonical fillers sorted by element name. Time never
/// participates.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub struct DedupKey {
    pub frame: String,
    pub fillers: Vec<(String, CanonicalFiller)>,
}

impl DedupKey {
    pub fn new<'a, I>(frame: &str, fillers: I) -> Self
    where
        I: IntoIterator<Item = (&'a String, &'a Filler)>,
    {
        let mut pairs: Vec<(String, CanonicalFiller)> = fillers
            .into_iter()
            .filter(|(fe, _)| fe.as_str() != TIME_FE)
            .map(|(fe, f)| (fe.clone(), CanonicalFiller::from(f)))
            .collect();
        pairs.sort();
        DedupKey { frame: frame.to_string(), fillers: pairs }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum AkrError {
    #[error("unknown frame `{0}`")]
    UnknownFrame(String),
    #[error("frame `{frame}` has no element `{fe}`")]
    UnknownElement { frame: String, fe: String },
    #[error("frame `{frame}`: element `{fe}` cannot hold {filler}")]
    KindMismatch { frame: String, fe: String, filler: String },
    #[error("Time is stored as the instance time, not as a filler")]
    TimeFiller,
    #[error("annotation span {0} outside the sentence")]
    SpanOutOfRange(String),
    #[error("unknown entity `{0}`")]
    UnknownEntity(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct IngestOutcome {
    pub id: u64,
    pub merged: bool,
}

/// Half-open validity of a state instance; `end = None` is open-ended.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct Validity {
    pub id: u64,
    pub start: NaiveDate,
    pub end: Option<NaiveDate>,
}

impl Validity {
    pub fn contains(&self, day: NaiveDate) -> bool {
        self.start <= day && self.end.is_none_or(|e| day < e)
    }
}

/// A state's subject: frame plus its anchor element values.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct GroupKey {
    pub frame: String,
    pub anchors: Vec<Option<CanonicalFiller>>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
struct StateGroup {
    states: BTreeSet<(NaiveDate, u64)>,
    terminators: BTreeSet<(NaiveDate, u64)>,
    intervals: Vec<Validity>,
}

impl StateGroup {
    fn recompute(&mut self) {
        let states: Vec<(NaiveDate, u64)> = self.states.iter().copied().collect();
        self.intervals = states
            .iter()
            .enumerate()
            .map(|(i, &(start, id))| {
                let next = states.get(i + 1).map(|s| s.0);
                let term = self.terminators.iter().map(|t| t.0).find(|&d| d > start);
                let end = match (next, term) {
                    (Some(a), Some(b)) => Some(a.min(b)),
                    (a, b) => a.or(b),
                };
                Validity { id, start, end }
            })
            .collect();
    }

    fn valid_at(&self, day: NaiveDate) -> Option<&Validity> {
        let i = self.intervals.partition_point(|v| v.start <= day);
        i.checked_sub(1).map(|i| &self.intervals[i]).filter(|v| v.contains(day))
    }
}

/// Per-frame facts the index needs from the registry.
#[derive(Debug, Clone, Default)]
struct IndexSchema {
    kinds: BTreeMap<String, FrameKind>,
    anchors: BTreeMap<String, Vec<String>>,
    /// terminator frame → state frames it ends.
    terminates: BTreeMap<String, Vec<String>>,
}

impl IndexSchema {
    fn new(registry: &FrameRegistry) -> Self {
        let mut s = IndexSchema::default();
        for f in registry.frames() {
            s.kinds.insert(f.name.clone(), f.kind);
            s.anchors.insert(f.name.clone(), f.anchor_fes.clone());
            if let Some(t) = &f.terminator {
                s.terminates.entry(t.clone()).or_default().push(f.name.clone());
            }
        }
        s
    }

    fn group_key(&self, state_frame: &str, inst: &FrameInstance) -> GroupKey {
        let anchors = self.anchors.get(state_frame).map(Vec::as_slice).unwrap_or(&[]);
        GroupKey {
            frame: state_frame.to_string(),
            anchors: anchors.iter().map(|a| inst.fillers.get(a).map(CanonicalFiller::from)).collect(),
        }
    }
}

/// Calendar day → valid instance ids, derived from the instance list.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct DayIndex {
    events: BTreeMap<NaiveDate, BTreeSet<u64>>,
    groups: BTreeMap<GroupKey, StateGroup>,
}

impl DayIndex {
    fn build(instances: &[FrameInstance], schema: &IndexSchema) -> Self {
        let mut idx = DayIndex::default();
        for inst in instances {
            idx.add(inst, schema);
        }
        idx
    }

    fn add(&mut self, inst: &FrameInstance, schema: &IndexSchema) {
        self.touch(inst, schema, true);
    }

    fn remove(&mut self, inst: &FrameInstance, schema: &IndexSchema) {
        self.touch(inst, schema, false);
    }

    fn touch(&mut self, inst: &FrameInstance, schema: &IndexSchema, insert: bool) {
        let Some(day) = inst.time.day() else { return };
        let entry = (day, inst.id);
        match schema.kinds.get(&inst.frame) {
            Some(FrameKind::Event) => {
                let set = self.events.entry(day).or_default();
                if insert {
                    set.insert(inst.id);
                } else {
                    set.remove(&inst.id);
                    if set.is_empty() {
                        self.events.remove(&day);
                    }
                }
            }
            Some(FrameKind::State) => {
                let key = schema.group_key(&inst.frame, inst);
                self.update_group(key, |g| edit(&mut g.states, entry, insert));
            }
            None => {}
        }
        for state_frame in schema.terminates.get(&inst.frame).into_iter().flatten() {
            let key = schema.group_key(state_frame, inst);
            self.update_group(key, |g| edit(&mut g.terminators, entry, insert));
        }
    }

    fn update_group(&mut self, key: GroupKey, f: impl FnOnce(&mut StateGroup)) {
        let g = self.groups.entry(key.clone()).or_default();
        f(g);
        if g.states.is_empty() && g.terminators.is_empty() {
            self.groups.remove(&key);
        } else {
            g.recompute();
        }
    }

    /// Ids valid on `day`, ascending.
    pub fn ids_at(&self, day: NaiveDate) -> BTreeSet<u64> {
        let mut out: BTreeSet<u64> = self.events.get(&day).cloned().unwrap_or_default();
        out.extend(self.groups.values().filter_map(|g| g.valid_at(day)).map(|v| v.id));
        out
    }

    pub fn validity(&self, id: u64) -> Option<Validity> {
        self.groups.values().flat_map(|g| &g.intervals).find(|v| v.id == id).copied()
    }

    /// Every state interval, grouped by subject.
    pub fn state_intervals(&self) -> impl Iterator<Item = (&GroupKey, &[Validity])> {
        self.groups.iter().map(|(k, g)| (k, g.intervals.as_slice()))
    }

    /// Earliest and latest day at which anything starts or ends.
    pub fn span(&self) -> Option<(NaiveDate, NaiveDate)> {
        let mut days: Vec<NaiveDate> = self.events.keys().copied().collect();
        for g in self.groups.values() {
            days.extend(g.states.iter().chain(&g.terminators).map(|t| t.0));
        }
        Some((*days.iter().min()?, *days.iter().max()?))
    }
}

fn edit(set: &mut BTreeSet<(NaiveDate, u64)>, entry: (NaiveDate, u64), insert: bool) {
    if insert {
        set.insert(entry);
    } else {
        set.remove(&entry);
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ProfileGroup {
    pub frame: String,
    pub instances: Vec<FrameInstance>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Profile {
    pub entity: String,
    pub groups: Vec<ProfileGroup>,
}

impl Profile {
    pub fn instances(&self) -> impl Iterator<Item = &FrameInstance> {
        self.groups.iter().flat_map(|g| &g.instances)
    }

    pub fn is_empty(&self) -> bool {
        self.groups.is_empty()
    }
}

#[derive(Debug, Clone)]
pub struct TemporalStore {
    registry: FrameRegistry,
    schema: IndexSchema,
    log: Vec<IngestRecord>,
    instances: Vec<FrameInstance>,
    by_key: FxHashMap<DedupKey, usize>,
    entity_counts: FxHashMap<String, u64>,
    index: DayIndex,
}

impl EntityStats for TemporalStore {
    fn instance_count(&self, entity_id: &str) -> u64 {
        self.entity_counts.get(entity_id).copied().unwrap_or(0)
    }
}

impl TemporalStore {
    pub fn new(registry: FrameRegistry) -> Self {
        TemporalStore {
            schema: IndexSchema::new(&registry),
            registry,
            log: Vec::new(),
            instances: Vec::new(),
            by_key: FxHashMap::default(),
            entity_counts: FxHashMap::default(),
            index: DayIndex::default(),
        }
    }

    pub fn registry(&self) -> &FrameRegistry {
        &self.registry
    }

    pub fn log(&self) -> &[IngestRecord] {
        &self.log
    }

    pub fn instances(&self) -> &[FrameInstance] {
        &self.instances
    }

    pub fn get(&self, id: u64) -> Option<&FrameInstance> {
        usize::try_from(id).ok().and_then(|i| self.instances.get(i))
    }

    pub fn len(&self) -> usize {
        self.instances.len()
    }

    pub fn is_empty(&self) -> bool {
        self.instances.is_empty()
    }

    pub fn index(&self) -> &DayIndex {
        &self.index
    }

    /// Recomputes the day index from the instance list alone.
    pub fn rebuild_index(&self) -> DayIndex {
        DayIndex::build(&self.instances, &self.schema)
    }

    /// Links fillers and resolves time for one parsed annotation.
    pub fn record_for(
        &self,
        annotation: &FrameAnnotation,
        sentence: &Sentence,
        sentence_index: usize,
        gazetteer: &Gazetteer,
    ) -> Result<IngestRecord, AkrError> {
        let frame = self.registry.get(&annotation.frame).ok_or_else(|| AkrError::UnknownFrame(annotation.frame.clone()))?;
        let mut fillers = BTreeMap::new();
        for el in &annotation.elements {
            let def = frame
                .element(&el.fe)
                .ok_or_else(|| AkrError::UnknownElement { frame: frame.name.clone(), fe: el.fe.clone() })?;
            if el.span.is_empty() || el.span.end > sentence.len() {
                return Err(AkrError::SpanOutOfRange(el.span.to_string()));
            }
            if el.fe == TIME_FE || fillers.contains_key(&el.fe) {
                continue;
            }
            let span = best_span(annotation, &el.fe).expect("element present").span;
            let text = sentence.span_text(span);
            fillers.insert(el.fe.clone(), link_mention(&text, def.filler_kind, gazetteer, self));
        }
        Ok(IngestRecord {
            frame: frame.name.clone(),
            fillers,
            time: resolve_time(annotation, sentence),
            provenance: Provenance { doc_id: sentence.doc_id.clone(), sentence: sentence_index },
        })
    }

    pub fn ingest(
        &mut self,
        annotation: &FrameAnnotation,
        sentence: &Sentence,
        sentence_index: usize,
        gazetteer: &Gazetteer,
    ) -> Result<IngestOutcome, AkrError> {
        let record = self.record_for(annotation, sentence, sentence_index, gazetteer)?;
        self.apply(record)
    }

    fn check(&self, record: &IngestRecord) -> Result<(), AkrError> {
        let frame = self.registry.get(&record.frame).ok_or_else(|| AkrError::UnknownFrame(record.frame.clone()))?;
        for (fe, filler) in &record.fillers {
            if fe == TIME_FE {
                return Err(AkrError::TimeFiller);
            }
            let def = frame
                .element(fe)
                .ok_or_else(|| AkrError::UnknownElement { frame: frame.name.clone(), fe: fe.clone() })?;
            let ok = match (filler, def.filler_kind) {
                (Filler::UnidentifiedString { .. }, _) => true,
                (Filler::EntityRef { kind, .. }, k) => k.accepts(*kind),
            };
            if !ok {
                let what = match filler {
                    Filler::EntityRef { kind, .. } => format!("an entity of kind {kind}"),
                    Filler::UnidentifiedString { .. } => "a string".into(),
                };
                return Err(AkrError::KindMismatch { frame: frame.name.clone(), fe: fe.clone(), filler: what });
            }
        }
        Ok(())
    }

    /// Applies one ingest event: merge with an equal-key instance or create one.
    pub fn apply(&mut self, record: IngestRecord) -> Result<IngestOutcome, AkrError> {
        self.check(&record)?;
        let key = DedupKey::new(&record.frame, &record.fillers);
        let outcome = if let Some(&i) = self.by_key.get(&key) {
            let old = self.instances[i].clone();
            let inst = &mut self.instances[i];
            inst.count += 1;
            inst.provenance.push(record.provenance.clone());
            if record.time != inst.time && record.time.day().is_some() && inst.time.day().is_some() {
                inst.time_conflict = true;
            }
            if record.time.preferred_over(&inst.time) {
                inst.time = record.time;
            }
            if inst.time != old.time {
                let new = inst.clone();
                self.index.remove(&old, &self.schema);
                self.index.add(&new, &self.schema);
            }
            IngestOutcome { id: old.id, merged: true }
        } else {
            let id = self.instances.len() as u64;
            let inst = FrameInstance {
                id,
                frame: record.frame.clone(),
                fillers: record.fillers.clone(),
                time: record.time,
                count: 1,
                provenance: vec![record.provenance.clone()],
                time_conflict: false,
            };
            let entities: BTreeSet<&str> = inst.fillers.values().filter_map(Filler::entity_id).collect();
            for e in entities {
                *self.entity_counts.entry(e.to_string()).or_default() += 1;
            }
            self.index.add(&inst, &self.schema);
            self.by_key.insert(key, self.instances.len());
            self.instances.push(inst);
            IngestOutcome { id, merged: false }
        };
        self.log.push(record);
        Ok(outcome)
    }

    /// Events dated `day` plus states valid on it, ascending by id.
    pub fn facts_at(&self, day: NaiveDate) -> Vec<&FrameInstance> {
        self.index.ids_at(day).into_iter().filter_map(|id| self.get(id)).collect()
    }

    pub fn validity(&self, id: u64) -> Option<Validity> {
        self.index.validity(id)
    }

    /// Whether the id occurs as an entity filler anywhere in the store.
    pub fn knows_entity(&self, entity_id: &str) -> bool {
        self.entity_counts.contains_key(entity_id)
    }

    /// Instances mentioning the entity, grouped by frame; most-repeated first
    /// within each group, then by time (undated last), then by id.
    pub fn entity_profile(&self, entity_id: &str, gazetteer: Option<&Gazetteer>) -> Result<Profile, AkrError> {
        if !self.knows_entity(entity_id) && gazetteer.is_none_or(|g| g.get(entity_id).is_none()) {
            return Err(AkrError::UnknownEntity(entity_id.to_string()));
        }
        let mut groups: BTreeMap<&str, Vec<FrameInstance>> = BTreeMap::new();
        for inst in self.instances.iter().filter(|i| i.mentions(entity_id)) {
            groups.entry(&inst.frame).or_default().push(inst.clone());
        }
        let groups = groups
            .into_iter()
            .map(|(frame, mut instances)| {
                instances.sort_by(|a, b| {
                    b.count
                        .cmp(&a.count)
                        .then_with(|| a.time.day().is_none().cmp(&b.time.day().is_none()))
                        .then_with(|| a.time.day().cmp(&b.time.day()))
                        .then_with(|| a.id.cmp(&b.id))
                });
                ProfileGroup { frame: frame.to_string(), instances }
            })
            .collect();
        Ok(Profile { entity: entity_id.to_string(), groups })
    }

    /// Replays a log file; a missing file is an empty store.
    pub fn open(path: impl AsRef<Path>, registry: FrameRegistry) -> Result<Self, Error> {
        let path = path.as_ref();
        let mut store = TemporalStore::new(registry);
        let text = match std::fs::read_to_string(path) {
            Ok(t) => t,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(store),
            Err(e) => return Err(Error::io(path, e)),
        };
        for record in parse_log(&text).map_err(|(line, msg)| Error::format(path, line, msg))? {
            let (line, record) = record;
            store.apply(record).map_err(|e| Error::integrity(format!("{}:{line}: {e}", path.display())))?;
        }
        Ok(store)
    }

    /// Appends the log entries from `from` onward to the file.
    pub fn append_log(&self, path: impl AsRef<Path>, from: usize) -> Result<(), Error> {
        let path = path.as_ref();
        let mut out = String::new();
        for r in &self.log[from.min(self.log.len())..] {
            out.push_str(&serde_json::to_string(r).expect("records serialize"));
            out.push('\n');
        }
        let mut f = std::fs::OpenOptions::new()
            .create(true)
            .append(true)
            .open(path)
            .map_err(|e| Error::io(path, e))?;
        f.write_all(out.as_bytes()).map_err(|e| Error::io(path, e))
    }
}

/// Parses a JSON-lines store log; blank lines are skipped.
pub fn parse_log(text: &str) -> Result<Vec<(usize, IngestRecord)>, (usize, String)> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| serde_json::from_str(l).map(|r| (i + 1, r)).map_err(|e| (i + 1, e.to_string())))
        .collect()
}

/// A store shared between one writer and many readers. Readers hold a guard
/// and so never observe a half-applied ingest.
#[derive(Debug)]
pub struct SharedStore(RwLock<TemporalStore>);

impl SharedStore {
    pub fn new(store: TemporalStore) -> Self {
        SharedStore(RwLock::new(store))
    }

    pub fn read(&self) -> RwLockReadGuard<'_, TemporalStore> {
        self.0.read().unwrap_or_else(|p| p.into_inner())
    }

    pub fn write(&self) -> RwLockWriteGuard<'_, TemporalStore> {
        self.0.write().unwrap_or_else(|p| p.into_inner())
    }

    pub fn into_inner(self) -> TemporalStore {
        self.0.into_inner().unwrap_or_else(|p| p.into_inner())
    }
}
