//! Exhaustive sequential-covering rule search.
//!
//! Each round enumerates every pattern with at most `max_literals` literal
//! slots that matches at least one still-uncovered positive, scores it with
//! counts over the whole training set, optionally generalizes same-shape
//! literals into value sets, and keeps the best. Counts never change between
//! rounds, so they are computed once up front for every pattern any positive
//! can generate.

use std::cmp::Ordering;

use rustc_hash::{FxHashMap, FxHashSet};
use smallvec::SmallVec;
use thiserror::Error;

use super::laplace::Laplace;
use super::pattern::{Pattern, Rule, RuleSet, SlotConstraint};

#[derive(Debug, Clone, PartialEq)]
pub struct LearnerConfig {
    /// Maximum non-wildcard slots per pattern.
    pub max_literals: usize,
    /// Rules scoring below this Laplace ratio are discarded.
    pub min_laplace: f64,
    /// Minimum training matches per rule.
    pub min_coverage: u64,
    /// Generalize same-slot literals into value sets.
    pub set_merge: bool,
}

impl Default for LearnerConfig {
    fn default() -> Self {
        LearnerConfig { max_literals: 3, min_laplace: 0.66, min_coverage: 2, set_merge: true }
    }
}

impl LearnerConfig {
    pub fn validate(&self) -> Result<(), LearnError> {
        if self.max_literals < 1 {
            return Err(LearnError::Config("max_literals must be at least 1".into()));
        }
        if !(self.min_laplace > 0.0 && self.min_laplace < 1.0) {
            return Err(LearnError::Config(format!("min_laplace {} outside (0, 1)", self.min_laplace)));
        }
        if self.min_coverage < 1 {
            return Err(LearnError::Config("min_coverage must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum LearnError {
    #[error("no positive examples for `{0}`")]
    NoPositives(String),
    #[error("example {index} has {found} slots, schema has {expected}")]
    SchemaLength { index: usize, expected: usize, found: usize },
    #[error("invalid learner configuration: {0}")]
    Config(String),
    #[error("too many distinct values in slot {0}")]
    TooManyValues(usize),
}

/// A learned rule set together with the positives no rule covers.
#[derive(Debug, Clone, PartialEq)]
pub struct Learned {
    pub ruleset: RuleSet,
    pub uncovered: usize,
    pub positives: usize,
}

const SLOT_SHIFT: u32 = 24;
const VALUE_MASK: u32 = (1 << SLOT_SHIFT) - 1;

/// A literal is a (slot, value) pair packed into one word; slot in the high
/// byte so that sorting literals sorts them by slot.
type Lit = u32;
type Key = SmallVec<[Lit; 4]>;

fn slot_of(lit: Lit) -> usize {
    (lit >> SLOT_SHIFT) as usize
}

#[derive(Debug, Clone, Copy, Default)]
struct Counts {
    n: u64,
    m: u64,
}

#[derive(Debug, Clone)]
enum Shape {
    Plain(Key),
    /// `base` plus a value set at `slot`.
    Merged { base: Key, slot: usize, values: Vec<Lit> },
}

#[derive(Debug, Clone)]
struct Candidate {
    shape: Shape,
    n: u64,
    m: u64,
    laplace: Laplace,
}

impl Candidate {
    fn literals(&self) -> usize {
        match &self.shape {
            Shape::Plain(k) => k.len(),
            Shape::Merged { base, .. } => base.len() + 1,
        }
    }

    fn matches(&self, row: &[Lit]) -> bool {
        match &self.shape {
            Shape::Plain(k) => k.iter().all(|&l| row[slot_of(l)] == l),
            Shape::Merged { base, slot, values } => {
                base.iter().all(|&l| row[slot_of(l)] == l) && values.contains(&row[*slot])
            }
        }
    }
}

struct Interner {
    slots: Vec<FxHashMap<String, u32>>,
    values: Vec<Vec<String>>,
}

impl Interner {
    fn new(width: usize) -> Self {
        Interner { slots: vec![FxHashMap::default(); width], values: vec![Vec::new(); width] }
    }

    fn intern(&mut self, slot: usize, value: &str) -> Result<Lit, LearnError> {
        if let Some(&id) = self.slots[slot].get(value) {
            return Ok(((slot as u32) << SLOT_SHIFT) | id);
        }
        let id = self.values[slot].len() as u32;
        if id > VALUE_MASK {
            return Err(LearnError::TooManyValues(slot));
        }
        self.slots[slot].insert(value.to_string(), id);
        self.values[slot].push(value.to_string());
        Ok(((slot as u32) << SLOT_SHIFT) | id)
    }

    fn value(&self, lit: Lit) -> &str {
        &self.values[slot_of(lit)][(lit & VALUE_MASK) as usize]
    }

    fn pattern(&self, width: usize, shape: &Shape) -> Pattern {
        let mut p = Pattern::wildcard(width);
        let (base, set) = match shape {
            Shape::Plain(k) => (k, None),
            Shape::Merged { base, slot, values } => (base, Some((*slot, values))),
        };
        for &l in base {
            p.slots[slot_of(l)] = SlotConstraint::Literal(self.value(l).to_string());
        }
        if let Some((slot, values)) = set {
            p.slots[slot] = SlotConstraint::value_set(values.iter().map(|&l| self.value(l)))
                .expect("merged candidates hold at least two values");
        }
        p
    }
}

/// Calls `f` with every sorted subset of `lits` of size at most `k`,
/// including the empty one.
fn for_each_subset(lits: &[Lit], k: usize, f: &mut impl FnMut(&Key)) {
    fn go(lits: &[Lit], k: usize, buf: &mut Key, f: &mut impl FnMut(&Key)) {
        f(buf);
        if buf.len() == k {
            return;
        }
        for (i, &l) in lits.iter().enumerate() {
            buf.push(l);
            go(&lits[i + 1..], k, buf, f);
            buf.pop();
        }
    }
    let mut buf = Key::new();
    go(lits, k, &mut buf, f);
}

/// Learns a rule set for `label` from `(features, is_positive)` examples.
pub fn learn_ruleset<V: AsRef<[String]>>(
    examples: &[(V, bool)],
    label: &str,
    schema: &[&str],
    config: &LearnerConfig,
) -> Result<Learned, LearnError> {
    config.validate()?;
    let width = schema.len();
    let mut interner = Interner::new(width);
    let mut rows: Vec<Vec<Lit>> = Vec::with_capacity(examples.len());
    for (index, (fv, _)) in examples.iter().enumerate() {
        let fv = fv.as_ref();
        if fv.len() != width {
            return Err(LearnError::SchemaLength { index, expected: width, found: fv.len() });
        }
        let row = fv.iter().enumerate().map(|(s, v)| interner.intern(s, v)).collect::<Result<Vec<_>, _>>()?;
        rows.push(row);
    }
    let positives: Vec<usize> = (0..examples.len()).filter(|&i| examples[i].1).collect();
    if positives.is_empty() {
        return Err(LearnError::NoPositives(label.to_string()));
    }
    let k = config.max_literals.min(width);

    // Every pattern a positive generates, with counts over the full set.
    let live: FxHashSet<Lit> = positives.iter().flat_map(|&i| rows[i].iter().copied()).collect();
    let mut counts: FxHashMap<Key, Counts> = FxHashMap::default();
    for &i in &positives {
        for_each_subset(&rows[i], k, &mut |key| {
            counts.entry(key.clone()).or_default();
        });
    }
    let mut lits: Vec<Lit> = Vec::with_capacity(width);
    for (row, (_, positive)) in rows.iter().zip(examples) {
        lits.clear();
        lits.extend(row.iter().copied().filter(|l| live.contains(l)));
        for_each_subset(&lits, k, &mut |key| {
            if let Some(c) = counts.get_mut(key) {
                c.n += 1;
                if !positive {
                    c.m += 1;
                }
            }
        });
    }

    let mut covered = vec![false; positives.len()];
    let mut rules: Vec<Rule> = Vec::new();
    loop {
        let uncovered: Vec<usize> = (0..positives.len()).filter(|&p| !covered[p]).collect();
        if uncovered.is_empty() {
            break;
        }
        let mut seen: FxHashSet<Key> = FxHashSet::default();
        let mut candidates: Vec<Candidate> = Vec::new();
        for &p in &uncovered {
            for_each_subset(&rows[positives[p]], k, &mut |key| {
                if seen.contains(key) {
                    return;
                }
                seen.insert(key.clone());
                let c = counts[key];
                if c.n < config.min_coverage {
                    return;
                }
                let laplace = Laplace::new(c.n, c.m).expect("counted candidates match at least one example");
                if laplace.at_least(config.min_laplace) {
                    candidates.push(Candidate { shape: Shape::Plain(key.clone()), n: c.n, m: c.m, laplace });
                }
            });
        }
        if config.set_merge {
            let merged = merge_candidates(&candidates, &interner);
            candidates.extend(merged);
        }
        let Some(best) = select(&candidates, &interner, width) else {
            break;
        };
        for &p in &uncovered {
            if best.matches(&rows[positives[p]]) {
                covered[p] = true;
            }
        }
        rules.push(Rule { pattern: interner.pattern(width, &best.shape), n: best.n, m: best.m });
    }

    let uncovered = covered.iter().filter(|c| !**c).count();
    let schema = schema.iter().map(|s| s.to_string()).collect();
    let ruleset = RuleSet::new(label, schema, rules, config.min_laplace)
        .expect("learned rules satisfy the schema and threshold");
    Ok(Learned { ruleset, uncovered, positives: positives.len() })
}

/// Groups candidates that differ only in one slot's literal and folds each
/// group into a value-set candidate. Members are taken best-first; the merge
/// keeps the longest prefix whose ratio still reaches the best member's.
fn merge_candidates(candidates: &[Candidate], interner: &Interner) -> Vec<Candidate> {
    type Member = (Lit, u64, u64, Laplace);
    let mut groups: FxHashMap<(Key, usize), Vec<Member>> = FxHashMap::default();
    for c in candidates {
        let Shape::Plain(key) = &c.shape else { continue };
        for (i, &lit) in key.iter().enumerate() {
            let mut base = key.clone();
            base.remove(i);
            groups.entry((base, slot_of(lit))).or_default().push((lit, c.n, c.m, c.laplace));
        }
    }
    let mut out = Vec::new();
    for ((base, slot), mut members) in groups {
        if members.len() < 2 {
            continue;
        }
        members.sort_by(|a, b| {
            b.3.cmp(&a.3).then(b.1.cmp(&a.1)).then_with(|| interner.value(a.0).cmp(interner.value(b.0)))
        });
        let best = members[0].3;
        let (mut n, mut m) = (members[0].1, members[0].2);
        let mut keep = None;
        for (j, member) in members.iter().enumerate().skip(1) {
            n += member.1;
            m += member.2;
            let l = Laplace::new(n, m).expect("sum of non-empty counts");
            if l >= best {
                keep = Some((j + 1, n, m, l));
            }
        }
        if let Some((len, n, m, laplace)) = keep {
            let values = members[..len].iter().map(|x| x.0).collect();
            out.push(Candidate { shape: Shape::Merged { base, slot, values }, n, m, laplace });
        }
    }
    out
}

/// Highest ratio, then more matches, then fewer literals, then the
/// lexicographically smallest pattern text.
fn select(candidates: &[Candidate], interner: &Interner, width: usize) -> Option<Candidate> {
    let mut best: Option<&Candidate> = None;
    for c in candidates {
        let better = match best {
            None => true,
            Some(b) => match c
                .laplace
                .cmp(&b.laplace)
                .then(c.n.cmp(&b.n))
                .then(b.literals().cmp(&c.literals()))
            {
                Ordering::Greater => true,
                Ordering::Less => false,
                Ordering::Equal => {
                    interner.pattern(width, &c.shape).to_string() < interner.pattern(width, &b.shape).to_string()
                }
            },
        };
        if better {
            best = Some(c);
        }
    }
    best.cloned()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::TARGET_SCHEMA;

    fn window(curr_lemma: &str, filler: &str) -> Vec<String> {
        let mut v: Vec<String> = (0..10).map(|i| format!("{filler}{i}")).collect();
        v[3] = curr_lemma.to_string();
        v
    }

    #[test]
    fn single_clean_lemma() {
        let mut examples = Vec::new();
        for i in 0..10 {
            examples.push((window("stint", &format!("p{i}_")), true));
        }
        for i in 0..90 {
            examples.push((window(&format!("neg{}", i % 7), &format!("n{i}_")), false));
        }
        let learned = learn_ruleset(&examples, "Being_employed", &TARGET_SCHEMA, &LearnerConfig::default()).unwrap();
        assert_eq!(learned.uncovered, 0);
        let rules = &learned.ruleset.rules;
        assert_eq!(rules.len(), 1);
        assert_eq!(rules[0].pattern.to_string(), "[_, _, _, stint, _, _, _, _, _, _]");
        assert_eq!((rules[0].n, rules[0].m), (10, 0));
        let l = rules[0].laplace();
        assert_eq!((l.numerator(), l.denominator()), (11, 12));
    }

    fn shared(lemma: &str) -> Vec<String> {
        let mut v: Vec<String> = vec!["ctx".to_string(); 10];
        v[3] = lemma.into();
        v
    }

    #[test]
    fn hire_then_recruit_without_merging() {
        let mut examples = Vec::new();
        for _ in 0..6 {
            examples.push((shared("hire"), true));
        }
        for _ in 0..4 {
            examples.push((shared("recruit"), true));
        }
        examples.push((shared("recruit"), false));
        for i in 0..30 {
            examples.push((shared(&format!("other{}", i % 5)), false));
        }
        let config = LearnerConfig { set_merge: false, ..LearnerConfig::default() };
        let learned = learn_ruleset(&examples, "Hiring", &TARGET_SCHEMA, &config).unwrap();
        let rules = &learned.ruleset.rules;
        assert_eq!(rules.len(), 2);
        assert_eq!(rules[0].pattern.slots[3], SlotConstraint::Literal("hire".into()));
        assert_eq!(rules[0].pattern.literal_count(), 1);
        assert_eq!(rules[0].laplace(), Laplace::new(6, 0).unwrap());
        assert_eq!((rules[1].n, rules[1].m), (5, 1));
        assert_eq!(rules[1].pattern.slots[3], SlotConstraint::Literal("recruit".into()));
        assert_eq!(rules[1].laplace(), Laplace::new(5, 1).unwrap());
        assert_eq!(learned.uncovered, 0);
    }

    #[test]
    fn merging_builds_value_sets() {
        let mut examples = Vec::new();
        for lemma in ["avenge", "retaliate", "avenger"] {
            for _ in 0..3 {
                examples.push((shared(lemma), true));
            }
        }
        for i in 0..20 {
            examples.push((shared(&format!("other{}", i % 4)), false));
        }
        let learned = learn_ruleset(&examples, "Revenge", &TARGET_SCHEMA, &LearnerConfig::default()).unwrap();
        let rules = &learned.ruleset.rules;
        assert_eq!(rules.len(), 1);
        assert_eq!(
            rules[0].pattern.slots[3],
            SlotConstraint::ValueSet(vec!["avenge".into(), "avenger".into(), "retaliate".into()])
        );
        assert_eq!((rules[0].n, rules[0].m), (9, 0));
    }

    #[test]
    fn hopeless_positive_stays_uncovered() {
        let mut examples = vec![(shared("common"), true)];
        for _ in 0..20 {
            examples.push((shared("common"), false));
        }
        let learned = learn_ruleset(&examples, "X", &TARGET_SCHEMA, &LearnerConfig::default()).unwrap();
        assert!(learned.ruleset.rules.is_empty());
        assert_eq!(learned.uncovered, 1);
    }

    #[test]
    fn no_positives_is_an_error() {
        let examples = vec![(shared("a"), false)];
        assert_eq!(
            learn_ruleset(&examples, "X", &TARGET_SCHEMA, &LearnerConfig::default()),
            Err(LearnError::NoPositives("X".into()))
        );
    }

    #[test]
    fn bad_config_is_rejected() {
        let examples = vec![(shared("a"), true)];
        let config = LearnerConfig { max_literals: 0, ..LearnerConfig::default() };
        assert!(matches!(learn_ruleset(&examples, "X", &TARGET_SCHEMA, &config), Err(LearnError::Config(_))));
    }

    #[test]
    fn subsets_are_complete() {
        let mut seen = Vec::new();
        for_each_subset(&[1, 2, 3, 4], 2, &mut |k| seen.push(k.to_vec()));
        assert_eq!(seen.len(), 1 + 4 + 6);
    }
}
