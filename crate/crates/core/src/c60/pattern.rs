use std::fmt;

use thiserror::Error;

use super::laplace::Laplace;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
#[error("feature vector has {found} slots, schema expects {expected}")]
pub struct SchemaMismatch {
    pub expected: usize,
    pub found: usize,
}

/// Constraint on one feature slot.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum SlotConstraint {
    Wildcard,
    Literal(String),
    /// At least two distinct values, in display order.
    ValueSet(Vec<String>),
}

impl SlotConstraint {
    /// Builds a set constraint, dropping duplicates. A single value becomes a
    /// literal; no values gives `None`.
    pub fn value_set<I, S>(values: I) -> Option<SlotConstraint>
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let mut out: Vec<String> = Vec::new();
        for v in values {
            let v = v.into();
            if !out.contains(&v) {
                out.push(v);
            }
        }
        match out.len() {
            0 => None,
            1 => out.pop().map(SlotConstraint::Literal),
            _ => Some(SlotConstraint::ValueSet(out)),
        }
    }

    pub fn accepts(&self, value: &str) -> bool {
        match self {
            SlotConstraint::Wildcard => true,
            SlotConstraint::Literal(v) => v == value,
            SlotConstraint::ValueSet(vs) => vs.iter().any(|v| v == value),
        }
    }

    pub fn is_wildcard(&self) -> bool {
        matches!(self, SlotConstraint::Wildcard)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Pattern {
    pub slots: Vec<SlotConstraint>,
}

impl Pattern {
    pub fn new(slots: Vec<SlotConstraint>) -> Self {
        Pattern { slots }
    }

    pub fn wildcard(len: usize) -> Self {
        Pattern { slots: vec![SlotConstraint::Wildcard; len] }
    }

    pub fn len(&self) -> usize {
        self.slots.len()
    }

    pub fn is_empty(&self) -> bool {
        self.slots.is_empty()
    }

    /// Number of non-wildcard slots.
    pub fn literal_count(&self) -> usize {
        self.slots.iter().filter(|s| !s.is_wildcard()).count()
    }

    pub fn matches<S: AsRef<str>>(&self, fv: &[S]) -> Result<bool, SchemaMismatch> {
        if fv.len() != self.slots.len() {
            return Err(SchemaMismatch { expected: self.slots.len(), found: fv.len() });
        }
        Ok(self.slots.iter().zip(fv).all(|(c, v)| c.accepts(v.as_ref())))
    }
}

pub(crate) fn needs_quotes(value: &str) -> bool {
    value.is_empty()
        || value == "_"
        || value
            .chars()
            .any(|c| c.is_whitespace() || matches!(c, ',' | '{' | '}' | '[' | ']' | '"' | '\\'))
}

pub(crate) fn write_value(out: &mut String, value: &str) {
    if !needs_quotes(value) {
        out.push_str(value);
        return;
    }
    out.push('"');
    for c in value.chars() {
        match c {
            '"' => out.push_str("\\\""),
            '\\' => out.push_str("\\\\"),
            '\n' => out.push_str("\\n"),
            '\t' => out.push_str("\\t"),
            '\r' => out.push_str("\\r"),
            c => out.push(c),
        }
    }
    out.push('"');
}

impl fmt::Display for SlotConstraint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut out = String::new();
        match self {
            SlotConstraint::Wildcard => out.push('_'),
            SlotConstraint::Literal(v) => write_value(&mut out, v),
            SlotConstraint::ValueSet(vs) => {
                out.push('{');
                for (i, v) in vs.iter().enumerate() {
                    if i > 0 {
                        out.push_str(", ");
                    }
                    write_value(&mut out, v);
                }
                out.push('}');
            }
        }
        f.write_str(&out)
    }
}

impl fmt::Display for Pattern {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("[")?;
        for (i, s) in self.slots.iter().enumerate() {
            if i > 0 {
                f.write_str(", ")?;
            }
            write!(f, "{s}")?;
        }
        f.write_str("]")
    }
}

/// A pattern with its training counts.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Rule {
    pub pattern: Pattern,
    /// Training exemplars matched.
    pub n: u64,
    /// False positives among them.
    pub m: u64,
}

impl Rule {
    pub fn new(pattern: Pattern, n: u64, m: u64) -> Result<Self, super::LaplaceError> {
        Laplace::new(n, m)?;
        Ok(Rule { pattern, n, m })
    }

    pub fn laplace(&self) -> Laplace {
        Laplace::new(self.n, self.m).expect("rule counts validated at construction")
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum RuleSetError {
    #[error("rule {index} has {found} slots, schema has {expected}")]
    SchemaLength { index: usize, expected: usize, found: usize },
    #[error("rule {index} laplace {laplace} is below threshold {threshold}")]
    BelowThreshold { index: usize, laplace: Laplace, threshold: f64 },
    #[error("threshold {0} outside [0, 1)")]
    BadThreshold(f64),
}

/// Rules for one classification label, kept in discovery order.
#[derive(Debug, Clone, PartialEq)]
pub struct RuleSet {
    pub label: String,
    pub schema: Vec<String>,
    pub rules: Vec<Rule>,
    pub threshold: f64,
}

impl RuleSet {
    pub fn new(
        label: impl Into<String>,
        schema: Vec<String>,
        rules: Vec<Rule>,
        threshold: f64,
    ) -> Result<Self, RuleSetError> {
        if !(0.0..1.0).contains(&threshold) {
            return Err(RuleSetError::BadThreshold(threshold));
        }
        for (index, rule) in rules.iter().enumerate() {
            if rule.pattern.len() != schema.len() {
                return Err(RuleSetError::SchemaLength {
                    index,
                    expected: schema.len(),
                    found: rule.pattern.len(),
                });
            }
            let laplace = rule.laplace();
            if !laplace.at_least(threshold) {
                return Err(RuleSetError::BelowThreshold { index, laplace, threshold });
            }
        }
        Ok(RuleSet { label: label.into(), schema, rules, threshold })
    }

    /// Highest Laplace ratio among matching rules, if any rule matches.
    pub fn classify<S: AsRef<str>>(&self, fv: &[S]) -> Result<Option<Laplace>, SchemaMismatch> {
        if fv.len() != self.schema.len() {
            return Err(SchemaMismatch { expected: self.schema.len(), found: fv.len() });
        }
        let mut best: Option<Laplace> = None;
        for rule in &self.rules {
            if rule.pattern.matches(fv)? {
                let l = rule.laplace();
                if best.is_none_or(|b| l > b) {
                    best = Some(l);
                }
            }
        }
        Ok(best)
    }
}

/// Free-function form of [`RuleSet::classify`].
pub fn classify<S: AsRef<str>>(ruleset: &RuleSet, fv: &[S]) -> Result<Option<Laplace>, SchemaMismatch> {
    ruleset.classify(fv)
}

pub fn match_pattern<S: AsRef<str>>(pattern: &Pattern, fv: &[S]) -> Result<bool, SchemaMismatch> {
    pattern.matches(fv)
}
