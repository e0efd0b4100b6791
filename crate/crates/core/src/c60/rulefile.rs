//! Human-editable rule files.
//!
//! ```text
//! label=Revenge
//! schema=prev.lemma,prev.pos,prev.ner,curr.lemma,...
//! threshold=0.66
//! [_, MD, _, get, _, _, _, _, RB, _]    23    3    84%
//! ```
//!
//! Rows are pattern, matches, false positives and percent, tab-separated.
//! Each slot is `_`, a bare value, or `{v1, v2, ...}`. Values that are empty,
//! equal to `_`, or contain whitespace, quotes, backslashes, or any of
//! `,{}[]` are written double-quoted with backslash escapes. Blank lines and
//! lines starting with `#` after the header are ignored.

use std::path::Path;

use thiserror::Error;

use super::laplace::Laplace;
use super::pattern::{write_value, Pattern, Rule, RuleSet, RuleSetError, SlotConstraint};
use crate::error::Error;

#[derive(Debug, Clone, PartialEq, Error)]
#[error("line {line}: {kind}")]
pub struct RuleFileError {
    pub line: usize,
    pub kind: RuleFileErrorKind,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum RuleFileErrorKind {
    #[error("expected header `{0}=`")]
    MissingHeader(&'static str),
    #[error("bad threshold `{0}`")]
    BadThreshold(String),
    #[error("empty schema")]
    EmptySchema,
    #[error("syntax error: {0}")]
    Syntax(String),
    #[error("row has {found} slots, schema has {expected}")]
    SchemaLength { expected: usize, found: usize },
    #[error("bad counts n={n} m={m}")]
    BadCounts { n: u64, m: u64 },
    #[error("stated {stated}% disagrees with laplace({n}, {m}) = {exact}")]
    Inconsistent { n: u64, m: u64, stated: u64, exact: String },
    #[error(transparent)]
    RuleSet(#[from] RuleSetError),
}

pub fn serialize_ruleset(rs: &RuleSet) -> String {
    let mut out = format!("label={}\nschema={}\nthreshold={}\n", rs.label, rs.schema.join(","), rs.threshold);
    for rule in &rs.rules {
        out.push_str(&format!("{}\t{}\t{}\t{}%\n", rule.pattern, rule.n, rule.m, rule.laplace().percent()));
    }
    out
}

pub fn parse_ruleset(text: &str) -> Result<RuleSet, RuleFileError> {
    let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l.strip_suffix('\r').unwrap_or(l)));

    let mut header = |key: &'static str| -> Result<(usize, String), RuleFileError> {
        let (line, l) = lines.next().ok_or(RuleFileError { line: 0, kind: RuleFileErrorKind::MissingHeader(key) })?;
        l.strip_prefix(key)
            .and_then(|rest| rest.strip_prefix('='))
            .map(|v| (line, v.to_string()))
            .ok_or(RuleFileError { line, kind: RuleFileErrorKind::MissingHeader(key) })
    };
    let (_, label) = header("label")?;
    let (schema_line, schema) = header("schema")?;
    let schema: Vec<String> = schema.split(',').map(|s| s.trim().to_string()).collect();
    if schema.iter().any(String::is_empty) {
        return Err(RuleFileError { line: schema_line, kind: RuleFileErrorKind::EmptySchema });
    }
    let (threshold_line, threshold_text) = header("threshold")?;
    let threshold: f64 = threshold_text
        .trim()
        .parse()
        .ok()
        .filter(|t: &f64| (0.0..1.0).contains(t))
        .ok_or(RuleFileError { line: threshold_line, kind: RuleFileErrorKind::BadThreshold(threshold_text) })?;

    let mut rules = Vec::new();
    let mut last_line = threshold_line;
    for (line, l) in lines {
        last_line = line;
        if l.trim().is_empty() || l.starts_with('#') {
            continue;
        }
        let err = |kind| RuleFileError { line, kind };
        let rule = parse_row(l, schema.len()).map_err(err)?;
        if !rule.laplace().at_least(threshold) {
            return Err(err(RuleSetError::BelowThreshold { index: rules.len(), laplace: rule.laplace(), threshold }.into()));
        }
        rules.push(rule);
    }
    RuleSet::new(label, schema, rules, threshold).map_err(|e| RuleFileError { line: last_line, kind: e.into() })
}

fn parse_row(line: &str, schema_len: usize) -> Result<Rule, RuleFileErrorKind> {
    let mut cur = Cursor { chars: line.char_indices().peekable(), src: line };
    let slots = cur.pattern()?;
    if slots.len() != schema_len {
        return Err(RuleFileErrorKind::SchemaLength { expected: schema_len, found: slots.len() });
    }
    let rest = cur.rest();
    let fields: Vec<&str> = rest.split('\t').collect();
    let syntax = |m: &str| RuleFileErrorKind::Syntax(m.to_string());
    if fields.len() != 4 || !fields[0].is_empty() {
        return Err(syntax("expected `<pattern>\\tn\\tm\\t<percent>%`"));
    }
    let n: u64 = fields[1].trim().parse().map_err(|_| syntax("bad n"))?;
    let m: u64 = fields[2].trim().parse().map_err(|_| syntax("bad m"))?;
    let stated: u64 = fields[3]
        .trim()
        .strip_suffix('%')
        .and_then(|p| p.parse().ok())
        .ok_or_else(|| syntax("bad laplace percent"))?;
    let laplace = Laplace::new(n, m).map_err(|_| RuleFileErrorKind::BadCounts { n, m })?;
    if !laplace.agrees_with_percent(stated) {
        return Err(RuleFileErrorKind::Inconsistent {
            n,
            m,
            stated,
            exact: format!("{}/{}", laplace.numerator(), laplace.denominator()),
        });
    }
    Ok(Rule { pattern: Pattern::new(slots), n, m })
}

struct Cursor<'a> {
    chars: std::iter::Peekable<std::str::CharIndices<'a>>,
    src: &'a str,
}

impl Cursor<'_> {
    fn syntax(&self, m: &str) -> RuleFileErrorKind {
        RuleFileErrorKind::Syntax(m.to_string())
    }

    fn skip_spaces(&mut self) {
        while self.chars.next_if(|(_, c)| *c == ' ').is_some() {}
    }

    fn expect(&mut self, want: char) -> Result<(), RuleFileErrorKind> {
        match self.chars.next() {
            Some((_, c)) if c == want => Ok(()),
            _ => Err(self.syntax(&format!("expected `{want}`"))),
        }
    }

    fn rest(&mut self) -> &str {
        match self.chars.peek() {
            Some((i, _)) => &self.src[*i..],
            None => "",
        }
    }

    fn pattern(&mut self) -> Result<Vec<SlotConstraint>, RuleFileErrorKind> {
        self.expect('[')?;
        let mut slots = Vec::new();
        self.skip_spaces();
        if self.chars.next_if(|(_, c)| *c == ']').is_some() {
            return Ok(slots);
        }
        loop {
            self.skip_spaces();
            slots.push(self.slot()?);
            self.skip_spaces();
            match self.chars.next() {
                Some((_, ',')) => continue,
                Some((_, ']')) => return Ok(slots),
                _ => return Err(self.syntax("expected `,` or `]`")),
            }
        }
    }

    fn slot(&mut self) -> Result<SlotConstraint, RuleFileErrorKind> {
        match self.chars.peek().map(|(_, c)| *c) {
            Some('{') => {
                self.chars.next();
                let mut values = Vec::new();
                loop {
                    self.skip_spaces();
                    let (v, quoted) = self.value()?;
                    if v == "_" && !quoted {
                        return Err(self.syntax("wildcard inside a value set"));
                    }
                    values.push(v);
                    self.skip_spaces();
                    match self.chars.next() {
                        Some((_, ',')) => continue,
                        Some((_, '}')) => break,
                        _ => return Err(self.syntax("expected `,` or `}`")),
                    }
                }
                let distinct = {
                    let mut v = values.clone();
                    v.sort();
                    v.dedup();
                    v.len()
                };
                if distinct != values.len() || values.len() < 2 {
                    return Err(self.syntax("a value set needs at least two distinct values"));
                }
                Ok(SlotConstraint::ValueSet(values))
            }
            Some('"') => Ok(SlotConstraint::Literal(self.value()?.0)),
            _ => {
                let (v, _) = self.value()?;
                Ok(if v == "_" { SlotConstraint::Wildcard } else { SlotConstraint::Literal(v) })
            }
        }
    }

    /// Reads one value; the flag tells whether it was quoted.
    fn value(&mut self) -> Result<(String, bool), RuleFileErrorKind> {
        let mut out = String::new();
        if self.chars.next_if(|(_, c)| *c == '"').is_some() {
            loop {
                match self.chars.next() {
                    Some((_, '"')) => return Ok((out, true)),
                    Some((_, '\\')) => match self.chars.next() {
                        Some((_, '"')) => out.push('"'),
                        Some((_, '\\')) => out.push('\\'),
                        Some((_, 'n')) => out.push('\n'),
                        Some((_, 't')) => out.push('\t'),
                        Some((_, 'r')) => out.push('\r'),
                        _ => return Err(self.syntax("bad escape")),
                    },
                    Some((_, c)) => out.push(c),
                    None => return Err(self.syntax("unterminated quote")),
                }
            }
        }
        while let Some((_, c)) =
            self.chars.next_if(|(_, c)| !c.is_whitespace() && !matches!(c, ',' | '{' | '}' | '[' | ']' | '"'))
        {
            out.push(c);
        }
        if out.is_empty() {
            return Err(self.syntax("expected a value"));
        }
        // Bare values never need escaping; anything that would is quoted.
        let mut check = String::new();
        write_value(&mut check, &out);
        if out != "_" && check != out {
            return Err(self.syntax("value must be quoted"));
        }
        Ok((out, false))
    }
}

pub fn load_ruleset(path: impl AsRef<Path>) -> Result<RuleSet, Error> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_ruleset(&text).map_err(|e| Error::format(path, e.line, e.kind))
}

pub fn save_ruleset(path: impl AsRef<Path>, rs: &RuleSet) -> Result<(), Error> {
    let path = path.as_ref();
    std::fs::write(path, serialize_ruleset(rs)).map_err(|e| Error::io(path, e))
}
