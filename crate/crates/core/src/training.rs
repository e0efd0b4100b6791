//! Turning annotated corpora into classifier examples and rule sets.
//!
//! Target stage: every token of every sentence is one example per frame,
//! positive when it starts a target of that frame. Frame-element stage: for
//! each target of a frame, every other token of its sentence is an example
//! per element, positive when it lies inside that element's span.

use std::collections::{BTreeMap, BTreeSet};

use rayon::prelude::*;

use crate::c60::{learn_ruleset, LearnError, Learned, LearnerConfig};
use crate::corpus::{extract_fe_window, extract_window, FeFeatureVector, FeatureVector, Sentence, FE_SCHEMA, TARGET_SCHEMA};
use crate::parser::{fe_label, ParserModel};
use crate::registry::FrameRegistry;

/// Every token window of a corpus with the frames whose targets start there.
#[derive(Debug, Clone, Default)]
pub struct TargetTable {
    pub windows: Vec<FeatureVector>,
    pub frames: Vec<BTreeSet<String>>,
}

impl TargetTable {
    pub fn build(sentences: &[Sentence]) -> Self {
        let mut t = TargetTable::default();
        for s in sentences {
            for i in 0..s.len() {
                t.windows.push(extract_window(s, i).expect("index in range"));
                t.frames.push(
                    s.annotations.iter().filter(|a| a.target.start == i).map(|a| a.frame.clone()).collect(),
                );
            }
        }
        t
    }

    pub fn examples(&self, frame: &str) -> Vec<(&FeatureVector, bool)> {
        self.windows.iter().zip(&self.frames).map(|(w, f)| (w, f.contains(frame))).collect()
    }

    /// Frames with at least one target, in name order.
    pub fn frame_names(&self) -> BTreeSet<&str> {
        self.frames.iter().flatten().map(String::as_str).collect()
    }
}

/// Frame-element windows of one frame, with the element covering each token.
#[derive(Debug, Clone, Default)]
pub struct ElementTable {
    pub windows: Vec<FeFeatureVector>,
    pub labels: Vec<Option<String>>,
}

impl ElementTable {
    pub fn build(sentences: &[Sentence], frame: &str) -> Self {
        let mut t = ElementTable::default();
        for s in sentences {
            for a in s.annotations.iter().filter(|a| a.frame == frame) {
                let target = a.target.start;
                for i in (0..s.len()).filter(|&i| i != target) {
                    t.windows.push(extract_fe_window(s, i, target).expect("indices in range"));
                    t.labels.push(a.elements.iter().find(|e| e.span.contains(i)).map(|e| e.fe.clone()));
                }
            }
        }
        t
    }

    pub fn examples(&self, fe: &str) -> Vec<(&FeFeatureVector, bool)> {
        self.windows.iter().zip(&self.labels).map(|(w, l)| (w, l.as_deref() == Some(fe))).collect()
    }

    pub fn element_names(&self) -> BTreeSet<&str> {
        self.labels.iter().flatten().map(String::as_str).collect()
    }
}

/// Checks that every gold annotation names registered frames and elements
/// and has sane spans. Returns the first problem found.
pub fn check_annotations(sentences: &[Sentence], registry: &FrameRegistry) -> Result<(), String> {
    for (i, s) in sentences.iter().enumerate() {
        for a in &s.annotations {
            registry.check_annotation(a).map_err(|m| format!("sentence {i} ({}): {m}", s.doc_id))?;
            a.check_spans(s.len()).map_err(|m| format!("sentence {i} ({}): {m}", s.doc_id))?;
        }
    }
    Ok(())
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub label: String,
    pub result: Result<Learned, LearnError>,
}

fn pool(jobs: usize) -> Option<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new().num_threads(jobs).build().ok()
}

fn run<T: Send>(jobs: usize, f: impl FnOnce() -> T + Send) -> T {
    match pool(jobs) {
        Some(p) => p.install(f),
        None => f(),
    }
}

/// Learns one target rule set per frame that has gold targets (restricted
/// to `frames` when given), in frame-name order.
pub fn train_targets(
    sentences: &[Sentence],
    frames: Option<&[String]>,
    config: &LearnerConfig,
    jobs: usize,
) -> Vec<TrainOutcome> {
    let table = TargetTable::build(sentences);
    let names: Vec<String> = match frames {
        Some(f) => f.iter().cloned().collect::<BTreeSet<_>>().into_iter().collect(),
        None => table.frame_names().into_iter().map(str::to_string).collect(),
    };
    run(jobs, || {
        names
            .par_iter()
            .map(|frame| TrainOutcome {
                label: frame.clone(),
                result: learn_ruleset(&table.examples(frame), frame, &TARGET_SCHEMA, config),
            })
            .collect()
    })
}

/// Learns one rule set per (frame, element) with gold spans, Time included.
pub fn train_elements(
    sentences: &[Sentence],
    frames: Option<&[String]>,
    config: &LearnerConfig,
    jobs: usize,
) -> Vec<TrainOutcome> {
    let all: BTreeSet<String> = sentences.iter().flat_map(|s| s.annotations.iter().map(|a| a.frame.clone())).collect();
    let names: Vec<String> = match frames {
        Some(f) => f.iter().filter(|f| all.contains(*f)).cloned().collect::<BTreeSet<_>>().into_iter().collect(),
        None => all.into_iter().collect(),
    };
    run(jobs, || {
        let tables: Vec<(String, ElementTable)> =
            names.par_iter().map(|f| (f.clone(), ElementTable::build(sentences, f))).collect();
        let jobs: Vec<(&str, &ElementTable, String)> = tables
            .iter()
            .flat_map(|(f, t)| t.element_names().into_iter().map(move |fe| (f.as_str(), t, fe.to_string())))
            .collect();
        jobs.par_iter()
            .map(|(frame, table, fe)| {
                let label = fe_label(frame, fe);
                let result = learn_ruleset(&table.examples(fe), &label, &FE_SCHEMA, config);
                TrainOutcome { label, result }
            })
            .collect()
    })
}

/// Trains both stages and assembles a model. Learner failures other than
/// "no positives" are returned as errors.
pub fn train_model(
    sentences: &[Sentence],
    registry: &FrameRegistry,
    config: &LearnerConfig,
    jobs: usize,
) -> Result<(ParserModel, Vec<TrainOutcome>), String> {
    check_annotations(sentences, registry)?;
    let mut model = ParserModel::new(registry.clone());
    let mut outcomes = train_targets(sentences, None, config, jobs);
    let element_outcomes = train_elements(sentences, None, config, jobs);
    for o in &outcomes {
        match &o.result {
            Ok(l) => model.insert_target(l.ruleset.clone()).map_err(|e| e.to_string())?,
            Err(LearnError::NoPositives(_)) => {}
            Err(e) => return Err(format!("{}: {e}", o.label)),
        }
    }
    for o in &element_outcomes {
        match &o.result {
            Ok(l) => model.insert_element(l.ruleset.clone()).map_err(|e| e.to_string())?,
            Err(LearnError::NoPositives(_)) => {}
            Err(e) => return Err(format!("{}: {e}", o.label)),
        }
    }
    outcomes.extend(element_outcomes);
    Ok((model, outcomes))
}

/// Per-label uncovered-positive counts, for reporting.
pub fn coverage_summary(outcomes: &[TrainOutcome]) -> BTreeMap<String, (usize, usize, usize)> {
    outcomes
        .iter()
        .filter_map(|o| o.result.as_ref().ok().map(|l| (o.label.clone(), (l.ruleset.rules.len(), l.positives, l.uncovered))))
        .collect()
}
