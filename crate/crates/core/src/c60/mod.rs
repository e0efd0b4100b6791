//! Human-readable rule sets learned by exhaustive pattern search and scored
//! with the Laplace ratio.

mod laplace;
mod learner;
mod pattern;
mod rulefile;

pub use laplace::{laplace, Laplace, LaplaceError};
pub use learner::{learn_ruleset, LearnError, Learned, LearnerConfig};
pub use pattern::{classify, match_pattern, Pattern, Rule, RuleSet, RuleSetError, SchemaMismatch, SlotConstraint};
pub use rulefile::{load_ruleset, parse_ruleset, save_ruleset, serialize_ruleset, RuleFileError, RuleFileErrorKind};
