use std::cmp::Ordering;
use std::fmt;

use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
pub enum LaplaceError {
    #[error("a rule must match at least one exemplar")]
    NoMatches,
    #[error("false positives ({m}) exceed matches ({n})")]
    TooManyFalsePositives { n: u64, m: u64 },
}

/// Laplace accuracy estimate `(n - m + 1) / (n + 2)` of a rule that matches
/// `n` training exemplars, `m` of them false positives. Kept as an exact
/// rational; equality and ordering compare the ratio, not the parts.
#[derive(Debug, Clone, Copy)]
pub struct Laplace {
    num: u64,
    den: u64,
}

impl Laplace {
    pub fn new(n: u64, m: u64) -> Result<Self, LaplaceError> {
        if n == 0 {
            return Err(LaplaceError::NoMatches);
        }
        if m > n {
            return Err(LaplaceError::TooManyFalsePositives { n, m });
        }
        Ok(Laplace { num: n - m + 1, den: n + 2 })
    }

    pub fn numerator(&self) -> u64 {
        self.num
    }

    pub fn denominator(&self) -> u64 {
        self.den
    }

    pub fn value(&self) -> f64 {
        self.num as f64 / self.den as f64
    }

    /// Integer percent, rounding halves up.
    pub fn percent(&self) -> u64 {
        (200 * self.num + self.den) / (2 * self.den)
    }

    /// Whether a displayed percent is within rounding of the exact ratio.
    pub fn agrees_with_percent(&self, percent: u64) -> bool {
        let exact = 100 * self.num as u128;
        let shown = percent as u128 * self.den as u128;
        2 * exact.abs_diff(shown) <= self.den as u128
    }

    pub fn at_least(&self, threshold: f64) -> bool {
        self.value() >= threshold
    }
}

/// `laplace(n, m)`, the free-function form.
pub fn laplace(n: u64, m: u64) -> Result<Laplace, LaplaceError> {
    Laplace::new(n, m)
}

impl PartialEq for Laplace {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Laplace {}

impl PartialOrd for Laplace {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Laplace {
    fn cmp(&self, other: &Self) -> Ordering {
        (self.num as u128 * other.den as u128).cmp(&(other.num as u128 * self.den as u128))
    }
}

impl fmt::Display for Laplace {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}%", self.percent())
    }
}
