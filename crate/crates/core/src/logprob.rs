//! Log-space probabilities with an explicit log-zero.
//!
//! Deterministic CPT rows put exact zeros into almost every model this crate
//! touches. `LogProb` keeps those zeros out of IEEE arithmetic: adding a
//! log-zero to anything yields log-zero, and comparisons treat it as smaller
//! than every finite value. The raw `-inf` is only ever produced by
//! [`LogProb::to_f64`] for callers that explicitly ask for it.

use std::cmp::Ordering;
use std::fmt;
use std::iter::Sum;
use std::ops::{Add, Sub};

/// The natural log of a non-negative probability (or unnormalized weight).
#[derive(Clone, Copy)]
pub struct LogProb(Option<f64>);

impl LogProb {
    /// `log 0`.
    pub const ZERO: LogProb = LogProb(None);
    /// `log 1`.
    pub const ONE: LogProb = LogProb(Some(0.0));

    /// From a value already in log space. `-inf` maps to log-zero; NaN and
    /// `+inf` are rejected with `None`.
    pub fn from_log(x: f64) -> Option<LogProb> {
        if x == f64::NEG_INFINITY {
            Some(LogProb::ZERO)
        } else if x.is_finite() {
            Some(LogProb(Some(x)))
        } else {
            None
        }
    }

    /// From a probability-scale value `p >= 0`.
    pub fn from_prob(p: f64) -> Option<LogProb> {
        if p == 0.0 {
            Some(LogProb::ZERO)
        } else if p > 0.0 && p.is_finite() {
            Some(LogProb(Some(p.ln())))
        } else {
            None
        }
    }

    pub fn is_zero(self) -> bool {
        self.0.is_none()
    }

    /// The finite log value, or `None` for log-zero.
    pub fn value(self) -> Option<f64> {
        self.0
    }

    /// `-inf` for log-zero. Only use this at the boundary to float code.
    pub fn to_f64(self) -> f64 {
        self.0.unwrap_or(f64::NEG_INFINITY)
    }

    pub fn exp(self) -> f64 {
        self.0.map_or(0.0, f64::exp)
    }
}

impl Add for LogProb {
    type Output = LogProb;
    /// Product in probability space.
    fn add(self, rhs: LogProb) -> LogProb {
        match (self.0, rhs.0) {
            (Some(a), Some(b)) => LogProb(Some(a + b)),
            _ => LogProb::ZERO,
        }
    }
}

impl Sub for LogProb {
    type Output = LogProb;
    /// Ratio in probability space. Dividing by log-zero is a logic error and
    /// yields log-zero rather than a NaN.
    fn sub(self, rhs: LogProb) -> LogProb {
        match (self.0, rhs.0) {
            (Some(a), Some(b)) => LogProb(Some(a - b)),
            _ => LogProb::ZERO,
        }
    }
}

impl Sum for LogProb {
    fn sum<I: Iterator<Item = LogProb>>(iter: I) -> LogProb {
        let mut acc = 0.0;
        for lp in iter {
            match lp.0 {
                Some(x) => acc += x,
                None => return LogProb::ZERO,
            }
        }
        LogProb(Some(acc))
    }
}

impl PartialEq for LogProb {
    fn eq(&self, other: &Self) -> bool {
        self.0 == other.0
    }
}

impl PartialOrd for LogProb {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        match (self.0, other.0) {
            (None, None) => Some(Ordering::Equal),
            (None, Some(_)) => Some(Ordering::Less),
            (Some(_), None) => Some(Ordering::Greater),
            (Some(a), Some(b)) => a.partial_cmp(&b),
        }
    }
}

impl fmt::Debug for LogProb {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.0 {
            Some(x) => write!(f, "LogProb({x})"),
            None => write!(f, "LogProb(zero)"),
        }
    }
}

impl fmt::Display for LogProb {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.0 {
            Some(x) => write!(f, "{x}"),
            None => write!(f, "-inf"),
        }
    }
}

/// `log Σ exp(xᵢ)` with max-shift. Log-zero terms contribute nothing; an
/// all-zero (or empty) input gives log-zero.
pub fn log_sum_exp(terms: &[LogProb]) -> LogProb {
    let max = terms.iter().filter_map(|t| t.0).fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return LogProb::ZERO;
    }
    let s: f64 = terms.iter().filter_map(|t| t.0).map(|x| (x - max).exp()).sum();
    LogProb(Some(max + s.ln()))
}

/// `log Σ exp(xᵢ)` over raw floats; `-inf` entries are skipped.
pub fn log_sum_exp_f64(terms: &[f64]) -> f64 {
    let max = terms.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    max + terms.iter().map(|&x| (x - max).exp()).sum::<f64>().ln()
}

/// Normalizes log weights into probabilities in place of a new vector.
/// Returns `None` when every weight is log-zero.
pub fn normalize_logs(logs: &[LogProb]) -> Option<Vec<f64>> {
    let z = log_sum_exp(logs);
    let zv = z.value()?;
    Some(logs.iter().map(|l| l.value().map_or(0.0, |x| (x - zv).exp())).collect())
}
