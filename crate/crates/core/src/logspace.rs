//! Nonnegative reals stored by their natural logarithm.
//!
//! Expected durations of supercritical SIS epidemics grow like `exp(cN)` and
//! overflow `f64` for populations in the high hundreds, so every series in
//! the analytic modules is accumulated here.

use serde::{Deserialize, Serialize};
use std::fmt;
use std::ops::{Add, AddAssign, Div, Mul};

#[inline]
pub fn log_add_exp(a: f64, b: f64) -> f64 {
    if a == f64::NEG_INFINITY {
        return b;
    }
    if b == f64::NEG_INFINITY {
        return a;
    }
    if a > b {
        a + (b - a).exp().ln_1p()
    } else {
        b + (a - b).exp().ln_1p()
    }
}

/// `exp(log_value)`, with `log_value = -inf` representing zero.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
pub struct LogWeight {
    pub log_value: f64,
}

impl LogWeight {
    pub const ZERO: LogWeight = LogWeight {
        log_value: f64::NEG_INFINITY,
    };
    pub const ONE: LogWeight = LogWeight { log_value: 0.0 };

    pub fn from_log(log_value: f64) -> Self {
        Self { log_value }
    }

    /// Panics on negative input.
    pub fn from_value(value: f64) -> Self {
        assert!(value >= 0.0, "LogWeight cannot hold negative value {value}");
        Self {
            log_value: value.ln(),
        }
    }

    pub fn ln(self) -> f64 {
        self.log_value
    }

    /// Linear value; `+inf` when it does not fit in an `f64`.
    pub fn value(self) -> f64 {
        self.log_value.exp()
    }

    pub fn is_zero(self) -> bool {
        self.log_value == f64::NEG_INFINITY
    }

    /// Linear value if it is finite and representable.
    pub fn checked_value(self) -> Option<f64> {
        let v = self.value();
        v.is_finite().then_some(v)
    }

    pub fn powi(self, k: i32) -> Self {
        Self::from_log(self.log_value * k as f64)
    }
}

impl Add for LogWeight {
    type Output = LogWeight;
    fn add(self, rhs: Self) -> Self {
        LogWeight::from_log(log_add_exp(self.log_value, rhs.log_value))
    }
}

impl AddAssign for LogWeight {
    fn add_assign(&mut self, rhs: Self) {
        self.log_value = log_add_exp(self.log_value, rhs.log_value);
    }
}

impl Mul for LogWeight {
    type Output = LogWeight;
    fn mul(self, rhs: Self) -> Self {
        LogWeight::from_log(self.log_value + rhs.log_value)
    }
}

impl Div for LogWeight {
    type Output = LogWeight;
    fn div(self, rhs: Self) -> Self {
        LogWeight::from_log(self.log_value - rhs.log_value)
    }
}

impl fmt::Display for LogWeight {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.checked_value() {
            Some(v) => write!(f, "{v:.6e}"),
            None => write!(f, "exp({:.6})", self.log_value),
        }
    }
}

/// Streaming log-sum-exp with a running maximum.
///
/// Terms are rescaled against the largest log seen so far, so summing
/// millions of terms costs one `exp` per term and never overflows.
#[derive(Debug, Clone, Copy)]
pub struct LogSum {
    max: f64,
    scaled: f64,
}

impl Default for LogSum {
    fn default() -> Self {
        Self {
            max: f64::NEG_INFINITY,
            scaled: 0.0,
        }
    }
}

impl LogSum {
    pub fn new() -> Self {
        Self::default()
    }

    #[inline]
    pub fn push_log(&mut self, log_term: f64) {
        if log_term == f64::NEG_INFINITY {
            return;
        }
        if log_term <= self.max {
            self.scaled += (log_term - self.max).exp();
        } else {
            self.scaled = self.scaled * (self.max - log_term).exp() + 1.0;
            self.max = log_term;
        }
    }

    pub fn total(&self) -> LogWeight {
        if self.max == f64::NEG_INFINITY {
            LogWeight::ZERO
        } else {
            LogWeight::from_log(self.max + self.scaled.ln())
        }
    }
}

impl Extend<f64> for LogSum {
    fn extend<I: IntoIterator<Item = f64>>(&mut self, iter: I) {
        for x in iter {
            self.push_log(x);
        }
    }
}

impl FromIterator<f64> for LogSum {
    fn from_iter<I: IntoIterator<Item = f64>>(iter: I) -> Self {
        let mut s = LogSum::new();
        s.extend(iter);
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    proptest! {
        #[test]
        fn log_add_exp_matches_linear(x in -30f64..30f64, y in -30f64..30f64) {
            let direct = (x.exp() + y.exp()).ln();
            prop_assert!((direct - log_add_exp(x, y)).abs() < 1e-12);
            prop_assert_eq!(log_add_exp(x, y), log_add_exp(y, x));
            prop_assert_eq!(log_add_exp(x, f64::NEG_INFINITY), x);
        }

        #[test]
        fn streaming_sum_matches_pairwise(terms in prop::collection::vec(-50f64..50f64, 1..200)) {
            let streamed = terms.iter().copied().collect::<LogSum>().total().ln();
            let pairwise = terms.iter().fold(f64::NEG_INFINITY, |acc, &t| log_add_exp(acc, t));
            prop_assert!((streamed - pairwise).abs() < 1e-11 * pairwise.abs().max(1.0));
        }
    }

    #[test]
    fn empty_and_zero_terms() {
        assert!(LogSum::new().total().is_zero());
        let mut s = LogSum::new();
        s.push_log(f64::NEG_INFINITY);
        assert!(s.total().is_zero());
        s.push_log(0.0);
        assert_eq!(s.total(), LogWeight::ONE);
    }

    #[test]
    fn huge_values_survive() {
        let s: LogSum = [1000.0, 1000.0].into_iter().collect();
        assert!((s.total().ln() - (1000.0 + 2f64.ln())).abs() < 1e-12);
        assert_eq!(s.total().checked_value(), None);
        assert_eq!(format!("{}", s.total()), "exp(1000.693147)");
    }
}
