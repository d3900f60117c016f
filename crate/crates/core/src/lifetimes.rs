//! Mean-one lifetime laws.
//!
//! Every family is parameterized so that `E[Q] = 1` holds by construction;
//! parameters are checked once in the constructors and never at sampling
//! time. The text form (`exp`, `det`, `gamma:k=2`, `unif:w=0.5`,
//! `twopoint:a=0.5,p=0.5`) round-trips through [`FromStr`] and [`Display`].
//!
//! Residual (equilibrium excess-life) draws use the identity that the excess
//! life equals `U * Q*`, where `U ~ Uniform(0,1)` and `Q*` is the
//! length-biased version of `Q` (density `x f(x)` for mean-one `Q`). The
//! length-biased law is closed-form for every family here:
//!
//! | family | `Q*` |
//! |---|---|
//! | Exponential | drawn directly as `Exp(1)` (memoryless) |
//! | Deterministic | `1`, so the residual is `Uniform(0,1)` |
//! | Gamma(k, rate k) | Gamma(k + 1, rate k) |
//! | Uniform[1-w, 1+w] | inverse CDF `sqrt((1-w)^2 + 4wu)` |
//! | TwoPoint(a, p) | `a` w.p. `pa`, `b` otherwise |

use rand::Rng;
use rand_distr::{Distribution, Exp1, Gamma};
use serde::{Deserialize, Serialize};
use std::fmt;
use std::str::FromStr;

use crate::error::{invalid, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LifetimeKind {
    Exponential,
    Deterministic,
    /// Shape `k`, rate `k`.
    Gamma { shape: f64 },
    /// Uniform on `[1 - w, 1 + w]`, `w` in `(0, 1]`.
    Uniform { half_width: f64 },
    /// `a` with probability `p`, `(1 - pa) / (1 - p)` otherwise.
    TwoPoint { a: f64, p: f64 },
}

#[derive(Debug, Clone)]
enum Sampler {
    Exponential,
    Deterministic,
    Gamma {
        shape: f64,
        law: Gamma<f64>,
        length_biased: Gamma<f64>,
    },
    Uniform { lo: f64, width: f64 },
    TwoPoint { a: f64, p: f64, b: f64 },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct LifetimeDistribution {
    kind: LifetimeKind,
    sampler: Sampler,
}

impl PartialEq for LifetimeDistribution {
    fn eq(&self, other: &Self) -> bool {
        self.kind == other.kind
    }
}

impl LifetimeDistribution {
    pub fn exponential() -> Self {
        Self {
            kind: LifetimeKind::Exponential,
            sampler: Sampler::Exponential,
        }
    }

    pub fn deterministic() -> Self {
        Self {
            kind: LifetimeKind::Deterministic,
            sampler: Sampler::Deterministic,
        }
    }

    pub fn gamma(shape: f64) -> Result<Self> {
        if !(shape.is_finite() && shape > 0.0) {
            return Err(invalid(format!("gamma shape must be positive, got {shape}")));
        }
        let law = Gamma::new(shape, 1.0 / shape).map_err(|e| invalid(e.to_string()))?;
        let length_biased =
            Gamma::new(shape + 1.0, 1.0 / shape).map_err(|e| invalid(e.to_string()))?;
        Ok(Self {
            kind: LifetimeKind::Gamma { shape },
            sampler: Sampler::Gamma {
                shape,
                law,
                length_biased,
            },
        })
    }

    pub fn uniform(half_width: f64) -> Result<Self> {
        if !(half_width > 0.0 && half_width <= 1.0) {
            return Err(invalid(format!(
                "uniform half-width must lie in (0, 1], got {half_width}"
            )));
        }
        Ok(Self {
            kind: LifetimeKind::Uniform { half_width },
            sampler: Sampler::Uniform {
                lo: 1.0 - half_width,
                width: 2.0 * half_width,
            },
        })
    }

    pub fn two_point(a: f64, p: f64) -> Result<Self> {
        if !(a > 0.0 && a < 1.0) {
            return Err(invalid(format!("two-point a must lie in (0, 1), got {a}")));
        }
        if !(p > 0.0 && p < 1.0) {
            return Err(invalid(format!("two-point p must lie in (0, 1), got {p}")));
        }
        let b = (1.0 - p * a) / (1.0 - p);
        Ok(Self {
            kind: LifetimeKind::TwoPoint { a, p },
            sampler: Sampler::TwoPoint { a, p, b },
        })
    }

    pub fn kind(&self) -> LifetimeKind {
        self.kind
    }

    pub fn mean(&self) -> f64 {
        match self.sampler {
            Sampler::TwoPoint { a, p, b } => p * a + (1.0 - p) * b,
            Sampler::Uniform { lo, width } => lo + 0.5 * width,
            _ => 1.0,
        }
    }

    pub fn variance(&self) -> f64 {
        match self.sampler {
            Sampler::Exponential => 1.0,
            Sampler::Deterministic => 0.0,
            Sampler::Gamma { shape, .. } => 1.0 / shape,
            Sampler::Uniform { width, .. } => width * width / 12.0,
            Sampler::TwoPoint { a, p, b } => p * (a - 1.0).powi(2) + (1.0 - p) * (b - 1.0).powi(2),
        }
    }

    pub fn second_moment(&self) -> f64 {
        self.variance() + 1.0
    }

    /// Mean of the equilibrium residual life, `E[Q^2] / 2`.
    pub fn residual_mean(&self) -> f64 {
        0.5 * self.second_moment()
    }

    /// `E[exp(-theta Q)]` in closed form.
    pub fn laplace(&self, theta: f64) -> f64 {
        debug_assert!(theta >= 0.0);
        match self.sampler {
            Sampler::Exponential => 1.0 / (1.0 + theta),
            Sampler::Deterministic => (-theta).exp(),
            // (k / (k + theta))^k
            Sampler::Gamma { shape: k, .. } => (-k * (theta / k).ln_1p()).exp(),
            Sampler::Uniform { width, .. } => {
                let x = 0.5 * width * theta;
                if x < 1e-8 {
                    (-theta).exp() * (1.0 + x * x / 6.0)
                } else {
                    (-theta).exp() * x.sinh() / x
                }
            }
            Sampler::TwoPoint { a, p, b } => p * (-theta * a).exp() + (1.0 - p) * (-theta * b).exp(),
        }
    }

    pub fn cdf(&self, x: f64) -> f64 {
        if x <= 0.0 {
            return 0.0;
        }
        match self.sampler {
            Sampler::Exponential => -(-x).exp_m1(),
            Sampler::Deterministic => {
                if x >= 1.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Sampler::Gamma { shape: k, .. } => statrs::function::gamma::gamma_lr(k, k * x),
            Sampler::Uniform { lo, width } => ((x - lo) / width).clamp(0.0, 1.0),
            Sampler::TwoPoint { a, p, b } => {
                if x >= b {
                    1.0
                } else if x >= a {
                    p
                } else {
                    0.0
                }
            }
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match &self.sampler {
            Sampler::Exponential => Exp1.sample(rng),
            Sampler::Deterministic => 1.0,
            Sampler::Gamma { law, .. } => law.sample(rng),
            Sampler::Uniform { lo, width } => lo + width * rng.random::<f64>(),
            Sampler::TwoPoint { a, p, b } => {
                if rng.random::<f64>() < *p {
                    *a
                } else {
                    *b
                }
            }
        }
    }

    /// Draw from the stationary excess-life law, density `P(Q > u)`.
    pub fn sample_residual<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let length_biased = match &self.sampler {
            Sampler::Exponential => return Exp1.sample(rng),
            Sampler::Deterministic => 1.0,
            Sampler::Gamma { length_biased, .. } => length_biased.sample(rng),
            Sampler::Uniform { lo, width } => {
                let u: f64 = rng.random();
                (lo * lo + 2.0 * width * u).sqrt()
            }
            Sampler::TwoPoint { a, p, b } => {
                if rng.random::<f64>() < p * a {
                    *a
                } else {
                    *b
                }
            }
        };
        // Uniform on (0, 1]; a zero residual would schedule a death at the start time.
        let u = 1.0 - rng.random::<f64>();
        u * length_biased
    }

    /// Short label used in reports.
    pub fn label(&self) -> String {
        self.to_string()
    }
}

impl fmt::Display for LifetimeDistribution {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.kind {
            LifetimeKind::Exponential => write!(f, "exp"),
            LifetimeKind::Deterministic => write!(f, "det"),
            LifetimeKind::Gamma { shape } => write!(f, "gamma:k={shape}"),
            LifetimeKind::Uniform { half_width } => write!(f, "unif:w={half_width}"),
            LifetimeKind::TwoPoint { a, p } => write!(f, "twopoint:a={a},p={p}"),
        }
    }
}

impl FromStr for LifetimeDistribution {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        let (name, params) = match s.split_once(':') {
            Some((n, p)) => (n, p),
            None => (s, ""),
        };
        let mut values = Vec::new();
        for item in params.split(',').filter(|p| !p.trim().is_empty()) {
            let (key, value) = item
                .split_once('=')
                .ok_or_else(|| invalid(format!("expected key=value in {s:?}, got {item:?}")))?;
            let value: f64 = value
                .trim()
                .parse()
                .map_err(|_| invalid(format!("bad number {value:?} in {s:?}")))?;
            values.push((key.trim(), value));
        }
        let take = |key: &str| {
            values
                .iter()
                .find(|(k, _)| *k == key)
                .map(|(_, v)| *v)
                .ok_or_else(|| invalid(format!("{s:?} is missing parameter {key}")))
        };
        let expect_params = |n: usize| {
            if values.len() == n {
                Ok(())
            } else {
                Err(invalid(format!("{s:?}: expected {n} parameter(s)")))
            }
        };
        match name {
            "exp" => expect_params(0).map(|_| Self::exponential()),
            "det" => expect_params(0).map(|_| Self::deterministic()),
            "gamma" => {
                expect_params(1)?;
                Self::gamma(take("k")?)
            }
            "unif" => {
                expect_params(1)?;
                Self::uniform(take("w")?)
            }
            "twopoint" => {
                expect_params(2)?;
                Self::two_point(take("a")?, take("p")?)
            }
            other => Err(invalid(format!("unknown lifetime distribution {other:?}"))),
        }
    }
}

impl TryFrom<String> for LifetimeDistribution {
    type Error = Error;
    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<LifetimeDistribution> for String {
    fn from(d: LifetimeDistribution) -> String {
        d.to_string()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::RandomStream;

    fn all_kinds() -> Vec<LifetimeDistribution> {
        vec![
            LifetimeDistribution::exponential(),
            LifetimeDistribution::deterministic(),
            LifetimeDistribution::gamma(2.0).unwrap(),
            LifetimeDistribution::gamma(0.5).unwrap(),
            LifetimeDistribution::uniform(1.0).unwrap(),
            LifetimeDistribution::uniform(0.3).unwrap(),
            LifetimeDistribution::two_point(0.5, 0.5).unwrap(),
            LifetimeDistribution::two_point(0.1, 0.9).unwrap(),
        ]
    }

    fn mean_and_se(xs: &[f64]) -> (f64, f64) {
        let n = xs.len() as f64;
        let m = xs.iter().sum::<f64>() / n;
        let v = xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0);
        (m, (v / n).sqrt())
    }

    #[test]
    fn means_are_one() {
        for d in all_kinds() {
            assert!((d.mean() - 1.0).abs() <= 1e-12, "{d}");
            assert!(d.variance().is_finite() && d.variance() >= 0.0);
        }
    }

    #[test]
    fn rejects_bad_parameters() {
        assert!(LifetimeDistribution::gamma(0.0).is_err());
        assert!(LifetimeDistribution::gamma(f64::NAN).is_err());
        assert!(LifetimeDistribution::uniform(1.5).is_err());
        assert!(LifetimeDistribution::uniform(0.0).is_err());
        assert!(LifetimeDistribution::two_point(1.0, 0.5).is_err());
        assert!(LifetimeDistribution::two_point(0.5, 1.0).is_err());
    }

    #[test]
    fn parses_and_prints() {
        for text in ["exp", "det", "gamma:k=2", "unif:w=0.5", "twopoint:a=0.25,p=0.5"] {
            let d: LifetimeDistribution = text.parse().unwrap();
            assert_eq!(d.to_string(), text);
        }
        let d: LifetimeDistribution = "twopoint:p=0.5, a=0.25".parse().unwrap();
        assert_eq!(d.kind(), LifetimeKind::TwoPoint { a: 0.25, p: 0.5 });
        for bad in ["", "weibull", "gamma", "gamma:k=x", "exp:k=1", "unif:k=0.5", "gamma:k=-1"] {
            assert!(bad.parse::<LifetimeDistribution>().is_err(), "{bad}");
        }
    }

    #[test]
    fn laplace_examples() {
        for d in all_kinds() {
            assert_eq!(d.laplace(0.0), 1.0, "{d}");
        }
        assert_eq!(LifetimeDistribution::exponential().laplace(1.0), 0.5);
        let det = LifetimeDistribution::deterministic().laplace(2.0);
        assert!((det - 0.135335283236613).abs() < 1e-12);
    }

    #[test]
    fn laplace_slope_at_zero_is_minus_mean() {
        let h = 1e-6;
        for d in all_kinds() {
            let slope = (d.laplace(h) - d.laplace(0.0)) / h;
            assert!((slope + 1.0).abs() < 1e-4, "{d}: {slope}");
        }
    }

    #[test]
    fn laplace_nonincreasing_and_convex() {
        for d in all_kinds() {
            let grid: Vec<f64> = (0..=100).map(|i| d.laplace(i as f64 * 0.1)).collect();
            for w in grid.windows(3) {
                assert!(w[1] <= w[0], "{d} not monotone");
                assert!(w[0] - 2.0 * w[1] + w[2] >= -1e-14, "{d} not convex");
            }
        }
    }

    #[test]
    fn laplace_matches_empirical_transform() {
        // Closed forms checked against a plain Monte Carlo average.
        let mut rng = RandomStream::new(11, 0);
        for d in all_kinds() {
            let xs: Vec<f64> = (0..200_000).map(|_| (-0.7 * d.sample(&mut rng)).exp()).collect();
            let (m, se) = mean_and_se(&xs);
            let target = d.laplace(0.7);
            assert!((m - target).abs() <= 4.0 * se.max(1e-12), "{d}: {m} vs {target}");
        }
    }

    #[test]
    fn deterministic_sample_is_one() {
        let mut rng = RandomStream::new(1, 0);
        let d = LifetimeDistribution::deterministic();
        assert!((0..100).all(|_| d.sample(&mut rng) == 1.0));
    }

    #[test]
    fn exponential_sample_mean() {
        let mut rng = RandomStream::new(2, 0);
        let d = LifetimeDistribution::exponential();
        let n = 1_000_000;
        let m = (0..n).map(|_| d.sample(&mut rng)).sum::<f64>() / n as f64;
        assert!((m - 1.0).abs() <= 4e-3, "{m}");
    }

    #[test]
    fn gamma_two_sample_variance() {
        let mut rng = RandomStream::new(3, 0);
        let d = LifetimeDistribution::gamma(2.0).unwrap();
        let xs: Vec<f64> = (0..1_000_000).map(|_| d.sample(&mut rng)).collect();
        let n = xs.len() as f64;
        let m = xs.iter().sum::<f64>() / n;
        let sq: Vec<f64> = xs.iter().map(|x| (x - m).powi(2)).collect();
        let (var, se) = mean_and_se(&sq);
        assert!((var - 0.5).abs() <= 4.0 * se, "{var} ± {se}");
    }

    #[test]
    fn residual_means_match_renewal_formula() {
        let mut rng = RandomStream::new(4, 0);
        for d in all_kinds() {
            let xs: Vec<f64> = (0..1_000_000).map(|_| d.sample_residual(&mut rng)).collect();
            assert!(xs.iter().all(|&x| x > 0.0));
            let (m, se) = mean_and_se(&xs);
            assert!((m - d.residual_mean()).abs() <= 4.0 * se, "{d}: {m} vs {}", d.residual_mean());
        }
        assert_eq!(LifetimeDistribution::deterministic().residual_mean(), 0.5);
    }
}
