//! Weighted sample means with standard errors.

use serde::{Deserialize, Serialize};

/// A Monte-Carlo estimate with its standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    #[serde(with = "lossless")]
    pub value: f64,
    #[serde(with = "lossless")]
    pub stderr: f64,
}

/// `f64` as a JSON number when finite and as `"inf"`, `"-inf"` or `"nan"`
/// otherwise, so that records survive a round trip.
pub mod lossless {
    use serde::de::Error;
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        match *v {
            x if x.is_finite() => s.serialize_f64(x),
            x if x.is_nan() => s.serialize_str("nan"),
            x if x > 0.0 => s.serialize_str("inf"),
            _ => s.serialize_str("-inf"),
        }
    }

    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Repr {
        Number(f64),
        Tag(String),
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        match Repr::deserialize(d)? {
            Repr::Number(x) => Ok(x),
            Repr::Tag(t) => match t.as_str() {
                "nan" => Ok(f64::NAN),
                "inf" => Ok(f64::INFINITY),
                "-inf" => Ok(f64::NEG_INFINITY),
                other => Err(D::Error::custom(format!(
                    "expected a number, got `{other}`"
                ))),
            },
        }
    }
}

impl Estimate {
    pub fn exact(value: f64) -> Self {
        Estimate { value, stderr: 0.0 }
    }

    /// `|value - target| / stderr`; infinite for a nonzero miss with zero error.
    pub fn z_score(&self, target: f64) -> f64 {
        let d = (self.value - target).abs();
        if d == 0.0 {
            0.0
        } else {
            d / self.stderr
        }
    }

    /// `|value - target| <= k stderr + slack`.
    pub fn within(&self, target: f64, k: f64, slack: f64) -> bool {
        (self.value - target).abs() <= k * self.stderr + slack
    }

    /// Standard error of the difference of two independent estimates.
    pub fn joint_stderr(&self, other: &Estimate) -> f64 {
        self.stderr.hypot(other.stderr)
    }
}

impl std::fmt::Display for Estimate {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{:.6} ± {:.2e}", self.value, self.stderr)
    }
}

/// Plain mean and standard error of the mean.
pub fn mean(xs: &[f64]) -> Estimate {
    let n = xs.len() as f64;
    if xs.is_empty() {
        return Estimate {
            value: f64::NAN,
            stderr: f64::NAN,
        };
    }
    let m = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return Estimate {
            value: m,
            stderr: f64::INFINITY,
        };
    }
    let var = xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0);
    Estimate {
        value: m,
        stderr: (var / n).sqrt(),
    }
}

/// Self-normalized weighted mean `Σ w g / Σ w` with the delta-method
/// standard error `sqrt(Σ w² (g - m)²) / Σ w`.
pub fn weighted_mean(values: &[f64], weights: &[f64]) -> Estimate {
    let sw: f64 = weights.iter().sum();
    if !(sw > 0.0) {
        return Estimate {
            value: f64::NAN,
            stderr: f64::NAN,
        };
    }
    let m = values.iter().zip(weights).map(|(g, w)| g * w).sum::<f64>() / sw;
    let s2: f64 = values
        .iter()
        .zip(weights)
        .map(|(g, w)| (w * (g - m)).powi(2))
        .sum();
    Estimate {
        value: m,
        stderr: s2.sqrt() / sw,
    }
}

/// Kish effective sample size `(Σ w)² / Σ w²`.
pub fn ess(weights: &[f64]) -> f64 {
    let s: f64 = weights.iter().sum();
    let s2: f64 = weights.iter().map(|w| w * w).sum();
    if s2 == 0.0 {
        0.0
    } else {
        s * s / s2
    }
}

/// Binomial proportion with standard error.
pub fn proportion(hits: usize, n: usize) -> Estimate {
    let p = hits as f64 / n as f64;
    Estimate {
        value: p,
        stderr: (p * (1.0 - p) / n as f64).sqrt(),
    }
}

/// Ratio `E[a] / E[b]` from paired samples, delta-method error.
pub fn ratio_of_means(a: &[f64], b: &[f64]) -> Estimate {
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let r = ma / mb;
    let s2: f64 = a
        .iter()
        .zip(b)
        .map(|(x, y)| (x - r * y).powi(2))
        .sum::<f64>()
        / (n - 1.0);
    Estimate {
        value: r,
        stderr: (s2 / n).sqrt() / mb.abs(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn weighted_equals_plain_for_unit_weights() {
        let xs = [1.0, 2.0, 4.0, 7.0];
        let a = mean(&xs);
        let b = weighted_mean(&xs, &[1.0; 4]);
        assert!((a.value - b.value).abs() < 1e-15);
        // delta-method uses n instead of n - 1
        assert!((a.stderr * (3.0f64 / 4.0).sqrt() - b.stderr).abs() < 1e-12);
        assert_eq!(ess(&[1.0; 4]), 4.0);
        assert_eq!(ess(&[1.0, 0.0, 0.0]), 1.0);
    }

    #[test]
    fn ratio_of_constant_pairs() {
        let r = ratio_of_means(&[2.0, 4.0, 6.0], &[1.0, 2.0, 3.0]);
        assert!((r.value - 2.0).abs() < 1e-15 && r.stderr < 1e-15);
    }
}
