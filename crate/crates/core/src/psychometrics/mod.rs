//! Correlation, attenuation corrections, split-half reliability,
//! standardization and one-dimensional Wasserstein distance.

mod distance;
pub mod special;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use distance::{wasserstein_1d, wasserstein_z, zscore};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Stars {
    #[serde(rename = "ns")]
    None,
    #[serde(rename = "*")]
    One,
    #[serde(rename = "**")]
    Two,
    #[serde(rename = "***")]
    Three,
}

impl Stars {
    /// Significance marks at p < .05, .01 and .001.
    pub fn from_p(p: f64) -> Stars {
        if p < 0.001 {
            Stars::Three
        } else if p < 0.01 {
            Stars::Two
        } else if p < 0.05 {
            Stars::One
        } else {
            Stars::None
        }
    }

    pub fn marks(self) -> &'static str {
        match self {
            Stars::None => "",
            Stars::One => "*",
            Stars::Two => "**",
            Stars::Three => "***",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CorrelationResult {
    pub r: f64,
    pub n: usize,
    /// Infinite when `|r| = 1`; serialized as `"inf"` or `"-inf"` then.
    #[serde(with = "extended_f64")]
    pub t: f64,
    pub p: f64,
    pub stars: Stars,
}

/// A corrected correlation; `clamped` marks corrections that overshot
/// `[-1, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Corrected {
    pub value: f64,
    pub clamped: bool,
}

impl Corrected {
    fn clamp(raw: f64) -> Corrected {
        Corrected {
            value: raw.clamp(-1.0, 1.0),
            clamped: raw.abs() > 1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReliabilityEstimate {
    pub r_half: Option<f64>,
    pub r_sb: Option<f64>,
    pub n_pairs: usize,
    pub excluded: usize,
}

mod extended_f64 {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if v.is_finite() {
            s.serialize_f64(*v)
        } else if v.is_nan() {
            s.serialize_str("nan")
        } else if *v > 0.0 {
            s.serialize_str("inf")
        } else {
            s.serialize_str("-inf")
        }
    }

    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Repr {
        Number(f64),
        Text(String),
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        match Repr::deserialize(d)? {
            Repr::Number(v) => Ok(v),
            Repr::Text(t) => match t.as_str() {
                "inf" => Ok(f64::INFINITY),
                "-inf" => Ok(f64::NEG_INFINITY),
                "nan" => Ok(f64::NAN),
                other => Err(serde::de::Error::custom(format!("expected a number, got {other:?}"))),
            },
        }
    }
}

fn check_finite(x: &[f64]) -> Result<()> {
    if x.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::InvalidInput("series contains non-finite values".into()))
    }
}

pub(crate) fn mean(x: &[f64]) -> f64 {
    x.iter().sum::<f64>() / x.len() as f64
}

fn is_constant(x: &[f64]) -> bool {
    x.iter().all(|&v| v == x[0])
}

/// Pearson product-moment correlation with a two-sided t-test p-value.
pub fn pearson(x: &[f64], y: &[f64]) -> Result<CorrelationResult> {
    if x.len() != y.len() {
        return Err(Error::LengthMismatch {
            left: x.len(),
            right: y.len(),
        });
    }
    let n = x.len();
    if n < 3 {
        return Err(Error::TooFewObservations { needed: 3, found: n });
    }
    check_finite(x)?;
    check_finite(y)?;
    if is_constant(x) || is_constant(y) {
        return Err(Error::ZeroVariance);
    }
    let (mx, my) = (mean(x), mean(y));
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        let (dx, dy) = (a - mx, b - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(Error::ZeroVariance);
    }
    let r = (sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0);
    let df = (n - 2) as f64;
    // 1 - r^2 equals the residual share of syy; summing residuals directly
    // avoids cancellation when |r| is close to 1.
    let slope = sxy / sxx;
    let sse: f64 = x
        .iter()
        .zip(y)
        .map(|(a, b)| {
            let e = (b - my) - slope * (a - mx);
            e * e
        })
        .sum();
    let t = if r.abs() == 1.0 || sse == 0.0 {
        r.signum() * f64::INFINITY
    } else {
        r * (df * syy / sse).sqrt()
    };
    let p = special::student_t_two_sided(t, df);
    Ok(CorrelationResult {
        r,
        n,
        t,
        p,
        stars: Stars::from_p(p),
    })
}

fn check_reliability(r: f64) -> Result<()> {
    if r > 0.0 && r <= 1.0 {
        Ok(())
    } else {
        Err(Error::InvalidReliability(r))
    }
}

/// Corrects an observed correlation for unreliability of the clinical scale.
pub fn partial_disattenuate(r_observed: f64, r_scale: f64) -> Result<Corrected> {
    check_reliability(r_scale)?;
    Ok(Corrected::clamp(r_observed / r_scale.sqrt()))
}

/// Corrects for unreliability of both the projection score and the scale.
/// An upper-bound approximation of the latent association.
pub fn full_disattenuate(r_observed: f64, r_projection: Option<f64>, r_scale: f64) -> Result<Corrected> {
    let r_projection = r_projection.ok_or(Error::UndefinedReliability)?;
    check_reliability(r_projection)?;
    check_reliability(r_scale)?;
    Ok(Corrected::clamp(r_observed / (r_projection * r_scale).sqrt()))
}

/// Spearman-Brown step-up of a half-length correlation; undefined unless
/// `r_half > 0`.
pub fn spearman_brown(r_half: f64) -> Option<f64> {
    if r_half > 0.0 {
        Some(2.0 * r_half / (1.0 + r_half))
    } else {
        None
    }
}

/// Odd/even split-half reliability from per-participant half scores.
pub fn split_half_reliability(pairs: &[(f64, f64)], excluded: usize) -> Result<ReliabilityEstimate> {
    let (a, b): (Vec<f64>, Vec<f64>) = pairs.iter().copied().unzip();
    let r_half = pearson(&a, &b)?.r;
    Ok(ReliabilityEstimate {
        r_half: Some(r_half),
        r_sb: spearman_brown(r_half),
        n_pairs: pairs.len(),
        excluded,
    })
}
