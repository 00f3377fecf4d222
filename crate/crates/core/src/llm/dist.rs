use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Tolerance on the sum of a class distribution.
pub const DISTRIBUTION_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DistributionError {
    #[error("expected {expected} probabilities, got {got}")]
    WrongLength { expected: usize, got: usize },
    #[error("probability {0} is negative or not finite")]
    BadEntry(f64),
    #[error("probabilities sum to {0}, not 1")]
    BadSum(f64),
}

/// Validates a probability vector over `expected` classes.
pub fn check_distribution(values: &[f64], expected: usize) -> Result<(), DistributionError> {
    if values.len() != expected {
        return Err(DistributionError::WrongLength {
            expected,
            got: values.len(),
        });
    }
    if let Some(&bad) = values.iter().find(|p| !p.is_finite() || **p < 0.0 || **p > 1.0) {
        return Err(DistributionError::BadEntry(bad));
    }
    let sum: f64 = values.iter().sum();
    if (sum - 1.0).abs() > DISTRIBUTION_TOLERANCE {
        return Err(DistributionError::BadSum(sum));
    }
    Ok(())
}

/// Scales nonnegative masses to sum to one. `None` when the total mass is zero.
pub fn normalize(masses: &[f64]) -> Option<Vec<f64>> {
    if masses.iter().any(|m| !m.is_finite() || *m < 0.0) {
        return None;
    }
    let total: f64 = masses.iter().sum();
    (total > 0.0).then(|| masses.iter().map(|m| m / total).collect())
}

pub fn one_hot(len: usize, index: usize) -> Vec<f64> {
    let mut v = vec![0.0; len];
    v[index] = 1.0;
    v
}

/// Three-way support judgement between a candidate and a target proposition.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SupportDistribution {
    pub p_direct: f64,
    pub p_weak: f64,
    pub p_none: f64,
}

impl SupportDistribution {
    pub const LABELS: [&'static str; 3] = ["direct support", "weak support", "no support"];

    pub fn new(p_direct: f64, p_weak: f64, p_none: f64) -> Result<Self, DistributionError> {
        Self::from_slice(&[p_direct, p_weak, p_none])
    }

    pub fn from_slice(p: &[f64]) -> Result<Self, DistributionError> {
        check_distribution(p, 3)?;
        Ok(SupportDistribution {
            p_direct: p[0],
            p_weak: p[1],
            p_none: p[2],
        })
    }

    pub fn uniform() -> Self {
        let third = 1.0 / 3.0;
        SupportDistribution {
            p_direct: third,
            p_weak: third,
            p_none: third,
        }
    }

    pub fn to_vec(&self) -> Vec<f64> {
        vec![self.p_direct, self.p_weak, self.p_none]
    }

    pub fn to_labeled(&self) -> BTreeMap<String, f64> {
        Self::LABELS
            .iter()
            .zip(self.to_vec())
            .map(|(l, p)| (l.to_string(), p))
            .collect()
    }
}

/// Five-way stance of a document toward a claim.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StanceDistribution {
    pub p_strong_support: f64,
    pub p_weak_support: f64,
    pub p_neutral: f64,
    pub p_weak_oppose: f64,
    pub p_strong_oppose: f64,
}

impl StanceDistribution {
    pub const LABELS: [&'static str; 5] = [
        "strong support",
        "weak support",
        "neutral",
        "weak oppose",
        "strong oppose",
    ];

    pub fn from_slice(p: &[f64]) -> Result<Self, DistributionError> {
        check_distribution(p, 5)?;
        Ok(StanceDistribution {
            p_strong_support: p[0],
            p_weak_support: p[1],
            p_neutral: p[2],
            p_weak_oppose: p[3],
            p_strong_oppose: p[4],
        })
    }

    pub fn one_hot(label_index: usize) -> Self {
        Self::from_slice(&one_hot(5, label_index)).expect("one-hot is a distribution")
    }

    pub fn uniform() -> Self {
        Self::from_slice(&[0.2; 5]).expect("uniform is a distribution")
    }

    pub fn to_vec(&self) -> Vec<f64> {
        vec![
            self.p_strong_support,
            self.p_weak_support,
            self.p_neutral,
            self.p_weak_oppose,
            self.p_strong_oppose,
        ]
    }

    /// Swaps the support and oppose sides.
    pub fn reversed(&self) -> Self {
        StanceDistribution {
            p_strong_support: self.p_strong_oppose,
            p_weak_support: self.p_weak_oppose,
            p_neutral: self.p_neutral,
            p_weak_oppose: self.p_weak_support,
            p_strong_oppose: self.p_strong_support,
        }
    }

    pub fn to_labeled(&self) -> BTreeMap<String, f64> {
        Self::LABELS
            .iter()
            .zip(self.to_vec())
            .map(|(l, p)| (l.to_string(), p))
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_bad_distributions() {
        assert!(SupportDistribution::new(0.5, 0.5, 0.0).is_ok());
        assert!(matches!(
            SupportDistribution::new(0.5, 0.6, 0.0),
            Err(DistributionError::BadSum(_))
        ));
        assert!(matches!(
            SupportDistribution::new(-0.1, 1.1, 0.0),
            Err(DistributionError::BadEntry(_))
        ));
        assert!(matches!(
            StanceDistribution::from_slice(&[1.0]),
            Err(DistributionError::WrongLength { .. })
        ));
        assert!(check_distribution(&[f64::NAN, 1.0], 2).is_err());
    }

    #[test]
    fn sum_tolerance_is_1e9() {
        assert!(check_distribution(&[0.5, 0.5 + 5e-10], 2).is_ok());
        assert!(check_distribution(&[0.5, 0.5 + 5e-9], 2).is_err());
    }

    #[test]
    fn normalize_handles_zero_mass() {
        assert_eq!(normalize(&[0.0, 0.0]), None);
        assert_eq!(normalize(&[1.0, 3.0]), Some(vec![0.25, 0.75]));
    }
}
