use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::InferenceError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VerdictLabel {
    Incorrect,
    PartiallyCorrect,
    Correct,
}

impl VerdictLabel {
    pub const ALL: [VerdictLabel; 3] = [
        VerdictLabel::Incorrect,
        VerdictLabel::PartiallyCorrect,
        VerdictLabel::Correct,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            VerdictLabel::Incorrect => "incorrect",
            VerdictLabel::PartiallyCorrect => "partially_correct",
            VerdictLabel::Correct => "correct",
        }
    }
}

impl fmt::Display for VerdictLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for VerdictLabel {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match crate::model::normalize_label(s).as_str() {
            "incorrect" => Ok(VerdictLabel::Incorrect),
            "partially correct" => Ok(VerdictLabel::PartiallyCorrect),
            "correct" => Ok(VerdictLabel::Correct),
            _ => Err(format!("unknown verdict label {s:?}")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Verdict {
    pub label: VerdictLabel,
    pub trust: f64,
}

/// Trust cut-offs. Trust up to `incorrect_max` is incorrect, up to
/// `partial_max` partially correct, above it correct. `boundary_is_incorrect`
/// decides which side trust exactly equal to `incorrect_max` falls on.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VerdictConfig {
    pub incorrect_max: f64,
    pub partial_max: f64,
    pub boundary_is_incorrect: bool,
}

impl Default for VerdictConfig {
    fn default() -> Self {
        VerdictConfig {
            incorrect_max: 0.5,
            partial_max: 0.7,
            boundary_is_incorrect: true,
        }
    }
}

impl VerdictConfig {
    pub fn validate(&self) -> Result<(), String> {
        if !(0.0 <= self.incorrect_max && self.incorrect_max <= self.partial_max && self.partial_max <= 1.0) {
            return Err(format!(
                "verdict thresholds must satisfy 0 <= incorrect_max <= partial_max <= 1, got {} and {}",
                self.incorrect_max, self.partial_max
            ));
        }
        Ok(())
    }
}

pub fn verdict_from_trust(trust: f64) -> Result<Verdict, InferenceError> {
    verdict_with(trust, &VerdictConfig::default())
}

pub fn verdict_with(trust: f64, config: &VerdictConfig) -> Result<Verdict, InferenceError> {
    if !(0.0..=1.0).contains(&trust) {
        return Err(InferenceError::TrustOutOfRange(trust));
    }
    let incorrect = if config.boundary_is_incorrect {
        trust <= config.incorrect_max
    } else {
        trust < config.incorrect_max
    };
    let label = if incorrect {
        VerdictLabel::Incorrect
    } else if trust <= config.partial_max {
        VerdictLabel::PartiallyCorrect
    } else {
        VerdictLabel::Correct
    };
    Ok(Verdict { label, trust })
}
