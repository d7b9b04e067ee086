//! Shared data model and the nonconformity transform.
//!
//! Every downstream module works in nonconformity-score space: the raw
//! detector output `Det(x)` is mapped through a sigmoid
//!
//! ```text
//! s = 1 / (1 + exp(-k * (Det(x) - tau)))
//! ```
//!
//! where `tau` is the detector's default decision threshold and `k` in
//! {-1, +1} orients the score so that larger `s` always means "less likely
//! human-written", whatever the detector's native polarity.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Result clamp: the sigmoid saturates in floating point for large
/// arguments, but thresholds use 1.0 as an "always human" sentinel, so a
/// score must never reach the interval ends exactly.
pub const SCORE_EPSILON: f64 = 1e-12;

/// Class label attached to instances and emitted by detection.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Label {
    Human,
    Machine,
}

impl std::fmt::Display for Label {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Label::Human => write!(f, "human"),
            Label::Machine => write!(f, "machine"),
        }
    }
}

/// Detector polarity: whether larger raw output means more machine-like
/// (`Positive`, k = +1) or more human-like (`Negative`, k = -1).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "i8", into = "i8")]
pub enum Polarity {
    Positive,
    Negative,
}

impl Polarity {
    pub fn sign(self) -> f64 {
        match self {
            Polarity::Positive => 1.0,
            Polarity::Negative => -1.0,
        }
    }
}

impl TryFrom<i8> for Polarity {
    type Error = String;

    fn try_from(value: i8) -> std::result::Result<Self, String> {
        match value {
            1 => Ok(Polarity::Positive),
            -1 => Ok(Polarity::Negative),
            other => Err(format!("polarity k must be -1 or +1, got {other}")),
        }
    }
}

impl From<Polarity> for i8 {
    fn from(value: Polarity) -> i8 {
        match value {
            Polarity::Positive => 1,
            Polarity::Negative => -1,
        }
    }
}

/// One scored text: the unit of calibration and detection.
///
/// `length` is a token count under whatever tokenizer convention the
/// detector profile assumes; the toolkit never tokenizes on its own except
/// in the whitespace-based attack module.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredInstance {
    pub id: String,
    pub length: u32,
    pub raw_score: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub label: Option<Label>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub text: Option<String>,
}

impl ScoredInstance {
    pub fn new(id: impl Into<String>, length: u32, raw_score: f64) -> Self {
        Self {
            id: id.into(),
            length,
            raw_score,
            label: None,
            text: None,
        }
    }

    pub fn with_label(mut self, label: Label) -> Self {
        self.label = Some(label);
        self
    }
}

/// Per-detector configuration: polarity, default threshold, and the
/// maximum length the calibration covers.
///
/// These are configuration, not inference: each detector ships with its own
/// default threshold and orientation, and the right `l_max` depends on the
/// detector's underlying context window.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectorProfile {
    pub name: String,
    pub k: Polarity,
    pub tau: f64,
    pub l_max: u32,
}

impl DetectorProfile {
    pub fn new(name: impl Into<String>, k: Polarity, tau: f64, l_max: u32) -> Result<Self> {
        if l_max < 1 {
            return Err(Error::InvalidConfig("l_max must be >= 1".into()));
        }
        if !tau.is_finite() {
            return Err(Error::NonFiniteScore {
                id: None,
                value: tau,
            });
        }
        Ok(Self {
            name: name.into(),
            k,
            tau,
            l_max,
        })
    }
}

/// A nonconformity score, guaranteed to lie strictly inside (0, 1).
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(try_from = "f64", into = "f64")]
pub struct NonconformityScore(f64);

impl NonconformityScore {
    pub fn new(value: f64) -> Result<Self> {
        if !value.is_finite() || value <= 0.0 || value >= 1.0 {
            return Err(Error::ScoreOutOfRange { value });
        }
        Ok(Self(value))
    }

    pub fn value(self) -> f64 {
        self.0
    }
}

impl TryFrom<f64> for NonconformityScore {
    type Error = Error;

    fn try_from(value: f64) -> Result<Self> {
        Self::new(value)
    }
}

impl From<NonconformityScore> for f64 {
    fn from(score: NonconformityScore) -> f64 {
        score.0
    }
}

/// Map a raw detector output into nonconformity-score space.
///
/// Strictly monotone in `raw_score` with the sign of `k`; the result is
/// clamped into `[SCORE_EPSILON, 1 - SCORE_EPSILON]` so saturation never
/// produces an exact 0 or 1.
pub fn nonconformity(profile: &DetectorProfile, raw_score: f64) -> Result<NonconformityScore> {
    if !raw_score.is_finite() {
        return Err(Error::NonFiniteScore {
            id: None,
            value: raw_score,
        });
    }
    let z = profile.k.sign() * (raw_score - profile.tau);
    let s = sigmoid(z).clamp(SCORE_EPSILON, 1.0 - SCORE_EPSILON);
    NonconformityScore::new(s)
}

/// Numerically stable logistic function.
fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Nonconformity over a batch, preserving input order.
///
/// The first failing instance yields an error carrying its id.
pub fn score_batch(
    profile: &DetectorProfile,
    instances: &[ScoredInstance],
) -> Result<Vec<(String, u32, NonconformityScore)>> {
    instances
        .iter()
        .map(|inst| {
            let score = nonconformity(profile, inst.raw_score).map_err(|e| match e {
                Error::NonFiniteScore { value, .. } => Error::NonFiniteScore {
                    id: Some(inst.id.clone()),
                    value,
                },
                other => other,
            })?;
            Ok((inst.id.clone(), inst.length, score))
        })
        .collect()
}
