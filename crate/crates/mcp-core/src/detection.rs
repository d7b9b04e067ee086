//! Applying a calibrated quantile table to classify instances.
//!
//! A test instance is machine-generated iff its nonconformity score strictly
//! exceeds the threshold of the length bin it falls into; ties classify as
//! human, which is the direction the FPR guarantee needs.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::calibration::{bin_index, QuantileTable};
use crate::error::{Error, Result};
use crate::types::{nonconformity, DetectorProfile, Label, NonconformityScore, ScoredInstance};

/// One classification outcome, carrying the bin and threshold that produced
/// it so a single instance's decision can be audited end to end.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Verdict {
    pub id: String,
    pub bin: usize,
    pub score: NonconformityScore,
    pub threshold: f64,
    pub label_out: Label,
}

/// Classify one instance against a calibrated table.
pub fn detect(
    table: &QuantileTable,
    profile: &DetectorProfile,
    instance: &ScoredInstance,
) -> Result<Verdict> {
    if profile.l_max != table.l_max {
        return Err(Error::LMaxMismatch {
            profile: profile.l_max,
            table: table.l_max,
        });
    }
    let score = nonconformity(profile, instance.raw_score).map_err(|e| match e {
        Error::NonFiniteScore { value, .. } => Error::NonFiniteScore {
            id: Some(instance.id.clone()),
            value,
        },
        other => other,
    })?;
    let bin = bin_index(instance.length, table.w, table.bins.len());
    let threshold = table.bins[bin].q;
    let label_out = if score.value() > threshold {
        Label::Machine
    } else {
        Label::Human
    };
    Ok(Verdict {
        id: instance.id.clone(),
        bin,
        score,
        threshold,
        label_out,
    })
}

/// Classify a batch, preserving input order.
///
/// Instances are scored in parallel; the output order and every verdict are
/// identical to a sequential pass, and the first failing instance (in input
/// order) determines the error.
pub fn detect_batch(
    table: &QuantileTable,
    profile: &DetectorProfile,
    instances: &[ScoredInstance],
) -> Result<Vec<Verdict>> {
    if profile.l_max != table.l_max {
        return Err(Error::LMaxMismatch {
            profile: profile.l_max,
            table: table.l_max,
        });
    }
    let results: Vec<Result<Verdict>> = instances
        .par_iter()
        .map(|inst| detect(table, profile, inst))
        .collect();
    results.into_iter().collect()
}
