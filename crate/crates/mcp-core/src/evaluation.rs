//! Detection metrics: FPR, TPR, F1, fixed-FPR operating points, alpha
//! sweeps, and the length-score correlation diagnostic.
//!
//! Machine-generated is the positive class throughout. Degenerate 0/0
//! ratios are defined as 0 so sweeps stay total at extreme alphas.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::calibration::{calibrate_cp, calibrate_mcp, CalibrationSet};
use crate::detection::detect_batch;
use crate::error::{Error, Result};
use crate::types::{Label, NonconformityScore, ScoredInstance};

/// Confusion counts with machine as the positive class.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ConfusionCounts {
    pub tp: usize,
    pub fp: usize,
    pub tn: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
}

impl ConfusionCounts {
    pub fn total(&self) -> usize {
        self.tp + self.fp + self.tn + self.fn_
    }

    fn record(&mut self, predicted: Label, truth: Label) {
        match (predicted, truth) {
            (Label::Machine, Label::Machine) => self.tp += 1,
            (Label::Machine, Label::Human) => self.fp += 1,
            (Label::Human, Label::Human) => self.tn += 1,
            (Label::Human, Label::Machine) => self.fn_ += 1,
        }
    }
}

/// Derived rates; every 0/0 is 0 by convention.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub fpr: f64,
    pub tpr: f64,
    pub precision: f64,
    pub f1: f64,
}

/// Confusion counts plus the rates derived from them, as one report row.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub counts: ConfusionCounts,
    #[serde(flatten)]
    pub metrics: Metrics,
}

impl EvalReport {
    pub fn from_counts(counts: ConfusionCounts) -> Self {
        Self {
            counts,
            metrics: metrics(&counts),
        }
    }
}

/// Positional confusion: predictions and truth aligned by index.
pub fn confusion(predicted: &[Label], truth: &[Label]) -> Result<ConfusionCounts> {
    if predicted.len() != truth.len() {
        return Err(Error::LengthMismatch {
            left: predicted.len(),
            right: truth.len(),
        });
    }
    let mut counts = ConfusionCounts::default();
    for (&p, &t) in predicted.iter().zip(truth) {
        counts.record(p, t);
    }
    Ok(counts)
}

/// Confusion joined on instance id; order-independent. Every prediction id
/// must appear exactly once in the truth side.
pub fn confusion_by_id(
    predicted: &[(String, Label)],
    truth: &[(String, Label)],
) -> Result<ConfusionCounts> {
    if predicted.len() != truth.len() {
        return Err(Error::LengthMismatch {
            left: predicted.len(),
            right: truth.len(),
        });
    }
    let mut lookup: HashMap<&str, Label> = HashMap::with_capacity(truth.len());
    for (id, label) in truth {
        if lookup.insert(id.as_str(), *label).is_some() {
            return Err(Error::IdMismatch { id: id.clone() });
        }
    }
    let mut counts = ConfusionCounts::default();
    for (id, p) in predicted {
        let t = lookup
            .remove(id.as_str())
            .ok_or_else(|| Error::IdMismatch { id: id.clone() })?;
        counts.record(*p, t);
    }
    Ok(counts)
}

/// FPR, TPR, precision, and F1 from confusion counts.
pub fn metrics(c: &ConfusionCounts) -> Metrics {
    let ratio = |num: usize, den: usize| if den == 0 { 0.0 } else { num as f64 / den as f64 };
    let fpr = ratio(c.fp, c.fp + c.tn);
    let tpr = ratio(c.tp, c.tp + c.fn_);
    let precision = ratio(c.tp, c.tp + c.fp);
    let f1 = if precision + tpr == 0.0 {
        0.0
    } else {
        2.0 * precision * tpr / (precision + tpr)
    };
    Metrics {
        fpr,
        tpr,
        precision,
        f1,
    }
}

/// An oracle operating point on the empirical ROC curve.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RocPoint {
    pub threshold: f64,
    pub fpr: f64,
    pub tpr: f64,
    pub f1: f64,
}

/// Pick the smallest threshold whose realized FPR on `scores_h` is at most
/// `target_fpr`, then report TPR and F1 at that threshold.
///
/// This is the oracle comparison row: the threshold is chosen on the test
/// human scores themselves, so its FPR matches the target by construction.
/// Classification uses strict `s > threshold`, consistent with detection.
pub fn vanilla_roc_point(
    scores_h: &[NonconformityScore],
    scores_m: &[NonconformityScore],
    target_fpr: f64,
) -> Result<RocPoint> {
    if scores_h.is_empty() {
        return Err(Error::EmptyInput("human scores"));
    }
    if scores_m.is_empty() {
        return Err(Error::EmptyInput("machine scores"));
    }
    let n_h = scores_h.len();
    let mut sorted_h: Vec<f64> = scores_h.iter().map(|s| s.value()).collect();
    sorted_h.sort_by(|a, b| a.total_cmp(b));

    // Largest number of human scores allowed above the threshold.
    let mut allowed = (target_fpr * n_h as f64).floor() as usize;
    while allowed + 1 <= n_h && (allowed + 1) as f64 / n_h as f64 <= target_fpr {
        allowed += 1;
    }
    while allowed > 0 && allowed as f64 / n_h as f64 > target_fpr {
        allowed -= 1;
    }

    let threshold = if allowed >= n_h {
        f64::NEG_INFINITY
    } else {
        sorted_h[n_h - 1 - allowed]
    };

    let fp = sorted_h.iter().filter(|&&s| s > threshold).count();
    let tp = scores_m.iter().filter(|s| s.value() > threshold).count();
    let counts = ConfusionCounts {
        tp,
        fp,
        tn: n_h - fp,
        fn_: scores_m.len() - tp,
    };
    let m = metrics(&counts);
    Ok(RocPoint {
        threshold,
        fpr: m.fpr,
        tpr: m.tpr,
        f1: m.f1,
    })
}

/// Which calibration route produced a sweep row.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepMode {
    VanillaRoc,
    Cp,
    Mcp,
    Baseline,
}

impl std::fmt::Display for SweepMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            SweepMode::VanillaRoc => write!(f, "vanilla_roc"),
            SweepMode::Cp => write!(f, "cp"),
            SweepMode::Mcp => write!(f, "mcp"),
            SweepMode::Baseline => write!(f, "baseline"),
        }
    }
}

/// One (mode, alpha) evaluation row in long format.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub mode: SweepMode,
    pub alpha: f64,
    pub fpr: f64,
    pub tpr: f64,
    pub f1: f64,
}

/// Plot-ready long-format table: one row per alpha per mode.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct SweepReport {
    pub rows: Vec<SweepRow>,
}

/// Recalibrate and evaluate at each alpha.
///
/// MCP and CP rows recalibrate on `cal` at each alpha and classify the test
/// set; vanilla rows are ROC operating points with the threshold chosen on
/// the test human scores at `target_fpr = alpha`. Every test instance must
/// carry a label.
pub fn sweep(
    cal: &CalibrationSet,
    test: &[ScoredInstance],
    w: u32,
    alphas: &[f64],
    modes: &[SweepMode],
) -> Result<SweepReport> {
    let truth: Vec<Label> = test
        .iter()
        .map(|inst| {
            inst.label.ok_or_else(|| Error::MissingLabel {
                id: inst.id.clone(),
            })
        })
        .collect::<Result<_>>()?;

    let scored = crate::types::score_batch(&cal.profile, test)?;
    let scores_h: Vec<NonconformityScore> = scored
        .iter()
        .zip(&truth)
        .filter(|(_, &t)| t == Label::Human)
        .map(|((_, _, s), _)| *s)
        .collect();
    let scores_m: Vec<NonconformityScore> = scored
        .iter()
        .zip(&truth)
        .filter(|(_, &t)| t == Label::Machine)
        .map(|((_, _, s), _)| *s)
        .collect();

    let mut rows = Vec::with_capacity(alphas.len() * modes.len());
    for &mode in modes {
        for &alpha in alphas {
            let row = match mode {
                SweepMode::VanillaRoc => {
                    let pt = vanilla_roc_point(&scores_h, &scores_m, alpha)?;
                    SweepRow {
                        mode,
                        alpha,
                        fpr: pt.fpr,
                        tpr: pt.tpr,
                        f1: pt.f1,
                    }
                }
                SweepMode::Cp | SweepMode::Mcp => {
                    let table = if mode == SweepMode::Cp {
                        calibrate_cp(cal, alpha)?
                    } else {
                        calibrate_mcp(cal, alpha, w)?
                    };
                    let verdicts = detect_batch(&table, &cal.profile, test)?;
                    let predicted: Vec<Label> = verdicts.iter().map(|v| v.label_out).collect();
                    let m = metrics(&confusion(&predicted, &truth)?);
                    SweepRow {
                        mode,
                        alpha,
                        fpr: m.fpr,
                        tpr: m.tpr,
                        f1: m.f1,
                    }
                }
                SweepMode::Baseline => {
                    return Err(Error::InvalidConfig(
                        "baseline rows are produced by baseline_sweep_rows".into(),
                    ))
                }
            };
            rows.push(row);
        }
    }
    Ok(SweepReport { rows })
}

/// Baseline rows for a sweep: the decision rule of a fitted calibrator does
/// not depend on alpha, so its metrics repeat across the grid for
/// side-by-side plotting.
pub fn baseline_sweep_rows(
    model: &crate::baselines::CalibratorModel,
    cal: &CalibrationSet,
    test: &[ScoredInstance],
    alphas: &[f64],
    cut: f64,
) -> Result<Vec<SweepRow>> {
    let truth: Vec<Label> = test
        .iter()
        .map(|inst| {
            inst.label.ok_or_else(|| Error::MissingLabel {
                id: inst.id.clone(),
            })
        })
        .collect::<Result<_>>()?;
    let scored = crate::types::score_batch(&cal.profile, test)?;
    let predicted: Vec<Label> = scored
        .iter()
        .map(|(_, _, s)| crate::baselines::apply_calibrator(model, *s, cut).1)
        .collect();
    let m = metrics(&confusion(&predicted, &truth)?);
    Ok(alphas
        .iter()
        .map(|&alpha| SweepRow {
            mode: SweepMode::Baseline,
            alpha,
            fpr: m.fpr,
            tpr: m.tpr,
            f1: m.f1,
        })
        .collect())
}

/// Sample Pearson correlation between text length and score.
///
/// Errors when fewer than two entries are given or either coordinate has
/// zero variance.
pub fn pearson_length_score(entries: &[(u32, f64)]) -> Result<f64> {
    if entries.len() < 2 {
        return Err(Error::EmptyInput("need at least two entries"));
    }
    let n = entries.len() as f64;
    let mean_l = entries.iter().map(|&(l, _)| l as f64).sum::<f64>() / n;
    let mean_s = entries.iter().map(|&(_, s)| s).sum::<f64>() / n;
    let (mut cov, mut var_l, mut var_s) = (0.0, 0.0, 0.0);
    for &(l, s) in entries {
        let dl = l as f64 - mean_l;
        let ds = s - mean_s;
        cov += dl * ds;
        var_l += dl * dl;
        var_s += ds * ds;
    }
    if var_l == 0.0 {
        return Err(Error::ZeroVariance("length"));
    }
    if var_s == 0.0 {
        return Err(Error::ZeroVariance("score"));
    }
    Ok(cov / (var_l.sqrt() * var_s.sqrt()))
}
