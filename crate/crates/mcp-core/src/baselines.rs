//! Classical calibration baselines: max-F1 thresholding, Platt scaling,
//! and isotonic regression.
//!
//! Unlike conformal calibration, all three need machine-labeled data to
//! fit. They optimize classification quality and provide no false-positive
//! bound; they exist here so the conformal route can be compared against
//! them on equal footing.
//!
//! Platt scaling fits `P(machine | s) = 1 / (1 + exp(-(A*s + B)))` by
//! Newton's method on the Bernoulli log-likelihood with the standard
//! smoothed targets `t+ = (N+ + 1)/(N+ + 2)`, `t- = 1/(N- + 2)`, which keep
//! the optimum finite on separable data. Isotonic regression is exact
//! pool-adjacent-violators over score-sorted labels, ties in score pooled
//! first.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::types::{Label, NonconformityScore};

/// Platt stopping rule: log-likelihood improvement below this, or the
/// iteration cap, whichever first.
const PLATT_TOLERANCE: f64 = 1e-10;
const PLATT_MAX_ITERATIONS: usize = 200;

/// Labeled nonconformity scores for fitting baselines.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledScores {
    pub entries: Vec<(NonconformityScore, Label)>,
}

impl LabeledScores {
    pub fn new(entries: Vec<(NonconformityScore, Label)>) -> Self {
        Self { entries }
    }

    fn class_counts(&self) -> (usize, usize) {
        let machine = self
            .entries
            .iter()
            .filter(|(_, l)| *l == Label::Machine)
            .count();
        (self.entries.len() - machine, machine)
    }

    fn require_both_classes(&self) -> Result<()> {
        let (n_human, n_machine) = self.class_counts();
        if n_human == 0 || n_machine == 0 {
            return Err(Error::SingleClass { n_human, n_machine });
        }
        Ok(())
    }
}

/// Which baseline a model is.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CalibratorKind {
    MaxF1,
    Platt,
    Isotonic,
}

impl std::fmt::Display for CalibratorKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CalibratorKind::MaxF1 => write!(f, "max_f1"),
            CalibratorKind::Platt => write!(f, "platt"),
            CalibratorKind::Isotonic => write!(f, "isotonic"),
        }
    }
}

/// A fitted baseline. Exactly the fields for its kind are populated.
#[derive(Debug, Clone, PartialEq)]
pub enum CalibratorModel {
    /// Decision threshold maximizing F1; may be -inf (classify everything
    /// machine) or +inf (everything human).
    MaxF1 { threshold: f64, f1: f64 },
    /// Logistic slope and intercept for P(machine | s) = sigmoid(a*s + b).
    Platt { a: f64, b: f64 },
    /// Nondecreasing step function: (score breakpoint, fitted probability).
    Isotonic { steps: Vec<(f64, f64)> },
}

impl CalibratorModel {
    pub fn kind(&self) -> CalibratorKind {
        match self {
            CalibratorModel::MaxF1 { .. } => CalibratorKind::MaxF1,
            CalibratorModel::Platt { .. } => CalibratorKind::Platt,
            CalibratorModel::Isotonic { .. } => CalibratorKind::Isotonic,
        }
    }
}

/// F1 of the rule "machine iff score > threshold" on labeled data.
fn f1_at_threshold(entries: &[(f64, Label)], threshold: f64) -> f64 {
    let (mut tp, mut fp, mut fn_) = (0usize, 0usize, 0usize);
    for &(s, label) in entries {
        let predicted_machine = s > threshold;
        match (predicted_machine, label) {
            (true, Label::Machine) => tp += 1,
            (true, Label::Human) => fp += 1,
            (false, Label::Machine) => fn_ += 1,
            (false, Label::Human) => {}
        }
    }
    if 2 * tp + fp + fn_ == 0 {
        0.0
    } else {
        2.0 * tp as f64 / (2 * tp + fp + fn_) as f64
    }
}

/// Fit the threshold maximizing F1 (machine = positive class).
///
/// Candidates are the midpoints between consecutive distinct scores plus
/// the -inf/+inf sentinels; ties in F1 break toward the smallest threshold,
/// favoring recall.
pub fn fit_max_f1(data: &LabeledScores) -> Result<CalibratorModel> {
    data.require_both_classes()?;
    let entries: Vec<(f64, Label)> = data
        .entries
        .iter()
        .map(|&(s, l)| (s.value(), l))
        .collect();

    let mut distinct: Vec<f64> = entries.iter().map(|&(s, _)| s).collect();
    distinct.sort_by(|a, b| a.total_cmp(b));
    distinct.dedup();

    let mut candidates = Vec::with_capacity(distinct.len() + 1);
    candidates.push(f64::NEG_INFINITY);
    for pair in distinct.windows(2) {
        candidates.push((pair[0] + pair[1]) / 2.0);
    }
    candidates.push(f64::INFINITY);

    let mut best = (f64::INFINITY, f64::NEG_INFINITY); // (threshold, f1)
    for &t in &candidates {
        let f1 = f1_at_threshold(&entries, t);
        if f1 > best.1 {
            best = (t, f1);
        }
    }
    Ok(CalibratorModel::MaxF1 {
        threshold: best.0,
        f1: best.1,
    })
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Bernoulli log-likelihood of targets under p = sigmoid(a*s + b).
///
/// Evaluated in the numerically stable form
/// `t*ln(p) + (1-t)*ln(1-p) = -(1-t)*z - ln(1 + exp(-z))`.
pub fn platt_log_likelihood(entries: &[(f64, f64)], a: f64, b: f64) -> f64 {
    let mut ll = 0.0;
    for &(s, t) in entries {
        let z = a * s + b;
        let log1p_exp = if z >= 0.0 {
            (-z).exp().ln_1p()
        } else {
            -z + z.exp().ln_1p()
        };
        ll += -(1.0 - t) * z - log1p_exp;
    }
    ll
}

fn platt_targets(data: &LabeledScores) -> Vec<(f64, f64)> {
    let (n_human, n_machine) = data.class_counts();
    let t_pos = (n_machine as f64 + 1.0) / (n_machine as f64 + 2.0);
    let t_neg = 1.0 / (n_human as f64 + 2.0);
    data.entries
        .iter()
        .map(|&(s, l)| {
            let t = if l == Label::Machine { t_pos } else { t_neg };
            (s.value(), t)
        })
        .collect()
}

/// Fit Platt scaling by Newton's method with backtracking line search.
pub fn fit_platt(data: &LabeledScores) -> Result<CalibratorModel> {
    data.require_both_classes()?;
    let entries = platt_targets(data);
    let (n_human, n_machine) = data.class_counts();

    // Start at the prior log-odds so the first iterate is already sane.
    let mut a = 0.0;
    let mut b = ((n_machine as f64 + 1.0) / (n_human as f64 + 1.0)).ln();
    let mut ll = platt_log_likelihood(&entries, a, b);

    const HESSIAN_RIDGE: f64 = 1e-12;
    for _ in 0..PLATT_MAX_ITERATIONS {
        let (mut h_aa, mut h_bb) = (HESSIAN_RIDGE, HESSIAN_RIDGE);
        let (mut h_ab, mut g_a, mut g_b) = (0.0, 0.0, 0.0);
        for &(s, t) in &entries {
            let p = sigmoid(a * s + b);
            let d2 = p * (1.0 - p);
            h_aa += s * s * d2;
            h_bb += d2;
            h_ab += s * d2;
            let d1 = t - p;
            g_a += s * d1;
            g_b += d1;
        }

        // Newton direction: solve H * step = gradient (ascent).
        let det = h_aa * h_bb - h_ab * h_ab;
        let step_a = (h_bb * g_a - h_ab * g_b) / det;
        let step_b = (h_aa * g_b - h_ab * g_a) / det;

        let mut stepsize = 1.0;
        let mut improved = false;
        while stepsize >= 1e-12 {
            let (na, nb) = (a + stepsize * step_a, b + stepsize * step_b);
            let nll = platt_log_likelihood(&entries, na, nb);
            if nll > ll - 1e-16 {
                let gain = nll - ll;
                a = na;
                b = nb;
                ll = nll;
                improved = true;
                if gain < PLATT_TOLERANCE {
                    return Ok(CalibratorModel::Platt { a, b });
                }
                break;
            }
            stepsize /= 2.0;
        }
        if !improved {
            // Line search exhausted: we are at a stationary point up to
            // floating-point resolution.
            return Ok(CalibratorModel::Platt { a, b });
        }
    }
    Err(Error::PlattDiverged {
        a,
        b,
        iterations: PLATT_MAX_ITERATIONS,
    })
}

/// Exact isotonic regression by pool-adjacent-violators.
///
/// Scores are sorted, ties pooled into weighted points first, then adjacent
/// blocks whose means violate monotonicity are merged. Block means are
/// computed as sum/count only at the end, so the fitted values match a
/// brute-force least-squares solution bit for bit on 0/1 labels.
pub fn fit_isotonic(data: &LabeledScores) -> Result<CalibratorModel> {
    data.require_both_classes()?;
    let mut points: Vec<(f64, f64)> = data
        .entries
        .iter()
        .map(|&(s, l)| (s.value(), if l == Label::Machine { 1.0 } else { 0.0 }))
        .collect();
    points.sort_by(|a, b| a.0.total_cmp(&b.0));

    // Pool exact score ties into weighted points.
    let mut xs: Vec<f64> = Vec::new();
    let mut sums: Vec<f64> = Vec::new();
    let mut weights: Vec<usize> = Vec::new();
    for (x, y) in points {
        if xs.last() == Some(&x) {
            *sums.last_mut().unwrap() += y;
            *weights.last_mut().unwrap() += 1;
        } else {
            xs.push(x);
            sums.push(y);
            weights.push(1);
        }
    }

    // PAVA over blocks of (sum, weight, span).
    let mut blocks: Vec<(f64, usize, usize)> = Vec::with_capacity(xs.len());
    for i in 0..xs.len() {
        blocks.push((sums[i], weights[i], 1));
        while blocks.len() >= 2 {
            let (s2, w2, c2) = blocks[blocks.len() - 1];
            let (s1, w1, c1) = blocks[blocks.len() - 2];
            if s1 / w1 as f64 > s2 / w2 as f64 {
                blocks.pop();
                blocks.pop();
                blocks.push((s1 + s2, w1 + w2, c1 + c2));
            } else {
                break;
            }
        }
    }

    let mut steps = Vec::with_capacity(xs.len());
    let mut idx = 0;
    for (sum, weight, span) in blocks {
        let mean = sum / weight as f64;
        for _ in 0..span {
            steps.push((xs[idx], mean));
            idx += 1;
        }
    }
    Ok(CalibratorModel::Isotonic { steps })
}

/// Evaluate a fitted calibrator on one score.
///
/// Returns the calibrated machine probability and the label at the given
/// probability cut; max-F1 reports a hard 0/1 probability. Ties classify as
/// human, consistent with detection.
pub fn apply_calibrator(
    model: &CalibratorModel,
    score: NonconformityScore,
    cut: f64,
) -> (f64, Label) {
    let s = score.value();
    let prob = match model {
        CalibratorModel::MaxF1 { threshold, .. } => {
            if s > *threshold {
                1.0
            } else {
                0.0
            }
        }
        CalibratorModel::Platt { a, b } => sigmoid(a * s + b),
        CalibratorModel::Isotonic { steps } => {
            // Largest breakpoint <= s, flat extrapolation at both ends.
            match steps.binary_search_by(|(x, _)| x.total_cmp(&s)) {
                Ok(i) => steps[i].1,
                Err(0) => steps[0].1,
                Err(i) => steps[i - 1].1,
            }
        }
    };
    let label = match model {
        // The hard threshold rule decides directly; the 0/1 probability is
        // just its report.
        CalibratorModel::MaxF1 { threshold, .. } => {
            if s > *threshold {
                Label::Machine
            } else {
                Label::Human
            }
        }
        _ => {
            if prob > cut {
                Label::Machine
            } else {
                Label::Human
            }
        }
    };
    (prob, label)
}
