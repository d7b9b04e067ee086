//! Conformal quantile calibration, global and length-binned.
//!
//! Split conformal prediction computes, from `n` calibration scores, the
//! threshold
//!
//! ```text
//! q = r-th smallest score,   r = ceil((n + 1) * (1 - alpha))
//! ```
//!
//! and classifies a test score `s` as machine-generated when `s > q`. Under
//! exchangeability this bounds the false positive rate by `alpha`.
//!
//! The multiscaled variant partitions the maximum calibrated length `l_max`
//! into `K = floor(l_max / w)` equal-width bins and computes one quantile per
//! bin, so that the strong positive correlation between text length and
//! nonconformity score does not let short machine-generated texts hide under
//! a single global threshold.
//!
//! When a bin holds too few scores the rank `r` exceeds the sample size and
//! no finite-sample threshold exists; such bins get the sentinel threshold
//! 1.0, which classifies everything in them as human (scores are strictly
//! below 1). This is the conservative direction for the FPR bound.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::types::{DetectorProfile, Label, NonconformityScore, ScoredInstance};

/// Threshold assigned to a bin whose sample is too small to calibrate.
pub const SENTINEL_THRESHOLD: f64 = 1.0;

/// Human-only scores used to estimate thresholds, never evaluated.
#[derive(Debug, Clone, PartialEq)]
pub struct CalibrationSet {
    pub profile: DetectorProfile,
    pub entries: Vec<CalEntry>,
}

/// One calibration observation: token length and nonconformity score.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CalEntry {
    pub length: u32,
    pub score: NonconformityScore,
}

impl CalibrationSet {
    pub fn new(profile: DetectorProfile, entries: Vec<CalEntry>) -> Self {
        Self { profile, entries }
    }

    /// Build a calibration set from scored instances, enforcing the
    /// human-only rule: machine-labeled records are always rejected, and
    /// unlabeled records are rejected unless `allow_unlabeled` is set.
    pub fn from_instances(
        profile: DetectorProfile,
        instances: &[ScoredInstance],
        allow_unlabeled: bool,
    ) -> Result<Self> {
        let mut entries = Vec::with_capacity(instances.len());
        for inst in instances {
            match inst.label {
                Some(Label::Machine) => {
                    return Err(Error::CalibrationNotHuman {
                        id: inst.id.clone(),
                    })
                }
                None if !allow_unlabeled => {
                    return Err(Error::CalibrationUnlabeled {
                        id: inst.id.clone(),
                    })
                }
                _ => {}
            }
            let score = crate::types::nonconformity(&profile, inst.raw_score).map_err(|e| {
                match e {
                    Error::NonFiniteScore { value, .. } => Error::NonFiniteScore {
                        id: Some(inst.id.clone()),
                        value,
                    },
                    other => other,
                }
            })?;
            entries.push(CalEntry {
                length: inst.length,
                score,
            });
        }
        Ok(Self { profile, entries })
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

/// One calibrated length bin.
///
/// `lo` is inclusive; `hi` is exclusive except for the last bin, which is
/// recorded up to `l_max` and absorbs all longer texts via clamping.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BinRecord {
    pub lo: u32,
    pub hi: u32,
    pub n: usize,
    pub q: f64,
}

impl BinRecord {
    pub fn is_sentinel(&self) -> bool {
        self.q == SENTINEL_THRESHOLD
    }
}

/// The calibrated artifact: per-bin conformal thresholds.
#[derive(Debug, Clone, PartialEq)]
pub struct QuantileTable {
    pub alpha: f64,
    pub w: u32,
    pub l_max: u32,
    pub bins: Vec<BinRecord>,
}

impl QuantileTable {
    pub fn k_bins(&self) -> usize {
        self.bins.len()
    }

    /// Threshold for a given text length (clamped into the last bin).
    pub fn threshold_for(&self, length: u32) -> (usize, f64) {
        let bin = bin_index(length, self.w, self.bins.len());
        (bin, self.bins[bin].q)
    }

    pub fn sentinel_count(&self) -> usize {
        self.bins.iter().filter(|b| b.is_sentinel()).count()
    }
}

fn check_alpha(alpha: f64) -> Result<()> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::InvalidAlpha(alpha));
    }
    Ok(())
}

/// Conformal rank r = ceil((n + 1) * (1 - alpha)), 1-indexed.
fn conformal_rank(n: usize, alpha: f64) -> usize {
    ((n + 1) as f64 * (1.0 - alpha)).ceil() as usize
}

/// Split-conformal quantile of a score sample.
///
/// Returns the r-th smallest score for r = ceil((n+1)(1-alpha)); when the
/// rank exceeds the sample size the sample is too small for the requested
/// alpha and the sentinel 1.0 is returned. Permutation-invariant.
pub fn cp_quantile(scores: &[NonconformityScore], alpha: f64) -> Result<f64> {
    check_alpha(alpha)?;
    if scores.is_empty() {
        return Err(Error::EmptyCalibration);
    }
    let n = scores.len();
    let r = conformal_rank(n, alpha);
    if r > n {
        return Ok(SENTINEL_THRESHOLD);
    }
    // Selection rather than a full sort; the oracle tests cross-check this
    // against sort-then-index.
    let mut values: Vec<f64> = scores.iter().map(|s| s.value()).collect();
    let (_, rth, _) = values.select_nth_unstable_by(r - 1, |a, b| a.total_cmp(b));
    Ok(*rth)
}

/// Bin index for a text length: floor(length / w), clamped into the last
/// bin so over-length texts reuse the longest calibrated interval.
pub fn bin_index(length: u32, w: u32, k_bins: usize) -> usize {
    ((length / w) as usize).min(k_bins - 1)
}

/// Multiscaled calibration: one conformal quantile per length bin.
///
/// `K = floor(l_max / w)` bins of width `w`; each bin's threshold comes from
/// the calibration scores whose lengths fall in it. Empty or undersized bins
/// get the sentinel. Deterministic and invariant under permutation of the
/// calibration entries.
pub fn calibrate_mcp(cal: &CalibrationSet, alpha: f64, w: u32) -> Result<QuantileTable> {
    calibrate_mcp_opts(cal, alpha, w, false)
}

/// As [`calibrate_mcp`], with optional sparse-bin merging: a bin too small
/// to calibrate is pooled into its left neighbor and both report the pooled
/// quantile and count. The leftmost bin has no neighbor and keeps the
/// sentinel if sparse.
pub fn calibrate_mcp_opts(
    cal: &CalibrationSet,
    alpha: f64,
    w: u32,
    merge_sparse: bool,
) -> Result<QuantileTable> {
    check_alpha(alpha)?;
    let l_max = cal.profile.l_max;
    if w < 1 || w > l_max {
        return Err(Error::InvalidWidth { w, l_max });
    }
    if cal.is_empty() {
        return Err(Error::EmptyCalibration);
    }

    let k = (l_max / w) as usize;
    let mut pools: Vec<Vec<NonconformityScore>> = vec![Vec::new(); k];
    for entry in &cal.entries {
        pools[bin_index(entry.length, w, k)].push(entry.score);
    }

    let is_sparse = |pool: &[NonconformityScore]| conformal_rank(pool.len(), alpha) > pool.len();

    // Pool sparse bins leftward before computing quantiles. A merged bin
    // shares its neighbor's pool, so both report the pooled sample.
    let mut groups: Vec<usize> = (0..k).collect();
    if merge_sparse {
        for i in 1..k {
            if is_sparse(&pools[i]) {
                let moved = std::mem::take(&mut pools[i]);
                let target = groups[i - 1];
                pools[target].extend(moved);
                groups[i] = target;
            }
        }
    }

    let mut group_q = vec![SENTINEL_THRESHOLD; k];
    let mut group_n = vec![0usize; k];
    for i in 0..k {
        if groups[i] != i {
            continue;
        }
        group_n[i] = pools[i].len();
        if !pools[i].is_empty() && !is_sparse(&pools[i]) {
            group_q[i] = cp_quantile(&pools[i], alpha)?;
        }
    }

    let bins = (0..k)
        .map(|i| {
            let g = groups[i];
            BinRecord {
                lo: i as u32 * w,
                hi: if i + 1 == k { l_max } else { (i as u32 + 1) * w },
                n: group_n[g],
                q: group_q[g],
            }
        })
        .collect();

    Ok(QuantileTable {
        alpha,
        w,
        l_max,
        bins,
    })
}

/// Single-quantile calibration over the whole score distribution: the
/// ablation baseline. Produces a one-bin table structurally identical to
/// [`calibrate_mcp`] with `w = l_max`, so all downstream machinery applies.
pub fn calibrate_cp(cal: &CalibrationSet, alpha: f64) -> Result<QuantileTable> {
    check_alpha(alpha)?;
    if cal.is_empty() {
        return Err(Error::EmptyCalibration);
    }
    let scores: Vec<NonconformityScore> = cal.entries.iter().map(|e| e.score).collect();
    let n = scores.len();
    let q = cp_quantile(&scores, alpha)?;
    let l_max = cal.profile.l_max;
    Ok(QuantileTable {
        alpha,
        w: l_max,
        l_max,
        bins: vec![BinRecord {
            lo: 0,
            hi: l_max,
            n,
            q,
        }],
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::types::Polarity;
    use proptest::prelude::*;
    use rand::prelude::*;
    use rand::Rng as _;
    use rand_chacha::ChaCha8Rng;

    fn score(v: f64) -> NonconformityScore {
        NonconformityScore::new(v).unwrap()
    }

    fn scores(vs: &[f64]) -> Vec<NonconformityScore> {
        vs.iter().map(|&v| score(v)).collect()
    }

    fn profile(l_max: u32) -> DetectorProfile {
        DetectorProfile::new("test", Polarity::Positive, 0.0, l_max).unwrap()
    }

    fn cal_set(l_max: u32, entries: &[(u32, f64)]) -> CalibrationSet {
        CalibrationSet::new(
            profile(l_max),
            entries
                .iter()
                .map(|&(length, s)| CalEntry {
                    length,
                    score: score(s),
                })
                .collect(),
        )
    }

    /// Independent oracle: full sort, then 1-indexed rank lookup.
    fn brute_force_quantile(vals: &[f64], alpha: f64) -> f64 {
        let n = vals.len();
        let r = ((n + 1) as f64 * (1.0 - alpha)).ceil() as usize;
        if r > n {
            return SENTINEL_THRESHOLD;
        }
        let mut sorted = vals.to_vec();
        sorted.sort_by(|a, b| a.total_cmp(b));
        sorted[r - 1]
    }

    #[test]
    fn quantile_rank_example() {
        // n=4, alpha=0.2: r = ceil(5 * 0.8) = 4 -> the 4th smallest.
        let q = cp_quantile(&scores(&[0.1, 0.2, 0.3, 0.4]), 0.2).unwrap();
        assert_eq!(q, 0.4);
        assert_eq!(brute_force_quantile(&[0.1, 0.2, 0.3, 0.4], 0.2), 0.4);
    }

    #[test]
    fn quantile_sentinel_when_rank_exceeds_sample() {
        // n=9, alpha=0.05: r = ceil(10 * 0.95) = 10 > 9.
        let vals: Vec<f64> = (1..=9).map(|i| i as f64 / 10.0).collect();
        assert_eq!(cp_quantile(&scores(&vals), 0.05).unwrap(), 1.0);
    }

    #[test]
    fn quantile_single_element() {
        assert_eq!(cp_quantile(&scores(&[0.5]), 0.6).unwrap(), 0.5);
    }

    #[test]
    fn quantile_input_errors() {
        assert!(matches!(
            cp_quantile(&[], 0.1),
            Err(Error::EmptyCalibration)
        ));
        for bad in [0.0, 1.0, -0.1, 1.5] {
            assert!(matches!(
                cp_quantile(&scores(&[0.5]), bad),
                Err(Error::InvalidAlpha(_))
            ));
        }
    }

    #[test]
    fn quantile_matches_brute_force_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..1000 {
            let n = rng.gen_range(1..=200);
            let vals: Vec<f64> = (0..n).map(|_| rng.gen_range(0.001..0.999)).collect();
            let alpha = rng.gen_range(0.001..0.999);
            let got = cp_quantile(&scores(&vals), alpha).unwrap();
            assert_eq!(got, brute_force_quantile(&vals, alpha), "n={n} alpha={alpha}");
        }
    }

    #[test]
    fn bin_index_examples() {
        assert_eq!(bin_index(250, 100, 10), 2);
        assert_eq!(bin_index(0, 100, 10), 0);
        assert_eq!(bin_index(5000, 100, 10), 9);
        assert_eq!(bin_index(1024, 100, 10), 9);
    }

    #[test]
    fn mcp_default_hyperparameters_give_ten_bins() {
        let entries: Vec<(u32, f64)> = (0..100).map(|i| (10 * i + 5, 0.3)).collect();
        let table = calibrate_mcp(&cal_set(1024, &entries), 0.05, 100).unwrap();
        assert_eq!(table.k_bins(), 10);
        assert_eq!(table.bins[0].lo, 0);
        assert_eq!(table.bins[0].hi, 100);
        assert_eq!(table.bins[9].lo, 900);
        assert_eq!(table.bins[9].hi, 1024);
    }

    #[test]
    fn mcp_single_bin_degenerate_case() {
        let entries = vec![(50u32, 0.3f64); 5000];
        let table = calibrate_mcp(&cal_set(1024, &entries), 0.05, 100).unwrap();
        assert_eq!(table.bins[0].q, 0.3);
        assert_eq!(table.bins[0].n, 5000);
        for bin in &table.bins[1..] {
            assert!(bin.is_sentinel());
            assert_eq!(bin.n, 0);
        }
    }

    #[test]
    fn mcp_all_bins_undercalibrated() {
        // alpha = 0.05 needs 19 samples per bin; give each bin 5.
        let mut entries = Vec::new();
        for bin in 0..10u32 {
            for j in 0..5u32 {
                entries.push((bin * 100 + j, 0.2 + 0.01 * j as f64));
            }
        }
        let table = calibrate_mcp(&cal_set(1024, &entries), 0.05, 100).unwrap();
        assert!(table.bins.iter().all(|b| b.is_sentinel()));
    }

    #[test]
    fn mcp_rejects_bad_width() {
        let set = cal_set(1024, &[(10, 0.5)]);
        assert!(matches!(
            calibrate_mcp(&set, 0.05, 2000),
            Err(Error::InvalidWidth { .. })
        ));
        assert!(matches!(
            calibrate_mcp(&set, 0.05, 0),
            Err(Error::InvalidWidth { .. })
        ));
    }

    #[test]
    fn mcp_rejects_empty_calibration() {
        let set = CalibrationSet::new(profile(1024), Vec::new());
        assert!(matches!(
            calibrate_mcp(&set, 0.05, 100),
            Err(Error::EmptyCalibration)
        ));
    }

    #[test]
    fn cp_ignores_lengths() {
        let a = cal_set(1024, &[(10, 0.1), (500, 0.2), (900, 0.3), (100, 0.4)]);
        let b = cal_set(1024, &[(900, 0.1), (10, 0.2), (100, 0.3), (500, 0.4)]);
        let (ta, tb) = (calibrate_cp(&a, 0.2).unwrap(), calibrate_cp(&b, 0.2).unwrap());
        assert_eq!(ta.bins[0].q, tb.bins[0].q);
        assert_eq!(ta.k_bins(), 1);
    }

    #[test]
    fn cp_constant_sample() {
        let entries = vec![(50u32, 0.3f64); 5000];
        let table = calibrate_cp(&cal_set(1024, &entries), 0.05).unwrap();
        assert_eq!(table.k_bins(), 1);
        assert_eq!(table.bins[0].q, 0.3);
    }

    #[test]
    fn cp_equals_mcp_at_full_width() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..100 {
            let n = rng.gen_range(1..300);
            let l_max = rng.gen_range(50..2000);
            let entries: Vec<(u32, f64)> = (0..n)
                .map(|_| (rng.gen_range(0..l_max * 2), rng.gen_range(0.001..0.999)))
                .collect();
            let alpha = rng.gen_range(0.01..0.5);
            let set = cal_set(l_max, &entries);
            let via_cp = calibrate_cp(&set, alpha).unwrap();
            let via_mcp = calibrate_mcp(&set, alpha, l_max).unwrap();
            assert_eq!(via_cp, via_mcp);
        }
    }

    #[test]
    fn merge_sparse_pools_leftward() {
        // Bin 0 well-populated, bin 1 sparse: with merging, bin 1 reports
        // bin 0's pooled quantile instead of the sentinel.
        let mut entries: Vec<(u32, f64)> = (0..50).map(|i| (10, 0.2 + 0.001 * i as f64)).collect();
        entries.push((150, 0.9));
        let set = cal_set(200, &entries);
        let plain = calibrate_mcp(&set, 0.1, 100).unwrap();
        assert!(plain.bins[1].is_sentinel());
        let merged = calibrate_mcp_opts(&set, 0.1, 100, true).unwrap();
        assert!(!merged.bins[1].is_sentinel());
        assert_eq!(merged.bins[0].q, merged.bins[1].q);
        assert_eq!(merged.bins[0].n, 51);
        assert_eq!(merged.bins[1].n, 51);
    }

    #[test]
    fn merge_sparse_leftmost_bin_keeps_sentinel() {
        let entries = vec![(10u32, 0.5f64); 3];
        let set = cal_set(200, &entries);
        let merged = calibrate_mcp_opts(&set, 0.05, 100, true).unwrap();
        assert!(merged.bins[0].is_sentinel());
    }

    #[test]
    fn adding_low_score_moves_threshold_at_most_one_step() {
        // Inserting one score below the current threshold can lower the
        // quantile by at most one order-statistic step; verified against
        // brute-force recomputation.
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        for _ in 0..200 {
            let n = rng.gen_range(5..100);
            let mut vals: Vec<f64> = (0..n).map(|_| rng.gen_range(0.01..0.99)).collect();
            let alpha = rng.gen_range(0.05..0.5);
            let old_q = brute_force_quantile(&vals, alpha);
            if old_q == SENTINEL_THRESHOLD {
                continue;
            }
            let mut sorted = vals.clone();
            sorted.sort_by(|a, b| a.total_cmp(b));
            let old_r = ((n + 1) as f64 * (1.0 - alpha)).ceil() as usize;
            let one_step_below = if old_r >= 2 { sorted[old_r - 2] } else { 0.0 };

            let new_val = rng.gen_range(0.001..old_q.min(0.989));
            vals.push(new_val);
            let new_q = cp_quantile(&scores(&vals), alpha).unwrap();
            assert_eq!(new_q, brute_force_quantile(&vals, alpha));
            assert!(new_q <= old_q);
            assert!(new_q >= one_step_below, "dropped more than one step");
        }
    }

    #[test]
    fn from_instances_enforces_human_only() {
        let p = profile(1024);
        let machine = ScoredInstance::new("m1", 10, 0.5).with_label(Label::Machine);
        let err = CalibrationSet::from_instances(p.clone(), &[machine], false).unwrap_err();
        assert!(matches!(err, Error::CalibrationNotHuman { .. }));

        let unlabeled = ScoredInstance::new("u1", 10, 0.5);
        let err = CalibrationSet::from_instances(p.clone(), &[unlabeled.clone()], false)
            .unwrap_err();
        assert!(matches!(err, Error::CalibrationUnlabeled { .. }));
        assert_eq!(
            CalibrationSet::from_instances(p.clone(), &[unlabeled], true)
                .unwrap()
                .len(),
            1
        );

        // Machine labels are rejected even with the unlabeled override.
        let machine = ScoredInstance::new("m2", 10, 0.5).with_label(Label::Machine);
        assert!(CalibrationSet::from_instances(p, &[machine], true).is_err());
    }

    proptest! {
        #[test]
        fn table_is_permutation_invariant(
            raw in prop::collection::vec((0u32..2048, 0.001f64..0.999), 1..200),
            seed in 0u64..1000,
            alpha in 0.01f64..0.5,
        ) {
            let set = cal_set(1024, &raw);
            let mut shuffled = raw.clone();
            shuffled.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
            let set2 = cal_set(1024, &shuffled);
            prop_assert_eq!(
                calibrate_mcp(&set, alpha, 100).unwrap(),
                calibrate_mcp(&set2, alpha, 100).unwrap()
            );
        }

        #[test]
        fn thresholds_monotone_in_alpha(
            raw in prop::collection::vec((0u32..1024, 0.001f64..0.999), 1..150),
            a1 in 0.01f64..0.49,
            bump in 0.01f64..0.5,
        ) {
            let a2 = a1 + bump;
            let set = cal_set(1024, &raw);
            let t1 = calibrate_mcp(&set, a1, 100).unwrap();
            let t2 = calibrate_mcp(&set, a2, 100).unwrap();
            for (b1, b2) in t1.bins.iter().zip(&t2.bins) {
                prop_assert!(b1.q >= b2.q, "alpha {} gave {} < {} at alpha {}", a1, b1.q, b2.q, a2);
            }
        }
    }
}
