//! Threshold-free OOD evaluation. OOD is the positive class: an input is
//! flagged when its score is at or below the threshold.

use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::detectors::ScoreSet;
use crate::error::{invalid, Error, Result};

fn check(scores: &[f64], what: &'static str) -> Result<()> {
    if scores.is_empty() {
        return Err(Error::Empty(what));
    }
    if let Some(index) = scores.iter().position(|v| !v.is_finite()) {
        return Err(Error::NonFinite { index });
    }
    Ok(())
}

/// `P(s_id > s_ood) + P(s_id = s_ood) / 2` over all ID x OOD pairs.
///
/// Computed from the Mann-Whitney rank sum with average ranks for ties, in
/// doubled integer arithmetic so the result is exact up to the final division.
pub fn auroc(id_scores: &[f64], ood_scores: &[f64]) -> Result<f64> {
    check(id_scores, "ID scores")?;
    check(ood_scores, "OOD scores")?;
    // `+ 0.0` maps -0.0 to +0.0 so that signed zeros tie.
    let mut pooled: Vec<(f64, bool)> = id_scores
        .iter()
        .map(|&v| (v + 0.0, true))
        .chain(ood_scores.iter().map(|&v| (v + 0.0, false)))
        .collect();
    pooled.sort_unstable_by(|a, b| a.0.total_cmp(&b.0));

    // Twice the ID rank sum. A tie group occupying 1-based ranks
    // start..=end gives each member the average rank (start + end) / 2.
    let mut twice_rank_sum: u128 = 0;
    let mut start = 0;
    while start < pooled.len() {
        let mut end = start;
        while end + 1 < pooled.len() && pooled[end + 1].0 == pooled[start].0 {
            end += 1;
        }
        let id_in_group = pooled[start..=end].iter().filter(|p| p.1).count() as u128;
        twice_rank_sum += id_in_group * ((start + 1) + (end + 1)) as u128;
        start = end + 1;
    }
    let n = id_scores.len() as u128;
    let m = ood_scores.len() as u128;
    let twice_u = twice_rank_sum - n * (n + 1);
    Ok(twice_u as f64 / (2 * n * m) as f64)
}

/// Number of smallest OOD scores needed to reach 95% recall: `ceil(0.95 M)`.
fn recall95_rank(m: usize) -> usize {
    (95 * m).div_ceil(100)
}

/// False alarm rate at 95% OOD recall.
///
/// The threshold is the `ceil(0.95 M)`-th smallest OOD score, the smallest
/// observed score whose rule `score <= threshold` flags at least 95% of OOD
/// inputs. The result is the fraction of ID scores at or below it.
pub fn far95(id_scores: &[f64], ood_scores: &[f64]) -> Result<f64> {
    check(id_scores, "ID scores")?;
    check(ood_scores, "OOD scores")?;
    let mut ood: Vec<f64> = ood_scores.to_vec();
    ood.sort_unstable_by(f64::total_cmp);
    let threshold = ood[recall95_rank(ood.len()) - 1];
    let flagged = id_scores.iter().filter(|&&s| s <= threshold).count();
    Ok(flagged as f64 / id_scores.len() as f64)
}

/// AUROC and FAR95 of one detector on one ID/OOD pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub detector_name: String,
    pub auroc: f64,
    pub far95: f64,
    pub n_id: usize,
    pub n_ood: usize,
}

impl EvalReport {
    pub fn from_scores(id: &ScoreSet, ood: &ScoreSet) -> Result<Self> {
        if id.detector_name() != ood.detector_name() {
            return Err(invalid("scores", "ID and OOD scores come from different detectors"));
        }
        Self::from_values(id.detector_name(), id.values(), ood.values())
    }

    pub fn from_values(detector_name: &str, id: &[f64], ood: &[f64]) -> Result<Self> {
        Ok(Self {
            detector_name: detector_name.into(),
            auroc: auroc(id, ood)?,
            far95: far95(id, ood)?,
            n_id: id.len(),
            n_ood: ood.len(),
        })
    }
}

/// Critical value of the two-sided normal interval for the supported levels.
pub fn normal_critical_value(level: f64) -> Result<f64> {
    const TABLE: [(f64, f64); 3] = [(0.90, 1.645), (0.95, 1.96), (0.99, 2.576)];
    TABLE
        .iter()
        .find(|(l, _)| *l == level)
        .map(|&(_, z)| z)
        .ok_or_else(|| invalid("level", "supported confidence levels are 0.90, 0.95 and 0.99"))
}

/// Mean and normal-approximation confidence half-width of a sample.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanBand {
    pub mean: f64,
    pub halfwidth: f64,
}

/// `mean +- z * sd / sqrt(k)` with the unbiased standard deviation.
pub fn mean_band(values: &[f64], level: f64) -> Result<MeanBand> {
    if values.len() < 2 {
        return Err(invalid("values", "at least two trials are required"));
    }
    let z = normal_critical_value(level)?;
    let k = values.len() as f64;
    let mean = values.iter().sum::<f64>() / k;
    let ss: f64 = values.iter().map(|v| (v - mean) * (v - mean)).sum();
    let sd = libm::sqrt(ss / (k - 1.0));
    Ok(MeanBand {
        mean,
        halfwidth: z * sd / libm::sqrt(k),
    })
}

/// Trials of one detector at one sweep point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepCell {
    /// Overlap rate or displacement, depending on the sweep.
    pub sweep_parameter: f64,
    pub n_semantic: usize,
    pub detector_name: String,
    pub reports: Vec<EvalReport>,
    pub mean_auroc: f64,
    pub ci_halfwidth: f64,
    pub mean_far95: f64,
    pub far95_ci_halfwidth: f64,
}

/// Aggregates per-trial reports into a cell with `level` confidence bands.
pub fn aggregate_trials(
    sweep_parameter: f64,
    n_semantic: usize,
    reports: Vec<EvalReport>,
    level: f64,
) -> Result<SweepCell> {
    if reports.len() < 2 {
        return Err(invalid("reports", "at least two trials are required"));
    }
    let detector_name = reports[0].detector_name.clone();
    if reports.iter().any(|r| r.detector_name != detector_name) {
        return Err(invalid("reports", "all reports must come from one detector"));
    }
    let aurocs: Vec<f64> = reports.iter().map(|r| r.auroc).collect();
    let fars: Vec<f64> = reports.iter().map(|r| r.far95).collect();
    let auroc_band = mean_band(&aurocs, level)?;
    let far_band = mean_band(&fars, level)?;
    Ok(SweepCell {
        sweep_parameter,
        n_semantic,
        detector_name,
        reports,
        mean_auroc: auroc_band.mean,
        ci_halfwidth: auroc_band.halfwidth,
        mean_far95: far_band.mean,
        far95_ci_halfwidth: far_band.halfwidth,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;
    use proptest::prelude::*;

    fn brute_auroc(id: &[f64], ood: &[f64]) -> f64 {
        let mut credit = 0.0;
        for &a in id {
            for &b in ood {
                if a > b {
                    credit += 1.0;
                } else if a == b {
                    credit += 0.5;
                }
            }
        }
        credit / (id.len() * ood.len()) as f64
    }

    #[test]
    fn auroc_examples() {
        assert_eq!(auroc(&[0.9, 0.8], &[0.2, 0.1]).unwrap(), 1.0);
        assert_eq!(auroc(&[0.5, 0.5], &[0.5, 0.5]).unwrap(), 0.5);
        let (id, ood) = ([0.9, 0.4, 0.6], [0.5, 0.3]);
        assert_eq!(brute_auroc(&id, &ood), 5.0 / 6.0);
        assert_eq!(auroc(&id, &ood).unwrap(), 5.0 / 6.0);
        assert_eq!(auroc(&[0.1], &[0.9]).unwrap(), 0.0);
    }

    #[test]
    fn auroc_signed_zero_ties() {
        assert_eq!(auroc(&[0.0], &[-0.0]).unwrap(), 0.5);
    }

    #[test]
    fn auroc_errors() {
        assert!(matches!(auroc(&[], &[1.0]), Err(Error::Empty(_))));
        assert!(matches!(auroc(&[1.0], &[]), Err(Error::Empty(_))));
        assert!(matches!(auroc(&[f64::NAN], &[1.0]), Err(Error::NonFinite { .. })));
    }

    #[test]
    fn far95_examples() {
        assert_eq!(far95(&[5.0, 6.0, 7.0], &[1.0, 2.0, 3.0]).unwrap(), 0.0);
        let scores: Vec<f64> = (1..=100).map(f64::from).collect();
        assert_eq!(far95(&scores, &scores).unwrap(), 0.95);
        assert!(far95(&[], &[1.0]).is_err());
        assert!(far95(&[1.0], &[]).is_err());
    }

    #[test]
    fn recall_rank() {
        assert_eq!(recall95_rank(1), 1);
        assert_eq!(recall95_rank(20), 19);
        assert_eq!(recall95_rank(21), 20);
        assert_eq!(recall95_rank(100), 95);
        assert_eq!(recall95_rank(101), 96);
    }

    #[test]
    fn aggregate_examples() {
        let rep = |a: f64| EvalReport {
            detector_name: "d".into(),
            auroc: a,
            far95: 0.5,
            n_id: 1,
            n_ood: 1,
        };
        let same = aggregate_trials(0.0, 1, vec![rep(0.7); 5], 0.95).unwrap();
        assert_eq!(same.ci_halfwidth, 0.0);
        assert_eq!(same.mean_auroc, 0.7);

        let cell = aggregate_trials(0.0, 1, vec![rep(0.6), rep(0.8)], 0.95).unwrap();
        assert!((cell.mean_auroc - 0.7).abs() < 1e-15);
        // sd = 0.1414..., halfwidth = 1.96 * sd / sqrt 2 = 0.196
        assert!((cell.ci_halfwidth - 0.196).abs() < 1e-12);

        assert!(aggregate_trials(0.0, 1, vec![rep(0.6)], 0.95).is_err());
        assert!(aggregate_trials(0.0, 1, vec![rep(0.6), rep(0.7)], 0.93).is_err());
        let mut mixed = vec![rep(0.6), rep(0.7)];
        mixed[1].detector_name = "other".into();
        assert!(aggregate_trials(0.0, 1, mixed, 0.95).is_err());
    }

    fn with_ties() -> impl Strategy<Value = (Vec<f64>, Vec<f64>)> {
        // Scores on a coarse grid so ties are frequent.
        let score = (0u8..12).prop_map(|k| f64::from(k) / 4.0 - 1.0);
        (
            prop::collection::vec(score.clone(), 1..100),
            prop::collection::vec(score, 1..100),
        )
    }

    proptest! {
        #[test]
        fn rank_auroc_equals_brute_force((id, ood) in with_ties()) {
            prop_assert_eq!(auroc(&id, &ood).unwrap(), brute_auroc(&id, &ood));
        }

        #[test]
        fn auroc_monotone_invariant((id, ood) in with_ties()) {
            let f = |v: &f64| libm::exp(3.0 * v) + v;
            let id2: Vec<f64> = id.iter().map(f).collect();
            let ood2: Vec<f64> = ood.iter().map(f).collect();
            prop_assert_eq!(auroc(&id, &ood).unwrap(), auroc(&id2, &ood2).unwrap());
        }

        #[test]
        fn auroc_complement((id, ood) in with_ties()) {
            let a = auroc(&id, &ood).unwrap();
            let b = auroc(&ood, &id).unwrap();
            prop_assert!((a + b - 1.0).abs() < 1e-12);
        }

        #[test]
        fn far95_antitone((id, ood) in with_ties(), shift in 0.0f64..3.0) {
            let better: Vec<f64> = id.iter().map(|v| v + shift).collect();
            prop_assert!(far95(&better, &ood).unwrap() <= far95(&id, &ood).unwrap());
        }
    }
}
