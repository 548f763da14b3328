//! Per-slice R(t) curve and the scenario classifier.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::bell::ChshEstimate;
use crate::error::{Error, Result};
use crate::stats::two_proportion_test;

use super::{lz, run_battery_all, BatteryConfig, RandomnessReport, RejectionRate};

/// Contrast significance for the half-versus-half test.
pub const CONTRAST_ALPHA: f64 = 0.01;
/// Required CHSH violation per slice, in standard errors.
pub const MIN_VIOLATION_SIGMAS: f64 = 5.0;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SliceReading {
    pub slice_index: i32,
    pub sequence_count: usize,
    /// False when the slice holds fewer than the configured minimum.
    pub sufficient: bool,
    pub rejection: Option<RejectionRate>,
    pub mean_compression_ratio: Option<f64>,
    /// 1 − normalized excess rejection over the false-alarm level: 1 for a
    /// slice that looks fully random, 0 when every sequence is rejected.
    pub randomness_level: Option<f64>,
    #[serde(skip)]
    pub reports: Vec<RandomnessReport>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RandommeterCurve {
    pub false_alarm_level: f64,
    pub slices: Vec<SliceReading>,
}

/// Builds R per slice. `per_slice[i]` holds the sequences of slice `i` in
/// within-pulse order.
pub fn randommeter_curve<S: AsRef<[u8]> + Sync>(per_slice: &[Vec<S>], config: &BatteryConfig) -> Result<RandommeterCurve> {
    config.validate()?;
    if per_slice.len() < 2 {
        return Err(Error::Precondition(format!(
            "randommeter curve needs at least 2 slices, got {}",
            per_slice.len()
        )));
    }
    let floor = config.compound_false_alarm();
    let mut slices = Vec::with_capacity(per_slice.len());
    for (i, seqs) in per_slice.iter().enumerate() {
        let reports = run_battery_all(seqs, config)?;
        let rejection = RejectionRate::from_reports(&reports).ok();
        let concat: Vec<u8> = seqs.iter().flat_map(|s| s.as_ref().iter().copied()).collect();
        let mean_compression_ratio = lz::mean_block_ratio(&concat, config.compression_block_bits).ok();
        let randomness_level = rejection.map(|r| 1.0 - ((r.rate - floor) / (1.0 - floor)).clamp(0.0, 1.0));
        slices.push(SliceReading {
            slice_index: i as i32,
            sequence_count: seqs.len(),
            sufficient: seqs.len() >= config.min_sequences,
            rejection,
            mean_compression_ratio,
            randomness_level,
            reports,
        });
    }
    Ok(RandommeterCurve {
        false_alarm_level: floor,
        slices,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum ScenarioLabel {
    LocalityFalse,
    RealismFalse,
    ErgodicityFalse,
    Inconclusive,
}

impl fmt::Display for ScenarioLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ScenarioLabel::LocalityFalse => "LOCALITY_FALSE",
            ScenarioLabel::RealismFalse => "REALISM_FALSE",
            ScenarioLabel::ErgodicityFalse => "ERGODICITY_FALSE",
            ScenarioLabel::Inconclusive => "INCONCLUSIVE",
        })
    }
}

/// Evidence for one of the three readings, never a proof.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ScenarioVerdict {
    pub label: ScenarioLabel,
    /// z of R(first half) − R(second half); positive when the first half is
    /// rejected more often.
    pub contrast_statistic: Option<f64>,
    pub p_value: Option<f64>,
    pub rejection_first_half: Option<f64>,
    pub rejection_second_half: Option<f64>,
    pub per_slice_s: Vec<Option<f64>>,
    pub per_slice_s_std_err: Vec<Option<f64>>,
    /// Why the verdict is inconclusive, if it is.
    pub reason: Option<String>,
}

impl ScenarioVerdict {
    pub fn inconclusive(reason: impl Into<String>) -> Self {
        ScenarioVerdict {
            label: ScenarioLabel::Inconclusive,
            contrast_statistic: None,
            p_value: None,
            rejection_first_half: None,
            rejection_second_half: None,
            per_slice_s: Vec::new(),
            per_slice_s_std_err: Vec::new(),
            reason: Some(reason.into()),
        }
    }
}

/// Compares pooled R of the first and second half of the pulse. Slices are
/// split at the midpoint; with an odd count the middle slice is left out.
///
/// Higher R first means less randomness early in the pulse (ergodicity
/// false); lower R first means less randomness late (locality false); no
/// significant difference reads as realism false. Every slice must carry a
/// valid R and violate CHSH by at least 5σ, otherwise the verdict is
/// inconclusive.
pub fn classify_scenario(curve: &RandommeterCurve, chsh: &[Option<ChshEstimate>]) -> Result<ScenarioVerdict> {
    if chsh.is_empty() || chsh.len() != curve.slices.len() {
        return Err(Error::Precondition(format!(
            "CHSH data for {} slices, curve has {}",
            chsh.len(),
            curve.slices.len()
        )));
    }
    let per_slice_s: Vec<Option<f64>> = chsh.iter().map(|c| c.as_ref().map(|c| c.s)).collect();
    let per_slice_s_std_err: Vec<Option<f64>> = chsh.iter().map(|c| c.as_ref().map(|c| c.std_err)).collect();
    let with_s = |mut v: ScenarioVerdict| {
        v.per_slice_s = per_slice_s.clone();
        v.per_slice_s_std_err = per_slice_s_std_err.clone();
        v
    };

    for (i, c) in chsh.iter().enumerate() {
        match c {
            None => return Ok(with_s(ScenarioVerdict::inconclusive(format!("slice {i}: CHSH undefined")))),
            Some(c) if c.violation_sigmas() < MIN_VIOLATION_SIGMAS => {
                return Ok(with_s(ScenarioVerdict::inconclusive(format!(
                    "slice {i}: S = {:.4} ± {:.4} does not exceed 2 by {MIN_VIOLATION_SIGMAS}σ",
                    c.s, c.std_err
                ))))
            }
            Some(_) => {}
        }
    }
    for s in &curve.slices {
        if !s.sufficient || s.rejection.is_none() {
            return Ok(with_s(ScenarioVerdict::inconclusive(format!(
                "slice {}: {} sequences, rejection rate not usable",
                s.slice_index, s.sequence_count
            ))));
        }
    }

    let n = curve.slices.len();
    let pool = |slices: &[SliceReading]| {
        slices.iter().fold((0u64, 0u64), |(x, t), s| {
            let r = s.rejection.expect("checked above");
            (x + r.rejected, t + r.total)
        })
    };
    let (x1, n1) = pool(&curve.slices[..n / 2]);
    let (x2, n2) = pool(&curve.slices[n.div_ceil(2)..]);
    let (z, p) = two_proportion_test(x1, n1, x2, n2);
    let label = if p >= CONTRAST_ALPHA {
        ScenarioLabel::RealismFalse
    } else if z > 0.0 {
        ScenarioLabel::ErgodicityFalse
    } else {
        ScenarioLabel::LocalityFalse
    };
    Ok(with_s(ScenarioVerdict {
        label,
        contrast_statistic: Some(z),
        p_value: Some(p),
        rejection_first_half: Some(x1 as f64 / n1 as f64),
        rejection_second_half: Some(x2 as f64 / n2 as f64),
        per_slice_s: Vec::new(),
        per_slice_s_std_err: Vec::new(),
        reason: None,
    }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bell::{ChshEstimate, PairCounts};
    use crate::source::ChshAngles;

    fn reading(i: i32, rejected: u64, total: u64) -> SliceReading {
        SliceReading {
            slice_index: i,
            sequence_count: total as usize,
            sufficient: total >= 30,
            rejection: Some(RejectionRate::from_counts(rejected, total).unwrap()),
            mean_compression_ratio: None,
            randomness_level: None,
            reports: Vec::new(),
        }
    }

    fn curve(rs: &[(u64, u64)]) -> RandommeterCurve {
        RandommeterCurve {
            false_alarm_level: 0.049,
            slices: rs.iter().enumerate().map(|(i, &(x, n))| reading(i as i32, x, n)).collect(),
        }
    }

    /// CHSH estimate with the given S, built from counts.
    fn chsh(e: f64, n: u64) -> Option<ChshEstimate> {
        let make = |e: f64| {
            let same = ((1.0 + e) / 2.0 * n as f64).round() as u64;
            PairCounts([same / 2, (n - same) / 2, (n - same) - (n - same) / 2, same - same / 2])
        };
        let counts = [make(e), make(-e), make(e), make(e)];
        Some(ChshEstimate::from_counts(&ChshAngles::default(), counts, None).unwrap())
    }

    #[test]
    fn verdict_examples() {
        let s = vec![chsh(0.7, 100_000), chsh(0.7, 100_000)];
        let v = classify_scenario(&curve(&[(475, 500), (25, 500)]), &s).unwrap();
        assert_eq!(v.label, ScenarioLabel::ErgodicityFalse);
        assert!(v.p_value.unwrap() < 0.01);
        let v = classify_scenario(&curve(&[(25, 500), (300, 500)]), &s).unwrap();
        assert_eq!(v.label, ScenarioLabel::LocalityFalse);
        let v = classify_scenario(&curve(&[(25, 500), (25, 500)]), &s).unwrap();
        assert_eq!(v.label, ScenarioLabel::RealismFalse);
        assert_eq!(v.per_slice_s.len(), 2);
    }

    #[test]
    fn weak_violation_is_inconclusive() {
        let s = vec![chsh(0.7, 100_000), chsh(0.5, 100_000)];
        let v = classify_scenario(&curve(&[(475, 500), (25, 500)]), &s).unwrap();
        assert_eq!(v.label, ScenarioLabel::Inconclusive);
        let s = vec![chsh(0.7, 100_000), None];
        let v = classify_scenario(&curve(&[(475, 500), (25, 500)]), &s).unwrap();
        assert_eq!(v.label, ScenarioLabel::Inconclusive);
        let s = vec![chsh(0.7, 100_000), chsh(0.7, 100_000)];
        let v = classify_scenario(&curve(&[(10, 20), (25, 500)]), &s).unwrap();
        assert_eq!(v.label, ScenarioLabel::Inconclusive);
    }

    #[test]
    fn missing_chsh_is_an_error() {
        assert!(matches!(
            classify_scenario(&curve(&[(1, 100), (1, 100)]), &[]),
            Err(Error::Precondition(_))
        ));
    }

    #[test]
    fn odd_slice_count_skips_middle() {
        let s = vec![chsh(0.7, 100_000); 3];
        let v = classify_scenario(&curve(&[(5, 100), (100, 100), (5, 100)]), &s).unwrap();
        assert_eq!(v.label, ScenarioLabel::RealismFalse);
        assert_eq!(v.rejection_first_half, Some(0.05));
    }

    #[test]
    fn curve_needs_two_slices() {
        let one: Vec<Vec<Vec<u8>>> = vec![vec![vec![0; 10_000]]];
        assert!(matches!(
            randommeter_curve(&one, &BatteryConfig::default()),
            Err(Error::Precondition(_))
        ));
    }

    #[test]
    fn undersized_slice_is_flagged() {
        let slices = vec![vec![vec![0u8; 10_000]; 31], vec![vec![0u8; 10_000]; 3]];
        let c = randommeter_curve(&slices, &BatteryConfig::default()).unwrap();
        assert!(c.slices[0].sufficient && !c.slices[1].sufficient);
        assert_eq!(c.slices[0].rejection.unwrap().rate, 1.0);
        assert_eq!(c.slices[0].randomness_level, Some(0.0));
        assert!(c.slices[0].mean_compression_ratio.unwrap() < 0.05);
        let empty = vec![Vec::<Vec<u8>>::new(), Vec::new()];
        let c = randommeter_curve(&empty, &BatteryConfig::default()).unwrap();
        assert!(c.slices[0].rejection.is_none());
    }
}
