//! The randommeter: a randomness test battery and a compressor applied to
//! fixed-length sequences, the per-slice rejection-rate curve R(t) and the
//! scenario classifier built on it.
//!
//! R counts sequences found *not* random, so high randomness reads as low R.

pub mod battery;
pub mod curve;
pub mod lz;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::stats::{wilson_interval, Z95};

pub use battery::{block_frequency_test, cusum_test, monobit_test, runs_test, serial_test};
pub use curve::{classify_scenario, randommeter_curve, RandommeterCurve, ScenarioLabel, ScenarioVerdict, SliceReading};
pub use lz::compression_ratio;

pub const BATTERY_SIZE: usize = 5;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TestResult {
    pub test_name: &'static str,
    pub statistic: f64,
    pub p_value: f64,
    pub rejected: bool,
    /// False when a precondition of the test (not of the input length) failed.
    pub applicable: bool,
}

impl TestResult {
    pub fn new(test_name: &'static str, statistic: f64, p_value: f64, alpha_sig: f64) -> Self {
        let p_value = if p_value.is_nan() { 0.0 } else { p_value.clamp(0.0, 1.0) };
        TestResult {
            test_name,
            statistic,
            p_value,
            rejected: p_value < alpha_sig,
            applicable: true,
        }
    }

    pub fn not_applicable(test_name: &'static str, statistic: f64) -> Self {
        TestResult {
            test_name,
            statistic,
            p_value: 1.0,
            rejected: false,
            applicable: false,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BatteryConfig {
    pub alpha_sig: f64,
    pub block_size: usize,
    pub serial_m: u32,
    /// Bits per tested sequence.
    pub sequence_length: usize,
    /// Slices with fewer sequences are marked insufficient.
    pub min_sequences: usize,
    /// Block length for a slice's mean compression ratio.
    pub compression_block_bits: usize,
}

impl Default for BatteryConfig {
    fn default() -> Self {
        BatteryConfig {
            alpha_sig: 0.01,
            block_size: 128,
            serial_m: 4,
            sequence_length: 10_000,
            min_sequences: 30,
            compression_block_bits: 1_000_000,
        }
    }
}

impl BatteryConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha_sig > 0.0 && self.alpha_sig < 1.0) {
            return Err(Error::config("alpha_sig", "must lie in (0, 1)"));
        }
        if self.block_size < battery::MIN_BLOCK_SIZE {
            return Err(Error::config("block_size", format!("must be at least {}", battery::MIN_BLOCK_SIZE)));
        }
        if self.sequence_length < battery::MIN_TEST_BITS {
            return Err(Error::config("sequence_length", "must be at least 100"));
        }
        if self.sequence_length < battery::MIN_BLOCKS * self.block_size {
            return Err(Error::config(
                "sequence_length",
                format!("must hold at least {} blocks of {}", battery::MIN_BLOCKS, self.block_size),
            ));
        }
        let log2n = (self.sequence_length as f64).log2().floor() as u32;
        if self.serial_m < 2 || self.serial_m + 2 > log2n {
            return Err(Error::config("serial_m", "need 2 ≤ m ≤ log₂(sequence_length) − 2"));
        }
        if self.min_sequences == 0 {
            return Err(Error::config("min_sequences", "must be positive"));
        }
        Ok(())
    }

    /// 1 − (1 − α)⁵: the battery's false-alarm level under independence.
    pub fn compound_false_alarm(&self) -> f64 {
        1.0 - (1.0 - self.alpha_sig).powi(BATTERY_SIZE as i32)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RandomnessReport {
    pub sequence_id: usize,
    pub results: Vec<TestResult>,
    pub overall_rejected: bool,
    /// Absent below the compressor's minimum length.
    pub compression_ratio: Option<f64>,
}

/// Runs all five tests and the compressor on one sequence.
pub fn run_battery(sequence_id: usize, bits: &[u8], config: &BatteryConfig) -> Result<RandomnessReport> {
    let a = config.alpha_sig;
    let results = vec![
        monobit_test(bits, a)?,
        runs_test(bits, a)?,
        block_frequency_test(bits, config.block_size, a)?,
        serial_test(bits, config.serial_m, a)?,
        cusum_test(bits, a)?,
    ];
    let overall_rejected = results.iter().any(|r| r.rejected);
    Ok(RandomnessReport {
        sequence_id,
        results,
        overall_rejected,
        compression_ratio: compression_ratio(bits).ok(),
    })
}

/// Battery over many sequences in parallel; output order follows input.
pub fn run_battery_all<S: AsRef<[u8]> + Sync>(sequences: &[S], config: &BatteryConfig) -> Result<Vec<RandomnessReport>> {
    sequences
        .par_iter()
        .enumerate()
        .map(|(i, s)| run_battery(i, s.as_ref(), config))
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct RejectionRate {
    pub rejected: u64,
    pub total: u64,
    pub rate: f64,
    pub ci_low: f64,
    pub ci_high: f64,
}

impl RejectionRate {
    pub fn from_counts(rejected: u64, total: u64) -> Result<Self> {
        if total == 0 {
            return Err(Error::NoData("no sequences to rate".into()));
        }
        let (ci_low, ci_high) = wilson_interval(rejected, total, Z95);
        Ok(RejectionRate {
            rejected,
            total,
            rate: rejected as f64 / total as f64,
            ci_low,
            ci_high,
        })
    }

    pub fn from_reports(reports: &[RandomnessReport]) -> Result<Self> {
        let rejected = reports.iter().filter(|r| r.overall_rejected).count() as u64;
        Self::from_counts(rejected, reports.len() as u64)
    }

    pub fn contains(&self, value: f64) -> bool {
        (self.ci_low..=self.ci_high).contains(&value)
    }
}

/// Fraction of sequences rejected by any test, with a 95% Wilson interval.
pub fn rejection_rate<S: AsRef<[u8]> + Sync>(sequences: &[S], config: &BatteryConfig) -> Result<RejectionRate> {
    if sequences.is_empty() {
        return Err(Error::NoData("no sequences to rate".into()));
    }
    RejectionRate::from_reports(&run_battery_all(sequences, config)?)
}
