//! Five classic frequency/pattern tests. Every statistic is symmetric under a
//! global bit flip.

use crate::error::{Error, Result};
use crate::stats::{erfc, igamc, normal_cdf};

use super::TestResult;

pub const MIN_TEST_BITS: usize = 100;

fn require(test: &'static str, bits: &[u8], needed: usize) -> Result<()> {
    if bits.len() < needed {
        return Err(Error::InsufficientLength {
            test,
            needed,
            got: bits.len(),
        });
    }
    Ok(())
}

fn ones(bits: &[u8]) -> usize {
    bits.iter().filter(|&&b| b != 0).count()
}

/// Frequency test: s = |Σ(2xᵢ − 1)| / √n, p = erfc(s/√2).
pub fn monobit_test(bits: &[u8], alpha_sig: f64) -> Result<TestResult> {
    require("monobit", bits, MIN_TEST_BITS)?;
    let n = bits.len() as f64;
    let sum = 2.0 * ones(bits) as f64 - n;
    let s = sum.abs() / n.sqrt();
    Ok(TestResult::new("monobit", s, erfc(s / std::f64::consts::SQRT_2), alpha_sig))
}

/// Runs test. Not applicable when the ones proportion is outside
/// `|π̂ − ½| < 2/√n`; the monobit test covers that case.
pub fn runs_test(bits: &[u8], alpha_sig: f64) -> Result<TestResult> {
    require("runs", bits, MIN_TEST_BITS)?;
    let n = bits.len() as f64;
    let pi = ones(bits) as f64 / n;
    if (pi - 0.5).abs() >= 2.0 / n.sqrt() {
        return Ok(TestResult::not_applicable("runs", pi));
    }
    let v = 1 + bits.windows(2).filter(|w| (w[0] != 0) != (w[1] != 0)).count();
    let v = v as f64;
    let q = pi * (1.0 - pi);
    let stat = (v - 2.0 * n * q).abs() / (2.0 * (2.0 * n).sqrt() * q);
    Ok(TestResult::new("runs", v, erfc(stat), alpha_sig))
}

pub const MIN_BLOCK_SIZE: usize = 20;
pub const MIN_BLOCKS: usize = 10;

/// Block frequency test: χ² = 4M Σ(πᵢ − ½)² over ⌊n/M⌋ blocks.
pub fn block_frequency_test(bits: &[u8], block_size: usize, alpha_sig: f64) -> Result<TestResult> {
    if block_size < MIN_BLOCK_SIZE {
        return Err(Error::config("block_size", format!("must be at least {MIN_BLOCK_SIZE}")));
    }
    require("block_frequency", bits, (MIN_BLOCKS * block_size).max(MIN_TEST_BITS))?;
    let m = block_size as f64;
    let chunks = bits.chunks_exact(block_size);
    let n_blocks = chunks.len() as f64;
    let chi2: f64 = chunks
        .map(|c| {
            let d = ones(c) as f64 / m - 0.5;
            d * d
        })
        .sum::<f64>()
        * 4.0
        * m;
    Ok(TestResult::new("block_frequency", chi2, igamc(n_blocks / 2.0, chi2 / 2.0), alpha_sig))
}

/// ψ²ₘ over overlapping m-grams with cyclic wrap.
pub(crate) fn psi_sq(bits: &[u8], m: u32) -> f64 {
    if m == 0 {
        return 0.0;
    }
    let n = bits.len();
    let mask = (1usize << m) - 1;
    let mut counts = vec![0u64; 1 << m];
    let mut w = 0usize;
    for &b in &bits[..m as usize - 1] {
        w = (w << 1) | (b & 1) as usize;
    }
    for i in 0..n {
        let b = bits[(i + m as usize - 1) % n];
        w = ((w << 1) | (b & 1) as usize) & mask;
        counts[w] += 1;
    }
    let sum_sq: f64 = counts.iter().map(|&c| (c as f64) * (c as f64)).sum();
    sum_sq * (1u64 << m) as f64 / n as f64 - n as f64
}

/// Serial test of order `m`, reported through ∇ψ²ₘ = ψ²ₘ − ψ²ₘ₋₁ with
/// p = Q(2^(m−2), ∇ψ²ₘ / 2).
pub fn serial_test(bits: &[u8], m: u32, alpha_sig: f64) -> Result<TestResult> {
    require("serial", bits, MIN_TEST_BITS)?;
    let log2n = (bits.len() as f64).log2().floor() as u32;
    if m < 2 || m + 2 > log2n {
        return Err(Error::InsufficientLength {
            test: "serial",
            needed: 1usize << (m.max(2) + 2),
            got: bits.len(),
        });
    }
    let del = psi_sq(bits, m) - psi_sq(bits, m - 1);
    let p = igamc(f64::from(1u32 << (m - 2)), del / 2.0);
    Ok(TestResult::new("serial", del, p, alpha_sig))
}

/// Forward cumulative sums test; statistic is max |Sₖ|.
pub fn cusum_test(bits: &[u8], alpha_sig: f64) -> Result<TestResult> {
    require("cusum", bits, MIN_TEST_BITS)?;
    let n = bits.len() as f64;
    let mut s: i64 = 0;
    let mut z: i64 = 0;
    for &b in bits {
        s += if b != 0 { 1 } else { -1 };
        z = z.max(s.abs());
    }
    let z = z as f64;
    let sqn = n.sqrt();
    let mut sum1 = 0.0;
    let lo = ((-n / z + 1.0) / 4.0).trunc() as i64;
    let hi = ((n / z - 1.0) / 4.0).trunc() as i64;
    for k in lo..=hi {
        let k = k as f64;
        sum1 += normal_cdf((4.0 * k + 1.0) * z / sqn) - normal_cdf((4.0 * k - 1.0) * z / sqn);
    }
    let mut sum2 = 0.0;
    let lo = ((-n / z - 3.0) / 4.0).trunc() as i64;
    for k in lo..=hi {
        let k = k as f64;
        sum2 += normal_cdf((4.0 * k + 3.0) * z / sqn) - normal_cdf((4.0 * k + 1.0) * z / sqn);
    }
    let p = (1.0 - sum1 + sum2).clamp(0.0, 1.0);
    Ok(TestResult::new("cusum", z, p, alpha_sig))
}
