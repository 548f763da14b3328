//! Incremental-parsing (LZ78) dictionary compressor over bits.
//!
//! Each phrase is coded as (dictionary index, next bit). Two refinements keep
//! the code tight for binary input:
//!
//! * a node whose two children already exist can never end a phrase, so the
//!   index ranges only over *open* nodes (fewer than two children), written
//!   with `⌈log₂ open⌉` bits;
//! * when the selected node already has one child the next bit is implied and
//!   not written.
//!
//! A trailing partial phrase is written as a plain index over all nodes.

use crate::error::{Error, Result};

pub const MIN_COMPRESSION_BITS: usize = 1000;

const NONE: u32 = u32::MAX;

fn ceil_log2(x: u64) -> u64 {
    if x <= 1 {
        0
    } else {
        64 - u64::from((x - 1).leading_zeros())
    }
}

/// Coded length of `bits` in bits.
pub fn compressed_bits(bits: &[u8]) -> u64 {
    let mut children: Vec<[u32; 2]> = Vec::with_capacity(bits.len() / 8 + 1);
    children.push([NONE; 2]);
    let mut open: u64 = 1;
    let mut cost: u64 = 0;
    let mut node = 0usize;
    for &bit in bits {
        let b = (bit & 1) as usize;
        let next = children[node][b];
        if next != NONE {
            node = next as usize;
            continue;
        }
        cost += ceil_log2(open);
        let sibling = children[node][1 - b] != NONE;
        if !sibling {
            cost += 1;
        }
        children[node][b] = children.len() as u32;
        children.push([NONE; 2]);
        open += 1;
        if sibling {
            open -= 1;
        }
        node = 0;
    }
    if node != 0 {
        cost += ceil_log2(children.len() as u64);
    }
    cost
}

/// Compressed size over input size. Incompressible input sits slightly above
/// 1; structured input falls well below.
pub fn compression_ratio(bits: &[u8]) -> Result<f64> {
    if bits.len() < MIN_COMPRESSION_BITS {
        return Err(Error::InsufficientLength {
            test: "compression_ratio",
            needed: MIN_COMPRESSION_BITS,
            got: bits.len(),
        });
    }
    Ok(compressed_bits(bits) as f64 / bits.len() as f64)
}

/// Mean ratio over consecutive blocks of `block_bits`. A tail shorter than a
/// block is folded into the last block; input shorter than one block is
/// compressed whole.
pub fn mean_block_ratio(bits: &[u8], block_bits: usize) -> Result<f64> {
    let block = block_bits.max(MIN_COMPRESSION_BITS);
    if bits.len() <= block {
        return compression_ratio(bits);
    }
    let n_blocks = bits.len() / block;
    let mut total = 0.0;
    for k in 0..n_blocks {
        let end = if k + 1 == n_blocks { bits.len() } else { (k + 1) * block };
        total += compression_ratio(&bits[k * block..end])?;
    }
    Ok(total / n_blocks as f64)
}
