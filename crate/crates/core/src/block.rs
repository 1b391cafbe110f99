//! Stacks of diagonal blocks stored as dense gain tables.
//!
//! A stack of `num_blocks` diagonal `block_size x block_size` matrices maps a
//! vector `v` to `[G_0 v; G_1 v; ...]`, i.e. entry `r * block_size + i` is
//! `gains[r][i] * v[i]`. Every scalar of `v` is handled independently.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BlockKind {
    /// Modulo gains drawn uniformly from `[-T, T]`.
    DRandom,
    /// Modulo gains `2^(9 - r)` for 1-based block `r`.
    DGeometric,
    /// Harmonic quantizer gains selected by each scalar's first bit.
    CHarmonicAdaptive,
    /// Both harmonic branches: `2k - 1` blocks.
    CHarmonicNonadaptive,
    /// Caller-supplied table.
    Custom,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlockDiagStack {
    num_blocks: usize,
    block_size: usize,
    gains: Vec<f64>,
    kind: BlockKind,
}

impl BlockDiagStack {
    /// Builds a stack from one row of gains per block.
    pub fn from_rows(rows: Vec<Vec<f64>>, kind: BlockKind) -> Result<Self> {
        let num_blocks = rows.len();
        if num_blocks == 0 {
            return Err(Error::shape("a block stack needs at least one block"));
        }
        let block_size = rows[0].len();
        if let Some(r) = rows.iter().position(|row| row.len() != block_size) {
            return Err(Error::shape(format!(
                "block {r} has {} gains, expected {block_size}",
                rows[r].len()
            )));
        }
        let gains: Vec<f64> = rows.into_iter().flatten().collect();
        Self::from_flat(num_blocks, block_size, gains, kind)
    }

    /// Builds a stack from a block-major flat table.
    pub fn from_flat(
        num_blocks: usize,
        block_size: usize,
        gains: Vec<f64>,
        kind: BlockKind,
    ) -> Result<Self> {
        if gains.len() != num_blocks * block_size {
            return Err(Error::shape(format!(
                "{} gains for {num_blocks} blocks of size {block_size}",
                gains.len()
            )));
        }
        if gains.iter().any(|g| !g.is_finite()) {
            return Err(Error::domain("block gains must be finite"));
        }
        Ok(BlockDiagStack {
            num_blocks,
            block_size,
            gains,
            kind,
        })
    }

    /// `num_blocks` identity blocks.
    pub fn ones(num_blocks: usize, block_size: usize) -> Result<Self> {
        Self::from_flat(
            num_blocks,
            block_size,
            vec![1.0; num_blocks * block_size],
            BlockKind::Custom,
        )
    }

    pub fn num_blocks(&self) -> usize {
        self.num_blocks
    }

    pub fn block_size(&self) -> usize {
        self.block_size
    }

    pub fn kind(&self) -> BlockKind {
        self.kind
    }

    pub fn gain(&self, block: usize, i: usize) -> f64 {
        self.gains[block * self.block_size + i]
    }

    pub fn block(&self, block: usize) -> &[f64] {
        &self.gains[block * self.block_size..(block + 1) * self.block_size]
    }

    /// Gains applied to scalar `i` across all blocks (the column view).
    pub fn column(&self, i: usize) -> Vec<f64> {
        (0..self.num_blocks).map(|r| self.gain(r, i)).collect()
    }

    pub fn output_len(&self) -> usize {
        self.num_blocks * self.block_size
    }
}

/// Applies the stack to `v`: `out[r * block_size + i] = gains[r][i] * v[i]`.
pub fn apply_block_stack(stack: &BlockDiagStack, v: &[f64]) -> Result<Vec<f64>> {
    if v.len() != stack.block_size {
        return Err(Error::shape(format!(
            "vector of length {} applied to blocks of size {}",
            v.len(),
            stack.block_size
        )));
    }
    Ok(stack
        .gains
        .chunks_exact(stack.block_size)
        .flat_map(|block| block.iter().zip(v).map(|(g, x)| g * x))
        .collect())
}
