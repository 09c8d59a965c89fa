//! Named parameter blocks shared by the cell, the baseline and the read-out
//! head, so that the optimizer, clipping, checkpoints and gradient checks work
//! over any model uniformly.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Read-only view of one parameter block.
#[derive(Debug, Clone, Copy)]
pub struct Block<'a> {
    pub name: &'static str,
    pub rows: usize,
    pub cols: usize,
    pub data: &'a [f64],
}

pub trait Parameters {
    /// Blocks in a fixed canonical order.
    fn blocks(&self) -> Vec<Block<'_>>;

    /// Same order as [`Parameters::blocks`].
    fn blocks_mut(&mut self) -> Vec<(&'static str, &mut [f64])>;

    fn num_scalars(&self) -> usize {
        self.blocks().iter().map(|b| b.data.len()).sum()
    }

    fn fill(&mut self, value: f64) {
        for (_, data) in self.blocks_mut() {
            data.fill(value);
        }
    }

    fn is_finite(&self) -> bool {
        self.blocks().iter().all(|b| b.data.iter().all(|v| v.is_finite()))
    }

    /// Concatenation of every block in canonical order.
    fn flatten(&self) -> Vec<f64> {
        self.blocks().iter().flat_map(|b| b.data.iter().copied()).collect()
    }

    fn to_blocks(&self) -> Vec<NamedBlock> {
        self.blocks()
            .into_iter()
            .map(|b| NamedBlock {
                name: b.name.to_string(),
                rows: b.rows,
                cols: b.cols,
                data: b.data.to_vec(),
            })
            .collect()
    }

    /// Overwrite every block from `blocks`, which must match names and sizes.
    fn load_blocks(&mut self, blocks: &[NamedBlock]) -> Result<()> {
        let mut targets = self.blocks_mut();
        if targets.len() != blocks.len() {
            return Err(Error::Checkpoint(format!(
                "expected {} parameter blocks, found {}",
                targets.len(),
                blocks.len()
            )));
        }
        for ((name, dst), src) in targets.iter_mut().zip(blocks) {
            if *name != src.name || dst.len() != src.data.len() || src.rows * src.cols != src.data.len() {
                return Err(Error::Checkpoint(format!(
                    "block `{}` ({} values) does not match expected `{}` ({} values)",
                    src.name,
                    src.data.len(),
                    name,
                    dst.len()
                )));
            }
            dst.copy_from_slice(&src.data);
        }
        Ok(())
    }
}

/// Serialized parameter block; data is row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NamedBlock {
    pub name: String,
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

/// `dst += src`, block by block.
pub fn accumulate<P: Parameters>(dst: &mut P, src: &P) {
    let src = src.blocks();
    for ((_, d), s) in dst.blocks_mut().into_iter().zip(src) {
        for (a, b) in d.iter_mut().zip(s.data) {
            *a += b;
        }
    }
}

pub fn scale<P: Parameters>(p: &mut P, c: f64) {
    for (_, d) in p.blocks_mut() {
        for v in d.iter_mut() {
            *v *= c;
        }
    }
}

/// Euclidean norm over every scalar of every block.
pub fn global_norm<P: Parameters>(p: &P) -> f64 {
    p.blocks()
        .iter()
        .flat_map(|b| b.data.iter())
        .map(|v| v * v)
        .sum::<f64>()
        .sqrt()
}
