//! Block-partitioned storage used by the accelerator.
//!
//! A matrix is zero-padded up to a multiple of the block size `b` in both
//! dimensions and cut into `b × b` tiles. Tiles are laid out either
//! block-row-major (left operands, outputs) or block-column-major (right
//! operands). Elements inside a tile are always row-major.

use serde::{Deserialize, Serialize};

use super::Matrix;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Orientation {
    BlockRowMajor,
    BlockColMajor,
}

#[derive(Clone, Debug, PartialEq)]
pub struct BlockedMatrix<T = f32> {
    logical_rows: usize,
    logical_cols: usize,
    block: usize,
    orientation: Orientation,
    padded_rows: usize,
    padded_cols: usize,
    data: Vec<T>,
}

#[inline]
fn round_up(n: usize, b: usize) -> usize {
    n.div_ceil(b) * b
}

impl<T: Scalar> BlockedMatrix<T> {
    /// All-zero blocked matrix with the given logical shape.
    pub fn zeros(rows: usize, cols: usize, block: usize, orientation: Orientation) -> Self {
        assert!(block >= 1, "block size must be at least 1");
        let padded_rows = round_up(rows, block);
        let padded_cols = round_up(cols, block);
        Self {
            logical_rows: rows,
            logical_cols: cols,
            block,
            orientation,
            padded_rows,
            padded_cols,
            data: vec![T::zero(); padded_rows * padded_cols],
        }
    }

    pub fn logical_rows(&self) -> usize {
        self.logical_rows
    }

    pub fn logical_cols(&self) -> usize {
        self.logical_cols
    }

    pub fn block_size(&self) -> usize {
        self.block
    }

    pub fn orientation(&self) -> Orientation {
        self.orientation
    }

    pub fn padded_rows(&self) -> usize {
        self.padded_rows
    }

    pub fn padded_cols(&self) -> usize {
        self.padded_cols
    }

    /// Number of block rows.
    pub fn row_blocks(&self) -> usize {
        self.padded_rows / self.block
    }

    /// Number of block columns.
    pub fn col_blocks(&self) -> usize {
        self.padded_cols / self.block
    }

    /// Flat storage, tile after tile.
    pub fn data(&self) -> &[T] {
        &self.data
    }

    /// Position of block `(i, j)` in the tile sequence.
    #[inline]
    pub fn block_index(&self, i: usize, j: usize) -> usize {
        match self.orientation {
            Orientation::BlockRowMajor => i * self.col_blocks() + j,
            Orientation::BlockColMajor => j * self.row_blocks() + i,
        }
    }

    /// Flat offset of element `(r, c)` of the padded matrix.
    #[inline]
    pub fn element_offset(&self, r: usize, c: usize) -> usize {
        let b = self.block;
        self.block_index(r / b, c / b) * b * b + (r % b) * b + (c % b)
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> T {
        self.data[self.element_offset(r, c)]
    }

    #[inline]
    pub fn set(&mut self, r: usize, c: usize, v: T) {
        let off = self.element_offset(r, c);
        self.data[off] = v;
    }

    /// Tile `(i, j)` as a row-major `b × b` slice.
    #[inline]
    pub fn block(&self, i: usize, j: usize) -> &[T] {
        let bb = self.block * self.block;
        let start = self.block_index(i, j) * bb;
        &self.data[start..start + bb]
    }

    #[inline]
    fn block_mut(&mut self, i: usize, j: usize) -> &mut [T] {
        let bb = self.block * self.block;
        let start = self.block_index(i, j) * bb;
        &mut self.data[start..start + bb]
    }

    /// True when every element outside the logical region is exactly zero.
    pub fn padding_is_zero(&self) -> bool {
        for r in 0..self.padded_rows {
            for c in 0..self.padded_cols {
                if (r >= self.logical_rows || c >= self.logical_cols)
                    && self.get(r, c) != T::zero()
                {
                    return false;
                }
            }
        }
        true
    }

    /// Same logical content stored with the other tile order.
    pub fn relayout(&self, orientation: Orientation) -> Self {
        if orientation == self.orientation {
            return self.clone();
        }
        let mut out = Self::zeros(self.logical_rows, self.logical_cols, self.block, orientation);
        for i in 0..self.row_blocks() {
            for j in 0..self.col_blocks() {
                out.block_mut(i, j).copy_from_slice(self.block(i, j));
            }
        }
        out
    }
}

pub fn to_blocked<T: Scalar>(m: &Matrix<T>, b: usize, orientation: Orientation) -> BlockedMatrix<T> {
    let mut out = BlockedMatrix::zeros(m.rows(), m.cols(), b, orientation);
    for r in 0..m.rows() {
        let src = m.row(r);
        let (bi, ri) = (r / b, r % b);
        for (bj, chunk) in src.chunks(b).enumerate() {
            let tile = out.block_mut(bi, bj);
            tile[ri * b..ri * b + chunk.len()].copy_from_slice(chunk);
        }
    }
    out
}

pub fn from_blocked<T: Scalar>(bm: &BlockedMatrix<T>) -> Matrix<T> {
    let b = bm.block;
    let mut out = Matrix::zeros(bm.logical_rows, bm.logical_cols);
    for r in 0..bm.logical_rows {
        let (bi, ri) = (r / b, r % b);
        let dst = out.row_mut(r);
        for (bj, chunk) in dst.chunks_mut(b).enumerate() {
            let tile = bm.block(bi, bj);
            chunk.copy_from_slice(&tile[ri * b..ri * b + chunk.len()]);
        }
    }
    out
}

/// `acc += a · w` for row-major `b × b` tiles, k ascending per element.
#[inline]
pub(crate) fn tile_mac<T: Scalar>(acc: &mut [T], a: &[T], w: &[T], b: usize) {
    for i in 0..b {
        let acc_row = &mut acc[i * b..(i + 1) * b];
        let a_row = &a[i * b..(i + 1) * b];
        for (k, &aik) in a_row.iter().enumerate() {
            let w_row = &w[k * b..(k + 1) * b];
            for (o, &wkj) in acc_row.iter_mut().zip(w_row) {
                *o += aik * wkj;
            }
        }
    }
}

fn check_dbmm_operands<T: Scalar>(a: &BlockedMatrix<T>, w: &BlockedMatrix<T>) -> Result<()> {
    if a.block != w.block {
        return Err(Error::BlockSizeMismatch {
            left: a.block,
            right: w.block,
        });
    }
    if a.logical_cols != w.logical_rows {
        return Err(Error::dims(
            "dbmm",
            format!(
                "{}x{} times {}x{}",
                a.logical_rows, a.logical_cols, w.logical_rows, w.logical_cols
            ),
        ));
    }
    if a.orientation != Orientation::BlockRowMajor {
        return Err(Error::LayoutMismatch {
            op: "dbmm",
            detail: "left operand must be block-row-major".into(),
        });
    }
    if w.orientation != Orientation::BlockColMajor {
        return Err(Error::LayoutMismatch {
            op: "dbmm",
            detail: "right operand must be block-column-major".into(),
        });
    }
    Ok(())
}

/// Compute output block `(i, j)` of `a · w` into `acc` (overwritten).
///
/// Accumulation runs over k-blocks ascending and within each block over k
/// ascending, starting from zero, so every logical element is summed in the
/// same order as [`super::naive_matmul`].
pub(crate) fn dbmm_output_block<T: Scalar>(
    a: &BlockedMatrix<T>,
    w: &BlockedMatrix<T>,
    i: usize,
    j: usize,
    acc: &mut [T],
) {
    acc.fill(T::zero());
    for kb in 0..a.col_blocks() {
        tile_mac(acc, a.block(i, kb), w.block(kb, j), a.block);
    }
}

/// Dense block-wise matrix multiplication.
pub fn dbmm<T: Scalar>(a: &BlockedMatrix<T>, w: &BlockedMatrix<T>) -> Result<BlockedMatrix<T>> {
    check_dbmm_operands(a, w)?;
    let mut out = BlockedMatrix::zeros(
        a.logical_rows,
        w.logical_cols,
        a.block,
        Orientation::BlockRowMajor,
    );
    let mut acc = vec![T::zero(); a.block * a.block];
    for i in 0..out.row_blocks() {
        for j in 0..out.col_blocks() {
            dbmm_output_block(a, w, i, j, &mut acc);
            out.block_mut(i, j).copy_from_slice(&acc);
        }
    }
    Ok(out)
}

pub(crate) fn validate_dbmm<T: Scalar>(a: &BlockedMatrix<T>, w: &BlockedMatrix<T>) -> Result<()> {
    check_dbmm_operands(a, w)
}
