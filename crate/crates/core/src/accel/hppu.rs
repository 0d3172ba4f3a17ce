//! Head-parallel processing unit: `p_h` head compute units (HCUs), each a
//! `p_t × p_c` mesh of PEs, each PE producing one output tile at a time.
//!
//! Work arrives as *groups* of output block columns (one attention head, or
//! one fictitious head of a plain linear layer). Groups go to HCUs
//! round-robin in waves of `p_h`; inside an HCU the group's output tiles are
//! dealt to PEs in row-major order, `p_t·p_c` tiles per round. Each round
//! costs `k_blocks` tile passes. A wave lasts as long as its slowest HCU and
//! waves run back to back.

use serde::Serialize;

use super::AccelConfig;
use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::{dbmm, validate_dbmm, BlockedMatrix};

/// Split `w`'s block columns into at most `p_h` contiguous groups whose
/// sizes differ by at most one block; larger groups come first.
pub fn map_fictitious_heads<T: Scalar>(w: &BlockedMatrix<T>, hcus: usize) -> Vec<usize> {
    balanced_groups(w.col_blocks(), hcus)
}

pub fn balanced_groups(blocks: usize, hcus: usize) -> Vec<usize> {
    assert!(hcus >= 1, "at least one HCU");
    if blocks == 0 {
        return Vec::new();
    }
    let groups = blocks.min(hcus);
    let (base, rem) = (blocks / groups, blocks % groups);
    (0..groups).map(|g| base + usize::from(g < rem)).collect()
}

/// Convert per-head column widths into block-column group sizes; fails when
/// a head boundary does not fall on a tile boundary.
pub fn column_groups(widths: &[usize], block: usize) -> Result<Vec<usize>> {
    let mut out = Vec::with_capacity(widths.len());
    let mut edge = 0;
    for (h, &w) in widths.iter().enumerate() {
        if w == 0 {
            return Err(Error::Partition(format!("head {h} has zero width")));
        }
        if w % block != 0 {
            return Err(Error::Partition(format!(
                "head {h} boundary at column {} is not aligned to block size {block}",
                edge + w
            )));
        }
        edge += w;
        out.push(w / block);
    }
    Ok(out)
}

/// One output tile's placement.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct TileAssignment {
    pub wave: usize,
    pub hcu: usize,
    /// Index of the head / fictitious head / batched job.
    pub group: usize,
    /// Round within the HCU (tiles beyond `p_t·p_c` wait for a later round).
    pub round: usize,
    pub pe_row: usize,
    pub pe_col: usize,
    pub block_row: usize,
    /// Block column inside the group's output.
    pub block_col: usize,
}

/// Placement of every output tile of one HPPU invocation.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize)]
pub struct Schedule {
    pub assignments: Vec<TileAssignment>,
    /// Per-group tile-pass count (k blocks).
    pub k_blocks: Vec<usize>,
    pub waves: usize,
}

/// Shape of one HCU job: output tile grid and reduction depth in blocks.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct HcuJob {
    pub row_blocks: usize,
    pub col_blocks: usize,
    pub k_blocks: usize,
}

impl HcuJob {
    pub fn tiles(&self) -> usize {
        self.row_blocks * self.col_blocks
    }

    pub fn rounds(&self, cfg: &AccelConfig) -> usize {
        self.tiles().div_ceil(cfg.pes_per_hcu())
    }

    pub fn cycles(&self, cfg: &AccelConfig) -> u64 {
        self.rounds(cfg) as u64 * self.k_blocks as u64 * cfg.block_mult_cycles()
    }
}

/// Assign jobs to HCUs round-robin and tiles to PEs.
pub fn schedule_jobs(jobs: &[HcuJob], cfg: &AccelConfig) -> Schedule {
    let per_hcu = cfg.pes_per_hcu();
    let mut assignments = Vec::with_capacity(jobs.iter().map(HcuJob::tiles).sum());
    for (g, job) in jobs.iter().enumerate() {
        let (wave, hcu) = (g / cfg.hcus, g % cfg.hcus);
        for t in 0..job.tiles() {
            let pe = t % per_hcu;
            assignments.push(TileAssignment {
                wave,
                hcu,
                group: g,
                round: t / per_hcu,
                pe_row: pe / cfg.pe_cols,
                pe_col: pe % cfg.pe_cols,
                block_row: t / job.col_blocks,
                block_col: t % job.col_blocks,
            });
        }
    }
    Schedule {
        assignments,
        k_blocks: jobs.iter().map(|j| j.k_blocks).collect(),
        waves: jobs.len().div_ceil(cfg.hcus),
    }
}

/// Total cycles: waves in sequence, each as long as its slowest HCU.
pub fn jobs_cycles(jobs: &[HcuJob], cfg: &AccelConfig) -> u64 {
    jobs.chunks(cfg.hcus)
        .map(|wave| wave.iter().map(|j| j.cycles(cfg)).max().unwrap_or(0))
        .sum()
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct HppuCost {
    pub cycles: u64,
    pub waves: usize,
    /// MACs over logical (unpadded) dimensions.
    pub macs: u64,
    /// MACs including tile padding.
    pub padded_macs: u64,
    #[serde(skip)]
    pub schedule: Schedule,
}

fn check_block<T: Scalar>(m: &BlockedMatrix<T>, cfg: &AccelConfig) -> Result<()> {
    if m.block_size() != cfg.block {
        return Err(Error::BlockSizeMismatch {
            left: m.block_size(),
            right: cfg.block,
        });
    }
    Ok(())
}

/// DBMM on the HPPU with `w`'s block columns split into `head_groups`.
///
/// The functional result is [`dbmm`] itself, so it matches the tensor
/// kernel bit for bit.
pub fn hppu_dbmm<T: Scalar>(
    a: &BlockedMatrix<T>,
    w: &BlockedMatrix<T>,
    head_groups: &[usize],
    cfg: &AccelConfig,
) -> Result<(BlockedMatrix<T>, HppuCost)> {
    validate_dbmm(a, w)?;
    check_block(a, cfg)?;
    if head_groups.is_empty() || head_groups.contains(&0) {
        return Err(Error::Partition(format!("empty head group in {head_groups:?}")));
    }
    let total: usize = head_groups.iter().sum();
    if total != w.col_blocks() {
        return Err(Error::Partition(format!(
            "groups {head_groups:?} cover {total} block columns, operand has {}",
            w.col_blocks()
        )));
    }
    let out = dbmm(a, w)?;
    let jobs: Vec<HcuJob> = head_groups
        .iter()
        .map(|&g| HcuJob {
            row_blocks: a.row_blocks(),
            col_blocks: g,
            k_blocks: a.col_blocks(),
        })
        .collect();
    let cost = HppuCost {
        cycles: jobs_cycles(&jobs, cfg),
        waves: jobs.len().div_ceil(cfg.hcus),
        macs: (a.logical_rows() * a.logical_cols() * w.logical_cols()) as u64,
        padded_macs: (a.padded_rows() * a.padded_cols() * w.padded_cols()) as u64,
        schedule: schedule_jobs(&jobs, cfg),
    };
    Ok((out, cost))
}

/// Independent products, one per HCU (e.g. one per attention head).
pub fn hppu_batched<T: Scalar>(
    pairs: &[(&BlockedMatrix<T>, &BlockedMatrix<T>)],
    cfg: &AccelConfig,
) -> Result<(Vec<BlockedMatrix<T>>, HppuCost)> {
    if pairs.is_empty() {
        return Err(Error::EmptyOperand("hppu_batched"));
    }
    let mut outs = Vec::with_capacity(pairs.len());
    let mut jobs = Vec::with_capacity(pairs.len());
    let (mut macs, mut padded) = (0u64, 0u64);
    for (a, w) in pairs {
        validate_dbmm(a, w)?;
        check_block(a, cfg)?;
        outs.push(dbmm(a, w)?);
        jobs.push(HcuJob {
            row_blocks: a.row_blocks(),
            col_blocks: w.col_blocks(),
            k_blocks: a.col_blocks(),
        });
        macs += (a.logical_rows() * a.logical_cols() * w.logical_cols()) as u64;
        padded += (a.padded_rows() * a.padded_cols() * w.padded_cols()) as u64;
    }
    let cost = HppuCost {
        cycles: jobs_cycles(&jobs, cfg),
        waves: jobs.len().div_ceil(cfg.hcus),
        macs,
        padded_macs: padded,
        schedule: schedule_jobs(&jobs, cfg),
    };
    Ok((outs, cost))
}
