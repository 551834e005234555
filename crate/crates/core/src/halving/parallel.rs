//! Chunked, staged Op-BHA.
//!
//! Each stage takes the next unmarked candidates in traversal order, splits
//! them into at most [`DISPATCH_SLICES`] contiguous slices, and lets every
//! slice run the
//! skipping sweep against the stage's checklist snapshot plus its own local
//! marks. Slices return their best candidate and their marks; the reduction
//! ORs the marks into the global checklist and keeps the best gap, earlier
//! slices winning ties. Slices of one stage do not see each other's marks, so
//! some states get evaluated that the serial sweep would skip. Stages start
//! at one candidate and double up to `chunk_size`, so the outermost states,
//! whose verdicts rule out the most, are merged before the bulk is dispatched.
//!
//! Every skipped state has a gap no better than the earlier-ranked state
//! that marked it, so the result is the lowest-ranked state with the minimum
//! gap whatever the slicing. The slicing depends only on the chunk size, not
//! on the worker count, so the whole [`Selection`] (counters included) is the
//! same for any number of workers.

use rayon::prelude::*;

use super::{candidates, require_active, Checklist, Selection, Sweep};
use crate::error::{Error, Result};
use crate::lattice::LatticeModel;
use crate::state::StateIndex;

/// The `+8` in the default chunk size `2^(n/2 + 8)`.
pub const DEFAULT_CHUNK_EXPONENT_OFFSET: u32 = 8;

/// Slices per stage; the unit of work handed to the thread pool.
pub const DISPATCH_SLICES: usize = 64;

/// `min(2^(n/2 + offset), 2^n)`.
pub fn default_chunk_size(n_active: u32, exponent_offset: u32) -> usize {
    let exponent = (n_active / 2 + exponent_offset).min(n_active);
    1usize << exponent
}

/// Op-BHA over a dedicated pool of `worker_count` threads.
pub fn select_op_bha_parallel(
    lattice: &LatticeModel,
    chunk_size: usize,
    worker_count: usize,
) -> Result<Selection> {
    require_active(lattice)?;
    if chunk_size == 0 || worker_count == 0 {
        return Err(Error::InvalidConfig(
            "chunk_size and worker_count must be at least 1".into(),
        ));
    }
    if worker_count == 1 {
        return Ok(staged(lattice, chunk_size, false));
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(worker_count)
        .build()
        .map_err(|e| Error::WorkerPool(e.to_string()))?;
    Ok(pool.install(|| staged(lattice, chunk_size, true)))
}

/// Staged Op-BHA with the default chunk size on whatever rayon pool the
/// caller is running in.
pub(crate) fn op_bha_in_current_pool(lattice: &LatticeModel) -> Result<Selection> {
    require_active(lattice)?;
    let chunk = default_chunk_size(lattice.n_active(), DEFAULT_CHUNK_EXPONENT_OFFSET);
    Ok(staged(lattice, chunk, true))
}

struct SliceResult {
    sweep: Sweep,
    marks: Checklist,
}

fn staged(lattice: &LatticeModel, chunk_size: usize, parallel: bool) -> Selection {
    let n = lattice.n_active();
    let mut checklist = Checklist::new(n);
    let mut order = candidates(n);
    let mut total = Sweep::default();
    let mut chunk: Vec<StateIndex> = Vec::with_capacity(chunk_size.min(1 << n));
    let mut stage_len = 1usize;

    loop {
        chunk.clear();
        for state in order.by_ref() {
            if !checklist.get(state) {
                chunk.push(state);
                if chunk.len() == stage_len {
                    break;
                }
            }
        }
        stage_len = (stage_len * 2).min(chunk_size);
        if chunk.is_empty() {
            break;
        }

        let per_slice = chunk.len().div_ceil(DISPATCH_SLICES);
        let snapshot = &checklist;
        let results: Vec<SliceResult> = if parallel {
            chunk
                .par_chunks(per_slice)
                .map(|slice| sweep_slice(lattice, snapshot, slice))
                .collect()
        } else {
            chunk
                .chunks(per_slice)
                .map(|slice| sweep_slice(lattice, snapshot, slice))
                .collect()
        };

        for result in results {
            checklist.merge(&result.marks);
            total.evaluated += result.sweep.evaluated;
            total.reads += result.sweep.reads;
            if let Some(best) = result.sweep.best {
                total.offer(best);
            }
        }
    }
    total.into_selection(checklist.count())
}

fn sweep_slice(lattice: &LatticeModel, global: &Checklist, slice: &[StateIndex]) -> SliceResult {
    let mut marks = Checklist::new(lattice.n_active());
    let mut sweep = Sweep::default();
    for &state in slice {
        if global.get(state) || marks.get(state) {
            continue;
        }
        sweep.visit(lattice, state, &mut marks);
    }
    SliceResult { sweep, marks }
}
