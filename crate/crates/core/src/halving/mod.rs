//! Test selection by Bayesian halving.
//!
//! The selected pool is the state whose up-set mass is closest to 0.5.
//! [`select_bha`] evaluates every candidate. [`select_op_bha`] uses the fact
//! that mass strictly decreases up the lattice: a state with mass below 0.5
//! rules out its whole up-set, one above 0.5 rules out its down-set. Both
//! walk candidates in [`traversal_order`] and keep the first strict
//! improvement, so they pick the same pool.

mod checklist;
mod parallel;

pub use checklist::Checklist;
pub use parallel::{
    default_chunk_size, select_op_bha_parallel, DEFAULT_CHUNK_EXPONENT_OFFSET, DISPATCH_SLICES,
};

pub(crate) use parallel::op_bha_in_current_pool;

use crate::error::{Error, Result};
use crate::lattice::LatticeModel;
use crate::state::StateIndex;

/// Outcome of one test selection.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Selection {
    pub pool: StateIndex,
    pub pool_mass: f64,
    /// States whose mass was computed.
    pub evaluated_states: u64,
    /// States ruled out without computing their mass.
    pub skipped_states: u64,
    /// Probability-array reads spent on mass computations.
    pub mass_reads: u64,
}

impl Selection {
    pub fn gap(&self) -> f64 {
        (self.pool_mass - 0.5).abs()
    }
}

/// All `2^n` states grouped by cardinality `n, 0, n-1, 1, ...`, ascending
/// within each group.
pub fn traversal_order(n: u32) -> TraversalOrder {
    let mut cardinalities = Vec::with_capacity(n as usize + 1);
    let (mut lo, mut hi) = (0u32, n);
    loop {
        cardinalities.push(hi);
        if lo == hi {
            break;
        }
        cardinalities.push(lo);
        lo += 1;
        if lo > hi - 1 {
            break;
        }
        hi -= 1;
    }
    TraversalOrder {
        n,
        cardinalities,
        group: 0,
        next: None,
    }
}

#[derive(Debug, Clone)]
pub struct TraversalOrder {
    n: u32,
    cardinalities: Vec<u32>,
    group: usize,
    next: Option<u64>,
}

impl Iterator for TraversalOrder {
    type Item = StateIndex;

    fn next(&mut self) -> Option<StateIndex> {
        let limit = 1u64 << self.n;
        loop {
            if let Some(x) = self.next {
                if x < limit {
                    self.next = if x == 0 {
                        None
                    } else {
                        Some(next_same_popcount(x))
                    };
                    if x == 0 {
                        self.group += 1;
                    }
                    return Some(StateIndex(x as u32));
                }
                self.next = None;
                self.group += 1;
            }
            let &k = self.cardinalities.get(self.group)?;
            self.next = Some((1u64 << k) - 1);
        }
    }
}

/// Gosper's hack: the next larger integer with the same popcount.
#[inline]
fn next_same_popcount(x: u64) -> u64 {
    let c = x & x.wrapping_neg();
    let r = x + c;
    (((r ^ x) >> 2) / c) | r
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct Best {
    pub state: StateIndex,
    pub mass: f64,
    pub gap: f64,
}

/// Running state of a halving sweep.
#[derive(Debug, Default)]
pub(crate) struct Sweep {
    pub best: Option<Best>,
    pub evaluated: u64,
    pub reads: u64,
}

impl Sweep {
    /// Strict improvement only: ties keep the earlier state.
    pub fn offer(&mut self, candidate: Best) {
        if self.best.is_none_or(|b| candidate.gap < b.gap) {
            self.best = Some(candidate);
        }
    }

    fn evaluate(&mut self, lattice: &LatticeModel, state: StateIndex) -> f64 {
        let (mass, reads) = lattice.mass_counted(state);
        self.evaluated += 1;
        self.reads += reads;
        self.offer(Best {
            state,
            mass,
            gap: (mass - 0.5).abs(),
        });
        mass
    }

    /// Evaluates `state` and marks it plus whatever its mass rules out.
    pub fn visit(&mut self, lattice: &LatticeModel, state: StateIndex, marks: &mut Checklist) {
        let mass = self.evaluate(lattice, state);
        marks.set(state);
        if mass < 0.5 {
            marks.set_all(state.up_set(lattice.n_active()));
        } else if mass > 0.5 {
            marks.set_all(state.down_set());
        }
    }

    pub fn into_selection(self, checklist_count: u64) -> Selection {
        let best = self.best.expect("top state is always evaluated");
        Selection {
            pool: best.state,
            pool_mass: best.mass,
            evaluated_states: self.evaluated,
            skipped_states: checklist_count.saturating_sub(self.evaluated),
            mass_reads: self.reads,
        }
    }
}

pub(crate) fn candidates(n: u32) -> impl Iterator<Item = StateIndex> {
    traversal_order(n).filter(|s| !s.is_bottom())
}

fn require_active(lattice: &LatticeModel) -> Result<()> {
    if lattice.is_resolved() {
        Err(Error::NoActiveSubjects)
    } else {
        Ok(())
    }
}

/// Exhaustive halving: computes the mass of every non-empty pool.
pub fn select_bha(lattice: &LatticeModel) -> Result<Selection> {
    require_active(lattice)?;
    let mut sweep = Sweep::default();
    for state in candidates(lattice.n_active()) {
        sweep.evaluate(lattice, state);
    }
    Ok(sweep.into_selection(0))
}

/// Halving with checklist skipping.
pub fn select_op_bha(lattice: &LatticeModel) -> Result<Selection> {
    require_active(lattice)?;
    let n = lattice.n_active();
    let mut checklist = Checklist::new(n);
    let mut sweep = Sweep::default();
    for state in candidates(n) {
        if checklist.get(state) {
            continue;
        }
        sweep.visit(lattice, state, &mut checklist);
    }
    Ok(sweep.into_selection(checklist.count()))
}
