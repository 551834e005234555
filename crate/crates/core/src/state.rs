//! Bit-encoded lattice states.
//!
//! A state is an integer whose set bits are the subjects classified as
//! negative. Up-set membership is then a single AND, and up-/down-sets are
//! generated directly from the free bits instead of scanning the lattice.

use std::fmt;

/// A lattice state: bit `b` set means the active subject at bit `b` is negative.
///
/// The all-ones state (`top`) is "every subject negative", zero is "every
/// subject positive".
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct StateIndex(pub u32);

impl StateIndex {
    pub const BOTTOM: StateIndex = StateIndex(0);

    /// All `n` bits set.
    #[inline]
    pub fn top(n: u32) -> Self {
        StateIndex(((1u64 << n) - 1) as u32)
    }

    #[inline]
    pub fn singleton(bit: u32) -> Self {
        StateIndex(1 << bit)
    }

    #[inline]
    pub fn bits(self) -> u32 {
        self.0
    }

    #[inline]
    pub fn index(self) -> usize {
        self.0 as usize
    }

    /// Number of negative subjects in the state.
    #[inline]
    pub fn cardinality(self) -> u32 {
        self.0.count_ones()
    }

    #[inline]
    pub fn is_bottom(self) -> bool {
        self.0 == 0
    }

    /// True iff `self` lies in the up-set of `other`.
    #[inline]
    pub fn contains(self, other: StateIndex) -> bool {
        contains(self, other)
    }

    #[inline]
    pub fn fits(self, n: u32) -> bool {
        u64::from(self.0) < (1u64 << n)
    }

    /// Walks the up-set of `self` in a lattice of `n` subjects.
    pub fn up_set(self, n: u32) -> SubsetWalk {
        SubsetWalk::up(self, n)
    }

    /// Walks the down-set of `self`.
    pub fn down_set(self) -> SubsetWalk {
        SubsetWalk::down(self)
    }
}

impl fmt::Display for StateIndex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// `a ∈ ↑b`: every negative subject of `b` is also negative in `a`.
#[inline]
pub fn contains(a: StateIndex, b: StateIndex) -> bool {
    a.0 & b.0 == b.0
}

/// Generates every state reachable from a base state by toggling any subset
/// of a fixed list of bits.
///
/// The toggled bits are listed from the highest bit down and a subset counter
/// runs upward, bit `j` of the counter selecting the `j`-th listed bit. For
/// `↑001` over three subjects this yields `001, 101, 011, 111`.
///
/// Each step is one add: moving the counter from `c - 1` to `c` clears the
/// bits below `trailing_zeros(c)` and sets that one, so the state changes by
/// a precomputed per-position delta. Because the enumeration order only
/// depends on bit significance, the order of `↑a` inside `↑b` (for
/// `a ∈ ↑b`) matches the order of `↑a` on its own.
#[derive(Debug, Clone)]
pub struct SubsetWalk {
    current: u32,
    deltas: [u32; 32],
    counter: u64,
    len: u64,
}

impl SubsetWalk {
    fn new(base: StateIndex, toggles: u32, adding: bool) -> Self {
        let mut deltas = [0u32; 32];
        let mut lower_sum = 0u32;
        let mut k = 0usize;
        let mut rest = toggles;
        while rest != 0 {
            let bit = 1u32 << (31 - rest.leading_zeros());
            rest &= !bit;
            let delta = bit.wrapping_sub(lower_sum);
            deltas[k] = if adding { delta } else { delta.wrapping_neg() };
            lower_sum = lower_sum.wrapping_add(bit);
            k += 1;
        }
        SubsetWalk {
            current: base.0,
            deltas,
            counter: 0,
            len: 1u64 << k,
        }
    }

    pub fn up(base: StateIndex, n: u32) -> Self {
        let free = StateIndex::top(n).0 & !base.0;
        Self::new(base, free, true)
    }

    pub fn down(base: StateIndex) -> Self {
        Self::new(base, base.0, false)
    }
}

impl Iterator for SubsetWalk {
    type Item = StateIndex;

    #[inline]
    fn next(&mut self) -> Option<StateIndex> {
        if self.counter >= self.len {
            return None;
        }
        if self.counter > 0 {
            let pos = self.counter.trailing_zeros() as usize;
            self.current = self.current.wrapping_add(self.deltas[pos]);
        }
        self.counter += 1;
        Some(StateIndex(self.current))
    }

    fn size_hint(&self) -> (usize, Option<usize>) {
        let rest = (self.len - self.counter) as usize;
        (rest, Some(rest))
    }
}

impl ExactSizeIterator for SubsetWalk {}
