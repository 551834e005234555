use crate::state::StateIndex;

/// One bit per lattice state; set once the state is evaluated or proven
/// skippable.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Checklist {
    words: Vec<u64>,
    len: usize,
}

impl Checklist {
    pub fn new(n_active: u32) -> Self {
        let len = 1usize << n_active;
        Checklist {
            words: vec![0; len.div_ceil(64)],
            len,
        }
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    #[inline]
    pub fn get(&self, state: StateIndex) -> bool {
        let i = state.index();
        self.words[i >> 6] & (1 << (i & 63)) != 0
    }

    #[inline]
    pub fn set(&mut self, state: StateIndex) {
        let i = state.index();
        self.words[i >> 6] |= 1 << (i & 63);
    }

    pub fn set_all(&mut self, states: impl IntoIterator<Item = StateIndex>) {
        for s in states {
            self.set(s);
        }
    }

    /// Bitwise OR of `other` into `self`.
    pub fn merge(&mut self, other: &Checklist) {
        assert_eq!(self.len, other.len, "checklists of different lattices");
        for (w, o) in self.words.iter_mut().zip(&other.words) {
            *w |= *o;
        }
    }

    pub fn count(&self) -> u64 {
        self.words.iter().map(|w| u64::from(w.count_ones())).sum()
    }

    pub fn is_full(&self) -> bool {
        self.count() == self.len as u64
    }
}
