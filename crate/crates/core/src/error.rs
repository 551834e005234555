use thiserror::Error;

use crate::lattice::{SubjectId, N_MAX};

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("subject count unsupported: {0} (supported range is 1..={N_MAX})")]
    UnsupportedSubjectCount(usize),

    #[error("invalid prior for subject {subject_id}: risk {risk} is not in (0, 1)")]
    InvalidPrior { subject_id: SubjectId, risk: f64 },

    #[error("duplicate subject id {0}")]
    DuplicateSubject(SubjectId),

    #[error("inactive subject {0}")]
    InactiveSubject(SubjectId),

    #[error("state {state} is out of range for a lattice with {n_active} active subjects")]
    StateOutOfRange { state: u32, n_active: u32 },

    #[error("empty pool is not a testable selection")]
    EmptyPool,

    #[error("impossible response: the observation has zero likelihood under every state")]
    ImpossibleResponse,

    #[error("lattice has no active subjects left")]
    NoActiveSubjects,

    #[error("invalid response model: {0}")]
    InvalidModel(String),

    #[error("invalid thresholds: {0}")]
    InvalidThresholds(String),

    #[error("invalid probability distribution: {0}")]
    InvalidDistribution(String),

    #[error("invalid analysis config: {0}")]
    InvalidConfig(String),

    #[error("symmetry requires homogeneous risks")]
    SymmetryRequiresHomogeneousRisks,

    #[error("true-state enumeration too large: 2^{subjects} states (limit 2^{limit})")]
    EnumerationTooLarge { subjects: usize, limit: usize },

    #[error("scale guard: {0}")]
    ScaleGuard(String),

    #[error("worker pool: {0}")]
    WorkerPool(String),
}

impl Error {
    /// Errors raised by desk-scale guards rather than malformed input.
    pub fn is_scale_guard(&self) -> bool {
        matches!(
            self,
            Error::EnumerationTooLarge { .. } | Error::ScaleGuard(_)
        )
    }
}
