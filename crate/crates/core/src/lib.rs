//! Bayesian group-testing engine.
//!
//! The posterior over every joint status of up to [`N_MAX`] subjects is held
//! as a dense lattice ([`LatticeModel`]). Pools are chosen by Bayesian
//! halving ([`halving`]), responses update the lattice under a dilution-aware
//! [`ResponseModel`], and subjects whose marginal crosses a threshold are
//! classified and removed. [`tree`] evaluates the whole adaptive policy by
//! enumerating response trees.

pub mod error;
pub mod halving;
pub mod lattice;
pub mod response;
pub mod state;
pub mod tree;

pub use error::{Error, Result};
pub use halving::{select_bha, select_op_bha, select_op_bha_parallel, Selection};
pub use lattice::{
    priors_from_risks, Classification, CommitEvent, Decision, LatticeModel, SubjectId,
    SubjectPrior, Thresholds, N_MAX,
};
pub use response::{Response, ResponseModel};
pub use state::StateIndex;
pub use tree::{analyze, AnalysisConfig, AnalysisReport, Scheme, SubjectErrors};
