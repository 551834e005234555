//! Observed test history: `[{"pool": [...], "response": "negative"|"positive"}]`.
//! Pool members are subject labels or numeric subject ids.

use std::path::Path;

use gt_core::{
    CommitEvent, Error as EngineError, LatticeModel, Response, ResponseModel, Thresholds,
};
use serde::Deserialize;

use crate::config::RunConfig;
use crate::error::{CliError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ResponseName {
    Negative,
    Positive,
}

impl From<ResponseName> for Response {
    fn from(r: ResponseName) -> Self {
        match r {
            ResponseName::Negative => Response::Negative,
            ResponseName::Positive => Response::Positive,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Deserialize)]
#[serde(untagged)]
pub enum SubjectRef {
    Id(usize),
    Label(String),
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HistoryEntry {
    pub pool: Vec<SubjectRef>,
    pub response: ResponseName,
}

pub fn parse_history(path: &Path) -> Result<Vec<HistoryEntry>> {
    let text = std::fs::read_to_string(path).map_err(|source| CliError::Read {
        path: path.to_path_buf(),
        source,
    })?;
    parse_history_str(&text)
}

pub fn parse_history_str(text: &str) -> Result<Vec<HistoryEntry>> {
    serde_json::from_str(text).map_err(|e| CliError::History(e.to_string()))
}

fn resolve(config: &RunConfig, r: &SubjectRef, step: usize) -> Result<usize> {
    let id = match r {
        SubjectRef::Id(id) => Some(*id).filter(|&id| id < config.n_subjects()),
        SubjectRef::Label(label) => config.subject_index(label),
    };
    id.ok_or_else(|| CliError::History(format!("step {step}: unknown subject {r:?}")))
}

/// Builds the prior lattice and replays `history`, classifying after each
/// response. Returns the lattice and every commit in order.
pub fn replay(
    config: &RunConfig,
    history: &[HistoryEntry],
) -> Result<(LatticeModel, Vec<CommitEvent>)> {
    let a = &config.analysis;
    let mut lattice = LatticeModel::build(&a.priors)?;
    let mut commits = lattice.classify_and_shrink(&a.thresholds);
    for (i, entry) in history.iter().enumerate() {
        let step = i + 1;
        commits.extend(apply(
            config,
            &mut lattice,
            entry,
            step,
            &a.model,
            &a.thresholds,
        )?);
    }
    Ok((lattice, commits))
}

fn apply(
    config: &RunConfig,
    lattice: &mut LatticeModel,
    entry: &HistoryEntry,
    step: usize,
    model: &ResponseModel,
    thresholds: &Thresholds,
) -> Result<Vec<CommitEvent>> {
    if entry.pool.is_empty() {
        return Err(CliError::History(format!("step {step}: empty pool")));
    }
    let ids = entry
        .pool
        .iter()
        .map(|r| resolve(config, r, step))
        .collect::<Result<Vec<usize>>>()?;
    let pool = lattice.encode_state(&ids).map_err(|e| match e {
        EngineError::InactiveSubject(id) => CliError::History(format!(
            "step {step}: subject {} is already classified",
            config.labels[id]
        )),
        other => other.into(),
    })?;
    match lattice.update_posterior(pool, entry.response.into(), model) {
        Ok(()) => Ok(lattice.classify_and_shrink(thresholds)),
        Err(EngineError::ImpossibleResponse) => Err(CliError::ImpossibleResponse { step }),
        Err(e) => Err(e.into()),
    }
}
