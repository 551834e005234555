//! Multi-tree scheme: one depth-first tree per true state.

use std::cmp::Ordering;

use rayon::prelude::*;

use super::{
    expand_node, finish, warn_if_large, worker_pool, AnalysisConfig, AnalysisReport,
    BranchWeighting, Scheme, Tally, Totals, TreeNode,
};
use crate::error::{Error, Result};
use crate::lattice::{LatticeModel, SubjectPrior};
use crate::state::StateIndex;

/// Largest subject count the multi-tree enumerates without reductions.
pub const MULTI_ENUMERATION_LIMIT: usize = 20;

/// Slack when comparing a cumulative prior sum against the retained mass.
const RETAINED_TOLERANCE: f64 = 1e-12;

/// A true state over all subjects (full-lattice bits) and the prior mass it stands for.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrueState {
    pub state: StateIndex,
    pub weight: f64,
}

/// Every state of the full lattice with its prior probability.
pub fn enumerate_true_states(priors: &[SubjectPrior]) -> Result<Vec<TrueState>> {
    let lattice = LatticeModel::build(priors)?;
    Ok(lattice
        .probs()
        .iter()
        .enumerate()
        .map(|(i, &weight)| TrueState {
            state: StateIndex(i as u32),
            weight,
        })
        .collect())
}

/// One representative per number of positives `k`, the `k` lowest-indexed
/// subjects positive, weighted by the binomial mass of its class.
pub fn apply_symmetry(priors: &[SubjectPrior]) -> Result<Vec<TrueState>> {
    let Some(first) = priors.first() else {
        return Err(Error::UnsupportedSubjectCount(0));
    };
    if priors.iter().any(|p| p.risk != first.risk) {
        return Err(Error::SymmetryRequiresHomogeneousRisks);
    }
    let n = priors.len() as u32;
    let p = first.risk;
    let top = StateIndex::top(n);
    let mut binomial = 1.0f64;
    Ok((0..=n)
        .map(|k| {
            if k > 0 {
                binomial = binomial * f64::from(n - k + 1) / f64::from(k);
            }
            TrueState {
                state: StateIndex(top.bits() >> k),
                weight: binomial * p.powi(k as i32) * (1.0 - p).powi((n - k) as i32),
            }
        })
        .collect())
}

/// Keeps the most probable states until their prior mass reaches `retained`.
/// Returns the kept states, most probable first, and their total mass (1 when
/// nothing is dropped). Weights are not renormalized.
pub fn apply_prior_mass_tradeoff(
    mut states: Vec<TrueState>,
    retained: f64,
) -> (Vec<TrueState>, f64) {
    if retained >= 1.0 {
        return (states, 1.0);
    }
    states.sort_by(|a, b| {
        b.weight
            .partial_cmp(&a.weight)
            .unwrap_or(Ordering::Equal)
            .then(a.state.cmp(&b.state))
    });
    let mut cumulative = 0.0;
    for (i, t) in states.iter().enumerate() {
        cumulative += t.weight;
        if cumulative >= retained - RETAINED_TOLERANCE && i + 1 < states.len() {
            states.truncate(i + 1);
            return (states, cumulative);
        }
    }
    (states, 1.0)
}

/// Runs one conditional tree per (possibly reduced) true state in parallel
/// and aggregates them by prior weight.
pub fn run_multi_tree(config: &AnalysisConfig, workers: usize) -> Result<AnalysisReport> {
    config.validate()?;
    let n = config.priors.len();
    let states = if config.symmetry {
        apply_symmetry(&config.priors)?
    } else {
        if n > MULTI_ENUMERATION_LIMIT {
            return Err(Error::EnumerationTooLarge {
                subjects: n,
                limit: MULTI_ENUMERATION_LIMIT,
            });
        }
        enumerate_true_states(&config.priors)?
    };
    let (states, retained_mass) = apply_prior_mass_tradeoff(states, config.retained_prior_mass);
    warn_if_large(states.len() as u64, config.max_stages);

    let root = TreeNode::root(config)?;
    let pool = worker_pool(workers)?;
    let trees: Vec<Result<(Tally, f64)>> = pool.install(|| {
        states
            .par_iter()
            .map(|t| conditional_tree(&root, config, t.state))
            .collect()
    });

    let mut total = Tally::new(n);
    let mut max_tree_branches = 0;
    let mut max_weight_drift = 0.0f64;
    for (t, tree) in states.iter().zip(trees) {
        let (tally, drift) = tree?;
        max_tree_branches = max_tree_branches.max(tally.leaves());
        max_weight_drift = max_weight_drift.max(drift);
        total.add_scaled(&tally, t.weight);
    }
    Ok(finish(
        total,
        config,
        Totals {
            scheme: Scheme::Multi,
            trees: states.len() as u64,
            max_tree_branches,
            max_weight_drift,
            retained_mass,
            per_subject_exact: !config.symmetry,
        },
    ))
}

/// Depth-first tree for one true state; returns its tally and weight drift.
fn conditional_tree(
    root: &TreeNode,
    config: &AnalysisConfig,
    truth: StateIndex,
) -> Result<(Tally, f64)> {
    let n = config.priors.len();
    let weighting = BranchWeighting::Conditional {
        truth,
        prune_threshold: config.prune_threshold,
    };
    let mut tally = Tally::new(n);
    tally.charge_against(root.fresh_commits(), truth, n);
    let mut stack = vec![root.clone()];
    while let Some(node) = stack.pop() {
        let expansion = expand_node(&node, config, weighting)?;
        if let Some(kind) = expansion.terminal {
            tally.terminal(node.weight, node.depth(), kind);
            continue;
        }
        tally.expanded += 1;
        for weight in expansion.pruned {
            tally.prune(weight);
        }
        // negative branch explored first
        for child in expansion.children.into_iter().rev() {
            tally.charge_against(child.fresh_commits(), truth, n);
            stack.push(child);
        }
    }
    let drift = (tally.accounted + tally.pruned_mass - 1.0).abs();
    Ok((tally, drift))
}
