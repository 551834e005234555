//! Breadth-first single-tree and fusion-tree schemes.

use std::cmp::Reverse;

use rayon::prelude::*;

use super::{
    expand_node, expand_with, finish, warn_if_large, worker_pool, AnalysisConfig, AnalysisReport,
    BranchWeighting, Expansion, Scheme, Tally, Totals, TreeNode,
};
use crate::error::Result;
use crate::halving::op_bha_in_current_pool;

/// Below this many active subjects a single selection is too cheap to split.
const INTRA_LATTICE_MIN_ACTIVE: u32 = 10;

/// One marginal-weighted tree, built stage by stage.
pub fn run_single_tree(config: &AnalysisConfig, workers: usize) -> Result<AnalysisReport> {
    breadth_first(config, workers, Scheme::Single, 0.0)
}

/// The single tree with frontier branches of weight at most `prune_threshold`
/// dropped after every stage. With a zero threshold this is the single tree.
pub fn run_fusion_tree(config: &AnalysisConfig, workers: usize) -> Result<AnalysisReport> {
    breadth_first(config, workers, Scheme::Fusion, config.prune_threshold)
}

fn breadth_first(
    config: &AnalysisConfig,
    workers: usize,
    scheme: Scheme,
    threshold: f64,
) -> Result<AnalysisReport> {
    config.validate()?;
    warn_if_large(1, config.max_stages);
    let pool = worker_pool(workers)?;
    let threads = pool.current_num_threads();

    let mut tally = Tally::new(config.priors.len());
    let root = TreeNode::root(config)?;
    tally.charge_posterior(root.fresh_commits());
    let mut frontier = vec![root];
    let mut max_drift = 0.0f64;

    while !frontier.is_empty() {
        let expansions = pool.install(|| expand_stage(&frontier, config, threads))?;
        let mut next = Vec::with_capacity(frontier.len() * 2);
        for (node, expansion) in frontier.iter().zip(expansions) {
            if let Some(kind) = expansion.terminal {
                tally.terminal(node.weight, node.depth(), kind);
                continue;
            }
            tally.expanded += 1;
            for weight in expansion.pruned {
                tally.prune(weight);
            }
            for child in expansion.children {
                if child.weight <= threshold {
                    tally.prune(child.weight);
                    continue;
                }
                tally.charge_posterior(child.fresh_commits());
                next.push(child);
            }
        }
        frontier = next;
        let open: f64 = frontier.iter().map(|n| n.weight).sum();
        max_drift = max_drift.max((tally.accounted + tally.pruned_mass + open - 1.0).abs());
    }

    let leaves = tally.leaves();
    Ok(finish(
        tally,
        config,
        Totals {
            scheme,
            trees: 1,
            max_tree_branches: leaves,
            max_weight_drift: max_drift,
            retained_mass: 1.0,
            per_subject_exact: true,
        },
    ))
}

/// Expands one frontier with task alignment: nodes are grouped by lattice
/// size, largest first, and each group is dispatched as a unit. A group too
/// small to occupy every worker on lattices big enough to matter instead
/// runs one node at a time with the selection itself split across workers.
/// Results come back in frontier order.
fn expand_stage(
    frontier: &[TreeNode],
    config: &AnalysisConfig,
    threads: usize,
) -> Result<Vec<Expansion>> {
    let mut order: Vec<usize> = (0..frontier.len()).collect();
    order.sort_by_key(|&i| Reverse(frontier[i].lattice.n_active()));

    let mut slots: Vec<Option<Expansion>> = vec![None; frontier.len()];
    for group in
        order.chunk_by(|&a, &b| frontier[a].lattice.n_active() == frontier[b].lattice.n_active())
    {
        let n_active = frontier[group[0]].lattice.n_active();
        let results: Vec<Result<Expansion>> =
            if threads > 1 && group.len() < threads && n_active >= INTRA_LATTICE_MIN_ACTIVE {
                group
                    .iter()
                    .map(|&i| {
                        expand_with(&frontier[i], config, BranchWeighting::Marginal, |l| {
                            op_bha_in_current_pool(l)
                        })
                    })
                    .collect()
            } else {
                group
                    .par_iter()
                    .map(|&i| expand_node(&frontier[i], config, BranchWeighting::Marginal))
                    .collect()
            };
        for (&i, result) in group.iter().zip(results) {
            slots[i] = Some(result?);
        }
    }
    Ok(slots
        .into_iter()
        .map(|s| s.expect("every frontier node expanded"))
        .collect())
}
