//! Exhaustive response-tree analysis.
//!
//! A response tree follows every sequence of test outcomes: at each node the
//! halving selector picks a pool, and the node branches on a negative and a
//! positive reading. Three construction schemes are provided:
//!
//! * [`run_multi_tree`]: one depth-first tree per true state, branches
//!   weighted by `P(response | true state)` and aggregated by prior.
//! * [`run_single_tree`]: one breadth-first tree weighted by the posterior
//!   predictive probability of each response.
//! * [`run_fusion_tree`]: the single tree, pruning frontier branches whose
//!   weight falls to the prune threshold after each stage.
//!
//! With no pruning all three produce the same statistics.

mod multi;
mod single;

pub use multi::{
    apply_prior_mass_tradeoff, apply_symmetry, enumerate_true_states, run_multi_tree, TrueState,
    MULTI_ENUMERATION_LIMIT,
};
pub use single::{run_fusion_tree, run_single_tree};

use crate::error::{Error, Result};
use crate::halving::{select_op_bha, Selection};
use crate::lattice::{
    CommitEvent, Decision, LatticeModel, SubjectId, SubjectPrior, Thresholds, N_MAX,
};
use crate::response::{Response, ResponseModel};
use crate::state::StateIndex;

/// Deepest tree the desk-scale guard allows.
pub const MAX_STAGES_GUARD: usize = 16;

/// Projected branch count beyond which a run logs a warning.
pub const PROJECTED_BRANCH_WARNING: u64 = 1 << 20;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Scheme {
    Multi,
    Single,
    Fusion,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AnalysisConfig {
    pub priors: Vec<SubjectPrior>,
    pub model: ResponseModel,
    pub thresholds: Thresholds,
    pub max_stages: usize,
    pub scheme: Scheme,
    /// Branches with weight at or below this are pruned (multi and fusion).
    pub prune_threshold: f64,
    /// Multi-tree only: one representative tree per number of positives.
    pub symmetry: bool,
    /// Multi-tree only: keep the most probable true states up to this mass.
    pub retained_prior_mass: f64,
}

impl AnalysisConfig {
    /// Noiseless model, default thresholds, no pruning or reductions.
    pub fn new(priors: Vec<SubjectPrior>, scheme: Scheme, max_stages: usize) -> Self {
        AnalysisConfig {
            priors,
            model: ResponseModel::noiseless(),
            thresholds: Thresholds::default(),
            max_stages,
            scheme,
            prune_threshold: 0.0,
            symmetry: false,
            retained_prior_mass: 1.0,
        }
    }

    pub fn is_homogeneous(&self) -> bool {
        self.priors
            .first()
            .is_none_or(|first| self.priors.iter().all(|p| p.risk == first.risk))
    }

    pub fn validate(&self) -> Result<()> {
        if self.priors.is_empty() || self.priors.len() > N_MAX {
            return Err(Error::UnsupportedSubjectCount(self.priors.len()));
        }
        for p in &self.priors {
            if !(p.risk > 0.0 && p.risk < 1.0) {
                return Err(Error::InvalidPrior {
                    subject_id: p.subject_id,
                    risk: p.risk,
                });
            }
        }
        // re-run the constructors' checks
        ResponseModel::new(
            self.model.sensitivity,
            self.model.specificity,
            self.model.dilution_exponent,
        )?;
        Thresholds::new(self.thresholds.upper_eps, self.thresholds.lower_eps)?;
        if self.max_stages == 0 {
            return Err(Error::InvalidConfig("max_stages must be at least 1".into()));
        }
        if self.max_stages > MAX_STAGES_GUARD {
            return Err(Error::ScaleGuard(format!(
                "max_stages {} exceeds the limit of {MAX_STAGES_GUARD} (projected 2^{} branches)",
                self.max_stages, self.max_stages
            )));
        }
        if !(self.prune_threshold >= 0.0 && self.prune_threshold < 1.0) {
            return Err(Error::InvalidConfig(format!(
                "prune_threshold {} is not in [0, 1)",
                self.prune_threshold
            )));
        }
        if !(self.retained_prior_mass > 0.0 && self.retained_prior_mass <= 1.0) {
            return Err(Error::InvalidConfig(format!(
                "retained_prior_mass {} is not in (0, 1]",
                self.retained_prior_mass
            )));
        }
        if self.symmetry && !self.is_homogeneous() {
            return Err(Error::SymmetryRequiresHomogeneousRisks);
        }
        Ok(())
    }
}

/// One observed test along a branch, pool given as original subject ids.
#[derive(Debug, Clone, PartialEq)]
pub struct PathStep {
    pub pool: Vec<SubjectId>,
    pub response: Response,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WeightedCommit {
    pub event: CommitEvent,
    /// Branch weight at the node where the commit happened.
    pub weight: f64,
}

#[derive(Debug, Clone)]
pub struct TreeNode {
    pub lattice: LatticeModel,
    pub path: Vec<PathStep>,
    /// Marginal branch probability (single/fusion) or `P(path | true state)` (multi).
    pub weight: f64,
    /// Every commit along the path, oldest first.
    pub commits: Vec<WeightedCommit>,
    /// How many of `commits` were made on entering this node.
    pub new_commits: usize,
}

impl TreeNode {
    /// The prior lattice after committing anything the priors already decide.
    pub fn root(config: &AnalysisConfig) -> Result<TreeNode> {
        let mut lattice = LatticeModel::build(&config.priors)?;
        let commits: Vec<WeightedCommit> = lattice
            .classify_and_shrink(&config.thresholds)
            .into_iter()
            .map(|event| WeightedCommit { event, weight: 1.0 })
            .collect();
        Ok(TreeNode {
            lattice,
            path: Vec::new(),
            weight: 1.0,
            new_commits: commits.len(),
            commits,
        })
    }

    /// Commits made on entering this node; each commit is charged exactly once.
    pub fn fresh_commits(&self) -> &[WeightedCommit] {
        &self.commits[self.commits.len() - self.new_commits..]
    }

    pub fn depth(&self) -> usize {
        self.path.len()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Termination {
    /// Every subject classified.
    Decisive,
    /// Stage limit reached with subjects still unclassified.
    Indecisive,
}

/// How child branches are weighted.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum BranchWeighting {
    /// Posterior predictive probability; zero-probability children are dropped.
    Marginal,
    /// `P(response | truth)`; children at or below `prune_threshold` are dropped.
    Conditional {
        truth: StateIndex,
        prune_threshold: f64,
    },
}

#[derive(Debug, Clone)]
pub struct Expansion {
    pub terminal: Option<Termination>,
    pub pool: Option<Selection>,
    pub children: Vec<TreeNode>,
    /// Weights of children that were dropped.
    pub pruned: Vec<f64>,
}

impl Expansion {
    fn terminal(kind: Termination) -> Self {
        Expansion {
            terminal: Some(kind),
            pool: None,
            children: Vec::new(),
            pruned: Vec::new(),
        }
    }
}

/// Expands one node: terminal if resolved or at the stage limit, otherwise
/// selects a pool by Op-BHA and builds the negative and positive children.
pub fn expand_node(
    node: &TreeNode,
    config: &AnalysisConfig,
    weighting: BranchWeighting,
) -> Result<Expansion> {
    expand_with(node, config, weighting, select_op_bha)
}

pub(crate) fn expand_with(
    node: &TreeNode,
    config: &AnalysisConfig,
    weighting: BranchWeighting,
    select: impl Fn(&LatticeModel) -> Result<Selection>,
) -> Result<Expansion> {
    if node.lattice.is_resolved() {
        return Ok(Expansion::terminal(Termination::Decisive));
    }
    if node.depth() >= config.max_stages {
        return Ok(Expansion::terminal(Termination::Indecisive));
    }
    let selection = select(&node.lattice)?;
    let pool = selection.pool;
    let pool_ids = node.lattice.decode_state(pool)?;

    let mut children = Vec::with_capacity(2);
    let mut pruned = Vec::new();
    for response in Response::BOTH {
        let (probability, floor) = match weighting {
            BranchWeighting::Marginal => {
                (config.model.predictive(&node.lattice, pool, response)?, 0.0)
            }
            BranchWeighting::Conditional {
                truth,
                prune_threshold,
            } => {
                let local = node.lattice.project_truth(truth);
                (
                    config.model.likelihood(local, pool, response)?,
                    prune_threshold,
                )
            }
        };
        let weight = node.weight * probability;
        if weight <= floor {
            pruned.push(weight);
            continue;
        }
        let mut lattice = node.lattice.clone();
        match lattice.update_posterior(pool, response, &config.model) {
            Ok(()) => {}
            Err(Error::ImpossibleResponse) => {
                pruned.push(weight);
                continue;
            }
            Err(e) => return Err(e),
        }
        let mut commits = node.commits.clone();
        let inherited = commits.len();
        commits.extend(
            lattice
                .classify_and_shrink(&config.thresholds)
                .into_iter()
                .map(|event| WeightedCommit { event, weight }),
        );
        let new_commits = commits.len() - inherited;
        let mut path = node.path.clone();
        path.push(PathStep {
            pool: pool_ids.clone(),
            response,
        });
        children.push(TreeNode {
            lattice,
            path,
            weight,
            commits,
            new_commits,
        });
    }
    Ok(Expansion {
        terminal: None,
        pool: Some(selection),
        children,
        pruned,
    })
}

/// Per-subject error masses. Rates divide by the subject's prior positive
/// (false negatives) or negative (false positives) mass.
#[derive(Debug, Clone, PartialEq)]
pub struct SubjectErrors {
    pub subject_id: SubjectId,
    pub risk: f64,
    pub fn_mass: f64,
    pub fp_mass: f64,
    pub fn_rate: f64,
    pub fp_rate: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AnalysisReport {
    pub scheme: Scheme,
    /// Expected number of tests; indecisive branches count `max_stages`.
    pub expected_tests: f64,
    /// Probability mass of branches that classify every subject.
    pub decisive_rate: f64,
    /// In prior order.
    pub per_subject: Vec<SubjectErrors>,
    /// False when per-subject values are exchangeable averages (symmetry).
    pub per_subject_exact: bool,
    pub aggregate_fn_mass: f64,
    pub aggregate_fp_mass: f64,
    pub aggregate_fn_rate: f64,
    pub aggregate_fp_rate: f64,
    pub branches_terminal: u64,
    pub branches_pruned: u64,
    pub nodes_expanded: u64,
    /// Prior mass of the true states analyzed (multi with trade-off), else 1.
    pub retained_mass: f64,
    /// Weight reaching terminal branches.
    pub accounted_mass: f64,
    /// Weight lost to pruning.
    pub pruned_mass: f64,
    pub trees: u64,
    /// Largest terminal + pruned leaf count of any one tree.
    pub max_tree_branches: u64,
    /// Largest deviation from weight conservation seen at any stage (or tree).
    pub max_weight_drift: f64,
}

impl AnalysisReport {
    pub fn subject(&self, subject_id: SubjectId) -> Option<&SubjectErrors> {
        self.per_subject.iter().find(|s| s.subject_id == subject_id)
    }
}

/// Runs the scheme named in the config.
pub fn analyze(config: &AnalysisConfig, workers: usize) -> Result<AnalysisReport> {
    match config.scheme {
        Scheme::Multi => run_multi_tree(config, workers),
        Scheme::Single => run_single_tree(config, workers),
        Scheme::Fusion => run_fusion_tree(config, workers),
    }
}

/// `0` means one worker per available core.
pub fn resolve_workers(workers: usize) -> usize {
    if workers == 0 {
        std::thread::available_parallelism().map_or(1, |n| n.get())
    } else {
        workers
    }
}

pub(crate) fn worker_pool(workers: usize) -> Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(resolve_workers(workers))
        .build()
        .map_err(|e| Error::WorkerPool(e.to_string()))
}

/// Statistics accumulated over one tree (or one stage of one).
#[derive(Debug, Clone, Default)]
pub(crate) struct Tally {
    tests: f64,
    decisive: f64,
    accounted: f64,
    pruned_mass: f64,
    fn_mass: Vec<f64>,
    fp_mass: Vec<f64>,
    terminal: u64,
    pruned: u64,
    expanded: u64,
}

impl Tally {
    fn new(n_subjects: usize) -> Self {
        Tally {
            fn_mass: vec![0.0; n_subjects],
            fp_mass: vec![0.0; n_subjects],
            ..Tally::default()
        }
    }

    fn terminal(&mut self, weight: f64, tests: usize, kind: Termination) {
        self.terminal += 1;
        self.accounted += weight;
        self.tests += weight * tests as f64;
        if kind == Termination::Decisive {
            self.decisive += weight;
        }
    }

    fn prune(&mut self, weight: f64) {
        self.pruned += 1;
        self.pruned_mass += weight;
    }

    fn leaves(&self) -> u64 {
        self.terminal + self.pruned
    }

    /// Charges each commit its commit-time probability of being wrong.
    fn charge_posterior(&mut self, commits: &[WeightedCommit]) {
        for c in commits {
            let pos = c.event.position;
            match c.event.decision {
                Decision::Negative => self.fn_mass[pos] += c.weight * c.event.residual_error,
                Decision::Positive => self.fp_mass[pos] += c.weight * c.event.residual_error,
            }
        }
    }

    /// Charges commits that contradict a known true state (full-lattice bits).
    fn charge_against(&mut self, commits: &[WeightedCommit], truth: StateIndex, n_subjects: usize) {
        for c in commits {
            let pos = c.event.position;
            let negative = truth.bits() & (1 << (n_subjects - 1 - pos)) != 0;
            match (c.event.decision, negative) {
                (Decision::Negative, false) => self.fn_mass[pos] += c.weight,
                (Decision::Positive, true) => self.fp_mass[pos] += c.weight,
                _ => {}
            }
        }
    }

    fn add_scaled(&mut self, other: &Tally, scale: f64) {
        self.tests += scale * other.tests;
        self.decisive += scale * other.decisive;
        self.accounted += scale * other.accounted;
        self.pruned_mass += scale * other.pruned_mass;
        for (a, b) in self.fn_mass.iter_mut().zip(&other.fn_mass) {
            *a += scale * b;
        }
        for (a, b) in self.fp_mass.iter_mut().zip(&other.fp_mass) {
            *a += scale * b;
        }
        self.terminal += other.terminal;
        self.pruned += other.pruned;
        self.expanded += other.expanded;
    }
}

pub(crate) struct Totals {
    pub scheme: Scheme,
    pub trees: u64,
    pub max_tree_branches: u64,
    pub max_weight_drift: f64,
    pub retained_mass: f64,
    pub per_subject_exact: bool,
}

pub(crate) fn finish(tally: Tally, config: &AnalysisConfig, totals: Totals) -> AnalysisReport {
    let n = config.priors.len();
    let aggregate_fn_mass: f64 = tally.fn_mass.iter().sum();
    let aggregate_fp_mass: f64 = tally.fp_mass.iter().sum();
    let per_subject = config
        .priors
        .iter()
        .enumerate()
        .map(|(pos, prior)| {
            let (fn_mass, fp_mass) = if totals.per_subject_exact {
                (tally.fn_mass[pos], tally.fp_mass[pos])
            } else {
                (aggregate_fn_mass / n as f64, aggregate_fp_mass / n as f64)
            };
            SubjectErrors {
                subject_id: prior.subject_id,
                risk: prior.risk,
                fn_mass,
                fp_mass,
                fn_rate: fn_mass / prior.risk,
                fp_rate: fp_mass / (1.0 - prior.risk),
            }
        })
        .collect();
    let positive_mass: f64 = config.priors.iter().map(|p| p.risk).sum();
    let negative_mass: f64 = config.priors.iter().map(|p| 1.0 - p.risk).sum();
    AnalysisReport {
        scheme: totals.scheme,
        expected_tests: tally.tests,
        decisive_rate: tally.decisive,
        per_subject,
        per_subject_exact: totals.per_subject_exact,
        aggregate_fn_mass,
        aggregate_fp_mass,
        aggregate_fn_rate: aggregate_fn_mass / positive_mass,
        aggregate_fp_rate: aggregate_fp_mass / negative_mass,
        branches_terminal: tally.terminal,
        branches_pruned: tally.pruned,
        nodes_expanded: tally.expanded,
        retained_mass: totals.retained_mass,
        accounted_mass: tally.accounted,
        pruned_mass: tally.pruned_mass,
        trees: totals.trees,
        max_tree_branches: totals.max_tree_branches,
        max_weight_drift: totals.max_weight_drift,
    }
}

pub(crate) fn warn_if_large(trees: u64, max_stages: usize) {
    let projected = trees.saturating_mul(1u64 << max_stages);
    if projected > PROJECTED_BRANCH_WARNING {
        log::warn!(
            "projected {projected} branches ({trees} tree(s) of depth {max_stages}); this run may be slow"
        );
    }
}
