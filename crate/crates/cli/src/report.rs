//! Serialized analysis and selection output.

use std::path::Path;

use gt_core::{AnalysisReport, CommitEvent, Decision, Selection};
use serde::Serialize;

use crate::config::{RawConfig, RawPrior, RunConfig, SchemeName};
use crate::error::{CliError, Result};

pub const ENGINE_NAME: &str = "gt";
pub const ENGINE_VERSION: &str = env!("CARGO_PKG_VERSION");

/// Rounds to 12 significant digits so reports diff cleanly.
pub fn sig12(x: f64) -> f64 {
    if x == 0.0 || !x.is_finite() {
        return x;
    }
    format!("{x:.11e}").parse().expect("formatted float parses")
}

#[derive(Debug, Serialize)]
pub struct Engine {
    pub name: &'static str,
    pub version: &'static str,
}

const ENGINE: Engine = Engine {
    name: ENGINE_NAME,
    version: ENGINE_VERSION,
};

#[derive(Debug, Serialize)]
pub struct SubjectRow {
    pub id: String,
    pub risk: f64,
    pub fn_mass: f64,
    pub fp_mass: f64,
    pub fn_rate: f64,
    pub fp_rate: f64,
}

#[derive(Debug, Serialize)]
pub struct ReportBody {
    pub scheme: SchemeName,
    pub expected_tests: f64,
    pub decisive_rate: f64,
    pub aggregate_fn_mass: f64,
    pub aggregate_fp_mass: f64,
    pub aggregate_fn_rate: f64,
    pub aggregate_fp_rate: f64,
    pub per_subject_exact: bool,
    pub per_subject: Vec<SubjectRow>,
    pub branches_terminal: u64,
    pub branches_pruned: u64,
    pub nodes_expanded: u64,
    pub trees: u64,
    pub max_tree_branches: u64,
    pub retained_mass: f64,
    pub accounted_mass: f64,
    pub pruned_mass: f64,
    pub max_weight_drift: f64,
}

#[derive(Debug, Serialize)]
pub struct ReportFile {
    pub engine: Engine,
    pub config: RawConfig,
    pub report: ReportBody,
}

fn rounded_config(config: &RunConfig) -> RawConfig {
    let mut raw = config.to_raw();
    let round = |x: &mut Option<f64>| *x = x.map(sig12);
    raw.priors = raw.priors.map(|ps| {
        ps.into_iter()
            .map(|p| RawPrior {
                risk: sig12(p.risk),
                ..p
            })
            .collect()
    });
    round(&mut raw.sensitivity);
    round(&mut raw.specificity);
    round(&mut raw.dilution_exponent);
    round(&mut raw.upper_eps);
    round(&mut raw.lower_eps);
    round(&mut raw.prune_threshold);
    round(&mut raw.retained_prior_mass);
    raw
}

pub fn subject_rows(config: &RunConfig, report: &AnalysisReport) -> Vec<SubjectRow> {
    report
        .per_subject
        .iter()
        .map(|s| SubjectRow {
            id: config.labels[s.subject_id].clone(),
            risk: sig12(s.risk),
            fn_mass: sig12(s.fn_mass),
            fp_mass: sig12(s.fp_mass),
            fn_rate: sig12(s.fn_rate),
            fp_rate: sig12(s.fp_rate),
        })
        .collect()
}

pub fn report_file(config: &RunConfig, r: &AnalysisReport) -> ReportFile {
    ReportFile {
        engine: ENGINE,
        config: rounded_config(config),
        report: ReportBody {
            scheme: r.scheme.into(),
            expected_tests: sig12(r.expected_tests),
            decisive_rate: sig12(r.decisive_rate),
            aggregate_fn_mass: sig12(r.aggregate_fn_mass),
            aggregate_fp_mass: sig12(r.aggregate_fp_mass),
            aggregate_fn_rate: sig12(r.aggregate_fn_rate),
            aggregate_fp_rate: sig12(r.aggregate_fp_rate),
            per_subject_exact: r.per_subject_exact,
            per_subject: subject_rows(config, r),
            branches_terminal: r.branches_terminal,
            branches_pruned: r.branches_pruned,
            nodes_expanded: r.nodes_expanded,
            trees: r.trees,
            max_tree_branches: r.max_tree_branches,
            retained_mass: sig12(r.retained_mass),
            accounted_mass: sig12(r.accounted_mass),
            pruned_mass: sig12(r.pruned_mass),
            max_weight_drift: sig12(r.max_weight_drift),
        },
    }
}

pub fn write_report(dir: &Path, config: &RunConfig, report: &AnalysisReport) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|source| CliError::Write {
        path: dir.to_path_buf(),
        source,
    })?;
    let json_path = dir.join("report.json");
    let mut json = serde_json::to_string_pretty(&report_file(config, report))
        .map_err(|e| CliError::Output(e.to_string()))?;
    json.push('\n');
    std::fs::write(&json_path, json).map_err(|source| CliError::Write {
        path: json_path,
        source,
    })?;

    let csv_path = dir.join("subjects.csv");
    let csv_err = |e: csv::Error| CliError::Output(format!("{}: {e}", csv_path.display()));
    let mut writer = csv::Writer::from_path(&csv_path).map_err(csv_err)?;
    for row in subject_rows(config, report) {
        writer.serialize(row).map_err(csv_err)?;
    }
    writer.flush().map_err(|source| CliError::Write {
        path: csv_path.clone(),
        source,
    })?;
    Ok(())
}

#[derive(Debug, Serialize)]
pub struct CommitRow {
    pub subject: String,
    pub decision: &'static str,
    pub residual_error: f64,
    pub stage: usize,
}

impl CommitRow {
    pub fn new(config: &RunConfig, c: &CommitEvent) -> Self {
        CommitRow {
            subject: config.labels[c.subject_id].clone(),
            decision: match c.decision {
                Decision::Negative => "negative",
                Decision::Positive => "positive",
            },
            residual_error: sig12(c.residual_error),
            stage: c.stage,
        }
    }
}

/// What `gt select` prints. Selection fields are null once every subject is
/// classified.
#[derive(Debug, Serialize)]
pub struct SelectOutput {
    pub pool: Option<Vec<String>>,
    pub mass: Option<f64>,
    pub evaluated_states: Option<u64>,
    pub skipped_states: Option<u64>,
    pub mass_reads: Option<u64>,
    pub stage: usize,
    pub unclassified: Vec<String>,
    pub commits: Vec<CommitRow>,
}

impl SelectOutput {
    pub fn new(
        config: &RunConfig,
        pool: Option<(Vec<String>, Selection)>,
        stage: usize,
        unclassified: Vec<String>,
        commits: &[CommitEvent],
    ) -> Self {
        let (labels, sel) = match pool {
            Some((labels, sel)) => (Some(labels), Some(sel)),
            None => (None, None),
        };
        SelectOutput {
            pool: labels,
            mass: sel.map(|s| sig12(s.pool_mass)),
            evaluated_states: sel.map(|s| s.evaluated_states),
            skipped_states: sel.map(|s| s.skipped_states),
            mass_reads: sel.map(|s| s.mass_reads),
            stage,
            unclassified,
            commits: commits.iter().map(|c| CommitRow::new(config, c)).collect(),
        }
    }
}
