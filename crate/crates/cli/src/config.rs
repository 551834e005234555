//! Run configuration: the JSON file form and its validated counterpart.

use std::path::Path;

use gt_core::{AnalysisConfig, ResponseModel, Scheme, SubjectPrior, Thresholds};
use serde::{Deserialize, Serialize};

use crate::error::{CliError, Result};

pub const DEFAULT_SCHEME: Scheme = Scheme::Single;
pub const DEFAULT_MAX_STAGES: usize = 8;
pub const DEFAULT_WORKERS: usize = 0;
pub const DEFAULT_SEED: u64 = 0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SchemeName {
    Multi,
    Single,
    Fusion,
}

impl From<SchemeName> for Scheme {
    fn from(s: SchemeName) -> Self {
        match s {
            SchemeName::Multi => Scheme::Multi,
            SchemeName::Single => Scheme::Single,
            SchemeName::Fusion => Scheme::Fusion,
        }
    }
}

impl From<Scheme> for SchemeName {
    fn from(s: Scheme) -> Self {
        match s {
            Scheme::Multi => SchemeName::Multi,
            Scheme::Single => SchemeName::Single,
            Scheme::Fusion => SchemeName::Fusion,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawPrior {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<String>,
    pub risk: f64,
}

/// The config file exactly as written. Every key is optional except for a
/// way to name the subjects: `subjects` with `risk`, or a `priors` list.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub subjects: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub priors: Option<Vec<RawPrior>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub risk: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sensitivity: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub specificity: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dilution_exponent: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub upper_eps: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lower_eps: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_stages: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scheme: Option<SchemeName>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub prune_threshold: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub symmetry: Option<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub retained_prior_mass: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub worker_count: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub chunk_exponent_offset: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

/// A validated configuration with every default filled in.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    /// One label per subject, in input order; subject ids are the positions.
    pub labels: Vec<String>,
    pub analysis: AnalysisConfig,
    /// 0 means one worker per core.
    pub worker_count: usize,
    pub chunk_exponent_offset: u32,
    /// Only used by the benchmark harness.
    pub seed: u64,
}

/// `A, B, ..., Z, AA, AB, ...`
pub fn default_label(index: usize) -> String {
    let mut n = index + 1;
    let mut out = Vec::new();
    while n > 0 {
        n -= 1;
        out.push(b'A' + (n % 26) as u8);
        n /= 26;
    }
    out.reverse();
    String::from_utf8(out).expect("ascii")
}

pub fn parse_config(path: &Path) -> Result<RunConfig> {
    let text = std::fs::read_to_string(path).map_err(|source| CliError::Read {
        path: path.to_path_buf(),
        source,
    })?;
    parse_config_str(&text)
}

pub fn parse_config_str(text: &str) -> Result<RunConfig> {
    let raw: RawConfig = serde_json::from_str(text).map_err(|e| CliError::Config(e.to_string()))?;
    RunConfig::from_raw(raw)
}

fn config_err(msg: impl Into<String>) -> CliError {
    CliError::Config(msg.into())
}

impl RunConfig {
    pub fn from_raw(raw: RawConfig) -> Result<Self> {
        let (labels, risks): (Vec<String>, Vec<f64>) = match (&raw.priors, raw.subjects, raw.risk) {
            (Some(priors), subjects, None) => {
                if subjects.is_some_and(|n| n != priors.len()) {
                    return Err(config_err(format!(
                        "subjects is {} but priors lists {}",
                        subjects.unwrap_or_default(),
                        priors.len()
                    )));
                }
                let labels = priors
                    .iter()
                    .enumerate()
                    .map(|(i, p)| p.label.clone().unwrap_or_else(|| default_label(i)))
                    .collect();
                (labels, priors.iter().map(|p| p.risk).collect::<Vec<f64>>())
            }
            (Some(_), _, Some(_)) => {
                return Err(config_err("give either priors or risk, not both"));
            }
            (None, Some(n), Some(risk)) => ((0..n).map(default_label).collect(), vec![risk; n]),
            (None, _, _) => {
                return Err(config_err(
                    "missing subjects: give `subjects` with `risk`, or a `priors` list",
                ));
            }
        };
        check_labels(&labels)?;

        let priors: Vec<SubjectPrior> = risks
            .iter()
            .enumerate()
            .map(|(i, &risk)| SubjectPrior::new(i, risk))
            .collect();
        let defaults = ResponseModel::noiseless();
        let model = ResponseModel::new(
            raw.sensitivity.unwrap_or(defaults.sensitivity),
            raw.specificity.unwrap_or(defaults.specificity),
            raw.dilution_exponent.unwrap_or(defaults.dilution_exponent),
        )?;
        let default_eps = Thresholds::default();
        let thresholds = Thresholds::new(
            raw.upper_eps.unwrap_or(default_eps.upper_eps),
            raw.lower_eps.unwrap_or(default_eps.lower_eps),
        )?;
        let analysis = AnalysisConfig {
            priors,
            model,
            thresholds,
            max_stages: raw.max_stages.unwrap_or(DEFAULT_MAX_STAGES),
            scheme: raw.scheme.map_or(DEFAULT_SCHEME, Scheme::from),
            prune_threshold: raw.prune_threshold.unwrap_or(0.0),
            symmetry: raw.symmetry.unwrap_or(false),
            retained_prior_mass: raw.retained_prior_mass.unwrap_or(1.0),
        };
        // size guards are refused when a run is attempted, not here
        match analysis.validate() {
            Err(e) if !e.is_scale_guard() => return Err(e.into()),
            _ => {}
        }
        let chunk_exponent_offset = raw
            .chunk_exponent_offset
            .unwrap_or(gt_core::halving::DEFAULT_CHUNK_EXPONENT_OFFSET);
        if chunk_exponent_offset > 26 {
            return Err(config_err(format!(
                "chunk_exponent_offset {chunk_exponent_offset} exceeds 26"
            )));
        }
        Ok(RunConfig {
            labels,
            analysis,
            worker_count: raw.worker_count.unwrap_or(DEFAULT_WORKERS),
            chunk_exponent_offset,
            seed: raw.seed.unwrap_or(DEFAULT_SEED),
        })
    }

    /// The explicit file form: `parse_config_str(&c.to_json())` gives back `c`.
    pub fn to_raw(&self) -> RawConfig {
        let a = &self.analysis;
        RawConfig {
            subjects: None,
            priors: Some(
                self.labels
                    .iter()
                    .zip(&a.priors)
                    .map(|(label, p)| RawPrior {
                        label: Some(label.clone()),
                        risk: p.risk,
                    })
                    .collect(),
            ),
            risk: None,
            sensitivity: Some(a.model.sensitivity),
            specificity: Some(a.model.specificity),
            dilution_exponent: Some(a.model.dilution_exponent),
            upper_eps: Some(a.thresholds.upper_eps),
            lower_eps: Some(a.thresholds.lower_eps),
            max_stages: Some(a.max_stages),
            scheme: Some(a.scheme.into()),
            prune_threshold: Some(a.prune_threshold),
            symmetry: Some(a.symmetry),
            retained_prior_mass: Some(a.retained_prior_mass),
            worker_count: Some(self.worker_count),
            chunk_exponent_offset: Some(self.chunk_exponent_offset),
            seed: Some(self.seed),
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.to_raw()).expect("config serializes")
    }

    pub fn n_subjects(&self) -> usize {
        self.labels.len()
    }

    pub fn subject_index(&self, label: &str) -> Option<usize> {
        self.labels.iter().position(|l| l == label)
    }
}

fn check_labels(labels: &[String]) -> Result<()> {
    for (i, label) in labels.iter().enumerate() {
        if label.is_empty() {
            return Err(config_err(format!("subject {i} has an empty label")));
        }
        if labels[..i].contains(label) {
            return Err(config_err(format!("duplicate subject label {label:?}")));
        }
    }
    Ok(())
}
