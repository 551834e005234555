use std::path::PathBuf;

/// Exit codes: 0 success, 1 usage/config/history errors, 2 scale-guard refusals.
#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("cannot read {path}: {source}")]
    Read {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("cannot write {path}: {source}")]
    Write {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("invalid config: {0}")]
    Config(String),
    #[error("invalid history: {0}")]
    History(String),
    #[error("impossible response at step {step}")]
    ImpossibleResponse { step: usize },
    #[error("benchmark check failed: {0}")]
    Bench(String),
    #[error("{0}")]
    Output(String),
    #[error(transparent)]
    Engine(#[from] gt_core::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Engine(e) if e.is_scale_guard() => 2,
            _ => 1,
        }
    }
}

pub type Result<T, E = CliError> = std::result::Result<T, E>;
