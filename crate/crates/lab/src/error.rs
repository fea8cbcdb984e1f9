use std::path::PathBuf;

use coca_core::metrics::MetricsError;
use coca_core::policy::PolicyError;
use coca_core::tasks::TaskError;
use coca_core::trainer::ConfigError;
use coca_core::vocab::VocabError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum LabError {
    #[error("{0}")]
    Usage(String),
    #[error("invalid config: {field}: {message}")]
    Config { field: &'static str, message: String },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
    #[error("{path}: {message}")]
    Malformed { path: PathBuf, message: String },
    #[error("checkpoint does not match the run's vocabulary or task spec: {0}")]
    CheckpointMismatch(String),
    #[error("nothing to evaluate: {0}")]
    Empty(String),
    #[error(transparent)]
    Task(#[from] TaskError),
    #[error(transparent)]
    Policy(#[from] PolicyError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error("thread pool: {0}")]
    Pool(String),
}

impl LabError {
    /// 2 for usage and config errors, 1 for everything that failed at run time.
    pub fn exit_code(&self) -> u8 {
        match self {
            LabError::Usage(_) | LabError::Config { .. } => 2,
            _ => 1,
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>) -> impl FnOnce(std::io::Error) -> Self {
        let path = path.into();
        move |source| LabError::Io { path, source }
    }

    pub(crate) fn json(path: impl Into<PathBuf>) -> impl FnOnce(serde_json::Error) -> Self {
        let path = path.into();
        move |source| LabError::Json { path, source }
    }
}

impl From<ConfigError> for LabError {
    fn from(e: ConfigError) -> Self {
        let field = match e {
            ConfigError::UnknownMode => "train.mode",
            ConfigError::GroupSize(_) => "train.group_size",
            ConfigError::BatchSize | ConfigError::BatchTooLarge(_) => "train.batch_size",
            ConfigError::ClipEps(_) => "train.clip_eps",
            ConfigError::Lr(_) => "train.lr",
            ConfigError::KlBeta(_) => "train.kl_beta",
            ConfigError::NormEps(_) => "train.norm_eps",
            ConfigError::InnerEpochs => "train.inner_epochs",
            ConfigError::MissingPhases | ConfigError::UnexpectedPhases | ConfigError::PhaseSum { .. } => {
                "train.steps_phase1"
            }
        };
        LabError::Config { field, message: e.to_string() }
    }
}

impl From<VocabError> for LabError {
    fn from(e: VocabError) -> Self {
        LabError::Config { field: "vocab", message: e.to_string() }
    }
}

pub type Result<T> = std::result::Result<T, LabError>;
