//! Error type for the experiment runner.
//!
//! Every failure carries enough context to act on (the offending config
//! key, the file path, the iteration at which a run left the finite
//! range), and maps to a stable process exit code per failure class so
//! scripts can branch on outcomes.

use std::error::Error;
use std::fmt;
use std::io;
use std::path::PathBuf;

use nashseek::games::GameError;
use nashseek::graph::GraphError;
use nashseek::oracle::OracleError;
use nashseek::rates::RateError;

#[derive(Debug)]
pub enum CliError {
    /// The config file could not be read.
    ConfigRead { path: PathBuf, source: io::Error },
    /// The config file is not valid structured text.
    ConfigParse { path: PathBuf, detail: String },
    /// A config field is present but unusable; `key` is its dotted path.
    ConfigInvalid { key: String, reason: String },
    /// The communication matrix was rejected.
    Graph(GraphError),
    /// The game definition was rejected.
    Game(GameError),
    /// No admissible step size exists and the requested step needs one.
    Certificate(RateError),
    /// The centralized equilibrium solve failed.
    Oracle(OracleError),
    /// The run left the finite floating-point range; partial artifacts
    /// were still written for inspection.
    Diverged { iteration: usize },
    /// An artifact could not be written.
    Output { path: PathBuf, source: io::Error },
}

impl CliError {
    /// Stable exit code per failure class (0 is success).
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::ConfigRead { .. }
            | CliError::ConfigParse { .. }
            | CliError::ConfigInvalid { .. } => 2,
            CliError::Graph(_) => 3,
            CliError::Game(_) => 4,
            CliError::Certificate(_) => 5,
            CliError::Oracle(_) => 6,
            CliError::Diverged { .. } => 7,
            CliError::Output { .. } => 8,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::ConfigRead { path, source } => {
                write!(f, "cannot read config {}: {source}", path.display())
            }
            CliError::ConfigParse { path, detail } => {
                write!(f, "cannot parse config {}: {detail}", path.display())
            }
            CliError::ConfigInvalid { key, reason } => write!(f, "config key `{key}`: {reason}"),
            CliError::Graph(e) => write!(f, "graph rejected: {e}"),
            CliError::Game(e) => write!(f, "game rejected: {e}"),
            CliError::Certificate(e) => write!(f, "step certificate: {e}"),
            CliError::Oracle(e) => write!(f, "equilibrium solve: {e}"),
            CliError::Diverged { iteration } => write!(
                f,
                "run diverged at iteration {iteration}; truncated artifacts were written"
            ),
            CliError::Output { path, source } => {
                write!(f, "cannot write {}: {source}", path.display())
            }
        }
    }
}

impl Error for CliError {
    fn source(&self) -> Option<&(dyn Error + 'static)> {
        match self {
            CliError::ConfigRead { source, .. } | CliError::Output { source, .. } => Some(source),
            CliError::Graph(e) => Some(e),
            CliError::Game(e) => Some(e),
            CliError::Certificate(e) => Some(e),
            CliError::Oracle(e) => Some(e),
            _ => None,
        }
    }
}

impl From<GraphError> for CliError {
    fn from(e: GraphError) -> Self {
        CliError::Graph(e)
    }
}

impl From<GameError> for CliError {
    fn from(e: GameError) -> Self {
        CliError::Game(e)
    }
}

impl From<RateError> for CliError {
    fn from(e: RateError) -> Self {
        CliError::Certificate(e)
    }
}

impl From<OracleError> for CliError {
    fn from(e: OracleError) -> Self {
        CliError::Oracle(e)
    }
}
