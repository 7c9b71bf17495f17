use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// A caller broke an operation's precondition (shape, range, emptiness).
    #[error("contract violation: {0}")]
    Contract(String),

    #[error("power iteration did not converge after {iterations} iterations (last estimate {last_estimate})")]
    NonConvergence {
        iterations: usize,
        last_estimate: f64,
        last_iterate: Vec<f64>,
    },

    /// The standing assumption of a constructive proof does not hold for the given inputs.
    #[error("precondition failed: {0}")]
    Precondition(String),

    #[error("unsound bound: {0}")]
    UnsoundBound(String),

    #[error("exact enumeration needs N <= {max}, got N = {n}; use the Monte-Carlo estimator")]
    TooLarge { n: usize, max: usize },

    #[error("training diverged at epoch {epoch}")]
    Diverged { epoch: usize },

    #[error("parse error at byte {offset}: {message}")]
    Parse { offset: u64, message: String },

    #[error("unsupported format: {0}")]
    Unsupported(String),

    #[error("unsupported {what} version {found} (expected {expected})")]
    Version {
        what: &'static str,
        found: u32,
        expected: u32,
    },

    #[error("utterance {id}: {source}")]
    Utterance {
        id: String,
        #[source]
        source: Box<Error>,
    },

    #[error("config: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn contract(msg: impl Into<String>) -> Self {
        Error::Contract(msg.into())
    }

    pub(crate) fn parse(offset: u64, msg: impl Into<String>) -> Self {
        Error::Parse {
            offset,
            message: msg.into(),
        }
    }
}

pub(crate) fn ensure_dim(expected: usize, found: usize, what: &str) -> Result<()> {
    if expected != found {
        return Err(Error::Contract(format!(
            "{what}: dimension mismatch (expected {expected}, got {found})"
        )));
    }
    Ok(())
}
