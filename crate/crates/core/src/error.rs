use std::path::PathBuf;

use thiserror::Error;

use crate::catalog::ItemId;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("item {0} is not in the catalog")]
    InvalidItem(ItemId),

    #[error("item {0} appears more than once")]
    DuplicateItem(ItemId),

    #[error("dimension mismatch for {what}: expected {expected}, found {found}")]
    Dimension {
        what: &'static str,
        expected: usize,
        found: usize,
    },

    #[error("cosine similarity is undefined for a zero-norm vector")]
    UndefinedSimilarity,

    #[error("invalid distance metric: {0}")]
    InvalidMetric(String),

    #[error("slate capacity {capacity} exceeded")]
    SlateFull { capacity: usize },

    #[error("need {needed} candidates but only {available} are available")]
    InsufficientCandidates { needed: usize, available: usize },

    #[error("exhaustive search over {subsets} subsets exceeds the budget of {budget}")]
    TooLargeInstance { subsets: u128, budget: u128 },

    #[error("degenerate instance: {0}")]
    DegenerateInstance(&'static str),

    #[error("numerical degeneracy: {0}")]
    NumericalDegeneracy(&'static str),

    #[error("reward {0} is outside [0, 1]")]
    InvalidFeedback(f64),

    #[error("precondition violated: {0}")]
    PreconditionViolation(String),

    #[error("item {0} was already recommended to this user")]
    ProtocolViolation(ItemId),

    #[error("only {remaining} candidates remain, need {needed}")]
    ExhaustedCandidates { remaining: usize, needed: usize },

    #[error("slate of length {0} has no pairwise diversity")]
    UndefinedDiversity(usize),

    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("no records survive filtering in {0}")]
    EmptyDataset(PathBuf),

    #[error("embeddings: {0}")]
    Embeddings(String),

    #[error("snapshot: {0}")]
    Snapshot(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("round {round}: {source}")]
    Round {
        round: usize,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn at_round(self, round: usize) -> Self {
        Error::Round {
            round,
            source: Box::new(self),
        }
    }
}
