use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("dataset is empty")]
    EmptyDataset,

    #[error("row {0} has zero norm and cannot be normalized")]
    ZeroRow(usize),

    #[error("non-finite value at row {row}, column {col}")]
    NonFinite { row: usize, col: usize },

    #[error("invalid parameter `{name}`: {msg}")]
    InvalidParam { name: &'static str, msg: String },

    #[error("length mismatch: expected {expected}, got {got}")]
    LengthMismatch { expected: usize, got: usize },

    #[error("degenerate kernel in block {block}: landmark kernel is numerically zero")]
    DegenerateKernel { block: usize },

    #[error("rank deficiency in block {block}: |R[{index},{index}]| = {value:e}")]
    RankDeficient {
        block: usize,
        index: usize,
        value: f64,
    },

    #[error("cluster {0} is empty")]
    EmptyCluster(usize),

    #[error("block {block} has {size} rows, dense oracle limit is {limit}")]
    OracleSizeGuard {
        block: usize,
        size: usize,
        limit: usize,
    },

    #[error("cycle {cycle}: {source}")]
    Cycle {
        cycle: usize,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub(crate) fn invalid(name: &'static str, msg: impl Into<String>) -> Self {
        Error::InvalidParam {
            name,
            msg: msg.into(),
        }
    }

    pub(crate) fn at_cycle(self, cycle: usize) -> Self {
        Error::Cycle {
            cycle,
            source: Box::new(self),
        }
    }
}
