use kmerspace_autodiff::AutodiffError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("FASTA parse error: {0}")]
    Fasta(String),
    #[error("invalid symbol {symbol:?} in record {record:?} at position {position}")]
    InvalidSymbol {
        record: String,
        symbol: char,
        position: usize,
    },
    #[error("{0}")]
    InvalidArgument(String),
    #[error("{0}")]
    Format(String),
    #[error("non-finite loss at step {step} (lr {lr:e}); gradient norms: {grad_norms}")]
    NonFiniteLoss { step: u64, lr: f64, grad_norms: String },
    #[error(transparent)]
    Autodiff(#[from] AutodiffError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::InvalidArgument(msg.into()))
}
