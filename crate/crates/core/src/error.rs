use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("dimension mismatch for {what}: expected {expected}, got {got}")]
    Dimension {
        what: &'static str,
        expected: usize,
        got: usize,
    },
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("domain error: {0}")]
    Domain(String),
    #[error("ledger is empty; ratios need at least one frame")]
    EmptyLedger,
    #[error("empty sample set")]
    EmptySamples,
    #[error("could not bracket the optimal ratio: val({lo}) = {val_lo}, val({hi}) = {val_hi}")]
    Bracket {
        lo: f64,
        hi: f64,
        val_lo: f64,
        val_hi: f64,
    },
    #[error("bisection did not converge within {0} iterations")]
    Convergence(usize),
    #[error("scenario lacks capability: {0}")]
    Capability(String),
    #[error("constraints are infeasible: {0}")]
    Infeasible(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn check_len(what: &'static str, expected: usize, got: usize) -> Result<()> {
    if expected == got {
        Ok(())
    } else {
        Err(Error::Dimension {
            what,
            expected,
            got,
        })
    }
}
