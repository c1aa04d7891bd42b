use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("argument outside reduced strip: series term magnitude {0:e}")]
    OutsideStrip(f64),
    #[error("invalid parameters: {0}")]
    InvalidParams(String),
    #[error("missing value for indeterminate `{0}`")]
    MissingIndeterminate(String),
    #[error("index out of range: {0}")]
    IndexOutOfRange(String),
    #[error("pole encountered: {0}")]
    Pole(String),
    #[error("not a multiple: {0}")]
    NotMultiple(String),
    #[error("not in the positive root cone: {0}")]
    NotInRootCone(String),
    #[error("not expressible in the Y-basis: {0}")]
    NotYExpressible(String),
    #[error("unbalanced exponents: {0}")]
    Unbalanced(String),
    #[error("opaque factor mismatch: {0}")]
    OmegaMismatch(String),
    #[error("budget exceeded: {0}")]
    Budget(String),
    #[error("parameter mismatch: {0}")]
    Mismatch(String),
    #[error("z-dependence detected: {0}")]
    ZDependence(String),
    #[error("unsupported: {0}")]
    Unsupported(String),
    #[error("singular leading term: {0}")]
    Singular(String),
    #[error("root search failed: {0}")]
    NoRoot(String),
    #[error("eigenvalue branch crossing: {0}")]
    BranchCrossing(String),
    #[error("parse error: {0}")]
    Parse(String),
}

pub type Result<T> = std::result::Result<T, Error>;
