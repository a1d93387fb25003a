use thiserror::Error;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("duplicate name `{0}`")]
    DuplicateName(String),
    #[error("variable `{0}` has invalid bounds [{1}, {2}]")]
    BadBounds(String, f64, f64),
    #[error("non-finite value: {0}")]
    NonFinite(String),
    #[error("row `{0}` references unknown variable index {1}")]
    UnknownVariable(String, usize),
    #[error("variable `{0}` appears in no row and has no objective coefficient")]
    Orphan(String),
}

#[derive(Debug, Error)]
pub enum MpsError {
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("invalid model: {0}")]
    Model(#[from] ModelError),
}

impl MpsError {
    pub(crate) fn parse(line: usize, msg: impl Into<String>) -> Self {
        MpsError::Parse {
            line,
            msg: msg.into(),
        }
    }
}
