use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid descriptor: {0}")]
    Descriptor(String),
    #[error("inadmissible monomial: {0}")]
    Monomial(String),
    #[error("out of range: {0}")]
    Range(String),
    #[error("operands belong to different descriptors")]
    DescriptorMismatch,
    #[error("{func}: argument {value} outside the function domain")]
    Domain { func: String, value: String },
    #[error("{0}")]
    Lookup(String),
    #[error("singular matrix: {0}")]
    Singular(String),
    #[error("{line}:{col}: {msg}")]
    Parse { line: usize, col: usize, msg: String },
    #[error("lattice: {0}")]
    Lattice(String),
    #[error("evaluation: {0}")]
    Eval(String),
    #[error("tracking: {0}")]
    Track(String),
    #[error("optics: {0}")]
    Optics(String),
    #[error("match: {0}")]
    Match(String),
    #[error("table: {0}")]
    Table(String),
    #[error("protocol: {0}")]
    Protocol(String),
    #[error("unknown command '{0}'")]
    UnknownCommand(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    /// An error located in a script: `file:line` or `line N`.
    #[error("{place}: {source}")]
    In { place: String, source: Box<Error> },
}

impl Error {
    pub fn located(place: impl Into<String>, e: Error) -> Error {
        Error::In {
            place: place.into(),
            source: Box::new(e),
        }
    }

    /// The innermost error, past any location wrappers.
    pub fn root(&self) -> &Error {
        match self {
            Error::In { source, .. } => source.root(),
            e => e,
        }
    }

    pub fn is_parse(&self) -> bool {
        matches!(self.root(), Error::Parse { .. })
    }
}
