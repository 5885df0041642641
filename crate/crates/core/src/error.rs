use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    /// Elements along the cycle, the first repeated at the end.
    #[error("order relation has a cycle: {}", .0.join(" <= "))]
    Cycle(Vec<String>),

    #[error("unknown element `{0}`")]
    UnknownElement(String),

    #[error("duplicate element `{0}`")]
    DuplicateElement(String),

    #[error("elements are not comparable: `{lower}` is not below `{upper}`")]
    NotComparable { upper: String, lower: String },

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("point outside the loss domain at element `{element}`: {reason}")]
    Domain { element: String, reason: String },

    #[error("no inverse gradient supplied for element `{0}`")]
    MissingInverse(String),

    #[error("invalid loss: {0}")]
    InvalidLoss(String),

    #[error("non-finite value encountered: {0}")]
    NumericalOverflow(String),

    #[error("linear system could not be solved: {0}")]
    SingularSystem(String),

    #[error("instance exceeds oracle cap: {what} is {got}, cap is {cap}")]
    Size { what: String, got: usize, cap: usize },

    #[error("functoriality violated: {0}")]
    Functoriality(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error("validation failed:\n  {}", .0.join("\n  "))]
    Validation(Vec<String>),

    #[error("i/o error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}
