//! Errors tagged with the exit status they map to.

use std::fmt::Display;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Kind {
    Runtime = 1,
    Invalid = 2,
    Infeasible = 3,
    Empty = 4,
}

#[derive(Debug)]
pub struct Failure {
    pub kind: Kind,
    pub error: anyhow::Error,
}

impl Failure {
    pub fn new(kind: Kind, error: impl Into<anyhow::Error>) -> Self {
        Failure {
            kind,
            error: error.into(),
        }
    }

    pub fn msg(kind: Kind, message: impl Display) -> Self {
        Failure {
            kind,
            error: anyhow::anyhow!("{message}"),
        }
    }
}

/// Tags any error with an exit status.
pub trait Tag<T> {
    fn tag(self, kind: Kind) -> Result<T, Failure>;
    fn tag_with<C: Display + Send + Sync + 'static>(self, kind: Kind, context: impl FnOnce() -> C) -> Result<T, Failure>;
}

impl<T, E: Into<anyhow::Error>> Tag<T> for Result<T, E> {
    fn tag(self, kind: Kind) -> Result<T, Failure> {
        self.map_err(|e| Failure::new(kind, e))
    }

    fn tag_with<C: Display + Send + Sync + 'static>(self, kind: Kind, context: impl FnOnce() -> C) -> Result<T, Failure> {
        self.map_err(|e| Failure::new(kind, e.into().context(context())))
    }
}
