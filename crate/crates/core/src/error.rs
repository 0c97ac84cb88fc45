use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid inertia: {0}")]
    InvalidInertia(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("insufficient-data: body {body} has {count} observation(s) on the {side} side (need at least 2)")]
    InsufficientData {
        body: String,
        side: Side,
        count: usize,
    },

    #[error("no-collision-found: {0}")]
    NoCollisionFound(String),

    #[error("undefined-restitution: {0}")]
    UndefinedRestitution(String),

    #[error("no-impulse: contact is separating (relative normal velocity {0:.3e} >= 0)")]
    SeparatingContact(f64),

    #[error("invalid-transform: {0}")]
    InvalidTransform(String),

    #[error("schema: {path}: {message}")]
    Schema { path: String, message: String },

    #[error("io: {path}: {message}")]
    Io { path: String, message: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Side {
    Pre,
    Post,
}

impl std::fmt::Display for Side {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Side::Pre => "pre-collision",
            Side::Post => "post-collision",
        })
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
