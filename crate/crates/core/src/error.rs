use std::io;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch in {context}: expected {expected}, found {found}")]
    Shape {
        context: String,
        expected: String,
        found: String,
    },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("unknown layer `{0}`")]
    UnknownLayer(String),

    #[error("layer `{0}` is not prunable")]
    NotPrunable(String),

    #[error("invalid pruning step on `{layer}`: {reason}")]
    InvalidStep { layer: String, reason: String },

    #[error("plan step {index}: {source}")]
    PlanStep { index: usize, source: Box<Error> },

    #[error("format error: {0}")]
    Format(String),

    #[error("backward called without a recorded forward pass")]
    NoRecordedForward,

    #[error("non-finite loss at epoch {epoch}, batch {batch}")]
    NonFiniteLoss { epoch: usize, batch: usize },

    #[error(transparent)]
    Io(#[from] io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn shape(
        context: impl Into<String>,
        expected: impl std::fmt::Debug,
        found: impl std::fmt::Debug,
    ) -> Self {
        Error::Shape {
            context: context.into(),
            expected: format!("{expected:?}"),
            found: format!("{found:?}"),
        }
    }

    /// Prefixes shape diagnostics with the layer that raised them.
    pub(crate) fn in_layer(self, id: &str) -> Self {
        match self {
            Error::Shape {
                context,
                expected,
                found,
            } if !context.contains(&format!("`{id}`")) => Error::Shape {
                context: format!("layer `{id}`: {context}"),
                expected,
                found,
            },
            Error::InvalidArgument(msg) if !msg.contains(&format!("`{id}`")) => {
                Error::InvalidArgument(format!("layer `{id}`: {msg}"))
            }
            other => other,
        }
    }

    /// True for corrupt or unreadable inputs (files, plans, checkpoints).
    pub fn is_data_error(&self) -> bool {
        matches!(self, Error::Format(_) | Error::Io(_) | Error::Json(_) | Error::PlanStep { .. })
    }

    pub(crate) fn at_plan_step(self, index: usize) -> Self {
        Error::PlanStep {
            index,
            source: Box::new(self),
        }
    }
}
