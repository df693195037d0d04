use std::path::PathBuf;

use thiserror::Error;

/// Errors raised anywhere in the simulator, compiler or cost model.
#[derive(Debug, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("invalid template: {0}")]
    Template(String),

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("CeNN dynamics diverged at step {step}: |x| = {magnitude:.3e} exceeds {bound:.1e}")]
    Instability { step: usize, magnitude: f64, bound: f64 },

    #[error("shape error: {0}")]
    Shape(String),

    #[error("parse error in {origin}: {message}")]
    Parse { origin: String, message: String },

    #[error("layer '{layer}': {message}")]
    Layer { layer: String, message: String },

    #[error("weight shape mismatch in layer '{layer}': expected {expected}, got {actual}")]
    WeightShape {
        layer: String,
        expected: String,
        actual: String,
    },

    #[error("dataset error: {0}")]
    Dataset(String),

    #[error("analog memory overflow on array {array}: program needs {required} slots per cell, hardware has {available}")]
    MemoryOverflow {
        array: usize,
        required: usize,
        available: usize,
    },

    #[error("invalid program: {0}")]
    Program(String),

    #[error("cost model: {0}")]
    Model(String),

    #[error("OTA curve row {row}: {message}")]
    Curve { row: usize, message: String },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    /// Short stable tag for the variant.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Domain(_) => "domain",
            Error::Template(_) => "template",
            Error::Precondition(_) => "precondition",
            Error::Instability { .. } => "instability",
            Error::Shape(_) => "shape",
            Error::Parse { .. } => "parse",
            Error::Layer { .. } => "layer",
            Error::WeightShape { .. } => "weight-shape",
            Error::Dataset(_) => "dataset",
            Error::MemoryOverflow { .. } => "memory-overflow",
            Error::Program(_) => "program",
            Error::Model(_) => "model",
            Error::Curve { .. } => "curve",
            Error::Io { .. } => "io",
        }
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn parse(origin: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Parse {
            origin: origin.into(),
            message: message.into(),
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
