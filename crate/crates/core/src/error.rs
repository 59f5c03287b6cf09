use std::path::PathBuf;

use thiserror::Error;

use crate::system::{ItemId, MachineId};

#[derive(Debug, Error)]
pub enum Error {
    #[error("unknown machine M{0}")]
    UnknownMachine(MachineId),

    #[error("unknown item {0}")]
    UnknownItem(ItemId),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("planning horizon of {horizon} periods is shorter than the required {required}")]
    HorizonTooShort { horizon: i64, required: i64 },

    #[error("{name} = {value} is not in the allowed set {allowed}")]
    NotInGrid {
        name: &'static str,
        value: String,
        allowed: String,
    },

    #[error("experiment grid is empty: {0}")]
    EmptyGrid(&'static str),

    #[error("cell {cell}: {source}")]
    Cell {
        cell: String,
        #[source]
        source: Box<Error>,
    },

    #[error("incomplete results: {0}")]
    MissingReplications(String),

    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: u64,
        message: String,
    },

    #[error("conflicting result rows for key {0}")]
    DuplicateKey(String),

    #[error("run is incomplete: {0}")]
    IncompleteRun(String),

    #[error("conservation violated: {0}")]
    Conservation(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Toml(#[from] toml::de::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
