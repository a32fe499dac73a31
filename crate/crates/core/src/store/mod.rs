//! Append-only suggestion storage, entity metadata and corpus statistics.

mod entities;
mod overlap;
mod records;

use thiserror::Error;

pub use entities::{
    load_entities, load_schema, read_entities, AttributeKind, AttributeSpec, AttributeValue,
    Entity, Schema,
};
pub use overlap::{engine_overlap, unique_suggestions, OverlapReport, Scope, GLOBAL_KEY};
pub use records::{
    read_records, validate_batch, RecordFilter, RecordSink, RecordStore, SuggestionRecord,
};

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("invalid record: {0}")]
    Validation(String),
    #[error("{path}: line {line}: {message}")]
    Format {
        path: String,
        line: usize,
        message: String,
    },
    #[error("invalid filter: {0}")]
    Filter(String),
    #[error("need records from at least two engines, found {0}")]
    Degenerate(usize),
    #[error("entity data: {0}")]
    Entities(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
