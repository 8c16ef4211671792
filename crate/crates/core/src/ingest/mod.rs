//! Reading MovieLens files, fetching people from linked data, and building
//! the persisted profile store.

pub mod movielens;
pub mod profiles;
pub mod sparql;

use std::path::PathBuf;

use thiserror::Error;

use crate::model::{ItemId, ModelError};

pub use movielens::{parse_movies, parse_ratings, MovieEntry, GENRE_VOCABULARY};
pub use profiles::{
    assemble_profiles, load_overrides, read_fetch_records, read_profiles, write_fetch_records,
    write_profiles, AssembleOptions, FetchLogEntry, ProfileStore, DEFAULT_OVERRIDE_ACTOR_CAP,
};
pub use sparql::{
    build_sparql_query, fetch_catalog, fetch_profile, FetchOptions, FetchOutcome, FetchRecord,
    FetchStatus, HttpTransport, SparqlMovieResult, SparqlTransport, TransportResponse,
};

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("line {line}: {reason}")]
    Malformed { line: usize, reason: String },
    #[error("line {line}: rating out of range ({value})")]
    RatingOutOfRange { line: usize, value: i64 },
    #[error("line {line}: {item} has an empty genre field")]
    NoGenres { line: usize, item: ItemId },
    #[error("title is empty")]
    EmptyTitle,
    #[error("title {0:?} contains control characters that cannot be escaped")]
    UnescapableTitle(String),
    #[error("malformed results XML at byte {offset}: {reason}")]
    Xml { offset: usize, reason: String },
    #[error("http client: {0}")]
    Http(String),
    #[error("{0} appears twice in the profile file")]
    DuplicateProfile(ItemId),
    #[error(transparent)]
    Model(#[from] ModelError),
}
