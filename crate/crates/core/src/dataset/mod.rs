//! Corpus ingestion: record types, JSON-lines parsing, TMDB payload merging
//! and franchise-stratified splitting.

mod parse;
mod record;
mod split;
pub mod tmdb;

pub use parse::{parse_corpus, parse_lines, parse_record, write_corpus, LineError, ParsedCorpus, SCHEMA_VERSION};
pub use record::{
    CastMember, Gender, Genre, MovieRecord, Mpaa, PersonRef, MAX_ACTORS, MAX_DIRECTORS, MAX_WRITERS,
};
pub use split::{read_splits, stratified_split, write_splits, Split, SplitAssignment};
