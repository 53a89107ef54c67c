use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use chrono::NaiveDate;
use serde::Deserialize;

use super::record::{CastMember, Genre, Mpaa, MovieRecord, PersonRef};
use crate::error::{Error, Result};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LineError {
    /// 1-based line number.
    pub line: usize,
    pub message: String,
}

#[derive(Debug, Default)]
pub struct ParsedCorpus {
    pub records: Vec<MovieRecord>,
    pub errors: Vec<LineError>,
    /// Ids of records kept for pretraining but lacking revenue or release date.
    pub unusable_for_finetune: Vec<String>,
}

#[derive(Deserialize)]
struct RawRecord {
    movie_id: serde_json::Value,
    #[serde(default)]
    title: String,
    #[serde(default)]
    budget: Option<u64>,
    #[serde(default)]
    revenue: Option<u64>,
    #[serde(default)]
    release_date: Option<String>,
    #[serde(default)]
    genres: Vec<String>,
    #[serde(default)]
    keywords: Vec<String>,
    #[serde(default)]
    mpaa: Option<String>,
    #[serde(default)]
    production_company: String,
    #[serde(default)]
    distributor: String,
    #[serde(default)]
    franchise: bool,
    #[serde(default)]
    collection_name: Option<String>,
    #[serde(default)]
    directors: Vec<PersonRef>,
    #[serde(default)]
    writers: Vec<PersonRef>,
    #[serde(default)]
    actors: Vec<CastMember>,
    #[serde(default)]
    poster_ref: Option<String>,
    #[serde(default)]
    copycat: bool,
}

/// Parse one JSON object into a validated record.
pub fn parse_record(line: &str) -> std::result::Result<MovieRecord, String> {
    let raw: RawRecord = serde_json::from_str(line).map_err(|e| e.to_string())?;
    let movie_id = match raw.movie_id {
        serde_json::Value::String(s) if !s.is_empty() => s,
        serde_json::Value::Number(n) => n.to_string(),
        other => return Err(format!("invalid movie_id {other}")),
    };
    let genres = raw
        .genres
        .iter()
        .map(|g| g.parse::<Genre>())
        .collect::<std::result::Result<Vec<_>, _>>()?;
    let mpaa = match raw.mpaa.as_deref() {
        Some(s) => s.parse::<Mpaa>()?,
        None => Mpaa::Na,
    };
    let release_date = match raw.release_date.as_deref() {
        None | Some("") => None,
        Some(s) => Some(
            NaiveDate::parse_from_str(s, "%Y-%m-%d")
                .map_err(|e| format!("invalid release_date {s:?}: {e}"))?,
        ),
    };
    let mut rec = MovieRecord {
        movie_id,
        title: raw.title,
        budget: raw.budget.unwrap_or(0),
        revenue: raw.revenue.unwrap_or(0),
        release_date,
        genres,
        keywords: raw.keywords,
        mpaa,
        production_company: raw.production_company,
        distributor: raw.distributor,
        franchise: raw.franchise,
        collection_name: raw.collection_name,
        directors: raw.directors,
        writers: raw.writers,
        actors: raw.actors,
        poster_ref: raw.poster_ref,
        copycat: raw.copycat,
    };
    rec.truncate_people();
    Ok(rec)
}

/// Parse a JSON-lines corpus. Malformed lines are collected, not fatal.
pub fn parse_corpus(path: &Path, schema_version: u32) -> Result<ParsedCorpus> {
    if schema_version != SCHEMA_VERSION {
        return Err(Error::Invalid(format!(
            "unsupported corpus schema version {schema_version}"
        )));
    }
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    parse_lines(BufReader::new(file)).map_err(|e| Error::io(path, e))
}

pub fn parse_lines<R: BufRead>(reader: R) -> std::io::Result<ParsedCorpus> {
    let mut out = ParsedCorpus::default();
    for (idx, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        match parse_record(&line) {
            Ok(rec) => {
                if !rec.usable_for_finetune() {
                    out.unusable_for_finetune.push(rec.movie_id.clone());
                }
                out.records.push(rec);
            }
            Err(message) => out.errors.push(LineError {
                line: idx + 1,
                message,
            }),
        }
    }
    Ok(out)
}

pub fn write_corpus(path: &Path, records: &[MovieRecord]) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    for rec in records {
        serde_json::to_writer(&mut w, rec)?;
        w.write_all(b"\n").map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}
