//! Merges the three TMDB payloads (details, keywords, credits) into corpus records.

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;

use chrono::NaiveDate;
use serde_json::Value;

use super::parse::LineError;
use super::record::{CastMember, Genre, Mpaa, MovieRecord, PersonRef};
use crate::error::{Error, Result};

fn id_of(v: &Value) -> Option<String> {
    match v.get("id")? {
        Value::Number(n) => Some(n.to_string()),
        Value::String(s) => Some(s.clone()),
        _ => None,
    }
}

fn str_field<'a>(v: &'a Value, key: &str) -> Option<&'a str> {
    v.get(key).and_then(Value::as_str)
}

fn person(v: &Value) -> Option<PersonRef> {
    Some(PersonRef {
        id: id_of(v)?,
        name: str_field(v, "name")?.to_string(),
    })
}

/// Build one record from the three payloads of a single movie.
pub fn merge_payloads(
    details: &Value,
    keywords: Option<&Value>,
    credits: Option<&Value>,
) -> std::result::Result<MovieRecord, String> {
    let movie_id = id_of(details).ok_or("details payload without id")?;
    let genres = details
        .get("genres")
        .and_then(Value::as_array)
        .map(|gs| {
            gs.iter()
                .filter_map(|g| str_field(g, "name"))
                .map(str::parse::<Genre>)
                .collect::<std::result::Result<Vec<_>, _>>()
        })
        .transpose()?
        .unwrap_or_default();
    let release_date = match str_field(details, "release_date") {
        None | Some("") => None,
        Some(s) => Some(
            NaiveDate::parse_from_str(s, "%Y-%m-%d")
                .map_err(|e| format!("invalid release_date {s:?}: {e}"))?,
        ),
    };
    let mpaa = match str_field(details, "mpaa") {
        Some(s) => s.parse::<Mpaa>()?,
        None => Mpaa::Na,
    };
    let production_company = details
        .get("production_companies")
        .and_then(Value::as_array)
        .and_then(|cs| cs.first())
        .and_then(|c| str_field(c, "name"))
        .unwrap_or_default()
        .to_string();
    let distributor = str_field(details, "distributor")
        .unwrap_or_default()
        .to_string();
    let collection_name = details
        .get("belongs_to_collection")
        .and_then(|c| str_field(c, "name"))
        .map(str::to_string);

    let keywords = keywords
        .and_then(|k| k.get("keywords"))
        .and_then(Value::as_array)
        .map(|ks| {
            ks.iter()
                .filter_map(|k| str_field(k, "name"))
                .map(str::to_string)
                .collect()
        })
        .unwrap_or_default();

    let mut directors = Vec::new();
    let mut writers = Vec::new();
    let mut actors = Vec::new();
    if let Some(credits) = credits {
        for c in credits.get("crew").and_then(Value::as_array).into_iter().flatten() {
            match str_field(c, "job") {
                Some("Director") => directors.extend(person(c)),
                Some("Writer" | "Screenplay") => writers.extend(person(c)),
                _ => {}
            }
        }
        for c in credits.get("cast").and_then(Value::as_array).into_iter().flatten() {
            let Some(p) = person(c) else { continue };
            actors.push(CastMember {
                id: p.id,
                name: p.name,
                gender: crate::dataset::Gender::from_tmdb(
                    c.get("gender").and_then(Value::as_i64).unwrap_or(0),
                ),
                birth_date: str_field(c, "birthday")
                    .and_then(|s| NaiveDate::parse_from_str(s, "%Y-%m-%d").ok()),
                order: c.get("order").and_then(Value::as_u64).map(|o| o as u32),
            });
        }
    }

    let mut rec = MovieRecord {
        movie_id: movie_id.clone(),
        title: str_field(details, "title").unwrap_or_default().to_string(),
        budget: details.get("budget").and_then(Value::as_u64).unwrap_or(0),
        revenue: details.get("revenue").and_then(Value::as_u64).unwrap_or(0),
        release_date,
        genres,
        keywords,
        mpaa,
        production_company,
        distributor,
        franchise: collection_name.is_some(),
        collection_name,
        directors,
        writers,
        actors,
        poster_ref: str_field(details, "poster_path").map(|_| movie_id),
        copycat: false,
    };
    rec.truncate_people();
    Ok(rec)
}

fn read_payloads(path: &Path) -> Result<Vec<(usize, Value)>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (idx, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        out.push((idx + 1, serde_json::from_str(&line)?));
    }
    Ok(out)
}

/// Join details/keywords/credits JSON-lines files by TMDB `id`.
/// Errors are reported against line numbers of the details file.
pub fn merge_tmdb_files(
    details: &Path,
    keywords: &Path,
    credits: &Path,
) -> Result<(Vec<MovieRecord>, Vec<LineError>)> {
    let index = |rows: Vec<(usize, Value)>| -> HashMap<String, Value> {
        rows.into_iter()
            .filter_map(|(_, v)| id_of(&v).map(|id| (id, v)))
            .collect()
    };
    let kw = index(read_payloads(keywords)?);
    let cr = index(read_payloads(credits)?);
    let mut records = Vec::new();
    let mut errors = Vec::new();
    for (line, d) in read_payloads(details)? {
        let id = id_of(&d).unwrap_or_default();
        match merge_payloads(&d, kw.get(&id), cr.get(&id)) {
            Ok(r) => records.push(r),
            Err(message) => errors.push(LineError { line, message }),
        }
    }
    Ok((records, errors))
}
