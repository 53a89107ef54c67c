use std::fmt;
use std::str::FromStr;

use chrono::NaiveDate;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

/// The closed genre vocabulary (TMDB's movie genres without "TV Movie").
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Genre {
    Action,
    Adventure,
    Animation,
    Comedy,
    Crime,
    Documentary,
    Drama,
    Family,
    Fantasy,
    History,
    Horror,
    Music,
    Mystery,
    Romance,
    ScienceFiction,
    Thriller,
    War,
    Western,
}

impl Genre {
    pub const ALL: [Genre; 18] = [
        Genre::Action,
        Genre::Adventure,
        Genre::Animation,
        Genre::Comedy,
        Genre::Crime,
        Genre::Documentary,
        Genre::Drama,
        Genre::Family,
        Genre::Fantasy,
        Genre::History,
        Genre::Horror,
        Genre::Music,
        Genre::Mystery,
        Genre::Romance,
        Genre::ScienceFiction,
        Genre::Thriller,
        Genre::War,
        Genre::Western,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Genre::Action => "Action",
            Genre::Adventure => "Adventure",
            Genre::Animation => "Animation",
            Genre::Comedy => "Comedy",
            Genre::Crime => "Crime",
            Genre::Documentary => "Documentary",
            Genre::Drama => "Drama",
            Genre::Family => "Family",
            Genre::Fantasy => "Fantasy",
            Genre::History => "History",
            Genre::Horror => "Horror",
            Genre::Music => "Music",
            Genre::Mystery => "Mystery",
            Genre::Romance => "Romance",
            Genre::ScienceFiction => "Science Fiction",
            Genre::Thriller => "Thriller",
            Genre::War => "War",
            Genre::Western => "Western",
        }
    }
}

impl fmt::Display for Genre {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Genre {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Genre::ALL
            .iter()
            .copied()
            .find(|g| g.as_str().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| format!("unknown genre {s:?}"))
    }
}

/// MPAA rating, including the "not rated" and "not available" buckets.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Default)]
pub enum Mpaa {
    G,
    Pg,
    Pg13,
    R,
    Nc17,
    NotRated,
    #[default]
    Na,
}

impl Mpaa {
    pub const ALL: [Mpaa; 7] = [
        Mpaa::G,
        Mpaa::Pg,
        Mpaa::Pg13,
        Mpaa::R,
        Mpaa::Nc17,
        Mpaa::NotRated,
        Mpaa::Na,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Mpaa::G => "G",
            Mpaa::Pg => "PG",
            Mpaa::Pg13 => "PG-13",
            Mpaa::R => "R",
            Mpaa::Nc17 => "NC17",
            Mpaa::NotRated => "NotRated",
            Mpaa::Na => "NA",
        }
    }
}

impl fmt::Display for Mpaa {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Mpaa {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let norm: String = s
            .trim()
            .chars()
            .filter(|c| !matches!(c, '-' | '.' | ' ' | '_'))
            .collect::<String>()
            .to_ascii_uppercase();
        Ok(match norm.as_str() {
            "G" => Mpaa::G,
            "PG" => Mpaa::Pg,
            "PG13" => Mpaa::Pg13,
            "R" => Mpaa::R,
            "NC17" => Mpaa::Nc17,
            "NOTRATED" | "NR" | "UNRATED" => Mpaa::NotRated,
            "NA" | "" => Mpaa::Na,
            _ => return Err(format!("unknown MPAA rating {s:?}")),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Default)]
#[derive(Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Gender {
    Male,
    Female,
    #[default]
    Unknown,
}

impl Gender {
    pub const ALL: [Gender; 3] = [Gender::Male, Gender::Female, Gender::Unknown];

    pub fn as_str(self) -> &'static str {
        match self {
            Gender::Male => "male",
            Gender::Female => "female",
            Gender::Unknown => "unknown",
        }
    }

    /// TMDB encodes gender as 0 (unset), 1 (female), 2 (male).
    pub fn from_tmdb(code: i64) -> Self {
        match code {
            1 => Gender::Female,
            2 => Gender::Male,
            _ => Gender::Unknown,
        }
    }
}

macro_rules! string_serde {
    ($ty:ty) => {
        impl Serialize for $ty {
            fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
                s.serialize_str(self.as_str())
            }
        }

        impl<'de> Deserialize<'de> for $ty {
            fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
                let s = String::deserialize(d)?;
                s.parse().map_err(serde::de::Error::custom)
            }
        }
    };
}

string_serde!(Genre);
string_serde!(Mpaa);

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PersonRef {
    pub id: String,
    pub name: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CastMember {
    pub id: String,
    pub name: String,
    #[serde(default)]
    pub gender: Gender,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub birth_date: Option<NaiveDate>,
    /// Billing position; lower is more prominent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub order: Option<u32>,
}

impl CastMember {
    pub fn person(&self) -> PersonRef {
        PersonRef {
            id: self.id.clone(),
            name: self.name.clone(),
        }
    }

    /// Age at release as the difference of calendar years, if the birth date is known.
    pub fn age_on(&self, on: NaiveDate) -> Option<u32> {
        use chrono::Datelike;
        let b = self.birth_date?;
        u32::try_from(on.year() - b.year()).ok()
    }
}

pub const MAX_DIRECTORS: usize = 2;
pub const MAX_WRITERS: usize = 2;
pub const MAX_ACTORS: usize = 3;

/// One movie's metadata as consumed by the pipeline.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MovieRecord {
    pub movie_id: String,
    pub title: String,
    pub budget: u64,
    pub revenue: u64,
    pub release_date: Option<NaiveDate>,
    pub genres: Vec<Genre>,
    pub keywords: Vec<String>,
    pub mpaa: Mpaa,
    pub production_company: String,
    pub distributor: String,
    pub franchise: bool,
    pub collection_name: Option<String>,
    pub directors: Vec<PersonRef>,
    pub writers: Vec<PersonRef>,
    pub actors: Vec<CastMember>,
    pub poster_ref: Option<String>,
    #[serde(default)]
    pub copycat: bool,
}

impl MovieRecord {
    /// Whether the record carries a regression target.
    pub fn usable_for_finetune(&self) -> bool {
        self.revenue > 0 && self.release_date.is_some()
    }

    pub fn log10_revenue(&self) -> Option<f64> {
        (self.revenue > 0).then(|| (self.revenue as f64).log10())
    }

    /// Deduplicated keywords in first-seen order.
    pub fn unique_keywords(&self) -> Vec<&str> {
        let mut seen = std::collections::HashSet::new();
        self.keywords
            .iter()
            .map(String::as_str)
            .filter(|k| seen.insert(*k))
            .collect()
    }

    /// Every credited leading person (directors, writers, actors) by id.
    pub fn person_ids(&self) -> impl Iterator<Item = &str> {
        self.directors
            .iter()
            .map(|p| p.id.as_str())
            .chain(self.writers.iter().map(|p| p.id.as_str()))
            .chain(self.actors.iter().map(|a| a.id.as_str()))
    }

    /// Enforce the person caps: actors by ascending billing order, crew in source order.
    pub fn truncate_people(&mut self) {
        self.directors.truncate(MAX_DIRECTORS);
        self.writers.truncate(MAX_WRITERS);
        // stable sort keeps source order among actors without a billing position
        self.actors.sort_by_key(|a| a.order.unwrap_or(u32::MAX));
        self.actors.truncate(MAX_ACTORS);
    }
}
