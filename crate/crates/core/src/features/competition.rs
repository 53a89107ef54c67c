use std::collections::HashSet;

use chrono::NaiveDate;

use crate::dataset::{Genre, MovieRecord};

/// Release window on either side of a movie, in days.
pub const COMPETITION_WINDOW_DAYS: i64 = 14;

fn jaccard(a: &HashSet<&str>, b: &HashSet<&str>) -> f64 {
    let union = a.union(b).count();
    if union == 0 {
        return 0.0;
    }
    a.intersection(b).count() as f64 / union as f64
}

fn shares_genre(a: &[Genre], b: &[Genre]) -> bool {
    a.iter().any(|g| b.contains(g))
}

/// `(ln(1 + #competitors), sum of keyword Jaccard similarities)`.
///
/// Competitors are other movies released within 14 days that share a genre.
pub fn competition_features(movie: &MovieRecord, corpus: &[MovieRecord]) -> (f64, f64) {
    CompetitionIndex::new(corpus).features(movie)
}

/// Date-sorted view over a corpus for windowed competitor lookups.
#[derive(Debug)]
pub struct CompetitionIndex<'a> {
    dated: Vec<(NaiveDate, &'a MovieRecord)>,
}

impl<'a> CompetitionIndex<'a> {
    pub fn new(corpus: &'a [MovieRecord]) -> Self {
        let mut dated: Vec<_> = corpus
            .iter()
            .filter_map(|m| m.release_date.map(|d| (d, m)))
            .collect();
        dated.sort_by(|a, b| a.0.cmp(&b.0).then_with(|| a.1.movie_id.cmp(&b.1.movie_id)));
        Self { dated }
    }

    pub fn competitors(&self, movie: &MovieRecord) -> Vec<&'a MovieRecord> {
        let Some(date) = movie.release_date else {
            return Vec::new();
        };
        let window = chrono::Duration::days(COMPETITION_WINDOW_DAYS);
        let start = self.dated.partition_point(|(d, _)| *d < date - window);
        self.dated[start..]
            .iter()
            .take_while(|(d, _)| *d <= date + window)
            .map(|(_, m)| *m)
            .filter(|m| m.movie_id != movie.movie_id && shares_genre(&m.genres, &movie.genres))
            .collect()
    }

    pub fn features(&self, movie: &MovieRecord) -> (f64, f64) {
        let mine: HashSet<&str> = movie.keywords.iter().map(String::as_str).collect();
        let comps = self.competitors(movie);
        let sim = comps
            .iter()
            .map(|c| jaccard(&mine, &c.keywords.iter().map(String::as_str).collect()))
            .sum();
        ((comps.len() as f64).ln_1p(), sim)
    }
}
