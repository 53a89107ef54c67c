use std::collections::HashMap;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use super::normalize::{names, FeatureStats};
use crate::dataset::MovieRecord;

/// Star-power statistics for one person as of a release date.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PersonStats {
    pub person_id: String,
    /// `ln(1 + number of prior movies)`.
    pub experience: f64,
    /// Min-max normalized `log10` of the mean prior revenue, in [0, 1].
    pub profitability: f64,
}

/// Compute star power from a person's history. Only entries released strictly
/// before `as_of` are counted.
pub fn person_stats(
    person_id: &str,
    history: &[(NaiveDate, u64)],
    as_of: NaiveDate,
    stats: &FeatureStats,
) -> PersonStats {
    let (n, total) = history
        .iter()
        .filter(|(d, _)| *d < as_of)
        .fold((0usize, 0f64), |(n, t), (_, r)| (n + 1, t + *r as f64));
    let profitability = if n == 0 {
        0.0
    } else {
        stats
            .normalize(names::PROFITABILITY, total / n as f64)
            .expect("profitability is a registered feature")
    };
    PersonStats {
        person_id: person_id.to_string(),
        experience: (n as f64).ln_1p(),
        profitability,
    }
}

/// Release history per person, built from labelled training movies only so
/// that validation and test revenues never reach a feature.
#[derive(Debug, Clone, Default)]
pub struct PersonHistory {
    by_person: HashMap<String, Vec<(NaiveDate, u64)>>,
}

impl PersonHistory {
    pub fn build<'a>(train: impl IntoIterator<Item = &'a MovieRecord>) -> Self {
        let mut by_person: HashMap<String, Vec<(NaiveDate, u64)>> = HashMap::new();
        for m in train {
            let (Some(date), true) = (m.release_date, m.revenue > 0) else {
                continue;
            };
            let mut seen = std::collections::HashSet::new();
            for id in m.person_ids() {
                if seen.insert(id) {
                    by_person.entry(id.to_string()).or_default().push((date, m.revenue));
                }
            }
        }
        for h in by_person.values_mut() {
            h.sort_unstable();
        }
        Self { by_person }
    }

    /// Entries strictly before `as_of`.
    pub fn before(&self, person_id: &str, as_of: NaiveDate) -> &[(NaiveDate, u64)] {
        let Some(h) = self.by_person.get(person_id) else {
            return &[];
        };
        let end = h.partition_point(|(d, _)| *d < as_of);
        &h[..end]
    }

    pub fn stats(&self, person_id: &str, as_of: NaiveDate, stats: &FeatureStats) -> PersonStats {
        person_stats(person_id, self.before(person_id, as_of), as_of, stats)
    }
}
