use std::collections::BTreeMap;
use std::ops::Range;

use serde::{Deserialize, Serialize};

use super::normalize::names;
use super::vocab::{FieldGroup, TokenGroup};
use crate::dataset::{MAX_ACTORS, MAX_DIRECTORS, MAX_WRITERS};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LayoutConfig {
    pub max_genres: usize,
    pub max_clusters: usize,
}

impl Default for LayoutConfig {
    fn default() -> Self {
        Self {
            max_genres: 6,
            max_clusters: 12,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SlotKind {
    Token(TokenGroup),
    /// Real-valued slot; carries the normalizer feature name.
    Numeral(&'static str),
    Marker(FieldGroup),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SlotSpec {
    pub name: String,
    pub kind: SlotKind,
}

/// The fixed slot order shared by every movie: context slots first, then the
/// genre, keyword-cluster, director, writer and actor groups.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SlotLayout {
    pub config: LayoutConfig,
    slots: Vec<SlotSpec>,
    spans: BTreeMap<FieldGroupKey, Range<usize>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
struct FieldGroupKey(u8);

impl From<FieldGroup> for FieldGroupKey {
    fn from(g: FieldGroup) -> Self {
        FieldGroupKey(g as u8)
    }
}

pub const FIELD_GROUPS: [FieldGroup; 5] = [
    FieldGroup::Genres,
    FieldGroup::Clusters,
    FieldGroup::Directors,
    FieldGroup::Writers,
    FieldGroup::Actors,
];

/// Slots per crew member: name, experience, profitability.
pub const CREW_STRIDE: usize = 3;
/// Slots per actor: name, gender, age, experience, profitability.
pub const ACTOR_STRIDE: usize = 5;

impl SlotLayout {
    pub fn new(config: LayoutConfig) -> Self {
        let mut slots = Vec::new();
        let mut push = |name: String, kind| slots.push(SlotSpec { name, kind });
        use SlotKind::*;
        push("release_year".into(), Token(TokenGroup::ReleaseYear));
        push("release_month".into(), Token(TokenGroup::ReleaseMonth));
        push("mpaa".into(), Token(TokenGroup::Mpaa));
        push("budget".into(), Numeral(names::BUDGET));
        push("producer".into(), Token(TokenGroup::ProductionCompany));
        push("distributor".into(), Token(TokenGroup::Distributor));
        push("n_competitors".into(), Numeral(names::N_COMPETITORS));
        push("competitor_similarity".into(), Numeral(names::COMPETITOR_SIMILARITY));
        push("franchise".into(), Token(TokenGroup::Franchise));
        push("copycat".into(), Token(TokenGroup::Copycat));
        push("collection".into(), Token(TokenGroup::Collection));
        push("n_person".into(), Numeral(names::N_PERSON));
        push("n_man".into(), Numeral(names::N_MAN));
        push("n_woman".into(), Numeral(names::N_WOMAN));

        let mut spans = BTreeMap::new();
        let mut group = |slots: &mut Vec<SlotSpec>, g: FieldGroup, members: Vec<SlotSpec>| {
            slots.push(SlotSpec { name: g.label().into(), kind: Marker(g) });
            let start = slots.len();
            slots.extend(members);
            spans.insert(FieldGroupKey::from(g), start..slots.len());
        };
        let genres = (0..config.max_genres)
            .map(|i| SlotSpec { name: format!("genre{}", i + 1), kind: Token(TokenGroup::Genres) })
            .collect();
        group(&mut slots, FieldGroup::Genres, genres);
        let clusters = (0..config.max_clusters)
            .map(|i| SlotSpec { name: format!("cluster{}", i + 1), kind: Token(TokenGroup::KeywordClusters) })
            .collect();
        group(&mut slots, FieldGroup::Clusters, clusters);
        for (g, role, n) in [
            (FieldGroup::Directors, "director", MAX_DIRECTORS),
            (FieldGroup::Writers, "writer", MAX_WRITERS),
        ] {
            let members = (1..=n)
                .flat_map(|i| {
                    [
                        SlotSpec { name: format!("{role}{i}"), kind: Token(TokenGroup::CrewNames) },
                        SlotSpec { name: format!("{role}{i}_experience"), kind: Numeral(names::N_PRIOR_MOVIES) },
                        SlotSpec { name: format!("{role}{i}_profitability"), kind: Numeral(names::PROFITABILITY) },
                    ]
                })
                .collect();
            group(&mut slots, g, members);
        }
        let actors = (1..=MAX_ACTORS)
            .flat_map(|i| {
                [
                    SlotSpec { name: format!("actor{i}"), kind: Token(TokenGroup::CastNames) },
                    SlotSpec { name: format!("actor{i}_gender"), kind: Token(TokenGroup::Gender) },
                    SlotSpec { name: format!("actor{i}_age"), kind: Numeral(names::ACTOR_AGE) },
                    SlotSpec { name: format!("actor{i}_experience"), kind: Numeral(names::N_PRIOR_MOVIES) },
                    SlotSpec { name: format!("actor{i}_profitability"), kind: Numeral(names::PROFITABILITY) },
                ]
            })
            .collect();
        group(&mut slots, FieldGroup::Actors, actors);
        Self { config, slots, spans }
    }

    pub fn len(&self) -> usize {
        self.slots.len()
    }

    pub fn is_empty(&self) -> bool {
        self.slots.is_empty()
    }

    pub fn slots(&self) -> &[SlotSpec] {
        &self.slots
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.slots.iter().position(|s| s.name == name)
    }

    /// Member slots of a group, excluding its marker.
    pub fn span(&self, group: FieldGroup) -> Range<usize> {
        self.spans[&FieldGroupKey::from(group)].clone()
    }

    /// Slots holding the group's maskable tokens: every genre and cluster
    /// slot, and the name slot of each person.
    pub fn name_slots(&self, group: FieldGroup) -> Vec<usize> {
        let span = self.span(group);
        let stride = match group {
            FieldGroup::Genres | FieldGroup::Clusters => 1,
            FieldGroup::Directors | FieldGroup::Writers => CREW_STRIDE,
            FieldGroup::Actors => ACTOR_STRIDE,
        };
        span.step_by(stride).collect()
    }

    pub fn is_numeral(&self, slot: usize) -> bool {
        matches!(self.slots[slot].kind, SlotKind::Numeral(_))
    }
}
