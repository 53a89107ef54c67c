use std::collections::{HashMap, HashSet};

use chrono::Datelike;
use serde::{Deserialize, Serialize};

use super::competition::CompetitionIndex;
use super::layout::{LayoutConfig, SlotKind, SlotLayout};
use super::normalize::{names, FeatureStats};
use super::person::PersonHistory;
use super::vocab::{FieldGroup, TokenGroup, VocabConfig, Vocabulary, NO_YES, MONTHS};
use crate::clustering::KeywordClusterMap;
use crate::dataset::{Gender, MovieRecord, Split, SplitAssignment};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Slot {
    Pad,
    Token(u32),
    Numeral(f32),
}

impl Slot {
    pub fn is_pad(&self) -> bool {
        matches!(self, Slot::Pad)
    }
}

/// One movie laid out in the fixed slot order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TokenizedMovie {
    pub movie_id: String,
    /// Fingerprint of the vocabulary that produced the token ids.
    pub vocab_id: String,
    pub slots: Vec<Slot>,
    /// `log10` revenue in USD when the movie has a target.
    pub target_log_revenue: Option<f64>,
}

impl TokenizedMovie {
    /// Attention mask: 1 for occupied slots, 0 for padding.
    pub fn mask(&self) -> Vec<bool> {
        self.slots.iter().map(|s| !s.is_pad()).collect()
    }

    pub fn token_slots<'a>(&'a self, layout: &'a SlotLayout) -> impl Iterator<Item = (&'a str, Option<u32>)> {
        layout
            .slots()
            .iter()
            .zip(&self.slots)
            .filter(|(spec, _)| !matches!(spec.kind, SlotKind::Numeral(_)))
            .map(|(spec, s)| {
                let id = match s {
                    Slot::Token(t) => Some(*t),
                    _ => None,
                };
                (spec.name.as_str(), id)
            })
    }

    pub fn numeral_slots<'a>(&'a self, layout: &'a SlotLayout) -> impl Iterator<Item = (&'a str, Option<f32>)> {
        layout
            .slots()
            .iter()
            .zip(&self.slots)
            .filter(|(spec, _)| matches!(spec.kind, SlotKind::Numeral(_)))
            .map(|(spec, s)| {
                let v = match s {
                    Slot::Numeral(v) => Some(*v),
                    _ => None,
                };
                (spec.name.as_str(), v)
            })
    }

    /// Cluster token ids present in the movie's keyword group.
    pub fn cluster_tokens(&self, layout: &SlotLayout) -> Vec<(usize, u32)> {
        layout
            .span(FieldGroup::Clusters)
            .filter_map(|i| match self.slots[i] {
                Slot::Token(t) => Some((i, t)),
                _ => None,
            })
            .collect()
    }
}

/// Everything tokenization depends on: vocabulary, cluster map and training
/// statistics, plus per-corpus star-power history and competition features.
#[derive(Debug, Clone)]
pub struct FeatureContext {
    pub layout: SlotLayout,
    pub vocab: Vocabulary,
    pub clusters: KeywordClusterMap,
    pub stats: FeatureStats,
    vocab_id: String,
    history: PersonHistory,
    competition: HashMap<String, (f64, f64)>,
}

fn train_records<'a>(records: &'a [MovieRecord], splits: &[SplitAssignment]) -> Vec<&'a MovieRecord> {
    let train: HashSet<&str> = splits
        .iter()
        .filter(|s| s.split == Split::Train)
        .map(|s| s.movie_id.as_str())
        .collect();
    records.iter().filter(|r| train.contains(r.movie_id.as_str())).collect()
}

impl FeatureContext {
    /// Fit vocabulary and normalization statistics on the training split.
    pub fn fit(
        records: &[MovieRecord],
        splits: &[SplitAssignment],
        clusters: KeywordClusterMap,
        vocab_cfg: &VocabConfig,
        layout_cfg: LayoutConfig,
    ) -> Result<Self> {
        let train = train_records(records, splits);
        if train.is_empty() {
            return Err(Error::Data("training split is empty".into()));
        }
        let vocab = Vocabulary::build(&train, &clusters, vocab_cfg);
        let ages = train.iter().flat_map(|m| {
            m.actors
                .iter()
                .filter_map(move |a| m.release_date.and_then(|d| a.age_on(d)).map(f64::from))
        });
        let stats = FeatureStats::fit(train.iter().map(|m| m.revenue), ages);
        Ok(Self::from_parts(vocab, clusters, stats, layout_cfg, records, splits))
    }

    /// Reassemble a context from persisted parts and the corpus.
    pub fn from_parts(
        vocab: Vocabulary,
        clusters: KeywordClusterMap,
        stats: FeatureStats,
        layout_cfg: LayoutConfig,
        records: &[MovieRecord],
        splits: &[SplitAssignment],
    ) -> Self {
        let history = PersonHistory::build(train_records(records, splits));
        let index = CompetitionIndex::new(records);
        let competition = records
            .iter()
            .map(|m| (m.movie_id.clone(), index.features(m)))
            .collect();
        Self {
            layout: SlotLayout::new(layout_cfg),
            vocab_id: vocab.fingerprint(),
            vocab,
            clusters,
            stats,
            history,
            competition,
        }
    }

    pub fn vocab_id(&self) -> &str {
        &self.vocab_id
    }

    fn numeral(&self, name: &str, raw: f64) -> Slot {
        Slot::Numeral(self.stats.normalize(name, raw).expect("layout features are registered") as f32)
    }

    fn token(&self, group: TokenGroup, s: &str) -> Slot {
        if s.is_empty() {
            Slot::Pad
        } else {
            Slot::Token(self.vocab.id(group, s))
        }
    }

    /// Lay out one movie. Pure in the movie and this context.
    pub fn tokenize(&self, movie: &MovieRecord) -> TokenizedMovie {
        let layout = &self.layout;
        let mut slots = vec![Slot::Pad; layout.len()];
        let mut set = |name: &str, v: Slot| {
            let i = layout.index_of(name).expect("known slot");
            slots[i] = v;
        };
        let date = movie.release_date;
        if let Some(d) = date {
            set("release_year", self.token(TokenGroup::ReleaseYear, &d.year().to_string()));
            set("release_month", self.token(TokenGroup::ReleaseMonth, MONTHS[d.month0() as usize]));
            let (n, sim) = self
                .competition
                .get(&movie.movie_id)
                .copied()
                .unwrap_or((0.0, 0.0));
            set("n_competitors", Slot::Numeral(n as f32));
            set("competitor_similarity", self.numeral(names::COMPETITOR_SIMILARITY, sim));
        }
        set("mpaa", self.token(TokenGroup::Mpaa, movie.mpaa.as_str()));
        set("budget", self.numeral(names::BUDGET, movie.budget as f64));
        set("producer", self.token(TokenGroup::ProductionCompany, &movie.production_company));
        set("distributor", self.token(TokenGroup::Distributor, &movie.distributor));
        set("franchise", self.token(TokenGroup::Franchise, NO_YES[movie.franchise as usize]));
        set("copycat", self.token(TokenGroup::Copycat, NO_YES[movie.copycat as usize]));
        if let Some(c) = &movie.collection_name {
            set("collection", self.token(TokenGroup::Collection, c));
        }
        let count = |g: Option<Gender>| {
            movie.actors.iter().filter(|a| g.is_none_or(|g| a.gender == g)).count() as f64
        };
        set("n_person", self.numeral(names::N_PERSON, count(None)));
        set("n_man", self.numeral(names::N_MAN, count(Some(Gender::Male))));
        set("n_woman", self.numeral(names::N_WOMAN, count(Some(Gender::Female))));

        for (slot, g) in layout.span(FieldGroup::Genres).zip(&movie.genres) {
            slots[slot] = self.token(TokenGroup::Genres, g.as_str());
        }

        let mut seen = HashSet::new();
        let cluster_ids = movie
            .keywords
            .iter()
            .filter_map(|k| self.clusters.cluster_of(k))
            .filter(|c| seen.insert(*c));
        for (slot, c) in layout.span(FieldGroup::Clusters).zip(cluster_ids) {
            slots[slot] = Slot::Token(self.vocab.cluster_token(c));
        }

        let star = |id: &str| match date {
            Some(d) => {
                let s = self.history.stats(id, d, &self.stats);
                (s.experience, s.profitability)
            }
            None => (0.0, 0.0),
        };
        for (group, people) in [
            (FieldGroup::Directors, &movie.directors),
            (FieldGroup::Writers, &movie.writers),
        ] {
            for (&slot, p) in layout.name_slots(group).iter().zip(people.iter()) {
                let (exp, prof) = star(&p.id);
                slots[slot] = self.token(TokenGroup::CrewNames, &p.name);
                slots[slot + 1] = Slot::Numeral(exp as f32);
                slots[slot + 2] = Slot::Numeral(prof as f32);
            }
        }
        for (&slot, a) in layout.name_slots(FieldGroup::Actors).iter().zip(&movie.actors) {
            let (exp, prof) = star(&a.id);
            slots[slot] = self.token(TokenGroup::CastNames, &a.name);
            slots[slot + 1] = self.token(TokenGroup::Gender, a.gender.as_str());
            if let Some(age) = date.and_then(|d| a.age_on(d)) {
                slots[slot + 2] = self.numeral(names::ACTOR_AGE, age as f64);
            }
            slots[slot + 3] = Slot::Numeral(exp as f32);
            slots[slot + 4] = Slot::Numeral(prof as f32);
        }
        for g in super::layout::FIELD_GROUPS {
            slots[layout.span(g).start - 1] = Slot::Token(g.token());
        }

        TokenizedMovie {
            movie_id: movie.movie_id.clone(),
            vocab_id: self.vocab_id.clone(),
            slots,
            target_log_revenue: movie.usable_for_finetune().then(|| movie.log10_revenue()).flatten(),
        }
    }

    pub fn tokenize_all(&self, movies: &[MovieRecord]) -> Vec<TokenizedMovie> {
        movies.iter().map(|m| self.tokenize(m)).collect()
    }
}
