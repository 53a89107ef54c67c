use std::collections::{BTreeMap, HashMap};
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::clustering::KeywordClusterMap;
use crate::dataset::{Gender, Genre, MovieRecord, Mpaa};
use crate::error::{Error, Result};

pub const PAD: u32 = 0;
pub const MASK: u32 = 1;

/// Variable-length field groups; each opens with its own marker token.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum FieldGroup {
    Genres,
    Clusters,
    Directors,
    Writers,
    Actors,
}

impl FieldGroup {
    pub fn token(self) -> u32 {
        2 + self as u32
    }

    pub fn label(self) -> &'static str {
        match self {
            FieldGroup::Genres => "[genres]",
            FieldGroup::Clusters => "[clusters]",
            FieldGroup::Directors => "[Directors]",
            FieldGroup::Writers => "[Writers]",
            FieldGroup::Actors => "[Actors]",
        }
    }
}

pub const N_SPECIAL: u32 = 7;
pub const OTHERS: &str = "Others";
pub const MONTHS: [&str; 12] = [
    "January", "February", "March", "April", "May", "June", "July", "August", "September",
    "October", "November", "December",
];
pub const NO_YES: [&str; 2] = ["No", "Yes"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TokenGroup {
    ReleaseYear,
    ReleaseMonth,
    Mpaa,
    ProductionCompany,
    Distributor,
    Franchise,
    Copycat,
    Collection,
    Genres,
    KeywordClusters,
    CrewNames,
    CastNames,
    Gender,
}

impl TokenGroup {
    pub const ALL: [TokenGroup; 13] = [
        TokenGroup::ReleaseYear,
        TokenGroup::ReleaseMonth,
        TokenGroup::Mpaa,
        TokenGroup::ProductionCompany,
        TokenGroup::Distributor,
        TokenGroup::Franchise,
        TokenGroup::Copycat,
        TokenGroup::Collection,
        TokenGroup::Genres,
        TokenGroup::KeywordClusters,
        TokenGroup::CrewNames,
        TokenGroup::CastNames,
        TokenGroup::Gender,
    ];
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct VocabConfig {
    /// Studios with fewer movies than this collapse into "Others".
    pub min_company_count: usize,
    pub min_person_count: usize,
}

impl Default for VocabConfig {
    fn default() -> Self {
        Self {
            min_company_count: 10,
            min_person_count: 1,
        }
    }
}

/// Unified token table. Ids are dense: the special tokens come first, then
/// every group in `TokenGroup::ALL` order, each opening with its own OOV id.
#[derive(Debug, Clone)]
pub struct Vocabulary {
    tables: BTreeMap<TokenGroup, Vec<String>>,
    offsets: BTreeMap<TokenGroup, u32>,
    lookup: HashMap<(TokenGroup, String), u32>,
    size: u32,
}

#[derive(Serialize, Deserialize)]
struct VocabRepr {
    groups: BTreeMap<TokenGroup, Vec<String>>,
}

impl PartialEq for Vocabulary {
    fn eq(&self, other: &Self) -> bool {
        self.tables == other.tables
    }
}

fn by_frequency(counts: HashMap<String, usize>, min_count: usize) -> Vec<String> {
    let mut v: Vec<(String, usize)> = counts.into_iter().filter(|&(_, c)| c >= min_count).collect();
    v.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    v.into_iter().map(|(s, _)| s).collect()
}

fn collapse_rare(counts: HashMap<String, usize>, min_count: usize) -> Vec<String> {
    let mut kept = HashMap::new();
    let mut others = 0;
    for (k, c) in counts {
        if c >= min_count && k != OTHERS {
            kept.insert(k, c);
        } else {
            others += c;
        }
    }
    kept.insert(OTHERS.to_string(), others);
    by_frequency(kept, 0)
}

impl Vocabulary {
    pub fn from_tables(tables: BTreeMap<TokenGroup, Vec<String>>) -> Result<Self> {
        let mut offsets = BTreeMap::new();
        let mut lookup = HashMap::new();
        let mut next = N_SPECIAL;
        for g in TokenGroup::ALL {
            let table = tables
                .get(&g)
                .ok_or_else(|| Error::Data(format!("vocabulary missing group {g:?}")))?;
            offsets.insert(g, next);
            for (i, tok) in table.iter().enumerate() {
                if lookup.insert((g, tok.clone()), next + 1 + i as u32).is_some() {
                    return Err(Error::Data(format!("duplicate token {tok:?} in group {g:?}")));
                }
            }
            next += 1 + table.len() as u32;
        }
        Ok(Self {
            tables,
            offsets,
            lookup,
            size: next,
        })
    }

    /// Build every group table from the training split.
    pub fn build(train: &[&MovieRecord], clusters: &KeywordClusterMap, cfg: &VocabConfig) -> Self {
        use chrono::Datelike;
        let mut counts: BTreeMap<TokenGroup, HashMap<String, usize>> = BTreeMap::new();
        let mut bump = |g, s: &str| {
            if !s.is_empty() {
                *counts.entry(g).or_default().entry(s.to_string()).or_default() += 1;
            }
        };
        let years: Vec<String> = train
            .iter()
            .filter_map(|m| m.release_date.map(|d| d.year().to_string()))
            .collect();
        for y in &years {
            bump(TokenGroup::ReleaseYear, y);
        }
        for m in train {
            bump(TokenGroup::ProductionCompany, &m.production_company);
            bump(TokenGroup::Distributor, &m.distributor);
            if let Some(c) = &m.collection_name {
                bump(TokenGroup::Collection, c);
            }
            for p in m.directors.iter().chain(&m.writers) {
                bump(TokenGroup::CrewNames, &p.name);
            }
            for a in &m.actors {
                bump(TokenGroup::CastNames, &a.name);
            }
        }
        let mut take = |g| counts.remove(&g).unwrap_or_default();
        let mut tables = BTreeMap::new();
        tables.insert(TokenGroup::ReleaseYear, by_frequency(take(TokenGroup::ReleaseYear), 1));
        tables.insert(TokenGroup::ReleaseMonth, MONTHS.iter().map(|s| s.to_string()).collect());
        tables.insert(TokenGroup::Mpaa, Mpaa::ALL.iter().map(|m| m.to_string()).collect());
        tables.insert(
            TokenGroup::ProductionCompany,
            collapse_rare(take(TokenGroup::ProductionCompany), cfg.min_company_count),
        );
        tables.insert(
            TokenGroup::Distributor,
            collapse_rare(take(TokenGroup::Distributor), cfg.min_company_count),
        );
        tables.insert(TokenGroup::Franchise, NO_YES.iter().map(|s| s.to_string()).collect());
        tables.insert(TokenGroup::Copycat, NO_YES.iter().map(|s| s.to_string()).collect());
        tables.insert(TokenGroup::Collection, by_frequency(take(TokenGroup::Collection), 1));
        tables.insert(TokenGroup::Genres, Genre::ALL.iter().map(|g| g.to_string()).collect());
        tables.insert(
            TokenGroup::KeywordClusters,
            clusters.clusters().iter().map(|c| c.representative.clone()).collect(),
        );
        tables.insert(
            TokenGroup::CrewNames,
            by_frequency(take(TokenGroup::CrewNames), cfg.min_person_count),
        );
        tables.insert(
            TokenGroup::CastNames,
            by_frequency(take(TokenGroup::CastNames), cfg.min_person_count),
        );
        tables.insert(TokenGroup::Gender, Gender::ALL.iter().map(|g| g.as_str().to_string()).collect());
        Self::from_tables(tables).expect("built tables are well formed")
    }

    pub fn size(&self) -> usize {
        self.size as usize
    }

    pub fn oov(&self, group: TokenGroup) -> u32 {
        self.offsets[&group]
    }

    /// Token id, falling back to "Others" for studios and the group OOV otherwise.
    pub fn id(&self, group: TokenGroup, token: &str) -> u32 {
        if let Some(&id) = self.lookup.get(&(group, token.to_string())) {
            return id;
        }
        if matches!(group, TokenGroup::ProductionCompany | TokenGroup::Distributor) {
            if let Some(&id) = self.lookup.get(&(group, OTHERS.to_string())) {
                return id;
            }
        }
        self.oov(group)
    }

    pub fn cluster_token(&self, cluster_id: u32) -> u32 {
        self.offsets[&TokenGroup::KeywordClusters] + 1 + cluster_id
    }

    pub fn group_range(&self, group: TokenGroup) -> std::ops::Range<u32> {
        let start = self.offsets[&group];
        start..start + 1 + self.tables[&group].len() as u32
    }

    pub fn tokens(&self, group: TokenGroup) -> &[String] {
        &self.tables[&group]
    }

    /// Human-readable form of a token id.
    pub fn label(&self, id: u32) -> String {
        if id == PAD {
            return "[PAD]".into();
        }
        if id == MASK {
            return "[MASK]".into();
        }
        for m in [FieldGroup::Genres, FieldGroup::Clusters, FieldGroup::Directors, FieldGroup::Writers, FieldGroup::Actors] {
            if m.token() == id {
                return m.label().into();
            }
        }
        for g in TokenGroup::ALL {
            let r = self.group_range(g);
            if r.contains(&id) {
                return if id == r.start {
                    format!("[UNK:{g:?}]")
                } else {
                    self.tables[&g][(id - r.start - 1) as usize].clone()
                };
            }
        }
        format!("[INVALID:{id}]")
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(&VocabRepr {
            groups: self.tables.clone(),
        })
        .expect("vocabulary serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let repr: VocabRepr = serde_json::from_str(text)?;
        Self::from_tables(repr.groups)
    }

    /// Short content hash identifying this vocabulary.
    pub fn fingerprint(&self) -> String {
        let digest = Sha256::digest(self.to_json().as_bytes());
        hex::encode(&digest[..8])
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }
}
