//! Glue between stages: ingest, clustering, feature fitting and split selection.

use std::collections::{BTreeMap, HashMap};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::clustering::{cluster_keywords, ClusterReport, KeywordClusterMap, LexicalVectors};
use crate::config::{IngestConfig, RunConfig};
use crate::dataset::{parse_corpus, stratified_split, LineError, MovieRecord, Split, SplitAssignment};
use crate::error::{Error, Result};
use crate::features::{FeatureContext, TokenizedMovie};
use crate::io::{ModelCheckpoint, PosterObjectSet};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitSummary {
    pub movies: usize,
    pub franchise: usize,
    pub franchise_share: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IngestReport {
    pub records: usize,
    pub line_errors: Vec<(usize, String)>,
    pub unusable_for_finetune: usize,
    pub corpus_franchise_share: f64,
    pub splits: BTreeMap<Split, SplitSummary>,
}

#[derive(Debug, Clone)]
pub struct Ingested {
    pub records: Vec<MovieRecord>,
    pub splits: Vec<SplitAssignment>,
    pub report: IngestReport,
}

fn share(part: usize, whole: usize) -> f64 {
    if whole == 0 {
        0.0
    } else {
        part as f64 / whole as f64
    }
}

/// Split already-parsed records and summarise the result.
pub fn ingest_records(records: Vec<MovieRecord>, errors: &[LineError], cfg: &IngestConfig) -> Result<Ingested> {
    let mut seen = std::collections::HashSet::new();
    if let Some(dup) = records.iter().find(|r| !seen.insert(r.movie_id.as_str())) {
        return Err(Error::Data(format!("duplicate movie_id {}", dup.movie_id)));
    }
    let splits = stratified_split(&records, cfg.split_ratios, cfg.split_seed)?;
    let franchise: HashMap<&str, bool> = records.iter().map(|r| (r.movie_id.as_str(), r.franchise)).collect();
    let mut summary: BTreeMap<Split, SplitSummary> = Split::ALL
        .iter()
        .map(|&s| (s, SplitSummary { movies: 0, franchise: 0, franchise_share: 0.0 }))
        .collect();
    for a in &splits {
        let s = summary.get_mut(&a.split).expect("all splits present");
        s.movies += 1;
        s.franchise += usize::from(franchise[a.movie_id.as_str()]);
    }
    for s in summary.values_mut() {
        s.franchise_share = share(s.franchise, s.movies);
    }
    let report = IngestReport {
        records: records.len(),
        line_errors: errors.iter().map(|e| (e.line, e.message.clone())).collect(),
        unusable_for_finetune: records.iter().filter(|r| !r.usable_for_finetune()).count(),
        corpus_franchise_share: share(records.iter().filter(|r| r.franchise).count(), records.len()),
        splits: summary,
    };
    Ok(Ingested { records, splits, report })
}

pub fn ingest_corpus(path: &Path, cfg: &IngestConfig) -> Result<Ingested> {
    let parsed = parse_corpus(path, cfg.schema_version)?;
    for e in &parsed.errors {
        log::warn!("line {}: {}", e.line, e.message);
    }
    ingest_records(parsed.records, &parsed.errors, cfg)
}

/// `(movie_id, keywords)` pairs for clustering.
pub fn keyword_corpus(records: &[MovieRecord]) -> Vec<(String, Vec<String>)> {
    records
        .iter()
        .filter(|r| !r.keywords.is_empty())
        .map(|r| (r.movie_id.clone(), r.keywords.clone()))
        .collect()
}

pub fn cluster_corpus(
    records: &[MovieRecord],
    lexical: &LexicalVectors,
    cfg: &RunConfig,
) -> Result<(KeywordClusterMap, ClusterReport)> {
    cluster_keywords(&keyword_corpus(records), lexical, &cfg.cluster)
}

/// Re-key poster records by movie id. A movie's poster is the record named
/// by its `poster_ref`, or by its own id when it has none. Posters that no
/// movie refers to are dropped.
pub fn align_posters(records: &[MovieRecord], posters: Vec<PosterObjectSet>) -> Result<Vec<PosterObjectSet>> {
    let mut dims: Vec<usize> = posters.iter().filter(|p| p.n_objects() > 0).map(PosterObjectSet::dim).collect();
    dims.sort_unstable();
    dims.dedup();
    if dims.len() > 1 {
        return Err(Error::Data(format!("poster feature widths differ: {dims:?}")));
    }
    let by_ref: HashMap<String, PosterObjectSet> = posters.into_iter().map(|p| (p.movie_id.clone(), p)).collect();
    Ok(records
        .iter()
        .filter_map(|r| {
            let key = r.poster_ref.as_deref().unwrap_or(&r.movie_id);
            by_ref.get(key).map(|p| PosterObjectSet {
                movie_id: r.movie_id.clone(),
                objects: p.objects.clone(),
            })
        })
        .collect())
}

/// Width of the poster features, if any poster has objects.
pub fn poster_dim(posters: &[PosterObjectSet]) -> Option<usize> {
    posters.iter().find(|p| p.n_objects() > 0).map(PosterObjectSet::dim)
}

/// Feature context fitted on the training split plus every movie tokenized.
#[derive(Debug, Clone)]
pub struct Prepared {
    pub context: FeatureContext,
    pub movies: Vec<TokenizedMovie>,
    split_of: HashMap<String, Split>,
}

impl Prepared {
    pub fn new(records: &[MovieRecord], splits: &[SplitAssignment], context: FeatureContext) -> Self {
        let movies = context.tokenize_all(records);
        let split_of = splits.iter().map(|s| (s.movie_id.clone(), s.split)).collect();
        Self { context, movies, split_of }
    }

    pub fn fit(
        records: &[MovieRecord],
        splits: &[SplitAssignment],
        clusters: KeywordClusterMap,
        cfg: &RunConfig,
    ) -> Result<Self> {
        let context = FeatureContext::fit(records, splits, clusters, &cfg.vocab, cfg.layout.clone())?;
        Ok(Self::new(records, splits, context))
    }

    /// Rebuild the features a checkpoint was trained with.
    pub fn from_checkpoint(records: &[MovieRecord], splits: &[SplitAssignment], ckpt: &ModelCheckpoint) -> Self {
        let context = FeatureContext::from_parts(
            ckpt.vocab.clone(),
            ckpt.clusters.clone(),
            ckpt.stats.clone(),
            ckpt.config.layout.clone(),
            records,
            splits,
        );
        Self::new(records, splits, context)
    }

    pub fn split_of(&self, movie_id: &str) -> Option<Split> {
        self.split_of.get(movie_id).copied()
    }

    /// Movies of one split, in corpus order.
    pub fn split(&self, split: Split) -> Vec<&TokenizedMovie> {
        self.movies
            .iter()
            .filter(|m| self.split_of(&m.movie_id) == Some(split))
            .collect()
    }

    /// Movies of one split that carry a revenue target.
    pub fn labelled(&self, split: Split) -> Vec<&TokenizedMovie> {
        self.split(split)
            .into_iter()
            .filter(|m| m.target_log_revenue.is_some())
            .collect()
    }

    /// Owned copies of one split's movies, for pretraining.
    pub fn owned(&self, split: Split) -> Vec<TokenizedMovie> {
        self.split(split).into_iter().cloned().collect()
    }
}
