//! Keyword consolidation: TF-IDF co-occurrence embeddings, lexical vectors,
//! and average-link agglomerative clustering.

mod agglomerate;
mod cluster_map;
mod lexical;
mod svd;
mod tfidf;

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

pub use agglomerate::{agglomerate, cosine_distances, upgma, CondensedDistances, KeywordEmbedding, Merge};
pub use cluster_map::{KeywordCluster, KeywordClusterMap};
pub use lexical::LexicalVectors;
pub use svd::{cooc_embed, symmetric_eigen, truncated_svd, TruncatedSvd};
pub use tfidf::{build_tfidf, SparseMatrix, TfIdf};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ClusterConfig {
    pub n_clusters: usize,
    pub cooc_dims: usize,
    /// Keywords seen in fewer movies join their nearest cluster afterwards.
    pub min_df: usize,
}

impl Default for ClusterConfig {
    fn default() -> Self {
        Self {
            n_clusters: 1414,
            cooc_dims: 50,
            min_df: 2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterReport {
    pub n_keywords: usize,
    pub n_rare: usize,
    pub n_missing_lexical: usize,
    pub n_clusters: usize,
}

fn cosine(a: &[f32], b: &[f32]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| *x as f64 * *y as f64).sum();
    let na = a.iter().map(|x| (*x as f64).powi(2)).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| (*x as f64).powi(2)).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        0.0
    } else {
        dot / (na * nb)
    }
}

/// Full clustering pass over `(movie_id, keywords)` pairs.
pub fn cluster_keywords(
    corpus: &[(String, Vec<String>)],
    lexical: &LexicalVectors,
    cfg: &ClusterConfig,
) -> Result<(KeywordClusterMap, ClusterReport)> {
    let tfidf = build_tfidf(corpus)?;
    let n_keywords = tfidf.keywords.len();
    if cfg.n_clusters == 0 || cfg.n_clusters > n_keywords {
        return Err(Error::Invalid(format!(
            "n_clusters {} outside 1..={n_keywords}",
            cfg.n_clusters
        )));
    }
    let cooc = cooc_embed(&tfidf, cfg.cooc_dims);
    let mut missing = 0;
    let embeddings: Vec<KeywordEmbedding> = tfidf
        .keywords
        .iter()
        .map(|kw| {
            let lex = lexical.phrase(kw).unwrap_or_else(|| {
                missing += 1;
                vec![0.0; lexical.dim]
            });
            let co: Vec<f32> = cooc[kw].iter().map(|&x| x as f32).collect();
            KeywordEmbedding::new(kw.clone(), &lex, &co)
        })
        .collect();
    let freq: HashMap<String, usize> = tfidf.keywords.iter().cloned().zip(tfidf.df.iter().copied()).collect();

    let (common, rare): (Vec<_>, Vec<_>) = embeddings.into_iter().partition(|e| freq[&e.keyword] >= cfg.min_df);
    let (map, n_rare) = if common.len() >= cfg.n_clusters && !rare.is_empty() {
        let base = agglomerate(&common, cfg.n_clusters, &freq)?;
        let by_kw: HashMap<&str, &KeywordEmbedding> = common.iter().map(|e| (e.keyword.as_str(), e)).collect();
        let centroids: Vec<Vec<f32>> = base
            .clusters()
            .iter()
            .map(|c| {
                let mut acc = vec![0.0f32; common[0].joint.len()];
                for m in &c.members {
                    for (a, x) in acc.iter_mut().zip(&by_kw[m.as_str()].joint) {
                        *a += x;
                    }
                }
                acc
            })
            .collect();
        let mut groups: Vec<Vec<String>> = base.clusters().iter().map(|c| c.members.clone()).collect();
        for e in &rare {
            let mut best = (f64::NEG_INFINITY, 0);
            for (i, c) in centroids.iter().enumerate() {
                let s = cosine(&e.joint, c);
                if s > best.0 {
                    best = (s, i);
                }
            }
            groups[best.1].push(e.keyword.clone());
        }
        (KeywordClusterMap::from_groups(groups, &freq)?, rare.len())
    } else {
        let all: Vec<_> = common.into_iter().chain(rare).collect();
        (agglomerate(&all, cfg.n_clusters, &freq)?, 0)
    };
    let report = ClusterReport {
        n_keywords,
        n_rare,
        n_missing_lexical: missing,
        n_clusters: map.len(),
    };
    Ok((map, report))
}
