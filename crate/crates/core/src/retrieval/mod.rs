//! Poster retrieval by keyword-in-context similarity.

use std::cmp::Ordering;
use std::path::Path;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::autograd::Graph;
use crate::encoder::{Encoder, Mode};
use crate::error::{Error, Result};
use crate::features::{SlotLayout, TokenizedMovie};
use crate::io::{ModelCheckpoint, PosterObjectSet};
use crate::pretrain::project_objects;

/// Projected object sets, one per poster.
#[derive(Debug, Clone, PartialEq)]
pub struct RetrievalIndex {
    pub movie_ids: Vec<String>,
    pub sets: Vec<Array2<f32>>,
}

impl RetrievalIndex {
    pub fn len(&self) -> usize {
        self.movie_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.movie_ids.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Hit {
    pub rank: usize,
    pub movie_id: String,
    pub score: f64,
}

/// Project every poster's objects with the checkpoint's visual projection.
pub fn build_index(ckpt: &ModelCheckpoint, posters: &[PosterObjectSet]) -> Result<RetrievalIndex> {
    let mut index = RetrievalIndex {
        movie_ids: Vec::new(),
        sets: Vec::new(),
    };
    for p in posters {
        if p.n_objects() == 0 {
            log::warn!("poster of {} has no objects; skipped", p.movie_id);
            continue;
        }
        if Some(p.dim()) != ckpt.config.poster_dim {
            return Err(Error::Shape(format!(
                "poster of {} has feature width {}, checkpoint expects {:?}",
                p.movie_id,
                p.dim(),
                ckpt.config.poster_dim
            )));
        }
        let mut g = Graph::new(&ckpt.params);
        let z = project_objects(&mut g, p.objects.clone())?;
        index.movie_ids.push(p.movie_id.clone());
        index.sets.push(g.value(z).clone());
    }
    Ok(index)
}

/// Contextual vector of `cluster_token` within `movie`.
pub fn keyword_vector(ckpt: &ModelCheckpoint, movie: &TokenizedMovie, cluster_token: u32) -> Result<Vec<f32>> {
    if movie.vocab_id != ckpt.config.vocab_id {
        return Err(Error::Data(format!("movie {} was tokenized with another vocabulary", movie.movie_id)));
    }
    let layout = SlotLayout::new(ckpt.config.layout.clone());
    let slot = movie
        .cluster_tokens(&layout)
        .into_iter()
        .find(|&(_, t)| t == cluster_token)
        .map(|(s, _)| s)
        .ok_or_else(|| {
            Error::Invalid(format!(
                "keyword {} is not among the clusters of movie {}",
                ckpt.vocab.label(cluster_token),
                movie.movie_id
            ))
        })?;
    let encoder = Encoder::attach(ckpt.config.encoder.clone(), &ckpt.params)?;
    let mut g = Graph::new(&ckpt.params);
    let out = encoder.forward(&mut g, &[movie], Mode::Eval, None)?;
    Ok(g.value(out.hidden).row(slot).to_vec())
}

/// `Σ_m exp(cos(x, z_m))` over the rows of `set`.
pub fn set_score(x: &[f32], set: &Array2<f32>) -> Result<f64> {
    let nx = x.iter().map(|v| (*v as f64).powi(2)).sum::<f64>().sqrt();
    if nx == 0.0 {
        return Err(Error::Numeric("query vector has zero norm".into()));
    }
    let mut total = 0.0;
    for z in set.rows() {
        let nz = z.iter().map(|v| (*v as f64).powi(2)).sum::<f64>().sqrt();
        if nz == 0.0 {
            return Err(Error::Numeric("object vector has zero norm".into()));
        }
        let dot: f64 = x.iter().zip(z.iter()).map(|(a, b)| *a as f64 * *b as f64).sum();
        total += (dot / (nx * nz)).exp();
    }
    Ok(total)
}

/// Rank every indexed poster against `x`; ties go to the smaller movie id.
pub fn rank(index: &RetrievalIndex, x: &[f32], top_k: usize) -> Result<Vec<Hit>> {
    let mut scored = index
        .movie_ids
        .iter()
        .zip(&index.sets)
        .map(|(id, set)| Ok((id.as_str(), set_score(x, set)?)))
        .collect::<Result<Vec<_>>>()?;
    scored.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap_or(Ordering::Equal).then_with(|| a.0.cmp(b.0)));
    Ok(scored
        .into_iter()
        .take(top_k)
        .enumerate()
        .map(|(i, (id, score))| Hit {
            rank: i + 1,
            movie_id: id.to_string(),
            score,
        })
        .collect())
}

/// Posters ranked by similarity to a keyword in the context of `movie`.
pub fn query(
    index: &RetrievalIndex,
    ckpt: &ModelCheckpoint,
    movie: &TokenizedMovie,
    cluster_token: u32,
    top_k: usize,
) -> Result<Vec<Hit>> {
    let x = keyword_vector(ckpt, movie, cluster_token)?;
    rank(index, &x, top_k)
}

/// Contextual vectors at every keyword-cluster slot of `movie`, one row each.
pub fn keyword_set(ckpt: &ModelCheckpoint, movie: &TokenizedMovie) -> Result<Array2<f32>> {
    Ok(keyword_sets(ckpt, &[movie])?.pop().expect("one movie in, one set out"))
}

fn keyword_sets(ckpt: &ModelCheckpoint, movies: &[&TokenizedMovie]) -> Result<Vec<Array2<f32>>> {
    if let Some(m) = movies.iter().find(|m| m.vocab_id != ckpt.config.vocab_id) {
        return Err(Error::Data(format!("movie {} was tokenized with another vocabulary", m.movie_id)));
    }
    let layout = SlotLayout::new(ckpt.config.layout.clone());
    let encoder = Encoder::attach(ckpt.config.encoder.clone(), &ckpt.params)?;
    let mut out = Vec::with_capacity(movies.len());
    for chunk in movies.chunks(128) {
        let mut g = Graph::new(&ckpt.params);
        let enc = encoder.forward(&mut g, chunk, Mode::Eval, None)?;
        let hidden = g.value(enc.hidden);
        for (i, m) in chunk.iter().enumerate() {
            let rows: Vec<usize> = m.cluster_tokens(&layout).into_iter().map(|(s, _)| i * enc.seq_len + s).collect();
            if rows.is_empty() {
                return Err(Error::Invalid(format!("movie {} has no keywords", m.movie_id)));
            }
            out.push(hidden.select(ndarray::Axis(0), &rows));
        }
    }
    Ok(out)
}

/// `Σ_k set_score(x_k, set)` over the rows of `xs`.
pub fn set_to_set_score(xs: &Array2<f32>, set: &Array2<f32>) -> Result<f64> {
    xs.rows().into_iter().map(|x| set_score(x.as_slice().expect("standard layout"), set)).sum()
}

/// Fraction of `queries` whose own poster is among the top `k` of `index`
/// when every poster is scored against the query's whole keyword set.
/// Ties go to the smaller movie id, as in [`rank`].
pub fn recall_at_k(index: &RetrievalIndex, ckpt: &ModelCheckpoint, queries: &[&TokenizedMovie], k: usize) -> Result<f64> {
    if queries.is_empty() {
        return Err(Error::Invalid("recall needs at least one query".into()));
    }
    let sets = keyword_sets(ckpt, queries)?;
    let mut hits = 0usize;
    for (m, xs) in queries.iter().zip(&sets) {
        let own = index
            .movie_ids
            .iter()
            .position(|id| *id == m.movie_id)
            .ok_or_else(|| Error::Data(format!("poster of {} is not indexed", m.movie_id)))?;
        let scores = index.sets.iter().map(|z| set_to_set_score(xs, z)).collect::<Result<Vec<_>>>()?;
        let better = scores
            .iter()
            .zip(&index.movie_ids)
            .filter(|&(s, id)| *s > scores[own] || (*s == scores[own] && *id < m.movie_id))
            .count();
        hits += usize::from(better < k);
    }
    Ok(hits as f64 / queries.len() as f64)
}

pub fn write_report(path: &Path, hits: &[Hit]) -> Result<()> {
    let text = serde_json::to_string_pretty(hits)?;
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}
