use std::collections::HashMap;

use rayon::prelude::*;

use super::cluster_map::KeywordClusterMap;
use crate::error::{Error, Result};

fn l2_normalized(v: &[f32]) -> Vec<f32> {
    let norm = v.iter().map(|x| (*x as f64).powi(2)).sum::<f64>().sqrt();
    if norm == 0.0 {
        return v.to_vec();
    }
    v.iter().map(|x| (*x as f64 / norm) as f32).collect()
}

/// A keyword's lexical and co-occurrence parts, each scaled to unit length,
/// and their concatenation.
#[derive(Debug, Clone, PartialEq)]
pub struct KeywordEmbedding {
    pub keyword: String,
    pub lexical: Vec<f32>,
    pub cooc: Vec<f32>,
    pub joint: Vec<f32>,
}

impl KeywordEmbedding {
    pub fn new(keyword: impl Into<String>, lexical: &[f32], cooc: &[f32]) -> Self {
        let lexical = l2_normalized(lexical);
        let cooc = l2_normalized(cooc);
        let joint = lexical.iter().chain(&cooc).copied().collect();
        Self {
            keyword: keyword.into(),
            lexical,
            cooc,
            joint,
        }
    }
}

/// Upper-triangular pairwise distances, row-major.
#[derive(Debug, Clone)]
pub struct CondensedDistances {
    n: usize,
    data: Vec<f64>,
}

impl CondensedDistances {
    fn offset(&self, i: usize, j: usize) -> usize {
        debug_assert!(i < j && j < self.n);
        i * self.n - i * (i + 1) / 2 + (j - i - 1)
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        match i.cmp(&j) {
            std::cmp::Ordering::Less => self.data[self.offset(i, j)],
            std::cmp::Ordering::Greater => self.data[self.offset(j, i)],
            std::cmp::Ordering::Equal => 0.0,
        }
    }

    fn set(&mut self, i: usize, j: usize, v: f64) {
        let (i, j) = if i < j { (i, j) } else { (j, i) };
        let o = self.offset(i, j);
        self.data[o] = v;
    }
}

/// `1 - cos(a, b)`; zero vectors are orthogonal to everything.
pub fn cosine_distances(points: &[Vec<f32>]) -> CondensedDistances {
    let n = points.len();
    let norms: Vec<f64> = points
        .iter()
        .map(|p| p.iter().map(|x| (*x as f64).powi(2)).sum::<f64>().sqrt())
        .collect();
    let rows: Vec<Vec<f64>> = (0..n)
        .into_par_iter()
        .map(|i| {
            (i + 1..n)
                .map(|j| {
                    let denom = norms[i] * norms[j];
                    if denom == 0.0 {
                        return 1.0;
                    }
                    let dot: f64 = points[i].iter().zip(&points[j]).map(|(a, b)| *a as f64 * *b as f64).sum();
                    1.0 - dot / denom
                })
                .collect()
        })
        .collect();
    CondensedDistances {
        n,
        data: rows.into_iter().flatten().collect(),
    }
}

/// One merge: cluster slot `right` folds into slot `left` (`left < right`).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Merge {
    pub left: usize,
    pub right: usize,
    pub distance: f64,
}

/// Average-link (UPGMA) clustering until `n_clusters` remain.
///
/// Each step merges the closest pair of active slots, breaking ties by the
/// smallest `(left, right)` pair; the merged cluster keeps slot `left`.
/// Returns the merge sequence and the member lists of the surviving clusters
/// in slot order.
pub fn upgma(mut dist: CondensedDistances, n_clusters: usize) -> Result<(Vec<Merge>, Vec<Vec<usize>>)> {
    let n = dist.len();
    if n_clusters == 0 || n_clusters > n {
        return Err(Error::Invalid(format!("n_clusters {n_clusters} outside 1..={n}")));
    }
    let mut active = vec![true; n];
    let mut size = vec![1usize; n];
    let mut members: Vec<Vec<usize>> = (0..n).map(|i| vec![i]).collect();
    // nearest neighbour among active slots j > i, lowest index on ties
    let mut nn: Vec<(f64, usize)> = vec![(f64::INFINITY, usize::MAX); n];
    let scan = |dist: &CondensedDistances, active: &[bool], i: usize| {
        let mut best = (f64::INFINITY, usize::MAX);
        for j in i + 1..n {
            if active[j] {
                let d = dist.get(i, j);
                if d < best.0 {
                    best = (d, j);
                }
            }
        }
        best
    };
    for i in 0..n {
        nn[i] = scan(&dist, &active, i);
    }

    let mut merges = Vec::with_capacity(n - n_clusters);
    for _ in 0..n - n_clusters {
        let mut left = usize::MAX;
        let mut best = f64::INFINITY;
        for i in 0..n {
            if active[i] && nn[i].1 != usize::MAX && nn[i].0 < best {
                best = nn[i].0;
                left = i;
            }
        }
        let right = nn[left].1;
        merges.push(Merge { left, right, distance: best });

        let (sl, sr) = (size[left] as f64, size[right] as f64);
        for k in 0..n {
            if active[k] && k != left && k != right {
                let d = (sl * dist.get(left, k) + sr * dist.get(right, k)) / (sl + sr);
                dist.set(left, k, d);
            }
        }
        active[right] = false;
        size[left] += size[right];
        let moved = std::mem::take(&mut members[right]);
        members[left].extend(moved);

        for i in 0..right {
            if !active[i] {
                continue;
            }
            if i == left || nn[i].1 == left || nn[i].1 == right {
                nn[i] = scan(&dist, &active, i);
            } else if i < left {
                let d = dist.get(i, left);
                if d < nn[i].0 || (d == nn[i].0 && left < nn[i].1) {
                    nn[i] = (d, left);
                }
            }
        }
    }
    let survivors = (0..n).filter(|&i| active[i]).map(|i| std::mem::take(&mut members[i])).collect();
    Ok((merges, survivors))
}

/// Cluster keyword embeddings by average-link cosine distance on the joint
/// vectors. Input order does not matter: keywords are sorted before indexing.
pub fn agglomerate(
    embeddings: &[KeywordEmbedding],
    n_clusters: usize,
    freq: &HashMap<String, usize>,
) -> Result<KeywordClusterMap> {
    let mut sorted: Vec<&KeywordEmbedding> = embeddings.iter().collect();
    sorted.sort_by(|a, b| a.keyword.cmp(&b.keyword));
    if sorted.windows(2).any(|w| w[0].keyword == w[1].keyword) {
        return Err(Error::Invalid("duplicate keyword in clustering input".into()));
    }
    let points: Vec<Vec<f32>> = sorted.iter().map(|e| e.joint.clone()).collect();
    let (_, groups) = upgma(cosine_distances(&points), n_clusters)?;
    let groups = groups
        .into_iter()
        .map(|g| g.into_iter().map(|i| sorted[i].keyword.clone()).collect())
        .collect();
    KeywordClusterMap::from_groups(groups, freq)
}
