use std::collections::{BTreeMap, BTreeSet};

use crate::error::{Error, Result};

/// Compressed sparse row matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseMatrix {
    pub n_rows: usize,
    pub n_cols: usize,
    pub indptr: Vec<usize>,
    pub indices: Vec<usize>,
    pub values: Vec<f64>,
}

impl SparseMatrix {
    pub fn row(&self, r: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let span = self.indptr[r]..self.indptr[r + 1];
        self.indices[span.clone()].iter().copied().zip(self.values[span].iter().copied())
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        let mut out = vec![vec![0.0; self.n_cols]; self.n_rows];
        for (r, row) in out.iter_mut().enumerate() {
            for (c, v) in self.row(r) {
                row[c] = v;
            }
        }
        out
    }

    /// `A x` for a dense vector `x` of length `n_cols`.
    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        (0..self.n_rows).map(|r| self.row(r).map(|(c, v)| v * x[c]).sum()).collect()
    }

    /// `Aᵀ y` for a dense vector `y` of length `n_rows`.
    pub fn tmul_vec(&self, y: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.n_cols];
        for (r, &yr) in y.iter().enumerate() {
            for (c, v) in self.row(r) {
                out[c] += v * yr;
            }
        }
        out
    }

    /// Dense `AᵀA`.
    pub fn gram(&self) -> Vec<Vec<f64>> {
        let mut g = vec![vec![0.0; self.n_cols]; self.n_cols];
        for r in 0..self.n_rows {
            let entries: Vec<_> = self.row(r).collect();
            for &(i, vi) in &entries {
                for &(j, vj) in &entries {
                    g[i][j] += vi * vj;
                }
            }
        }
        g
    }
}

/// Movie-by-keyword TF-IDF with its row and column labels.
#[derive(Debug, Clone)]
pub struct TfIdf {
    pub matrix: SparseMatrix,
    pub movie_ids: Vec<String>,
    /// Column labels, sorted.
    pub keywords: Vec<String>,
    /// Document frequency per column.
    pub df: Vec<usize>,
}

/// Build the TF-IDF matrix. Keywords are deduplicated per movie, so term
/// frequency is binary and entry (m, k) is `ln(N / df(k))` when present.
pub fn build_tfidf(corpus: &[(String, Vec<String>)]) -> Result<TfIdf> {
    if corpus.is_empty() {
        return Err(Error::Invalid("TF-IDF needs at least one movie".into()));
    }
    let sets: Vec<BTreeSet<&str>> = corpus
        .iter()
        .map(|(_, kws)| kws.iter().map(String::as_str).collect())
        .collect();
    let mut df: BTreeMap<&str, usize> = BTreeMap::new();
    for s in &sets {
        for k in s {
            *df.entry(k).or_default() += 1;
        }
    }
    let col: BTreeMap<&str, usize> = df.keys().enumerate().map(|(i, k)| (*k, i)).collect();
    let n = corpus.len() as f64;
    let idf: Vec<f64> = df.values().map(|&d| (n / d as f64).ln()).collect();

    let mut indptr = vec![0];
    let mut indices = Vec::new();
    let mut values = Vec::new();
    for s in &sets {
        for k in s {
            let c = col[k];
            indices.push(c);
            values.push(idf[c]);
        }
        indptr.push(indices.len());
    }
    Ok(TfIdf {
        matrix: SparseMatrix {
            n_rows: corpus.len(),
            n_cols: df.len(),
            indptr,
            indices,
            values,
        },
        movie_ids: corpus.iter().map(|(id, _)| id.clone()).collect(),
        keywords: df.keys().map(|k| k.to_string()).collect(),
        df: df.values().copied().collect(),
    })
}
