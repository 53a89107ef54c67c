use std::collections::HashMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::tfidf::{SparseMatrix, TfIdf};

/// Column counts up to which the Gram matrix is diagonalized directly.
const DENSE_LIMIT: usize = 600;

/// Eigen-decomposition of a symmetric matrix by cyclic Jacobi rotations.
/// Returns eigenvalues in descending order with matching unit eigenvectors.
pub fn symmetric_eigen(mut a: Vec<f64>, n: usize) -> (Vec<f64>, Vec<Vec<f64>>) {
    let mut v = vec![0.0; n * n];
    for i in 0..n {
        v[i * n + i] = 1.0;
    }
    let total: f64 = a.iter().map(|x| x * x).sum();
    for _sweep in 0..100 {
        let off: f64 = (0..n)
            .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| a[i * n + j] * a[i * n + j])
            .sum();
        if off <= 1e-30 * total.max(f64::MIN_POSITIVE) {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                let apq = a[p * n + q];
                if apq.abs() < 1e-300 {
                    continue;
                }
                let theta = (a[q * n + q] - a[p * n + p]) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let akp = a[k * n + p];
                    let akq = a[k * n + q];
                    a[k * n + p] = c * akp - s * akq;
                    a[k * n + q] = s * akp + c * akq;
                }
                for k in 0..n {
                    let apk = a[p * n + k];
                    let aqk = a[q * n + k];
                    a[p * n + k] = c * apk - s * aqk;
                    a[q * n + k] = s * apk + c * aqk;
                }
                for k in 0..n {
                    let vkp = v[k * n + p];
                    let vkq = v[k * n + q];
                    v[k * n + p] = c * vkp - s * vkq;
                    v[k * n + q] = s * vkp + c * vkq;
                }
            }
        }
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| a[j * n + j].total_cmp(&a[i * n + i]).then(i.cmp(&j)));
    let vals = order.iter().map(|&i| a[i * n + i]).collect();
    let vecs = order
        .iter()
        .map(|&i| (0..n).map(|k| v[k * n + i]).collect())
        .collect();
    (vals, vecs)
}

/// Leading singular values and right singular vectors of a sparse matrix.
#[derive(Debug, Clone)]
pub struct TruncatedSvd {
    pub singular_values: Vec<f64>,
    /// One unit vector of length `n_cols` per singular value.
    pub right_vectors: Vec<Vec<f64>>,
}

fn orthonormalize(cols: &mut [Vec<f64>]) {
    for i in 0..cols.len() {
        for j in 0..i {
            let (head, tail) = cols.split_at_mut(i);
            let d: f64 = head[j].iter().zip(&tail[0]).map(|(a, b)| a * b).sum();
            for (x, y) in tail[0].iter_mut().zip(&head[j]) {
                *x -= d * y;
            }
        }
        let norm = cols[i].iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 1e-300 {
            cols[i].iter_mut().for_each(|x| *x /= norm);
        }
    }
}

fn gram_apply(a: &SparseMatrix, x: &[f64]) -> Vec<f64> {
    a.tmul_vec(&a.mul_vec(x))
}

/// Block subspace iteration with Rayleigh-Ritz on `AᵀA`, for wide matrices.
fn subspace_svd(a: &SparseMatrix, k: usize) -> (Vec<f64>, Vec<Vec<f64>>) {
    let n = a.n_cols;
    let r = (k + 10).min(n);
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
    let mut basis: Vec<Vec<f64>> = (0..r)
        .map(|_| (0..n).map(|_| rng.random::<f64>() - 0.5).collect())
        .collect();
    orthonormalize(&mut basis);
    let mut prev = vec![0.0; k];
    for _ in 0..1000 {
        let images: Vec<Vec<f64>> = basis.iter().map(|b| gram_apply(a, b)).collect();
        let mut h = vec![0.0; r * r];
        for i in 0..r {
            for j in 0..r {
                h[i * r + j] = basis[i].iter().zip(&images[j]).map(|(x, y)| x * y).sum();
            }
        }
        let (ritz, w) = symmetric_eigen(h, r);
        // rotate the images into the Ritz basis, then re-orthonormalize
        basis = w
            .iter()
            .map(|wc| {
                let mut col = vec![0.0; n];
                for (coef, img) in wc.iter().zip(&images) {
                    for (c, x) in col.iter_mut().zip(img) {
                        *c += coef * x;
                    }
                }
                col
            })
            .collect();
        orthonormalize(&mut basis);
        let vals = ritz;
        let converged = vals
            .iter()
            .zip(&prev)
            .take(k)
            .all(|(v, p)| (v - p).abs() <= 1e-13 * v.abs().max(1e-300));
        if converged {
            break;
        }
        prev = vals[..k].to_vec();
    }
    // final Rayleigh-Ritz so vectors and values agree
    let images: Vec<Vec<f64>> = basis.iter().map(|b| gram_apply(a, b)).collect();
    let mut h = vec![0.0; r * r];
    for i in 0..r {
        for j in 0..r {
            h[i * r + j] = basis[i].iter().zip(&images[j]).map(|(x, y)| x * y).sum();
        }
    }
    let (ritz, w) = symmetric_eigen(h, r);
    let vecs = w
        .iter()
        .take(k)
        .map(|wc| {
            let mut col = vec![0.0; n];
            for (coef, b) in wc.iter().zip(&basis) {
                for (c, x) in col.iter_mut().zip(b) {
                    *c += coef * x;
                }
            }
            col
        })
        .collect();
    (ritz.into_iter().take(k).collect(), vecs)
}

/// Top-`k` singular triplets (values and right vectors) of `a`. The sign of
/// each vector is fixed so that its largest-magnitude entry is non-negative.
pub fn truncated_svd(a: &SparseMatrix, k: usize) -> TruncatedSvd {
    let n = a.n_cols;
    let k = k.min(n);
    let (eig, vecs) = if n <= DENSE_LIMIT {
        let g = a.gram();
        let (vals, vecs) = symmetric_eigen(g.into_iter().flatten().collect(), n);
        (vals.into_iter().take(k).collect::<Vec<_>>(), vecs.into_iter().take(k).collect::<Vec<_>>())
    } else {
        subspace_svd(a, k)
    };
    let right_vectors = vecs
        .into_iter()
        .map(|mut v| {
            let pivot = v
                .iter()
                .copied()
                .fold(0.0f64, |m, x| if x.abs() > m.abs() { x } else { m });
            if pivot < 0.0 {
                v.iter_mut().for_each(|x| *x = -*x);
            }
            v
        })
        .collect();
    TruncatedSvd {
        singular_values: eig.into_iter().map(|l| l.max(0.0).sqrt()).collect(),
        right_vectors,
    }
}

/// Co-occurrence embedding per keyword: its row of `V diag(σ)` truncated to
/// `dims` columns. Columns beyond the numerical rank are zero.
pub fn cooc_embed(tfidf: &TfIdf, dims: usize) -> HashMap<String, Vec<f64>> {
    let a = &tfidf.matrix;
    let limit = a.n_rows.min(a.n_cols);
    if dims > limit {
        log::warn!("co-occurrence dims {dims} exceed matrix rank bound {limit}; padding with zeros");
    }
    let svd = truncated_svd(a, dims.min(limit));
    let top = svd.singular_values.first().copied().unwrap_or(0.0);
    // singular values come from Gram eigenvalues, so their noise floor is sqrt(eps)
    let tol = top * 10.0 * (f64::EPSILON * a.n_rows.max(a.n_cols) as f64).sqrt();
    let rank = svd.singular_values.iter().filter(|&&s| s > tol).count();
    if rank < dims && dims <= limit {
        log::warn!("co-occurrence dims {dims} exceed numerical rank {rank}; padding with zeros");
    }
    tfidf
        .keywords
        .iter()
        .enumerate()
        .map(|(row, kw)| {
            let mut v = vec![0.0; dims];
            for (d, (s, vec)) in svd.singular_values.iter().zip(&svd.right_vectors).enumerate().take(rank) {
                v[d] = vec[row] * s;
            }
            (kw.clone(), v)
        })
        .collect()
}
