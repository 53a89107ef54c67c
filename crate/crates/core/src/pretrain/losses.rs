use rand::seq::index::sample;
use rand_chacha::ChaCha8Rng;

use super::mask::MaskPlan;
use crate::autograd::{Graph, SetBlocks, Var};
use crate::encoder::ContextualOutput;
use crate::error::{Error, Result};

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

pub fn cosine(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::Shape(format!("cosine of lengths {} and {}", a.len(), b.len())));
    }
    let (na, nb) = (norm(a), norm(b));
    if na == 0.0 || nb == 0.0 {
        return Err(Error::Numeric("cosine of a zero-norm vector".into()));
    }
    Ok(a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>() / (na * nb))
}

/// Sum of `exp(cos(x, z))` over every keyword/object pair.
pub fn set_similarity(x: &[Vec<f64>], z: &[Vec<f64>]) -> Result<f64> {
    if x.is_empty() || z.is_empty() {
        return Err(Error::Shape("set similarity needs non-empty sets".into()));
    }
    let mut total = 0.0;
    for a in x {
        for b in z {
            total += cosine(a, b)?.exp();
        }
    }
    Ok(total)
}

/// `-ln(pos / (pos + Σ neg))`.
pub fn vg_term(pos: f64, negs: &[f64]) -> f64 {
    (negs.iter().sum::<f64>() / pos).ln_1p()
}

/// Mean contrastive loss over anchors, negatives pairing anchor `i`'s
/// keywords with poster `j` for each `j` in `negatives[i]`.
pub fn vg_loss(sets: &[(Vec<Vec<f64>>, Vec<Vec<f64>>)], negatives: &[Vec<usize>]) -> Result<f64> {
    if sets.len() < 2 {
        return Err(Error::Invalid("visual grounding needs a batch of at least 2".into()));
    }
    if negatives.len() != sets.len() {
        return Err(Error::Shape("one negative list per anchor is required".into()));
    }
    let mut total = 0.0;
    for (i, (x, z)) in sets.iter().enumerate() {
        let pos = set_similarity(x, z)?;
        let negs = negatives[i]
            .iter()
            .map(|&j| set_similarity(x, &sets[j].1))
            .collect::<Result<Vec<_>>>()?;
        total += vg_term(pos, &negs);
    }
    Ok(total / sets.len() as f64)
}

/// For each of `n` anchors, `n_neg` distinct other indices drawn without
/// replacement.
pub fn sample_negatives(n: usize, n_neg: usize, rng: &mut ChaCha8Rng) -> Result<Vec<Vec<usize>>> {
    if n < 2 {
        return Err(Error::Invalid("visual grounding needs a batch of at least 2".into()));
    }
    if n_neg > n - 1 {
        return Err(Error::Invalid(format!("{n_neg} negatives requested from a batch of {n}")));
    }
    Ok((0..n)
        .map(|i| {
            sample(rng, n - 1, n_neg)
                .into_iter()
                .map(|j| if j >= i { j + 1 } else { j })
                .collect()
        })
        .collect())
}

/// Cross-entropy of the masked slots against the tied token table, or
/// `None` when nothing in the batch was masked.
pub fn mlm_loss(g: &mut Graph, out: &ContextualOutput, plans: &[MaskPlan], token_table: Var, bias: Var) -> Option<Var> {
    let mut rows = Vec::new();
    let mut targets = Vec::new();
    for (b, plan) in plans.iter().enumerate() {
        for m in &plan.masked {
            rows.push(b * out.seq_len + m.slot);
            targets.push(m.original);
        }
    }
    if rows.is_empty() {
        return None;
    }
    let h = g.gather_rows(out.hidden, rows);
    let logits = g.matmul_nt(h, token_table);
    let logits = g.add_bias(logits, bias);
    Some(g.softmax_cross_entropy(logits, targets))
}

/// Graph form of the contrastive loss: rows of `keywords` and `objects`
/// are grouped per movie by `blocks`.
pub fn vg_loss_graph(g: &mut Graph, keywords: Var, objects: Var, blocks: SetBlocks) -> Result<Var> {
    let x = g.l2_normalize_rows(keywords)?;
    let z = g.l2_normalize_rows(objects)?;
    let c = g.matmul_nt(x, z);
    g.set_contrastive(c, blocks)
}
