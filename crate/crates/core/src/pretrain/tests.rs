use std::f64::consts::E;

use proptest::prelude::*;

use super::*;
use crate::autograd::{gradcheck, GradCheck};
use crate::features::{FieldGroup, LayoutConfig, Slot, MASK};

fn layout() -> SlotLayout {
    SlotLayout::new(LayoutConfig::default())
}

/// Movie with the given number of genre, cluster, director, writer and actor tokens.
fn movie_with(counts: [usize; 5]) -> TokenizedMovie {
    let layout = layout();
    let mut slots = vec![Slot::Pad; layout.len()];
    slots[0] = Slot::Token(40);
    slots[3] = Slot::Numeral(7.9);
    let groups = [
        FieldGroup::Genres,
        FieldGroup::Clusters,
        FieldGroup::Directors,
        FieldGroup::Writers,
        FieldGroup::Actors,
    ];
    for (g, &n) in groups.iter().zip(&counts) {
        for (k, s) in layout.name_slots(*g).into_iter().take(n).enumerate() {
            slots[s] = Slot::Token(100 + k as u32);
        }
    }
    TokenizedMovie {
        movie_id: "m".into(),
        vocab_id: "v".into(),
        slots,
        target_log_revenue: None,
    }
}

#[test]
fn one_mask_per_non_empty_group() {
    let m = movie_with([3, 4, 1, 0, 2]);
    let (masked, plan) = apply_mask(&m, &layout(), 7);
    assert_eq!(plan.len(), 4);
    let groups: Vec<_> = plan.masked.iter().map(|p| p.group).collect();
    assert_eq!(
        groups,
        vec![FieldGroup::Genres, FieldGroup::Clusters, FieldGroup::Directors, FieldGroup::Actors]
    );
    let changed: Vec<usize> = (0..m.slots.len()).filter(|&i| m.slots[i] != masked.slots[i]).collect();
    assert_eq!(changed, plan.masked.iter().map(|p| p.slot).collect::<Vec<_>>());
    for p in &plan.masked {
        assert_eq!(masked.slots[p.slot], Slot::Token(MASK));
        assert_eq!(m.slots[p.slot], Slot::Token(p.original));
    }
}

#[test]
fn no_maskable_tokens_means_no_masks() {
    let m = movie_with([0; 5]);
    let (masked, plan) = apply_mask(&m, &layout(), 1);
    assert!(plan.is_empty());
    assert_eq!(masked, m);
}

#[test]
fn masking_is_deterministic_under_seed() {
    let m = movie_with([6, 12, 2, 2, 3]);
    assert_eq!(apply_mask(&m, &layout(), 3), apply_mask(&m, &layout(), 3));
}

#[test]
fn cross_entropy_of_uniform_logits_is_ln_v() {
    let mut params = ParamStore::new();
    let v = 37;
    params.insert("h", Array2::zeros((1, 4)));
    params.insert("table", Array2::from_elem((v, 4), 0.3));
    params.insert("bias", Array2::zeros((1, v)));
    let mut g = Graph::new(&params);
    let out = crate::encoder::ContextualOutput {
        hidden: g.param(params.id("h").unwrap()),
        pooled: g.param(params.id("h").unwrap()),
        mask: vec![true],
        seq_len: 1,
    };
    let plan = MaskPlan {
        masked: vec![MaskedSlot { group: FieldGroup::Genres, slot: 0, original: 5 }],
    };
    let table = g.param(params.id("table").unwrap());
    let bias = g.param(params.id("bias").unwrap());
    let l = mlm_loss(&mut g, &out, &[plan], table, bias).unwrap();
    assert!((g.scalar_f64(l) - (v as f64).ln()).abs() < 1e-6);
    let none = mlm_loss(&mut g, &out, &[MaskPlan::default()], table, bias);
    assert!(none.is_none());
}

#[test]
fn set_similarity_trivial_cases() {
    let x = vec![vec![0.6, 0.8]];
    assert!((set_similarity(&x, &x).unwrap() - E).abs() < 1e-12);
    assert!((set_similarity(&x, &[vec![-0.8, 0.6]]).unwrap() - 1.0).abs() < 1e-12);
    assert!(set_similarity(&x, &[vec![0.0, 0.0]]).is_err());
}

#[test]
fn set_similarity_matches_double_loop() {
    let x = vec![vec![0.3, -1.2, 0.5], vec![2.0, 0.1, -0.4]];
    let z = vec![vec![1.0, 1.0, 0.0], vec![-0.5, 0.2, 0.9], vec![0.0, -3.0, 1.0]];
    let mut oracle = 0.0;
    for a in &x {
        for b in &z {
            let dot: f64 = a.iter().zip(b).map(|(p, q)| p * q).sum();
            let na: f64 = a.iter().map(|p| p * p).sum::<f64>().sqrt();
            let nb: f64 = b.iter().map(|p| p * p).sum::<f64>().sqrt();
            oracle += (dot / na / nb).exp();
        }
    }
    assert!((set_similarity(&x, &z).unwrap() - oracle).abs() < 1e-6);
}

#[test]
fn vg_term_examples() {
    assert!((vg_term(E, &[1.0]) - 0.31326).abs() < 1e-5);
    assert!((vg_term(E, &[1.0]) - -(E / (E + 1.0)).ln()).abs() < 1e-12);
    assert_eq!(vg_term(3.0, &[]), 0.0);
    assert!((vg_term(2.5, &[2.5]) - 2f64.ln()).abs() < 1e-12);
}

fn unit(angle: f64) -> Vec<f64> {
    vec![angle.cos(), angle.sin()]
}

#[test]
fn vg_loss_without_negatives_is_zero_and_batch_of_one_errors() {
    let sets = vec![(vec![unit(0.1)], vec![unit(0.2)]), (vec![unit(1.0)], vec![unit(2.0)])];
    assert_eq!(vg_loss(&sets, &[vec![], vec![]]).unwrap(), 0.0);
    assert!(vg_loss(&sets[..1], &[vec![]]).is_err());
    let mut rng = init_rng(0);
    assert!(sample_negatives(1, 0, &mut rng).is_err());
}

#[test]
fn symmetric_sims_give_ln_two() {
    // every keyword/object pair has the same cosine
    let sets = vec![(vec![unit(0.0)], vec![unit(0.5)]), (vec![unit(1.0)], vec![unit(0.5)])];
    let l = vg_loss(&sets, &[vec![1], vec![0]]).unwrap();
    assert!((l - 2f64.ln()).abs() < 1e-12);
}

#[test]
fn negatives_are_distinct_and_exclude_anchor() {
    let mut rng = init_rng(4);
    let negs = sample_negatives(6, 3, &mut rng).unwrap();
    for (i, n) in negs.iter().enumerate() {
        assert_eq!(n.len(), 3);
        assert!(!n.contains(&i));
        let mut d = n.clone();
        d.sort_unstable();
        d.dedup();
        assert_eq!(d.len(), 3);
    }
    let all = sample_negatives(4, 3, &mut rng).unwrap();
    assert!(all.iter().enumerate().all(|(i, n)| n.len() == 3 && !n.contains(&i)));
}

#[test]
fn graph_loss_matches_scalar_loss() {
    let mut rng = init_rng(8);
    let mut params = ParamStore::new();
    let x = params.insert_normal("x", (5, 3), 1.0, &mut rng);
    let z = params.insert_normal("z", (6, 3), 1.0, &mut rng);
    let blocks = SetBlocks {
        x_rows: vec![0..2, 2..4, 4..5],
        z_cols: vec![0..2, 2..3, 3..6],
        negatives: vec![vec![1, 2], vec![2], vec![0, 1]],
    };
    let rows = |id, r: std::ops::Range<usize>| -> Vec<Vec<f64>> {
        r.map(|i| params.value(id).row(i).iter().map(|&v| v as f64).collect()).collect()
    };
    let sets: Vec<_> = (0..3)
        .map(|i| (rows(x, blocks.x_rows[i].clone()), rows(z, blocks.z_cols[i].clone())))
        .collect();
    let oracle = vg_loss(&sets, &blocks.negatives).unwrap();
    let mut g = Graph::new(&params);
    let (xv, zv) = (g.param(x), g.param(z));
    let l = vg_loss_graph(&mut g, xv, zv, blocks).unwrap();
    assert!((g.scalar_f64(l) - oracle).abs() < 1e-6);
}

#[test]
fn vg_gradient_matches_finite_differences() {
    let mut rng = init_rng(21);
    let mut params = ParamStore::new();
    params.insert_normal("x", (6, 4), 1.0, &mut rng);
    params.insert_normal("z", (6, 4), 1.0, &mut rng);
    let blocks = SetBlocks {
        x_rows: vec![0..2, 2..4, 4..6],
        z_cols: vec![0..2, 2..4, 4..6],
        negatives: vec![vec![1, 2], vec![0, 2], vec![0, 1]],
    };
    let report = gradcheck(
        &params,
        |g| {
            let x = g.param(g.params().id("x")?);
            let z = g.param(g.params().id("z")?);
            vg_loss_graph(g, x, z, blocks.clone())
        },
        &GradCheck { per_tensor: 24, ..GradCheck::default() },
        &mut init_rng(2),
    )
    .unwrap();
    let failures = report.failures(1e-3, 1e-5);
    assert!(failures.is_empty(), "{failures:?}");
}

#[test]
fn warmup_ramps_then_holds() {
    assert_eq!(warmup_lr(0, 1000, 1.0, 0.01), 0.1);
    assert_eq!(warmup_lr(9, 1000, 1.0, 0.01), 1.0);
    assert_eq!(warmup_lr(500, 1000, 1.0, 0.01), 1.0);
    assert_eq!(warmup_lr(0, 10, 2.0, 0.0), 2.0);
}

#[test]
fn config_rejects_zero_weights() {
    let cfg = PretrainConfig { mlm_weight: 0.0, vg_weight: 0.0, ..Default::default() };
    assert!(cfg.validate().is_err());
}

fn vec2() -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-5.0f64..5.0, 3).prop_filter("non-zero", |v| v.iter().any(|x| x.abs() > 1e-3))
}

proptest! {
    #[test]
    fn similarity_respects_bounds(x in prop::collection::vec(vec2(), 1..4), z in prop::collection::vec(vec2(), 1..5)) {
        let s = set_similarity(&x, &z).unwrap();
        let km = (x.len() * z.len()) as f64;
        prop_assert!(s >= km / E - 1e-9 && s <= km * E + 1e-9);
    }

    #[test]
    fn similarity_is_scale_invariant(x in prop::collection::vec(vec2(), 1..4), z in prop::collection::vec(vec2(), 1..4), k in 0.01f64..100.0) {
        let s = set_similarity(&x, &z).unwrap();
        let mut scaled = x.clone();
        scaled[0].iter_mut().for_each(|v| *v *= k);
        prop_assert!((set_similarity(&scaled, &z).unwrap() - s).abs() < 1e-9 * s);
    }

    #[test]
    fn vg_term_is_positive_and_monotone(pos in 0.1f64..50.0, negs in prop::collection::vec(0.1f64..50.0, 1..5), d in 0.01f64..5.0) {
        let t = vg_term(pos, &negs);
        prop_assert!(t > 0.0 && t.is_finite());
        prop_assert!((t - (1.0 + negs.iter().sum::<f64>() / pos).ln()).abs() < 1e-12);
        prop_assert!(vg_term(pos + d, &negs) < t);
        let mut more = negs.clone();
        more[0] += d;
        prop_assert!(vg_term(pos, &more) > t);
    }
}
