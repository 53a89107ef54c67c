use std::collections::BTreeMap;

use super::*;
use crate::autograd::{gradcheck, GradCheck};
use crate::features::TokenGroup;

fn vocab() -> Vocabulary {
    let mut tables: BTreeMap<TokenGroup, Vec<String>> = TokenGroup::ALL
        .iter()
        .map(|&g| (g, vec![format!("{g:?}-a"), format!("{g:?}-b")]))
        .collect();
    tables.insert(TokenGroup::CrewNames, vec!["Gary Ross".into(), "Billy Ray".into()]);
    Vocabulary::from_tables(tables).unwrap()
}

fn small() -> EncoderConfig {
    EncoderConfig {
        n_layers: 2,
        d_model: 8,
        d_ff: 16,
        n_heads: 2,
        max_slots: 6,
        dropout: 0.0,
        seed: 0,
        ..EncoderConfig::default()
    }
}

fn movie(slots: Vec<Slot>) -> TokenizedMovie {
    TokenizedMovie {
        movie_id: "m".into(),
        vocab_id: String::new(),
        slots,
        target_log_revenue: None,
    }
}

fn sample_slots() -> Vec<Slot> {
    vec![
        Slot::Token(9),
        Slot::Numeral(7.5),
        Slot::Pad,
        Slot::Token(12),
        Slot::Pad,
        Slot::Numeral(-0.3),
    ]
}

fn eval(enc: &Encoder, store: &ParamStore, inputs: &[EncoderInput]) -> (Tensor, Tensor) {
    let mut g = Graph::new(store);
    let out = enc.forward_inputs(&mut g, inputs, Mode::Eval, None).unwrap();
    (g.value(out.hidden).clone(), g.value(out.pooled).clone())
}

#[test]
fn same_seed_gives_identical_states() {
    let v = vocab();
    let mut a = ParamStore::new();
    let mut b = ParamStore::new();
    Encoder::init_params(small(), &v, Init::Random, &mut a).unwrap();
    Encoder::init_params(small(), &v, Init::Random, &mut b).unwrap();
    assert_eq!(a, b);
}

#[test]
fn all_pad_input_is_rejected() {
    let v = vocab();
    let mut store = ParamStore::new();
    let enc = Encoder::init_params(small(), &v, Init::Random, &mut store).unwrap();
    let m = movie(vec![Slot::Pad; 6]);
    let mut g = Graph::new(&store);
    assert!(matches!(enc.forward(&mut g, &[&m], Mode::Eval, None), Err(Error::Shape(_))));
}

#[test]
fn too_many_slots_is_rejected() {
    let v = vocab();
    let mut store = ParamStore::new();
    let enc = Encoder::init_params(small(), &v, Init::Random, &mut store).unwrap();
    let m = movie(vec![Slot::Token(9); 7]);
    let mut g = Graph::new(&store);
    assert!(enc.forward(&mut g, &[&m], Mode::Eval, None).is_err());
}

#[test]
fn single_slot_pooled_equals_its_output() {
    let v = vocab();
    let mut store = ParamStore::new();
    let enc = Encoder::init_params(small(), &v, Init::Random, &mut store).unwrap();
    let mut slots = vec![Slot::Pad; 6];
    slots[3] = Slot::Token(10);
    let m = movie(slots);
    let mask = m.mask();
    let (hidden, pooled) = eval(&enc, &store, &[EncoderInput { slots: &m.slots, mask: &mask }]);
    assert_eq!(pooled.row(0), hidden.row(3));
}

#[test]
fn masked_slot_content_never_changes_outputs() {
    let v = vocab();
    let mut store = ParamStore::new();
    let enc = Encoder::init_params(small(), &v, Init::Random, &mut store).unwrap();
    let a = sample_slots();
    let mut b = a.clone();
    b[2] = Slot::Token(20);
    b[4] = Slot::Numeral(3.0);
    let mask = a.iter().map(|s| !s.is_pad()).collect::<Vec<_>>();
    let out_a = eval(&enc, &store, &[EncoderInput { slots: &a, mask: &mask }]);
    let out_b = eval(&enc, &store, &[EncoderInput { slots: &b, mask: &mask }]);
    assert_eq!(out_a, out_b);
}

#[test]
fn pooled_is_mean_of_unmasked_rows() {
    let v = vocab();
    let mut store = ParamStore::new();
    let enc = Encoder::init_params(small(), &v, Init::Random, &mut store).unwrap();
    let a = movie(sample_slots());
    let mut b_slots = sample_slots();
    b_slots[0] = Slot::Pad;
    let b = movie(b_slots);
    let mut g = Graph::new(&store);
    let out = enc.forward(&mut g, &[&a, &b], Mode::Eval, None).unwrap();
    let hidden = g.value(out.hidden);
    let pooled = g.value(out.pooled);
    for (seq, m) in [&a, &b].iter().enumerate() {
        let live: Vec<usize> = (0..6).filter(|&s| !m.slots[s].is_pad()).collect();
        for c in 0..8 {
            let mean = live.iter().map(|&s| hidden[[seq * 6 + s, c]] as f64).sum::<f64>() / live.len() as f64;
            let got = pooled[[seq, c]] as f64;
            assert!((got - mean).abs() <= 1e-6 * mean.abs().max(1.0));
        }
    }
}

#[test]
fn batch_and_single_forward_agree() {
    let v = vocab();
    let mut store = ParamStore::new();
    let enc = Encoder::init_params(small(), &v, Init::Random, &mut store).unwrap();
    let a = movie(sample_slots());
    let mut b_slots = sample_slots();
    b_slots[1] = Slot::Numeral(2.0);
    let b = movie(b_slots);
    let mut g = Graph::new(&store);
    let both = enc.forward(&mut g, &[&a, &b], Mode::Eval, None).unwrap();
    let both = g.value(both.pooled).clone();
    for (i, m) in [&a, &b].iter().enumerate() {
        let mut g = Graph::new(&store);
        let one = enc.forward(&mut g, &[m], Mode::Eval, None).unwrap();
        for (x, y) in g.value(one.pooled).row(0).iter().zip(both.row(i)) {
            assert!((x - y).abs() < 1e-6);
        }
    }
}

#[test]
fn train_mode_dropout_is_seeded() {
    let v = vocab();
    let cfg = EncoderConfig { dropout: 0.3, ..small() };
    let mut store = ParamStore::new();
    let enc = Encoder::init_params(cfg, &v, Init::Random, &mut store).unwrap();
    let m = movie(sample_slots());
    let run = |seed| {
        let mut g = Graph::new(&store);
        let mut rng = init_rng(seed);
        let out = enc.forward(&mut g, &[&m], Mode::Train, Some(&mut rng)).unwrap();
        g.value(out.pooled).clone()
    };
    assert_eq!(run(1), run(1));
    assert_ne!(run(1), run(2));
}

#[test]
fn empty_import_equals_random_init() {
    let v = vocab();
    let lexical = LexicalVectors::new(8);
    let mut a = ParamStore::new();
    let mut b = ParamStore::new();
    Encoder::init_params(small(), &v, Init::Random, &mut a).unwrap();
    Encoder::init_params(small(), &v, Init::Imported(&lexical), &mut b).unwrap();
    assert_eq!(a, b);
}

#[test]
fn multi_word_names_are_averaged() {
    let v = vocab();
    let mut lexical = LexicalVectors::new(8);
    let u: Vec<f32> = (0..8).map(|i| i as f32).collect();
    let w: Vec<f32> = (0..8).map(|i| 10.0 - 3.0 * i as f32).collect();
    lexical.insert("Gary", u.clone()).unwrap();
    lexical.insert("Ross", w.clone()).unwrap();
    let mut store = ParamStore::new();
    let enc = Encoder::init_params(small(), &v, Init::Imported(&lexical), &mut store).unwrap();
    let id = v.id(TokenGroup::CrewNames, "Gary Ross") as usize;
    let row = store.value(enc.token_table()).row(id).to_vec();
    let expected: Vec<f32> = u.iter().zip(&w).map(|(a, b)| (a + b) / 2.0).collect();
    assert_eq!(row, expected);
}

#[test]
fn import_width_mismatch_needs_projection() {
    let v = vocab();
    let mut lexical = LexicalVectors::new(5);
    lexical.insert("Gary", vec![1.0; 5]).unwrap();
    let mut store = ParamStore::new();
    let err = Encoder::init_params(small(), &v, Init::Imported(&lexical), &mut store).unwrap_err();
    assert!(matches!(err, Error::Invalid(_)));
    let cfg = EncoderConfig { import_projection: true, ..small() };
    let mut store = ParamStore::new();
    assert!(Encoder::init_params(cfg, &v, Init::Imported(&lexical), &mut store).is_ok());
}

#[test]
fn attach_resolves_existing_parameters() {
    let v = vocab();
    let mut store = ParamStore::new();
    let enc = Encoder::init_params(small(), &v, Init::Random, &mut store).unwrap();
    let again = Encoder::attach(small(), &store).unwrap();
    let m = movie(sample_slots());
    let mask = m.mask();
    let input = [EncoderInput { slots: &m.slots, mask: &mask }];
    assert_eq!(eval(&enc, &store, &input), eval(&again, &store, &input));
}

#[test]
fn pooled_sum_gradients_match_finite_differences() {
    let v = vocab();
    let mut store = ParamStore::new();
    let enc = Encoder::init_params(small(), &v, Init::Random, &mut store).unwrap();
    // move away from the symmetric initialisation so every tensor matters
    let mut rng = init_rng(5);
    let normal = Normal::new(0.0f32, 0.4).unwrap();
    let ids: Vec<_> = store.iter().map(|(id, _)| id).collect();
    for id in ids {
        store.get_mut(id).value.mapv_inplace(|x| x + normal.sample(&mut rng));
    }
    let mut slots = vec![Slot::Pad; 6];
    slots[0] = Slot::Token(9);
    slots[4] = Slot::Numeral(1.5);
    let m = movie(slots);
    let cfg = GradCheck { per_tensor: 6, ..GradCheck::default() };
    let report = gradcheck(
        &store,
        |g| {
            let out = enc.forward(g, &[&m], Mode::Eval, None)?;
            Ok(g.sum(out.pooled))
        },
        &cfg,
        &mut init_rng(9),
    )
    .unwrap();
    assert!(report.coords.len() >= 100, "{}", report.coords.len());
    let failures = report.failures(1e-3, 1e-4);
    assert!(failures.is_empty(), "{failures:?}");
}
