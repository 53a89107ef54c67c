mod common;

use boxoffice_core::encoder::{POSITION_EMBEDDING, TOKEN_EMBEDDING};
use boxoffice_core::finetune::{self, HEAD_BIAS, HEAD_WEIGHT};
use boxoffice_core::io::{tensor_bytes, Stage};
use boxoffice_core::pretrain::{init_checkpoint, pretrain_loop};
use boxoffice_core::{ModelCheckpoint, PretrainConfig, Split, TokenizedMovie};
use common::{desk, desk_config, Desk};

fn small(seed: u64) -> Desk {
    let mut cfg = desk_config(seed);
    cfg.synth.n_movies = 150;
    cfg.encoder.n_layers = 1;
    cfg.pretrain.steps = 10;
    cfg.finetune.epochs = 3;
    desk(cfg)
}

fn init(d: &Desk) -> ModelCheckpoint {
    init_checkpoint(&d.prepared.context, d.cfg.encoder.clone(), None, Some(d.cfg.synth.poster_object_dim)).unwrap()
}

fn param_bytes(ckpt: &ModelCheckpoint) -> Vec<(String, Vec<u8>)> {
    ckpt.params.iter().map(|(_, p)| (p.name.clone(), tensor_bytes(&p.value))).collect()
}

#[test]
fn zero_vg_weight_reproduces_the_mlm_only_run() {
    let d = small(1);
    let train = d.prepared.owned(Split::Train);
    let off = PretrainConfig { vg_weight: 0.0, ..d.cfg.pretrain.clone() };
    let with_posters = pretrain_loop(init(&d), &train, &d.corpus.posters, &off, None).unwrap();
    let without = pretrain_loop(init(&d), &train, &[], &d.cfg.pretrain, None).unwrap();
    assert_eq!(param_bytes(&with_posters.checkpoint), param_bytes(&without.checkpoint));
    let mlm = |rows: &[boxoffice_core::pretrain::MetricsRow]| rows.iter().map(|r| r.loss_mlm).collect::<Vec<_>>();
    assert_eq!(mlm(&with_posters.metrics), mlm(&without.metrics));
    assert_eq!(with_posters.n_vg_movies, 0);
}

#[test]
fn zero_steps_leave_the_initial_state() {
    let d = small(2);
    let start = init(&d);
    let cfg = PretrainConfig { steps: 0, ..d.cfg.pretrain.clone() };
    let out = pretrain_loop(start.clone(), &d.prepared.owned(Split::Train), &d.corpus.posters, &cfg, None).unwrap();
    assert!(out.metrics.is_empty());
    assert_eq!(param_bytes(&out.checkpoint), param_bytes(&start));
    assert_eq!(out.checkpoint.config.stage, Stage::Init);
}

#[test]
fn masked_prediction_loss_halves_within_300_steps() {
    let mut cfg = desk_config(0);
    cfg.synth = boxoffice_core::SyntheticSpec { seed: 0, ..Default::default() };
    cfg.cluster.n_clusters = cfg.synth.n_clusters_true;
    cfg.pretrain.lr = 3e-3;
    let d = desk(cfg);
    let off = PretrainConfig { vg_weight: 0.0, ..d.cfg.pretrain.clone() };
    let out = pretrain_loop(init(&d), &d.prepared.owned(Split::Train), &[], &off, None).unwrap();
    let losses: Vec<f64> = out.metrics.iter().map(|r| r.loss_mlm.unwrap()).collect();
    assert_eq!(losses.len(), 300);
    let tail = losses[290..].iter().sum::<f64>() / 10.0;
    assert!(tail <= 0.5 * losses[0], "first {} last ten {tail}", losses[0]);
}

#[test]
fn zero_epochs_leave_a_fresh_head_and_untouched_embeddings() {
    let d = small(3);
    let base = init(&d);
    let train = d.prepared.labelled(Split::Train);
    let cfg = boxoffice_core::FinetuneConfig { epochs: 0, ..d.cfg.finetune.clone() };
    let start = finetune::prepare(&base, &train, cfg.seed).unwrap();
    let run = finetune::train_cell(&start, &train, None, 1e-3, 32, &cfg).unwrap();
    assert_eq!(run.cell.steps, 0);
    for name in [TOKEN_EMBEDDING, POSITION_EMBEDDING, HEAD_WEIGHT, HEAD_BIAS] {
        let id = start.params.id(name).unwrap();
        assert_eq!(run.checkpoint.params.value(id), start.params.value(id), "{name}");
    }
    let mean = train.iter().map(|m| m.target_log_revenue.unwrap()).sum::<f64>() / train.len() as f64;
    let bias = start.params.value(start.params.id(HEAD_BIAS).unwrap())[[0, 0]] as f64;
    assert!((bias - mean).abs() < 1e-4);
}

#[test]
fn grid_search_is_deterministic_and_reports_every_cell() {
    let d = small(4);
    let p = &d.prepared;
    let cfg = boxoffice_core::FinetuneConfig { lr_grid: vec![1e-3, 3e-4], batch_grid: vec![16, 32], ..d.cfg.finetune.clone() };
    let run = || finetune::finetune(&init(&d), &p.labelled(Split::Train), &p.labelled(Split::Valid), None, &cfg).unwrap();
    let (a, ra) = run();
    let (b, rb) = run();
    assert_eq!(ra, rb);
    assert_eq!(ra.cells.len(), 4);
    let best = ra.best_cell().val_huber;
    assert!(ra.cells.iter().all(|c| c.val_huber >= best));
    assert_eq!(a.to_bytes().unwrap(), b.to_bytes().unwrap());
    assert_eq!(a.config.stage, Stage::Finetune);
}

#[test]
fn batched_and_single_predictions_agree() {
    let d = small(5);
    let p = &d.prepared;
    let (ckpt, _) = finetune::finetune(&init(&d), &p.labelled(Split::Train), &p.labelled(Split::Valid), None, &d.cfg.finetune).unwrap();
    let movies: Vec<&TokenizedMovie> = p.movies.iter().collect();
    let batched = finetune::predict(&ckpt, &movies).unwrap();
    for (m, b) in movies.iter().zip(&batched) {
        let single = finetune::predict(&ckpt, &[*m]).unwrap();
        assert!((single[0].y_hat_log10 - b.y_hat_log10).abs() < 1e-6, "{}", m.movie_id);
    }
    let twice = finetune::predict(&ckpt, &[movies[0], movies[0]]).unwrap();
    assert_eq!(twice[0], twice[1]);

    let layout = &p.context.layout;
    let mut bare = movies[0].clone();
    for (slot, _) in bare.cluster_tokens(layout) {
        bare.slots[slot] = boxoffice_core::features::Slot::Pad;
    }
    assert!(finetune::predict(&ckpt, &[&bare]).unwrap()[0].y_hat_log10.is_finite());
}

#[test]
fn finetuning_needs_a_training_split() {
    let d = small(6);
    let valid = d.prepared.labelled(Split::Valid);
    assert!(finetune::finetune(&init(&d), &[], &valid, None, &d.cfg.finetune).is_err());
    let start = finetune::prepare(&init(&d), &valid, 6).unwrap();
    assert!(finetune::evaluate(&start, &[]).is_err());
}
