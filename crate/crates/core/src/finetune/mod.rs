//! Revenue regression on top of the pretrained encoder.

use std::path::Path;

use rand::seq::SliceRandom;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::autograd::{huber_value, init_rng, AdamW, AdamWConfig, Graph, ParamStore};
use crate::encoder::{Encoder, Mode, FROZEN_PREFIXES};
use crate::error::{Error, Result};
use crate::features::TokenizedMovie;
use crate::io::{ModelCheckpoint, Stage};
use crate::pretrain::warmup_lr;

pub const HEAD_WEIGHT: &str = "head.weight";
pub const HEAD_BIAS: &str = "head.bias";

const EVAL_CHUNK: usize = 256;

/// Smooth L1 between a target and a prediction.
pub fn huber(y: f64, y_hat: f64) -> f64 {
    huber_value(y - y_hat)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FinetuneConfig {
    pub lr_grid: Vec<f32>,
    pub batch_grid: Vec<usize>,
    pub epochs: usize,
    /// Stop after this many epochs without a validation improvement.
    pub patience: usize,
    /// Optional cap on optimizer steps per grid cell.
    pub max_steps: Option<u64>,
    pub warmup_frac: f64,
    pub optimizer: AdamWConfig,
    pub seed: u64,
}

impl Default for FinetuneConfig {
    fn default() -> Self {
        Self {
            lr_grid: vec![1e-3, 3e-4, 1e-4],
            batch_grid: vec![328, 512, 1024],
            epochs: 100,
            patience: 5,
            max_steps: None,
            warmup_frac: 0.01,
            optimizer: AdamWConfig::default(),
            seed: 0,
        }
    }
}

impl FinetuneConfig {
    pub fn validate(&self) -> Result<()> {
        if self.lr_grid.is_empty() || self.batch_grid.is_empty() {
            return Err(Error::Invalid("finetuning grids must be non-empty".into()));
        }
        if self.lr_grid.iter().any(|&lr| !(lr > 0.0)) || self.batch_grid.contains(&0) {
            return Err(Error::Invalid("grid learning rates and batch sizes must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridCell {
    pub lr: f32,
    pub batch: usize,
    pub val_huber: f64,
    pub test_huber: Option<f64>,
    pub best_epoch: usize,
    pub epochs_run: usize,
    pub steps: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridReport {
    pub cells: Vec<GridCell>,
    pub best: usize,
}

impl GridReport {
    pub fn best_cell(&self) -> &GridCell {
        &self.cells[self.best]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub movie_id: String,
    pub y_hat_log10: f64,
    pub y_hat_usd: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Residual {
    pub movie_id: String,
    pub y: f64,
    pub y_hat: f64,
    pub residual: f64,
    pub huber: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub mean_huber: f64,
    pub residuals: Vec<Residual>,
}

/// Outcome of training a single learning-rate/batch combination.
#[derive(Debug, Clone)]
pub struct CellRun {
    pub checkpoint: ModelCheckpoint,
    pub cell: GridCell,
    /// Mean Huber of each training batch, in step order.
    pub train_losses: Vec<f64>,
}

/// Add a fresh regression head. The bias starts at `bias`.
pub fn add_head(params: &mut ParamStore, d_model: usize, bias: f32, seed: u64) -> Result<()> {
    if params.id(HEAD_WEIGHT).is_ok() {
        return Err(Error::Invalid("checkpoint already has a regression head".into()));
    }
    let mut rng = init_rng(seed);
    rng.set_stream(7);
    params.insert_normal(HEAD_WEIGHT, (d_model, 1), 0.02, &mut rng);
    params.insert_const(HEAD_BIAS, (1, 1), bias);
    Ok(())
}

fn targets(movies: &[&TokenizedMovie]) -> Result<Vec<f32>> {
    movies
        .iter()
        .map(|m| {
            m.target_log_revenue
                .map(|y| y as f32)
                .ok_or_else(|| Error::Data(format!("movie {} has no revenue target", m.movie_id)))
        })
        .collect()
}

fn check_vocab(ckpt: &ModelCheckpoint, movies: &[&TokenizedMovie]) -> Result<()> {
    match movies.iter().find(|m| m.vocab_id != ckpt.config.vocab_id) {
        Some(m) => Err(Error::Data(format!(
            "movie {} was tokenized with vocabulary {}, checkpoint uses {}",
            m.movie_id, m.vocab_id, ckpt.config.vocab_id
        ))),
        None => Ok(()),
    }
}

/// Deterministic `log10` revenue predictions.
pub fn predict(ckpt: &ModelCheckpoint, movies: &[&TokenizedMovie]) -> Result<Vec<Prediction>> {
    check_vocab(ckpt, movies)?;
    let encoder = Encoder::attach(ckpt.config.encoder.clone(), &ckpt.params)?;
    let w = ckpt.params.id(HEAD_WEIGHT)?;
    let b = ckpt.params.id(HEAD_BIAS)?;
    let mut out = Vec::with_capacity(movies.len());
    for chunk in movies.chunks(EVAL_CHUNK) {
        let mut g = Graph::new(&ckpt.params);
        let enc = encoder.forward(&mut g, chunk, Mode::Eval, None)?;
        let (wv, bv) = (g.param(w), g.param(b));
        let y = g.linear(enc.pooled, wv, bv);
        for (m, v) in chunk.iter().zip(g.value(y).column(0)) {
            let y_hat = *v as f64;
            if !y_hat.is_finite() {
                return Err(Error::Numeric(format!("non-finite prediction for {}", m.movie_id)));
            }
            out.push(Prediction {
                movie_id: m.movie_id.clone(),
                y_hat_log10: y_hat,
                y_hat_usd: 10f64.powf(y_hat),
            });
        }
    }
    Ok(out)
}

/// Mean Huber over `movies`, which must all carry targets.
pub fn evaluate(ckpt: &ModelCheckpoint, movies: &[&TokenizedMovie]) -> Result<Evaluation> {
    if movies.is_empty() {
        return Err(Error::Data("cannot evaluate an empty split".into()));
    }
    let ys = targets(movies)?;
    let preds = predict(ckpt, movies)?;
    Ok(score(preds.iter().zip(&ys).map(|(p, &y)| (p.movie_id.clone(), y as f64, p.y_hat_log10))))
}

/// Huber summary of `(movie_id, y, y_hat)` triples.
pub fn score(rows: impl IntoIterator<Item = (String, f64, f64)>) -> Evaluation {
    let residuals: Vec<Residual> = rows
        .into_iter()
        .map(|(movie_id, y, y_hat)| Residual {
            movie_id,
            y,
            y_hat,
            residual: y - y_hat,
            huber: huber(y, y_hat),
        })
        .collect();
    let mean_huber = residuals.iter().map(|r| r.huber).sum::<f64>() / residuals.len().max(1) as f64;
    Evaluation { mean_huber, residuals }
}

fn mean_target(movies: &[&TokenizedMovie]) -> Result<f32> {
    let ys = targets(movies)?;
    Ok((ys.iter().map(|&y| y as f64).sum::<f64>() / ys.len() as f64) as f32)
}

/// Checkpoint with a new head and frozen embedding tables, ready for training.
pub fn prepare(base: &ModelCheckpoint, train: &[&TokenizedMovie], seed: u64) -> Result<ModelCheckpoint> {
    if train.is_empty() {
        return Err(Error::Data("training split is empty".into()));
    }
    let mut ckpt = base.clone();
    add_head(&mut ckpt.params, ckpt.config.encoder.d_model, mean_target(train)?, seed)?;
    Ok(ckpt)
}

fn freeze(params: &mut ParamStore) {
    for p in FROZEN_PREFIXES {
        params.set_trainable_prefix(p, false);
    }
}

/// Train one grid cell from `start` (which must already carry a head).
/// With a validation split, the parameters of the best validation epoch
/// are kept and training stops after `patience` epochs without improvement.
pub fn train_cell(
    start: &ModelCheckpoint,
    train: &[&TokenizedMovie],
    valid: Option<&[&TokenizedMovie]>,
    lr: f32,
    batch: usize,
    cfg: &FinetuneConfig,
) -> Result<CellRun> {
    if train.is_empty() {
        return Err(Error::Data("training split is empty".into()));
    }
    check_vocab(start, train)?;
    let ys = targets(train)?;
    let mut ckpt = start.clone();
    freeze(&mut ckpt.params);
    let encoder = Encoder::attach(ckpt.config.encoder.clone(), &ckpt.params)?;
    let w = ckpt.params.id(HEAD_WEIGHT)?;
    let b = ckpt.params.id(HEAD_BIAS)?;
    let mut rng_order: ChaCha8Rng = init_rng(cfg.seed);
    rng_order.set_stream(8);
    let mut rng_drop: ChaCha8Rng = init_rng(cfg.seed);
    rng_drop.set_stream(9);
    let steps_per_epoch = train.len().div_ceil(batch) as u64;
    let planned = cfg
        .max_steps
        .map_or(steps_per_epoch * cfg.epochs as u64, |m| m.min(steps_per_epoch * cfg.epochs as u64));
    let mut opt = AdamW::new(cfg.optimizer.clone());
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut train_losses = Vec::new();
    let mut best: Option<(f64, usize, ParamStore)> = None;
    let mut since_best = 0;
    let mut epochs_run = 0;
    let mut step = 0u64;
    'epochs: for epoch in 0..cfg.epochs {
        if step >= planned {
            break;
        }
        order.shuffle(&mut rng_order);
        for idx in order.chunks(batch) {
            if step >= planned {
                break;
            }
            let movies: Vec<&TokenizedMovie> = idx.iter().map(|&i| train[i]).collect();
            let y: Vec<f32> = idx.iter().map(|&i| ys[i]).collect();
            let mut g = Graph::new(&ckpt.params);
            let enc = encoder.forward(&mut g, &movies, Mode::Train, Some(&mut rng_drop))?;
            let (wv, bv) = (g.param(w), g.param(b));
            let pred = g.linear(enc.pooled, wv, bv);
            let loss = g.huber(pred, y);
            let value = g.scalar_f64(loss);
            if !value.is_finite() {
                let ids: Vec<&str> = movies.iter().map(|m| m.movie_id.as_str()).collect();
                return Err(Error::Numeric(format!(
                    "non-finite finetuning loss at step {step}; batch movie ids: {}",
                    ids.join(",")
                )));
            }
            let grads = g.backward(loss);
            drop(g);
            opt.step(&mut ckpt.params, &grads, warmup_lr(step, planned, lr, cfg.warmup_frac));
            train_losses.push(value);
            step += 1;
        }
        epochs_run = epoch + 1;
        if let Some(valid) = valid {
            let v = evaluate(&ckpt, valid)?.mean_huber;
            if best.as_ref().is_none_or(|(bv, _, _)| v < *bv) {
                best = Some((v, epoch + 1, ckpt.params.clone()));
                since_best = 0;
            } else {
                since_best += 1;
                if since_best >= cfg.patience {
                    break 'epochs;
                }
            }
        }
    }
    let (val_huber, best_epoch) = match best {
        Some((v, e, params)) => {
            ckpt.params = params;
            (v, e)
        }
        None => match valid {
            Some(valid) => (evaluate(&ckpt, valid)?.mean_huber, 0),
            None => (f64::NAN, epochs_run),
        },
    };
    for p in FROZEN_PREFIXES {
        ckpt.params.set_trainable_prefix(p, true);
    }
    ckpt.config.stage = Stage::Finetune;
    Ok(CellRun {
        checkpoint: ckpt,
        cell: GridCell {
            lr,
            batch,
            val_huber,
            test_huber: None,
            best_epoch,
            epochs_run,
            steps: step,
        },
        train_losses,
    })
}

/// Grid search over learning rate and batch size. Every cell starts from
/// the same head initialisation; the cell with the lowest validation Huber
/// (first in grid order on ties) is returned.
pub fn finetune(
    base: &ModelCheckpoint,
    train: &[&TokenizedMovie],
    valid: &[&TokenizedMovie],
    test: Option<&[&TokenizedMovie]>,
    cfg: &FinetuneConfig,
) -> Result<(ModelCheckpoint, GridReport)> {
    cfg.validate()?;
    if valid.is_empty() {
        return Err(Error::Data("validation split is empty".into()));
    }
    let start = prepare(base, train, cfg.seed)?;
    let grid: Vec<(f32, usize)> = cfg
        .lr_grid
        .iter()
        .flat_map(|&lr| cfg.batch_grid.iter().map(move |&b| (lr, b)))
        .collect();
    let runs = grid
        .par_iter()
        .map(|&(lr, batch)| {
            let mut run = train_cell(&start, train, Some(valid), lr, batch, cfg)?;
            if let Some(test) = test.filter(|t| !t.is_empty()) {
                run.cell.test_huber = Some(evaluate(&run.checkpoint, test)?.mean_huber);
            }
            log::info!("lr {lr} batch {batch}: valid Huber {:.5}", run.cell.val_huber);
            Ok(run)
        })
        .collect::<Result<Vec<_>>>()?;
    let best = runs
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.cell.val_huber.total_cmp(&b.1.cell.val_huber).then(a.0.cmp(&b.0)))
        .map(|(i, _)| i)
        .expect("grid is non-empty");
    let cells = runs.iter().map(|r| r.cell.clone()).collect();
    let checkpoint = runs.into_iter().nth(best).expect("index in range").checkpoint;
    Ok((checkpoint, GridReport { cells, best }))
}

pub fn write_predictions(path: &Path, preds: &[Prediction]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| Error::Data(format!("{}: {e}", path.display())))?;
    for p in preds {
        w.serialize(p)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_predictions(path: &Path) -> Result<Vec<Prediction>> {
    let mut r = csv::Reader::from_path(path).map_err(|e| Error::Data(format!("{}: {e}", path.display())))?;
    Ok(r.deserialize().collect::<std::result::Result<_, _>>()?)
}

pub fn write_residuals(path: &Path, eval: &Evaluation) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| Error::Data(format!("{}: {e}", path.display())))?;
    for r in &eval.residuals {
        w.serialize(r)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}
