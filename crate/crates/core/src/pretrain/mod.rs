//! Self-supervised pretraining: masked field prediction and visual grounding
//! of contextual keyword vectors in poster objects.

mod losses;
mod mask;

use std::collections::HashMap;
use std::fs::File;
use std::path::{Path, PathBuf};

use ndarray::Array2;
use rand::seq::index::sample;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub use losses::{cosine, mlm_loss, sample_negatives, set_similarity, vg_loss, vg_loss_graph, vg_term};
pub use mask::{apply_mask, apply_mask_with, maskable_slots, MaskPlan, MaskedSlot};

use crate::autograd::{init_rng, AdamW, AdamWConfig, Graph, ParamStore, SetBlocks, Tensor, Var};
use crate::clustering::LexicalVectors;
use crate::encoder::{Encoder, EncoderConfig, Init, Mode};
use crate::error::{Error, Result};
use crate::features::{FeatureContext, SlotLayout, TokenizedMovie};
use crate::io::{CheckpointConfig, ModelCheckpoint, PosterObjectSet, Stage, CHECKPOINT_FORMAT};

pub const MLM_BIAS: &str = "mlm.bias";
pub const VG_PROJ_WEIGHT: &str = "vg.proj.weight";
pub const VG_PROJ_BIAS: &str = "vg.proj.bias";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PretrainConfig {
    pub mlm_weight: f32,
    pub vg_weight: f32,
    pub batch_mlm: usize,
    pub batch_vg: usize,
    pub lr: f32,
    pub optimizer: AdamWConfig,
    pub steps: u64,
    /// Fraction of steps spent ramping the learning rate up linearly.
    pub warmup_frac: f64,
    pub seed: u64,
    /// Negatives per anchor; `None` uses every other movie in the batch.
    pub n_neg: Option<usize>,
    pub max_keywords: usize,
    pub max_objects: usize,
    /// Write an intermediate checkpoint every this many steps; 0 disables.
    pub checkpoint_interval: u64,
}

impl Default for PretrainConfig {
    fn default() -> Self {
        Self {
            mlm_weight: 1.0,
            vg_weight: 1.0,
            batch_mlm: 2048,
            batch_vg: 326,
            lr: 3e-4,
            optimizer: AdamWConfig::default(),
            steps: 10_000,
            warmup_frac: 0.01,
            seed: 0,
            n_neg: None,
            max_keywords: 6,
            max_objects: 20,
            checkpoint_interval: 0,
        }
    }
}

impl PretrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.mlm_weight < 0.0 || self.vg_weight < 0.0 || self.mlm_weight + self.vg_weight == 0.0 {
            return Err(Error::Invalid("loss weights must be non-negative and not both zero".into()));
        }
        if self.batch_mlm == 0 || self.batch_vg == 0 || self.max_keywords == 0 || self.max_objects == 0 {
            return Err(Error::Invalid("batch sizes and sampling caps must be positive".into()));
        }
        if !(self.lr > 0.0) || !(0.0..=1.0).contains(&self.warmup_frac) {
            return Err(Error::Invalid("learning rate must be positive and warmup_frac in [0, 1]".into()));
        }
        Ok(())
    }
}

/// Linear warmup over the first `warmup_frac` of `total` steps, then constant.
/// `step` counts from 0.
pub fn warmup_lr(step: u64, total: u64, peak: f32, warmup_frac: f64) -> f32 {
    let warm = (total as f64 * warmup_frac).ceil() as u64;
    if warm == 0 || step >= warm {
        peak
    } else {
        peak * (step + 1) as f32 / warm as f32
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    pub step: u64,
    pub loss_total: f64,
    pub loss_mlm: Option<f64>,
    pub loss_vg: Option<f64>,
    pub lr: f32,
}

/// Fresh model: encoder parameters, the masked-prediction bias and, when a
/// poster feature width is given, the object projection.
pub fn init_checkpoint(
    ctx: &FeatureContext,
    encoder: EncoderConfig,
    lexical: Option<&LexicalVectors>,
    poster_dim: Option<usize>,
) -> Result<ModelCheckpoint> {
    let mut params = ParamStore::new();
    let init = lexical.map_or(Init::Random, Init::Imported);
    let enc = Encoder::init_params(encoder.clone(), &ctx.vocab, init, &mut params)?;
    if ctx.layout.len() > enc.config.max_slots {
        return Err(Error::Invalid(format!(
            "layout has {} slots but max_slots is {}",
            ctx.layout.len(),
            enc.config.max_slots
        )));
    }
    params.insert_const(MLM_BIAS, (1, ctx.vocab.size()), 0.0);
    if let Some(f) = poster_dim {
        add_projection(&mut params, f, encoder.d_model, encoder.seed)?;
    }
    Ok(ModelCheckpoint {
        config: CheckpointConfig {
            format_version: CHECKPOINT_FORMAT,
            stage: Stage::Init,
            encoder,
            layout: ctx.layout.config.clone(),
            vocab_id: ctx.vocab_id().to_string(),
            poster_dim,
            steps: 0,
        },
        params,
        vocab: ctx.vocab.clone(),
        stats: ctx.stats.clone(),
        clusters: ctx.clusters.clone(),
    })
}

fn add_projection(params: &mut ParamStore, f: usize, d: usize, seed: u64) -> Result<()> {
    if f == 0 {
        return Err(Error::Invalid("poster feature width is zero".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(5);
    params.insert_normal(VG_PROJ_WEIGHT, (f, d), (1.0 / f as f32).sqrt(), &mut rng);
    params.insert_const(VG_PROJ_BIAS, (1, d), 0.0);
    Ok(())
}

/// Cycles through a shuffled index list, reshuffling when exhausted.
struct EpochSampler {
    order: Vec<usize>,
    pos: usize,
}

impl EpochSampler {
    fn new(n: usize) -> Self {
        Self {
            order: (0..n).collect(),
            pos: n,
        }
    }

    fn next(&mut self, k: usize, rng: &mut ChaCha8Rng) -> Vec<usize> {
        let n = self.order.len();
        if k >= n {
            self.order.shuffle(rng);
            return self.order.clone();
        }
        if self.pos + k > n {
            self.order.shuffle(rng);
            self.pos = 0;
        }
        let batch = self.order[self.pos..self.pos + k].to_vec();
        self.pos += k;
        batch
    }
}

fn stream(seed: u64, id: u64) -> ChaCha8Rng {
    let mut rng = init_rng(seed);
    rng.set_stream(id);
    rng
}

/// Up to `cap` distinct indices out of `n`, in increasing order.
fn subsample(n: usize, cap: usize, rng: &mut ChaCha8Rng) -> Vec<usize> {
    if n <= cap {
        return (0..n).collect();
    }
    let mut v = sample(rng, n, cap).into_vec();
    v.sort_unstable();
    v
}

/// Keyword rows of the hidden states and stacked raw object features for
/// one visual-grounding batch.
pub struct VgBatch {
    pub keyword_rows: Vec<usize>,
    pub objects: Tensor,
    pub blocks: SetBlocks,
}

/// Sample keywords and objects for `movies` (all with clusters and posters)
/// and pair anchors with negatives.
pub fn build_vg_batch(
    movies: &[&TokenizedMovie],
    posters: &[&PosterObjectSet],
    layout: &SlotLayout,
    cfg: &PretrainConfig,
    rng: &mut ChaCha8Rng,
) -> Result<VgBatch> {
    let n = movies.len();
    let seq_len = layout.len();
    let dim = posters.first().map_or(0, |p| p.dim());
    let mut keyword_rows = Vec::new();
    let mut x_rows = Vec::with_capacity(n);
    let mut z_cols = Vec::with_capacity(n);
    let mut picked = Vec::with_capacity(n);
    let mut n_obj = 0;
    for (b, (movie, poster)) in movies.iter().zip(posters).enumerate() {
        let clusters = movie.cluster_tokens(layout);
        let start = keyword_rows.len();
        for i in subsample(clusters.len(), cfg.max_keywords, rng) {
            keyword_rows.push(b * seq_len + clusters[i].0);
        }
        x_rows.push(start..keyword_rows.len());
        let objs = subsample(poster.n_objects(), cfg.max_objects, rng);
        z_cols.push(n_obj..n_obj + objs.len());
        n_obj += objs.len();
        picked.push(objs);
    }
    let mut objects = Tensor::zeros((n_obj, dim));
    let mut r = 0;
    for (poster, objs) in posters.iter().zip(&picked) {
        for &o in objs {
            objects.row_mut(r).assign(&poster.objects.row(o));
            r += 1;
        }
    }
    let n_neg = cfg.n_neg.unwrap_or(n.saturating_sub(1)).min(n.saturating_sub(1));
    let negatives = sample_negatives(n, n_neg, rng)?;
    Ok(VgBatch {
        keyword_rows,
        objects,
        blocks: SetBlocks {
            x_rows,
            z_cols,
            negatives,
        },
    })
}

/// Project raw object features with the checkpoint's visual projection.
pub fn project_objects(g: &mut Graph, raw: Tensor) -> Result<Var> {
    let params = g.params();
    let w = g.param(params.id(VG_PROJ_WEIGHT)?);
    let b = g.param(params.id(VG_PROJ_BIAS)?);
    let x = g.input(raw);
    Ok(g.linear(x, w, b))
}

fn ids_of(movies: &[&TokenizedMovie]) -> String {
    movies.iter().map(|m| m.movie_id.as_str()).collect::<Vec<_>>().join(",")
}

struct MetricsLog {
    writer: csv::Writer<File>,
}

impl MetricsLog {
    fn create(path: &Path) -> Result<Self> {
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        Ok(Self {
            writer: csv::Writer::from_writer(file),
        })
    }

    fn write(&mut self, row: &MetricsRow) -> Result<()> {
        self.writer.serialize(row)?;
        self.writer.flush().map_err(|e| Error::io("metrics.csv", e))
    }
}

pub struct PretrainOutcome {
    pub checkpoint: ModelCheckpoint,
    pub metrics: Vec<MetricsRow>,
    /// Movies that took part in visual grounding.
    pub n_vg_movies: usize,
}

/// Run the joint objective for `cfg.steps` optimizer steps. When `out_dir`
/// is given, the metrics CSV and periodic checkpoints are written there.
pub fn pretrain_loop(
    mut state: ModelCheckpoint,
    movies: &[TokenizedMovie],
    posters: &[PosterObjectSet],
    cfg: &PretrainConfig,
    out_dir: Option<&Path>,
) -> Result<PretrainOutcome> {
    cfg.validate()?;
    if movies.is_empty() {
        return Err(Error::Data("no movies to pretrain on".into()));
    }
    let layout = SlotLayout::new(state.config.layout.clone());
    if let Some(m) = movies.iter().find(|m| m.vocab_id != state.config.vocab_id) {
        return Err(Error::Data(format!("movie {} was tokenized with another vocabulary", m.movie_id)));
    }
    let encoder = Encoder::attach(state.config.encoder.clone(), &state.params)?;
    let mlm_bias = state.params.id(MLM_BIAS)?;

    let by_id: HashMap<&str, &PosterObjectSet> = posters.iter().map(|p| (p.movie_id.as_str(), p)).collect();
    let mut vg_pairs: Vec<(usize, &PosterObjectSet)> = Vec::new();
    if cfg.vg_weight > 0.0 && !posters.is_empty() {
        let dim = state
            .config
            .poster_dim
            .ok_or_else(|| Error::Invalid("checkpoint has no visual projection; initialise with a poster width".into()))?;
        for (i, m) in movies.iter().enumerate() {
            let Some(p) = by_id.get(m.movie_id.as_str()) else { continue };
            if p.n_objects() == 0 {
                log::warn!("poster of {} has no objects; skipped", m.movie_id);
                continue;
            }
            if p.dim() != dim {
                return Err(Error::Shape(format!(
                    "poster of {} has feature width {}, checkpoint expects {dim}",
                    m.movie_id,
                    p.dim()
                )));
            }
            if !m.cluster_tokens(&layout).is_empty() {
                vg_pairs.push((i, p));
            }
        }
        if vg_pairs.len() < 2 {
            log::warn!("fewer than 2 movies have both keywords and posters; visual grounding disabled");
            vg_pairs.clear();
        }
    }
    let use_mlm = cfg.mlm_weight > 0.0;
    let use_vg = !vg_pairs.is_empty();
    if !use_mlm && !use_vg {
        return Err(Error::Invalid("no active objective: masked prediction is off and no poster pairs exist".into()));
    }

    let mut log_file = match out_dir {
        Some(dir) => {
            std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
            Some(MetricsLog::create(&dir.join("metrics.csv"))?)
        }
        None => None,
    };
    let mut rng_mlm = stream(cfg.seed, 1);
    let mut rng_mlm_drop = stream(cfg.seed, 2);
    let mut rng_vg = stream(cfg.seed, 3);
    let mut rng_vg_drop = stream(cfg.seed, 4);
    let mut mlm_sampler = EpochSampler::new(movies.len());
    let mut vg_sampler = EpochSampler::new(vg_pairs.len());
    let mut opt = AdamW::new(cfg.optimizer.clone());
    let mut metrics = Vec::with_capacity(cfg.steps as usize);

    for step in 0..cfg.steps {
        let lr = warmup_lr(step, cfg.steps, cfg.lr, cfg.warmup_frac);
        let mut g = Graph::new(&state.params);
        let mut total: Option<Var> = None;
        let mut loss_mlm = None;
        let mut loss_vg = None;
        let mut batch_ids = Vec::new();
        if use_mlm {
            let idx = mlm_sampler.next(cfg.batch_mlm, &mut rng_mlm);
            let (masked, plans): (Vec<_>, Vec<_>) = idx
                .iter()
                .map(|&i| apply_mask_with(&movies[i], &layout, &mut rng_mlm))
                .unzip();
            let refs: Vec<&TokenizedMovie> = masked.iter().collect();
            batch_ids.push(ids_of(&refs));
            let out = encoder.forward(&mut g, &refs, Mode::Train, Some(&mut rng_mlm_drop))?;
            let table = g.param(encoder.token_table());
            let bias = g.param(mlm_bias);
            match mlm_loss(&mut g, &out, &plans, table, bias) {
                Some(l) => {
                    loss_mlm = Some(g.scalar_f64(l));
                    total = Some(g.scale(l, cfg.mlm_weight));
                }
                None => log::warn!("step {step}: no maskable tokens in the batch"),
            }
        }
        if use_vg {
            let idx = vg_sampler.next(cfg.batch_vg, &mut rng_vg);
            let refs: Vec<&TokenizedMovie> = idx.iter().map(|&i| &movies[vg_pairs[i].0]).collect();
            let posters: Vec<&PosterObjectSet> = idx.iter().map(|&i| vg_pairs[i].1).collect();
            batch_ids.push(ids_of(&refs));
            let batch = build_vg_batch(&refs, &posters, &layout, cfg, &mut rng_vg)?;
            let out = encoder.forward(&mut g, &refs, Mode::Train, Some(&mut rng_vg_drop))?;
            let kw = g.gather_rows(out.hidden, batch.keyword_rows);
            let obj = project_objects(&mut g, batch.objects)?;
            let l = vg_loss_graph(&mut g, kw, obj, batch.blocks)?;
            loss_vg = Some(g.scalar_f64(l));
            let weighted = g.scale(l, cfg.vg_weight);
            total = Some(match total {
                Some(t) => g.add(t, weighted),
                None => weighted,
            });
        }
        let Some(total) = total else { continue };
        let loss_total = cfg.mlm_weight as f64 * loss_mlm.unwrap_or(0.0) + cfg.vg_weight as f64 * loss_vg.unwrap_or(0.0);
        if !loss_total.is_finite() {
            return Err(Error::Numeric(format!(
                "non-finite loss at step {step}; batch movie ids: {}",
                batch_ids.join(";")
            )));
        }
        let grads = g.backward(total);
        drop(g);
        opt.step(&mut state.params, &grads, lr);
        if !state.params.all_finite() {
            return Err(Error::Numeric(format!(
                "parameters became non-finite at step {step}; batch movie ids: {}",
                batch_ids.join(";")
            )));
        }
        let row = MetricsRow {
            step: step + 1,
            loss_total,
            loss_mlm,
            loss_vg,
            lr,
        };
        if let Some(log) = log_file.as_mut() {
            log.write(&row)?;
        }
        metrics.push(row);
        state.config.steps += 1;
        state.config.stage = Stage::Pretrain;
        if let Some(dir) = out_dir {
            if cfg.checkpoint_interval > 0 && (step + 1) % cfg.checkpoint_interval == 0 && step + 1 < cfg.steps {
                state.save(&checkpoint_path(dir, step + 1))?;
            }
        }
    }
    Ok(PretrainOutcome {
        checkpoint: state,
        metrics,
        n_vg_movies: vg_pairs.len(),
    })
}

pub fn checkpoint_path(dir: &Path, step: u64) -> PathBuf {
    dir.join(format!("checkpoint-step{step:06}.tar"))
}

/// Raw object matrix rows stacked for a poster subset; used by retrieval.
pub fn stack_objects(sets: &[&PosterObjectSet]) -> Tensor {
    let dim = sets.first().map_or(0, |s| s.dim());
    let rows: usize = sets.iter().map(|s| s.n_objects()).sum();
    let mut out = Array2::zeros((rows, dim));
    let mut r = 0;
    for s in sets {
        out.slice_mut(ndarray::s![r..r + s.n_objects(), ..]).assign(&s.objects);
        r += s.n_objects();
    }
    out
}

#[cfg(test)]
mod tests;
