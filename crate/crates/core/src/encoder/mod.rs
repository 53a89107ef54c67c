//! Post-layer-norm transformer encoder over fixed-slot movie sequences.

use ndarray::Array2;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::autograd::{init_rng, Graph, ParamId, ParamStore, Tensor, Var};
use crate::clustering::LexicalVectors;
use crate::error::{Error, Result};
use crate::features::{NumeralEmbedder, NumeralEmbedderConfig, Slot, TokenizedMovie, Vocabulary, N_SPECIAL};

pub const TOKEN_EMBEDDING: &str = "embeddings.token";
pub const POSITION_EMBEDDING: &str = "embeddings.position";
pub const NUMERAL_PROJECTION: &str = "embeddings.numeral_proj";
/// Parameter-name prefixes frozen during finetuning.
pub const FROZEN_PREFIXES: [&str; 2] = [TOKEN_EMBEDDING, POSITION_EMBEDDING];

const INIT_STD: f32 = 0.02;
const LN_EPS: f32 = 1e-5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EncoderConfig {
    pub n_layers: usize,
    pub d_model: usize,
    pub d_ff: usize,
    pub n_heads: usize,
    pub max_slots: usize,
    pub dropout: f32,
    pub seed: u64,
    /// Width of numeral embeddings; `None` means `d_model`.
    pub numeral_dim: Option<usize>,
    pub numeral_interval: (f64, f64),
    pub numeral_sigma_sq: f64,
    /// Map imported vectors of another width to `d_model` with a fixed
    /// seeded random projection.
    pub import_projection: bool,
}

impl Default for EncoderConfig {
    fn default() -> Self {
        Self {
            n_layers: 4,
            d_model: 512,
            d_ff: 512,
            n_heads: 4,
            max_slots: 64,
            dropout: 0.1,
            seed: 0,
            numeral_dim: None,
            numeral_interval: (-10.0, 10.0),
            numeral_sigma_sq: 1.0,
            import_projection: false,
        }
    }
}

impl EncoderConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_heads == 0 || !self.d_model.is_multiple_of(self.n_heads) {
            return Err(Error::Invalid(format!(
                "d_model {} is not divisible by n_heads {}",
                self.d_model, self.n_heads
            )));
        }
        if self.n_layers == 0 || self.d_ff == 0 || self.max_slots == 0 {
            return Err(Error::Invalid("encoder sizes must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::Invalid(format!("dropout {} outside [0, 1)", self.dropout)));
        }
        self.numeral_config().validate()
    }

    pub fn numeral_config(&self) -> NumeralEmbedderConfig {
        NumeralEmbedderConfig {
            dim: self.numeral_dim.unwrap_or(self.d_model),
            interval: self.numeral_interval,
            sigma_sq: self.numeral_sigma_sq,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

/// Token-embedding initialisation.
#[derive(Debug, Clone, Copy)]
pub enum Init<'a> {
    Random,
    Imported(&'a LexicalVectors),
}

#[derive(Debug, Clone)]
struct Linear {
    weight: ParamId,
    bias: ParamId,
}

#[derive(Debug, Clone)]
struct Norm {
    gamma: ParamId,
    beta: ParamId,
}

#[derive(Debug, Clone)]
struct Block {
    q: Linear,
    k: Linear,
    v: Linear,
    o: Linear,
    ln1: Norm,
    ff_in: Linear,
    ff_out: Linear,
    ln2: Norm,
}

/// Encoder outputs for a batch of `batch` sequences of `seq_len` slots.
#[derive(Debug, Clone)]
pub struct ContextualOutput {
    /// Per-slot vectors, `batch * seq_len` rows.
    pub hidden: Var,
    /// Mean over non-PAD slots, one row per sequence.
    pub pooled: Var,
    pub mask: Vec<bool>,
    pub seq_len: usize,
}

/// Slot contents plus an attention mask; masked slots contribute only
/// their position embedding and are never attended to.
#[derive(Debug, Clone, Copy)]
pub struct EncoderInput<'a> {
    pub slots: &'a [Slot],
    pub mask: &'a [bool],
}

/// Resolved parameter handles for one encoder.
#[derive(Debug, Clone)]
pub struct Encoder {
    pub config: EncoderConfig,
    numeral: NumeralEmbedder,
    token: ParamId,
    position: ParamId,
    numeral_proj: Option<ParamId>,
    ln_emb: Norm,
    blocks: Vec<Block>,
}

fn linear_params(store: &mut ParamStore, name: &str, fan_in: usize, fan_out: usize, rng: &mut ChaCha8Rng) -> Linear {
    Linear {
        weight: store.insert_normal(format!("{name}.weight"), (fan_in, fan_out), INIT_STD, rng),
        bias: store.insert_const(format!("{name}.bias"), (1, fan_out), 0.0),
    }
}

fn norm_params(store: &mut ParamStore, name: &str, d: usize) -> Norm {
    Norm {
        gamma: store.insert_const(format!("{name}.gamma"), (1, d), 1.0),
        beta: store.insert_const(format!("{name}.beta"), (1, d), 0.0),
    }
}

fn resolve_linear(store: &ParamStore, name: &str) -> Result<Linear> {
    Ok(Linear {
        weight: store.id(&format!("{name}.weight"))?,
        bias: store.id(&format!("{name}.bias"))?,
    })
}

fn resolve_norm(store: &ParamStore, name: &str) -> Result<Norm> {
    Ok(Norm {
        gamma: store.id(&format!("{name}.gamma"))?,
        beta: store.id(&format!("{name}.beta"))?,
    })
}

impl Encoder {
    /// Create encoder parameters in `store`, seeded by `config.seed`.
    pub fn init_params(config: EncoderConfig, vocab: &Vocabulary, init: Init<'_>, store: &mut ParamStore) -> Result<Self> {
        config.validate()?;
        let d = config.d_model;
        let mut rng = init_rng(config.seed);
        let token = store.insert_normal(TOKEN_EMBEDDING, (vocab.size(), d), INIT_STD, &mut rng);
        let position = store.insert_normal(POSITION_EMBEDDING, (config.max_slots, d), INIT_STD, &mut rng);
        let nd = config.numeral_config().dim;
        let numeral_proj =
            (nd != d).then(|| store.insert_normal(NUMERAL_PROJECTION, (nd, d), (1.0 / nd as f32).sqrt(), &mut rng));
        let ln_emb = norm_params(store, "embeddings.ln", d);
        let blocks = (0..config.n_layers)
            .map(|i| {
                let p = format!("layers.{i}");
                Block {
                    q: linear_params(store, &format!("{p}.attn.q"), d, d, &mut rng),
                    k: linear_params(store, &format!("{p}.attn.k"), d, d, &mut rng),
                    v: linear_params(store, &format!("{p}.attn.v"), d, d, &mut rng),
                    o: linear_params(store, &format!("{p}.attn.o"), d, d, &mut rng),
                    ln1: norm_params(store, &format!("{p}.ln1"), d),
                    ff_in: linear_params(store, &format!("{p}.ffn.in"), d, config.d_ff, &mut rng),
                    ff_out: linear_params(store, &format!("{p}.ffn.out"), config.d_ff, d, &mut rng),
                    ln2: norm_params(store, &format!("{p}.ln2"), d),
                }
            })
            .collect();
        if let Init::Imported(lexical) = init {
            let table = import_table(&config, vocab, lexical, store.value(token))?;
            store.get_mut(token).value = table;
        }
        Self::from_parts(config, token, position, numeral_proj, ln_emb, blocks)
    }

    /// Resolve an encoder whose parameters already live in `store`.
    pub fn attach(config: EncoderConfig, store: &ParamStore) -> Result<Self> {
        config.validate()?;
        let token = store.id(TOKEN_EMBEDDING)?;
        let position = store.id(POSITION_EMBEDDING)?;
        let d = config.d_model;
        for (id, what) in [(token, "token"), (position, "position")] {
            if store.value(id).ncols() != d {
                return Err(Error::Shape(format!("{what} embedding width differs from d_model {d}")));
            }
        }
        if store.value(position).nrows() != config.max_slots {
            return Err(Error::Shape("position table does not match max_slots".into()));
        }
        let numeral_proj = store.id(NUMERAL_PROJECTION).ok();
        let ln_emb = resolve_norm(store, "embeddings.ln")?;
        let blocks = (0..config.n_layers)
            .map(|i| {
                let p = format!("layers.{i}");
                Ok(Block {
                    q: resolve_linear(store, &format!("{p}.attn.q"))?,
                    k: resolve_linear(store, &format!("{p}.attn.k"))?,
                    v: resolve_linear(store, &format!("{p}.attn.v"))?,
                    o: resolve_linear(store, &format!("{p}.attn.o"))?,
                    ln1: resolve_norm(store, &format!("{p}.ln1"))?,
                    ff_in: resolve_linear(store, &format!("{p}.ffn.in"))?,
                    ff_out: resolve_linear(store, &format!("{p}.ffn.out"))?,
                    ln2: resolve_norm(store, &format!("{p}.ln2"))?,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Self::from_parts(config, token, position, numeral_proj, ln_emb, blocks)
    }

    fn from_parts(
        config: EncoderConfig,
        token: ParamId,
        position: ParamId,
        numeral_proj: Option<ParamId>,
        ln_emb: Norm,
        blocks: Vec<Block>,
    ) -> Result<Self> {
        Ok(Self {
            numeral: NumeralEmbedder::new(&config.numeral_config())?,
            config,
            token,
            position,
            numeral_proj,
            ln_emb,
            blocks,
        })
    }

    pub fn token_table(&self) -> ParamId {
        self.token
    }

    pub fn position_table(&self) -> ParamId {
        self.position
    }

    /// Encode a batch of tokenized movies.
    pub fn forward(
        &self,
        g: &mut Graph,
        batch: &[&TokenizedMovie],
        mode: Mode,
        rng: Option<&mut ChaCha8Rng>,
    ) -> Result<ContextualOutput> {
        let masks: Vec<Vec<bool>> = batch.iter().map(|m| m.mask()).collect();
        let inputs: Vec<EncoderInput> = batch
            .iter()
            .zip(&masks)
            .map(|(m, mask)| EncoderInput { slots: &m.slots, mask })
            .collect();
        self.forward_inputs(g, &inputs, mode, rng)
    }

    /// Encode sequences with explicit attention masks. Train mode applies
    /// dropout drawn from `rng`; eval mode is deterministic.
    pub fn forward_inputs(
        &self,
        g: &mut Graph,
        batch: &[EncoderInput<'_>],
        mode: Mode,
        mut rng: Option<&mut ChaCha8Rng>,
    ) -> Result<ContextualOutput> {
        let cfg = &self.config;
        let Some(first) = batch.first() else {
            return Err(Error::Shape("empty encoder batch".into()));
        };
        let seq_len = first.slots.len();
        if seq_len > cfg.max_slots {
            return Err(Error::Shape(format!("{seq_len} slots exceed max_slots {}", cfg.max_slots)));
        }
        let n_rows = batch.len() * seq_len;
        let mut token_ids = Vec::with_capacity(n_rows);
        let mut positions = Vec::with_capacity(n_rows);
        let mut mask = Vec::with_capacity(n_rows);
        let nd = self.numeral.dim();
        let mut numerals = Tensor::zeros((n_rows, nd));
        let mut any_numeral = false;
        let mut groups = Vec::with_capacity(batch.len());
        for (b, input) in batch.iter().enumerate() {
            if input.slots.len() != seq_len || input.mask.len() != seq_len {
                return Err(Error::Shape("sequences in a batch differ in length".into()));
            }
            let mut live = Vec::new();
            for (s, (slot, &m)) in input.slots.iter().zip(input.mask).enumerate() {
                let row = b * seq_len + s;
                positions.push(Some(s as u32));
                mask.push(m);
                let mut tok = None;
                if m {
                    live.push(row);
                    match slot {
                        Slot::Token(t) => {
                            if *t as usize >= g.params().value(self.token).nrows() {
                                return Err(Error::Shape(format!("token id {t} outside the vocabulary")));
                            }
                            tok = Some(*t);
                        }
                        Slot::Numeral(x) => {
                            let out = numerals.row_mut(row).into_slice().expect("row-major");
                            self.numeral.embed_into(*x as f64, out)?;
                            any_numeral = true;
                        }
                        Slot::Pad => {}
                    }
                }
                token_ids.push(tok);
            }
            if live.is_empty() {
                return Err(Error::Shape(format!("sequence {b} has no non-PAD slots to pool")));
            }
            groups.push(live);
        }
        let token_table = g.param(self.token);
        let pos_table = g.param(self.position);
        let tok = g.gather(token_table, token_ids);
        let pos = g.gather(pos_table, positions);
        let mut x = g.add(tok, pos);
        if any_numeral {
            let num = g.input(numerals);
            let num = match self.numeral_proj {
                Some(p) => {
                    let w = g.param(p);
                    g.matmul(num, w)
                }
                None => num,
            };
            x = g.add(x, num);
        }
        x = self.norm(g, x, &self.ln_emb);
        x = self.dropout(g, x, mode, rng.as_deref_mut());
        for block in &self.blocks {
            let q = self.linear(g, x, &block.q);
            let k = self.linear(g, x, &block.k);
            let v = self.linear(g, x, &block.v);
            let a = g.attention(q, k, v, seq_len, cfg.n_heads, &mask)?;
            let a = self.linear(g, a, &block.o);
            let a = self.dropout(g, a, mode, rng.as_deref_mut());
            let h = g.add(x, a);
            let h = self.norm(g, h, &block.ln1);
            let f = self.linear(g, h, &block.ff_in);
            let f = g.gelu(f);
            let f = self.linear(g, f, &block.ff_out);
            let f = self.dropout(g, f, mode, rng.as_deref_mut());
            let h2 = g.add(h, f);
            x = self.norm(g, h2, &block.ln2);
        }
        let pooled = g.segment_mean(x, groups)?;
        Ok(ContextualOutput {
            hidden: x,
            pooled,
            mask,
            seq_len,
        })
    }

    fn linear(&self, g: &mut Graph, x: Var, l: &Linear) -> Var {
        let w = g.param(l.weight);
        let b = g.param(l.bias);
        g.linear(x, w, b)
    }

    fn norm(&self, g: &mut Graph, x: Var, n: &Norm) -> Var {
        let gamma = g.param(n.gamma);
        let beta = g.param(n.beta);
        g.layer_norm(x, gamma, beta, LN_EPS)
    }

    fn dropout(&self, g: &mut Graph, x: Var, mode: Mode, rng: Option<&mut ChaCha8Rng>) -> Var {
        let p = self.config.dropout;
        match (mode, rng) {
            (Mode::Train, Some(rng)) if p > 0.0 => {
                let keep = 1.0 / (1.0 - p);
                let mask = Array2::from_shape_simple_fn(g.value(x).raw_dim(), || {
                    if rng.random::<f32>() < p {
                        0.0
                    } else {
                        keep
                    }
                });
                g.dropout(x, mask)
            }
            _ => x,
        }
    }
}

/// Token table with rows replaced by imported lexical vectors wherever the
/// token's label (averaged over its words) is covered.
fn import_table(config: &EncoderConfig, vocab: &Vocabulary, lexical: &LexicalVectors, random: &Tensor) -> Result<Tensor> {
    let d = config.d_model;
    let src = lexical.dim;
    let projection = if src == d {
        None
    } else if config.import_projection {
        let mut rng = init_rng(config.seed ^ 0x1e71ca1);
        let normal = Normal::new(0.0f32, (1.0 / src as f32).sqrt()).expect("valid std");
        Some(Array2::from_shape_simple_fn((src, d), || normal.sample(&mut rng)))
    } else {
        return Err(Error::Invalid(format!(
            "imported vectors have dimension {src} but d_model is {d}; enable import_projection"
        )));
    };
    let mut table = random.clone();
    let mut covered = 0usize;
    for id in N_SPECIAL..vocab.size() as u32 {
        let label = vocab.label(id);
        if label.starts_with('[') {
            continue;
        }
        let Some(v) = lexical.phrase(&label) else { continue };
        let v = Array2::from_shape_vec((1, src), v).expect("lexical width");
        let row = match &projection {
            Some(p) => v.dot(p),
            None => v,
        };
        table.row_mut(id as usize).assign(&row.row(0));
        covered += 1;
    }
    log::info!("imported vectors for {covered} of {} tokens", vocab.size());
    Ok(table)
}

#[cfg(test)]
mod tests;
