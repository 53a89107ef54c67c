#![allow(dead_code)]

use boxoffice_core::pipeline::{cluster_corpus, ingest_records, Ingested, Prepared};
use boxoffice_core::synth::generate;
use boxoffice_core::{EncoderConfig, FinetuneConfig, RunConfig, SyntheticCorpus, SyntheticSpec};

/// Small-model settings used by the directional experiments.
pub fn desk_config(seed: u64) -> RunConfig {
    let mut cfg = RunConfig::default();
    cfg.synth = SyntheticSpec {
        n_movies: 512,
        n_keywords: 480,
        n_clusters_true: 96,
        theme_purity: 0.9,
        theme_effect_sd: 0.5,
        cluster_effect_sd: 0.1,
        distractor_objects: 1,
        ..SyntheticSpec::default()
    };
    cfg.set_seed(seed);
    cfg.cluster.n_clusters = cfg.synth.n_clusters_true;
    cfg.vocab.min_company_count = 1;
    cfg.encoder = EncoderConfig {
        n_layers: 2,
        d_model: 32,
        d_ff: 64,
        n_heads: 2,
        seed,
        ..EncoderConfig::default()
    };
    cfg.pretrain.batch_mlm = 64;
    cfg.pretrain.batch_vg = 32;
    cfg.pretrain.lr = 1e-3;
    cfg.pretrain.steps = 300;
    cfg.finetune = FinetuneConfig {
        lr_grid: vec![1e-3],
        batch_grid: vec![64],
        epochs: 150,
        patience: 20,
        seed,
        ..FinetuneConfig::default()
    };
    cfg
}

/// A generated corpus taken through ingest, clustering and feature fitting.
pub struct Desk {
    pub cfg: RunConfig,
    pub corpus: SyntheticCorpus,
    pub ingested: Ingested,
    pub prepared: Prepared,
}

pub fn desk(cfg: RunConfig) -> Desk {
    let corpus = generate(&cfg.synth).expect("synthetic corpus");
    let ingested = ingest_records(corpus.records.clone(), &[], &cfg.ingest).expect("ingest");
    let (clusters, _) = cluster_corpus(&ingested.records, &corpus.lexical, &cfg).expect("clustering");
    let prepared = Prepared::fit(&ingested.records, &ingested.splits, clusters, &cfg).expect("features");
    Desk {
        cfg,
        corpus,
        ingested,
        prepared,
    }
}

pub fn median(mut xs: Vec<f64>) -> f64 {
    xs.sort_by(f64::total_cmp);
    let n = xs.len();
    if n % 2 == 1 {
        xs[n / 2]
    } else {
        (xs[n / 2 - 1] + xs[n / 2]) / 2.0
    }
}
