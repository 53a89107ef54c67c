//! Shared fixtures for benchmarks.

use boxoffice_core::features::TokenizedMovie;
use boxoffice_core::io::ModelCheckpoint;
use boxoffice_core::pipeline::{cluster_corpus, ingest_records, Prepared};
use boxoffice_core::{pretrain, synth, EncoderConfig, RunConfig, Split, SyntheticCorpus, SyntheticSpec};

pub struct ModelFixture {
    pub corpus: SyntheticCorpus,
    pub checkpoint: ModelCheckpoint,
    pub train: Vec<TokenizedMovie>,
}

/// A synthetic corpus and a freshly initialised model of width `d_model`.
pub fn model_fixture(n_movies: usize, d_model: usize) -> ModelFixture {
    let mut cfg = RunConfig::default();
    cfg.synth = SyntheticSpec { n_movies, ..SyntheticSpec::default() };
    cfg.cluster.n_clusters = cfg.synth.n_clusters_true;
    cfg.vocab.min_company_count = 1;
    cfg.encoder = EncoderConfig { n_layers: 2, d_model, d_ff: 2 * d_model, n_heads: 2, ..EncoderConfig::default() };
    let corpus = synth::generate(&cfg.synth).expect("valid spec");
    let ing = ingest_records(corpus.records.clone(), &[], &cfg.ingest).expect("synthetic corpus ingests");
    let (clusters, _) = cluster_corpus(&ing.records, &corpus.lexical, &cfg).expect("clusters");
    let prep = Prepared::fit(&ing.records, &ing.splits, clusters, &cfg).expect("features");
    let checkpoint = pretrain::init_checkpoint(&prep.context, cfg.encoder.clone(), None, Some(cfg.synth.poster_object_dim))
        .expect("init");
    ModelFixture {
        train: prep.owned(Split::Train),
        corpus,
        checkpoint,
    }
}
