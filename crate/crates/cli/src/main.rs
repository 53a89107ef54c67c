use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use boxoffice_core::clustering::LexicalVectors;
use boxoffice_core::dataset::{read_splits, write_corpus, write_splits, Split};
use boxoffice_core::finetune::{self, read_predictions, score, write_predictions, write_residuals};
use boxoffice_core::io::{read_pobj, validate_pobj, write_pobj, ModelCheckpoint};
use boxoffice_core::pipeline::{align_posters, cluster_corpus, ingest_corpus, poster_dim, Prepared};
use boxoffice_core::{pretrain, retrieval, synth, Error, KeywordClusterMap, MovieRecord, Result, RunConfig};

const RECORDS: &str = "records.jsonl";
const SPLITS: &str = "splits.csv";
const CHECKPOINT: &str = "checkpoint.tar";

/// Box-office revenue prediction: ingest, cluster, pretrain, finetune, predict.
#[derive(Parser)]
#[command(name = "boxoffice", version)]
struct Cli {
    /// JSON run configuration; missing keys take their defaults.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Seed for every stochastic stage, overriding the configuration.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Log more (-v info, -vv debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Parse a JSON-lines corpus and write records, splits and a report.
    Ingest(IngestArgs),
    /// Cluster the corpus keywords.
    Cluster(ClusterArgs),
    /// Pretrain the encoder with masked field prediction and visual grounding.
    Pretrain(PretrainArgs),
    /// Grid-search the revenue regressor on top of a pretrained checkpoint.
    Finetune(FinetuneArgs),
    /// Predict log10 revenue.
    Predict(PredictArgs),
    /// Mean Huber loss of a checkpoint or of a predictions file.
    Evaluate(EvaluateArgs),
    /// Rank posters by similarity to a keyword in a movie's context.
    Retrieve(RetrieveArgs),
    /// Generate a synthetic corpus, poster file and lexical vectors.
    Synth(SynthArgs),
}

#[derive(Args)]
struct IngestArgs {
    /// JSON-lines corpus.
    #[arg(long)]
    corpus: PathBuf,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct DataArgs {
    /// Directory written by `ingest` (records.jsonl, splits.csv).
    #[arg(long)]
    data: PathBuf,
}

#[derive(Args)]
struct ClusterArgs {
    #[command(flatten)]
    data: DataArgs,
    /// Lexical word vectors in text format.
    #[arg(long)]
    lexical: PathBuf,
    #[arg(long)]
    n_clusters: Option<usize>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct PretrainArgs {
    #[command(flatten)]
    data: DataArgs,
    /// clusters.json written by `cluster`.
    #[arg(long)]
    clusters: PathBuf,
    /// POBJ poster object features.
    #[arg(long)]
    posters: Option<PathBuf>,
    /// Lexical vectors to initialise the token table from.
    #[arg(long)]
    lexical: Option<PathBuf>,
    #[arg(long)]
    steps: Option<u64>,
    #[arg(long)]
    mlm_weight: Option<f32>,
    #[arg(long)]
    vg_weight: Option<f32>,
    #[arg(long)]
    lr: Option<f32>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct FinetuneArgs {
    #[command(flatten)]
    data: DataArgs,
    /// Pretrained checkpoint.
    #[arg(long)]
    checkpoint: PathBuf,
    /// Comma-separated learning rates.
    #[arg(long, value_delimiter = ',')]
    lr_grid: Option<Vec<f32>>,
    /// Comma-separated batch sizes.
    #[arg(long, value_delimiter = ',')]
    batch_grid: Option<Vec<usize>>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    max_steps: Option<u64>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct PredictArgs {
    #[command(flatten)]
    data: DataArgs,
    #[arg(long)]
    checkpoint: PathBuf,
    /// Restrict to one split (train, valid, test).
    #[arg(long)]
    split: Option<Split>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct EvaluateArgs {
    #[command(flatten)]
    data: DataArgs,
    /// Evaluate a finetuned checkpoint on `--split`.
    #[arg(long, conflicts_with = "predictions", required_unless_present = "predictions")]
    checkpoint: Option<PathBuf>,
    /// Score an existing predictions CSV instead of running a model.
    #[arg(long)]
    predictions: Option<PathBuf>,
    #[arg(long, default_value = "test")]
    split: Split,
    /// Directory for residuals.csv.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct RetrieveArgs {
    #[command(flatten)]
    data: DataArgs,
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long)]
    posters: PathBuf,
    /// Query movie id.
    #[arg(long)]
    movie: String,
    /// Keyword of the query movie; any member of its cluster works.
    #[arg(long)]
    keyword: String,
    #[arg(long)]
    top_k: Option<usize>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long)]
    n_movies: Option<usize>,
    #[arg(long)]
    out: PathBuf,
}

fn create_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn write_json(path: &Path, value: &impl serde::Serialize) -> Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn load_data(dir: &Path) -> Result<(Vec<MovieRecord>, Vec<boxoffice_core::SplitAssignment>)> {
    let parsed = boxoffice_core::dataset::parse_corpus(&dir.join(RECORDS), boxoffice_core::dataset::SCHEMA_VERSION)?;
    if let Some(e) = parsed.errors.first() {
        return Err(Error::Data(format!("{} line {}: {}", RECORDS, e.line, e.message)));
    }
    let splits = read_splits(&dir.join(SPLITS))?;
    Ok((parsed.records, splits))
}

fn ingest(cfg: &RunConfig, a: &IngestArgs) -> Result<()> {
    let ing = ingest_corpus(&a.corpus, &cfg.ingest)?;
    create_dir(&a.out)?;
    write_corpus(&a.out.join(RECORDS), &ing.records)?;
    write_splits(&a.out.join(SPLITS), &ing.splits)?;
    write_json(&a.out.join("ingest_report.json"), &ing.report)?;
    log::info!("{} records, {} malformed lines", ing.report.records, ing.report.line_errors.len());
    Ok(())
}

fn cluster(cfg: &RunConfig, a: &ClusterArgs) -> Result<()> {
    let (records, _) = load_data(&a.data.data)?;
    let lexical = LexicalVectors::read(&a.lexical)?;
    let (map, report) = cluster_corpus(&records, &lexical, cfg)?;
    create_dir(&a.out)?;
    map.save(&a.out.join("clusters.json"))?;
    write_json(&a.out.join("cluster_report.json"), &report)
}

fn pretrain_cmd(cfg: &RunConfig, a: &PretrainArgs) -> Result<()> {
    let (records, splits) = load_data(&a.data.data)?;
    let clusters = KeywordClusterMap::load(&a.clusters)?;
    let posters = match &a.posters {
        Some(p) => align_posters(&records, read_pobj(p)?)?,
        None => Vec::new(),
    };
    let lexical = a.lexical.as_deref().map(LexicalVectors::read).transpose()?;
    let prep = Prepared::fit(&records, &splits, clusters, cfg)?;
    let state = pretrain::init_checkpoint(&prep.context, cfg.encoder.clone(), lexical.as_ref(), poster_dim(&posters))?;
    create_dir(&a.out)?;
    cfg.echo(&a.out)?;
    let outcome = pretrain::pretrain_loop(state, &prep.owned(Split::Train), &posters, &cfg.pretrain, Some(&a.out))?;
    log::info!("{} movies took part in visual grounding", outcome.n_vg_movies);
    outcome.checkpoint.save(&a.out.join(CHECKPOINT))
}

fn finetune_cmd(cfg: &RunConfig, a: &FinetuneArgs) -> Result<()> {
    let (records, splits) = load_data(&a.data.data)?;
    let base = ModelCheckpoint::load(&a.checkpoint)?;
    let prep = Prepared::from_checkpoint(&records, &splits, &base);
    let test = prep.labelled(Split::Test);
    let (best, report) = finetune::finetune(
        &base,
        &prep.labelled(Split::Train),
        &prep.labelled(Split::Valid),
        Some(&test),
        &cfg.finetune,
    )?;
    create_dir(&a.out)?;
    cfg.echo(&a.out)?;
    write_json(&a.out.join("grid_report.json"), &report)?;
    best.save(&a.out.join(CHECKPOINT))
}

fn predict_cmd(cfg: &RunConfig, a: &PredictArgs) -> Result<()> {
    let (records, splits) = load_data(&a.data.data)?;
    let ckpt = ModelCheckpoint::load(&a.checkpoint)?;
    let prep = Prepared::from_checkpoint(&records, &splits, &ckpt);
    let movies: Vec<_> = match a.split {
        Some(s) => prep.split(s),
        None => prep.movies.iter().collect(),
    };
    let preds = finetune::predict(&ckpt, &movies)?;
    create_dir(&a.out)?;
    cfg.echo(&a.out)?;
    write_predictions(&a.out.join("predictions.csv"), &preds)
}

fn evaluate_cmd(cfg: &RunConfig, a: &EvaluateArgs) -> Result<()> {
    let (records, splits) = load_data(&a.data.data)?;
    let eval = match (&a.checkpoint, &a.predictions) {
        (Some(path), _) => {
            let ckpt = ModelCheckpoint::load(path)?;
            let prep = Prepared::from_checkpoint(&records, &splits, &ckpt);
            finetune::evaluate(&ckpt, &prep.labelled(a.split))?
        }
        (None, Some(path)) => {
            let preds = read_predictions(path)?;
            let split_of: std::collections::HashMap<&str, Split> =
                splits.iter().map(|s| (s.movie_id.as_str(), s.split)).collect();
            let by_id: std::collections::HashMap<&str, &MovieRecord> =
                records.iter().map(|r| (r.movie_id.as_str(), r)).collect();
            let mut rows = Vec::new();
            for p in preds.iter().filter(|p| split_of.get(p.movie_id.as_str()) == Some(&a.split)) {
                let rec = by_id
                    .get(p.movie_id.as_str())
                    .ok_or_else(|| Error::Data(format!("prediction for unknown movie {}", p.movie_id)))?;
                if let Some(y) = rec.log10_revenue() {
                    rows.push((p.movie_id.clone(), y, p.y_hat_log10));
                }
            }
            if rows.is_empty() {
                return Err(Error::Data(format!("no labelled predictions in split {}", a.split)));
            }
            score(rows)
        }
        (None, None) => unreachable!("clap requires one source"),
    };
    if let Some(out) = &a.out {
        create_dir(out)?;
        cfg.echo(out)?;
        write_residuals(&out.join("residuals.csv"), &eval)?;
    }
    println!("{:?}", eval.mean_huber);
    Ok(())
}

fn retrieve_cmd(cfg: &RunConfig, a: &RetrieveArgs) -> Result<()> {
    let (records, splits) = load_data(&a.data.data)?;
    let ckpt = ModelCheckpoint::load(&a.checkpoint)?;
    let posters = align_posters(&records, read_pobj(&a.posters)?)?;
    let prep = Prepared::from_checkpoint(&records, &splits, &ckpt);
    let movie = prep
        .movies
        .iter()
        .find(|m| m.movie_id == a.movie)
        .ok_or_else(|| Error::Data(format!("unknown movie {}", a.movie)))?;
    let cluster = ckpt
        .clusters
        .cluster_of(&a.keyword)
        .ok_or_else(|| Error::Data(format!("keyword {:?} is not in the cluster map", a.keyword)))?;
    let index = retrieval::build_index(&ckpt, &posters)?;
    let top_k = a.top_k.unwrap_or(cfg.retrieval.top_k);
    let hits = retrieval::query(&index, &ckpt, movie, ckpt.vocab.cluster_token(cluster), top_k)?;
    create_dir(&a.out)?;
    cfg.echo(&a.out)?;
    retrieval::write_report(&a.out.join("retrieval.json"), &hits)
}

fn synth_cmd(cfg: &RunConfig, a: &SynthArgs) -> Result<()> {
    let corpus = synth::generate(&cfg.synth)?;
    create_dir(&a.out)?;
    cfg.echo(&a.out)?;
    write_corpus(&a.out.join("corpus.jsonl"), &corpus.records)?;
    let pobj = a.out.join("posters.pobj");
    write_pobj(&pobj, &corpus.posters)?;
    let bytes = std::fs::read(&pobj).map_err(|e| Error::io(&pobj, e))?;
    let summary = validate_pobj(&bytes)?;
    log::info!("{} posters of width {:?}", summary.records, summary.dims);
    corpus.lexical.write(&a.out.join("lexical.txt"))
}

fn effective_config(cli: &Cli) -> Result<RunConfig> {
    let mut cfg = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.set_seed(seed);
    }
    match &cli.command {
        Command::Cluster(a) => {
            if let Some(n) = a.n_clusters {
                cfg.cluster.n_clusters = n;
            }
        }
        Command::Pretrain(a) => {
            let p = &mut cfg.pretrain;
            p.steps = a.steps.unwrap_or(p.steps);
            p.mlm_weight = a.mlm_weight.unwrap_or(p.mlm_weight);
            p.vg_weight = a.vg_weight.unwrap_or(p.vg_weight);
            p.lr = a.lr.unwrap_or(p.lr);
        }
        Command::Finetune(a) => {
            let f = &mut cfg.finetune;
            if let Some(g) = &a.lr_grid {
                f.lr_grid = g.clone();
            }
            if let Some(g) = &a.batch_grid {
                f.batch_grid = g.clone();
            }
            f.epochs = a.epochs.unwrap_or(f.epochs);
            f.max_steps = a.max_steps.or(f.max_steps);
        }
        Command::Synth(a) => {
            cfg.synth.n_movies = a.n_movies.unwrap_or(cfg.synth.n_movies);
        }
        _ => {}
    }
    cfg.validate()?;
    Ok(cfg)
}

fn run(cli: &Cli) -> Result<()> {
    let cfg = effective_config(cli)?;
    match &cli.command {
        Command::Ingest(a) => {
            ingest(&cfg, a)?;
            cfg.echo(&a.out)
        }
        Command::Cluster(a) => {
            cluster(&cfg, a)?;
            cfg.echo(&a.out)
        }
        Command::Pretrain(a) => pretrain_cmd(&cfg, a),
        Command::Finetune(a) => finetune_cmd(&cfg, a),
        Command::Predict(a) => predict_cmd(&cfg, a),
        Command::Evaluate(a) => evaluate_cmd(&cfg, a),
        Command::Retrieve(a) => retrieve_cmd(&cfg, a),
        Command::Synth(a) => synth_cmd(&cfg, a),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .format_timestamp(None)
        .init();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let line = serde_json::json!({
                "error": e.kind(),
                "code": e.exit_code(),
                "message": e.to_string(),
            });
            eprintln!("{line}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
