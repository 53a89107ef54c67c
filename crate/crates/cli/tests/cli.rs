use std::path::Path;
use std::process::{Command, Output};

const CONFIG: &str = r#"{
  "synth": {"n_movies": 60, "n_keywords": 60, "n_clusters_true": 12, "n_themes": 3, "n_people": 30},
  "cluster": {"n_clusters": 12},
  "vocab": {"min_company_count": 1},
  "encoder": {"n_layers": 1, "d_model": 16, "d_ff": 32, "n_heads": 2},
  "pretrain": {"steps": 4, "batch_mlm": 16, "batch_vg": 8},
  "finetune": {"lr_grid": [0.001], "batch_grid": [16], "epochs": 2}
}"#;

fn boxoffice(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_boxoffice"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) -> String {
    let out = boxoffice(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn write_config(dir: &Path) -> std::path::PathBuf {
    let path = dir.join("run.json");
    std::fs::write(&path, CONFIG).unwrap();
    path
}

#[test]
fn synth_is_byte_identical_across_runs() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    for out in [&a, &b] {
        ok(&["synth", "--n-movies", "40", "--seed", "1", "--out", p(out)]);
    }
    for file in ["corpus.jsonl", "posters.pobj", "lexical.txt", "config.json"] {
        let x = std::fs::read(a.join(file)).unwrap();
        assert!(!x.is_empty());
        assert_eq!(x, std::fs::read(b.join(file)).unwrap(), "{file}");
    }
}

#[test]
fn full_pipeline_runs_and_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path());
    let cfg = p(&cfg);
    let run = |root: &Path| {
        let (syn, data, clu, pre, fin, pred) = (
            root.join("synth"),
            root.join("data"),
            root.join("clusters"),
            root.join("pretrain"),
            root.join("finetune"),
            root.join("predict"),
        );
        ok(&["--config", cfg, "--seed", "3", "synth", "--out", p(&syn)]);
        ok(&["--config", cfg, "--seed", "3", "ingest", "--corpus", p(&syn.join("corpus.jsonl")), "--out", p(&data)]);
        ok(&["--config", cfg, "cluster", "--data", p(&data), "--lexical", p(&syn.join("lexical.txt")), "--out", p(&clu)]);
        ok(&[
            "--config", cfg, "--seed", "3", "pretrain", "--data", p(&data),
            "--clusters", p(&clu.join("clusters.json")),
            "--posters", p(&syn.join("posters.pobj")),
            "--out", p(&pre),
        ]);
        ok(&[
            "--config", cfg, "--seed", "3", "finetune", "--data", p(&data),
            "--checkpoint", p(&pre.join("checkpoint.tar")), "--out", p(&fin),
        ]);
        ok(&[
            "--config", cfg, "predict", "--data", p(&data),
            "--checkpoint", p(&fin.join("checkpoint.tar")), "--split", "test", "--out", p(&pred),
        ]);
        let mean = ok(&[
            "--config", cfg, "evaluate", "--data", p(&data),
            "--checkpoint", p(&fin.join("checkpoint.tar")), "--out", p(&root.join("eval")),
        ]);
        let from_file = ok(&[
            "--config", cfg, "evaluate", "--data", p(&data),
            "--predictions", p(&pred.join("predictions.csv")),
        ]);
        let a: f64 = mean.trim().parse().unwrap();
        let b: f64 = from_file.trim().parse().unwrap();
        assert!(a.is_finite() && (a - b).abs() < 1e-6, "{a} vs {b}");
        for (dir, file) in [
            (&data, "splits.csv"),
            (&data, "ingest_report.json"),
            (&clu, "cluster_report.json"),
            (&pre, "metrics.csv"),
            (&fin, "grid_report.json"),
            (&pred, "config.json"),
        ] {
            assert!(dir.join(file).exists(), "{}", dir.join(file).display());
        }
        (
            std::fs::read(pre.join("metrics.csv")).unwrap(),
            std::fs::read(pred.join("predictions.csv")).unwrap(),
            std::fs::read(fin.join("checkpoint.tar")).unwrap(),
        )
    };
    let first = run(&dir.path().join("one"));
    let second = run(&dir.path().join("two"));
    assert!(first == second, "seeded pipeline is not reproducible");

    let root = dir.path().join("one");
    let records = std::fs::read_to_string(root.join("data/records.jsonl")).unwrap();
    let first_line = records.lines().next().unwrap();
    let rec: serde_json::Value = serde_json::from_str(first_line).unwrap();
    let movie = rec["movie_id"].as_str().unwrap();
    let keyword = rec["keywords"][0].as_str().unwrap();
    let out = root.join("retrieve");
    ok(&[
        "--config", cfg, "retrieve", "--data", p(&root.join("data")),
        "--checkpoint", p(&root.join("pretrain/checkpoint.tar")),
        "--posters", p(&root.join("synth/posters.pobj")),
        "--movie", movie, "--keyword", keyword, "--top-k", "5", "--out", p(&out),
    ]);
    let hits: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(out.join("retrieval.json")).unwrap()).unwrap();
    let hits = hits.as_array().unwrap();
    assert_eq!(hits.len(), 5);
    assert_eq!(hits[0]["rank"], 1);
}

#[test]
fn evaluate_prints_zero_for_a_perfect_predictor() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path());
    let syn = dir.path().join("synth");
    let data = dir.path().join("data");
    ok(&["--config", p(&cfg), "synth", "--out", p(&syn)]);
    ok(&["--config", p(&cfg), "ingest", "--corpus", p(&syn.join("corpus.jsonl")), "--out", p(&data)]);
    let mut csv = String::from("movie_id,y_hat_log10,y_hat_usd\n");
    for line in std::fs::read_to_string(data.join("records.jsonl")).unwrap().lines() {
        let rec: serde_json::Value = serde_json::from_str(line).unwrap();
        let revenue = rec["revenue"].as_u64().unwrap();
        if revenue > 0 {
            csv.push_str(&format!("{},{},{}\n", rec["movie_id"].as_str().unwrap(), (revenue as f64).log10(), revenue));
        }
    }
    let preds = dir.path().join("perfect.csv");
    std::fs::write(&preds, csv).unwrap();
    let out = ok(&["evaluate", "--data", p(&data), "--predictions", p(&preds)]);
    assert_eq!(out.trim(), "0.0");
}

#[test]
fn missing_input_is_a_single_line_data_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = boxoffice(&["ingest", "--corpus", p(&dir.path().join("nope.jsonl")), "--out", p(dir.path())]);
    assert_eq!(out.status.code(), Some(3));
    let err = String::from_utf8(out.stderr).unwrap();
    assert_eq!(err.trim().lines().count(), 1, "{err}");
    let v: serde_json::Value = serde_json::from_str(err.trim()).unwrap();
    assert_eq!(v["error"], "io");
    assert_eq!(v["code"], 3);
}

#[test]
fn unknown_config_keys_and_bad_flags_are_usage_errors() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.json");
    std::fs::write(&cfg, r#"{"pretrain": {"stepz": 1}}"#).unwrap();
    let out = boxoffice(&["--config", p(&cfg), "synth", "--out", p(dir.path())]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("stepz"));
    assert_eq!(boxoffice(&["synth"]).status.code(), Some(2));
    assert_eq!(boxoffice(&["frobnicate"]).status.code(), Some(2));
}

#[test]
fn corrupted_poster_file_reports_offset() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path());
    let syn = dir.path().join("synth");
    let data = dir.path().join("data");
    ok(&["--config", p(&cfg), "synth", "--out", p(&syn)]);
    ok(&["--config", p(&cfg), "ingest", "--corpus", p(&syn.join("corpus.jsonl")), "--out", p(&data)]);
    ok(&["--config", p(&cfg), "cluster", "--data", p(&data), "--lexical", p(&syn.join("lexical.txt")), "--out", p(&data)]);
    let pobj = syn.join("posters.pobj");
    let mut bytes = std::fs::read(&pobj).unwrap();
    bytes[40] ^= 0xff;
    std::fs::write(&pobj, bytes).unwrap();
    let out = boxoffice(&[
        "--config", p(&cfg), "pretrain", "--data", p(&data),
        "--clusters", p(&data.join("clusters.json")), "--posters", p(&pobj), "--out", p(&dir.path().join("pre")),
    ]);
    assert_eq!(out.status.code(), Some(3));
    let v: serde_json::Value = serde_json::from_str(String::from_utf8_lossy(&out.stderr).trim()).unwrap();
    assert_eq!(v["error"], "format");
    assert!(v["message"].as_str().unwrap().contains("byte"));
}
