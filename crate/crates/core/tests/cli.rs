use std::path::{Path, PathBuf};
use std::process::{Command, Output};

const TINY: &str = r#"
output_dir = "out"
parent_scope = "corpus"
workers = 1

[corpus.synth]
genres = 2
vocabulary = 12
docs_per_genre = 8
min_len = 40
max_len = 60
seed = 3

[model]
family = "rnn"
hidden = 8
classes = 4

[parent]
epochs = 2

[adapt]
epochs = 2

[features]
recipes = ["dv_rnn_hk", "tfidf2_50", "random10"]

[evaluation]
folds = 4
seed = 1
"#;

fn docvec(config: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_docvec"))
        .arg("--config")
        .arg(config)
        .args(["--log-level", "warn"])
        .args(args)
        .output()
        .expect("binary runs")
}

fn setup(body: &str) -> (tempfile::TempDir, PathBuf) {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("docvec.toml");
    std::fs::write(&cfg, body).unwrap();
    (dir, cfg)
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn full_run_reports_every_recipe_and_rerun_skips() {
    let (dir, cfg) = setup(TINY);
    let first = docvec(&cfg, &["run"]);
    assert!(first.status.success(), "{}", stderr(&first));
    let table = std::fs::read_to_string(dir.path().join("out/report.tsv")).unwrap();
    let rows: Vec<&str> = table
        .lines()
        .filter(|l| !l.starts_with('#') && !l.starts_with("recipe"))
        .take_while(|l| !l.is_empty())
        .collect();
    let names: Vec<&str> = rows.iter().map(|r| r.split('\t').next().unwrap()).collect();
    assert_eq!(names, ["dv_rnn_hk", "tfidf2_50", "random10"]);

    let report = std::fs::read(dir.path().join("out/report.json")).unwrap();
    let second = docvec(&cfg, &["run"]);
    assert!(second.status.success(), "{}", stderr(&second));
    let log = stderr(&second);
    assert_eq!(log.matches("skipped (up to date)").count(), 7, "{log}");
    assert_eq!(std::fs::read(dir.path().join("out/report.json")).unwrap(), report);
}

#[test]
fn evaluate_before_features_names_missing_export() {
    let (_dir, cfg) = setup(TINY);
    assert!(docvec(&cfg, &["ingest"]).status.success());
    let out = docvec(&cfg, &["evaluate"]);
    assert!(!out.status.success());
    let err = stderr(&out);
    assert!(err.contains("dv_rnn_hk.dv"), "{err}");
}

#[test]
fn changed_config_is_refused_without_force() {
    let (_dir, cfg) = setup(TINY);
    assert!(docvec(&cfg, &["ingest"]).status.success());
    std::fs::write(&cfg, TINY.replace("seed = 3", "seed = 4")).unwrap();
    let out = docvec(&cfg, &["ingest"]);
    assert!(!out.status.success());
    assert!(stderr(&out).contains("fingerprint"), "{}", stderr(&out));
    assert!(docvec(&cfg, &["--force", "ingest"]).status.success());
}

#[test]
fn bad_config_fails_cleanly() {
    let (_dir, cfg) = setup("[model]\nfamily = \"gru\"\n");
    let out = docvec(&cfg, &["ingest"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).starts_with("error:"));
}
