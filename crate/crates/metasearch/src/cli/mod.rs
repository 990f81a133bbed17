//! Command-line surface: experiment configuration, run persistence, and
//! report emission over the engine's library modules.

mod artifact;
mod commands;
mod config;

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

pub use artifact::{prepare_run_dir, EnvironmentRecord};
pub use commands::{
    cmd_crossval, cmd_eval, cmd_print_config, cmd_report, cmd_synth, cmd_train, corpus_item_ids,
    dev_criterion, load_config_corpus, pair_pearson_scores, parse_split, parse_variant,
    refold_corpus, resolve, retrieval_map_scores, run_training, TrainRun,
};
pub use config::{
    load_experiment_config, save_experiment_config, CorpusKind, EncoderSettings, EvalSettings,
    ExperimentConfig,
};

use crate::error::{Error, Result};

#[derive(Debug, Parser)]
#[command(
    name = "metasearch",
    version,
    about = "Meta-learning engine for multilingual sentence-level semantic search"
)]
pub struct Cli {
    /// Root directory that relative paths resolve against.
    #[arg(long, global = true, default_value = ".")]
    pub run_dir: PathBuf,

    /// Worker count; results are deterministic at any setting.
    #[arg(long, global = true, env = "METASEARCH_WORKERS", default_value_t = 1)]
    pub workers: usize,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct OutArgs {
    /// Output run directory.
    #[arg(long)]
    pub out: PathBuf,

    /// Overwrite a non-empty output directory.
    #[arg(long)]
    pub force: bool,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate the synthetic multilingual corpora from a spec file.
    Synth {
        /// Synthetic corpus spec (JSON).
        #[arg(long)]
        spec: PathBuf,
        #[command(flatten)]
        out: OutArgs,
    },
    /// Train a learner per an experiment config and persist the run.
    Train {
        /// Experiment config (JSON).
        #[arg(long)]
        config: PathBuf,
        #[command(flatten)]
        out: OutArgs,
    },
    /// Score a checkpoint on one corpus split.
    Eval {
        /// Checkpoint written by train.
        #[arg(long)]
        checkpoint: PathBuf,
        /// Corpus file.
        #[arg(long)]
        corpus: PathBuf,
        /// Corpus kind: retrieval or pairs.
        #[arg(long, default_value = "retrieval")]
        corpus_kind: String,
        /// Split to score: train, dev, or test.
        #[arg(long, default_value = "test")]
        split: String,
        /// Pool variant: mono, bi, or multi.
        #[arg(long, default_value = "multi")]
        variant: String,
        /// Query languages (comma separated; default: all corpus languages).
        #[arg(long, value_delimiter = ',')]
        query_langs: Vec<String>,
        /// Candidate languages (comma separated; default: all corpus languages).
        #[arg(long, value_delimiter = ',')]
        candidate_langs: Vec<String>,
        #[command(flatten)]
        out: OutArgs,
    },
    /// K-fold cross-validation: train and score once per fold.
    Crossval {
        /// Experiment config (JSON).
        #[arg(long)]
        config: PathBuf,
        #[command(flatten)]
        out: OutArgs,
    },
    /// Print the fully resolved configuration.
    PrintConfig {
        /// Config file to resolve; omitted means the shipped defaults.
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Summarize an existing run directory.
    Report {
        /// Run directory written by train, eval, or crossval.
        #[arg(long)]
        run: PathBuf,
    },
}

/// Executes a parsed invocation. Paths are resolved against `run_dir` here
/// so the command implementations only ever see final paths.
pub fn dispatch(cli: Cli) -> Result<()> {
    if cli.workers == 0 {
        return Err(Error::config("--workers must be at least 1"));
    }
    let root = cli.run_dir.as_path();
    match cli.command {
        Command::Synth { spec, out } => {
            cmd_synth(&resolve(root, &spec), &resolve(root, &out.out), out.force)
        }
        Command::Train { config, out } => cmd_train(
            &resolve(root, &config),
            root,
            &resolve(root, &out.out),
            out.force,
            cli.workers,
        ),
        Command::Eval {
            checkpoint,
            corpus,
            corpus_kind,
            split,
            variant,
            query_langs,
            candidate_langs,
            out,
        } => cmd_eval(
            &resolve(root, &checkpoint),
            &resolve(root, &corpus),
            corpus_kind.parse()?,
            parse_split(&split)?,
            parse_variant(&variant)?,
            &query_langs,
            &candidate_langs,
            &resolve(root, &out.out),
            out.force,
        ),
        Command::Crossval { config, out } => cmd_crossval(
            &resolve(root, &config),
            root,
            &resolve(root, &out.out),
            out.force,
            cli.workers,
        ),
        Command::PrintConfig { config } => {
            cmd_print_config(config.map(|p| resolve(root, &p)).as_deref())
        }
        Command::Report { run } => cmd_report(&resolve(root, &run)),
    }
}

/// Entry point for the binary: parses arguments, runs the command, and maps
/// errors onto the stable exit-code contract (0 success, 2 config, 3 data,
/// 4 numeric).
pub fn run() -> i32 {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match dispatch(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

#[cfg(test)]
mod tests {
    use std::fs;
    use std::path::Path;

    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    use super::*;
    use crate::data::{generate_synthetic_corpus, save_retrieval_corpus, Split, SyntheticSpec};
    use crate::learners::LearnerKind;
    use crate::meta_tasks::PhaseCounts;
    use crate::model::ParameterVector;

    fn small_spec() -> SyntheticSpec {
        SyntheticSpec {
            concept_count: 40,
            questions_per_language: 160,
            pairs_per_language_pair: 40,
            ..SyntheticSpec::default()
        }
    }

    fn small_config(corpus_file: &str) -> ExperimentConfig {
        let mut cfg = ExperimentConfig {
            corpus: corpus_file.to_string(),
            ..ExperimentConfig::default()
        };
        cfg.encoder.embed_dim = 8;
        cfg.sampling.counts = PhaseCounts {
            meta_train: 8,
            meta_valid: 4,
            meta_test: 4,
        };
        cfg.train.max_epochs = 1;
        cfg.train.patience = 100;
        cfg.folds = 3;
        cfg
    }

    fn write_corpus(dir: &Path) -> String {
        let corpus = generate_synthetic_corpus(&small_spec()).unwrap();
        let path = dir.join("retrieval.jsonl");
        save_retrieval_corpus(&path, &corpus.retrieval, &corpus.vocab).unwrap();
        "retrieval.jsonl".to_string()
    }

    #[test]
    fn default_config_round_trips_and_validates() {
        let cfg = ExperimentConfig::default();
        cfg.validate().unwrap();
        let text = serde_json::to_string(&cfg).unwrap();
        let back: ExperimentConfig = serde_json::from_str(&text).unwrap();
        assert_eq!(cfg, back);
        assert_eq!(cfg.sampling.counts.meta_train, 7000);
        assert_eq!(cfg.train.patience, 50);
        assert_eq!(cfg.folds, 5);
    }

    #[test]
    fn empty_config_file_resolves_to_defaults() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("cfg.json");
        fs::write(&path, "{}").unwrap();
        let cfg = load_experiment_config(&path).unwrap();
        assert_eq!(cfg, ExperimentConfig::default());
    }

    #[test]
    fn unknown_config_key_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("cfg.json");
        fs::write(&path, r#"{"learning_rate": 0.1}"#).unwrap();
        let err = load_experiment_config(&path).unwrap_err();
        assert_eq!(err.exit_code(), 2);
    }

    #[test]
    fn run_dir_overwrite_is_refused_without_force() {
        let dir = tempfile::tempdir().unwrap();
        let run = dir.path().join("run");
        fs::create_dir(&run).unwrap();
        fs::write(run.join("history.jsonl"), "x").unwrap();
        let err = prepare_run_dir(&run, false).unwrap_err();
        assert_eq!(err.exit_code(), 2);
        prepare_run_dir(&run, true).unwrap();
        let empty = dir.path().join("fresh");
        prepare_run_dir(&empty, false).unwrap();
        assert!(empty.is_dir());
    }

    #[test]
    fn synth_twice_produces_identical_files() {
        let dir = tempfile::tempdir().unwrap();
        let spec_path = dir.path().join("spec.json");
        fs::write(&spec_path, serde_json::to_string(&small_spec()).unwrap()).unwrap();
        let out_a = dir.path().join("a");
        let out_b = dir.path().join("b");
        cmd_synth(&spec_path, &out_a, false).unwrap();
        cmd_synth(&spec_path, &out_b, false).unwrap();
        for file in ["retrieval.jsonl", "pairs.jsonl", "retrieval.vocab.txt"] {
            let a = fs::read(out_a.join(file)).unwrap();
            let b = fs::read(out_b.join(file)).unwrap();
            assert_eq!(a, b, "{file} differs between identical synth runs");
        }
    }

    #[test]
    fn synth_rejects_invalid_spec_with_config_exit() {
        let dir = tempfile::tempdir().unwrap();
        let spec_path = dir.path().join("spec.json");
        let mut spec = small_spec();
        spec.rho_neg = 2.0;
        fs::write(&spec_path, serde_json::to_string(&spec).unwrap()).unwrap();
        let err = cmd_synth(&spec_path, &dir.path().join("out"), false).unwrap_err();
        assert_eq!(err.exit_code(), 2);
    }

    #[test]
    fn train_writes_full_artifact_and_is_deterministic() {
        let dir = tempfile::tempdir().unwrap();
        let corpus_file = write_corpus(dir.path());
        let cfg = small_config(&corpus_file);
        let cfg_path = dir.path().join("cfg.json");
        save_experiment_config(&cfg_path, &cfg).unwrap();
        let out_a = dir.path().join("run_a");
        let out_b = dir.path().join("run_b");
        cmd_train(&cfg_path, dir.path(), &out_a, false, 1).unwrap();
        cmd_train(&cfg_path, dir.path(), &out_b, false, 1).unwrap();
        for file in [
            "config.json",
            "history.jsonl",
            "checkpoint_best.bin",
            "checkpoint_final.bin",
            "environment.json",
        ] {
            assert!(out_a.join(file).exists(), "missing {file}");
            let a = fs::read(out_a.join(file)).unwrap();
            let b = fs::read(out_b.join(file)).unwrap();
            assert_eq!(a, b, "{file} differs between identically seeded runs");
        }
    }

    #[test]
    fn eval_reports_per_language_scores_from_trained_checkpoint() {
        let dir = tempfile::tempdir().unwrap();
        let corpus_file = write_corpus(dir.path());
        let cfg = small_config(&corpus_file);
        let cfg_path = dir.path().join("cfg.json");
        save_experiment_config(&cfg_path, &cfg).unwrap();
        let run = dir.path().join("run");
        cmd_train(&cfg_path, dir.path(), &run, false, 1).unwrap();
        let eval_out = dir.path().join("eval");
        cmd_eval(
            &run.join("checkpoint_best.bin"),
            &dir.path().join(&corpus_file),
            CorpusKind::Retrieval,
            Split::Test,
            crate::eval::PoolVariant::Multi,
            &[],
            &[],
            &eval_out,
            false,
        )
        .unwrap();
        let text = fs::read_to_string(eval_out.join("report.jsonl")).unwrap();
        let report: crate::eval::MetricReport = serde_json::from_str(text.trim()).unwrap();
        assert_eq!(report.per_language.len(), 4);
        assert_eq!(report.fold_count, 4);
        assert!(eval_out.join("report.csv").exists());
        assert!(eval_out.join("report.txt").exists());
        cmd_report(&eval_out).unwrap();
    }

    #[test]
    fn eval_bilingual_pool_with_equal_languages_is_a_data_error() {
        let dir = tempfile::tempdir().unwrap();
        let corpus_file = write_corpus(dir.path());
        let corpus_path = dir.path().join(&corpus_file);
        let encoder = EncoderSettings::default().to_encoder(500);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let params = ParameterVector::init(&encoder, &mut rng);
        let ck = dir.path().join("ck.bin");
        crate::model::save_checkpoint(&ck, &encoder, &params).unwrap();
        let err = cmd_eval(
            &ck,
            &corpus_path,
            CorpusKind::Retrieval,
            Split::Test,
            crate::eval::PoolVariant::Bi,
            &["AR".to_string()],
            &["AR".to_string()],
            &dir.path().join("eval"),
            false,
        )
        .unwrap_err();
        assert_eq!(err.exit_code(), 3);
    }

    #[test]
    fn crossval_writes_per_fold_files_and_consistent_aggregate() {
        let dir = tempfile::tempdir().unwrap();
        let corpus_file = write_corpus(dir.path());
        let mut cfg = small_config(&corpus_file);
        cfg.train.learner = LearnerKind::FineTune;
        let cfg_path = dir.path().join("cfg.json");
        save_experiment_config(&cfg_path, &cfg).unwrap();
        let out = dir.path().join("cv");
        cmd_crossval(&cfg_path, dir.path(), &out, false, 1).unwrap();
        let text = fs::read_to_string(out.join("report.jsonl")).unwrap();
        let report: crate::eval::MetricReport = serde_json::from_str(text.trim()).unwrap();
        assert_eq!(report.fold_count, 3);
        let mut fold_scores = Vec::new();
        for fold in 0..3 {
            assert!(out.join(format!("fold{fold}_history.jsonl")).exists());
            let t = fs::read_to_string(out.join(format!("fold{fold}_report.jsonl"))).unwrap();
            let r: crate::eval::MetricReport = serde_json::from_str(t.trim()).unwrap();
            fold_scores.push(r.mean);
        }
        let mean = fold_scores.iter().sum::<f64>() / fold_scores.len() as f64;
        assert!((mean - report.mean).abs() < 1e-12);
        assert!(!report.per_language.is_empty());
    }

    #[test]
    fn crossval_rejects_single_fold() {
        let dir = tempfile::tempdir().unwrap();
        let corpus_file = write_corpus(dir.path());
        let mut cfg = small_config(&corpus_file);
        cfg.folds = 1;
        let cfg_path = dir.path().join("cfg.json");
        save_experiment_config(&cfg_path, &cfg).unwrap();
        let err = cmd_crossval(&cfg_path, dir.path(), &dir.path().join("cv"), false, 1).unwrap_err();
        assert_eq!(err.exit_code(), 2);
    }

    #[test]
    fn refold_covers_every_record_and_respects_held_out_ids() {
        let corpus = generate_synthetic_corpus(&small_spec()).unwrap();
        let full = crate::data::Corpus::Retrieval(corpus.retrieval);
        let ids = corpus_item_ids(&full);
        let held: Vec<String> = ids.iter().take(ids.len() / 3).cloned().collect();
        let refolded = refold_corpus(&full, &held);
        let crate::data::Corpus::Retrieval(r) = &refolded else {
            panic!("kind changed");
        };
        let held_set: std::collections::BTreeSet<&str> =
            held.iter().map(String::as_str).collect();
        let mut counts = std::collections::BTreeMap::new();
        for rec in r.iter_records() {
            *counts.entry(rec.split).or_insert(0usize) += 1;
            if held_set.contains(rec.question_id.as_str()) {
                assert_eq!(rec.split, Split::Test);
            } else {
                assert_ne!(rec.split, Split::Test);
            }
        }
        assert!(counts.values().all(|&c| c > 0), "some split is empty: {counts:?}");
        let total: usize = counts.values().sum();
        let crate::data::Corpus::Retrieval(orig) = &full else {
            unreachable!()
        };
        assert_eq!(total, orig.iter_records().count());
    }

    #[test]
    fn cli_parses_and_rejects_zero_workers() {
        let cli = Cli::try_parse_from([
            "metasearch",
            "--run-dir",
            "/tmp",
            "print-config",
        ])
        .unwrap();
        assert!(matches!(cli.command, Command::PrintConfig { config: None }));
        let cli = Cli::try_parse_from(["metasearch", "--workers", "0", "print-config"]).unwrap();
        let err = dispatch(cli).unwrap_err();
        assert_eq!(err.exit_code(), 2);
    }
}
