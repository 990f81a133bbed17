//! Implementations of the CLI subcommands, exposed as library functions so
//! tests can drive them without spawning processes.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::data::{
    generate_synthetic_corpus, load_pair_corpus, load_retrieval_corpus, save_pair_corpus,
    save_retrieval_corpus, Corpus, PairCorpus, RetrievalCorpus, Split, SyntheticSpec,
};
use crate::error::{Error, Result};
use crate::eval::{
    build_pool, map_at_20, mean_and_population_std, pearson_r_times_100, stable_id_hash,
    MetricReport, PoolVariant,
};
use crate::learners::{load_history, save_history, train, TrainHistory};
use crate::meta_tasks::{substream_seed, Phase, TaskSampler};
use crate::model::{
    encode, load_checkpoint, save_checkpoint, EncoderConfig, ParameterVector, TokenBatch,
};

use super::artifact::{prepare_run_dir, EnvironmentRecord};
use super::config::{
    load_experiment_config, save_experiment_config, CorpusKind, EvalSettings, ExperimentConfig,
};

pub fn parse_split(s: &str) -> Result<Split> {
    match s {
        "train" => Ok(Split::Train),
        "dev" => Ok(Split::Dev),
        "test" => Ok(Split::Test),
        other => Err(Error::config(format!(
            "unknown split {other:?}; expected train, dev, or test"
        ))),
    }
}

pub fn parse_variant(s: &str) -> Result<PoolVariant> {
    match s {
        "mono" => Ok(PoolVariant::Mono),
        "bi" => Ok(PoolVariant::Bi),
        "multi" => Ok(PoolVariant::Multi),
        other => Err(Error::config(format!(
            "unknown variant {other:?}; expected mono, bi, or multi"
        ))),
    }
}

fn load_spec(path: &Path) -> Result<SyntheticSpec> {
    let text = fs::read_to_string(path)
        .map_err(|e| Error::config(format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| Error::config(format!("{}: {e}", path.display())))
}

/// Generates the synthetic retrieval and pair corpora for a spec file and
/// writes them (plus vocabulary sidecars) into the output directory.
pub fn cmd_synth(spec_path: &Path, out_dir: &Path, force: bool) -> Result<()> {
    let spec = load_spec(spec_path)?;
    let corpus = generate_synthetic_corpus(&spec)?;
    prepare_run_dir(out_dir, force)?;
    save_retrieval_corpus(&out_dir.join("retrieval.jsonl"), &corpus.retrieval, &corpus.vocab)?;
    save_pair_corpus(&out_dir.join("pairs.jsonl"), &corpus.pairs, &corpus.vocab)?;
    let mut counts = Vec::new();
    for lang in corpus.retrieval.languages() {
        let n: usize = [Split::Train, Split::Dev, Split::Test]
            .iter()
            .map(|s| corpus.retrieval.count(*s, &lang))
            .sum();
        counts.push(format!("{lang}: {n} questions"));
    }
    println!(
        "wrote retrieval.jsonl and pairs.jsonl to {} (vocab {} tokens; {})",
        out_dir.display(),
        corpus.vocab.len(),
        counts.join(", ")
    );
    Ok(())
}

/// Loads the corpus named by the config, resolving a relative path against
/// `root`. Loader warnings go to stderr.
pub fn load_config_corpus(cfg: &ExperimentConfig, root: &Path) -> Result<Corpus> {
    let path = resolve(root, Path::new(&cfg.corpus));
    let corpus = match cfg.corpus_kind {
        CorpusKind::Retrieval => {
            let (c, report) = load_retrieval_corpus(&path)?;
            for w in &report.warnings {
                eprintln!("warning: {w}");
            }
            Corpus::Retrieval(c)
        }
        CorpusKind::Pairs => {
            let (c, report) = load_pair_corpus(&path)?;
            for w in &report.warnings {
                eprintln!("warning: {w}");
            }
            Corpus::Pairs(c)
        }
    };
    cfg.check_corpus(&corpus)?;
    Ok(corpus)
}

pub fn resolve(root: &Path, path: &Path) -> PathBuf {
    if path.is_absolute() {
        path.to_path_buf()
    } else {
        root.join(path)
    }
}

fn candidate_langs_for(variant: PoolVariant, query_lang: &str, configured: &[String]) -> Vec<String> {
    match variant {
        PoolVariant::Mono => vec![query_lang.to_string()],
        PoolVariant::Bi => configured
            .iter()
            .filter(|l| l.as_str() != query_lang)
            .take(1)
            .cloned()
            .collect(),
        PoolVariant::Multi => configured.to_vec(),
    }
}

/// Per-query-language mAP@20 (on the 0..1 scale) for one split.
pub fn retrieval_map_scores(
    corpus: &RetrievalCorpus,
    split: Split,
    variant: PoolVariant,
    query_langs: &[String],
    candidate_langs: &[String],
    params: &ParameterVector,
    encoder: &EncoderConfig,
) -> Result<BTreeMap<String, f64>> {
    let mut scores = BTreeMap::new();
    for q in query_langs {
        let cands = candidate_langs_for(variant, q, candidate_langs);
        let pool = build_pool(corpus, split, variant, q, &cands)?;
        let result = map_at_20(params, &pool, encoder)?;
        for excluded in &result.excluded_queries {
            eprintln!("warning: query {q}:{excluded} has no relevant candidates, excluded");
        }
        scores.insert(q.clone(), result.map);
    }
    Ok(scores)
}

/// Pearson r x100 per language pair plus the pooled score over all pairs in
/// the split.
pub fn pair_pearson_scores(
    corpus: &PairCorpus,
    split: Split,
    params: &ParameterVector,
    encoder: &EncoderConfig,
) -> Result<(BTreeMap<String, f64>, f64)> {
    let mut per_pair = BTreeMap::new();
    let mut all_preds = Vec::new();
    let mut all_golds = Vec::new();
    for langs in corpus.language_pairs() {
        let ids = corpus.pair_ids(split, &langs);
        if ids.is_empty() {
            continue;
        }
        let mut s1 = Vec::new();
        let mut s2 = Vec::new();
        let mut golds = Vec::new();
        for pid in ids {
            let rec = corpus.require(split, &langs, pid)?;
            let gold = rec.gold.ok_or_else(|| {
                Error::corpus(format!("pair {pid} has no gold score"))
            })?;
            s1.push(rec.sentence1.clone());
            s2.push(rec.sentence2.clone());
            golds.push(gold);
        }
        let e1 = encode(
            params,
            &TokenBatch::from_sequences(&s1, encoder.max_sentence_len),
            encoder,
        )?;
        let e2 = encode(
            params,
            &TokenBatch::from_sequences(&s2, encoder.max_sentence_len),
            encoder,
        )?;
        let preds: Vec<f64> = e1
            .iter()
            .zip(&e2)
            .map(|(a, b)| crate::losses::cosine(a, b))
            .collect::<Result<_>>()?;
        let key = format!("{}-{}", langs.0, langs.1);
        per_pair.insert(key, pearson_r_times_100(&preds, &golds)?);
        all_preds.extend(preds);
        all_golds.extend(golds);
    }
    if per_pair.is_empty() {
        return Err(Error::corpus(format!("split {split} holds no sentence pairs")));
    }
    let overall = pearson_r_times_100(&all_preds, &all_golds)?;
    Ok((per_pair, overall))
}

/// Builds the dev criterion used during training: multilingual mAP@20
/// averaged over the configured query languages for retrieval corpora, or
/// pooled dev Pearson r x100 for pair corpora. Higher is better in both.
pub fn dev_criterion<'a>(
    corpus: &'a Corpus,
    encoder: &'a EncoderConfig,
    eval: &EvalSettings,
) -> Box<dyn FnMut(&ParameterVector) -> Result<f64> + 'a> {
    let eval = eval.clone();
    match corpus {
        Corpus::Retrieval(c) => Box::new(move |params| {
            let variant = if eval.candidate_langs.len() >= 2 {
                PoolVariant::Multi
            } else {
                PoolVariant::Mono
            };
            let scores = retrieval_map_scores(
                c,
                Split::Dev,
                variant,
                &eval.query_langs,
                &eval.candidate_langs,
                params,
                encoder,
            )?;
            Ok(scores.values().sum::<f64>() / scores.len() as f64)
        }),
        Corpus::Pairs(c) => Box::new(move |params| {
            let (_, overall) = pair_pearson_scores(c, Split::Dev, params, encoder)?;
            Ok(overall)
        }),
    }
}

pub struct TrainRun {
    pub history: TrainHistory,
    pub best_params: ParameterVector,
    pub final_params: ParameterVector,
    pub encoder: EncoderConfig,
}

/// Runs the configured learner end to end: sample the meta-datasets, train
/// with the dev criterion, and return everything a caller might persist.
pub fn run_training(cfg: &ExperimentConfig, corpus: &Corpus) -> Result<TrainRun> {
    let encoder = cfg.encoder.to_encoder(corpus.vocab_size());
    encoder.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.encoder.init_seed);
    let init = ParameterVector::init(&encoder, &mut rng);
    let sampler = TaskSampler::new(corpus, &encoder, Some(&init), cfg.sampling.clone())?;
    let meta_train = sampler.build_phase(cfg.mode, Phase::MetaTrain)?;
    let meta_valid = sampler.build_phase(cfg.mode, Phase::MetaValid)?;
    let mut criterion = dev_criterion(corpus, &encoder, &cfg.eval);
    let outcome = train(
        &cfg.train,
        &encoder,
        corpus,
        &meta_train,
        Some(&meta_valid),
        init,
        criterion.as_mut(),
    )?;
    drop(criterion);
    Ok(TrainRun {
        history: outcome.history,
        best_params: outcome.best_params,
        final_params: outcome.final_params,
        encoder,
    })
}

/// Trains per the config file and writes the run artifact: resolved config
/// snapshot, history, both checkpoints, and the environment record.
pub fn cmd_train(
    config_path: &Path,
    root: &Path,
    out_dir: &Path,
    force: bool,
    workers: usize,
) -> Result<()> {
    let cfg = load_experiment_config(config_path)?;
    let corpus = load_config_corpus(&cfg, root)?;
    prepare_run_dir(out_dir, force)?;
    let run = run_training(&cfg, &corpus)?;
    save_experiment_config(&out_dir.join("config.json"), &cfg)?;
    save_history(&out_dir.join("history.jsonl"), &run.history)?;
    save_checkpoint(&out_dir.join("checkpoint_best.bin"), &run.encoder, &run.best_params)?;
    save_checkpoint(&out_dir.join("checkpoint_final.bin"), &run.encoder, &run.final_params)?;
    EnvironmentRecord::new(
        cfg.train.seed,
        cfg.sampling.seed,
        cfg.encoder.init_seed,
        workers,
    )
    .save(&out_dir.join("environment.json"))?;
    println!(
        "dev criterion: baseline {:.6}, best {:.6} ({} batches{})",
        run.history.baseline_criterion,
        run.history.best_criterion,
        run.history.records.len(),
        if run.history.stopped_early {
            ", stopped early"
        } else {
            ""
        }
    );
    Ok(())
}

fn write_report(report: &MetricReport, out_dir: &Path, stem: &str) -> Result<()> {
    fs::write(out_dir.join(format!("{stem}.txt")), report.to_table())?;
    report.save_jsonl(&out_dir.join(format!("{stem}.jsonl")))?;
    report.save_csv(&out_dir.join(format!("{stem}.csv")))?;
    Ok(())
}

/// Scores one checkpoint on one corpus split and writes the report as a
/// table, JSONL, and CSV. Retrieval corpora report mAP@20 x100 per query
/// language under the requested variant; pair corpora report Pearson r x100
/// per language pair.
#[allow(clippy::too_many_arguments)]
pub fn cmd_eval(
    checkpoint: &Path,
    corpus_path: &Path,
    corpus_kind: CorpusKind,
    split: Split,
    variant: PoolVariant,
    query_langs: &[String],
    candidate_langs: &[String],
    out_dir: &Path,
    force: bool,
) -> Result<()> {
    let (encoder, params) = load_checkpoint(checkpoint)?;
    prepare_run_dir(out_dir, force)?;
    let report = match corpus_kind {
        CorpusKind::Retrieval => {
            let (corpus, load_report) = load_retrieval_corpus(corpus_path)?;
            for w in &load_report.warnings {
                eprintln!("warning: {w}");
            }
            let query_langs = if query_langs.is_empty() {
                corpus.languages()
            } else {
                query_langs.to_vec()
            };
            let candidate_langs = if candidate_langs.is_empty() {
                corpus.languages()
            } else {
                candidate_langs.to_vec()
            };
            let scores = retrieval_map_scores(
                &corpus,
                split,
                variant,
                &query_langs,
                &candidate_langs,
                &params,
                &encoder,
            )
            .map_err(|e| match e {
                Error::InvalidInput(m) => Error::corpus(format!("pool construction failed: {m}")),
                other => other,
            })?;
            let per_language: BTreeMap<String, f64> =
                scores.iter().map(|(k, v)| (k.clone(), v * 100.0)).collect();
            let mut report = MetricReport::from_fold_scores(
                "map@20-x100",
                per_language.values().copied().collect(),
            )?;
            report.per_language = per_language;
            report
        }
        CorpusKind::Pairs => {
            let (corpus, load_report) = load_pair_corpus(corpus_path)?;
            for w in &load_report.warnings {
                eprintln!("warning: {w}");
            }
            let (per_pair, _) = pair_pearson_scores(&corpus, split, &params, &encoder)?;
            let mut report = MetricReport::from_fold_scores(
                "pearson-r-x100",
                per_pair.values().copied().collect(),
            )?;
            report.per_language = per_pair;
            report
        }
    };
    write_report(&report, out_dir, "report")?;
    print!("{}", report.to_table());
    Ok(())
}

/// All distinct item ids of a corpus, the unit of fold assignment.
pub fn corpus_item_ids(corpus: &Corpus) -> Vec<String> {
    match corpus {
        Corpus::Retrieval(c) => {
            let ids: BTreeSet<String> =
                c.iter_records().map(|r| r.question_id.clone()).collect();
            ids.into_iter().collect()
        }
        Corpus::Pairs(c) => {
            let ids: BTreeSet<String> = c.iter_records().map(|r| r.pair_id.clone()).collect();
            ids.into_iter().collect()
        }
    }
}

/// Dev share of the kept ids during a fold: every fifth id by stable hash.
fn fold_dev_member(id: &str) -> bool {
    stable_id_hash(&format!("{id}#dev")) % 5 == 0
}

fn fold_split(id: &str, held_out: &BTreeSet<&str>) -> Split {
    if held_out.contains(id) {
        Split::Test
    } else if fold_dev_member(id) {
        Split::Dev
    } else {
        Split::Train
    }
}

/// Reassigns every record's split for one fold: held-out ids become the test
/// split, kept ids are re-divided into train and dev by a salted hash.
pub fn refold_corpus(corpus: &Corpus, held_out: &[String]) -> Corpus {
    let held: BTreeSet<&str> = held_out.iter().map(String::as_str).collect();
    match corpus {
        Corpus::Retrieval(c) => {
            let mut out = RetrievalCorpus {
                vocab_size: c.vocab_size,
                ..RetrievalCorpus::default()
            };
            for rec in c.iter_records() {
                let mut r = rec.clone();
                r.split = fold_split(&r.question_id, &held);
                out.insert(r);
            }
            Corpus::Retrieval(out)
        }
        Corpus::Pairs(c) => {
            let mut out = PairCorpus {
                vocab_size: c.vocab_size,
                ..PairCorpus::default()
            };
            for rec in c.iter_records() {
                let mut r = rec.clone();
                r.split = fold_split(&r.pair_id, &held);
                out.insert(r);
            }
            Corpus::Pairs(out)
        }
    }
}

/// Held-out score of trained parameters on a fold corpus: mean test
/// multilingual mAP@20 x100 for retrieval, pooled test Pearson r x100 for
/// pairs.
fn heldout_score(
    cfg: &ExperimentConfig,
    corpus: &Corpus,
    params: &ParameterVector,
    encoder: &EncoderConfig,
    per_language: &mut BTreeMap<String, Vec<f64>>,
) -> Result<f64> {
    match corpus {
        Corpus::Retrieval(c) => {
            let variant = if cfg.eval.candidate_langs.len() >= 2 {
                PoolVariant::Multi
            } else {
                PoolVariant::Mono
            };
            let scores = retrieval_map_scores(
                c,
                Split::Test,
                variant,
                &cfg.eval.query_langs,
                &cfg.eval.candidate_langs,
                params,
                encoder,
            )?;
            for (lang, s) in &scores {
                per_language.entry(lang.clone()).or_default().push(s * 100.0);
            }
            Ok(scores.values().sum::<f64>() / scores.len() as f64 * 100.0)
        }
        Corpus::Pairs(c) => {
            let (per_pair, overall) = pair_pearson_scores(c, Split::Test, params, encoder)?;
            for (pair, s) in &per_pair {
                per_language.entry(pair.clone()).or_default().push(*s);
            }
            Ok(overall)
        }
    }
}

/// K-fold cross-validation over the whole corpus: each fold re-splits by
/// item id, trains from a fold-specific initialization, and scores the
/// held-out split. Writes one history and one report per fold plus the
/// aggregate report.
pub fn cmd_crossval(
    config_path: &Path,
    root: &Path,
    out_dir: &Path,
    force: bool,
    workers: usize,
) -> Result<()> {
    let cfg = load_experiment_config(config_path)?;
    if cfg.folds < 2 {
        return Err(Error::config("cross-validation needs at least two folds"));
    }
    let corpus = load_config_corpus(&cfg, root)?;
    prepare_run_dir(out_dir, force)?;
    let ids = corpus_item_ids(&corpus);
    let mut per_language: BTreeMap<String, Vec<f64>> = BTreeMap::new();
    let metric = match cfg.corpus_kind {
        CorpusKind::Retrieval => "map@20-x100",
        CorpusKind::Pairs => "pearson-r-x100",
    };
    let mut fold_fn = |fold: usize, _kept: &[String], held_out: &[String]| -> Result<f64> {
        let fold_corpus = refold_corpus(&corpus, held_out);
        let mut fold_cfg = cfg.clone();
        fold_cfg.encoder.init_seed = substream_seed(cfg.encoder.init_seed, 97, fold as u64);
        let run = run_training(&fold_cfg, &fold_corpus)?;
        save_history(&out_dir.join(format!("fold{fold}_history.jsonl")), &run.history)?;
        let score = heldout_score(&cfg, &fold_corpus, &run.best_params, &run.encoder, &mut per_language)?;
        let fold_report = MetricReport {
            metric: metric.to_string(),
            fold_count: 1,
            fold_scores: vec![score],
            mean: score,
            std: 0.0,
            per_language: BTreeMap::new(),
        };
        fold_report.save_jsonl(&out_dir.join(format!("fold{fold}_report.jsonl")))?;
        println!("fold {fold}: {score:.4}");
        Ok(score)
    };
    let mut report = crate::eval::cross_validate(&ids, cfg.folds, metric, &mut fold_fn)?;
    report.per_language = per_language
        .into_iter()
        .map(|(lang, scores)| {
            let (mean, _) = mean_and_population_std(&scores)?;
            Ok((lang, mean))
        })
        .collect::<Result<_>>()?;
    save_experiment_config(&out_dir.join("config.json"), &cfg)?;
    EnvironmentRecord::new(
        cfg.train.seed,
        cfg.sampling.seed,
        cfg.encoder.init_seed,
        workers,
    )
    .save(&out_dir.join("environment.json"))?;
    write_report(&report, out_dir, "report")?;
    print!("{}", report.to_table());
    Ok(())
}

/// Prints the fully resolved configuration: the shipped defaults, or a
/// config file with all omitted keys materialized.
pub fn cmd_print_config(config_path: Option<&Path>) -> Result<()> {
    let cfg = match config_path {
        Some(p) => load_experiment_config(p)?,
        None => ExperimentConfig::default(),
    };
    println!("{}", serde_json::to_string_pretty(&cfg)?);
    Ok(())
}

/// Summarizes an existing run directory: training history and any metric
/// reports found.
pub fn cmd_report(run_dir: &Path) -> Result<()> {
    if !run_dir.is_dir() {
        return Err(Error::config(format!(
            "{} is not a run directory",
            run_dir.display()
        )));
    }
    let mut printed = false;
    let history_path = run_dir.join("history.jsonl");
    if history_path.exists() {
        let history = load_history(&history_path)?;
        println!(
            "history: baseline {:.6}, best {:.6} at batch {}, {} batches, stopped_early={}",
            history.baseline_criterion,
            history.best_criterion,
            history
                .best_batch
                .map_or("-".to_string(), |b| b.to_string()),
            history.records.len(),
            history.stopped_early
        );
        printed = true;
    }
    let mut report_paths: Vec<PathBuf> = fs::read_dir(run_dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            p.file_name()
                .and_then(|n| n.to_str())
                .is_some_and(|n| n.ends_with("report.jsonl"))
        })
        .collect();
    report_paths.sort();
    for path in report_paths {
        let text = fs::read_to_string(&path)?;
        let report: MetricReport = serde_json::from_str(text.trim())
            .map_err(|e| Error::data(path.display().to_string(), 1, e.to_string()))?;
        println!("{}:", path.file_name().unwrap().to_string_lossy());
        print!("{}", report.to_table());
        printed = true;
    }
    if !printed {
        println!("no history or reports in {}", run_dir.display());
    }
    Ok(())
}
