//! Declarative experiment configuration: one JSON document per run with
//! every default materialized on load.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::data::Corpus;
use crate::error::{Error, Result};
use crate::learners::TrainConfig;
use crate::meta_tasks::{SamplingConfig, TransferMode};
use crate::model::EncoderConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CorpusKind {
    Retrieval,
    Pairs,
}

impl std::str::FromStr for CorpusKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "retrieval" => Ok(CorpusKind::Retrieval),
            "pairs" => Ok(CorpusKind::Pairs),
            other => Err(Error::config(format!(
                "unknown corpus kind {other:?}; expected retrieval or pairs"
            ))),
        }
    }
}

/// Encoder shape without the vocabulary size, which always comes from the
/// corpus being loaded.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EncoderSettings {
    pub embed_dim: usize,
    pub max_question_len: usize,
    pub max_candidate_len: usize,
    pub max_sentence_len: usize,
    pub use_projection: bool,
    pub normalize_output: bool,
    /// Seed for the random initial parameters.
    pub init_seed: u64,
}

impl Default for EncoderSettings {
    fn default() -> Self {
        EncoderSettings {
            embed_dim: 16,
            max_question_len: 96,
            max_candidate_len: 256,
            max_sentence_len: 100,
            use_projection: true,
            normalize_output: true,
            init_seed: 7,
        }
    }
}

impl EncoderSettings {
    pub fn to_encoder(&self, vocab_size: usize) -> EncoderConfig {
        EncoderConfig {
            vocab_size,
            embed_dim: self.embed_dim,
            max_question_len: self.max_question_len,
            max_candidate_len: self.max_candidate_len,
            max_sentence_len: self.max_sentence_len,
            use_projection: self.use_projection,
            normalize_output: self.normalize_output,
        }
    }
}

/// Languages used for the dev criterion and for held-out scoring. For
/// retrieval corpora each query language is scored against the candidate
/// languages; pair corpora score every language pair in the split.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalSettings {
    pub query_langs: Vec<String>,
    pub candidate_langs: Vec<String>,
}

impl Default for EvalSettings {
    fn default() -> Self {
        let all = ["AR", "DE", "EL", "HI"].map(String::from).to_vec();
        EvalSettings {
            query_langs: all.clone(),
            candidate_langs: all,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Corpus file, resolved against the run root when relative.
    pub corpus: String,
    pub corpus_kind: CorpusKind,
    pub mode: TransferMode,
    pub encoder: EncoderSettings,
    pub sampling: SamplingConfig,
    pub train: TrainConfig,
    pub eval: EvalSettings,
    /// Cross-validation folds; only cmd_crossval reads it.
    pub folds: usize,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            corpus: "corpus.jsonl".to_string(),
            corpus_kind: CorpusKind::Retrieval,
            mode: TransferMode::MonoBi,
            encoder: EncoderSettings::default(),
            sampling: SamplingConfig::default(),
            train: TrainConfig::default(),
            eval: EvalSettings::default(),
            folds: 5,
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        if self.corpus.is_empty() {
            return Err(Error::config("corpus path must be non-empty"));
        }
        if self.eval.query_langs.is_empty() || self.eval.candidate_langs.is_empty() {
            return Err(Error::config(
                "eval query_langs and candidate_langs must be non-empty",
            ));
        }
        self.sampling.validate()?;
        self.train.validate()
    }

    /// Checks that the configured corpus kind matches the loaded corpus.
    pub fn check_corpus(&self, corpus: &Corpus) -> Result<()> {
        let ok = matches!(
            (self.corpus_kind, corpus),
            (CorpusKind::Retrieval, Corpus::Retrieval(_)) | (CorpusKind::Pairs, Corpus::Pairs(_))
        );
        if ok {
            Ok(())
        } else {
            Err(Error::config("corpus_kind disagrees with the corpus file"))
        }
    }
}

pub fn load_experiment_config(path: &Path) -> Result<ExperimentConfig> {
    let text = fs::read_to_string(path)
        .map_err(|e| Error::config(format!("{}: {e}", path.display())))?;
    let cfg: ExperimentConfig = serde_json::from_str(&text)
        .map_err(|e| Error::config(format!("{}: {e}", path.display())))?;
    cfg.validate()?;
    Ok(cfg)
}

pub fn save_experiment_config(path: &Path, cfg: &ExperimentConfig) -> Result<()> {
    fs::write(path, format!("{}\n", serde_json::to_string_pretty(cfg)?))?;
    Ok(())
}
