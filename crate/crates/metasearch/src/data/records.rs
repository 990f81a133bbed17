//! Corpus record schemas and in-memory corpus containers.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Dev,
    Test,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::Train, Split::Dev, Split::Test];
}

impl std::fmt::Display for Split {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            Split::Train => "train",
            Split::Dev => "dev",
            Split::Test => "test",
        };
        f.write_str(s)
    }
}

/// A language-tagged question with its answer-in-context, for asymmetric
/// search. The same `question_id` across languages marks parallel records.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RetrievalRecord {
    pub question_id: String,
    pub language: String,
    pub split: Split,
    pub question: Vec<usize>,
    pub answer: Vec<usize>,
    pub context: Vec<usize>,
}

impl RetrievalRecord {
    /// Candidate-side token sequence: answer concatenated with its context.
    pub fn candidate_tokens(&self) -> Vec<usize> {
        let mut t = self.answer.clone();
        t.extend_from_slice(&self.context);
        t
    }
}

/// A scored sentence pair for symmetric search. Gold keeps the raw 1..5 scale.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SentencePairRecord {
    pub pair_id: String,
    pub language_pair: (String, String),
    pub split: Split,
    pub sentence1: Vec<usize>,
    pub sentence2: Vec<usize>,
    /// Absent gold (partially annotated corpora) drops the record at load time.
    pub gold: Option<f64>,
}

pub(crate) fn validate_language_code(code: &str) -> bool {
    !code.is_empty()
        && code.len() <= 8
        && code.chars().all(|c| c.is_ascii_uppercase() || c.is_ascii_digit())
}

/// Asymmetric-search corpus indexed by split, language, question id.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RetrievalCorpus {
    pub vocab_size: usize,
    pub records: BTreeMap<Split, BTreeMap<String, BTreeMap<String, RetrievalRecord>>>,
}

impl RetrievalCorpus {
    pub fn insert(&mut self, rec: RetrievalRecord) {
        self.records
            .entry(rec.split)
            .or_default()
            .entry(rec.language.clone())
            .or_default()
            .insert(rec.question_id.clone(), rec);
    }

    pub fn languages(&self) -> Vec<String> {
        let mut langs = BTreeSet::new();
        for by_lang in self.records.values() {
            langs.extend(by_lang.keys().cloned());
        }
        langs.into_iter().collect()
    }

    pub fn question_ids(&self, split: Split, lang: &str) -> Vec<&str> {
        self.records
            .get(&split)
            .and_then(|m| m.get(lang))
            .map(|m| m.keys().map(String::as_str).collect())
            .unwrap_or_default()
    }

    pub fn get(&self, split: Split, lang: &str, qid: &str) -> Option<&RetrievalRecord> {
        self.records.get(&split)?.get(lang)?.get(qid)
    }

    pub fn require(&self, split: Split, lang: &str, qid: &str) -> Result<&RetrievalRecord> {
        self.get(split, lang, qid).ok_or_else(|| {
            Error::corpus(format!("missing record {split}/{lang}/{qid}"))
        })
    }

    pub fn count(&self, split: Split, lang: &str) -> usize {
        self.records
            .get(&split)
            .and_then(|m| m.get(lang))
            .map_or(0, BTreeMap::len)
    }

    pub fn is_empty(&self) -> bool {
        self.records.values().all(|m| m.values().all(BTreeMap::is_empty))
    }

    pub fn iter_records(&self) -> impl Iterator<Item = &RetrievalRecord> {
        self.records
            .values()
            .flat_map(|m| m.values())
            .flat_map(|m| m.values())
    }

    /// Question ids present in `lang` for every requested language (parallel
    /// subset).
    pub fn parallel_ids(&self, split: Split, langs: &[String]) -> Vec<String> {
        let mut iter = langs.iter();
        let Some(first) = iter.next() else {
            return Vec::new();
        };
        let mut ids: BTreeSet<String> = self
            .question_ids(split, first)
            .into_iter()
            .map(str::to_string)
            .collect();
        for lang in iter {
            let other: BTreeSet<String> = self
                .question_ids(split, lang)
                .into_iter()
                .map(str::to_string)
                .collect();
            ids = ids.intersection(&other).cloned().collect();
        }
        ids.into_iter().collect()
    }
}

/// Symmetric-search corpus indexed by split, language pair, pair id.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PairCorpus {
    pub vocab_size: usize,
    #[allow(clippy::type_complexity)]
    pub records: BTreeMap<Split, BTreeMap<(String, String), BTreeMap<String, SentencePairRecord>>>,
}

impl PairCorpus {
    pub fn insert(&mut self, rec: SentencePairRecord) {
        self.records
            .entry(rec.split)
            .or_default()
            .entry(rec.language_pair.clone())
            .or_default()
            .insert(rec.pair_id.clone(), rec);
    }

    pub fn language_pairs(&self) -> Vec<(String, String)> {
        let mut pairs = BTreeSet::new();
        for by_pair in self.records.values() {
            pairs.extend(by_pair.keys().cloned());
        }
        pairs.into_iter().collect()
    }

    pub fn pair_ids(&self, split: Split, langs: &(String, String)) -> Vec<&str> {
        self.records
            .get(&split)
            .and_then(|m| m.get(langs))
            .map(|m| m.keys().map(String::as_str).collect())
            .unwrap_or_default()
    }

    pub fn get(&self, split: Split, langs: &(String, String), pid: &str) -> Option<&SentencePairRecord> {
        self.records.get(&split)?.get(langs)?.get(pid)
    }

    pub fn require(
        &self,
        split: Split,
        langs: &(String, String),
        pid: &str,
    ) -> Result<&SentencePairRecord> {
        self.get(split, langs, pid).ok_or_else(|| {
            Error::corpus(format!(
                "missing pair record {split}/{}-{}/{pid}",
                langs.0, langs.1
            ))
        })
    }

    pub fn count(&self, split: Split, langs: &(String, String)) -> usize {
        self.records
            .get(&split)
            .and_then(|m| m.get(langs))
            .map_or(0, BTreeMap::len)
    }

    pub fn iter_records(&self) -> impl Iterator<Item = &SentencePairRecord> {
        self.records
            .values()
            .flat_map(|m| m.values())
            .flat_map(|m| m.values())
    }
}

/// Either corpus kind behind one handle; the learners and the CLI dispatch on
/// it.
#[derive(Debug, Clone, PartialEq)]
pub enum Corpus {
    Retrieval(RetrievalCorpus),
    Pairs(PairCorpus),
}

impl Corpus {
    pub fn vocab_size(&self) -> usize {
        match self {
            Corpus::Retrieval(c) => c.vocab_size,
            Corpus::Pairs(c) => c.vocab_size,
        }
    }
}
