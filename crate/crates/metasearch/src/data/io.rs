//! JSONL corpus persistence with a plain-text vocabulary sidecar.
//!
//! A corpus file starts with a single header line naming the schema and the
//! vocabulary file (one token string per line, id equals line index). Every
//! following line is one record. Loading validates token ids against the
//! vocabulary, checks language codes, and reports the offending line on
//! failure. Pair records without a gold score are skipped with a warning
//! rather than rejected.

use std::collections::BTreeSet;
use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::records::{
    validate_language_code, PairCorpus, RetrievalCorpus, RetrievalRecord, SentencePairRecord,
};

pub const RETRIEVAL_SCHEMA: &str = "retrieval-v1";
pub const PAIRS_SCHEMA: &str = "pairs-v1";

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Header {
    schema: String,
    vocab: String,
}

/// Non-fatal observations collected while loading a corpus file.
#[derive(Debug, Clone, Default)]
pub struct LoadReport {
    pub records_loaded: usize,
    pub records_skipped: usize,
    pub warnings: Vec<String>,
}

fn path_str(path: &Path) -> String {
    path.display().to_string()
}

fn read_lines(path: &Path) -> Result<Vec<String>> {
    let text = fs::read_to_string(path)?;
    Ok(text.lines().map(str::to_string).collect())
}

fn parse_header(path: &Path, lines: &[String], expect_schema: &str) -> Result<PathBuf> {
    let first = lines
        .first()
        .ok_or_else(|| Error::data(path_str(path), 1, "empty corpus file"))?;
    let header: Header = serde_json::from_str(first)
        .map_err(|e| Error::data(path_str(path), 1, format!("bad header: {e}")))?;
    if header.schema != expect_schema {
        return Err(Error::data(
            path_str(path),
            1,
            format!("schema {:?}, expected {:?}", header.schema, expect_schema),
        ));
    }
    let dir = path.parent().unwrap_or_else(|| Path::new("."));
    Ok(dir.join(header.vocab))
}

/// Reads a vocabulary sidecar: one token per line, id equals line number
/// starting at zero. Line 0 must be the padding token.
pub fn load_vocab(path: &Path) -> Result<Vec<String>> {
    let lines = read_lines(path)?;
    if lines.is_empty() {
        return Err(Error::data(path_str(path), 1, "empty vocabulary"));
    }
    let mut seen = BTreeSet::new();
    for (i, tok) in lines.iter().enumerate() {
        if tok.is_empty() {
            return Err(Error::data(path_str(path), i + 1, "empty token string"));
        }
        if !seen.insert(tok.clone()) {
            return Err(Error::data(
                path_str(path),
                i + 1,
                format!("duplicate token {tok:?}"),
            ));
        }
    }
    Ok(lines)
}

pub fn save_vocab(path: &Path, vocab: &[String]) -> Result<()> {
    let mut out = BufWriter::new(fs::File::create(path)?);
    for tok in vocab {
        writeln!(out, "{tok}")?;
    }
    out.flush()?;
    Ok(())
}

fn check_tokens(
    path: &Path,
    line: usize,
    field: &str,
    tokens: &[usize],
    vocab_size: usize,
) -> Result<()> {
    for &t in tokens {
        if t >= vocab_size {
            return Err(Error::data(
                path_str(path),
                line,
                format!("{field}: token id {t} outside vocabulary of {vocab_size}"),
            ));
        }
    }
    Ok(())
}

/// Loads an asymmetric-search corpus. Duplicate (split, language, question id)
/// keys and malformed records are hard errors with the file line attached.
pub fn load_retrieval_corpus(path: &Path) -> Result<(RetrievalCorpus, LoadReport)> {
    let lines = read_lines(path)?;
    let vocab_path = parse_header(path, &lines, RETRIEVAL_SCHEMA)?;
    let vocab = load_vocab(&vocab_path)?;
    let mut corpus = RetrievalCorpus {
        vocab_size: vocab.len(),
        ..RetrievalCorpus::default()
    };
    let mut report = LoadReport::default();
    for (idx, line) in lines.iter().enumerate().skip(1) {
        let lineno = idx + 1;
        if line.trim().is_empty() {
            continue;
        }
        let rec: RetrievalRecord = serde_json::from_str(line)
            .map_err(|e| Error::data(path_str(path), lineno, e.to_string()))?;
        if !validate_language_code(&rec.language) {
            return Err(Error::data(
                path_str(path),
                lineno,
                format!("bad language code {:?}", rec.language),
            ));
        }
        if rec.question_id.is_empty() {
            return Err(Error::data(path_str(path), lineno, "empty question_id"));
        }
        check_tokens(path, lineno, "question", &rec.question, vocab.len())?;
        check_tokens(path, lineno, "answer", &rec.answer, vocab.len())?;
        check_tokens(path, lineno, "context", &rec.context, vocab.len())?;
        if rec.question.is_empty() || rec.answer.is_empty() {
            return Err(Error::data(
                path_str(path),
                lineno,
                "question and answer must be non-empty",
            ));
        }
        if corpus.get(rec.split, &rec.language, &rec.question_id).is_some() {
            return Err(Error::data(
                path_str(path),
                lineno,
                format!(
                    "duplicate record {}/{}/{}",
                    rec.split, rec.language, rec.question_id
                ),
            ));
        }
        corpus.insert(rec);
        report.records_loaded += 1;
    }
    if report.records_loaded == 0 {
        report
            .warnings
            .push(format!("{}: no records after the header", path_str(path)));
    }
    Ok((corpus, report))
}

/// Loads a symmetric-search corpus. Records without a gold score are skipped
/// and noted in the report; gold outside [1, 5] is a hard error.
pub fn load_pair_corpus(path: &Path) -> Result<(PairCorpus, LoadReport)> {
    let lines = read_lines(path)?;
    let vocab_path = parse_header(path, &lines, PAIRS_SCHEMA)?;
    let vocab = load_vocab(&vocab_path)?;
    let mut corpus = PairCorpus {
        vocab_size: vocab.len(),
        ..PairCorpus::default()
    };
    let mut report = LoadReport::default();
    for (idx, line) in lines.iter().enumerate().skip(1) {
        let lineno = idx + 1;
        if line.trim().is_empty() {
            continue;
        }
        let rec: SentencePairRecord = serde_json::from_str(line)
            .map_err(|e| Error::data(path_str(path), lineno, e.to_string()))?;
        for lang in [&rec.language_pair.0, &rec.language_pair.1] {
            if !validate_language_code(lang) {
                return Err(Error::data(
                    path_str(path),
                    lineno,
                    format!("bad language code {lang:?}"),
                ));
            }
        }
        if rec.pair_id.is_empty() {
            return Err(Error::data(path_str(path), lineno, "empty pair_id"));
        }
        check_tokens(path, lineno, "sentence1", &rec.sentence1, vocab.len())?;
        check_tokens(path, lineno, "sentence2", &rec.sentence2, vocab.len())?;
        if rec.sentence1.is_empty() || rec.sentence2.is_empty() {
            return Err(Error::data(
                path_str(path),
                lineno,
                "sentences must be non-empty",
            ));
        }
        match rec.gold {
            None => {
                report.records_skipped += 1;
                report
                    .warnings
                    .push(format!("line {lineno}: pair {} has no gold score, skipped", rec.pair_id));
                continue;
            }
            Some(g) if !(1.0..=5.0).contains(&g) => {
                return Err(Error::data(
                    path_str(path),
                    lineno,
                    format!("gold score {g} outside [1, 5]"),
                ));
            }
            Some(_) => {}
        }
        if corpus
            .get(rec.split, &rec.language_pair, &rec.pair_id)
            .is_some()
        {
            return Err(Error::data(
                path_str(path),
                lineno,
                format!("duplicate pair {}", rec.pair_id),
            ));
        }
        corpus.insert(rec);
        report.records_loaded += 1;
    }
    if report.records_loaded == 0 {
        report
            .warnings
            .push(format!("{}: no records after the header", path_str(path)));
    }
    Ok((corpus, report))
}

/// Writes a retrieval corpus plus its vocabulary sidecar next to it.
pub fn save_retrieval_corpus(path: &Path, corpus: &RetrievalCorpus, vocab: &[String]) -> Result<()> {
    if vocab.len() != corpus.vocab_size {
        return Err(Error::invalid(format!(
            "vocabulary of {} entries does not match corpus vocab_size {}",
            vocab.len(),
            corpus.vocab_size
        )));
    }
    let vocab_name = sidecar_name(path);
    save_vocab(&path.with_file_name(&vocab_name), vocab)?;
    let mut out = BufWriter::new(fs::File::create(path)?);
    let header = Header {
        schema: RETRIEVAL_SCHEMA.to_string(),
        vocab: vocab_name,
    };
    writeln!(out, "{}", serde_json::to_string(&header)?)?;
    for rec in corpus.iter_records() {
        writeln!(out, "{}", serde_json::to_string(rec)?)?;
    }
    out.flush()?;
    Ok(())
}

/// Writes a pair corpus plus its vocabulary sidecar next to it.
pub fn save_pair_corpus(path: &Path, corpus: &PairCorpus, vocab: &[String]) -> Result<()> {
    if vocab.len() != corpus.vocab_size {
        return Err(Error::invalid(format!(
            "vocabulary of {} entries does not match corpus vocab_size {}",
            vocab.len(),
            corpus.vocab_size
        )));
    }
    let vocab_name = sidecar_name(path);
    save_vocab(&path.with_file_name(&vocab_name), vocab)?;
    let mut out = BufWriter::new(fs::File::create(path)?);
    let header = Header {
        schema: PAIRS_SCHEMA.to_string(),
        vocab: vocab_name,
    };
    writeln!(out, "{}", serde_json::to_string(&header)?)?;
    for rec in corpus.iter_records() {
        writeln!(out, "{}", serde_json::to_string(rec)?)?;
    }
    out.flush()?;
    Ok(())
}

fn sidecar_name(corpus_path: &Path) -> String {
    let stem = corpus_path
        .file_stem()
        .map(|s| s.to_string_lossy().to_string())
        .unwrap_or_else(|| "corpus".to_string());
    format!("{stem}.vocab.txt")
}
