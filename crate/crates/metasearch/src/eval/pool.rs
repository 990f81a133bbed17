//! Retrieval evaluation pools for the monolingual, bilingual, and
//! multilingual variants.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::data::{RetrievalCorpus, Split};
use crate::error::{Error, Result};
use crate::meta_tasks::LanguageArrangement;
use crate::model::{encode, EncoderConfig, ParameterVector, TokenBatch};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PoolVariant {
    Mono,
    Bi,
    Multi,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PoolQuery {
    pub question_id: String,
    pub language: String,
    pub tokens: Vec<usize>,
    /// Candidate ids whose answers are relevant to this query.
    pub relevant: BTreeSet<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PoolCandidate {
    /// `language:question_id`, unique within the pool.
    pub id: String,
    pub language: String,
    pub tokens: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EvalPool {
    pub variant: PoolVariant,
    pub arrangement: LanguageArrangement,
    pub queries: Vec<PoolQuery>,
    /// Sorted by candidate id.
    pub candidates: Vec<PoolCandidate>,
}

pub fn candidate_id(lang: &str, qid: &str) -> String {
    format!("{lang}:{qid}")
}

/// Builds the evaluation pool for one split: queries in `query_lang`,
/// candidates drawn from every language in `candidate_langs`. Multi pools
/// demand a corpus parallel across the candidate languages, so each query's
/// relevant set holds one parallel answer per pooled language.
pub fn build_pool(
    corpus: &RetrievalCorpus,
    split: Split,
    variant: PoolVariant,
    query_lang: &str,
    candidate_langs: &[String],
) -> Result<EvalPool> {
    match variant {
        PoolVariant::Mono => {
            if candidate_langs != [query_lang.to_string()] {
                return Err(Error::invalid(
                    "monolingual pool needs the single candidate language to equal the query language",
                ));
            }
        }
        PoolVariant::Bi => {
            if candidate_langs.len() != 1 {
                return Err(Error::invalid("bilingual pool needs exactly one candidate language"));
            }
            if candidate_langs[0] == query_lang {
                return Err(Error::invalid(
                    "bilingual pool needs distinct query and candidate languages",
                ));
            }
        }
        PoolVariant::Multi => {
            if candidate_langs.len() < 2 {
                return Err(Error::invalid(
                    "multilingual pool needs at least two candidate languages",
                ));
            }
        }
    }
    let unique: BTreeSet<&String> = candidate_langs.iter().collect();
    if unique.len() != candidate_langs.len() {
        return Err(Error::invalid("candidate languages must be distinct"));
    }

    let query_ids: Vec<&str> = corpus.question_ids(split, query_lang);
    if query_ids.is_empty() {
        return Err(Error::corpus(format!(
            "split {split} holds no questions in {query_lang}"
        )));
    }
    if variant == PoolVariant::Multi {
        let reference: BTreeSet<&str> = corpus
            .question_ids(split, &candidate_langs[0])
            .into_iter()
            .collect();
        for lang in &candidate_langs[1..] {
            let ids: BTreeSet<&str> = corpus.question_ids(split, lang).into_iter().collect();
            if ids != reference {
                return Err(Error::corpus(format!(
                    "multilingual pool needs a corpus parallel across candidate languages; \
                     {lang} and {} disagree in split {split}",
                    candidate_langs[0]
                )));
            }
        }
    }

    let mut candidates = Vec::new();
    for lang in candidate_langs {
        for qid in corpus.question_ids(split, lang) {
            let rec = corpus.require(split, lang, qid)?;
            candidates.push(PoolCandidate {
                id: candidate_id(lang, qid),
                language: lang.clone(),
                tokens: rec.candidate_tokens(),
            });
        }
    }
    candidates.sort_by(|a, b| a.id.cmp(&b.id));
    let candidate_ids: BTreeSet<&String> = candidates.iter().map(|c| &c.id).collect();

    let mut queries = Vec::new();
    for qid in query_ids {
        let rec = corpus.require(split, query_lang, qid)?;
        let relevant: BTreeSet<String> = candidate_langs
            .iter()
            .map(|l| candidate_id(l, qid))
            .filter(|id| candidate_ids.contains(id))
            .collect();
        queries.push(PoolQuery {
            question_id: qid.to_string(),
            language: query_lang.to_string(),
            tokens: rec.question.clone(),
            relevant,
        });
    }

    let pool = EvalPool {
        variant,
        arrangement: LanguageArrangement {
            query_langs: vec![query_lang.to_string()],
            candidate_langs: candidate_langs.to_vec(),
        },
        queries,
        candidates,
    };
    pool.validate()?;
    Ok(pool)
}

impl EvalPool {
    pub fn validate(&self) -> Result<()> {
        if self.candidates.is_empty() || self.queries.is_empty() {
            return Err(Error::invalid("evaluation pool must be non-empty"));
        }
        let ids: BTreeSet<&String> = self.candidates.iter().map(|c| &c.id).collect();
        if ids.len() != self.candidates.len() {
            return Err(Error::invalid("duplicate candidate ids in pool"));
        }
        for q in &self.queries {
            for r in &q.relevant {
                if !ids.contains(r) {
                    return Err(Error::invalid(format!(
                        "query {} references unknown candidate {r}",
                        q.question_id
                    )));
                }
            }
        }
        let kind_ok = match self.variant {
            PoolVariant::Mono => self.arrangement.kind()? == crate::meta_tasks::ArrangementKind::Mono,
            PoolVariant::Bi => self.arrangement.kind()? == crate::meta_tasks::ArrangementKind::Bi,
            PoolVariant::Multi => {
                self.arrangement.kind()? == crate::meta_tasks::ArrangementKind::Multi
            }
        };
        if !kind_ok {
            return Err(Error::invalid("pool variant disagrees with its arrangement"));
        }
        Ok(())
    }

    pub fn candidate_embeddings(
        &self,
        params: &ParameterVector,
        encoder: &EncoderConfig,
    ) -> Result<Vec<Vec<f64>>> {
        let seqs: Vec<Vec<usize>> = self.candidates.iter().map(|c| c.tokens.clone()).collect();
        encode(
            params,
            &TokenBatch::from_sequences(&seqs, encoder.max_candidate_len),
            encoder,
        )
    }

    pub fn query_embeddings(
        &self,
        params: &ParameterVector,
        encoder: &EncoderConfig,
    ) -> Result<Vec<Vec<f64>>> {
        let seqs: Vec<Vec<usize>> = self.queries.iter().map(|q| q.tokens.clone()).collect();
        encode(
            params,
            &TokenBatch::from_sequences(&seqs, encoder.max_question_len),
            encoder,
        )
    }
}

/// Orders candidate ids by descending score, ties broken by ascending id.
pub fn rank_order(scored: &[(String, f64)]) -> Vec<String> {
    let mut v: Vec<&(String, f64)> = scored.iter().collect();
    v.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    v.into_iter().map(|(id, _)| id.clone()).collect()
}

/// Ranks the whole pool for one query under the model's query-candidate
/// cosine similarity.
pub fn rank_candidates(
    params: &ParameterVector,
    pool: &EvalPool,
    query_index: usize,
    encoder: &EncoderConfig,
) -> Result<Vec<String>> {
    if query_index >= pool.queries.len() {
        return Err(Error::invalid("query index outside pool"));
    }
    let qe = pool.query_embeddings(params, encoder)?;
    let ce = pool.candidate_embeddings(params, encoder)?;
    rank_with_embeddings(&qe[query_index], &ce, pool)
}

pub(crate) fn rank_with_embeddings(
    query_emb: &[f64],
    candidate_embs: &[Vec<f64>],
    pool: &EvalPool,
) -> Result<Vec<String>> {
    let scored: Vec<(String, f64)> = pool
        .candidates
        .iter()
        .zip(candidate_embs)
        .map(|(c, emb)| Ok((c.id.clone(), crate::losses::cosine(query_emb, emb)?)))
        .collect::<Result<_>>()?;
    Ok(rank_order(&scored))
}
