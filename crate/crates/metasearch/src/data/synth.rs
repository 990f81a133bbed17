//! Deterministic synthetic multilingual corpus generator.
//!
//! Each language owns a disjoint block of the shared vocabulary: a question
//! marker, an answer marker, two filler tokens, and `tokens_per_concept`
//! surface tokens for each latent concept. A question is a marker followed by
//! the tokens of its concept set; the parallel question in another language
//! uses that language's tokens for the same concepts. Relevance is controlled
//! by concept overlap: answers repeat a `rho_pos` fraction of the question's
//! concepts, while concept sets of distinct questions may overlap by at most
//! a `rho_neg` fraction.

use std::collections::{BTreeMap, BTreeSet};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::records::{
    validate_language_code, PairCorpus, RetrievalCorpus, RetrievalRecord, SentencePairRecord,
    Split,
};

pub const PAD_TOKEN: &str = "<pad>";

fn default_languages() -> Vec<String> {
    ["AR", "DE", "EL", "HI"].map(str::to_string).to_vec()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SyntheticSpec {
    pub concept_count: usize,
    pub languages: Vec<String>,
    pub tokens_per_concept: usize,
    pub questions_per_language: usize,
    pub pairs_per_language_pair: usize,
    pub concepts_per_question: usize,
    /// Fraction of a question's concepts repeated in its answer.
    pub rho_pos: f64,
    /// Maximum fraction of concepts shared between two distinct questions.
    pub rho_neg: f64,
    pub seed: u64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        SyntheticSpec {
            concept_count: 50,
            languages: default_languages(),
            tokens_per_concept: 2,
            questions_per_language: 200,
            pairs_per_language_pair: 40,
            concepts_per_question: 3,
            rho_pos: 1.0,
            rho_neg: 0.7,
            seed: 17,
        }
    }
}

impl SyntheticSpec {
    pub fn validate(&self) -> Result<()> {
        if self.concept_count == 0 || self.concepts_per_question == 0 {
            return Err(Error::config("concept counts must be positive"));
        }
        if self.concepts_per_question > self.concept_count {
            return Err(Error::config(
                "concepts_per_question exceeds concept_count",
            ));
        }
        if self.tokens_per_concept == 0 {
            return Err(Error::config("tokens_per_concept must be positive"));
        }
        if self.questions_per_language == 0 {
            return Err(Error::config("questions_per_language must be positive"));
        }
        if self.languages.is_empty() {
            return Err(Error::config("at least one language is required"));
        }
        let unique: BTreeSet<&String> = self.languages.iter().collect();
        if unique.len() != self.languages.len() {
            return Err(Error::config(
                "languages must be distinct so token alphabets stay disjoint",
            ));
        }
        for lang in &self.languages {
            if !validate_language_code(lang) {
                return Err(Error::config(format!("bad language code {lang:?}")));
            }
        }
        if !(self.rho_pos > 0.0 && self.rho_pos <= 1.0) {
            return Err(Error::config("rho_pos must lie in (0, 1]"));
        }
        if !(0.0..=1.0).contains(&self.rho_neg) {
            return Err(Error::config("rho_neg must lie in [0, 1]"));
        }
        if self.rho_neg >= self.rho_pos {
            return Err(Error::config(
                "rho_neg must be strictly below rho_pos to keep positives separable",
            ));
        }
        Ok(())
    }

    pub fn vocab_size(&self) -> usize {
        1 + self.languages.len() * self.lang_block_size()
    }

    fn lang_block_size(&self) -> usize {
        4 + self.concept_count * self.tokens_per_concept
    }

    fn lang_base(&self, lang_index: usize) -> usize {
        1 + lang_index * self.lang_block_size()
    }

    fn marker_question(&self, lang_index: usize) -> usize {
        self.lang_base(lang_index)
    }

    fn marker_answer(&self, lang_index: usize) -> usize {
        self.lang_base(lang_index) + 1
    }

    fn filler(&self, lang_index: usize, k: usize) -> usize {
        self.lang_base(lang_index) + 2 + k
    }

    fn concept_token(&self, lang_index: usize, concept: usize, k: usize) -> usize {
        self.lang_base(lang_index) + 4 + concept * self.tokens_per_concept + k
    }

    fn concept_tokens(&self, lang_index: usize, concepts: &BTreeSet<usize>) -> Vec<usize> {
        let mut out = Vec::with_capacity(concepts.len() * self.tokens_per_concept);
        for &c in concepts {
            for k in 0..self.tokens_per_concept {
                out.push(self.concept_token(lang_index, c, k));
            }
        }
        out
    }
}

/// Generated corpora plus the latent concept assignments that produced them.
/// The concept maps let tests rank candidates with a model-free oracle.
#[derive(Debug, Clone)]
pub struct SyntheticCorpus {
    pub retrieval: RetrievalCorpus,
    pub pairs: PairCorpus,
    pub vocab: Vec<String>,
    pub question_concepts: BTreeMap<String, BTreeSet<usize>>,
    pub answer_concepts: BTreeMap<String, BTreeSet<usize>>,
}

fn split_for_index(i: usize) -> Split {
    match i % 20 {
        0..=13 => Split::Train,
        14..=16 => Split::Dev,
        _ => Split::Test,
    }
}

fn build_vocab(spec: &SyntheticSpec) -> Vec<String> {
    let mut vocab = Vec::with_capacity(spec.vocab_size());
    vocab.push(PAD_TOKEN.to_string());
    for lang in &spec.languages {
        vocab.push(format!("{lang}:q"));
        vocab.push(format!("{lang}:a"));
        vocab.push(format!("{lang}:f0"));
        vocab.push(format!("{lang}:f1"));
        for c in 0..spec.concept_count {
            for k in 0..spec.tokens_per_concept {
                vocab.push(format!("{lang}:c{c}:{k}"));
            }
        }
    }
    vocab
}

fn sample_concept_set(
    rng: &mut ChaCha8Rng,
    spec: &SyntheticSpec,
    existing: &[BTreeSet<usize>],
    max_overlap: usize,
) -> Result<BTreeSet<usize>> {
    const MAX_ATTEMPTS: usize = 10_000;
    for _ in 0..MAX_ATTEMPTS {
        let picks = rand::seq::index::sample(
            rng,
            spec.concept_count,
            spec.concepts_per_question,
        );
        let set: BTreeSet<usize> = picks.into_iter().collect();
        let ok = existing.iter().all(|other| {
            let overlap = set.intersection(other).count();
            overlap <= max_overlap && overlap < spec.concepts_per_question
        });
        if ok {
            return Ok(set);
        }
    }
    Err(Error::config(format!(
        "could not sample {} concept sets of size {} from {} concepts with overlap at most {}",
        existing.len() + 1,
        spec.concepts_per_question,
        spec.concept_count,
        max_overlap
    )))
}

/// Generates the retrieval corpus, the sentence-pair corpus, and the shared
/// vocabulary for a spec. Fully determined by `spec.seed`.
pub fn generate_synthetic_corpus(spec: &SyntheticSpec) -> Result<SyntheticCorpus> {
    spec.validate()?;
    let vocab = build_vocab(spec);
    let m = spec.concepts_per_question;
    let max_overlap = (spec.rho_neg * m as f64).floor() as usize;
    let positive_count = ((spec.rho_pos * m as f64).ceil() as usize).clamp(1, m);

    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut retrieval = RetrievalCorpus {
        vocab_size: vocab.len(),
        ..RetrievalCorpus::default()
    };
    let mut question_concepts = BTreeMap::new();
    let mut answer_concepts = BTreeMap::new();
    let mut concept_sets: Vec<BTreeSet<usize>> = Vec::new();

    for i in 0..spec.questions_per_language {
        let qid = format!("q{i:05}");
        let set = sample_concept_set(&mut rng, spec, &concept_sets, max_overlap)?;
        let mut answer_set: BTreeSet<usize> =
            set.iter().copied().take(positive_count).collect();
        if answer_set.len() < m {
            for c in 0..spec.concept_count {
                if answer_set.len() == m {
                    break;
                }
                if !set.contains(&c) {
                    answer_set.insert(c);
                }
            }
        }
        let split = split_for_index(i);
        for (li, lang) in spec.languages.iter().enumerate() {
            let mut question = vec![spec.marker_question(li)];
            question.extend(spec.concept_tokens(li, &set));
            let mut answer = vec![spec.marker_answer(li)];
            answer.extend(spec.concept_tokens(li, &answer_set));
            let context = vec![spec.filler(li, 0), spec.filler(li, 1)];
            retrieval.insert(RetrievalRecord {
                question_id: qid.clone(),
                language: lang.clone(),
                split,
                question,
                answer,
                context,
            });
        }
        question_concepts.insert(qid.clone(), set.clone());
        answer_concepts.insert(qid, answer_set);
        concept_sets.push(set);
    }

    let mut pairs = PairCorpus {
        vocab_size: vocab.len(),
        ..PairCorpus::default()
    };
    for (a, la) in spec.languages.iter().enumerate() {
        for (b, lb) in spec.languages.iter().enumerate().skip(a) {
            for i in 0..spec.pairs_per_language_pair {
                let overlap = i % (m + 1);
                let s1_set = {
                    let picks = rand::seq::index::sample(&mut rng, spec.concept_count, m);
                    picks.into_iter().collect::<BTreeSet<usize>>()
                };
                let mut s2_set: BTreeSet<usize> =
                    s1_set.iter().copied().take(overlap).collect();
                for c in 0..spec.concept_count {
                    if s2_set.len() == m {
                        break;
                    }
                    if !s1_set.contains(&c) {
                        s2_set.insert(c);
                    }
                }
                let gold = 1.0 + 4.0 * overlap as f64 / m as f64;
                pairs.insert(SentencePairRecord {
                    pair_id: format!("p-{la}-{lb}-{i:05}"),
                    language_pair: (la.clone(), lb.clone()),
                    split: split_for_index(i),
                    sentence1: spec.concept_tokens(a, &s1_set),
                    sentence2: spec.concept_tokens(b, &s2_set),
                    gold: Some(gold),
                });
            }
        }
    }

    Ok(SyntheticCorpus {
        retrieval,
        pairs,
        vocab,
        question_concepts,
        answer_concepts,
    })
}
