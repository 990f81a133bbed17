//! Episodic task sampling and meta-dataset construction.

use std::collections::BTreeMap;
use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use rand::seq::index::sample as index_sample;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::{Corpus, PairCorpus, RetrievalCorpus, Split};
use crate::error::{Error, Result};
use crate::losses::cosine;
use crate::model::{encode, EncoderConfig, ParameterVector, TokenBatch};

use super::types::{
    default_pair_roster, default_retrieval_roster, LanguageArrangement, MetaDataset, MetaTask,
    Phase, Roster, TaskArrangement, TaskItem, TaskSet, TransferMode,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum QuerySampling {
    Random,
    Similar,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PhaseCounts {
    pub meta_train: usize,
    pub meta_valid: usize,
    pub meta_test: usize,
}

impl Default for PhaseCounts {
    fn default() -> Self {
        PhaseCounts {
            meta_train: 7000,
            meta_valid: 2000,
            meta_test: 1000,
        }
    }
}

impl PhaseCounts {
    pub fn get(&self, phase: Phase) -> usize {
        match phase {
            Phase::MetaTrain => self.meta_train,
            Phase::MetaValid => self.meta_valid,
            Phase::MetaTest => self.meta_test,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SamplingConfig {
    pub k_shot: usize,
    pub query_size: usize,
    pub negatives_per_item: usize,
    pub query_sampling: QuerySampling,
    pub counts: PhaseCounts,
    /// Optional roster overrides keyed by elementary shape name.
    pub rosters: BTreeMap<String, Roster>,
    pub seed: u64,
}

impl Default for SamplingConfig {
    fn default() -> Self {
        SamplingConfig {
            k_shot: 8,
            query_size: 4,
            negatives_per_item: 3,
            query_sampling: QuerySampling::Random,
            counts: PhaseCounts::default(),
            rosters: BTreeMap::new(),
            seed: 7,
        }
    }
}

impl SamplingConfig {
    pub fn validate(&self) -> Result<()> {
        if self.k_shot == 0 || self.query_size == 0 {
            return Err(Error::config("k_shot and query_size must be positive"));
        }
        if self.negatives_per_item == 0 {
            return Err(Error::config("negatives_per_item must be positive"));
        }
        Ok(())
    }
}

/// Curates tasks from one corpus under one sampling configuration. Base
/// parameters are only consulted by Similar query selection and stay frozen,
/// so task identity is independent of any later training.
pub struct TaskSampler<'a> {
    pub corpus: &'a Corpus,
    pub encoder: &'a EncoderConfig,
    pub base_params: Option<&'a ParameterVector>,
    pub config: SamplingConfig,
}

impl<'a> TaskSampler<'a> {
    pub fn new(
        corpus: &'a Corpus,
        encoder: &'a EncoderConfig,
        base_params: Option<&'a ParameterVector>,
        config: SamplingConfig,
    ) -> Result<Self> {
        config.validate()?;
        if matches!(config.query_sampling, QuerySampling::Similar) && base_params.is_none() {
            return Err(Error::config(
                "similar query sampling requires base parameters",
            ));
        }
        Ok(TaskSampler {
            corpus,
            encoder,
            base_params,
            config,
        })
    }

    fn roster_for(&self, shape: TransferMode) -> Result<Roster> {
        if let Some(r) = self.config.rosters.get(&shape.to_string()) {
            r.validate(shape)?;
            return Ok(r.clone());
        }
        match self.corpus {
            Corpus::Retrieval(_) => default_retrieval_roster(shape),
            Corpus::Pairs(_) => default_pair_roster(shape),
        }
    }

    /// Samples the task at `index` for `mode` and `phase` using the given
    /// rng stream.
    pub fn sample_meta_task(
        &self,
        mode: TransferMode,
        phase: Phase,
        index: usize,
        rng: &mut ChaCha8Rng,
    ) -> Result<MetaTask> {
        let shape = mode.shape_for(phase, index);
        let roster = self.roster_for(shape)?;
        let fam = roster.family_for(index).clone();
        let task = match self.corpus {
            Corpus::Retrieval(c) => {
                self.sample_retrieval_task(c, shape, phase, index, &fam, rng)?
            }
            Corpus::Pairs(c) => self.sample_pair_task(c, shape, phase, index, &fam, rng)?,
        };
        task.validate(self.config.k_shot, self.config.query_size)?;
        Ok(task)
    }

    fn sample_retrieval_task(
        &self,
        corpus: &RetrievalCorpus,
        shape: TransferMode,
        phase: Phase,
        index: usize,
        fam: &TaskArrangement,
        rng: &mut ChaCha8Rng,
    ) -> Result<MetaTask> {
        let split = phase.source_split();
        let langs = fam.languages();
        let pool = corpus.parallel_ids(split, &langs);
        let support_sets = if fam.support2.is_some() { 2 } else { 1 };
        let needed = self.config.k_shot * support_sets + self.config.query_size;
        if pool.len() < needed {
            return Err(Error::corpus(format!(
                "arrangement over {langs:?} offers {} parallel questions in split {split}, \
                 but a task needs {needed}",
                pool.len()
            )));
        }
        if pool.len() <= self.config.negatives_per_item {
            return Err(Error::corpus(format!(
                "arrangement over {langs:?} offers too few questions for {} negatives per item",
                self.config.negatives_per_item
            )));
        }

        let draw = index_sample(rng, pool.len(), self.config.k_shot * support_sets);
        let drawn: Vec<usize> = draw.into_iter().collect();
        let support_ids: Vec<&String> =
            drawn[..self.config.k_shot].iter().map(|&i| &pool[i]).collect();
        let support2_ids: Vec<&String> = drawn[self.config.k_shot..]
            .iter()
            .map(|&i| &pool[i])
            .collect();
        let remaining: Vec<&String> = pool
            .iter()
            .enumerate()
            .filter(|(i, _)| !drawn.contains(i))
            .map(|(_, id)| id)
            .collect();

        let support_lang = &fam.support.query_langs[0];
        let query_lang = &fam.query.query_langs[0];
        let support_questions: Vec<Vec<usize>> = support_ids
            .iter()
            .map(|qid| Ok(corpus.require(split, support_lang, qid)?.question.clone()))
            .collect::<Result<_>>()?;
        let pool_questions: Vec<Vec<usize>> = remaining
            .iter()
            .map(|qid| Ok(corpus.require(split, query_lang, qid)?.question.clone()))
            .collect::<Result<_>>()?;
        let picked = select_queries(
            &support_questions,
            &pool_questions,
            self.config.query_sampling,
            self.base_params,
            self.encoder,
            self.encoder.max_question_len,
            self.config.query_size,
            rng,
        )?;
        let query_ids: Vec<&String> = picked.iter().map(|&i| remaining[i]).collect();

        let mut build_set = |ids: &[&String], arr: &LanguageArrangement| -> TaskSet {
            let items = ids
                .iter()
                .map(|qid| {
                    let positive_lang = pick_lang(&arr.candidate_langs, rng);
                    let negatives =
                        pick_negatives(&pool, qid, &arr.candidate_langs, self.config.negatives_per_item, rng);
                    TaskItem::Retrieval {
                        question_id: (*qid).clone(),
                        query_lang: arr.query_langs[0].clone(),
                        positive_lang,
                        negatives,
                    }
                })
                .collect();
            TaskSet {
                arrangement: arr.clone(),
                items,
            }
        };

        let support = build_set(&support_ids, &fam.support);
        let support2 = fam
            .support2
            .as_ref()
            .map(|arr| build_set(&support2_ids, arr));
        let query = build_set(&query_ids, &fam.query);
        Ok(MetaTask {
            index,
            mode: shape,
            support,
            support2,
            query,
        })
    }

    fn sample_pair_task(
        &self,
        corpus: &PairCorpus,
        shape: TransferMode,
        phase: Phase,
        index: usize,
        fam: &TaskArrangement,
        rng: &mut ChaCha8Rng,
    ) -> Result<MetaTask> {
        let split = phase.source_split();
        let support_pool = pair_pool(corpus, split, &fam.support);
        let support2_pool = fam
            .support2
            .as_ref()
            .map(|arr| pair_pool(corpus, split, arr));
        let k = self.config.k_shot;
        let q = self.config.query_size;

        let support_refs = draw_pairs(&support_pool, k, &fam.support, rng)?;
        let mut taken: Vec<(String, String)> = support_refs
            .iter()
            .map(|(pid, _)| ((*pid).clone(), String::new()))
            .collect();
        let support2_refs = match &support2_pool {
            Some(pool) => {
                let arr = fam.support2.as_ref().unwrap();
                let pool: Vec<_> = pool
                    .iter()
                    .filter(|(pid, _)| !taken.iter().any(|(t, _)| t == pid))
                    .cloned()
                    .collect();
                let refs = draw_pairs(&pool, k, arr, rng)?;
                taken.extend(refs.iter().map(|(pid, _)| (pid.clone(), String::new())));
                Some(refs)
            }
            None => None,
        };

        let query_pool: Vec<(String, (String, String))> = pair_pool(corpus, split, &fam.query)
            .into_iter()
            .filter(|(pid, _)| !taken.iter().any(|(t, _)| t == pid))
            .collect();
        if query_pool.len() < q {
            return Err(Error::corpus(format!(
                "query arrangement over {:?} offers {} pairs in split {split}, need {q}",
                fam.query.languages(),
                query_pool.len()
            )));
        }
        let support_sentences: Vec<Vec<usize>> = support_refs
            .iter()
            .map(|(pid, lp)| Ok(corpus.require(split, lp, pid)?.sentence1.clone()))
            .collect::<Result<_>>()?;
        let pool_sentences: Vec<Vec<usize>> = query_pool
            .iter()
            .map(|(pid, lp)| Ok(corpus.require(split, lp, pid)?.sentence1.clone()))
            .collect::<Result<_>>()?;
        let picked = select_queries(
            &support_sentences,
            &pool_sentences,
            self.config.query_sampling,
            self.base_params,
            self.encoder,
            self.encoder.max_sentence_len,
            q,
            rng,
        )?;

        let to_set = |refs: Vec<(String, (String, String))>, arr: &LanguageArrangement| TaskSet {
            arrangement: arr.clone(),
            items: refs
                .into_iter()
                .map(|(pid, lp)| TaskItem::Pair {
                    pair_id: pid,
                    language_pair: lp,
                })
                .collect(),
        };

        let support = to_set(support_refs, &fam.support);
        let support2 = support2_refs
            .map(|refs| to_set(refs, fam.support2.as_ref().unwrap()));
        let query = to_set(
            picked.iter().map(|&i| query_pool[i].clone()).collect(),
            &fam.query,
        );
        Ok(MetaTask {
            index,
            mode: shape,
            support,
            support2,
            query,
        })
    }

    /// Builds the meta-dataset for one phase. Deterministic in the config
    /// seed: each task index owns an rng substream, so task order never
    /// depends on construction scheduling.
    pub fn build_phase(&self, mode: TransferMode, phase: Phase) -> Result<MetaDataset> {
        let count = self.config.counts.get(phase);
        let mut tasks = Vec::with_capacity(count);
        for index in 0..count {
            let mut rng = ChaCha8Rng::seed_from_u64(substream_seed(
                self.config.seed,
                phase as u64,
                index as u64,
            ));
            tasks.push(self.sample_meta_task(mode, phase, index, &mut rng)?);
        }
        Ok(MetaDataset {
            phase,
            mode,
            source_split: phase.source_split(),
            tasks,
        })
    }

    /// Builds all three phases.
    pub fn build_meta_datasets(&self, mode: TransferMode) -> Result<Vec<MetaDataset>> {
        Phase::ALL
            .into_iter()
            .map(|phase| self.build_phase(mode, phase))
            .collect()
    }
}

fn pick_lang(langs: &[String], rng: &mut ChaCha8Rng) -> String {
    langs[rng.gen_range(0..langs.len())].clone()
}

fn pick_negatives(
    pool: &[String],
    anchor: &str,
    candidate_langs: &[String],
    count: usize,
    rng: &mut ChaCha8Rng,
) -> Vec<(String, String)> {
    let draw = index_sample(rng, pool.len(), (count + 1).min(pool.len()));
    let mut out = Vec::with_capacity(count);
    for i in draw {
        if out.len() == count {
            break;
        }
        if pool[i] != anchor {
            out.push((pool[i].clone(), pick_lang(candidate_langs, rng)));
        }
    }
    out
}

/// All (pair id, language pair) entries of `split` whose languages fit the
/// arrangement, in stable corpus order.
fn pair_pool(
    corpus: &PairCorpus,
    split: Split,
    arr: &LanguageArrangement,
) -> Vec<(String, (String, String))> {
    let mut out = Vec::new();
    for lp in corpus.language_pairs() {
        let (a, b) = &lp;
        let forward = arr.query_langs.contains(a) && arr.candidate_langs.contains(b);
        let backward = arr.query_langs.contains(b) && arr.candidate_langs.contains(a);
        if !(forward || backward) {
            continue;
        }
        for pid in corpus.pair_ids(split, &lp) {
            out.push((pid.to_string(), lp.clone()));
        }
    }
    out
}

fn draw_pairs(
    pool: &[(String, (String, String))],
    count: usize,
    arr: &LanguageArrangement,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<(String, (String, String))>> {
    if pool.len() < count {
        return Err(Error::corpus(format!(
            "arrangement over {:?} offers {} pairs, need {count}",
            arr.languages(),
            pool.len()
        )));
    }
    let draw = index_sample(rng, pool.len(), count);
    Ok(draw.into_iter().map(|i| pool[i].clone()).collect())
}

/// Picks `q` pool entries to serve as a query set. Random draws uniformly
/// without replacement. Similar embeds every pool question under the frozen
/// base parameters, ranks by cosine against the mean support-question
/// embedding, and keeps the top `q`, breaking ties by pool order.
#[allow(clippy::too_many_arguments)]
pub fn select_queries(
    support_questions: &[Vec<usize>],
    pool_questions: &[Vec<usize>],
    sampling: QuerySampling,
    base_params: Option<&ParameterVector>,
    encoder: &EncoderConfig,
    max_len: usize,
    q: usize,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<usize>> {
    if pool_questions.len() < q {
        return Err(Error::corpus(format!(
            "candidate pool holds {} items, need {q}",
            pool_questions.len()
        )));
    }
    match sampling {
        QuerySampling::Random => {
            Ok(index_sample(rng, pool_questions.len(), q).into_iter().collect())
        }
        QuerySampling::Similar => {
            let params = base_params.ok_or_else(|| {
                Error::config("similar query sampling requires base parameters")
            })?;
            let support = encode(
                params,
                &TokenBatch::from_sequences(support_questions, max_len),
                encoder,
            )?;
            let d = encoder.embed_dim;
            let mut mean = vec![0.0; d];
            for emb in &support {
                for (m, v) in mean.iter_mut().zip(emb) {
                    *m += v / support.len() as f64;
                }
            }
            let pool = encode(
                params,
                &TokenBatch::from_sequences(pool_questions, max_len),
                encoder,
            )?;
            let mut scored: Vec<(usize, f64)> = pool
                .iter()
                .enumerate()
                .map(|(i, emb)| Ok((i, cosine(&mean, emb)?)))
                .collect::<Result<_>>()?;
            scored.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
            let mut picked: Vec<usize> = scored[..q].iter().map(|(i, _)| *i).collect();
            picked.sort_unstable();
            Ok(picked)
        }
    }
}

/// Mixes the dataset seed, phase, and task index into an independent rng
/// substream seed (splitmix64 finalizer).
pub fn substream_seed(seed: u64, phase: u64, index: u64) -> u64 {
    let mut z = seed
        .wrapping_mul(0x9e3779b97f4a7c15)
        .wrapping_add(phase.wrapping_mul(0xbf58476d1ce4e5b9))
        .wrapping_add(index.wrapping_mul(0x94d049bb133111eb));
    z ^= z >> 30;
    z = z.wrapping_mul(0xbf58476d1ce4e5b9);
    z ^= z >> 27;
    z = z.wrapping_mul(0x94d049bb133111eb);
    z ^= z >> 31;
    z
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct DatasetHeader {
    phase: Phase,
    mode: TransferMode,
    source_split: Split,
    task_count: usize,
}

/// Writes a meta-dataset as line-delimited JSON: a header line, then one task
/// per line holding ids only.
pub fn save_meta_dataset(path: &Path, ds: &MetaDataset) -> Result<()> {
    let mut out = BufWriter::new(fs::File::create(path)?);
    let header = DatasetHeader {
        phase: ds.phase,
        mode: ds.mode,
        source_split: ds.source_split,
        task_count: ds.tasks.len(),
    };
    writeln!(out, "{}", serde_json::to_string(&header)?)?;
    for task in &ds.tasks {
        writeln!(out, "{}", serde_json::to_string(task)?)?;
    }
    out.flush()?;
    Ok(())
}

pub fn load_meta_dataset(path: &Path) -> Result<MetaDataset> {
    let text = fs::read_to_string(path)?;
    let mut lines = text.lines();
    let header: DatasetHeader = serde_json::from_str(
        lines
            .next()
            .ok_or_else(|| Error::data(path.display().to_string(), 1, "empty dataset file"))?,
    )?;
    let mut tasks = Vec::with_capacity(header.task_count);
    for (i, line) in lines.enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let task: MetaTask = serde_json::from_str(line)
            .map_err(|e| Error::data(path.display().to_string(), i + 2, e.to_string()))?;
        tasks.push(task);
    }
    if tasks.len() != header.task_count {
        return Err(Error::data(
            path.display().to_string(),
            1,
            format!("header lists {} tasks, file holds {}", header.task_count, tasks.len()),
        ));
    }
    Ok(MetaDataset {
        phase: header.phase,
        mode: header.mode,
        source_split: header.source_split,
        tasks,
    })
}
