//! Resolves id-level meta-tasks into token-level example batches.

use crate::data::{Corpus, Split};
use crate::error::{Error, Result};
use crate::losses::{normalize_gold, Triplet};
use crate::meta_tasks::{MetaTask, TaskItem, TaskSet};
use crate::model::{ExampleBatch, TokenPair};

/// Token-level view of one meta-task: every stored negative becomes its own
/// triplet, pair gold scores are normalized onto [0, 1].
#[derive(Debug, Clone, PartialEq)]
pub struct TaskBatches {
    pub support: ExampleBatch,
    pub support2: Option<ExampleBatch>,
    pub query: ExampleBatch,
}

fn realize_set(set: &TaskSet, corpus: &Corpus, split: Split) -> Result<ExampleBatch> {
    match corpus {
        Corpus::Retrieval(c) => {
            let mut triplets = Vec::new();
            for item in &set.items {
                let TaskItem::Retrieval {
                    question_id,
                    query_lang,
                    positive_lang,
                    negatives,
                } = item
                else {
                    return Err(Error::invalid(
                        "pair item cannot be realized against a retrieval corpus",
                    ));
                };
                let anchor = c.require(split, query_lang, question_id)?.question.clone();
                let positive = c
                    .require(split, positive_lang, question_id)?
                    .candidate_tokens();
                for (nid, nlang) in negatives {
                    let negative = c.require(split, nlang, nid)?.candidate_tokens();
                    triplets.push(Triplet {
                        anchor: anchor.clone(),
                        positive: positive.clone(),
                        negative,
                    });
                }
            }
            Ok(ExampleBatch::Triplets(triplets))
        }
        Corpus::Pairs(c) => {
            let mut pairs = Vec::new();
            for item in &set.items {
                let TaskItem::Pair { pair_id, language_pair } = item else {
                    return Err(Error::invalid(
                        "retrieval item cannot be realized against a pair corpus",
                    ));
                };
                let rec = c.require(split, language_pair, pair_id)?;
                let gold = rec.gold.ok_or_else(|| {
                    Error::corpus(format!("pair {pair_id} carries no gold score"))
                })?;
                pairs.push(TokenPair {
                    s1: rec.sentence1.clone(),
                    s2: rec.sentence2.clone(),
                    gold: normalize_gold(gold),
                });
            }
            Ok(ExampleBatch::Pairs(pairs))
        }
    }
}

pub fn realize_task(task: &MetaTask, corpus: &Corpus, split: Split) -> Result<TaskBatches> {
    Ok(TaskBatches {
        support: realize_set(&task.support, corpus, split)?,
        support2: task
            .support2
            .as_ref()
            .map(|s| realize_set(s, corpus, split))
            .transpose()?,
        query: realize_set(&task.query, corpus, split)?,
    })
}
