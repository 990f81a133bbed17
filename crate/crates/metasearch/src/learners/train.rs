//! Training orchestrator: epoch/meta-batch loop, per-batch dev criterion,
//! patience-based early stopping, epoch-end meta-validation passes.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::data::Corpus;
use crate::error::{Error, Result};
use crate::losses::LossSpec;
use crate::meta_tasks::{MetaDataset, Phase};
use crate::model::{EncoderConfig, OptimHyper, OptimizerState, ParameterVector};

use super::realize::{realize_task, TaskBatches};
use super::steps::{
    align_from_three_set, finetune_step, maml_align_step, maml_outer_step, MetaHyper,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LearnerKind {
    FineTune,
    Maml,
    MamlAlign,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub learner: LearnerKind,
    pub hyper: MetaHyper,
    /// Fine-tune optimizer settings; ignored by the meta-learners, whose
    /// outer update is a plain gradient step with beta.
    pub optimizer: OptimHyper,
    pub loss: LossSpec,
    pub max_epochs: usize,
    /// Early-stopping patience, counted in meta-batches without improvement
    /// of the dev criterion.
    pub patience: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learner: LearnerKind::Maml,
            hyper: MetaHyper::default(),
            optimizer: OptimHyper::default(),
            loss: LossSpec::triplet(),
            max_epochs: 20,
            patience: 50,
            seed: 7,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_epochs == 0 {
            return Err(Error::config("max_epochs must be positive"));
        }
        if self.patience == 0 {
            return Err(Error::config("patience must be positive"));
        }
        self.loss.validate()?;
        match self.learner {
            LearnerKind::MamlAlign => self.hyper.validate_for_align(),
            _ => self.hyper.validate(),
        }
    }
}

/// One meta-batch of training (or epoch-end validation) history.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchRecord {
    pub batch_index: usize,
    pub epoch: usize,
    pub phase: Phase,
    pub task_loss: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kd_loss: Option<f64>,
    pub criterion: f64,
    pub improved: bool,
    /// Wall-clock per batch; excluded from serialization so history files
    /// stay byte-identical across equally seeded runs.
    #[serde(skip)]
    pub wall_clock_ms: u64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainHistory {
    pub baseline_criterion: f64,
    pub best_criterion: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub best_batch: Option<usize>,
    pub stopped_early: bool,
    pub records: Vec<BatchRecord>,
}

impl TrainHistory {
    fn push(&mut self, record: BatchRecord) -> Result<()> {
        if let Some(last) = self.records.last() {
            if record.batch_index != last.batch_index + 1 {
                return Err(Error::invalid("history batch indices must be consecutive"));
            }
        }
        self.records.push(record);
        Ok(())
    }
}

/// Writes history as line-delimited JSON: a summary line, then one record per
/// meta-batch.
pub fn save_history(path: &Path, history: &TrainHistory) -> Result<()> {
    #[derive(Serialize)]
    struct Summary<'a> {
        baseline_criterion: f64,
        best_criterion: f64,
        #[serde(skip_serializing_if = "Option::is_none")]
        best_batch: &'a Option<usize>,
        stopped_early: bool,
        record_count: usize,
    }
    let mut out = BufWriter::new(fs::File::create(path)?);
    let summary = Summary {
        baseline_criterion: history.baseline_criterion,
        best_criterion: history.best_criterion,
        best_batch: &history.best_batch,
        stopped_early: history.stopped_early,
        record_count: history.records.len(),
    };
    writeln!(out, "{}", serde_json::to_string(&summary)?)?;
    for rec in &history.records {
        writeln!(out, "{}", serde_json::to_string(rec)?)?;
    }
    out.flush()?;
    Ok(())
}

pub fn load_history(path: &Path) -> Result<TrainHistory> {
    #[derive(Deserialize)]
    struct Summary {
        baseline_criterion: f64,
        best_criterion: f64,
        #[serde(default)]
        best_batch: Option<usize>,
        stopped_early: bool,
        record_count: usize,
    }
    let text = fs::read_to_string(path)?;
    let mut lines = text.lines();
    let summary: Summary = serde_json::from_str(
        lines
            .next()
            .ok_or_else(|| Error::data(path.display().to_string(), 1, "empty history file"))?,
    )?;
    let mut records = Vec::with_capacity(summary.record_count);
    for line in lines {
        if line.trim().is_empty() {
            continue;
        }
        records.push(serde_json::from_str(line)?);
    }
    if records.len() != summary.record_count {
        return Err(Error::data(
            path.display().to_string(),
            1,
            "history record count disagrees with summary",
        ));
    }
    Ok(TrainHistory {
        baseline_criterion: summary.baseline_criterion,
        best_criterion: summary.best_criterion,
        best_batch: summary.best_batch,
        stopped_early: summary.stopped_early,
        records,
    })
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    /// Parameters at the best dev criterion seen (the initial parameters if
    /// training never improved on the baseline).
    pub best_params: ParameterVector,
    pub final_params: ParameterVector,
    pub history: TrainHistory,
}

/// The dev criterion: higher is better. Evaluated on the baseline parameters
/// before any update and after every meta-batch.
pub type Criterion<'c> = dyn FnMut(&ParameterVector) -> Result<f64> + 'c;

/// Runs the configured learner over the meta-training stream with the
/// shared loop: patience counts meta-batches without strict criterion
/// improvement, and each epoch ends with a meta-validation pass that applies
/// the same update procedure to the meta-valid tasks.
pub fn train(
    config: &TrainConfig,
    encoder: &EncoderConfig,
    corpus: &Corpus,
    meta_train: &MetaDataset,
    meta_valid: Option<&MetaDataset>,
    init: ParameterVector,
    criterion: &mut Criterion,
) -> Result<TrainOutcome> {
    config.validate()?;
    encoder.validate()?;
    if meta_train.tasks.is_empty() {
        return Err(Error::config("meta-training dataset holds no tasks"));
    }

    let mut theta = init.clone();
    let mut opt_state = match config.learner {
        LearnerKind::FineTune => Some(OptimizerState::adamw(&theta, config.optimizer.clone())),
        _ => None,
    };

    let baseline = criterion(&theta)?;
    let mut history = TrainHistory {
        baseline_criterion: baseline,
        best_criterion: baseline,
        best_batch: None,
        stopped_early: false,
        records: Vec::new(),
    };
    let mut best_params = theta.clone();
    let mut patience_left = config.patience;
    let mut batch_index = 0usize;

    'epochs: for epoch in 0..config.max_epochs {
        let streams: Vec<(Phase, &MetaDataset)> = std::iter::once((Phase::MetaTrain, meta_train))
            .chain(meta_valid.map(|v| (v.phase, v)))
            .collect();
        for (phase, dataset) in streams {
            for chunk in dataset.tasks.chunks(config.hyper.meta_batch) {
                let started = Instant::now();
                let batches: Vec<TaskBatches> = chunk
                    .iter()
                    .map(|t| realize_task(t, corpus, dataset.source_split))
                    .collect::<Result<_>>()?;
                let (task_loss, kd_loss) = match config.learner {
                    LearnerKind::Maml => {
                        let out =
                            maml_outer_step(&batches, &theta, &config.hyper, &config.loss, encoder)?;
                        theta = out.new_params;
                        (out.query_loss_sum, None)
                    }
                    LearnerKind::MamlAlign => {
                        let pairs = batches
                            .iter()
                            .map(align_from_three_set)
                            .collect::<Result<Vec<_>>>()?;
                        let out =
                            maml_align_step(&pairs, &theta, &config.hyper, &config.loss, encoder)?;
                        theta = out.new_params;
                        (out.task_loss_sum, Some(out.kd_loss_sum))
                    }
                    LearnerKind::FineTune => {
                        let state = opt_state.take().expect("fine-tune state present");
                        let (new_theta, new_state, loss) =
                            finetune_step(&batches, &theta, state, &config.loss, encoder)?;
                        theta = new_theta;
                        opt_state = Some(new_state);
                        (loss, None)
                    }
                };
                let value = criterion(&theta)?;
                let improved = value > history.best_criterion;
                if improved {
                    history.best_criterion = value;
                    history.best_batch = Some(batch_index);
                    best_params = theta.clone();
                    patience_left = config.patience;
                } else {
                    patience_left -= 1;
                }
                history.push(BatchRecord {
                    batch_index,
                    epoch,
                    phase,
                    task_loss,
                    kd_loss,
                    criterion: value,
                    improved,
                    wall_clock_ms: started.elapsed().as_millis() as u64,
                })?;
                batch_index += 1;
                if patience_left == 0 {
                    history.stopped_early = true;
                    break 'epochs;
                }
            }
        }
    }

    Ok(TrainOutcome {
        best_params,
        final_params: theta,
        history,
    })
}
