//! Single update steps: inner adaptation, meta-gradient outer updates, the
//! aligned teacher/student distillation step, and joint fine-tuning.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::losses::LossSpec;
use crate::model::{
    adamw_step, hessian_vector_product, kd_only_loss_and_grad, loss_and_grad, score_vectors,
    sgd_step, EncoderConfig, ExampleBatch, OptimizerState, ParameterVector,
};

use super::realize::TaskBatches;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MetaOrder {
    FirstOrder,
    SecondOrder,
}

/// Meta-learning hyperparameters shared by the outer-loop learners.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MetaHyper {
    /// Inner-loop learning rate.
    pub alpha: f64,
    /// Outer-loop learning rate.
    pub beta: f64,
    /// Teacher inner steps n.
    pub inner_steps: usize,
    /// Student inner steps n', must stay below n for the aligned learner.
    pub student_inner_steps: usize,
    /// Tasks per outer update.
    pub meta_batch: usize,
    /// Distillation weight.
    pub lambda: f64,
    pub order: MetaOrder,
}

impl Default for MetaHyper {
    fn default() -> Self {
        MetaHyper {
            alpha: 1e-3,
            beta: 1e-5,
            inner_steps: 5,
            student_inner_steps: 1,
            meta_batch: 4,
            lambda: 0.5,
            order: MetaOrder::FirstOrder,
        }
    }
}

impl MetaHyper {
    pub fn validate(&self) -> Result<()> {
        if self.alpha <= 0.0 || self.beta <= 0.0 {
            return Err(Error::config("alpha and beta must be positive"));
        }
        if self.meta_batch == 0 {
            return Err(Error::config("meta_batch must be positive"));
        }
        if !(0.0..=1.0).contains(&self.lambda) {
            return Err(Error::config("lambda must lie in [0, 1]"));
        }
        Ok(())
    }

    pub fn validate_for_align(&self) -> Result<()> {
        self.validate()?;
        if self.student_inner_steps >= self.inner_steps {
            return Err(Error::config(
                "student inner steps must stay strictly below teacher inner steps",
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct InnerOutcome {
    pub adapted: ParameterVector,
    /// Support loss measured at each pre-update parameter vector.
    pub support_trajectory: Vec<f64>,
    /// Pre-update parameter vectors, one per inner step.
    pub inner_params: Vec<ParameterVector>,
    pub query_loss: f64,
    pub query_grad: Vec<f64>,
}

/// Runs `n` sgd steps on the support set from a copy of `theta`, then
/// evaluates the query set at the adapted parameters. `theta` is never
/// mutated.
pub fn inner_loop(
    theta: &ParameterVector,
    support: &ExampleBatch,
    query: &ExampleBatch,
    spec: &LossSpec,
    encoder: &EncoderConfig,
    alpha: f64,
    n: usize,
) -> Result<InnerOutcome> {
    let mut current = theta.clone();
    let mut support_trajectory = Vec::with_capacity(n);
    let mut inner_params = Vec::with_capacity(n);
    for _ in 0..n {
        let (loss, grad) = loss_and_grad(&current, spec, support, None, encoder)?;
        support_trajectory.push(loss);
        inner_params.push(current.clone());
        current = sgd_step(&current, &grad, alpha)?;
    }
    let (query_loss, query_grad) = loss_and_grad(&current, spec, query, None, encoder)?;
    Ok(InnerOutcome {
        adapted: current,
        support_trajectory,
        inner_params,
        query_loss,
        query_grad,
    })
}

/// Meta-gradient of one task's query loss w.r.t. the initial parameters.
/// First order returns the query gradient at the adapted parameters; second
/// order propagates through every inner update via exact Hessian-vector
/// products.
fn task_meta_grad(
    outcome: &InnerOutcome,
    support: &ExampleBatch,
    spec: &LossSpec,
    encoder: &EncoderConfig,
    alpha: f64,
    order: MetaOrder,
) -> Result<Vec<f64>> {
    match order {
        MetaOrder::FirstOrder => Ok(outcome.query_grad.clone()),
        MetaOrder::SecondOrder => {
            let mut g = outcome.query_grad.clone();
            for theta_t in outcome.inner_params.iter().rev() {
                let hv = hessian_vector_product(theta_t, spec, support, None, encoder, &g)?;
                for (gi, hi) in g.iter_mut().zip(&hv) {
                    *gi -= alpha * hi;
                }
            }
            Ok(g)
        }
    }
}

#[derive(Debug, Clone)]
pub struct OuterOutcome {
    pub new_params: ParameterVector,
    /// Sum of per-task query losses, matching the summed outer objective.
    pub query_loss_sum: f64,
}

/// One outer update over a batch of two-set tasks:
/// theta - beta * sum_j meta_grad_j.
pub fn maml_outer_step(
    tasks: &[TaskBatches],
    theta: &ParameterVector,
    hyper: &MetaHyper,
    spec: &LossSpec,
    encoder: &EncoderConfig,
) -> Result<OuterOutcome> {
    hyper.validate()?;
    if tasks.is_empty() {
        return Err(Error::invalid("empty meta-batch"));
    }
    let mut total_grad = vec![0.0; theta.len()];
    let mut query_loss_sum = 0.0;
    for task in tasks {
        if task.support2.is_some() {
            return Err(Error::invalid(
                "three-set task handed to the two-set outer step",
            ));
        }
        let outcome = inner_loop(
            theta,
            &task.support,
            &task.query,
            spec,
            encoder,
            hyper.alpha,
            hyper.inner_steps,
        )?;
        let g = task_meta_grad(&outcome, &task.support, spec, encoder, hyper.alpha, hyper.order)?;
        for (t, gi) in total_grad.iter_mut().zip(&g) {
            *t += gi;
        }
        query_loss_sum += outcome.query_loss;
    }
    let new_params = sgd_step(theta, &total_grad, hyper.beta)?;
    Ok(OuterOutcome {
        new_params,
        query_loss_sum,
    })
}

/// Teacher/student view of one aligned task: the shared set serves as the
/// teacher's query set and the student's support set.
#[derive(Debug, Clone, PartialEq)]
pub struct AlignPair {
    pub teacher_support: ExampleBatch,
    pub shared: ExampleBatch,
    pub query: ExampleBatch,
}

/// Builds an aligned pair from two two-set tasks that must share their
/// middle set exactly.
pub fn align_pair(teacher: &TaskBatches, student: &TaskBatches) -> Result<AlignPair> {
    if teacher.query != student.support {
        return Err(Error::invalid(
            "teacher query set and student support set disagree",
        ));
    }
    Ok(AlignPair {
        teacher_support: teacher.support.clone(),
        shared: teacher.query.clone(),
        query: student.query.clone(),
    })
}

/// Builds an aligned pair from a three-set task (S1, S2, Q).
pub fn align_from_three_set(task: &TaskBatches) -> Result<AlignPair> {
    let shared = task
        .support2
        .as_ref()
        .ok_or_else(|| Error::invalid("aligned learner needs a three-set task"))?;
    Ok(AlignPair {
        teacher_support: task.support.clone(),
        shared: shared.clone(),
        query: task.query.clone(),
    })
}

#[derive(Debug, Clone)]
pub struct AlignOutcome {
    pub new_params: ParameterVector,
    /// Sum over the batch of (teacher query loss + student query loss) / 2.
    pub task_loss_sum: f64,
    /// Sum over the batch of per-task distillation losses.
    pub kd_loss_sum: f64,
}

/// One aligned outer update. For each pair the teacher adapts on S1 for n
/// steps and is scored on S2; the student adapts on S2 for n' steps and is
/// scored on Q; the distillation term pulls the student's S2 score
/// distribution toward the detached teacher's. Both branches restart from the
/// single shared `theta`, and the update is first order:
/// theta - beta * sum_j ((g_teacher + g_student) / 2 + lambda * g_kd).
pub fn maml_align_step(
    pairs: &[AlignPair],
    theta: &ParameterVector,
    hyper: &MetaHyper,
    spec: &LossSpec,
    encoder: &EncoderConfig,
) -> Result<AlignOutcome> {
    hyper.validate_for_align()?;
    if pairs.is_empty() {
        return Err(Error::invalid("empty meta-batch"));
    }
    let mut total_grad = vec![0.0; theta.len()];
    let mut task_loss_sum = 0.0;
    let mut kd_loss_sum = 0.0;
    for pair in pairs {
        let teacher = inner_loop(
            theta,
            &pair.teacher_support,
            &pair.shared,
            spec,
            encoder,
            hyper.alpha,
            hyper.inner_steps,
        )?;
        let student = inner_loop(
            theta,
            &pair.shared,
            &pair.query,
            spec,
            encoder,
            hyper.alpha,
            hyper.student_inner_steps,
        )?;
        let teacher_scores = score_vectors(&teacher.adapted, &pair.shared, encoder)?;
        let (kd, kd_grad) =
            kd_only_loss_and_grad(&student.adapted, &pair.shared, &teacher_scores, encoder)?;
        task_loss_sum += 0.5 * (teacher.query_loss + student.query_loss);
        kd_loss_sum += kd;
        for i in 0..total_grad.len() {
            total_grad[i] += 0.5 * (teacher.query_grad[i] + student.query_grad[i])
                + hyper.lambda * kd_grad[i];
        }
    }
    let new_params = sgd_step(theta, &total_grad, hyper.beta)?;
    Ok(AlignOutcome {
        new_params,
        task_loss_sum,
        kd_loss_sum,
    })
}

/// One AdamW step on the mean loss over the union of every set of every task
/// in the batch.
pub fn finetune_step(
    tasks: &[TaskBatches],
    theta: &ParameterVector,
    state: OptimizerState,
    spec: &LossSpec,
    encoder: &EncoderConfig,
) -> Result<(ParameterVector, OptimizerState, f64)> {
    if tasks.is_empty() {
        return Err(Error::invalid("empty batch"));
    }
    let union = union_batch(tasks)?;
    let (loss, grad) = loss_and_grad(theta, spec, &union, None, encoder)?;
    let (new_params, new_state) = adamw_step(state, theta, &grad)?;
    Ok((new_params, new_state, loss))
}

fn union_batch(tasks: &[TaskBatches]) -> Result<ExampleBatch> {
    let mut sets: Vec<&ExampleBatch> = Vec::new();
    for t in tasks {
        sets.push(&t.support);
        if let Some(s2) = &t.support2 {
            sets.push(s2);
        }
        sets.push(&t.query);
    }
    match sets[0] {
        ExampleBatch::Triplets(_) => {
            let mut all = Vec::new();
            for s in sets {
                let ExampleBatch::Triplets(v) = s else {
                    return Err(Error::invalid("mixed batch kinds in one fine-tune step"));
                };
                all.extend(v.iter().cloned());
            }
            Ok(ExampleBatch::Triplets(all))
        }
        ExampleBatch::Pairs(_) => {
            let mut all = Vec::new();
            for s in sets {
                let ExampleBatch::Pairs(v) = s else {
                    return Err(Error::invalid("mixed batch kinds in one fine-tune step"));
                };
                all.extend(v.iter().cloned());
            }
            Ok(ExampleBatch::Pairs(all))
        }
    }
}

/// Adapts on the task's support set with `n` sgd steps, then hands the
/// adapted parameters to the caller's metric.
pub fn adapt_and_evaluate<F>(
    theta: &ParameterVector,
    task: &TaskBatches,
    spec: &LossSpec,
    encoder: &EncoderConfig,
    alpha: f64,
    n: usize,
    metric: F,
) -> Result<(ParameterVector, f64)>
where
    F: FnOnce(&ParameterVector) -> Result<f64>,
{
    let outcome = inner_loop(theta, &task.support, &task.query, spec, encoder, alpha, n)?;
    let value = metric(&outcome.adapted)?;
    Ok((outcome.adapted, value))
}
