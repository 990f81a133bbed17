//! Closed-form loss gradients through the toy backbone for every training
//! objective: triplet, cosine regression, and the distillation-augmented
//! composite. All math is generic over [`Scalar`], so Hessian-vector products
//! come for free via dual numbers.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::losses::{
    cosine_with_grad, kd_grad_wrt_student, DistanceMode, LossKind, LossSpec, Triplet,
};
use crate::model::encode::{backprop_row, encode_row, RowTrace};
use crate::model::params::{EncoderConfig, ParamLayout, ParameterVector};
use crate::model::scalar::{Dual, Scalar};

/// A scored sentence pair with its gold similarity already normalized to [0, 1].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TokenPair {
    pub s1: Vec<usize>,
    pub s2: Vec<usize>,
    pub gold: f64,
}

/// Task-specific example batch fed to the gradient engine.
#[derive(Debug, Clone, PartialEq)]
pub enum ExampleBatch {
    Triplets(Vec<Triplet>),
    Pairs(Vec<TokenPair>),
}

impl ExampleBatch {
    pub fn len(&self) -> usize {
        match self {
            ExampleBatch::Triplets(v) => v.len(),
            ExampleBatch::Pairs(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn validate(&self, cfg: &EncoderConfig) -> Result<()> {
        if self.is_empty() {
            return Err(Error::invalid("empty example batch"));
        }
        let check = |seq: &[usize], what: &str| -> Result<()> {
            if seq.is_empty() {
                return Err(Error::invalid(format!("empty {what} token sequence")));
            }
            for &t in seq {
                if t >= cfg.vocab_size {
                    return Err(Error::invalid(format!(
                        "{what} token id {t} out of range (vocab {})",
                        cfg.vocab_size
                    )));
                }
            }
            Ok(())
        };
        match self {
            ExampleBatch::Triplets(items) => {
                for t in items {
                    check(&t.anchor, "anchor")?;
                    check(&t.positive, "positive")?;
                    check(&t.negative, "negative")?;
                }
            }
            ExampleBatch::Pairs(items) => {
                for p in items {
                    check(&p.s1, "sentence1")?;
                    check(&p.s2, "sentence2")?;
                }
            }
        }
        Ok(())
    }
}

fn trunc(seq: &[usize], max: usize) -> &[usize] {
    &seq[..seq.len().min(max)]
}

fn encode_seq<S: Scalar>(
    values: &[S],
    layout: &ParamLayout,
    cfg: &EncoderConfig,
    seq: &[usize],
    max_len: usize,
) -> RowTrace<S> {
    let row = trunc(seq, max_len);
    let mask = vec![true; row.len()];
    encode_row(values, layout, cfg, row, &mask)
}

/// Distance value and partials w.r.t. both embeddings.
fn distance_with_grad<S: Scalar>(
    u: &[S],
    v: &[S],
    mode: DistanceMode,
) -> Result<(S, Vec<S>, Vec<S>)> {
    match mode {
        DistanceMode::Cosine => {
            let (c, du, dv) = cosine_with_grad(u, v)?;
            Ok((
                S::one() - c,
                du.into_iter().map(|g| -g).collect(),
                dv.into_iter().map(|g| -g).collect(),
            ))
        }
        DistanceMode::NegDot => {
            let mut d = S::zero();
            for (&a, &b) in u.iter().zip(v) {
                d = d - a * b;
            }
            Ok((
                d,
                v.iter().map(|&b| -b).collect(),
                u.iter().map(|&a| -a).collect(),
            ))
        }
    }
}

fn axpy<S: Scalar>(acc: &mut [S], scale: S, x: &[S]) {
    for (a, &b) in acc.iter_mut().zip(x) {
        *a = *a + scale * b;
    }
}

struct TripletTraces<S: Scalar> {
    q: Vec<RowTrace<S>>,
    p: Vec<RowTrace<S>>,
    n: Vec<RowTrace<S>>,
    dq: Vec<Vec<S>>,
    dp: Vec<Vec<S>>,
    dn: Vec<Vec<S>>,
}

fn encode_triplets<S: Scalar>(
    values: &[S],
    layout: &ParamLayout,
    cfg: &EncoderConfig,
    items: &[Triplet],
) -> TripletTraces<S> {
    let d = cfg.embed_dim;
    let mut t = TripletTraces {
        q: Vec::with_capacity(items.len()),
        p: Vec::with_capacity(items.len()),
        n: Vec::with_capacity(items.len()),
        dq: vec![vec![S::zero(); d]; items.len()],
        dp: vec![vec![S::zero(); d]; items.len()],
        dn: vec![vec![S::zero(); d]; items.len()],
    };
    for item in items {
        t.q.push(encode_seq(values, layout, cfg, &item.anchor, cfg.max_question_len));
        t.p.push(encode_seq(values, layout, cfg, &item.positive, cfg.max_candidate_len));
        t.n.push(encode_seq(values, layout, cfg, &item.negative, cfg.max_candidate_len));
    }
    t
}

/// In-batch retrieval score vector for anchor `i`: similarity of its query
/// embedding against every positive in the batch.
fn triplet_scores<S: Scalar>(traces: &TripletTraces<S>, i: usize) -> Result<Vec<S>> {
    let mut scores = Vec::with_capacity(traces.p.len());
    for p in &traces.p {
        let (c, _, _) = cosine_with_grad(&traces.q[i].out, &p.out)?;
        scores.push(c);
    }
    Ok(scores)
}

/// Core gradient evaluation, generic over the scalar type.
pub fn loss_and_grad_generic<S: Scalar>(
    values: &[S],
    layout: &ParamLayout,
    cfg: &EncoderConfig,
    spec: &LossSpec,
    batch: &ExampleBatch,
    teacher_scores: Option<&[Vec<f64>]>,
) -> Result<(S, Vec<S>)> {
    spec.validate()?;
    batch.validate(cfg)?;
    if spec.kind == LossKind::Composite {
        let teacher = teacher_scores
            .ok_or_else(|| Error::invalid("composite objective requires teacher scores"))?;
        if teacher.len() != batch.len() {
            return Err(Error::invalid("teacher score count != batch size"));
        }
    }
    let mut grad = vec![S::zero(); layout.total];
    let inv_b = S::one() / S::from_f64(batch.len() as f64);
    let mut loss = S::zero();

    match batch {
        ExampleBatch::Triplets(items) => {
            if spec.kind == LossKind::Regression {
                return Err(Error::invalid("regression objective needs a pair batch"));
            }
            let mut tr = encode_triplets(values, layout, cfg, items);
            let margin = S::from_f64(spec.margin);
            for i in 0..items.len() {
                let (dqp, dq1, dp1) =
                    distance_with_grad(&tr.q[i].out, &tr.p[i].out, spec.distance_mode)?;
                let (dqn, dq2, dn2) =
                    distance_with_grad(&tr.q[i].out, &tr.n[i].out, spec.distance_mode)?;
                let hinge = dqp - dqn + margin;
                if hinge.primal() > 0.0 {
                    loss = loss + hinge * inv_b;
                    axpy(&mut tr.dq[i], inv_b, &dq1);
                    axpy(&mut tr.dq[i], -inv_b, &dq2);
                    axpy(&mut tr.dp[i], inv_b, &dp1);
                    axpy(&mut tr.dn[i], -inv_b, &dn2);
                }
            }
            if spec.kind == LossKind::Composite {
                let teacher = teacher_scores.unwrap();
                let lambda = S::from_f64(spec.lambda);
                for i in 0..items.len() {
                    let scores = triplet_scores(&tr, i)?;
                    if teacher[i].len() != scores.len() {
                        return Err(Error::invalid(
                            "teacher score vector length != in-batch candidate count",
                        ));
                    }
                    let (kl, ds) = kd_grad_wrt_student(&teacher[i], &scores);
                    loss = loss + lambda * kl * inv_b;
                    for (j, &g) in ds.iter().enumerate() {
                        let w = lambda * g * inv_b;
                        let (_, dqi, dpj) = cosine_with_grad(&tr.q[i].out, &tr.p[j].out)?;
                        // split borrow: accumulate via temporaries
                        axpy(&mut tr.dq[i], w, &dqi);
                        axpy(&mut tr.dp[j], w, &dpj);
                    }
                }
            }
            for i in 0..items.len() {
                backprop_row(values, layout, cfg, &tr.q[i], &tr.dq[i], &mut grad);
                backprop_row(values, layout, cfg, &tr.p[i], &tr.dp[i], &mut grad);
                backprop_row(values, layout, cfg, &tr.n[i], &tr.dn[i], &mut grad);
            }
        }
        ExampleBatch::Pairs(items) => {
            if spec.kind == LossKind::Triplet {
                return Err(Error::invalid("triplet objective needs a triplet batch"));
            }
            let d = cfg.embed_dim;
            let mut t1 = Vec::with_capacity(items.len());
            let mut t2 = Vec::with_capacity(items.len());
            for p in items {
                t1.push(encode_seq(values, layout, cfg, &p.s1, cfg.max_sentence_len));
                t2.push(encode_seq(values, layout, cfg, &p.s2, cfg.max_sentence_len));
            }
            let mut d1 = vec![vec![S::zero(); d]; items.len()];
            let mut d2 = vec![vec![S::zero(); d]; items.len()];
            for (i, item) in items.iter().enumerate() {
                let (c, du, dv) = cosine_with_grad(&t1[i].out, &t2[i].out)?;
                let gold = S::from_f64(item.gold);
                let diff = c - gold;
                loss = loss + diff * diff * inv_b;
                let two = S::from_f64(2.0);
                axpy(&mut d1[i], two * diff * inv_b, &du);
                axpy(&mut d2[i], two * diff * inv_b, &dv);
                if spec.kind == LossKind::Composite {
                    let teacher = teacher_scores.unwrap();
                    // symmetric-search score vector: (cos, 1 - cos)
                    let scores = vec![c, S::one() - c];
                    if teacher[i].len() != 2 {
                        return Err(Error::invalid(
                            "pair teacher score vector must have two entries",
                        ));
                    }
                    let (kl, ds) = kd_grad_wrt_student(&teacher[i], &scores);
                    let lambda = S::from_f64(spec.lambda);
                    loss = loss + lambda * kl * inv_b;
                    let dc = ds[0] - ds[1];
                    axpy(&mut d1[i], lambda * dc * inv_b, &du);
                    axpy(&mut d2[i], lambda * dc * inv_b, &dv);
                }
            }
            for i in 0..items.len() {
                backprop_row(values, layout, cfg, &t1[i], &d1[i], &mut grad);
                backprop_row(values, layout, cfg, &t2[i], &d2[i], &mut grad);
            }
        }
    }

    if !loss.primal().is_finite() {
        return Err(Error::Numeric("non-finite loss".into()));
    }
    Ok((loss, grad))
}

/// Scalar loss and analytic gradient in the parameter layout.
pub fn loss_and_grad(
    params: &ParameterVector,
    spec: &LossSpec,
    batch: &ExampleBatch,
    teacher_scores: Option<&[Vec<f64>]>,
    cfg: &EncoderConfig,
) -> Result<(f64, Vec<f64>)> {
    loss_and_grad_generic::<f64>(
        &params.values,
        &params.layout,
        cfg,
        spec,
        batch,
        teacher_scores,
    )
}

/// Distillation loss alone (mean KL over examples) with its gradient.
/// The teacher distribution is a constant; gradients flow only through the
/// student scores.
pub fn kd_only_loss_and_grad(
    params: &ParameterVector,
    batch: &ExampleBatch,
    teacher_scores: &[Vec<f64>],
    cfg: &EncoderConfig,
) -> Result<(f64, Vec<f64>)> {
    batch.validate(cfg)?;
    if teacher_scores.len() != batch.len() {
        return Err(Error::invalid("teacher score count != batch size"));
    }
    let values = &params.values;
    let layout = &params.layout;
    let mut grad = vec![0.0; layout.total];
    let inv_b = 1.0 / batch.len() as f64;
    let mut loss = 0.0;
    match batch {
        ExampleBatch::Triplets(items) => {
            let mut tr = encode_triplets::<f64>(values, layout, cfg, items);
            for i in 0..items.len() {
                let scores = triplet_scores(&tr, i)?;
                if teacher_scores[i].len() != scores.len() {
                    return Err(Error::invalid(
                        "teacher score vector length != in-batch candidate count",
                    ));
                }
                let (kl, ds) = kd_grad_wrt_student(&teacher_scores[i], &scores);
                loss += kl * inv_b;
                for (j, &g) in ds.iter().enumerate() {
                    let (_, dqi, dpj) = cosine_with_grad(&tr.q[i].out, &tr.p[j].out)?;
                    axpy(&mut tr.dq[i], g * inv_b, &dqi);
                    axpy(&mut tr.dp[j], g * inv_b, &dpj);
                }
            }
            for i in 0..items.len() {
                backprop_row(values, layout, cfg, &tr.q[i], &tr.dq[i], &mut grad);
                backprop_row(values, layout, cfg, &tr.p[i], &tr.dp[i], &mut grad);
            }
        }
        ExampleBatch::Pairs(items) => {
            let d = cfg.embed_dim;
            for (i, item) in items.iter().enumerate() {
                let t1 = encode_seq::<f64>(values, layout, cfg, &item.s1, cfg.max_sentence_len);
                let t2 = encode_seq::<f64>(values, layout, cfg, &item.s2, cfg.max_sentence_len);
                let (c, du, dv) = cosine_with_grad(&t1.out, &t2.out)?;
                let scores = vec![c, 1.0 - c];
                if teacher_scores[i].len() != 2 {
                    return Err(Error::invalid(
                        "pair teacher score vector must have two entries",
                    ));
                }
                let (kl, ds) = kd_grad_wrt_student(&teacher_scores[i], &scores);
                loss += kl * inv_b;
                let dc = (ds[0] - ds[1]) * inv_b;
                let mut d1 = vec![0.0; d];
                let mut d2 = vec![0.0; d];
                axpy(&mut d1, dc, &du);
                axpy(&mut d2, dc, &dv);
                backprop_row(values, layout, cfg, &t1, &d1, &mut grad);
                backprop_row(values, layout, cfg, &t2, &d2, &mut grad);
            }
        }
    }
    Ok((loss, grad))
}

/// Per-example score vectors used as the distillation signal: in-batch
/// query-vs-positive similarities for retrieval, `(cos, 1 - cos)` for pairs.
pub fn score_vectors(
    params: &ParameterVector,
    batch: &ExampleBatch,
    cfg: &EncoderConfig,
) -> Result<Vec<Vec<f64>>> {
    batch.validate(cfg)?;
    let values = &params.values;
    let layout = &params.layout;
    match batch {
        ExampleBatch::Triplets(items) => {
            let tr = encode_triplets::<f64>(values, layout, cfg, items);
            (0..items.len()).map(|i| triplet_scores(&tr, i)).collect()
        }
        ExampleBatch::Pairs(items) => items
            .iter()
            .map(|item| {
                let t1 = encode_seq::<f64>(values, layout, cfg, &item.s1, cfg.max_sentence_len);
                let t2 = encode_seq::<f64>(values, layout, cfg, &item.s2, cfg.max_sentence_len);
                let (c, _, _) = cosine_with_grad(&t1.out, &t2.out)?;
                Ok(vec![c, 1.0 - c])
            })
            .collect(),
    }
}

/// Exact Hessian-vector product of the objective at `params` in direction `v`,
/// computed forward-over-reverse with dual numbers.
pub fn hessian_vector_product(
    params: &ParameterVector,
    spec: &LossSpec,
    batch: &ExampleBatch,
    teacher_scores: Option<&[Vec<f64>]>,
    cfg: &EncoderConfig,
    v: &[f64],
) -> Result<Vec<f64>> {
    params.check_grad_layout(v)?;
    let dual_values: Vec<Dual> = params
        .values
        .iter()
        .zip(v)
        .map(|(&p, &t)| Dual::new(p, t))
        .collect();
    let (_, grad) =
        loss_and_grad_generic::<Dual>(&dual_values, &params.layout, cfg, spec, batch, teacher_scores)?;
    Ok(grad.into_iter().map(|g| g.t).collect())
}
