//! Training objectives: triplet loss with difficulty-classified negative
//! mining, cosine-regression loss, and the distillation loss used by the
//! meta-distillation learner.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::encode::encode;
use crate::model::params::{EncoderConfig, ParameterVector, TokenBatch};
use crate::model::scalar::Scalar;

/// How `d(q, .)` is computed. Cosine distance `1 - cos` is the default; the
/// raw negative dot product is available for experiments.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DistanceMode {
    #[default]
    Cosine,
    NegDot,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LossKind {
    Triplet,
    Regression,
    Composite,
}

/// Objective description shared by the gradient engine and the learners.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossSpec {
    pub kind: LossKind,
    /// Triplet margin; 1 by default.
    pub margin: f64,
    pub distance_mode: DistanceMode,
    /// Distillation weight for the composite objective; 0.5 by default.
    pub lambda: f64,
}

impl LossSpec {
    pub fn triplet() -> Self {
        LossSpec {
            kind: LossKind::Triplet,
            margin: 1.0,
            distance_mode: DistanceMode::Cosine,
            lambda: 0.5,
        }
    }

    pub fn regression() -> Self {
        LossSpec {
            kind: LossKind::Regression,
            ..Self::triplet()
        }
    }

    pub fn composite(lambda: f64) -> Self {
        LossSpec {
            kind: LossKind::Composite,
            lambda,
            ..Self::triplet()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.margin <= 0.0 {
            return Err(Error::config("triplet margin must be > 0"));
        }
        if !(0.0..=1.0).contains(&self.lambda) {
            return Err(Error::config("lambda must lie in [0, 1]"));
        }
        Ok(())
    }
}

/// Map a raw 1..5 gold similarity score onto [0, 1].
pub fn normalize_gold(raw: f64) -> f64 {
    (raw - 1.0) / 4.0
}

// ---------------------------------------------------------------------------
// Embedding-level math, generic over the scalar type.
// ---------------------------------------------------------------------------

pub(crate) fn dot<S: Scalar>(u: &[S], v: &[S]) -> S {
    let mut acc = S::zero();
    for (&a, &b) in u.iter().zip(v) {
        acc = acc + a * b;
    }
    acc
}

pub(crate) fn norm<S: Scalar>(u: &[S]) -> S {
    dot(u, u).sqrt()
}

/// Cosine similarity together with its partials w.r.t. both arguments.
pub(crate) fn cosine_with_grad<S: Scalar>(u: &[S], v: &[S]) -> Result<(S, Vec<S>, Vec<S>)> {
    let nu = norm(u);
    let nv = norm(v);
    if nu.primal() == 0.0 || nv.primal() == 0.0 {
        return Err(Error::invalid("zero vector in cosine similarity"));
    }
    let c = dot(u, v) / (nu * nv);
    let inv = S::one() / (nu * nv);
    let du: Vec<S> = u
        .iter()
        .zip(v)
        .map(|(&ui, &vi)| vi * inv - c * ui / (nu * nu))
        .collect();
    let dv: Vec<S> = u
        .iter()
        .zip(v)
        .map(|(&ui, &vi)| ui * inv - c * vi / (nv * nv))
        .collect();
    Ok((c, du, dv))
}

pub(crate) fn cosine<S: Scalar>(u: &[S], v: &[S]) -> Result<S> {
    let nu = norm(u);
    let nv = norm(v);
    if nu.primal() == 0.0 || nv.primal() == 0.0 {
        return Err(Error::invalid("zero vector in cosine similarity"));
    }
    Ok(dot(u, v) / (nu * nv))
}

/// Distance between two embeddings under the given mode.
pub fn distance(u: &[f64], v: &[f64], mode: DistanceMode) -> Result<f64> {
    if u.len() != v.len() {
        return Err(Error::invalid("distance: dimension mismatch"));
    }
    match mode {
        DistanceMode::Cosine => Ok(1.0 - cosine(u, v)?),
        DistanceMode::NegDot => Ok(-dot(u, v)),
    }
}

/// Hinge triplet loss `max(d(q,p) - d(q,n) + margin, 0)` on embeddings.
pub fn triplet_loss(q: &[f64], p: &[f64], n: &[f64], margin: f64, mode: DistanceMode) -> Result<f64> {
    let dqp = distance(q, p, mode)?;
    let dqn = distance(q, n, mode)?;
    Ok((dqp - dqn + margin).max(0.0))
}

/// Mean squared error between the pair cosine and the (normalized) gold score.
pub fn regression_loss(e1: &[f64], e2: &[f64], gold: f64) -> Result<f64> {
    let c = cosine(e1, e2)?;
    Ok((c - gold) * (c - gold))
}

// ---------------------------------------------------------------------------
// Triplet difficulty classes
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum TripletClass {
    Easy,
    Hard,
    SemiHard,
}

/// Classify from precomputed distances. Boundary equalities go to SemiHard so
/// the three regions partition every input.
pub fn classify_distances(dqp: f64, dqn: f64, margin: f64) -> TripletClass {
    if dqp + margin < dqn {
        TripletClass::Easy
    } else if dqn < dqp {
        TripletClass::Hard
    } else {
        TripletClass::SemiHard
    }
}

pub fn classify_triplet(
    q: &[f64],
    p: &[f64],
    n: &[f64],
    margin: f64,
    mode: DistanceMode,
) -> Result<TripletClass> {
    let dqp = distance(q, p, mode)?;
    let dqn = distance(q, n, mode)?;
    Ok(classify_distances(dqp, dqn, margin))
}

// ---------------------------------------------------------------------------
// Negative mining
// ---------------------------------------------------------------------------

/// An (anchor, positive, negative) token triple ready for encoding.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Triplet {
    pub anchor: Vec<usize>,
    pub positive: Vec<usize>,
    pub negative: Vec<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MiningMode {
    #[default]
    Random,
    Hard,
    SemiHard,
}

/// Draw negatives for each (anchor, positive). Random draws uniformly without
/// replacement; Hard/SemiHard keep only negatives whose classification under
/// `params` matches, returning fewer than `count_per_anchor` when fewer
/// qualify.
#[allow(clippy::too_many_arguments)]
pub fn mine_triplets<R: Rng>(
    anchors: &[(Vec<usize>, Vec<usize>)],
    negative_pool: &[Vec<usize>],
    mode: MiningMode,
    count_per_anchor: usize,
    params: &ParameterVector,
    cfg: &EncoderConfig,
    margin: f64,
    rng: &mut R,
) -> Result<Vec<Triplet>> {
    if negative_pool.is_empty() {
        return Err(Error::invalid("negative pool is empty"));
    }
    let mut out = Vec::new();
    // Distances are only needed for the difficulty-filtered modes.
    let pool_emb = match mode {
        MiningMode::Random => None,
        _ => {
            let batch = TokenBatch::from_sequences(negative_pool, cfg.max_candidate_len);
            Some(encode(params, &batch, cfg)?)
        }
    };
    for (anchor, positive) in anchors {
        let candidate_indices: Vec<usize> = match mode {
            MiningMode::Random => (0..negative_pool.len()).collect(),
            MiningMode::Hard | MiningMode::SemiHard => {
                let q = &encode(
                    params,
                    &TokenBatch::single(anchor, cfg.max_question_len),
                    cfg,
                )?[0];
                let p = &encode(
                    params,
                    &TokenBatch::single(positive, cfg.max_candidate_len),
                    cfg,
                )?[0];
                let dqp = distance(q, p, DistanceMode::Cosine)?;
                let want = if mode == MiningMode::Hard {
                    TripletClass::Hard
                } else {
                    TripletClass::SemiHard
                };
                let mut keep = Vec::new();
                for (idx, n) in pool_emb.as_ref().unwrap().iter().enumerate() {
                    let dqn = distance(q, n, DistanceMode::Cosine)?;
                    if classify_distances(dqp, dqn, margin) == want {
                        keep.push(idx);
                    }
                }
                keep
            }
        };
        let take = count_per_anchor.min(candidate_indices.len());
        let chosen = rand::seq::index::sample(rng, candidate_indices.len(), take);
        for pos in chosen.iter() {
            out.push(Triplet {
                anchor: anchor.clone(),
                positive: positive.clone(),
                negative: negative_pool[candidate_indices[pos]].clone(),
            });
        }
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// Knowledge distillation
// ---------------------------------------------------------------------------

pub(crate) fn softmax<S: Scalar>(scores: &[S]) -> Vec<S> {
    // Shift by the primal max for stability.
    let m = scores
        .iter()
        .map(|s| s.primal())
        .fold(f64::NEG_INFINITY, f64::max);
    let shifted: Vec<S> = scores.iter().map(|&s| (s - S::from_f64(m)).exp()).collect();
    let mut z = S::zero();
    for &e in &shifted {
        z = z + e;
    }
    shifted.into_iter().map(|e| e / z).collect()
}

/// Mean over examples of `KL(softmax(teacher_i) || softmax(student_i))`.
pub fn kd_loss(teacher_scores: &[Vec<f64>], student_scores: &[Vec<f64>]) -> Result<f64> {
    if teacher_scores.len() != student_scores.len() {
        return Err(Error::invalid("kd_loss: example count mismatch"));
    }
    if teacher_scores.is_empty() {
        return Err(Error::invalid("kd_loss: empty batch"));
    }
    let mut total = 0.0;
    for (t, s) in teacher_scores.iter().zip(student_scores) {
        if t.len() != s.len() {
            return Err(Error::invalid("kd_loss: score vector length mismatch"));
        }
        let p = softmax::<f64>(t);
        let q = softmax::<f64>(s);
        let mut kl = 0.0;
        for (&pi, &qi) in p.iter().zip(&q) {
            kl += pi * (pi.ln() - qi.ln());
        }
        total += kl;
    }
    Ok((total / teacher_scores.len() as f64).max(0.0))
}

/// Gradient of `KL(P || softmax(s))` with respect to the student scores `s`.
pub(crate) fn kd_grad_wrt_student<S: Scalar>(teacher: &[f64], student: &[S]) -> (S, Vec<S>) {
    let p = softmax::<f64>(teacher);
    let q = softmax::<S>(student);
    let mut kl = S::zero();
    for (&pi, &qi) in p.iter().zip(&q) {
        if pi > 0.0 {
            let pi_s = S::from_f64(pi);
            kl = kl + pi_s * (S::from_f64(pi.ln()) - qi.ln());
        }
    }
    let grad = q
        .iter()
        .zip(&p)
        .map(|(&qi, &pi)| qi - S::from_f64(pi))
        .collect();
    (kl, grad)
}
