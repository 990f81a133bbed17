//! The toy encoder forward pass and its hand-written backward pass, generic
//! over the scalar type so the same code serves plain gradients and
//! Hessian-vector products.

use crate::error::Result;
use crate::model::params::{
    EncoderConfig, ParamLayout, ParameterVector, TokenBatch, SEG_EMBEDDING, SEG_PROJ_BIAS,
    SEG_PROJ_WEIGHT,
};
use crate::model::scalar::Scalar;

/// Everything the backward pass needs from one encoded row.
pub struct RowTrace<S: Scalar> {
    pub tokens: Vec<usize>,
    pub inv_count: S,
    pub pooled: Vec<S>,
    /// Pre-normalization vector (pooled, or projected if a projection exists).
    pub pre_norm: Vec<S>,
    pub norm: Option<S>,
    pub out: Vec<S>,
}

fn segment_offset(layout: &ParamLayout, name: &str) -> usize {
    layout.segment(name).expect("segment present").offset
}

/// Forward pass for one row: lookup -> masked mean -> projection -> L2 norm.
pub fn encode_row<S: Scalar>(
    values: &[S],
    layout: &ParamLayout,
    cfg: &EncoderConfig,
    row: &[usize],
    mask: &[bool],
) -> RowTrace<S> {
    let d = cfg.embed_dim;
    let emb_off = segment_offset(layout, SEG_EMBEDDING);
    let mut pooled = vec![S::zero(); d];
    let mut tokens = Vec::new();
    for (&tok, &keep) in row.iter().zip(mask) {
        if keep {
            tokens.push(tok);
            let base = emb_off + tok * d;
            for (p, &e) in pooled.iter_mut().zip(&values[base..base + d]) {
                *p = *p + e;
            }
        }
    }
    let inv_count = S::one() / S::from_f64(tokens.len() as f64);
    for p in pooled.iter_mut() {
        *p = *p * inv_count;
    }

    let pre_norm = if cfg.use_projection {
        let w_off = segment_offset(layout, SEG_PROJ_WEIGHT);
        let b_off = segment_offset(layout, SEG_PROJ_BIAS);
        let mut h = vec![S::zero(); d];
        for (i, hi) in h.iter_mut().enumerate() {
            let mut acc = values[b_off + i];
            let wrow = &values[w_off + i * d..w_off + (i + 1) * d];
            for (wij, pj) in wrow.iter().zip(&pooled) {
                acc = acc + *wij * *pj;
            }
            *hi = acc;
        }
        h
    } else {
        pooled.clone()
    };

    let (out, norm) = if cfg.normalize_output {
        let mut sq = S::zero();
        for &h in &pre_norm {
            sq = sq + h * h;
        }
        let n = sq.sqrt();
        (pre_norm.iter().map(|&h| h / n).collect(), Some(n))
    } else {
        (pre_norm.clone(), None)
    };

    RowTrace {
        tokens,
        inv_count,
        pooled,
        pre_norm,
        norm,
        out,
    }
}

/// Accumulate d(loss)/d(params) for one row given d(loss)/d(out).
pub fn backprop_row<S: Scalar>(
    values: &[S],
    layout: &ParamLayout,
    cfg: &EncoderConfig,
    trace: &RowTrace<S>,
    d_out: &[S],
    grad: &mut [S],
) {
    let d = cfg.embed_dim;

    // Through normalization: z = h/|h| => dh = (dz - z (z.dz)) / |h|
    let d_pre: Vec<S> = if let Some(n) = trace.norm {
        let mut zdot = S::zero();
        for (&z, &dz) in trace.out.iter().zip(d_out) {
            zdot = zdot + z * dz;
        }
        trace
            .out
            .iter()
            .zip(d_out)
            .map(|(&z, &dz)| (dz - z * zdot) / n)
            .collect()
    } else {
        d_out.to_vec()
    };

    // Through projection: h = W e + b
    let d_pooled: Vec<S> = if cfg.use_projection {
        let w_off = segment_offset(layout, SEG_PROJ_WEIGHT);
        let b_off = segment_offset(layout, SEG_PROJ_BIAS);
        let mut de = vec![S::zero(); d];
        for (i, &dh) in d_pre.iter().enumerate() {
            grad[b_off + i] = grad[b_off + i] + dh;
            let wrow = w_off + i * d;
            for j in 0..d {
                grad[wrow + j] = grad[wrow + j] + dh * trace.pooled[j];
                de[j] = de[j] + values[wrow + j] * dh;
            }
        }
        de
    } else {
        d_pre
    };

    // Through masked mean pooling into the embedding table.
    let emb_off = segment_offset(layout, SEG_EMBEDDING);
    for &tok in &trace.tokens {
        let base = emb_off + tok * d;
        for (j, &de) in d_pooled.iter().enumerate() {
            grad[base + j] = grad[base + j] + de * trace.inv_count;
        }
    }
}

/// Encode a batch into n rows of d-dimensional sentence embeddings.
///
/// Pure in (params, batch, cfg); row i of the output depends only on row i of
/// the batch.
pub fn encode(
    params: &ParameterVector,
    batch: &TokenBatch,
    cfg: &EncoderConfig,
) -> Result<Vec<Vec<f64>>> {
    batch.validate(cfg)?;
    let mut out = Vec::with_capacity(batch.rows());
    for (row, mask) in batch.sequences.iter().zip(&batch.mask) {
        let trace = encode_row::<f64>(&params.values, &params.layout, cfg, row, mask);
        out.push(trace.out);
    }
    Ok(out)
}
