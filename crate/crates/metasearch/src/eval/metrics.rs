//! Ranking and regression metrics.

use crate::error::{Error, Result};
use crate::model::{EncoderConfig, ParameterVector};

use super::pool::{rank_with_embeddings, EvalPool};

/// Average precision truncated at `k`, normalized by `min(r, k)` so a
/// perfect top-k ranking scores 1.0 even when more than `k` candidates are
/// relevant.
pub fn average_precision_at_k(flags: &[bool], r: usize, k: usize) -> Result<f64> {
    if r == 0 {
        return Err(Error::invalid("query has no relevant candidates"));
    }
    if k == 0 {
        return Err(Error::invalid("cutoff must be positive"));
    }
    let mut hits = 0usize;
    let mut sum = 0.0;
    for (i, &rel) in flags.iter().take(k).enumerate() {
        if rel {
            hits += 1;
            sum += hits as f64 / (i + 1) as f64;
        }
    }
    Ok(sum / r.min(k) as f64)
}

#[derive(Debug, Clone)]
pub struct MapResult {
    pub map: f64,
    pub included_queries: usize,
    /// Question ids skipped because no relevant candidate exists in the pool.
    pub excluded_queries: Vec<String>,
}

/// Mean AP@20 over pool queries; queries with an empty relevant set are
/// excluded and reported back.
pub fn map_at_20(
    params: &ParameterVector,
    pool: &EvalPool,
    encoder: &EncoderConfig,
) -> Result<MapResult> {
    pool.validate()?;
    let qe = pool.query_embeddings(params, encoder)?;
    let ce = pool.candidate_embeddings(params, encoder)?;
    let mut sum = 0.0;
    let mut included = 0usize;
    let mut excluded = Vec::new();
    for (query, emb) in pool.queries.iter().zip(&qe) {
        if query.relevant.is_empty() {
            excluded.push(query.question_id.clone());
            continue;
        }
        let ranked = rank_with_embeddings(emb, &ce, pool)?;
        let flags: Vec<bool> = ranked.iter().map(|id| query.relevant.contains(id)).collect();
        sum += average_precision_at_k(&flags, query.relevant.len(), 20)?;
        included += 1;
    }
    if included == 0 {
        return Err(Error::corpus(
            "every pool query lacks relevant candidates",
        ));
    }
    Ok(MapResult {
        map: sum / included as f64,
        included_queries: included,
        excluded_queries: excluded,
    })
}

/// Sample Pearson correlation coefficient scaled onto [-100, 100].
pub fn pearson_r_times_100(predictions: &[f64], golds: &[f64]) -> Result<f64> {
    if predictions.len() != golds.len() {
        return Err(Error::invalid("prediction and gold lengths differ"));
    }
    let n = predictions.len();
    if n < 2 {
        return Err(Error::invalid("correlation needs at least two points"));
    }
    let mean = |xs: &[f64]| xs.iter().sum::<f64>() / xs.len() as f64;
    let mp = mean(predictions);
    let mg = mean(golds);
    let mut cov = 0.0;
    let mut vp = 0.0;
    let mut vg = 0.0;
    for (p, g) in predictions.iter().zip(golds) {
        let dp = p - mp;
        let dg = g - mg;
        cov += dp * dg;
        vp += dp * dp;
        vg += dg * dg;
    }
    if vp == 0.0 || vg == 0.0 {
        return Err(Error::Numeric(
            "correlation undefined under zero variance".into(),
        ));
    }
    Ok(100.0 * cov / (vp.sqrt() * vg.sqrt()))
}
