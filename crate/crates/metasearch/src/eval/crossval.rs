//! Deterministic k-fold cross-validation and metric reporting.

use std::collections::BTreeMap;
use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Stable FNV-1a hash so fold membership depends only on the id string, not
/// on corpus ordering.
pub fn stable_id_hash(id: &str) -> u64 {
    let mut h: u64 = 0xcbf29ce484222325;
    for b in id.as_bytes() {
        h ^= u64::from(*b);
        h = h.wrapping_mul(0x100000001b3);
    }
    h
}

pub fn fold_of(id: &str, folds: usize) -> usize {
    (stable_id_hash(id) % folds as u64) as usize
}

/// Splits ids into fold-indexed buckets; every fold must be non-empty.
pub fn fold_assignments(ids: &[String], folds: usize) -> Result<Vec<Vec<String>>> {
    if folds < 2 {
        return Err(Error::config("cross-validation needs at least two folds"));
    }
    let mut buckets = vec![Vec::new(); folds];
    for id in ids {
        buckets[fold_of(id, folds)].push(id.clone());
    }
    for (i, bucket) in buckets.iter().enumerate() {
        if bucket.is_empty() {
            return Err(Error::corpus(format!(
                "fold {i} of {folds} received no items; corpus too small or skewed"
            )));
        }
    }
    Ok(buckets)
}

/// Per-fold scores with their aggregate; optionally broken out by language.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub metric: String,
    pub fold_count: usize,
    pub fold_scores: Vec<f64>,
    pub mean: f64,
    /// Population standard deviation over the fold scores.
    pub std: f64,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub per_language: BTreeMap<String, f64>,
}

pub fn mean_and_population_std(xs: &[f64]) -> Result<(f64, f64)> {
    if xs.is_empty() {
        return Err(Error::invalid("no scores to aggregate"));
    }
    let mean = xs.iter().sum::<f64>() / xs.len() as f64;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / xs.len() as f64;
    Ok((mean, var.sqrt()))
}

impl MetricReport {
    pub fn from_fold_scores(metric: &str, fold_scores: Vec<f64>) -> Result<Self> {
        let (mean, std) = mean_and_population_std(&fold_scores)?;
        Ok(MetricReport {
            metric: metric.to_string(),
            fold_count: fold_scores.len(),
            fold_scores,
            mean,
            std,
            per_language: BTreeMap::new(),
        })
    }

    /// Human-readable table: per-language columns when present, then the
    /// fold aggregate as mean +/- std.
    pub fn to_table(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!("metric: {}\n", self.metric));
        if !self.per_language.is_empty() {
            let header: Vec<&str> = self.per_language.keys().map(String::as_str).collect();
            out.push_str(&header.join("\t"));
            out.push('\n');
            let row: Vec<String> = self
                .per_language
                .values()
                .map(|v| format!("{v:.2}"))
                .collect();
            out.push_str(&row.join("\t"));
            out.push('\n');
        }
        let folds: Vec<String> = self.fold_scores.iter().map(|v| format!("{v:.2}")).collect();
        out.push_str(&format!("folds ({}): {}\n", self.fold_count, folds.join(", ")));
        out.push_str(&format!("{:.2} +/- {:.2}\n", self.mean, self.std));
        out
    }

    /// One JSON line holding the whole report.
    pub fn save_jsonl(&self, path: &Path) -> Result<()> {
        let mut out = BufWriter::new(fs::File::create(path)?);
        writeln!(out, "{}", serde_json::to_string(self)?)?;
        out.flush()?;
        Ok(())
    }

    /// Plot-ready per-fold values.
    pub fn save_csv(&self, path: &Path) -> Result<()> {
        let mut out = BufWriter::new(fs::File::create(path)?);
        writeln!(out, "fold,{}", self.metric)?;
        for (i, v) in self.fold_scores.iter().enumerate() {
            writeln!(out, "{i},{v}")?;
        }
        out.flush()?;
        Ok(())
    }
}

/// Runs `fold_fn(fold_index, kept_ids, held_out_ids)` once per fold and
/// aggregates the returned scores. The caller decides what a fold run means
/// (typically: train on the kept ids, evaluate on the held-out ids).
pub fn cross_validate(
    ids: &[String],
    folds: usize,
    metric: &str,
    fold_fn: &mut dyn FnMut(usize, &[String], &[String]) -> Result<f64>,
) -> Result<MetricReport> {
    let buckets = fold_assignments(ids, folds)?;
    let mut scores = Vec::with_capacity(folds);
    for (i, held_out) in buckets.iter().enumerate() {
        let kept: Vec<String> = buckets
            .iter()
            .enumerate()
            .filter(|(j, _)| *j != i)
            .flat_map(|(_, b)| b.iter().cloned())
            .collect();
        scores.push(fold_fn(i, &kept, held_out)?);
    }
    MetricReport::from_fold_scores(metric, scores)
}
