//! Flat parameter storage with a named segment layout, plus the encoder
//! configuration that determines it.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use rand::Rng;

pub const SEG_EMBEDDING: &str = "token_embedding";
pub const SEG_PROJ_WEIGHT: &str = "proj_weight";
pub const SEG_PROJ_BIAS: &str = "proj_bias";

fn default_question_len() -> usize {
    96
}
fn default_candidate_len() -> usize {
    256
}
fn default_sentence_len() -> usize {
    100
}
fn default_true() -> bool {
    true
}

/// Shape of the trainable encoder: embedding lookup, masked mean pooling,
/// optional linear projection, optional L2 normalization.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EncoderConfig {
    pub vocab_size: usize,
    pub embed_dim: usize,
    #[serde(default = "default_question_len")]
    pub max_question_len: usize,
    #[serde(default = "default_candidate_len")]
    pub max_candidate_len: usize,
    #[serde(default = "default_sentence_len")]
    pub max_sentence_len: usize,
    #[serde(default = "default_true")]
    pub use_projection: bool,
    #[serde(default = "default_true")]
    pub normalize_output: bool,
}

impl EncoderConfig {
    pub fn new(vocab_size: usize, embed_dim: usize) -> Self {
        EncoderConfig {
            vocab_size,
            embed_dim,
            max_question_len: default_question_len(),
            max_candidate_len: default_candidate_len(),
            max_sentence_len: default_sentence_len(),
            use_projection: true,
            normalize_output: true,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.vocab_size < 2 {
            return Err(Error::config("vocab_size must be >= 2"));
        }
        if self.embed_dim < 2 {
            return Err(Error::config("embed_dim must be >= 2"));
        }
        for (name, len) in [
            ("max_question_len", self.max_question_len),
            ("max_candidate_len", self.max_candidate_len),
            ("max_sentence_len", self.max_sentence_len),
        ] {
            if len == 0 {
                return Err(Error::config(format!("{name} must be positive")));
            }
        }
        Ok(())
    }
}

/// One named block of the flat parameter array.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Segment {
    pub name: String,
    pub rows: usize,
    pub cols: usize,
    pub offset: usize,
}

impl Segment {
    pub fn len(&self) -> usize {
        self.rows * self.cols
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn range(&self) -> std::ops::Range<usize> {
        self.offset..self.offset + self.len()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParamLayout {
    pub segments: Vec<Segment>,
    pub total: usize,
}

impl ParamLayout {
    pub fn from_config(cfg: &EncoderConfig) -> Self {
        let d = cfg.embed_dim;
        let mut segments = Vec::new();
        let mut offset = 0;
        let mut push = |segments: &mut Vec<Segment>, name: &str, rows: usize, cols: usize| {
            segments.push(Segment {
                name: name.to_string(),
                rows,
                cols,
                offset,
            });
            offset += rows * cols;
        };
        push(&mut segments, SEG_EMBEDDING, cfg.vocab_size, d);
        if cfg.use_projection {
            push(&mut segments, SEG_PROJ_WEIGHT, d, d);
            push(&mut segments, SEG_PROJ_BIAS, 1, d);
        }
        ParamLayout {
            segments,
            total: offset,
        }
    }

    pub fn segment(&self, name: &str) -> Option<&Segment> {
        self.segments.iter().find(|s| s.name == name)
    }
}

/// Flat 64-bit parameter store for every trainable encoder weight. Plays the
/// role of the shared initialization, the per-task adapted weights, and the
/// meta-learned prior alike.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParameterVector {
    pub values: Vec<f64>,
    pub layout: ParamLayout,
}

impl ParameterVector {
    pub fn zeros(cfg: &EncoderConfig) -> Self {
        let layout = ParamLayout::from_config(cfg);
        ParameterVector {
            values: vec![0.0; layout.total],
            layout,
        }
    }

    /// Token embeddings uniform in (-0.5/d, 0.5/d); projection starts as the
    /// identity plus small Gaussian noise so the untrained model is already a
    /// bag-of-embeddings baseline; bias zero.
    pub fn init<R: Rng>(cfg: &EncoderConfig, rng: &mut R) -> Self {
        let mut pv = Self::zeros(cfg);
        let d = cfg.embed_dim;
        let half = 0.5 / d as f64;
        let emb = pv.layout.segment(SEG_EMBEDDING).unwrap().range();
        for v in &mut pv.values[emb] {
            *v = rng.gen_range(-half..half);
        }
        if cfg.use_projection {
            let w = pv.layout.segment(SEG_PROJ_WEIGHT).unwrap().clone();
            for i in 0..d {
                for j in 0..d {
                    let noise = gaussian(rng) * 0.01;
                    pv.values[w.offset + i * d + j] = if i == j { 1.0 + noise } else { noise };
                }
            }
            // bias stays 0
        }
        pv
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn same_layout(&self, other: &ParameterVector) -> bool {
        self.layout == other.layout
    }

    pub fn assert_finite(&self) -> Result<()> {
        if self.values.iter().all(|v| v.is_finite()) {
            Ok(())
        } else {
            Err(Error::Numeric("non-finite parameter value".into()))
        }
    }

    /// Grad arrays are plain `Vec<f64>` with the same layout contract.
    pub fn check_grad_layout(&self, grad: &[f64]) -> Result<()> {
        if grad.len() == self.values.len() {
            Ok(())
        } else {
            Err(Error::LayoutMismatch(format!(
                "gradient length {} vs parameter length {}",
                grad.len(),
                self.values.len()
            )))
        }
    }
}

/// Box-Muller; enough for the tiny init noise, keeps us off rand_distr.
fn gaussian<R: Rng>(rng: &mut R) -> f64 {
    let u1: f64 = rng.gen_range(f64::EPSILON..1.0);
    let u2: f64 = rng.gen_range(0.0..1.0);
    (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
}

/// Batch of padded token-id rows with a validity mask.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TokenBatch {
    /// n rows, each padded to the same length.
    pub sequences: Vec<Vec<usize>>,
    /// Same shape as `sequences`; true marks a real token.
    pub mask: Vec<Vec<bool>>,
}

impl TokenBatch {
    /// Truncate or pad each sequence to `len` (pad id 0, masked out).
    pub fn from_sequences(seqs: &[Vec<usize>], len: usize) -> Self {
        let mut sequences = Vec::with_capacity(seqs.len());
        let mut mask = Vec::with_capacity(seqs.len());
        for s in seqs {
            let mut row = vec![0usize; len];
            let mut m = vec![false; len];
            for (i, &tok) in s.iter().take(len).enumerate() {
                row[i] = tok;
                m[i] = true;
            }
            sequences.push(row);
            mask.push(m);
        }
        TokenBatch { sequences, mask }
    }

    pub fn single(tokens: &[usize], len: usize) -> Self {
        Self::from_sequences(std::slice::from_ref(&tokens.to_vec()), len)
    }

    pub fn rows(&self) -> usize {
        self.sequences.len()
    }

    pub fn validate(&self, cfg: &EncoderConfig) -> Result<()> {
        for (r, (row, m)) in self.sequences.iter().zip(&self.mask).enumerate() {
            if row.len() != m.len() {
                return Err(Error::invalid(format!(
                    "row {r}: sequence/mask length mismatch"
                )));
            }
            let mut any = false;
            for (c, (&tok, &keep)) in row.iter().zip(m).enumerate() {
                if keep {
                    any = true;
                    if tok >= cfg.vocab_size {
                        return Err(Error::invalid(format!(
                            "row {r} col {c}: token id {tok} out of range (vocab {})",
                            cfg.vocab_size
                        )));
                    }
                }
            }
            if !any {
                return Err(Error::invalid(format!("row {r}: all tokens masked")));
            }
        }
        Ok(())
    }
}
