//! The two optimizers: plain SGD for inner/outer loops and AdamW with
//! decoupled weight decay for the fine-tune baseline.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::params::{ParameterVector, SEG_PROJ_BIAS};

fn default_lr() -> f64 {
    5e-5
}
fn default_beta1() -> f64 {
    0.9
}
fn default_beta2() -> f64 {
    0.999
}
fn default_eps() -> f64 {
    1e-8
}
fn default_no_decay() -> Vec<String> {
    // The toy backbone has no LayerNorm; only the projection bias is excluded.
    vec![SEG_PROJ_BIAS.to_string()]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimHyper {
    #[serde(default = "default_lr")]
    pub lr: f64,
    #[serde(default = "default_beta1")]
    pub beta1: f64,
    #[serde(default = "default_beta2")]
    pub beta2: f64,
    #[serde(default = "default_eps")]
    pub eps: f64,
    #[serde(default)]
    pub weight_decay: f64,
    #[serde(default = "default_no_decay")]
    pub no_decay_segments: Vec<String>,
}

impl Default for OptimHyper {
    fn default() -> Self {
        OptimHyper {
            lr: default_lr(),
            beta1: default_beta1(),
            beta2: default_beta2(),
            eps: default_eps(),
            weight_decay: 0.0,
            no_decay_segments: default_no_decay(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum OptimizerKind {
    Sgd,
    AdamW,
}

/// Optimizer bookkeeping. Moment arrays share the parameter layout; `t` only
/// ever increases.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimizerState {
    pub kind: OptimizerKind,
    pub step_count: u64,
    pub hyper: OptimHyper,
    pub first_moment: Vec<f64>,
    pub second_moment: Vec<f64>,
}

impl OptimizerState {
    pub fn sgd(lr: f64) -> Self {
        OptimizerState {
            kind: OptimizerKind::Sgd,
            step_count: 0,
            hyper: OptimHyper {
                lr,
                ..OptimHyper::default()
            },
            first_moment: Vec::new(),
            second_moment: Vec::new(),
        }
    }

    pub fn adamw(params: &ParameterVector, hyper: OptimHyper) -> Self {
        OptimizerState {
            kind: OptimizerKind::AdamW,
            step_count: 0,
            hyper,
            first_moment: vec![0.0; params.len()],
            second_moment: vec![0.0; params.len()],
        }
    }

    fn check_layout(&self, params: &ParameterVector) -> Result<()> {
        if self.kind == OptimizerKind::AdamW
            && (self.first_moment.len() != params.len() || self.second_moment.len() != params.len())
        {
            return Err(Error::LayoutMismatch(
                "optimizer moment arrays do not match the parameter layout".into(),
            ));
        }
        Ok(())
    }
}

/// One plain gradient step: `out = params - alpha * grad`.
pub fn sgd_step(params: &ParameterVector, grad: &[f64], alpha: f64) -> Result<ParameterVector> {
    if alpha <= 0.0 {
        return Err(Error::config("sgd_step: learning rate must be > 0"));
    }
    params.check_grad_layout(grad)?;
    let mut out = params.clone();
    for (p, &g) in out.values.iter_mut().zip(grad) {
        *p -= alpha * g;
    }
    out.assert_finite()?;
    Ok(out)
}

/// Decoupled-weight-decay Adam update with bias-corrected moments. Segments on
/// the exclusion list receive no decay term.
pub fn adamw_step(
    mut state: OptimizerState,
    params: &ParameterVector,
    grad: &[f64],
) -> Result<(ParameterVector, OptimizerState)> {
    params.check_grad_layout(grad)?;
    state.check_layout(params)?;
    if state.kind != OptimizerKind::AdamW {
        return Err(Error::config("adamw_step called with a non-AdamW state"));
    }
    state.step_count += 1;
    let t = state.step_count as i32;
    let h = &state.hyper;
    let bc1 = 1.0 - h.beta1.powi(t);
    let bc2 = 1.0 - h.beta2.powi(t);

    let mut decay_mask = vec![h.weight_decay != 0.0; params.len()];
    if h.weight_decay != 0.0 {
        for name in &h.no_decay_segments {
            if let Some(seg) = params.layout.segment(name) {
                for m in &mut decay_mask[seg.range()] {
                    *m = false;
                }
            }
        }
    }

    let mut out = params.clone();
    for i in 0..params.len() {
        let g = grad[i];
        state.first_moment[i] = h.beta1 * state.first_moment[i] + (1.0 - h.beta1) * g;
        state.second_moment[i] = h.beta2 * state.second_moment[i] + (1.0 - h.beta2) * g * g;
        let m_hat = state.first_moment[i] / bc1;
        let v_hat = state.second_moment[i] / bc2;
        let mut step = h.lr * m_hat / (v_hat.sqrt() + h.eps);
        if decay_mask[i] {
            step += h.lr * h.weight_decay * out.values[i];
        }
        out.values[i] -= step;
    }
    out.assert_finite()?;
    Ok((out, state))
}
