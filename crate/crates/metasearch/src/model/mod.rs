//! Trainable encoder backbone: parameter storage, forward pass, analytic
//! gradients for every objective, optimizers, and checkpoint persistence.

pub mod checkpoint;
pub mod encode;
pub mod objective;
pub mod optim;
pub mod params;
pub mod scalar;

pub use checkpoint::{load_checkpoint, load_optimizer_state, save_checkpoint, save_optimizer_state};
pub use encode::encode;
pub use objective::{
    hessian_vector_product, kd_only_loss_and_grad, loss_and_grad, score_vectors, ExampleBatch,
    TokenPair,
};
pub use optim::{adamw_step, sgd_step, OptimHyper, OptimizerKind, OptimizerState};
pub use params::{EncoderConfig, ParamLayout, ParameterVector, Segment, TokenBatch};
