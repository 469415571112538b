//! Dense network kernel: tensors, tanh MLPs with exact backward passes,
//! categorical distributions, forward KL and Adam.

mod adam;
mod checkpoint;
mod dist;
mod layers;
mod tensor;

pub use adam::Adam;
pub use checkpoint::{Checkpoint, CHECKPOINT_SCHEMA_VERSION};
pub use dist::{kl_categorical, kl_from_log_probs, kl_grad_q_logits, log_softmax, CategoricalDist, LOG_PROB_FLOOR};
pub use layers::{dropout_mask, Linear, Mlp, MlpCache, Param, ParamSet};
pub use tensor::{gemm, Tensor};
