//! Surrogate-gradient training: schedules, loss, BNTT, BPTT and AdamW.

pub mod bntt;
pub mod bptt;
pub mod data;
pub mod loss;
pub mod optim;
pub mod schedule;
pub mod trainer;

pub use bntt::{bntt_apply, BnttParams, StepStats};
pub use bptt::{batch_pass, bptt_backward, BatchPass, BpttOptions, Gradients, LayerGrad, NormMode, SpikeFn};
pub use data::{LabeledRasters, TaskData, TrainData};
pub use loss::{compute_loss, LossBreakdown};
pub use optim::{flatten_grads, flatten_params, unflatten_params, AdamW, FlatParams};
pub use schedule::{cosine_lr, curriculum_k, surrogate_grad, TrainConfig};
pub use trainer::{evaluate, fine_tune, train_model, EpochRecord, Evaluation, History};
