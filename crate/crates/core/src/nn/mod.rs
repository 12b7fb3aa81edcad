//! Differentiable numeric kernels with explicit forward/backward pairs.
//!
//! Every layer's `forward` returns whatever its `backward` needs; `backward`
//! accumulates into `ParamTensor::grad` and returns the input gradient.

pub mod attention;
pub mod conv;
pub mod gradcheck;
pub mod linear;
pub mod loss;
pub mod norm;
pub mod optim;
pub mod param;
pub mod tensor;
pub mod transformer;

pub use attention::{scaled_dot_attention, softmax_rows, MultiHeadAttention};
pub use conv::{max_pool1d, temporal_conv1d, upsample_repeat, Conv1d};
pub use linear::{linear_forward, Linear};
pub use loss::{cross_entropy, cumulative_l2, LossGrad};
pub use norm::{layer_norm, LayerNorm};
pub use optim::{adam_step, noam_lr, Adam, AdamConfig, AdamState, NoamSchedule};
pub use param::{Mode, ParamTensor, Parameterized};
pub use tensor::{Real, Tensor2};
pub use transformer::{sinusoidal_positions, DecoderLayer, EncoderLayer, FeedForward};
