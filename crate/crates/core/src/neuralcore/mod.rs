//! Minimal tensor math with reverse-mode automatic differentiation, small
//! transformer encoder/decoder blocks, optimizers, and decoding strategies.

pub mod checkpoint;
mod decode;
mod nn;
mod optim;
mod store;
mod tape;
mod tensor;

pub use decode::{decode, DecodeConfig, DecodeMode, Decoded};
pub use nn::{
    embedding_init, xavier, DecoderBlock, EncoderBlock, FeedForward, LayerNorm, Linear, Mode,
    ModelConfig, MultiHeadAttention,
};
pub use optim::{Optimizer, OptimizerConfig, OptimizerKind};
pub use store::{ParamId, ParameterStore};
pub use tape::{softmax, GraphReuse, Tape, Var};
pub use tensor::{matmul, matmul_nt, matmul_tn, Tensor, TensorError};
