//! Small float64 neural-network toolkit: tensors, kernels with hand-written
//! backward passes, parameter storage, Adam and a checksummed checkpoint format.

mod checkpoint;
mod gemm;
mod layers;
pub mod ops;
mod params;
mod tensor;

pub use checkpoint::{decode_checkpoint, encode_checkpoint, load_checkpoint, save_checkpoint, CHECKPOINT_VERSION};
pub use layers::{Conv1d, Dense, Mlp, MlpCache};
pub use params::{glorot_uniform, AdamConfig, Grads, ParamId, ParamStore};
pub use tensor::Tensor;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum NnError {
    #[error("shape mismatch in {op}: {lhs:?} vs {rhs:?}")]
    Shape {
        op: &'static str,
        lhs: Vec<usize>,
        rhs: Vec<usize>,
    },
    #[error("numeric fault: non-finite values in {0}")]
    NumericFault(String),
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error("io: {0}")]
    Io(String),
}
