//! Forward and backward passes for the layers the classifier is built from.
//!
//! Every operation is a pure function of its arguments. Backward passes take
//! the forward inputs again (or the indices/masks the forward pass returned)
//! rather than hiding state inside layer objects.

mod activation;
mod attention;
mod conv;
mod dense;
mod dropout;
mod loss;
mod pool;

pub use activation::{relu, relu_backward, softmax, tanh_act};
pub use attention::{additive_attention, additive_attention_backward, Attention};
pub use conv::{conv1d_backward, conv1d_forward, Padding};
pub use dense::{dense_backward, dense_forward};
pub use dropout::{dropout, dropout_backward, Dropout};
pub use loss::softmax_cross_entropy;
pub use pool::{maxpool1d_backward, maxpool1d_forward, PoolIndices};

use crate::tensor::Tensor;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum NnError {
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("index {index} out of range for length {len}")]
    IndexOutOfRange { index: usize, len: usize },
}

impl NnError {
    pub(crate) fn shape(msg: String) -> Self {
        NnError::Shape(msg)
    }

    pub(crate) fn check_same(what: &str, a: &[usize], b: &[usize]) -> Result<(), NnError> {
        if a != b {
            return Err(NnError::Shape(format!("{what}: {a:?} vs {b:?}")));
        }
        Ok(())
    }

    pub(crate) fn check_rank(what: &str, t: &Tensor, rank: usize) -> Result<(), NnError> {
        if t.rank() != rank {
            return Err(NnError::Shape(format!(
                "{what}: expected rank {rank}, got shape {:?}",
                t.shape()
            )));
        }
        Ok(())
    }
}

/// Gradients produced by one backward call.
///
/// `params` mirrors the layer's parameter list in the order the forward
/// function takes them; `input` has the shape of the forward input.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerGrads {
    pub params: Vec<Tensor>,
    pub input: Tensor,
}
