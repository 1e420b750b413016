use super::NnError;
use crate::tensor::Tensor;

/// Winner positions recorded by [`maxpool1d_forward`], as flat indices into
/// the forward input.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PoolIndices {
    pub input_shape: Vec<usize>,
    pub argmax: Vec<usize>,
}

/// Max pooling along the last axis of a `C×L` tensor.
///
/// Trailing samples that do not fill a window are dropped; ties go to the
/// lower index.
pub fn maxpool1d_forward(
    input: &Tensor,
    window: usize,
    stride: usize,
) -> Result<(Tensor, PoolIndices), NnError> {
    NnError::check_rank("maxpool1d input", input, 2)?;
    if window == 0 || stride == 0 {
        return Err(NnError::InvalidArgument(
            "maxpool1d: window and stride must be positive".into(),
        ));
    }
    let (channels, len) = (input.dim(0), input.dim(1));
    if len < window {
        return Err(NnError::Shape(format!(
            "maxpool1d: input length {len} shorter than window {window}"
        )));
    }
    let out_len = (len - window) / stride + 1;
    let mut out = Vec::with_capacity(channels * out_len);
    let mut argmax = Vec::with_capacity(channels * out_len);
    for c in 0..channels {
        let row = input.row(c);
        for t in 0..out_len {
            let start = t * stride;
            let mut best = start;
            for p in start + 1..start + window {
                if row[p] > row[best] {
                    best = p;
                }
            }
            out.push(row[best]);
            argmax.push(c * len + best);
        }
    }
    Ok((
        Tensor::new(vec![channels, out_len], out)?,
        PoolIndices {
            input_shape: input.shape().to_vec(),
            argmax,
        },
    ))
}

pub fn maxpool1d_backward(indices: &PoolIndices, upstream: &Tensor) -> Result<Tensor, NnError> {
    if upstream.len() != indices.argmax.len() {
        return Err(NnError::Shape(format!(
            "maxpool1d upstream has {} values, forward produced {}",
            upstream.len(),
            indices.argmax.len()
        )));
    }
    let mut grad = Tensor::zeros(&indices.input_shape);
    let len = grad.len();
    let dx = grad.data_mut();
    for (&idx, &g) in indices.argmax.iter().zip(upstream.data()) {
        if idx >= len {
            return Err(NnError::IndexOutOfRange { index: idx, len });
        }
        dx[idx] += g;
    }
    Ok(grad)
}
