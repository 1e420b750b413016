use serde::{Deserialize, Serialize};

use super::{LayerGrads, NnError};
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Padding {
    Valid,
    /// Symmetric zero padding of `(K - 1) / 2`; requires odd `K`.
    Same,
}

impl Padding {
    fn left(self, kernel: usize) -> usize {
        match self {
            Padding::Valid => 0,
            Padding::Same => (kernel - 1) / 2,
        }
    }

    pub fn output_len(self, len: usize, kernel: usize) -> usize {
        match self {
            Padding::Valid => len + 1 - kernel,
            Padding::Same => len,
        }
    }
}

struct ConvDims {
    c_in: usize,
    c_out: usize,
    len: usize,
    k: usize,
    out_len: usize,
    pad: usize,
}

fn conv_dims(
    input: &Tensor,
    kernels: &Tensor,
    bias: Option<&Tensor>,
    padding: Padding,
) -> Result<ConvDims, NnError> {
    NnError::check_rank("conv1d input", input, 2)?;
    NnError::check_rank("conv1d kernels", kernels, 3)?;
    let (c_in, len) = (input.dim(0), input.dim(1));
    let (c_out, k_in, k) = (kernels.dim(0), kernels.dim(1), kernels.dim(2));
    if k_in != c_in {
        return Err(NnError::Shape(format!(
            "conv1d: kernels expect {k_in} input channels, input has {c_in}"
        )));
    }
    if let Some(bias) = bias {
        if bias.shape() != [c_out] {
            return Err(NnError::Shape(format!(
                "conv1d: bias shape {:?}, expected [{c_out}]",
                bias.shape()
            )));
        }
    }
    if k == 0 {
        return Err(NnError::InvalidArgument("conv1d: empty kernel".into()));
    }
    match padding {
        Padding::Valid if k > len => {
            return Err(NnError::Shape(format!(
                "conv1d: kernel length {k} exceeds input length {len}"
            )))
        }
        Padding::Same if k % 2 == 0 => {
            return Err(NnError::InvalidArgument(format!(
                "conv1d: same padding needs an odd kernel, got {k}"
            )))
        }
        _ => {}
    }
    Ok(ConvDims {
        c_in,
        c_out,
        len,
        k,
        out_len: padding.output_len(len, k),
        pad: padding.left(k),
    })
}

/// `out[o][t] = bias[o] + Σ_{i,k} kernels[o][i][k] · padded[i][t + k]`.
///
/// Accumulation runs bias first, then over input channel, then kernel tap.
pub fn conv1d_forward(
    input: &Tensor,
    kernels: &Tensor,
    bias: &Tensor,
    padding: Padding,
) -> Result<Tensor, NnError> {
    let d = conv_dims(input, kernels, Some(bias), padding)?;
    let x = input.data();
    let w = kernels.data();
    let mut out = vec![0.0; d.c_out * d.out_len];
    // loops run o, i, k outermost and t innermost, which keeps every output's
    // summation order while letting the t loop vectorise
    for (o, row) in out.chunks_exact_mut(d.out_len).enumerate() {
        row.fill(bias.data()[o]);
        for i in 0..d.c_in {
            let w_row = &w[(o * d.c_in + i) * d.k..(o * d.c_in + i + 1) * d.k];
            let x_row = &x[i * d.len..(i + 1) * d.len];
            for (kk, &wk) in w_row.iter().enumerate() {
                // t reads x_row[t + kk - pad] when that index is in range
                let lo = d.pad.saturating_sub(kk).min(d.out_len);
                let hi = (d.pad + d.len).saturating_sub(kk).min(d.out_len).max(lo);
                // same signed-zero behaviour as summing over an explicitly padded row
                for r in &mut row[..lo] {
                    *r += wk * 0.0;
                }
                let xs = &x_row[lo + kk - d.pad..hi + kk - d.pad];
                for (r, &xv) in row[lo..hi].iter_mut().zip(xs) {
                    *r += wk * xv;
                }
                for r in &mut row[hi..] {
                    *r += wk * 0.0;
                }
            }
        }
    }
    Tensor::new(vec![d.c_out, d.out_len], out)
}

/// Gradients of [`conv1d_forward`]: `params = [d_kernels, d_bias]`.
pub fn conv1d_backward(
    input: &Tensor,
    kernels: &Tensor,
    padding: Padding,
    upstream: &Tensor,
) -> Result<LayerGrads, NnError> {
    let d = conv_dims(input, kernels, None, padding)?;
    NnError::check_same("conv1d upstream", upstream.shape(), &[d.c_out, d.out_len])?;
    let x = input.data();
    let w = kernels.data();
    let g = upstream.data();
    let mut dw = vec![0.0; w.len()];
    let mut db = vec![0.0; d.c_out];
    let mut dx = vec![0.0; x.len()];
    for o in 0..d.c_out {
        let g_row = &g[o * d.out_len..(o + 1) * d.out_len];
        db[o] = g_row.iter().sum();
        for i in 0..d.c_in {
            let base = (o * d.c_in + i) * d.k;
            for kk in 0..d.k {
                let wk = w[base + kk];
                let mut acc = 0.0;
                for (t, &gt) in g_row.iter().enumerate() {
                    let p = t + kk;
                    if p >= d.pad && p - d.pad < d.len {
                        let xi = i * d.len + p - d.pad;
                        acc += gt * x[xi];
                        dx[xi] += gt * wk;
                    }
                }
                dw[base + kk] = acc;
            }
        }
    }
    Ok(LayerGrads {
        params: vec![
            Tensor::new(kernels.shape().to_vec(), dw)?,
            Tensor::vector(db),
        ],
        input: Tensor::new(input.shape().to_vec(), dx)?,
    })
}
