//! Additive (Bahdanau-style) attention pooling over a set of state vectors.
//!
//! ```text
//! score_i = vᵀ · tanh(W · h_i + b)
//! α       = softmax(score)
//! context = Σ α_i · h_i
//! ```

use super::{softmax, LayerGrads, NnError};
use crate::tensor::Tensor;

#[derive(Debug, Clone, PartialEq)]
pub struct Attention {
    /// Length-`d` weighted sum of the states.
    pub context: Tensor,
    /// Length-`M` attention weights.
    pub weights: Vec<f64>,
}

struct Dims {
    m: usize,
    d: usize,
    u: usize,
}

fn check(states: &Tensor, w: &Tensor, b: &Tensor, v: &Tensor) -> Result<Dims, NnError> {
    NnError::check_rank("attention states", states, 2)?;
    NnError::check_rank("attention W", w, 2)?;
    let (m, d) = (states.dim(0), states.dim(1));
    let u = w.dim(0);
    if m == 0 {
        return Err(NnError::InvalidArgument("attention over zero states".into()));
    }
    if w.dim(1) != d {
        return Err(NnError::Shape(format!(
            "attention: W is {u}x{}, states have dimension {d}",
            w.dim(1)
        )));
    }
    NnError::check_same("attention b", b.shape(), &[u])?;
    NnError::check_same("attention v", v.shape(), &[u])?;
    Ok(Dims { m, d, u })
}

/// `tanh(W·h_i + b)` for every state, as an `M×u` buffer.
fn hidden(states: &Tensor, w: &Tensor, b: &Tensor, dims: &Dims) -> Vec<f64> {
    let mut out = Vec::with_capacity(dims.m * dims.u);
    for i in 0..dims.m {
        let start = out.len();
        super::dense::matvec(w.data(), b.data(), states.row(i), &mut out);
        for z in &mut out[start..] {
            *z = z.tanh();
        }
    }
    out
}

fn pool(states: &Tensor, hidden: &[f64], v: &Tensor, dims: &Dims) -> Attention {
    let scores: Vec<f64> = hidden
        .chunks_exact(dims.u)
        .map(|a| a.iter().zip(v.data()).map(|(x, y)| x * y).sum())
        .collect();
    let weights = softmax(&scores);
    let mut context = vec![0.0; dims.d];
    for (i, &alpha) in weights.iter().enumerate() {
        for (c, &h) in context.iter_mut().zip(states.row(i)) {
            *c += alpha * h;
        }
    }
    Attention {
        context: Tensor::vector(context),
        weights,
    }
}

/// `states` is `M×d`; `w` is `u×d`; `b` and `v` have length `u`.
pub fn additive_attention(
    states: &Tensor,
    w: &Tensor,
    b: &Tensor,
    v: &Tensor,
) -> Result<Attention, NnError> {
    let dims = check(states, w, b, v)?;
    let hidden = hidden(states, w, b, &dims);
    Ok(pool(states, &hidden, v, &dims))
}

/// Gradients of [`additive_attention`] given `∂loss/∂context`.
///
/// `params = [dW, db, dv]`; `input` is the `M×d` gradient for the states.
pub fn additive_attention_backward(
    states: &Tensor,
    w: &Tensor,
    b: &Tensor,
    v: &Tensor,
    upstream: &Tensor,
) -> Result<LayerGrads, NnError> {
    let dims = check(states, w, b, v)?;
    NnError::check_same("attention upstream", upstream.shape(), &[dims.d])?;
    let hidden = hidden(states, w, b, &dims);
    let alpha = pool(states, &hidden, v, &dims).weights;
    let g = upstream.data();

    // ∂/∂α_i = g · h_i, then back through the softmax.
    let d_alpha: Vec<f64> = (0..dims.m)
        .map(|i| states.row(i).iter().zip(g).map(|(h, gv)| h * gv).sum())
        .collect();
    let mean: f64 = alpha.iter().zip(&d_alpha).map(|(a, d)| a * d).sum();
    let d_score: Vec<f64> = alpha
        .iter()
        .zip(&d_alpha)
        .map(|(a, d)| a * (d - mean))
        .collect();

    let mut dw = vec![0.0; dims.u * dims.d];
    let mut db = vec![0.0; dims.u];
    let mut dv = vec![0.0; dims.u];
    let mut dh = vec![0.0; dims.m * dims.d];
    for i in 0..dims.m {
        let a = &hidden[i * dims.u..(i + 1) * dims.u];
        let h = states.row(i);
        let dh_i = &mut dh[i * dims.d..(i + 1) * dims.d];
        for (dh_v, &gv) in dh_i.iter_mut().zip(g) {
            *dh_v = alpha[i] * gv;
        }
        for r in 0..dims.u {
            dv[r] += d_score[i] * a[r];
            let dz = d_score[i] * v.data()[r] * (1.0 - a[r] * a[r]);
            db[r] += dz;
            let w_row = w.row(r);
            let dw_row = &mut dw[r * dims.d..(r + 1) * dims.d];
            for k in 0..dims.d {
                dw_row[k] += dz * h[k];
                dh_i[k] += dz * w_row[k];
            }
        }
    }
    Ok(LayerGrads {
        params: vec![
            Tensor::new(vec![dims.u, dims.d], dw)?,
            Tensor::vector(db),
            Tensor::vector(dv),
        ],
        input: Tensor::new(vec![dims.m, dims.d], dh)?,
    })
}
