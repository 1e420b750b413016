use super::{LayerGrads, NnError};
use crate::tensor::Tensor;

fn check(input: &Tensor, weights: &Tensor) -> Result<(usize, usize), NnError> {
    NnError::check_rank("dense input", input, 1)?;
    NnError::check_rank("dense weights", weights, 2)?;
    let (m, n) = (weights.dim(0), weights.dim(1));
    if input.len() != n {
        return Err(NnError::Shape(format!(
            "dense: weights are {m}x{n}, input has {} values",
            input.len()
        )));
    }
    Ok((m, n))
}

/// `weights · input + bias` for an `m×n` weight matrix.
pub fn dense_forward(input: &Tensor, weights: &Tensor, bias: &Tensor) -> Result<Tensor, NnError> {
    let (m, _) = check(input, weights)?;
    NnError::check_same("dense bias", bias.shape(), &[m])?;
    let mut out = Vec::with_capacity(m);
    matvec(weights.data(), bias.data(), input.data(), &mut out);
    Ok(Tensor::vector(out))
}

/// Appends `W·x + b` to `out`, for row-major `W` with `b.len()` rows.
///
/// Rows are processed four at a time so their independent sums overlap;
/// each row still accumulates bias first, then columns in order.
pub(crate) fn matvec(w: &[f64], b: &[f64], x: &[f64], out: &mut Vec<f64>) {
    let n = x.len();
    let mut blocks = w.chunks_exact(4 * n);
    let mut bias = b.chunks_exact(4);
    for (block, b4) in blocks.by_ref().zip(bias.by_ref()) {
        let (r0, rest) = block.split_at(n);
        let (r1, rest) = rest.split_at(n);
        let (r2, r3) = rest.split_at(n);
        let mut a = [b4[0], b4[1], b4[2], b4[3]];
        for j in 0..n {
            let xj = x[j];
            a[0] += r0[j] * xj;
            a[1] += r1[j] * xj;
            a[2] += r2[j] * xj;
            a[3] += r3[j] * xj;
        }
        out.extend_from_slice(&a);
    }
    for (row, &b0) in blocks.remainder().chunks_exact(n).zip(bias.remainder()) {
        out.push(row.iter().zip(x).fold(b0, |acc, (wv, xv)| acc + wv * xv));
    }
}

/// Gradients of [`dense_forward`]: `params = [d_weights, d_bias]`.
pub fn dense_backward(
    input: &Tensor,
    weights: &Tensor,
    upstream: &Tensor,
) -> Result<LayerGrads, NnError> {
    let (m, n) = check(input, weights)?;
    NnError::check_same("dense upstream", upstream.shape(), &[m])?;
    let x = input.data();
    let g = upstream.data();
    let mut dw = Vec::with_capacity(m * n);
    let mut dx = vec![0.0; n];
    for (r, &gr) in g.iter().enumerate() {
        dw.extend(x.iter().map(|&v| gr * v));
        for (d, &w) in dx.iter_mut().zip(weights.row(r)) {
            *d += w * gr;
        }
    }
    Ok(LayerGrads {
        params: vec![Tensor::new(vec![m, n], dw)?, upstream.clone()],
        input: Tensor::vector(dx),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_weights() {
        let w = Tensor::from_rows(&[vec![1.0, 0.0], vec![0.0, 1.0]]).unwrap();
        let x = Tensor::vector(vec![3.5, -2.0]);
        let y = dense_forward(&x, &w, &Tensor::zeros(&[2])).unwrap();
        assert_eq!(y.data(), x.data());
    }

    #[test]
    fn hand_arithmetic() {
        let w = Tensor::from_rows(&[vec![1.0, 1.0]]).unwrap();
        let y = dense_forward(
            &Tensor::vector(vec![2.0, 3.0]),
            &w,
            &Tensor::vector(vec![1.0]),
        )
        .unwrap();
        assert_eq!(y.data(), &[6.0]);
    }

    #[test]
    fn scalar_chain_rule() {
        let g = dense_backward(
            &Tensor::vector(vec![3.0]),
            &Tensor::from_rows(&[vec![2.0]]).unwrap(),
            &Tensor::vector(vec![1.0]),
        )
        .unwrap();
        assert_eq!(g.params[0].data(), &[3.0]);
        assert_eq!(g.params[1].data(), &[1.0]);
        assert_eq!(g.input.data(), &[2.0]);
    }

    #[test]
    fn zero_upstream() {
        let w = Tensor::from_rows(&[vec![1.0, -1.0], vec![0.5, 2.0]]).unwrap();
        let g = dense_backward(&Tensor::vector(vec![1.0, 2.0]), &w, &Tensor::zeros(&[2])).unwrap();
        assert!(g.params[0].data().iter().chain(g.input.data()).all(|&v| v == 0.0));
    }

    #[test]
    fn mismatches() {
        let w = Tensor::from_rows(&[vec![1.0, 1.0]]).unwrap();
        assert!(dense_forward(&Tensor::vector(vec![1.0]), &w, &Tensor::zeros(&[1])).is_err());
        assert!(dense_forward(&Tensor::vector(vec![1.0, 1.0]), &w, &Tensor::zeros(&[2])).is_err());
        assert!(dense_backward(&Tensor::vector(vec![1.0, 1.0]), &w, &Tensor::zeros(&[3])).is_err());
    }
}
