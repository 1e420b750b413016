use super::NnError;
use crate::rng::Rng;
use crate::tensor::Tensor;

#[derive(Debug, Clone, PartialEq)]
pub struct Dropout {
    pub output: Tensor,
    /// Per-entry multiplier (`0` or `1 / (1 - rate)`); `None` when the layer
    /// acted as the identity.
    pub mask: Option<Vec<f64>>,
}

/// Inverted dropout. Evaluation mode and `rate == 0` are the identity and
/// draw nothing from `rng`.
pub fn dropout(x: &Tensor, rate: f64, training: bool, rng: &mut Rng) -> Result<Dropout, NnError> {
    if !(0.0..1.0).contains(&rate) {
        return Err(NnError::InvalidArgument(format!(
            "dropout rate must be in [0, 1), got {rate}"
        )));
    }
    if !training || rate == 0.0 {
        return Ok(Dropout {
            output: x.clone(),
            mask: None,
        });
    }
    let keep_scale = 1.0 / (1.0 - rate);
    let mask: Vec<f64> = (0..x.len())
        .map(|_| if rng.bernoulli(rate) { 0.0 } else { keep_scale })
        .collect();
    let data = x.data().iter().zip(&mask).map(|(v, m)| v * m).collect();
    Ok(Dropout {
        output: Tensor::new(x.shape().to_vec(), data)?,
        mask: Some(mask),
    })
}

pub fn dropout_backward(mask: Option<&[f64]>, upstream: &Tensor) -> Result<Tensor, NnError> {
    match mask {
        None => Ok(upstream.clone()),
        Some(mask) => {
            if mask.len() != upstream.len() {
                return Err(NnError::Shape(format!(
                    "dropout mask has {} entries, upstream {}",
                    mask.len(),
                    upstream.len()
                )));
            }
            let data = upstream.data().iter().zip(mask).map(|(g, m)| g * m).collect();
            Tensor::new(upstream.shape().to_vec(), data)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn eval_is_identity() {
        let x = Tensor::vector(vec![1.0, -2.0, 3.0]);
        let out = dropout(&x, 0.5, false, &mut Rng::new(1)).unwrap();
        assert_eq!(out.output, x);
        assert!(out.mask.is_none());
    }

    #[test]
    fn zero_rate_is_identity() {
        let x = Tensor::vector(vec![1.0, -2.0, 3.0]);
        for training in [true, false] {
            assert_eq!(dropout(&x, 0.0, training, &mut Rng::new(1)).unwrap().output, x);
        }
    }

    #[test]
    fn rejects_rate_one() {
        let x = Tensor::vector(vec![1.0]);
        assert!(dropout(&x, 1.0, true, &mut Rng::new(1)).is_err());
        assert!(dropout(&x, -0.1, true, &mut Rng::new(1)).is_err());
    }

    #[test]
    fn expectation_preserved() {
        let n = 100_000;
        let x = Tensor::filled(&[n], 1.0);
        let out = dropout(&x, 0.5, true, &mut Rng::new(2024)).unwrap();
        let mean = out.output.data().iter().sum::<f64>() / n as f64;
        assert!((mean - 1.0).abs() < 0.02, "mean {mean}");
    }

    #[test]
    fn same_seed_same_mask() {
        let x = Tensor::filled(&[64], 1.0);
        let a = dropout(&x, 0.5, true, &mut Rng::new(9)).unwrap();
        let b = dropout(&x, 0.5, true, &mut Rng::new(9)).unwrap();
        assert_eq!(a.mask, b.mask);
    }
}
