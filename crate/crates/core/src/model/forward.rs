use serde::{Deserialize, Serialize};

use super::{BlockIndex, ModelError, ModelWeights};
use crate::nn::{self, PoolIndices};
use crate::rng::Rng;
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassProbs {
    pub probabilities: Vec<f64>,
    pub predicted_class: usize,
}

impl ClassProbs {
    pub fn from_logits(logits: &[f64]) -> Self {
        let probabilities = nn::softmax(logits);
        Self {
            predicted_class: argmax(&probabilities),
            probabilities,
        }
    }
}

/// Index of the largest value; ties resolve to the lowest index.
pub(crate) fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}

#[derive(Debug, Clone)]
struct BranchCache {
    /// Input of each conv stage.
    inputs: Vec<Tensor>,
    /// Conv output before ReLU.
    pre_activations: Vec<Tensor>,
    pools: Vec<PoolIndices>,
}

/// Intermediate activations kept by a train-mode forward pass.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    branches: Vec<BranchCache>,
    states: Tensor,
    dense_input_mask: Option<Vec<f64>>,
    dense_input: Tensor,
    hidden_pre: Tensor,
    hidden: Tensor,
    logit_mask: Option<Vec<f64>>,
}

#[derive(Debug, Clone)]
pub struct Forward {
    pub probs: ClassProbs,
    /// Final logits after the output dropout, i.e. the softmax input.
    pub logits: Vec<f64>,
    pub cache: Option<ForwardCache>,
}

impl ModelWeights {
    /// Runs the network on one `C×L` window.
    ///
    /// Eval mode disables dropout, never touches `rng` and keeps no cache.
    pub fn forward(&self, window: &Tensor, mode: Mode, rng: &mut Rng) -> Result<Forward, ModelError> {
        let cfg = &self.config;
        let expected = cfg.input_shape();
        if window.shape() != expected {
            return Err(ModelError::WindowShape {
                expected: expected.to_vec(),
                got: window.shape().to_vec(),
            });
        }
        let training = mode == Mode::Train;
        let idx = BlockIndex::new(cfg);
        let p = &self.params;

        let d = cfg.branch_dim();
        let mut states = Vec::with_capacity(cfg.n_channels * d);
        let mut branches = Vec::new();
        for c in 0..cfg.n_channels {
            let mut x = Tensor::new(vec![1, cfg.window_len], window.row(c).to_vec())?;
            let mut cache = BranchCache {
                inputs: Vec::new(),
                pre_activations: Vec::new(),
                pools: Vec::new(),
            };
            for layer in 0..cfg.conv.len() {
                let k = idx.conv(c, layer);
                let pre = nn::conv1d_forward(&x, &p[k], &p[k + 1], cfg.padding)?;
                let act = nn::relu(&pre);
                let (pooled, pool_idx) =
                    nn::maxpool1d_forward(&act, cfg.pool_window, cfg.pool_window)?;
                if training {
                    cache.inputs.push(x);
                    cache.pre_activations.push(pre);
                    cache.pools.push(pool_idx);
                }
                x = pooled;
            }
            states.extend_from_slice(x.data());
            if training {
                branches.push(cache);
            }
        }
        let states = Tensor::new(vec![cfg.n_channels, d], states)?;

        let mut concat = Vec::with_capacity(cfg.attention_output_dim());
        for head in 0..cfg.n_attention_heads {
            let h = idx.head(head);
            let att = nn::additive_attention(&states, &p[h], &p[h + 1], &p[h + 2])?;
            concat.extend(att.context.into_data());
        }
        let concat = Tensor::vector(concat);

        let drop_in = nn::dropout(&concat, cfg.dropout_rate, training, rng)?;
        let hidden_pre = nn::dense_forward(&drop_in.output, &p[idx.hidden()], &p[idx.hidden() + 1])?;
        let hidden = nn::relu(&hidden_pre);
        let raw_logits = nn::dense_forward(&hidden, &p[idx.output()], &p[idx.output() + 1])?;
        let drop_out = nn::dropout(&raw_logits, cfg.dropout_rate, training, rng)?;
        let logits = drop_out.output.into_data();

        let cache = training.then_some(ForwardCache {
            branches,
            states,
            dense_input_mask: drop_in.mask,
            dense_input: drop_in.output,
            hidden_pre,
            hidden,
            logit_mask: drop_out.mask,
        });
        Ok(Forward {
            probs: ClassProbs::from_logits(&logits),
            logits,
            cache,
        })
    }

    /// Eval-mode class probabilities for one window.
    pub fn predict(&self, window: &Tensor) -> Result<ClassProbs, ModelError> {
        // eval mode draws nothing from the generator
        let mut rng = Rng::new(0);
        Ok(self.forward(window, Mode::Eval, &mut rng)?.probs)
    }

    /// Gradients of the loss for every parameter block, in canonical order,
    /// given `∂loss/∂logits` for the forward pass that produced `cache`.
    pub fn backward(
        &self,
        cache: Option<&ForwardCache>,
        logit_grad: &[f64],
    ) -> Result<Vec<Tensor>, ModelError> {
        let cache = cache.ok_or(ModelError::MissingCache)?;
        let cfg = &self.config;
        if logit_grad.len() != cfg.n_classes {
            return Err(ModelError::LogitGradient {
                expected: cfg.n_classes,
                got: logit_grad.len(),
            });
        }
        let idx = BlockIndex::new(cfg);
        let p = &self.params;
        let mut grads: Vec<Option<Tensor>> = vec![None; idx.len()];

        let g = nn::dropout_backward(
            cache.logit_mask.as_deref(),
            &Tensor::vector(logit_grad.to_vec()),
        )?;
        let out = nn::dense_backward(&cache.hidden, &p[idx.output()], &g)?;
        store(&mut grads, idx.output(), out.params);
        let g = nn::relu_backward(&cache.hidden_pre, &out.input)?;
        let hid = nn::dense_backward(&cache.dense_input, &p[idx.hidden()], &g)?;
        store(&mut grads, idx.hidden(), hid.params);
        let g_concat = nn::dropout_backward(cache.dense_input_mask.as_deref(), &hid.input)?;

        let d = cfg.branch_dim();
        let mut g_states = Tensor::zeros(&[cfg.n_channels, d]);
        for head in 0..cfg.n_attention_heads {
            let h = idx.head(head);
            let upstream = Tensor::vector(g_concat.data()[head * d..(head + 1) * d].to_vec());
            let att = nn::additive_attention_backward(
                &cache.states,
                &p[h],
                &p[h + 1],
                &p[h + 2],
                &upstream,
            )?;
            g_states.add_assign(&att.input)?;
            store(&mut grads, h, att.params);
        }

        let last_len = cfg.stage_lengths().last().copied().unwrap_or(0);
        for (c, branch) in cache.branches.iter().enumerate() {
            let last_filters = cfg.conv.last().map_or(0, |s| s.filters);
            let mut g = Tensor::new(vec![last_filters, last_len], g_states.row(c).to_vec())?;
            for layer in (0..cfg.conv.len()).rev() {
                let g_act = nn::maxpool1d_backward(&branch.pools[layer], &g)?;
                let g_pre = nn::relu_backward(&branch.pre_activations[layer], &g_act)?;
                let k = idx.conv(c, layer);
                let conv = nn::conv1d_backward(&branch.inputs[layer], &p[k], cfg.padding, &g_pre)?;
                store(&mut grads, k, conv.params);
                g = conv.input;
            }
        }

        Ok(grads
            .into_iter()
            .zip(p)
            .map(|(g, param)| g.unwrap_or_else(|| Tensor::zeros(param.shape())))
            .collect())
    }
}

fn store(grads: &mut [Option<Tensor>], start: usize, blocks: Vec<Tensor>) {
    for (i, b) in blocks.into_iter().enumerate() {
        grads[start + i] = Some(b);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{build_model, ModelConfig};

    fn random_window(cfg: &ModelConfig, seed: u64) -> Tensor {
        let mut rng = Rng::new(seed);
        let [c, l] = cfg.input_shape();
        Tensor::new(vec![c, l], (0..c * l).map(|_| rng.normal()).collect()).unwrap()
    }

    #[test]
    fn eval_is_deterministic() {
        let cfg = ModelConfig::default();
        let w = build_model(&cfg, &mut Rng::new(1)).unwrap();
        let x = random_window(&cfg, 2);
        let a = w.forward(&x, Mode::Eval, &mut Rng::new(5)).unwrap();
        let b = w.forward(&x, Mode::Eval, &mut Rng::new(99)).unwrap();
        assert_eq!(a.probs, b.probs);
        assert!(a.cache.is_none());
    }

    #[test]
    fn zero_weights_uniform() {
        let cfg = ModelConfig::default();
        let w = ModelWeights::zeros(&cfg).unwrap();
        let probs = w.predict(&random_window(&cfg, 3)).unwrap();
        for p in &probs.probabilities {
            assert!((p - 1.0 / 3.0).abs() < 1e-15);
        }
        assert_eq!(probs.predicted_class, 0);
    }

    #[test]
    fn probabilities_normalized() {
        let cfg = ModelConfig::default();
        for seed in 0..5 {
            let w = build_model(&cfg, &mut Rng::new(seed)).unwrap();
            for mode in [Mode::Eval, Mode::Train] {
                let f = w.forward(&random_window(&cfg, seed + 10), mode, &mut Rng::new(seed)).unwrap();
                let sum: f64 = f.probs.probabilities.iter().sum();
                assert!((sum - 1.0).abs() < 1e-6);
                assert!(f.probs.probabilities.iter().all(|&p| p >= 0.0));
            }
        }
    }

    #[test]
    fn wrong_window_shape() {
        let cfg = ModelConfig::default();
        let w = ModelWeights::zeros(&cfg).unwrap();
        let err = w.predict(&Tensor::zeros(&[4, 255])).unwrap_err();
        assert!(matches!(err, ModelError::WindowShape { .. }));
    }

    #[test]
    fn backward_needs_cache() {
        let cfg = ModelConfig::default();
        let w = ModelWeights::zeros(&cfg).unwrap();
        let f = w.forward(&random_window(&cfg, 1), Mode::Eval, &mut Rng::new(0)).unwrap();
        assert!(matches!(
            w.backward(f.cache.as_ref(), &[0.0; 3]),
            Err(ModelError::MissingCache)
        ));
    }

    #[test]
    fn zero_logit_grad_zero_param_grads() {
        let cfg = ModelConfig::default();
        let w = build_model(&cfg, &mut Rng::new(4)).unwrap();
        let f = w.forward(&random_window(&cfg, 4), Mode::Train, &mut Rng::new(4)).unwrap();
        let grads = w.backward(f.cache.as_ref(), &[0.0; 3]).unwrap();
        assert_eq!(grads.len(), w.params.len());
        assert!(grads.iter().all(|g| g.data().iter().all(|&v| v == 0.0)));
    }

    #[test]
    fn argmax_ties_lowest() {
        assert_eq!(argmax(&[0.2, 0.4, 0.4]), 1);
        assert_eq!(argmax(&[0.5, 0.5]), 0);
    }
}
