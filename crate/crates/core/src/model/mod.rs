//! The classifier: per-channel convolutional branches, two additive-attention
//! heads over the branch outputs, and a two-layer dense classifier.
//!
//! ```text
//! window (C×L) ─┬─ channel 0 ─ [conv → relu → pool] × 3 ─ flatten ─┐
//!               ├─ channel 1 ─ ...                                 ├─ states (C×d)
//!               └─ ...                                             ┘
//! states ─┬─ attention head 0 ─ context (d) ─┐
//!         └─ attention head 1 ─ context (d) ─┴─ concat ─ dropout ─ dense ─ relu
//!                                              ─ dense ─ dropout ─ softmax
//! ```
//!
//! Parameters live in [`ModelWeights::params`] in a fixed canonical order:
//! for each branch and each of its conv layers the kernel then the bias; then
//! each attention head's `W`, `b`, `v`; then the hidden dense weights and
//! bias; then the output dense weights and bias.

mod forward;
mod weights_file;

use std::fmt;

use serde::{Deserialize, Serialize};

pub use forward::{ClassProbs, Forward, ForwardCache, Mode};
pub use weights_file::{decode_weights, encode_weights, load_weights, save_weights, WeightFileError};

use crate::nn::{NnError, Padding};
use crate::rng::Rng;
use crate::tensor::Tensor;

#[derive(Debug, thiserror::Error)]
pub enum ModelError {
    #[error("invalid model config: {0}")]
    InvalidConfig(String),
    #[error("window shape {got:?} does not match model input {expected:?}")]
    WindowShape { expected: Vec<usize>, got: Vec<usize> },
    #[error("backward needs the cache of a train-mode forward pass")]
    MissingCache,
    #[error("expected {expected} logit gradients, got {got}")]
    LogitGradient { expected: usize, got: usize },
    #[error(transparent)]
    Nn(#[from] NnError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConvSpec {
    pub kernel: usize,
    pub filters: usize,
}

impl ConvSpec {
    pub const fn new(kernel: usize, filters: usize) -> Self {
        Self { kernel, filters }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub window_len: usize,
    pub n_channels: usize,
    pub conv: Vec<ConvSpec>,
    pub pool_window: usize,
    pub padding: Padding,
    pub attention_dim: usize,
    pub n_attention_heads: usize,
    pub dense_hidden: usize,
    pub n_classes: usize,
    pub dropout_rate: f64,
    pub seed: u64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            window_len: 256,
            n_channels: 4,
            conv: vec![ConvSpec::new(5, 16), ConvSpec::new(3, 8), ConvSpec::new(3, 4)],
            pool_window: 2,
            padding: Padding::Same,
            attention_dim: 128,
            n_attention_heads: 2,
            dense_hidden: 100,
            n_classes: 3,
            dropout_rate: 0.5,
            seed: 0,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<(), ModelError> {
        let bad = |msg: String| Err(ModelError::InvalidConfig(msg));
        if self.n_channels == 0 || self.window_len == 0 {
            return bad("window_len and n_channels must be positive".into());
        }
        if self.conv.is_empty() {
            return bad("at least one conv layer is required".into());
        }
        if self.pool_window == 0 {
            return bad("pool_window must be positive".into());
        }
        if self.n_attention_heads == 0 {
            return bad("n_attention_heads must be >= 1".into());
        }
        if self.n_classes < 2 {
            return bad("n_classes must be >= 2".into());
        }
        if self.attention_dim == 0 || self.dense_hidden == 0 {
            return bad("attention_dim and dense_hidden must be positive".into());
        }
        if !(0.0..1.0).contains(&self.dropout_rate) {
            return bad(format!("dropout_rate {} outside [0, 1)", self.dropout_rate));
        }
        let mut len = self.window_len;
        for (i, spec) in self.conv.iter().enumerate() {
            if spec.kernel == 0 || spec.filters == 0 {
                return bad(format!("conv layer {i}: kernel and filters must be positive"));
            }
            match self.padding {
                Padding::Same if spec.kernel % 2 == 0 => {
                    return bad(format!("conv layer {i}: same padding needs an odd kernel"))
                }
                Padding::Valid if spec.kernel > len => {
                    return bad(format!(
                        "conv layer {i}: kernel {} longer than its input ({len})",
                        spec.kernel
                    ))
                }
                _ => {}
            }
            len = self.padding.output_len(len, spec.kernel);
            if len < self.pool_window {
                return bad(format!("conv layer {i}: output length {len} shorter than pool window"));
            }
            len /= self.pool_window;
        }
        if self.padding == Padding::Same {
            let factor = self.pool_window.pow(self.conv.len() as u32);
            if !self.window_len.is_multiple_of(factor) {
                return bad(format!(
                    "window_len {} not divisible by pool_window^{} = {factor}",
                    self.window_len,
                    self.conv.len()
                ));
            }
        }
        Ok(())
    }

    /// Branch sequence length after each conv+pool stage.
    pub fn stage_lengths(&self) -> Vec<usize> {
        let mut len = self.window_len;
        self.conv
            .iter()
            .map(|spec| {
                len = self.padding.output_len(len, spec.kernel) / self.pool_window;
                len
            })
            .collect()
    }

    /// Length of one flattened branch output (the attention state dimension).
    pub fn branch_dim(&self) -> usize {
        let last = self.conv.last().map_or(0, |c| c.filters);
        last * self.stage_lengths().last().copied().unwrap_or(0)
    }

    /// Width of the concatenated attention contexts.
    pub fn attention_output_dim(&self) -> usize {
        self.n_attention_heads * self.branch_dim()
    }

    pub fn input_shape(&self) -> [usize; 2] {
        [self.n_channels, self.window_len]
    }

    /// Names and shapes of every parameter block in canonical order.
    pub fn layout(&self) -> Vec<(String, Vec<usize>)> {
        let mut blocks = Vec::new();
        for branch in 0..self.n_channels {
            let mut c_in = 1;
            for (layer, spec) in self.conv.iter().enumerate() {
                blocks.push((
                    format!("branch{branch}.conv{layer}.kernel"),
                    vec![spec.filters, c_in, spec.kernel],
                ));
                blocks.push((format!("branch{branch}.conv{layer}.bias"), vec![spec.filters]));
                c_in = spec.filters;
            }
        }
        let (u, d) = (self.attention_dim, self.branch_dim());
        for head in 0..self.n_attention_heads {
            blocks.push((format!("head{head}.w"), vec![u, d]));
            blocks.push((format!("head{head}.b"), vec![u]));
            blocks.push((format!("head{head}.v"), vec![u]));
        }
        blocks.push(("hidden.w".into(), vec![self.dense_hidden, self.attention_output_dim()]));
        blocks.push(("hidden.b".into(), vec![self.dense_hidden]));
        blocks.push(("output.w".into(), vec![self.n_classes, self.dense_hidden]));
        blocks.push(("output.b".into(), vec![self.n_classes]));
        blocks
    }
}

/// Index arithmetic over the canonical block order.
#[derive(Debug, Clone, Copy)]
pub(crate) struct BlockIndex {
    n_conv: usize,
    n_channels: usize,
    n_heads: usize,
}

impl BlockIndex {
    pub(crate) fn new(config: &ModelConfig) -> Self {
        Self {
            n_conv: config.conv.len(),
            n_channels: config.n_channels,
            n_heads: config.n_attention_heads,
        }
    }

    /// Kernel block of `layer` in `branch`; the bias follows it.
    pub(crate) fn conv(&self, branch: usize, layer: usize) -> usize {
        2 * (branch * self.n_conv + layer)
    }

    /// `W` block of attention head `head`; `b` and `v` follow it.
    pub(crate) fn head(&self, head: usize) -> usize {
        2 * self.n_conv * self.n_channels + 3 * head
    }

    pub(crate) fn hidden(&self) -> usize {
        self.head(self.n_heads)
    }

    pub(crate) fn output(&self) -> usize {
        self.hidden() + 2
    }

    pub(crate) fn len(&self) -> usize {
        self.output() + 2
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelWeights {
    pub config: ModelConfig,
    pub params: Vec<Tensor>,
}

impl ModelWeights {
    /// Weights of the right shapes, every scalar zero.
    pub fn zeros(config: &ModelConfig) -> Result<Self, ModelError> {
        config.validate()?;
        Ok(Self {
            config: config.clone(),
            params: config.layout().iter().map(|(_, s)| Tensor::zeros(s)).collect(),
        })
    }

    pub fn scalar_count(&self) -> usize {
        self.params.iter().map(Tensor::len).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.params.iter().all(Tensor::is_finite)
    }

    /// Checks block count and shapes against the config layout.
    pub fn check_layout(&self) -> Result<(), ModelError> {
        let layout = self.config.layout();
        if layout.len() != self.params.len() {
            return Err(ModelError::InvalidConfig(format!(
                "{} parameter blocks, layout has {}",
                self.params.len(),
                layout.len()
            )));
        }
        for ((name, shape), p) in layout.iter().zip(&self.params) {
            if p.shape() != shape.as_slice() {
                return Err(ModelError::InvalidConfig(format!(
                    "block {name} has shape {:?}, expected {shape:?}",
                    p.shape()
                )));
            }
        }
        Ok(())
    }
}

/// Glorot-uniform matrices and kernels, zero biases.
pub fn build_model(config: &ModelConfig, rng: &mut Rng) -> Result<ModelWeights, ModelError> {
    let mut weights = ModelWeights::zeros(config)?;
    for ((name, shape), param) in config.layout().iter().zip(weights.params.iter_mut()) {
        if name.ends_with(".bias") || name.ends_with(".b") {
            continue;
        }
        let (fan_in, fan_out) = match shape.as_slice() {
            // conv kernel [out, in, k]
            [o, i, k] => (i * k, o * k),
            // matrix [rows, cols] maps cols -> rows
            [rows, cols] => (*cols, *rows),
            // attention v: u -> scalar score
            [u] => (*u, 1),
            _ => unreachable!("layout only produces rank 1-3 blocks"),
        };
        let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
        for x in param.data_mut() {
            *x = rng.uniform_range(-limit, limit);
        }
    }
    Ok(weights)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BlockCount {
    pub name: String,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParameterCount {
    pub blocks: Vec<BlockCount>,
    pub total: usize,
}

/// Parameter count of the reference network, kept for comparison.
pub const REFERENCE_PARAMETER_COUNT: usize = 62_876;

/// Closed-form parameter count, broken down by block.
pub fn parameter_count(config: &ModelConfig) -> Result<ParameterCount, ModelError> {
    config.validate()?;
    let mut c_in = 1;
    let mut per_branch = 0;
    for spec in &config.conv {
        per_branch += spec.filters * c_in * spec.kernel + spec.filters;
        c_in = spec.filters;
    }
    let (u, d) = (config.attention_dim, config.branch_dim());
    let h = config.dense_hidden;
    let blocks = vec![
        BlockCount {
            name: "conv_branches".into(),
            count: config.n_channels * per_branch,
        },
        BlockCount {
            name: "attention".into(),
            count: config.n_attention_heads * (u * d + u + u),
        },
        BlockCount {
            name: "dense_hidden".into(),
            count: config.attention_output_dim() * h + h,
        },
        BlockCount {
            name: "output".into(),
            count: h * config.n_classes + config.n_classes,
        },
    ];
    let total = blocks.iter().map(|b| b.count).sum();
    Ok(ParameterCount { blocks, total })
}

impl fmt::Display for ParameterCount {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for b in &self.blocks {
            writeln!(f, "{:<14} {:>8}", b.name, b.count)?;
        }
        write!(f, "{:<14} {:>8}", "total", self.total)
    }
}
