//! Mini-batch training and evaluation.

use serde::{Deserialize, Serialize};

use crate::metrics::{ConfusionMatrix, MetricsError};
use crate::model::{ModelError, ModelWeights, Mode};
use crate::nn::{self, NnError};
use crate::optim::{adam_step, AdamConfig, AdamState};
use crate::pipeline::WindowFrame;
use crate::rng::Rng;
use crate::tensor::Tensor;

#[derive(Debug, thiserror::Error)]
pub enum TrainError {
    #[error("no training frames")]
    EmptyTrainingSet,
    #[error("no frames to evaluate")]
    EmptyEvaluationSet,
    #[error("batch size must be at least 1")]
    ZeroBatchSize,
    #[error("frame label {label} out of range for {n_classes} classes")]
    LabelOutOfRange { label: usize, n_classes: usize },
    #[error("training diverged: non-finite loss at epoch {epoch}")]
    Diverged { epoch: usize },
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub adam: AdamConfig,
    /// Drives the per-epoch reshuffle and every dropout mask.
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 50,
            batch_size: 32,
            adam: AdamConfig::default(),
            seed: 0,
        }
    }
}

/// End-of-epoch statistics, all computed in eval mode over the whole
/// partition. Accuracies are fractions in `[0, 1]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    pub epoch: usize,
    pub train_loss: f64,
    pub train_accuracy: f64,
    pub val_loss: Option<f64>,
    pub val_accuracy: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub weights: ModelWeights,
    pub history: Vec<EpochStats>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub confusion: ConfusionMatrix,
    /// Per frame, in input order.
    pub probabilities: Vec<Vec<f64>>,
    pub predictions: Vec<usize>,
    pub labels: Vec<usize>,
    /// Mean cross-entropy.
    pub loss: f64,
}

impl Evaluation {
    pub fn accuracy(&self) -> f64 {
        self.confusion.trace() as f64 / self.confusion.total() as f64
    }

    /// Probability column for one class, for ROC analysis.
    pub fn scores(&self, class: usize) -> Vec<f64> {
        self.probabilities.iter().map(|p| p[class]).collect()
    }
}

fn check_labels(frames: &[WindowFrame], n_classes: usize) -> Result<(), TrainError> {
    match frames.iter().find(|f| f.label >= n_classes) {
        Some(f) => Err(TrainError::LabelOutOfRange {
            label: f.label,
            n_classes,
        }),
        None => Ok(()),
    }
}

/// Trains `weights` in place of a copy and returns the result with one
/// [`EpochStats`] per epoch. `on_epoch` sees each entry as it is produced.
///
/// Each epoch visits the frames in a fresh seeded permutation; each sample's
/// dropout masks come from its own generator stream, so the run depends only
/// on the seed, the frames and the configs.
pub fn train(
    weights: &ModelWeights,
    train_frames: &[WindowFrame],
    val_frames: &[WindowFrame],
    config: &TrainConfig,
    mut on_epoch: impl FnMut(&EpochStats),
) -> Result<TrainOutcome, TrainError> {
    if train_frames.is_empty() {
        return Err(TrainError::EmptyTrainingSet);
    }
    if config.batch_size == 0 {
        return Err(TrainError::ZeroBatchSize);
    }
    let n_classes = weights.config.n_classes;
    check_labels(train_frames, n_classes)?;
    check_labels(val_frames, n_classes)?;

    let mut weights = weights.clone();
    let mut state = AdamState::new(&weights.params);
    let root = Rng::new(config.seed);
    let mut order_rng = root.derive(0);
    let mut sample_counter: u64 = 0;
    let mut order: Vec<usize> = (0..train_frames.len()).collect();
    let mut history = Vec::with_capacity(config.epochs);

    for epoch in 0..config.epochs {
        order_rng.shuffle(&mut order);
        for batch in order.chunks(config.batch_size) {
            let mut sum: Vec<Tensor> = weights.params.iter().map(|p| Tensor::zeros(p.shape())).collect();
            for &i in batch {
                let frame = &train_frames[i];
                sample_counter += 1;
                let mut rng = root.derive(sample_counter);
                let fwd = weights.forward(&frame.data, Mode::Train, &mut rng)?;
                let (_, logit_grad) = nn::softmax_cross_entropy(&fwd.logits, frame.label)?;
                let grads = weights.backward(fwd.cache.as_ref(), &logit_grad)?;
                for (acc, g) in sum.iter_mut().zip(&grads) {
                    acc.add_assign(g)?;
                }
            }
            let scale = 1.0 / batch.len() as f64;
            for g in &mut sum {
                g.scale(scale);
            }
            adam_step(&mut weights.params, &sum, &mut state, &config.adam)?;
        }

        let train_eval = evaluate(&weights, train_frames)?;
        if !train_eval.loss.is_finite() {
            return Err(TrainError::Diverged { epoch });
        }
        let val_eval = if val_frames.is_empty() {
            None
        } else {
            Some(evaluate(&weights, val_frames)?)
        };
        let stats = EpochStats {
            epoch,
            train_loss: train_eval.loss,
            train_accuracy: train_eval.accuracy(),
            val_loss: val_eval.as_ref().map(|e| e.loss),
            val_accuracy: val_eval.as_ref().map(Evaluation::accuracy),
        };
        on_epoch(&stats);
        history.push(stats);
    }
    Ok(TrainOutcome { weights, history })
}

struct FrameResult {
    probabilities: Vec<f64>,
    predicted: usize,
    loss: f64,
}

fn eval_frame(weights: &ModelWeights, frame: &WindowFrame) -> Result<FrameResult, TrainError> {
    let mut rng = Rng::new(0);
    let fwd = weights.forward(&frame.data, Mode::Eval, &mut rng)?;
    let (loss, _) = nn::softmax_cross_entropy(&fwd.logits, frame.label)?;
    Ok(FrameResult {
        probabilities: fwd.probs.probabilities,
        predicted: fwd.probs.predicted_class,
        loss,
    })
}

/// Eval-mode pass over `frames`. Work is split across the available cores
/// and gathered back in input order, so results do not depend on the worker
/// count.
pub fn evaluate(weights: &ModelWeights, frames: &[WindowFrame]) -> Result<Evaluation, TrainError> {
    if frames.is_empty() {
        return Err(TrainError::EmptyEvaluationSet);
    }
    let n_classes = weights.config.n_classes;
    check_labels(frames, n_classes)?;

    let workers = std::thread::available_parallelism()
        .map(|n| n.get())
        .unwrap_or(1)
        .min(frames.len());
    let results: Vec<FrameResult> = if workers <= 1 {
        frames
            .iter()
            .map(|f| eval_frame(weights, f))
            .collect::<Result<_, _>>()?
    } else {
        let chunk = frames.len().div_ceil(workers);
        std::thread::scope(|scope| {
            let handles: Vec<_> = frames
                .chunks(chunk)
                .map(|part| {
                    scope.spawn(move || {
                        part.iter()
                            .map(|f| eval_frame(weights, f))
                            .collect::<Result<Vec<_>, _>>()
                    })
                })
                .collect();
            let mut all = Vec::with_capacity(frames.len());
            for h in handles {
                all.extend(h.join().expect("evaluation worker panicked")?);
            }
            Ok::<_, TrainError>(all)
        })?
    };

    let mut confusion = ConfusionMatrix::new(n_classes);
    let mut loss = 0.0;
    let mut probabilities = Vec::with_capacity(frames.len());
    let mut predictions = Vec::with_capacity(frames.len());
    for (frame, r) in frames.iter().zip(results) {
        confusion.record(frame.label, r.predicted)?;
        loss += r.loss;
        probabilities.push(r.probabilities);
        predictions.push(r.predicted);
    }
    Ok(Evaluation {
        confusion,
        probabilities,
        predictions,
        labels: frames.iter().map(|f| f.label).collect(),
        loss: loss / frames.len() as f64,
    })
}
