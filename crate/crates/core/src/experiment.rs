//! Pipeline → training → evaluation in one call, producing the JSON report.

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::bench::{latency_benchmark, BenchError, LatencyStats};
use crate::dataset::{Dataset, LabelMap, N_CHANNELS};
use crate::metrics::{metrics_from_confusion, roc_auc, ConfusionMatrix, MetricsError, MetricsReport, RocCurve};
use crate::model::{build_model, parameter_count, ModelConfig, ModelError, ModelWeights, REFERENCE_PARAMETER_COUNT};
use crate::pipeline::{build_frames, Partition, PipelineConfig, PipelineError, SplitPlan, WindowFrame};
use crate::rng::Rng;
use crate::train::{evaluate, train, EpochStats, Evaluation, TrainConfig, TrainError};

pub const REPORT_VERSION: u32 = 1;

#[derive(Debug, thiserror::Error)]
pub enum ExperimentError {
    #[error("model expects {model}-sample windows but the pipeline cuts {pipeline}-sample frames")]
    WindowMismatch { model: usize, pipeline: usize },
    #[error("model expects {model} channels but recordings have {data}")]
    ChannelMismatch { model: usize, data: usize },
    #[error("model has {model} classes but the label map has {labels}")]
    ClassCount { model: usize, labels: usize },
    #[error("{0} partition produced no frames")]
    NoFrames(&'static str),
    #[error(transparent)]
    Pipeline(#[from] PipelineError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Train(#[from] TrainError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error(transparent)]
    Bench(#[from] BenchError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub pipeline: PipelineConfig,
    /// Timed iterations of the latency benchmark; 0 skips it.
    pub bench_iters: usize,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            model: ModelConfig::default(),
            train: TrainConfig::default(),
            pipeline: PipelineConfig::default(),
            bench_iters: 1000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassName {
    pub index: usize,
    pub activity: String,
}

pub fn class_names(label_map: &LabelMap) -> Vec<ClassName> {
    label_map
        .classes()
        .iter()
        .enumerate()
        .map(|(index, a)| ClassName {
            index,
            activity: a.as_str().to_string(),
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfigEcho {
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub pipeline: PipelineConfig,
    pub denoise: bool,
    pub classes: Vec<ClassName>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParameterSummary {
    pub total: usize,
    pub blocks: Vec<crate::model::BlockCount>,
    pub reference_total: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameCounts {
    pub train: usize,
    pub val: usize,
    pub test: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RocEntry {
    pub partition: Partition,
    pub activity: String,
    #[serde(flatten)]
    pub curve: RocCurve,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub report_version: u32,
    pub config: ConfigEcho,
    pub split: SplitPlan,
    pub parameter_count: ParameterSummary,
    pub frames: FrameCounts,
    /// Subject/activity pairs of recordings too short for one window.
    pub short_recordings: Vec<String>,
    pub epochs: Vec<EpochStats>,
    pub val_metrics: MetricsReport,
    pub test_metrics: MetricsReport,
    pub confusion_val: ConfusionMatrix,
    pub confusion_test: ConfusionMatrix,
    pub roc: Vec<RocEntry>,
    pub latency: Option<LatencyStats>,
}

/// Report of a standalone evaluation of one partition.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub report_version: u32,
    pub partition: Partition,
    pub classes: Vec<ClassName>,
    pub frames: usize,
    pub metrics: MetricsReport,
    pub confusion: ConfusionMatrix,
    pub roc: Vec<RocEntry>,
}

#[derive(Debug, Clone)]
pub struct ExperimentOutput {
    pub report: Report,
    pub weights: ModelWeights,
}

/// Metrics with AUC filled in, plus the ROC curves that were defined.
pub fn partition_metrics(
    eval: &Evaluation,
    partition: Partition,
    label_map: &LabelMap,
) -> Result<(MetricsReport, Vec<RocEntry>), ExperimentError> {
    let mut metrics = metrics_from_confusion(&eval.confusion)?;
    let mut roc = Vec::new();
    for class in 0..eval.confusion.n_classes() {
        match roc_auc(&eval.scores(class), &eval.labels, class) {
            Ok(curve) => {
                metrics.auc.push(Some(curve.auc));
                roc.push(RocEntry {
                    partition,
                    activity: label_map
                        .activity(class)
                        .map(|a| a.as_str().to_string())
                        .unwrap_or_default(),
                    curve,
                });
            }
            Err(MetricsError::SingleClass { .. }) => metrics.auc.push(None),
            Err(e) => return Err(e.into()),
        }
    }
    Ok((metrics, roc))
}

fn check_compat(model: &ModelConfig, pipeline: &PipelineConfig, label_map: &LabelMap) -> Result<(), ExperimentError> {
    if model.n_classes != label_map.len() {
        return Err(ExperimentError::ClassCount {
            model: model.n_classes,
            labels: label_map.len(),
        });
    }
    if model.window_len != pipeline.window_len {
        return Err(ExperimentError::WindowMismatch {
            model: model.window_len,
            pipeline: pipeline.window_len,
        });
    }
    if model.n_channels != N_CHANNELS {
        return Err(ExperimentError::ChannelMismatch {
            model: model.n_channels,
            data: N_CHANNELS,
        });
    }
    Ok(())
}

/// Frames of one partition, rejecting shapes the model cannot take.
pub fn partition_frames(
    dataset: &Dataset,
    split: &SplitPlan,
    partition: Partition,
    pipeline: &PipelineConfig,
    model: &ModelConfig,
) -> Result<(Vec<WindowFrame>, Vec<String>), ExperimentError> {
    check_compat(model, pipeline, &dataset.label_map)?;
    let set = build_frames(dataset, split.subjects(partition), pipeline)?;
    Ok((set.frames, set.short_recordings))
}

/// Trains a freshly initialised model on the train partition and reports
/// on validation and test. `on_epoch` sees each epoch's statistics.
pub fn run_experiment(
    dataset: &Dataset,
    split: &SplitPlan,
    config: &ExperimentConfig,
    on_epoch: impl FnMut(&EpochStats),
) -> Result<ExperimentOutput, ExperimentError> {
    let count = parameter_count(&config.model)?;
    let mut short = Vec::new();
    let mut load = |p: Partition, name: &'static str| -> Result<Vec<WindowFrame>, ExperimentError> {
        let (frames, s) = partition_frames(dataset, split, p, &config.pipeline, &config.model)?;
        if frames.is_empty() {
            return Err(ExperimentError::NoFrames(name));
        }
        short.extend(s);
        Ok(frames)
    };
    let train_frames = load(Partition::Train, "train")?;
    let val_frames = load(Partition::Val, "validation")?;
    let test_frames = load(Partition::Test, "test")?;

    let initial = build_model(&config.model, &mut Rng::new(config.model.seed))?;
    let outcome = train(&initial, &train_frames, &val_frames, &config.train, on_epoch)?;

    let label_map = &dataset.label_map;
    let val_eval = evaluate(&outcome.weights, &val_frames)?;
    let test_eval = evaluate(&outcome.weights, &test_frames)?;
    let (val_metrics, mut roc) = partition_metrics(&val_eval, Partition::Val, label_map)?;
    let (test_metrics, test_roc) = partition_metrics(&test_eval, Partition::Test, label_map)?;
    roc.extend(test_roc);

    let latency = if config.bench_iters > 0 {
        let mut rng = Rng::new(config.train.seed).derive(u64::MAX - 1);
        Some(latency_benchmark(
            &outcome.weights,
            config.bench_iters,
            config.bench_iters.min(100),
            &mut rng,
        )?)
    } else {
        None
    };

    let report = Report {
        report_version: REPORT_VERSION,
        config: ConfigEcho {
            model: config.model.clone(),
            train: config.train,
            pipeline: config.pipeline,
            denoise: config.pipeline.denoise.enabled,
            classes: class_names(label_map),
        },
        split: split.clone(),
        parameter_count: ParameterSummary {
            total: count.total,
            blocks: count.blocks,
            reference_total: REFERENCE_PARAMETER_COUNT,
        },
        frames: FrameCounts {
            train: train_frames.len(),
            val: val_frames.len(),
            test: test_frames.len(),
        },
        short_recordings: short,
        epochs: outcome.history,
        val_metrics,
        test_metrics,
        confusion_val: val_eval.confusion,
        confusion_test: test_eval.confusion,
        roc,
        latency,
    };
    Ok(ExperimentOutput {
        report,
        weights: outcome.weights,
    })
}

/// Evaluates saved weights on one partition of a dataset.
pub fn evaluate_partition(
    weights: &ModelWeights,
    dataset: &Dataset,
    split: &SplitPlan,
    partition: Partition,
    pipeline: &PipelineConfig,
) -> Result<EvaluationReport, ExperimentError> {
    let (frames, _) = partition_frames(dataset, split, partition, pipeline, &weights.config)?;
    if frames.is_empty() {
        return Err(ExperimentError::NoFrames(match partition {
            Partition::Train => "train",
            Partition::Val => "validation",
            Partition::Test => "test",
        }));
    }
    let eval = evaluate(weights, &frames)?;
    let (metrics, roc) = partition_metrics(&eval, partition, &dataset.label_map)?;
    Ok(EvaluationReport {
        report_version: REPORT_VERSION,
        partition,
        classes: class_names(&dataset.label_map),
        frames: frames.len(),
        metrics,
        confusion: eval.confusion,
        roc,
    })
}

fn require<'a>(v: &'a Value, key: &str, errors: &mut Vec<String>) -> Option<&'a Value> {
    let found = v.get(key);
    if found.is_none() {
        errors.push(format!("missing key \"{key}\""));
    }
    found
}

fn check_percentages(path: &str, m: &Value, errors: &mut Vec<String>) {
    for key in ["precision", "recall", "f1"] {
        match m.get(key).and_then(Value::as_array) {
            Some(values) => {
                if values
                    .iter()
                    .any(|v| !v.as_f64().is_some_and(|x| (0.0..=100.0).contains(&x)))
                {
                    errors.push(format!("{path}.{key} has a value outside [0, 100]"));
                }
            }
            None => errors.push(format!("{path}.{key} must be an array")),
        }
    }
    for key in ["accuracy", "balanced_accuracy"] {
        if !m.get(key).and_then(Value::as_f64).is_some_and(|x| (0.0..=100.0).contains(&x)) {
            errors.push(format!("{path}.{key} must be a number in [0, 100]"));
        }
    }
    match m.get("auc").and_then(Value::as_array) {
        Some(values) => {
            if values
                .iter()
                .any(|v| !(v.is_null() || v.as_f64().is_some_and(|x| (0.0..=1.0).contains(&x))))
            {
                errors.push(format!("{path}.auc has a value outside [0, 1]"));
            }
        }
        None => errors.push(format!("{path}.auc must be an array")),
    }
}

fn check_confusion(path: &str, m: &Value, errors: &mut Vec<String>) {
    let ok = m.get("counts").and_then(Value::as_array).is_some_and(|rows| {
        !rows.is_empty()
            && rows.iter().all(|r| {
                r.as_array()
                    .is_some_and(|r| r.len() == rows.len() && r.iter().all(Value::is_u64))
            })
    });
    if !ok {
        errors.push(format!("{path}.counts must be a square matrix of non-negative integers"));
    }
}

/// Structural check of a training report; returns every problem found.
pub fn validate_report(v: &Value) -> Result<(), Vec<String>> {
    let mut errors = Vec::new();
    if v.get("report_version").and_then(Value::as_u64) != Some(u64::from(REPORT_VERSION)) {
        errors.push(format!("report_version must be {REPORT_VERSION}"));
    }
    for key in ["config", "split", "parameter_count", "latency"] {
        require(v, key, &mut errors);
    }
    if let Some(p) = require(v, "parameter_count", &mut Vec::new()) {
        if !p.get("total").is_some_and(Value::is_u64) {
            errors.push("parameter_count.total must be an integer".into());
        }
    }
    if let Some(e) = require(v, "epochs", &mut errors) {
        match e.as_array() {
            Some(epochs) => {
                for (i, ep) in epochs.iter().enumerate() {
                    let acc_ok = ep
                        .get("train_accuracy")
                        .and_then(Value::as_f64)
                        .is_some_and(|a| (0.0..=1.0).contains(&a));
                    let loss_ok = ep.get("train_loss").and_then(Value::as_f64).is_some_and(|l| l >= 0.0);
                    if !acc_ok || !loss_ok {
                        errors.push(format!("epochs[{i}] has an invalid loss or accuracy"));
                    }
                }
            }
            None => errors.push("epochs must be an array".into()),
        }
    }
    for key in ["val_metrics", "test_metrics"] {
        if let Some(m) = require(v, key, &mut errors) {
            check_percentages(key, m, &mut errors);
        }
    }
    for key in ["confusion_val", "confusion_test"] {
        if let Some(m) = require(v, key, &mut errors) {
            check_confusion(key, m, &mut errors);
        }
    }
    if let Some(r) = require(v, "roc", &mut errors) {
        if !r.is_array() {
            errors.push("roc must be an array".into());
        }
    }
    if errors.is_empty() {
        Ok(())
    } else {
        Err(errors)
    }
}

/// Structural check of a standalone evaluation report.
pub fn validate_evaluation_report(v: &Value) -> Result<(), Vec<String>> {
    let mut errors = Vec::new();
    if v.get("report_version").and_then(Value::as_u64) != Some(u64::from(REPORT_VERSION)) {
        errors.push(format!("report_version must be {REPORT_VERSION}"));
    }
    for key in ["partition", "classes", "frames", "roc"] {
        require(v, key, &mut errors);
    }
    if let Some(m) = require(v, "metrics", &mut errors) {
        check_percentages("metrics", m, &mut errors);
    }
    if let Some(m) = require(v, "confusion", &mut errors) {
        check_confusion("confusion", m, &mut errors);
    }
    if errors.is_empty() {
        Ok(())
    } else {
        Err(errors)
    }
}
