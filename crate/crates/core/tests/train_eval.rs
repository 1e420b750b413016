use std::collections::BTreeSet;

use limbnet::bench::latency_benchmark;
use limbnet::dataset::{generate_synthetic_dataset, Dataset, SyntheticParams};
use limbnet::experiment::{run_experiment, validate_report, ExperimentConfig};
use limbnet::metrics::{metrics_from_confusion, roc_auc, ConfusionMatrix};
use limbnet::model::{build_model, decode_weights, encode_weights, ConvSpec, ModelConfig, ModelWeights};
use limbnet::optim::AdamConfig;
use limbnet::pipeline::{build_frames, make_split, PipelineConfig, WindowFrame};
use limbnet::train::{evaluate, train, TrainConfig, TrainError};
use limbnet::Rng;
use proptest::prelude::*;

fn small_model() -> ModelConfig {
    ModelConfig {
        window_len: 64,
        conv: vec![ConvSpec::new(5, 4), ConvSpec::new(3, 4), ConvSpec::new(3, 2)],
        attention_dim: 8,
        dense_hidden: 16,
        ..ModelConfig::default()
    }
}

fn small_pipeline() -> PipelineConfig {
    PipelineConfig {
        window_len: 64,
        stride: 64,
        ..PipelineConfig::default()
    }
}

fn dataset() -> Dataset {
    let params = SyntheticParams {
        samples_per_recording: 320,
        ..SyntheticParams::default()
    };
    generate_synthetic_dataset(&params, &mut Rng::new(5)).unwrap()
}

fn frames(ds: &Dataset, ids: &[&str]) -> Vec<WindowFrame> {
    let subjects: BTreeSet<String> = ids.iter().map(|s| s.to_string()).collect();
    build_frames(ds, &subjects, &small_pipeline()).unwrap().frames
}

fn quick_train(epochs: usize, seed: u64) -> TrainConfig {
    TrainConfig {
        epochs,
        batch_size: 8,
        adam: AdamConfig {
            lr: 5e-3,
            ..AdamConfig::default()
        },
        seed,
    }
}

#[test]
fn zero_epochs_is_identity() {
    let ds = dataset();
    let train_frames = frames(&ds, &["S01"]);
    let init = build_model(&small_model(), &mut Rng::new(1)).unwrap();
    let out = train(&init, &train_frames, &[], &quick_train(0, 1), |_| {}).unwrap();
    assert_eq!(out.weights.params, init.params);
    assert!(out.history.is_empty());
}

#[test]
fn empty_inputs_rejected() {
    let init = build_model(&small_model(), &mut Rng::new(1)).unwrap();
    assert!(matches!(
        train(&init, &[], &[], &quick_train(1, 0), |_| {}),
        Err(TrainError::EmptyTrainingSet)
    ));
    assert!(matches!(evaluate(&init, &[]), Err(TrainError::EmptyEvaluationSet)));
}

#[test]
fn training_is_bit_deterministic() {
    let ds = dataset();
    let train_frames = frames(&ds, &["S01", "S12", "S03"]);
    let val_frames = frames(&ds, &["S02"]);
    let init = build_model(&small_model(), &mut Rng::new(2)).unwrap();
    let run = || train(&init, &train_frames, &val_frames, &quick_train(3, 9), |_| {}).unwrap();
    let (a, b) = (run(), run());
    assert_eq!(a.history, b.history);
    assert_eq!(encode_weights(&a.weights), encode_weights(&b.weights));
    assert_eq!(a.history.len(), 3);
    for s in &a.history {
        assert!(s.train_loss >= 0.0 && (0.0..=1.0).contains(&s.train_accuracy));
        assert!(s.val_accuracy.is_some());
    }
    let other = train(&init, &train_frames, &val_frames, &quick_train(3, 10), |_| {}).unwrap();
    assert_ne!(other.weights.params, a.weights.params);
}

#[test]
fn small_model_overfits_and_evaluates_diagonal() {
    let ds = dataset();
    let train_frames: Vec<WindowFrame> = frames(&ds, &["S01", "S12"]).into_iter().take(24).collect();
    let init = build_model(&small_model(), &mut Rng::new(3)).unwrap();
    let out = train(&init, &train_frames, &[], &quick_train(150, 4), |_| {}).unwrap();
    assert_eq!(out.history.last().unwrap().train_accuracy, 1.0);

    let eval = evaluate(&out.weights, &train_frames).unwrap();
    let m = &eval.confusion;
    assert_eq!(m.total() as usize, train_frames.len());
    assert_eq!(m.trace(), m.total());
    for ((p, frame), &label) in eval.probabilities.iter().zip(&train_frames).zip(&eval.labels) {
        assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert_eq!(label, frame.label);
    }
}

#[test]
fn zero_model_predicts_class_zero() {
    let ds = dataset();
    let test_frames = frames(&ds, &["S02", "S13"]);
    let zero = ModelWeights::zeros(&small_model()).unwrap();
    let eval = evaluate(&zero, &test_frames).unwrap();
    let m = &eval.confusion;
    assert_eq!(m.total() as usize, test_frames.len());
    for (c, row) in m.counts.iter().enumerate() {
        assert_eq!(row[1] + row[2], 0);
        let expected = test_frames.iter().filter(|f| f.label == c).count() as u64;
        assert_eq!(m.row_sum(c), expected);
    }
    assert!((eval.loss - 3f64.ln()).abs() < 1e-12);
}

#[test]
fn reload_reproduces_evaluation_bit_exactly() {
    let ds = dataset();
    let train_frames = frames(&ds, &["S01", "S12"]);
    let test_frames = frames(&ds, &["S02", "S13"]);
    let init = build_model(&small_model(), &mut Rng::new(6)).unwrap();
    let trained = train(&init, &train_frames, &[], &quick_train(2, 6), |_| {}).unwrap().weights;
    let reloaded = decode_weights(&encode_weights(&trained)).unwrap();
    let (a, b) = (evaluate(&trained, &test_frames).unwrap(), evaluate(&reloaded, &test_frames).unwrap());
    assert_eq!(a, b);
}

#[test]
fn experiment_report_is_consistent() {
    let ds = dataset();
    let split = make_split(&ds, ("S01", "S12"), ("S02", "S13")).unwrap();
    let config = ExperimentConfig {
        model: small_model(),
        train: quick_train(2, 1),
        pipeline: small_pipeline(),
        bench_iters: 5,
    };
    let mut seen = 0;
    let out = run_experiment(&ds, &split, &config, |_| seen += 1).unwrap();
    assert_eq!(seen, 2);
    let r = &out.report;
    assert_eq!(r.epochs.len(), 2);
    assert!(!r.config.denoise);
    for m in [&r.val_metrics, &r.test_metrics] {
        let mean = m.recall.iter().sum::<f64>() / m.recall.len() as f64;
        assert_eq!(m.balanced_accuracy, mean);
        assert_eq!(m.auc.len(), 3);
    }
    assert_eq!(r.confusion_test.total() as usize, r.frames.test);
    let json = serde_json::to_value(r).unwrap();
    validate_report(&json).unwrap();
    for key in ["config", "split", "parameter_count", "epochs", "val_metrics", "test_metrics", "confusion_val", "confusion_test", "roc", "latency"] {
        assert!(json.get(key).is_some(), "{key}");
    }
    assert_eq!(json["report_version"], 1);
    assert_eq!(json["config"]["classes"][2]["activity"], "gait");

    let mut broken = json.clone();
    broken["val_metrics"]["accuracy"] = serde_json::json!(140.0);
    assert!(validate_report(&broken).is_err());

    let denoised = ExperimentConfig {
        pipeline: PipelineConfig {
            denoise: limbnet::pipeline::DenoiseConfig {
                enabled: true,
                levels: 3,
                ..Default::default()
            },
            ..small_pipeline()
        },
        ..config
    };
    let d = run_experiment(&ds, &split, &denoised, |_| {}).unwrap();
    assert!(d.report.config.denoise);
    assert_eq!(d.report.frames, r.frames);
}

#[test]
fn latency_single_sample_and_monotone() {
    let big = build_model(&ModelConfig::default(), &mut Rng::new(1)).unwrap();
    let one = latency_benchmark(&big, 1, 0, &mut Rng::new(1)).unwrap();
    assert_eq!(one.p50_ms, one.mean_ms);
    assert_eq!(one.p99_ms, one.mean_ms);
    assert!(latency_benchmark(&big, 0, 0, &mut Rng::new(1)).is_err());

    let tiny_cfg = ModelConfig {
        conv: vec![ConvSpec::new(5, 2), ConvSpec::new(3, 2), ConvSpec::new(3, 1)],
        attention_dim: 8,
        dense_hidden: 10,
        ..ModelConfig::default()
    };
    let tiny = build_model(&tiny_cfg, &mut Rng::new(1)).unwrap();
    let t_big = latency_benchmark(&big, 300, 30, &mut Rng::new(2)).unwrap();
    let t_tiny = latency_benchmark(&tiny, 300, 30, &mut Rng::new(2)).unwrap();
    assert!(t_tiny.mean_ms < t_big.mean_ms, "{} vs {}", t_tiny.mean_ms, t_big.mean_ms);
    assert!(t_big.host.logical_cpus >= 1);
}

/// Fraction of (positive, negative) pairs ranked correctly, ties worth ½.
fn pairwise_auc(scores: &[f64], labels: &[usize], class: usize) -> f64 {
    let (mut good, mut pairs) = (0.0, 0.0);
    for (i, &si) in scores.iter().enumerate() {
        for (j, &sj) in scores.iter().enumerate() {
            if labels[i] == class && labels[j] != class {
                pairs += 1.0;
                good += if si > sj {
                    1.0
                } else if si == sj {
                    0.5
                } else {
                    0.0
                };
            }
        }
    }
    good / pairs
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn auc_matches_pairwise_oracle(
        data in prop::collection::vec((0u8..20, 0usize..3), 2..100),
        class in 0usize..3,
    ) {
        // coarse scores make ties common
        let scores: Vec<f64> = data.iter().map(|(s, _)| f64::from(*s) / 20.0).collect();
        let labels: Vec<usize> = data.iter().map(|(_, l)| *l).collect();
        let has_pos = labels.contains(&class);
        let has_neg = labels.iter().any(|&l| l != class);
        match roc_auc(&scores, &labels, class) {
            Ok(curve) => {
                prop_assert!(has_pos && has_neg);
                prop_assert!((curve.auc - pairwise_auc(&scores, &labels, class)).abs() <= 1e-9);
                let first = &curve.points[0];
                let last = curve.points.last().unwrap();
                prop_assert_eq!((first.fpr, first.tpr), (0.0, 0.0));
                prop_assert_eq!((last.fpr, last.tpr), (1.0, 1.0));
                for w in curve.points.windows(2) {
                    prop_assert!(w[1].fpr >= w[0].fpr && w[1].tpr >= w[0].tpr);
                }
            }
            Err(_) => prop_assert!(!(has_pos && has_neg)),
        }
    }

    #[test]
    fn metrics_invariants(counts in prop::collection::vec(0u64..500, 9)) {
        let m = ConfusionMatrix::from_counts(counts.chunks(3).map(<[u64]>::to_vec).collect()).unwrap();
        match metrics_from_confusion(&m) {
            Ok(r) => {
                let mean = r.recall.iter().sum::<f64>() / 3.0;
                prop_assert_eq!(r.balanced_accuracy, mean);
                for v in r.precision.iter().chain(&r.recall).chain(&r.f1).chain([&r.accuracy]) {
                    prop_assert!((0.0..=100.0).contains(v));
                }
            }
            Err(_) => prop_assert_eq!(m.total(), 0),
        }
    }
}
