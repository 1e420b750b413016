//! Recordings → labelled window frames, leave-one-subject-out splits,
//! shuffling and optional wavelet denoising.

mod wavelet;

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

pub use wavelet::{
    dwt_forward, dwt_inverse, noise_sigma, wavelet_denoise, DenoiseConfig, Pyramid, ThresholdRule,
    Wavelet,
};

use crate::dataset::{Cohort, Dataset, LabelMap, Recording};
use crate::rng::Rng;
use crate::tensor::Tensor;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum PipelineError {
    #[error("window length and stride must be positive (window {window}, stride {stride})")]
    InvalidWindowing { window: usize, stride: usize },
    #[error("invalid decomposition: {levels} levels for a signal of length {len}")]
    InvalidLevels { levels: usize, len: usize },
    #[error("malformed coefficient pyramid: {0}")]
    MalformedPyramid(String),
    #[error("unknown subject \"{0}\"")]
    UnknownSubject(String),
    #[error("subject \"{0}\" appears more than once in the validation/test pairs")]
    Overlap(String),
    #[error("subject \"{subject}\" is {actual}, but was given as the {expected} member of a pair")]
    CohortMismatch {
        subject: String,
        expected: Cohort,
        actual: Cohort,
    },
}

/// One network input: all channels over `window_len` samples.
#[derive(Debug, Clone, PartialEq)]
pub struct WindowFrame {
    /// `C×window_len`.
    pub data: Tensor,
    pub label: usize,
    pub subject_id: String,
    /// Start sample within the source recording.
    pub source_offset: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Windows {
    pub frames: Vec<WindowFrame>,
    /// Set when the recording was shorter than one window.
    pub too_short: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PipelineConfig {
    pub window_len: usize,
    pub stride: usize,
    pub denoise: DenoiseConfig,
}

impl Default for PipelineConfig {
    /// 256-sample windows with 64 samples shared between neighbours.
    fn default() -> Self {
        Self {
            window_len: 256,
            stride: 192,
            denoise: DenoiseConfig::default(),
        }
    }
}

/// Cuts `recording` into windows starting at `0, stride, 2·stride, …` that
/// fit entirely inside it.
pub fn slide_windows(
    recording: &Recording,
    label: usize,
    window_len: usize,
    stride: usize,
) -> Result<Windows, PipelineError> {
    slide_signal(&recording.semg, &recording.meta.subject_id, label, window_len, stride)
}

fn slide_signal(
    semg: &Tensor,
    subject_id: &str,
    label: usize,
    window_len: usize,
    stride: usize,
) -> Result<Windows, PipelineError> {
    if window_len == 0 || stride == 0 {
        return Err(PipelineError::InvalidWindowing {
            window: window_len,
            stride,
        });
    }
    let (channels, n) = (semg.dim(0), semg.dim(1));
    if n < window_len {
        return Ok(Windows {
            frames: Vec::new(),
            too_short: true,
        });
    }
    let count = (n - window_len) / stride + 1;
    let frames = (0..count)
        .map(|k| {
            let start = k * stride;
            let data = (0..channels)
                .flat_map(|c| semg.row(c)[start..start + window_len].iter().copied())
                .collect();
            WindowFrame {
                data: Tensor::new(vec![channels, window_len], data).expect("C×window buffer"),
                label,
                subject_id: subject_id.to_string(),
                source_offset: start,
            }
        })
        .collect();
    Ok(Windows {
        frames,
        too_short: false,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Partition {
    Train,
    Val,
    Test,
}

impl std::str::FromStr for Partition {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "train" => Ok(Partition::Train),
            "val" | "validation" => Ok(Partition::Val),
            "test" => Ok(Partition::Test),
            other => Err(format!("unknown partition \"{other}\"")),
        }
    }
}

/// Subject-level assignment to train/validation/test.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitPlan {
    pub train_subjects: BTreeSet<String>,
    pub val_subjects: BTreeSet<String>,
    pub test_subjects: BTreeSet<String>,
}

impl SplitPlan {
    pub fn subjects(&self, partition: Partition) -> &BTreeSet<String> {
        match partition {
            Partition::Train => &self.train_subjects,
            Partition::Val => &self.val_subjects,
            Partition::Test => &self.test_subjects,
        }
    }
}

/// Holds out one (healthy, abnormal) pair for validation and another for
/// testing; every other subject trains.
pub fn make_split(
    dataset: &Dataset,
    val_pair: (&str, &str),
    test_pair: (&str, &str),
) -> Result<SplitPlan, PipelineError> {
    let subjects = dataset.subjects();
    let named = [val_pair.0, val_pair.1, test_pair.0, test_pair.1];
    let mut seen = BTreeSet::new();
    for id in named {
        if !seen.insert(id) {
            return Err(PipelineError::Overlap(id.to_string()));
        }
    }
    for (id, expected) in [
        (val_pair.0, Cohort::Healthy),
        (val_pair.1, Cohort::Abnormal),
        (test_pair.0, Cohort::Healthy),
        (test_pair.1, Cohort::Abnormal),
    ] {
        let meta = subjects
            .get(id)
            .ok_or_else(|| PipelineError::UnknownSubject(id.to_string()))?;
        if meta.cohort != expected {
            return Err(PipelineError::CohortMismatch {
                subject: id.to_string(),
                expected,
                actual: meta.cohort,
            });
        }
    }
    let pair = |(a, b): (&str, &str)| BTreeSet::from([a.to_string(), b.to_string()]);
    Ok(SplitPlan {
        train_subjects: subjects
            .keys()
            .filter(|id| !seen.contains(id.as_str()))
            .cloned()
            .collect(),
        val_subjects: pair(val_pair),
        test_subjects: pair(test_pair),
    })
}

/// Seeded Fisher–Yates permutation.
pub fn shuffle_frames(mut frames: Vec<WindowFrame>, rng: &mut Rng) -> Vec<WindowFrame> {
    rng.shuffle(&mut frames);
    frames
}

#[derive(Debug, Clone, PartialEq)]
pub struct FrameSet {
    pub frames: Vec<WindowFrame>,
    /// Subject/activity of recordings that yielded no window.
    pub short_recordings: Vec<String>,
}

/// Frames for every recording of the given subjects, in dataset order.
/// Denoising, when enabled, runs per channel over the whole recording before
/// windowing.
pub fn build_frames(
    dataset: &Dataset,
    subjects: &BTreeSet<String>,
    config: &PipelineConfig,
) -> Result<FrameSet, PipelineError> {
    build_frames_with_labels(dataset, &dataset.label_map, subjects, config)
}

pub fn build_frames_with_labels(
    dataset: &Dataset,
    label_map: &LabelMap,
    subjects: &BTreeSet<String>,
    config: &PipelineConfig,
) -> Result<FrameSet, PipelineError> {
    let mut frames = Vec::new();
    let mut short_recordings = Vec::new();
    for rec in dataset
        .recordings
        .iter()
        .filter(|r| subjects.contains(&r.meta.subject_id))
    {
        let label = label_map.label(rec.activity);
        let windows = if config.denoise.enabled && rec.len() >= config.window_len {
            let mut data = Vec::with_capacity(rec.semg.len());
            for c in 0..rec.semg.dim(0) {
                data.extend(wavelet_denoise(rec.channel(c), &config.denoise)?);
            }
            let clean = Tensor::new(rec.semg.shape().to_vec(), data).expect("same shape");
            slide_signal(&clean, &rec.meta.subject_id, label, config.window_len, config.stride)?
        } else {
            slide_windows(rec, label, config.window_len, config.stride)?
        };
        if windows.too_short {
            short_recordings.push(format!("{}/{}", rec.meta.subject_id, rec.activity));
        }
        frames.extend(windows.frames);
    }
    Ok(FrameSet {
        frames,
        short_recordings,
    })
}
