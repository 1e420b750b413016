//! sEMG recordings and subject metadata.
//!
//! Recordings are 4-channel captures at 1000 Hz with rows ordered
//! `[VM, ST, BF, RF]` (vastus medialis, semitendinosus, biceps femoris,
//! rectus femoris). The band-pass filtering done at acquisition time is
//! assumed to have been applied already; nothing here re-filters.

mod csv_io;
mod manifest;
mod synthetic;

use std::collections::BTreeMap;
use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

pub use csv_io::{
    convert_csv, load_recording, load_recording_with_meta, parse_recording_csv, write_recording,
    ColumnMap, RecordingSamples,
};
pub use manifest::{load_dataset, parse_manifest, write_dataset, LoadOptions, ManifestEntry};
pub use synthetic::{generate_synthetic_dataset, ClassSignature, SyntheticParams};

use crate::tensor::Tensor;

pub const SAMPLE_RATE_HZ: u32 = 1000;
pub const N_CHANNELS: usize = 4;
pub const CHANNEL_NAMES: [&str; N_CHANNELS] = ["vm", "st", "bf", "rf"];
/// Subjects in the full cohort (11 healthy, 11 with knee abnormalities).
pub const FULL_COHORT_SUBJECTS: usize = 22;

#[derive(Debug, thiserror::Error)]
pub enum DatasetError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("input is not valid UTF-8")]
    NotUtf8,
    #[error("line {line}: {message}")]
    Csv { line: u64, message: String },
    #[error("missing column \"{0}\"")]
    MissingColumn(String),
    #[error("line {line}: column \"{column}\": \"{value}\" is not a finite number")]
    NonNumeric {
        line: u64,
        column: String,
        value: String,
    },
    #[error("line {line}: expected {expected} fields, found {found}")]
    RowWidth {
        line: u64,
        expected: usize,
        found: usize,
    },
    #[error("line {line}: sample rate {found} Hz declared, only {SAMPLE_RATE_HZ} Hz is supported")]
    SampleRate { line: u64, found: String },
    #[error("recording has no samples")]
    EmptyRecording,
    #[error("line {line}: unknown activity \"{value}\"")]
    UnknownActivity { line: u64, value: String },
    #[error("line {line}: unknown cohort \"{value}\"")]
    UnknownCohort { line: u64, value: String },
    #[error("line {line}: unknown abnormality \"{value}\"")]
    UnknownAbnormality { line: u64, value: String },
    #[error("invalid subject metadata: {0}")]
    InvalidMeta(String),
    #[error("line {line}: duplicate recording for subject {subject}, activity {activity}")]
    Duplicate {
        line: u64,
        subject: String,
        activity: Activity,
    },
    #[error("line {line}: subject {subject} listed with conflicting cohorts")]
    CohortConflict { line: u64, subject: String },
    #[error("incomplete dataset: {0}")]
    Incomplete(String),
    #[error("cannot derive metadata from file name \"{0}\" (expected <subject>_<cohort>_<activity>.csv)")]
    FileName(String),
    #[error("invalid parameters: {0}")]
    InvalidParams(String),
    #[error("{path}: {source}")]
    InFile {
        path: PathBuf,
        #[source]
        source: Box<DatasetError>,
    },
}

impl DatasetError {
    pub(crate) fn in_file(self, path: &std::path::Path) -> Self {
        DatasetError::InFile {
            path: path.to_path_buf(),
            source: Box::new(self),
        }
    }

    /// The underlying error with any file context stripped.
    pub fn root(&self) -> &DatasetError {
        match self {
            DatasetError::InFile { source, .. } => source.root(),
            other => other,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Cohort {
    Healthy,
    Abnormal,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Abnormality {
    None,
    Acl,
    Meniscus,
    Sciatic,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activity {
    Gait,
    StandingKneeFlexion,
    SittingKneeExtension,
}

impl Activity {
    pub const ALL: [Activity; 3] = [
        Activity::StandingKneeFlexion,
        Activity::SittingKneeExtension,
        Activity::Gait,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Activity::Gait => "gait",
            Activity::StandingKneeFlexion => "standing_knee_flexion",
            Activity::SittingKneeExtension => "sitting_knee_extension",
        }
    }
}

impl fmt::Display for Activity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Activity {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim().to_ascii_lowercase();
        Activity::ALL
            .into_iter()
            .find(|a| a.as_str() == s)
            .ok_or_else(|| format!("unknown activity \"{s}\""))
    }
}

impl Cohort {
    pub fn as_str(self) -> &'static str {
        match self {
            Cohort::Healthy => "healthy",
            Cohort::Abnormal => "abnormal",
        }
    }
}

impl fmt::Display for Cohort {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Cohort {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "healthy" => Ok(Cohort::Healthy),
            "abnormal" => Ok(Cohort::Abnormal),
            other => Err(format!("unknown cohort \"{other}\"")),
        }
    }
}

impl Abnormality {
    pub fn as_str(self) -> &'static str {
        match self {
            Abnormality::None => "none",
            Abnormality::Acl => "acl",
            Abnormality::Meniscus => "meniscus",
            Abnormality::Sciatic => "sciatic",
        }
    }
}

impl FromStr for Abnormality {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "" | "none" => Ok(Abnormality::None),
            "acl" => Ok(Abnormality::Acl),
            "meniscus" => Ok(Abnormality::Meniscus),
            "sciatic" => Ok(Abnormality::Sciatic),
            other => Err(format!("unknown abnormality \"{other}\"")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SubjectMeta {
    pub subject_id: String,
    pub cohort: Cohort,
    pub abnormality: Abnormality,
}

impl SubjectMeta {
    pub fn new(
        subject_id: impl Into<String>,
        cohort: Cohort,
        abnormality: Abnormality,
    ) -> Result<Self, DatasetError> {
        let subject_id = subject_id.into();
        if subject_id.trim().is_empty() {
            return Err(DatasetError::InvalidMeta("empty subject id".into()));
        }
        if cohort == Cohort::Healthy && abnormality != Abnormality::None {
            return Err(DatasetError::InvalidMeta(format!(
                "healthy subject {subject_id} cannot have abnormality {}",
                abnormality.as_str()
            )));
        }
        Ok(Self {
            subject_id,
            cohort,
            abnormality,
        })
    }

    pub fn healthy(subject_id: impl Into<String>) -> Self {
        Self::new(subject_id, Cohort::Healthy, Abnormality::None).expect("healthy meta is valid")
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Recording {
    pub meta: SubjectMeta,
    pub activity: Activity,
    pub sample_rate: u32,
    /// `4×N`, rows `[VM, ST, BF, RF]`.
    pub semg: Tensor,
    /// Knee angle in degrees; ingested but not used by the classifier.
    pub knee_angle: Option<Vec<f64>>,
}

impl Recording {
    pub fn new(
        meta: SubjectMeta,
        activity: Activity,
        semg: Tensor,
        knee_angle: Option<Vec<f64>>,
    ) -> Result<Self, DatasetError> {
        if semg.rank() != 2 || semg.dim(0) != N_CHANNELS {
            return Err(DatasetError::InvalidParams(format!(
                "sEMG must be {N_CHANNELS}xN, got {:?}",
                semg.shape()
            )));
        }
        if semg.dim(1) == 0 {
            return Err(DatasetError::EmptyRecording);
        }
        if let Some(angle) = &knee_angle {
            if angle.len() != semg.dim(1) {
                return Err(DatasetError::InvalidParams(format!(
                    "knee angle has {} samples, sEMG has {}",
                    angle.len(),
                    semg.dim(1)
                )));
            }
        }
        Ok(Self {
            meta,
            activity,
            sample_rate: SAMPLE_RATE_HZ,
            semg,
            knee_angle,
        })
    }

    pub fn len(&self) -> usize {
        self.semg.dim(1)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn channel(&self, c: usize) -> &[f64] {
        self.semg.row(c)
    }
}

/// Class index ↔ activity mapping.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelMap {
    classes: Vec<Activity>,
}

impl Default for LabelMap {
    /// 0 = standing with knee flexion, 1 = sitting with knee extension,
    /// 2 = gait.
    fn default() -> Self {
        Self {
            classes: Activity::ALL.to_vec(),
        }
    }
}

impl LabelMap {
    /// `classes[i]` is the activity for class `i`; every activity exactly once.
    pub fn new(classes: Vec<Activity>) -> Result<Self, DatasetError> {
        let mut sorted = classes.clone();
        sorted.sort();
        sorted.dedup();
        if classes.len() != Activity::ALL.len() || sorted.len() != classes.len() {
            return Err(DatasetError::InvalidParams(format!(
                "label map must list each activity exactly once, got {classes:?}"
            )));
        }
        Ok(Self { classes })
    }

    pub fn label(&self, activity: Activity) -> usize {
        self.classes
            .iter()
            .position(|&a| a == activity)
            .expect("label map covers every activity")
    }

    pub fn activity(&self, class: usize) -> Option<Activity> {
        self.classes.get(class).copied()
    }

    pub fn classes(&self) -> &[Activity] {
        &self.classes
    }

    pub fn len(&self) -> usize {
        self.classes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.classes.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub recordings: Vec<Recording>,
    pub label_map: LabelMap,
}

impl Dataset {
    /// Every subject's metadata, keyed by id.
    pub fn subjects(&self) -> BTreeMap<String, SubjectMeta> {
        self.recordings
            .iter()
            .map(|r| (r.meta.subject_id.clone(), r.meta.clone()))
            .collect()
    }
}
