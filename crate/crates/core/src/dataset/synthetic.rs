//! Seeded synthetic cohort with activity-specific, band-limited channel
//! signatures. Used for tests and for exercising the full pipeline without
//! the real recordings.

use std::f64::consts::PI;

use super::{
    Abnormality, Activity, Cohort, Dataset, DatasetError, LabelMap, Recording, SubjectMeta,
    N_CHANNELS, SAMPLE_RATE_HZ,
};
use crate::rng::Rng;
use crate::tensor::Tensor;

/// Per-activity signal model: each channel is a sum of equal-weight
/// sinusoids at `frequencies_hz`, scaled by that channel's amplitude.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassSignature {
    pub activity: Activity,
    pub amplitudes: [f64; N_CHANNELS],
    pub frequencies_hz: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticParams {
    pub n_subjects: usize,
    pub samples_per_recording: usize,
    /// Standard deviation of additive white Gaussian noise.
    pub noise_amplitude: f64,
    /// Per-subject, per-channel gain drawn uniformly from `1 ± subject_variability`.
    pub subject_variability: f64,
    pub signatures: Vec<ClassSignature>,
}

impl Default for SyntheticParams {
    fn default() -> Self {
        // Frequencies are multiples of 10 Hz, so noise-free signals repeat
        // every 100 samples.
        Self {
            n_subjects: 22,
            samples_per_recording: 3000,
            noise_amplitude: 0.3,
            subject_variability: 0.15,
            signatures: vec![
                ClassSignature {
                    activity: Activity::StandingKneeFlexion,
                    amplitudes: [0.3, 1.0, 0.9, 0.2],
                    frequencies_hz: vec![30.0, 40.0, 50.0],
                },
                ClassSignature {
                    activity: Activity::SittingKneeExtension,
                    amplitudes: [1.0, 0.2, 0.25, 0.9],
                    frequencies_hz: vec![60.0, 70.0, 80.0],
                },
                ClassSignature {
                    activity: Activity::Gait,
                    amplitudes: [0.7, 0.6, 0.7, 0.6],
                    frequencies_hz: vec![100.0, 120.0, 140.0],
                },
            ],
        }
    }
}

impl SyntheticParams {
    fn validate(&self) -> Result<(), DatasetError> {
        let bad = |m: String| Err(DatasetError::InvalidParams(m));
        if self.n_subjects < 3 {
            return bad(format!("need at least 3 subjects, got {}", self.n_subjects));
        }
        if self.samples_per_recording == 0 {
            return bad("samples_per_recording must be positive".into());
        }
        if !(self.noise_amplitude >= 0.0 && self.noise_amplitude.is_finite()) {
            return bad(format!("noise amplitude {}", self.noise_amplitude));
        }
        if !(0.0..1.0).contains(&self.subject_variability) {
            return bad(format!("subject variability {}", self.subject_variability));
        }
        for a in Activity::ALL {
            let n = self.signatures.iter().filter(|s| s.activity == a).count();
            if n != 1 {
                return bad(format!("{n} signatures for {a}, expected exactly one"));
            }
        }
        if self
            .signatures
            .iter()
            .any(|s| s.frequencies_hz.is_empty() || s.amplitudes.iter().chain(&s.frequencies_hz).any(|v| !v.is_finite()))
        {
            return bad("signatures need finite amplitudes and at least one frequency".into());
        }
        Ok(())
    }
}

/// Subject `i` of `n`: the first half (rounded up) healthy, the rest abnormal
/// with abnormalities in roughly the full cohort's 6:4:1 ACL/meniscus/sciatic
/// proportion.
fn subject_meta(i: usize, n: usize) -> SubjectMeta {
    let n_healthy = n.div_ceil(2);
    let id = format!("S{:02}", i + 1);
    if i < n_healthy {
        return SubjectMeta::healthy(id);
    }
    let k = i - n_healthy;
    let n_abnormal = n - n_healthy;
    let abnormality = if k * 11 < n_abnormal * 6 {
        Abnormality::Acl
    } else if k * 11 < n_abnormal * 10 {
        Abnormality::Meniscus
    } else {
        Abnormality::Sciatic
    };
    SubjectMeta::new(id, Cohort::Abnormal, abnormality).expect("abnormal meta is valid")
}

pub fn generate_synthetic_dataset(params: &SyntheticParams, rng: &mut Rng) -> Result<Dataset, DatasetError> {
    params.validate()?;
    let n = params.samples_per_recording;
    let dt = 1.0 / f64::from(SAMPLE_RATE_HZ);
    let mut recordings = Vec::with_capacity(params.n_subjects * Activity::ALL.len());
    for s in 0..params.n_subjects {
        let meta = subject_meta(s, params.n_subjects);
        let gains: Vec<f64> = (0..N_CHANNELS)
            .map(|_| rng.uniform_range(1.0 - params.subject_variability, 1.0 + params.subject_variability))
            .collect();
        for activity in Activity::ALL {
            let sig = params
                .signatures
                .iter()
                .find(|sig| sig.activity == activity)
                .expect("validated");
            let norm = (sig.frequencies_hz.len() as f64).sqrt();
            let mut data = Vec::with_capacity(N_CHANNELS * n);
            for (&base, &gain) in sig.amplitudes.iter().zip(&gains) {
                let phases: Vec<f64> = sig.frequencies_hz.iter().map(|_| rng.uniform_range(0.0, 2.0 * PI)).collect();
                let amp = base * gain / norm;
                for t in 0..n {
                    let time = t as f64 * dt;
                    let clean: f64 = sig
                        .frequencies_hz
                        .iter()
                        .zip(&phases)
                        .map(|(f, p)| (2.0 * PI * f * time + p).sin())
                        .sum();
                    let noise = if params.noise_amplitude > 0.0 {
                        params.noise_amplitude * rng.normal()
                    } else {
                        0.0
                    };
                    data.push(amp * clean + noise);
                }
            }
            let semg = Tensor::new(vec![N_CHANNELS, n], data).expect("4×n buffer");
            recordings.push(Recording::new(meta.clone(), activity, semg, None)?);
        }
    }
    Ok(Dataset {
        recordings,
        label_map: LabelMap::default(),
    })
}
