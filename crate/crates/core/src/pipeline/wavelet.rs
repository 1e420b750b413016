//! Periodized orthogonal discrete wavelet transform and universal-threshold
//! denoising.

use serde::{Deserialize, Serialize};

use super::PipelineError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Wavelet {
    Haar,
    /// Daubechies, 4 vanishing moments (8 taps).
    Db4,
}

const HAAR: [f64; 2] = [std::f64::consts::FRAC_1_SQRT_2, std::f64::consts::FRAC_1_SQRT_2];

const DB4: [f64; 8] = [
    0.230_377_813_308_896_5,
    0.714_846_570_552_915_4,
    0.630_880_767_929_858_7,
    -0.027_983_769_416_859_9,
    -0.187_034_811_719_093_1,
    0.030_841_381_835_560_7,
    0.032_883_011_666_885_2,
    -0.010_597_401_785_069_0,
];

impl Wavelet {
    /// Scaling (low-pass) filter.
    pub fn lowpass(self) -> &'static [f64] {
        match self {
            Wavelet::Haar => &HAAR,
            Wavelet::Db4 => &DB4,
        }
    }

    /// Wavelet (high-pass) filter: `g[n] = (-1)^n h[L-1-n]`.
    pub fn highpass(self) -> Vec<f64> {
        let h = self.lowpass();
        let len = h.len();
        (0..len)
            .map(|n| if n % 2 == 0 { h[len - 1 - n] } else { -h[len - 1 - n] })
            .collect()
    }
}

impl std::str::FromStr for Wavelet {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "haar" | "db1" => Ok(Wavelet::Haar),
            "db4" => Ok(Wavelet::Db4),
            other => Err(format!("unknown wavelet \"{other}\"")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ThresholdRule {
    UniversalSoft,
    UniversalHard,
}

impl std::str::FromStr for ThresholdRule {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "universal-soft" | "soft" => Ok(ThresholdRule::UniversalSoft),
            "universal-hard" | "hard" => Ok(ThresholdRule::UniversalHard),
            other => Err(format!("unknown threshold rule \"{other}\"")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DenoiseConfig {
    pub enabled: bool,
    pub wavelet: Wavelet,
    pub levels: usize,
    pub threshold_rule: ThresholdRule,
}

impl Default for DenoiseConfig {
    fn default() -> Self {
        Self {
            enabled: false,
            wavelet: Wavelet::Db4,
            levels: 4,
            threshold_rule: ThresholdRule::UniversalSoft,
        }
    }
}

/// Multi-level decomposition. `details[0]` is the finest level.
#[derive(Debug, Clone, PartialEq)]
pub struct Pyramid {
    pub wavelet: Wavelet,
    pub approx: Vec<f64>,
    pub details: Vec<Vec<f64>>,
    /// Signal length before periodic extension.
    pub original_len: usize,
}

fn analysis_step(x: &[f64], h: &[f64], g: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let n = x.len();
    let half = n / 2;
    let mut a = vec![0.0; half];
    let mut d = vec![0.0; half];
    for k in 0..half {
        for (tap, (hv, gv)) in h.iter().zip(g).enumerate() {
            let v = x[(2 * k + tap) % n];
            a[k] += hv * v;
            d[k] += gv * v;
        }
    }
    (a, d)
}

fn synthesis_step(a: &[f64], d: &[f64], h: &[f64], g: &[f64]) -> Vec<f64> {
    let n = 2 * a.len();
    let mut x = vec![0.0; n];
    for k in 0..a.len() {
        for (tap, (hv, gv)) in h.iter().zip(g).enumerate() {
            x[(2 * k + tap) % n] += hv * a[k] + gv * d[k];
        }
    }
    x
}

/// Decomposes `signal` over `levels` levels. Lengths that are not a multiple
/// of `2^levels` are first extended periodically.
pub fn dwt_forward(signal: &[f64], wavelet: Wavelet, levels: usize) -> Result<Pyramid, PipelineError> {
    let n = signal.len();
    if levels == 0 || levels >= usize::BITS as usize || (1usize << levels) > n {
        return Err(PipelineError::InvalidLevels { levels, len: n });
    }
    let block = 1usize << levels;
    let padded_len = n.div_ceil(block) * block;
    let mut current: Vec<f64> = (0..padded_len).map(|i| signal[i % n]).collect();
    let h = wavelet.lowpass();
    let g = wavelet.highpass();
    let mut details = Vec::with_capacity(levels);
    for _ in 0..levels {
        let (a, d) = analysis_step(&current, h, &g);
        details.push(d);
        current = a;
    }
    Ok(Pyramid {
        wavelet,
        approx: current,
        details,
        original_len: n,
    })
}

pub fn dwt_inverse(pyramid: &Pyramid) -> Result<Vec<f64>, PipelineError> {
    let h = pyramid.wavelet.lowpass();
    let g = pyramid.wavelet.highpass();
    let mut current = pyramid.approx.clone();
    for d in pyramid.details.iter().rev() {
        if d.len() != current.len() {
            return Err(PipelineError::MalformedPyramid(format!(
                "detail level of length {} against approximation of length {}",
                d.len(),
                current.len()
            )));
        }
        current = synthesis_step(&current, d, h, &g);
    }
    if pyramid.original_len > current.len() {
        return Err(PipelineError::MalformedPyramid(format!(
            "original length {} exceeds reconstructed length {}",
            pyramid.original_len,
            current.len()
        )));
    }
    current.truncate(pyramid.original_len);
    Ok(current)
}

fn median(values: &mut [f64]) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    values.sort_by(f64::total_cmp);
    let mid = values.len() / 2;
    if values.len() % 2 == 1 {
        values[mid]
    } else {
        0.5 * (values[mid - 1] + values[mid])
    }
}

/// Noise level estimate from the finest detail band:
/// `median(|d|) / 0.6745`.
pub fn noise_sigma(finest_detail: &[f64]) -> f64 {
    let mut abs: Vec<f64> = finest_detail.iter().map(|v| v.abs()).collect();
    median(&mut abs) / 0.6745
}

/// Thresholds every detail band at `σ·√(2·ln N)` and reconstructs.
pub fn wavelet_denoise(signal: &[f64], config: &DenoiseConfig) -> Result<Vec<f64>, PipelineError> {
    let mut pyramid = dwt_forward(signal, config.wavelet, config.levels)?;
    let sigma = noise_sigma(&pyramid.details[0]);
    let threshold = sigma * (2.0 * (signal.len() as f64).ln()).sqrt();
    for band in &mut pyramid.details {
        for c in band.iter_mut() {
            *c = match config.threshold_rule {
                ThresholdRule::UniversalSoft => c.signum() * (c.abs() - threshold).max(0.0),
                ThresholdRule::UniversalHard => {
                    if c.abs() > threshold {
                        *c
                    } else {
                        0.0
                    }
                }
            };
        }
    }
    dwt_inverse(&pyramid)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn filters_are_orthonormal() {
        for w in [Wavelet::Haar, Wavelet::Db4] {
            let h = w.lowpass();
            let g = w.highpass();
            let sum: f64 = h.iter().sum();
            assert!((sum - std::f64::consts::SQRT_2).abs() < 1e-12);
            for shift in (0..h.len()).step_by(2) {
                let hh: f64 = (shift..h.len()).map(|n| h[n] * h[n - shift]).sum();
                let hg: f64 = (shift..h.len()).map(|n| h[n] * g[n - shift]).sum();
                let expected = if shift == 0 { 1.0 } else { 0.0 };
                assert!((hh - expected).abs() < 1e-12, "{w:?} shift {shift}");
                assert!(hg.abs() < 1e-12);
            }
        }
    }

    #[test]
    fn db4_has_four_vanishing_moments() {
        let g = Wavelet::Db4.highpass();
        for p in 0..4 {
            let m: f64 = g.iter().enumerate().map(|(n, v)| (n as f64).powi(p) * v).sum();
            assert!(m.abs() < 1e-9, "moment {p}: {m}");
        }
    }

    #[test]
    fn zero_signal() {
        let p = dwt_forward(&[0.0; 64], Wavelet::Db4, 3).unwrap();
        assert!(p.approx.iter().chain(p.details.iter().flatten()).all(|&c| c == 0.0));
        let cfg = DenoiseConfig::default();
        assert!(wavelet_denoise(&[0.0; 64], &cfg).unwrap().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn constant_has_no_detail() {
        let p = dwt_forward(&[2.5; 256], Wavelet::Db4, 4).unwrap();
        for band in &p.details {
            assert!(band.iter().all(|c| c.abs() < 1e-8));
        }
    }

    #[test]
    fn invalid_levels() {
        assert!(dwt_forward(&[0.0; 8], Wavelet::Haar, 0).is_err());
        assert!(dwt_forward(&[0.0; 8], Wavelet::Haar, 4).is_err());
        assert!(dwt_forward(&[], Wavelet::Haar, 1).is_err());
        assert!(dwt_forward(&[0.0; 8], Wavelet::Haar, 3).is_ok());
    }

    #[test]
    fn odd_length_round_trip() {
        let x: Vec<f64> = (0..77).map(|i| ((i * 37) % 11) as f64 - 5.0).collect();
        let p = dwt_forward(&x, Wavelet::Db4, 3).unwrap();
        assert_eq!(p.approx.len(), 10);
        let y = dwt_inverse(&p).unwrap();
        assert_eq!(y.len(), 77);
        for (a, b) in x.iter().zip(&y) {
            assert!((a - b).abs() < 1e-9);
        }
    }

    #[test]
    fn median_even_odd() {
        assert_eq!(median(&mut [3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(&mut [4.0, 1.0, 2.0, 3.0]), 2.5);
    }
}
