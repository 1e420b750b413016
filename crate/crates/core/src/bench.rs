//! Wall-clock latency of single-window eval-mode inference.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::model::{ModelError, ModelWeights, Mode};
use crate::rng::Rng;
use crate::tensor::Tensor;

#[derive(Debug, thiserror::Error)]
pub enum BenchError {
    #[error("benchmark needs at least one timed iteration")]
    NoIterations,
    #[error(transparent)]
    Model(#[from] ModelError),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HostInfo {
    pub os: String,
    pub arch: String,
    pub logical_cpus: usize,
    pub cpu_model: Option<String>,
}

impl HostInfo {
    pub fn detect() -> Self {
        Self {
            os: std::env::consts::OS.to_string(),
            arch: std::env::consts::ARCH.to_string(),
            logical_cpus: std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1),
            cpu_model: cpu_model(),
        }
    }
}

fn cpu_model() -> Option<String> {
    let info = std::fs::read_to_string("/proc/cpuinfo").ok()?;
    info.lines()
        .find(|l| l.starts_with("model name"))
        .and_then(|l| l.split_once(':'))
        .map(|(_, v)| v.trim().to_string())
}

/// Times are in milliseconds per window.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatencyStats {
    pub n_iters: usize,
    pub warmup_iters: usize,
    pub mean_ms: f64,
    pub p50_ms: f64,
    pub p99_ms: f64,
    pub min_ms: f64,
    pub max_ms: f64,
    pub host: HostInfo,
}

/// Nearest-rank percentile of sorted samples.
fn percentile(sorted: &[f64], p: f64) -> f64 {
    let rank = ((p / 100.0) * sorted.len() as f64).ceil() as usize;
    sorted[rank.clamp(1, sorted.len()) - 1]
}

/// Times `n_iters` eval-mode forward passes on random windows after
/// `warmup_iters` untimed ones. Inputs are drawn before timing starts.
pub fn latency_benchmark(
    weights: &ModelWeights,
    n_iters: usize,
    warmup_iters: usize,
    rng: &mut Rng,
) -> Result<LatencyStats, BenchError> {
    if n_iters == 0 {
        return Err(BenchError::NoIterations);
    }
    let shape = weights.config.input_shape();
    let windows: Vec<Tensor> = (0..n_iters.min(64))
        .map(|_| {
            let data = (0..shape[0] * shape[1]).map(|_| rng.normal()).collect();
            Tensor::new(shape.to_vec(), data).expect("input-shaped buffer")
        })
        .collect();
    let mut scratch = Rng::new(0);
    for i in 0..warmup_iters {
        weights.forward(&windows[i % windows.len()], Mode::Eval, &mut scratch)?;
    }
    let mut times = Vec::with_capacity(n_iters);
    for i in 0..n_iters {
        let window = &windows[i % windows.len()];
        let start = Instant::now();
        let out = weights.forward(window, Mode::Eval, &mut scratch)?;
        times.push(start.elapsed().as_secs_f64() * 1e3);
        std::hint::black_box(out);
    }
    let mean_ms = times.iter().sum::<f64>() / n_iters as f64;
    times.sort_by(f64::total_cmp);
    Ok(LatencyStats {
        n_iters,
        warmup_iters,
        mean_ms,
        p50_ms: percentile(&times, 50.0),
        p99_ms: percentile(&times, 99.0),
        min_ms: times[0],
        max_ms: times[n_iters - 1],
        host: HostInfo::detect(),
    })
}
