//! Binary weight file.
//!
//! Little-endian layout:
//!
//! ```text
//! magic          8 bytes  "LIMBNET1"
//! version        u32      1
//! window_len     u32
//! n_channels     u32
//! n_conv         u32
//! (kernel, filters) u32 pairs, n_conv of them
//! pool_window    u32
//! padding        u32      0 = valid, 1 = same
//! attention_dim  u32
//! n_heads        u32
//! dense_hidden   u32
//! n_classes      u32
//! dropout_ppm    u32      dropout rate in parts per million
//! seed_lo        u32
//! seed_hi        u32
//! params         f64 × parameter_count, canonical block order
//! crc32          u32      over every preceding byte
//! ```

use std::fs;
use std::io;
use std::path::Path;

use super::{parameter_count, ConvSpec, ModelConfig, ModelWeights};
use crate::nn::Padding;
use crate::tensor::Tensor;

pub const MAGIC: &[u8; 8] = b"LIMBNET1";
pub const FORMAT_VERSION: u32 = 1;

/// Upper bound on decoded conv layers; guards allocation on hostile input.
const MAX_CONV_LAYERS: u32 = 64;

#[derive(Debug, thiserror::Error)]
pub enum WeightFileError {
    #[error("i/o error: {0}")]
    Io(#[from] io::Error),
    #[error("not a weight file (bad magic)")]
    BadMagic,
    #[error("unsupported weight file version {0} (expected {FORMAT_VERSION})")]
    UnsupportedVersion(u32),
    #[error("header truncated")]
    Truncated,
    #[error("parameter count mismatch: config needs {expected}, file holds {found}")]
    CountMismatch { expected: usize, found: usize },
    #[error("checksum mismatch: stored {stored:#010x}, computed {computed:#010x}")]
    Checksum { stored: u32, computed: u32 },
    #[error("invalid config in header: {0}")]
    InvalidConfig(String),
    #[error("parameter {0} is not finite")]
    NonFinite(usize),
}

fn dropout_ppm(rate: f64) -> u32 {
    (rate * 1e6).round() as u32
}

pub fn encode_weights(weights: &ModelWeights) -> Vec<u8> {
    let cfg = &weights.config;
    let mut header: Vec<u32> = vec![FORMAT_VERSION, cfg.window_len as u32, cfg.n_channels as u32];
    header.push(cfg.conv.len() as u32);
    for spec in &cfg.conv {
        header.push(spec.kernel as u32);
        header.push(spec.filters as u32);
    }
    header.extend([
        cfg.pool_window as u32,
        match cfg.padding {
            Padding::Valid => 0,
            Padding::Same => 1,
        },
        cfg.attention_dim as u32,
        cfg.n_attention_heads as u32,
        cfg.dense_hidden as u32,
        cfg.n_classes as u32,
        dropout_ppm(cfg.dropout_rate),
        cfg.seed as u32,
        (cfg.seed >> 32) as u32,
    ]);

    let mut out = Vec::with_capacity(8 + 4 * header.len() + 8 * weights.scalar_count() + 4);
    out.extend_from_slice(MAGIC);
    for v in header {
        out.extend_from_slice(&v.to_le_bytes());
    }
    for p in &weights.params {
        for x in p.data() {
            out.extend_from_slice(&x.to_le_bytes());
        }
    }
    let crc = crc32fast::hash(&out);
    out.extend_from_slice(&crc.to_le_bytes());
    out
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl Reader<'_> {
    fn u32(&mut self) -> Result<u32, WeightFileError> {
        let chunk = self
            .bytes
            .get(self.pos..self.pos + 4)
            .ok_or(WeightFileError::Truncated)?;
        self.pos += 4;
        Ok(u32::from_le_bytes(chunk.try_into().expect("4-byte slice")))
    }

    fn usize(&mut self) -> Result<usize, WeightFileError> {
        self.u32().map(|v| v as usize)
    }
}

pub fn decode_weights(bytes: &[u8]) -> Result<ModelWeights, WeightFileError> {
    let magic_len = bytes.len().min(MAGIC.len());
    if bytes[..magic_len] != MAGIC[..magic_len] {
        return Err(WeightFileError::BadMagic);
    }
    if bytes.len() < MAGIC.len() {
        return Err(WeightFileError::Truncated);
    }
    let mut r = Reader {
        bytes,
        pos: MAGIC.len(),
    };
    let version = r.u32()?;
    if version != FORMAT_VERSION {
        return Err(WeightFileError::UnsupportedVersion(version));
    }
    let window_len = r.usize()?;
    let n_channels = r.usize()?;
    let n_conv = r.u32()?;
    if n_conv > MAX_CONV_LAYERS {
        return Err(WeightFileError::InvalidConfig(format!("{n_conv} conv layers")));
    }
    let mut conv = Vec::with_capacity(n_conv as usize);
    for _ in 0..n_conv {
        let kernel = r.usize()?;
        let filters = r.usize()?;
        conv.push(ConvSpec { kernel, filters });
    }
    let pool_window = r.usize()?;
    let padding = match r.u32()? {
        0 => Padding::Valid,
        1 => Padding::Same,
        other => return Err(WeightFileError::InvalidConfig(format!("padding code {other}"))),
    };
    let attention_dim = r.usize()?;
    let n_attention_heads = r.usize()?;
    let dense_hidden = r.usize()?;
    let n_classes = r.usize()?;
    let dropout_rate = f64::from(r.u32()?) / 1e6;
    let seed = u64::from(r.u32()?) | (u64::from(r.u32()?) << 32);
    let config = ModelConfig {
        window_len,
        n_channels,
        conv,
        pool_window,
        padding,
        attention_dim,
        n_attention_heads,
        dense_hidden,
        n_classes,
        dropout_rate,
        seed,
    };
    let expected = checked_parameter_count(&config)?;

    let body = &bytes[r.pos..];
    let found_bytes = body.len().saturating_sub(4);
    if body.len() < 4 || !found_bytes.is_multiple_of(8) || found_bytes / 8 != expected {
        return Err(WeightFileError::CountMismatch {
            expected,
            found: found_bytes / 8,
        });
    }
    let crc_at = bytes.len() - 4;
    let stored = u32::from_le_bytes(bytes[crc_at..].try_into().expect("4-byte slice"));
    let computed = crc32fast::hash(&bytes[..crc_at]);
    if stored != computed {
        return Err(WeightFileError::Checksum { stored, computed });
    }

    let mut values = body[..found_bytes]
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")));
    let mut params = Vec::new();
    let mut offset = 0;
    for (_, shape) in config.layout() {
        let n: usize = shape.iter().product();
        let data: Vec<f64> = values.by_ref().take(n).collect();
        if let Some(bad) = data.iter().position(|x| !x.is_finite()) {
            return Err(WeightFileError::NonFinite(offset + bad));
        }
        offset += n;
        params.push(Tensor::new(shape, data).expect("layout shape matches count"));
    }
    Ok(ModelWeights { config, params })
}

/// Validates the decoded config and sizes it without overflowing on
/// adversarial dimensions.
fn checked_parameter_count(config: &ModelConfig) -> Result<usize, WeightFileError> {
    // Every dimension that multiplies into a block size must stay small enough
    // that the closed-form count fits comfortably in usize.
    const LIMIT: usize = 1 << 20;
    let dims = [
        config.window_len,
        config.n_channels,
        config.pool_window,
        config.attention_dim,
        config.n_attention_heads,
        config.dense_hidden,
        config.n_classes,
    ];
    if dims.iter().chain(config.conv.iter().flat_map(|c| [&c.kernel, &c.filters])).any(|&d| d > LIMIT) {
        return Err(WeightFileError::InvalidConfig("dimension too large".into()));
    }
    config
        .validate()
        .map_err(|e| WeightFileError::InvalidConfig(e.to_string()))?;
    let count = parameter_count(config)
        .map_err(|e| WeightFileError::InvalidConfig(e.to_string()))?
        .total;
    if count > (1 << 32) {
        return Err(WeightFileError::InvalidConfig(format!("{count} parameters")));
    }
    Ok(count)
}

pub fn save_weights(weights: &ModelWeights, path: impl AsRef<Path>) -> Result<(), WeightFileError> {
    fs::write(path, encode_weights(weights))?;
    Ok(())
}

pub fn load_weights(path: impl AsRef<Path>) -> Result<ModelWeights, WeightFileError> {
    decode_weights(&fs::read(path)?)
}
