//! Run configuration: built-in defaults, overridden by a `key = value` file
//! with `[section]` headers, overridden by command-line flags.
//!
//! ```text
//! seed = 7
//!
//! [train]
//! epochs = 50
//! batch_size = 32
//!
//! [pipeline]
//! denoise = true
//! ```
//!
//! Keys outside any section are top-level; inside `[train]` the key
//! `epochs` is addressed as `train.epochs`. Flags use the same dotted names.

use std::collections::BTreeMap;
use std::path::PathBuf;
use std::str::FromStr;

use crate::dataset::{Activity, ColumnMap, LabelMap, LoadOptions};
use crate::experiment::ExperimentConfig;
use crate::model::ConvSpec;
use crate::nn::Padding;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ConfigError {
    #[error("config is not valid UTF-8")]
    NotUtf8,
    #[error("line {line}: {message}")]
    Syntax { line: usize, message: String },
    #[error("line {line}: \"{key}\" is set twice")]
    Duplicate { line: usize, key: String },
    #[error("unknown config key \"{0}\"")]
    UnknownKey(String),
    #[error("invalid value \"{value}\" for {key}: {message}")]
    InvalidValue {
        key: String,
        value: String,
        message: String,
    },
    #[error("cannot read config {path}: {message}")]
    Io { path: PathBuf, message: String },
}

/// One `key = value` assignment with its fully qualified key.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfigEntry {
    pub line: usize,
    pub key: String,
    pub value: String,
}

/// Splits a config file into entries in file order. `#` and `;` start
/// comment lines; values may be wrapped in double quotes.
pub fn parse_config(bytes: &[u8]) -> Result<Vec<ConfigEntry>, ConfigError> {
    let text = std::str::from_utf8(bytes).map_err(|_| ConfigError::NotUtf8)?;
    let mut section = String::new();
    let mut seen = BTreeMap::new();
    let mut entries = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let trimmed = raw.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') || trimmed.starts_with(';') {
            continue;
        }
        if let Some(rest) = trimmed.strip_prefix('[') {
            let name = rest.strip_suffix(']').ok_or_else(|| ConfigError::Syntax {
                line,
                message: "unterminated section header".into(),
            })?;
            let name = name.trim();
            if !is_identifier(name) {
                return Err(ConfigError::Syntax {
                    line,
                    message: format!("bad section name \"{name}\""),
                });
            }
            section = name.to_string();
            continue;
        }
        let (key, value) = trimmed.split_once('=').ok_or_else(|| ConfigError::Syntax {
            line,
            message: "expected key = value".into(),
        })?;
        let key = key.trim();
        if !is_identifier(key) {
            return Err(ConfigError::Syntax {
                line,
                message: format!("bad key \"{key}\""),
            });
        }
        let value = value.trim();
        let value = match value.strip_prefix('"') {
            Some(inner) => inner.strip_suffix('"').ok_or_else(|| ConfigError::Syntax {
                line,
                message: "unterminated quoted value".into(),
            })?,
            None => value,
        };
        let key = if section.is_empty() {
            key.to_string()
        } else {
            format!("{section}.{key}")
        };
        if seen.insert(key.clone(), line).is_some() {
            return Err(ConfigError::Duplicate { line, key });
        }
        entries.push(ConfigEntry {
            line,
            key,
            value: value.to_string(),
        });
    }
    Ok(entries)
}

fn is_identifier(s: &str) -> bool {
    !s.is_empty() && s.chars().all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '-')
}

/// Everything a command needs, after merging all sources.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub experiment: ExperimentConfig,
    pub manifest: Option<PathBuf>,
    pub strict: bool,
    pub column_map: ColumnMap,
    pub label_map: LabelMap,
    pub split_file: Option<PathBuf>,
    pub val_pair: Option<(String, String)>,
    pub test_pair: Option<(String, String)>,
    pub out_dir: PathBuf,
    pub weights: Option<PathBuf>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            experiment: ExperimentConfig::default(),
            manifest: None,
            strict: false,
            column_map: ColumnMap::default(),
            label_map: LabelMap::default(),
            split_file: None,
            val_pair: None,
            test_pair: None,
            out_dir: PathBuf::from("out"),
            weights: None,
        }
    }
}

/// Every key [`RunConfig::set`] accepts.
pub const KEYS: &[&str] = &[
    "seed",
    "model.conv",
    "model.pool_window",
    "model.padding",
    "model.attention_dim",
    "model.attention_heads",
    "model.dense_hidden",
    "model.dropout",
    "train.epochs",
    "train.batch_size",
    "train.lr",
    "train.beta1",
    "train.beta2",
    "train.epsilon",
    "pipeline.window",
    "pipeline.stride",
    "pipeline.denoise",
    "pipeline.wavelet",
    "pipeline.levels",
    "pipeline.threshold",
    "bench.iters",
    "data.manifest",
    "data.strict",
    "data.columns",
    "data.delimiter",
    "data.classes",
    "split.file",
    "split.val",
    "split.test",
    "output.dir",
    "output.weights",
];

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T, ConfigError>
where
    T::Err: std::fmt::Display,
{
    value.trim().parse().map_err(|e: T::Err| ConfigError::InvalidValue {
        key: key.into(),
        value: value.into(),
        message: e.to_string(),
    })
}

fn invalid(key: &str, value: &str, message: impl Into<String>) -> ConfigError {
    ConfigError::InvalidValue {
        key: key.into(),
        value: value.into(),
        message: message.into(),
    }
}

fn parse_bool(key: &str, value: &str) -> Result<bool, ConfigError> {
    match value.trim().to_ascii_lowercase().as_str() {
        "true" | "yes" | "on" | "1" => Ok(true),
        "false" | "no" | "off" | "0" => Ok(false),
        _ => Err(invalid(key, value, "expected true or false")),
    }
}

fn list(value: &str) -> Vec<&str> {
    value.split(',').map(str::trim).filter(|s| !s.is_empty()).collect()
}

/// `"S01,S12"` → `("S01", "S12")`.
pub fn parse_pair(key: &str, value: &str) -> Result<(String, String), ConfigError> {
    match list(value).as_slice() {
        [a, b] => Ok((a.to_string(), b.to_string())),
        _ => Err(invalid(key, value, "expected two subject ids: healthy,abnormal")),
    }
}

/// `"5x16,3x8"` → kernel 5 with 16 filters, then kernel 3 with 8.
fn parse_conv(key: &str, value: &str) -> Result<Vec<ConvSpec>, ConfigError> {
    let specs = list(value)
        .into_iter()
        .map(|item| {
            let (k, f) = item
                .split_once(['x', 'X'])
                .ok_or_else(|| invalid(key, value, "expected KERNELxFILTERS items"))?;
            Ok(ConvSpec::new(parse(key, k)?, parse(key, f)?))
        })
        .collect::<Result<Vec<_>, ConfigError>>()?;
    if specs.is_empty() {
        return Err(invalid(key, value, "at least one conv layer is required"));
    }
    Ok(specs)
}

impl RunConfig {
    /// Applies one assignment. The same keys serve the config file and the
    /// command-line flags.
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), ConfigError> {
        let exp = &mut self.experiment;
        match key {
            "seed" => {
                let seed: u64 = parse(key, value)?;
                exp.model.seed = seed;
                exp.train.seed = seed;
            }
            "model.conv" => exp.model.conv = parse_conv(key, value)?,
            "model.pool_window" => exp.model.pool_window = parse(key, value)?,
            "model.padding" => {
                exp.model.padding = match value.trim().to_ascii_lowercase().as_str() {
                    "same" => Padding::Same,
                    "valid" => Padding::Valid,
                    _ => return Err(invalid(key, value, "expected same or valid")),
                }
            }
            "model.attention_dim" => exp.model.attention_dim = parse(key, value)?,
            "model.attention_heads" => exp.model.n_attention_heads = parse(key, value)?,
            "model.dense_hidden" => exp.model.dense_hidden = parse(key, value)?,
            "model.dropout" => exp.model.dropout_rate = parse(key, value)?,
            "train.epochs" => exp.train.epochs = parse(key, value)?,
            "train.batch_size" => exp.train.batch_size = parse(key, value)?,
            "train.lr" => exp.train.adam.lr = parse(key, value)?,
            "train.beta1" => exp.train.adam.beta1 = parse(key, value)?,
            "train.beta2" => exp.train.adam.beta2 = parse(key, value)?,
            "train.epsilon" => exp.train.adam.epsilon = parse(key, value)?,
            "pipeline.window" => {
                let w: usize = parse(key, value)?;
                exp.pipeline.window_len = w;
                exp.model.window_len = w;
            }
            "pipeline.stride" => exp.pipeline.stride = parse(key, value)?,
            "pipeline.denoise" => exp.pipeline.denoise.enabled = parse_bool(key, value)?,
            "pipeline.wavelet" => exp.pipeline.denoise.wavelet = parse(key, value)?,
            "pipeline.levels" => exp.pipeline.denoise.levels = parse(key, value)?,
            "pipeline.threshold" => exp.pipeline.denoise.threshold_rule = parse(key, value)?,
            "bench.iters" => exp.bench_iters = parse(key, value)?,
            "data.manifest" => self.manifest = Some(PathBuf::from(value)),
            "data.strict" => self.strict = parse_bool(key, value)?,
            "data.columns" => {
                let names = list(value);
                let semg: [String; 4] = names
                    .iter()
                    .map(|s| s.to_string())
                    .collect::<Vec<_>>()
                    .try_into()
                    .map_err(|_| invalid(key, value, "expected four column names"))?;
                self.column_map.semg = semg;
            }
            "data.delimiter" => {
                self.column_map.delimiter = match value {
                    "tab" | "\\t" => b'\t',
                    v if v.len() == 1 && v.is_ascii() => v.as_bytes()[0],
                    _ => return Err(invalid(key, value, "expected a single ASCII character or tab")),
                }
            }
            "data.classes" => {
                let classes = list(value)
                    .into_iter()
                    .map(|a| a.parse::<Activity>().map_err(|e| invalid(key, value, e.to_string())))
                    .collect::<Result<Vec<_>, _>>()?;
                self.label_map = LabelMap::new(classes).map_err(|e| invalid(key, value, e.to_string()))?;
            }
            "split.file" => self.split_file = Some(PathBuf::from(value)),
            "split.val" => self.val_pair = Some(parse_pair(key, value)?),
            "split.test" => self.test_pair = Some(parse_pair(key, value)?),
            "output.dir" => self.out_dir = PathBuf::from(value),
            "output.weights" => self.weights = Some(PathBuf::from(value)),
            _ => return Err(ConfigError::UnknownKey(key.to_string())),
        }
        Ok(())
    }

    pub fn apply(&mut self, entries: &[ConfigEntry]) -> Result<(), ConfigError> {
        entries.iter().try_for_each(|e| self.set(&e.key, &e.value))
    }

    /// Defaults overridden by the file at `path`, if any.
    pub fn load(path: Option<&std::path::Path>) -> Result<Self, ConfigError> {
        let mut config = Self::default();
        if let Some(path) = path {
            let bytes = std::fs::read(path).map_err(|e| ConfigError::Io {
                path: path.to_path_buf(),
                message: e.to_string(),
            })?;
            config.apply(&parse_config(&bytes)?)?;
        }
        Ok(config)
    }

    pub fn load_options(&self) -> LoadOptions {
        LoadOptions {
            strict: self.strict,
            column_map: self.column_map.clone(),
            label_map: self.label_map.clone(),
        }
    }

    /// Weight-file path: explicit, or `model.lbw` in the output directory.
    pub fn weights_path(&self) -> PathBuf {
        self.weights.clone().unwrap_or_else(|| self.out_dir.join("model.lbw"))
    }
}
