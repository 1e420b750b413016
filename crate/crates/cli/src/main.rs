//! `limbnet` command-line tool.
//!
//! Exit codes: 0 on success, 1 on runtime failure, 2 on usage or
//! validation errors.

use std::fmt::Display;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use limbnet::config::{parse_pair, ConfigError, RunConfig};
use limbnet::dataset::{
    convert_csv, generate_synthetic_dataset, load_dataset, load_recording_with_meta, write_dataset,
    Activity, ColumnMap, Dataset, SubjectMeta, SyntheticParams,
};
use limbnet::experiment::{evaluate_partition, run_experiment, ExperimentError};
use limbnet::model::{build_model, load_weights, parameter_count, save_weights, ModelWeights};
use limbnet::pipeline::{build_frames, make_split, Partition, PipelineConfig, SplitPlan};
use limbnet::{bench, Rng};

#[derive(Debug, Parser)]
#[command(name = "limbnet", version, about = "Lower-limb activity classification from 4-channel sEMG")]
struct Cli {
    /// Config file (`key = value` lines with `[section]` headers).
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,
    /// Seed for initialisation, shuffling and dropout.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Directory for weights, reports and split files.
    #[arg(long, global = true, value_name = "DIR")]
    out_dir: Option<PathBuf>,
    /// Extra config assignment, e.g. `--set train.lr=0.0005`. Repeatable.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args, Default)]
struct DataArgs {
    /// Dataset manifest CSV.
    #[arg(long, value_name = "FILE")]
    manifest: Option<PathBuf>,
    /// Require all 22 subjects with every activity.
    #[arg(long)]
    strict: bool,
}

#[derive(Debug, Args, Default)]
struct SplitArgs {
    /// Split file written by `limbnet split`.
    #[arg(long, value_name = "FILE")]
    split: Option<PathBuf>,
    /// Validation pair `HEALTHY,ABNORMAL`.
    #[arg(long, value_name = "H,A")]
    val: Option<String>,
    /// Test pair `HEALTHY,ABNORMAL`.
    #[arg(long, value_name = "H,A")]
    test: Option<String>,
}

#[derive(Debug, Args, Default)]
struct WindowArgs {
    /// Window length in samples.
    #[arg(long)]
    window: Option<usize>,
    /// Distance between window starts in samples.
    #[arg(long)]
    stride: Option<usize>,
    /// Wavelet-denoise each recording before windowing.
    #[arg(long)]
    denoise: bool,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Hold out one healthy/abnormal pair each for validation and test.
    Split {
        #[command(flatten)]
        data: DataArgs,
        #[command(flatten)]
        pairs: SplitArgs,
        /// Output file (default: OUT_DIR/split.json).
        #[arg(long, value_name = "FILE")]
        out: Option<PathBuf>,
    },
    /// Train a model and write its weights and a JSON report.
    Train {
        #[command(flatten)]
        data: DataArgs,
        #[command(flatten)]
        split: SplitArgs,
        #[command(flatten)]
        windows: WindowArgs,
        #[arg(long)]
        epochs: Option<usize>,
        #[arg(long)]
        batch_size: Option<usize>,
        /// Timed iterations of the latency benchmark (0 skips it).
        #[arg(long)]
        bench_iters: Option<usize>,
        /// Weight file to write (default: OUT_DIR/model.lbw).
        #[arg(long, value_name = "FILE")]
        weights: Option<PathBuf>,
    },
    /// Evaluate saved weights on one partition.
    Evaluate {
        #[arg(long, value_name = "FILE")]
        weights: Option<PathBuf>,
        #[command(flatten)]
        data: DataArgs,
        #[command(flatten)]
        split: SplitArgs,
        #[command(flatten)]
        windows: WindowArgs,
        /// train, val or test.
        #[arg(long, default_value = "test", value_parser = parse_partition)]
        partition: Partition,
        /// Report file (default: OUT_DIR/evaluation_PARTITION.json).
        #[arg(long, value_name = "FILE")]
        report: Option<PathBuf>,
    },
    /// Classify every window of a recording; prints `offset,class,p0,p1,p2`.
    Predict {
        #[arg(long, value_name = "FILE")]
        weights: Option<PathBuf>,
        #[command(flatten)]
        windows: WindowArgs,
        /// Canonical recording CSV.
        csv: PathBuf,
    },
    /// Time single-window inference.
    Bench {
        /// Weight file; a freshly initialised default model when omitted.
        #[arg(long, value_name = "FILE")]
        weights: Option<PathBuf>,
        #[arg(long, default_value_t = 1000)]
        iters: usize,
        #[arg(long, default_value_t = 100)]
        warmup: usize,
    },
    /// Convert a vendor CSV export to the canonical layout.
    Convert {
        input: PathBuf,
        output: PathBuf,
        /// Source headers for VM, ST, BF, RF.
        #[arg(long, value_name = "VM,ST,BF,RF")]
        columns: Option<String>,
        /// Source header of the knee angle.
        #[arg(long)]
        angle: Option<String>,
        /// Source header of the time column.
        #[arg(long)]
        time: Option<String>,
        /// Field delimiter (single character, or `tab`).
        #[arg(long)]
        delimiter: Option<String>,
    },
    /// Print the per-block parameter count of the configured model.
    Params,
    /// Write a synthetic dataset and its manifest.
    Synth {
        #[arg(long, default_value_t = 22)]
        subjects: usize,
        #[arg(long, default_value_t = 3000)]
        samples: usize,
        #[arg(long)]
        noise: Option<f64>,
    },
}

fn parse_partition(s: &str) -> Result<Partition, String> {
    s.parse()
}

#[derive(Debug)]
enum CliError {
    Usage(String),
    Runtime(String),
}

impl CliError {
    fn usage(e: impl Display) -> Self {
        CliError::Usage(e.to_string())
    }

    fn runtime(e: impl Display) -> Self {
        CliError::Runtime(e.to_string())
    }
}

impl From<ConfigError> for CliError {
    fn from(e: ConfigError) -> Self {
        match e {
            ConfigError::Io { .. } => CliError::runtime(e),
            _ => CliError::usage(e),
        }
    }
}

impl From<ExperimentError> for CliError {
    fn from(e: ExperimentError) -> Self {
        match e {
            ExperimentError::WindowMismatch { .. }
            | ExperimentError::ChannelMismatch { .. }
            | ExperimentError::ClassCount { .. } => CliError::usage(e),
            _ => CliError::runtime(e),
        }
    }
}

type Result<T, E = CliError> = std::result::Result<T, E>;

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(CliError::Runtime(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
    }
}

/// Defaults, then the config file, then global flags.
fn base_config(cli: &Cli) -> Result<RunConfig> {
    let mut cfg = RunConfig::load(cli.config.as_deref())?;
    for item in &cli.overrides {
        let (key, value) = item
            .split_once('=')
            .ok_or_else(|| CliError::usage(format!("--set expects KEY=VALUE, got \"{item}\"")))?;
        cfg.set(key.trim(), value.trim())?;
    }
    if let Some(seed) = cli.seed {
        cfg.set("seed", &seed.to_string())?;
    }
    if let Some(dir) = &cli.out_dir {
        cfg.out_dir = dir.clone();
    }
    Ok(cfg)
}

fn apply_data(cfg: &mut RunConfig, data: &DataArgs) {
    if let Some(m) = &data.manifest {
        cfg.manifest = Some(m.clone());
    }
    if data.strict {
        cfg.strict = true;
    }
}

fn apply_split(cfg: &mut RunConfig, split: &SplitArgs) -> Result<()> {
    if let Some(f) = &split.split {
        cfg.split_file = Some(f.clone());
    }
    if let Some(v) = &split.val {
        cfg.val_pair = Some(parse_pair("--val", v)?);
    }
    if let Some(t) = &split.test {
        cfg.test_pair = Some(parse_pair("--test", t)?);
    }
    Ok(())
}

fn apply_windows(cfg: &mut RunConfig, w: &WindowArgs) -> Result<()> {
    if let Some(n) = w.window {
        cfg.set("pipeline.window", &n.to_string())?;
    }
    if let Some(s) = w.stride {
        cfg.set("pipeline.stride", &s.to_string())?;
    }
    if w.denoise {
        cfg.set("pipeline.denoise", "true")?;
    }
    Ok(())
}

fn load_data(cfg: &RunConfig) -> Result<Dataset> {
    let manifest = cfg
        .manifest
        .as_ref()
        .ok_or_else(|| CliError::usage("no manifest given (--manifest or data.manifest)"))?;
    load_dataset(manifest, &cfg.load_options()).map_err(CliError::runtime)
}

fn resolve_split(cfg: &RunConfig, dataset: &Dataset) -> Result<SplitPlan> {
    if let Some(path) = &cfg.split_file {
        let text = fs::read_to_string(path).map_err(|e| CliError::runtime(format!("{}: {e}", path.display())))?;
        let plan: SplitPlan =
            serde_json::from_str(&text).map_err(|e| CliError::usage(format!("{}: {e}", path.display())))?;
        let known = dataset.subjects();
        for p in [Partition::Train, Partition::Val, Partition::Test] {
            if let Some(missing) = plan.subjects(p).iter().find(|s| !known.contains_key(*s)) {
                return Err(CliError::usage(format!("split names unknown subject \"{missing}\"")));
            }
        }
        return Ok(plan);
    }
    match (&cfg.val_pair, &cfg.test_pair) {
        (Some(v), Some(t)) => make_split(dataset, (&v.0, &v.1), (&t.0, &t.1)).map_err(CliError::usage),
        _ => Err(CliError::usage(
            "no split given: pass --split FILE or both --val and --test",
        )),
    }
}

fn create_parent(path: &Path) -> Result<()> {
    match path.parent() {
        Some(dir) if !dir.as_os_str().is_empty() => {
            fs::create_dir_all(dir).map_err(|e| CliError::runtime(format!("{}: {e}", dir.display())))
        }
        _ => Ok(()),
    }
}

fn write_json(path: &Path, value: &impl serde::Serialize) -> Result<()> {
    create_parent(path)?;
    let mut text = serde_json::to_string_pretty(value).map_err(CliError::runtime)?;
    text.push('\n');
    fs::write(path, text).map_err(|e| CliError::runtime(format!("{}: {e}", path.display())))
}

fn run(cli: Cli) -> Result<()> {
    let mut cfg = base_config(&cli)?;
    match cli.command {
        Command::Split { data, pairs, out } => {
            apply_data(&mut cfg, &data);
            apply_split(&mut cfg, &pairs)?;
            cfg.split_file = None;
            let dataset = load_data(&cfg)?;
            let plan = resolve_split(&cfg, &dataset)?;
            let path = out.unwrap_or_else(|| cfg.out_dir.join("split.json"));
            write_json(&path, &plan)?;
            println!(
                "train={} val={} test={} -> {}",
                plan.train_subjects.len(),
                plan.val_subjects.len(),
                plan.test_subjects.len(),
                path.display()
            );
            Ok(())
        }
        Command::Train {
            data,
            split,
            windows,
            epochs,
            batch_size,
            bench_iters,
            weights,
        } => {
            apply_data(&mut cfg, &data);
            apply_split(&mut cfg, &split)?;
            apply_windows(&mut cfg, &windows)?;
            if let Some(e) = epochs {
                cfg.set("train.epochs", &e.to_string())?;
            }
            if let Some(b) = batch_size {
                cfg.set("train.batch_size", &b.to_string())?;
            }
            if let Some(n) = bench_iters {
                cfg.set("bench.iters", &n.to_string())?;
            }
            if let Some(w) = weights {
                cfg.weights = Some(w);
            }
            cmd_train(&cfg)
        }
        Command::Evaluate {
            weights,
            data,
            split,
            windows,
            partition,
            report,
        } => {
            apply_data(&mut cfg, &data);
            apply_split(&mut cfg, &split)?;
            apply_windows(&mut cfg, &windows)?;
            if let Some(w) = weights {
                cfg.weights = Some(w);
            }
            cmd_evaluate(&cfg, partition, report)
        }
        Command::Predict { weights, windows, csv } => {
            apply_windows(&mut cfg, &windows)?;
            if let Some(w) = weights {
                cfg.weights = Some(w);
            }
            cmd_predict(&cfg, &csv)
        }
        Command::Bench { weights, iters, warmup } => cmd_bench(&cfg, weights.as_deref(), iters, warmup),
        Command::Convert {
            input,
            output,
            columns,
            angle,
            time,
            delimiter,
        } => {
            if let Some(c) = columns {
                cfg.set("data.columns", &c)?;
            }
            if let Some(d) = delimiter {
                cfg.set("data.delimiter", &d)?;
            }
            let mut map: ColumnMap = cfg.column_map.clone();
            if angle.is_some() {
                map.angle = angle;
            }
            if time.is_some() {
                map.time = time;
            }
            create_parent(&output)?;
            let n = convert_csv(&input, &map, &output).map_err(CliError::runtime)?;
            println!("wrote {n} samples to {}", output.display());
            Ok(())
        }
        Command::Params => {
            let count = parameter_count(&cfg.experiment.model).map_err(CliError::usage)?;
            println!("{count}");
            println!(
                "reference      {:>8}",
                limbnet::model::REFERENCE_PARAMETER_COUNT
            );
            Ok(())
        }
        Command::Synth {
            subjects,
            samples,
            noise,
        } => {
            let mut params = SyntheticParams {
                n_subjects: subjects,
                samples_per_recording: samples,
                ..SyntheticParams::default()
            };
            if let Some(n) = noise {
                params.noise_amplitude = n;
            }
            let mut rng = Rng::new(cfg.experiment.train.seed);
            let dataset = generate_synthetic_dataset(&params, &mut rng).map_err(CliError::usage)?;
            let manifest = write_dataset(&dataset, &cfg.out_dir).map_err(CliError::runtime)?;
            println!("{} recordings -> {}", dataset.recordings.len(), manifest.display());
            Ok(())
        }
    }
}

fn cmd_train(cfg: &RunConfig) -> Result<()> {
    let dataset = load_data(cfg)?;
    let split = resolve_split(cfg, &dataset)?;
    let total = cfg.experiment.train.epochs;
    let mut stdout = std::io::stdout();
    let out = run_experiment(&dataset, &split, &cfg.experiment, |s| {
        let val = match (s.val_loss, s.val_accuracy) {
            (Some(l), Some(a)) => format!(" val_loss={l:.6} val_acc={a:.4}"),
            _ => String::new(),
        };
        let _ = writeln!(
            stdout,
            "epoch {}/{} train_loss={:.6} train_acc={:.4}{val}",
            s.epoch + 1,
            total,
            s.train_loss,
            s.train_accuracy
        );
    })?;
    for r in &out.report.short_recordings {
        eprintln!("warning: {r} is shorter than one window and was skipped");
    }
    let weights_path = cfg.weights_path();
    create_parent(&weights_path)?;
    save_weights(&out.weights, &weights_path).map_err(CliError::runtime)?;
    let report_path = cfg.out_dir.join("report.json");
    write_json(&report_path, &out.report)?;
    let t = &out.report.test_metrics;
    println!(
        "test accuracy={:.2}% balanced={:.2}% weights={} report={}",
        t.accuracy,
        t.balanced_accuracy,
        weights_path.display(),
        report_path.display()
    );
    Ok(())
}

fn load_model(cfg: &RunConfig) -> Result<ModelWeights> {
    let path = cfg.weights_path();
    load_weights(&path).map_err(|e| CliError::runtime(format!("{}: {e}", path.display())))
}

fn cmd_evaluate(cfg: &RunConfig, partition: Partition, report: Option<PathBuf>) -> Result<()> {
    let weights = load_model(cfg)?;
    let dataset = load_data(cfg)?;
    let split = resolve_split(cfg, &dataset)?;
    let rep = evaluate_partition(&weights, &dataset, &split, partition, &cfg.experiment.pipeline)?;
    let name = serde_json::to_value(partition)
        .ok()
        .and_then(|v| v.as_str().map(str::to_string))
        .unwrap_or_default();
    let path = report.unwrap_or_else(|| cfg.out_dir.join(format!("evaluation_{name}.json")));
    write_json(&path, &rep)?;
    let m = &rep.metrics;
    println!(
        "{name}: frames={} accuracy={:.2}% balanced={:.2}% report={}",
        rep.frames,
        m.accuracy,
        m.balanced_accuracy,
        path.display()
    );
    for c in &rep.classes {
        println!(
            "  class {} ({}): precision={:.2}% recall={:.2}% f1={:.2}%",
            c.index, c.activity, m.precision[c.index], m.recall[c.index], m.f1[c.index]
        );
    }
    Ok(())
}

fn cmd_predict(cfg: &RunConfig, csv: &Path) -> Result<()> {
    let weights = load_model(cfg)?;
    // subject and activity are placeholders; only the samples are used
    let rec = load_recording_with_meta(csv, &cfg.column_map, SubjectMeta::healthy("input"), Activity::Gait)
        .map_err(CliError::runtime)?;
    let pipeline = PipelineConfig {
        window_len: weights.config.window_len,
        ..cfg.experiment.pipeline
    };
    if cfg.experiment.pipeline.window_len != weights.config.window_len {
        eprintln!(
            "note: using the model's window length {} instead of {}",
            weights.config.window_len, cfg.experiment.pipeline.window_len
        );
    }
    let dataset = Dataset {
        recordings: vec![rec],
        label_map: cfg.label_map.clone(),
    };
    let set = build_frames(&dataset, &["input".to_string()].into(), &pipeline).map_err(CliError::runtime)?;
    if set.frames.is_empty() {
        eprintln!("warning: recording is shorter than one window; nothing to classify");
    }
    let mut out = std::io::stdout().lock();
    for frame in &set.frames {
        let p = weights.predict(&frame.data).map_err(CliError::runtime)?;
        let probs: Vec<String> = p.probabilities.iter().map(|x| x.to_string()).collect();
        writeln!(out, "{},{},{}", frame.source_offset, p.predicted_class, probs.join(","))
            .map_err(CliError::runtime)?;
    }
    Ok(())
}

fn cmd_bench(cfg: &RunConfig, weights: Option<&Path>, iters: usize, warmup: usize) -> Result<()> {
    if iters == 0 {
        return Err(CliError::usage("--iters must be at least 1"));
    }
    let model = match weights {
        Some(path) => load_weights(path).map_err(|e| CliError::runtime(format!("{}: {e}", path.display())))?,
        None => build_model(&cfg.experiment.model, &mut Rng::new(cfg.experiment.model.seed)).map_err(CliError::usage)?,
    };
    let mut rng = Rng::new(cfg.experiment.train.seed);
    let stats = bench::latency_benchmark(&model, iters, warmup, &mut rng).map_err(CliError::runtime)?;
    println!("iters={}", stats.n_iters);
    println!("warmup={}", stats.warmup_iters);
    println!("mean_ms={}", stats.mean_ms);
    println!("p50_ms={}", stats.p50_ms);
    println!("p99_ms={}", stats.p99_ms);
    println!("min_ms={}", stats.min_ms);
    println!("max_ms={}", stats.max_ms);
    println!("parameters={}", model.scalar_count());
    println!("os={}", stats.host.os);
    println!("arch={}", stats.host.arch);
    println!("logical_cpus={}", stats.host.logical_cpus);
    println!("cpu_model={}", stats.host.cpu_model.as_deref().unwrap_or("unknown"));
    Ok(())
}
