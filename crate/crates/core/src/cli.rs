//! The `sparseprox` command-line driver.
//!
//! ```text
//! sparseprox train <config.json> [--override key=value]...
//! sparseprox prox-check [--samples N] [--seed S]
//! sparseprox contours <kind> [--a A] [--lambda L] [--gamma G] [--p P]
//!                     [--half-width H] [--resolution R] [--tl1-shape-presets] --output PATH
//! sparseprox report <checkpoint.json> (--csv PATH [--scale F] | --idx IMAGES LABELS | --config RUN.json)
//! ```
//!
//! Exit codes: 0 success, 1 verification failure, 2 usage or configuration
//! error, 3 training divergence. `SPARSEPROX_SEED` overrides the configured
//! training seed.

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use crate::data::{load_csv, load_idx, synthetic_classification, Dataset, ImageShape};
use crate::error::{Error, Result};
use crate::metrics::SparsityReport;
use crate::nn::{dense, Activation, InitScheme, LayerSpec, NetworkModel};
use crate::oracle::{prox_check, CHECK_TOLERANCE};
use crate::penalties::{contour_grid, PenaltySpec, PENALTY_NAMES};
use crate::trainer::{train, TrainConfig};

pub const EXIT_OK: i32 = 0;
pub const EXIT_VERIFICATION: i32 = 1;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_DIVERGENCE: i32 = 3;

pub const SEED_ENV: &str = "SPARSEPROX_SEED";

/// TL1 shapes written by `contours --tl1-shape-presets`.
pub const TL1_SHAPE_PRESETS: [f64; 3] = [1e-2, 1.0, 1e2];

pub const CHECKPOINT_FILE: &str = "checkpoint.json";
pub const TRACE_FILE: &str = "trace.csv";
pub const REPORT_FILE: &str = "report.json";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InputShape {
    Features(usize),
    Image(ImageShape),
}

impl InputShape {
    fn len(&self) -> usize {
        match self {
            InputShape::Features(n) => *n,
            InputShape::Image(s) => s.len(),
        }
    }
}

/// Hidden layer; the softmax output layer is appended automatically.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum HiddenLayer {
    Conv2d { filters: usize, kernel_size: usize },
    Dense { units: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Architecture {
    pub input: InputShape,
    #[serde(default)]
    pub layers: Vec<HiddenLayer>,
    #[serde(default)]
    pub init: InitScheme,
}

impl Architecture {
    /// Layer specs ending in a `num_classes`-way softmax. Hidden layers use
    /// ReLU; convolutions keep spatial size shrinking by `kernel_size - 1`.
    pub fn layer_specs(&self, num_classes: usize) -> Result<Vec<LayerSpec>> {
        let mut specs = Vec::with_capacity(self.layers.len() + 1);
        let mut image = match self.input {
            InputShape::Image(s) => Some((s.height, s.width, s.channels)),
            InputShape::Features(_) => None,
        };
        let mut width = self.input.len();
        for (i, layer) in self.layers.iter().enumerate() {
            match *layer {
                HiddenLayer::Conv2d { filters, kernel_size } => {
                    let Some((h, w, c)) = image else {
                        return Err(Error::Config(format!(
                            "layer {i}: conv2d needs an image input and may not follow a dense layer"
                        )));
                    };
                    let spec = LayerSpec::Conv2d {
                        filters,
                        kernel_size,
                        in_channels: c,
                        in_height: h,
                        in_width: w,
                        activation: Activation::Relu,
                    };
                    spec.validate(i)?;
                    let (oh, ow) = spec.conv_output_hw().expect("validated conv layer");
                    image = Some((oh, ow, filters));
                    width = spec.output_len();
                    specs.push(spec);
                }
                HiddenLayer::Dense { units } => {
                    specs.push(dense(width, units, Activation::Relu));
                    image = None;
                    width = units;
                }
            }
        }
        specs.push(dense(width, num_classes, Activation::Softmax));
        for (i, s) in specs.iter().enumerate() {
            s.validate(i)?;
        }
        Ok(specs)
    }
}

fn default_scale() -> f64 {
    1.0
}

fn default_idx_scale() -> f64 {
    1.0 / 255.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DatasetSource {
    /// Label-first CSV; features are multiplied by `scale`.
    Csv {
        path: PathBuf,
        #[serde(default = "default_scale")]
        scale: f64,
    },
    /// IDX image/label pair; pixels are multiplied by `scale`.
    Idx {
        images: PathBuf,
        labels: PathBuf,
        #[serde(default = "default_idx_scale")]
        scale: f64,
    },
    Synthetic {
        n: usize,
        informative: usize,
        noise: usize,
        classes: usize,
        seed: u64,
    },
}

impl DatasetSource {
    fn resolve(&mut self, base: &Path) {
        let join = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        match self {
            DatasetSource::Csv { path, .. } => join(path),
            DatasetSource::Idx { images, labels, .. } => {
                join(images);
                join(labels);
            }
            DatasetSource::Synthetic { .. } => {}
        }
    }

    fn check_paths(&self) -> Result<()> {
        let paths: Vec<&PathBuf> = match self {
            DatasetSource::Csv { path, .. } => vec![path],
            DatasetSource::Idx { images, labels, .. } => vec![images, labels],
            DatasetSource::Synthetic { .. } => vec![],
        };
        for p in paths {
            if !p.is_file() {
                return Err(Error::Config(format!("dataset file {} does not exist", p.display())));
            }
        }
        Ok(())
    }

    pub fn load(&self) -> Result<Dataset> {
        match self {
            DatasetSource::Csv { path, scale } => Ok(load_csv(path)?.scaled(*scale)),
            DatasetSource::Idx { images, labels, scale } => Ok(load_idx(images, labels)?.scaled(*scale)),
            DatasetSource::Synthetic {
                n,
                informative,
                noise,
                classes,
                seed,
            } => synthetic_classification(*n, *informative, *noise, *classes, *seed),
        }
    }
}

fn default_split() -> f64 {
    0.8
}

/// Everything `train` needs. Relative paths are taken relative to the
/// config file's directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub train: TrainConfig,
    pub architecture: Architecture,
    pub dataset: DatasetSource,
    /// Training share of the dataset; the rest is used for reports.
    #[serde(default = "default_split")]
    pub split: f64,
    pub output_dir: PathBuf,
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    /// Reads a config, resolving relative paths against its directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg = Self::from_json(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new("."));
        cfg.dataset.resolve(base);
        if cfg.output_dir.is_relative() {
            cfg.output_dir = base.join(&cfg.output_dir);
        }
        Ok(cfg)
    }

    /// Sets `train.<key>` from `value`, parsed as JSON when possible and as a
    /// bare string otherwise. Unknown keys are rejected.
    pub fn apply_override(&mut self, key: &str, value: &str) -> Result<()> {
        let mut train = serde_json::to_value(&self.train)?;
        let fields = train.as_object_mut().expect("train config serializes to an object");
        if !fields.contains_key(key) {
            let known: Vec<&String> = fields.keys().collect();
            return Err(Error::Config(format!(
                "unknown override key `{key}` (known: {})",
                known.iter().map(|k| k.as_str()).collect::<Vec<_>>().join(", ")
            )));
        }
        let parsed = serde_json::from_str(value).unwrap_or_else(|_| serde_json::Value::String(value.to_string()));
        fields.insert(key.to_string(), parsed);
        self.train =
            serde_json::from_value(train).map_err(|e| Error::Config(format!("override {key}={value}: {e}")))?;
        Ok(())
    }

    /// Loads the dataset and splits it into training and report parts.
    pub fn datasets(&self) -> Result<(Dataset, Dataset)> {
        let mut data = self.dataset.load()?;
        if let InputShape::Image(shape) = self.architecture.input {
            data = data.with_image_shape(shape)?;
        }
        if data.num_features() != self.architecture.input.len() {
            return Err(Error::Shape {
                layer: 0,
                expected: format!("{} input features", self.architecture.input.len()),
                found: format!("{} features in the dataset", data.num_features()),
            });
        }
        data.split(self.split, self.train.seed)
    }

    pub fn validate(&self) -> Result<()> {
        self.train.validate()?;
        if !(self.split > 0.0 && self.split < 1.0) {
            return Err(Error::Config(format!("split must lie in (0, 1), got {}", self.split)));
        }
        self.dataset.check_paths()
    }
}

/// Artifacts of one `train` run.
#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub output_dir: PathBuf,
    pub report: SparsityReport,
    pub epochs: usize,
}

/// Trains from a loaded config and writes checkpoint, trace and report into
/// its output directory.
pub fn run_training(cfg: &RunConfig) -> Result<TrainOutcome> {
    cfg.validate()?;
    let (train_set, eval_set) = cfg.datasets()?;
    let specs = cfg.architecture.layer_specs(train_set.num_classes)?;
    let model = NetworkModel::initialized(&specs, cfg.architecture.init, cfg.train.seed)?;
    std::fs::create_dir_all(&cfg.output_dir).map_err(|e| Error::io(&cfg.output_dir, e))?;
    let (model, trace) = train(model, &train_set, Some(&eval_set), &cfg.train)?;
    let report = SparsityReport::compute(&model, &eval_set)?;
    model.save_json(&cfg.output_dir.join(CHECKPOINT_FILE))?;
    trace.save_csv(&cfg.output_dir.join(TRACE_FILE))?;
    let report_path = cfg.output_dir.join(REPORT_FILE);
    let text = serde_json::to_string_pretty(&report)? + "\n";
    std::fs::write(&report_path, text).map_err(|e| Error::io(&report_path, e))?;
    Ok(TrainOutcome {
        output_dir: cfg.output_dir.clone(),
        report,
        epochs: trace.len(),
    })
}

#[derive(Debug, Parser)]
#[command(
    name = "sparseprox",
    version,
    about = "Sparse network training with integrated TL1 regularization"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Train a network from a JSON run config.
    Train {
        config: PathBuf,
        /// Replace a training parameter, e.g. `lambda=1e-5`. The output
        /// directory gets a matching suffix.
        #[arg(long = "override", value_name = "KEY=VALUE")]
        overrides: Vec<String>,
    },
    /// Compare the closed-form TL1 prox with a brute-force minimizer.
    ProxCheck {
        #[arg(long, default_value_t = 1000)]
        samples: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Write a 2-D penalty contour grid as CSV.
    Contours(ContourArgs),
    /// Print the sparsity report of a checkpoint on a dataset.
    Report(ReportArgs),
}

#[derive(Debug, Args)]
struct ContourArgs {
    kind: String,
    #[arg(long, default_value_t = 1.0)]
    a: f64,
    #[arg(long, default_value_t = 1.0)]
    lambda: f64,
    #[arg(long, default_value_t = 3.7)]
    gamma: f64,
    #[arg(long, default_value_t = 0.5)]
    p: f64,
    #[arg(long, default_value_t = 1.0)]
    half_width: f64,
    #[arg(long, default_value_t = 101)]
    resolution: usize,
    /// Write one TL1 grid per preset shape into the `--output` directory.
    #[arg(long)]
    tl1_shape_presets: bool,
    #[arg(long)]
    output: PathBuf,
}

#[derive(Debug, Args)]
struct ReportArgs {
    checkpoint: PathBuf,
    #[arg(long, conflicts_with_all = ["idx", "config"])]
    csv: Option<PathBuf>,
    #[arg(long, requires = "csv", default_value_t = 1.0)]
    scale: f64,
    #[arg(long, num_args = 2, value_names = ["IMAGES", "LABELS"], conflicts_with = "config")]
    idx: Option<Vec<PathBuf>>,
    /// Use the held-out part of a run config's dataset.
    #[arg(long)]
    config: Option<PathBuf>,
}

fn exit_code(err: &Error) -> i32 {
    match err {
        Error::Divergence { .. } => EXIT_DIVERGENCE,
        _ => EXIT_USAGE,
    }
}

/// Runs one command and returns its exit code. Results go to `out`,
/// diagnostics to `err`.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = e.exit_code();
            let text = e.render().to_string();
            if code == 0 {
                let _ = write!(out, "{text}");
                return EXIT_OK;
            }
            let _ = write!(err, "{text}");
            return EXIT_USAGE;
        }
    };
    let result = match cli.command {
        Command::Train { config, overrides } => cmd_train(&config, &overrides, out),
        Command::ProxCheck { samples, seed } => cmd_prox_check(samples, seed, out),
        Command::Contours(args) => cmd_contours(&args, out),
        Command::Report(args) => cmd_report(&args, out),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            exit_code(&e)
        }
    }
}

fn env_seed() -> Result<Option<u64>> {
    match std::env::var(SEED_ENV) {
        Ok(v) => v
            .trim()
            .parse()
            .map(Some)
            .map_err(|_| Error::Config(format!("{SEED_ENV} must be an unsigned integer, got `{v}`"))),
        Err(_) => Ok(None),
    }
}

fn override_suffix(key: &str, value: &str) -> String {
    let clean: String = value
        .chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() || "-+.".contains(c) {
                c
            } else {
                '_'
            }
        })
        .collect();
    format!("_{key}_{clean}")
}

fn cmd_train(config: &Path, overrides: &[String], out: &mut dyn Write) -> Result<i32> {
    let mut cfg = RunConfig::load(config)?;
    if let Some(seed) = env_seed()? {
        cfg.train.seed = seed;
    }
    let mut suffix = String::new();
    for item in overrides {
        let Some((key, value)) = item.split_once('=') else {
            return Err(Error::Config(format!("override `{item}` is not key=value")));
        };
        let (key, value) = (key.trim(), value.trim());
        cfg.apply_override(key, value)?;
        suffix.push_str(&override_suffix(key, value));
    }
    if !suffix.is_empty() {
        let mut dir = cfg.output_dir.clone().into_os_string();
        dir.push(&suffix);
        cfg.output_dir = dir.into();
    }
    let outcome = run_training(&cfg)?;
    let r = &outcome.report;
    writeln!(
        out,
        "trained {} epochs: accuracy {:.4}, nonzero fraction {:.4}, flop ratio {:.4}, {} neurons removed -> {}",
        outcome.epochs,
        r.accuracy,
        r.nonzero_fraction,
        r.flop_ratio,
        r.neurons_removed,
        outcome.output_dir.display()
    )
    .map_err(|e| Error::io(&outcome.output_dir, e))?;
    Ok(EXIT_OK)
}

fn cmd_prox_check(samples: usize, seed: u64, out: &mut dyn Write) -> Result<i32> {
    if samples == 0 {
        return Err(Error::Config("--samples must be at least 1".into()));
    }
    let report = prox_check(samples, seed)?;
    let (w, beta, a) = report.worst;
    let write = |out: &mut dyn Write| -> std::io::Result<()> {
        writeln!(out, "samples: {samples}, seed: {seed}")?;
        writeln!(out, "max absolute deviation: {:e}", report.max_deviation)?;
        if !report.passed() {
            writeln!(
                out,
                "FAILED: deviation exceeds {CHECK_TOLERANCE:e} at w = {w}, beta = {beta}, a = {a}"
            )?;
        }
        Ok(())
    };
    write(out).map_err(|e| Error::io(Path::new("<stdout>"), e))?;
    Ok(if report.passed() { EXIT_OK } else { EXIT_VERIFICATION })
}

fn cmd_contours(args: &ContourArgs, out: &mut dyn Write) -> Result<i32> {
    let spec = PenaltySpec::from_name(&args.kind, args.a, args.lambda, args.gamma, args.p).map_err(|e| match e {
        Error::InvalidPenalty(msg) if !PENALTY_NAMES.contains(&args.kind.as_str()) => Error::Config(msg),
        other => other,
    })?;
    let targets: Vec<(PenaltySpec, PathBuf)> = if args.tl1_shape_presets {
        if !matches!(spec, PenaltySpec::Tl1 { .. }) {
            return Err(Error::Config("--tl1-shape-presets only applies to tl1".into()));
        }
        std::fs::create_dir_all(&args.output).map_err(|e| Error::io(&args.output, e))?;
        TL1_SHAPE_PRESETS
            .iter()
            .map(|&a| (PenaltySpec::Tl1 { a }, args.output.join(format!("tl1_a_{a}.csv"))))
            .collect()
    } else {
        vec![(spec, args.output.clone())]
    };
    for (spec, path) in targets {
        contour_grid(&spec, args.half_width, args.resolution)?.save_csv(&path)?;
        writeln!(out, "wrote {}", path.display()).map_err(|e| Error::io(&path, e))?;
    }
    Ok(EXIT_OK)
}

fn cmd_report(args: &ReportArgs, out: &mut dyn Write) -> Result<i32> {
    let model = NetworkModel::load_json(&args.checkpoint)?;
    let data = if let Some(csv) = &args.csv {
        load_csv(csv)?.scaled(args.scale)
    } else if let Some(idx) = &args.idx {
        load_idx(&idx[0], &idx[1])?.scaled(default_idx_scale())
    } else if let Some(config) = &args.config {
        let mut cfg = RunConfig::load(config)?;
        if let Some(seed) = env_seed()? {
            cfg.train.seed = seed;
        }
        cfg.validate()?;
        cfg.datasets()?.1
    } else {
        return Err(Error::Config("report needs one of --csv, --idx or --config".into()));
    };
    if data.num_features() != model.input_len() {
        return Err(Error::Shape {
            layer: 0,
            expected: format!("{} input features", model.input_len()),
            found: format!("{} features in the dataset", data.num_features()),
        });
    }
    let report = SparsityReport::compute(&model, &data)?;
    let text = serde_json::to_string_pretty(&report)?;
    writeln!(out, "{text}").map_err(|e| Error::io(Path::new("<stdout>"), e))?;
    Ok(EXIT_OK)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn minimal_config() -> RunConfig {
        RunConfig::from_json(
            r#"{
                "train": {"lambda": 1e-4, "batch_size": 10, "max_iterations": 30},
                "architecture": {"input": {"features": 6}, "layers": [{"type": "dense", "units": 5}]},
                "dataset": {"kind": "synthetic", "n": 50, "informative": 3, "noise": 3, "classes": 2, "seed": 1},
                "output_dir": "out"
            }"#,
        )
        .unwrap()
    }

    #[test]
    fn config_defaults() {
        let cfg = minimal_config();
        assert_eq!(cfg.split, 0.8);
        assert_eq!(cfg.train.s, 0.1);
        assert_eq!(cfg.architecture.init, InitScheme::Xavier);
        let specs = cfg.architecture.layer_specs(2).unwrap();
        assert_eq!(
            specs,
            vec![dense(6, 5, Activation::Relu), dense(5, 2, Activation::Softmax)]
        );
    }

    #[test]
    fn unknown_keys_are_named() {
        let err = RunConfig::from_json(
            r#"{"architecture": {"input": {"features": 2}}, "dataset": {"kind": "synthetic", "n": 4,
                "informative": 2, "noise": 0, "classes": 2, "seed": 0}, "output_dir": "o", "lamda": 1}"#,
        )
        .unwrap_err();
        assert!(err.to_string().contains("lamda"), "{err}");
        let mut cfg = minimal_config();
        let err = cfg.apply_override("lamda", "1").unwrap_err();
        assert!(err.to_string().contains("lamda"));
    }

    #[test]
    fn overrides_parse_values() {
        let mut cfg = minimal_config();
        cfg.apply_override("lambda", "1e-5").unwrap();
        cfg.apply_override("regularizer_mode", "group_only").unwrap();
        cfg.apply_override("optimizer", "adam").unwrap();
        assert_eq!(cfg.train.lambda, 1e-5);
        assert_eq!(cfg.train.regularizer_mode, crate::trainer::RegularizerMode::GroupOnly);
        assert!(cfg.apply_override("batch_size", "many").is_err());
        assert_eq!(override_suffix("lambda", "1e-5"), "_lambda_1e-5");
    }

    #[test]
    fn conv_layers_need_images() {
        let arch = Architecture {
            input: InputShape::Image(ImageShape {
                height: 8,
                width: 8,
                channels: 1,
            }),
            layers: vec![
                HiddenLayer::Conv2d {
                    filters: 4,
                    kernel_size: 3,
                },
                HiddenLayer::Dense { units: 16 },
            ],
            init: InitScheme::Xavier,
        };
        let specs = arch.layer_specs(10).unwrap();
        assert_eq!(specs[0].output_len(), 6 * 6 * 4);
        assert_eq!(specs[1], dense(144, 16, Activation::Relu));
        let flat = Architecture {
            input: InputShape::Features(64),
            ..arch
        };
        assert!(matches!(flat.layer_specs(10), Err(Error::Config(_))));
    }

    #[test]
    fn usage_errors_exit_two() {
        let mut out = Vec::new();
        let mut err = Vec::new();
        assert_eq!(
            run(["sparseprox", "prox-check", "--samples", "0"], &mut out, &mut err),
            2
        );
        assert_eq!(run(["sparseprox", "bogus"], &mut out, &mut err), 2);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("x.csv");
        let args = ["sparseprox", "contours", "l3", "--output", path.to_str().unwrap()];
        err.clear();
        assert_eq!(run(args, &mut out, &mut err), 2);
        let msg = String::from_utf8(err).unwrap();
        assert!(msg.contains("tl1") && msg.contains("scad"), "{msg}");
    }
}
