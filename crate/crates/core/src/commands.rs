//! Command implementations behind the `gated-isp` binary.
//!
//! Every command returns a [`RunReport`] (versioned JSON) or a
//! [`CommandError`] carrying its exit class. Settings resolve in three
//! layers: preset defaults, then an optional JSON config file, then flag
//! overrides; unknown config keys are rejected by name.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::checkpoint::Checkpoint;
use crate::data::{extract_patches, load_pair_dir, load_png, save_png, synth_generate, ImagePair, SyntheticConfig};
use crate::error::Error;
use crate::gradcheck::{gradcheck, GradcheckConfig};
use crate::model::{init_network, param_count, ModelConfig};
use crate::quant::graph::convert_int8;
use crate::tape::Primitive;
use crate::tensor::Tensor;
use crate::train::{eval_model, ptq_calibrate, qat_finetune, train, Enhancer, EvalResult, Identity, QatConfig, TrainConfig};

pub const SCHEMA_VERSION: &str = "1.0";

/// Process exit classes.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ExitClass {
    Usage,
    Data,
    Numeric,
    Internal,
}

impl ExitClass {
    pub fn code(self) -> i32 {
        match self {
            ExitClass::Internal => 1,
            ExitClass::Usage => 2,
            ExitClass::Data => 3,
            ExitClass::Numeric => 4,
        }
    }
}

#[derive(Debug, thiserror::Error)]
#[error("{message}")]
pub struct CommandError {
    pub class: ExitClass,
    pub message: String,
}

impl CommandError {
    pub fn usage(m: impl Into<String>) -> Self {
        CommandError {
            class: ExitClass::Usage,
            message: m.into(),
        }
    }

    pub fn data(m: impl Into<String>) -> Self {
        CommandError {
            class: ExitClass::Data,
            message: m.into(),
        }
    }
}

impl From<Error> for CommandError {
    fn from(e: Error) -> Self {
        let class = match &e {
            Error::Image(_) | Error::Checkpoint(_) | Error::Io(_) => ExitClass::Data,
            Error::NonFinite { .. } => ExitClass::Numeric,
            Error::Json(_) | Error::Invalid(_) | Error::Shape { .. } => ExitClass::Usage,
            Error::UnknownPoint(_) | Error::UninitializedObserver(_) => ExitClass::Usage,
            _ => ExitClass::Internal,
        };
        CommandError {
            class,
            message: e.to_string(),
        }
    }
}

impl From<crate::data::ImageError> for CommandError {
    fn from(e: crate::data::ImageError) -> Self {
        Error::from(e).into()
    }
}

impl From<crate::checkpoint::CheckpointError> for CommandError {
    fn from(e: crate::checkpoint::CheckpointError) -> Self {
        Error::from(e).into()
    }
}

pub type CmdResult<T> = std::result::Result<T, CommandError>;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Status {
    Ok,
    /// The command ran but its check did not pass (gradcheck).
    Failed,
    Error,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ErrorInfo {
    pub class: ExitClass,
    pub message: String,
}

/// Machine-readable result of one command.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub schema_version: String,
    pub command: String,
    pub status: Status,
    pub seed: u64,
    pub config: Value,
    pub metrics: BTreeMap<String, Value>,
    pub timings: BTreeMap<String, f64>,
    pub artifacts: BTreeMap<String, String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<ErrorInfo>,
}

impl RunReport {
    pub fn new(command: &str, seed: u64, config: Value) -> Self {
        RunReport {
            schema_version: SCHEMA_VERSION.to_string(),
            command: command.to_string(),
            status: Status::Ok,
            seed,
            config,
            metrics: BTreeMap::new(),
            timings: BTreeMap::new(),
            artifacts: BTreeMap::new(),
            error: None,
        }
    }

    /// The report printed when a command fails before producing one.
    pub fn from_error(command: &str, err: &CommandError) -> Self {
        RunReport {
            status: Status::Error,
            error: Some(ErrorInfo {
                class: err.class,
                message: err.message.clone(),
            }),
            ..RunReport::new(command, 0, Value::Null)
        }
    }

    pub fn exit_code(&self) -> i32 {
        match (&self.status, &self.error) {
            (Status::Ok, _) => 0,
            (Status::Failed, _) => ExitClass::Numeric.code(),
            (Status::Error, Some(e)) => e.class.code(),
            (Status::Error, None) => ExitClass::Internal.code(),
        }
    }

    pub fn metric(&mut self, key: &str, v: impl Serialize) {
        self.metrics.insert(key.to_string(), serde_json::to_value(v).expect("plain metric"));
    }

    pub fn artifact(&mut self, key: &str, path: &Path) {
        self.artifacts.insert(key.to_string(), path.display().to_string());
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("plain report")
    }
}

/// Where pairs come from and how held-out / fine-tuning splits are drawn.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DataSettings {
    /// Training split; held-out uses `seed + 1`, fine-tuning/calibration
    /// uses `seed + 2`.
    pub synthetic: SyntheticConfig,
    pub holdout_count: usize,
    pub tune_count: usize,
    /// Directory images are cut into `patch`×`patch` tiles at `stride`.
    pub patch: usize,
    pub stride: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunSettings {
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub qat: QatConfig,
    pub data: DataSettings,
    pub calibration_batch: usize,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Preset {
    #[default]
    Desk,
    Full,
}

impl RunSettings {
    pub fn preset(p: Preset) -> Self {
        let desk = RunSettings {
            model: ModelConfig::with_width(8),
            train: TrainConfig::desk(),
            qat: QatConfig {
                epochs: 10,
                ..QatConfig::default()
            },
            data: DataSettings {
                synthetic: SyntheticConfig::default(),
                holdout_count: 16,
                tune_count: 160,
                patch: 32,
                stride: 32,
            },
            calibration_batch: 8,
        };
        match p {
            Preset::Desk => desk,
            Preset::Full => RunSettings {
                model: ModelConfig::default(),
                train: TrainConfig::full(),
                qat: QatConfig {
                    epochs: 1,
                    batch_size: 64,
                    ..QatConfig::default()
                },
                data: DataSettings {
                    patch: 96,
                    stride: 96,
                    ..desk.data
                },
                calibration_batch: 64,
            },
        }
    }

    /// Preset, then config file, then overrides.
    pub fn resolve(preset: Preset, config: Option<&Path>, overrides: &Value) -> CmdResult<Self> {
        let mut v = serde_json::to_value(RunSettings::preset(preset)).expect("plain settings");
        if let Some(path) = config {
            let text = std::fs::read_to_string(path)
                .map_err(|e| CommandError::usage(format!("cannot read config {}: {e}", path.display())))?;
            let file: Value = serde_json::from_str(&text)
                .map_err(|e| CommandError::usage(format!("config {}: {e}", path.display())))?;
            merge(&mut v, &file, "")?;
        }
        merge(&mut v, overrides, "")?;
        let s: RunSettings =
            serde_json::from_value(v).map_err(|e| CommandError::usage(format!("invalid config: {e}")))?;
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> CmdResult<()> {
        self.model.validate()?;
        self.train.validate()?;
        self.data.synthetic.validate()?;
        if self.qat.batch_size == 0 {
            return Err(CommandError::usage("qat.batch_size must be at least 1"));
        }
        if self.calibration_batch == 0 {
            return Err(CommandError::usage("calibration_batch must be at least 1"));
        }
        if self.data.patch == 0 || !self.data.patch.is_multiple_of(8) || self.data.stride == 0 {
            return Err(CommandError::usage("data.patch must be a positive multiple of 8 and data.stride positive"));
        }
        Ok(())
    }

    fn split(&self, offset: u64, count: usize) -> SyntheticConfig {
        SyntheticConfig {
            seed: self.data.synthetic.seed + offset,
            count,
            ..self.data.synthetic.clone()
        }
    }

    pub fn train_split(&self) -> SyntheticConfig {
        self.data.synthetic.clone()
    }

    pub fn holdout_split(&self) -> SyntheticConfig {
        self.split(1, self.data.holdout_count)
    }

    pub fn tune_split(&self) -> SyntheticConfig {
        self.split(2, self.data.tune_count)
    }
}

/// Recursively overlays `over` onto `base`; keys absent from `base` are
/// reported with their dotted path.
fn merge(base: &mut Value, over: &Value, path: &str) -> CmdResult<()> {
    match over {
        Value::Null => Ok(()),
        Value::Object(map) => {
            let Value::Object(b) = base else {
                return Err(CommandError::usage(format!("config field {path} is not a section")));
            };
            for (k, v) in map {
                let p = if path.is_empty() { k.clone() } else { format!("{path}.{k}") };
                match b.get_mut(k) {
                    Some(slot) if slot.is_object() && v.is_object() => merge(slot, v, &p)?,
                    Some(slot) => *slot = v.clone(),
                    None => return Err(CommandError::usage(format!("unknown config field {p}"))),
                }
            }
            Ok(())
        }
        _ => Err(CommandError::usage("config overrides must be a JSON object")),
    }
}

/// Sets `a.b.c = v` in an override object.
pub fn set_override(target: &mut Value, dotted: &str, v: Value) {
    if !target.is_object() {
        *target = json!({});
    }
    let mut cur = target;
    let parts: Vec<&str> = dotted.split('.').collect();
    for (i, part) in parts.iter().enumerate() {
        let map = cur.as_object_mut().expect("object");
        if i + 1 == parts.len() {
            map.insert(part.to_string(), v);
            return;
        }
        cur = map.entry(part.to_string()).or_insert_with(|| json!({}));
    }
}

/// Where a command reads its pairs from.
#[derive(Clone, Debug, PartialEq)]
pub enum DataSource {
    Dir(PathBuf),
    Synthetic,
}

impl DataSource {
    pub fn from_args(dir: Option<PathBuf>, synthetic: bool) -> Option<Self> {
        match (dir, synthetic) {
            (Some(d), _) => Some(DataSource::Dir(d)),
            (None, true) => Some(DataSource::Synthetic),
            (None, false) => None,
        }
    }

    fn describe(&self) -> String {
        match self {
            DataSource::Dir(d) => d.display().to_string(),
            DataSource::Synthetic => "synthetic".into(),
        }
    }
}

fn load_dir_tiles(dir: &Path, s: &RunSettings) -> CmdResult<Vec<ImagePair>> {
    if !dir.is_dir() {
        return Err(CommandError::data(format!("data directory {} not found", dir.display())));
    }
    let mut out = Vec::new();
    for pair in load_pair_dir(dir)? {
        if pair.height() == s.data.patch && pair.width() == s.data.patch {
            out.push(pair);
        } else {
            out.extend(extract_patches(&pair, s.data.patch, s.data.stride, None)?);
        }
    }
    Ok(out)
}

fn load_whole_dir(dir: &Path) -> CmdResult<Vec<ImagePair>> {
    if !dir.is_dir() {
        return Err(CommandError::data(format!("data directory {} not found", dir.display())));
    }
    Ok(load_pair_dir(dir)?)
}

fn eval_json(r: &EvalResult) -> Value {
    json!({"psnr": r.psnr, "ssim": r.ssim, "count": r.count})
}

/// A loaded checkpoint of any kind, usable as an enhancer.
pub struct LoadedModel(pub Checkpoint);

impl Enhancer for LoadedModel {
    fn enhance(&self, x: &Tensor<f32>) -> crate::Result<Tensor<f32>> {
        match &self.0 {
            Checkpoint::Fp32 { net, .. } => net.enhance(x),
            Checkpoint::Qat { net, .. } => Enhancer::enhance(net, x),
            Checkpoint::Int8 { graph, .. } => graph.enhance(x),
        }
    }
}

fn load(path: &Path) -> CmdResult<Checkpoint> {
    if !path.exists() {
        return Err(CommandError::data(format!("checkpoint {} not found", path.display())));
    }
    Ok(Checkpoint::load(path)?)
}

fn save(ck: &Checkpoint, path: &Path, report: &mut RunReport) -> CmdResult<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| CommandError::data(format!("{}: {e}", dir.display())))?;
    }
    ck.save(path)?;
    report.artifact("checkpoint", path);
    Ok(())
}

fn settings_echo(s: &RunSettings) -> Value {
    serde_json::to_value(s).expect("plain settings")
}

// ---------------------------------------------------------------------------

pub struct TrainArgs {
    pub preset: Preset,
    pub config: Option<PathBuf>,
    pub overrides: Value,
    pub data: Option<DataSource>,
    pub out: PathBuf,
    /// Optional JSON-lines training log.
    pub history: Option<PathBuf>,
}

/// Trains an FP32 model and writes its checkpoint.
pub fn cmd_train(args: &TrainArgs) -> CmdResult<RunReport> {
    let t0 = Instant::now();
    let s = RunSettings::resolve(args.preset, args.config.as_deref(), &args.overrides)?;
    let source = args
        .data
        .clone()
        .ok_or_else(|| CommandError::usage("train needs a data directory or --synthetic"))?;
    let mut report = RunReport::new("train", s.train.seed, settings_echo(&s));
    report.config["data_source"] = json!(source.describe());
    let (data, holdout) = match &source {
        DataSource::Synthetic => (synth_generate(&s.train_split())?, Some(synth_generate(&s.holdout_split())?)),
        DataSource::Dir(d) => (load_dir_tiles(d, &s)?, None),
    };
    let mut net = init_network::<f32>(&s.model, s.train.seed)?;
    report.timings.insert("load_s".into(), t0.elapsed().as_secs_f64());

    let t1 = Instant::now();
    let history = train(&mut net, &data, &s.train, |_| {})?;
    report.timings.insert("train_s".into(), t1.elapsed().as_secs_f64());

    let ck = Checkpoint::Fp32 {
        net,
        meta: settings_echo(&s),
    };
    save(&ck, &args.out, &mut report)?;
    if let Some(h) = &args.history {
        std::fs::write(h, history.to_jsonl()).map_err(|e| CommandError::data(format!("{}: {e}", h.display())))?;
        report.artifact("history", h);
    }
    let Checkpoint::Fp32 { net, .. } = &ck else { unreachable!() };
    report.metric("steps", history.steps.len());
    report.metric("param_count", param_count(&s.model)?);
    if let Some(last) = history.steps.last() {
        report.metric("final_loss", last.loss);
    }
    report.metric("input_train", eval_json(&eval_model(&Identity, &data)?));
    report.metric("fp32_train", eval_json(&eval_model(net, &data)?));
    if let Some(h) = &holdout {
        report.metric("fp32_holdout", eval_json(&eval_model(net, h)?));
    }
    report.timings.insert("total_s".into(), t0.elapsed().as_secs_f64());
    Ok(report)
}

pub struct QatArgs {
    pub preset: Preset,
    pub config: Option<PathBuf>,
    pub overrides: Value,
    pub checkpoint: PathBuf,
    pub data: Option<DataSource>,
    pub out: PathBuf,
}

/// QAT fine-tuning of an FP32 checkpoint at a constant learning rate.
pub fn cmd_qat(args: &QatArgs) -> CmdResult<RunReport> {
    let t0 = Instant::now();
    let s = RunSettings::resolve(args.preset, args.config.as_deref(), &args.overrides)?;
    let source = args
        .data
        .clone()
        .ok_or_else(|| CommandError::usage("qat needs a data directory or --synthetic"))?;
    let net = match load(&args.checkpoint)? {
        Checkpoint::Fp32 { net, .. } => net,
        other => {
            return Err(CommandError::usage(format!(
                "qat expects an fp32 checkpoint, got {:?}",
                other.kind()
            )))
        }
    };
    let mut report = RunReport::new("qat", s.qat.seed, settings_echo(&s));
    report.config["data_source"] = json!(source.describe());
    let (tune, eval) = match &source {
        DataSource::Synthetic => (synth_generate(&s.tune_split())?, synth_generate(&s.holdout_split())?),
        DataSource::Dir(d) => {
            let t = load_dir_tiles(d, &s)?;
            (t.clone(), t)
        }
    };
    let fp32 = eval_model(&net, &eval)?;
    let t1 = Instant::now();
    let (q, history) = qat_finetune(net, &tune, &s.qat, |_| {})?;
    report.timings.insert("finetune_s".into(), t1.elapsed().as_secs_f64());
    report.metric("steps", history.steps.len());
    report.metric("lr", s.qat.lr);
    report.metric("fp32", eval_json(&fp32));
    report.metric("fake_quant", eval_json(&eval_model(&q, &eval)?));
    let ck = Checkpoint::Qat {
        net: q,
        meta: settings_echo(&s),
    };
    save(&ck, &args.out, &mut report)?;
    report.timings.insert("total_s".into(), t0.elapsed().as_secs_f64());
    Ok(report)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum ConvertMode {
    Ptq,
    Qat,
}

pub struct ConvertArgs {
    pub preset: Preset,
    pub config: Option<PathBuf>,
    pub overrides: Value,
    pub checkpoint: PathBuf,
    pub mode: ConvertMode,
    /// Calibration pairs (required for ptq).
    pub calib: Option<DataSource>,
    /// Pairs for the side-by-side FP32/INT8 metrics.
    pub eval: Option<DataSource>,
    pub out: PathBuf,
}

/// Produces an INT8 graph checkpoint by calibration (ptq) or from trained
/// observers (qat).
pub fn cmd_convert(args: &ConvertArgs) -> CmdResult<RunReport> {
    let t0 = Instant::now();
    let s = RunSettings::resolve(args.preset, args.config.as_deref(), &args.overrides)?;
    let ck = load(&args.checkpoint)?;
    let mut report = RunReport::new("convert", s.train.seed, settings_echo(&s));
    report.config["mode"] = json!(args.mode);
    let (float_net, graph) = match (args.mode, ck) {
        (ConvertMode::Ptq, Checkpoint::Fp32 { net, .. }) | (ConvertMode::Ptq, Checkpoint::Qat { net: crate::quant::QatNetwork { net, .. }, .. }) => {
            let calib = match &args.calib {
                None => return Err(CommandError::usage("ptq conversion needs calibration data (--calib or --synthetic)")),
                Some(DataSource::Synthetic) => synth_generate(&s.tune_split())?,
                Some(DataSource::Dir(d)) => load_dir_tiles(d, &s)?,
            };
            report.config["calibration"] = json!(args.calib.as_ref().map(|c| c.describe()));
            let q = ptq_calibrate(net.clone(), &calib, s.calibration_batch)?;
            (net, convert_int8(&q)?)
        }
        (ConvertMode::Qat, Checkpoint::Qat { net, .. }) => (net.net.clone(), convert_int8(&net)?),
        (mode, other) => {
            return Err(CommandError::usage(format!(
                "{mode:?} conversion cannot start from a {:?} checkpoint",
                other.kind()
            )))
        }
    };
    report.timings.insert("convert_s".into(), t0.elapsed().as_secs_f64());
    let eval = match &args.eval {
        Some(DataSource::Synthetic) => Some(synth_generate(&s.holdout_split())?),
        Some(DataSource::Dir(d)) => Some(load_dir_tiles(d, &s)?),
        None => None,
    };
    if let Some(eval) = &eval {
        report.metric("fp32", eval_json(&eval_model(&float_net, eval)?));
        report.metric("int8", eval_json(&eval_model(&graph, eval)?));
    }
    report.metric("int8_weight_bytes", graph.weight_bytes());
    let out = Checkpoint::Int8 {
        graph,
        meta: json!({"mode": args.mode, "settings": settings_echo(&s)}),
    };
    save(&out, &args.out, &mut report)?;
    report.timings.insert("total_s".into(), t0.elapsed().as_secs_f64());
    Ok(report)
}

/// Enhances one PNG with any checkpoint kind.
pub fn cmd_infer(checkpoint: &Path, input: &Path, output: &Path) -> CmdResult<RunReport> {
    let t0 = Instant::now();
    let model = LoadedModel(load(checkpoint)?);
    let mut report = RunReport::new(
        "infer",
        0,
        json!({"checkpoint": checkpoint.display().to_string(), "kind": model.0.kind()}),
    );
    let x = load_png(input)?;
    let s = x.shape();
    if s.h < 8 || s.w < 8 {
        return Err(CommandError::data(format!(
            "{}: image {}×{} is smaller than 8 on a side",
            input.display(),
            s.h,
            s.w
        )));
    }
    let y = model.enhance(&x)?;
    save_png(&y, output)?;
    report.artifact("input", input);
    report.artifact("output", output);
    report.metric("height", s.h);
    report.metric("width", s.w);
    report.timings.insert("total_s".into(), t0.elapsed().as_secs_f64());
    Ok(report)
}

pub struct EvalArgs {
    pub preset: Preset,
    pub config: Option<PathBuf>,
    pub overrides: Value,
    pub checkpoint: PathBuf,
    pub data: Option<DataSource>,
}

/// Mean PSNR/SSIM of a checkpoint over pairs, next to the unprocessed
/// input. Directory images are scored whole (padded internally).
pub fn cmd_eval(args: &EvalArgs) -> CmdResult<RunReport> {
    let t0 = Instant::now();
    let s = RunSettings::resolve(args.preset, args.config.as_deref(), &args.overrides)?;
    let source = args
        .data
        .clone()
        .ok_or_else(|| CommandError::usage("eval needs a data directory or --synthetic"))?;
    let model = LoadedModel(load(&args.checkpoint)?);
    let data = match &source {
        DataSource::Synthetic => synth_generate(&s.holdout_split())?,
        DataSource::Dir(d) => load_whole_dir(d)?,
    };
    let mut report = RunReport::new(
        "eval",
        s.data.synthetic.seed,
        json!({"checkpoint": args.checkpoint.display().to_string(), "kind": model.0.kind(), "data_source": source.describe()}),
    );
    report.metric("model", eval_json(&eval_model(&model, &data)?));
    report.metric("input", eval_json(&eval_model(&Identity, &data)?));
    report.timings.insert("total_s".into(), t0.elapsed().as_secs_f64());
    Ok(report)
}

/// Finite-difference check of the tape; status `failed` above tolerance.
pub fn cmd_gradcheck(cfg: &GradcheckConfig) -> CmdResult<RunReport> {
    let r = gradcheck(cfg)?;
    let mut report = RunReport::new("gradcheck", cfg.seed, serde_json::to_value(cfg).expect("plain config"));
    report.metric("max_rel_error", r.max_rel_error);
    report.metric("worst_group", &r.worst_group);
    report.metric("max_rel_error_including_kinks", r.max_rel_error_all);
    report.metric("sampled", r.sampled);
    report.metric("kink_crossings", r.kink_crossings);
    report.metric("groups", &r.groups);
    report.metric("passed", r.passed);
    report.timings.insert("total_s".into(), r.seconds);
    if !r.passed {
        report.status = Status::Failed;
    }
    Ok(report)
}

pub const REPORT_WIDTHS: [usize; 4] = [16, 24, 32, 64];

/// Model-size summary: parameter counts, their width ratios and payload
/// sizes for FP32 and INT8 storage.
pub fn cmd_report(extra_widths: &[usize]) -> CmdResult<RunReport> {
    let mut widths: Vec<usize> = REPORT_WIDTHS.to_vec();
    widths.extend_from_slice(extra_widths);
    widths.sort_unstable();
    widths.dedup();
    let mut report = RunReport::new("report", 0, json!({"widths": widths}));
    let mut counts = BTreeMap::new();
    for &c in &widths {
        let cfg = ModelConfig::with_width(c);
        let n = param_count(&cfg)?;
        counts.insert(
            c.to_string(),
            json!({"params": n, "fp32_bytes": 4 * n, "int8_weight_bytes_approx": n}),
        );
    }
    let count = |c: usize| param_count(&ModelConfig::with_width(c)).map(|n| n as f64);
    report.metric("param_counts", counts);
    report.metric(
        "ratios",
        json!({"32/16": count(32)? / count(16)?, "64/32": count(64)? / count(32)?}),
    );
    Ok(report)
}

/// Parses a primitive name for the gradcheck fault hook.
pub fn parse_primitive(name: &str) -> CmdResult<Primitive> {
    serde_json::from_value(json!(name)).map_err(|_| CommandError::usage(format!("unknown primitive {name}")))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn precedence_defaults_file_flags() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = dir.path().join("c.json");
        std::fs::write(&cfg, r#"{"train": {"epochs": 7, "base_lr": 0.01}, "model": {"base_width": 4}}"#).unwrap();
        let mut over = json!({});
        set_override(&mut over, "train.epochs", json!(3));
        let s = RunSettings::resolve(Preset::Desk, Some(&cfg), &over).unwrap();
        assert_eq!(s.train.epochs, 3);
        assert_eq!(s.train.base_lr, 0.01);
        assert_eq!(s.model.base_width, 4);
        assert_eq!(s.train.batch_size, 8);
    }

    #[test]
    fn unknown_and_invalid_fields_are_named() {
        let e = RunSettings::resolve(Preset::Desk, None, &json!({"train": {"epohcs": 1}})).unwrap_err();
        assert_eq!(e.class, ExitClass::Usage);
        assert!(e.message.contains("train.epohcs"), "{}", e.message);
        let e = RunSettings::resolve(Preset::Desk, None, &json!({"train": {"batch_size": 0}})).unwrap_err();
        assert!(e.message.contains("batch_size"), "{}", e.message);
    }

    #[test]
    fn report_lists_widths_and_ratios() {
        let r = cmd_report(&[]).unwrap();
        for c in ["16", "24", "32", "64"] {
            assert!(r.metrics["param_counts"][c]["params"].as_u64().unwrap() > 0);
        }
        let ratio = r.metrics["ratios"]["32/16"].as_f64().unwrap();
        assert!((3.5..=4.5).contains(&ratio));
        let parsed: RunReport = serde_json::from_str(&r.to_json()).unwrap();
        assert_eq!(parsed, r);
    }

    #[test]
    fn exit_codes_by_class() {
        assert_eq!(RunReport::new("x", 0, Value::Null).exit_code(), 0);
        let e = CommandError::from(Error::NonFinite { step: 3 });
        assert_eq!(RunReport::from_error("x", &e).exit_code(), 4);
        assert_eq!(RunReport::from_error("x", &CommandError::usage("u")).exit_code(), 2);
        assert_eq!(RunReport::from_error("x", &CommandError::data("d")).exit_code(), 3);
    }

    #[test]
    fn fault_names_parse() {
        assert_eq!(parse_primitive("tanh").unwrap(), Primitive::Tanh);
        assert_eq!(parse_primitive("instance_norm").unwrap(), Primitive::InstanceNorm);
        assert!(parse_primitive("nope").is_err());
    }
}
