//! `gated-isp`: train, fine-tune, convert, run and check the enhancement
//! network. Every subcommand prints a JSON run report on stdout.
//!
//! Exit codes: 0 success, 2 usage, 3 data, 4 numeric failure, 1 other.

use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde_json::{json, Value};

use gated_isp::commands::{
    cmd_convert, cmd_eval, cmd_gradcheck, cmd_infer, cmd_qat, cmd_report, cmd_train, parse_primitive, set_override,
    CmdResult, CommandError, ConvertArgs, ConvertMode, DataSource, EvalArgs, Preset, QatArgs, RunReport, TrainArgs,
};
use gated_isp::gradcheck::GradcheckConfig;

#[derive(Parser)]
#[command(name = "gated-isp", version, about = "Gated multi-scale image enhancement with QAT and INT8 inference")]
struct Cli {
    /// Also write the JSON report to this file.
    #[arg(long, global = true)]
    report: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct SettingsArgs {
    /// Built-in defaults to start from.
    #[arg(long, value_enum, default_value_t = Preset::Desk)]
    preset: Preset,
    /// JSON config file layered over the preset; flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Subcommand)]
enum Command {
    /// Train an FP32 model.
    Train {
        #[command(flatten)]
        settings: SettingsArgs,
        /// Directory with low/ and high/ PNG pairs.
        #[arg(long)]
        data: Option<PathBuf>,
        /// Use the seeded synthetic generator instead of a directory.
        #[arg(long)]
        synthetic: bool,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        epochs: Option<usize>,
        #[arg(long)]
        width: Option<usize>,
        #[arg(long)]
        lr: Option<f64>,
        #[arg(long)]
        batch_size: Option<usize>,
        /// JSON-lines log of every optimizer step.
        #[arg(long)]
        history: Option<PathBuf>,
    },
    /// Quantization-aware fine-tuning of an FP32 checkpoint.
    Qat {
        #[command(flatten)]
        settings: SettingsArgs,
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        data: Option<PathBuf>,
        #[arg(long)]
        synthetic: bool,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        epochs: Option<usize>,
        #[arg(long)]
        lr: Option<f64>,
    },
    /// Convert to an integer-only INT8 graph.
    Convert {
        #[command(flatten)]
        settings: SettingsArgs,
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long, value_enum)]
        mode: ConvertMode,
        /// Calibration pairs (ptq).
        #[arg(long)]
        calib: Option<PathBuf>,
        /// Pairs for side-by-side FP32/INT8 metrics.
        #[arg(long)]
        eval: Option<PathBuf>,
        /// Synthetic calibration and held-out evaluation splits.
        #[arg(long)]
        synthetic: bool,
        #[arg(long)]
        out: PathBuf,
    },
    /// Enhance one PNG with any checkpoint.
    Infer {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        output: PathBuf,
    },
    /// Mean PSNR/SSIM of a checkpoint over pairs.
    Eval {
        #[command(flatten)]
        settings: SettingsArgs,
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        data: Option<PathBuf>,
        #[arg(long)]
        synthetic: bool,
    },
    /// Compare tape gradients with central differences.
    Gradcheck {
        #[arg(long, default_value_t = 4)]
        width: usize,
        #[arg(long, default_value_t = 16)]
        size: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 1e-3)]
        step: f64,
        #[arg(long, default_value_t = 16)]
        samples: usize,
        /// Corrupt one adjoint (e.g. tanh) to see the check fail.
        #[arg(long)]
        fault: Option<String>,
    },
    /// Parameter counts and storage sizes across widths.
    Report {
        /// Extra widths besides 16, 24, 32, 64.
        #[arg(long)]
        width: Vec<usize>,
    },
}

fn overrides(settings: &SettingsArgs, pairs: &[(&str, Option<Value>)]) -> Value {
    let mut v = json!({});
    if let Some(seed) = settings.seed {
        set_override(&mut v, "train.seed", json!(seed));
        set_override(&mut v, "qat.seed", json!(seed));
    }
    for (key, val) in pairs {
        if let Some(val) = val {
            set_override(&mut v, key, val.clone());
        }
    }
    v
}

fn run(command: Command) -> (&'static str, CmdResult<RunReport>) {
    match command {
        Command::Train {
            settings,
            data,
            synthetic,
            out,
            epochs,
            width,
            lr,
            batch_size,
            history,
        } => {
            let over = overrides(
                &settings,
                &[
                    ("train.epochs", epochs.map(|v| json!(v))),
                    ("model.base_width", width.map(|v| json!(v))),
                    ("train.base_lr", lr.map(|v| json!(v))),
                    ("train.batch_size", batch_size.map(|v| json!(v))),
                ],
            );
            let args = TrainArgs {
                preset: settings.preset,
                config: settings.config,
                overrides: over,
                data: DataSource::from_args(data, synthetic),
                out,
                history,
            };
            ("train", cmd_train(&args))
        }
        Command::Qat {
            settings,
            checkpoint,
            data,
            synthetic,
            out,
            epochs,
            lr,
        } => {
            let over = overrides(
                &settings,
                &[("qat.epochs", epochs.map(|v| json!(v))), ("qat.lr", lr.map(|v| json!(v)))],
            );
            let args = QatArgs {
                preset: settings.preset,
                config: settings.config,
                overrides: over,
                checkpoint,
                data: DataSource::from_args(data, synthetic),
                out,
            };
            ("qat", cmd_qat(&args))
        }
        Command::Convert {
            settings,
            checkpoint,
            mode,
            calib,
            eval,
            synthetic,
            out,
        } => {
            let args = ConvertArgs {
                preset: settings.preset,
                config: settings.config.clone(),
                overrides: overrides(&settings, &[]),
                checkpoint,
                mode,
                calib: DataSource::from_args(calib, synthetic),
                eval: DataSource::from_args(eval, synthetic),
                out,
            };
            ("convert", cmd_convert(&args))
        }
        Command::Infer {
            checkpoint,
            input,
            output,
        } => ("infer", cmd_infer(&checkpoint, &input, &output)),
        Command::Eval {
            settings,
            checkpoint,
            data,
            synthetic,
        } => {
            let args = EvalArgs {
                preset: settings.preset,
                config: settings.config.clone(),
                overrides: overrides(&settings, &[]),
                checkpoint,
                data: DataSource::from_args(data, synthetic),
            };
            ("eval", cmd_eval(&args))
        }
        Command::Gradcheck {
            width,
            size,
            seed,
            step,
            samples,
            fault,
        } => {
            let result = (|| {
                let cfg = GradcheckConfig {
                    width,
                    size,
                    seed,
                    step,
                    samples_per_group: samples,
                    fault: fault.as_deref().map(parse_primitive).transpose()?,
                    ..GradcheckConfig::default()
                };
                cmd_gradcheck(&cfg)
            })();
            ("gradcheck", result)
        }
        Command::Report { width } => ("report", cmd_report(&width)),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (name, result) = run(cli.command);
    let report = match result {
        Ok(r) => r,
        Err(e) => {
            eprintln!("gated-isp {name}: {e}");
            RunReport::from_error(name, &e)
        }
    };
    let text = report.to_json();
    // a closed stdout (e.g. piped into `head`) is not an error of the run
    let _ = writeln!(std::io::stdout(), "{text}");
    if let Some(path) = &cli.report {
        if let Err(e) = std::fs::write(path, &text) {
            let err = CommandError::data(format!("cannot write report {}: {e}", path.display()));
            eprintln!("gated-isp {name}: {err}");
            return ExitCode::from(err.class.code() as u8);
        }
    }
    ExitCode::from(report.exit_code() as u8)
}
