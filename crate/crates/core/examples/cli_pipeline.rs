//! The full command pipeline through the library API: train → convert
//! (ptq) → infer → eval, printing each JSON report's headline numbers.
//! The `gated-isp` binary runs the same functions.
//!
//!     cargo run --release --example cli_pipeline

use gated_isp::commands::{
    cmd_convert, cmd_eval, cmd_infer, cmd_train, set_override, ConvertArgs, ConvertMode, DataSource, EvalArgs,
    Preset, TrainArgs,
};
use gated_isp::data::{save_png, synth_generate, SyntheticConfig};
use serde_json::json;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let dir = std::env::temp_dir().join(format!("gated-isp-pipeline-{}", std::process::id()));
    std::fs::create_dir_all(&dir)?;
    let fp32 = dir.join("fp32.ckpt");
    let int8 = dir.join("int8.ckpt");

    let mut over = json!({});
    set_override(&mut over, "train.epochs", json!(20));
    let r = cmd_train(&TrainArgs {
        preset: Preset::Desk,
        config: None,
        overrides: over,
        data: Some(DataSource::Synthetic),
        out: fp32.clone(),
        history: None,
    })?;
    println!("train: {} steps, train PSNR {:.2} dB", r.metrics["steps"], r.metrics["fp32_train"]["psnr"]);

    let r = cmd_convert(&ConvertArgs {
        preset: Preset::Desk,
        config: None,
        overrides: json!({}),
        checkpoint: fp32.clone(),
        mode: ConvertMode::Ptq,
        calib: Some(DataSource::Synthetic),
        eval: Some(DataSource::Synthetic),
        out: int8.clone(),
    })?;
    println!(
        "convert: held-out fp32 {:.2} dB, int8 {:.2} dB",
        r.metrics["fp32"]["psnr"], r.metrics["int8"]["psnr"]
    );

    let input = dir.join("in.png");
    let output = dir.join("out.png");
    let pair = &synth_generate(&SyntheticConfig {
        count: 1,
        size: 48,
        seed: 9,
        ..SyntheticConfig::default()
    })?[0];
    save_png(&pair.low, &input)?;
    let r = cmd_infer(&int8, &input, &output)?;
    println!("infer: wrote {}", r.artifacts["output"]);

    let r = cmd_eval(&EvalArgs {
        preset: Preset::Desk,
        config: None,
        overrides: json!({}),
        checkpoint: int8,
        data: Some(DataSource::Synthetic),
    })?;
    println!(
        "eval: model {:.2} dB vs input {:.2} dB",
        r.metrics["model"]["psnr"], r.metrics["input"]["psnr"]
    );
    std::fs::remove_dir_all(&dir)?;
    Ok(())
}
