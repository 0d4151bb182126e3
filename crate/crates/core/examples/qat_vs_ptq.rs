//! Trains the desk model, then compares the two INT8 pipelines on held-out
//! synthetic pairs. Both start from the same FP32 model and see the same
//! fine-tuning split:
//! - post-training quantization: calibrate observers, convert;
//! - quantization-aware fine-tuning: 200 steps at lr 1e-5, convert.
//!
//!     cargo run --release --example qat_vs_ptq

use gated_isp::commands::{Preset, RunSettings};
use gated_isp::data::synth_generate;
use gated_isp::train::{compare_qat_ptq, train};
use gated_isp::init_network;

fn main() -> gated_isp::Result<()> {
    let s = RunSettings::preset(Preset::Desk);
    let train_set = synth_generate(&s.train_split())?;
    let tune = synth_generate(&s.tune_split())?;
    let held_out = synth_generate(&s.holdout_split())?;

    let mut net = init_network::<f32>(&s.model, s.train.seed)?;
    train(&mut net, &train_set, &s.train, |_| {})?;
    let r = compare_qat_ptq(&net, &tune, &held_out, &s.qat, s.calibration_batch)?;

    println!("held-out ({} pairs)   PSNR (dB)  SSIM", r.fp32.count);
    println!("fp32                 {:8.3}  {:.4}", r.fp32.psnr, r.fp32.ssim);
    println!("int8 ptq             {:8.3}  {:.4}", r.ptq_int8.psnr, r.ptq_int8.ssim);
    println!("int8 qat ({} steps) {:8.3}  {:.4}", r.qat_steps, r.qat_int8.psnr, r.qat_int8.ssim);
    println!(
        "qat - ptq            {:+8.3}  {:+.4}",
        r.qat_int8.psnr - r.ptq_int8.psnr,
        r.qat_int8.ssim - r.ptq_int8.ssim
    );
    Ok(())
}
