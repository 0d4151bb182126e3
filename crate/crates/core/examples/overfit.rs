//! Overfits the desk preset (c=8, 16 synthetic 32×32 pairs, 500 steps) and
//! prints training PSNR against the unprocessed input.
//!
//!     cargo run --release --example overfit

use std::time::Instant;

use gated_isp::data::{synth_generate, SyntheticConfig};
use gated_isp::train::{eval_model, train, Identity, TrainConfig};
use gated_isp::{init_network, ModelConfig};

fn main() -> gated_isp::Result<()> {
    let data = synth_generate(&SyntheticConfig::default())?;
    let cfg = TrainConfig::desk();
    let mut net = init_network::<f32>(&ModelConfig::with_width(8), cfg.seed)?;

    let before = eval_model(&Identity, &data)?;
    println!("input vs target: {:.2} dB, SSIM {:.4}", before.psnr, before.ssim);

    let t0 = Instant::now();
    train(&mut net, &data, &cfg, |r| {
        if r.step % 50 == 0 {
            println!("step {:4}  lr {:.2e}  loss {:.4}  batch PSNR {:.2} dB", r.step, r.lr, r.loss, r.psnr);
        }
    })?;
    let after = eval_model(&net, &data)?;
    println!(
        "trained: {:.2} dB, SSIM {:.4} in {:.1} s",
        after.psnr,
        after.ssim,
        t0.elapsed().as_secs_f64()
    );
    Ok(())
}
