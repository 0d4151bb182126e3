//! Image-quality metrics and the training objective on small hand-made
//! tensors.
//!
//!     cargo run --example metrics

use gated_isp::losses::{psnr_loss_from_psnr, total_loss_value, LossWeights, PsnrConfig};
use gated_isp::metrics::{psnr, ssim};
use gated_isp::{Shape, Tensor};

pub fn run() -> gated_isp::Result<()> {
    let cfg = PsnrConfig::default();
    let s = Shape::new(1, 3, 16, 16);
    let target = Tensor::from_vec(s, (0..s.numel()).map(|i| (i % 97) as f32 / 96.0).collect())?;

    // a constant offset of 0.1 is an RMSE of 0.1: 20 dB
    let shifted = target.map(|v| v + 0.1);
    let p = psnr(&shifted, &target, &cfg)?;
    println!("PSNR at RMSE 0.1 = {p:.4} dB, PSNR loss = {:.4}", psnr_loss_from_psnr(p));
    println!("PSNR symmetric: {}", psnr(&target, &shifted, &cfg)? == p);

    println!("SSIM(x, x) = {:.6}", ssim(&target, &target, 1.0)?);
    let noisy = target.map(|v| (v * 0.8 + 0.1).clamp(0.0, 1.0));
    println!("SSIM(x, 0.8x + 0.1) = {:.4}", ssim(&noisy, &target, 1.0)?);

    let w = LossWeights::default();
    let total = total_loss_value(&noisy, &target, &w, &cfg)?;
    println!("total loss with weights ({}, {}, {}) = {total:.4}", w.alpha, w.beta, w.gamma);
    Ok(())
}

#[allow(dead_code)]
fn main() -> gated_isp::Result<()> {
    run()
}
