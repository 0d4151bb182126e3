//! The learning-rate schedule: linear warmup, then cosine decay to the
//! floor, for both presets.
//!
//!     cargo run --example lr_schedule

use gated_isp::train::{lr_at, TrainConfig};

pub fn run() -> gated_isp::Result<()> {
    for (name, cfg, n) in [("full", TrainConfig::full(), 160_000), ("desk", TrainConfig::desk(), 16)] {
        let spe = cfg.steps_per_epoch(n);
        let total = cfg.epochs * spe;
        let warm = cfg.warmup_epochs * spe;
        println!("{name}: {spe} steps/epoch, {total} steps, warmup {warm}");
        for step in [0, warm / 2, warm, total / 2, total - 1] {
            println!("  step {step:>6}: lr {:.3e}", lr_at(step, spe, &cfg));
        }
    }
    Ok(())
}

#[allow(dead_code)]
fn main() -> gated_isp::Result<()> {
    run()
}
