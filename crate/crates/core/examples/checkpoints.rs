//! Saves FP32 and INT8 checkpoints, reloads them and checks the bytes
//! match; writes and reads back a PNG.
//!
//!     cargo run --example checkpoints

use gated_isp::checkpoint::Checkpoint;
use gated_isp::data::{load_png, save_png, synth_generate, SyntheticConfig};
use gated_isp::train::ptq_calibrate;
use gated_isp::quant::convert_int8;
use gated_isp::{init_network, ModelConfig};

pub fn run() -> gated_isp::Result<()> {
    let dir = std::env::temp_dir().join(format!("gated-isp-checkpoints-{}", std::process::id()));
    std::fs::create_dir_all(&dir)?;
    let pairs = synth_generate(&SyntheticConfig {
        count: 4,
        size: 16,
        ..SyntheticConfig::default()
    })?;

    let net = init_network::<f32>(&ModelConfig::with_width(4), 5)?;
    let graph = convert_int8(&ptq_calibrate(net.clone(), &pairs, 4)?)?;
    let meta = serde_json::json!({"example": "checkpoints"});
    for (name, ck) in [
        ("fp32", Checkpoint::Fp32 { net, meta: meta.clone() }),
        ("int8", Checkpoint::Int8 { graph, meta }),
    ] {
        let a = dir.join(format!("{name}.ckpt"));
        let b = dir.join(format!("{name}-again.ckpt"));
        ck.save(&a)?;
        let loaded = Checkpoint::load(&a)?;
        loaded.save(&b)?;
        let same = std::fs::read(&a)? == std::fs::read(&b)?;
        println!("{name}: {} bytes, save→load→save identical = {same}", std::fs::metadata(&a)?.len());
        assert!(same && loaded == ck);
    }

    let png = dir.join("pair0.png");
    save_png(&pairs[0].high, &png)?;
    let back = load_png(&png)?;
    let worst = back
        .data()
        .iter()
        .zip(pairs[0].high.data())
        .map(|(a, b)| (a - b).abs())
        .fold(0.0f32, f32::max);
    println!("PNG round trip: max deviation {:.5} (one step = {:.5})", worst, 1.0 / 255.0);
    std::fs::remove_dir_all(&dir)?;
    Ok(())
}

#[allow(dead_code)]
fn main() -> gated_isp::Result<()> {
    run()
}
