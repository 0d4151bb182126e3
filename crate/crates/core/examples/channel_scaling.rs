//! Parameter count as a function of the base width c: it grows as c², so
//! doubling the width roughly quadruples the model.
//!
//!     cargo run --example channel_scaling

use gated_isp::{init_network, param_count, ModelConfig};

pub fn run() -> gated_isp::Result<()> {
    println!("{:>4} {:>10} {:>12} {:>12}", "c", "params", "fp32 bytes", "int8 bytes");
    for c in [8, 16, 24, 32, 64] {
        let cfg = ModelConfig::with_width(c);
        let n = param_count(&cfg)?;
        println!("{c:>4} {n:>10} {:>12} {:>12}", 4 * n, n);
    }
    let n = |c| param_count(&ModelConfig::with_width(c)).map(|v| v as f64);
    println!("ratio 32/16 = {:.3}", n(32)? / n(16)?);
    println!("ratio 64/32 = {:.3}", n(64)? / n(32)?);
    // the closed form agrees with the instantiated parameter store
    let net = init_network::<f32>(&ModelConfig::with_width(16), 0)?;
    assert_eq!(net.params.numel(), param_count(net.config())?);
    Ok(())
}

#[allow(dead_code)]
fn main() -> gated_isp::Result<()> {
    run()
}
