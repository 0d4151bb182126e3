//! Converts a calibrated network into an integer-only graph and compares
//! its quantized output with the fake-quant simulation step by step.
//!
//!     cargo run --release --example int8_inference

use gated_isp::quant::{attach_fakequant, convert_int8, QatMode, QatPlan};
use gated_isp::{init_network, ModelConfig, Shape, Tensor};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn run() -> gated_isp::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let s = Shape::new(2, 3, 32, 32);
    let x = Tensor::from_vec(s, (0..s.numel()).map(|_| rng.random::<f32>()).collect())?;

    let net = init_network::<f32>(&ModelConfig::with_width(4), 11)?;
    let plan = QatPlan::full(&net.arch);
    let mut q = attach_fakequant(net, plan)?;
    q.calibrate(&x)?;
    q.set_mode(QatMode::Frozen);

    let graph = convert_int8(&q)?;
    println!("graph: {} integer convs, {} float norm islands", graph.convs.len(), graph.norms.len());
    let out = graph.run_quantized(&x)?;
    let sim = q.cast::<f64>().forward(&x.cast::<f64>())?;
    let qp = graph.output_qparams();
    let mut hist = [0usize; 3];
    for (i, &v) in sim.data().iter().enumerate() {
        let d = (qp.quantize(v) - out.data.get(i)).unsigned_abs() as usize;
        hist[d.min(2)] += 1;
    }
    println!("output steps off vs simulation: 0 -> {}, 1 -> {}, more -> {}", hist[0], hist[1], hist[2]);
    assert_eq!(hist[2], 0);

    let float_bytes: usize = q
        .net
        .params
        .iter()
        .filter(|p| p.name.ends_with(".weight") || p.name.ends_with(".bias"))
        .map(|p| 4 * p.value.numel())
        .sum();
    println!(
        "conv payload: fp32 {float_bytes} bytes, int8 {} bytes ({:.2}×)",
        graph.weight_bytes(),
        graph.weight_bytes() as f64 / float_bytes as f64
    );
    Ok(())
}

#[allow(dead_code)]
fn main() -> gated_isp::Result<()> {
    run()
}
