//! Fake quantization: round-trip error bounded by half a step, idempotence,
//! and a straight-through gradient that is zero only where values clamp.
//!
//!     cargo run --example fake_quant

use gated_isp::quant::{fake_quant, fake_quant_forward, qparams_from_minmax, Observer};
use gated_isp::tape::Tape;
use gated_isp::{Shape, Tensor};

pub fn run() -> gated_isp::Result<()> {
    let s = Shape::new(1, 1, 1, 9);
    let x = Tensor::from_vec(s, vec![-1.5, -1.0, -0.3, 0.0, 0.01, 0.42, 0.99, 1.0, 2.0])?;

    // an observer learns a range; parameters follow from it
    let mut obs = Observer::new(0.99);
    obs.update_minmax(-1.0, 1.0);
    let qp = obs.qparams().expect("initialized");
    println!("observer range [-1, 1] -> scale {:.6}, zero point {}", qp.scale, qp.zero_point);
    assert_eq!(qp, qparams_from_minmax(-1.0, 1.0, false, false));

    let (y, mask) = fake_quant_forward(&x, &[qp])?;
    let (yy, _) = fake_quant_forward(&y, &[qp])?;
    for ((a, b), m) in x.data().iter().zip(y.data()).zip(&mask) {
        println!("  {a:+.3} -> {b:+.6}  ste pass-through = {m}");
    }
    println!("idempotent: {}", y == yy);

    let mut tape = Tape::new();
    let xv = tape.param(x.clone());
    let fq = fake_quant(&mut tape, xv, &[qp])?;
    let loss = tape.sum(fq)?;
    tape.backward(loss)?;
    println!("STE gradient: {:?}", tape.grad(xv).expect("tracked"));
    Ok(())
}

#[allow(dead_code)]
fn main() -> gated_isp::Result<()> {
    run()
}
